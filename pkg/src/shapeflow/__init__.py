"""Numerical experiments on torsional rigidity and the first Dirichlet eigenvalue of planar domains."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConvexityLost,
    DegenerateFlowTime,
    HypothesisViolated,
    InvalidPolygon,
    NonConvexInput,
    NumericalError,
    OriginEscaped,
    ShapeflowError,
    SolveFailure,
    UnknownTag,
    UnsupportedKind,
    ValidationError,
)
from .geometry import AffineFlow, Polygon, TriangleConfig, apply_flow, critical_time  # noqa: E402
from .mesh import Mesh, refine, triangulate  # noqa: E402
from .fem import boundary_flux_sq, solve_principal_eigen, solve_torsion  # noqa: E402
from .functionals import FunctionalReport, report, solve_domain  # noqa: E402
from .flows import css_verify, css_xi, monotonicity_scan  # noqa: E402
from .curvature import FlowConfig, SupportBody, run_flow  # noqa: E402
