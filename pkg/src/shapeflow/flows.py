"""Shape derivatives along affine flows, monotonicity scans and the rectangle CSS pipeline."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from functools import partial
from typing import Sequence

import numpy as np

from .errors import ShapeflowError, UnsupportedKind
from .fem import BoundaryTrace
from .functionals import (
    CONSISTENCY_TOL,
    DEFAULT_DEGREE,
    DEFAULT_H,
    FunctionalReport,
    report_from_solution,
    solve_domain,
    torsional_rigidity,
)
from .geometry import AffineFlow, Polygon, apply_flow, median_cot_theta, rectangle
from .mesh import triangulate


def _eta_dot_nu(tr: BoundaryTrace, f: AffineFlow, t: float) -> np.ndarray:
    return np.einsum("qk,qk->q", f.velocity(t, tr.points), tr.normals)


def shape_derivative_T(tr: BoundaryTrace, f: AffineFlow, t: float) -> float:
    """``d/dt T(F_t(Ω)) = ∫ |∇u|² η·ν dσ`` from a torsion trace on ``F_t(Ω)``."""
    return float(np.sum(tr.weights * tr.grad_sq * _eta_dot_nu(tr, f, t)))


def shape_derivative_lambda1(tr: BoundaryTrace, f: AffineFlow, t: float) -> float:
    """``d/dt λ₁(F_t(Ω)) = -∫ |∇v|² η·ν dσ`` from a normalized eigenfunction trace."""
    return -float(np.sum(tr.weights * tr.grad_sq * _eta_dot_nu(tr, f, t)))


def area_derivative(p: Polygon, f: AffineFlow, t: float) -> float:
    """``∫ η·ν ds`` over the boundary of the current domain ``p``.

    η is affine, so the trapezoid rule on each edge is exact.
    """
    a, b = p.edges
    eta = 0.5 * (f.velocity(t, a) + f.velocity(t, b))
    return float(np.sum(p.side_lengths * np.einsum("ek,ek->e", eta, p.normals)))


def normalized_derivatives(
    report: FunctionalReport, dT: float, dL: float, dA: float, form: str = "boundary"
) -> tuple[float, float]:
    """Quotient rule for ``T/A²`` and ``λ₁ A``.

    ``form="boundary"`` uses the Pohozaev values of T and λ₁ so that every
    term is a boundary integral of the same trace; ``"domain"`` uses the
    volume integrals.
    """
    if form == "boundary":
        T, L = report.T_pohozaev, report.lambda1_pohozaev
    elif form == "domain":
        T, L = report.T_domain, report.lambda1
    else:
        raise ValueError(f"unknown form {form!r}")
    A = report.area
    return (dT * A - 2.0 * T * dA) / A ** 3, dL * A + L * dA


def _vertex(p: Polygon, tag_start: str) -> np.ndarray:
    """Start vertex of the side whose tag begins with ``tag_start``."""
    for v, tag in zip(p.vertices, p.tags):
        if str(tag).startswith(tag_start):
            return v
    raise UnsupportedKind(f"polygon has no side starting at {tag_start!r}")


def _angle_at(at, p, q) -> float:
    u, v = np.asarray(p) - at, np.asarray(q) - at
    return math.atan2(abs(u[0] * v[1] - u[1] * v[0]), float(u @ v))


PROOF_FORM_KINDS = ("height_stretch", "height_compress", "leg_stretch", "rectangle_side", "rhombus_diagonal")


def proof_form_derivative(
    f: AffineFlow, tr: BoundaryTrace, t: float, p: Polygon, quantity: str = "T"
) -> float:
    """Closed-form derivative of ``T/A²`` (or ``λ₁ A``) used in the monotonicity proofs.

    ``p`` is the current domain ``F_t(Ω)`` in its canonical placement, with
    side tags ``AB, BC, ...`` naming the vertices.  The trace must come from the
    matching torsion (or eigen) field on ``p``.
    """
    if f.kind not in PROOF_FORM_KINDS:
        raise UnsupportedKind(f"no closed-form derivative for {f.kind}")
    if quantity not in ("T", "lambda1"):
        raise ValueError("quantity must be 'T' or 'lambda1'")
    m, _ = f.map_matrix(t)
    A0 = p.area / float(np.linalg.det(m))
    w = tr.weights * tr.grad_sq
    x, y = tr.points[:, 0], tr.points[:, 1]
    nx, ny = tr.normals[:, 0], tr.normals[:, 1]
    k = f.kind

    if k == "height_stretch":
        if quantity == "T":
            return float(np.sum(w * (-x * nx + y * ny))) / (2.0 * (1 + t) ** 3 * A0 ** 2)
        return 0.5 * A0 * float(np.sum(w * (x * nx - y * ny)))

    if k == "height_compress":
        if quantity == "T":
            return float(np.sum(w * (x * nx - y * ny))) / (2.0 * (1 - t) ** 3 * A0 ** 2)
        return 0.5 * A0 * float(np.sum(w * (-x * nx + y * ny)))

    if k == "rhombus_diagonal":
        A, C, D = _vertex(p, "A"), _vertex(p, "C"), _vertex(p, "D")
        theta = _angle_at(C, A, D)
        s = tr.mask("CD")
        integrand = x[s] * math.tan(theta) - y[s]
        I = float(np.sum(w[s] * integrand))
        if quantity == "T":
            return -2.0 * math.cos(theta) * I / (A0 ** 2 * (1 + t) ** 3)
        return 2.0 * A0 * math.cos(theta) * I

    if k == "leg_stretch":
        A, B, C = _vertex(p, "A"), _vertex(p, "B"), _vertex(p, "C")
        beta = _angle_at(B, A, C)
        cot_theta = median_cot_theta(f.alpha, beta)
        s = tr.mask("BC")
        # sin β cot θ (x tan θ − y), written without tan θ
        I = math.sin(beta) * float(np.sum(w[s] * (x[s] - y[s] * cot_theta)))
        if quantity == "T":
            return 0.5 * I / ((1 + t) ** 3 * A0 ** 2)
        return -0.5 * A0 * I

    # rectangle_side: A at the origin, BC the stretched (right) side, CD the top
    s_bc, s_cd = tr.mask("BC"), tr.mask("CD")
    avg_bc = float(np.sum(w[s_bc]) / np.sum(tr.weights[s_bc]))
    avg_cd = float(np.sum(w[s_cd]) / np.sum(tr.weights[s_cd]))
    width, height = p.side_length("AB"), p.side_length("BC")
    if quantity == "T":
        return (avg_bc - avg_cd) / (2.0 * (1 + t) ** 2 * A0)
    return 0.5 * A0 * width * height * (avg_cd - avg_bc)


FD_QUANTITIES = ("T", "lambda1", "T_norm", "lambda1_norm", "area")


def default_fd_step(t: float) -> float:
    return 1e-3 * (1.0 + abs(t))


def _quantity(q: Polygon, quantity: str, h: float, degree: int, levels: int) -> float:
    if quantity == "area":
        return q.area
    sol = solve_domain(q, h, degree, levels=levels, eigen=quantity.startswith("lambda1"))
    if quantity == "T":
        return torsional_rigidity(sol.torsion)
    if quantity == "T_norm":
        return torsional_rigidity(sol.torsion) / q.area ** 2
    if quantity == "lambda1":
        return sol.eigen.lambda1
    return sol.eigen.lambda1 * q.area


def fd_derivative(
    quantity: str,
    p: Polygon,
    f: AffineFlow,
    t: float,
    h_fd: float | None = None,
    h: float = DEFAULT_H,
    degree: int = DEFAULT_DEGREE,
    levels: int | None = None,
) -> float:
    """Central difference of a fully re-meshed, re-solved quantity of ``F_t(p)``.

    The refinement depth is frozen at its value for ``F_t(p)`` so both
    evaluations use the same mesh topology.
    """
    if quantity not in FD_QUANTITIES:
        raise ValueError(f"quantity must be one of {FD_QUANTITIES}")
    if h_fd is None:
        h_fd = default_fd_step(t)
    if levels is None:
        q0 = apply_flow(f, t, p)
        levels = triangulate(q0, h * q0.diameter).levels
    qp = apply_flow(f, t + h_fd, p)
    qm = apply_flow(f, t - h_fd, p)
    return (_quantity(qp, quantity, h, degree, levels) - _quantity(qm, quantity, h, degree, levels)) / (
        2.0 * h_fd
    )


@dataclass
class ScanRow:
    t: float
    area: float = math.nan
    T: float = math.nan
    lambda1: float = math.nan
    T_norm: float = math.nan
    lambda1_norm: float = math.nan
    dTnorm_dt: float = math.nan
    dTnorm_dt_fd: float = math.nan
    dLnorm_dt: float = math.nan
    proof_form: float = math.nan
    flag: str = "ok"

    @property
    def flagged(self) -> bool:
        return self.flag != "ok"

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def values(self) -> list:
        return [getattr(self, c) for c in self.columns()]


def scan_row(
    p: Polygon,
    f: AffineFlow,
    t: float,
    h: float = DEFAULT_H,
    degree: int = DEFAULT_DEGREE,
    fd: bool = True,
    consistency_tol: float = CONSISTENCY_TOL,
) -> ScanRow:
    """All derivative forms of ``T/A²`` and ``λ₁A`` at one flow time; errors flag the row."""
    try:
        q = apply_flow(f, t, p)
        sol = solve_domain(q, h, degree)
        rep = report_from_solution(sol, consistency_tol)
        dT = shape_derivative_T(sol.torsion_trace, f, t)
        dL = shape_derivative_lambda1(sol.eigen_trace, f, t)
        dA = area_derivative(q, f, t)
        dTn, dLn = normalized_derivatives(rep, dT, dL, dA)
        row = ScanRow(
            t=t,
            area=rep.area,
            T=rep.T_domain,
            lambda1=rep.lambda1,
            T_norm=rep.T_normalized,
            lambda1_norm=rep.lambda1_normalized,
            dTnorm_dt=dTn,
            dLnorm_dt=dLn,
        )
        if f.kind in PROOF_FORM_KINDS:
            row.proof_form = proof_form_derivative(f, sol.torsion_trace, t, q)
        if fd:
            row.dTnorm_dt_fd = fd_derivative("T_norm", p, f, t, h=h, degree=degree, levels=sol.mesh.levels)
        flags = []
        if not sol.mesh.trusted:
            flags.append("min_angle")
        if not rep.consistent:
            flags.append("inconsistent")
        row.flag = "|".join(flags) or "ok"
        return row
    except ShapeflowError as exc:
        return ScanRow(t=t, flag=f"error:{type(exc).__name__}")


def monotonicity_scan(
    p: Polygon,
    f: AffineFlow,
    t_grid: Sequence[float],
    h: float = DEFAULT_H,
    degree: int = DEFAULT_DEGREE,
    fd: bool = True,
    workers: int = 1,
    consistency_tol: float = CONSISTENCY_TOL,
) -> list[ScanRow]:
    """One :class:`ScanRow` per flow time, in grid order."""
    job = partial(scan_row, p, f, h=h, degree=degree, fd=fd, consistency_tol=consistency_tol)
    ts = [float(t) for t in t_grid]
    if workers > 1 and len(ts) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(job, ts))
    return [job(t) for t in ts]


# ---------------------------------------------------------------------------
# continuous Steiner symmetrization of the rectangle R(s) = [0, s] x [0, 1/s]


def css_lambda(s: float) -> float:
    """Distance from C to the perpendicular bisector of the diagonal BD of R(s)."""
    return 0.5 * (1 - s ** 4) / (1 + s ** 4) * math.sqrt(s ** -2 + s ** 2)


def css_xi(s: float, t: float) -> float:
    """Side length |A_t B_t| of the parallelogram after symmetrization time ``t``."""
    if not (0 < s <= 1 and 0 <= t <= 1):
        raise ValueError("need 0 < s <= 1 and 0 <= t <= 1")
    lam = css_lambda(s)
    return math.sqrt(t * t * lam * lam + s * s + 2 * t * lam * s * s / math.sqrt(s * s + s ** -2))


@dataclass(frozen=True)
class CssState:
    s: float

    @property
    def lam(self) -> float:
        return css_lambda(self.s)

    def xi(self, t: float) -> float:
        return css_xi(self.s, t)


def rectangle_R(x: float) -> Polygon:
    return rectangle(x, 1.0 / x)


def rectangle_torsion(x: float, h: float = DEFAULT_H, degree: int = DEFAULT_DEGREE) -> float:
    """T of ``[0, x] x [0, 1/x]``."""
    sol = solve_domain(rectangle_R(x), h, degree, eigen=False)
    return torsional_rigidity(sol.torsion)


@dataclass
class CssRow:
    s: float
    t: float
    xi: float
    s_prime: float
    T_s: float
    T_s_prime: float

    @property
    def increased(self) -> bool:
        return self.T_s_prime > self.T_s


@dataclass
class CssReport:
    s: float
    rows: list = field(default_factory=list)
    profile: list = field(default_factory=list)  # (s, T(R(s))) pairs

    @property
    def passed(self) -> bool:
        """Strict increase at every ``t > 0``; the square (s = 1) is a fixed point."""
        if self.s == 1.0:
            return all(r.T_s_prime == r.T_s for r in self.rows)
        return all(r.increased for r in self.rows if r.t > 0)

    @property
    def profile_increasing(self) -> bool:
        T = [v for _, v in self.profile]
        return all(b > a for a, b in zip(T, T[1:]))


def css_verify(
    s: float,
    t_grid: Sequence[float],
    s_grid: Sequence[float] | None = None,
    h: float = DEFAULT_H,
    degree: int = DEFAULT_DEGREE,
) -> CssReport:
    """Check ``T(R(s')) > T(R(s))`` with ``s' = min(ξ, 1/ξ)`` for every ``t > 0``.

    R(ξ) and R(1/ξ) are congruent, so folding ξ back into (0, 1] does not
    change T.
    """
    if not 0 < s <= 1:
        raise ValueError("need 0 < s <= 1")
    T_s = rectangle_torsion(s, h, degree)
    rep = CssReport(s)
    for t in t_grid:
        xi = css_xi(s, float(t))
        sp = min(xi, 1.0 / xi)
        T_sp = T_s if sp == s else rectangle_torsion(sp, h, degree)
        rep.rows.append(CssRow(s, float(t), xi, sp, T_s, T_sp))
    for x in s_grid or ():
        rep.profile.append((float(x), rectangle_torsion(float(x), h, degree)))
    return rep
