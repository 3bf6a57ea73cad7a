"""Curvature flows of convex curves in support-function form.

A strictly convex body is stored as samples of its support function ``h(θ)``
on a uniform grid.  With ``γ(θ) = (cos θ, sin θ)`` the boundary point with
outer normal γ is ``x = h γ + h' γ⊥``, the radius of curvature is
``ρ = h + h''`` and ``x·ν = h``.  Angular derivatives are spectral.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvexityLost, NumericalError, OriginEscaped
from .fem import BoundaryTrace, boundary_flux_sq, solve_torsion
from .functionals import deficit, torsional_rigidity
from .geometry import Polygon
from .mesh import triangulate

log = logging.getLogger(__name__)

RHO_MIN_FRACTION = 1e-6
DEFAULT_N = 256
FLOW_KINDS = ("csf", "imcf", "torsion")


def _wavenumbers(n: int) -> np.ndarray:
    return np.arange(n // 2 + 1, dtype=float)


def _spectral_derivative(h: np.ndarray, order: int) -> np.ndarray:
    n = len(h)
    c = np.fft.rfft(h) * (1j * _wavenumbers(n)) ** order
    if order % 2:
        c[-1] = 0.0  # Nyquist mode has no real odd derivative
    return np.fft.irfft(c, n)


def _fourier_eval(h: np.ndarray, theta: np.ndarray, order: int = 0) -> np.ndarray:
    """Trigonometric interpolant of the grid samples ``h`` (or a derivative) at ``theta``."""
    n = len(h)
    k = _wavenumbers(n)
    c = np.fft.rfft(h) / n * (1j * k) ** order
    w = np.full(len(k), 2.0)
    w[0] = 1.0
    w[-1] = 1.0
    if order % 2:
        w[-1] = 0.0
    return np.real(np.exp(1j * np.outer(np.asarray(theta, dtype=float), k)) @ (w * c))


@dataclass(frozen=True, eq=False)
class SupportBody:
    """Support function samples ``h[k] = h(2πk/N)`` about the coordinate origin."""

    h: np.ndarray

    def __post_init__(self):
        h = np.array(self.h, dtype=float)
        n = len(h)
        if h.ndim != 1 or n < 8 or n & (n - 1):
            raise ValueError("need a power-of-two number of samples, at least 8")
        if not np.all(np.isfinite(h)):
            raise NumericalError("non-finite support values")
        if np.min(h) <= 0.0:
            raise OriginEscaped(f"origin left the body (min h = {np.min(h):.3g})")
        rho = h + _spectral_derivative(h, 2)
        if np.min(rho) <= RHO_MIN_FRACTION * np.mean(h):
            raise ConvexityLost(f"radius of curvature dropped to {np.min(rho):.3g}")
        h.setflags(write=False)
        object.__setattr__(self, "h", h)

    @classmethod
    def circle(cls, radius: float = 1.0, n: int = DEFAULT_N, center=(0.0, 0.0)) -> "SupportBody":
        return cls.ellipse(radius, radius, n, center=center)

    @classmethod
    def ellipse(
        cls, a: float, b: float, n: int = DEFAULT_N, angle: float = 0.0, center=(0.0, 0.0)
    ) -> "SupportBody":
        """Ellipse with semi-axes ``a, b``, major axis at ``angle``, centered at ``center``."""
        th = 2.0 * np.pi * np.arange(n) / n
        phi = th - angle
        h = np.sqrt((a * np.cos(phi)) ** 2 + (b * np.sin(phi)) ** 2)
        return cls(h + center[0] * np.cos(th) + center[1] * np.sin(th))

    @classmethod
    def from_points(cls, points: np.ndarray) -> "SupportBody":
        """Recover h from the boundary points ``x(θ_k)`` via ``h = x·γ``."""
        points = np.asarray(points, dtype=float)
        th = 2.0 * np.pi * np.arange(len(points)) / len(points)
        return cls(points[:, 0] * np.cos(th) + points[:, 1] * np.sin(th))

    @property
    def n(self) -> int:
        return len(self.h)

    @property
    def theta(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.n) / self.n

    @property
    def dtheta(self) -> float:
        return 2.0 * np.pi / self.n

    @property
    def dh(self) -> np.ndarray:
        return _spectral_derivative(self.h, 1)

    @property
    def rho(self) -> np.ndarray:
        return self.h + _spectral_derivative(self.h, 2)

    @property
    def area(self) -> float:
        return 0.5 * float(np.sum(self.h ** 2 - self.dh ** 2)) * self.dtheta

    @property
    def perimeter(self) -> float:
        return float(np.sum(self.h)) * self.dtheta

    def boundary_points(self) -> np.ndarray:
        th, h, dh = self.theta, self.h, self.dh
        c, s = np.cos(th), np.sin(th)
        return np.column_stack([h * c - dh * s, h * s + dh * c])

    @property
    def centroid(self) -> np.ndarray:
        """Area centroid, ``(1/3A) ∫ x h ρ dθ``."""
        w = self.h * self.rho
        x = self.boundary_points()
        return (x * w[:, None]).sum(axis=0) * self.dtheta / (3.0 * self.area)

    def translated(self, offset) -> "SupportBody":
        """Support function of the body moved by ``offset``."""
        th = self.theta
        return SupportBody(self.h + offset[0] * np.cos(th) + offset[1] * np.sin(th))


def rho(b: SupportBody) -> np.ndarray:
    return b.rho


def body_area(b: SupportBody) -> float:
    return b.area


def body_perimeter(b: SupportBody) -> float:
    return b.perimeter


def to_polygon(b: SupportBody, m: int) -> Polygon:
    """Polygon through ``m`` boundary points at equally spaced normal angles.

    Vertex ``j`` sits at normal angle ``2πj/m``; :func:`_trace_theta` relies on it.
    """
    th = 2.0 * np.pi * np.arange(m) / m
    h = _fourier_eval(b.h, th)
    dh = _fourier_eval(b.h, th, 1)
    c, s = np.cos(th), np.sin(th)
    return Polygon(np.column_stack([h * c - dh * s, h * s + dh * c]))


def _trace_theta(tr: BoundaryTrace) -> np.ndarray:
    """Normal angle of each trace point, linear along each polygon side."""
    m = len(tr.tags)
    side_len = np.bincount(tr.side, weights=tr.weights, minlength=m)
    starts = np.concatenate([[0.0], np.cumsum(side_len)[:-1]])
    frac = (tr.arclength - starts[tr.side]) / side_len[tr.side]
    return 2.0 * np.pi * (tr.side + frac) / m


def lemma51_value(tr: BoundaryTrace, b: SupportBody) -> float:
    """``∫ |∇u|² κ ds`` with the curvature of ``b``; bounded by ``area/2``.

    ``tr`` must be the torsion trace on ``to_polygon(b, m)``.
    """
    kappa = 1.0 / _fourier_eval(b.rho, _trace_theta(tr))
    return float(np.sum(tr.weights * tr.grad_sq * kappa))


def _grad_sq_at_nodes(tr: BoundaryTrace, n: int) -> np.ndarray:
    """|∇u|² interpolated to the body's θ nodes, then low-pass filtered."""
    tq = _trace_theta(tr)
    order = np.argsort(tq)
    th = 2.0 * np.pi * np.arange(n) / n
    g = np.interp(th, tq[order], tr.grad_sq[order], period=2.0 * np.pi)
    # polygon corners imprint modes at the vertex count; keep the smooth part
    cut = max(4, len(tr.tags) // 4)
    c = np.fft.rfft(g)
    k = _wavenumbers(n)
    c *= np.exp(-((k / cut) ** 8))
    return np.fft.irfft(c, n)


# ---------------------------------------------------------------------------
# steppers


def _midpoint(h: np.ndarray, speed, dt: float) -> np.ndarray:
    k1 = speed(h)
    return h + dt * speed(h + 0.5 * dt * k1)


def _csf_speed(h):
    return -1.0 / (h + _spectral_derivative(h, 2))


def _imcf_speed(h):
    return h + _spectral_derivative(h, 2)


def csf_step(b: SupportBody, dt: float) -> SupportBody:
    """Curve shortening flow, ``h_t = -1/ρ``."""
    return SupportBody(_midpoint(b.h, _csf_speed, dt))


def imcf_step(b: SupportBody, dt: float) -> SupportBody:
    """Inverse mean curvature flow, ``h_t = ρ``."""
    return SupportBody(_midpoint(b.h, _imcf_speed, dt))


def torsion_step(b: SupportBody, tr: BoundaryTrace, dt: float) -> SupportBody:
    """Torsion-driven flow, ``h_t = -h/|∇u|²`` with the trace frozen over the step."""
    g = _grad_sq_at_nodes(tr, b.n)
    if np.min(g) <= 0.0:
        raise NumericalError("boundary gradient vanished")
    return SupportBody(_midpoint(b.h, lambda h: -h / g, dt))


def stable_dt(kind: str, b: SupportBody) -> float:
    """Explicit midpoint stability bound for the stiff angular modes."""
    kmax2 = (b.n / 2) ** 2
    if kind == "csf":
        return 2.0 * float(np.min(b.rho)) ** 2 / kmax2
    if kind == "imcf":
        return 2.0 / (kmax2 - 1.0)
    return math.inf


# ---------------------------------------------------------------------------
# runs


@dataclass(frozen=True)
class FlowConfig:
    """Time-stepping and sampling policy for :func:`run_flow`."""

    t_end: float = 1.0
    area_stop: float = 0.0
    dt_safety: float = 0.5
    dt_max: float = 1e-2
    dh_fraction: float = 1e-3
    max_halvings: int = 20
    max_steps: int = 1_000_000
    sample_every: int = 10
    record_every: int = 1
    fem_vertices: int = 128
    fem_h: float = 0.04
    fem_degree: int = 2
    speed_vertices: int = 64
    speed_h: float = 0.08
    recenter: bool = True

    def __post_init__(self):
        for name in ("t_end", "dt_safety", "dt_max", "dh_fraction", "fem_h", "speed_h"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.sample_every < 0 or self.record_every < 1 or self.fem_vertices < 3 or self.speed_vertices < 3:
            raise ValueError("invalid sampling configuration")


@dataclass
class FlowSample:
    t: float
    area: float
    perimeter: float
    T: float
    deficit: float
    lemma51: float
    isoper: float
    rho_min: float
    poly_area: float = math.nan

    CSV_COLUMNS = ("t", "area", "perimeter", "T", "deficit", "lemma51", "isoper", "rho_min")

    def values(self) -> list:
        return [getattr(self, c) for c in self.CSV_COLUMNS]

    @property
    def sampled(self) -> bool:
        return not math.isnan(self.T)


@dataclass
class FlowSeries:
    kind: str
    samples: list = field(default_factory=list)
    steps: int = 0
    failure: str | None = None

    def column(self, name: str, sampled_only: bool = False) -> np.ndarray:
        rows = [s for s in self.samples if s.sampled] if sampled_only else self.samples
        return np.array([getattr(s, name) for s in rows])


def _solve_trace(b: SupportBody, m: int, h: float, degree: int):
    poly = to_polygon(b, m)
    u = solve_torsion(triangulate(poly, h * poly.diameter), degree)
    # the polygon stands in for a smooth body: the residual flux would resolve the
    # dips at its corners, the element gradient smooths them out
    return poly, u, boundary_flux_sq(u, method="element")


def sample(b: SupportBody, t: float, config: FlowConfig | None = None, fem: bool = True) -> FlowSample:
    """Geometric quantities of ``b`` and, with ``fem``, the torsion functionals."""
    config = config or FlowConfig()
    A, P = b.area, b.perimeter
    s = FlowSample(t, A, P, math.nan, math.nan, math.nan, P * P / A, float(np.min(b.rho)))
    if fem:
        poly, u, tr = _solve_trace(b, config.fem_vertices, config.fem_h, config.fem_degree)
        s.T = torsional_rigidity(u)
        s.poly_area = poly.area
        s.deficit = deficit(s.T, poly.area)
        s.lemma51 = lemma51_value(tr, b)
    return s


def run_flow(kind: str, b0: SupportBody, config: FlowConfig | None = None) -> FlowSeries:
    """Integrate a flow from ``b0`` until ``t_end`` or until the area drops to ``area_stop``.

    dt is the largest value allowed by the stability bound, ``dt_max`` and the
    rule ``max|Δh| <= dh_fraction * min h``; it is halved when a step breaks
    convexity, moves the origin outside, or changes h too much.  A step that
    still fails after ``max_halvings`` ends the run with ``failure`` set.
    """
    if kind not in FLOW_KINDS:
        raise ValueError(f"kind must be one of {FLOW_KINDS}")
    config = config or FlowConfig()
    fem = config.sample_every > 0
    series = FlowSeries(kind)
    b, t = b0, 0.0
    series.samples.append(sample(b, t, config, fem))
    while t < config.t_end - 1e-15 and b.area > config.area_stop and series.steps < config.max_steps:
        try:
            if kind == "torsion":
                _, _, tr = _solve_trace(b, config.speed_vertices, config.speed_h, config.fem_degree)
                speed = np.max(b.h / _grad_sq_at_nodes(tr, b.n))
                step = lambda bb, dt: torsion_step(bb, tr, dt)  # noqa: E731
            else:
                speed = np.max(np.abs(_csf_speed(b.h) if kind == "csf" else _imcf_speed(b.h)))
                step = csf_step if kind == "csf" else imcf_step
            dh_max = config.dh_fraction * float(np.min(b.h))
            dt = min(
                config.dt_max,
                config.dt_safety * stable_dt(kind, b),
                dh_max / speed,
                config.t_end - t,
            )
            new = None
            for _ in range(config.max_halvings + 1):
                try:
                    cand = step(b, dt)
                    if np.max(np.abs(cand.h - b.h)) <= dh_max * (1 + 1e-9):
                        new = cand
                        break
                except (ConvexityLost, OriginEscaped):
                    pass
                dt *= 0.5
            if new is None:
                raise ConvexityLost(f"step rejected after {config.max_halvings} halvings at t={t:.6g}")
            if kind == "torsion" and config.recenter:
                new = new.translated(-new.centroid)
            b, t = new, t + dt
            series.steps += 1
            done = t >= config.t_end - 1e-15 or b.area <= config.area_stop
            take = fem and (series.steps % config.sample_every == 0 or done)
            if take or done or series.steps % config.record_every == 0:
                series.samples.append(sample(b, t, config, take))
        except NumericalError as exc:
            log.warning("%s flow stopped: %s", kind, exc)
            series.failure = f"{type(exc).__name__}: {exc}"
            break
    return series


__all__ = [
    "SupportBody",
    "FlowConfig",
    "FlowSample",
    "FlowSeries",
    "rho",
    "body_area",
    "body_perimeter",
    "to_polygon",
    "csf_step",
    "imcf_step",
    "torsion_step",
    "stable_dt",
    "lemma51_value",
    "deficit",
    "sample",
    "run_flow",
]
