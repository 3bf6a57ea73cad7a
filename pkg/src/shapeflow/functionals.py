"""Torsional rigidity, principal eigenvalue and their boundary (Pohozaev) forms."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fem import (
    BoundaryTrace,
    EigenResult,
    Field,
    boundary_flux_sq,
    solve_principal_eigen,
    solve_torsion,
)
from .geometry import Polygon
from .mesh import Mesh, triangulate

DEFAULT_H = 0.02  # element size as a fraction of the polygon diameter
DEFAULT_DEGREE = 2
CONSISTENCY_TOL = 1e-3
SAINT_VENANT_C2 = 1.0 / (8.0 * math.pi)


def torsional_rigidity(f: Field) -> float:
    """Integral of the torsion function (exact quadrature of the FE function)."""
    return f.integral()


def pohozaev_T(tr: BoundaryTrace) -> float:
    """``(1/4) ∫ |∇u|² (x·ν) dσ``, which equals T for the torsion function in 2-d."""
    return 0.25 * float(np.sum(tr.weights * tr.grad_sq * tr.x_dot_nu))


def pohozaev_lambda1(tr: BoundaryTrace) -> float:
    """``(1/2) ∫ |∇v|² (x·ν) dσ`` for an L2-normalized principal eigenfunction."""
    return 0.5 * float(np.sum(tr.weights * tr.grad_sq * tr.x_dot_nu))


def side_average_flux(tr: BoundaryTrace, tag) -> float:
    """Mean of |∇w|² over one polygon side."""
    m = tr.mask(tag)
    return float(np.sum(tr.weights[m] * tr.grad_sq[m]) / np.sum(tr.weights[m]))


def deficit(T: float, A: float) -> float:
    """Saint-Venant deficit ``T - A²/(8π)``; nonpositive, zero only for disks."""
    return T - SAINT_VENANT_C2 * A * A


@dataclass
class DomainSolution:
    """Both solves on one mesh together with their boundary traces."""

    polygon: Polygon
    mesh: Mesh
    torsion: Field
    eigen: EigenResult | None
    torsion_trace: BoundaryTrace
    eigen_trace: BoundaryTrace | None


def solve_domain(
    p: Polygon,
    h: float = DEFAULT_H,
    degree: int = DEFAULT_DEGREE,
    levels: int | None = None,
    eigen: bool = True,
) -> DomainSolution:
    """Mesh ``p`` with element size ``h * diam(p)`` and run the solves."""
    mesh = triangulate(p, h * p.diameter, levels=levels)
    u = solve_torsion(mesh, degree)
    ev = solve_principal_eigen(mesh, degree) if eigen else None
    return DomainSolution(
        p, mesh, u, ev, boundary_flux_sq(u), boundary_flux_sq(ev.field) if ev else None
    )


@dataclass(frozen=True)
class FunctionalReport:
    area: float
    T_domain: float
    T_pohozaev: float
    lambda1: float
    lambda1_pohozaev: float
    T_normalized: float
    lambda1_normalized: float
    side_flux: dict = field(default_factory=dict)
    consistency_tol: float = CONSISTENCY_TOL
    h: float = math.nan
    min_angle: float = math.nan

    @property
    def T_gap(self) -> float:
        return abs(self.T_domain - self.T_pohozaev) / self.T_domain

    @property
    def lambda1_gap(self) -> float:
        return abs(self.lambda1 - self.lambda1_pohozaev) / self.lambda1

    @property
    def consistent(self) -> bool:
        return self.T_gap <= self.consistency_tol and self.lambda1_gap <= self.consistency_tol

    @property
    def deficit(self) -> float:
        return deficit(self.T_domain, self.area)


def report_from_solution(sol: DomainSolution, consistency_tol: float = CONSISTENCY_TOL) -> FunctionalReport:
    A = sol.polygon.area
    T = torsional_rigidity(sol.torsion)
    lam = sol.eigen.lambda1 if sol.eigen else math.nan
    lam_p = pohozaev_lambda1(sol.eigen_trace) if sol.eigen else math.nan
    return FunctionalReport(
        area=A,
        T_domain=T,
        T_pohozaev=pohozaev_T(sol.torsion_trace),
        lambda1=lam,
        lambda1_pohozaev=lam_p,
        T_normalized=T / A ** 2,
        lambda1_normalized=lam * A,
        side_flux={tag: side_average_flux(sol.torsion_trace, tag) for tag in sol.polygon.tags},
        consistency_tol=consistency_tol,
        h=sol.mesh.h,
        min_angle=sol.mesh.min_angle,
    )


def report(
    p: Polygon,
    h: float = DEFAULT_H,
    degree: int = DEFAULT_DEGREE,
    consistency_tol: float = CONSISTENCY_TOL,
) -> FunctionalReport:
    return report_from_solution(solve_domain(p, h, degree), consistency_tol)
