"""Lagrange finite elements for the torsion and principal Dirichlet eigenproblems."""
from __future__ import annotations

import logging
import weakref
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg, splu

from . import _kernels
from .errors import SolveFailure
from .mesh import Mesh

log = logging.getLogger(__name__)

SOLVE_RTOL = 1e-10
EIG_TOL = 1e-12
EIG_MAX_ITER = 500
EIG_RESIDUAL_TOL = 1e-8

# 3-point Gauss-Legendre on [0, 1]
_GL_X = np.array([0.5 - 0.5 * np.sqrt(0.6), 0.5, 0.5 + 0.5 * np.sqrt(0.6)])
_GL_W = np.array([5.0, 8.0, 5.0]) / 18.0


class FunctionSpace:
    """Degrees of freedom, assembled matrices and boundary geometry for one mesh."""

    def __init__(self, mesh: Mesh, degree: int):
        if degree not in (1, 2):
            raise ValueError("degree must be 1 or 2")
        self.mesh = mesh
        self.degree = degree
        tris = mesh.triangles
        nv = mesh.n_points
        local = np.sort(tris[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 3, 2), axis=2)
        code = local[..., 0].astype(np.int64) * nv + local[..., 1]
        uniq, inverse = np.unique(code.ravel(), return_inverse=True)
        self._edge_codes = uniq
        tri_edges = inverse.reshape(-1, 3)

        bkey = np.sort(mesh.boundary_edges, axis=1)
        bcode = bkey[:, 0].astype(np.int64) * nv + bkey[:, 1]
        bedge_ids = np.searchsorted(uniq, bcode)

        if degree == 1:
            self.elem_dofs = tris.copy()
            self.dof_points = mesh.points.copy()
            bdofs = np.unique(mesh.boundary_edges)
        else:
            self.elem_dofs = np.hstack([tris, nv + tri_edges])
            a, b = uniq // nv, uniq % nv
            self.dof_points = np.vstack([mesh.points, 0.5 * (mesh.points[a] + mesh.points[b])])
            bdofs = np.concatenate([np.unique(mesh.boundary_edges), nv + bedge_ids])
        self.n_dofs = len(self.dof_points)
        self.boundary = np.zeros(self.n_dofs, dtype=bool)
        self.boundary[bdofs] = True
        self.interior = np.flatnonzero(~self.boundary)

        ref_val, ref_grad = _kernels.reference_basis(degree, _kernels.QUAD_POINTS)
        Kl, Ml = _kernels.element_matrices(
            mesh.points[tris], ref_val, ref_grad, _kernels.QUAD_WEIGHTS
        )
        nb = self.elem_dofs.shape[1]
        rows = np.repeat(self.elem_dofs, nb, axis=1).ravel()
        cols = np.tile(self.elem_dofs, (1, nb)).ravel()
        shape = (self.n_dofs, self.n_dofs)
        self.K = sp.csr_matrix((Kl.ravel(), (rows, cols)), shape=shape)
        self.M = sp.csr_matrix((Ml.ravel(), (rows, cols)), shape=shape)
        self.load = np.asarray(self.M @ np.ones(self.n_dofs)).ravel()
        self._setup_boundary(tri_edges, bedge_ids)

    def _setup_boundary(self, tri_edges, bedge_ids):
        mesh = self.mesh
        owner = np.full(len(self._edge_codes), -1, dtype=np.int64)
        flat = tri_edges.ravel()
        counts = np.bincount(flat, minlength=len(self._edge_codes))
        tri_of = np.repeat(np.arange(len(tri_edges)), 3)
        owner[flat] = tri_of  # boundary edges have exactly one owner
        if np.any(counts[bedge_ids] != 1):
            raise ValueError("mesh boundary edge shared by several triangles")
        self.boundary_tri = owner[bedge_ids]

        be = mesh.boundary_edges
        p0, p1 = mesh.points[be[:, 0]], mesh.points[be[:, 1]]
        d = p1 - p0
        length = np.hypot(*d.T)
        normal = np.column_stack([d[:, 1], -d[:, 0]]) / length[:, None]
        nq = len(_GL_X)
        self.trace_points = (p0[:, None, :] + _GL_X[None, :, None] * d[:, None, :]).reshape(-1, 2)
        self.trace_weights = (length[:, None] * _GL_W[None, :]).ravel()
        self.trace_normals = np.repeat(normal, nq, axis=0)
        self.trace_side = np.repeat(mesh.boundary_side, nq)
        self.trace_tri = np.repeat(self.boundary_tri, nq)

        poly = mesh.polygon
        starts = np.concatenate([[0.0], np.cumsum(poly.side_lengths)[:-1]])
        side_start = poly.vertices[self.trace_side]
        self.trace_arclength = starts[self.trace_side] + np.hypot(
            *(self.trace_points - side_start).T
        )
        self.perimeter = float(poly.side_lengths.sum())

    def _setup_flux(self):
        """Boundary mass matrix of the continuous trace space, factorized once."""
        mesh = self.mesh
        be = mesh.boundary_edges
        if self.degree == 2:
            nv = mesh.n_points
            bkey = np.sort(be, axis=1)
            mid = nv + np.searchsorted(self._edge_codes, bkey[:, 0].astype(np.int64) * nv + bkey[:, 1])
            nodes = np.column_stack([be, mid])
            local = np.array([[4.0, -1.0, 2.0], [-1.0, 4.0, 2.0], [2.0, 2.0, 16.0]]) / 30.0
        else:
            nodes = be.copy()
            local = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
        bd, ln = np.unique(nodes, return_inverse=True)
        ln = ln.reshape(nodes.shape)
        length = np.hypot(*(mesh.points[be[:, 1]] - mesh.points[be[:, 0]]).T)
        k = nodes.shape[1]
        Mg = sp.csc_matrix(
            (
                (length[:, None, None] * local[None]).ravel(),
                (np.repeat(ln, k, axis=1).ravel(), np.tile(ln, (1, k)).ravel()),
            ),
            shape=(len(bd), len(bd)),
        )
        self._flux = (bd, ln, splu(Mg))

    def recover_flux(self, residual: np.ndarray) -> np.ndarray:
        """Solve ``M_Γ q = r_Γ`` for the boundary flux; returns ``(E, nodes)`` edge coefficients.

        The Galerkin residual on boundary test functions equals ``∫ ∂w/∂ν φ``,
        which gives a flux that converges faster than the element gradient.
        """
        if not hasattr(self, "_flux"):
            self._setup_flux()
        bd, ln, lu = self._flux
        return lu.solve(residual[bd])[ln]

    def edge_basis(self, s: np.ndarray) -> np.ndarray:
        """Trace basis at edge parameters ``s`` in ``[0, 1]``, ordered start, end, midpoint."""
        s = np.asarray(s, dtype=float)
        if self.degree == 1:
            return np.stack([1.0 - s, s], axis=-1)
        return np.stack([(1.0 - s) * (1.0 - 2.0 * s), s * (2.0 * s - 1.0), 4.0 * s * (1.0 - s)], axis=-1)

    def barycentric(self, tri_idx: np.ndarray, points: np.ndarray):
        """Barycentric coordinates ``(Q, 3)`` and their gradients ``(Q, 3, 2)``."""
        P = self.mesh.points[self.mesh.triangles[tri_idx]]
        x0, x1, x2 = P[:, 0], P[:, 1], P[:, 2]
        det = (x1[:, 0] - x0[:, 0]) * (x2[:, 1] - x0[:, 1]) - (x1[:, 1] - x0[:, 1]) * (
            x2[:, 0] - x0[:, 0]
        )
        glam = np.empty((len(tri_idx), 3, 2))
        for i in range(3):
            a, b = P[:, (i + 1) % 3], P[:, (i + 2) % 3]
            glam[:, i, 0] = (a[:, 1] - b[:, 1]) / det
            glam[:, i, 1] = (b[:, 0] - a[:, 0]) / det
        lam = np.empty((len(tri_idx), 3))
        for i in range(3):
            lam[:, i] = 1.0 / 3.0 + np.einsum(
                "qk,qk->q", points - P.mean(axis=1), glam[:, i]
            )
        return lam, glam

    def gradient(self, values: np.ndarray, tri_idx: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Gradient of the FE function inside triangles ``tri_idx`` at ``points``."""
        lam, glam = self.barycentric(tri_idx, points)
        u_loc = values[self.elem_dofs[tri_idx]]
        if self.degree == 1:
            return np.einsum("qi,qik->qk", u_loc, glam)
        return _kernels.p2_gradients(u_loc, lam, glam)


def function_space(mesh: Mesh, degree: int = 2) -> FunctionSpace:
    """Cached per mesh while some field still uses the space.

    The mesh holds its spaces weakly: a strong reference would form a cycle
    with ``space.mesh`` and keep large matrices alive until a full collection.
    """
    cache = mesh.__dict__.setdefault("_spaces", weakref.WeakValueDictionary())
    space = cache.get(degree)
    if space is None:
        space = cache[degree] = FunctionSpace(mesh, degree)
    return space


@dataclass(frozen=True, eq=False)
class Field:
    """FE function with homogeneous Dirichlet data."""

    space: FunctionSpace
    values: np.ndarray
    role: str
    rhs: np.ndarray | None = None  # Galerkin right-hand side, enables flux recovery

    @property
    def mesh(self) -> Mesh:
        return self.space.mesh

    @property
    def degree(self) -> int:
        return self.space.degree

    @property
    def min_interior(self) -> float:
        return float(self.values[self.space.interior].min())

    def integral(self) -> float:
        return float(self.space.load @ self.values)

    def l2_norm_sq(self) -> float:
        return float(self.values @ (self.space.M @ self.values))

    def dirichlet_energy(self) -> float:
        return float(self.values @ (self.space.K @ self.values))

    def normal_derivative(self) -> np.ndarray | None:
        """Coefficients of the recovered ``∂w/∂ν`` on the boundary edges, or None without ``rhs``."""
        if self.rhs is None:
            return None
        return self.space.recover_flux(self.space.K @ self.values - self.rhs)


@dataclass(frozen=True)
class EigenResult:
    lambda1: float
    field: Field
    residual: float
    iterations: int


@dataclass(frozen=True, eq=False)
class BoundaryTrace:
    """Squared gradient at boundary quadrature points, with geometry and side tags."""

    points: np.ndarray
    normals: np.ndarray
    grad_sq: np.ndarray
    weights: np.ndarray
    side: np.ndarray
    tags: tuple
    arclength: np.ndarray
    perimeter: float

    @property
    def x_dot_nu(self) -> np.ndarray:
        return np.einsum("qk,qk->q", self.points, self.normals)

    def mask(self, tag) -> np.ndarray:
        from .errors import UnknownTag

        try:
            k = self.tags.index(tag)
        except ValueError:
            raise UnknownTag(f"no side tagged {tag!r}; known: {self.tags}") from None
        return self.side == k


class _SPDSolver:
    """Sparse LU in symmetric mode with a residual check and CG fallback."""

    def __init__(self, A: sp.spmatrix):
        self.A = A.tocsc()
        try:
            self.lu = splu(
                self.A,
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0,
                options={"SymmetricMode": True},
            )
        except RuntimeError as exc:  # pragma: no cover - singular matrix
            log.warning("factorization failed (%s); falling back to CG", exc)
            self.lu = None
        d = self.A.diagonal()
        self._jacobi = sp.diags(1.0 / d)
        self._anorm = float(abs(self.A).sum(axis=1).max())

    def backward_error(self, x: np.ndarray, b: np.ndarray) -> float:
        """Normwise relative backward error ``|b - Ax| / (|A| |x| + |b|)`` in the inf-norm."""
        r = b - self.A @ x
        den = self._anorm * np.max(np.abs(x)) + np.max(np.abs(b))
        return float(np.max(np.abs(r)) / den)

    def solve(self, b: np.ndarray, check: bool = True) -> np.ndarray:
        if not np.any(b):
            return np.zeros_like(b)
        x = None
        if self.lu is not None:
            x = self.lu.solve(b)
            if not check:
                return x
            if self.backward_error(x, b) > SOLVE_RTOL:
                x = x + self.lu.solve(b - self.A @ x)
            if self.backward_error(x, b) <= SOLVE_RTOL:
                return x
        x, info = cg(self.A, b, x0=x, rtol=SOLVE_RTOL, maxiter=20 * len(b), M=self._jacobi)
        if info != 0 or self.backward_error(x, b) > SOLVE_RTOL:
            raise SolveFailure("linear solve stagnated")
        return x


def solve_torsion(mesh: Mesh, degree: int = 2) -> Field:
    """Galerkin solution of ``-Δu = 1`` with zero boundary values."""
    V = function_space(mesh, degree)
    I = V.interior
    u = np.zeros(V.n_dofs)
    if len(I):
        u[I] = _SPDSolver(V.K[I][:, I]).solve(V.load[I])
    u.setflags(write=False)
    f = Field(V, u, "torsion", V.load)
    if len(I) and f.min_interior <= 0:
        log.warning("torsion function has a non-positive interior value %.3g", f.min_interior)
    return f


def solve_principal_eigen(
    mesh: Mesh, degree: int = 2, tol: float = EIG_TOL, max_iter: int = EIG_MAX_ITER
) -> EigenResult:
    """Smallest Dirichlet eigenpair by inverse iteration, normalized in L2.

    A first pass without shift brings the Rayleigh quotient within 1e-8; a
    second pass shifted just below that estimate then converges in a handful
    of steps even when the spectral gap is small.
    """
    V = function_space(mesh, degree)
    I = V.interior
    if len(I) == 0:
        raise SolveFailure("mesh has no interior degrees of freedom")
    K = V.K[I][:, I].tocsc()
    M = V.M[I][:, I].tocsc()
    v = np.ones(len(I))
    v /= np.sqrt(v @ (M @ v))
    lam = v @ (K @ v)
    it = 0
    for shift_phase, stop in ((False, 1e-8), (True, tol)):
        sigma = lam * (1.0 - 1e-3) if shift_phase else 0.0
        solver = _SPDSolver(K - sigma * M if sigma else K)
        while True:
            it += 1
            if it > max_iter:
                raise SolveFailure(f"inverse iteration did not converge in {max_iter} steps")
            # near-singular shifted systems: residual checks are meaningless there
            w = solver.solve(M @ v, check=not shift_phase)
            v = w / np.sqrt(w @ (M @ w))
            new = v @ (K @ v)
            done = abs(new - lam) <= stop * abs(new)
            lam = new
            if done:
                if not shift_phase:
                    break
                Mv = M @ v
                res = np.linalg.norm(K @ v - lam * Mv) / np.linalg.norm(Mv)
                if res <= EIG_RESIDUAL_TOL:
                    break
    values = np.zeros(V.n_dofs)
    values[I] = v
    centroid = mesh.polygon.centroid
    nearest = I[np.argmin(np.hypot(*(V.dof_points[I] - centroid).T))]
    if values[nearest] < 0:
        values = -values
    values.setflags(write=False)
    rhs = lam * (V.M @ values)
    return EigenResult(float(lam), Field(V, values, "eigenfunction", rhs), float(res), it)


FLUX_METHODS = ("auto", "recovered", "element")


def _flux_coefficients(f: Field, method: str) -> np.ndarray | None:
    if method not in FLUX_METHODS:
        raise ValueError(f"method must be one of {FLUX_METHODS}")
    if method == "element" or (method == "auto" and not f.mesh.trusted):
        return None
    return f.normal_derivative()


def boundary_flux_sq(f: Field, method: str = "auto") -> BoundaryTrace:
    """|∇w|² at 3-point Gauss nodes of every boundary edge.

    ``"recovered"`` uses the residual-based normal derivative (on the boundary
    ``∇w = (∂w/∂ν) ν``). ``"element"`` uses the gradient of the adjacent
    element; it is also the fallback for fields without ``rhs``. ``"auto"``
    recovers on trusted meshes only: on needle elements the recovered flux
    alternates between vertex and midpoint nodes, and squaring biases it.
    """
    V = f.space
    q = _flux_coefficients(f, method)
    if q is None:
        g = V.gradient(f.values, V.trace_tri, V.trace_points)
        grad_sq = (g ** 2).sum(axis=1)
    else:
        grad_sq = ((q @ V.edge_basis(_GL_X).T) ** 2).ravel()
    return BoundaryTrace(
        points=V.trace_points,
        normals=V.trace_normals,
        grad_sq=grad_sq,
        weights=V.trace_weights,
        side=V.trace_side,
        tags=V.mesh.tags,
        arclength=V.trace_arclength,
        perimeter=V.perimeter,
    )


def boundary_gradient_sq(f: Field, points: Sequence, method: str = "auto") -> np.ndarray:
    """|∇w|² at arbitrary points lying on the domain boundary, same methods as :func:`boundary_flux_sq`."""
    V = f.space
    mesh = V.mesh
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    be = mesh.boundary_edges
    a, b = mesh.points[be[:, 0]], mesh.points[be[:, 1]]
    d = b - a
    dd = (d ** 2).sum(axis=1)
    s = np.clip(np.einsum("pbk,bk->pb", pts[:, None, :] - a[None], d) / dd, 0.0, 1.0)
    proj = a[None] + s[..., None] * d[None]
    dist = np.hypot(*(pts[:, None, :] - proj).transpose(2, 0, 1))
    k = np.argmin(dist, axis=1)
    if np.any(dist[np.arange(len(pts)), k] > 1e-9 * mesh.polygon.diameter):
        raise ValueError("point is not on the boundary")
    q = _flux_coefficients(f, method)
    if q is not None:
        sk = s[np.arange(len(pts)), k]
        return np.einsum("pn,pn->p", q[k], V.edge_basis(sk)) ** 2
    g = V.gradient(f.values, V.boundary_tri[k], pts)
    return (g ** 2).sum(axis=1)
