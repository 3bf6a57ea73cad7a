"""Element-level kernels with a numba path and a pure-numpy path.

Set ``SHAPEFLOW_DISABLE_NUMBA=1`` to force the numpy implementations (also
used automatically when numba is not importable).  Both paths compute the
same quantities; ``benchmarks/bench_kernels.py`` times them side by side.
"""
from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("SHAPEFLOW_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - depends on environment
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _DISABLED

# degree-4 six-point rule on the reference triangle; weights sum to 1/2
_A, _B = 0.445948490915965, 0.091576213509771
QUAD_POINTS = np.array(
    [
        [_A, _A],
        [1 - 2 * _A, _A],
        [_A, 1 - 2 * _A],
        [_B, _B],
        [1 - 2 * _B, _B],
        [_B, 1 - 2 * _B],
    ]
)
QUAD_WEIGHTS = 0.5 * np.array([0.223381589678011] * 3 + [0.109951743655322] * 3)


def reference_basis(degree: int, xi: np.ndarray):
    """Values ``(q, nb)`` and reference gradients ``(q, nb, 2)`` at points ``xi``.

    P2 ordering: three vertex functions, then edge functions on (0,1), (1,2), (2,0).
    """
    x, y = xi[:, 0], xi[:, 1]
    l0, l1, l2 = 1.0 - x - y, x, y
    dl = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    if degree == 1:
        val = np.column_stack([l0, l1, l2])
        grad = np.broadcast_to(dl, (len(x), 3, 2)).copy()
        return val, grad
    lam = np.column_stack([l0, l1, l2])
    val = np.empty((len(x), 6))
    grad = np.empty((len(x), 6, 2))
    for i in range(3):
        val[:, i] = lam[:, i] * (2 * lam[:, i] - 1)
        grad[:, i] = (4 * lam[:, i] - 1)[:, None] * dl[i]
    for k, (i, j) in enumerate(((0, 1), (1, 2), (2, 0))):
        val[:, 3 + k] = 4 * lam[:, i] * lam[:, j]
        grad[:, 3 + k] = 4 * (lam[:, i][:, None] * dl[j] + lam[:, j][:, None] * dl[i])
    return val, grad


def _element_matrices_numpy(coords, ref_val, ref_grad, weights):
    # coords: (F, 3, 2)
    J = np.stack([coords[:, 1] - coords[:, 0], coords[:, 2] - coords[:, 0]], axis=2)
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    Jinv = np.empty_like(J)
    Jinv[:, 0, 0] = J[:, 1, 1] / det
    Jinv[:, 1, 1] = J[:, 0, 0] / det
    Jinv[:, 0, 1] = -J[:, 0, 1] / det
    Jinv[:, 1, 0] = -J[:, 1, 0] / det
    # physical gradient = ref_grad @ Jinv
    G = np.einsum("qbk,fkl->fqbl", ref_grad, Jinv)
    wd = weights[None, :] * np.abs(det)[:, None]
    K = np.einsum("fq,fqal,fqbl->fab", wd, G, G)
    M = np.einsum("fq,qa,qb->fab", wd, ref_val, ref_val)
    return K, M


def _element_matrices_loop(coords, ref_val, ref_grad, weights):
    nf = coords.shape[0]
    nq, nb = ref_val.shape
    K = np.zeros((nf, nb, nb))
    M = np.zeros((nf, nb, nb))
    G = np.empty((nb, 2))
    for f in range(nf):
        j00 = coords[f, 1, 0] - coords[f, 0, 0]
        j10 = coords[f, 1, 1] - coords[f, 0, 1]
        j01 = coords[f, 2, 0] - coords[f, 0, 0]
        j11 = coords[f, 2, 1] - coords[f, 0, 1]
        det = j00 * j11 - j01 * j10
        i00, i01, i10, i11 = j11 / det, -j01 / det, -j10 / det, j00 / det
        adet = abs(det)
        for q in range(nq):
            w = weights[q] * adet
            for a in range(nb):
                gx, gy = ref_grad[q, a, 0], ref_grad[q, a, 1]
                G[a, 0] = gx * i00 + gy * i10
                G[a, 1] = gx * i01 + gy * i11
            for a in range(nb):
                va = ref_val[q, a] * w
                for b in range(nb):
                    K[f, a, b] += w * (G[a, 0] * G[b, 0] + G[a, 1] * G[b, 1])
                    M[f, a, b] += va * ref_val[q, b]
    return K, M


def _p2_gradients_numpy(u_loc, lam, glam):
    # u_loc (Q, 6), lam (Q, 3), glam (Q, 3, 2)
    g = np.zeros((len(lam), 2))
    for i in range(3):
        g += (u_loc[:, i] * (4 * lam[:, i] - 1))[:, None] * glam[:, i]
    for k, (i, j) in enumerate(((0, 1), (1, 2), (2, 0))):
        g += (4 * u_loc[:, 3 + k])[:, None] * (
            lam[:, i][:, None] * glam[:, j] + lam[:, j][:, None] * glam[:, i]
        )
    return g


def _p2_gradients_loop(u_loc, lam, glam):
    n = lam.shape[0]
    g = np.zeros((n, 2))
    for p in range(n):
        for c in range(2):
            s = 0.0
            for i in range(3):
                s += u_loc[p, i] * (4.0 * lam[p, i] - 1.0) * glam[p, i, c]
            s += 4.0 * u_loc[p, 3] * (lam[p, 0] * glam[p, 1, c] + lam[p, 1] * glam[p, 0, c])
            s += 4.0 * u_loc[p, 4] * (lam[p, 1] * glam[p, 2, c] + lam[p, 2] * glam[p, 1, c])
            s += 4.0 * u_loc[p, 5] * (lam[p, 2] * glam[p, 0, c] + lam[p, 0] * glam[p, 2, c])
            g[p, c] = s
    return g


if USE_NUMBA:
    _element_matrices_jit = njit(cache=True)(_element_matrices_loop)
    _p2_gradients_jit = njit(cache=True)(_p2_gradients_loop)


def element_matrices(coords, ref_val, ref_grad, weights, use_numba: bool | None = None):
    """Local stiffness and mass matrices, each ``(F, nb, nb)``."""
    if USE_NUMBA if use_numba is None else (use_numba and USE_NUMBA):
        return _element_matrices_jit(
            np.ascontiguousarray(coords), np.ascontiguousarray(ref_val),
            np.ascontiguousarray(ref_grad), np.ascontiguousarray(weights),
        )
    return _element_matrices_numpy(coords, ref_val, ref_grad, weights)


def p2_gradients(u_loc, lam, glam, use_numba: bool | None = None):
    """Gradient of a P2 function at points with barycentrics ``lam``."""
    if USE_NUMBA if use_numba is None else (use_numba and USE_NUMBA):
        return _p2_gradients_jit(
            np.ascontiguousarray(u_loc), np.ascontiguousarray(lam), np.ascontiguousarray(glam)
        )
    return _p2_gradients_numpy(u_loc, lam, glam)
