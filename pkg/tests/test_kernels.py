import numpy as np
import pytest

from shapeflow import _kernels as K
from shapeflow.fem import FunctionSpace
from shapeflow.geometry import rhombus
from shapeflow.mesh import triangulate

pytestmark = pytest.mark.skipif(not K.USE_NUMBA, reason="numba path disabled")


def test_quadrature_exact_for_quartics():
    x, y = K.QUAD_POINTS.T
    # ∫ x^a y^b over the reference triangle = a! b! / (a + b + 2)!
    from math import factorial

    for a in range(5):
        for b in range(5 - a):
            exact = factorial(a) * factorial(b) / factorial(a + b + 2)
            assert abs(np.sum(K.QUAD_WEIGHTS * x ** a * y ** b) - exact) < 1e-14


@pytest.mark.parametrize("degree", [1, 2])
def test_element_matrices_agree(degree):
    m = triangulate(rhombus(1.0, 1.6), 0.2)
    coords = m.points[m.triangles]
    val, grad = K.reference_basis(degree, K.QUAD_POINTS)
    Kn, Mn = K.element_matrices(coords, val, grad, K.QUAD_WEIGHTS, use_numba=True)
    Kp, Mp = K.element_matrices(coords, val, grad, K.QUAD_WEIGHTS, use_numba=False)
    assert np.allclose(Kn, Kp, rtol=1e-12, atol=1e-13)
    assert np.allclose(Mn, Mp, rtol=1e-12, atol=1e-16)


def test_p2_gradients_agree():
    m = triangulate(rhombus(1.0, 1.6), 0.2)
    V = FunctionSpace(m, 2)
    rng = np.random.default_rng(0)
    tri = rng.integers(0, m.n_triangles, size=200)
    lam = rng.dirichlet(np.ones(3), size=200)
    pts = np.einsum("qi,qik->qk", lam, m.points[m.triangles[tri]])
    lam2, glam = V.barycentric(tri, pts)
    u_loc = rng.normal(size=(200, 6))
    g1 = K.p2_gradients(u_loc, lam2, glam, use_numba=True)
    g2 = K.p2_gradients(u_loc, lam2, glam, use_numba=False)
    assert np.allclose(g1, g2, rtol=1e-12, atol=1e-12)


def test_stiffness_annihilates_constants():
    m = triangulate(rhombus(1.0, 1.6), 0.3)
    V = FunctionSpace(m, 2)
    assert np.max(np.abs(V.K @ np.ones(V.n_dofs))) < 1e-10
    assert np.isclose(V.M.sum(), m.polygon.area, rtol=1e-12)
