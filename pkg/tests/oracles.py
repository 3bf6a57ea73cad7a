"""Independent reference values used by the tests.

Nothing here calls into the package: each oracle is a closed form, a series
or a root of a power series.
"""
from __future__ import annotations

import math

import numpy as np


def rectangle_torsion_double_series(a: float, b: float, terms: int = 801) -> float:
    """T of ``[0,a] x [0,b]`` from the double sine series, truncated at ``terms`` odd modes."""
    m = np.arange(1, 2 * terms, 2, dtype=float)[:, None]
    n = np.arange(1, 2 * terms, 2, dtype=float)[None, :]
    s = 1.0 / (m * m * n * n * (m * m / a ** 2 + n * n / b ** 2))
    return float(64.0 * a * b / math.pi ** 6 * s.sum())


def rectangle_torsion_series(a: float, b: float, tol: float = 1e-15) -> float:
    """Same series with the inner sum done in closed form; converges like n^-5."""
    total, n = 0.0, 1
    while True:
        term = math.tanh(n * math.pi * b / (2 * a)) / n ** 5
        total += term
        if term < tol * total:
            break
        n += 2
    return a ** 3 * b / 12.0 * (1.0 - 192.0 * a / (math.pi ** 5 * b) * total)


def rectangle_lambda1(a: float, b: float) -> float:
    return math.pi ** 2 * (1.0 / a ** 2 + 1.0 / b ** 2)


def equilateral_torsion_function(points: np.ndarray, side: float = 1.0) -> np.ndarray:
    """``d1 d2 d3 / H`` on the triangle (0,0), (side,0), (side/2, H)."""
    H = 0.5 * math.sqrt(3.0) * side
    x, y = points[:, 0], points[:, 1]
    d1 = y
    d2 = (math.sqrt(3.0) * (side - x) - y) / 2.0
    d3 = (math.sqrt(3.0) * x - y) / 2.0
    return d1 * d2 * d3 / H


def equilateral_torsion(side: float = 1.0) -> float:
    """Exact integral of the cubic: ``∫ λ1 λ2 λ3 dA = A/60`` gives ``T = H² A / 60``."""
    H = 0.5 * math.sqrt(3.0) * side
    A = 0.5 * side * H
    return H * H * A / 60.0


def bessel_j0(x: float, terms: int = 60) -> float:
    total, term = 0.0, 1.0
    for k in range(terms):
        total += term
        term *= -(x * x / 4.0) / ((k + 1) ** 2)
    return total


def bessel_j01(tol: float = 1e-15) -> float:
    """First positive zero of J0 by bisection on its power series."""
    lo, hi = 2.0, 3.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if bessel_j0(lo) * bessel_j0(mid) <= 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def ellipse_perimeter_agm(a: float, b: float) -> float:
    """Perimeter via the arithmetic-geometric mean."""
    an, bn = max(a, b), min(a, b)
    c2 = an * an - bn * bn
    s, p = 0.5 * c2, 0.5
    while True:
        an, bn, cn = 0.5 * (an + bn), math.sqrt(an * bn), 0.5 * (an - bn)
        p *= 2.0
        s += p * cn * cn
        if cn < 1e-17 * an:
            break
    return 2.0 * math.pi / an * (max(a, b) ** 2 - s)


def ellipse_torsion(a: float, b: float) -> float:
    """``u = (1 - x²/a² - y²/b²) / (2 (1/a² + 1/b²))`` integrates to this."""
    return math.pi * a ** 3 * b ** 3 / (4.0 * (a * a + b * b))


def ellipse_lemma51(a: float, b: float, n: int = 4096) -> float:
    """``∫ |∇u|² κ ds`` for the exact ellipse torsion function.

    ``κ ds`` is the change of normal angle, so in the parameter φ of
    ``(a cos φ, b sin φ)`` the integrand is ``|∇u|² ab / (a² sin² φ + b² cos² φ)``.
    """
    phi = 2.0 * math.pi * np.arange(n) / n
    S = 1.0 / a ** 2 + 1.0 / b ** 2
    grad_sq = (np.cos(phi) ** 2 / a ** 2 + np.sin(phi) ** 2 / b ** 2) / S ** 2
    dtheta = a * b / (a * a * np.sin(phi) ** 2 + b * b * np.cos(phi) ** 2)
    return float(np.sum(grad_sq * dtheta) * 2.0 * math.pi / n)


def css_diagonal_xi(s: float) -> float:
    """Side of the rhombus with diagonals d1 (diagonal of R(s)) and 2/d1 (unit area)."""
    d1 = math.sqrt(s * s + 1.0 / (s * s))
    return 0.5 * math.sqrt(d1 * d1 + (2.0 / d1) ** 2)


J01 = bessel_j01()
SQUARE_T = rectangle_torsion_series(1.0, 1.0)
