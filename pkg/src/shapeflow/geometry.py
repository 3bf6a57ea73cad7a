"""Polygons, affine deformation families and triangle configurations.

Edge ``i`` of a polygon joins vertex ``i`` to vertex ``i + 1 (mod N)`` and
carries tag ``tags[i]``.  Affine flows map edges to edges, so tags survive
:func:`apply_flow` unchanged.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateFlowTime, HypothesisViolated, InvalidPolygon, UnknownTag

AREA_EPS = 1e-12


def _shoelace(v: np.ndarray) -> float:
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _segments_cross(p: np.ndarray, q: np.ndarray) -> bool:
    """True if any pair of non-adjacent edges of the closed chain intersects."""
    n = len(p)
    if n <= 3:
        return False
    i, j = np.triu_indices(n, k=2)
    keep = ~((i == 0) & (j == n - 1))
    i, j = i[keep], j[keep]
    a, b, c, d = p[i], q[i], p[j], q[j]

    def orient(u, v, w):
        return (v[:, 0] - u[:, 0]) * (w[:, 1] - u[:, 1]) - (v[:, 1] - u[:, 1]) * (w[:, 0] - u[:, 0])

    o1, o2 = orient(a, b, c), orient(a, b, d)
    o3, o4 = orient(c, d, a), orient(c, d, b)
    return bool(np.any((o1 * o2 < 0) & (o3 * o4 < 0)))


@dataclass(frozen=True, eq=False)
class Polygon:
    """Simple counterclockwise polygon with one tag per edge."""

    vertices: np.ndarray
    tags: tuple = field(default=())

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise InvalidPolygon("need at least 3 two-dimensional vertices")
        if not np.all(np.isfinite(v)):
            raise InvalidPolygon("non-finite vertex")
        tags = tuple(self.tags) if self.tags else tuple(f"e{i}" for i in range(len(v)))
        if len(tags) != len(v):
            raise InvalidPolygon(f"{len(tags)} tags for {len(v)} edges")
        if len(set(tags)) != len(tags):
            raise InvalidPolygon("side tags must be unique")
        a = _shoelace(v)
        if not a > 0:
            raise InvalidPolygon(f"signed area {a:.3g} is not positive (clockwise or degenerate)")
        if _segments_cross(v, np.roll(v, -1, axis=0)):
            raise InvalidPolygon("polygon is not simple")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "tags", tags)

    def __len__(self) -> int:
        return len(self.vertices)

    @property
    def area(self) -> float:
        return _shoelace(self.vertices)

    @property
    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Start and end points of every edge, shape ``(N, 2)`` each."""
        return self.vertices, np.roll(self.vertices, -1, axis=0)

    @property
    def side_lengths(self) -> np.ndarray:
        a, b = self.edges
        return np.hypot(*(b - a).T)

    def side_length(self, tag) -> float:
        try:
            k = self.tags.index(tag)
        except ValueError:
            raise UnknownTag(f"no side tagged {tag!r}; known: {self.tags}") from None
        return float(self.side_lengths[k])

    @property
    def normals(self) -> np.ndarray:
        """Unit outer normal of every edge."""
        a, b = self.edges
        d = b - a
        return np.column_stack([d[:, 1], -d[:, 0]]) / np.hypot(*d.T)[:, None]

    @property
    def diameter(self) -> float:
        d = self.vertices[:, None, :] - self.vertices[None, :, :]
        return float(np.sqrt((d ** 2).sum(-1)).max())

    @property
    def centroid(self) -> np.ndarray:
        """Area centroid."""
        x, y = self.vertices.T
        xn, yn = np.roll(x, -1), np.roll(y, -1)
        c = x * yn - xn * y
        a = 0.5 * c.sum()
        return np.array([((x + xn) * c).sum(), ((y + yn) * c).sum()]) / (6.0 * a)

    def is_convex(self, rel_tol: float = 1e-12) -> bool:
        a, b = self.edges
        d = b - a
        dn = np.roll(d, -1, axis=0)
        cross = d[:, 0] * dn[:, 1] - d[:, 1] * dn[:, 0]
        return bool(np.all(cross >= -rel_tol * self.diameter ** 2))

    def transformed(self, matrix, offset=(0.0, 0.0)) -> "Polygon":
        m = np.asarray(matrix, dtype=float)
        return Polygon(self.vertices @ m.T + np.asarray(offset, dtype=float), self.tags)

    def translated(self, offset) -> "Polygon":
        return Polygon(self.vertices + np.asarray(offset, dtype=float), self.tags)

    def scaled(self, factor: float) -> "Polygon":
        return Polygon(self.vertices * factor, self.tags)


def area(p: Polygon) -> float:
    return p.area


# ---------------------------------------------------------------------------
# named shapes


def rectangle(width: float, height: float) -> Polygon:
    """``[0, width] x [0, height]`` with vertices A, B, C, D from the origin."""
    v = [(0.0, 0.0), (width, 0.0), (width, height), (0.0, height)]
    return Polygon(v, ("AB", "BC", "CD", "DA"))


def unit_square() -> Polygon:
    return rectangle(1.0, 1.0)


def rhombus(a: float, q: float = 1.0) -> Polygon:
    """Rhombus with vertices ``(-a, 0), (0, -a q), (a, 0), (0, a q)``."""
    v = [(-a, 0.0), (0.0, -a * q), (a, 0.0), (0.0, a * q)]
    return Polygon(v, ("AB", "BC", "CD", "DA"))


def regular_polygon(n: int, radius: float = 1.0, center=(0.0, 0.0)) -> Polygon:
    th = 2.0 * np.pi * np.arange(n) / n
    v = radius * np.column_stack([np.cos(th), np.sin(th)]) + np.asarray(center, dtype=float)
    return Polygon(v)


def equilateral(side: float = 1.0) -> Polygon:
    v = [(0.0, 0.0), (side, 0.0), (0.5 * side, 0.5 * math.sqrt(3.0) * side)]
    return Polygon(v, ("AB", "BC", "CA"))


def triangle(vertices) -> Polygon:
    v = np.asarray(vertices, dtype=float)
    if _shoelace(v) < 0:
        v = v[[0, 2, 1]]
    return Polygon(v, ("AB", "BC", "CA"))


# ---------------------------------------------------------------------------
# affine flows

FLOW_KINDS = (
    "height_stretch",
    "height_compress",
    "leg_stretch",
    "rhombus_diagonal",
    "rectangle_side",
    "translate",
    "scale",
)


@dataclass(frozen=True)
class AffineFlow:
    """A one-parameter affine deformation ``F_t(x) = M(t) x + c(t)``.

    The velocity field is ``eta(t, x) = L(t) x + d(t)`` and satisfies
    ``dF_t/dt (x) = eta(t, F_t(x))`` with ``F_0 = id``.
    """

    kind: str
    alpha: float | None = None
    direction: tuple | None = None

    def __post_init__(self):
        if self.kind not in FLOW_KINDS:
            raise ValueError(f"unknown flow kind {self.kind!r}")
        if self.kind == "leg_stretch":
            if self.alpha is None or not 0.0 < self.alpha < math.pi:
                raise ValueError("leg_stretch needs an aperture alpha in (0, pi)")
        if self.kind == "translate":
            if self.direction is None:
                raise ValueError("translate needs a direction")
            object.__setattr__(self, "direction", tuple(float(c) for c in self.direction))

    @classmethod
    def leg_stretch(cls, alpha: float) -> "AffineFlow":
        return cls("leg_stretch", alpha=float(alpha))

    @classmethod
    def translate(cls, direction) -> "AffineFlow":
        return cls("translate", direction=tuple(direction))

    def admissible(self, t: float) -> bool:
        if self.kind in ("height_stretch", "rhombus_diagonal", "leg_stretch", "rectangle_side"):
            return t > -1.0
        if self.kind == "height_compress":
            return t < 1.0
        return math.isfinite(t)

    def _check(self, t: float) -> None:
        if not self.admissible(t):
            raise DegenerateFlowTime(f"t={t} outside the admissible range of {self.kind}")

    def map_matrix(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """``(M, c)`` with ``F_t(x) = M x + c``."""
        self._check(t)
        k = self.kind
        zero = np.zeros(2)
        if k in ("height_stretch", "rhombus_diagonal"):
            return np.diag([1.0, 1.0 + t]), zero
        if k == "height_compress":
            return np.diag([1.0, 1.0 - t]), zero
        if k == "leg_stretch":
            cot = 1.0 / math.tan(self.alpha)
            return np.array([[1.0 + t, -t * cot], [0.0, 1.0]]), zero
        if k == "rectangle_side":
            return np.diag([1.0 + t, 1.0]), zero
        if k == "translate":
            return np.eye(2), t * np.asarray(self.direction)
        return math.exp(t) * np.eye(2), zero  # scale

    def velocity_matrix(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """``(L, d)`` with ``eta(t, x) = L x + d``."""
        self._check(t)
        k = self.kind
        zero = np.zeros(2)
        if k in ("height_stretch", "rhombus_diagonal"):
            return np.diag([0.0, 1.0 / (1.0 + t)]), zero
        if k == "height_compress":
            return np.diag([0.0, -1.0 / (1.0 - t)]), zero
        if k == "leg_stretch":
            cot = 1.0 / math.tan(self.alpha)
            return np.array([[1.0, -cot], [0.0, 0.0]]) / (1.0 + t), zero
        if k == "rectangle_side":
            return np.diag([1.0 / (1.0 + t), 0.0]), zero
        if k == "translate":
            return np.zeros((2, 2)), np.asarray(self.direction)
        return np.eye(2), zero

    def map(self, t: float, x) -> np.ndarray:
        m, c = self.map_matrix(t)
        return np.asarray(x, dtype=float) @ m.T + c

    def velocity(self, t: float, x) -> np.ndarray:
        m, c = self.velocity_matrix(t)
        return np.asarray(x, dtype=float) @ m.T + c


def apply_flow(f: AffineFlow, t: float, p: Polygon) -> Polygon:
    m, c = f.map_matrix(t)
    v = p.vertices @ m.T + c
    if abs(_shoelace(v)) < AREA_EPS or np.linalg.det(m) <= 0:
        raise DegenerateFlowTime(f"{f.kind} image at t={t} is degenerate")
    return Polygon(v, p.tags)


def flow_velocity(f: AffineFlow, t: float, x) -> np.ndarray:
    return f.velocity(t, x)


def normalize_area(p: Polygon, target: float) -> Polygon:
    """Rescale about the origin so the area equals ``target``."""
    if not target > 0:
        raise ValueError("target area must be positive")
    return p.scaled(math.sqrt(target / p.area))


# ---------------------------------------------------------------------------
# theorem configurations

THEOREMS = ("thm1_1", "thm1_2", "thm1_4")


def _dist(a, b) -> float:
    return float(math.hypot(a[0] - b[0], a[1] - b[1]))


def _angle(at, p, q) -> float:
    u = np.asarray(p) - np.asarray(at)
    v = np.asarray(q) - np.asarray(at)
    return float(math.atan2(abs(u[0] * v[1] - u[1] * v[0]), float(u @ v)))


@dataclass(frozen=True, eq=False)
class TriangleConfig:
    """Triangle with vertices in the coordinate placement a theorem assumes.

    ``thm1_1``: AB on the x-axis, C on the positive y-axis, |AB| > |BC| >= |AC|.
    ``thm1_2``: same placement, non-obtuse, |AB| < |BC| <= |AC|.
    ``thm1_4``: A at the origin, B on the positive x-axis, |AB| = |AC|.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    theorem: str
    rel_tol: float = 1e-9

    def __post_init__(self):
        for name in "ABC":
            v = np.array(getattr(self, name), dtype=float)
            v.setflags(write=False)
            object.__setattr__(self, name, v)
        if self.theorem not in THEOREMS:
            raise ValueError(f"unknown theorem {self.theorem!r}")
        self._validate()

    @property
    def ab(self) -> float:
        return _dist(self.A, self.B)

    @property
    def bc(self) -> float:
        return _dist(self.B, self.C)

    @property
    def ac(self) -> float:
        return _dist(self.A, self.C)

    @property
    def angles(self) -> tuple[float, float, float]:
        """Interior angles at A, B, C."""
        return (
            _angle(self.A, self.B, self.C),
            _angle(self.B, self.A, self.C),
            _angle(self.C, self.A, self.B),
        )

    @property
    def is_obtuse(self) -> bool:
        return max(self.angles) > math.pi / 2 + 1e-12

    def _validate(self) -> None:
        A, B, C = self.A, self.B, self.C
        cross = (B[0] - A[0]) * (C[1] - A[1]) - (B[1] - A[1]) * (C[0] - A[0])
        scale = max(self.ab, self.bc, self.ac)
        if abs(cross) <= 1e-12 * scale ** 2:
            raise HypothesisViolated("collinear vertices")
        tol = self.rel_tol * scale
        if self.theorem in ("thm1_1", "thm1_2"):
            if abs(A[1]) > tol or abs(B[1]) > tol or abs(C[0]) > tol or C[1] <= 0:
                raise HypothesisViolated("need AB on the x-axis and C on the positive y-axis")
            if not A[0] < 0.0 < B[0]:
                raise HypothesisViolated("need A left and B right of the origin")
            if self.theorem == "thm1_1":
                if not (self.ab > self.bc + tol and self.bc >= self.ac - tol):
                    raise HypothesisViolated(
                        f"thm1_1 needs |AB| > |BC| >= |AC|, got {self.ab:.6g}, {self.bc:.6g}, {self.ac:.6g}"
                    )
            else:
                if not (self.ab < self.bc - tol and self.bc <= self.ac + tol):
                    raise HypothesisViolated(
                        f"thm1_2 needs |AB| < |BC| <= |AC|, got {self.ab:.6g}, {self.bc:.6g}, {self.ac:.6g}"
                    )
                if self.is_obtuse:
                    raise HypothesisViolated("thm1_2 needs a non-obtuse triangle")
        else:
            if np.hypot(*A) > tol or abs(B[1]) > tol or B[0] <= 0 or C[1] <= 0:
                raise HypothesisViolated("need A at the origin, B on the positive x-axis, C above")
            if abs(self.ab - self.ac) > tol:
                raise HypothesisViolated(f"thm1_4 needs |AB| = |AC|, got {self.ab:.6g}, {self.ac:.6g}")

    @property
    def alpha(self) -> float:
        """Aperture at A."""
        return self.angles[0]

    def polygon(self) -> Polygon:
        return Polygon(np.array([self.A, self.B, self.C]), ("AB", "BC", "CA"))

    @classmethod
    def canonical(cls, vertices, theorem: str) -> "TriangleConfig":
        """Relabel and rigidly move an arbitrary triangle into the theorem's placement."""
        P = [np.asarray(v, dtype=float) for v in vertices]
        if len(P) != 3:
            raise HypothesisViolated("need exactly three vertices")
        if theorem == "thm1_4":
            best = None
            for i in range(3):
                a, b, c = P[i], P[(i + 1) % 3], P[(i + 2) % 3]
                gap = abs(_dist(a, b) - _dist(a, c))
                if best is None or gap < best[0]:
                    best = (gap, a, b, c)
            _, a, b, c = best
            side = _dist(a, b)
            alpha = _angle(a, b, c)
            return cls(
                np.zeros(2),
                np.array([side, 0.0]),
                side * np.array([math.cos(alpha), math.sin(alpha)]),
                theorem,
            )
        if theorem not in ("thm1_1", "thm1_2"):
            raise ValueError(f"unknown theorem {theorem!r}")
        # side opposite vertex k
        opp = [_dist(P[(k + 1) % 3], P[(k + 2) % 3]) for k in range(3)]
        k = int(np.argmax(opp)) if theorem == "thm1_1" else int(np.argmin(opp))
        c = P[k]
        u, w = P[(k + 1) % 3], P[(k + 2) % 3]
        # thm1_1: |BC| >= |AC|; thm1_2: |BC| <= |AC|
        if (theorem == "thm1_1") == (_dist(u, c) >= _dist(w, c)):
            b, a = u, w
        else:
            b, a = w, u
        e = (b - a) / _dist(a, b)
        foot = a + float((c - a) @ e) * e
        A = np.array([float((a - foot) @ e), 0.0])
        B = np.array([float((b - foot) @ e), 0.0])
        C = np.array([0.0, _dist(c, foot)])
        return cls(A, B, C, theorem)


def critical_time(cfg: TriangleConfig, kind: str) -> float:
    """Time at which |BC_t| reaches |BA| under the height stretch or compress flow."""
    b, c = float(cfg.B[0]), float(cfg.C[1])
    ab = cfg.ab
    if kind == "stretch":
        if cfg.theorem != "thm1_1":
            raise HypothesisViolated("stretch critical time needs a thm1_1 configuration")
        return math.sqrt(ab * ab - b * b) / c - 1.0
    if kind == "compress":
        if cfg.theorem != "thm1_2":
            raise HypothesisViolated("compress critical time needs a thm1_2 configuration")
        return 1.0 - math.sqrt(ab * ab - b * b) / c
    raise ValueError(f"kind must be 'stretch' or 'compress', not {kind!r}")


def median_cot_theta(alpha: float, beta: float) -> float:
    """cot of the angle between AB and the median from A, ``2 cot(alpha) + cot(beta)``."""
    return 2.0 / math.tan(alpha) + 1.0 / math.tan(beta)


def random_triangle(theorem: str, rng: np.random.Generator, margin: float = 0.05) -> TriangleConfig:
    """Draw a triangle satisfying a theorem's hypothesis.

    The strict side inequality of the hypothesis holds with relative gap ``margin``.
    """
    if theorem == "thm1_4":
        alpha = rng.uniform(0.25, 2.6)
        return TriangleConfig(np.zeros(2), (1.0, 0.0), (math.cos(alpha), math.sin(alpha)), theorem)
    for _ in range(100_000):
        if theorem == "thm1_1":
            xa = -rng.uniform(0.2, 1.0)
            xb = rng.uniform(-xa, 1.5)
            c = rng.uniform(0.2, 1.5)
            if xb - xa > (1.0 + margin) * math.hypot(xb, c):
                return TriangleConfig((xa, 0.0), (xb, 0.0), (0.0, c), theorem)
        elif theorem == "thm1_2":
            xb = rng.uniform(0.2, 1.0)
            xa = -xb * rng.uniform(1.0, 2.5)
            c = rng.uniform(0.2, 2.5)
            ok = (xb - xa) * (1.0 + margin) < math.hypot(xb, c) and c * c >= -xa * xb
            if ok:
                return TriangleConfig((xa, 0.0), (xb, 0.0), (0.0, c), theorem)
        else:
            raise ValueError(f"unknown theorem {theorem!r}")
    raise RuntimeError("could not draw a triangle")  # pragma: no cover


# ---------------------------------------------------------------------------
# plain-text polygon I/O


def read_polygon(path) -> Polygon:
    """Read ``x y [tag]`` lines; ``#`` starts a comment."""
    verts, tags = [], []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (2, 3):
            raise InvalidPolygon(f"{path}:{lineno}: expected 'x y [tag]'")
        try:
            verts.append((float(parts[0]), float(parts[1])))
        except ValueError:
            raise InvalidPolygon(f"{path}:{lineno}: coordinates must be numbers") from None
        tags.append(parts[2] if len(parts) == 3 else None)
    if any(t is None for t in tags):
        if any(t is not None for t in tags):
            raise InvalidPolygon(f"{path}: tag either every line or none")
        tags = []
    return Polygon(np.array(verts), tuple(tags))


def format_polygon(p: Polygon) -> str:
    return "".join(f"{x!r} {y!r} {tag}\n" for (x, y), tag in zip(p.vertices.tolist(), p.tags))


def write_polygon(p: Polygon, path) -> None:
    Path(path).write_text(format_polygon(p))


def polygon_from_points(points: Iterable[Sequence[float]], tags=()) -> Polygon:
    return Polygon(np.asarray(list(points), dtype=float), tuple(tags))
