"""Star bodies, sphere fields, gauges and rotations.

A star body ``D`` is described by a positive radial function ``r(u)`` on the
unit sphere.  Every body also exposes its gauge (Minkowski functional), so
that ``x`` lies in ``rho * D`` exactly when ``gauge(x) <= rho``.

Point arrays have shape ``(..., n)``; scalar results have shape ``(...,)``.
Membership predicates are written with plain elementwise arithmetic (no
``np.power``/``np.linalg``) so that the same point always gets the same
decision regardless of the batch it is evaluated in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi

# Directions used to validate positivity of user densities.
MESH_SIZE = {2: 4096, 3: 16384}


# ---------------------------------------------------------------------------
# Sphere fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SphereField:
    """A scalar function on the unit sphere ``S^{n-1}``.

    ``evaluator`` receives unit vectors of shape ``(..., n)`` and returns
    values of shape ``(...,)``.  ``breakpoints`` lists polar angles (n = 2)
    where the field is only piecewise smooth; quadrature splits there.
    ``constant_value`` is set for constant fields so lattice sums can skip
    evaluating them.
    """

    evaluator: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"
    smoothness: str = "smooth"
    positive: bool = False
    breakpoints: tuple[float, ...] = ()
    constant_value: float | None = None

    def __call__(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        out = np.asarray(self.evaluator(u), dtype=float)
        return np.broadcast_to(out, u.shape[:-1]).copy() if out.shape != u.shape[:-1] else out

    @classmethod
    def constant(cls, value: float, name: str | None = None) -> "SphereField":
        value = float(value)
        return cls(
            lambda u: np.full(np.shape(u)[:-1], value),
            name=name or f"const({value:g})",
            positive=value > 0,
            constant_value=value,
        )


def sphere_mesh(n: int, count: int | None = None) -> np.ndarray:
    """Quasi-uniform directions on ``S^{n-1}``.

    Equispaced angles for n = 2, a Fibonacci lattice for n = 3 and a seeded
    Gaussian cloud otherwise.
    """
    count = count or MESH_SIZE.get(n, 16384)
    if n == 2:
        t = TWO_PI * np.arange(count) / count
        return np.stack([np.cos(t), np.sin(t)], axis=-1)
    if n == 3:
        i = np.arange(count) + 0.5
        z = 1.0 - 2.0 * i / count
        phi = math.pi * (3.0 - math.sqrt(5.0)) * i
        s = np.sqrt(1.0 - z * z)
        return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=-1)
    g = np.random.default_rng(0).standard_normal((count, n))
    return g / np.linalg.norm(g, axis=-1, keepdims=True)


def _unit(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    r = np.sqrt(_sumsq(x))
    with np.errstate(invalid="ignore", divide="ignore"):
        return x / r[..., None], r


def _sumsq(x: np.ndarray) -> np.ndarray:
    s = x[..., 0] * x[..., 0]
    for j in range(1, x.shape[-1]):
        s = s + x[..., j] * x[..., j]
    return s


class HomogeneousExtension:
    """Weight-zero extension ``F(x) = f(x / |x|)`` of a sphere field."""

    def __init__(self, field: SphereField):
        self.field = field

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        u, r = _unit(x)
        if np.any(r == 0):
            raise ValueError("homogeneous extension is undefined at the origin")
        return self.field(u)

    def __repr__(self) -> str:
        return f"HomogeneousExtension({self.field.name})"


def homogeneous_extension(f: SphereField) -> HomogeneousExtension:
    return HomogeneousExtension(f)


def positive_decomposition(f: SphereField, n: int) -> tuple[SphereField, SphereField]:
    """Split ``f = f_plus - f_minus`` with both parts strictly positive.

    The shift is ``c = |min f| + 1`` where the minimum is taken over the
    quasi-uniform mesh.
    """
    c = abs(float(np.min(f(sphere_mesh(n))))) + 1.0
    f_plus = SphereField(
        lambda u: f(u) + c,
        name=f"{f.name}+{c:g}",
        smoothness=f.smoothness,
        positive=True,
        breakpoints=f.breakpoints,
    )
    return f_plus, SphereField.constant(c)


# ---------------------------------------------------------------------------
# Rotations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Rotation:
    matrix: np.ndarray
    id: str = "id"

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"rotation matrix must be square, got shape {m.shape}")
        n = m.shape[0]
        if np.max(np.abs(m.T @ m - np.eye(n))) > 1e-12:
            raise ValueError("rotation matrix is not orthogonal to 1e-12")
        if abs(np.linalg.det(m) - 1.0) > 1e-12:
            raise ValueError("rotation matrix does not have determinant +1")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @property
    def is_identity(self) -> bool:
        return bool(np.array_equal(self.matrix, np.eye(self.dimension)))

    @classmethod
    def identity(cls, n: int) -> "Rotation":
        return cls(np.eye(n), "id")

    @classmethod
    def from_angle(cls, angle: float, id: str | None = None) -> "Rotation":
        c, s = math.cos(angle), math.sin(angle)
        return cls(np.array([[c, -s], [s, c]]), id or f"angle={angle!r}")

    @classmethod
    def from_quaternion(cls, q: Sequence[float], id: str = "quat") -> "Rotation":
        a, b, c, d = np.asarray(q, dtype=float) / np.linalg.norm(q)
        m = np.array(
            [
                [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
                [2 * (b * c + a * d), a * a - b * b + c * c - d * d, 2 * (c * d - a * b)],
                [2 * (b * d - a * c), 2 * (c * d + a * b), a * a - b * b - c * c + d * d],
            ]
        )
        # polish to orthogonality at machine precision
        u, _, vt = np.linalg.svd(m)
        return cls(u @ vt, id)


def haar_rotations(n: int, count: int, seed: int) -> list[Rotation]:
    """Draw ``count`` Haar-distributed rotations of ``R^n`` (n = 2 or 3)."""
    rng = np.random.default_rng(seed)
    out = []
    if n == 2:
        for i, a in enumerate(rng.uniform(0.0, TWO_PI, size=count)):
            out.append(Rotation.from_angle(float(a), id=f"haar{seed}-{i}"))
        return out
    if n == 3:
        for i in range(count):
            out.append(Rotation.from_quaternion(_marsaglia_quaternion(rng), id=f"haar{seed}-{i}"))
        return out
    raise ValueError(f"Haar sampling implemented for n in (2, 3), got {n}")


def _marsaglia_quaternion(rng: np.random.Generator) -> np.ndarray:
    while True:
        x1, x2 = rng.uniform(-1.0, 1.0, size=2)
        s1 = x1 * x1 + x2 * x2
        if s1 < 1.0:
            break
    while True:
        x3, x4 = rng.uniform(-1.0, 1.0, size=2)
        s2 = x3 * x3 + x4 * x4
        if 0.0 < s2 < 1.0:
            break
    t = math.sqrt((1.0 - s1) / s2)
    return np.array([x1, x2, x3 * t, x4 * t])


# ---------------------------------------------------------------------------
# Star bodies
# ---------------------------------------------------------------------------


class StarBody:
    """Compact body with the origin in its interior.

    Subclasses provide ``radial`` and ``gauge``.  ``member`` is the
    membership predicate used by lattice enumeration; ``level_function`` is
    a convex function of the point whose sublevel sets are the dilates,
    used for scanline searches.
    """

    family = "custom"
    convex = True

    def __init__(self, dimension: int):
        if dimension < 2:
            raise ValueError(f"dimension must be >= 2, got {dimension}")
        self.dimension = int(dimension)

    # -- evaluation ---------------------------------------------------------
    def radial(self, u) -> np.ndarray:
        raise NotImplementedError

    def gauge(self, x) -> np.ndarray:
        raise NotImplementedError

    def level_function(self, x: np.ndarray) -> np.ndarray:
        return self.gauge(x)

    def level_value(self, level: float) -> float:
        return level

    def member(self, x, level: float) -> np.ndarray:
        return self.level_function(np.asarray(x, dtype=float)) <= self.level_value(level)

    def normal(self, x) -> np.ndarray:
        """Outward unit normal of the level set of the gauge through ``x``."""
        x = np.asarray(x, dtype=float)
        g = np.empty_like(x)
        h = 1e-6 * np.sqrt(_sumsq(x))[..., None]
        for j in range(self.dimension):
            e = np.zeros(self.dimension)
            e[j] = 1.0
            g[..., j] = (self.gauge(x + h * e) - self.gauge(x - h * e)) / (2.0 * h[..., 0])
        return g / np.sqrt(_sumsq(g))[..., None]

    # -- geometry summaries -------------------------------------------------
    @property
    def rmax(self) -> float:
        """Upper bound on ``radial`` (used to size enumeration boxes)."""
        raise NotImplementedError

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return ()

    def density(self) -> SphereField:
        """The density ``m = radial**n`` whose body is this one."""
        n = self.dimension
        return SphereField(
            lambda u: self.radial(u) ** n,
            name=f"density[{self.describe()}]",
            smoothness="piecewise-smooth" if self.breakpoints else "smooth",
            positive=True,
            breakpoints=self.breakpoints,
        )

    def describe(self) -> str:
        return self.family

    # -- scanline support ---------------------------------------------------
    def chord(self, p: np.ndarray, d: np.ndarray, level: float):
        """Real parameter interval ``{t : p + t d in level * D}`` per row.

        ``p`` has shape ``(R, n)``, ``d`` shape ``(n,)`` with ``|d| = 1``.
        Returns ``(lo, hi, center)``; rows with an empty chord have
        ``lo > hi`` and ``center`` near the minimiser of the gauge.
        """
        return _numeric_chord(self.level_function, p, d, self.level_value(level), level * self.rmax)


def _numeric_chord(fun, p, d, target, half_width, golden_iters=80, bisect_iters=60, tol=1e-7):
    pd = p @ d

    def f(t, rows=slice(None)):
        return fun(p[rows] + t[:, None] * d)

    # the foot of the perpendicular from the origin is usually inside;
    # golden-section search for the minimiser only where it is not
    center = -pd
    need = np.nonzero(~(f(center) <= target))[0]
    if need.size:
        center[need] = _golden_min(lambda t: f(t, need), -pd[need], half_width + 1.0, golden_iters)
    inside = f(center) <= target
    width = half_width + 2.0 + np.abs(pd + center)
    iters = min(bisect_iters, max(1, int(math.ceil(math.log2(float(np.max(width, initial=1.0)) / tol)))))

    def edge(sign):
        lo = center.copy()
        hi = center + sign * width
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            ok = f(mid) <= target
            lo = np.where(ok, mid, lo)
            hi = np.where(ok, hi, mid)
        return lo

    lo = np.where(inside, edge(-1.0), center + 0.5)
    hi = np.where(inside, edge(1.0), center - 0.5)
    return lo, hi, center


def _golden_min(f, mid, half, iters):
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a = mid - half
    b = mid + half
    c = b - invphi * (b - a)
    e = a + invphi * (b - a)
    fc, fe = f(c), f(e)
    for _ in range(iters):
        left = fc <= fe
        b = np.where(left, e, b)
        a = np.where(left, a, c)
        new = np.where(left, b - invphi * (b - a), a + invphi * (b - a))
        fnew = f(new)
        c, e, fc, fe = (
            np.where(left, new, e),
            np.where(left, c, new),
            np.where(left, fnew, fe),
            np.where(left, fc, fnew),
        )
    return 0.5 * (a + b)


class Superellipsoid(StarBody):
    """``{x : sum x_i^{2k} <= scale^{2k}}``; k = 1 is the Euclidean ball."""

    def __init__(self, k: int, dimension: int = 2, scale: float = 1.0):
        super().__init__(dimension)
        if int(k) != k or k < 1:
            raise ValueError(f"superellipsoid exponent k must be a positive integer, got {k}")
        if scale <= 0:
            raise ValueError("scale must be positive")
        self.k = int(k)
        self.scale = float(scale)
        self.family = "ball" if self.k == 1 else "superellipsoid"

    def power_sum(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        s = _ipow(x[..., 0], 2 * self.k)
        for j in range(1, x.shape[-1]):
            s = s + _ipow(x[..., j], 2 * self.k)
        return s

    def gauge(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.k == 1:
            return np.sqrt(_sumsq(x)) / self.scale
        m = np.max(np.abs(x), axis=-1)
        safe = np.where(m > 0, m, 1.0)
        g = m * self.power_sum(x / safe[..., None]) ** (1.0 / (2 * self.k))
        return np.where(m > 0, g, 0.0) / self.scale

    def radial(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return self.scale / self.power_sum(u) ** (1.0 / (2 * self.k))

    def level_function(self, x):
        return self.power_sum(x)

    def level_value(self, level):
        return (level * self.scale) ** (2 * self.k)

    def normal(self, x):
        x = np.asarray(x, dtype=float)
        g = _ipow(x, 2 * self.k - 1)
        return g / np.sqrt(_sumsq(g))[..., None]

    @property
    def rmax(self) -> float:
        return self.scale * self.dimension ** (0.5 - 1.0 / (2 * self.k))

    def chord(self, p, d, level):
        if self.k != 1:
            return super().chord(p, d, level)
        return _quadratic_chord(p, d, np.ones(self.dimension), level * self.scale)

    def describe(self) -> str:
        if self.k == 1:
            return f"ball(n={self.dimension}, radius={self.scale:g})"
        return f"superellipsoid(n={self.dimension}, k={self.k}, scale={self.scale:g})"


class Ball(Superellipsoid):
    def __init__(self, dimension: int = 2, radius: float = 1.0):
        super().__init__(1, dimension, radius)


class Ellipsoid(StarBody):
    family = "ellipsoid"

    def __init__(self, axes: Sequence[float]):
        axes = np.asarray(axes, dtype=float)
        super().__init__(axes.size)
        if np.any(axes <= 0):
            raise ValueError("ellipsoid axes must be positive")
        self.axes = axes

    def level_function(self, x):
        x = np.asarray(x, dtype=float)
        return _sumsq(x / self.axes)

    def level_value(self, level):
        return level * level

    def gauge(self, x):
        return np.sqrt(self.level_function(x))

    def radial(self, u):
        return 1.0 / self.gauge(u)

    def normal(self, x):
        g = np.asarray(x, dtype=float) / (self.axes * self.axes)
        return g / np.sqrt(_sumsq(g))[..., None]

    @property
    def rmax(self) -> float:
        return float(np.max(self.axes))

    def chord(self, p, d, level):
        return _quadratic_chord(p, d, self.axes, level)

    def describe(self) -> str:
        return "ellipsoid(axes=[" + ",".join(f"{a:g}" for a in self.axes) + "])"


def _quadratic_chord(p, d, axes, level):
    ds = d / axes
    ps = p / axes
    qa = float(ds @ ds)
    qb = ps @ ds
    qc = _sumsq(ps) - level * level
    center = -qb / qa
    disc = qb * qb - qa * qc
    root = np.sqrt(np.maximum(disc, 0.0)) / qa
    empty = disc < 0
    lo = np.where(empty, center + 0.5, center - root)
    hi = np.where(empty, center - 0.5, center + root)
    return lo, hi, center


class Polygon(StarBody):
    """Convex polygon ``{x : (n_i, x) <= c_i}`` with the origin inside.

    Normals are direction-number pairs and need not be unit length; the
    vertices are derived from consecutive facets.
    """

    family = "polygon"

    def __init__(self, normals: Sequence[Sequence[float]], offsets: Sequence[float]):
        super().__init__(2)
        normals = np.asarray(normals, dtype=float)
        offsets = np.asarray(offsets, dtype=float)
        if normals.ndim != 2 or normals.shape[1] != 2 or normals.shape[0] != offsets.size:
            raise ValueError("polygon needs m normals of shape (m, 2) and m offsets")
        if normals.shape[0] < 3:
            raise ValueError("polygon needs at least three facets")
        if np.any(offsets <= 0):
            raise ValueError("polygon offsets must be positive (origin must be interior)")
        order = np.argsort(np.arctan2(normals[:, 1], normals[:, 0]))
        self.normals = normals[order]
        self.offsets = offsets[order]
        ang = np.sort(np.arctan2(self.normals[:, 1], self.normals[:, 0]))
        gaps = np.diff(np.append(ang, ang[0] + TWO_PI))
        if np.any(gaps >= math.pi):
            raise ValueError("polygon facets do not bound a compact region")
        m = len(self.offsets)
        verts = []
        for i in range(m):
            j = (i + 1) % m
            a = np.array([self.normals[i], self.normals[j]])
            verts.append(np.linalg.solve(a, [self.offsets[i], self.offsets[j]]))
        self.vertices = np.array(verts)
        if np.any(self.gauge(self.vertices) > 1.0 + 1e-9):
            raise ValueError("polygon facets are redundant or do not form a convex polygon")

    def _forms(self, x):
        x = np.asarray(x, dtype=float)
        return [
            (self.normals[i, 0] * x[..., 0] + self.normals[i, 1] * x[..., 1]) / self.offsets[i]
            for i in range(len(self.offsets))
        ]

    def gauge(self, x):
        forms = self._forms(x)
        g = forms[0]
        for f in forms[1:]:
            g = np.maximum(g, f)
        return np.maximum(g, 0.0)

    def radial(self, u):
        return 1.0 / self.gauge(u)

    def normal(self, x):
        forms = np.stack(self._forms(x), axis=-1)
        top = np.sort(forms, axis=-1)
        g = top[..., -1]
        if np.any(top[..., -2] >= g - 1e-9 * np.abs(g)):
            bad = np.asarray(x)[top[..., -2] >= g - 1e-9 * np.abs(g)]
            raise ValueError(f"normal undefined at polygon vertex near {bad[0].tolist()}")
        nv = self.normals[np.argmax(forms, axis=-1)]
        return nv / np.sqrt(_sumsq(nv))[..., None]

    @property
    def rmax(self) -> float:
        return float(np.max(np.sqrt(_sumsq(self.vertices))))

    @property
    def breakpoints(self) -> tuple[float, ...]:
        a = np.mod(np.arctan2(self.vertices[:, 1], self.vertices[:, 0]), TWO_PI)
        return tuple(float(t) for t in np.sort(a))

    def chord(self, p, d, level):
        lo = np.full(p.shape[0], -np.inf)
        hi = np.full(p.shape[0], np.inf)
        for nv, c in zip(self.normals, self.offsets):
            s = float(nv @ d)
            t = level * c - (nv[0] * p[:, 0] + nv[1] * p[:, 1])
            if s > 0:
                hi = np.minimum(hi, t / s)
            elif s < 0:
                lo = np.maximum(lo, t / s)
            else:
                blocked = t < 0
                lo = np.where(blocked, np.inf, lo)
                hi = np.where(blocked, -np.inf, hi)
        finite = np.isfinite(lo) & np.isfinite(hi)
        with np.errstate(invalid="ignore"):
            center = np.where(finite, 0.5 * (lo + hi), -(p @ d))
        lo = np.where(finite, lo, center + 0.5)
        hi = np.where(finite, hi, center - 0.5)
        return lo, hi, center

    def describe(self) -> str:
        return f"polygon({len(self.offsets)} facets)"

    @classmethod
    def square(cls, half_side: float = 1.0) -> "Polygon":
        return cls([[1, 0], [0, 1], [-1, 0], [0, -1]], [half_side] * 4)


class DensityBody(StarBody):
    """Body with radial function ``m(u)**(1/n)`` for a positive density."""

    family = "custom"

    def __init__(self, m: SphereField, dimension: int, convex: bool | None = None):
        super().__init__(dimension)
        self.m = m
        mesh = sphere_mesh(dimension)
        r = self.radial(mesh)
        self._rmax = float(np.max(r)) * 1.02
        self.convex = _looks_convex(mesh, r) if convex is None else bool(convex)

    def radial(self, u):
        return self.m(u) ** (1.0 / self.dimension)

    def gauge(self, x):
        x = np.asarray(x, dtype=float)
        u, r = _unit(x)
        safe = np.where(r[..., None] > 0, u, 1.0 / math.sqrt(self.dimension))
        return np.where(r > 0, r / self.radial(safe), 0.0)

    @property
    def rmax(self) -> float:
        return self._rmax

    @property
    def breakpoints(self):
        return self.m.breakpoints

    def density(self) -> SphereField:
        return self.m

    def describe(self) -> str:
        return f"density-body({self.m.name}, n={self.dimension})"


def _looks_convex(mesh, r) -> bool:
    if mesh.shape[-1] != 2:
        return False
    pts = mesh * r[:, None]
    e = np.roll(pts, -1, axis=0) - pts
    cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
    return bool(np.all(cross >= -1e-12 * np.max(np.abs(cross))))


def _ipow(x, e: int):
    """``x**e`` for a positive integer ``e`` by repeated squaring."""
    result = None
    base = x
    while e:
        if e & 1:
            result = base if result is None else result * base
        e >>= 1
        if e:
            base = base * base
    return result


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def body_from_density(m: SphereField, n: int, convex: bool | None = None) -> DensityBody:
    """Body whose boundary is ``r = m(u)**(1/n)``.

    Raises ``ValueError`` naming the first mesh direction where ``m`` is not
    strictly positive.
    """
    if n < 2:
        raise ValueError(f"dimension must be >= 2, got {n}")
    mesh = sphere_mesh(n)
    vals = m(mesh)
    bad = ~(vals > 0)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise ValueError(
            f"density {m.name!r} is not positive at direction {mesh[i].tolist()} (value {vals[i]!r})"
        )
    return DensityBody(m, n, convex=convex)


def gauge(body: StarBody, x) -> np.ndarray:
    return body.gauge(x)


def radon_nikodym(body: StarBody, theta) -> np.ndarray:
    """Surface-to-sphere measure ratio ``|x|^n / (x, n(x))`` at ``x = r(u) u``."""
    u = np.asarray(theta, dtype=float)
    r = body.radial(u)
    nrm = body.normal(u * r[..., None])
    return r ** (body.dimension - 1) / np.sum(u * nrm, axis=-1)


def polar_directions(angles) -> np.ndarray:
    a = np.asarray(angles, dtype=float)
    return np.stack([np.cos(a), np.sin(a)], axis=-1)


__all__ = [
    "SphereField",
    "HomogeneousExtension",
    "Rotation",
    "StarBody",
    "Superellipsoid",
    "Ball",
    "Ellipsoid",
    "Polygon",
    "DensityBody",
    "body_from_density",
    "gauge",
    "homogeneous_extension",
    "positive_decomposition",
    "radon_nikodym",
    "haar_rotations",
    "sphere_mesh",
    "polar_directions",
]
