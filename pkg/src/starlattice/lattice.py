"""Weighted lattice-point counts in dilates of star bodies.

Enumeration walks "rows": every integer choice of the outer coordinates
``N[1:]`` fixes a line in the (rotated) lattice, and the admissible values of
the innermost coordinate ``N[0]`` form an integer interval when the body is
convex.  Rows are grouped into slabs of the outermost coordinate; each slab
is summed with an exactly rounded sum and slab totals are combined by a
fixed pairwise tree, so results never depend on the number of workers.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .geometry import HomogeneousExtension, Rotation, StarBody, Superellipsoid, _ipow

TOL_REL = 1e-12
BOUNDARY_REL = 1e-9
DEFAULT_SLABS = 16
MAX_ROWS = 50_000_000
MAX_POINTS = 200_000_000
_CHUNK_POINTS = 1 << 21
_INT64_SAFE = 1 << 62


class BudgetError(RuntimeError):
    """The enumeration box for a request exceeds the configured budget."""

    def __init__(self, rho: float, needed: int, budget: int, what: str = "rows"):
        super().__init__(f"rho={rho!r} needs {needed} {what}, budget is {budget}")
        self.rho = rho
        self.needed = needed
        self.budget = budget


@dataclass(frozen=True)
class CountRequest:
    body: StarBody
    rho: float
    rotation: Rotation | None = None
    weight: HomogeneousExtension | None = None  # None means F == 1
    tol_rel: float = TOL_REL

    def __post_init__(self):
        if not self.rho >= 0:
            raise ValueError(f"rho must be nonnegative, got {self.rho!r}")
        if self.rotation is None:
            object.__setattr__(self, "rotation", Rotation.identity(self.body.dimension))
        if self.rotation.dimension != self.body.dimension:
            raise ValueError("rotation and body dimensions differ")
        if self.body.dimension not in (2, 3, 4):
            raise ValueError(f"lattice enumeration supports n in (2, 3, 4), got {self.body.dimension}")


@dataclass(frozen=True)
class CountResult:
    rho: float
    rotation_id: str
    weighted_count: float
    point_count: int
    boundary_hits: int


@dataclass(frozen=True)
class SlabSum:
    weighted: float
    count: int
    hits: int


def discrete_measure_value(result: CountResult, n: int) -> float:
    """Rescaled action ``(n / rho^n) * weighted_count``."""
    if result.rho <= 0:
        raise ValueError("discrete measure value needs rho > 0")
    return n / result.rho**n * result.weighted_count


# ---------------------------------------------------------------------------
# Row scanning
# ---------------------------------------------------------------------------


class _Scanner:
    def __init__(self, req: CountRequest):
        self.req = req
        self.body = req.body
        self.n = req.body.dimension
        self.gamma = req.rotation.matrix
        self.rho = float(req.rho)
        self.level = self.rho * (1.0 + req.tol_rel)
        self.levels_b = (self.rho * (1.0 - BOUNDARY_REL), self.rho * (1.0 + BOUNDARY_REL))
        self.half = int(math.ceil(self.rho * (1.0 + 1e-9) * self.body.rmax)) + 1
        self.exact = isinstance(self.body, Superellipsoid) and req.rotation.is_identity
        if self.exact:
            e = 2 * self.body.k
            sc = Fraction(self.body.scale)
            self.thresholds = [
                math.floor((Fraction(r) * sc) ** e) for r in (self.rho, *self.levels_b)
            ]
            self.big = max(self.thresholds) >= _INT64_SAFE or self.n * (self.half + 1) ** e >= _INT64_SAFE

    # outer coordinates of each row, columns N[1], ..., N[n-1]
    def rows(self, lo: int, hi: int) -> np.ndarray:
        h = self.half
        last = np.arange(lo, hi + 1, dtype=np.int64)
        if self.n == 2:
            return last[:, None]
        mid = np.arange(-h, h + 1, dtype=np.int64)
        # outermost coordinate varies slowest
        grids = np.meshgrid(last, *([mid] * (self.n - 2)), indexing="ij")
        out = np.stack([g.ravel() for g in grids[::-1]], axis=-1)
        keep = np.sum(out * out, axis=-1) <= h * h
        return out[keep]

    def offsets(self, rows: np.ndarray) -> np.ndarray:
        """Rotated contribution of the outer coordinates, shape (R, n)."""
        g = self.gamma
        p = np.empty((rows.shape[0], self.n))
        for j in range(self.n):
            acc = g[j, 1] * rows[:, 0].astype(float)
            for i in range(2, self.n):
                acc = acc + g[j, i] * rows[:, i - 1].astype(float)
            p[:, j] = acc
        return p

    def points(self, x: np.ndarray, p: np.ndarray) -> np.ndarray:
        g = self.gamma
        return g[:, 0] * x.astype(float)[:, None] + p

    # ---- membership --------------------------------------------------------
    def member(self, lattice: np.ndarray, which: int = 0) -> np.ndarray:
        """Inclusion decision for integer points ``lattice`` of shape (M, n)."""
        lattice = np.asarray(lattice, dtype=np.int64)
        if self.exact:
            s = self._int_power_sum(lattice)
            return s <= self.thresholds[which]
        level = (self.level, *self.levels_b)[which]
        p = self.offsets(lattice[:, 1:])
        return self.body.member(self.points(lattice[:, 0], p), level)

    def _int_power_sum(self, a: np.ndarray):
        e = 2 * self.body.k
        a = a.astype(object) if self.big else a
        s = _ipow(a[:, 0], e)
        for j in range(1, a.shape[1]):
            s = s + _ipow(a[:, j], e)
        return s

    # ---- intervals -------------------------------------------------------
    def intervals(self, rows: np.ndarray, which: int = 0):
        if self.exact:
            return self._exact_intervals(rows, which)
        level = (self.level, *self.levels_b)[which]
        p = self.offsets(rows)
        d = self.gamma[:, 0]
        lo, hi, center = self.body.chord(p, d, level)
        return self._correct(p, level, lo, hi, center)

    def _exact_intervals(self, rows, which):
        t = self.thresholds[which]
        e = 2 * self.body.k
        s = self._int_power_sum(rows) if rows.shape[1] else np.zeros(rows.shape[0], dtype=np.int64)
        rem = t - s
        ok = rem >= 0
        if self.big:
            rem = np.where(ok, rem, 0)
            rem_f = np.array([float(v) for v in rem])
        else:
            rem = np.where(ok, rem, 0).astype(np.int64)
            rem_f = rem.astype(float)
        guess = np.floor(rem_f ** (1.0 / e))
        b = np.array([int(v) for v in guess], dtype=object) if self.big else guess.astype(np.int64)
        for _ in range(8):
            up = _ipow(b + 1, e) <= rem
            if not np.any(up):
                break
            b = np.where(up, b + 1, b)
        for _ in range(8):
            down = _ipow(b, e) > rem
            if not np.any(down):
                break
            b = np.where(down, b - 1, b)
        b = np.asarray(b, dtype=np.int64)
        b = np.where(ok, b, -1)
        a = np.where(ok, -b, 0)
        return a, b

    def _correct(self, p, level, lo, hi, center):
        body = self.body
        d = self.gamma[:, 0]
        big = float(self.half + 2)
        lo = np.clip(lo, -big, big)
        hi = np.clip(hi, -big, big)
        center = np.clip(center, -big, big)
        a = np.ceil(lo).astype(np.int64)
        b = np.floor(hi).astype(np.int64)
        empty = a > b
        # rows with no integer in the chord: probe next to the chord
        guess = np.round(center).astype(np.int64)
        a = np.where(empty, guess, a)
        b = np.where(empty, guess - 1, b)

        def mem(x, idx):
            return body.member(self.points(x, p[idx]), level)

        b = _adjust_masked(b, +1, lambda v, i: mem(v[i] + 1, i))
        b = _adjust_masked(b, -1, lambda v, i: (v[i] >= a[i]) & ~mem(v[i], i))
        a = _adjust_masked(a, -1, lambda v, i: mem(v[i] - 1, i))
        a = _adjust_masked(a, +1, lambda v, i: (v[i] <= b[i]) & ~mem(v[i], i))
        return a, b


def _adjust_masked(vals, step, predicate, lim=64):
    vals = vals.copy()
    idx = np.arange(vals.size)
    for _ in range(lim):
        if idx.size == 0:
            return vals
        move = predicate(vals, idx)
        idx = idx[move]
        vals[idx] += step
    raise RuntimeError("scanline correction did not converge")


def _fsum_chunks(chunks) -> float:
    return math.fsum(itertools.chain.from_iterable(c.tolist() for c in chunks))


def _slab_sum(scan: _Scanner, lo: int, hi: int) -> SlabSum:
    if hi < lo:
        return SlabSum(0.0, 0, 0)
    rows = scan.rows(lo, hi)
    if rows.shape[0] == 0:
        return SlabSum(0.0, 0, 0)
    if not scan.body.convex and not scan.exact:
        return _slab_sum_dense(scan, rows)
    a, b = scan.intervals(rows, 0)
    lengths = np.maximum(b - a + 1, 0)
    origin_row = np.all(rows == 0, axis=1)
    has_origin = origin_row & (a <= 0) & (b >= 0)
    count = int(lengths.sum()) - int(has_origin.sum())

    a_in, b_in = scan.intervals(rows, 1)
    a_out, b_out = scan.intervals(rows, 2)
    hits = int(np.maximum(b_out - a_out + 1, 0).sum() - np.maximum(b_in - a_in + 1, 0).sum())

    if scan.req.weight is None:
        return SlabSum(float(count), count, hits)
    p = scan.offsets(rows)
    weighted = _fsum_chunks(_weighted_chunks(scan, rows, a, lengths, p, origin_row))
    return SlabSum(weighted, count, hits)


def _weighted_chunks(scan, rows, a, lengths, p, origin_row):
    nz = np.nonzero(lengths)[0]
    start = 0
    while start < nz.size:
        csum = np.cumsum(lengths[nz[start:]])
        stop = start + max(1, int(np.searchsorted(csum, _CHUNK_POINTS, side="right")))
        sel = nz[start:stop]
        L = lengths[sel]
        offs = np.repeat(np.cumsum(L) - L, L)
        x = np.repeat(a[sel], L) + (np.arange(int(L.sum())) - offs)
        keep = ~(np.repeat(origin_row[sel], L) & (x == 0))
        pts = scan.points(x, np.repeat(p[sel], L, axis=0))[keep]
        yield np.asarray(scan.req.weight(pts), dtype=float)
        start = stop


def _slab_sum_dense(scan: _Scanner, rows: np.ndarray) -> SlabSum:
    h = scan.half
    xs = np.arange(-h, h + 1, dtype=np.int64)
    count = 0
    hits = 0
    chunks = []
    step = max(1, _CHUNK_POINTS // xs.size)
    for s in range(0, rows.shape[0], step):
        r = rows[s : s + step]
        p = np.repeat(scan.offsets(r), xs.size, axis=0)
        x = np.tile(xs, r.shape[0])
        pts = scan.points(x, p)
        inside = scan.body.member(pts, scan.level)
        not_origin = ~(np.repeat(np.all(r == 0, axis=1), xs.size) & (x == 0))
        inside &= not_origin
        count += int(inside.sum())
        g = scan.body.gauge(pts)
        hits += int(np.sum(np.abs(g - scan.rho) <= BOUNDARY_REL * scan.rho))
        if scan.req.weight is not None:
            chunks.append(np.asarray(scan.req.weight(pts[inside]), dtype=float))
    weighted = _fsum_chunks(chunks) if scan.req.weight is not None else float(count)
    return SlabSum(weighted, count, hits)


# ---------------------------------------------------------------------------
# Public API
# ---------------------------------------------------------------------------


def default_slabs(req: CountRequest, num_slabs: int = DEFAULT_SLABS) -> list[tuple[int, int]]:
    """Partition of the outermost coordinate range into contiguous slabs."""
    h = _Scanner(req).half
    edges = np.linspace(-h, h + 1, num_slabs + 1)
    edges = np.unique(np.round(edges).astype(int))
    return [(int(lo), int(hi) - 1) for lo, hi in zip(edges[:-1], edges[1:])]


def _check_partition(slabs, h):
    ordered = sorted(slabs)
    for (lo1, hi1), (lo2, hi2) in zip(ordered, ordered[1:]):
        if lo2 <= hi1:
            raise ValueError(f"slabs {(lo1, hi1)} and {(lo2, hi2)} overlap")
        if lo2 != hi1 + 1:
            raise ValueError(f"gap between slabs {(lo1, hi1)} and {(lo2, hi2)}")
    if ordered[0][0] > -h or ordered[-1][1] < h:
        raise ValueError(f"slabs do not cover the outer range [{-h}, {h}]")


def _budget(req: CountRequest, scan: _Scanner, max_rows: int, max_points: int):
    side = 2 * scan.half + 1
    rows = side ** (scan.n - 1)
    if rows > max_rows:
        raise BudgetError(req.rho, rows, max_rows, "rows")
    dense = not scan.body.convex and not scan.exact
    if req.weight is not None or dense:
        pts = side**scan.n
        if pts > max_points:
            raise BudgetError(req.rho, pts, max_points, "points")


def enumerate_slab(req: CountRequest, slab: tuple[int, int]) -> SlabSum:
    """Partial sum over rows whose outermost coordinate lies in ``slab``.

    ``slab`` is an inclusive integer range; values outside the enumeration
    box contribute nothing.
    """
    lo, hi = int(slab[0]), int(slab[1])
    scan = _Scanner(req)
    return _slab_sum(scan, max(lo, -scan.half), min(hi, scan.half))


def pairwise_sum(values):
    values = list(values)
    if not values:
        return 0.0
    if len(values) == 1:
        return values[0]
    mid = len(values) // 2
    return pairwise_sum(values[:mid]) + pairwise_sum(values[mid:])


def weighted_count(
    req: CountRequest,
    slabs: list[tuple[int, int]] | None = None,
    workers: int = 1,
    max_rows: int = MAX_ROWS,
    max_points: int = MAX_POINTS,
) -> CountResult:
    """Sum of ``F(gamma N)`` over nonzero integer ``N`` with ``gamma N`` in ``rho D``."""
    scan = _Scanner(req)
    _budget(req, scan, max_rows, max_points)
    if slabs is None:
        slabs = default_slabs(req)
    else:
        _check_partition(slabs, scan.half)
        slabs = sorted(slabs)

    def job(s):
        return _slab_sum(scan, max(s[0], -scan.half), min(s[1], scan.half))

    if workers > 1 and len(slabs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, slabs))
    else:
        parts = [job(s) for s in slabs]
    count = sum(p.count for p in parts)
    hits = sum(p.hits for p in parts)
    weighted = float(count) if req.weight is None else pairwise_sum([p.weighted for p in parts])
    return CountResult(float(req.rho), req.rotation.id, weighted, count, hits)


def lattice_points(req: CountRequest) -> np.ndarray:
    """All nonzero included lattice points ``N`` (unrotated), shape (M, n)."""
    scan = _Scanner(req)
    _budget(req, scan, MAX_ROWS, MAX_POINTS)
    rows = scan.rows(-scan.half, scan.half)
    if not scan.body.convex and not scan.exact:
        pts = _box(scan)
        return pts[scan.member(pts) & np.any(pts != 0, axis=1)]
    a, b = scan.intervals(rows, 0)
    L = np.maximum(b - a + 1, 0)
    offs = np.repeat(np.cumsum(L) - L, L)
    x = np.repeat(a, L) + (np.arange(int(L.sum())) - offs)
    pts = np.column_stack([x, np.repeat(rows, L, axis=0)])
    return pts[np.any(pts != 0, axis=1)]


def _box(scan: _Scanner) -> np.ndarray:
    h = scan.half
    axes = [np.arange(-h, h + 1, dtype=np.int64)] * scan.n
    grid = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grid], axis=-1)


def brute_force_points(req: CountRequest) -> np.ndarray:
    """Reference scan: test every point of the enumeration box."""
    scan = _Scanner(req)
    pts = _box(scan)
    return pts[scan.member(pts) & np.any(pts != 0, axis=1)]


__all__ = [
    "BudgetError",
    "CountRequest",
    "CountResult",
    "SlabSum",
    "weighted_count",
    "discrete_measure_value",
    "enumerate_slab",
    "default_slabs",
    "lattice_points",
    "brute_force_points",
    "pairwise_sum",
]
