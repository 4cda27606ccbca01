"""Decay of Fourier transforms of planar boundary curves and shells.

``surface_transform`` integrates ``g(x) exp(2 pi i (x, y))`` over the
boundary curve with respect to arc length, parametrised by the polar angle
(``ds = Phi(theta) d theta``).  ``shell_transform`` integrates a weight-zero
homogeneous ``F`` over the shell between gauge levels 1/2 and 1.
Both resolve the oscillation with at least 64 nodes per period.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .analysis import _loglog
from .geometry import (
    HomogeneousExtension,
    SphereField,
    StarBody,
    homogeneous_extension,
    radon_nikodym,
)
from .quadrature import _arcs_rule

TWO_PI = 2.0 * math.pi
NODES_PER_PERIOD = 64
R_MAX = 512.0
_MIN_NODES = 256
_SERIES_CUTOFF = 0.5
_PERIOD_BLOCK = 16
_CHUNK = 16


class TransformBudgetError(RuntimeError):
    pass


def _node_count(body: StarBody, radius: float, per_period: int) -> int:
    # rounded up to blocks of 16 periods so nearby |y| share a node set
    periods = 2.0 * body.rmax * radius
    return _MIN_NODES + per_period * _PERIOD_BLOCK * int(math.ceil(periods / _PERIOD_BLOCK))


class _CurveNodes:
    """Angular nodes on the boundary: points, unit directions and weights."""

    def __init__(self, body: StarBody, count: int):
        if body.dimension != 2:
            raise ValueError("Fourier transforms are implemented for planar bodies (n = 2)")
        if body.breakpoints:
            t, w = _arcs_rule(body.breakpoints, count)
        else:
            t = TWO_PI * np.arange(count) / count
            w = np.full(count, TWO_PI / count)
        self.u = np.stack([np.cos(t), np.sin(t)], axis=-1)
        self.r = body.radial(self.u)
        self.x = self.u * self.r[:, None]
        self.w = w
        self.size = t.size
        self.cache: dict = {}


@lru_cache(maxsize=16)
def _nodes(body: StarBody, count: int) -> _CurveNodes:
    return _CurveNodes(body, count)


def _check_budget(radius: float, r_max: float):
    if radius > r_max:
        raise TransformBudgetError(f"|y| = {radius:g} exceeds the transform budget {r_max:g}")


def _as_points(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    return y.reshape(1, 2) if y.ndim == 1 else y


def _batched(body, ys, per_period, r_max, kernel):
    """Evaluate ``kernel`` on groups of points sharing a node count.

    Every value depends only on its own ``y``: the node count is a function
    of ``|y|`` and kernels reduce each row separately.
    """
    ys = _as_points(ys)
    radii = np.sqrt(np.sum(ys * ys, axis=1))
    if radii.size:
        _check_budget(float(radii.max()), r_max)
    out = np.empty(ys.shape[0], dtype=complex)
    counts = np.array([_node_count(body, float(r), per_period) for r in radii], dtype=np.int64)
    for count in np.unique(counts):
        group = np.nonzero(counts == count)[0]
        nodes = _nodes(body, int(count))
        for s in range(0, group.size, _CHUNK):
            idx = group[s : s + _CHUNK]
            out[idx] = kernel(nodes, ys[idx])
    return out


def _dot(ys, pts):
    return ys[:, 0:1] * pts[None, :, 0] + ys[:, 1:2] * pts[None, :, 1]


def _rowsum(values, weights):
    return np.sum(values * weights, axis=-1)


def surface_transform(
    body: StarBody,
    g: SphereField | None,
    y,
    nodes_per_period: int = NODES_PER_PERIOD,
    r_max: float = R_MAX,
):
    """``integral over the boundary of g(x) exp(2 pi i (x, y)) ds``.

    ``g`` is evaluated at the direction of ``x`` (``None`` means 1).  ``y``
    may be a single point or an array of points of shape (M, 2).
    """
    single = np.asarray(y).ndim == 1

    def kernel(nodes: _CurveNodes, ys):
        key = ("surface", id(g))
        weights = nodes.cache.get(key)
        if weights is None:
            weights = nodes.w * radon_nikodym(body, nodes.u)
            if g is not None:
                weights = weights * g(nodes.u)
            nodes.cache[key] = weights
        phase = TWO_PI * _dot(ys, nodes.x)
        return _rowsum(np.cos(phase), weights) + 1j * _rowsum(np.sin(phase), weights)

    out = _batched(body, y, nodes_per_period, r_max, kernel)
    return out[0] if single else out


def _radial_moment(a, b, kappa):
    """``integral_a^b s exp(i kappa s) ds`` for ``a = b / 2``, elementwise.

    Returns real and imaginary parts.
    """
    a, b, kappa = np.broadcast_arrays(a, b, kappa)
    small = np.abs(kappa * b) < _SERIES_CUTOFF
    k = np.where(small, 1.0, kappa)
    inv = 1.0 / k
    inv2 = inv * inv
    ca, sa = np.cos(k * a), np.sin(k * a)
    cb = 2.0 * ca * ca - 1.0
    sb = 2.0 * sa * ca
    # exp(i k s) * (s / (i k) + 1 / k^2), real and imaginary parts, b minus a
    re = (cb - ca) * inv2 + (sb * b - sa * a) * inv
    im = (sb - sa) * inv2 - (cb * b - ca * a) * inv
    if np.any(small):
        idx = np.nonzero(small)
        ks, as_, bs = kappa[idx], a[idx], b[idx]
        acc = np.zeros(ks.shape, dtype=complex)
        term = np.ones(ks.shape, dtype=complex)
        for j in range(30):
            acc += term * (bs ** (j + 2) - as_ ** (j + 2)) / (j + 2)
            term = term * (1j * ks) / (j + 1)
        re[idx] = acc.real
        im[idx] = acc.imag
    return re, im


def shell_transform(
    body: StarBody,
    F: HomogeneousExtension | SphereField | None,
    y,
    nodes_per_period: int = NODES_PER_PERIOD,
    r_max: float = R_MAX,
    radial: str = "exact",
    radial_nodes: int | None = None,
):
    """``integral over D - D/2 of F(x) exp(2 pi i (x, y)) dx``.

    In polar form the radial factor is ``integral s exp(i kappa s) ds`` over
    ``[r/2, r]``; ``radial="exact"`` evaluates it in closed form and
    ``radial="gauss"`` by Gauss-Legendre with enough nodes for the
    oscillation.
    """
    if isinstance(F, SphereField):
        F = homogeneous_extension(F)
    single = np.asarray(y).ndim == 1

    def kernel(nodes: _CurveNodes, ys):
        fw = nodes.w if F is None else nodes.w * F.field(nodes.u)
        kappa = TWO_PI * _dot(ys, nodes.u)
        a = 0.5 * nodes.r
        b = nodes.r
        if radial == "exact":
            re, im = _radial_moment(a[None, :], b[None, :], kappa)
            return _rowsum(re, fw) + 1j * _rowsum(im, fw)
        elif radial == "gauss":
            span = float(np.max(np.abs(kappa))) * float(np.max(b - a)) if kappa.size else 0.0
            q = radial_nodes or max(16, int(math.ceil(0.5 * span + 2.0 * math.sqrt(span + 1.0))) + 16)
            t, wt = np.polynomial.legendre.leggauss(q)
            s = 0.5 * (a + b)[:, None] + 0.5 * (b - a)[:, None] * t[None, :]
            ws = 0.5 * (b - a)[:, None] * wt[None, :]
            rad = np.sum((ws * s)[None, :, :] * np.exp(1j * kappa[:, :, None] * s[None, :, :]), axis=-1)
        else:
            raise ValueError(f"unknown radial rule {radial!r}")
        return _rowsum(rad, fw)

    out = _batched(body, y, nodes_per_period, r_max, kernel)
    return out[0] if single else out


# ---------------------------------------------------------------------------
# Decay profiles
# ---------------------------------------------------------------------------


@dataclass
class DecayProfile:
    direction: np.ndarray
    r_grid: np.ndarray
    magnitudes: np.ndarray
    slope: float
    kind: str
    j_vanishing: int
    peaks: int
    normalized_sup: float

    @property
    def fitted_alpha(self) -> float:
        """Decay exponent ``alpha`` in ``|Psi| ~ r^(-alpha)``."""
        return -self.slope


def local_maxima(values: np.ndarray) -> np.ndarray:
    v = np.asarray(values)
    inner = (v[1:-1] >= v[:-2]) & (v[1:-1] > v[2:])
    return np.nonzero(inner)[0] + 1


def peak_slope(r: np.ndarray, magnitudes: np.ndarray) -> tuple[float, int]:
    """Log-log slope through the local maxima of ``magnitudes``."""
    idx = local_maxima(magnitudes)
    idx = idx[magnitudes[idx] > 0]
    if idx.size < 2:
        raise ValueError("fewer than two local maxima; refine the r grid")
    slope, _, _ = _loglog(r[idx], magnitudes[idx])
    return slope, int(idx.size)


def default_r_grid(start: float = 16.0, stop: float = 256.0, step: float = 0.05) -> np.ndarray:
    return np.arange(start, stop + 0.5 * step, step)


def decay_sweep(
    body: StarBody,
    directions,
    r_grid=None,
    kind: str = "surface",
    g: SphereField | None = None,
) -> list[DecayProfile]:
    """Sample ``|Psi(r, phi)|`` along each direction and fit the decay."""
    if kind not in ("surface", "shell"):
        raise ValueError("kind must be 'surface' or 'shell'")
    r = default_r_grid() if r_grid is None else np.asarray(r_grid, dtype=float)
    if np.any(np.diff(r) <= 0) or r[0] <= 0:
        raise ValueError("r grid must be positive and strictly increasing")
    generic = 1.5 if kind == "shell" else 0.5
    out = []
    for phi in np.atleast_2d(np.asarray(directions, dtype=float)):
        phi = phi / np.linalg.norm(phi)
        ys = r[:, None] * phi[None, :]
        if kind == "surface":
            vals = surface_transform(body, g, ys)
        else:
            vals = shell_transform(body, g, ys)
        mag = np.abs(vals)
        slope, peaks = peak_slope(r, mag)
        out.append(
            DecayProfile(
                direction=phi,
                r_grid=r,
                magnitudes=mag,
                slope=slope,
                kind=kind,
                j_vanishing=int(np.sum(np.abs(phi) < 1e-12)),
                peaks=peaks,
                normalized_sup=float(np.max(r**generic * mag)),
            )
        )
    return out
