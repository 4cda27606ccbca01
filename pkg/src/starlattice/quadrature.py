"""Sphere quadrature and the volume identity for weighted star bodies.

For a weight ``F(x) = f(x/|x|)`` and the body ``D`` with radial function
``m**(1/n)``, integrating along rays gives

    integral over D of F  =  (1/n) * integral over S^{n-1} of f * m.

``body_integral`` estimates the left side by Monte Carlo; ``sphere_integral``
evaluates the right side by a deterministic rule.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .geometry import (
    HomogeneousExtension,
    SphereField,
    StarBody,
    body_from_density,
    homogeneous_extension,
)

log = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
DEFAULT_NODES = {2: 4096, 3: (128, 256)}
TARGET_TOL = 1e-10
_GL_ORDER = 32


@dataclass(frozen=True)
class QuadratureRule:
    dimension: int
    nodes: np.ndarray
    weights: np.ndarray
    order_tag: str


def sphere_area(n: int) -> float:
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


def sphere_rule(n: int, nodes=None, breakpoints=()) -> QuadratureRule:
    """Default rule on ``S^{n-1}``.

    n = 2: periodic trapezoid, or composite Gauss-Legendre between
    ``breakpoints`` when the integrand has kinks.  n = 3: Gauss-Legendre in
    the polar cosine times trapezoid in azimuth.
    """
    if n == 2:
        count = int(nodes or DEFAULT_NODES[2])
        if not breakpoints:
            t = TWO_PI * np.arange(count) / count
            w = np.full(count, TWO_PI / count)
            return QuadratureRule(2, _circle(t), w, f"trapezoid-{count}")
        t, w = _arcs_rule(breakpoints, count)
        return QuadratureRule(2, _circle(t), w, f"gauss-legendre-arcs-{t.size}")
    if n == 3:
        npol, naz = nodes or DEFAULT_NODES[3]
        x, wx = np.polynomial.legendre.leggauss(int(npol))
        phi = TWO_PI * np.arange(naz) / naz
        z = np.repeat(x, naz)
        s = np.sqrt(1.0 - z * z)
        ph = np.tile(phi, int(npol))
        pts = np.stack([s * np.cos(ph), s * np.sin(ph), z], axis=-1)
        w = np.repeat(wx, naz) * (TWO_PI / naz)
        return QuadratureRule(3, pts, w, f"gl{npol}x-trap{naz}")
    raise ValueError(f"sphere quadrature implemented for n in (2, 3), got {n}")


def _circle(t):
    return np.stack([np.cos(t), np.sin(t)], axis=-1)


def _arcs_rule(breakpoints, count):
    b = np.sort(np.mod(np.asarray(breakpoints, dtype=float), TWO_PI))
    edges = np.append(b, b[0] + TWO_PI)
    x, wx = np.polynomial.legendre.leggauss(_GL_ORDER)
    ts, ws = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        pieces = max(1, int(math.ceil((hi - lo) / TWO_PI * count / _GL_ORDER)))
        cuts = np.linspace(lo, hi, pieces + 1)
        for a, c in zip(cuts[:-1], cuts[1:]):
            half = 0.5 * (c - a)
            ts.append(0.5 * (a + c) + half * x)
            ws.append(half * wx)
    return np.concatenate(ts), np.concatenate(ws)


def _rule_for(n, *fields, nodes=None):
    bps = sorted({b for f in fields for b in f.breakpoints})
    return sphere_rule(n, nodes=nodes, breakpoints=tuple(bps))


def sphere_integral(
    f: SphereField, m: SphereField, rule: QuadratureRule | None = None, n: int | None = None
) -> float:
    """Integral of ``f * m`` over the unit sphere."""
    if rule is None:
        if n is None:
            raise ValueError("give a quadrature rule or a dimension")
        rule = _rule_for(n, f, m)
    elif n is not None and n != rule.dimension:
        raise ValueError(f"rule is for n={rule.dimension}, integrand for n={n}")
    vals = f(rule.nodes) * m(rule.nodes) * rule.weights
    return math.fsum(vals.tolist())


def target_integral(f: SphereField, m: SphereField, n: int) -> tuple[float, float]:
    """``(value, error estimate)``; the error is the change on doubling the rule."""
    rule = _rule_for(n, f, m)
    value = sphere_integral(f, m, rule)
    if n == 2:
        finer = _rule_for(n, f, m, nodes=2 * rule.nodes.shape[0])
    else:
        npol, naz = DEFAULT_NODES[3]
        finer = sphere_rule(3, nodes=(2 * npol, 2 * naz))
    err = abs(sphere_integral(f, m, finer) - value)
    if err > TARGET_TOL * max(1.0, abs(value)):
        log.warning("target quadrature error %.3g exceeds %.0e", err, TARGET_TOL)
    return value, err


# ---------------------------------------------------------------------------
# Body integrals
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MonteCarloEstimate:
    value: float
    stderr: float
    samples: int


def body_integral(
    F: HomogeneousExtension | SphereField,
    body: StarBody,
    samples: int,
    seed: int = 0,
    chunk: int = 1 << 20,
) -> MonteCarloEstimate:
    """Monte Carlo integral of ``F`` over ``body`` using its bounding box.

    Draws come from a Philox counter-based generator keyed by ``seed``.
    """
    if samples <= 0:
        raise ValueError("samples must be positive")
    if isinstance(F, SphereField):
        F = homogeneous_extension(F)
    n = body.dimension
    half = body.rmax
    vol = (2.0 * half) ** n
    rng = np.random.Generator(np.random.Philox(key=seed))
    s1 = []
    s2 = []
    done = 0
    while done < samples:
        k = min(chunk, samples - done)
        x = rng.uniform(-half, half, size=(k, n))
        inside = body.gauge(x) <= 1.0
        inside &= np.any(x != 0, axis=1)
        v = np.zeros(k)
        v[inside] = F(x[inside])
        s1.append(math.fsum(v.tolist()))
        s2.append(math.fsum((v * v).tolist()))
        done += k
    mean = math.fsum(s1) / samples
    var = max(math.fsum(s2) / samples - mean * mean, 0.0)
    return MonteCarloEstimate(vol * mean, vol * math.sqrt(var / samples), samples)


def radial_integral(f: SphereField, body: StarBody) -> float:
    """Exact route: ``(1/n) * integral of f * radial**n`` over the sphere."""
    n = body.dimension
    return sphere_integral(f, body.density(), n=n) / n


@dataclass(frozen=True)
class IdentityCheck:
    lhs: float
    stderr: float
    rhs: float
    relative_discrepancy: float

    @property
    def sigmas(self) -> float:
        if self.stderr == 0:
            return 0.0 if self.lhs == self.rhs else math.inf
        return abs(self.lhs - self.rhs) / self.stderr


def verify_volume_identity(
    f: SphereField, m: SphereField, n: int = 2, samples: int = 10**7, seed: int = 0
) -> IdentityCheck:
    """Compare the Monte Carlo body integral with ``(1/n) * sphere_integral``."""
    body = body_from_density(m, n)
    mc = body_integral(f, body, samples, seed)
    rhs = sphere_integral(f, m, n=n) / n
    rel = abs(mc.value - rhs) / abs(rhs) if rhs != 0 else abs(mc.value)
    return IdentityCheck(mc.value, mc.stderr, rhs, rel)
