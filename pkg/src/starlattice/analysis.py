"""Residual series, exponent fits and predicted convergence exponents."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted, column_or_1d

from .geometry import (
    Rotation,
    SphereField,
    StarBody,
    haar_rotations,
    homogeneous_extension,
    sphere_mesh,
)
from .lattice import CountRequest, discrete_measure_value, weighted_count
from .quadrature import target_integral

FLOOR_REL = 1e-13
MIN_POINTS = 8


# ---------------------------------------------------------------------------
# rho grids
# ---------------------------------------------------------------------------


def rho_grid(
    start: float,
    stop: float,
    per_octave: int = 8,
    seed: int | None = 0,
    jitter: float = 0.5,
) -> np.ndarray:
    """Geometric grid ``start * 2**(j / per_octave)`` with forward jitter.

    Each point is pushed forward by ``jitter * u_j`` of its spacing, with
    ``u_j`` uniform in [0, 1) from a stream seeded by ``seed``; the jitter
    keeps grids off integer and half-integer values.  ``seed=None`` gives
    the plain geometric grid.
    """
    if not 0 < start < stop:
        raise ValueError(f"need 0 < start < stop, got start={start!r}, stop={stop!r}")
    if per_octave < 1:
        raise ValueError("per_octave must be >= 1")
    count = int(math.floor(per_octave * math.log2(stop / start) + 1e-9)) + 1
    j = np.arange(count + 1)
    base = start * 2.0 ** (j / per_octave)
    if seed is not None:
        u = np.random.default_rng(seed).random(count + 1)
        base = base[:-1] + jitter * np.diff(base) * u[:-1]
    else:
        base = base[:-1]
    return base[base <= stop]


# ---------------------------------------------------------------------------
# Residual series
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ResidualRecord:
    rho: float
    rotation_id: str
    weighted_count: float
    discrete_value: float
    target: float
    residual: float
    boundary_hits: int = 0


@dataclass
class ResidualSeries:
    records: list[ResidualRecord]
    body: str
    f: str
    m: str
    dimension: int
    target_error: float = 0.0

    @property
    def rho(self) -> np.ndarray:
        return np.array([r.rho for r in self.records])

    @property
    def residual(self) -> np.ndarray:
        return np.array([r.residual for r in self.records])

    @property
    def target(self) -> float:
        return self.records[0].target if self.records else float("nan")

    @property
    def flagged(self) -> list[float]:
        """rho values where lattice points sit on the boundary within 1e-9."""
        return [r.rho for r in self.records if r.boundary_hits > 0]


def _check_density(body: StarBody, m: SphereField):
    mesh = sphere_mesh(body.dimension, 512 if body.dimension == 2 else 2048)
    want = body.radial(mesh) ** body.dimension
    got = m(mesh)
    if not np.allclose(got, want, rtol=1e-9, atol=0):
        raise ValueError(f"density {m.name!r} does not generate body {body.describe()}")


def _weight(f: SphereField):
    if f.constant_value is not None:
        return None, f.constant_value
    return homogeneous_extension(f), 1.0


def _records(body, f, rho_values, rotation, target, workers):
    n = body.dimension
    weight, scale = _weight(f)
    out = []
    previous = -math.inf
    for rho in rho_values:
        rho = float(rho)
        if rho <= previous:
            raise ValueError("rho grid must be strictly increasing")
        previous = rho
        res = weighted_count(CountRequest(body, rho, rotation, weight), workers=workers)
        wc = res.weighted_count * scale if weight is None else res.weighted_count
        value = n / rho**n * wc
        out.append(ResidualRecord(rho, res.rotation_id, wc, value, target, target - value, res.boundary_hits))
    return out


def residual_series(
    body: StarBody,
    f: SphereField,
    m: SphereField | None,
    rho_values,
    rotation: Rotation | None = None,
    workers: int = 1,
) -> ResidualSeries:
    """Residuals ``R = integral(f m) - (n / rho^n) * N_D(rho, gamma)``.

    ``m`` defaults to the body's own density; when given it must generate
    ``body``.
    """
    if m is None:
        m = body.density()
    else:
        _check_density(body, m)
    target, err = target_integral(f, m, body.dimension)
    recs = _records(body, f, rho_values, rotation, target, workers)
    return ResidualSeries(recs, body.describe(), f.name, m.name, body.dimension, err)


# ---------------------------------------------------------------------------
# Exponent fitting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExponentFit:
    slope: float
    intercept: float
    r_squared: float
    window: tuple[float, float]
    method: str
    floor_dropped: int
    points: int = 0

    def predict(self, rho) -> np.ndarray:
        return np.exp(self.intercept) * np.asarray(rho, dtype=float) ** self.slope


def dyadic_maxima(rho: np.ndarray, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per dyadic block ``[rho0 2^j, rho0 2^{j+1})`` the largest ``|value|``."""
    blocks = np.floor(np.log2(rho / rho[0]) + 1e-12).astype(int)
    xs, ys = [], []
    for blk in np.unique(blocks):
        idx = np.nonzero(blocks == blk)[0]
        best = idx[np.argmax(np.abs(values[idx]))]
        xs.append(rho[best])
        ys.append(abs(values[best]))
    return np.array(xs), np.array(ys)


def _loglog(x, y):
    lx, ly = np.log(x), np.log(y)
    A = np.column_stack([lx, np.ones_like(lx)])
    (slope, intercept), *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - (slope * lx + intercept)
    tot = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / tot if tot > 0 else 1.0
    return float(slope), float(intercept), float(r2)


class EnvelopeExponentRegressor(BaseEstimator):
    """Power-law fit ``|R| ~ C rho^s`` on a log-log scale.

    Parameters
    ----------
    method : {"dyadic-envelope", "all-points"}
        ``dyadic-envelope`` regresses per-dyadic-block maxima of ``|R|``,
        which tracks the envelope of oscillating residuals;
        ``all-points`` regresses every sample.
    floor : float
        Samples with ``|R| < floor`` are dropped before fitting.
    window : tuple or None
        Inclusive ``(rho_min, rho_max)`` restriction.
    min_points : int
        Minimum number of samples left after windowing and flooring.
    """

    def __init__(self, method="dyadic-envelope", floor=0.0, window=None, min_points=MIN_POINTS):
        self.method = method
        self.floor = floor
        self.window = window
        self.min_points = min_points

    def fit(self, X, y):
        rho = column_or_1d(check_array(np.asarray(X, dtype=float).reshape(-1, 1)))
        y = column_or_1d(check_array(np.asarray(y, dtype=float).reshape(-1, 1)))
        if rho.size != y.size:
            raise ValueError("X and y have different lengths")
        if self.method not in ("dyadic-envelope", "all-points"):
            raise ValueError(f"unknown method {self.method!r}")
        if np.any(rho <= 0):
            raise ValueError("rho values must be positive")
        order = np.argsort(rho, kind="stable")
        rho, y = rho[order], y[order]
        lo, hi = self.window if self.window is not None else (rho.min(), rho.max())
        inside = (rho >= lo) & (rho <= hi)
        rho, y = rho[inside], y[inside]
        usable = np.abs(y) >= self.floor
        usable &= y != 0
        self.floor_dropped_ = int(np.sum(~usable))
        rho, y = rho[usable], y[usable]
        if rho.size < self.min_points:
            raise ValueError(f"need at least {self.min_points} usable points in the window, got {rho.size}")
        if self.method == "dyadic-envelope":
            x_fit, y_fit = dyadic_maxima(rho, y)
            if x_fit.size < 2:
                raise ValueError("window spans fewer than two dyadic blocks")
        else:
            x_fit, y_fit = rho, np.abs(y)
        self.slope_, self.intercept_, self.r_squared_ = _loglog(x_fit, y_fit)
        self.window_ = (float(lo), float(hi))
        self.n_fit_points_ = int(x_fit.size)
        self.fit_points_ = (x_fit, y_fit)
        return self

    def predict(self, X):
        check_is_fitted(self, "slope_")
        rho = np.asarray(X, dtype=float).reshape(-1)
        return np.exp(self.intercept_) * rho**self.slope_

    def score(self, X=None, y=None):
        check_is_fitted(self, "r_squared_")
        return self.r_squared_

    def to_fit(self) -> ExponentFit:
        check_is_fitted(self, "slope_")
        return ExponentFit(
            self.slope_,
            self.intercept_,
            self.r_squared_,
            self.window_,
            self.method,
            self.floor_dropped_,
            self.n_fit_points_,
        )


def fit_envelope_exponent(
    series,
    residual=None,
    window=None,
    method: str = "dyadic-envelope",
    floor: float | None = None,
) -> ExponentFit:
    """Fit the decay exponent of ``|R|`` against ``rho``.

    ``series`` is a :class:`ResidualSeries` (floor ``1e-13 * |target|``) or
    an array of rho values paired with ``residual``.
    """
    if isinstance(series, ResidualSeries):
        rho, residual = series.rho, series.residual
        if floor is None:
            floor = FLOOR_REL * abs(series.target)
    else:
        rho = np.asarray(series, dtype=float)
        if residual is None:
            raise ValueError("residual values are required with a rho array")
    reg = EnvelopeExponentRegressor(method=method, floor=floor or 0.0, window=window)
    return reg.fit(rho, residual).to_fit()


# ---------------------------------------------------------------------------
# Predicted exponents
# ---------------------------------------------------------------------------


FAMILIES = ("positive-curvature", "superellipsoid", "polygon-rational", "polygon-algebraic")


@dataclass(frozen=True)
class TheoryExponents:
    n: int
    family: str
    k: int | None
    A: Fraction | None
    B: Fraction
    positive_curvature_exp: Fraction
    superellipsoid_exp: Fraction | None
    alpha: tuple[Fraction, ...]
    beta: Fraction | None
    predicted: Fraction
    best_possible: bool
    note: str = ""

    def summary(self) -> str:
        parts = [f"family={self.family}", f"n={self.n}"]
        if self.k is not None:
            parts.append(f"k={self.k}")
            parts.append(f"A={float(self.A):.4g}")
        parts.append(f"B={float(self.B):.4g}")
        if self.beta is not None:
            parts.append("alpha=[" + ", ".join(f"{float(a):.4g}" for a in self.alpha) + "]")
            parts.append(f"beta={float(self.beta):.4g}")
        parts.append(f"predicted {float(self.predicted):.4g}")
        if self.k is not None:
            parts.append(f"best_possible={self.best_possible}")
        return " ".join(parts)


def theory_exponents(n: int, family: str, k: int | None = None) -> TheoryExponents:
    """Predicted decay exponent of the rescaled residual for a body family."""
    if family not in FAMILIES:
        raise ValueError(f"family must be one of {FAMILIES}, got {family!r}")
    if n < 2:
        raise ValueError("n must be >= 2")
    B = Fraction(n * (n - 1), n + 1)
    pc = Fraction(-2 * n, n + 1)
    A = sup = beta = None
    alpha: tuple[Fraction, ...] = ()
    best = False
    note = ""
    if family == "positive-curvature":
        predicted = pc
    elif family == "superellipsoid":
        if k is None:
            raise ValueError("superellipsoid exponents need k")
        A = Fraction((2 * k - 1) * (n - 1), 2 * k)
        sup = A - n
        beta = Fraction(k - 1, 2 * k - 1)
        alpha = tuple(Fraction(j, 2 * k) + Fraction(n - j - 1, 2) for j in range(n))
        best = A > B
        predicted = max(A, B) - n
        if not best:
            note = "A <= B: lattice error governed by the generic term B"
    else:
        if n != 2:
            raise ValueError("polygon exponents are implemented for n = 2")
        if family == "polygon-rational":
            predicted = Fraction(n - 1) - n
            note = "rational facet normal: jumps of order rho^(n-1)"
        else:
            predicted = Fraction(-n)
            note = "algebraic facet slopes: exponent epsilon - n with epsilon -> 0+"
    return TheoryExponents(n, family, k, A, B, pc, sup, alpha, beta, predicted, best, note)


# ---------------------------------------------------------------------------
# Rotation ensembles
# ---------------------------------------------------------------------------


@dataclass
class RotationAverage:
    rho: np.ndarray
    mean_abs: np.ndarray
    stderr: np.ndarray
    spread: np.ndarray
    series: list[ResidualSeries] = field(repr=False)
    fit: ExponentFit | None = None


def rotation_average(
    body: StarBody,
    f: SphereField,
    m: SphereField | None,
    rho_values,
    num_rotations: int,
    seed: int = 0,
    workers: int = 1,
    window=None,
    rotations: list[Rotation] | None = None,
) -> RotationAverage:
    """Mean ``|R|`` over Haar-random lattice rotations, with an envelope fit."""
    if num_rotations < 1:
        raise ValueError("num_rotations must be >= 1")
    if rotations is None:
        rotations = haar_rotations(body.dimension, num_rotations, seed)
    if m is None:
        m = body.density()
    else:
        _check_density(body, m)
    target, err = target_integral(f, m, body.dimension)
    rho_values = np.asarray(rho_values, dtype=float)
    series = [
        ResidualSeries(
            _records(body, f, rho_values, g, target, workers), body.describe(), f.name, m.name, body.dimension, err
        )
        for g in rotations
    ]
    R = np.array([s.residual for s in series])
    absR = np.abs(R)
    mean = absR.mean(axis=0)
    k = len(rotations)
    stderr = absR.std(axis=0, ddof=1) / math.sqrt(k) if k > 1 else np.zeros_like(mean)
    spread = R.std(axis=0, ddof=1) if k > 1 else np.zeros_like(mean)
    fit = None
    if rho_values.size >= MIN_POINTS:
        fit = fit_envelope_exponent(rho_values, mean, window=window, floor=FLOOR_REL * abs(target))
    return RotationAverage(rho_values, mean, stderr, spread, series, fit)
