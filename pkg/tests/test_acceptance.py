"""Acceptance criteria, one test each; every test prints a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (about 5 minutes).
"""

import math
import time

import mpmath
import numpy as np
import pytest

from starlattice.analysis import fit_envelope_exponent, residual_series, rho_grid, theory_exponents
from starlattice.catalog import density, test_function
from starlattice.fourier import decay_sweep, default_r_grid, surface_transform
from starlattice.geometry import Ball, Ellipsoid, Polygon, Rotation, SphereField, Superellipsoid, haar_rotations
from starlattice.lattice import CountRequest, lattice_points
from starlattice.quadrature import verify_volume_identity
from starlattice.reporting import ExperimentConfig, run

ONE = SphereField.constant(1.0)


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {number:>2}] {'PASS' if ok else 'FAIL'}  {detail}")

    return emit


@pytest.fixture(scope="module")
def outdir(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


def timed(fn):
    t0 = time.perf_counter()
    value = fn()
    return value, time.perf_counter() - t0


# --- criterion 1 ------------------------------------------------------------

GAUGES = {
    "ball": (Ball(2), lambda x, y: np.sqrt(x * x + y * y)),
    "ellipsoid": (Ellipsoid([2.0, 1.0]), lambda x, y: np.sqrt(x * x / 4.0 + y * y)),
    "superellipsoid": (Superellipsoid(2), lambda x, y: (x**4 + y**4) ** 0.25),
    "polygon": (Polygon.square(), lambda x, y: np.maximum(np.abs(x), np.abs(y))),
}


def naive_scan(gauge_fn, rho, matrix):
    h = int(math.ceil(3 * rho)) + 2
    a, b = np.meshgrid(np.arange(-h, h + 1), np.arange(-h, h + 1), indexing="ij")
    a, b = a.ravel(), b.ravel()
    x = matrix[0, 0] * a + matrix[0, 1] * b
    y = matrix[1, 0] * a + matrix[1, 1] * b
    keep = (gauge_fn(x, y) <= rho * (1 + 1e-12)) & ((a != 0) | (b != 0))
    return set(zip(a[keep].tolist(), b[keep].tolist()))


def test_criterion_01_brute_force_equivalence(report):
    def check():
        mismatches = []
        rotations = [Rotation.identity(2)] + haar_rotations(2, 3, seed=2024)
        for name, (body, gauge_fn) in GAUGES.items():
            for rho in (1.5, 2.5, 5.0, 10.25):
                for g in rotations:
                    fast = {tuple(p) for p in lattice_points(CountRequest(body, rho, g)).tolist()}
                    if fast != naive_scan(gauge_fn, rho, g.matrix):
                        mismatches.append((name, rho, g.id))
        return mismatches

    mismatches, secs = timed(check)
    ok = not mismatches and secs < 5.0
    report(1, ok, f"48 cases, mismatches={mismatches}, runtime {secs:.2f} s (< 5 s)")
    assert not mismatches
    assert secs < 5.0


# --- criteria 2 and 10 share runs ------------------------------------------


def disk_config(out, workers):
    return ExperimentConfig(kind="converge", body="ball", rho_start=64, rho_stop=65536, per_octave=10,
                            seed=0, out=str(out), workers=workers)


def square_ensemble_config(out, workers):
    return ExperimentConfig(kind="rotate-average", body="square", density="square", rho_start=16, rho_stop=4096,
                            per_octave=8, rotations=64, seed=0, out=str(out), workers=workers)


@pytest.fixture(scope="module")
def disk_run(outdir):
    return timed(lambda: run(disk_config(outdir / "c2-w1", 1)))


@pytest.fixture(scope="module")
def square_ensemble_run(outdir):
    return timed(lambda: run(square_ensemble_config(outdir / "c6-w1", 1)))


def test_criterion_02_disk_rate(report, disk_run):
    record, secs = disk_run
    points = len(record.tables["residuals"]["rows"])
    slope = record.summary["fit"]["slope"]
    ok = slope <= -1.15 and points >= 80 and secs < 60
    report(2, ok, f"disk envelope slope {slope:.4f} (<= -1.15, theory -4/3), {points} points, {secs:.1f} s (< 60 s)")
    assert points >= 80
    assert slope <= -1.15
    assert secs < 60


def test_criterion_03_ball_3d(report):
    def go():
        s = residual_series(Ball(3), ONE, ONE, rho_grid(16, 1024, per_octave=8, seed=0))
        return fit_envelope_exponent(s)

    fit, secs = timed(go)
    ok = fit.slope <= -1.30 and secs < 120
    report(3, ok, f"3-D ball envelope slope {fit.slope:.4f} (<= -1.30, theory -3/2), {secs:.1f} s (< 120 s)")
    assert fit.slope <= -1.30
    assert secs < 120


def test_criterion_04_superellipse(report, outdir):
    cfg = ExperimentConfig(kind="converge", body="superellipsoid", k=2, density="superellipse-k2", rho_start=64,
                           rho_stop=65536, per_octave=10, seed=0, out=str(outdir / "c4"))
    record = run(cfg)
    slope = record.summary["fit"]["slope"]
    text = theory_exponents(2, "superellipsoid", k=2).summary()
    printed = "A=0.75" in text and "B=0.6667" in text and "predicted -1.25" in text
    ok = -1.45 <= slope <= -1.10 and printed
    report(4, ok, f"superellipse k=2 envelope slope {slope:.4f} in [-1.45, -1.10]; summary: {text}")
    assert -1.45 <= slope <= -1.10
    assert printed
    assert record.summary["theory"]["text"] == text


def test_criterion_05_rational_square(report):
    grid = rho_grid(50, 1e4, per_octave=8, seed=0)
    s = residual_series(Polygon.square(), ONE, density("square"), grid)
    fit = fit_envelope_exponent(s)
    ok = -1.10 <= fit.slope <= -0.90
    report(5, ok, f"axis-aligned square envelope slope {fit.slope:.4f} in [-1.10, -0.90], {grid.size} points")
    assert -1.10 <= fit.slope <= -0.90


def test_criterion_06_rotated_square(report, square_ensemble_run):
    record, secs = square_ensemble_run
    slope = record.summary["fit"]["slope"]
    ok = slope <= -1.8 and secs < 600
    report(6, ok, f"mean |R| over 64 Haar rotations, envelope slope {slope:.4f} (<= -1.8), {secs:.1f} s (< 600 s)")
    assert secs < 600
    assert slope <= -1.8


PAIRS = [
    ("one", "one"),
    ("cos2", "cos-bump"),
    ("one", "four"),
    ("exp-cos", "ellipse"),
    ("cos2", "superellipse-k2"),
]


def test_criterion_07_volume_identity(report):
    worst = 0.0
    details = []
    for i, (f, m) in enumerate(PAIRS):
        chk = verify_volume_identity(test_function(f), density(m), n=2, samples=10**7, seed=i)
        worst = max(worst, chk.sigmas)
        details.append(f"{f}/{m}: {chk.sigmas:.2f}σ")
    ok = worst <= 3.0
    report(7, ok, "Monte Carlo vs quadrature at 1e7 samples, " + ", ".join(details) + " (all <= 3σ)")
    assert worst <= 3.0


def j0(x):
    return float(mpmath.besselj(0, x))


def test_criterion_08_circle_fourier(report):
    circle = Ball(2)
    (surf,) = decay_sweep(circle, [[1.0, 0.0]], default_r_grid(16, 256, 0.05), kind="surface")
    (shell,) = decay_sweep(circle, [[1.0, 0.0]], default_r_grid(16, 256, 0.05), kind="shell")
    errors = [abs(surface_transform(circle, None, [r, 0.0]) - 2 * math.pi * j0(2 * math.pi * r)) for r in (1, 4, 16)]
    ok = abs(surf.slope + 0.5) <= 0.1 and abs(shell.slope + 1.5) <= 0.1 and max(errors) <= 1e-6
    report(8, ok, f"circle surface slope {surf.slope:.4f} (-0.5±0.1), shell slope {shell.slope:.4f} (-1.5±0.1), "
                  f"max |Ψ - 2πJ0| = {max(errors):.1e} (<= 1e-6)")
    assert abs(surf.slope + 0.5) <= 0.1
    assert abs(shell.slope + 1.5) <= 0.1
    assert max(errors) <= 1e-6


def test_criterion_09_superellipse_anisotropy(report):
    axis, generic = decay_sweep(Superellipsoid(2), [[1.0, 0.0], [math.cos(1.0), math.sin(1.0)]],
                                default_r_grid(16, 256, 0.05), kind="surface")
    ok = abs(axis.slope + 0.25) <= 0.1 and abs(generic.slope + 0.5) <= 0.1
    report(9, ok, f"superellipse k=2 axis slope {axis.slope:.4f} (-0.25±0.1), generic slope {generic.slope:.4f} (-0.5±0.1)")
    assert abs(axis.slope + 0.25) <= 0.1
    assert abs(generic.slope + 0.5) <= 0.1


def test_criterion_10_determinism(report, outdir, disk_run, square_ensemble_run):
    same = {}
    for label, make, first in (("2", disk_config, disk_run[0]), ("6", square_ensemble_config, square_ensemble_run[0])):
        rerun = run(make(outdir / f"c{label}-w4", 4))
        a = open(first.paths["csv"], "rb").read()
        b = open(rerun.paths["csv"], "rb").read()
        same[label] = a == b and len(a) > 0
    ok = all(same.values())
    report(10, ok, f"byte-identical CSVs for workers 1 vs 4: criterion 2 {same['2']}, criterion 6 {same['6']}")
    assert ok
