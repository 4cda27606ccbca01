import math

import mpmath
import numpy as np
import pytest
from scipy import integrate, special

from starlattice.catalog import test_function
from starlattice.fourier import (
    TransformBudgetError,
    _radial_moment,
    decay_sweep,
    default_r_grid,
    local_maxima,
    peak_slope,
    shell_transform,
    surface_transform,
)
from starlattice.geometry import (
    Ball,
    Ellipsoid,
    Polygon,
    SphereField,
    Superellipsoid,
    body_from_density,
    radon_nikodym,
)


def j0_series(x, terms=200):
    """J0 by its power series in high precision."""
    with mpmath.workdps(60):
        x = mpmath.mpf(x)
        s = mpmath.mpf(0)
        for k in range(terms):
            s += (-1) ** k * (x / 2) ** (2 * k) / mpmath.factorial(k) ** 2
        return float(s)


CIRCLE = Ball(2)


class TestCircle:
    def test_zero_frequency(self):
        assert surface_transform(CIRCLE, None, [0.0, 0.0]) == pytest.approx(2 * math.pi, rel=1e-14)

    @pytest.mark.parametrize("r", [0.5, 1.0, 4.0, 16.0])
    def test_bessel_identity(self, r):
        want = 2 * math.pi * j0_series(2 * math.pi * r)
        got = surface_transform(CIRCLE, None, [r * 0.6, r * 0.8])
        assert abs(got - want) <= 1e-10
        assert abs(got.imag) <= 1e-12

    def test_bessel_identity_up_to_64(self):
        r = np.linspace(0.1, 64, 300)
        ys = np.column_stack([r, np.zeros_like(r)])
        got = np.abs(surface_transform(CIRCLE, None, ys))
        np.testing.assert_allclose(got, 2 * math.pi * np.abs(special.j0(2 * math.pi * r)), rtol=0, atol=1e-6)

    def test_shell_area(self):
        assert shell_transform(CIRCLE, None, [0.0, 0.0]) == pytest.approx(3 * math.pi / 4, rel=1e-14)

    @pytest.mark.parametrize("r", [0.05, 1.0, 7.3, 40.0])
    def test_shell_closed_form(self, r):
        # annulus 1/2 <= |x| <= 1: (J1(2 pi r) - J1(pi r) / 2) / r
        want = (special.j1(2 * math.pi * r) - 0.5 * special.j1(math.pi * r)) / r
        got = shell_transform(CIRCLE, None, [0.0, r])
        assert got == pytest.approx(want, abs=1e-11)

    def test_radius_two_circle(self):
        body = body_from_density(SphereField.constant(4.0), 2)
        got = surface_transform(body, None, [1.3, 0.0])
        assert got == pytest.approx(4 * math.pi * special.j0(2 * math.pi * 2.6), abs=1e-9)


class TestGeneral:
    def test_ellipse_perimeter(self):
        assert surface_transform(Ellipsoid([2.0, 1.0]), None, [0, 0]).real == pytest.approx(9.688448, abs=1e-6)

    def test_square_transform_closed_form(self):
        # boundary of [-1,1]^2: each edge gives sinc factors
        y = np.array([0.37, 1.21])
        want = 0.0
        for a, b in [(y[0], y[1]), (y[1], y[0])]:
            edge = 2 * np.sinc(2 * b)
            want += 2 * math.cos(2 * math.pi * a) * edge
        assert surface_transform(Polygon.square(), None, y) == pytest.approx(want, abs=1e-12)

    def test_superellipse_against_scipy(self):
        g = test_function("cos2")
        y = np.array([2.3, -1.1])

        def integrand(t, part):
            u = np.array([math.cos(t), math.sin(t)])
            body = Superellipsoid(2)
            r = float(body.radial(u))
            phi = float(radon_nikodym(body, u))
            ph = 2 * math.pi * r * float(u @ y)
            return (math.cos(ph) if part == 0 else math.sin(ph)) * phi * u[0] ** 2

        re, _ = integrate.quad(integrand, 0, 2 * math.pi, args=(0,), limit=400, epsabs=1e-12)
        im, _ = integrate.quad(integrand, 0, 2 * math.pi, args=(1,), limit=400, epsabs=1e-12)
        assert surface_transform(Superellipsoid(2), g, y) == pytest.approx(complex(re, im), abs=1e-9)

    def test_shell_radial_rules_agree(self):
        body = Superellipsoid(3)
        F = test_function("exp-cos")
        ys = np.array([[3.0, 1.0], [0.2, 0.1], [20.0, -30.0]])
        a = shell_transform(body, F, ys)
        b = shell_transform(body, F, ys, radial="gauss")
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-10 * np.max(np.abs(a)))

    def test_radial_moment_series_branch(self):
        k = np.array([1e-6, 0.3, 0.99, 1.01, 5.0])
        re, im = _radial_moment(np.full(5, 0.5), np.ones(5), k)
        for kk, x, z in zip(k, re, im):
            want = complex(*[integrate.quad(lambda s, p=p: s * (math.cos(kk * s), math.sin(kk * s))[p], 0.5, 1)[0] for p in (0, 1)])
            assert complex(x, z) == pytest.approx(want, abs=1e-14)

    @pytest.mark.parametrize("kind", [surface_transform, shell_transform])
    def test_conjugate_symmetry(self, kind):
        g = test_function("exp-cos")
        ys = np.random.default_rng(0).uniform(-50, 50, (20, 2))
        for body in [Superellipsoid(2), Polygon.square(), Ellipsoid([2.0, 1.0])]:
            np.testing.assert_allclose(kind(body, g, -ys), np.conj(kind(body, g, ys)), rtol=0, atol=1e-12)

    @pytest.mark.parametrize("kind", [surface_transform, shell_transform])
    def test_node_doubling(self, kind):
        # changes are measured against the L1 size of the integrand
        ys = np.array([[0.3, 0.1], [5, 2], [40, -13], [200, 17], [0, 256], [181, 181]])
        absg = SphereField(lambda u: u[..., 0] ** 2)
        for body in [CIRCLE, Superellipsoid(2), Superellipsoid(3), Polygon.square(), Ellipsoid([2.0, 1.0])]:
            for g, scale_g in [(None, None), (test_function("cos2"), absg)]:
                scale = abs(kind(body, scale_g, [0.0, 0.0]))
                a = kind(body, g, ys)
                b = kind(body, g, ys, nodes_per_period=128)
                assert np.max(np.abs(a - b)) / scale < 1e-8, body.describe()

    def test_budget(self):
        with pytest.raises(TransformBudgetError):
            surface_transform(CIRCLE, None, [600.0, 0.0])
        with pytest.raises(TransformBudgetError):
            shell_transform(CIRCLE, None, [100.0, 100.0], r_max=100)

    def test_rejects_3d(self):
        with pytest.raises(ValueError):
            surface_transform(Ball(3), None, [1.0, 0.0, 0.0])

    def test_single_and_batch_agree(self):
        ys = np.array([[1.0, 2.0], [30.0, 4.0]])
        batch = surface_transform(Superellipsoid(2), None, ys)
        assert batch[1] == surface_transform(Superellipsoid(2), None, ys[1])


class TestDecay:
    def test_local_maxima(self):
        v = np.array([0, 1, 0, 2, 2, 1, 3, 0.0])
        np.testing.assert_array_equal(local_maxima(v), [1, 4, 6])

    def test_peak_slope_of_bessel_envelope(self):
        r = np.arange(16, 256, 0.05)
        slope, peaks = peak_slope(r, np.abs(special.j0(2 * math.pi * r)))
        assert slope == pytest.approx(-0.5, abs=0.01) and peaks > 400

    def test_grid(self):
        r = default_r_grid()
        assert r[0] == 16 and r[-1] == pytest.approx(256) and np.all(np.diff(r) > 0)

    def test_rejects_bad_grid(self):
        with pytest.raises(ValueError):
            decay_sweep(CIRCLE, [[1, 0]], r_grid=[2.0, 1.0])
        with pytest.raises(ValueError):
            decay_sweep(CIRCLE, [[1, 0]], kind="volume")

    def test_circle_isotropy(self):
        angles = np.random.default_rng(0).uniform(0, 2 * math.pi, 8)
        dirs = np.column_stack([np.cos(angles), np.sin(angles)])
        profiles = decay_sweep(CIRCLE, dirs, r_grid=default_r_grid(16, 64, 0.05))
        alphas = [p.fitted_alpha for p in profiles]
        assert max(alphas) - min(alphas) <= 0.1
        assert all(p.j_vanishing == 0 for p in profiles)
        assert all(p.magnitudes.min() >= 0 for p in profiles)

    def test_superellipse_anisotropy_short_range(self):
        r = default_r_grid(16, 96, 0.05)
        axis, generic = decay_sweep(Superellipsoid(2), [[1, 0], [math.cos(1), math.sin(1)]], r_grid=r)
        assert axis.j_vanishing == 1 and generic.j_vanishing == 0
        assert generic.slope - axis.slope == pytest.approx(-0.25, abs=0.1)

    def test_superellipse_k3_axis(self):
        (p,) = decay_sweep(Superellipsoid(3), [[1, 0]], r_grid=default_r_grid(16, 128, 0.05))
        assert p.slope == pytest.approx(-1 / 6, abs=0.1)

    def test_normalized_sup(self):
        (p,) = decay_sweep(CIRCLE, [[0, 1]], r_grid=default_r_grid(16, 32, 0.05), kind="shell")
        assert p.normalized_sup == pytest.approx(np.max(p.r_grid**1.5 * p.magnitudes))
