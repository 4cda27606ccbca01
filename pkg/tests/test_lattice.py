import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from starlattice.catalog import density, test_function
from starlattice.geometry import (
    Ball,
    Ellipsoid,
    Polygon,
    Rotation,
    SphereField,
    Superellipsoid,
    body_from_density,
    haar_rotations,
    homogeneous_extension,
)
from starlattice.lattice import (
    BudgetError,
    CountRequest,
    brute_force_points,
    default_slabs,
    discrete_measure_value,
    enumerate_slab,
    lattice_points,
    pairwise_sum,
    weighted_count,
)


def loop_count(rho, inside, n=2):
    """Pure-Python scan of the box [-ceil(2 rho) - 2, ...]^n."""
    h = int(math.ceil(2 * rho)) + 2
    count = 0
    if n == 2:
        for a in range(-h, h + 1):
            for b in range(-h, h + 1):
                if (a, b) != (0, 0) and inside(a, b):
                    count += 1
    else:
        for a in range(-h, h + 1):
            for b in range(-h, h + 1):
                for c in range(-h, h + 1):
                    if (a, b, c) != (0, 0, 0) and inside(a, b, c):
                        count += 1
    return count


def count(body, rho, rotation=None, weight=None, **kw):
    return weighted_count(CountRequest(body, rho, rotation, weight), **kw)


class TestExamples:
    def test_disk_rho_5(self):
        assert loop_count(5, lambda a, b: a * a + b * b <= 25) == 80
        res = count(Ball(2), 5.0)
        assert res.weighted_count == 80 and res.point_count == 80

    def test_disk_rho_10(self):
        assert loop_count(10, lambda a, b: a * a + b * b <= 100) == 316
        assert count(Ball(2), 10.0).weighted_count == 316

    def test_superellipse_rho_2(self):
        assert loop_count(2, lambda a, b: a**4 + b**4 <= 16) == 12
        assert count(Superellipsoid(2), 2.0).point_count == 12

    def test_square_rho_10_5(self):
        assert count(Polygon.square(), 10.5).point_count == 21 * 21 - 1

    def test_discrete_values(self):
        assert discrete_measure_value(count(Ball(2), 10.0), 2) == pytest.approx(6.32, rel=1e-15)
        assert discrete_measure_value(count(Ball(2), 5.0), 2) == pytest.approx(6.40, rel=1e-15)

    def test_zero_weight(self):
        F = homogeneous_extension(SphereField.constant(0.0))
        res = count(Ellipsoid([2.0, 1.0]), 7.3, weight=F)
        assert res.weighted_count == 0.0 and discrete_measure_value(res, 2) == 0.0

    def test_discrete_value_rejects_rho_zero(self):
        with pytest.raises(ValueError):
            discrete_measure_value(count(Ball(2), 0.0), 2)

    def test_origin_never_counted(self):
        assert count(Ball(2), 0.5).point_count == 0
        assert count(Ball(3), 0.0).point_count == 0

    def test_boundary_hits(self):
        # ball at rho = 5: the 12 points (±5,0), (0,±5), (±3,±4), (±4,±3) lie on the circle
        assert count(Ball(2), 5.0).boundary_hits == 12
        assert count(Ball(2), 5.3).boundary_hits == 0


RHOS = [1.5, 2.5, 5.0, 10.25]


class TestBruteForce:
    @pytest.mark.parametrize(
        "body, inside",
        [
            (Ball(2), lambda x, y, r: x * x + y * y <= r * r * (1 + 1e-12) ** 2),
            (Ellipsoid([2.0, 1.0]), lambda x, y, r: math.sqrt(x * x / 4 + y * y) <= r * (1 + 1e-12)),
            (Superellipsoid(2), lambda x, y, r: (x**4 + y**4) ** 0.25 <= r * (1 + 1e-12)),
            (Polygon.square(), lambda x, y, r: max(abs(x), abs(y)) <= r * (1 + 1e-12)),
        ],
        ids=["ball", "ellipse", "superellipse", "square"],
    )
    def test_counts_match_independent_loop(self, body, inside):
        for rho in RHOS:
            for g in [Rotation.identity(2)] + haar_rotations(2, 3, seed=5):
                m = g.matrix

                def rotated(a, b):
                    return inside(m[0, 0] * a + m[0, 1] * b, m[1, 0] * a + m[1, 1] * b, rho)

                assert count(body, rho, g).point_count == loop_count(rho, rotated), (rho, g.id)

    @pytest.mark.parametrize(
        "body",
        [Ball(2), Ellipsoid([2.0, 1.0]), Superellipsoid(2), Superellipsoid(3), Polygon.square(),
         body_from_density(density("cos-bump"), 2), Ball(3), Superellipsoid(2, dimension=3)],
        ids=lambda b: b.describe(),
    )
    def test_inclusion_sets_match_full_scan(self, body):
        for rho in RHOS:
            for g in [Rotation.identity(body.dimension)] + haar_rotations(body.dimension, 3, seed=1):
                req = CountRequest(body, rho, g)
                fast = {tuple(p) for p in lattice_points(req).tolist()}
                slow = {tuple(p) for p in brute_force_points(req).tolist()}
                assert fast == slow
                assert weighted_count(req).point_count == len(slow)

    def test_weighted_sum_matches_loop(self):
        f = test_function("exp-cos")
        F = homogeneous_extension(f)
        g = haar_rotations(2, 1, seed=3)[0]
        m = g.matrix
        total = 0.0
        for a in range(-9, 10):
            for b in range(-9, 10):
                x, y = m[0, 0] * a + m[0, 1] * b, m[1, 0] * a + m[1, 1] * b
                if (a, b) != (0, 0) and math.sqrt(x * x / 4 + y * y) <= 4.25:
                    total += math.exp(x / math.hypot(x, y))
        res = count(Ellipsoid([2.0, 1.0]), 4.25, g, F)
        assert res.weighted_count == pytest.approx(total, rel=1e-13)


class TestInvariants:
    def test_ball_rotation_invariance(self):
        base = count(Ball(2), 37.3).point_count
        for g in haar_rotations(2, 10, seed=0):
            assert count(Ball(2), 37.3, g).point_count == base
        base3 = count(Ball(3), 12.7).point_count
        for g in haar_rotations(3, 4, seed=0):
            assert count(Ball(3), 12.7, g).point_count == base3

    def test_ball_scaling(self):
        big = body_from_density(SphereField.constant(4.0), 2)
        for rho in [3.3, 10.9, 50.1]:
            assert count(Ball(2), rho).point_count == count(big, rho / 2).point_count

    def test_monotone_in_rho(self):
        for body in [Ball(2), Superellipsoid(2), Polygon.square()]:
            g = haar_rotations(2, 1, seed=4)[0]
            counts = [count(body, r, g).point_count for r in np.linspace(0.5, 40, 60)]
            assert all(a <= b for a, b in zip(counts, counts[1:]))

    def test_unit_weight_equals_point_count(self):
        res = count(Superellipsoid(3), 123.4, weight=homogeneous_extension(SphereField.constant(1.0)))
        assert res.weighted_count == res.point_count

    def test_gauss_circle_known_value(self):
        # N(100) for x^2 + y^2 <= 100^2 is 31417 including the origin
        assert count(Ball(2), 100.0).point_count == 31416

    def test_exact_integer_path_large_rho(self):
        # sum of r_2(j) for j <= 10^6: classical value N(1000) = 3141549
        assert count(Ball(2), 1000.0).point_count == 3141548

    def test_3d_ball_known_value(self):
        # number of integer points with x^2 + y^2 + z^2 <= 100 is 4169
        assert count(Ball(3), 10.0).point_count == 4168


class TestSlabs:
    def req(self):
        return CountRequest(Ellipsoid([2.0, 1.0]), 20.7, haar_rotations(2, 1, 0)[0],
                            homogeneous_extension(test_function("cos2")))

    def test_single_slab_equals_total(self):
        req = self.req()
        total = weighted_count(req)
        h = max(abs(a) for s in default_slabs(req) for a in s)
        one = enumerate_slab(req, (-h, h))
        assert one.count == total.point_count
        assert weighted_count(req, slabs=[(-h, h)]).point_count == total.point_count

    def test_two_slabs_add_up(self):
        req = self.req()
        slabs = default_slabs(req)
        lo, hi = slabs[0][0], slabs[-1][1]
        a = enumerate_slab(req, (lo, 0))
        b = enumerate_slab(req, (1, hi))
        total = weighted_count(req, slabs=[(lo, 0), (1, hi)])
        assert a.weighted + b.weighted == total.weighted_count
        assert a.count + b.count == total.point_count

    def test_empty_slab(self):
        s = enumerate_slab(self.req(), (10_000, 10_001))
        assert s.weighted == 0.0 and s.count == 0

    def test_overlap_rejected(self):
        req = self.req()
        lo, hi = default_slabs(req)[0][0], default_slabs(req)[-1][1]
        with pytest.raises(ValueError, match="overlap"):
            weighted_count(req, slabs=[(lo, 3), (2, hi)])

    def test_gap_rejected(self):
        req = self.req()
        lo, hi = default_slabs(req)[0][0], default_slabs(req)[-1][1]
        with pytest.raises(ValueError, match="gap"):
            weighted_count(req, slabs=[(lo, 3), (5, hi)])

    def test_workers_do_not_change_bits(self):
        req = self.req()
        a = weighted_count(req, workers=1)
        b = weighted_count(req, workers=4)
        assert a == b

    def test_pairwise_sum_order(self):
        vals = [1e16, 1.0, -1e16, 1.0]
        assert pairwise_sum(vals) == (1e16 + 1.0) + (-1e16 + 1.0)
        assert pairwise_sum([]) == 0.0


class TestBudget:
    def test_budget_error(self):
        with pytest.raises(BudgetError) as err:
            count(Ball(3), 1e5)
        assert err.value.rho == 1e5

    def test_budget_is_configurable(self):
        with pytest.raises(BudgetError):
            count(Ball(2), 1000.0, max_rows=100)

    def test_dimension_checked(self):
        with pytest.raises(ValueError):
            CountRequest(Ball(2), 1.0, Rotation.identity(3))

    def test_negative_rho(self):
        with pytest.raises(ValueError):
            CountRequest(Ball(2), -1.0)


@given(st.floats(0.3, 30.0), st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_rotated_square_matches_loop(rho, seed):
    g = haar_rotations(2, 1, seed)[0]
    m = g.matrix

    def inside(a, b):
        x, y = m[0, 0] * a + m[0, 1] * b, m[1, 0] * a + m[1, 1] * b
        return max(abs(x), abs(y)) <= rho * (1 + 1e-12)

    assert count(Polygon.square(), rho, g).point_count == loop_count(rho, inside)
