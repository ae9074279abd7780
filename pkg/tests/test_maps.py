import math

import numpy as np
import pytest
from scipy.optimize import brentq

from thermoformal import maps as M


def _mp_bump(x):
    # independent rewrite of the smooth step used by the MP-like lift
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    a = math.exp(-1.0 / x)
    b = math.exp(-1.0 / (1.0 - x))
    return a / (a + b)


def _mp_bump_deriv(x):
    if x <= 0.0 or x >= 1.0:
        return 0.0
    a = math.exp(-1.0 / x)
    b = math.exp(-1.0 / (1.0 - x))
    return a * b * (x ** -2 + (1.0 - x) ** -2) / (a + b) ** 2


class TestEval:
    def test_doubling(self):
        d = M.doubling_map()
        assert M.map_eval(d, 0.3) == pytest.approx(0.6, abs=1e-15)

    def test_mp_fixed_point(self):
        mp = M.mp_like_map()
        assert M.map_eval(mp, 0.0) == 0.0
        assert M.deriv_at(mp, 0.0) == 1.0

    def test_rotation(self):
        rot = M.rotation_map(0.25)
        assert M.map_eval(rot, 0.9) == pytest.approx(0.15, abs=1e-15)


class TestInverseBranches:
    def test_doubling_depth1(self):
        d = M.doubling_map()
        br = M.inverse_branches(d, 0.0, 1)
        assert sorted(b.y for b in br) == [0.0, 0.5]
        assert all(b.contraction == pytest.approx(0.5, abs=1e-14) for b in br)

    def test_doubling_depth3(self):
        d = M.doubling_map()
        br = M.inverse_branches(d, 0.4321, 3)
        assert len(br) == 8
        assert all(b.contraction == pytest.approx(0.125, abs=1e-14) for b in br)
        ys = sorted(b.y for b in br)
        assert min(np.diff(ys)) > 1e-6  # pairwise distinct

    def test_mp_witness_contraction(self):
        # oracle: invert the explicit lift with an independent root-finder
        # and evaluate 1/f' from the closed-form bump derivative
        mp = M.mp_like_map()
        br = M.inverse_branches(mp, 0.5, 1)
        assert len(br) == 2
        inside = [b for b in br if 0.25 <= b.y <= 0.75]
        assert inside, "at least one preimage must lie in [1/4, 3/4]"
        lift = lambda y: y + _mp_bump(y)
        y_oracle = brentq(lambda y: lift(y) - 0.5, 0.0, 0.5, xtol=1e-14)
        contraction_oracle = 1.0 / (1.0 + _mp_bump_deriv(y_oracle))
        b0 = min(br, key=lambda b: b.y)
        assert b0.y == pytest.approx(y_oracle, abs=1e-10)
        assert b0.contraction == pytest.approx(contraction_oracle, abs=1e-10)
        assert all(b.contraction < 1.0 for b in inside)

    @pytest.mark.parametrize("mapname", ["doubling", "mp_like", "rotation"])
    @pytest.mark.parametrize("depth", [1, 2, 3])
    def test_forward_recovery(self, mapname, depth):
        m = M.builtin_maps()[mapname]()
        rng = np.random.default_rng(7)
        for x in rng.random(12):
            for b in M.inverse_branches(m, x, depth):
                y = b.y
                for _ in range(depth):
                    y = M.map_eval(m, y)
                assert M.circle_dist(y, x) < 1e-9

    def test_degree_count(self):
        m = M.derived_expanding_map(1.2)
        rng = np.random.default_rng(3)
        for x in rng.random(100):
            assert len(M.inverse_branches(m, x, 2)) == 4

    def test_contraction_is_product_of_depth1_factors(self):
        # brute-force composition oracle for n <= 3
        m = M.mp_like_map()
        x = 0.37
        for n in (2, 3):
            got = sorted(b.contraction for b in M.inverse_branches(m, x, n))
            # compose depth-1 enumerations by hand
            frontier = [(x, 1.0)]
            for _ in range(n):
                nxt = []
                for z, c in frontier:
                    for b in M.inverse_branches(m, z, 1):
                        nxt.append((b.y, c * b.contraction))
                frontier = nxt
            want = sorted(c for _, c in frontier)
            assert np.allclose(got, want, rtol=1e-9)


class TestBirkhoff:
    def test_constant(self):
        d = M.doubling_map()
        assert M.birkhoff_sum(d, lambda x: 2.5 * np.ones_like(x), 0.123, 7) == pytest.approx(17.5, abs=1e-12)

    def test_fixed_point(self):
        d = M.doubling_map()
        assert M.birkhoff_sum(d, lambda x: x, 0.0, 11) == 0.0

    def test_period_two(self):
        d = M.doubling_map()
        val = M.birkhoff_sum(d, lambda x: np.cos(2 * np.pi * x), 1.0 / 3.0, 2)
        assert val == pytest.approx(-1.0, abs=1e-12)


class TestBuiltins:
    def test_mp_derivative_shape(self):
        mp = M.mp_like_map()
        xs = np.linspace(0.05, 0.95, 19)
        assert np.all(M.deriv_at(mp, xs) > 1.0)
        left = np.linspace(0.05, 0.5, 200)
        right = np.linspace(0.5, 0.95, 200)
        assert np.all(np.diff(M.deriv_at(mp, left)) >= -1e-12)
        assert np.all(np.diff(M.deriv_at(mp, right)) <= 1e-12)

    def test_mp_min_on_core_interval(self):
        mp = M.mp_like_map()
        g = np.linspace(0.25, 0.75, 10_000)
        fp = M.deriv_at(mp, g)
        assert fp.min() > 1.0
        assert fp.min() == pytest.approx(M.deriv_at(mp, 0.25), rel=1e-6)
        assert M.deriv_at(mp, 0.25) == pytest.approx(M.deriv_at(mp, 0.75), rel=1e-12)

    def test_derived_at_zero_is_doubling(self):
        d0 = M.derived_expanding_map(0.0)
        d = M.doubling_map()
        xs = np.linspace(0.0, 1.0, 2001)
        assert np.array_equal(d0.lift(xs), d.lift(xs))

    def test_derived_sink_threshold(self):
        assert M.deriv_at(M.derived_expanding_map(0.5), 0.0) == pytest.approx(1.5)
        assert M.deriv_at(M.derived_expanding_map(1.5), 0.0) == pytest.approx(0.5)
        # expansion untouched outside the bump support
        m = M.derived_expanding_map(1.5)
        xs = np.linspace(0.126, 0.874, 500)
        assert np.allclose(M.deriv_at(m, xs), 2.0)

    def test_derived_rejects_nonhomeomorphism(self):
        with pytest.raises(ValueError):
            M.derived_expanding_map(2.0)

    def test_catalog_contents(self):
        cat = M.builtin_maps()
        assert {"doubling", "rotation", "mp_like", "derived_expanding"} <= set(cat)


class TestLiftValidation:
    def test_degree_span_enforced(self):
        with pytest.raises(ValueError):
            M.MapSpec(name="bad", degree=2, lift=lambda x: 3.0 * np.asarray(x))

    def test_iterate_map(self):
        d = M.doubling_map()
        d2 = M.iterate_map(d, 2)
        assert d2.degree == 4
        assert M.map_eval(d2, 0.3) == pytest.approx(M.map_eval(d, M.map_eval(d, 0.3)), abs=1e-14)
        assert M.deriv_at(d2, 0.2) == pytest.approx(4.0)


class TestJson:
    def test_builtin_roundtrip(self):
        m = M.derived_expanding_map(0.7)
        obj = M.map_to_json(m)
        m2 = M.map_from_json(obj)
        xs = np.linspace(0, 1, 101)
        assert np.array_equal(m.lift(xs), m2.lift(xs))

    def test_piecewise_poly(self):
        # doubling written as a 2-piece polynomial lift
        obj = {
            "name": "poly-doubling",
            "kind": "piecewise_poly",
            "degree": 2,
            "params": {
                "breakpoints": [0.0, 0.5, 1.0],
                "coefficients": [[0.0, 2.0], [1.0, 2.0]],
            },
        }
        m = M.map_from_json(obj)
        xs = np.linspace(0, 1, 101, endpoint=False)
        assert np.allclose(M.map_eval(m, xs), M.map_eval(M.doubling_map(), xs), atol=1e-12)

    def test_unknown_builtin_rejected(self):
        from thermoformal.errors import SchemaError
        with pytest.raises(SchemaError):
            M.map_from_json({"kind": "builtin", "name": "nope"})


class TestOrbitSampler:
    def test_dither_reproducible(self):
        d = M.doubling_map()
        psi = lambda x: np.cos(2 * np.pi * x)
        x0 = np.random.default_rng(1).random(64)
        a = M.orbit_birkhoff_samples(d, x0, 30, psi, rng=np.random.default_rng(9))
        b = M.orbit_birkhoff_samples(d, x0, 30, psi, rng=np.random.default_rng(9))
        assert np.array_equal(a, b)

    def test_dither_breaks_dyadic_collapse(self):
        # without dither every float64 orbit of the doubling map hits the
        # fixed point 0 by step 53 and stays there
        d = M.doubling_map()
        x0 = np.random.default_rng(2).random(128)
        x = x0.copy()
        for _ in range(60):
            x = M.wrap01(d.lift(x))
        assert np.all(x == 0.0)
        last = M.orbit_birkhoff_samples(d, x0, 60, lambda x: x, rng=np.random.default_rng(3))
        x = x0.copy()
        rng = np.random.default_rng(3)
        tot = np.zeros_like(x)
        for _ in range(60):
            tot += x
            x = M.wrap01(d.lift(x) + 2.0 ** -48 * rng.random(x.shape))
        assert np.array_equal(last, tot)
        assert np.all(x > 0.0)
