import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fomlb import bruteforce, linops
from fomlb.instance import as_blocks, g_val, gbar_val
from fomlb.prox import prox_check, prox_g, prox_gbar, soft_threshold, two_point_prox


class TestTwoPoint:
    def test_reference_pairs(self):
        # values confirmed by numeric minimization in test_bruteforce
        assert two_point_prox(3.0, 1.0, 0.5) == (2.5, 1.5)
        assert two_point_prox(2.0, 1.0, 1.0) == (1.5, 1.5)

    def test_tie_takes_average(self):
        za, zb = two_point_prox(2.0, 0.0, 1.0)
        assert za == zb == 1.0

    def test_against_numeric(self, rng):
        a = rng.normal(size=500) * 3
        b = rng.normal(size=500) * 3
        c = rng.uniform(0.01, 2.0, size=500)
        za, zb = two_point_prox(a, b, c)
        na, nb = bruteforce._prox_pair(a, b, c)
        assert np.max(np.abs(za - na)) <= 1e-8 and np.max(np.abs(zb - nb)) <= 1e-8


class TestSoftThreshold:
    def test_reference(self):
        assert soft_threshold(2.0, 1.0) == 1.0
        assert soft_threshold(-0.5, 1.0) == 0.0
        assert soft_threshold(1.0, 1.0) == 0.0
        assert soft_threshold(-3.0, 1.0) == -2.0


class TestProxG:
    def test_zero(self, c0):
        assert np.all(prox_g(c0, np.zeros(c0.d), 0.3) == 0.0)

    def test_eta_must_be_positive(self, c0):
        with pytest.raises(ValueError):
            prox_g(c0, np.zeros(c0.d), 0.0)
        with pytest.raises(ValueError):
            prox_gbar(c0, np.zeros(c0.nbar), -1.0)

    def test_untouched_blocks(self, c0, rng):
        x = rng.normal(size=c0.d)
        out = as_blocks(c0, prox_g(c0, x, 0.01))
        coupled = {i - 1 for i in c0.M} | set(c0.M)
        for i in range(c0.m):
            if i not in coupled:
                assert np.array_equal(out[i], as_blocks(c0, x)[i])

    def test_separable(self, c0, rng):
        x = rng.normal(size=c0.d) * 2
        eta = 0.02
        out = as_blocks(c0, prox_g(c0, x, eta))
        xb = as_blocks(c0, x)
        for i in c0.M:
            za, zb = two_point_prox(xb[i - 1], xb[i], eta * c0.beta)
            assert np.array_equal(out[i - 1], za) and np.array_equal(out[i], zb)

    def test_support_locality(self, c0, rng):
        for _ in range(200):
            x = np.where(rng.random(c0.d) < 0.2, rng.normal(size=c0.d), 0.0)
            sx = as_blocks(c0, x) != 0.0
            out = as_blocks(c0, prox_g(c0, x, float(rng.uniform(0.001, 0.1)))) != 0.0
            for i in range(c0.m):
                assert not np.any(out[i] & ~sx[max(i - 1, 0) : i + 2].any(axis=0))

    def test_optimality_check(self, c0, rng):
        for _ in range(100):
            eta = float(10 ** rng.uniform(-3, 0))
            x = rng.normal(size=c0.d) * c0.beta * eta
            assert prox_check(c0, "g", x, eta) <= 1e-10

    def test_perturbed_output_fails_check(self, c0, rng):
        x = rng.normal(size=c0.d) * 3
        z = prox_g(c0, x, 0.05)
        z[7] += 0.1
        assert prox_check(c0, "g", x, 0.05, candidate=z) > 1e-3
        assert prox_check(c0, "g", np.zeros(c0.d), 0.05) == 0.0

    def test_objective_decrease(self, c0, rng):
        x = rng.normal(size=c0.d) * 2
        eta = 0.03
        z = prox_g(c0, x, eta)
        best = g_val(c0, z) + np.sum((z - x) ** 2) / (2 * eta)
        for _ in range(100):
            w = z + rng.normal(size=c0.d) * 10 ** rng.uniform(-4, 0)
            assert best <= g_val(c0, w) + np.sum((w - x) ** 2) / (2 * eta) + 1e-12


class TestProxGbar:
    def test_threshold(self, c0):
        c = 0.5 * c0.beta / (c0.m * c0.lf)
        y = np.zeros(c0.nbar)
        y[0], y[1], y[2] = c + 1.0, -c / 2, c
        out = prox_gbar(c0, y, 0.5)
        assert out[0] == pytest.approx(1.0, rel=1e-14)
        assert out[1] == 0.0 and out[2] == 0.0

    def test_zero_and_support(self, c0, rng):
        assert np.all(prox_gbar(c0, np.zeros(c0.nbar), 1.0) == 0.0)
        y = np.where(rng.random(c0.nbar) < 0.4, rng.normal(size=c0.nbar) * 5, 0.0)
        assert not np.any((prox_gbar(c0, y, 0.2) != 0.0) & (y == 0.0))

    def test_optimality_check(self, c0, rng):
        for _ in range(100):
            eta = float(10 ** rng.uniform(-3, 0))
            y = rng.normal(size=c0.nbar) * c0.beta / c0.m * eta * 2
            assert prox_check(c0, "gbar", y, eta) <= 1e-10

    def test_perturbed_output_fails_check(self, c0, rng):
        y = rng.normal(size=c0.nbar) * 3
        z = prox_gbar(c0, y, 0.1)
        z[3] += 0.1
        assert prox_check(c0, "gbar", y, 0.1, candidate=z) > 1e-3

    def test_unknown_kind(self, c0):
        with pytest.raises(ValueError):
            prox_check(c0, "h", np.zeros(c0.d), 1.0)

    def test_g_prox_consistent_with_gbar_at_consensus(self, c0, rng):
        x = np.tile(rng.normal(size=c0.dbar), c0.m)
        assert np.array_equal(prox_g(c0, x, 0.1), x)
        assert np.all(linops.apply(c0, "Abar", x) == 0.0)


@given(seed=st.integers(0, 2**31 - 1), eta=st.floats(1e-4, 1.0))
def test_prox_g_nonexpansive(c0, seed, eta):
    rng = np.random.default_rng(seed)
    x, xp = rng.normal(size=(2, c0.d)) * c0.beta * eta
    lhs = np.linalg.norm(prox_g(c0, x, eta) - prox_g(c0, xp, eta))
    assert lhs <= np.linalg.norm(x - xp) + 1e-12


@given(seed=st.integers(0, 2**31 - 1), eta=st.floats(1e-4, 1.0))
def test_prox_gbar_nonexpansive(c0, seed, eta):
    rng = np.random.default_rng(seed)
    y, yp = rng.normal(size=(2, c0.nbar)) * 5
    lhs = np.linalg.norm(prox_gbar(c0, y, eta) - prox_gbar(c0, yp, eta))
    assert lhs <= np.linalg.norm(y - yp) + 1e-12


@given(seed=st.integers(0, 2**31 - 1), eta=st.floats(1e-3, 1.0))
def test_prox_objective_minimal(c0, seed, eta):
    rng = np.random.default_rng(seed)
    y = rng.normal(size=c0.nbar) * 5
    z = prox_gbar(c0, y, eta)
    best = gbar_val(c0, z) + np.sum((z - y) ** 2) / (2 * eta)
    w = z + rng.normal(size=c0.nbar) * 0.01
    assert best <= gbar_val(c0, w) + np.sum((w - y) ** 2) / (2 * eta) + 1e-12
