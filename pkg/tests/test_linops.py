import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fomlb import bruteforce, linops
from fomlb.instance import InstanceParams, as_blocks, grad_f0

OPNORM_H_M12 = 23.7946766729714499
OPNORM_A_M12 = 16.9705627484771406
EIG1_M12 = 9.81336202874833342
KAPPA_M12 = 7.59575411272515044
KAPPA_M6 = 3.73205080756887729


def make(m1, m2, dbar=5):
    return InstanceParams(eps=0.1, lf=1.0, m1=m1, m2=m2, dbar=dbar)


class TestApply:
    def test_dimensions(self, c0):
        assert linops.in_dim(c0, "A") == c0.d and linops.out_dim(c0, "A") == c0.n
        assert linops.out_dim(c0, "Abar") == c0.nbar
        assert linops.out_dim(c0, "H") == (c0.m - 1) * c0.dbar
        with pytest.raises(ValueError):
            linops.apply(c0, "A", np.zeros(c0.d + 1))
        with pytest.raises(ValueError):
            linops.apply(c0, "nope", np.zeros(c0.d))

    def test_difference_rows(self, c0, rng):
        x = rng.normal(size=c0.d)
        xb = as_blocks(c0, x)
        hx = linops.apply(c0, "H", x).reshape(c0.m - 1, c0.dbar)
        for k in range(c0.m - 1):
            assert np.allclose(hx[k], c0.m * c0.lf * (xb[k + 1] - xb[k]), rtol=0, atol=1e-12)
        ax = linops.apply(c0, "A", x).reshape(-1, c0.dbar)
        abx = linops.apply(c0, "Abar", x).reshape(-1, c0.dbar)
        assert np.array_equal(ax, hx[[k - 1 for k in c0.Mc]])
        assert np.array_equal(abx, hx[[k - 1 for k in c0.M]])

    def test_consensus_is_null(self, c0, rng):
        x = np.tile(rng.normal(size=c0.dbar), c0.m)
        assert np.all(linops.apply(c0, "H", x) == 0.0)

    def test_abar_abar_t_is_scaled_identity(self, c0, rng):
        y = rng.normal(size=c0.nbar)
        assert np.allclose(linops.apply(c0, "AbarAbarT", y), 2 * c0.m**2 * c0.lf**2 * y, rtol=1e-15, atol=0)
        dense = bruteforce.dense(c0, "AbarAbarT")
        assert np.allclose(dense, 2 * c0.m**2 * np.eye(c0.nbar), atol=1e-9)

    def test_gram_against_dense(self, small, rng):
        for tag, fwd in (("AtA", "A"), ("AbarTAbar", "Abar"), ("HtH", "H")):
            mat = bruteforce.dense(small, fwd)
            x = rng.normal(size=small.d)
            assert np.max(np.abs(linops.apply(small, tag, x) - mat.T @ (mat @ x))) <= 1e-12 * 10

    def test_h_dense_consistency(self, c0, rng):
        mat = bruteforce.dense(c0, "H")
        for _ in range(5):
            x = rng.normal(size=c0.d)
            assert np.max(np.abs(mat @ x - linops.apply(c0, "H", x))) <= 1e-12

    def test_adjoints(self, c0, rng):
        for fwd, adj in (("A", "A_adj"), ("Abar", "Abar_adj"), ("H", "H_adj")):
            x = rng.normal(size=c0.d)
            z = rng.normal(size=linops.out_dim(c0, fwd))
            lhs = linops.apply(c0, fwd, x) @ z
            rhs = x @ linops.apply(c0, adj, z)
            assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_partition_identity_exact(self, c0, rng):
        for _ in range(20):
            x = rng.normal(size=c0.d)
            lhs = linops.apply(c0, "HtH", x)
            rhs = linops.apply(c0, "AtA", x) + linops.apply(c0, "AbarTAbar", x)
            assert np.array_equal(lhs, rhs)

    def test_batch(self, c0, rng):
        X = rng.normal(size=(4, c0.d))
        assert np.array_equal(linops.apply(c0, "AtA", X)[2], linops.apply(c0, "AtA", X[2]))


class TestSupportLocality:
    def test_gram_blocks_touch_neighbours_only(self, c0, rng):
        for _ in range(200):
            x = np.where(rng.random(c0.d) < 0.2, rng.normal(size=c0.d), 0.0)
            sx = as_blocks(c0, x) != 0.0
            for tag in ("AtA", "AbarTAbar"):
                out = as_blocks(c0, linops.apply(c0, tag, x)) != 0.0
                for i in range(c0.m):
                    allowed = sx[max(i - 1, 0) : i + 2].any(axis=0)
                    assert not np.any(out[i] & ~allowed)

    def test_abar_maps_pairs(self, c0, rng):
        for _ in range(200):
            x = np.where(rng.random(c0.d) < 0.2, rng.normal(size=c0.d), 0.0)
            sx = as_blocks(c0, x) != 0.0
            ab = linops.apply(c0, "Abar", x).reshape(-1, c0.dbar) != 0.0
            for k, i in enumerate(c0.M):
                assert not np.any(ab[k] & ~(sx[i - 1] | sx[i]))

    def test_abar_adjoint_scatters(self, c0, rng):
        for _ in range(200):
            y = np.where(rng.random(c0.nbar) < 0.3, rng.normal(size=c0.nbar), 0.0)
            sy = y.reshape(-1, c0.dbar) != 0.0
            out = as_blocks(c0, linops.apply(c0, "Abar_adj", y)) != 0.0
            touched = np.zeros(c0.m, dtype=bool)
            for k, i in enumerate(c0.M):
                assert np.array_equal(out[i - 1], sy[k]) and np.array_equal(out[i], sy[k])
                touched[[i - 1, i]] = True
            assert not out[~touched].any()

    def test_abar_gram_preserves_support(self, c0, rng):
        for _ in range(200):
            y = np.where(rng.random(c0.nbar) < 0.3, rng.normal(size=c0.nbar), 0.0)
            assert np.array_equal(linops.apply(c0, "AbarAbarT", y) != 0.0, y != 0.0)


class TestNorms:
    def test_opnorm_h(self, c0):
        assert linops.opnorm(c0, "H") == pytest.approx(OPNORM_H_M12, rel=1e-8)
        assert math.sqrt(linops.eig_HHT(c0, c0.m - 1)) == pytest.approx(OPNORM_H_M12, rel=1e-14)
        sv = np.linalg.svd(bruteforce.dense(c0, "H"), compute_uv=False)
        assert sv[0] == pytest.approx(OPNORM_H_M12, rel=1e-12)

    def test_opnorm_a(self, c0):
        assert linops.opnorm(c0, "A") == pytest.approx(OPNORM_A_M12, rel=1e-10)
        assert linops.opnorm(c0, "Abar") == pytest.approx(math.sqrt(2) * c0.m * c0.lf, rel=1e-10)

    def test_opnorm_deterministic(self, c0):
        linops._opnorm_cached.cache_clear()
        a = linops.opnorm(c0, "H")
        linops._opnorm_cached.cache_clear()
        assert linops.opnorm(c0, "H") == a

    def test_first_eigenvalue(self, c0):
        assert linops.eig_HHT(c0, 1) == pytest.approx(EIG1_M12, rel=1e-14)
        with pytest.raises(ValueError):
            linops.eig_HHT(c0, 0)
        with pytest.raises(ValueError):
            linops.eig_HHT(c0, c0.m)

    def test_spectrum_against_jacobi(self, c0):
        closed = np.sort(np.repeat([linops.eig_HHT(c0, i) for i in range(1, c0.m)], c0.dbar))
        assert np.max(np.abs(closed - bruteforce.eig_dense(c0, "HHT"))) <= 1e-9

    def test_kappa_joint(self, c0, small):
        assert linops.kappa_joint(c0) == pytest.approx(KAPPA_M12, rel=1e-13)
        assert linops.kappa_joint(small) == pytest.approx(KAPPA_M6, rel=1e-13)
        assert c0.m / 4 <= linops.kappa_joint(c0) < c0.m

    def test_kappa_joint_matches_dense(self):
        p = make(2, 2)
        ev = np.linalg.eigvalsh(bruteforce.dense(p, "HHT"))
        assert math.sqrt(ev[-1] / ev[0]) == pytest.approx(linops.kappa_joint(p), rel=1e-9)

    @pytest.mark.parametrize("m1,m2", [(2, 2), (2, 4), (4, 2), (3, 2), (4, 1)])
    def test_kappa_a_against_dense(self, m1, m2):
        p = make(m1, m2)
        ev = np.linalg.eigvalsh(bruteforce.dense(p, "AAt"))
        assert linops.kappa_A(p) == pytest.approx(math.sqrt(ev[-1] / ev[0]), rel=1e-8)

    @pytest.mark.parametrize("m1,m2", [(2, 2), (2, 4), (4, 2)])
    def test_condition_ratio(self, m1, m2):
        p = make(m1, m2)
        assert linops.kappa_joint(p) / linops.kappa_A(p) >= 3 * m2 / 4

    @pytest.mark.parametrize("m1,m2", [(2, 1), (2, 2), (2, 4), (4, 3)])
    def test_condition_bracket(self, m1, m2):
        p = make(m1, m2)
        assert p.m / 4 <= linops.kappa_joint(p) < p.m


class TestProjections:
    def test_null_h_is_block_average(self, c0, rng):
        v = rng.normal(size=c0.d)
        out = as_blocks(c0, linops.null_project_H(c0, v))
        mean = as_blocks(c0, v).mean(axis=0)
        assert np.allclose(out, mean[None, :], atol=1e-15)

    def test_fixed_point_and_idempotence(self, c0, rng):
        u = np.tile(rng.normal(size=c0.dbar), c0.m)
        assert np.allclose(linops.null_project_H(c0, u), u, rtol=1e-15, atol=0)
        v = rng.normal(size=c0.d)
        once = linops.null_project_H(c0, v)
        assert np.array_equal(linops.null_project_H(c0, once), once)

    def test_projected_gradient_norm(self, c0, rng):
        x = rng.normal(size=c0.d) * 10
        g = grad_f0(c0, x)
        lhs = np.linalg.norm(linops.null_project_H(c0, g)) ** 2
        rhs = np.linalg.norm(as_blocks(c0, g).sum(axis=0)) ** 2 / c0.m
        assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_null_a_projection(self, c0, rng):
        v = rng.normal(size=c0.d)
        p = linops.null_project_A(c0, v)
        assert np.max(np.abs(linops.apply(c0, "A", p))) <= 1e-12
        # residual is in Range(A^T), so orthogonal to Null(A)
        assert abs((v - p) @ p) <= 1e-12 * np.linalg.norm(v) ** 2

    def test_solve_aat(self, c0, rng):
        r = rng.normal(size=c0.n)
        z = linops.solve_AAt(c0, r)
        assert np.allclose(linops.apply(c0, "AAt", z), r, atol=1e-12)


@given(seed=st.integers(0, 2**31 - 1), m2=st.sampled_from([1, 2, 3]))
def test_adjoint_property(seed, m2):
    p = make(2, m2)
    rng = np.random.default_rng(seed)
    x = rng.normal(size=p.d)
    for fwd, adj in (("A", "A_adj"), ("Abar", "Abar_adj"), ("H", "H_adj")):
        z = rng.normal(size=linops.out_dim(p, fwd))
        a = linops.apply(p, fwd, x) @ z
        b = x @ linops.apply(p, adj, z)
        assert abs(a - b) <= 1e-12 * (1 + abs(a)) * np.linalg.norm(x) * np.linalg.norm(z)


@given(seed=st.integers(0, 2**31 - 1))
def test_partition_identity_property(c0, seed):
    x = np.random.default_rng(seed).normal(size=c0.d)
    assert np.array_equal(linops.apply(c0, "HtH", x), linops.apply(c0, "AtA", x) + linops.apply(c0, "AbarTAbar", x))
