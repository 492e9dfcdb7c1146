from __future__ import annotations

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from gemgls.covmodel import (
    KroneckerModel,
    MeanSpec,
    ar1_correlation,
    erdos_renyi_correlation,
    sample_matrix_variate,
    star_block_correlation,
)
from gemgls.design import TwoGroupDesign
from gemgls.errors import DegenerateVarianceError, InvalidParameterError, SingularDesignError
from gemgls.gls import bh_adjust, design_effect, gls_fit, ols_fit, paired_t, sd_ratio, unpaired_t
from oracles import (
    bh_bruteforce,
    bh_rejections,
    design_effect_blue,
    gls_whitened,
    paired_t_scipy,
    random_spd,
    unpaired_t_scipy,
)


def _design(rng, n):
    n1 = int(rng.integers(2, n - 1))
    return TwoGroupDesign(rng.permutation(np.r_[np.ones(n1, int), np.full(n - n1, 2)]))


class TestGlsFit:
    def test_identity_weights_is_ols(self):
        rng = np.random.default_rng(0)
        design = TwoGroupDesign.contiguous(4, 6)
        x = rng.standard_normal((10, 7))
        g = gls_fit(x, design, np.eye(10))
        o = ols_fit(x, design)
        np.testing.assert_allclose(g.beta_hat, o.beta_hat, atol=1e-12)
        np.testing.assert_allclose(g.gamma_hat, o.gamma_hat, atol=1e-12)

    def test_scale_invariance(self):
        rng = np.random.default_rng(1)
        design = TwoGroupDesign.contiguous(5, 5)
        x = rng.standard_normal((10, 6))
        b_inv = np.linalg.inv(random_spd(rng, 10))
        c = 7.5
        a, b = gls_fit(x, design, b_inv), gls_fit(x, design, c * b_inv)
        np.testing.assert_allclose(b.beta_hat, a.beta_hat, atol=1e-12)
        assert b.design_effect == pytest.approx(a.design_effect / c, rel=1e-12)
        np.testing.assert_allclose(b.t_stats, a.t_stats * np.sqrt(c), rtol=1e-10)
        np.testing.assert_array_equal(np.argsort(-np.abs(a.gamma_hat), kind="stable"),
                                      np.argsort(-np.abs(b.gamma_hat), kind="stable"))

    @given(seed=st.integers(0, 100_000), n=st.integers(4, 25))
    @settings(max_examples=50, deadline=None)
    def test_whitened_oracle(self, seed, n):
        rng = np.random.default_rng(seed)
        design = _design(rng, n)
        x = rng.standard_normal((n, 5))
        b_inv = np.linalg.inv(random_spd(rng, n))
        res = gls_fit(x, design, b_inv)
        np.testing.assert_allclose(res.beta_hat, gls_whitened(x, design.labels, b_inv), atol=1e-9)
        np.testing.assert_allclose(res.gamma_hat, res.beta_hat[0] - res.beta_hat[1], atol=1e-14)
        np.testing.assert_allclose(res.t_stats, res.gamma_hat / np.sqrt(res.design_effect))
        assert res.design_effect > 0

    def test_noiseless_recovery(self):
        rng = np.random.default_rng(2)
        design = TwoGroupDesign(rng.permutation([1] * 6 + [2] * 9))
        mean = MeanSpec(rng.standard_normal(8), rng.standard_normal(8))
        b = random_spd(rng, 15)
        x = sample_matrix_variate(mean, KroneckerModel(np.eye(8), b), design, z=np.zeros((15, 8)))
        res = gls_fit(x, design, np.linalg.inv(b))
        np.testing.assert_allclose(res.gamma_hat, mean.gamma, atol=1e-10)
        np.testing.assert_allclose(res.beta_hat[0], mean.mu + mean.gamma / 2, atol=1e-10)

    def test_p_values_normal_reference(self):
        rng = np.random.default_rng(3)
        design = TwoGroupDesign.balanced(10)
        res = gls_fit(rng.standard_normal((10, 4)), design, np.eye(10))
        from scipy import stats
        np.testing.assert_allclose(res.p_values, 2 * stats.norm.sf(np.abs(res.t_stats)))

    def test_singular_design(self):
        design = TwoGroupDesign.contiguous(2, 2)
        with pytest.raises(SingularDesignError):
            gls_fit(np.zeros((4, 2)), design, np.ones((4, 4)))

    def test_shape_mismatch(self):
        with pytest.raises(InvalidParameterError):
            gls_fit(np.zeros((4, 2)), TwoGroupDesign.balanced(4), np.eye(5))

    def test_csv(self, tmp_path):
        res = gls_fit(np.arange(8.0).reshape(4, 2) ** 2, TwoGroupDesign.balanced(4), np.eye(4))
        res.write_csv(tmp_path / "g.csv", ["a", "b"])
        lines = (tmp_path / "g.csv").read_text().splitlines()
        assert lines[0] == "variable,gamma_hat,t,p,fdr"
        assert lines[1].startswith("a,") and len(lines) == 3


class TestTable1:
    def test_ar1_n80_sd_gls(self):
        design = TwoGroupDesign.contiguous(40, 40)
        b = ar1_correlation(80, 0.8)
        assert np.sqrt(design_effect(design, np.linalg.inv(b))) == pytest.approx(0.46, abs=0.01)

    def test_ar1_n40_rho06_design_effect(self):
        design = TwoGroupDesign.contiguous(20, 20)
        b = ar1_correlation(40, 0.6)
        assert design_effect(design, np.linalg.inv(b)) == pytest.approx(0.53**2, abs=0.011)

    def test_er_n80_magnitude(self):
        design = TwoGroupDesign.contiguous(40, 40)
        b = erdos_renyi_correlation(80, 80, 0.6, 0.8, seed=7)
        assert 0.1 <= np.sqrt(design_effect(design, np.linalg.inv(b))) <= 0.3

    def test_sd_ratio_ar1(self):
        assert sd_ratio(ar1_correlation(80, 0.8), TwoGroupDesign.contiguous(40, 40)) == pytest.approx(1.32, abs=0.01)

    def test_sd_ratio_star_block(self):
        b = star_block_correlation(2, 20, 0.5)
        assert sd_ratio(b, TwoGroupDesign.contiguous(20, 20)) == pytest.approx(1.51, abs=0.01)


class TestDesignEffect:
    @pytest.mark.parametrize("n1,n2", [(3, 3), (5, 8), (20, 20)])
    def test_identity(self, n1, n2):
        de = design_effect(TwoGroupDesign.contiguous(n1, n2), np.eye(n1 + n2))
        assert de == pytest.approx(1 / n1 + 1 / n2)
        if n1 == n2:
            assert de * (n1 + n2) / 4 == pytest.approx(1.0)

    @given(seed=st.integers(0, 100_000), n=st.integers(4, 30))
    @settings(max_examples=100, deadline=None)
    def test_blue_oracle_and_gauss_markov(self, seed, n):
        rng = np.random.default_rng(seed)
        design = _design(rng, n)
        b = random_spd(rng, n)
        de = design_effect(design, np.linalg.inv(b))
        assert de == pytest.approx(design_effect_blue(b, design.labels), rel=1e-8)
        assert sd_ratio(b, design) >= 1 - 1e-9

    def test_identity_ratio(self):
        assert sd_ratio(np.eye(6), TwoGroupDesign.balanced(6)) == pytest.approx(1.0)


class TestOls:
    def test_constant_columns(self):
        assert np.all(ols_fit(np.full((4, 3), 2.5), TwoGroupDesign.balanced(4)).gamma_hat == 0)

    def test_hand_example(self):
        design = TwoGroupDesign(np.array([1, 2, 1, 2]))
        x = np.array([[0.0], [1.0], [2.0], [3.0]])
        assert ols_fit(x, design).gamma_hat[0] == pytest.approx(-1.0)


class TestUnpaired:
    def test_hand_example(self):
        design = TwoGroupDesign(np.array([1, 2, 1, 2]))
        res = unpaired_t(np.array([[0.0], [1.0], [2.0], [3.0]]), design)
        assert res.t_stats[0] == pytest.approx(-1 / np.sqrt(2))
        assert res.dof == 2 and res.flavor == "unpaired"

    @given(seed=st.integers(0, 100_000), n=st.integers(4, 30))
    @settings(max_examples=50, deadline=None)
    def test_scipy_oracle(self, seed, n):
        rng = np.random.default_rng(seed)
        design = _design(rng, n)
        x = rng.standard_normal((n, 4))
        np.testing.assert_allclose(unpaired_t(x, design).t_stats, unpaired_t_scipy(x, design.labels), rtol=1e-10)

    def test_degenerate(self):
        with pytest.raises(DegenerateVarianceError):
            unpaired_t(np.ones((4, 2)), TwoGroupDesign.balanced(4))

    def _null_variance(self, b, reps=10_000):
        n = b.shape[0]
        design = TwoGroupDesign.contiguous(n // 2, n // 2)
        z = np.random.default_rng(4).standard_normal((n, reps))
        x = np.linalg.cholesky(b) @ z
        return np.var(unpaired_t(x, design).t_stats)

    def test_null_calibration_iid(self):
        assert 0.9 <= self._null_variance(np.eye(20)) <= 1.15

    def test_overdispersion_ar1(self):
        # contiguous groups under AR1 put positively correlated samples in each group
        b = ar1_correlation(20, 0.8)
        assert self._null_variance(b) > 1.2


class TestPaired:
    def test_hand_example(self):
        x = np.array([[0.0], [1.0], [1.0], [9.0], [9.0], [4.0]])
        res = paired_t(x, [(0, 1), (2, 5)])
        assert res.t_stats[0] == pytest.approx(-np.sqrt(2))
        assert res.dof == 1

    def test_constant_shift_degenerate(self):
        rng = np.random.default_rng(5)
        g1 = rng.standard_normal((4, 3))
        with pytest.raises(DegenerateVarianceError):
            paired_t(np.vstack([g1, g1 + 2.0]))

    @given(seed=st.integers(0, 100_000), k=st.integers(2, 15))
    @settings(max_examples=50, deadline=None)
    def test_scipy_oracle(self, seed, k):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((2 * k, 3))
        pairs = rng.permutation(2 * k).reshape(k, 2)
        # the displayed statistic omits the sqrt(k) factor of the textbook paired t
        ours = paired_t(x, pairs).t_stats
        np.testing.assert_allclose(ours * np.sqrt(k), paired_t_scipy(x, pairs), rtol=1e-9)

    def test_bad_pairing(self):
        with pytest.raises(InvalidParameterError):
            paired_t(np.zeros((4, 1)), [(0, 1), (1, 2)])
        with pytest.raises(InvalidParameterError):
            paired_t(np.zeros((5, 1)))

    def test_twin_calibration(self):
        # only twins correlate: paired differences cancel the shared component
        n_pairs, reps = 10, 10_000
        rng = np.random.default_rng(6)
        shared = rng.standard_normal((n_pairs, reps)) * 2.0
        x = np.vstack([shared + rng.standard_normal((n_pairs, reps)),
                       shared + rng.standard_normal((n_pairs, reps))])
        design = TwoGroupDesign.contiguous(n_pairs, n_pairs)
        from gemgls.evaluation import calibration_quantiles
        slope_paired = calibration_quantiles(paired_t(x).t_stats).slope
        slope_unpaired = calibration_quantiles(unpaired_t(x, design).t_stats).slope
        assert abs(slope_paired - 1) < abs(slope_unpaired - 1)


class TestBH:
    def test_hand_example(self):
        adj = bh_adjust([0.01, 0.02, 0.5])
        np.testing.assert_allclose(adj, [0.03, 0.03, 0.5])
        assert np.sum(adj <= 0.1) == 2

    def test_all_ones(self):
        adj = bh_adjust(np.ones(5))
        np.testing.assert_array_equal(adj, np.ones(5))

    def test_single(self):
        assert bh_adjust([0.37])[0] == pytest.approx(0.37)

    @pytest.mark.parametrize("bad", [[0.1, 1.2], [-0.1], [np.nan]])
    def test_out_of_range(self, bad):
        with pytest.raises(InvalidParameterError):
            bh_adjust(bad)

    @given(p=st.lists(st.floats(0, 1), min_size=1, max_size=40), q=st.floats(0.01, 0.5))
    @settings(max_examples=200, deadline=None)
    def test_bruteforce_oracle(self, p, q):
        adj = bh_adjust(p)
        np.testing.assert_allclose(adj, bh_bruteforce(p), rtol=1e-12, atol=1e-15)
        ps = np.sort(p)
        # ties with the step-up boundary are decided by rounding, not by the rule
        assume(np.all(np.abs(ps * len(p) / np.arange(1, len(p) + 1) - q) > 1e-9))
        assert int(np.sum(adj <= q)) == bh_rejections(p, q)
