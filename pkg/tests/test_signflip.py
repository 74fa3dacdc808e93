import numpy as np
import pytest

from corrbreak.core import compute_w, standardize
from corrbreak.errors import ConfigError, DimensionTooSmall, TrialCountZero
from corrbreak.signflip import (
    SignflipConfig,
    compute_thresholds,
    lower_quantile,
    rademacher,
    run_trials,
    signflip_trial,
)
from oracles import lower_order_statistic, naive_w, rademacher_bits


@pytest.fixture
def small(rng):
    return rng.normal(size=(3, 8)) * [[1.0], [4.0], [0.5]] + [[0.0], [2.0], [-1.0]]


class TestRademacher:
    def test_matches_bitwise_oracle(self):
        np.testing.assert_array_equal(rademacher((3, 8), 42, 0), rademacher_bits(3, 8, 42, 0))
        np.testing.assert_array_equal(rademacher((7, 19), 2**63 + 5, 11),
                                      rademacher_bits(7, 19, 2**63 + 5, 11))

    def test_deterministic_and_distinct(self):
        a = rademacher((20, 50), 1, 0)
        assert np.array_equal(a, rademacher((20, 50), 1, 0))
        assert not np.array_equal(a, rademacher((20, 50), 1, 1))
        assert not np.array_equal(a, rademacher((20, 50), 2, 0))

    def test_balanced(self):
        r = rademacher((100, 1000), 9, 3)
        assert set(np.unique(r)) == {-1, 1}
        # 1e5 fair signs: mean has SD 0.00316
        assert abs(r.mean()) < 0.0126


class TestTrial:
    def test_materialize_and_recompute(self, small):
        signs = rademacher_bits(3, 8, 42, 0)
        expected = naive_w(standardize(signs * small).values)
        np.testing.assert_allclose(signflip_trial(small, 0, 42), expected, atol=1e-10)

    def test_reproducible(self, small):
        np.testing.assert_array_equal(signflip_trial(small, 4, 9), signflip_trial(small, 4, 9))


class TestThresholds:
    def test_single_trial_alpha_one(self, small):
        th = compute_thresholds(small, SignflipConfig(q=1, alpha=1.0, seed=3))
        trial = signflip_trial(small, 0, 3)
        assert th.tau1 == th.tau2 == trial.max()

    def test_pool_matches_trial_by_trial(self, small):
        th = compute_thresholds(small, SignflipConfig(q=3, seed=7))
        pool = np.concatenate([signflip_trial(small, m, 7) for m in range(3)])
        np.testing.assert_array_equal(np.sort(th.trial_matrix.ravel()), np.sort(pool))
        assert th.tau1 == pool.max()
        assert th.tau2 == lower_order_statistic(pool, 0.95)

    @pytest.mark.parametrize("alpha", [0.5, 0.9, 0.95, 0.99, 1.0])
    def test_quantile_is_lower_order_statistic(self, rng, alpha):
        for n in (1, 7, 20, 100, 101):
            v = rng.normal(size=n)
            assert lower_quantile(v, alpha) == lower_order_statistic(v, alpha)

    def test_quantile_round_off(self):
        # 0.95 * 20 is 19.000000000000004 in binary; the 19th value must be chosen
        v = np.arange(1.0, 21.0)
        assert lower_quantile(v, 0.95) == 19.0

    def test_tau2_never_exceeds_tau1(self, rng):
        for s in range(5):
            th = compute_thresholds(rng.normal(size=(5, 30)), SignflipConfig(q=4, seed=s))
            assert th.tau2 <= th.tau1

    def test_workers_do_not_change_result(self, rng):
        y = rng.normal(size=(8, 40))
        a = compute_thresholds(y, SignflipConfig(q=6, seed=5, workers=1))
        b = compute_thresholds(y, SignflipConfig(q=6, seed=5, workers=3))
        assert a == b
        np.testing.assert_array_equal(a.trial_matrix, b.trial_matrix)

    def test_spill_to_disk(self, rng, tmp_path):
        y = rng.normal(size=(6, 30))
        mem = compute_thresholds(y, SignflipConfig(q=5, seed=1))
        disk = compute_thresholds(y, SignflipConfig(q=5, seed=1, max_stored_entries=10,
                                                    spill_dir=str(tmp_path)))
        assert disk.trial_matrix is None
        assert (disk.tau1, disk.tau2) == (mem.tau1, mem.tau2)
        assert list(tmp_path.iterdir()) == []

    def test_custom_statistic(self, rng):
        y = rng.normal(size=(4, 12))
        th = run_trials(y, SignflipConfig(q=2), statistic=lambda z: compute_w(standardize(z)) * 2)
        base = compute_thresholds(y, SignflipConfig(q=2))
        assert th.tau1 == pytest.approx(2 * base.tau1)


class TestConfig:
    def test_zero_trials(self):
        with pytest.raises(TrialCountZero):
            SignflipConfig(q=0)

    @pytest.mark.parametrize("kw", [{"alpha": 0.0}, {"alpha": 1.5}, {"seed": -1},
                                    {"seed": 2**64}, {"workers": 0}])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            SignflipConfig(**kw)

    def test_defaults(self):
        assert SignflipConfig.for_detection().q == 30
        assert SignflipConfig.for_estimation(seed=4).q == 20
        assert SignflipConfig.for_estimation(seed=4).seed == 4

    def test_single_variable(self):
        with pytest.raises(DimensionTooSmall):
            compute_thresholds(np.arange(10.0)[None, :])
