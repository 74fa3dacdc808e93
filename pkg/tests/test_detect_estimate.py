import numpy as np
import pytest

from corrbreak.core import compute_w, n_pairs, standardize
from corrbreak.detect import DetectionReport, SupportIndexSet, spad_detect
from corrbreak.errors import EmptySupport, SeriesTooShort
from corrbreak.estimate import argmax_split, cusum_curve, reduce_dimension, space_estimate
from corrbreak.signflip import SignflipConfig
from corrbreak.simlab import SimScenario, correlation_matrices, generate, scenario_rng
from oracles import quadruple_cusum


@pytest.fixture(scope="module")
def case7_supports():
    sc = SimScenario(case=7, p=50, T=100)
    out = []
    for r in range(200):
        y = generate(sc, scenario_rng(77, r))
        try:
            out.append(space_estimate(y, SignflipConfig(q=20, seed=r)).support)
        except EmptySupport:
            out.append(None)
    return out


class TestSupportIndexSet:
    def test_pairs_are_one_based(self):
        s = SupportIndexSet(np.array([0, 2]), 4)
        assert s.pairs() == [(1, 2), (1, 4)]
        assert SupportIndexSet.from_pairs([(1, 4), (1, 2)], 4) == s

    def test_diagonal_variant(self):
        s = SupportIndexSet.from_pairs([(2, 2)], 3, include_diagonal=True)
        assert s.pairs() == [(2, 2)]
        with pytest.raises(ValueError):
            SupportIndexSet.from_pairs([(2, 2)], 3)

    def test_offsets_strictly_increasing(self):
        with pytest.raises(ValueError):
            SupportIndexSet(np.array([3, 1]), 5)

    def test_exceeding_is_strict(self):
        s = SupportIndexSet.exceeding(np.array([1.0, 2.0, 2.0, 3.0]), 2.0, 3)
        assert s.offsets.tolist() == [3]
        assert len(s) == 1 and bool(s)


class TestSpad:
    def test_below_threshold_no_rejection(self, rng):
        y = rng.normal(size=(6, 40))
        rep = spad_detect(y, SignflipConfig(q=5, seed=1))
        w = compute_w(standardize(y))
        np.testing.assert_array_equal(rep.w, w)
        assert rep.rejected == bool(np.any(w > rep.thresholds.tau1))
        if not rep.rejected:
            assert len(rep.support) == 0

    def test_strong_change_rejected(self):
        y = generate(SimScenario(case=1, p=40, T=100), scenario_rng(5))
        rep = spad_detect(y, SignflipConfig(q=10, seed=2))
        assert rep.rejected
        assert np.all(rep.w[rep.support.offsets] > rep.thresholds.tau1)

    def test_report_equality(self, rng):
        y = rng.normal(size=(5, 30))
        a = spad_detect(y, SignflipConfig(q=3, seed=2))
        b = spad_detect(y, SignflipConfig(q=3, seed=2))
        assert a == b and isinstance(a, DetectionReport)


class TestCusum:
    def test_hand_value(self):
        u = cusum_curve(np.array([[0.0, 0.0, 1.0, 1.0]]))
        assert u.shape == (1,)
        assert u[0] == pytest.approx(0.0625)

    def test_constant_series(self):
        np.testing.assert_array_equal(cusum_curve(np.full((3, 9), 2.5)), 0.0)

    def test_quadruple_sum(self, rng):
        z = rng.normal(size=(3, 9))
        np.testing.assert_allclose(cusum_curve(z), quadruple_cusum(z), atol=1e-10)

    def test_noiseless_split(self):
        z = np.hstack([np.zeros((2, 37)), np.ones((2, 63))])
        assert argmax_split(cusum_curve(z)) == 37

    def test_first_index_wins_ties(self):
        assert argmax_split(np.array([1.0, 3.0, 3.0, 2.0])) == 3

    def test_too_short(self):
        with pytest.raises(SeriesTooShort):
            cusum_curve(np.ones((1, 3)))


class TestReduce:
    def test_zero_threshold_keeps_all(self, rng):
        x = standardize(rng.normal(size=(5, 20)))
        w = compute_w(x)
        red = reduce_dimension(w, 0.0, x)
        assert len(red.support) == n_pairs(5)
        assert red.z.shape == (10, 20)

    def test_max_threshold_empty(self, rng):
        x = standardize(rng.normal(size=(5, 20)))
        w = compute_w(x)
        with pytest.raises(EmptySupport):
            reduce_dimension(w, float(w.max()), x)

    def test_negative_threshold(self, rng):
        x = standardize(rng.normal(size=(3, 10)))
        with pytest.raises(ValueError):
            reduce_dimension(np.ones(3), -1.0, x)

    def test_support_inside_changed_block(self, case7_supports):
        # only the first floor(p/2) variables change; the support should stay inside that block
        changed = correlation_matrices(7, 50)[1] != np.eye(50)
        inside = 0
        for s in case7_supports:
            if s is not None:
                i, j = s.index_arrays()
                inside += bool(np.all(changed[i, j]))
        assert inside >= 180

    def test_changed_pairs_selected_more_often(self, case7_supports):
        changed = correlation_matrices(7, 50)[1] != np.eye(50)
        iu = np.triu_indices(50, 1)
        hits = np.zeros(iu[0].size)
        for s in case7_supports:
            if s is not None:
                hits[s.offsets] += 1
        mask = changed[iu]
        assert hits[mask].mean() > 10 * hits[~mask].mean()


class TestSpace:
    def test_strong_change_located(self, rng):
        # independent columns, then every variable follows one common +/-1 factor
        before = rng.normal(size=(30, 48))
        factor = rng.choice([-1.0, 1.0], size=72)
        after = factor + 0.1 * rng.normal(size=(30, 72))
        y = np.hstack([before, after])
        rep = space_estimate(y, SignflipConfig(q=10, seed=0))
        assert abs(rep.t_hat - 48) <= 2
        assert rep.beta_hat == rep.t_hat / 120
        assert rep.cusum.shape == (117,)
        assert rep.method == "space"

    def test_empty_support_raised(self, monkeypatch, rng):
        import corrbreak.estimate as est

        y = rng.normal(size=(4, 30))
        real = est.compute_thresholds

        def huge(data, cfg):
            th = real(data, cfg)
            th.tau2 = 1e9
            return th

        monkeypatch.setattr(est, "compute_thresholds", huge)
        with pytest.raises(EmptySupport):
            space_estimate(y)

    def test_deterministic(self):
        y = generate(SimScenario(case=6, p=20, T=60), scenario_rng(8))
        assert space_estimate(y, SignflipConfig(q=5, seed=3)) == space_estimate(
            y, SignflipConfig(q=5, seed=3))
