import itertools
import math

import numpy as np
import pytest

from sentrycam.metrics import (
    NearestCentroidPredictor,
    interslice_correlation,
    intraslice_preservation,
    reconstruction_accuracy,
    spearman,
)


from oracles import oracle_preservation, oracle_spearman


def rotation(theta):
    return np.array([[math.cos(theta), -math.sin(theta)],
                     [math.sin(theta), math.cos(theta)]])


class TestIntraslicePreservation:
    def test_isometric_copy_is_perfect(self, rng):
        high = rng.standard_normal((40, 2))
        low = high @ rotation(0.7).T + np.array([3.0, -1.0])
        res = intraslice_preservation(high, low, 5)
        assert res.fraction == 1.0
        assert res.mean_count == 5.0

    def test_swapped_far_clusters_near_zero(self, rng):
        a = rng.standard_normal((20, 3)) * 0.1
        b = rng.standard_normal((20, 3)) * 0.1 + 50.0
        high = np.vstack([a, b])
        low2d = np.vstack([
            rng.standard_normal((20, 2)) * 0.1 + 50.0,
            rng.standard_normal((20, 2)) * 0.1,
        ])
        res = intraslice_preservation(high, low2d, 5)
        # neighbors stay inside each cluster but pair across spaces randomly
        assert res.fraction <= 0.5

    def test_matches_bruteforce_oracle(self, backend, rng):
        high = rng.standard_normal((60, 10))
        low = rng.standard_normal((60, 2))
        res = intraslice_preservation(high, low, 7)
        assert res.fraction == pytest.approx(oracle_preservation(high, low, 7), abs=1e-12)

    def test_isometry_invariance_of_either_space(self, rng):
        high = rng.standard_normal((30, 4))
        low = rng.standard_normal((30, 2))
        base = intraslice_preservation(high, low, 4).fraction
        moved = intraslice_preservation(high, low @ rotation(1.1).T + 7.0, 4).fraction
        assert moved == base

    def test_size_mismatch(self, rng):
        with pytest.raises(ValueError):
            intraslice_preservation(rng.standard_normal((10, 3)),
                                    rng.standard_normal((9, 2)), 2)


class TestReconstructionAccuracy:
    def test_identity_reconstruction(self, rng):
        pts = rng.standard_normal((30, 4))
        labels = rng.integers(0, 3, 30)
        predictor = NearestCentroidPredictor(pts, labels)
        assert reconstruction_accuracy(pts, pts.copy(), predictor) == 1.0

    def test_constant_predictor(self, rng):
        pts = rng.standard_normal((20, 4))
        assert reconstruction_accuracy(
            pts, rng.standard_normal((20, 4)), lambda x: np.zeros(len(x))
        ) == 1.0

    def test_cluster_swap_scores_zero(self):
        a = np.zeros((10, 2))
        b = np.full((10, 2), 10.0)
        pts = np.vstack([a, b])
        labels = np.array([0] * 10 + [1] * 10)
        predictor = NearestCentroidPredictor(pts, labels)
        swapped = np.vstack([b, a])
        assert reconstruction_accuracy(pts, swapped, predictor) == 0.0

    def test_predictor_tie_breaks_to_smaller_class(self):
        pts = np.array([[-1.0], [1.0]])
        predictor = NearestCentroidPredictor(pts, np.array([0, 1]))
        assert predictor(np.array([[0.0]]))[0] == 0


class TestSpearman:
    def test_identical(self):
        res = spearman(np.array([1.0, 2.0, 3.0]), np.array([10.0, 20.0, 30.0]))
        assert res.rho == pytest.approx(1.0)

    def test_reversed(self):
        res = spearman(np.array([1.0, 2.0, 3.0]), np.array([3.0, 2.0, 1.0]))
        assert res.rho == pytest.approx(-1.0)

    def test_constant_is_degenerate_zero(self):
        res = spearman(np.array([1.0, 1.0, 1.0]), np.array([1.0, 2.0, 3.0]))
        assert res == (0.0, True)

    def test_symmetric(self, rng):
        a = rng.standard_normal(9)
        b = rng.standard_normal(9)
        assert spearman(a, b).rho == pytest.approx(spearman(b, a).rho)

    def test_matches_definition_on_small_permutations(self):
        base = [0.0, 1.0, 2.0, 3.0, 4.0]
        values = [0.0, 1.0, 1.0, 2.0, 3.0]  # includes ties
        for perm in itertools.permutations(values):
            got = spearman(np.array(base), np.array(perm))
            want = oracle_spearman(base, perm)
            assert got.rho == pytest.approx(want, abs=1e-12)
            assert -1.0 <= got.rho <= 1.0

    def test_length_validation(self):
        with pytest.raises(ValueError):
            spearman(np.array([1.0]), np.array([2.0]))


class TestIntersliceCorrelation:
    def arc_trajectories(self, n=12, t=6):
        # points move along a unit arc: cosine-to-anchor and euclidean
        # rankings agree, so an isometric 2-D copy scores exactly 1
        rng = np.random.default_rng(3)
        base = rng.uniform(0.0, 0.3, n)
        high = np.empty((n, t, 2))
        for e in range(t):
            theta = base + 0.15 * (t - 1 - e)
            high[:, e, 0] = np.cos(theta)
            high[:, e, 1] = np.sin(theta)
        return high

    def test_isometric_copy_scores_one(self):
        high = self.arc_trajectories()
        low = high @ rotation(0.4).T + np.array([5.0, 5.0])
        res = interslice_correlation(high, low)
        assert np.allclose(res.per_sample, 1.0)
        assert res.mean == pytest.approx(1.0)

    def test_reversed_rankings_score_minus_one(self):
        high = self.arc_trajectories(n=5, t=3)
        low = np.empty_like(high)
        low[:, 0] = high[:, 1]
        low[:, 1] = high[:, 0]
        low[:, 2] = high[:, 2]
        res = interslice_correlation(high, low)
        assert np.allclose(res.per_sample, -1.0)

    def test_matches_direct_recombination_on_drift(self, rng):
        from sentrycam.ingest import synth_trajectory
        from sentrycam.metrics import spearman as sp

        snaps = synth_trajectory("drift", epochs=5, n_per_class=8, classes=2, dim=6, seed=2)
        high = np.stack([s.matrix.astype(np.float64) for s in snaps], axis=1)
        low = np.stack([rng.standard_normal((16, 2)) for _ in snaps], axis=1)
        res = interslice_correlation(high, low)
        anchor = 4
        for i in range(high.shape[0]):
            hv, lv = [], []
            for e in range(4):
                a = high[i, e]
                b = high[i, anchor]
                hv.append(1.0 - (a @ b) / (np.linalg.norm(a) * np.linalg.norm(b)))
                lv.append(np.linalg.norm(low[i, e] - low[i, anchor]))
            assert res.per_sample[i] == pytest.approx(sp(np.array(hv), np.array(lv)).rho)

    def test_needs_three_epochs(self, rng):
        with pytest.raises(ValueError):
            interslice_correlation(rng.standard_normal((4, 2, 3)),
                                   rng.standard_normal((4, 2, 2)))

    def test_alignment_validated(self, rng):
        with pytest.raises(ValueError):
            interslice_correlation(rng.standard_normal((4, 5, 3)),
                                   rng.standard_normal((3, 5, 2)))
