import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sentrycam.audit import (
    AlertConfig,
    audit_run,
    check_alert,
    inter_cluster_distance,
    intra_cluster_variance,
    smooth,
    surrogate_loss_series,
)
from sentrycam.ingest import synth_trajectory


from oracles import oracle_alert_epoch, oracle_cluster_metrics


class TestInterClusterDistance:
    def test_three_four_five(self):
        pts = np.array([[0.0, 0.0], [0.0, 0.0], [3.0, 4.0], [3.0, 4.0]])
        labels = np.array([0, 0, 1, 1])
        assert inter_cluster_distance(pts, labels) == pytest.approx(5.0)

    def test_coincident_centroids(self):
        pts = np.array([[1.0, 1.0], [1.0, 1.0]])
        assert inter_cluster_distance(pts, np.array([0, 1])) == 0.0

    def test_unit_triangle(self):
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3) / 2]])
        assert inter_cluster_distance(pts, np.array([0, 1, 2])) == pytest.approx(1.0)

    def test_single_class_rejected(self):
        with pytest.raises(ValueError):
            inter_cluster_distance(np.ones((3, 2)), np.zeros(3))


class TestIntraClusterVariance:
    def test_pair_on_a_line(self):
        pts = np.array([[0.0, 0.0], [2.0, 0.0]])
        assert intra_cluster_variance(pts, np.zeros(2)) == pytest.approx(1.0)

    def test_all_points_at_centroid(self):
        assert intra_cluster_variance(np.ones((4, 3)), np.zeros(4)) == 0.0

    def test_mean_over_classes(self):
        pts = np.array([[-1.0], [1.0], [-math.sqrt(3)], [math.sqrt(3)]])
        labels = np.array([0, 0, 1, 1])
        assert intra_cluster_variance(pts, labels) == pytest.approx(2.0)

    def test_singleton_cluster_is_zero(self):
        pts = np.array([[5.0, 5.0]])
        assert intra_cluster_variance(pts, np.array([3])) == 0.0


class TestHomogeneity:
    @settings(max_examples=25, deadline=None)
    @given(scale=st.floats(0.01, 100.0))
    def test_metric_scaling_degrees(self, scale):
        rng = np.random.default_rng(1)
        pts = rng.standard_normal((30, 3))
        labels = rng.integers(0, 3, 30)
        assert inter_cluster_distance(pts * scale, labels) == pytest.approx(
            scale * inter_cluster_distance(pts, labels)
        )
        assert intra_cluster_variance(pts * scale, labels) == pytest.approx(
            scale**2 * intra_cluster_variance(pts, labels)
        )


class TestSmooth:
    def test_factor_one_is_identity(self, rng):
        x = rng.standard_normal(10)
        assert np.array_equal(smooth(x, 1.0), x)

    def test_constant_series(self):
        assert np.allclose(smooth(np.full(6, 2.5), 0.3), 2.5)

    def test_recurrence(self):
        assert smooth([0.0, 1.0], 0.5).tolist() == [0.0, 0.5]

    def test_factor_validated(self):
        with pytest.raises(ValueError):
            smooth([1.0], 0.0)


class TestCheckAlert:
    def test_decreasing_fires_at_k(self):
        series = np.linspace(10.0, 1.0, 10)
        cfg = AlertConfig(consecutive=2, margin_fraction=0.0)
        rec = check_alert(series, "decrease", cfg)
        assert rec.epoch == 2
        assert rec.direction == "decrease"

    def test_increasing_fires_at_k(self):
        for k in (1, 2, 3):
            cfg = AlertConfig(consecutive=k, margin_fraction=0.0)
            rec = check_alert(np.arange(10.0), "increase", cfg)
            assert rec.epoch == k

    def test_constant_never_fires(self):
        cfg = AlertConfig(margin_fraction=0.0)
        assert check_alert(np.full(12, 3.3), "decrease", cfg) is None
        assert check_alert(np.full(12, 3.3), "increase", cfg) is None

    def test_margin_blocks_small_moves(self):
        # big early swings set the volatility; the later drift is too small
        series = np.array([0.0, 10.0, 0.0, 10.0, 0.0, 10.0, 9.99, 9.98, 9.97])
        cfg = AlertConfig(consecutive=2, margin_fraction=0.25, smoothing=1.0)
        assert check_alert(series, "decrease", cfg) is None

    def test_matches_oracle_on_random_series(self, rng):
        cfg = AlertConfig()
        for _ in range(30):
            raw = rng.standard_normal(20).cumsum()
            smoothed = smooth(raw, cfg.smoothing)
            got = check_alert(smoothed, "increase", cfg)
            want = oracle_alert_epoch(raw.tolist(), "increase")
            assert (got.epoch if got else None) == want

    def test_series_length_validated(self):
        with pytest.raises(ValueError):
            check_alert(np.array([1.0, 2.0]), "increase", AlertConfig(consecutive=2))

    def test_direction_validated(self):
        with pytest.raises(ValueError):
            check_alert(np.arange(5.0), "sideways", AlertConfig())


def run_to_series(scenario, seed, epochs=30, collapse_epoch=7, classes=5, n=60, dim=64):
    snaps = synth_trajectory(
        scenario, epochs=epochs, n_per_class=n, classes=classes, dim=dim,
        collapse_epoch=collapse_epoch if scenario == "collapse" else None, seed=seed,
    )
    points = [np.asarray(s.matrix, dtype=np.float64) for s in snaps]
    labels = [s.labels for s in snaps]
    return points, labels


class TestAuditRun:
    def test_collapse_fires_soon_after_collapse(self):
        points, labels = run_to_series("collapse", seed=0)
        result = audit_run(points, labels)
        rec = result.geometry_alert
        assert rec is not None
        assert 7 < rec.epoch <= 10

    def test_geometry_leads_surrogate_loss(self):
        points, labels = run_to_series("collapse", seed=1)
        loss = surrogate_loss_series(points, labels)
        result = audit_run(points, labels, surrogate_loss=loss)
        assert result.geometry_alert is not None
        assert result.loss_alert is not None
        assert result.geometry_alert.epoch < result.loss_alert.epoch

    def test_matches_independent_reimplementation(self):
        points, labels = run_to_series("collapse", seed=2, epochs=20)
        loss = surrogate_loss_series(points, labels)
        result = audit_run(points, labels, surrogate_loss=loss)

        inter = [oracle_cluster_metrics(p, l)[0] for p, l in zip(points, labels)]
        intra = [oracle_cluster_metrics(p, l)[1] for p, l in zip(points, labels)]
        assert np.allclose(result.health.inter_cluster, inter)
        assert np.allclose(result.health.intra_cluster, intra)
        want_inter = oracle_alert_epoch(inter, "decrease")
        want_intra = oracle_alert_epoch(intra, "increase")
        want_geo = min(e for e in (want_inter, want_intra) if e is not None)
        assert result.geometry_alert.epoch == want_geo
        want_loss = oracle_alert_epoch(list(loss), "increase")
        assert result.loss_alert.epoch == want_loss

    def test_stable_rarely_alarms(self):
        fired = 0
        for seed in range(4):
            points, labels = run_to_series("stable", seed=seed)
            fired += audit_run(points, labels).geometry_alert is not None
        assert fired <= 1

    def test_single_class_still_audits_cohesion(self):
        rng = np.random.default_rng(0)
        points = [rng.standard_normal((20, 4)) * (1.0 + 0.5 * t) for t in range(6)]
        labels = [np.zeros(20, dtype=np.uint32)] * 6
        result = audit_run(points, labels)
        assert result.notes  # separation undefined, recorded
        assert all(math.isnan(v) for v in result.health.inter_cluster)
        assert result.geometry_alert is not None
        assert result.geometry_alert.metric == "intra_cluster_variance"

    def test_ideal_region_quintiles(self):
        points, labels = run_to_series("stable", seed=3, epochs=10)
        result = audit_run(points, labels)
        inter = np.array(result.health.inter_cluster)
        intra = np.array(result.health.intra_cluster)
        region = result.ideal_region
        assert region.inter_floor == pytest.approx(np.percentile(inter, 80))
        assert region.intra_ceiling == pytest.approx(np.percentile(intra, 20))
        for epoch in region.epochs_inside:
            i = result.health.epochs.index(epoch)
            assert inter[i] >= region.inter_floor
            assert intra[i] <= region.intra_ceiling

    def test_epoch_relabeling(self):
        points, labels = run_to_series("collapse", seed=0, epochs=15)
        offset_epochs = [e + 100 for e in range(15)]
        result = audit_run(points, labels, epochs=offset_epochs)
        assert result.geometry_alert.epoch >= 107

    def test_csv_shape(self):
        points, labels = run_to_series("stable", seed=0, epochs=5)
        result = audit_run(points, labels, surrogate_loss=[0.0] * 5)
        lines = result.health.to_csv().strip().splitlines()
        assert len(lines) == 6
        assert lines[0].split(",") == [
            "epoch", "inter_cluster_distance", "intra_cluster_variance",
            "inter_smooth", "intra_smooth", "surrogate_loss", "surrogate_smooth",
        ]

    def test_needs_two_epochs(self):
        with pytest.raises(ValueError):
            audit_run([np.ones((4, 2))], [np.zeros(4)])
