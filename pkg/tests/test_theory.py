import numpy as np
import pytest

from sentrycam.ingest import synth_trajectory
from sentrycam.projection import TrainConfig
from sentrycam.theory import (
    TippingCurve,
    circle_reference,
    covering_radius,
    equivalence_check,
    sample_manifold,
    tipping_curve,
)
from sentrycam import kernels


class TestSampleManifold:
    def test_circle_on_manifold(self):
        sample = sample_manifold("circle", 200, seed=0)
        norms = np.linalg.norm(sample.points, axis=1)
        assert np.allclose(norms, 1.0, atol=1e-9)
        assert sample.intrinsic_dim == 1

    def test_circle_in_higher_ambient(self):
        sample = sample_manifold("circle", 50, ambient=5, seed=1)
        assert sample.points.shape == (50, 5)
        assert np.allclose(sample.points[:, 2:], 0.0)

    def test_noise_leaves_manifold(self):
        sample = sample_manifold("circle", 100, noise=0.1, seed=2)
        norms = np.linalg.norm(sample.points, axis=1)
        assert not np.allclose(norms, 1.0, atol=1e-3)

    def test_sphere_concentrates_at_origin(self):
        sample = sample_manifold("sphere", 10_000, seed=3)
        assert np.linalg.norm(sample.points.mean(axis=0)) < 0.05
        assert np.allclose(np.linalg.norm(sample.points, axis=1), 1.0, atol=1e-9)

    def test_clusters_delegate_to_generator(self):
        sample = sample_manifold("clusters", 200, ambient=32, seed=4, classes=4)
        snap = synth_trajectory("stable", epochs=1, n_per_class=50, classes=4,
                                dim=32, seed=4)[0]
        assert np.allclose(sample.points, snap.matrix.astype(np.float64))

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            sample_manifold("torus", 100)

    def test_deterministic(self):
        a = sample_manifold("sphere", 100, seed=9).points
        b = sample_manifold("sphere", 100, seed=9).points
        assert np.array_equal(a, b)


class TestCoveringRadius:
    def test_zero_when_sample_is_reference(self, rng):
        pts = rng.standard_normal((50, 3))
        assert covering_radius(pts, pts) == pytest.approx(0.0, abs=1e-12)

    def test_single_point_on_circle_covers_at_diameter(self):
        ref = circle_reference(5000)
        eps = covering_radius(np.array([[1.0, 0.0]]), ref)
        assert eps == pytest.approx(2.0, abs=0.01)

    def test_nested_samples_monotone(self, rng):
        ref = circle_reference(2000)
        sample = sample_manifold("circle", 64, seed=1).points
        eps_small = covering_radius(sample[:16], ref)
        eps_large = covering_radius(sample, ref)
        assert eps_large <= eps_small

    def test_empty_sample_rejected(self):
        with pytest.raises(ValueError):
            covering_radius(np.empty((0, 2)), circle_reference(10))


class TestEquivalence:
    def test_regular_polygon_ratio_constant(self):
        # perfect symmetry: covering radius and k-NN distance shrink in
        # lockstep, so their ratio is essentially size-free
        ref = circle_reference(20000)
        ratios = []
        for n in (64, 128, 256):
            poly = circle_reference(n)
            eps = covering_radius(poly, ref)
            dbar = kernels.avg_kth_nn_distance(poly, 15)
            ratios.append(eps / dbar)
        assert max(ratios) / min(ratios) < 1.05

    def test_circle_spread_bounded(self):
        report = equivalence_check("circle", sizes=(100, 200, 400), k=15, seeds=3,
                                   seed=0, reference_n=8000)
        assert report.spread <= 10.0
        assert report.ratios.shape == (3, 3)

    def test_fixed_size_coefficient_of_variation(self):
        report = equivalence_check("circle", sizes=(200,), k=15, seeds=10, seed=1,
                                   reference_n=8000)
        vals = report.ratios[0]
        assert vals.std() / vals.mean() < 0.5

    def test_size_floor_validated(self):
        with pytest.raises(ValueError):
            equivalence_check("circle", sizes=(30,), k=15)


@pytest.fixture(scope="module")
def curve():
    from dataclasses import replace

    snap = synth_trajectory("stable", epochs=1, n_per_class=60, classes=10,
                            dim=64, seed=0)[0]
    cfg = TrainConfig(epochs=6, batch_edges=512, seed=0)
    return tipping_curve(
        snap.matrix.astype(np.float64),
        ratios=(1.0, 0.5, 0.1, 0.04),
        k=15,
        seed=0,
        train_cfg=cfg,
        probe_cfg=replace(cfg, steps_per_epoch=30),
    )


class TestTippingCurve:

    def test_full_ratio_density_is_one(self, curve):
        assert curve.rel_density[0] == pytest.approx(1.0)

    def test_density_decreases_with_ratio(self, curve):
        for a, b in zip(curve.rel_density, curve.rel_density[1:]):
            assert b <= a + 0.05

    def test_knee_is_a_probed_ratio(self, curve):
        assert curve.knee_ratio in curve.ratios

    def test_preservation_in_unit_interval(self, curve):
        assert all(0.0 <= p <= 1.0 for p in curve.preservation)

    def test_csv_deterministic(self, curve):
        assert isinstance(curve, TippingCurve)
        assert curve.to_csv().splitlines()[0] == "ratio,rel_density,preservation"

    def test_ratio_validation(self):
        pts = np.random.default_rng(0).standard_normal((100, 64))
        with pytest.raises(ValueError, match="decreasing"):
            tipping_curve(pts, ratios=(0.5, 1.0), k=5)
        with pytest.raises(ValueError):
            tipping_curve(pts, ratios=(1.5,), k=5)
        with pytest.raises(ValueError, match="need more than"):
            tipping_curve(pts, ratios=(1.0, 0.01), k=15)
