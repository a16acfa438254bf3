import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from facealign import metrics
from facealign.errors import DegenerateShapeError, InvalidArgumentError
from facealign.schemes import get_scheme

SCHEME = get_scheme("synth24")


def synthetic_gt(rng):
    gt = rng.uniform(10, 118, size=(24, 2))
    gt[SCHEME.left_eye_outer] = (30.0, 50.0)
    gt[SCHEME.right_eye_outer] = (90.0, 50.0)
    gt[SCHEME.left_eye_ring[0]] = (38.0, 50.0)
    gt[SCHEME.right_eye_ring[0]] = (82.0, 50.0)
    return gt


class TestNrmse:
    def test_exact_prediction_is_zero(self):
        gt = synthetic_gt(np.random.default_rng(0))
        assert metrics.nrmse(gt, gt, scheme=SCHEME) == 0.0

    def test_uniform_offset_closed_form(self):
        # Every landmark off by exactly d pixels, normalizer D -> d / D.
        gt = synthetic_gt(np.random.default_rng(1))
        d = 3.0
        pred = gt + np.array([0.0, d])
        expected = d / 60.0  # outer corners are 60 px apart
        assert metrics.nrmse(pred, gt, "inter_ocular", scheme=SCHEME) == pytest.approx(
            expected, abs=1e-12)

    def test_inter_pupil_normalizer_uses_ring_means(self):
        gt = synthetic_gt(np.random.default_rng(2))
        pred = gt + np.array([2.0, 0.0])
        # Pupil rings are singletons at x = 38 and 82 -> distance 44.
        assert metrics.nrmse(pred, gt, "inter_pupil", scheme=SCHEME) == pytest.approx(
            2.0 / 44.0, abs=1e-12)

    def test_scale_invariance(self):
        rng = np.random.default_rng(3)
        gt = synthetic_gt(rng)
        pred = gt + rng.standard_normal(gt.shape)
        a = metrics.nrmse(pred, gt, scheme=SCHEME)
        b = metrics.nrmse(pred * 2.0, gt * 2.0, scheme=SCHEME)
        assert a == pytest.approx(b, rel=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(angle=st.floats(-np.pi, np.pi), scale=st.floats(0.1, 10.0),
           tx=st.floats(-50, 50), ty=st.floats(-50, 50))
    def test_similarity_invariance(self, angle, scale, tx, ty):
        rng = np.random.default_rng(4)
        gt = synthetic_gt(rng)
        pred = gt + rng.standard_normal(gt.shape)
        c, s = np.cos(angle), np.sin(angle)
        rot = scale * np.array([[c, -s], [s, c]])
        t = np.array([tx, ty])
        a = metrics.nrmse(pred, gt, scheme=SCHEME)
        b = metrics.nrmse(pred @ rot.T + t, gt @ rot.T + t, scheme=SCHEME)
        assert a == pytest.approx(b, rel=1e-9)

    def test_zero_normalizer_rejected(self):
        gt = synthetic_gt(np.random.default_rng(5))
        gt[SCHEME.right_eye_outer] = gt[SCHEME.left_eye_outer]
        with pytest.raises(DegenerateShapeError):
            metrics.nrmse(gt, gt, "inter_ocular", scheme=SCHEME)

    def test_count_mismatch_rejected(self):
        gt = synthetic_gt(np.random.default_rng(6))
        with pytest.raises(InvalidArgumentError):
            metrics.nrmse(gt[:-1], gt, scheme=SCHEME)


class TestFailureRate:
    def test_all_below_threshold(self):
        assert metrics.failure_rate([0.01, 0.02, 0.03], 0.08) == 0.0

    def test_direct_count(self):
        assert metrics.failure_rate([0.05, 0.09, 0.12], 0.08) == pytest.approx(
            2.0 / 3.0, abs=1e-12)

    def test_boundary_counts_as_failure(self):
        # "0.08 or greater" is a failure.
        assert metrics.failure_rate([0.08], 0.08) == 1.0

    def test_empty_rejected(self):
        with pytest.raises(InvalidArgumentError):
            metrics.failure_rate([], 0.08)


class TestCedCurve:
    def test_single_error_step(self):
        grid = np.linspace(0.01, 0.10, 10)
        curve = metrics.ced_curve([0.05], grid)
        expected = (grid >= 0.05).astype(float)
        np.testing.assert_array_equal(curve.fractions, expected)

    def test_fractions_non_decreasing(self):
        rng = np.random.default_rng(0)
        errors = rng.uniform(0, 0.2, size=200)
        curve = metrics.ced_curve(errors, metrics.default_ced_grid(0.1))
        assert np.all(np.diff(curve.fractions) >= 0)

    def test_uniform_errors_dkw_bound(self):
        # Sampling oracle: empirical CDF of U[0, 0.1] within 3/sqrt(n) of t/0.1.
        rng = np.random.default_rng(1)
        n = 2000
        errors = rng.uniform(0, 0.1, size=n)
        grid = metrics.default_ced_grid(0.1)
        curve = metrics.ced_curve(errors, grid[1:])  # strictly positive grid
        ideal = curve.thresholds / 0.1
        assert np.max(np.abs(curve.fractions - ideal)) < 3.0 / np.sqrt(n)

    def test_unsorted_grid_rejected(self):
        with pytest.raises(InvalidArgumentError):
            metrics.ced_curve([0.05], np.array([0.1, 0.05]))

    def test_failure_rate_consistency(self):
        # For a threshold hitting no error exactly: failure = 1 - CED(t).
        errors = np.array([0.02, 0.05, 0.11, 0.30])
        t = 0.08
        curve = metrics.ced_curve(errors, np.array([0.0, t, 1.0]))
        assert metrics.failure_rate(errors, t) == pytest.approx(
            1.0 - curve.fractions[1], abs=1e-12)


class TestAuc:
    def test_all_errors_zero(self):
        curve = metrics.ced_curve([0.0, 0.0], metrics.default_ced_grid(0.08))
        assert metrics.auc(curve, 0.08) == pytest.approx(1.0, abs=1e-12)

    def test_no_errors_below_cutoff(self):
        curve = metrics.ced_curve([0.5, 0.9], metrics.default_ced_grid(0.08))
        assert metrics.auc(curve, 0.08) == 0.0

    def test_single_error_at_half_cutoff(self):
        cutoff = 0.08
        curve = metrics.ced_curve([cutoff / 2], metrics.default_ced_grid(cutoff))
        # Analytic step integral: area cutoff/2 over width cutoff -> 0.5,
        # accurate to one grid cell.
        assert metrics.auc(curve, cutoff) == pytest.approx(0.5, abs=2e-3)

    def test_cutoff_outside_grid_rejected(self):
        curve = metrics.ced_curve([0.05], metrics.default_ced_grid(0.08))
        with pytest.raises(InvalidArgumentError):
            metrics.auc(curve, 0.2)

    def test_auc_in_unit_interval_and_monotone_in_errors(self):
        rng = np.random.default_rng(2)
        errors = rng.uniform(0, 0.16, size=100)
        grid = metrics.default_ced_grid(0.08)
        a = metrics.auc(metrics.ced_curve(errors, grid), 0.08)
        assert 0.0 <= a <= 1.0
        improved = errors.copy()
        improved[np.argmax(errors)] = 0.0
        b = metrics.auc(metrics.ced_curve(improved, grid), 0.08)
        assert b >= a
