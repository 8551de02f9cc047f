import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voxenc.errors import ValidationError
from voxenc.preprocess import (
    TrimPolicy,
    savgol_detrend,
    savgol_window_samples,
    trim_for_evaluation,
    trim_for_training,
    zscore_voxels,
)

TR = 2.0


def test_window_rounds_up_to_odd():
    assert savgol_window_samples(120.0, 2.0) == 61
    assert savgol_window_samples(120.0, 1.5) == 81
    assert savgol_window_samples(121.0, 2.0) == 61


def test_constant_series_detrends_to_zero():
    series = np.full((200, 3), 7.5)
    out = savgol_detrend(series, TR)
    assert np.max(np.abs(out)) < 1e-10


def test_quadratic_trend_removed_exactly():
    t = np.arange(400, dtype=float)
    series = (0.003 * t * t - 0.4 * t + 11.0)[:, None] * np.array([[1.0, -2.0]])
    out = savgol_detrend(series, TR)
    scale = np.abs(series).max()
    assert np.abs(out).max() < 1e-9 * scale


def test_noise_variance_preserved():
    rng = np.random.default_rng(42)
    t = np.arange(600, dtype=float)
    trend = 0.001 * t * t + 0.05 * t
    noise = rng.normal(size=(600, 8))
    out = savgol_detrend(trend[:, None] + noise, TR)
    # interior only: edges use truncated fits and get trimmed downstream
    interior = out[31:-31]
    assert np.abs(interior.var() - 1.0) < 0.05


def test_detrend_idempotent_on_trend_inputs():
    t = np.linspace(0.0, 1.0, 500)
    rng = np.random.default_rng(3)
    coefs = rng.normal(size=(3, 4))
    series = coefs[0] + coefs[1] * t[:, None] + coefs[2] * t[:, None] ** 2
    once = savgol_detrend(series, TR)
    twice = savgol_detrend(once, TR)
    assert np.abs(twice - once).max() < 1e-8 * max(np.abs(series).max(), 1.0)


def test_detrend_shape_and_errors():
    with pytest.raises(ValidationError, match="shorter than"):
        savgol_detrend(np.zeros((30, 2)), TR)
    with pytest.raises(ValidationError, match="positive"):
        savgol_detrend(np.zeros((200, 2)), 0.0)
    vec = savgol_detrend(np.linspace(0, 1, 100), TR)
    assert vec.shape == (100,)


def test_zscore_basic():
    z, flags = zscore_voxels(np.array([[1.0], [2.0], [3.0]]))
    assert not flags[0]
    assert abs(z.mean()) < 1e-12
    assert abs(z.var() - 1.0) < 1e-9


def test_zscore_constant_column_flagged():
    data = np.column_stack([np.ones(10), np.arange(10.0)])
    z, flags = zscore_voxels(data)
    assert flags.tolist() == [True, False]
    assert np.all(z[:, 0] == 0.0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(10, 300), v=st.integers(1, 8))
def test_zscore_property(seed, n, v):
    data = np.random.default_rng(seed).normal(size=(n, v)) * 3.0 + 5.0
    z, flags = zscore_voxels(data)
    assert not flags.any()
    assert np.abs(z.mean(axis=0)).max() < 1e-12
    assert np.abs(z.var(axis=0) - 1.0).max() < 1e-9


def test_zscore_idempotent():
    data = np.random.default_rng(0).normal(size=(50, 4)) * 2.0 + 1.0
    once, _ = zscore_voxels(data)
    twice, _ = zscore_voxels(once)
    assert np.abs(twice - once).max() < 1e-9


def test_trim_training_default():
    series = np.arange(300.0)[:, None]
    out = trim_for_training(series, TrimPolicy(), TR)
    assert out.shape[0] == 280
    assert out[0, 0] == 10.0 and out[-1, 0] == 289.0


def test_trim_training_zero_is_identity():
    series = np.arange(10.0)[:, None]
    out = trim_for_training(series, TrimPolicy(train_trim_volumes=0), TR)
    assert np.array_equal(out, series)


def test_trim_training_too_short():
    with pytest.raises(ValidationError, match="too short"):
        trim_for_training(np.zeros((19, 1)), TrimPolicy(), TR)
    with pytest.raises(ValidationError, match="too short"):
        trim_for_training(np.zeros((20, 1)), TrimPolicy(), TR)


def test_trim_evaluation_fresh_story():
    pred = np.arange(120.0)[:, None]
    actual = pred + 1.0
    p, a = trim_for_evaluation(pred, actual, TrimPolicy(), TR)
    assert p.shape[0] == 70  # 100 s / 2 s = 50 volumes removed
    assert p[0, 0] == 50.0 and a[0, 0] == 51.0


def test_trim_evaluation_counts_from_onset():
    pred = np.arange(120.0)[:, None]
    p, _ = trim_for_evaluation(pred, pred, TrimPolicy(), TR, volumes_already_trimmed=50)
    assert p.shape[0] == 120
    p, _ = trim_for_evaluation(pred, pred, TrimPolicy(), TR, volumes_already_trimmed=30)
    assert p.shape[0] == 100


def test_trim_evaluation_zero_exclusion_identity():
    pred = np.zeros((5, 2))
    policy = TrimPolicy(eval_exclusion_seconds=0.0)
    p, a = trim_for_evaluation(pred, pred, policy, TR)
    assert p.shape == (5, 2)


def test_trim_evaluation_shape_mismatch():
    with pytest.raises(ValidationError, match="does not match"):
        trim_for_evaluation(np.zeros((5, 2)), np.zeros((6, 2)), TrimPolicy(), TR)


def test_trim_evaluation_too_short():
    with pytest.raises(ValidationError, match="shorter"):
        trim_for_evaluation(np.zeros((50, 1)), np.zeros((50, 1)), TrimPolicy(), TR)


def test_eval_exclusion_must_be_whole_volumes():
    with pytest.raises(ValidationError, match="whole number"):
        TrimPolicy(eval_exclusion_seconds=101.0).eval_exclusion_volumes(2.0)


def test_trimming_commutes_with_voxel_slicing():
    rng = np.random.default_rng(5)
    series = rng.normal(size=(300, 6))
    cols = [0, 3, 5]
    policy = TrimPolicy()
    a = trim_for_training(series[:, cols], policy, TR)
    b = trim_for_training(series, policy, TR)[:, cols]
    assert np.array_equal(a, b)


def test_detrend_commutes_with_voxel_slicing():
    rng = np.random.default_rng(6)
    series = rng.normal(size=(200, 5))
    cols = [1, 4]
    a = savgol_detrend(series[:, cols], TR)
    b = savgol_detrend(series, TR)[:, cols]
    assert np.allclose(a, b, atol=1e-12)


def test_negative_policy_rejected():
    with pytest.raises(ValidationError):
        TrimPolicy(train_trim_volumes=-1)
