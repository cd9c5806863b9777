import numpy as np
import pytest

import gazeseg


def test_filter_threshold_is_saccade():
    # 300 px over 1000 ms is exactly the threshold velocity.
    pts = np.array([[0.0, 0.0, 0.0], [300.0, 0.0, 1000.0]])
    assert gazeseg.classify_points(pts, 400, 400).tolist() == [True, True]
    slow = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 1000.0], [2.0, 0.0, 2000.0]])
    assert gazeseg.classify_points(slow, 400, 400).tolist() == [False, False, False]


def test_filter_rejects_short_trace():
    with pytest.raises(gazeseg.GazesegError) as info:
        gazeseg.classify_points(np.array([[0.0, 0.0, 0.0]]), 16, 16)
    assert info.value.code == "TraceTooShort"
    assert info.value.category == 3


def test_heatmap_peak_at_fixation():
    h = gazeseg.render_heatmap(np.array([[5.0, 3.0, 0.0]]), 16, 12)
    assert h.shape == (12, 16)
    assert h.max() == pytest.approx(1.0)
    assert np.unravel_index(h.argmax(), h.shape) == (3, 5)


def test_gaze_rect_example():
    pts = np.array([[4.0, 5.0, 0.0], [3.5, 6.2, 10.0]])
    assert gazeseg.gaze_rect(pts, 16, 16, margin_px=0, min_side=1) == (3, 5, 5, 7)


def test_identity_mix_keeps_background_outside():
    rng = np.random.default_rng(0)
    fg, bg = rng.random((16, 16)), rng.random((16, 16))
    heat = np.zeros((16, 16))
    out = gazeseg.mix(fg, heat, (2, 2, 6, 6), bg, heat, (8, 8, 12, 12))
    assert out["paste_rect"] == (8, 8, 12, 12)
    np.testing.assert_array_equal(out["image"][8:12, 8:12], fg[2:6, 2:6])
    outside = np.ones((16, 16), bool)
    outside[8:12, 8:12] = False
    np.testing.assert_array_equal(out["image"][outside], bg[outside])


def test_scene_gaze_and_metrics():
    image, mask = gazeseg.render_scene(32, 32, 3, seed=7, index=0)
    assert image.shape == mask.shape == (32, 32)
    assert mask.max() >= 1
    trace = gazeseg.simulate_gaze(mask, seed=1)
    assert trace.shape[1] == 3 and len(trace) >= 2
    assert np.all(np.diff(trace[:, 2]) > 0)
    report = gazeseg.evaluate(mask, mask, 3)
    assert report["macro"]["dice"] == pytest.approx(1.0)
    assert report["macro"]["hd95_px"] == pytest.approx(0.0)


def test_predict_missing_checkpoint(tmp_path):
    with pytest.raises(gazeseg.GazesegError):
        gazeseg.predict(str(tmp_path / "absent.ckpt"), np.zeros((16, 16)))
