"""Python bindings for the gazeseg core library."""

from ._gazeseg import (
    GazesegError,
    classify_points,
    evaluate,
    gaze_rect,
    mix,
    predict,
    render_heatmap,
    render_scene,
    simulate_gaze,
)

__all__ = [
    "GazesegError",
    "classify_points",
    "evaluate",
    "gaze_rect",
    "mix",
    "predict",
    "render_heatmap",
    "render_scene",
    "simulate_gaze",
]
