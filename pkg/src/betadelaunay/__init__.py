"""Beta-, beta'- and Gaussian-Delaunay tessellations: exact construction,
certified truncation, window statistics and Monte Carlo campaigns."""

from .geometry import brute_force_tessellation, envelope_extremes, regular_triangulation
from .point_process import Kind, ModelParams, PointSample, SamplingWindow, sample_process
from .stabilization import stabilized_tessellation
from .tessellation import (
    Tessellation,
    WindowBox,
    count_faces_in_window,
    skeleton_volume_in_window,
)

__all__ = [
    "Kind", "ModelParams", "PointSample", "SamplingWindow", "Tessellation", "WindowBox",
    "brute_force_tessellation", "envelope_extremes", "regular_triangulation",
    "count_faces_in_window", "sample_process", "skeleton_volume_in_window",
    "stabilized_tessellation",
]
__version__ = "0.1.0"
