"""Patchwise joint-sparse visual tracking with per-patch occlusion detection."""

from .evalkit import cle, load_sequence, success_plot, success_rate, voc_overlap
from .motion import AffineState, ParticleSet, crop_warp, partition, state_to_box
from .solvers import mfocuss, somp, sparse_code_single
from .tracker import FrameResult, TrackerConfig, run_tracker, track_frame

__version__ = "0.1.0"

__all__ = [
    "AffineState",
    "FrameResult",
    "ParticleSet",
    "TrackerConfig",
    "cle",
    "crop_warp",
    "load_sequence",
    "mfocuss",
    "partition",
    "run_tracker",
    "somp",
    "sparse_code_single",
    "state_to_box",
    "success_plot",
    "success_rate",
    "track_frame",
    "voc_overlap",
]
