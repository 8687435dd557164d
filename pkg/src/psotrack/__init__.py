"""Planar template tracking by particle swarm optimization of image similarity."""

from .geometry import (
    CameraIntrinsics,
    Homography,
    PlaneParams,
    PoseVector,
    RigidTransform,
    compose,
    homography_from_pose,
    pose_to_transform,
    skew,
    warp_point,
)
from .imaging import (
    GrayImage,
    SyntheticSequence,
    TemplateRegion,
    WarpedPatch,
    extract_patch,
    generate_sequence,
    sample_bilinear,
)
from .optimizer import PsoConfig, SearchBounds, Topology, optimize, preset
from .similarity import HistogramConfig, Measure, SimilarityMeasure
from .tracker import TrackerConfig, init_tracker, track_frame, track_sequence

__version__ = "0.1.0"
