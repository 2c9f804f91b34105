"""Multi-radar respiration monitoring for several seated people.

Two or more MIMO radars with unknown relative placement each image the
room; people are found by clustering, the radar frames are aligned using
the people themselves as landmarks, and every person's breathing is read
from whichever radar sees them most cleanly.
"""

from .clustering import PointCloud, TargetCluster, merge_fragments, sample_point_cloud, xmeans
from .config import PipelineConfig, load_config, save_config
from .fusion import (AlignmentError, AssociationSet, CorrelationMatrix, DegenerateGeometryError,
                     RespWaveform, RigidTransform2D, TooFewClustersError, align_two_radars, associate,
                     extract_waveform, procrustes, resp_correlation, top_two_pairs)
from .imaging import ImageGrid, RadarImage, beamform, suppress_clutter, taylor_window
from .kernels import BACKEND
from .pipeline import RunReport, StageError, compare, run, simulate
from .scene import (BreathingTarget, RadarPlacement, SceneConfig, SlowTimeCube, ground_truth,
                    synthesize)
from .selection import detection_rate, estimate_rpm, kappa, rpm_error, select_radar

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "AlignmentError", "AssociationSet", "BreathingTarget", "CorrelationMatrix",
    "DegenerateGeometryError", "ImageGrid", "PipelineConfig", "PointCloud", "RadarImage",
    "RadarPlacement", "RespWaveform", "RigidTransform2D", "RunReport", "SceneConfig",
    "SlowTimeCube", "StageError", "TargetCluster", "TooFewClustersError", "align_two_radars",
    "associate", "beamform", "compare", "detection_rate", "estimate_rpm", "extract_waveform",
    "ground_truth", "kappa", "load_config", "merge_fragments", "procrustes", "resp_correlation",
    "rpm_error", "run", "sample_point_cloud", "save_config", "select_radar", "simulate",
    "suppress_clutter", "synthesize", "taylor_window", "top_two_pairs", "xmeans",
]
