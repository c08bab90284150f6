"""Differentiable point-cloud projection toolkit.

Soft Gaussian splatting with hand-derived exact gradients, hard
rasterization for contrast, information-theoretic grid analysis, set-to-set
losses, and small geometry/attention primitives, all on numpy.
"""

__version__ = "0.1.0"

from .errors import InternalConsistencyError, InvalidInputError, ParseError, SplatlabError
from .geometry import (
    BBox3D,
    CameraModel,
    NeighborGraph,
    PointCloud,
    Projection,
    camera_coords,
    ccm_features,
    front_camera,
    gen_lidar,
    gen_sphere,
    knn,
    lidar_ray_blocks,
    normalize_kitti,
    normalize_unit,
    project_point,
    project_points,
)
from .splatting import (
    FeatureGrid,
    GradientBundle,
    SplatAux,
    SplatConfig,
    hard_hit_count,
    rasterize_hard,
    soft_density,
    soft_density_grid,
    splat_backward,
    splat_forward,
    support_measure,
)
from .losses import LossValue, arc_cd, chamfer, chamfer_l1, fidelity, fscore, mmd, total_loss
from .infotheory import (
    AnalysisReport,
    EntropyReport,
    StrategyComparison,
    channel_entropy,
    cmit,
    compare_strategies,
    coverage,
    pmi_field,
)
from .nnprims import (
    AblationParams,
    AblationReport,
    AttentionParams,
    CrossAttentionGrads,
    EdgeConvCache,
    MlpParams,
    ProbeReport,
    counterfactual_ablate,
    cross_attention,
    edgeconv_backward,
    edgeconv_forward,
    grad_flow_probe,
)
from .gradcheck import central_fd, err_ratio, run_all, run_suite
from .fileio import (
    dumps_report,
    load_cloud,
    load_cloud_lenient,
    load_grid,
    load_report,
    save_cloud,
    save_grid,
    save_report,
)

__all__ = [
    "__version__",
    "SplatlabError",
    "InvalidInputError",
    "ParseError",
    "InternalConsistencyError",
    "PointCloud",
    "CameraModel",
    "Projection",
    "BBox3D",
    "NeighborGraph",
    "camera_coords",
    "project_points",
    "project_point",
    "normalize_unit",
    "normalize_kitti",
    "knn",
    "gen_sphere",
    "gen_lidar",
    "lidar_ray_blocks",
    "ccm_features",
    "front_camera",
    "SplatConfig",
    "FeatureGrid",
    "SplatAux",
    "GradientBundle",
    "splat_forward",
    "splat_backward",
    "rasterize_hard",
    "hard_hit_count",
    "soft_density",
    "soft_density_grid",
    "support_measure",
    "LossValue",
    "chamfer",
    "chamfer_l1",
    "arc_cd",
    "total_loss",
    "fscore",
    "fidelity",
    "mmd",
    "EntropyReport",
    "AnalysisReport",
    "StrategyComparison",
    "channel_entropy",
    "coverage",
    "cmit",
    "pmi_field",
    "compare_strategies",
    "MlpParams",
    "AttentionParams",
    "EdgeConvCache",
    "CrossAttentionGrads",
    "ProbeReport",
    "AblationParams",
    "AblationReport",
    "edgeconv_forward",
    "edgeconv_backward",
    "cross_attention",
    "grad_flow_probe",
    "counterfactual_ablate",
    "err_ratio",
    "central_fd",
    "run_suite",
    "run_all",
    "load_cloud",
    "load_cloud_lenient",
    "save_cloud",
    "save_grid",
    "load_grid",
    "save_report",
    "load_report",
    "dumps_report",
]
