"""Panoptic segmentation + self-supervised depth: the non-neural core.

Losses and target encoders for joint panoptic/depth training, panoptic
post-processing, ground-point metric scale recovery, labeled point-cloud
projection, evaluation metrics, and an analytic synthetic-scene oracle to
verify all of it against.
"""

from .camera import (
    Intrinsics,
    PointGrid,
    PoseSE3,
    backproject,
    bilinear_sample,
    pose_from_axis_angle,
    project,
    transform_points,
    warp_frame,
)
from .depth_loss import (
    PhotometricConfig,
    ReprojectionSet,
    depth_loss,
    masked_photometric_loss,
    min_reprojection,
    photometric_error,
    sigmoid_to_depth,
    smoothness_loss,
    ssim_map,
)
from .dual import Dual, directional_derivative, finite_difference
from .metrics import DepthMetrics, PQResult, depth_metrics, panoptic_quality
from .panoptic_loss import (
    BootstrapConfig,
    InstanceAnnotation,
    PanopticTargets,
    bootstrapped_ce,
    compute_offsets,
    encode_targets,
    heatmap_mse,
    instances_from_panoptic,
    offset_l1,
    panoptic_loss,
    pixel_weights,
    render_center_heatmap,
)
from .panoptic_map import ClassTaxonomy, PanopticMap, thing_mask
from .postprocess import (
    Keypoint,
    group_instances,
    keypoint_nms,
    majority_vote_fusion,
    native_kernels_loaded,
)
from .scaling import (
    CameraRig,
    LabeledPointCloud,
    ScaleUnavailableError,
    camera_heights,
    ground_mask,
    normal_ground_mask,
    project_labeled,
    recover_scale,
    scale_depth,
    scale_factor,
    surface_normals,
)
from .synthetic import BoxSpec, SceneSpec, default_taxonomy, render, render_pair
from .weighting import UncertaintyParams, combined_loss

__version__ = "0.1.0"
