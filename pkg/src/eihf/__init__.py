"""Frequency-band ID/OOD separability diagnostics and scoring toolkit.

The library covers five concerns: tensor/matrix I/O in a bit-exact
binary format, 2-D spectral band decomposition and the high-frequency
residual input channel, RBF-kernel MMD^2 two-sample estimation with
band-wise profiles, post-hoc OOD scoring rules (Mahalanobis, MSP,
Energy, KNN), and the evaluation metrics (AUROC, FPR95, score overlap)
with feature-geometry diagnostics. A deterministic toy encoder and a
CLI tie the pieces into end-to-end pipelines.
"""

__version__ = "0.1.0"

from .errors import EihfError, FormatError, TransformMismatchError, ValidationError
from .frequency import (
    BandMaskSet,
    ResidualMoments,
    ResidualParams,
    ablation_channel,
    apply_channel_variant,
    band_decompose,
    band_limit,
    eihf_transform,
    fit_alpha,
    gaussian_kernel,
    gaussian_smooth,
    grayscale,
    hf_residual,
    make_band_masks,
    smoothed_map,
)
from .kernel_mmd import (
    BandProfile,
    KernelParams,
    bandwise_profile,
    median_bandwidth,
    mmd2,
    rbf_kernel,
)
from .metrics import (
    EvalReport,
    auroc,
    evaluate_scores,
    expected_mahalanobis,
    fpr_at_tpr,
    mean_id_distance,
    score_overlap,
    v_intra,
)
from .ood_scoring import (
    ClassStats,
    ScoreSet,
    energy_score,
    energy_scores,
    fit_class_stats,
    knn_score,
    knn_scores,
    mahalanobis_distances,
    mahalanobis_score,
    mahalanobis_scores,
    msp_score,
    msp_scores,
)
from .synth import make_band_textures, make_gaussian_sets, make_two_class_images
from .tensor_io import (
    FeatureMatrix,
    ImageTensor,
    LabelVector,
    denormalize_image,
    load_feature_matrix,
    load_image,
    load_labels,
    load_scores,
    load_tensor,
    normalize_image,
    read_csv,
    read_ftb,
    save_tensor,
    write_csv,
    write_ftb,
)
from .toy_encoder import ToyEncoder, encode, init_encoder

__all__ = [
    "__version__",
    "EihfError", "FormatError", "ValidationError", "TransformMismatchError",
    "ImageTensor", "FeatureMatrix", "LabelVector",
    "load_tensor", "save_tensor", "load_image", "load_feature_matrix",
    "load_labels", "load_scores", "read_ftb", "write_ftb", "read_csv", "write_csv",
    "normalize_image", "denormalize_image",
    "BandMaskSet", "ResidualParams", "ResidualMoments",
    "make_band_masks", "band_limit", "band_decompose", "grayscale",
    "gaussian_kernel", "gaussian_smooth", "hf_residual", "smoothed_map",
    "fit_alpha", "eihf_transform", "ablation_channel", "apply_channel_variant",
    "KernelParams", "BandProfile", "median_bandwidth", "rbf_kernel", "mmd2",
    "bandwise_profile",
    "ClassStats", "ScoreSet", "fit_class_stats",
    "mahalanobis_distances", "mahalanobis_score", "mahalanobis_scores",
    "msp_score", "msp_scores", "energy_score", "energy_scores",
    "knn_score", "knn_scores",
    "EvalReport", "auroc", "fpr_at_tpr", "score_overlap",
    "v_intra", "mean_id_distance", "expected_mahalanobis", "evaluate_scores",
    "ToyEncoder", "init_encoder", "encode",
    "make_gaussian_sets", "make_band_textures", "make_two_class_images",
]
