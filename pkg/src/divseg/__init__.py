"""Missing-modality volumetric segmentation with divergence-based distillation.

The package bundles a small reverse-mode autodiff engine on float64 numpy
arrays, Holder and classical f-divergences over probability vectors, a
shared-backbone multimodal 3D segmentation network with masked feature
fusion, variational feature-transfer and Dice objectives, a synthetic
ellipsoid phantom dataset, and a deterministic training/evaluation/ablation
harness with a command line front end (``python -m divseg.cli``).
"""

from .ablate import (
    ALPHA_VALUES,
    AXES,
    AblationReport,
    ablate,
    emit_ablation_table,
    load_ablation,
    save_ablation,
    variant_configs,
)
from .config import ExperimentConfig
from .distill import FeaturePair, VariationalHead, gamma_schedule, mi_transfer_loss, variational_nll
from .divergences import (
    DIVERGENCE_KINDS,
    HolderExponents,
    ProbVector,
    f_divergence,
    hpd,
    voxel_divergence_loss,
)
from .errors import (
    ConfigError,
    ContractError,
    DivsegError,
    DomainError,
    NumericError,
    ParseError,
    ShapeError,
)
from .evaluate import (
    REGION_NAMES,
    SUBSET_LABELS,
    DiceReport,
    emit_comparison,
    emit_table,
    evaluate_subsets,
    load_report,
    save_report,
)
from .gradcheck import GradCheckReport, gradcheck, numeric_grad
from .losses import (
    REGIONS,
    LossBreakdown,
    argmax_labels,
    dice_loss,
    dsc_metric,
    one_hot,
    smoothed_one_hot,
    total_loss,
)
from .network import (
    ALL_SUBSETS,
    MODALITY_NAMES,
    ArchConfig,
    ModalityMask,
    ModelParams,
    forward,
    forward_features,
    init_params,
    load_params,
    save_params,
    subset_label,
)
from .optim import Adam
from .phantom import Manifest, Sample, generate_phantom, make_dataset, read_volume, write_volume
from .tensor import Tape, Tensor, backward, softmax
from .train import draw_masks, train

__all__ = [
    "ALL_SUBSETS",
    "ALPHA_VALUES",
    "AXES",
    "AblationReport",
    "Adam",
    "ArchConfig",
    "ConfigError",
    "ContractError",
    "DIVERGENCE_KINDS",
    "DiceReport",
    "DivsegError",
    "DomainError",
    "ExperimentConfig",
    "FeaturePair",
    "GradCheckReport",
    "HolderExponents",
    "LossBreakdown",
    "MODALITY_NAMES",
    "Manifest",
    "ModalityMask",
    "ModelParams",
    "NumericError",
    "ParseError",
    "ProbVector",
    "REGIONS",
    "REGION_NAMES",
    "SUBSET_LABELS",
    "Sample",
    "ShapeError",
    "Tape",
    "Tensor",
    "VariationalHead",
    "ablate",
    "argmax_labels",
    "backward",
    "dice_loss",
    "draw_masks",
    "dsc_metric",
    "emit_ablation_table",
    "emit_comparison",
    "emit_table",
    "evaluate_subsets",
    "f_divergence",
    "forward",
    "forward_features",
    "gamma_schedule",
    "generate_phantom",
    "gradcheck",
    "hpd",
    "init_params",
    "load_ablation",
    "load_params",
    "load_report",
    "make_dataset",
    "mi_transfer_loss",
    "numeric_grad",
    "one_hot",
    "read_volume",
    "save_ablation",
    "save_params",
    "save_report",
    "smoothed_one_hot",
    "softmax",
    "subset_label",
    "total_loss",
    "train",
    "variant_configs",
    "variational_nll",
    "voxel_divergence_loss",
    "write_volume",
]
