"""supwma: streamline classification with a pose-preserving point-cloud encoder.

Library layout:

* :mod:`supwma.geometry` - streamlines, resampling, affines, SLP1/CSV I/O
* :mod:`supwma.nn_core` - dense/ReLU/max-pool/normalize kernels with exact
  backward passes, Adam, gradient checking
* :mod:`supwma.model` - encoder/projector/classifier assembly, FLOPs,
  checkpoints
* :mod:`supwma.losses` - supervised contrastive loss, cross-entropy
* :mod:`supwma.train` - two-phase training pipeline and evaluation
* :mod:`supwma.metrics` - accuracy, macro F1, cluster identification rate
* :mod:`supwma.synthdata` - deterministic synthetic corpus generator
* :mod:`supwma.cli` - command-line front end (``supwma`` entry point)
"""

from .geometry import (
    StreamlineSet,
    apply_affine,
    arc_length,
    read_labels,
    read_slp,
    resample,
    reverse,
    to_feature_batch,
    write_labels,
    write_slp,
)
from .losses import SclConfig, ce_loss, scl_loss
from .metrics import MetricsReport, accuracy, cir, compute_report, confusion, macro_f1
from .model import (
    ArchDescriptor,
    ModelBundle,
    build_model,
    classify,
    count_flops,
    encode,
    encode_features,
    load_checkpoint,
    predict,
    predict_features,
    project,
    save_checkpoint,
)
from .nn_core import (
    AdamState,
    DenseLayer,
    adam_init,
    adam_step,
    finite_difference_check,
    glorot_uniform_init,
    seeded_rng,
    softmax_cross_entropy,
)
from .synthdata import ClusterPrototype, GenConfig, gen_dataset, gen_prototypes, sample_streamline
from .train import (
    TrainConfig,
    TrainReport,
    evaluate,
    run_pipeline,
    train_cls_phase,
    train_end_to_end,
    train_scl_phase,
)

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "ArchDescriptor",
    "ClusterPrototype",
    "DenseLayer",
    "GenConfig",
    "MetricsReport",
    "ModelBundle",
    "SclConfig",
    "StreamlineSet",
    "TrainConfig",
    "TrainReport",
    "accuracy",
    "adam_init",
    "adam_step",
    "apply_affine",
    "arc_length",
    "build_model",
    "ce_loss",
    "cir",
    "classify",
    "compute_report",
    "confusion",
    "count_flops",
    "encode",
    "encode_features",
    "evaluate",
    "finite_difference_check",
    "gen_dataset",
    "gen_prototypes",
    "glorot_uniform_init",
    "load_checkpoint",
    "macro_f1",
    "predict",
    "predict_features",
    "project",
    "read_labels",
    "read_slp",
    "resample",
    "reverse",
    "run_pipeline",
    "sample_streamline",
    "save_checkpoint",
    "scl_loss",
    "seeded_rng",
    "softmax_cross_entropy",
    "to_feature_batch",
    "train_cls_phase",
    "train_end_to_end",
    "train_scl_phase",
    "write_labels",
    "write_slp",
]
