"""Streaming adaptive classification of multichannel EEG trials.

The package wraps a small frozen 1-D convolutional backbone with two
label-free adaptation mechanisms: Euclidean alignment of the channel
covariance at the input, and recomputation of batch-normalization
statistics in the latent space, both updated as trials stream in.
"""

from .adapt import (
    AdaptPolicy,
    SessionState,
    classify_next,
    classify_offline,
    soft_kmeans_decide,
    start_session,
)
from .align import AlignmentState, align_batch, batch_state
from .errors import EmptyStateError, FormatError, NotPsdError, NumericalError
from .estimators import AdaptiveConvNetClassifier, EuclideanAligner
from .harness import (
    ReplayReport,
    align_per_group,
    load_dataset,
    mean_curve,
    read_trial_file,
    replay,
    save_dataset,
    split_cross_subject,
    split_fine_tuning,
    write_trial_file,
)
from .net import (
    BlockSpec,
    BnStatSet,
    NetworkSpec,
    WeightStore,
    default_spec,
    forward,
    init_weights,
    load_weights,
    save_weights,
)
from .signals import SynthConfig, generate, highpass, resample
from .train import TrainConfig, fine_tune, grad_check, train
from .trials import Trial, TrialSet

__all__ = [
    "AdaptPolicy",
    "AdaptiveConvNetClassifier",
    "AlignmentState",
    "BlockSpec",
    "BnStatSet",
    "EmptyStateError",
    "EuclideanAligner",
    "FormatError",
    "NetworkSpec",
    "NotPsdError",
    "NumericalError",
    "ReplayReport",
    "SessionState",
    "SynthConfig",
    "Trial",
    "TrialSet",
    "TrainConfig",
    "WeightStore",
    "align_batch",
    "align_per_group",
    "batch_state",
    "classify_next",
    "classify_offline",
    "default_spec",
    "fine_tune",
    "forward",
    "generate",
    "grad_check",
    "highpass",
    "init_weights",
    "load_dataset",
    "load_weights",
    "mean_curve",
    "read_trial_file",
    "replay",
    "resample",
    "save_dataset",
    "save_weights",
    "soft_kmeans_decide",
    "split_cross_subject",
    "split_fine_tuning",
    "start_session",
    "train",
    "write_trial_file",
]

__version__ = "0.1.0"
