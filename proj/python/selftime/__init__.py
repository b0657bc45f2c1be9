"""Self-supervised time series representation learning.

Thin Python layer over the C++ core: datasets, augmentations, temporal
relation labels, pretraining, linear evaluation and the command line.
"""

from ._core import (
    Checkpoint,
    ConfigError,
    DataError,
    Dataset,
    InvalidArgument,
    NumericError,
    augment,
    augment_kinds,
    default_config,
    embed,
    label_histogram,
    linear_eval,
    load_checkpoint,
    load_ucr,
    make_waveforms,
    pretrain,
    random_baseline,
    run_cli,
    temporal_label,
)

__all__ = [
    "Checkpoint",
    "ConfigError",
    "DataError",
    "Dataset",
    "InvalidArgument",
    "NumericError",
    "augment",
    "augment_kinds",
    "default_config",
    "embed",
    "label_histogram",
    "linear_eval",
    "load_checkpoint",
    "load_ucr",
    "make_waveforms",
    "pretrain",
    "random_baseline",
    "run_cli",
    "temporal_label",
]
