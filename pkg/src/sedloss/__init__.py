"""Imbalance-aware losses for frame-level multi-label sound event detection."""

from .losses import (
    AflSpec,
    BceSpec,
    ClassFrequency,
    FbtlSpec,
    IflSpec,
    LossOutput,
    LossSpec,
    SrlSpec,
    afl_loss,
    bce_loss,
    class_frequency_counts,
    fbtl_loss,
    ifl_loss,
    loss_dispatch,
    srl_loss,
)
from .data import (
    Dataset,
    DatasetSpec,
    DatasetStats,
    EventClassSpec,
    compute_stats,
    generate_dataset,
    load_dataset,
    save_dataset,
    split_dataset,
    tut_like_preset,
)
from .metrics import EvalConfig, MetricsReport, evaluate, fscores, predict_labels, roc_auc
from .model import ModelParams, backward, forward, init_params, load_params, save_params
from .trainer import RunResult, TrainConfig, compare_losses, sweep, train

__version__ = "0.1.0"
