"""Mini-batch training loop binding the model, losses, and data.

A run is fully determined by its config: the experiment seed s drives
clip shuffling directly and parameter init via s + 1000, so any run can
be replayed bit-identically.  Loss gradients are divided by
(clips-in-batch x frames) before the Adam step so learning rates
transfer across batch sizes; reported losses stay raw sums.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import losses as L
from . import model as M
from .data import Dataset
from .errors import ConfigError, TrainingDivergedError, ValidationError
from .metrics import EvalConfig, MetricsReport, evaluate, fscores, predict_labels


@dataclass(frozen=True)
class TrainConfig:
    loss: L.LossSpec
    epochs: int = 8
    batch_clips: int = 8
    learning_rate: float = 0.01
    seed: int = 0
    eval: EvalConfig = field(default_factory=EvalConfig)
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    hidden: int = 32
    window_radius: int = 5
    leak: float = M.DEFAULT_LEAK
    ifl_freq_scope: str = "batch"  # or "epoch": count over the whole train split

    def __post_init__(self):
        if self.epochs < 1 or self.batch_clips < 1:
            raise ValidationError("epochs and batch_clips must be positive")
        if self.learning_rate < 0:
            raise ValidationError("learning_rate must be nonnegative")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ValidationError("adam betas must lie in [0, 1)")
        if self.ifl_freq_scope not in ("batch", "epoch"):
            raise ValidationError(f"ifl_freq_scope must be batch|epoch, got {self.ifl_freq_scope}")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    dev_micro_f: float
    dev_macro_f: float


@dataclass
class RunResult:
    final_params: M.ModelParams
    history: list[EpochRecord]
    report: MetricsReport


class AdamState:
    """Adam with bias correction; a zero gradient leaves parameters unchanged."""

    def __init__(self, params: M.ModelParams, lr: float, beta1: float, beta2: float, eps: float):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(a) for a in (params.w1, params.b1, params.w2, params.b2)]
        self._v = [np.zeros_like(a) for a in (params.w1, params.b1, params.w2, params.b2)]

    def step(self, params: M.ModelParams, grads: M.ParamGrads) -> None:
        self.t += 1
        target = (params.w1, params.b1, params.w2, params.b2)
        gs = (grads.w1, grads.b1, grads.w2, grads.b2)
        for i, (p, g) in enumerate(zip(target, gs)):
            self._m[i] = self.beta1 * self._m[i] + (1 - self.beta1) * g
            self._v[i] = self.beta2 * self._v[i] + (1 - self.beta2) * g * g
            m_hat = self._m[i] / (1 - self.beta1**self.t)
            v_hat = self._v[i] / (1 - self.beta2**self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _check_datasets(train_ds: Dataset, dev_ds: Dataset) -> tuple[int, int, int]:
    n = train_ds.spec.frames_per_clip
    d = train_ds.spec.feature_dim
    m = len(train_ds.spec.classes)
    if dev_ds.spec.feature_dim != d or len(dev_ds.spec.classes) != m:
        raise ValidationError("train/dev datasets must share feature_dim and classes")
    return n, d, m


def _window_cache(ds: Dataset, w: int) -> list[np.ndarray]:
    return [M.window_stack(x, w) for x, _ in ds.clips]


def train(cfg: TrainConfig, train_ds: Dataset, dev_ds: Dataset) -> RunResult:
    """Train a windowed MLP under cfg.loss; deterministic given cfg.seed."""
    n, d, m = _check_datasets(train_ds, dev_ds)
    shuffle_rng = np.random.default_rng(cfg.seed)
    params = M.init_params(
        cfg.seed + 1000, input_dim=d, hidden=cfg.hidden, classes=m,
        window_radius=cfg.window_radius, leak=cfg.leak,
    )
    adam = AdamState(params, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)

    train_windows = _window_cache(train_ds, cfg.window_radius)
    dev_windows = _window_cache(dev_ds, cfg.window_radius)
    train_labels = [z for _, z in train_ds.clips]
    dev_labels = np.stack([z for _, z in dev_ds.clips])

    epoch_freq: Optional[L.ClassFrequency] = None
    if isinstance(cfg.loss, L.IflSpec) and cfg.ifl_freq_scope == "epoch":
        epoch_freq = L.class_frequency_counts(train_labels)

    n_clips = len(train_ds.clips)
    history: list[EpochRecord] = []
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n_clips)
        epoch_loss = 0.0
        for start in range(0, n_clips, cfg.batch_clips):
            idx = order[start : start + cfg.batch_clips]
            b = len(idx)
            windows = np.concatenate([train_windows[i] for i in idx])       # (b*N, K)
            labels3 = np.stack([train_labels[i] for i in idx])              # (b, N, M)
            scores, cache = M.forward_windows(params, windows)
            y3 = scores.reshape(b, n, m)

            freq = None
            if isinstance(cfg.loss, L.IflSpec):
                freq = epoch_freq if epoch_freq is not None else L.class_frequency_counts(labels3)
            out = L.loss_dispatch(cfg.loss, y3, labels3, freq=freq)
            if not np.isfinite(out.value):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch start {start}",
                    diagnostics={
                        "epoch": epoch,
                        "batch_start": int(start),
                        "loss_value": out.value,
                        "w1_norm": float(np.linalg.norm(params.w1)),
                        "w2_norm": float(np.linalg.norm(params.w2)),
                        "score_min": float(scores.min()),
                        "score_max": float(scores.max()),
                    },
                )
            epoch_loss += out.value
            dl_dy = out.grad.reshape(b * n, m) / (b * n)
            grads = M.backward(params, cache, dl_dy)
            adam.step(params, grads)

        dev_scores = _predict_dataset(params, dev_windows)
        dev_micro_f, dev_macro_f, _ = fscores(
            predict_labels(dev_scores, cfg.eval.threshold), dev_labels
        )
        history.append(EpochRecord(epoch, epoch_loss, dev_micro_f, dev_macro_f))

    dev_scores = _predict_dataset(params, dev_windows)
    report = evaluate(dev_scores, dev_labels, cfg.eval)
    return RunResult(final_params=params, history=history, report=report)


def _predict_dataset(params: M.ModelParams, windows: list[np.ndarray]) -> np.ndarray:
    scores = [M.forward_windows(params, w)[0] for w in windows]
    return np.stack(scores)


def predict_dataset(params: M.ModelParams, ds: Dataset) -> np.ndarray:
    """Per-clip score grids, stacked (clips, N, M)."""
    return _predict_dataset(params, _window_cache(ds, params.window_radius))


# ---------------------------------------------------------------------------
# multi-run experiments
# ---------------------------------------------------------------------------

SWEEP_AXES = ("srl.beta", "afl.zeta", "afl.gamma", "ifl.gamma", "fbtl.alpha")


def loss_for_axis(axis: str, value: float) -> L.LossSpec:
    """Loss spec a sweep axis value maps to (other parameters at defaults)."""
    if axis == "srl.beta":
        return L.SrlSpec(alpha=1.0, beta=value)
    if axis == "afl.zeta":
        return L.AflSpec(gamma=0.0, zeta=value)
    if axis == "afl.gamma":
        return L.AflSpec(gamma=value, zeta=0.0)
    if axis == "ifl.gamma":
        return L.IflSpec(gamma=value, c=500.0)
    if axis == "fbtl.alpha":
        return L.FbtlSpec(alpha=value, beta=1.0 - value, gamma=0.001, eta=1.0)
    raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {', '.join(SWEEP_AXES)}")


@dataclass
class RunRecord:
    method: str
    params: str
    seed: int
    report: MetricsReport


@dataclass
class SweepRow:
    axis: str
    value: float
    n_seeds: int
    micro_f_mean: float
    micro_f_std: float
    macro_f_mean: float
    macro_f_std: float
    runs: list[RunRecord]


@dataclass
class CompareRow:
    method: str
    params: str
    n_seeds: int
    micro_f_mean: float
    macro_f_mean: float
    micro_auc_mean: float
    macro_auc_mean: float
    micro_f_median: float
    macro_f_median: float
    micro_auc_median: float
    macro_auc_median: float
    runs: list[RunRecord]


def _run_one(job) -> tuple[int, int, RunRecord]:
    key, cfg, train_ds, dev_ds = job
    result = train(cfg, train_ds, dev_ds)
    record = RunRecord(
        method=L.method_label(cfg.loss),
        params=L.params_label(cfg.loss),
        seed=cfg.seed,
        report=result.report,
    )
    return key[0], key[1], record


def _run_jobs(jobs, workers: int):
    """Run (key, cfg, train, dev) jobs, sequentially or in processes.

    Results come back sorted by key, so worker count never changes
    output order.
    """
    if workers <= 1:
        results = [_run_one(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs))
    return sorted(results, key=lambda r: (r[0], r[1]))


def sweep(
    base_cfg: TrainConfig,
    axis: str,
    values: Sequence[float],
    train_ds: Dataset,
    dev_ds: Dataset,
    n_seeds: int = 10,
    workers: int = 1,
) -> list[SweepRow]:
    """One train+evaluate per (value x seed), seeds 0..n_seeds-1."""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {', '.join(SWEEP_AXES)}")
    if n_seeds < 1:
        raise ConfigError("n_seeds must be positive")
    jobs = []
    for vi, value in enumerate(values):
        cfg = replace(base_cfg, loss=loss_for_axis(axis, float(value)))
        for seed in range(n_seeds):
            jobs.append(((vi, seed), replace(cfg, seed=seed), train_ds, dev_ds))
    results = _run_jobs(jobs, workers)

    rows = []
    for vi, value in enumerate(values):
        records = [rec for k0, _, rec in results if k0 == vi]
        micro = np.array([r.report.micro_f for r in records])
        macro = np.array([r.report.macro_f for r in records])
        ddof = 1 if len(records) > 1 else 0
        rows.append(
            SweepRow(
                axis=axis,
                value=float(value),
                n_seeds=len(records),
                micro_f_mean=float(micro.mean()),
                micro_f_std=float(micro.std(ddof=ddof)),
                macro_f_mean=float(macro.mean()),
                macro_f_std=float(macro.std(ddof=ddof)),
                runs=records,
            )
        )
    return rows


def compare_losses(
    cfgs: Sequence[TrainConfig],
    train_ds: Dataset,
    dev_ds: Dataset,
    n_seeds: int = 10,
    workers: int = 1,
) -> list[CompareRow]:
    """Seed-aggregated metric table, one row per config."""
    if n_seeds < 1:
        raise ConfigError("n_seeds must be positive")
    jobs = []
    for ci, cfg in enumerate(cfgs):
        for seed in range(n_seeds):
            jobs.append(((ci, seed), replace(cfg, seed=seed), train_ds, dev_ds))
    results = _run_jobs(jobs, workers)

    rows = []
    for ci, cfg in enumerate(cfgs):
        records = [rec for k0, _, rec in results if k0 == ci]
        take = lambda f: np.array([f(r.report) for r in records])  # noqa: E731
        micro = take(lambda rep: rep.micro_f)
        macro = take(lambda rep: rep.macro_f)
        micro_auc = take(lambda rep: rep.micro_auc)
        macro_auc = take(lambda rep: rep.macro_auc)
        rows.append(
            CompareRow(
                method=L.method_label(cfg.loss),
                params=L.params_label(cfg.loss),
                n_seeds=len(records),
                micro_f_mean=float(micro.mean()),
                macro_f_mean=float(macro.mean()),
                micro_auc_mean=float(micro_auc.mean()),
                macro_auc_mean=float(macro_auc.mean()),
                micro_f_median=float(np.median(micro)),
                macro_f_median=float(np.median(macro)),
                micro_auc_median=float(np.median(micro_auc)),
                macro_auc_median=float(np.median(macro_auc)),
                runs=records,
            )
        )
    return rows


def write_history_csv(path, history: Sequence[EpochRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "train_loss", "dev_micro_f", "dev_macro_f"])
        for rec in history:
            writer.writerow(
                [rec.epoch, repr(rec.train_loss), repr(rec.dev_micro_f), repr(rec.dev_macro_f)]
            )
