"""Imbalance-aware losses over frame-level multi-label prediction grids.

A prediction grid is a float array of shape (N, M) — N frames, M event
classes — with entries in (0, 1); a label grid is a {0, 1} array of the
same shape.  All losses return the raw sum over frames and classes (no
averaging) together with the analytic gradient with respect to the
predictions.

Five losses are provided:

* ``bce_loss``  — plain binary cross-entropy.
* ``srl_loss``  — constant reweighting of the active/inactive terms.
* ``ifl_loss``  — active term scaled per class by (c / (n_m + c))**gamma,
  where n_m counts that class's active frames in the training batch.
* ``afl_loss``  — asymmetric focal modulation, (1-y)**gamma on active and
  y**zeta on inactive terms.
* ``fbtl_loss`` — focal batch Tversky loss, a one-minus-ratio loss pooled
  over a whole batch of clips.

Predictions are clamped to [CLAMP_EPS, 1 - CLAMP_EPS] on entry so values
and gradients stay finite even for saturated inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ConfigError, ValidationError

CLAMP_EPS = 1e-7


# ---------------------------------------------------------------------------
# loss specifications
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BceSpec:
    """Binary cross-entropy, no hyperparameters."""

    name = "bce"


@dataclass(frozen=True)
class SrlSpec:
    """Simple reweighting: alpha on active terms, beta on inactive terms."""

    beta: float
    alpha: float = 1.0
    name = "srl"

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValidationError(
                f"srl weights must be nonnegative, got alpha={self.alpha} beta={self.beta}"
            )


@dataclass(frozen=True)
class IflSpec:
    """Inverse-frequency reweighting of the active term."""

    gamma: float
    c: float = 500.0
    name = "ifl"

    def __post_init__(self):
        if self.c <= 0:
            raise ValidationError(f"ifl constant c must be positive, got {self.c}")
        if self.gamma < 0:
            raise ValidationError(f"ifl gamma must be nonnegative, got {self.gamma}")


@dataclass(frozen=True)
class AflSpec:
    """Asymmetric focal loss with independent active/inactive exponents."""

    gamma: float
    zeta: float = 0.0
    name = "afl"

    def __post_init__(self):
        if self.gamma < 0 or self.zeta < 0:
            raise ValidationError(
                f"afl focusing factors must be nonnegative, got gamma={self.gamma} zeta={self.zeta}"
            )


@dataclass(frozen=True)
class FbtlSpec:
    """Focal batch Tversky loss.

    alpha and beta trade off false positives against false negatives and
    must sum to 1; eta is the smoothing constant.  ``pooling="clip"``
    computes one ratio per clip and sums them instead of pooling the
    whole batch (non-default).
    """

    alpha: float
    beta: float
    gamma: float = 0.0
    eta: float = 1.0
    pooling: str = "batch"
    name = "fbtl"

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0) or not (0.0 <= self.beta <= 1.0):
            raise ValidationError(
                f"fbtl alpha/beta must lie in [0,1], got alpha={self.alpha} beta={self.beta}"
            )
        if abs(self.alpha + self.beta - 1.0) > 1e-12:
            raise ValidationError(
                f"fbtl requires alpha + beta = 1, got {self.alpha} + {self.beta}"
            )
        if self.eta <= 0:
            raise ValidationError(f"fbtl eta must be positive, got {self.eta}")
        if self.gamma < 0:
            raise ValidationError(f"fbtl gamma must be nonnegative, got {self.gamma}")
        if self.pooling not in ("batch", "clip"):
            raise ValidationError(f"fbtl pooling must be 'batch' or 'clip', got {self.pooling!r}")


LossSpec = Union[BceSpec, SrlSpec, IflSpec, AflSpec, FbtlSpec]


@dataclass(frozen=True)
class ClassFrequency:
    """Active-frame count per class over a training batch."""

    counts: np.ndarray  # int vector, length M


@dataclass
class LossOutput:
    """Loss value plus gradient with respect to the (clamped) predictions.

    ``grad`` has the shape of the prediction input: (N, M) for the
    per-frame losses, (B, N, M) when computed over a batch.
    """

    value: float
    grad: np.ndarray


# ---------------------------------------------------------------------------
# validation helpers
# ---------------------------------------------------------------------------

def clamp_predictions(y: np.ndarray, eps: float = CLAMP_EPS) -> np.ndarray:
    """Clamp prediction scores into [eps, 1 - eps]."""
    return np.clip(np.asarray(y, dtype=np.float64), eps, 1.0 - eps)


def _check_pair(y: np.ndarray, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if y.ndim != 2:
        raise ValidationError(f"prediction grid must be 2-d (N, M), got shape {y.shape}")
    if y.shape != z.shape:
        raise ValidationError(f"prediction/label shape mismatch: {y.shape} vs {z.shape}")
    if y.shape[0] < 1 or y.shape[1] < 1:
        raise ValidationError(f"grids need at least one frame and one class, got {y.shape}")
    if not np.all((z == 0.0) | (z == 1.0)):
        raise ValidationError("label grid entries must be exactly 0 or 1")
    return clamp_predictions(y), z


def _check_batch(y_batch, z_batch) -> tuple[np.ndarray, np.ndarray]:
    """Stack a sequence of (N, M) grids into (B, N, M) arrays and validate."""
    y_list = [np.asarray(y, dtype=np.float64) for y in y_batch]
    z_list = [np.asarray(z, dtype=np.float64) for z in z_batch]
    if len(y_list) == 0:
        raise ValidationError("batch must contain at least one clip")
    if len(y_list) != len(z_list):
        raise ValidationError(
            f"batch size mismatch: {len(y_list)} prediction grids vs {len(z_list)} label grids"
        )
    shape = y_list[0].shape
    for y, z in zip(y_list, z_list):
        if y.shape != shape or z.shape != shape:
            raise ValidationError("all grids in a batch must share one (N, M) shape")
    y3 = clamp_predictions(np.stack(y_list))
    z3 = np.stack(z_list)
    if not np.all((z3 == 0.0) | (z3 == 1.0)):
        raise ValidationError("label grid entries must be exactly 0 or 1")
    return y3, z3


def _as_grid_sequence(batch) -> list[np.ndarray]:
    if isinstance(batch, np.ndarray):
        if batch.ndim == 3:
            return [batch[i] for i in range(batch.shape[0])]
        if batch.ndim == 2:
            return [batch]
        raise ValidationError(f"expected (N, M) or (B, N, M) array, got shape {batch.shape}")
    return list(batch)


# ---------------------------------------------------------------------------
# per-frame losses
# ---------------------------------------------------------------------------

def bce_loss(y: np.ndarray, z: np.ndarray) -> LossOutput:
    """Binary cross-entropy summed over all frames and classes."""
    y, z = _check_pair(y, z)
    value = -np.sum(z * np.log(y) + (1.0 - z) * np.log(1.0 - y))
    grad = -z / y + (1.0 - z) / (1.0 - y)
    return LossOutput(float(value), grad)


def srl_loss(y: np.ndarray, z: np.ndarray, alpha: float, beta: float) -> LossOutput:
    """Reweighted cross-entropy: alpha on active, beta on inactive terms."""
    if alpha < 0 or beta < 0:
        raise ValidationError(f"srl weights must be nonnegative, got alpha={alpha} beta={beta}")
    y, z = _check_pair(y, z)
    value = -np.sum(alpha * z * np.log(y) + beta * (1.0 - z) * np.log(1.0 - y))
    grad = -alpha * z / y + beta * (1.0 - z) / (1.0 - y)
    return LossOutput(float(value), grad)


def class_frequency_counts(batch_labels: Sequence[np.ndarray]) -> ClassFrequency:
    """Count active frames per class over a batch of label grids."""
    grids = _as_grid_sequence(batch_labels)
    if len(grids) == 0:
        raise ValidationError("cannot count class frequencies over an empty batch")
    m = grids[0].shape[1]
    counts = np.zeros(m, dtype=np.int64)
    for z in grids:
        z = np.asarray(z)
        if z.ndim != 2 or z.shape[1] != m:
            raise ValidationError("all label grids must share the class dimension")
        if not np.all((z == 0) | (z == 1)):
            raise ValidationError("label grid entries must be exactly 0 or 1")
        counts += z.astype(np.int64).sum(axis=0)
    return ClassFrequency(counts)


def ifl_loss(
    y: np.ndarray, z: np.ndarray, gamma: float, c: float, freq: ClassFrequency
) -> LossOutput:
    """Cross-entropy with the active term scaled by (c/(n_m+c))**gamma.

    ``freq`` holds the per-class active-frame counts n_m of the batch the
    clip belongs to; the inactive term is left unweighted.
    """
    if c <= 0:
        raise ValidationError(f"ifl constant c must be positive, got {c}")
    if gamma < 0:
        raise ValidationError(f"ifl gamma must be nonnegative, got {gamma}")
    y, z = _check_pair(y, z)
    counts = np.asarray(freq.counts, dtype=np.float64)
    if counts.shape != (y.shape[1],):
        raise ValidationError(
            f"class frequency length {counts.shape} does not match {y.shape[1]} classes"
        )
    w = (c / (counts + c)) ** gamma  # length M, broadcast over frames
    value = -np.sum(w * z * np.log(y) + (1.0 - z) * np.log(1.0 - y))
    grad = -w * z / y + (1.0 - z) / (1.0 - y)
    return LossOutput(float(value), grad)


def afl_loss(y: np.ndarray, z: np.ndarray, gamma: float, zeta: float) -> LossOutput:
    """Asymmetric focal loss.

    Active terms are modulated by (1-y)**gamma, inactive terms by
    y**zeta, so easy frames of either kind can be down-weighted
    independently.  The gradient carries the product-rule terms from the
    focal factors.
    """
    if gamma < 0 or zeta < 0:
        raise ValidationError(
            f"afl focusing factors must be nonnegative, got gamma={gamma} zeta={zeta}"
        )
    y, z = _check_pair(y, z)
    log_y = np.log(y)
    log_1my = np.log(1.0 - y)
    pow_a = (1.0 - y) ** gamma
    pow_i = y ** zeta
    value = -np.sum(pow_a * z * log_y + pow_i * (1.0 - z) * log_1my)
    # d/dy[-(1-y)^g log y] = g (1-y)^(g-1) log y - (1-y)^g / y
    # d/dy[-y^z log(1-y)]  = y^z / (1-y) - z y^(z-1) log(1-y)
    # gamma/zeta = 0 zeroes the product-rule term; clamping keeps the
    # negative-exponent powers finite so 0 * large stays 0.
    grad_active = gamma * (1.0 - y) ** (gamma - 1.0) * log_y - pow_a / y
    grad_inactive = pow_i / (1.0 - y) - zeta * y ** (zeta - 1.0) * log_1my
    grad = z * grad_active + (1.0 - z) * grad_inactive
    return LossOutput(float(value), grad)


# ---------------------------------------------------------------------------
# batch-pooled loss
# ---------------------------------------------------------------------------

def fbtl_loss(
    y_batch,
    z_batch,
    alpha: float,
    beta: float,
    gamma: float,
    eta: float,
    pooling: str = "batch",
) -> LossOutput:
    """Focal batch Tversky loss over a batch of clips.

    value = 1 - (sum (1-y)^gamma y z + eta)
                / (alpha sum (1-y)^gamma y + beta sum z + eta)

    with all sums running over the whole batch (clips x frames x
    classes).  The returned gradient has shape (B, N, M).  With eta > 0
    the value always lies in [0, 1).  ``pooling="clip"`` instead forms
    one ratio per clip and sums them.
    """
    spec = FbtlSpec(alpha=alpha, beta=beta, gamma=gamma, eta=eta, pooling=pooling)
    y3, z3 = _check_batch(y_batch, z_batch)
    if spec.pooling == "clip":
        grads = np.empty_like(y3)
        total = 0.0
        for i in range(y3.shape[0]):
            value, grad = _fbtl_pooled(y3[i : i + 1], z3[i : i + 1], spec)
            total += value
            grads[i] = grad[0]
        return LossOutput(total, grads)
    value, grad = _fbtl_pooled(y3, z3, spec)
    return LossOutput(value, grad)


def _fbtl_pooled(y3: np.ndarray, z3: np.ndarray, spec: FbtlSpec) -> tuple[float, np.ndarray]:
    focal = (1.0 - y3) ** spec.gamma
    overlap = focal * y3
    num = np.sum(overlap * z3) + spec.eta
    den = spec.alpha * np.sum(overlap) + spec.beta * np.sum(z3) + spec.eta
    value = 1.0 - num / den
    # d/dy[(1-y)^g y] = (1-y)^g - g (1-y)^(g-1) y
    doverlap = focal - spec.gamma * (1.0 - y3) ** (spec.gamma - 1.0) * y3
    # quotient rule on 1 - num/den
    grad = (num * spec.alpha * doverlap - den * doverlap * z3) / den**2
    return float(value), grad


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

def loss_dispatch(
    spec: LossSpec,
    y_batch,
    z_batch,
    freq: Optional[ClassFrequency] = None,
) -> LossOutput:
    """Evaluate a loss spec over a batch of clips.

    ``y_batch``/``z_batch`` may be single (N, M) grids, sequences of
    grids, or (B, N, M) arrays.  Per-frame losses sum over clips; FBTL
    pools the batch.  IFL requires ``freq``; if omitted it could be
    silently miscomputed, so its absence is a configuration error.
    """
    y3, z3 = _check_batch(_as_grid_sequence(y_batch), _as_grid_sequence(z_batch))
    if isinstance(spec, IflSpec):
        if freq is None:
            raise ConfigError("ifl needs batch class frequencies; pass freq=")
    elif freq is not None:
        raise ConfigError(f"class frequencies are only meaningful for ifl, not {spec.name}")

    if isinstance(spec, FbtlSpec):
        return fbtl_loss(
            y3, z3, spec.alpha, spec.beta, spec.gamma, spec.eta, pooling=spec.pooling
        )

    total = 0.0
    grads = np.empty_like(y3)
    for i in range(y3.shape[0]):
        if isinstance(spec, BceSpec):
            out = bce_loss(y3[i], z3[i])
        elif isinstance(spec, SrlSpec):
            out = srl_loss(y3[i], z3[i], spec.alpha, spec.beta)
        elif isinstance(spec, IflSpec):
            out = ifl_loss(y3[i], z3[i], spec.gamma, spec.c, freq)
        elif isinstance(spec, AflSpec):
            out = afl_loss(y3[i], z3[i], spec.gamma, spec.zeta)
        else:
            raise ConfigError(f"unknown loss spec {spec!r}")
        total += out.value
        grads[i] = out.grad
    return LossOutput(total, grads)


def method_label(spec: LossSpec) -> str:
    """Short method name for tables and CSV rows."""
    return spec.name


def params_label(spec: LossSpec) -> str:
    """Hyperparameter summary string for tables and CSV rows."""
    if isinstance(spec, BceSpec):
        return ""
    if isinstance(spec, SrlSpec):
        return f"alpha={spec.alpha:g} beta={spec.beta:g}"
    if isinstance(spec, IflSpec):
        return f"gamma={spec.gamma:g} c={spec.c:g}"
    if isinstance(spec, AflSpec):
        return f"gamma={spec.gamma:g} zeta={spec.zeta:g}"
    if isinstance(spec, FbtlSpec):
        label = f"alpha={spec.alpha:g} beta={spec.beta:g} gamma={spec.gamma:g} eta={spec.eta:g}"
        if spec.pooling != "batch":
            label += f" pooling={spec.pooling}"
        return label
    raise ConfigError(f"unknown loss spec {spec!r}")
