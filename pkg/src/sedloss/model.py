"""Context-windowed feed-forward sequence model with manual backprop.

Each frame's input is the concatenation of the feature vectors of frames
n-w .. n+w (zero-padded at clip edges).  One leaky-ReLU hidden layer
feeds a sigmoid output layer producing per-frame, per-class detection
scores in (0, 1).

Checkpoint file format (all integers and floats little-endian):

    bytes 0..7    magic b"SEDWMLP1"
    4 x uint32    input_dim, hidden, classes, window_radius
    1 x float64   leak
    float64[]     w1 (hidden x (2w+1)*input_dim, row-major), b1,
                  w2 (classes x hidden, row-major), b2
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

CHECKPOINT_MAGIC = b"SEDWMLP1"
DEFAULT_LEAK = 0.01


@dataclass
class ModelParams:
    w1: np.ndarray  # (H, (2w+1)*D)
    b1: np.ndarray  # (H,)
    w2: np.ndarray  # (M, H)
    b2: np.ndarray  # (M,)
    window_radius: int
    input_dim: int
    hidden: int
    classes: int
    leak: float = DEFAULT_LEAK

    def check(self):
        k = (2 * self.window_radius + 1) * self.input_dim
        if self.w1.shape != (self.hidden, k):
            raise ValidationError(f"w1 shape {self.w1.shape} != ({self.hidden}, {k})")
        if self.b1.shape != (self.hidden,):
            raise ValidationError(f"b1 shape {self.b1.shape} != ({self.hidden},)")
        if self.w2.shape != (self.classes, self.hidden):
            raise ValidationError(f"w2 shape {self.w2.shape} != ({self.classes}, {self.hidden})")
        if self.b2.shape != (self.classes,):
            raise ValidationError(f"b2 shape {self.b2.shape} != ({self.classes},)")
        for arr in (self.w1, self.b1, self.w2, self.b2):
            if not np.all(np.isfinite(arr)):
                raise ValidationError("model parameters must be finite")

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy(),
            self.window_radius, self.input_dim, self.hidden, self.classes, self.leak,
        )


@dataclass
class ParamGrads:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


@dataclass
class ForwardCache:
    """Intermediate values needed by backward()."""

    windows: np.ndarray  # (N, (2w+1)*D)
    pre1: np.ndarray     # (N, H) pre-activation of the hidden layer
    hidden: np.ndarray   # (N, H)
    scores: np.ndarray   # (N, M)


def init_params(
    seed: int,
    input_dim: int,
    hidden: int,
    classes: int,
    window_radius: int,
    leak: float = DEFAULT_LEAK,
) -> ModelParams:
    """Seeded He-style init: normal weights with std sqrt(2/fan_in), zero biases."""
    if input_dim < 1 or hidden < 1 or classes < 1 or window_radius < 0:
        raise ValidationError(
            f"dims must be positive (window_radius >= 0), got "
            f"D={input_dim} H={hidden} M={classes} w={window_radius}"
        )
    rng = np.random.default_rng(seed)
    k = (2 * window_radius + 1) * input_dim
    w1 = rng.normal(0.0, np.sqrt(2.0 / k), size=(hidden, k))
    w2 = rng.normal(0.0, np.sqrt(2.0 / hidden), size=(classes, hidden))
    return ModelParams(
        w1=w1,
        b1=np.zeros(hidden),
        w2=w2,
        b2=np.zeros(classes),
        window_radius=window_radius,
        input_dim=input_dim,
        hidden=hidden,
        classes=classes,
        leak=leak,
    )


def window_stack(x: np.ndarray, window_radius: int) -> np.ndarray:
    """Gather per-frame context windows, zero-padded past the clip edges.

    x: (N, D)  ->  (N, (2w+1)*D), column blocks ordered n-w .. n+w.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValidationError(f"feature grid must be 2-d (N, D), got shape {x.shape}")
    n, d = x.shape
    w = window_radius
    padded = np.zeros((n + 2 * w, d))
    padded[w : w + n] = x
    blocks = [padded[off : off + n] for off in range(2 * w + 1)]
    return np.concatenate(blocks, axis=1)


def forward_windows(params: ModelParams, windows: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Forward pass from a precomputed window matrix (N, (2w+1)*D)."""
    if windows.ndim != 2 or windows.shape[1] != params.w1.shape[1]:
        raise ValidationError(
            f"window matrix width {windows.shape} does not match w1 {params.w1.shape}"
        )
    pre1 = windows @ params.w1.T + params.b1
    hidden = np.where(pre1 > 0.0, pre1, params.leak * pre1)
    logits = hidden @ params.w2.T + params.b2
    scores = 1.0 / (1.0 + np.exp(-logits))
    return scores, ForwardCache(windows=windows, pre1=pre1, hidden=hidden, scores=scores)


def forward(params: ModelParams, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Per-frame multi-label scores for a feature grid x (N, D)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise ValidationError(
            f"feature grid shape {x.shape} does not match input_dim={params.input_dim}"
        )
    return forward_windows(params, window_stack(x, params.window_radius))


def backward(params: ModelParams, cache: ForwardCache, dl_dy: np.ndarray) -> ParamGrads:
    """Chain rule from dL/dscores back to parameter gradients.

    dL/dlogit = dL/dy * y * (1 - y), then standard dense-layer backprop
    through the leaky ReLU and the window gather (windows are data, so
    no gradient flows past them).
    """
    dl_dy = np.asarray(dl_dy, dtype=np.float64)
    if dl_dy.shape != cache.scores.shape:
        raise ValidationError(
            f"dL/dy shape {dl_dy.shape} does not match cached scores {cache.scores.shape}"
        )
    y = cache.scores
    dlogit = dl_dy * y * (1.0 - y)                       # (N, M)
    dw2 = dlogit.T @ cache.hidden                        # (M, H)
    db2 = dlogit.sum(axis=0)
    dhidden = dlogit @ params.w2                         # (N, H)
    dpre1 = dhidden * np.where(cache.pre1 > 0.0, 1.0, params.leak)
    dw1 = dpre1.T @ cache.windows                        # (H, K)
    db1 = dpre1.sum(axis=0)
    return ParamGrads(w1=dw1, b1=db1, w2=dw2, b2=db2)


def save_params(path, params: ModelParams) -> None:
    """Write a checkpoint in the flat binary format documented above."""
    params.check()
    header = np.array(
        [params.input_dim, params.hidden, params.classes, params.window_radius],
        dtype="<u4",
    )
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(header.tobytes())
        f.write(np.float64(params.leak).astype("<f8").tobytes())
        for arr in (params.w1, params.b1, params.w2, params.b2):
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_params(path) -> ModelParams:
    """Read a checkpoint written by save_params."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise ValidationError(f"{path}: bad checkpoint magic")
    off = len(CHECKPOINT_MAGIC)
    d, h, m, w = np.frombuffer(blob, dtype="<u4", count=4, offset=off)
    off += 16
    leak = float(np.frombuffer(blob, dtype="<f8", count=1, offset=off)[0])
    off += 8
    k = (2 * int(w) + 1) * int(d)
    sizes = [(int(h), k), (int(h),), (int(m), int(h)), (int(m),)]
    arrays = []
    for shape in sizes:
        count = int(np.prod(shape))
        arrays.append(
            np.frombuffer(blob, dtype="<f8", count=count, offset=off).reshape(shape).copy()
        )
        off += count * 8
    if off != len(blob):
        raise ValidationError(f"{path}: trailing bytes in checkpoint")
    params = ModelParams(
        w1=arrays[0], b1=arrays[1], w2=arrays[2], b2=arrays[3],
        window_radius=int(w), input_dim=int(d), hidden=int(h), classes=int(m), leak=leak,
    )
    params.check()
    return params
