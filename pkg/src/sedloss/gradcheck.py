"""Central finite-difference verification of every analytic gradient.

The comparison uses a scaled relative error,

    err = |analytic - fd| / max(|analytic|, |fd|, 1e-3),

i.e. plain relative error for gradient entries of ordinary size, with a
floor that absorbs the cancellation noise finite differences hit when a
gradient entry passes near zero (the FBTL focal term changes sign at
y = 1/(1+gamma)); an actual gradient bug shows up orders of magnitude
above either regime.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import losses as L
from . import model as M

FD_STEP = 1e-6
REL_ERR_FLOOR = 1e-3
LOSS_TOLERANCE = 1e-5
MODEL_TOLERANCE = 1e-4


@dataclass
class CheckResult:
    name: str
    max_rel_err: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tolerance


def scaled_rel_err(analytic: np.ndarray, fd: np.ndarray) -> np.ndarray:
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(fd)), REL_ERR_FLOOR)
    return np.abs(analytic - fd) / scale


def central_diff_grad(fn: Callable[[np.ndarray], float], x: np.ndarray,
                      step: float = FD_STEP) -> np.ndarray:
    """Entry-wise central differences of a scalar function of an array."""
    grad = np.empty_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = fn(x)
        flat[i] = orig - step
        down = fn(x)
        flat[i] = orig
        out[i] = (up - down) / (2.0 * step)
    return grad


def random_grids(rng: np.random.Generator, n: int, m: int,
                 lo: float = 1e-3, hi: float = 1.0 - 1e-3) -> tuple[np.ndarray, np.ndarray]:
    y = rng.uniform(lo, hi, size=(n, m))
    z = (rng.random((n, m)) < 0.35).astype(np.float64)
    return y, z


# Representative hyperparameters per loss; includes the published
# operating points (srl beta 0.3535, afl 0.0625/1.0 and 0/1.414,
# fbtl 0.6/0.4/0.001).
LOSS_CASES = {
    "bce": [()],
    "srl": [(1.0, 0.3535), (0.5, 1.5), (2.0, 0.25)],
    "ifl": [(0.0, 500.0), (0.5, 500.0), (1.0, 200.0)],
    "afl": [(0.0625, 1.0), (0.0, 1.414), (0.5, 0.5), (1.0, 0.0)],
    "fbtl": [(0.6, 0.4, 0.001), (0.5, 0.5, 0.0), (0.7, 0.3, 0.5)],
}


def check_loss(name: str, n_inputs: int = 50, seed: int = 0) -> CheckResult:
    """FD-verify one loss over randomized inputs and its parameter cases."""
    rng = np.random.default_rng(seed)
    cases = LOSS_CASES[name]
    worst = 0.0
    for trial in range(n_inputs):
        params = cases[trial % len(cases)]
        n, m = int(rng.integers(2, 7)), int(rng.integers(1, 5))
        if name == "fbtl":
            b = int(rng.integers(1, 4))
            y = rng.uniform(1e-3, 1 - 1e-3, size=(b, n, m))
            z = (rng.random((b, n, m)) < 0.35).astype(np.float64)
            alpha, beta, gamma = params
            out = L.fbtl_loss(y, z, alpha, beta, gamma, eta=1.0)
            fd = central_diff_grad(
                lambda arr: L.fbtl_loss(arr, z, alpha, beta, gamma, eta=1.0).value, y.copy()
            )
        else:
            y, z = random_grids(rng, n, m)
            if name == "bce":
                fn = lambda arr: L.bce_loss(arr, z)  # noqa: E731
            elif name == "srl":
                alpha, beta = params
                fn = lambda arr: L.srl_loss(arr, z, alpha, beta)  # noqa: E731
            elif name == "ifl":
                gamma, c = params
                freq = L.ClassFrequency(
                    rng.integers(0, 2000, size=m).astype(np.int64)
                )
                fn = lambda arr: L.ifl_loss(arr, z, gamma, c, freq)  # noqa: E731
            elif name == "afl":
                gamma, zeta = params
                fn = lambda arr: L.afl_loss(arr, z, gamma, zeta)  # noqa: E731
            else:
                raise ValueError(f"unknown loss {name!r}")
            out = fn(y)
            fd = central_diff_grad(lambda arr: fn(arr).value, y.copy())
        worst = max(worst, float(scaled_rel_err(out.grad, fd).max()))
    return CheckResult(name=name, max_rel_err=worst, tolerance=LOSS_TOLERANCE)


def check_model(seed: int = 0, n_inputs: int = 5) -> CheckResult:
    """FD-verify cross-entropy composed with the model over every parameter."""
    worst = 0.0
    for trial in range(n_inputs):
        rng = np.random.default_rng(seed + trial)
        d, h, m, n, w = 3, 4, 2, 5, 1
        params = M.init_params(seed + trial, input_dim=d, hidden=h, classes=m, window_radius=w)
        x = rng.normal(size=(n, d))
        z = (rng.random((n, m)) < 0.4).astype(np.float64)

        scores, cache = M.forward(params, x)
        out = L.bce_loss(scores, z)
        grads = M.backward(params, cache, out.grad)

        def loss_at(p: M.ModelParams) -> float:
            s, _ = M.forward(p, x)
            return L.bce_loss(s, z).value

        for arr, g in (
            (params.w1, grads.w1),
            (params.b1, grads.b1),
            (params.w2, grads.w2),
            (params.b2, grads.b2),
        ):
            # central_diff_grad perturbs arr in place; params shares its memory
            fd = central_diff_grad(lambda _: loss_at(params), arr)
            worst = max(worst, float(scaled_rel_err(g, fd).max()))
    return CheckResult(name="model", max_rel_err=worst, tolerance=MODEL_TOLERANCE)


def run_checks(which: str = "all", seed: int = 0) -> list[CheckResult]:
    """Run the named check ('bce', ..., 'model') or all of them."""
    names = list(LOSS_CASES) + ["model"] if which == "all" else [which]
    results = []
    for name in names:
        if name == "model":
            results.append(check_model(seed=seed))
        else:
            results.append(check_loss(name, seed=seed))
    return results
