"""Command-line front end: dataset generation, statistics, gradient
checks, single training runs, sweeps, and loss comparisons.

Every subcommand accepts ``--config FILE`` pointing at a UTF-8 key=value
file (``#`` comments allowed) whose keys are the subcommand's flag names
without the leading dashes.  Flags override file values; unknown keys
are rejected.  Exit codes: 0 success, 1 check failure or IO error,
2 usage/validation error.

Loss method strings follow ``name[:param[:param...]]`` with positional
parameters in each loss's natural order:

    bce
    srl:BETA            (alpha fixed at 1.0)  |  srl:ALPHA:BETA
    ifl:GAMMA           (c = 500)             |  ifl:GAMMA:C
    afl:GAMMA           (zeta = 0)            |  afl:GAMMA:ZETA
    fbtl:ALPHA:BETA:GAMMA                     |  fbtl:ALPHA:BETA:GAMMA:ETA
    dice                (alias for fbtl:0.5:0.5:0.0)
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from . import gradcheck
from . import losses as L
from . import trainer as T
from .data import (
    Dataset,
    compute_stats,
    generate_dataset,
    load_dataset,
    save_dataset,
    split_dataset,
    tut_like_preset,
)
from .errors import ConfigError, TrainingDivergedError, ValidationError
from .metrics import EvalConfig, write_report_csv
from .model import save_params


def parse_method(text: str) -> L.LossSpec:
    """Parse a loss method string (grammar in the module docstring)."""
    parts = text.strip().split(":")
    name, params = parts[0].lower(), parts[1:]
    try:
        values = [float(p) for p in params]
    except ValueError as exc:
        raise ConfigError(f"bad loss parameter in {text!r}: {exc}") from exc
    try:
        if name == "bce":
            if values:
                raise ConfigError("bce takes no parameters")
            return L.BceSpec()
        if name == "srl":
            if len(values) == 1:
                return L.SrlSpec(alpha=1.0, beta=values[0])
            if len(values) == 2:
                return L.SrlSpec(alpha=values[0], beta=values[1])
            raise ConfigError("srl takes srl:BETA or srl:ALPHA:BETA")
        if name == "ifl":
            if len(values) == 1:
                return L.IflSpec(gamma=values[0])
            if len(values) == 2:
                return L.IflSpec(gamma=values[0], c=values[1])
            raise ConfigError("ifl takes ifl:GAMMA or ifl:GAMMA:C")
        if name == "afl":
            if len(values) == 1:
                return L.AflSpec(gamma=values[0], zeta=0.0)
            if len(values) == 2:
                return L.AflSpec(gamma=values[0], zeta=values[1])
            raise ConfigError("afl takes afl:GAMMA or afl:GAMMA:ZETA")
        if name == "fbtl":
            if len(values) == 3:
                return L.FbtlSpec(alpha=values[0], beta=values[1], gamma=values[2])
            if len(values) == 4:
                return L.FbtlSpec(
                    alpha=values[0], beta=values[1], gamma=values[2], eta=values[3]
                )
            raise ConfigError("fbtl takes fbtl:ALPHA:BETA:GAMMA[:ETA]")
        if name == "dice":
            if values:
                raise ConfigError("dice takes no parameters")
            return L.FbtlSpec(alpha=0.5, beta=0.5, gamma=0.0)
    except ValidationError as exc:
        raise ConfigError(f"invalid parameters in {text!r}: {exc}") from exc
    raise ConfigError(f"unknown loss method {name!r} in {text!r}")


def method_slug(spec: L.LossSpec, seed: int) -> str:
    """Filesystem-safe run label, e.g. afl_g0.0625_z1_s3."""
    if isinstance(spec, L.BceSpec):
        base = "bce"
    elif isinstance(spec, L.SrlSpec):
        base = f"srl_a{spec.alpha:g}_b{spec.beta:g}"
    elif isinstance(spec, L.IflSpec):
        base = f"ifl_g{spec.gamma:g}_c{spec.c:g}"
    elif isinstance(spec, L.AflSpec):
        base = f"afl_g{spec.gamma:g}_z{spec.zeta:g}"
    else:
        base = f"fbtl_a{spec.alpha:g}_b{spec.beta:g}_g{spec.gamma:g}"
    return f"{base}_s{seed}"


# ---------------------------------------------------------------------------
# option plumbing: defaults < config file < explicit flags
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Opt:
    name: str                      # long flag without dashes; also the config key
    type: Callable                 # str -> value
    default: object                # None means "required"
    help: str
    required: bool = False


COMMON_TRAIN_OPTS = [
    Opt("data", str, None, "dataset directory (from gen-data)", required=True),
    Opt("dev-data", str, "", "separate held-out dataset directory"),
    Opt("dev-clips", int, 0, "clips to split off as dev set when no dev-data (default: 20%)"),
    Opt("epochs", int, 8, "training epochs"),
    Opt("batch-clips", int, 8, "clips per mini-batch"),
    Opt("lr", float, 0.02, "Adam learning rate"),
    Opt("threshold", float, 0.5, "detection threshold"),
    Opt("hidden", int, 32, "hidden units"),
    Opt("window", int, 5, "context window radius in frames"),
    Opt("ifl-freq-scope", str, "batch", "ifl class-count scope: batch or epoch"),
    Opt("out", str, ".", "output directory"),
]

SUBCOMMANDS: dict[str, list[Opt]] = {
    "gen-data": [
        Opt("preset", str, "tut-like", "dataset preset (only: tut-like)"),
        Opt("clips", int, 200, "number of clips to generate"),
        Opt("seed", int, 0, "generator seed"),
        Opt("feature-dim", int, 16, "feature dimensionality"),
        Opt("noise-sigma", float, 1.0, "background noise level"),
        Opt("amplitude", float, 3.0, "class signature amplitude"),
        Opt("out", str, None, "output dataset directory", required=True),
    ],
    "stats": [
        Opt("data", str, None, "dataset directory", required=True),
    ],
    "grad-check": [
        Opt("loss", str, "all", "which check: bce srl ifl afl fbtl model all"),
        Opt("seed", int, 0, "seed for randomized check inputs"),
    ],
    "train": COMMON_TRAIN_OPTS + [
        Opt("loss", str, "bce", "loss method string"),
        Opt("seed", int, 0, "experiment seed"),
    ],
    "sweep": COMMON_TRAIN_OPTS + [
        Opt("axis", str, None, "swept parameter: " + " ".join(T.SWEEP_AXES), required=True),
        Opt("values", str, None, "comma-separated axis values", required=True),
        Opt("seeds", int, 5, "seeds per value (0..S-1)"),
        Opt("workers", int, 1, "parallel training processes"),
    ],
    "compare": COMMON_TRAIN_OPTS + [
        Opt("methods", str, None, "comma-separated loss method strings", required=True),
        Opt("seeds", int, 5, "seeds per method (0..S-1)"),
        Opt("workers", int, 1, "parallel training processes"),
    ],
}

COMMAND_HELP = {
    "gen-data": "generate a synthetic dataset directory and print its statistics",
    "stats": "print activity statistics of a dataset directory",
    "grad-check": "finite-difference verification of all analytic gradients",
    "train": "train one model and write history/metrics/checkpoint",
    "sweep": "train over a grid of one loss parameter x seeds",
    "compare": "train several loss methods and tabulate their metrics",
}


def read_config_file(path: str) -> dict[str, str]:
    entries: dict[str, str] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            entries[key.strip()] = value.strip()
    return entries


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sedloss",
        description="Imbalance-aware losses for frame-level sound event detection.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for command, opts in SUBCOMMANDS.items():
        p = sub.add_parser(command, help=COMMAND_HELP[command])
        p.add_argument(
            "--config", default=None, metavar="FILE",
            help="key=value config file; flags override file values",
        )
        for opt in opts:
            p.add_argument(
                f"--{opt.name}",
                type=opt.type,
                default=argparse.SUPPRESS,
                dest=opt.name,
                metavar=opt.name.upper().replace("-", "_"),
                help=f"{opt.help} (config key: {opt.name}"
                + (", required)" if opt.required else f", default: {opt.default})"),
            )
    return parser


def merge_options(command: str, args: argparse.Namespace) -> dict:
    """Apply precedence defaults < config file < explicit flags."""
    table = {opt.name: opt for opt in SUBCOMMANDS[command]}
    merged = {name: opt.default for name, opt in table.items()}
    config_path = getattr(args, "config", None)
    if config_path:
        for key, raw in read_config_file(config_path).items():
            if key not in table:
                raise ConfigError(
                    f"unknown config key {key!r} for {command}; "
                    f"known keys: {', '.join(sorted(table))}"
                )
            try:
                merged[key] = table[key].type(raw)
            except ValueError as exc:
                raise ConfigError(f"config key {key}: {exc}") from exc
    for key, value in vars(args).items():
        if key in table:
            merged[key] = value
    missing = [name for name, opt in table.items() if opt.required and merged[name] is None]
    if missing:
        raise ConfigError(f"{command}: missing required option(s): {', '.join(missing)}")
    return merged


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _print_stats(ds: Dataset) -> None:
    stats = compute_stats(ds)
    hop = ds.spec.frame_hop_s
    print(
        f"clips={ds.spec.clips} frames/clip={ds.spec.frames_per_clip} "
        f"classes={len(ds.spec.classes)} feature_dim={ds.spec.feature_dim}"
    )
    print(
        f"active class-frames: {stats.total_active}  inactive: {stats.total_inactive}  "
        f"active fraction: {stats.active_fraction:.4f}"
    )
    print(f"{'class':24s} {'active':>8s} {'runs':>6s} {'mean dur (s)':>12s}")
    for j, cls in enumerate(ds.spec.classes):
        print(
            f"{cls.name:24s} {stats.per_class_active_frames[j]:8d} "
            f"{stats.per_class_run_count[j]:6d} "
            f"{stats.per_class_mean_duration_frames[j] * hop:12.2f}"
        )


def cmd_gen_data(opts: dict) -> int:
    if opts["preset"] != "tut-like":
        raise ConfigError(f"unknown preset {opts['preset']!r} (available: tut-like)")
    spec = tut_like_preset(
        clips=opts["clips"],
        seed=opts["seed"],
        feature_dim=opts["feature-dim"],
        noise_sigma=opts["noise-sigma"],
        amplitude=opts["amplitude"],
    )
    ds = generate_dataset(spec)
    save_dataset(opts["out"], ds)
    print(f"wrote {spec.clips} clips to {opts['out']}")
    _print_stats(ds)
    return 0


def cmd_stats(opts: dict) -> int:
    _print_stats(load_dataset(opts["data"]))
    return 0


def cmd_grad_check(opts: dict) -> int:
    which = opts["loss"]
    known = list(gradcheck.LOSS_CASES) + ["model", "all"]
    if which not in known:
        raise ConfigError(f"unknown check {which!r}; expected one of {', '.join(known)}")
    results = gradcheck.run_checks(which, seed=opts["seed"])
    failed = False
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {r.name}: max relative error {r.max_rel_err:.3e} (tolerance {r.tolerance:g})")
        failed = failed or not r.passed
    return 1 if failed else 0


def _load_train_dev(opts: dict) -> tuple[Dataset, Dataset]:
    ds = load_dataset(opts["data"])
    if opts["dev-data"]:
        return ds, load_dataset(opts["dev-data"])
    dev_clips = opts["dev-clips"] or max(1, len(ds.clips) // 5)
    return split_dataset(ds, dev_clips)


def _base_config(opts: dict, loss: L.LossSpec, seed: int = 0) -> T.TrainConfig:
    return T.TrainConfig(
        loss=loss,
        epochs=opts["epochs"],
        batch_clips=opts["batch-clips"],
        learning_rate=opts["lr"],
        seed=seed,
        eval=EvalConfig(threshold=opts["threshold"]),
        hidden=opts["hidden"],
        window_radius=opts["window"],
        ifl_freq_scope=opts["ifl-freq-scope"],
    )


def cmd_train(opts: dict) -> int:
    train_ds, dev_ds = _load_train_dev(opts)
    spec = parse_method(opts["loss"])
    cfg = _base_config(opts, spec, seed=opts["seed"])
    result = T.train(cfg, train_ds, dev_ds)

    out = opts["out"]
    os.makedirs(out, exist_ok=True)
    slug = method_slug(spec, cfg.seed)
    T.write_history_csv(os.path.join(out, f"history_{slug}.csv"), result.history)
    write_report_csv(
        os.path.join(out, f"metrics_{slug}.csv"),
        [(L.method_label(spec), L.params_label(spec), result.report)],
        train_ds.spec.class_names,
    )
    save_params(os.path.join(out, f"model_{slug}.bin"), result.final_params)
    rep = result.report
    print(f"{slug}: train loss {result.history[-1].train_loss:.3f}")
    print(
        f"dev micro-F {rep.micro_f:.4f}  macro-F {rep.macro_f:.4f}  "
        f"micro-AUC {rep.micro_auc:.4f}  macro-AUC {rep.macro_auc:.4f}"
    )
    return 0


def cmd_sweep(opts: dict) -> int:
    train_ds, dev_ds = _load_train_dev(opts)
    try:
        values = [float(v) for v in opts["values"].split(",") if v.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"bad --values: {exc}") from exc
    if not values:
        raise ConfigError("--values is empty")
    base = _base_config(opts, L.BceSpec())
    rows = T.sweep(
        base, opts["axis"], values, train_ds, dev_ds,
        n_seeds=opts["seeds"], workers=opts["workers"],
    )

    out = opts["out"]
    os.makedirs(out, exist_ok=True)
    run_rows = [
        (rec.method, f"{rec.params} seed={rec.seed}", rec.report)
        for row in rows for rec in row.runs
    ]
    write_report_csv(os.path.join(out, "sweep_runs.csv"), run_rows, train_ds.spec.class_names)
    summary_path = os.path.join(out, "sweep_summary.csv")
    with open(summary_path, "w", encoding="utf-8") as f:
        f.write("axis,value,n_seeds,micro_f_mean,micro_f_std,macro_f_mean,macro_f_std\n")
        for row in rows:
            f.write(
                f"{row.axis},{row.value!r},{row.n_seeds},{row.micro_f_mean!r},"
                f"{row.micro_f_std!r},{row.macro_f_mean!r},{row.macro_f_std!r}\n"
            )
    print(f"{'value':>10s} {'micro-F':>18s} {'macro-F':>18s}")
    for row in rows:
        print(
            f"{row.value:10.4f} {row.micro_f_mean:9.4f} ±{row.micro_f_std:7.4f} "
            f"{row.macro_f_mean:9.4f} ±{row.macro_f_std:7.4f}"
        )
    return 0


def cmd_compare(opts: dict) -> int:
    train_ds, dev_ds = _load_train_dev(opts)
    methods = [m for m in opts["methods"].split(",") if m.strip() != ""]
    if not methods:
        raise ConfigError("--methods is empty")
    cfgs = [_base_config(opts, parse_method(m)) for m in methods]
    rows = T.compare_losses(
        cfgs, train_ds, dev_ds, n_seeds=opts["seeds"], workers=opts["workers"]
    )

    out = opts["out"]
    os.makedirs(out, exist_ok=True)
    run_rows = [
        (rec.method, f"{rec.params} seed={rec.seed}", rec.report)
        for row in rows for rec in row.runs
    ]
    write_report_csv(os.path.join(out, "compare_runs.csv"), run_rows, train_ds.spec.class_names)
    summary_path = os.path.join(out, "compare_summary.csv")
    with open(summary_path, "w", encoding="utf-8") as f:
        f.write(
            "method,params,n_seeds,micro_f_mean,macro_f_mean,micro_auc_mean,macro_auc_mean,"
            "micro_f_median,macro_f_median,micro_auc_median,macro_auc_median\n"
        )
        for row in rows:
            f.write(
                f"{row.method},{row.params},{row.n_seeds},{row.micro_f_mean!r},"
                f"{row.macro_f_mean!r},{row.micro_auc_mean!r},{row.macro_auc_mean!r},"
                f"{row.micro_f_median!r},{row.macro_f_median!r},{row.micro_auc_median!r},"
                f"{row.macro_auc_median!r}\n"
            )
    print(f"{'method':32s} {'micro-F':>8s} {'macro-F':>8s} {'mi-AUC':>8s} {'ma-AUC':>8s}")
    for row in rows:
        label = f"{row.method} {row.params}".strip()
        print(
            f"{label:32s} {row.micro_f_mean:8.4f} {row.macro_f_mean:8.4f} "
            f"{row.micro_auc_mean:8.4f} {row.macro_auc_mean:8.4f}"
        )
    return 0


HANDLERS = {
    "gen-data": cmd_gen_data,
    "stats": cmd_stats,
    "grad-check": cmd_grad_check,
    "train": cmd_train,
    "sweep": cmd_sweep,
    "compare": cmd_compare,
}


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        opts = merge_options(args.command, args)
        return HANDLERS[args.command](opts)
    except (ValidationError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        for key, value in exc.diagnostics.items():
            print(f"  {key}: {value}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
