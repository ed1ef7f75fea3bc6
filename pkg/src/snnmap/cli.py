"""Command-line interface: train, sweep, perturb, report.

Configuration comes from built-in defaults, then an optional JSON config
file (--config), then explicit flags; flags win. Every command writes the
fully resolved configuration into its output directory, so a run can be
replayed exactly from that file plus the seed.

Exit codes: 0 success, 1 internal failure, 2 user/config error.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from pathlib import Path

import numpy as np

from .container import ContainerError
from .data import (
    DataFormatError,
    Dataset,
    load_cifar10_binary,
    load_idx,
    subsample,
    synthetic_rates,
)
from .heatmap import sweep_heatmap_svg
from .network import load_checkpoint, network_from_spec, save_checkpoint
from .robustness import render_campaign_svgs, run_robustness_campaign
from .sweep import (
    DegenerateNormalizationError,
    efficiency,
    read_sweep_csv,
    run_grid,
    select_best_accuracy,
    select_operational_point,
    write_sweep_csv,
)
from .training import TrainConfig, evaluate, fit, write_history_csv
from .util import atomic_write_bytes, fmt6


class UserError(Exception):
    """Bad input from the user: wrong paths, malformed config, bad flags."""


DEFAULTS = {
    "dataset": "synthetic",
    "arch": "mlpsnn",
    "data_dir": None,
    "geometry": "16",
    "classes": 10,
    "separation": 3.0,
    "train_samples": 500,
    "test_samples": 200,
    "hidden": "256,128",
    "channels": "16,32,32",
    "cnn_hidden": 64,
    "timesteps": 10,
    "tau": "2.0",
    "vth": "1.0",
    "v_reset": 0.0,
    "surrogate": "arctan",
    "alpha": None,
    "loss": "mse",
    "lr": 1e-3,
    "batch_size": 64,
    "epochs": 30,
    "patience": 5,
    "val_fraction": 0.1,
    "encoding": "poisson",
    "seed": 0,
    "jobs": 1,
    "samples": 2000,
    "threshold": 0.9,
    "checkpoint": None,
}

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def _add_common(parser):
    parser.add_argument("--config", help="JSON config file; flags override its entries")
    parser.add_argument("--out", required=True, help="output directory for this run")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--jobs", type=int, help="worker processes (1 = reference behavior)")
    parser.add_argument("--dataset", choices=["mnist", "cifar10", "synthetic"])
    parser.add_argument("--data-dir", dest="data_dir", help="directory with dataset files")
    parser.add_argument("--arch", choices=["mlpsnn", "cnnsnn"])
    parser.add_argument("--tau", help="membrane time constant (comma list for sweeps)")
    parser.add_argument("--vth", help="threshold voltage (comma list for sweeps)")
    parser.add_argument("--timesteps", type=int)
    parser.add_argument("--surrogate", choices=["arctan", "sigmoid"])
    parser.add_argument("--loss", choices=["mse", "cross-entropy"])
    parser.add_argument("--encoding", choices=["poisson", "repeat"])
    parser.add_argument("--lr", type=float)
    parser.add_argument("--batch-size", dest="batch_size", type=int)
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--patience", type=int)
    parser.add_argument("--val-fraction", dest="val_fraction", type=float)
    parser.add_argument("--train-samples", dest="train_samples", type=int)
    parser.add_argument("--test-samples", dest="test_samples", type=int)
    parser.add_argument("--hidden", help="comma list of MLP hidden widths")
    parser.add_argument("--channels", help="comma list of three conv channel counts")
    parser.add_argument("--cnn-hidden", dest="cnn_hidden", type=int,
                        help="width of the conv stack's first linear layer")
    parser.add_argument("--geometry", help="input geometry, e.g. 784 or 1x28x28")
    parser.add_argument("--classes", type=int, help="class count for synthetic data")
    parser.add_argument("--separation", type=float,
                        help="class separation of the synthetic dataset")
    parser.add_argument("--alpha", type=float, help="surrogate sharpness")
    parser.add_argument("--v-reset", dest="v_reset", type=float)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="snnmap",
        description="spiking network training, (tau, v_th) sweeps, and noise robustness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train one model and write a checkpoint")
    _add_common(p_train)
    p_train.set_defaults(func=cmd_train)

    p_sweep = sub.add_parser("sweep", help="grid search over tau and v_th")
    _add_common(p_sweep)
    p_sweep.set_defaults(func=cmd_sweep)

    p_pert = sub.add_parser("perturb", help="frame-noise robustness campaign on a checkpoint")
    _add_common(p_pert)
    p_pert.add_argument("--checkpoint", help="trained model checkpoint path")
    p_pert.add_argument("--samples", type=int, help="number of test samples to analyze")
    p_pert.add_argument("--threshold", type=float, help="high-correlation cutoff")
    p_pert.set_defaults(func=cmd_perturb)

    p_rep = sub.add_parser("report", help="regenerate figures/tables from a run directory")
    p_rep.add_argument("run_dir", help="directory written by a previous command")
    p_rep.set_defaults(func=cmd_report)
    return parser


def resolve_config(args) -> dict:
    cfg = dict(DEFAULTS)
    config_path = getattr(args, "config", None)
    if config_path:
        path = Path(config_path)
        if not path.exists():
            raise UserError(f"config file not found: {path}")
        try:
            loaded = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise UserError(f"config file {path} is not valid JSON: {exc}")
        unknown = set(loaded) - set(cfg)
        if unknown:
            raise UserError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    for key in cfg:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    cfg["out"] = args.out if hasattr(args, "out") else None
    return cfg


def _parse_floats(text, flag):
    try:
        return [float(part) for part in str(text).split(",") if part != ""]
    except ValueError:
        raise UserError(f"--{flag} expects comma-separated numbers, got {text!r}")


def _parse_ints(text, flag):
    try:
        return [int(part) for part in str(text).split(",") if part != ""]
    except ValueError:
        raise UserError(f"--{flag} expects comma-separated integers, got {text!r}")


def _parse_geometry(text):
    dims = _parse_ints(str(text).lower().replace("x", ","), "geometry")
    if not dims:
        raise UserError(f"bad geometry {text!r}")
    return tuple(dims)


def _single_float(cfg, key) -> float:
    values = _parse_floats(cfg[key], key)
    if len(values) != 1:
        raise UserError(f"--{key} must be a single value here, got {cfg[key]!r}")
    return values[0]


def load_datasets(cfg):
    """Returns (train Dataset, test Dataset) shaped for the chosen arch."""
    kind = cfg["dataset"]
    seed = cfg["seed"]
    n_train, n_test = cfg["train_samples"], cfg["test_samples"]
    if kind == "synthetic":
        geometry = _parse_geometry(cfg["geometry"])
        per_class = -(-(n_train + n_test) // cfg["classes"])  # ceil
        full = synthetic_rates(cfg["classes"], per_class, geometry, cfg["separation"], seed)
        train = Dataset(images=full.images[:n_train], labels=full.labels[:n_train],
                        classes=full.classes, name="synthetic-train")
        test = Dataset(images=full.images[n_train : n_train + n_test],
                       labels=full.labels[n_train : n_train + n_test],
                       classes=full.classes, name="synthetic-test")
    elif kind == "mnist":
        root = Path(cfg["data_dir"] or ".")
        for split in MNIST_FILES.values():
            for name in split:
                if not (root / name).exists():
                    raise UserError(f"mnist file missing: {root / name}")
        train = load_idx(root / MNIST_FILES["train"][0], root / MNIST_FILES["train"][1],
                         name="mnist-train")
        test = load_idx(root / MNIST_FILES["test"][0], root / MNIST_FILES["test"][1],
                        name="mnist-test")
        if n_train and n_train < len(train):
            train = subsample(train, n_train, seed)
        if n_test and n_test < len(test):
            test = subsample(test, n_test, seed + 1)
    elif kind == "cifar10":
        root = Path(cfg["data_dir"] or ".")
        batches = sorted(root.glob("data_batch_*")) or [root / "train.bin"]
        test_file = root / "test_batch.bin"
        if not test_file.exists():
            test_file = root / "test_batch"
        for path in list(batches) + [test_file]:
            if not Path(path).exists():
                raise UserError(f"cifar10 file missing: {path}")
        train = load_cifar10_binary(batches, name="cifar10-train")
        test = load_cifar10_binary(test_file, name="cifar10-test")
        if n_train and n_train < len(train):
            train = subsample(train, n_train, seed)
        if n_test and n_test < len(test):
            test = subsample(test, n_test, seed + 1)
    else:
        raise UserError(f"unknown dataset {kind!r}")
    return _shape_for_arch(train, cfg["arch"]), _shape_for_arch(test, cfg["arch"])


def _shape_for_arch(ds, arch):
    images = ds.images
    if arch == "mlpsnn" and images.ndim > 2:
        images = images.reshape(len(images), -1)
    elif arch == "cnnsnn" and images.ndim == 3:
        images = images[:, None, :, :]  # single channel
    if images is ds.images:
        return ds
    return Dataset(images=images, labels=ds.labels, classes=ds.classes, name=ds.name)


def arch_spec(cfg, geometry) -> dict:
    spec = {
        "arch": cfg["arch"],
        "classes": cfg["classes"],
        "t_steps": cfg["timesteps"],
        "surrogate": cfg["surrogate"],
        "alpha": cfg["alpha"],
        "v_reset": cfg["v_reset"],
    }
    if cfg["arch"] == "mlpsnn":
        spec["input_dim"] = int(np.prod(geometry))
        spec["hidden_dims"] = _parse_ints(cfg["hidden"], "hidden")
    else:
        if len(geometry) != 3:
            raise UserError(f"cnnsnn needs a CxHxW input geometry, got {geometry}")
        spec["input_geometry"] = list(geometry)
        spec["channel_plan"] = _parse_ints(cfg["channels"], "channels")
        spec["hidden_dim"] = cfg["cnn_hidden"]
    return spec


def train_config(cfg) -> TrainConfig:
    return TrainConfig(
        loss=cfg["loss"],
        lr=cfg["lr"],
        batch_size=cfg["batch_size"],
        max_epochs=cfg["epochs"],
        patience=cfg["patience"],
        val_fraction=cfg["val_fraction"],
        seed=cfg["seed"],
        encoding=cfg["encoding"],
    )


def _write_config(cfg, out_dir):
    payload = json.dumps(cfg, sort_keys=True, indent=2).encode("utf-8")
    atomic_write_bytes(Path(out_dir) / "config.json", payload)


def _prepare_out(cfg):
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    _write_config(cfg, out)
    return out


# ---------------------------------------------------------------------------
# commands


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    train_ds, test_ds = load_datasets(cfg)
    classes = train_ds.classes
    cfg["classes"] = classes
    out = _prepare_out(cfg)
    spec = arch_spec(cfg, train_ds.geometry)
    net = network_from_spec(spec, tau=_single_float(cfg, "tau"),
                            v_th=_single_float(cfg, "vth"), seed=cfg["seed"])
    net, history = fit(net, train_ds, train_config(cfg))
    result = evaluate(net, test_ds, encoding=cfg["encoding"], seed=cfg["seed"],
                      loss_kind=cfg["loss"])
    save_checkpoint(net, out / "checkpoint")
    write_history_csv(history, out / "history.csv")
    print(f"epochs_run {len(history)}")
    print(f"test_accuracy {fmt6(result.accuracy)}")
    print(f"total_spikes {result.total_spikes}")
    print(f"silent_fraction {fmt6(result.silent_fraction)}")
    print(f"checkpoint {out / 'checkpoint'}")
    return 0


def render_sweep_svgs(out_dir):
    """Heatmaps rendered purely from the persisted CSV (report-stable)."""
    out = Path(out_dir)
    grid = read_sweep_csv(out / "sweep.csv")
    for metric, title, fname in (
        ("test_accuracy", "test accuracy over (tau, v_th)", "sweep_accuracy.svg"),
        ("total_spikes", "total spikes over (tau, v_th)", "sweep_spikes.svg"),
    ):
        svg = sweep_heatmap_svg(grid, metric, title)
        atomic_write_bytes(out / fname, svg.encode("utf-8"))


def _selection_table(grid):
    lines = ["selection,tau,v_th,test_acc_percent,total_spikes,efficiency"]
    try:
        rows = [("operational", select_operational_point(grid)),
                ("best-accuracy", select_best_accuracy(grid))]
    except ValueError:
        return lines
    for tag, p in rows:
        eff = fmt6(p.efficiency) if p.efficiency is not None else ""
        lines.append(
            f"{tag},{fmt6(p.tau)},{fmt6(p.v_th)},{fmt6(100 * p.test_accuracy)},"
            f"{p.total_spikes},{eff}"
        )
    return lines


def cmd_sweep(args) -> int:
    cfg = resolve_config(args)
    train_ds, test_ds = load_datasets(cfg)
    cfg["classes"] = train_ds.classes
    out = _prepare_out(cfg)
    spec = arch_spec(cfg, train_ds.geometry)
    taus = _parse_floats(cfg["tau"], "tau")
    vths = _parse_floats(cfg["vth"], "vth")
    grid = run_grid(spec, train_ds, test_ds, taus, vths, train_config(cfg),
                    out_dir=out, jobs=cfg["jobs"])
    try:
        efficiency(grid)
    except (DegenerateNormalizationError, ValueError) as exc:
        print(f"efficiency not computed: {exc}", file=sys.stderr)
    write_sweep_csv(grid, out / "sweep.csv")
    render_sweep_svgs(out)
    for line in _selection_table(grid):
        print(line)
    return 0


def cmd_perturb(args) -> int:
    cfg = resolve_config(args)
    if not cfg["checkpoint"]:
        raise UserError("perturb requires --checkpoint")
    ck = Path(cfg["checkpoint"])
    if not ck.exists():
        raise UserError(f"checkpoint not found: {ck}")
    net = load_checkpoint(ck)
    _, test_ds = load_datasets(cfg)
    cfg["classes"] = test_ds.classes
    out = _prepare_out(cfg)
    n = min(cfg["samples"], len(test_ds))
    campaign = run_robustness_campaign(
        net, test_ds, n_samples=n, seed=cfg["seed"], threshold=cfg["threshold"], out_dir=out
    )
    print(f"analyzed {campaign.analyzed}")
    print(f"skipped {campaign.skipped}")
    print(f"never_failed {campaign.never_failed}")
    pen = campaign.penultimate
    for condition in ("clean", "cor"):
        try:
            row = campaign.stats_for(pen, condition)
        except KeyError:
            continue
        s = row.stats
        print(
            f"penultimate_{condition} kurtosis={fmt6(s.kurtosis)} "
            f"skewness={fmt6(s.skewness)} p99={fmt6(s.p99)} "
            f"count_above={s.count_above} mean_offdiag={fmt6(row.mean_offdiag)}"
        )
    return 0


def cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    if not run_dir.is_dir():
        raise UserError(f"run directory not found: {run_dir}")
    produced = []
    if (run_dir / "sweep.csv").exists():
        render_sweep_svgs(run_dir)
        grid = read_sweep_csv(run_dir / "sweep.csv")
        for line in _selection_table(grid):
            print(line)
        produced.append("sweep heatmaps")
    if (run_dir / "corr").is_dir():
        render_campaign_svgs(run_dir)
        produced.append("correlation heatmaps")
    if (run_dir / "stats.csv").exists():
        print((run_dir / "stats.csv").read_text().strip())
        produced.append("stats table")
    if not produced:
        raise UserError(f"{run_dir}: nothing to report (no sweep.csv, stats.csv, or corr/)")
    print(f"regenerated: {', '.join(produced)}", file=sys.stderr)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UserError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataFormatError, ContainerError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 1


def console_main():
    raise SystemExit(main())


if __name__ == "__main__":
    console_main()
