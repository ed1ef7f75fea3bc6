"""Grid search over (tau, v_th): the operational-manifold map.

Each grid cell trains a fresh network (same seed everywhere, so cells
differ only in the neuron hyperparameters), evaluates test accuracy and
total spike count, and gets an efficiency score

    eta = normalized accuracy / normalized spike count

with min-max normalization over the grid onto [floor, 1]. The floor keeps
eta finite; because min-max normalization is invariant under positive
scaling, the eta argmax does not depend on the spike-count unit.

Cells persist as JSON files once finished, so an interrupted sweep resumes
without recomputation and yields byte-identical results.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset
from .network import network_from_spec
from .training import TrainConfig, TrainingDivergedError, evaluate, fit
from .util import atomic_write_bytes, fmt6

SWEEP_CSV_HEADER = "tau,v_th,test_accuracy,total_spikes,efficiency,status"


class DegenerateNormalizationError(ValueError):
    """Every cell reported the same spike count; eta is undefined."""


@dataclass
class SweepPoint:
    tau: float
    v_th: float
    test_accuracy: float | None = None
    total_spikes: int | None = None
    efficiency: float | None = None
    status: str = "pending"


@dataclass
class SweepGrid:
    tau_values: tuple
    vth_values: tuple
    points: dict = field(default_factory=dict)  # (ti, vi) -> SweepPoint

    def __post_init__(self):
        self.tau_values = tuple(sorted(float(t) for t in self.tau_values))
        self.vth_values = tuple(sorted(float(v) for v in self.vth_values))
        if not self.tau_values or not self.vth_values:
            raise ValueError("sweep grids must be non-empty")
        if min(self.tau_values) <= 1.0:
            raise ValueError(f"all tau values must be > 1, got {self.tau_values}")

    def cells(self):
        for ti, tau in enumerate(self.tau_values):
            for vi, vth in enumerate(self.vth_values):
                yield ti, vi, tau, vth

    def rows(self):
        """Points in (tau, v_th) order, one per cell."""
        return [self.points[(ti, vi)] for ti, vi, _, _ in self.cells() if (ti, vi) in self.points]

    def ok_points(self):
        return [p for p in self.rows() if p.status == "ok"]


def run_cell(arch_spec, train_ds, test_ds, cfg, tau, v_th) -> SweepPoint:
    """Train and evaluate one (tau, v_th) configuration."""
    point = SweepPoint(tau=tau, v_th=v_th)
    try:
        net = network_from_spec(arch_spec, tau=tau, v_th=v_th, seed=cfg.seed)
        net, _ = fit(net, train_ds, cfg)
        result = evaluate(net, test_ds, encoding=cfg.encoding, seed=cfg.seed, loss_kind=cfg.loss)
    except TrainingDivergedError:
        point.status = "failed"
        return point
    point.test_accuracy = result.accuracy
    point.total_spikes = result.total_spikes
    point.status = "ok"
    return point


# worker-side state for the process pool (set once per worker)
_POOL = {}


def _pool_init(arch_spec, train_payload, test_payload, cfg_kwargs):
    _POOL["arch"] = arch_spec
    _POOL["train"] = Dataset(**train_payload)
    _POOL["test"] = Dataset(**test_payload)
    _POOL["cfg"] = TrainConfig(**cfg_kwargs)


def _pool_cell(job):
    ti, vi, tau, v_th = job
    point = run_cell(_POOL["arch"], _POOL["train"], _POOL["test"], _POOL["cfg"], tau, v_th)
    return ti, vi, point.__dict__


def _dataset_payload(ds):
    return {"images": ds.images, "labels": ds.labels, "classes": ds.classes, "name": ds.name}


def _cell_path(out_dir, ti, vi):
    return Path(out_dir) / "cells" / f"cell_t{ti:03d}_v{vi:03d}.json"


def _persist_point(out_dir, ti, vi, point):
    payload = json.dumps(point.__dict__, sort_keys=True).encode("utf-8")
    atomic_write_bytes(_cell_path(out_dir, ti, vi), payload)


def _load_persisted(out_dir, grid):
    for ti, vi, tau, vth in grid.cells():
        path = _cell_path(out_dir, ti, vi)
        if path.exists():
            data = json.loads(path.read_text())
            grid.points[(ti, vi)] = SweepPoint(**data)


def run_grid(arch_spec, train_ds, test_ds, tau_values, vth_values, cfg,
             out_dir=None, jobs=1) -> SweepGrid:
    """Fill a SweepGrid, training one fresh network per remaining cell.

    Already-persisted cells under ``out_dir/cells`` are reused, making the
    sweep resumable; results do not depend on worker count or completion
    order.
    """
    grid = SweepGrid(tau_values=tau_values, vth_values=vth_values)
    if out_dir is not None:
        os.makedirs(Path(out_dir) / "cells", exist_ok=True)
        _load_persisted(out_dir, grid)
    todo = [(ti, vi, tau, vth) for ti, vi, tau, vth in grid.cells()
            if (ti, vi) not in grid.points]

    def finish(ti, vi, point):
        grid.points[(ti, vi)] = point
        if out_dir is not None:
            _persist_point(out_dir, ti, vi, point)

    if jobs <= 1 or len(todo) <= 1:
        for ti, vi, tau, vth in todo:
            finish(ti, vi, run_cell(arch_spec, train_ds, test_ds, cfg, tau, vth))
    else:
        initargs = (
            arch_spec,
            _dataset_payload(train_ds),
            _dataset_payload(test_ds),
            cfg.__dict__.copy(),
        )
        with ProcessPoolExecutor(max_workers=jobs, initializer=_pool_init,
                                 initargs=initargs) as pool:
            for ti, vi, point_dict in pool.map(_pool_cell, todo):
                finish(ti, vi, SweepPoint(**point_dict))
    return grid


def efficiency(grid, floor=1e-3):
    """Fill per-cell eta; returns {(tau, v_th): eta} over the ok cells."""
    cells = grid.ok_points()
    if not cells:
        raise ValueError("efficiency: no completed cells in grid")
    accs = np.array([p.test_accuracy for p in cells])
    spikes = np.array([p.total_spikes for p in cells], dtype=np.float64)
    if spikes.max() == spikes.min():
        raise DegenerateNormalizationError(
            f"all {len(cells)} cells report identical spike counts "
            f"({spikes[0]:g}); spike normalization is degenerate"
        )

    def norm(x, lo, hi):
        if hi == lo:
            return np.ones_like(x)
        return floor + (1.0 - floor) * (x - lo) / (hi - lo)

    norm_acc = norm(accs, accs.min(), accs.max())
    norm_spk = norm(spikes, spikes.min(), spikes.max())
    out = {}
    for p, na, ns in zip(cells, norm_acc, norm_spk):
        p.efficiency = float(na / ns)
        out[(p.tau, p.v_th)] = p.efficiency
    return out


def _eligible(grid):
    cells = [p for p in grid.ok_points() if p.efficiency is not None]
    if not cells:
        raise ValueError("selection requires a grid with computed efficiencies")
    return cells


def select_operational_point(grid) -> SweepPoint:
    """Argmax eta; ties: higher accuracy, fewer spikes, then lexicographic.

    Silent cells (zero spikes) stay out of the running unless every cell
    is silent.
    """
    cells = _eligible(grid)
    active = [p for p in cells if p.total_spikes > 0] or cells
    return max(active, key=lambda p: (
        p.efficiency, p.test_accuracy, -p.total_spikes, -p.tau, -p.v_th,
    ))


def select_best_accuracy(grid) -> SweepPoint:
    """Argmax accuracy; ties broken by fewer spikes, then lexicographic."""
    cells = grid.ok_points()
    if not cells:
        raise ValueError("selection requires a grid with completed cells")
    return max(cells, key=lambda p: (
        p.test_accuracy, -p.total_spikes, -p.tau, -p.v_th,
    ))


def write_sweep_csv(grid, path):
    lines = [SWEEP_CSV_HEADER]
    for p in grid.rows():
        if p.status == "ok":
            eff = fmt6(p.efficiency) if p.efficiency is not None else ""
            lines.append(
                f"{fmt6(p.tau)},{fmt6(p.v_th)},{fmt6(p.test_accuracy)},"
                f"{int(p.total_spikes)},{eff},ok"
            )
        else:
            lines.append(f"{fmt6(p.tau)},{fmt6(p.v_th)},,,,{p.status}")
    atomic_write_bytes(path, ("\n".join(lines) + "\n").encode("utf-8"))


def read_sweep_csv(path) -> SweepGrid:
    lines = Path(path).read_text().strip().splitlines()
    if not lines or lines[0] != SWEEP_CSV_HEADER:
        raise ValueError(f"{path}: not a sweep results CSV")
    rows = []
    for line in lines[1:]:
        tau_s, vth_s, acc_s, spikes_s, eff_s, status = line.split(",")
        rows.append(SweepPoint(
            tau=float(tau_s),
            v_th=float(vth_s),
            test_accuracy=float(acc_s) if acc_s else None,
            total_spikes=int(spikes_s) if spikes_s else None,
            efficiency=float(eff_s) if eff_s else None,
            status=status,
        ))
    taus = sorted({p.tau for p in rows})
    vths = sorted({p.v_th for p in rows})
    grid = SweepGrid(tau_values=taus, vth_values=vths)
    for p in rows:
        grid.points[(taus.index(p.tau), vths.index(p.v_th))] = p
    return grid
