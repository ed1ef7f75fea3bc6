"""Frame-noise robustness protocol and spike-train correlation analysis.

For each test sample that the network classifies correctly: record the
clean spike trains, then corrupt one input frame at a time (uniformly
chosen without replacement, replaced by standard Gaussian noise) until the
prediction flips, and record the spike trains of the failing input. Per
layer, Pearson correlation matrices of the [T x neurons] spike trains are
averaged over samples for the clean and the corrupted condition, and the
distribution of their off-diagonal entries is summarized by excess
kurtosis, skewness, the 99th percentile, and the count of entries above a
threshold.

Samples still classified correctly after all T frames are corrupted are
counted separately ("never failed") and contribute no corrupted record.
"""

from __future__ import annotations

import json
import os
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .container import save_container
from .encoding import repeat_encode
from .network import forward
from .util import atomic_write_bytes, fmt6, subrng

STATS_CSV_HEADER = "layer,condition,kurtosis,skewness,p99,count_above,mean_offdiag,degenerate"


class CampaignError(RuntimeError):
    """The robustness campaign produced no usable samples."""


@dataclass
class PerturbationResult:
    sample_id: int
    frames_corrupted_at_failure: Optional[int]  # None = never failed
    clean_record: object
    corrupt_record: object
    corrupted_indices: list


@dataclass
class CorrStats:
    kurtosis: float
    skewness: float
    p99: float
    count_above: int
    degenerate: bool = False


def perturb_until_failure(net, image, label, rng) -> Optional[PerturbationResult]:
    """Progressively corrupt input frames until the prediction flips.

    Returns None when the clean sample is already misclassified (skipped).
    """
    frames = repeat_encode(image, net.t_steps).frames
    clean = forward(net, frames, record=True)
    if int(clean.rates.argmax()) != int(label):
        return None
    corrupted = frames.copy()
    remaining = list(range(net.t_steps))
    chosen = []
    while remaining:
        pick = int(rng.choice(len(remaining)))
        t_cor = remaining.pop(pick)
        chosen.append(t_cor)
        corrupted[t_cor] = rng.standard_normal(frames.shape[1:])
        result = forward(net, corrupted, record=True)
        if int(result.rates.argmax()) != int(label):
            return PerturbationResult(
                sample_id=-1,
                frames_corrupted_at_failure=len(chosen),
                clean_record=clean.record,
                corrupt_record=result.record,
                corrupted_indices=chosen,
            )
    return PerturbationResult(
        sample_id=-1,
        frames_corrupted_at_failure=None,
        clean_record=clean.record,
        corrupt_record=None,
        corrupted_indices=chosen,
    )


def pearson_corr_matrix(record) -> np.ndarray:
    """Pearson correlations between the columns of a [T, n] spike record.

    Zero-variance trains (all-silent or all-saturated) correlate 0 with
    everything by convention, including themselves on the diagonal.
    """
    record = np.asarray(record, dtype=np.float64)
    if record.ndim != 2 or record.shape[0] < 2:
        raise ValueError(
            f"pearson_corr_matrix: need a [T>=2, n] record, got shape {record.shape}"
        )
    centered = record - record.mean(axis=0)
    cov = centered.T @ centered
    sd = np.sqrt(np.diag(cov).copy())
    denom = np.outer(sd, sd)
    corr = np.divide(cov, denom, out=np.zeros_like(cov), where=denom > 0)
    corr = np.clip(0.5 * (corr + corr.T), -1.0, 1.0)
    np.fill_diagonal(corr, np.where(sd > 0, 1.0, 0.0))
    return corr


def average_corr_matrices(matrices) -> np.ndarray:
    """Elementwise mean of equally shaped matrices."""
    matrices = list(matrices)
    if not matrices:
        raise ValueError("average_corr_matrices: empty list")
    first = np.asarray(matrices[0], dtype=np.float64)
    acc = first.copy()
    for m in matrices[1:]:
        m = np.asarray(m, dtype=np.float64)
        if m.shape != first.shape:
            raise ValueError(
                f"average_corr_matrices: shape mismatch {m.shape} vs {first.shape}"
            )
        acc += m
    return acc / len(matrices)


def corr_distribution_stats(matrix, threshold=0.9) -> CorrStats:
    """Moments of the off-diagonal upper-triangle correlation values.

    Excess kurtosis (m4/m2^2 - 3) and moment skewness (m3/m2^1.5); a flat
    distribution (zero variance) reports both as 0 with the degenerate
    flag set. p99 uses linear interpolation between order statistics.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] < 2:
        raise ValueError(f"corr_distribution_stats: need an n>=2 square matrix, got {matrix.shape}")
    values = matrix[np.triu_indices(matrix.shape[0], k=1)]
    centered = values - values.mean()
    m2 = float((centered**2).mean())
    if m2 > 0.0:
        skewness = float((centered**3).mean()) / m2**1.5
        kurtosis = float((centered**4).mean()) / (m2 * m2) - 3.0
        degenerate = False
    else:
        skewness = 0.0
        kurtosis = 0.0
        degenerate = True
    return CorrStats(
        kurtosis=kurtosis,
        skewness=skewness,
        p99=float(np.percentile(values, 99)),
        count_above=int((values > threshold).sum()),
        degenerate=degenerate,
    )


def mean_offdiagonal(matrix) -> float:
    matrix = np.asarray(matrix, dtype=np.float64)
    return float(matrix[np.triu_indices(matrix.shape[0], k=1)].mean())


@dataclass
class StatRow:
    layer: int
    condition: str  # "clean" | "cor"
    stats: CorrStats
    mean_offdiag: float


@dataclass
class CampaignResult:
    clean_mean: list  # per-layer averaged correlation matrices
    corrupt_mean: list  # per-layer matrices, or None when nothing failed
    stat_rows: list
    failure_histogram: dict  # frames-at-failure -> count
    analyzed: int
    skipped: int
    never_failed: int

    @property
    def penultimate(self):
        return len(self.clean_mean) - 2

    def stats_for(self, layer, condition) -> StatRow:
        for row in self.stat_rows:
            if row.layer == layer and row.condition == condition:
                return row
        raise KeyError(f"no stats for layer {layer} / {condition}")


def run_robustness_campaign(net, dataset, n_samples=2000, seed=0, threshold=0.9,
                            out_dir=None) -> CampaignResult:
    """Noise-injection protocol over a random draw of test samples.

    Correlation matrices are averaged per layer over analyzed samples
    (clean) and over failed samples (corrupted). Deterministic given the
    seed: both the sample draw and the per-sample corruption streams are
    keyed to it.
    """
    if len(dataset) == 0:
        raise CampaignError("empty dataset")
    if n_samples > len(dataset):
        raise ValueError(f"n_samples {n_samples} exceeds dataset size {len(dataset)}")
    indices = subrng(seed, "select").choice(len(dataset), size=n_samples, replace=False)
    n_layers = len(net.specs)
    clean_sum = [None] * n_layers
    cor_sum = [None] * n_layers
    analyzed = skipped = never = failed = 0
    histogram = Counter()

    def accumulate(sums, record):
        for li, layer_rec in enumerate(record.layers):
            corr = pearson_corr_matrix(layer_rec)
            sums[li] = corr if sums[li] is None else sums[li] + corr

    for idx in indices:
        result = perturb_until_failure(
            net, dataset.images[idx], dataset.labels[idx], subrng(seed, "perturb", int(idx))
        )
        if result is None:
            skipped += 1
            continue
        analyzed += 1
        accumulate(clean_sum, result.clean_record)
        if result.frames_corrupted_at_failure is None:
            never += 1
        else:
            failed += 1
            histogram[result.frames_corrupted_at_failure] += 1
            accumulate(cor_sum, result.corrupt_record)

    if analyzed == 0:
        raise CampaignError(
            f"none of the {n_samples} sampled inputs were classified correctly"
        )
    clean_mean = [s / analyzed for s in clean_sum]
    corrupt_mean = [s / failed if failed else None for s in cor_sum]

    stat_rows = []
    for li in range(n_layers):
        stat_rows.append(StatRow(li, "clean", corr_distribution_stats(clean_mean[li], threshold),
                                 mean_offdiagonal(clean_mean[li])))
        if corrupt_mean[li] is not None:
            stat_rows.append(StatRow(li, "cor", corr_distribution_stats(corrupt_mean[li], threshold),
                                     mean_offdiagonal(corrupt_mean[li])))
    campaign = CampaignResult(
        clean_mean=clean_mean,
        corrupt_mean=corrupt_mean,
        stat_rows=stat_rows,
        failure_histogram=dict(sorted(histogram.items())),
        analyzed=analyzed,
        skipped=skipped,
        never_failed=never,
    )
    if out_dir is not None:
        persist_campaign(campaign, out_dir)
    return campaign


def write_stats_csv(stat_rows, path):
    lines = [STATS_CSV_HEADER]
    for row in stat_rows:
        s = row.stats
        lines.append(
            f"layer{row.layer},{row.condition},{fmt6(s.kurtosis)},{fmt6(s.skewness)},"
            f"{fmt6(s.p99)},{s.count_above},{fmt6(row.mean_offdiag)},{int(s.degenerate)}"
        )
    atomic_write_bytes(path, ("\n".join(lines) + "\n").encode("utf-8"))


def persist_campaign(campaign, out_dir):
    """Write corr matrices (binary), stats.csv, failure histogram, SVGs."""
    from .heatmap import corr_heatmap_svg

    out = Path(out_dir)
    corr_dir = out / "corr"
    os.makedirs(corr_dir, exist_ok=True)
    for li, matrix in enumerate(campaign.clean_mean):
        save_container(corr_dir / f"layer{li}_clean.bin",
                       {"kind": "corr", "layer": li, "condition": "clean"},
                       {"matrix": matrix})
    for li, matrix in enumerate(campaign.corrupt_mean):
        if matrix is not None:
            save_container(corr_dir / f"layer{li}_cor.bin",
                           {"kind": "corr", "layer": li, "condition": "cor"},
                           {"matrix": matrix})
    write_stats_csv(campaign.stat_rows, out / "stats.csv")
    lines = ["frames_corrupted,count"]
    for frames, count in campaign.failure_histogram.items():
        lines.append(f"{frames},{count}")
    atomic_write_bytes(out / "failures.csv", ("\n".join(lines) + "\n").encode("utf-8"))
    summary = {
        "analyzed": campaign.analyzed,
        "skipped": campaign.skipped,
        "never_failed": campaign.never_failed,
        "layers": len(campaign.clean_mean),
    }
    atomic_write_bytes(out / "campaign.json",
                       json.dumps(summary, sort_keys=True, indent=2).encode("utf-8"))
    render_campaign_svgs(out)


def render_campaign_svgs(out_dir):
    """Regenerate heatmaps from the persisted binary matrices only."""
    from .container import load_container
    from .heatmap import corr_heatmap_svg

    corr_dir = Path(out_dir) / "corr"
    for path in sorted(corr_dir.glob("*.bin")):
        meta, arrays = load_container(path)
        title = f"average spike-train correlation, layer {meta['layer']} ({meta['condition']})"
        svg = corr_heatmap_svg(arrays["matrix"], title)
        atomic_write_bytes(path.with_suffix(".svg"), svg.encode("utf-8"))
