"""Evaluation metrics: relative L2, error PDFs, attention-row entropy.

Entropy of an attention row A_i is H_i = -sum_j A_ij ln(A_ij + eps) with
Hhat_i = H_i / ln N. The epsilon guard (default 1e-12) shifts exact
anchors by O(N*eps): a one-hot row comes out at -ln(1+eps), marginally
below zero, so H is clamped at the 0 bound; pass epsilon=0 for the exact
values (zero entries contribute 0 either way).

Profiles over a whole cloud never materialize the N x N weight matrix:
rows are produced and reduced in query chunks, which is what makes the
5e4-point resolution reachable.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import backends
from .errors import (
    ConfigError,
    DomainError,
    EmptyInputError,
    ShapeError,
    UndefinedMetricError,
    UsageError,
)
from .encoding import apply_normalizer
from .model import (
    ModelConfig,
    ParameterStore,
    encoder_forward,
    layer_norm,
    physics_block_forward,
)
from .rope import apply_rotary, compute_phases

_ENTROPY_CHUNK = 2048


def relative_l2(pred: np.ndarray, truth: np.ndarray, per_channel: bool = False):
    """||pred - truth|| / ||truth||, flattened or column-wise."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ShapeError(f"pred {pred.shape} vs truth {truth.shape}")
    if per_channel:
        if truth.ndim != 2:
            raise ShapeError(f"per-channel needs (N, C) arrays, got {truth.shape}")
        truth_norm = np.linalg.norm(truth, axis=0)
        if np.any(truth_norm == 0.0):
            raise UndefinedMetricError(
                f"channel {int(np.argmin(truth_norm))} of truth has zero norm")
        return np.linalg.norm(pred - truth, axis=0) / truth_norm
    truth_norm = np.linalg.norm(truth)
    if truth_norm == 0.0:
        raise UndefinedMetricError("truth has zero norm")
    return float(np.linalg.norm(pred - truth) / truth_norm)


def abs_error_pdf(errors: np.ndarray, bin_count: int = 64):
    """Density-normalized histogram of absolute errors.

    Densities satisfy sum(density * bin_width) = 1. Errors are expected
    on normalized dimensionless fields so PDFs compare across channels.
    """
    errors = np.asarray(errors, dtype=np.float64).ravel()
    if errors.size == 0:
        raise EmptyInputError("no errors to bin")
    if np.any(errors < 0):
        raise DomainError("absolute errors cannot be negative")
    if bin_count < 1:
        raise ConfigError(f"bin_count must be >= 1, got {bin_count}")
    densities, edges = np.histogram(errors, bins=bin_count, density=True)
    return edges, densities


def attention_entropy(row: np.ndarray, epsilon: float = 1e-12):
    """Entropy (H, Hhat) of one attention row; Hhat normalized by ln N."""
    row = np.asarray(row, dtype=np.float64).ravel()
    n = row.size
    if n < 2:
        raise DomainError(f"entropy needs >= 2 weights, got {n} (ln 1 = 0)")
    if epsilon < 0:
        raise ConfigError(f"epsilon must be >= 0, got {epsilon}")
    if np.any(row < 0):
        raise DomainError("attention weights must be nonnegative")
    total = float(np.sum(row))
    if abs(total - 1.0) > 1e-6:
        raise DomainError(f"attention row sums to {total}, not 1")
    row = row / total
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(row > 0.0, row * np.log(row + epsilon), 0.0)
    h = max(float(-np.sum(terms)), 0.0)
    return h, h / np.log(n)


def rows_normalized_entropy(weights: np.ndarray | None,
                            epsilon: float = 1e-12) -> np.ndarray:
    """Hhat for every row of a retained attention matrix."""
    if weights is None:
        raise UsageError("attention weights were not retained on the forward pass")
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    if weights.ndim != 2 or weights.shape[1] < 2:
        raise ShapeError(f"expected an (N, M>=2) weight matrix, got {weights.shape}")
    h = backends.entropy_rows(weights, float(epsilon))
    return np.maximum(h, 0.0) / np.log(weights.shape[1])


def entropy_histogram(hhat: np.ndarray, bin_count: int = 64):
    """PDF of normalized entropies on fixed [0, 1] bins."""
    if bin_count < 1:
        raise ConfigError(f"bin_count must be >= 1, got {bin_count}")
    edges = np.linspace(0.0, 1.0, bin_count + 1)
    values = np.clip(np.asarray(hhat, dtype=np.float64).ravel(), 0.0, 1.0)
    if values.size == 0:
        raise EmptyInputError("no entropy values to bin")
    densities, _ = np.histogram(values, bins=edges, density=True)
    centers = 0.5 * (edges[:-1] + edges[1:])
    return centers, densities


def block_head_entropies(params: ParameterStore, config: ModelConfig,
                         coords: np.ndarray, blocks, normalizer=None,
                         epsilon: float = 1e-12,
                         chunk: int = _ENTROPY_CHUNK) -> dict:
    """Per-head Hhat of every query row at the selected blocks, streamed.

    Runs the stack once; at each selected block the attention rows are
    recomputed in chunks straight into entropies, so memory stays at
    O(chunk * N) regardless of cloud size. Returns {block: (H, N) array}.
    """
    coords = np.asarray(coords, dtype=np.float64)
    blocks = sorted(set(int(b) % config.num_blocks for b in blocks))
    if coords.shape[0] < 2:
        raise DomainError("entropy profile needs at least 2 points")
    if normalizer is not None:
        coords = apply_normalizer(coords, normalizer)
    phases = compute_phases(coords, config.rotary()) if config.use_rope else None
    n = coords.shape[0]
    log_n = np.log(n)

    x, _ = encoder_forward(coords, params, config)
    out = {}
    for t in range(config.num_blocks):
        if t in blocks:
            u, _ = layer_norm(
                x, params[f"block{t}.ln1.gain"], params[f"block{t}.ln1.bias"])
            scale = 1.0 / np.sqrt(float(config.head_dim))
            per_head = np.empty((config.num_heads, n), dtype=np.float64)
            for h in range(config.num_heads):
                q = u @ params[f"block{t}.head{h}.q.w"]
                k = u @ params[f"block{t}.head{h}.k.w"]
                if phases is not None:
                    q = apply_rotary(q, phases)
                    k = apply_rotary(k, phases)
                k_t = np.ascontiguousarray(k.T)
                for start in range(0, n, chunk):
                    stop = min(start + chunk, n)
                    attn = backends.softmax_rows((q[start:stop] @ k_t) * scale)
                    per_head[h, start:stop] = backends.entropy_rows(
                        attn, float(epsilon))
            out[t] = np.maximum(per_head, 0.0) / log_n
        if t >= max(blocks):
            break
        x, _, _ = physics_block_forward(x, coords, params, config, t, phases)
    return out


def attention_row(params: ParameterStore, config: ModelConfig,
                  coords: np.ndarray, block: int, index: int,
                  normalizer=None) -> np.ndarray:
    """Attention weights of one query point at one block, per head: (H, N)."""
    coords = np.asarray(coords, dtype=np.float64)
    n = coords.shape[0]
    if not 0 <= index < n:
        raise DomainError(f"point index {index} outside 0..{n - 1}")
    block = int(block) % config.num_blocks
    if normalizer is not None:
        coords = apply_normalizer(coords, normalizer)
    phases = compute_phases(coords, config.rotary()) if config.use_rope else None
    x, _ = encoder_forward(coords, params, config)
    for t in range(block):
        x, _, _ = physics_block_forward(x, coords, params, config, t, phases)
    u, _ = layer_norm(
        x, params[f"block{block}.ln1.gain"], params[f"block{block}.ln1.bias"])
    scale = 1.0 / np.sqrt(float(config.head_dim))
    rows = np.empty((config.num_heads, n), dtype=np.float64)
    for h in range(config.num_heads):
        q = u @ params[f"block{block}.head{h}.q.w"]
        k = u @ params[f"block{block}.head{h}.k.w"]
        if phases is not None:
            q = apply_rotary(q, phases)
            k = apply_rotary(k, phases)
        scores = (q[index:index + 1] @ np.ascontiguousarray(k.T)) * scale
        rows[h] = backends.softmax_rows(scores)[0]
    return rows


def entropy_profile(params: ParameterStore, config: ModelConfig,
                    coords: np.ndarray, resolutions, blocks=None,
                    heads="mean", normalizer=None, epsilon: float = 1e-12,
                    bin_count: int = 64, seed: int = 0) -> dict:
    """Entropy PDFs keyed (block, head, resolution).

    For each resolution the cloud is subsampled (seeded, without
    replacement) before the profile runs. `heads` is a list of head
    indices, or "mean" for one pooled histogram per block (every head
    contributes equally, which equals averaging per-head densities on
    the shared [0, 1] bins).
    """
    coords = np.asarray(coords, dtype=np.float64)
    if blocks is None:
        blocks = [config.num_blocks - 1]
    tables = {}
    for res in resolutions:
        res = int(res)
        n = coords.shape[0]
        if res > n:
            raise DomainError(f"resolution {res} exceeds the {n} available points")
        idx = np.random.default_rng([seed, res]).permutation(n)[:res]
        sub = coords[idx]
        ent = block_head_entropies(
            params, config, sub, blocks, normalizer=normalizer, epsilon=epsilon)
        for t, per_head in ent.items():
            if heads == "mean":
                tables[(t, "mean", res)] = entropy_histogram(
                    per_head.ravel(), bin_count)
            else:
                for h in heads:
                    tables[(t, int(h), res)] = entropy_histogram(
                        per_head[int(h)], bin_count)
    return tables


@dataclass
class ErrorDistribution:
    quartiles: tuple            # (min, q1, median, q3, max)
    ranked_ids: list            # sample ids, worst error first
    top: list                   # (id, error) worst k
    bottom: list                # (id, error) best k


def per_sample_error_distribution(sample_errors, top_k: int = 6) -> ErrorDistribution:
    """Quartile summary plus highest/lowest-error sample rankings."""
    pairs = [(str(sid), float(err)) for sid, err in sample_errors]
    if not pairs:
        raise EmptyInputError("no per-sample errors")
    values = np.array([err for _, err in pairs])
    q = np.percentile(values, [0, 25, 50, 75, 100])
    ranked = sorted(pairs, key=lambda p: (-p[1], p[0]))
    k = min(top_k, len(ranked))
    return ErrorDistribution(
        quartiles=tuple(float(v) for v in q),
        ranked_ids=[sid for sid, _ in ranked],
        top=ranked[:k],
        bottom=ranked[-k:][::-1])


@dataclass
class MetricsReport:
    channel_names: tuple
    per_sample: list = field(default_factory=list)   # (id, overall, per-channel tuple)
    distribution: ErrorDistribution | None = None
    error_pdf: tuple | None = None                   # (edges, densities)
    entropy_tables: dict = field(default_factory=dict)

    def overall_values(self) -> np.ndarray:
        return np.array([overall for _, overall, _ in self.per_sample])

    def channel_means(self) -> np.ndarray:
        return np.mean([ch for _, _, ch in self.per_sample], axis=0)

    def render_text(self) -> str:
        lines = ["ropeflow-metrics v1", ""]
        lines.append("[per_sample_rel_l2]")
        header = "sample_id\toverall\t" + "\t".join(self.channel_names)
        lines.append(header)
        for sid, overall, per_ch in self.per_sample:
            cols = "\t".join(f"{v:.9e}" for v in per_ch)
            lines.append(f"{sid}\t{overall:.9e}\t{cols}")
        lines.append("")
        if self.per_sample:
            lines.append("[aggregate]")
            lines.append(f"mean_overall\t{np.mean(self.overall_values()):.9e}")
            means = self.channel_means()
            for name, value in zip(self.channel_names, means):
                lines.append(f"mean_{name}\t{value:.9e}")
            if self.distribution is not None:
                labels = ("min", "q1", "median", "q3", "max")
                for label, value in zip(labels, self.distribution.quartiles):
                    lines.append(f"{label}\t{value:.9e}")
            lines.append("")
        if self.error_pdf is not None:
            edges, densities = self.error_pdf
            lines.append("[abs_error_pdf]")
            lines.append("bin_center\tdensity")
            centers = 0.5 * (edges[:-1] + edges[1:])
            for c, d in zip(centers, densities):
                lines.append(f"{c:.9e}\t{d:.9e}")
            lines.append("")
        for (t, h, res) in sorted(self.entropy_tables, key=str):
            centers, densities = self.entropy_tables[(t, h, res)]
            lines.append(f"[entropy block={t} head={h} resolution={res}]")
            lines.append("bin_center\tdensity")
            for c, d in zip(centers, densities):
                lines.append(f"{c:.9e}\t{d:.9e}")
            lines.append("")
        return "\n".join(lines)


def write_csv(path: str, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(
            f"{v:.9e}" if isinstance(v, float) else str(v) for v in row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def write_metrics_report(report: MetricsReport, out_dir: str) -> list:
    """Write report.txt plus plot-ready CSV tables; returns paths written."""
    os.makedirs(out_dir, exist_ok=True)
    written = []

    path = os.path.join(out_dir, "report.txt")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(report.render_text())
    written.append(path)

    path = os.path.join(out_dir, "per_sample_l2.csv")
    write_csv(path, ("sample_id", "rel_l2") + tuple(report.channel_names),
              [(sid, float(overall)) + tuple(float(v) for v in ch)
               for sid, overall, ch in report.per_sample])
    written.append(path)

    if report.error_pdf is not None:
        edges, densities = report.error_pdf
        centers = 0.5 * (edges[:-1] + edges[1:])
        path = os.path.join(out_dir, "error_pdf.csv")
        write_csv(path, ("bin_center", "density"),
                  list(zip(map(float, centers), map(float, densities))))
        written.append(path)

    for (t, h, res), (centers, densities) in sorted(
            report.entropy_tables.items(), key=lambda kv: str(kv[0])):
        path = os.path.join(out_dir, f"entropy_block{t}_head{h}_res{res}.csv")
        write_csv(path, ("bin_center", "density"),
                  list(zip(map(float, centers), map(float, densities))))
        written.append(path)
    return written
