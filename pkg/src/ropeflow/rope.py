"""Rotary positional modulation of scaled dot-product attention.

Each head vector is read as d_h/2 complex pairs (v_{2n}, v_{2n+1}); pair n
of the query/key at position x is rotated by a phase

    theta_n(x) = sum_p x_p * omega_{n, p}

that is linear in the coordinates, so the post-rotation inner product
depends only on the displacement x_i - x_j. The pairs are partitioned
into contiguous per-axis groups (as even as possible, remainder to x, y,
z in that order); within axis a the group carries its own geometric
ladder omega_k = rope_base**(-k / p_a). Pairs left over when an axis gets
zero count are never rotated.

The complex-domain inner product in `rotary_inner_product_oracle` is kept
deliberately independent of the real rotation path: it is the test oracle
for the whole mechanism.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import backends
from .errors import (
    InvalidBaseError,
    InvalidDimensionError,
    NonFiniteInputError,
    ShapeError,
)

_AXIS_NAMES = ("x", "y", "z")

# Query-chunk size for the streaming (no weight retention) attention path;
# bounds transient memory to chunk * N per head.
_STREAM_CHUNK = 2048


@dataclass(frozen=True)
class RotaryConfig:
    """Per-axis frequency layout for one head dimension."""

    head_dim: int
    pairs_per_axis: tuple
    rope_base: float
    axis_freqs: tuple          # 3 arrays, axis a holding pairs_per_axis[a] entries
    omega: np.ndarray          # (3, head_dim // 2): theta = coords @ omega
    notes: tuple = field(default_factory=tuple)

    @property
    def num_pairs(self) -> int:
        return self.head_dim // 2


class PhaseTable:
    """Per-point, per-pair rotation angles with precomputed cos/sin."""

    def __init__(self, phases: np.ndarray):
        self.phases = phases
        self.cos = np.cos(phases)
        self.sin = np.sin(phases)

    @property
    def num_points(self) -> int:
        return self.phases.shape[0]

    @property
    def num_pairs(self) -> int:
        return self.phases.shape[1]


@dataclass
class AttentionOutput:
    """Attention result; `weights` is kept only in analysis mode."""

    values: np.ndarray
    weights: np.ndarray | None = None


def build_rotary_config(head_dim: int, rope_base: float) -> RotaryConfig:
    """Split head_dim/2 rotary pairs across the three axes, largest first."""
    if head_dim < 2 or head_dim % 2 != 0:
        raise InvalidDimensionError(f"head_dim must be even and >= 2, got {head_dim}")
    if not rope_base > 1.0:
        raise InvalidBaseError(f"rope_base must be > 1, got {rope_base}")
    n_pairs = head_dim // 2
    base_count, rem = divmod(n_pairs, 3)
    counts = tuple(base_count + (1 if a < rem else 0) for a in range(3))
    freqs = []
    notes = []
    omega = np.zeros((3, n_pairs), dtype=np.float64)
    offset = 0
    for a, p_a in enumerate(counts):
        if p_a == 0:
            freqs.append(np.zeros(0, dtype=np.float64))
            notes.append(f"axis {_AXIS_NAMES[a]} unencoded (no rotary pairs left)")
            continue
        k = np.arange(p_a, dtype=np.float64)
        f = np.power(float(rope_base), -2.0 * k / (2.0 * p_a))
        f.setflags(write=False)
        freqs.append(f)
        omega[a, offset:offset + p_a] = f
        offset += p_a
    omega.setflags(write=False)
    return RotaryConfig(
        head_dim=int(head_dim),
        pairs_per_axis=counts,
        rope_base=float(rope_base),
        axis_freqs=tuple(freqs),
        omega=omega,
        notes=tuple(notes),
    )


def compute_phases(coords: np.ndarray, config: RotaryConfig) -> PhaseTable:
    """theta_n(x) = sum_p x_p * omega_{n,p} for every point."""
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 3:
        raise ShapeError(f"expected (N, 3) coordinates, got {coords.shape}")
    if not np.all(np.isfinite(coords)):
        raise NonFiniteInputError("coordinates contain non-finite values")
    return PhaseTable(coords @ config.omega)


def apply_rotary(vectors: np.ndarray, phases: PhaseTable) -> np.ndarray:
    """Rotate pair (v_2n, v_2n+1) of row i by phases[i][n]; norm-preserving."""
    vectors = np.ascontiguousarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[1] != 2 * phases.num_pairs:
        raise ShapeError(
            f"vectors {vectors.shape} do not match {phases.num_pairs} rotary pairs"
        )
    if vectors.shape[0] != phases.num_points:
        raise ShapeError(
            f"{vectors.shape[0]} rows vs {phases.num_points} phase rows"
        )
    return backends.rotary_rotate(vectors, phases.cos, phases.sin)


def rotary_inner_product_oracle(q, k, x_i, x_j, config: RotaryConfig) -> float:
    """Complex-domain value of <R(x_i) q, R(x_j) k>.

    Re[sum_n q^(n) conj(k^(n)) exp(i (theta_n(x_i) - theta_n(x_j)))], with
    q^(n) = q_2n + i q_{2n+1}. Independent of the real rotation kernel.
    """
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    coords = np.asarray([x_i, x_j], dtype=np.float64)
    theta = coords @ config.omega
    qc = q[0::2] + 1j * q[1::2]
    kc = k[0::2] + 1j * k[1::2]
    phi = theta[0] - theta[1]
    return float(np.real(np.sum(qc * np.conj(kc) * np.exp(1j * phi))))


def _rotate_qk(q, k, phases):
    if phases is None:
        return q, k
    return apply_rotary(q, phases), apply_rotary(k, phases)


def scaled_dot_attention(
    q: np.ndarray,
    k: np.ndarray,
    v: np.ndarray,
    phases: PhaseTable | None = None,
    retain_weights: bool = False,
    need_cache: bool = False,
):
    """softmax(Q~ K~^T / sqrt(d)) V with optional rotary modulation of Q, K.

    Rotation touches queries and keys only, never values. Returns
    (AttentionOutput, cache); cache is None unless need_cache. Without
    weight retention or a cache the N x N matrix is streamed in query
    chunks and never materialized whole.
    """
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if q.shape != k.shape or q.shape[0] != v.shape[0] or q.ndim != 2 or v.ndim != 2:
        raise ShapeError(f"inconsistent attention shapes {q.shape}/{k.shape}/{v.shape}")
    d_h = q.shape[1]
    scale = 1.0 / np.sqrt(float(d_h))
    q_rot, k_rot = _rotate_qk(q, k, phases)

    n = q.shape[0]
    if not (retain_weights or need_cache) and n > _STREAM_CHUNK:
        out = np.empty((n, v.shape[1]), dtype=np.float64)
        k_rot_t = np.ascontiguousarray(k_rot.T)
        for start in range(0, n, _STREAM_CHUNK):
            stop = min(start + _STREAM_CHUNK, n)
            scores = (q_rot[start:stop] @ k_rot_t) * scale
            out[start:stop] = backends.softmax_rows(scores) @ v
        return AttentionOutput(values=out), None

    scores = (q_rot @ k_rot.T) * scale
    attn = backends.softmax_rows(scores)
    values = attn @ v
    cache = None
    if need_cache:
        cache = {"q_rot": q_rot, "k_rot": k_rot, "v": v, "attn": attn,
                 "phases": phases, "scale": scale}
    return AttentionOutput(values=values, weights=attn if retain_weights else None), cache


def multi_head_attention(
    x: np.ndarray,
    head_weights,
    w_out: np.ndarray,
    phases: PhaseTable | None = None,
    retain_weights: bool = False,
    need_cache: bool = False,
):
    """Independent heads, concatenated and projected by w_out.

    head_weights is a sequence of (w_q, w_k, w_v) triples, each (D, d_h);
    every head shares the same phase table. Returns (out, weights, cache)
    where weights is a per-head list of row-stochastic matrices when
    retained, else None.
    """
    x = np.asarray(x, dtype=np.float64)
    n, d = x.shape
    n_heads = len(head_weights)
    d_h = head_weights[0][0].shape[1]
    if any(w.shape != (d, d_h) for triple in head_weights for w in triple):
        raise ShapeError("head projection weights disagree with input dimension")
    if w_out.shape != (n_heads * d_h, d):
        raise ShapeError(
            f"w_out shape {w_out.shape} != ({n_heads * d_h}, {d})"
        )

    concat = np.empty((n, n_heads * d_h), dtype=np.float64)
    head_caches = [] if need_cache else None
    weights = [] if retain_weights else None
    for h, (w_q, w_k, w_v) in enumerate(head_weights):
        att, cache = scaled_dot_attention(
            x @ w_q, x @ w_k, x @ w_v, phases,
            retain_weights=retain_weights, need_cache=need_cache,
        )
        concat[:, h * d_h:(h + 1) * d_h] = att.values
        if retain_weights:
            weights.append(att.weights)
        if need_cache:
            head_caches.append(cache)
    out = concat @ w_out
    cache = None
    if need_cache:
        cache = {"x": x, "heads": head_caches, "concat": concat,
                 "head_weights": head_weights, "w_out": w_out}
    return out, weights, cache
