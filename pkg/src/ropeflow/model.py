"""Point-cloud field regressor: spectral encoder, attention blocks, decoder.

Every point is lifted independently by a two-layer MLP over its sin-cos
features, mixed with the rest of the cloud by T pre-norm attention blocks
(rotary phases on queries and keys only), and decoded pointwise. There is
no learned positional table and no point ordering anywhere, so the whole
map is permutation equivariant by construction.

The `variant` field gates the two coordinate pathways independently:
"no_rope" feeds the blocks unrotated queries/keys, "no_sincos" feeds the
encoder raw 3-vectors, "neither" does both. Parameter shapes for a given
(variant, dims) pair are fixed, so matched seeds give matched draws.

Forward passes optionally record the intermediate arrays the backward
passes need; with `need_cache=False` nothing is retained and large clouds
take the streaming attention path.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import backends
from .encoding import (
    CoordinateNormalizer,
    apply_normalizer,
    build_frequency_table,
    encode_points,
)
from .errors import (
    ConfigError,
    EmptyInputError,
    InvalidDimensionError,
    NonFiniteInputError,
    ShapeError,
    SuspiciousInputWarning,
)
from .rope import RotaryConfig, build_rotary_config, compute_phases, multi_head_attention

LN_EPS = 1e-5

VARIANTS = ("full", "no_rope", "no_sincos", "neither")

# Normalized coordinates land in [-1, 1]; anything this far out almost
# always means a normalizer fitted on different geometry.
_COORD_WARN_ABS = 10.0


@dataclass(frozen=True)
class ModelConfig:
    num_blocks: int = 5
    num_heads: int = 8
    latent_dim: int = 256
    per_axis_dim: int = 84
    ffn_hidden_ratio: float = 2.0
    out_channels: int = 1
    encoder_hidden: int = 512
    decoder_hidden: int = 512
    variant: str = "full"
    wavelength_base: float = 10000.0
    rope_base: float = 100.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(
                f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.num_blocks < 1 or self.num_heads < 1 or self.latent_dim < 1:
            raise InvalidDimensionError(
                "num_blocks, num_heads, latent_dim must be >= 1")
        if self.latent_dim % self.num_heads != 0:
            raise InvalidDimensionError(
                f"latent_dim {self.latent_dim} not divisible by "
                f"num_heads {self.num_heads}")
        if (self.latent_dim // self.num_heads) % 2 != 0:
            raise InvalidDimensionError(
                f"head dim must be even, got {self.latent_dim // self.num_heads}")
        if self.per_axis_dim < 2 or self.per_axis_dim % 2 != 0:
            raise InvalidDimensionError(
                f"per_axis_dim must be even and >= 2, got {self.per_axis_dim}")
        if self.out_channels < 1:
            raise InvalidDimensionError("out_channels must be >= 1")
        if self.encoder_hidden < 1 or self.decoder_hidden < 1:
            raise InvalidDimensionError("hidden widths must be >= 1")
        if self.ffn_width < 1:
            raise InvalidDimensionError(
                f"ffn_hidden_ratio {self.ffn_hidden_ratio} gives an empty FFN")

    @property
    def head_dim(self) -> int:
        return self.latent_dim // self.num_heads

    @property
    def use_rope(self) -> bool:
        return self.variant in ("full", "no_sincos")

    @property
    def use_sincos(self) -> bool:
        return self.variant in ("full", "no_rope")

    @property
    def in_features(self) -> int:
        return 3 * self.per_axis_dim if self.use_sincos else 3

    @property
    def ffn_width(self) -> int:
        return int(round(self.ffn_hidden_ratio * self.latent_dim))

    def rotary(self) -> RotaryConfig:
        return build_rotary_config(self.head_dim, self.rope_base)


class ParameterStore:
    """Named float64 arrays in fixed registration order, plus grad slots.

    Registration order is the canonical parameter order: the optimizer,
    the checkpoint format, and the gradient dict all iterate it, so two
    stores built from the same config always line up. `grads` is None
    until a backward pass populates it via new_grads().
    """

    def __init__(self):
        self._arrays: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] | None = None

    def register(self, name: str, array: np.ndarray) -> None:
        if name in self._arrays:
            raise KeyError(f"parameter {name!r} already registered")
        self._arrays[name] = np.ascontiguousarray(array, dtype=np.float64)

    def __getitem__(self, name: str) -> np.ndarray:
        return self._arrays[name]

    def __setitem__(self, name: str, array: np.ndarray) -> None:
        if name not in self._arrays:
            raise KeyError(f"unknown parameter {name!r}")
        arr = np.ascontiguousarray(array, dtype=np.float64)
        if arr.shape != self._arrays[name].shape:
            raise ShapeError(
                f"parameter {name!r}: shape {arr.shape} != {self._arrays[name].shape}")
        self._arrays[name] = arr

    def __contains__(self, name: str) -> bool:
        return name in self._arrays

    def __len__(self) -> int:
        return len(self._arrays)

    def names(self):
        return list(self._arrays.keys())

    def items(self):
        return self._arrays.items()

    def new_grads(self) -> dict:
        self.grads = {name: np.zeros_like(arr) for name, arr in self._arrays.items()}
        return self.grads

    def num_parameters(self) -> int:
        return int(sum(arr.size for arr in self._arrays.values()))

    def copy(self) -> "ParameterStore":
        dup = ParameterStore()
        for name, arr in self._arrays.items():
            dup.register(name, arr.copy())
        return dup


def parameter_shapes(config: ModelConfig) -> dict:
    """Canonical name -> shape map, in registration order."""
    shapes = {}

    def linear(name, fan_in, fan_out, bias=True):
        shapes[name + ".w"] = (fan_in, fan_out)
        if bias:
            shapes[name + ".b"] = (fan_out,)

    d = config.latent_dim
    linear("encoder.l1", config.in_features, config.encoder_hidden)
    linear("encoder.l2", config.encoder_hidden, d)
    for t in range(config.num_blocks):
        shapes[f"block{t}.ln1.gain"] = (d,)
        shapes[f"block{t}.ln1.bias"] = (d,)
        for h in range(config.num_heads):
            linear(f"block{t}.head{h}.q", d, config.head_dim, bias=False)
            linear(f"block{t}.head{h}.k", d, config.head_dim, bias=False)
            linear(f"block{t}.head{h}.v", d, config.head_dim, bias=False)
        linear(f"block{t}.attn.out", d, d, bias=False)
        shapes[f"block{t}.ln2.gain"] = (d,)
        shapes[f"block{t}.ln2.bias"] = (d,)
        linear(f"block{t}.ffn.l1", d, config.ffn_width)
        linear(f"block{t}.ffn.l2", config.ffn_width, d)
    linear("decoder.l1", d, config.decoder_hidden)
    linear("decoder.l2", config.decoder_hidden, config.out_channels)
    return shapes


def init_parameters(config: ModelConfig, seed: int) -> ParameterStore:
    """Uniform +-sqrt(1/fan_in) weights, zero biases, unit LayerNorm gains.

    Draw order follows registration order, so a seed pins every value.
    """
    rng = np.random.default_rng(seed)
    store = ParameterStore()
    for name, shape in parameter_shapes(config).items():
        if name.endswith(".gain"):
            store.register(name, np.ones(shape))
        elif name.endswith((".b", ".bias")):
            store.register(name, np.zeros(shape))
        else:
            bound = np.sqrt(1.0 / shape[0])
            store.register(name, rng.uniform(-bound, bound, size=shape))
    return store


def layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray,
               need_cache: bool = False):
    """Per-row standardization followed by an affine map."""
    mean = x.mean(axis=1, keepdims=True)
    centered = x - mean
    var = np.mean(centered * centered, axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + LN_EPS)
    xhat = centered * inv_std
    out = xhat * gain + bias
    cache = {"xhat": xhat, "inv_std": inv_std, "gain": gain} if need_cache else None
    return out, cache


def encoder_forward(coords: np.ndarray, params: ParameterStore, config: ModelConfig,
                    need_cache: bool = False):
    """Lift normalized coordinates to latent_dim, one point at a time."""
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 3:
        raise ShapeError(f"expected (N, 3) coordinates, got {coords.shape}")
    if not np.all(np.isfinite(coords)):
        raise NonFiniteInputError("coordinates contain non-finite values")
    if coords.size and np.max(np.abs(coords)) > _COORD_WARN_ABS:
        warnings.warn(
            "coordinate magnitudes exceed 10; inputs look unnormalized",
            SuspiciousInputWarning,
            stacklevel=2,
        )
    if config.use_sincos:
        table = build_frequency_table(config.per_axis_dim, config.wavelength_base)
        feats = encode_points(coords, table)
    else:
        feats = coords
    h = feats @ params["encoder.l1.w"] + params["encoder.l1.b"]
    a = backends.gelu(h)
    out = a @ params["encoder.l2.w"] + params["encoder.l2.b"]
    cache = {"feats": feats, "h": h, "a": a} if need_cache else None
    return out, cache


def physics_block_forward(latent: np.ndarray, coords: np.ndarray,
                          params: ParameterStore, config: ModelConfig, t: int,
                          phases=None, need_cache: bool = False,
                          retain_attention: bool = False):
    """One pre-norm block: latent + MHA(LN(latent)), then + FFN(LN(.)).

    `phases` short-circuits the coordinate-to-phase computation when the
    caller already has it (the stack shares one table across blocks);
    otherwise phases are derived from `coords` unless the variant
    disables rotary modulation.
    """
    if phases is None and config.use_rope:
        phases = compute_phases(coords, config.rotary())
    x = latent
    u, ln1_cache = layer_norm(
        x, params[f"block{t}.ln1.gain"], params[f"block{t}.ln1.bias"], need_cache)
    head_weights = [
        (params[f"block{t}.head{h}.q.w"],
         params[f"block{t}.head{h}.k.w"],
         params[f"block{t}.head{h}.v.w"])
        for h in range(config.num_heads)
    ]
    attn_out, attn_weights, mha_cache = multi_head_attention(
        u, head_weights, params[f"block{t}.attn.out.w"], phases,
        retain_weights=retain_attention, need_cache=need_cache)
    x1 = x + attn_out
    v, ln2_cache = layer_norm(
        x1, params[f"block{t}.ln2.gain"], params[f"block{t}.ln2.bias"], need_cache)
    h = v @ params[f"block{t}.ffn.l1.w"] + params[f"block{t}.ffn.l1.b"]
    a = backends.gelu(h)
    f = a @ params[f"block{t}.ffn.l2.w"] + params[f"block{t}.ffn.l2.b"]
    out = x1 + f
    cache = None
    if need_cache:
        cache = {"ln1": ln1_cache, "mha": mha_cache, "ln2": ln2_cache,
                 "v": v, "h": h, "a": a}
    return out, attn_weights, cache


def decoder_forward(latent: np.ndarray, params: ParameterStore, config: ModelConfig,
                    need_cache: bool = False):
    """Pointwise map back to physical channels; linear output head."""
    h = latent @ params["decoder.l1.w"] + params["decoder.l1.b"]
    a = backends.gelu(h)
    out = a @ params["decoder.l2.w"] + params["decoder.l2.b"]
    cache = {"h": h, "a": a} if need_cache else None
    return out, cache


def model_forward(coords: np.ndarray, params: ParameterStore, config: ModelConfig,
                  normalizer: CoordinateNormalizer | None = None,
                  need_cache: bool = False, retain_attention: bool = False):
    """Full forward map: (N, 3) coordinates -> (N, C) field prediction.

    Pass the dataset normalizer to feed raw coordinates; None means the
    caller already normalized them. Returns (pred, cache, attention)
    where attention is a per-block list of per-head weight matrices when
    retained, else None. Predictions are in Z-scored units.
    """
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 3:
        raise ShapeError(f"expected (N, 3) coordinates, got {coords.shape}")
    if coords.shape[0] == 0:
        raise EmptyInputError("no points to evaluate")
    if normalizer is not None:
        coords = apply_normalizer(coords, normalizer)
    phases = None
    if config.use_rope:
        phases = compute_phases(coords, config.rotary())
    x, enc_cache = encoder_forward(coords, params, config, need_cache)
    block_caches = [] if need_cache else None
    attention = [] if retain_attention else None
    for t in range(config.num_blocks):
        x, attn_weights, block_cache = physics_block_forward(
            x, coords, params, config, t, phases,
            need_cache=need_cache, retain_attention=retain_attention)
        if need_cache:
            block_caches.append(block_cache)
        if retain_attention:
            attention.append(attn_weights)
    pred, dec_cache = decoder_forward(x, params, config, need_cache)
    cache = None
    if need_cache:
        cache = {"coords": coords, "phases": phases, "enc": enc_cache,
                 "blocks": block_caches, "dec": dec_cache, "block_out": x}
    return pred, cache, attention
