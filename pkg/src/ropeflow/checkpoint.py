"""Versioned binary checkpoints.

Layout (little-endian): magic "RETO", format version, the model config as
JSON, then one (name, shape, row-major float64 data) triple per parameter
in registration order, then the coordinate normalizer and the per-channel
Z-score stats with their channel names, and finally a CRC-32 of every
preceding byte. The file is self-describing: loading rebuilds the config
and verifies that the stored parameters are exactly the set and shapes
that config implies, so a truncated or mismatched file cannot produce a
half-usable model.

Optimizer state is deliberately not stored; a resumed run restarts the
moment accumulators (documented in the training module).
"""

from __future__ import annotations

import dataclasses
import json
import struct
import zlib

import numpy as np

from .data import ZScoreStats, _atomic_write, _Cursor
from .encoding import CoordinateNormalizer
from .errors import CheckpointMismatchError, FormatError, VersionError
from .model import ModelConfig, ParameterStore, parameter_shapes

CHECKPOINT_MAGIC = b"RETO"
CHECKPOINT_VERSION = 1


def _pack_str(text: str, width: str = "H") -> bytes:
    blob = text.encode("utf-8")
    return struct.pack("<" + width, len(blob)) + blob


def save_checkpoint(path: str, params: ParameterStore, config: ModelConfig,
                    normalizer: CoordinateNormalizer | None,
                    zscore: ZScoreStats | None,
                    channel_names=()) -> None:
    """Write parameters + preprocessing state atomically."""
    parts = [CHECKPOINT_MAGIC, struct.pack("<I", CHECKPOINT_VERSION)]
    cfg_json = json.dumps(dataclasses.asdict(config), sort_keys=True)
    parts.append(_pack_str(cfg_json, "I"))

    names = params.names()
    parts.append(struct.pack("<I", len(names)))
    for name in names:
        arr = params[name]
        parts.append(_pack_str(name))
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())

    if normalizer is None:
        parts.append(struct.pack("<B", 0))
    else:
        parts.append(struct.pack("<B", 1))
        parts.append(np.asarray(normalizer.center, dtype="<f8").tobytes())
        parts.append(struct.pack("<d", float(normalizer.scale)))

    if zscore is None:
        parts.append(struct.pack("<B", 0))
    else:
        parts.append(struct.pack("<B", 1))
        parts.append(struct.pack("<I", zscore.num_channels))
        parts.append(np.asarray(zscore.mean, dtype="<f8").tobytes())
        parts.append(np.asarray(zscore.std, dtype="<f8").tobytes())

    parts.append(struct.pack("<I", len(channel_names)))
    for name in channel_names:
        parts.append(_pack_str(str(name)))

    body = b"".join(parts)
    blob = body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)
    _atomic_write(path, blob)


def load_checkpoint(path: str):
    """Read a checkpoint; returns (params, config, normalizer, zscore, channels).

    Raises a format error naming the failing byte offset on corruption, a
    version error on an unknown format version, and a checkpoint-mismatch
    error when the stored parameters disagree with the stored config.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    cur = _Cursor(blob, path)
    magic = cur.take(4, "magic")
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r} at byte 0")
    (version,) = cur.unpack("I", "version")
    if version != CHECKPOINT_VERSION:
        raise VersionError(
            f"{path}: checkpoint format version {version}, "
            f"expected {CHECKPOINT_VERSION}")
    (cfg_len,) = cur.unpack("I", "config length")
    cfg_blob = cur.take(cfg_len, "config JSON")
    try:
        cfg_dict = json.loads(cfg_blob.decode("utf-8"))
        config = ModelConfig(**cfg_dict)
    except (UnicodeDecodeError, json.JSONDecodeError, TypeError) as exc:
        raise FormatError(
            f"{path}: bad config block at byte {cur.pos - cfg_len}: {exc}") from exc

    (count,) = cur.unpack("I", "parameter count")
    params = ParameterStore()
    for i in range(count):
        (name_len,) = cur.unpack("H", f"parameter {i} name length")
        name = cur.take(name_len, f"parameter {i} name").decode("utf-8")
        (ndim,) = cur.unpack("B", f"{name} ndim")
        shape = cur.unpack(f"{ndim}Q", f"{name} shape")
        size = int(np.prod(shape)) if ndim else 1
        payload = cur.take(size * 8, f"{name} data")
        # frombuffer views are read-only; training updates in place
        arr = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()
        params.register(name, arr)

    (has_norm,) = cur.unpack("B", "normalizer flag")
    normalizer = None
    if has_norm:
        center = np.frombuffer(cur.take(24, "normalizer center"), dtype="<f8").copy()
        (scale,) = cur.unpack("d", "normalizer scale")
        normalizer = CoordinateNormalizer(center=center, scale=float(scale))

    (has_z,) = cur.unpack("B", "zscore flag")
    zscore = None
    if has_z:
        (channels,) = cur.unpack("I", "zscore channel count")
        mean = np.frombuffer(cur.take(8 * channels, "zscore mean"), dtype="<f8").copy()
        std = np.frombuffer(cur.take(8 * channels, "zscore std"), dtype="<f8").copy()
        zscore = ZScoreStats(mean=mean, std=std)

    (n_names,) = cur.unpack("I", "channel name count")
    channel_names = []
    for i in range(n_names):
        (name_len,) = cur.unpack("H", f"channel name {i} length")
        channel_names.append(cur.take(name_len, f"channel name {i}").decode("utf-8"))

    payload_end = cur.pos
    (crc_stored,) = cur.unpack("I", "checksum")
    if cur.pos != len(blob):
        raise FormatError(
            f"{path}: {len(blob) - cur.pos} trailing bytes after byte {cur.pos}")
    crc_actual = zlib.crc32(blob[:payload_end]) & 0xFFFFFFFF
    if crc_actual != crc_stored:
        raise FormatError(
            f"{path}: checksum mismatch over bytes 0..{payload_end} "
            f"(stored {crc_stored:#010x}, computed {crc_actual:#010x})")

    expected = parameter_shapes(config)
    got = {name: params[name].shape for name in params.names()}
    if got != expected:
        missing = sorted(set(expected) - set(got))
        extra = sorted(set(got) - set(expected))
        wrong = sorted(n for n in set(got) & set(expected) if got[n] != expected[n])
        raise CheckpointMismatchError(
            f"{path}: stored parameters disagree with stored config "
            f"(missing {missing[:3]}, unexpected {extra[:3]}, wrong shape {wrong[:3]})")
    if zscore is not None and zscore.num_channels != config.out_channels:
        raise CheckpointMismatchError(
            f"{path}: zscore stats cover {zscore.num_channels} channels, "
            f"model predicts {config.out_channels}")
    return params, config, normalizer, zscore, tuple(channel_names)
