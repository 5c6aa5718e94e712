"""Synthetic flow datasets: generation, binary sample files, splits.

The generator evaluates the classical irrotational solution for a sphere
of radius a in a uniform stream U along +x (velocity potential
phi = U x (1 + a^3 / (2 r^3))):

    u_x = U (1 + a^3/(2 r^3) - 3 a^3 x^2 / (2 r^5))
    u_y = -3 U a^3 x y / (2 r^5)
    u_z = -3 U a^3 x z / (2 r^5)
    Cp  = 1 - |u|^2 / U^2

Closed form means every record carries its own ground truth: the radial
velocity vanishes on r = a and the Cp/velocity pair satisfies the
Bernoulli relation to rounding error, which the tests lean on.

Sample files use a little-endian binary layout (magic "RSMP"): header
with version, sample id, point/channel counts, channel names and JSON
metadata; then coords and fields as float32 row-major; then a CRC-32 of
everything before it. Arrays are float64 in memory; writing casts to
float32, so a loaded record round-trips bit-exactly but a freshly
generated one may not. Files are written atomically (temp + rename).
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BoundsError,
    ConfigError,
    DegenerateChannelError,
    DegenerateGeometryError,
    EmptyDatasetError,
    FormatError,
    NonFiniteInputError,
    VersionError,
)

SAMPLE_MAGIC = b"RSMP"
SAMPLE_VERSION = 1
MANIFEST_HEADER = "ropeflow-manifest v1"

CHANNELS = ("p", "u", "v", "w")


@dataclass
class SampleRecord:
    sample_id: str
    coords: np.ndarray            # (N, 3) float64
    fields: np.ndarray            # (N, C) float64
    channel_names: tuple
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.coords = np.ascontiguousarray(self.coords, dtype=np.float64)
        self.fields = np.ascontiguousarray(self.fields, dtype=np.float64)
        if self.coords.ndim != 2 or self.coords.shape[1] != 3:
            raise BoundsError(f"coords must be (N, 3), got {self.coords.shape}")
        n = self.coords.shape[0]
        if n < 1:
            raise EmptyDatasetError("sample has no points")
        if self.fields.ndim != 2 or self.fields.shape[0] != n:
            raise BoundsError(
                f"fields {self.fields.shape} do not align with {n} points")
        names = tuple(str(c) for c in self.channel_names)
        if len(names) != self.fields.shape[1] or len(set(names)) != len(names):
            raise ConfigError(
                f"channel names {names} do not label {self.fields.shape[1]} columns")
        self.channel_names = names
        if not (np.all(np.isfinite(self.coords)) and np.all(np.isfinite(self.fields))):
            raise NonFiniteInputError(f"sample {self.sample_id}: non-finite entries")

    @property
    def num_points(self) -> int:
        return self.coords.shape[0]

    @property
    def num_channels(self) -> int:
        return self.fields.shape[1]


def potential_velocity(coords: np.ndarray, radius: float,
                       free_stream: float) -> np.ndarray:
    """Closed-form velocity of the doublet-plus-uniform-stream solution."""
    coords = np.asarray(coords, dtype=np.float64)
    r2 = np.sum(coords * coords, axis=1)
    if np.any(r2 < (0.999999 * radius) ** 2):
        raise DegenerateGeometryError("points inside the sphere have no field value")
    r = np.sqrt(r2)
    a3 = radius ** 3
    half_a3_r3 = a3 / (2.0 * r ** 3)
    common = 3.0 * a3 / (2.0 * r ** 5) * coords[:, 0]
    vel = np.empty_like(coords)
    vel[:, 0] = free_stream * (1.0 + half_a3_r3 - common * coords[:, 0])
    vel[:, 1] = -free_stream * common * coords[:, 1]
    vel[:, 2] = -free_stream * common * coords[:, 2]
    return vel


def pressure_coefficient(velocity: np.ndarray, free_stream: float) -> np.ndarray:
    """Bernoulli: Cp = 1 - |u|^2 / U^2."""
    velocity = np.asarray(velocity, dtype=np.float64)
    speed2 = np.sum(velocity * velocity, axis=1)
    return 1.0 - speed2 / free_stream ** 2


def _unit_directions(rng, n: int) -> np.ndarray:
    dirs = rng.standard_normal((n, 3))
    norms = np.linalg.norm(dirs, axis=1)
    while np.any(norms < 1e-12):
        bad = norms < 1e-12
        dirs[bad] = rng.standard_normal((int(np.sum(bad)), 3))
        norms = np.linalg.norm(dirs, axis=1)
    return dirs / norms[:, None]


def gen_potential_flow_sphere(radius: float, free_stream: float, point_count: int,
                              region: str = "shell", outer_radius: float = 2.0,
                              seed: int = 0,
                              sample_id: str | None = None) -> SampleRecord:
    """Sample the analytic sphere flow; channels (p, u, v, w).

    region "surface" puts every point on r = radius; "shell" draws
    uniformly in the volume radius < r <= outer_radius (inverse-CDF on
    r^3, no rejection). Pressure is the dimensionless Cp.
    """
    if radius <= 0 or free_stream <= 0:
        raise DegenerateGeometryError(
            f"radius and free_stream must be positive, got {radius}, {free_stream}")
    if point_count < 1:
        raise EmptyDatasetError("point_count must be >= 1")
    rng = np.random.default_rng(seed)
    dirs = _unit_directions(rng, point_count)
    if region == "surface":
        r = np.full(point_count, float(radius))
    elif region == "shell":
        if outer_radius <= radius:
            raise DegenerateGeometryError(
                f"outer_radius {outer_radius} must exceed radius {radius}")
        u = rng.random(point_count)
        # 1-u keeps r strictly above the sphere surface
        r = np.cbrt(radius ** 3 + (1.0 - u) * (outer_radius ** 3 - radius ** 3))
    else:
        raise ConfigError(f"unknown sampling region {region!r}")
    coords = dirs * r[:, None]
    vel = potential_velocity(coords, radius, free_stream)
    cp = pressure_coefficient(vel, free_stream)
    fields = np.column_stack([cp, vel])
    meta = {
        "radius": float(radius),
        "free_stream": float(free_stream),
        "region": region,
        "outer_radius": float(outer_radius) if region == "shell" else float(radius),
        "seed": int(seed),
    }
    return SampleRecord(
        sample_id=sample_id if sample_id is not None else f"sphere-{seed}",
        coords=coords, fields=fields, channel_names=CHANNELS, metadata=meta)


@dataclass(frozen=True)
class ZScoreStats:
    mean: np.ndarray   # (C,)
    std: np.ndarray    # (C,)

    @property
    def num_channels(self) -> int:
        return self.mean.shape[0]


def fit_zscore(fields_list) -> ZScoreStats:
    """Per-channel mean and population (divide-by-N) std over all rows.

    Fit on the training split only; the stats are part of the model
    contract and must not move when val/test content changes.
    """
    if isinstance(fields_list, np.ndarray):
        fields_list = [fields_list]
    arrays = [np.asarray(f, dtype=np.float64) for f in fields_list]
    if not arrays or sum(a.shape[0] for a in arrays) == 0:
        raise EmptyDatasetError("no rows to fit statistics on")
    stacked = np.concatenate(arrays, axis=0)
    mean = stacked.mean(axis=0)
    std = stacked.std(axis=0)      # population form
    if np.any(std < 1e-12):
        ch = int(np.argmin(std))
        raise DegenerateChannelError(
            f"channel {ch} is constant (std {std[ch]:.3e}); cannot standardize")
    mean.setflags(write=False)
    std.setflags(write=False)
    return ZScoreStats(mean=mean, std=std)


def apply_zscore(fields: np.ndarray, stats: ZScoreStats) -> np.ndarray:
    return (np.asarray(fields, dtype=np.float64) - stats.mean) / stats.std


def invert_zscore(fields: np.ndarray, stats: ZScoreStats) -> np.ndarray:
    return np.asarray(fields, dtype=np.float64) * stats.std + stats.mean


class _Cursor:
    """Bounds-checked reader that reports the byte offset of any shortfall."""

    def __init__(self, blob: bytes, path: str):
        self.blob = blob
        self.path = path
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.blob):
            raise FormatError(
                f"{self.path}: truncated at byte {self.pos} reading {what} "
                f"({n} bytes needed, {len(self.blob) - self.pos} left)")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack("<" + fmt, self.take(struct.calcsize("<" + fmt), what))


def _atomic_write(path: str, blob: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_sample(record: SampleRecord, path: str) -> None:
    """Serialize one record; float arrays are stored as little-endian f32."""
    parts = [SAMPLE_MAGIC, struct.pack("<I", SAMPLE_VERSION)]
    sid = record.sample_id.encode("utf-8")
    parts.append(struct.pack("<H", len(sid)))
    parts.append(sid)
    parts.append(struct.pack("<QI", record.num_points, record.num_channels))
    for name in record.channel_names:
        nb = name.encode("utf-8")
        parts.append(struct.pack("<H", len(nb)))
        parts.append(nb)
    meta = json.dumps(record.metadata, sort_keys=True).encode("utf-8")
    parts.append(struct.pack("<I", len(meta)))
    parts.append(meta)
    parts.append(np.ascontiguousarray(record.coords, dtype="<f4").tobytes())
    parts.append(np.ascontiguousarray(record.fields, dtype="<f4").tobytes())
    body = b"".join(parts)
    blob = body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)
    _atomic_write(path, blob)


def load_sample(path: str) -> SampleRecord:
    """Parse one sample file; any corruption names the failing byte offset."""
    with open(path, "rb") as fh:
        blob = fh.read()
    cur = _Cursor(blob, path)
    magic = cur.take(4, "magic")
    if magic != SAMPLE_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r} at byte 0")
    (version,) = cur.unpack("I", "version")
    if version != SAMPLE_VERSION:
        raise VersionError(
            f"{path}: sample format version {version}, expected {SAMPLE_VERSION}")
    (id_len,) = cur.unpack("H", "sample id length")
    sid = cur.take(id_len, "sample id").decode("utf-8")
    n, c = cur.unpack("QI", "point/channel counts")
    names = []
    for i in range(c):
        (name_len,) = cur.unpack("H", f"channel name {i} length")
        names.append(cur.take(name_len, f"channel name {i}").decode("utf-8"))
    (meta_len,) = cur.unpack("I", "metadata length")
    meta_blob = cur.take(meta_len, "metadata")
    try:
        metadata = json.loads(meta_blob.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(
            f"{path}: bad metadata JSON at byte {cur.pos - meta_len}: {exc}") from exc
    coords = np.frombuffer(
        cur.take(n * 3 * 4, "coordinate payload"), dtype="<f4").reshape(n, 3)
    fields = np.frombuffer(
        cur.take(n * c * 4, "field payload"), dtype="<f4").reshape(n, c)
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
    return SampleRecord(
        sample_id=sid,
        coords=coords.astype(np.float64),
        fields=fields.astype(np.float64),
        channel_names=tuple(names),
        metadata=metadata)


def random_subsample(record: SampleRecord, n: int, seed: int) -> SampleRecord:
    """Keep n distinct rows (coords and fields stay aligned), seeded."""
    total = record.num_points
    if not 1 <= n <= total:
        raise BoundsError(f"cannot take {n} of {total} points")
    idx = np.random.default_rng(seed).permutation(total)[:n]
    return SampleRecord(
        sample_id=record.sample_id,
        coords=record.coords[idx],
        fields=record.fields[idx],
        channel_names=record.channel_names,
        metadata=dict(record.metadata))


@dataclass
class DatasetManifest:
    entries: list                  # (sample_id, relative path, split) triples
    stats_split: str = "train"

    def ids(self, split: str) -> list:
        return [sid for sid, _, tag in self.entries if tag == split]

    def paths(self, split: str) -> list:
        return [path for _, path, tag in self.entries if tag == split]

    def counts(self) -> dict:
        out = {"train": 0, "val": 0, "test": 0}
        for _, _, tag in self.entries:
            out[tag] += 1
        return out


def make_splits(entries, ratios=(0.8, 0.1, 0.1), seed: int = 0) -> DatasetManifest:
    """Seeded shuffle, then contiguous train/val/test assignment.

    `entries` is a sequence of (sample_id, path) pairs; ratios must sum
    to 1. Floor cut points give 10 -> 8/1/1 and 500 -> 400/50/50.
    """
    entries = list(entries)
    if not entries:
        raise EmptyDatasetError("no samples to split")
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise ConfigError(f"split ratios must be 3 nonnegative values summing to 1, got {ratios}")
    order = np.random.default_rng(seed).permutation(len(entries))
    n = len(entries)
    i1 = int(np.floor(n * ratios[0]))
    i2 = int(np.floor(n * (ratios[0] + ratios[1])))
    tagged = []
    for rank, idx in enumerate(order):
        tag = "train" if rank < i1 else ("val" if rank < i2 else "test")
        sid, path = entries[idx]
        tagged.append((sid, path, tag))
    return DatasetManifest(entries=tagged, stats_split="train")


def write_manifest(manifest: DatasetManifest, path: str) -> None:
    lines = [MANIFEST_HEADER, f"stats_split\t{manifest.stats_split}"]
    for sid, rel, tag in manifest.entries:
        lines.append(f"{sid}\t{rel}\t{tag}")
    _atomic_write(path, ("\n".join(lines) + "\n").encode("utf-8"))


def read_manifest(path: str) -> DatasetManifest:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh]
    if not lines:
        raise FormatError(f"{path}: empty manifest")
    if lines[0] != MANIFEST_HEADER:
        if lines[0].startswith("ropeflow-manifest"):
            raise VersionError(f"{path}: unsupported manifest version {lines[0]!r}")
        raise FormatError(f"{path}: bad manifest header {lines[0]!r}")
    if len(lines) < 2 or not lines[1].startswith("stats_split\t"):
        raise FormatError(f"{path}: missing stats_split line")
    stats_split = lines[1].split("\t", 1)[1]
    entries = []
    for lineno, line in enumerate(lines[2:], start=3):
        if not line:
            continue
        cols = line.split("\t")
        if len(cols) != 3 or cols[2] not in ("train", "val", "test"):
            raise FormatError(f"{path}:{lineno}: bad manifest row {line!r}")
        entries.append((cols[0], cols[1], cols[2]))
    return DatasetManifest(entries=entries, stats_split=stats_split)


def load_split(manifest: DatasetManifest, base_dir: str, split: str) -> list:
    """Load every record of one split, in manifest order."""
    return [load_sample(os.path.join(base_dir, rel)) for rel in manifest.paths(split)]
