"""Spectral coordinate encoding and dataset-level coordinate normalization.

Each spatial axis is expanded over a geometric ladder of frequencies

    w_n = base**(-2n / m),   n = 0 .. m/2 - 1

and a coordinate c becomes [sin(c*w_0) .. sin(c*w_{m/2-1}),
cos(c*w_0) .. cos(c*w_{m/2-1})]. A 3D point is the concatenation of the
three axis encodings (length 3m). Encoding always operates on normalized
coordinates: the normalizer maps the training bounding box into the cube
[-1, 1]^3 isotropically (one scale for all axes, so aspect ratios are
preserved).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateGeometryError,
    EmptyDatasetError,
    InvalidBaseError,
    InvalidDimensionError,
    NonFiniteInputError,
)


@dataclass(frozen=True)
class FrequencyTable:
    """Geometric frequency ladder for one axis.

    freqs has m/2 entries, strictly decreasing, freqs[0] == 1, all in (0, 1].
    """

    wavelength_base: float
    per_axis_dim: int
    freqs: np.ndarray

    @property
    def encoded_dim(self) -> int:
        return self.per_axis_dim


@dataclass(frozen=True)
class CoordinateNormalizer:
    """Isotropic bounding-cube normalizer: x -> (x - center) * scale."""

    center: np.ndarray  # (3,)
    scale: float        # 2 / (largest bounding-box edge)


def build_frequency_table(per_axis_dim: int, wavelength_base: float) -> FrequencyTable:
    """Build the m/2 frequencies w_n = base**(-2n/m) for an even dimension m."""
    if per_axis_dim < 2 or per_axis_dim % 2 != 0:
        raise InvalidDimensionError(
            f"per_axis_dim must be an even integer >= 2, got {per_axis_dim}"
        )
    if not wavelength_base > 1.0:
        raise InvalidBaseError(f"wavelength_base must be > 1, got {wavelength_base}")
    n = np.arange(per_axis_dim // 2, dtype=np.float64)
    freqs = np.power(float(wavelength_base), -2.0 * n / per_axis_dim)
    freqs.setflags(write=False)
    return FrequencyTable(float(wavelength_base), int(per_axis_dim), freqs)


def encode_axis(coordinate: float, table: FrequencyTable) -> np.ndarray:
    """Encode one scalar coordinate to [sin half | cos half], length m."""
    if not np.isfinite(coordinate):
        raise NonFiniteInputError(f"coordinate is not finite: {coordinate}")
    phase = coordinate * table.freqs
    return np.concatenate([np.sin(phase), np.cos(phase)])


def encode_point(coords, table: FrequencyTable) -> np.ndarray:
    """Encode a 3-vector as concat(encode_axis(x), encode_axis(y), encode_axis(z))."""
    coords = np.asarray(coords, dtype=np.float64)
    if coords.shape != (3,):
        raise NonFiniteInputError(f"expected a 3-vector, got shape {coords.shape}")
    return np.concatenate([encode_axis(float(c), table) for c in coords])


def encode_points(coords: np.ndarray, table: FrequencyTable) -> np.ndarray:
    """Vectorized encode_point over an (N, 3) array; returns (N, 3m).

    Column layout per axis block: [sin(c*w_0).. | cos(c*w_0)..], axes in
    x, y, z order, identical to encode_point.
    """
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 3:
        raise NonFiniteInputError(f"expected (N, 3) coordinates, got {coords.shape}")
    if not np.all(np.isfinite(coords)):
        raise NonFiniteInputError("coordinates contain non-finite values")
    n_pts = coords.shape[0]
    m = table.per_axis_dim
    out = np.empty((n_pts, 3 * m), dtype=np.float64)
    half = m // 2
    for axis in range(3):
        phase = coords[:, axis, None] * table.freqs[None, :]
        base = axis * m
        out[:, base:base + half] = np.sin(phase)
        out[:, base + half:base + m] = np.cos(phase)
    return out


def fit_normalizer(training_coords) -> CoordinateNormalizer:
    """Fit the bounding-cube normalizer over all training coordinates.

    Accepts an (N, 3) array or an iterable of such arrays (one per sample).
    """
    if isinstance(training_coords, np.ndarray):
        arrays = [training_coords]
    else:
        arrays = [np.asarray(a) for a in training_coords]
    arrays = [a.reshape(-1, 3).astype(np.float64) for a in arrays if a.size]
    if not arrays or sum(a.shape[0] for a in arrays) == 0:
        raise EmptyDatasetError("cannot fit a normalizer on zero coordinates")
    lo = np.min([a.min(axis=0) for a in arrays], axis=0)
    hi = np.max([a.max(axis=0) for a in arrays], axis=0)
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise NonFiniteInputError("training coordinates contain non-finite values")
    extent = float(np.max(hi - lo))
    if extent <= 0.0:
        raise DegenerateGeometryError("bounding box has zero extent")
    center = (lo + hi) / 2.0
    center.setflags(write=False)
    return CoordinateNormalizer(center=center, scale=2.0 / extent)


def apply_normalizer(coords, normalizer: CoordinateNormalizer) -> np.ndarray:
    """(c - center) * scale; accepts (3,) or (N, 3)."""
    coords = np.asarray(coords, dtype=np.float64)
    return (coords - normalizer.center) * normalizer.scale


def invert_normalizer(coords, normalizer: CoordinateNormalizer) -> np.ndarray:
    """c / scale + center; inverse of apply_normalizer."""
    coords = np.asarray(coords, dtype=np.float64)
    return coords / normalizer.scale + normalizer.center
