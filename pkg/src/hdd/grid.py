"""Gridded fields, geographic weighting, and bilinear resampling.

A :class:`Grid` is a channels-first 2-D field (latitude rows, longitude
columns) with a bounding box.  The module supplies the two resolution
operators used throughout the package -- bilinear :func:`downsample` and
:func:`upsample` at cell-center sample positions -- plus cosine-latitude
area weights and the binary HDDG file format.

Resampling convention: output cell ``i`` of ``n_out`` samples the source
at ``(i + 0.5) * n_in / n_out - 0.5`` (cell centers, clamped at the
edges).  Resampling to the source shape is an exact identity.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "GeoExtent",
    "Shape",
    "Grid",
    "UNIT_EXTENT",
    "downsample",
    "upsample",
    "area_weights",
    "read_grid",
    "write_grid",
    "GridFileError",
    "BadMagicError",
    "UnsupportedVersionError",
    "TruncatedPayloadError",
    "NonFiniteDataError",
]

_MAGIC = b"HDDG"
_VERSION = 1


class GridFileError(ValueError):
    """Base class for HDDG parse failures."""


class BadMagicError(GridFileError):
    pass


class UnsupportedVersionError(GridFileError):
    pass


class TruncatedPayloadError(GridFileError):
    pass


class NonFiniteDataError(GridFileError):
    pass


@dataclass(frozen=True)
class GeoExtent:
    """Latitude/longitude bounding box in degrees.

    The sentinel extent (0, 1, 0, 1) marks synthetic unit-square data and
    makes :func:`area_weights` uniform.
    """

    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float

    def __post_init__(self):
        if not (-90.0 <= self.lat_min <= 90.0 and -90.0 <= self.lat_max <= 90.0):
            raise ValueError(f"latitudes must lie in [-90, 90], got [{self.lat_min}, {self.lat_max}]")
        if not (self.lat_min < self.lat_max):
            raise ValueError(f"lat_min must be < lat_max, got [{self.lat_min}, {self.lat_max}]")
        for lon in (self.lon_min, self.lon_max):
            if not (-180.0 <= lon < 360.0):
                raise ValueError(f"longitudes must lie in [-180, 360), got {lon}")

    @property
    def is_sentinel(self) -> bool:
        return (self.lat_min, self.lat_max, self.lon_min, self.lon_max) == (0.0, 1.0, 0.0, 1.0)


#: Sentinel extent for synthetic data with uniform area weights.
UNIT_EXTENT = GeoExtent(0.0, 1.0, 0.0, 1.0)


@dataclass(frozen=True, order=True)
class Shape:
    """A target resolution (rows, columns)."""

    h: int
    w: int

    def __post_init__(self):
        if self.h < 1 or self.w < 1:
            raise ValueError(f"shape must be at least 1x1, got {self.h}x{self.w}")

    @property
    def area(self) -> int:
        return self.h * self.w


class Grid:
    """Immutable c-channel 2-D field with geographic extent.

    Data layout is [channel][row][column]; rows run north to south across
    the extent's latitude range.  Values are float64 in memory and must be
    finite.
    """

    __slots__ = ("data", "channel_names", "extent")

    def __init__(self, data, channel_names, extent: GeoExtent = UNIT_EXTENT):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[np.newaxis, :, :]
        if arr.ndim != 3:
            raise ValueError(f"grid data must be [channel][row][col], got ndim={arr.ndim}")
        if arr.shape[1] < 1 or arr.shape[2] < 1:
            raise ValueError(f"grid must have positive height and width, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("grid values must be finite (no NaN/Inf)")
        names = tuple(str(n) for n in channel_names)
        if len(names) != arr.shape[0]:
            raise ValueError(f"{len(names)} channel names for {arr.shape[0]} channels")
        if any(n == "" for n in names):
            raise ValueError("channel names must be nonempty")
        if len(set(names)) != len(names):
            raise ValueError("channel names must be unique")
        arr = arr.copy()
        arr.setflags(write=False)
        self.data = arr
        self.channel_names = names
        self.extent = extent

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> Shape:
        return Shape(self.height, self.width)

    def with_data(self, data) -> "Grid":
        """New grid sharing names/extent but holding different values."""
        return Grid(data, self.channel_names, self.extent)

    def channel(self, name_or_index) -> np.ndarray:
        if isinstance(name_or_index, str):
            try:
                idx = self.channel_names.index(name_or_index)
            except ValueError:
                raise KeyError(f"no channel named {name_or_index!r}") from None
        else:
            idx = int(name_or_index)
        return self.data[idx]

    def __eq__(self, other):
        if not isinstance(other, Grid):
            return NotImplemented
        return (
            self.channel_names == other.channel_names
            and self.extent == other.extent
            and self.data.shape == other.data.shape
            and bool(np.array_equal(self.data, other.data))
        )

    def __repr__(self):
        return f"Grid({self.channels}x{self.height}x{self.width}, channels={list(self.channel_names)})"


def _axis_weights(n_in: int, n_out: int):
    """Index pairs and fractions for 1-D cell-center bilinear resampling."""
    u = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    u = np.clip(u, 0.0, n_in - 1.0)
    i0 = np.floor(u).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = u - i0
    return i0, i1, frac


def _resample_plane(plane: np.ndarray, th: int, tw: int) -> np.ndarray:
    h, w = plane.shape
    if (h, w) == (th, tw):
        return plane
    r0, r1, rf = _axis_weights(h, th)
    c0, c1, cf = _axis_weights(w, tw)
    rows = plane[r0, :] * (1.0 - rf)[:, None] + plane[r1, :] * rf[:, None]
    out = rows[:, c0] * (1.0 - cf)[None, :] + rows[:, c1] * cf[None, :]
    return out


def resample_array(data: np.ndarray, th: int, tw: int) -> np.ndarray:
    """Bilinear resample of a [channel][row][col] array to (th, tw)."""
    if data.shape[1:] == (th, tw):
        return data
    return np.stack([_resample_plane(ch, th, tw) for ch in data])


def downsample(g: Grid, target: Shape) -> Grid:
    """Project a grid to a coarser (or equal) resolution.

    Plain bilinear interpolation at cell centers, no anti-alias
    pre-filter.  Downsampling to the grid's own shape returns the values
    unchanged.
    """
    if target.h > g.height or target.w > g.width:
        raise ValueError(
            f"downsample target {target.h}x{target.w} exceeds source {g.height}x{g.width}"
        )
    if target == g.shape:
        return g
    return g.with_data(resample_array(g.data, target.h, target.w))


def upsample(g: Grid, target: Shape) -> Grid:
    """Bilinearly interpolate a grid to a finer (or equal) resolution."""
    if target.h < g.height or target.w < g.width:
        raise ValueError(
            f"upsample target {target.h}x{target.w} is smaller than source {g.height}x{g.width}"
        )
    if target == g.shape:
        return g
    return g.with_data(resample_array(g.data, target.h, target.w))


def area_weights(g: Grid) -> np.ndarray:
    """Cosine-latitude area weight for every cell, shape [height][width].

    Weights are cos(latitude) at each row's cell-center latitude,
    constant along rows.  The sentinel extent yields uniform weights.
    Extents whose cell centers reach cos(lat) <= 0 are rejected.
    """
    if g.extent.is_sentinel:
        return np.ones((g.height, g.width))
    lat_span = g.extent.lat_max - g.extent.lat_min
    centers = g.extent.lat_max - (np.arange(g.height) + 0.5) * (lat_span / g.height)
    # centers this close to a pole give cos(lat) <= 0 up to rounding
    if np.any(np.abs(centers) >= 90.0 - 1e-9):
        raise ValueError("extent reaches a pole: cos(latitude) <= 0 at a cell center")
    w = np.cos(np.deg2rad(centers))
    return np.repeat(w[:, None], g.width, axis=1)


def write_grid(g: Grid, destination) -> None:
    """Write a grid as an HDDG file (little-endian, f32 payload)."""
    header = bytearray()
    header += _MAGIC
    header += struct.pack("<H", _VERSION)
    header += struct.pack("<III", g.height, g.width, g.channels)
    header += struct.pack(
        "<dddd", g.extent.lat_min, g.extent.lat_max, g.extent.lon_min, g.extent.lon_max
    )
    for name in g.channel_names:
        raw = name.encode("utf-8")
        header += struct.pack("<H", len(raw)) + raw
    payload = g.data.astype("<f4").tobytes()
    if hasattr(destination, "write"):
        destination.write(bytes(header) + payload)
    else:
        with open(destination, "wb") as fh:
            fh.write(bytes(header) + payload)


def read_grid(source) -> Grid:
    """Read an HDDG file back into a grid.

    Raises a distinct :class:`GridFileError` subclass for a bad magic
    number, an unsupported version, a short payload, or non-finite
    values.
    """
    if hasattr(source, "read"):
        blob = source.read()
    else:
        with open(source, "rb") as fh:
            blob = fh.read()

    def take(n: int, what: str) -> bytes:
        nonlocal offset
        if offset + n > len(blob):
            raise TruncatedPayloadError(f"file ends inside {what}")
        piece = blob[offset : offset + n]
        offset += n
        return piece

    offset = 0
    magic = take(4, "magic")
    if magic != _MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {_MAGIC!r}")
    (version,) = struct.unpack("<H", take(2, "version"))
    if version != _VERSION:
        raise UnsupportedVersionError(f"unsupported HDDG version {version}")
    h, w, c = struct.unpack("<III", take(12, "dimensions"))
    if h < 1 or w < 1 or c < 1:
        raise GridFileError(f"non-positive dimensions {c}x{h}x{w}")
    extent = GeoExtent(*struct.unpack("<dddd", take(32, "extent")))
    names = []
    for i in range(c):
        (ln,) = struct.unpack("<H", take(2, f"name length {i}"))
        names.append(take(ln, f"channel name {i}").decode("utf-8"))
    payload = take(4 * c * h * w, "payload")
    if offset != len(blob):
        raise GridFileError(f"{len(blob) - offset} trailing bytes after payload")
    values = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(c, h, w)
    if not np.all(np.isfinite(values)):
        raise NonFiniteDataError("payload contains NaN or Inf values")
    return Grid(values, names, extent)
