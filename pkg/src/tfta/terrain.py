"""Heightmap storage, bilinear height queries and synthetic terrain."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, OutOfMapError

DEM_MAGIC = b"TFTA-DEM1"
_HEADER = struct.Struct("<IIddd")


@dataclass(frozen=True, eq=False)
class TerrainGrid:
    """Regular elevation grid.

    Cell (0, 0) is centred on ``(origin_x, origin_y)``; columns run along +x
    and rows along +y. ``heights[j, i]`` is the elevation of column ``i`` in
    row ``j``.
    """

    origin_x: float
    origin_y: float
    cell_size: float
    heights: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.heights, dtype=np.float64)
        if h.ndim != 2 or h.shape[0] < 2 or h.shape[1] < 2:
            raise ConfigError(f"terrain needs at least 2x2 samples, got shape {h.shape}")
        if not np.all(np.isfinite(h)):
            raise ConfigError("terrain heights must be finite")
        if not self.cell_size > 0:
            raise ConfigError("cell_size must be positive")
        h.setflags(write=False)
        object.__setattr__(self, "heights", h)

    @property
    def n_rows(self) -> int:
        return self.heights.shape[0]

    @property
    def n_cols(self) -> int:
        return self.heights.shape[1]

    @property
    def x_max(self) -> float:
        return self.origin_x + (self.n_cols - 1) * self.cell_size

    @property
    def y_max(self) -> float:
        return self.origin_y + (self.n_rows - 1) * self.cell_size

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        """(x_min, x_max, y_min, y_max) of the interpolable rectangle."""
        return self.origin_x, self.x_max, self.origin_y, self.y_max

    def contains(self, x, y):
        """Elementwise in-bounds test; works on scalars and arrays."""
        return (
            (x >= self.origin_x) & (x <= self.x_max) & (y >= self.origin_y) & (y <= self.y_max)
        )

    def __eq__(self, other):
        if not isinstance(other, TerrainGrid):
            return NotImplemented
        return (
            self.origin_x == other.origin_x
            and self.origin_y == other.origin_y
            and self.cell_size == other.cell_size
            and np.array_equal(self.heights, other.heights)
        )

    __hash__ = None


def height_at(grid: TerrainGrid, x: float, y: float) -> float:
    """Bilinear terrain height at world ``(x, y)``.

    Raises:
        OutOfMapError: if the point lies outside the grid rectangle.
    """
    if not grid.contains(x, y):
        raise OutOfMapError(f"({x:.1f}, {y:.1f}) outside terrain bounds {grid.bounds}")
    fx = (x - grid.origin_x) / grid.cell_size
    fy = (y - grid.origin_y) / grid.cell_size
    i = min(int(fx), grid.n_cols - 2)
    j = min(int(fy), grid.n_rows - 2)
    tx = fx - i
    ty = fy - j
    h = grid.heights
    lower = (1.0 - tx) * h[j, i] + tx * h[j, i + 1]
    upper = (1.0 - tx) * h[j + 1, i] + tx * h[j + 1, i + 1]
    return float((1.0 - ty) * lower + ty * upper)


def heights_at(grid: TerrainGrid, xs, ys) -> np.ndarray:
    """Vectorised :func:`height_at`. Any out-of-bounds point raises."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if not np.all(grid.contains(xs, ys)):
        raise OutOfMapError("batch query leaves terrain bounds")
    fx = (xs - grid.origin_x) / grid.cell_size
    fy = (ys - grid.origin_y) / grid.cell_size
    i = np.minimum(fx.astype(np.int64), grid.n_cols - 2)
    j = np.minimum(fy.astype(np.int64), grid.n_rows - 2)
    tx = fx - i
    ty = fy - j
    h = grid.heights
    lower = (1.0 - tx) * h[j, i] + tx * h[j, i + 1]
    upper = (1.0 - tx) * h[j + 1, i] + tx * h[j + 1, i + 1]
    return (1.0 - ty) * lower + ty * upper


def agl(grid: TerrainGrid, position) -> float:
    """Height above ground level; negative means below the surface."""
    return float(position[2]) - height_at(grid, float(position[0]), float(position[1]))


def flat_terrain(n_cols: int, n_rows: int, cell_size: float, height: float = 0.0) -> TerrainGrid:
    return TerrainGrid(0.0, 0.0, cell_size, np.full((n_rows, n_cols), float(height)))


def generate_terrain(
    seed: int,
    n_cols: int,
    n_rows: int,
    cell_size: float,
    relief: float,
    n_bumps: int = 14,
) -> TerrainGrid:
    """Seeded sum of Gaussian hills and valleys.

    The field is shifted to a zero minimum and scaled so that its
    peak-to-trough range is exactly ``relief``. Heights are rounded through
    float32 so a DEM round trip is bit-exact.
    """
    if relief < 0:
        raise ConfigError("relief must be non-negative")
    rng = np.random.default_rng(seed)
    width = (n_cols - 1) * cell_size
    depth = (n_rows - 1) * cell_size
    xs = np.arange(n_cols) * cell_size
    ys = np.arange(n_rows) * cell_size
    gx, gy = np.meshgrid(xs, ys)
    field = np.zeros((n_rows, n_cols))
    scale = max(width, depth, cell_size)
    for _ in range(n_bumps):
        cx = rng.uniform(0.0, width)
        cy = rng.uniform(0.0, depth)
        sx = rng.uniform(0.06, 0.25) * scale
        sy = rng.uniform(0.06, 0.25) * scale
        amp = rng.uniform(-0.5, 1.0)
        field += amp * np.exp(-0.5 * (((gx - cx) / sx) ** 2 + ((gy - cy) / sy) ** 2))
    span = field.max() - field.min()
    if relief == 0 or span == 0:
        heights = np.zeros_like(field)
    else:
        heights = (field - field.min()) * (relief / span)
        # float32 rounding can overshoot the span by an ulp
        heights = np.clip(heights.astype(np.float32), 0.0, np.float32(relief))
    return TerrainGrid(0.0, 0.0, float(cell_size), heights.astype(np.float64))


def save_dem(grid: TerrainGrid, path) -> None:
    """Write the self-describing little-endian binary DEM."""
    with open(path, "wb") as f:
        f.write(DEM_MAGIC)
        f.write(_HEADER.pack(grid.n_cols, grid.n_rows, grid.origin_x, grid.origin_y, grid.cell_size))
        f.write(grid.heights.astype("<f4").tobytes(order="C"))


def load_dem(path) -> TerrainGrid:
    """Load a DEM file, binary or plain-text variant (detected by magic)."""
    raw = Path(path).read_bytes()
    if raw.startswith(DEM_MAGIC):
        off = len(DEM_MAGIC)
        n_cols, n_rows, ox, oy, cell = _HEADER.unpack_from(raw, off)
        off += _HEADER.size
        expected = n_cols * n_rows * 4
        if len(raw) - off != expected:
            raise ConfigError(f"DEM payload is {len(raw) - off} bytes, expected {expected}")
        heights = np.frombuffer(raw, dtype="<f4", offset=off).reshape(n_rows, n_cols)
        return TerrainGrid(ox, oy, cell, heights.astype(np.float64))
    return _parse_text_dem(raw.decode("ascii"))


def _parse_text_dem(text: str) -> TerrainGrid:
    tokens = text.split()
    if len(tokens) < 5:
        raise ConfigError("text DEM header needs: ncols nrows origin_x origin_y cellsize")
    try:
        n_cols, n_rows = int(tokens[0]), int(tokens[1])
        ox, oy, cell = float(tokens[2]), float(tokens[3]), float(tokens[4])
        values = np.array([float(t) for t in tokens[5:]])
    except ValueError as exc:
        raise ConfigError(f"malformed text DEM: {exc}") from None
    if values.size != n_cols * n_rows:
        raise ConfigError(f"text DEM has {values.size} heights, expected {n_cols * n_rows}")
    return TerrainGrid(ox, oy, cell, values.reshape(n_rows, n_cols))
