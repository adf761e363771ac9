"""Grids, sampled fields, wave states, boundary traces, and their file formats.

Everything downstream (media construction, wave solvers, reconstruction)
works with the types defined here. Conventions fixed once and for all:

* nodes are laid out row-major with y as the slow index, so node (i, j)
  sits at (x_min + i*dx, y_min + j*dy) and lives at ``values[j, i]``;
* boundary sensors walk the rectangle counterclockwise starting at
  (x_min, y_min), each corner listed once.

Field files (".tatf") and trace files (".tatt") are little-endian binary;
see `write_field` / `write_trace` for the exact layout. Round-trips are
bit-exact.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

FIELD_MAGIC = b"TATF"
TRACE_MAGIC = b"TATT"


class FieldFormatError(ValueError):
    """Raised for malformed field/trace files."""


@dataclass(frozen=True)
class Grid2D:
    """Uniform tensor-product grid of nx-by-ny nodes on a rectangle."""

    nx: int
    ny: int
    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise ValueError(f"grid needs at least 3 nodes per axis, got {self.nx}x{self.ny}")
        bounds = (self.x_min, self.x_max, self.y_min, self.y_max)
        if not all(np.isfinite(b) for b in bounds):
            raise ValueError(f"non-finite grid bounds {bounds}")
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValueError(f"degenerate grid bounds {bounds}")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def dy(self) -> float:
        return (self.y_max - self.y_min) / (self.ny - 1)

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    @property
    def xs(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx)

    @property
    def ys(self) -> np.ndarray:
        return np.linspace(self.y_min, self.y_max, self.ny)

    def meshgrid(self) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinates as (ny, nx) arrays X, Y."""
        return np.meshgrid(self.xs, self.ys)

    @property
    def shape(self) -> tuple[int, int]:
        """Array shape (ny, nx) of fields sampled on this grid."""
        return (self.ny, self.nx)


def make_grid(nx: int, ny: int, bounds: tuple[float, float, float, float]) -> Grid2D:
    """Build a grid from node counts and (x_min, x_max, y_min, y_max)."""
    x_min, x_max, y_min, y_max = (float(b) for b in bounds)
    return Grid2D(int(nx), int(ny), x_min, x_max, y_min, y_max)


def _as_field_values(grid: Grid2D, values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size != grid.nx * grid.ny:
        raise ValueError(f"field has {arr.size} values, grid wants {grid.nx * grid.ny}")
    arr = np.ascontiguousarray(arr.reshape(grid.ny, grid.nx))
    if not np.all(np.isfinite(arr)):
        raise ValueError("field contains non-finite values")
    return arr


@dataclass(frozen=True, eq=False)
class ScalarField2D:
    """A real function sampled on a grid; values stored as a (ny, nx) array.

    Immutable: the value array is marked read-only at construction, and all
    entries are required to be finite.
    """

    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        arr = _as_field_values(self.grid, self.values)
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    def allclose(self, other: "ScalarField2D", rtol=1e-12, atol=1e-12) -> bool:
        return self.grid == other.grid and np.allclose(self.values, other.values, rtol=rtol, atol=atol)

    def equals(self, other: "ScalarField2D") -> bool:
        """Bit-exact equality."""
        return self.grid == other.grid and np.array_equal(self.values, other.values)


def zero_field(grid: Grid2D) -> ScalarField2D:
    return ScalarField2D(grid, np.zeros(grid.shape))


def field_from_function(grid: Grid2D, fn) -> ScalarField2D:
    """Sample fn(X, Y) (vectorized over coordinate arrays) on the grid."""
    X, Y = grid.meshgrid()
    return ScalarField2D(grid, np.asarray(fn(X, Y), dtype=np.float64))


def sample_bilinear(f: ScalarField2D, x, y):
    """Bilinear interpolation of a field at points (x, y), clamped to the grid."""
    g = f.grid
    fx = np.clip((np.asarray(x, dtype=float) - g.x_min) / g.dx, 0.0, g.nx - 1.0)
    fy = np.clip((np.asarray(y, dtype=float) - g.y_min) / g.dy, 0.0, g.ny - 1.0)
    i0 = np.minimum(fx.astype(np.int64), g.nx - 2)
    j0 = np.minimum(fy.astype(np.int64), g.ny - 2)
    tx = fx - i0
    ty = fy - j0
    v = f.values
    return ((1 - tx) * (1 - ty) * v[j0, i0]
            + tx * (1 - ty) * v[j0, i0 + 1]
            + (1 - tx) * ty * v[j0 + 1, i0]
            + tx * ty * v[j0 + 1, i0 + 1])


@dataclass(frozen=True, eq=False)
class WavePair:
    """Wave state [u, u_t] at one instant; element of the energy space."""

    u: ScalarField2D
    ut: ScalarField2D

    def __post_init__(self):
        if self.u.grid != self.ut.grid:
            raise ValueError("u and u_t must share a grid")

    @property
    def grid(self) -> Grid2D:
        return self.u.grid


def zero_pair(grid: Grid2D) -> WavePair:
    return WavePair(zero_field(grid), zero_field(grid))


def pair_add(a: WavePair, b: WavePair) -> WavePair:
    if a.grid != b.grid:
        raise ValueError("pairs live on different grids")
    return WavePair(ScalarField2D(a.grid, a.u.values + b.u.values),
                    ScalarField2D(a.grid, a.ut.values + b.ut.values))


def pair_sub(a: WavePair, b: WavePair) -> WavePair:
    if a.grid != b.grid:
        raise ValueError("pairs live on different grids")
    return WavePair(ScalarField2D(a.grid, a.u.values - b.u.values),
                    ScalarField2D(a.grid, a.ut.values - b.ut.values))


def pair_scale(a: WavePair, s: float) -> WavePair:
    return WavePair(ScalarField2D(a.grid, s * a.u.values),
                    ScalarField2D(a.grid, s * a.ut.values))


def boundary_sensors(grid: Grid2D) -> np.ndarray:
    """Flat indices of all boundary nodes, counterclockwise from (x_min, y_min).

    Corners appear exactly once; the walk is bottom row left-to-right, right
    column upward, top row right-to-left, left column downward.
    """
    nx, ny = grid.nx, grid.ny
    bottom = np.arange(nx)
    right = (np.arange(1, ny) * nx) + (nx - 1)
    top = (ny - 1) * nx + np.arange(nx - 2, -1, -1)
    left = np.arange(ny - 2, 0, -1) * nx
    return np.concatenate([bottom, right, top, left]).astype(np.int64)


@dataclass(frozen=True, eq=False)
class BoundaryTrace:
    """Time series of wave values at the boundary sensor nodes.

    values[k, s] is the wave at time k*dt at sensor s; sensors are flat node
    indices into the associated grid, in the canonical counterclockwise order.
    """

    nt: int
    dt: float
    sensors: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        sensors = np.ascontiguousarray(np.asarray(self.sensors, dtype=np.int64))
        values = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        if values.shape != (self.nt, sensors.size):
            raise ValueError(f"trace shape {values.shape} != (nt, n_sensors) = ({self.nt}, {sensors.size})")
        if not (self.dt > 0 and np.isfinite(self.dt)):
            raise ValueError(f"bad time step {self.dt}")
        if not np.all(np.isfinite(values)):
            raise ValueError("trace contains non-finite values")
        sensors.flags.writeable = False
        values.flags.writeable = False
        object.__setattr__(self, "sensors", sensors)
        object.__setattr__(self, "values", values)

    @property
    def duration(self) -> float:
        return (self.nt - 1) * self.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.nt) * self.dt


# ---------------------------------------------------------------------------
# Binary file I/O
# ---------------------------------------------------------------------------

_FIELD_HEADER = struct.Struct("<4sII4d")   # magic, nx, ny, x_min, x_max, y_min, y_max
_TRACE_HEADER = struct.Struct("<4sIId")    # magic, nt, n_sensors, dt


def write_field(f: ScalarField2D, path) -> None:
    """Write a field: "TATF", uint32 nx, ny, four float64 bounds, then the
    nx*ny float64 payload row-major (y slow). All little-endian.
    """
    g = f.grid
    header = _FIELD_HEADER.pack(FIELD_MAGIC, g.nx, g.ny, g.x_min, g.x_max, g.y_min, g.y_max)
    payload = f.values.astype("<f8", copy=False).tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def read_field(path) -> ScalarField2D:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _FIELD_HEADER.size:
        raise FieldFormatError(f"{path}: truncated header")
    magic, nx, ny, x_min, x_max, y_min, y_max = _FIELD_HEADER.unpack_from(raw)
    if magic != FIELD_MAGIC:
        raise FieldFormatError(f"{path}: bad magic {magic!r}")
    payload = raw[_FIELD_HEADER.size:]
    if len(payload) != 8 * nx * ny:
        raise FieldFormatError(f"{path}: payload holds {len(payload) // 8} values, header says {nx * ny}")
    values = np.frombuffer(payload, dtype="<f8").reshape(ny, nx)
    if not np.all(np.isfinite(values)):
        raise FieldFormatError(f"{path}: non-finite payload")
    try:
        grid = Grid2D(nx, ny, x_min, x_max, y_min, y_max)
    except ValueError as e:
        raise FieldFormatError(f"{path}: {e}") from e
    return ScalarField2D(grid, values)


def write_trace(trace: BoundaryTrace, path) -> None:
    """Write a trace: "TATT", uint32 nt, sensor count, float64 dt, then the
    value matrix time-major. Sensor geometry is not stored; readers rebuild
    it from the grid.
    """
    header = _TRACE_HEADER.pack(TRACE_MAGIC, trace.nt, trace.sensors.size, trace.dt)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(trace.values.astype("<f8", copy=False).tobytes())


def read_trace(path, grid: Grid2D) -> BoundaryTrace:
    """Read a trace written by `write_trace`; sensor indices are rebuilt from
    the grid and must match the stored sensor count.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _TRACE_HEADER.size:
        raise FieldFormatError(f"{path}: truncated header")
    magic, nt, ns, dt = _TRACE_HEADER.unpack_from(raw)
    if magic != TRACE_MAGIC:
        raise FieldFormatError(f"{path}: bad magic {magic!r}")
    payload = raw[_TRACE_HEADER.size:]
    if len(payload) != 8 * nt * ns:
        raise FieldFormatError(f"{path}: payload holds {len(payload) // 8} values, header says {nt * ns}")
    sensors = boundary_sensors(grid)
    if sensors.size != ns:
        raise FieldFormatError(f"{path}: {ns} sensors in file, grid has {sensors.size} boundary nodes")
    values = np.frombuffer(payload, dtype="<f8").reshape(nt, ns)
    if not np.all(np.isfinite(values)):
        raise FieldFormatError(f"{path}: non-finite payload")
    return BoundaryTrace(nt, dt, sensors, values)
