"""Grids, scalar fields, discrete L2 machinery, and snapshot I/O.

Fields live on node-centered rectangular grids that include the boundary
ring; homogeneous Dirichlet data is represented by a ring of exact zeros.
Arrays are laid out row-major with the y index outermost: ``values[j, i]``
samples the point ``(x_i, y_j)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Grid",
    "Field",
    "Trajectory",
    "GridMismatchError",
    "NonFiniteFieldError",
    "SnapshotFormatError",
    "zeros",
    "from_function",
    "is_dirichlet",
    "l2_norm",
    "inner_product",
    "write_snapshot",
    "read_snapshot",
]

SNAPSHOT_MAGIC = "QGF1"


class GridMismatchError(ValueError):
    """Operands live on different or incompatible grids."""


class NonFiniteFieldError(ValueError):
    """A field contains NaN or Inf values."""


class SnapshotFormatError(ValueError):
    """A snapshot file does not follow the QGF1 layout."""


@dataclass(frozen=True)
class Grid:
    """Node-centered rectangular mesh covering [0, lx] x [0, ly].

    ``nx``/``ny`` count nodes including both boundary nodes, so the
    spacings are ``lx/(nx-1)`` and ``ly/(ny-1)``.
    """

    nx: int
    ny: int
    lx: float = 1.0
    ly: float = 1.0

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise ValueError(f"grid needs at least 3 nodes per direction, got {self.nx}x{self.ny}")
        if not (self.lx > 0.0 and self.ly > 0.0):
            raise ValueError("domain extents must be positive")

    @property
    def dx(self) -> float:
        return self.lx / (self.nx - 1)

    @property
    def dy(self) -> float:
        return self.ly / (self.ny - 1)

    @property
    def area(self) -> float:
        return self.lx * self.ly

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Return (X, Y) node coordinate arrays of shape (ny, nx)."""
        x = np.linspace(0.0, self.lx, self.nx)
        y = np.linspace(0.0, self.ly, self.ny)
        return np.meshgrid(x, y)


@dataclass(frozen=True, eq=False)
class Field:
    """A real scalar sampled on a Grid. Treated as immutable once built."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != self.grid.shape:
            raise ValueError(f"values shape {v.shape} does not match grid shape {self.grid.shape}")
        object.__setattr__(self, "values", v)

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())


def zeros(grid: Grid) -> Field:
    return Field(grid, np.zeros(grid.shape))


def from_function(grid: Grid, fn) -> Field:
    """Sample ``fn(x, y)`` on the nodes; the boundary ring is zeroed."""
    X, Y = grid.coords()
    v = np.asarray(fn(X, Y), dtype=np.float64)
    out = np.zeros(grid.shape)
    out[1:-1, 1:-1] = v[1:-1, 1:-1]
    return Field(grid, out)


def is_dirichlet(f: Field) -> bool:
    v = f.values
    return not (v[0, :].any() or v[-1, :].any() or v[:, 0].any() or v[:, -1].any())


def require_same_grid(f: Field, g: Field) -> None:
    if f.grid != g.grid:
        raise GridMismatchError(f"fields live on different grids: {f.grid} vs {g.grid}")


def _require_finite(f: Field) -> None:
    if not np.isfinite(f.values).all():
        raise NonFiniteFieldError("field contains non-finite values")


def l2_norm(f: Field) -> float:
    """Discrete L2 norm sqrt(sum f^2 dx dy) over all nodes."""
    _require_finite(f)
    v = f.values
    return float(np.sqrt(np.sum(v * v) * f.grid.cell_area))


def inner_product(f: Field, g: Field) -> float:
    """Discrete L2 inner product sum(f g) dx dy."""
    require_same_grid(f, g)
    _require_finite(f)
    _require_finite(g)
    return float(np.sum(f.values * g.values) * f.grid.cell_area)


@dataclass
class Trajectory:
    """Stored snapshots plus per-step scalar diagnostics of one run.

    ``times`` are the snapshot times (strictly increasing, one Field
    each); ``diagnostics`` maps column name to a per-step array and
    always carries key ``"t"``. ``sigma_snapshots`` records the closure
    field at the stored times when a run used one.
    """

    grid: Grid
    times: np.ndarray
    snapshots: list
    diagnostics: dict
    sigma_snapshots: list | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        if len(self.snapshots) != self.times.size:
            raise ValueError("one snapshot required per stored time")
        if self.times.size > 1 and not (np.diff(self.times) > 0).all():
            raise ValueError("snapshot times must be strictly increasing")
        for f in self.snapshots:
            if f.grid != self.grid:
                raise GridMismatchError("all snapshots must share the trajectory grid")
        if self.sigma_snapshots is not None and len(self.sigma_snapshots) != self.times.size:
            raise ValueError("one closure sample required per stored time")
        if "t" not in self.diagnostics:
            raise ValueError("diagnostics must include a 't' column")


def write_snapshot(f: Field, time: float, path) -> None:
    """Write a field in the QGF1 snapshot format.

    One ASCII header line ``QGF1 nx ny lx ly time`` followed by the
    nx*ny node values as little-endian float64, row-major with y
    outermost. Round-trips bit-exactly.
    """
    g = f.grid
    header = f"{SNAPSHOT_MAGIC} {g.nx} {g.ny} {g.lx!r} {g.ly!r} {float(time)!r}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def read_snapshot(path) -> tuple[Field, float]:
    """Read a QGF1 snapshot; returns (field, time)."""
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii", errors="replace").strip()
        parts = header.split()
        if len(parts) != 6 or parts[0] != SNAPSHOT_MAGIC:
            raise SnapshotFormatError(f"bad snapshot header in {path}: {header!r}")
        nx, ny = int(parts[1]), int(parts[2])
        lx, ly, time = float(parts[3]), float(parts[4]), float(parts[5])
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != nx * ny:
        raise SnapshotFormatError(f"expected {nx * ny} values in {path}, found {data.size}")
    grid = Grid(nx, ny, lx, ly)
    return Field(grid, data.reshape(ny, nx).copy()), time
