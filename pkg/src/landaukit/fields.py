"""Velocity grids, distribution snapshots, parabolic cylinders and scaling.

Arrays are stored with shape ``(n, n, n)`` indexed ``[ix, iy, iz]``.  The
binary snapshot layout lists values with ``ix`` fastest, which is the
Fortran-order flattening of that array.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from ._accel import trilinear_sample
from .errors import (
    ConfigError,
    DomainError,
    MagicMismatchError,
    TruncatedPayloadError,
    VersionMismatchError,
    WindowError,
)

SNAPSHOT_MAGIC = b"LNDF"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sIIdd")


@dataclass(frozen=True)
class VelocityGrid:
    """Uniform grid over ``[-L, L)**3`` with ``n`` nodes per axis."""

    n: int
    half_extent: float

    def __post_init__(self) -> None:
        if int(self.n) != self.n or self.n < 8:
            raise ConfigError(f"grid needs an integer n >= 8 points per axis, got {self.n}")
        if not self.half_extent > 0.0:
            raise ConfigError(f"grid half extent must be positive, got {self.half_extent}")

    @property
    def h(self) -> float:
        return 2.0 * self.half_extent / self.n

    @property
    def cell_volume(self) -> float:
        return self.h**3

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n)

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.half_extent + self.h * np.arange(self.n)

    @cached_property
    def mesh(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(np.meshgrid(self.axis, self.axis, self.axis, indexing="ij"))

    @cached_property
    def points(self) -> np.ndarray:
        """Node coordinates as an array of shape ``(n**3, 3)`` in C order."""
        return np.stack([m.ravel() for m in self.mesh], axis=1)

    def radius(self, center: Sequence[float] = (0.0, 0.0, 0.0)) -> np.ndarray:
        vx, vy, vz = self.mesh
        c = np.asarray(center, dtype=float)
        return np.sqrt((vx - c[0]) ** 2 + (vy - c[1]) ** 2 + (vz - c[2]) ** 2)

    def index_to_coordinate(self, index: np.ndarray) -> np.ndarray:
        return -self.half_extent + self.h * np.asarray(index, dtype=float)

    def coordinate_to_index(self, coord: np.ndarray) -> np.ndarray:
        return (np.asarray(coord, dtype=float) + self.half_extent) / self.h


@dataclass(frozen=True, eq=False)
class DistributionField:
    """Nonnegative samples of ``f(t, .)`` on a velocity grid; immutable."""

    grid: VelocityGrid
    time: float
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float, copy=True)
        if values.shape != self.grid.shape:
            raise ConfigError(f"values shape {values.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(values)):
            raise DomainError("distribution values must be finite")
        if np.any(values < 0.0):
            raise DomainError(f"distribution values must be >= 0 (min {values.min():.3e})")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def mass(self) -> float:
        return float(self.values.sum() * self.grid.cell_volume)

    def with_values(self, values: np.ndarray, time: float | None = None) -> DistributionField:
        return DistributionField(self.grid, self.time if time is None else time, values)

    def sample(self, points: np.ndarray) -> np.ndarray:
        """Trilinear interpolation at arbitrary points, zero outside the node box."""
        return trilinear_sample(self.values, -self.grid.half_extent, self.grid.h, points)


@dataclass(frozen=True)
class ParabolicCylinder:
    """``Q_r(t0, v0) = (t0 - r**2, t0] x B_r(v0)``."""

    t0: float
    v0: tuple[float, float, float]
    r: float

    def __post_init__(self) -> None:
        v0 = tuple(float(x) for x in np.asarray(self.v0, dtype=float).reshape(3))
        object.__setattr__(self, "v0", v0)
        if not self.r > 0.0:
            raise ConfigError(f"cylinder radius must be positive, got {self.r}")

    @property
    def t_start(self) -> float:
        return self.t0 - self.r**2

    def contains_time(self, t: np.ndarray | float) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return (t > self.t_start) & (t <= self.t0)

    def contains(self, t: float, v: Sequence[float]) -> bool:
        dv = np.asarray(v, dtype=float) - np.asarray(self.v0)
        return bool(self.contains_time(t)) and float(np.linalg.norm(dv)) < self.r

    def intersects(self, other: ParabolicCylinder) -> bool:
        """Exact test: time intervals overlap and the open balls overlap."""
        times_overlap = self.t_start < other.t0 and other.t_start < self.t0
        dist = float(np.linalg.norm(np.subtract(self.v0, other.v0)))
        return times_overlap and dist < self.r + other.r

    def contains_cylinder(self, other: ParabolicCylinder) -> bool:
        dist = float(np.linalg.norm(np.subtract(self.v0, other.v0)))
        return self.t_start <= other.t_start and other.t0 <= self.t0 and dist + other.r <= self.r

    def scaled(self, factor: float) -> ParabolicCylinder:
        """Same top time and center, radius multiplied by ``factor``."""
        return ParabolicCylinder(self.t0, self.v0, factor * self.r)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Snapshots on a shared grid with strictly increasing, uniformly spaced times."""

    snapshots: tuple[DistributionField, ...]
    save_interval: float = field(default=float("nan"))

    def __post_init__(self) -> None:
        snaps = tuple(self.snapshots)
        object.__setattr__(self, "snapshots", snaps)
        if not snaps:
            if not math.isfinite(self.save_interval):
                object.__setattr__(self, "save_interval", 1.0)
            return
        grid = snaps[0].grid
        if any(s.grid != grid for s in snaps):
            raise ConfigError("trajectory snapshots must share one grid")
        times = np.array([s.time for s in snaps])
        steps = np.diff(times)
        if np.any(steps <= 0.0):
            raise ConfigError("trajectory times must be strictly increasing")
        if len(snaps) > 1:
            stride = float(steps.mean())
            if np.any(np.abs(steps - stride) > 1e-6 * stride):
                raise ConfigError("trajectory save stride must be uniform")
            if not math.isfinite(self.save_interval):
                object.__setattr__(self, "save_interval", stride)
        elif not math.isfinite(self.save_interval):
            object.__setattr__(self, "save_interval", 1.0)

    def __len__(self) -> int:
        return len(self.snapshots)

    def __iter__(self) -> Iterator[DistributionField]:
        return iter(self.snapshots)

    def __getitem__(self, i: int) -> DistributionField:
        return self.snapshots[i]

    @property
    def grid(self) -> VelocityGrid:
        if not self.snapshots:
            raise DomainError("empty trajectory has no grid")
        return self.snapshots[0].grid

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.snapshots])

    def at_time(self, t: float) -> DistributionField:
        """Linear interpolation in time between the bracketing snapshots."""
        times = self.times
        tol = 1e-9 * max(self.save_interval, 1e-300)
        if not (times[0] - tol <= t <= times[-1] + tol):
            raise WindowError(f"time {t} outside trajectory span [{times[0]}, {times[-1]}]")
        k = int(np.argmin(np.abs(times - t)))
        if abs(times[k] - t) <= tol:
            return self.snapshots[k]
        hi = int(np.searchsorted(times, t))
        lo = hi - 1
        w = (t - times[lo]) / (times[hi] - times[lo])
        values = (1.0 - w) * self.snapshots[lo].values + w * self.snapshots[hi].values
        return DistributionField(self.grid, t, values)


def as_trajectory(obj: DistributionField | Trajectory) -> Trajectory:
    if isinstance(obj, Trajectory):
        return obj
    return Trajectory((obj,))


# --------------------------------------------------------------------------
# scaling transform


def scaled_solution(
    traj: Trajectory,
    t0: float,
    v0: Sequence[float],
    eps: float,
    n_per_axis: int | None = None,
    half_extent: float | None = None,
    t_window: float | None = None,
    allow_outside: bool = False,
) -> Trajectory:
    """Zoomed trajectory ``f_eps(t, v) = eps**2 f(t0 + eps**2 t, v0 + eps v)``.

    The zoomed grid has ``n_per_axis`` nodes over ``[-half_extent, half_extent)**3``
    (both default to the source grid).  Snapshots are produced at
    ``t = 0, -dt', -2 dt', ...`` down to ``-t_window`` with ``dt'`` the source
    save interval divided by ``eps**2``; by default the window reaches back to
    the first source snapshot.  With ``allow_outside`` the window may leave
    the source box, where ``f`` is taken to vanish.
    """
    if not (0.0 < eps <= 1.0):
        raise DomainError(f"eps must lie in (0, 1], got {eps}")
    src = traj.grid
    n_new = src.n if n_per_axis is None else int(n_per_axis)
    lam = src.half_extent if half_extent is None else float(half_extent)
    grid = VelocityGrid(n_new, lam)
    center = np.asarray(v0, dtype=float).reshape(3)

    lo_needed = center - eps * lam
    hi_needed = center + eps * (lam - grid.h)
    bad = [
        f"axis {a}: [{lo_needed[a]:.6g}, {hi_needed[a]:.6g}] not inside [{-src.half_extent:.6g}, {src.half_extent:.6g}]"
        for a in range(3)
        if lo_needed[a] < -src.half_extent - 1e-12 or hi_needed[a] > src.half_extent + 1e-12
    ]
    if bad and not allow_outside:
        raise WindowError("scaled window leaves the source grid: " + "; ".join(bad))

    times = traj.times
    tol = 1e-9 * traj.save_interval
    if t0 > times[-1] + tol or t0 < times[0] - tol:
        raise WindowError(f"t0={t0} outside trajectory span [{times[0]}, {times[-1]}]")
    dt_new = traj.save_interval / eps**2
    if t_window is None:
        t_window = (t0 - times[0]) / eps**2
    if t0 - eps**2 * t_window < times[0] - tol:
        raise WindowError(
            f"time window reaches t={t0 - eps**2 * t_window:.6g} before the first snapshot t={times[0]:.6g}"
        )
    count = int(math.floor(t_window / dt_new + 1e-9)) + 1

    targets = center[None, :] + eps * grid.points
    gather = _node_gather(src, targets)
    snaps = []
    for k in range(count - 1, -1, -1):
        s = -k * dt_new
        source = traj.at_time(t0 + eps**2 * s)
        if gather is None:
            picked = source.sample(targets)
        else:
            idx, inside = gather
            picked = np.zeros(targets.shape[0])
            picked[inside] = source.values[idx[inside, 0], idx[inside, 1], idx[inside, 2]]
        vals = eps**2 * picked.reshape(grid.shape)
        snaps.append(DistributionField(grid, s, np.maximum(vals, 0.0)))
    return Trajectory(tuple(snaps), dt_new)


def _node_gather(grid: VelocityGrid, targets: np.ndarray) -> tuple[np.ndarray, np.ndarray] | None:
    """Node indices when every target sits on a node (up to round-off), else ``None``.

    Gathering instead of interpolating keeps aligned zooms, ``eps = 1`` in
    particular, bit-identical to the source values.
    """
    pos = (targets + grid.half_extent) / grid.h
    idx = np.rint(pos)
    if np.max(np.abs(pos - idx), initial=0.0) > 1e-9:
        return None
    idx = idx.astype(np.int64)
    inside = np.all((idx >= 0) & (idx < grid.n), axis=1)
    return idx, inside


# --------------------------------------------------------------------------
# cylinder restriction


@dataclass(frozen=True, eq=False)
class CylinderView:
    """Nodes and snapshot indices of a trajectory inside a parabolic cylinder."""

    cylinder: ParabolicCylinder
    spatial_mask: np.ndarray
    time_indices: np.ndarray
    cell_volume: float
    time_weight: float

    @property
    def is_empty(self) -> bool:
        return not self.spatial_mask.any() or self.time_indices.size == 0

    @property
    def weight_sum(self) -> float:
        return float(self.spatial_mask.sum() * self.cell_volume * self.time_indices.size * self.time_weight)

    def apply(self, field_: DistributionField) -> DistributionField:
        """Zero the field outside the spatial mask."""
        return field_.with_values(np.where(self.spatial_mask, field_.values, 0.0))

    def integrate(self, traj: Trajectory, integrand) -> float:
        """``sum_t dt sum_v h**3 integrand(snapshot)`` over the cylinder."""
        total = 0.0
        for k in self.time_indices:
            total += float(np.sum(np.asarray(integrand(traj[int(k)]))[self.spatial_mask]))
        return total * self.cell_volume * self.time_weight

    def sup_in_time(self, traj: Trajectory, integrand) -> float:
        """``max_t sum_v h**3 integrand(snapshot)`` over the cylinder; 0 when empty."""
        best = 0.0
        for k in self.time_indices:
            val = float(np.sum(np.asarray(integrand(traj[int(k)]))[self.spatial_mask])) * self.cell_volume
            best = max(best, val)
        return best


def cylinder_restrict(obj: DistributionField | Trajectory, cyl: ParabolicCylinder) -> CylinderView:
    """Node mask ``|v - v0| < r`` and snapshots with ``t`` in ``(t0 - r**2, t0]``.

    A single field gets unit time weight; trajectories use the save interval.
    """
    traj = as_trajectory(obj)
    grid = traj.grid
    mask = grid.radius(cyl.v0) < cyl.r
    tol = 1e-9 * traj.save_interval
    times = traj.times
    in_time = (times > cyl.t_start + tol) & (times <= cyl.t0 + tol)
    weight = 1.0 if isinstance(obj, DistributionField) else traj.save_interval
    return CylinderView(cyl, mask, np.nonzero(in_time)[0], grid.cell_volume, weight)


def require_window(view: CylinderView, traj: Trajectory, what: str) -> None:
    """Raise when a cylinder is not covered by the trajectory's grid or time span."""
    cyl = view.cylinder
    grid = traj.grid
    c = np.asarray(cyl.v0)
    if np.any(c - cyl.r < -grid.half_extent - 1e-12) or np.any(c + cyl.r > grid.half_extent + 1e-12):
        raise WindowError(f"{what}: ball of radius {cyl.r} around {tuple(c)} leaves the grid")
    times = traj.times
    tol = 1e-9 * traj.save_interval
    if cyl.t0 > times[-1] + tol or cyl.t_start < times[0] - traj.save_interval - tol:
        raise WindowError(
            f"{what}: time window ({cyl.t_start:.6g}, {cyl.t0:.6g}] not covered by [{times[0]:.6g}, {times[-1]:.6g}]"
        )


# --------------------------------------------------------------------------
# binary snapshot format


def field_to_bytes(field_: DistributionField) -> bytes:
    grid = field_.grid
    header = _HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, grid.n, grid.half_extent, field_.time)
    payload = np.asarray(field_.values, dtype="<f8").ravel(order="F").tobytes()
    return header + payload


def field_from_bytes(data: bytes) -> DistributionField:
    if len(data) < 4 or data[:4] != SNAPSHOT_MAGIC:
        raise MagicMismatchError(f"expected magic {SNAPSHOT_MAGIC!r}, found {bytes(data[:4])!r}")
    if len(data) < _HEADER.size:
        raise TruncatedPayloadError(f"header needs {_HEADER.size} bytes, got {len(data)}")
    _, version, n, half_extent, time = _HEADER.unpack_from(data)
    if version != SNAPSHOT_VERSION:
        raise VersionMismatchError(f"unsupported snapshot version {version} (expected {SNAPSHOT_VERSION})")
    need = _HEADER.size + 8 * n**3
    if len(data) < need:
        raise TruncatedPayloadError(f"payload needs {need} bytes, got {len(data)}")
    values = np.frombuffer(data, dtype="<f8", count=n**3, offset=_HEADER.size)
    return DistributionField(VelocityGrid(n, half_extent), time, values.reshape((n, n, n), order="F"))


def write_snapshot(path: str | Path, field_: DistributionField) -> None:
    Path(path).write_bytes(field_to_bytes(field_))


def read_snapshot(path: str | Path) -> DistributionField:
    return field_from_bytes(Path(path).read_bytes())
