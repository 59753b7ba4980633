"""Time integration of the mollified Landau equation with added viscosity.

Each step freezes ``A = a_n * f`` at the start of the step and solves

    (I - dt L) f_new = f + dt (Q(f) - L f),   L u = -D^T(A D u) + nu Lap u,

with conjugate gradients.  ``Q`` is the conservative pair-form operator of
:mod:`landaukit.collision`.  ``L`` is symmetric negative semidefinite and
annihilates constants, so the linear solve conserves mass.  A discrete
Maxwellian with ``nu = 0`` is a fixed point of the update, because then
``Q(f) = 0`` and the right-hand side equals ``(I - dt L) f``.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import time as _time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np
from scipy.signal import fftconvolve
from scipy.sparse.linalg import LinearOperator, cg

from .collision import (
    check_resolution,
    div,
    flux_parts,
    grad,
    matvec,
    pair_flux,
    plan_for,
    regularization_for_grid,
)
from .errors import ConfigError, NumericalError
from .fields import DistributionField, Trajectory, VelocityGrid, read_snapshot
from .kernel import CUTOFF, KernelModel

try:  # Python >= 3.11
    import tomllib
except ImportError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

logger = logging.getLogger(__name__)

INIT_KINDS = ("maxwellian", "bimodal", "bump", "ring", "zero", "snapshot")


# --------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class RunConfig:
    """Everything a run depends on; hashing the canonical form identifies a run."""

    n: int = 32
    half_extent: float = 6.0
    gamma: float = -3.0
    n_reg: float | None = None
    delta: float = 0.5
    viscosity: float = 0.0
    dt: float = 1e-3
    t_end: float = 0.5
    save_stride: int = 50
    init_kind: str = "maxwellian"
    init_params: Mapping[str, Any] = field(default_factory=dict)
    init_index: float | None = 1000.0
    solver_rtol: float = 1e-12
    renorm_band: float = 1e-6
    entropy_slack: float = 1e-6

    def __post_init__(self) -> None:
        checks = {
            "grid.n": int(self.n) == self.n and self.n >= 8,
            "grid.L": self.half_extent > 0.0,
            "gamma": -3.0 <= self.gamma < -2.0,
            "n_reg": self.n_reg is None or self.n_reg >= 1.0,
            "delta": 0.0 < self.delta < 1.0,
            "viscosity": self.viscosity >= 0.0,
            "dt": self.dt >= 0.0 and math.isfinite(self.dt),
            "t_end": self.t_end >= 0.0,
            "save_stride": int(self.save_stride) == self.save_stride and self.save_stride >= 1,
            "init.kind": self.init_kind in INIT_KINDS,
            "init.index": self.init_index is None or self.init_index >= 1.0,
            "solver_rtol": 0.0 < self.solver_rtol < 1.0,
        }
        bad = [k for k, ok in checks.items() if not ok]
        if bad:
            raise ConfigError(f"invalid value for key {bad[0]!r}")
        if self.t_end > 0.0 and self.dt == 0.0:
            raise ConfigError("invalid value for key 'dt': must be positive when t_end > 0")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "save_stride", int(self.save_stride))
        object.__setattr__(self, "init_params", dict(self.init_params))

    @property
    def grid(self) -> VelocityGrid:
        return VelocityGrid(self.n, self.half_extent)

    @property
    def model(self) -> KernelModel:
        n_reg = regularization_for_grid(self.grid) if self.n_reg is None else self.n_reg
        return KernelModel(self.gamma, self.delta, n_reg)

    @property
    def n_steps(self) -> int:
        if self.t_end == 0.0:
            return 0
        return int(round(self.t_end / self.dt))

    def canonical(self) -> dict[str, Any]:
        """Flat, JSON-ready mapping using the file keys."""
        flat = {_FIELD_TO_KEY.get(f.name, f.name): getattr(self, f.name) for f in dataclasses.fields(self)}
        params = flat.pop("init.params")
        for k in sorted(params):
            flat[f"init.params.{k}"] = params[k]
        return flat

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> RunConfig:
        flat = _flatten(data)
        kwargs: dict[str, Any] = {}
        params: dict[str, Any] = {}
        for key, value in flat.items():
            if key.startswith("init.params."):
                params[key[len("init.params.") :]] = value
            elif key in _KEY_TO_FIELD:
                kwargs[_KEY_TO_FIELD[key]] = value
            else:
                raise ConfigError(f"unknown config key {key!r}")
        for key, value in kwargs.items():
            expected = _FIELD_TYPES[key]
            if value is not None and not isinstance(value, expected):
                raise ConfigError(f"invalid type for key {_FIELD_TO_KEY.get(key, key)!r}: {value!r}")
        return cls(**kwargs, init_params=params)

    @classmethod
    def from_file(cls, path: str | Path) -> RunConfig:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config parse error in {path}: {exc}") from exc
        return cls.from_mapping(data)


_FIELD_TO_KEY = {
    "n": "grid.n",
    "half_extent": "grid.L",
    "init_kind": "init.kind",
    "init_params": "init.params",
    "init_index": "init.index",
}
_KEY_TO_FIELD = {_FIELD_TO_KEY.get(f.name, f.name): f.name for f in dataclasses.fields(RunConfig)}
_KEY_TO_FIELD.pop("init.params")
_FIELD_TYPES: dict[str, tuple[type, ...]] = {
    "n": (int,),
    "save_stride": (int,),
    "init_kind": (str,),
}
for _f in dataclasses.fields(RunConfig):
    _FIELD_TYPES.setdefault(_f.name, (int, float))


def _flatten(data: Mapping[str, Any], prefix: str = "") -> dict[str, Any]:
    out: dict[str, Any] = {}
    for key, value in data.items():
        full = f"{prefix}{key}"
        if isinstance(value, Mapping):
            out.update(_flatten(value, full + "."))
        else:
            out[full] = value
    return out


# --------------------------------------------------------------------------
# initial data


def maxwellian(grid: VelocityGrid, mass: float = 1.0, temperature: float = 1.0, drift=(0.0, 0.0, 0.0)) -> np.ndarray:
    """``mass (2 pi T)**(-3/2) exp(-|v - u|**2 / (2T))`` at the grid nodes."""
    u = np.asarray(drift, dtype=float)
    r2 = sum((m - c) ** 2 for m, c in zip(grid.mesh, u))
    return mass * (2.0 * math.pi * temperature) ** -1.5 * np.exp(-r2 / (2.0 * temperature))


def analytic_initial(config: RunConfig) -> Callable[[VelocityGrid], np.ndarray] | DistributionField:
    """Unregularized initial datum described by ``init.kind`` and ``init.params``."""
    p = dict(config.init_params)
    kind = config.init_kind

    def take(name: str, default):
        return p.pop(name, default)

    if kind == "maxwellian":
        mass, temp, drift = take("mass", 1.0), take("temperature", 1.0), take("drift", [0.0, 0.0, 0.0])
        fn = lambda g: maxwellian(g, mass, temp, drift)  # noqa: E731
    elif kind == "bimodal":
        mass, temp, sep = take("mass", 1.0), take("temperature", 0.5), take("separation", 2.0)
        fn = lambda g: maxwellian(g, mass / 2, temp, (-sep / 2, 0, 0)) + maxwellian(  # noqa: E731
            g, mass / 2, temp, (sep / 2, 0, 0)
        )
    elif kind == "bump":
        amp, radius, center = take("amplitude", 1.0), take("radius", 2.0), take("center", [0.0, 0.0, 0.0])
        fn = lambda g: amp * (1.0 - CUTOFF(g.radius(center) / radius))  # noqa: E731
    elif kind == "ring":
        amp, rho0, width = take("amplitude", 1.0), take("rho0", 1.5), take("width", 0.5)

        def fn(g: VelocityGrid) -> np.ndarray:
            vx, vy, vz = g.mesh
            rho = np.hypot(vx, vy)
            return amp * np.exp(-((rho - rho0) ** 2 + vz**2) / (2.0 * width**2))

    elif kind == "zero":
        fn = lambda g: np.zeros(g.shape)  # noqa: E731
    else:
        path = take("path", None)
        if path is None:
            raise ConfigError("init.kind = 'snapshot' needs init.params.path")
        snap = read_snapshot(path)
        if snap.grid != config.grid:
            raise ConfigError("init.params.path: snapshot grid differs from grid.n / grid.L")
        return snap
    if p:
        raise ConfigError(f"unknown config key 'init.params.{sorted(p)[0]}' for init.kind={kind!r}")
    return fn


def build_initial_data(
    f_in: Callable[[VelocityGrid], np.ndarray] | DistributionField | np.ndarray,
    n: float | None,
    grid: VelocityGrid,
) -> DistributionField:
    """Regularized datum ``zeta_n * (xi_n f_in) + (1/n) (2 pi)**(-3/2) exp(-|v|**2/2)``.

    ``xi_n(v) = xi(v/n)`` is a smooth radial cutoff between radii ``n`` and ``2n``
    and ``zeta_n`` is a mass-normalized bump of radius ``2/n``; on the grid
    the mollifier is normalized by its lattice sum, so it preserves discrete
    mass exactly.  ``n=None`` returns ``f_in`` unchanged.
    """
    if isinstance(f_in, DistributionField):
        values = np.array(f_in.values)
    elif callable(f_in):
        values = np.asarray(f_in(grid), dtype=float)
    else:
        values = np.asarray(f_in, dtype=float)
    if values.shape != grid.shape:
        raise ConfigError(f"initial data shape {values.shape} does not match grid {grid.shape}")
    if np.any(values < 0.0) or not np.all(np.isfinite(values)):
        raise ConfigError("initial data must be finite and nonnegative")
    if n is None:
        return DistributionField(grid, 0.0, values)
    if n < 1.0:
        raise ConfigError(f"regularization index must be >= 1, got {n}")

    truncated = values * (1.0 - CUTOFF(grid.radius() / (2.0 * n)))
    reach = int(math.floor(2.0 / (n * grid.h)))
    if reach >= 1:
        ax = grid.h * np.arange(-reach, reach + 1)
        zx, zy, zz = np.meshgrid(ax, ax, ax, indexing="ij")
        bump = 1.0 - CUTOFF(n * np.sqrt(zx**2 + zy**2 + zz**2) / 2.0)
        bump /= bump.sum()
        smoothed = np.maximum(fftconvolve(truncated, bump, mode="same"), 0.0)
    else:
        smoothed = truncated
    floor = maxwellian(grid, 1.0 / n)
    return DistributionField(grid, 0.0, smoothed + floor)


# --------------------------------------------------------------------------
# stepping


@dataclass(frozen=True)
class StepInfo:
    t: float
    mass: float
    momentum: tuple[float, float, float]
    energy: float
    entropy: float
    renorm_factor: float
    clipped_mass: float
    cg_iterations: int
    cfl: float


def moments(values: np.ndarray, grid: VelocityGrid) -> tuple[float, np.ndarray, float, float]:
    """Discrete mass, momentum, energy ``sum |v|**2 f h**3`` and entropy ``sum f ln f h**3``."""
    dv = grid.cell_volume
    vx, vy, vz = grid.mesh
    mass = float(values.sum() * dv)
    mom = np.array([float((values * m).sum() * dv) for m in (vx, vy, vz)])
    energy = float((values * (vx**2 + vy**2 + vz**2)).sum() * dv)
    pos = values > 0.0
    entropy = float(np.sum(values[pos] * np.log(values[pos])) * dv)
    return mass, mom, energy, entropy


class Stepper:
    """Owns the convolution plan and advances fields by one lagged-coefficient step."""

    def __init__(self, config: RunConfig) -> None:
        self.config = config
        self.grid = config.grid
        self.model = config.model
        check_resolution(self.model, self.grid)
        self.plan = plan_for(self.grid, self.model)

    def _operator(self, matrix: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
        h, nu = self.grid.h, self.config.viscosity
        shape = self.grid.shape

        def apply(u: np.ndarray) -> np.ndarray:
            u = u.reshape(shape)
            out = div(matvec(matrix, grad(u, h)), h)
            if nu:
                out = out + nu * _neumann_laplacian(u, h)
            return out

        return apply

    def step(self, f: DistributionField, dt: float | None = None) -> tuple[DistributionField, StepInfo]:
        dt = self.config.dt if dt is None else dt
        grid = self.grid
        if dt == 0.0:
            mass, mom, energy, entropy = moments(f.values, grid)
            return f, StepInfo(f.time, mass, tuple(mom), energy, entropy, 1.0, 0.0, 0, 0.0)

        parts = flux_parts(f, self.model)
        rhs = div(pair_flux(parts), grid.h)
        operator = self._operator(parts.matrix)
        lagged = operator(f.values)
        if self.config.viscosity:
            rhs = rhs + self.config.viscosity * _neumann_laplacian(f.values, grid.h)
        b = (f.values + dt * (rhs - lagged)).ravel()

        n_iter = 0

        def count(_x: np.ndarray) -> None:
            nonlocal n_iter
            n_iter += 1

        system = LinearOperator((b.size, b.size), matvec=lambda u: u - dt * operator(u).ravel(), dtype=float)
        solution, status = cg(
            system, b, x0=f.values.ravel(), rtol=self.config.solver_rtol, atol=0.0, maxiter=500, callback=count
        )
        if status != 0:
            raise NumericalError(f"conjugate gradients did not converge (status {status}) at t={f.time:.6g}")

        new = solution.reshape(grid.shape)
        before = float(f.values.sum())
        clipped = float(-new[new < 0.0].sum() * grid.cell_volume)
        new = np.maximum(new, 0.0)
        after = float(new.sum())
        factor = before / after if after > 0.0 else 1.0
        if abs(factor - 1.0) > self.config.renorm_band:
            raise NumericalError(
                f"mass renormalization factor {factor:.12g} outside 1 +- {self.config.renorm_band:g} "
                f"at t={f.time:.6g} (clipped mass {clipped:.3e})"
            )
        new = new * factor
        t_new = f.time + dt
        mass, mom, energy, entropy = moments(new, grid)
        amax = float(np.abs(parts.matrix[:3]).max())
        info = StepInfo(t_new, mass, tuple(mom), energy, entropy, factor, clipped, n_iter, dt * amax / grid.h**2)
        return DistributionField(grid, t_new, new), info


def _neumann_laplacian(u: np.ndarray, h: float) -> np.ndarray:
    """Seven-point Laplacian with zero-flux faces; symmetric and mass conserving."""
    out = np.zeros_like(u)
    for axis in range(3):
        d = np.diff(u, axis=axis) / h**2
        pad_lo = [(0, 0)] * 3
        pad_hi = [(0, 0)] * 3
        pad_lo[axis] = (1, 0)
        pad_hi[axis] = (0, 1)
        out += np.pad(d, pad_hi) - np.pad(d, pad_lo)
    return out


def step(f: DistributionField, config: RunConfig) -> DistributionField:
    """Advance ``f`` by ``config.dt``."""
    return Stepper(config).step(f)[0]


# --------------------------------------------------------------------------
# runs


@dataclass(frozen=True, eq=False)
class RunResult:
    trajectory: Trajectory
    log: tuple[StepInfo, ...]
    h_theorem_ok: bool
    max_entropy_increase: float
    wall_seconds: float


def run(config: RunConfig, initial: DistributionField | None = None) -> RunResult:
    """Integrate to ``t_end`` saving every ``save_stride`` steps (and at t = 0)."""
    start = _time.perf_counter()
    stepper = Stepper(config)
    if initial is None:
        initial = build_initial_data(analytic_initial(config), config.init_index, config.grid)
    f = initial
    mass, mom, energy, entropy = moments(f.values, config.grid)
    log = [StepInfo(f.time, mass, tuple(mom), energy, entropy, 1.0, 0.0, 0, 0.0)]
    saves = [f]
    for k in range(1, config.n_steps + 1):
        try:
            f, info = stepper.step(f)
        except NumericalError as exc:
            raise NumericalError(f"step {k}: {exc}") from exc
        log.append(info)
        if k % config.save_stride == 0:
            saves.append(f)
    save_entropy = np.array([log[i * config.save_stride].entropy for i in range(len(saves))])
    increase = float(np.max(np.diff(save_entropy), initial=0.0))
    ok = increase <= config.entropy_slack
    if not ok:
        logger.warning("entropy increased by %.3e between saves (slack %.1e)", increase, config.entropy_slack)
    interval = config.dt * config.save_stride
    return RunResult(Trajectory(tuple(saves), interval), tuple(log), ok, increase, _time.perf_counter() - start)
