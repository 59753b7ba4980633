"""Axisymmetric reduction, long-range interaction bounds and the off-axis criterion."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import integrate
from scipy.interpolate import RegularGridInterpolator

from .collision import plan_for
from .diagnostics import log_plus
from .errors import (
    ConfigError,
    DomainError,
    MagicMismatchError,
    TruncatedPayloadError,
    VersionMismatchError,
    WindowError,
)
from .fields import DistributionField, ParabolicCylinder, Trajectory, VelocityGrid, as_trajectory, cylinder_restrict
from .kernel import KernelModel
from .quadrature import radial_convolution
from .regularity import CertifyResult, degiorgi_certify, eta_dg

C_STAR = 8.0 * math.sqrt(2.0) * math.pi**2
N_ANGLES = 64

AXI_MAGIC = b"LNDA"
AXI_VERSION = 1
_AXI_HEADER = struct.Struct("<4sIII8d")

PointFn = Callable[[np.ndarray], np.ndarray]


def axis_frame(direction: Sequence[float]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Orthonormal ``(e1, e2, omega)`` with ``omega`` along ``direction``."""
    w = np.asarray(direction, dtype=float).reshape(3)
    norm = np.linalg.norm(w)
    if norm == 0.0:
        raise ConfigError("axis direction must be nonzero")
    w = w / norm
    trial = np.eye(3)[int(np.argmin(np.abs(w)))]
    e1 = trial - w * (trial @ w)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(w, e1), w


def cylindrical_coordinates(points: np.ndarray, base: Sequence[float], direction: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """``(|(v - base) x omega|, (v - base) . omega)`` for points of shape ``(..., 3)``."""
    _, _, w = axis_frame(direction)
    rel = np.asarray(points, dtype=float) - np.asarray(base, dtype=float)
    z = rel @ w
    rho = np.linalg.norm(np.cross(rel, w), axis=-1)
    return rho, z


def distance_to_axis(v0: Sequence[float], base: Sequence[float], direction: Sequence[float]) -> float:
    rho, _ = cylindrical_coordinates(np.asarray(v0, dtype=float)[None, :], base, direction)
    return float(rho[0])


@dataclass(frozen=True, eq=False)
class AxisymField:
    """Profile ``F(rho, z)`` on a tensor grid, with the axis ``base + R omega``."""

    base: tuple[float, float, float]
    direction: tuple[float, float, float]
    rho_axis: np.ndarray
    z_axis: np.ndarray
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self) -> None:
        rho = np.array(self.rho_axis, dtype=float)
        z = np.array(self.z_axis, dtype=float)
        vals = np.array(self.values, dtype=float)
        if rho.ndim != 1 or z.ndim != 1 or rho.size < 2 or z.size < 2:
            raise ConfigError("rho and z axes must be 1-D with at least two nodes")
        if rho[0] < 0.0:
            raise ConfigError(f"rho grid must start at rho >= 0, got {rho[0]}")
        if np.any(np.diff(rho) <= 0.0) or np.any(np.diff(z) <= 0.0):
            raise ConfigError("rho and z axes must be strictly increasing")
        if vals.shape != (rho.size, z.size):
            raise ConfigError(f"values shape {vals.shape} does not match axes ({rho.size}, {z.size})")
        _, _, w = axis_frame(self.direction)
        for name, arr in (("rho_axis", rho), ("z_axis", z), ("values", vals)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "base", tuple(float(x) for x in self.base))
        object.__setattr__(self, "direction", tuple(float(x) for x in w))

    @property
    def h_rho(self) -> float:
        return float(self.rho_axis[1] - self.rho_axis[0])

    @property
    def h_z(self) -> float:
        return float(self.z_axis[1] - self.z_axis[0])

    def profile(self, rho: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Bilinear interpolation of ``F``, zero outside the tensor grid."""
        interp = RegularGridInterpolator((self.rho_axis, self.z_axis), self.values, bounds_error=False, fill_value=0.0)
        rho = np.asarray(rho, dtype=float)
        z = np.asarray(z, dtype=float)
        # round-off can push points on the outer nodes just outside the grid
        tol_r, tol_z = 1e-9 * self.h_rho, 1e-9 * self.h_z
        rho = np.where(np.abs(rho - self.rho_axis[-1]) <= tol_r, self.rho_axis[-1], rho)
        z = np.where(np.abs(z - self.z_axis[-1]) <= tol_z, self.z_axis[-1], z)
        z = np.where(np.abs(z - self.z_axis[0]) <= tol_z, self.z_axis[0], z)
        pts = np.stack([rho.ravel(), z.ravel()], axis=1)
        return interp(pts).reshape(rho.shape)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """``f(v) = F(|(v - base) x omega|, (v - base) . omega)``."""
        rho, z = cylindrical_coordinates(points, self.base, self.direction)
        return self.profile(rho, z)

    def reconstruct(self, grid: VelocityGrid) -> DistributionField:
        return DistributionField(grid, self.time, self.evaluate(grid.points).reshape(grid.shape))

    def with_values(self, values: np.ndarray) -> AxisymField:
        return AxisymField(self.base, self.direction, self.rho_axis, self.z_axis, values, self.time)


@dataclass(frozen=True)
class ReduceResult:
    field: AxisymField
    residual: float
    circles_used: int


def cylindrical_reduce(
    f: DistributionField | PointFn,
    base: Sequence[float] = (0.0, 0.0, 0.0),
    direction: Sequence[float] = (0.0, 0.0, 1.0),
    rho_axis: np.ndarray | None = None,
    z_axis: np.ndarray | None = None,
    n_angles: int = N_ANGLES,
    time: float | None = None,
) -> ReduceResult:
    """Average ``f`` over circles around the axis.

    ``f`` is a grid field (sampled trilinearly, zero outside the node box) or
    a callable on points of shape ``(P, 3)``.  The residual is the largest
    ``(max - min)`` over a circle divided by the largest sample; for grid
    fields only circles inside the node box count.
    """
    e1, e2, w = axis_frame(direction)
    origin = np.asarray(base, dtype=float)
    if isinstance(f, DistributionField):
        grid = f.grid
        sampler: PointFn = f.sample
        if rho_axis is None:
            rho_axis = grid.h * np.arange(int(grid.half_extent / grid.h) + 1)
        if z_axis is None:
            count = int(grid.half_extent / grid.h)
            z_axis = grid.h * np.arange(-count, count + 1)
        t = f.time if time is None else time
        lo, hi = -grid.half_extent, grid.half_extent - grid.h
    else:
        if rho_axis is None or z_axis is None:
            raise ConfigError("callable inputs need explicit rho and z axes")
        sampler = f
        t = 0.0 if time is None else time
        lo, hi = -math.inf, math.inf
    rho_axis = np.asarray(rho_axis, dtype=float)
    z_axis = np.asarray(z_axis, dtype=float)
    theta = 2.0 * math.pi * np.arange(n_angles) / n_angles
    ring = np.cos(theta)[:, None] * e1 + np.sin(theta)[:, None] * e2
    pts = (
        origin
        + rho_axis[:, None, None, None] * ring[None, None, :, :]
        + z_axis[None, :, None, None] * w[None, None, None, :]
    )
    samples = np.asarray(sampler(pts.reshape(-1, 3)), dtype=float).reshape(rho_axis.size, z_axis.size, n_angles)
    profile = samples.mean(axis=2)
    inside = np.all((pts >= lo - 1e-12) & (pts <= hi + 1e-12), axis=(2, 3))
    spread = samples.max(axis=2) - samples.min(axis=2)
    scale = float(np.abs(samples).max()) if samples.size else 0.0
    residual = float(spread[inside].max() / scale) if scale > 0.0 and inside.any() else 0.0
    axi = AxisymField(tuple(origin), tuple(w), rho_axis, z_axis, profile, t)
    return ReduceResult(axi, residual, int(inside.sum()))


# --------------------------------------------------------------------------
# binary format for profiles


def axisym_to_bytes(axi: AxisymField) -> bytes:
    header = _AXI_HEADER.pack(
        AXI_MAGIC, AXI_VERSION, axi.rho_axis.size, axi.z_axis.size, axi.time, *axi.base, *axi.direction, 0.0
    )
    axes = np.concatenate([axi.rho_axis, axi.z_axis]).astype("<f8").tobytes()
    return header + axes + np.asarray(axi.values, dtype="<f8").ravel(order="F").tobytes()


def axisym_from_bytes(data: bytes) -> AxisymField:
    if len(data) < 4 or data[:4] != AXI_MAGIC:
        raise MagicMismatchError(f"expected magic {AXI_MAGIC!r}, found {bytes(data[:4])!r}")
    if len(data) < _AXI_HEADER.size:
        raise TruncatedPayloadError(f"header needs {_AXI_HEADER.size} bytes, got {len(data)}")
    _, version, n_rho, n_z, time, bx, by, bz, dx, dy, dz, _ = _AXI_HEADER.unpack_from(data)
    if version != AXI_VERSION:
        raise VersionMismatchError(f"unsupported profile version {version} (expected {AXI_VERSION})")
    count = n_rho + n_z + n_rho * n_z
    need = _AXI_HEADER.size + 8 * count
    if len(data) < need:
        raise TruncatedPayloadError(f"payload needs {need} bytes, got {len(data)}")
    flat = np.frombuffer(data, dtype="<f8", count=count, offset=_AXI_HEADER.size)
    rho, z = flat[:n_rho], flat[n_rho : n_rho + n_z]
    values = flat[n_rho + n_z :].reshape((n_rho, n_z), order="F")
    return AxisymField((bx, by, bz), (dx, dy, dz), rho, z, values, time)


def write_axisym(path: str | Path, axi: AxisymField) -> None:
    Path(path).write_bytes(axisym_to_bytes(axi))


def read_axisym(path: str | Path) -> AxisymField:
    return axisym_from_bytes(Path(path).read_bytes())


# --------------------------------------------------------------------------
# angular integral of the truncated Coulomb kernel


def angular_interaction_integral(A: float, B: float, sigma0: float, mode: str = "exact_quadrature") -> float:
    """``int_0^pi 1{A**2 + 2 B**2 (1 - cos t) <= sigma0**2} / sqrt(A**2 + 2 B**2 (1 - cos t)) dt``.

    ``mode="arsinh_bound"`` returns the closed-form majorant
    ``pi / (2 B) * (ln 2 + ln_+(sigma0 / A))``.
    """
    if B <= 0.0:
        raise DomainError(f"B must be positive, got {B}")
    if sigma0 <= 0.0:
        raise DomainError(f"sigma0 must be positive, got {sigma0}")
    if A < 0.0:
        raise DomainError(f"A must be nonnegative, got {A}")
    if mode == "arsinh_bound":
        if A == 0.0:
            raise DomainError("the closed-form bound needs A > 0")
        return math.pi / (2.0 * B) * (math.log(2.0) + max(math.log(sigma0 / A), 0.0))
    if mode != "exact_quadrature":
        raise ConfigError(f"unknown mode {mode!r}")
    if A >= sigma0:
        return 0.0
    if A == 0.0:
        return math.inf
    s2 = (sigma0**2 - A**2) / (4.0 * B**2)
    theta_star = math.pi if s2 >= 1.0 else 2.0 * math.asin(math.sqrt(s2))
    c = 2.0 * B / A

    def integrand(t: float) -> float:
        return 1.0 / math.sqrt(1.0 + (c * math.sin(0.5 * t)) ** 2)

    # the integrand varies on the scale A / B near 0
    knee = min(theta_star, A / B)
    pts = [knee] if 0.0 < knee < theta_star else None
    val, _ = integrate.quad(integrand, 0.0, theta_star, points=pts, limit=200, epsabs=0.0, epsrel=1e-12)
    return val / A


def fenchel_gap(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """``p ln_+ p + e**q - p q``; nonnegative for ``p, q > 0``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return p * log_plus(p) + np.exp(q) - p * q


def arcsin_gap(y: np.ndarray) -> np.ndarray:
    """``(pi/2) y - arcsin y`` on ``[0, 1]``."""
    y = np.asarray(y, dtype=float)
    return 0.5 * math.pi * y - np.arcsin(y)


def rho_window_samples(rho0: float, eps: float, sigma0: float, count: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Sample ``v = v0 + eps vbar`` with ``vbar`` in ``B_1`` and ``w`` in ``B_sigma0(v)``; return ``(rho_v, rho_w)``.

    The axis is the third coordinate axis and ``v0 = (rho0, 0, 0)``.
    """

    def ball(n: int, radius: float) -> np.ndarray:
        d = rng.normal(size=(n, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        return d * radius * rng.random(n)[:, None] ** (1.0 / 3.0)

    v = np.array([rho0, 0.0, 0.0]) + eps * ball(count, 1.0)
    w = v + ball(count, sigma0)
    return np.hypot(v[:, 0], v[:, 1]), np.hypot(w[:, 0], w[:, 1])


# --------------------------------------------------------------------------
# long-range bound


@dataclass(frozen=True)
class LongRangeResult:
    measured_sup: float
    analytic_bound: float
    rho0: float
    sigma0: float
    c_star: float
    mass_entropy_sup: float
    save_interval: float
    holds: bool

    @property
    def margin(self) -> float:
        return self.analytic_bound - self.measured_sup


def coulomb_potential(f: DistributionField, model: KernelModel | None = None) -> np.ndarray:
    """``f * 1/|.|`` at the nodes, with the singular kernel averaged over cells near the origin."""
    plan = plan_for(f.grid, model or KernelModel())
    return radial_convolution(plan, f.values, "coulomb", lambda r: 1.0 / r)


def _mass_and_entropy_plus(f: DistributionField) -> float:
    u = f.values
    return float((u + u * log_plus(u)).sum() * f.grid.cell_volume)


def long_range_bound(
    traj: Trajectory | DistributionField,
    t0: float,
    v0: Sequence[float],
    eps: float,
    model: KernelModel | None = None,
    base: Sequence[float] = (0.0, 0.0, 0.0),
    direction: Sequence[float] = (0.0, 0.0, 1.0),
) -> LongRangeResult:
    """Grid supremum of ``f_eps * 1/|.|`` over ``Q_1`` against ``(C*/rho0) sup_t int f (1 + ln_+ f) + C* rho0**2``.

    By the change of variables the potential of ``f_eps`` at ``vbar`` equals the
    potential of ``f`` at ``v0 + eps vbar``, so it is evaluated on the source
    grid: at nodes within ``eps`` of ``v0`` and at ``v0`` itself.
    """
    traj = as_trajectory(traj)
    rho0 = distance_to_axis(v0, base, direction)
    if rho0 <= 0.0:
        raise DomainError("the point lies on the symmetry axis")
    if not (0.0 < eps < 0.5 * rho0):
        raise DomainError(f"eps must lie in (0, rho0/2) = (0, {0.5 * rho0:.6g}), got {eps}")
    view = cylinder_restrict(traj, ParabolicCylinder(t0, v0, eps))
    if view.time_indices.size == 0:
        raise WindowError(f"no saved snapshot in ({t0 - eps**2:.6g}, {t0:.6g}]")
    center = np.asarray(v0, dtype=float)[None, :]
    measured = 0.0
    for k in view.time_indices:
        snap = traj[int(k)]
        pot = coulomb_potential(snap, model)
        vals = [float(pot[view.spatial_mask].max())] if view.spatial_mask.any() else []
        vals.append(float(snap.with_values(pot).sample(center)[0]) if snap.values.any() else 0.0)
        measured = max(measured, *vals)
    sup_me = max(_mass_and_entropy_plus(s) for s in traj)
    bound = C_STAR / rho0 * sup_me + C_STAR * rho0**2
    sigma0 = rho0 / (2.0 * math.sqrt(2.0) * math.pi)
    return LongRangeResult(measured, bound, rho0, sigma0, C_STAR, sup_me, traj.save_interval, measured <= bound)


# --------------------------------------------------------------------------
# improved integrability


@dataclass(frozen=True)
class IntegrabilityReport:
    l2_norm: float
    l2l1_profile: float
    l2l1_profile_grad: float
    bound_l2l1: float | None
    bound_l2l1_grad: float | None
    nodes: int
    snapshots: int


def improved_integrability(
    series: AxisymField | Sequence[AxisymField],
    t0: float,
    V0: Sequence[float],
    r: float,
    rho0: float,
    time_step: float | None = None,
    traj3d: Trajectory | None = None,
) -> IntegrabilityReport:
    """Discrete ``L2`` norm of ``F`` over the planar cylinder ``(t0 - r**2, t0] x {|V - V0| < r}``.

    With a 3-D trajectory the ``(2 pi rho0)**-1``-weighted ``L2_t L1_v`` norms
    of ``f`` and ``grad f`` on ``B_{r1}(base + V0[1] omega)`` are reported as the
    majorants of the ``L2_t L1`` norms of ``F`` and ``grad F``.
    """
    fields = [series] if isinstance(series, AxisymField) else list(series)
    if not fields:
        raise ConfigError("empty profile series")
    V1, V2 = float(V0[0]), float(V0[1])
    if not rho0 > 0.0:
        raise ConfigError(f"rho0 must be positive, got {rho0}")
    if V1 - r <= 0.0:
        raise ConfigError(f"the planar cylinder touches the axis: V1 - r = {V1 - r:.6g}")
    if V1 <= r + rho0:
        raise ConfigError(f"need V1 > r + rho0, got V1={V1:.6g}, r + rho0={r + rho0:.6g}")
    times = np.array([a.time for a in fields])
    if time_step is None:
        time_step = float(np.diff(times).mean()) if len(fields) > 1 else 1.0
    tol = 1e-9 * time_step
    chosen = [a for a in fields if t0 - r**2 + tol < a.time <= t0 + tol]
    ref = chosen[0] if chosen else fields[0]
    R, Z = np.meshgrid(ref.rho_axis, ref.z_axis, indexing="ij")
    mask = (R - V1) ** 2 + (Z - V2) ** 2 < r**2
    dA = ref.h_rho * ref.h_z
    sq = l1 = l1g = 0.0
    for a in chosen:
        vals = a.values
        g_rho, g_z = np.gradient(vals, a.h_rho, a.h_z, edge_order=2)
        sq += float((vals[mask] ** 2).sum()) * dA * time_step
        l1 += (float(np.abs(vals[mask]).sum()) * dA) ** 2 * time_step
        l1g += (float(np.hypot(g_rho, g_z)[mask].sum()) * dA) ** 2 * time_step
    b_mass = b_grad = None
    if traj3d is not None:
        from .collision import grad

        r1 = math.hypot(V1 + r, r)
        center = np.asarray(ref.base) + V2 * np.asarray(ref.direction)
        view = cylinder_restrict(traj3d, ParabolicCylinder(t0, center, r1))
        dv = traj3d.grid.cell_volume
        acc_m = acc_g = 0.0
        for k in view.time_indices:
            snap = traj3d[int(k)]
            gnorm = np.linalg.norm(grad(snap.values, snap.grid.h), axis=0)
            acc_m += (float(snap.values[view.spatial_mask].sum()) * dv) ** 2 * traj3d.save_interval
            acc_g += (float(gnorm[view.spatial_mask].sum()) * dv) ** 2 * traj3d.save_interval
        b_mass = math.sqrt(acc_m) / (2.0 * math.pi * rho0)
        b_grad = math.sqrt(acc_g) / (2.0 * math.pi * rho0)
    return IntegrabilityReport(
        math.sqrt(sq), math.sqrt(l1), math.sqrt(l1g), b_mass, b_grad, int(mask.sum()), len(chosen)
    )


# --------------------------------------------------------------------------
# off-axis criterion


@dataclass(frozen=True)
class LadderStep:
    eps: float
    direct: float | None
    shell_integral: float | None
    shell_bound: float | None
    certify: CertifyResult | None
    skipped: str = ""

    @property
    def shell_dominates(self) -> bool | None:
        if self.direct is None or self.shell_bound is None:
            return None
        return self.direct <= self.shell_bound


@dataclass(frozen=True)
class OffAxisVerdict:
    rho0: float
    Z0: float
    Z0_measured: float
    eta: float
    threshold: float
    steps: tuple[LadderStep, ...]
    certified: bool
    certified_eps: float | None
    save_interval: float
    asymmetry_residual: float | None = None
    notes: tuple[str, ...] = field(default=())

    @property
    def shell_violations(self) -> int:
        return sum(1 for s in self.steps if s.shell_dominates is False)

    def report(self) -> dict:
        return {
            "rho0": self.rho0,
            "Z0": self.Z0,
            "Z0_measured": self.Z0_measured,
            "eta": self.eta,
            "threshold": self.threshold,
            "certified": self.certified,
            "certified_eps": self.certified_eps,
            "save_interval": self.save_interval,
            "asymmetry_residual": self.asymmetry_residual,
            "shell_violations": self.shell_violations,
            "steps": [
                {
                    "eps": s.eps,
                    "direct": s.direct,
                    "shell_integral": s.shell_integral,
                    "shell_bound": s.shell_bound,
                    "hypothesis": None if s.certify is None else s.certify.hypothesis,
                    "grid_max": None if s.certify is None else s.certify.grid_max,
                    "certified": None if s.certify is None else s.certify.certified,
                    "discretization_alert": None if s.certify is None else s.certify.discretization_alert,
                    "skipped": s.skipped,
                }
                for s in self.steps
            ],
            "notes": list(self.notes),
        }


def off_axis_z0(traj: Trajectory, rho0: float, model: KernelModel) -> float:
    """``1 + 2(1 - g*) M0 + (C* g* / rho0)(2 M0 + H0) + C* g* rho0**2`` with measured ``M0``, ``H0``."""
    gs = model.gamma_star
    m0 = max(s.mass for s in traj)
    h0 = max(float((s.values * log_plus(s.values)).sum() * s.grid.cell_volume) for s in traj)
    return 1.0 + 2.0 * (1.0 - gs) * m0 + C_STAR * gs / rho0 * (2.0 * m0 + h0) + C_STAR * gs * rho0**2


def shell_integral(
    traj: Trajectory,
    time_indices: np.ndarray,
    rho0: float,
    z0: float,
    half_width: float,
    base: Sequence[float],
    direction: Sequence[float],
    sub: int = 24,
) -> float:
    """``sum_t dt int int F**2 drho dz`` over ``|rho - rho0| < w``, ``|z - z0| < w`` (midpoint rule)."""
    offs = ((np.arange(sub) + 0.5) / sub * 2.0 - 1.0) * half_width
    rho_axis, z_axis = rho0 + offs, z0 + offs
    cell = (2.0 * half_width / sub) ** 2
    total = 0.0
    for k in time_indices:
        red = cylindrical_reduce(traj[int(k)], base, direction, rho_axis, z_axis)
        total += float((red.field.values**2).sum()) * cell
    return total * traj.save_interval


def off_axis_criterion(
    traj: Trajectory | DistributionField,
    t0: float,
    v0: Sequence[float],
    model: KernelModel,
    base: Sequence[float] = (0.0, 0.0, 0.0),
    direction: Sequence[float] = (0.0, 0.0, 1.0),
    eta: float | None = None,
    n_per_axis: int = 32,
    max_steps: int = 6,
    stop_when_certified: bool = False,
) -> OffAxisVerdict:
    """Run the ladder ``eps_k = rho0/8 * 2**-k`` until the resolution floor ``3 eps < h``.

    Each step compares ``int_{Q_3} f_eps**2`` with the cylindrical-shell
    majorant and applies the level-set certificate at threshold
    ``eta * Z0**(-3/2)``.
    """
    traj = as_trajectory(traj)
    rho0 = distance_to_axis(v0, base, direction)
    if rho0 <= 0.0:
        raise DomainError("the point lies on the symmetry axis")
    eta = eta_dg(1.0) if eta is None else float(eta)
    z0_formula = off_axis_z0(traj, rho0, model)
    _, z_coord = cylindrical_coordinates(np.asarray(v0, dtype=float)[None, :], base, direction)
    z_coord = float(z_coord[0])
    h = traj.grid.h
    times = traj.times
    tol = 1e-9 * traj.save_interval
    gs = model.gamma_star
    steps: list[LadderStep] = []
    z0_measured = 1.0
    certified_eps = None
    for k in range(max_steps):
        eps = rho0 / 8.0 * 0.5**k
        if 3.0 * eps < h:
            if not steps or all(s.skipped for s in steps):
                steps.append(LadderStep(eps, None, None, None, None, f"resolution floor: 3 eps < h = {h:.4g}"))
            break
        if t0 - 9.0 * eps**2 < times[0] - tol:
            steps.append(LadderStep(eps, None, None, None, None, "time window 9 eps**2 reaches before the first snapshot"))
            continue
        if np.any(np.abs(np.asarray(v0, dtype=float)) + 3.0 * eps > traj.grid.half_extent):
            steps.append(LadderStep(eps, None, None, None, None, "ball of radius 3 eps leaves the grid"))
            continue
        view = cylinder_restrict(traj, ParabolicCylinder(t0, v0, 3.0 * eps))
        direct = view.integrate(traj, lambda s: s.values**2) / eps
        shell = shell_integral(traj, view.time_indices, rho0, z_coord, 3.0 * eps, base, direction)
        bound = 3.0 * math.pi * (rho0 + 3.0) / rho0 * shell
        lr = long_range_bound(traj, t0, v0, eps, model, base, direction)
        m_recent = max(traj[int(i)].mass for i in cylinder_restrict(traj, ParabolicCylinder(t0, v0, eps)).time_indices)
        z0_measured = max(z0_measured, 1.0 + 2.0 * (1.0 - gs) * m_recent + gs * lr.measured_sup)
        cert = None
        if certified_eps is None or not stop_when_certified:
            cert = degiorgi_certify(traj, t0, v0, eps, z0_formula, eta, n_per_axis)
            if cert.certified and certified_eps is None:
                certified_eps = eps
        steps.append(LadderStep(eps, direct, shell, bound, cert))
    if not steps or all(s.skipped for s in steps):
        raise DomainError("no ladder step is resolvable: " + "; ".join(s.skipped for s in steps))
    return OffAxisVerdict(
        rho0,
        z0_formula,
        z0_measured,
        eta,
        eta * z0_formula**-1.5,
        tuple(steps),
        certified_eps is not None,
        certified_eps,
        traj.save_interval,
    )
