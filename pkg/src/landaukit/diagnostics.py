"""Moments, entropies, truncated functionals and local energy estimates.

Integrals over cylinders are midpoint sums with weight ``h**3`` per node and
the save interval per snapshot.  Suprema in time are maxima over saved
snapshots, so the save stride bounds their temporal resolution.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .collision import (
    check_resolution,
    diffusion_matrix,
    dissipation_density,
    dissipation_pairs,
    dissipation_total,
    grad,
    log_gradient,
    pair_quadratic_form,
    plan_for,
)
from .errors import DomainError, WindowError
from .fields import (
    DistributionField,
    ParabolicCylinder,
    Trajectory,
    as_trajectory,
    cylinder_restrict,
    scaled_solution,
)
from .kernel import KernelModel
from .quadrature import radial_convolution


# --------------------------------------------------------------------------
# moments and entropies


@dataclass(frozen=True)
class EntropyReport:
    time: float
    mass: float
    momentum_x: float
    momentum_y: float
    momentum_z: float
    energy: float
    entropy: float
    entropy_plus: float


def _xlogx(values: np.ndarray) -> np.ndarray:
    out = np.zeros_like(values)
    pos = values > 0.0
    out[pos] = values[pos] * np.log(values[pos])
    return out


def log_plus(values: np.ndarray) -> np.ndarray:
    """``max(ln x, 0)`` with ``ln_+(0) = 0``."""
    values = np.asarray(values, dtype=float)
    out = np.zeros_like(values)
    big = values > 1.0
    out[big] = np.log(values[big])
    return out


def moments_and_entropy(f: DistributionField) -> EntropyReport:
    """Midpoint quadrature of ``1, v, |v|**2, f ln f, f ln_+ f`` against ``f``."""
    dv = f.grid.cell_volume
    vx, vy, vz = f.grid.mesh
    u = f.values
    return EntropyReport(
        time=float(f.time),
        mass=float(u.sum() * dv),
        momentum_x=float((u * vx).sum() * dv),
        momentum_y=float((u * vy).sum() * dv),
        momentum_z=float((u * vz).sum() * dv),
        energy=float((u * (vx**2 + vy**2 + vz**2)).sum() * dv),
        entropy=float(_xlogx(u).sum() * dv),
        entropy_plus=float((u * log_plus(u)).sum() * dv),
    )


def entropy_bound_constant(report: EntropyReport) -> float:
    """``H0 + E0 + 3 ln(2 pi) M0 + 1``, the bound used for ``int f ln_+ f``."""
    return report.entropy + report.energy + 3.0 * math.log(2.0 * math.pi) * report.mass + 1.0


def h_plus_kappa(r: np.ndarray | float, kappa: float) -> np.ndarray:
    """``r ln_+(r/kappa) - (r - kappa)_+``; zero for ``r <= kappa``."""
    if kappa < 1.0:
        raise DomainError(f"kappa must be >= 1, got {kappa}")
    r = np.asarray(r, dtype=float)
    return r * log_plus(r / kappa) - np.maximum(r - kappa, 0.0)


def truncated_entropy(f: DistributionField, kappa: float) -> float:
    """``int h_+^kappa(f) dv``."""
    return float(h_plus_kappa(f.values, kappa).sum() * f.grid.cell_volume)


def truncated_dissipation(
    f: DistributionField,
    kappa: float,
    model: KernelModel,
    subsample: int = 1,
    variant: str = "full",
) -> float:
    """``1/2 sum |F_+^kappa|**2`` with log-gradients of ``ln_+(f/kappa)``.

    ``subsample=1`` uses the FFT identity; larger strides use the brute-force
    pair sum over the subsampled nodes.
    """
    if kappa < 1.0:
        raise DomainError(f"kappa must be >= 1, got {kappa}")
    if subsample == 1:
        return dissipation_total(f, model, variant, kappa=kappa)
    return dissipation_pairs(f, model, subsample, variant, kappa=kappa).total


# --------------------------------------------------------------------------
# far-field functional


def z_field(f_eps: DistributionField, eps: float, model: KernelModel) -> np.ndarray:
    """``f_eps * k(eps|z|) 1_{|z| >= 1} / |z|`` at every node (point-sampled kernel)."""
    plan = plan_for(f_eps.grid, model)

    def fn(r: np.ndarray) -> np.ndarray:
        return np.where(r >= 1.0, model.k(eps * r) / r, 0.0)

    return radial_convolution(plan, f_eps.values, f"zfar:{eps!r}", fn, averaged=False)


def z_functional(
    f_eps: DistributionField | Trajectory,
    eps: float,
    model: KernelModel,
    domain: ParabolicCylinder | None = None,
) -> float:
    """Maximum of :func:`z_field` over the nodes (and snapshots) inside ``domain``."""
    traj = as_trajectory(f_eps)
    if not len(traj):
        return 0.0
    if domain is None:
        snaps = range(len(traj))
        mask = np.ones(traj.grid.shape, dtype=bool)
    else:
        view = cylinder_restrict(f_eps, domain)
        snaps = view.time_indices if isinstance(f_eps, Trajectory) else range(1)
        mask = view.spatial_mask
    best = 0.0
    for k in snaps:
        vals = z_field(traj[int(k)], eps, model)[mask]
        if vals.size:
            best = max(best, float(vals.max()))
    return best


def z_bound(f_eps: DistributionField, eps: float, model: KernelModel) -> float:
    """``M0 eps**(-gamma*)`` with ``M0 = eps * mass(f_eps)`` the mass before zooming."""
    return eps * f_eps.mass * eps ** (-model.gamma_star)


# --------------------------------------------------------------------------
# scaled local entropy inequality


@dataclass(frozen=True)
class ScaledEntropyTerms:
    lhs_sup: float
    lhs_diss: float
    rhs_t1: float
    rhs_t2: float
    rhs_t3: float
    prefactor_t1: float
    implied_C0: float
    snapshots_used: int
    save_interval: float


def _ratio(num: float, den: float) -> float:
    if num == 0.0:
        return 0.0
    if den == 0.0:
        return math.inf
    return num / den


def short_range_field(f: DistributionField, model: KernelModel, radius: float = 1.0, rho: float = 1.0) -> np.ndarray:
    """``f * 1_{B_radius} / |z|**rho`` with cell-averaged kernel samples."""
    plan = plan_for(f.grid, model)

    def fn(r: np.ndarray) -> np.ndarray:
        return np.where(r < radius, r**-rho, 0.0)

    return radial_convolution(plan, f.values, f"short:{radius!r}:{rho!r}", fn, edges=(radius,))


def scaled_entropy_inequality(
    traj: Trajectory,
    t0: float,
    v0: Sequence[float],
    eps: float,
    kappa_eps: float,
    r_eps: float,
    delta_eps: float,
    model: KernelModel,
    n_per_axis: int = 32,
) -> ScaledEntropyTerms:
    """Every term of the scaled truncated-entropy inequality on ``Q_{r}`` and ``Q_{r+delta}``.

    The zoomed window has half extent ``r + delta + 1`` so the short-range
    convolution sees all of its support.  The far-field weight ``Z`` is
    computed on the source grid, where it reads
    ``f * k(|z|) 1_{|z| >= eps} / |z|``, and interpolated to the zoomed nodes.
    """
    if not (1.0 <= kappa_eps <= 2.0):
        raise DomainError(f"kappa_eps must lie in [1, 2], got {kappa_eps}")
    if not (0.0 < r_eps <= 2.0):
        raise DomainError(f"r_eps must lie in (0, 2], got {r_eps}")
    if not (0.0 < delta_eps <= 1.0):
        raise DomainError(f"delta_eps must lie in (0, 1], got {delta_eps}")
    outer = r_eps + delta_eps
    zoom = scaled_solution(traj, t0, v0, eps, n_per_axis, outer + 1.0, t_window=outer**2)
    grid = zoom.grid
    source_plan = plan_for(traj.grid, model)
    far_kernel = lambda r: np.where(r >= eps, model.k(r) / r, 0.0)  # noqa: E731
    zoom_points = np.asarray(v0, dtype=float)[None, :] + eps * grid.points

    inner = cylinder_restrict(zoom, ParabolicCylinder(0.0, (0.0, 0.0, 0.0), r_eps))
    outer_view = cylinder_restrict(zoom, ParabolicCylinder(0.0, (0.0, 0.0, 0.0), outer))
    kap = kappa_eps
    dv, dt = grid.cell_volume, zoom.save_interval

    lhs_sup = inner.sup_in_time(zoom, lambda s: h_plus_kappa(s.values, kap))

    def diss(s: DistributionField) -> np.ndarray:
        d = grad(np.maximum(s.values - kap, 0.0), grid.h)
        return np.sum(d * d, axis=0) / np.maximum(s.values, kap)

    lhs_diss = inner.integrate(zoom, diss)

    t1 = t2 = t3 = 0.0
    for k in outer_view.time_indices:
        snap = zoom[int(k)]
        lp = log_plus(snap.values / kap)
        weight = (snap.values * (lp + lp**2))[outer_view.spatial_mask]
        if not weight.any():
            continue
        src = traj.at_time(t0 + eps**2 * snap.time)
        zf = radial_convolution(source_plan, src.values, f"zsrc:{eps!r}", far_kernel, averaged=False)
        zf = DistributionField(traj.grid, src.time, np.maximum(zf, 0.0)).sample(zoom_points).reshape(grid.shape)
        short = short_range_field(snap, model)
        t1 += float(weight.sum())
        t2 += float((zf[outer_view.spatial_mask] * weight).sum())
        t3 += float((short[outer_view.spatial_mask] * weight).sum())
    scale = dv * dt
    prefactor = kap + delta_eps**-2
    rhs_t1 = prefactor * t1 * scale
    rhs_t2 = delta_eps**-2 * t2 * scale
    rhs_t3 = delta_eps**-2 * t3 * scale
    implied = _ratio(lhs_sup + lhs_diss, rhs_t1 + rhs_t2 + rhs_t3)
    return ScaledEntropyTerms(
        lhs_sup, lhs_diss, rhs_t1, rhs_t2, rhs_t3, prefactor, implied, int(outer_view.time_indices.size), dt
    )


# --------------------------------------------------------------------------
# heat kernel and local mass estimate


def heat_kernel(t: np.ndarray | float, v: np.ndarray, lam: float) -> np.ndarray:
    """``(lam**2 - t)**(-3/2) exp(-|v|**2 / (4 (lam**2 - t)))``; ``v`` has trailing axis 3."""
    t = np.asarray(t, dtype=float)
    s = lam**2 - t
    if np.any(s <= 0.0):
        raise DomainError("heat kernel needs lam**2 - t > 0")
    v = np.asarray(v, dtype=float)
    r2 = np.sum(v * v, axis=-1)
    return s**-1.5 * np.exp(-r2 / (4.0 * s))


def heat_kernel_lower_bound(lam: float) -> float:
    """``(5 lam**2)**(-3/2) / e``, a lower bound on ``Q_{2 lam}``."""
    return (5.0 * lam**2) ** -1.5 / math.e


@dataclass(frozen=True)
class LocalMassTerms:
    lam: float
    lhs_raw: float
    lhs: float
    f_norm: float
    mass_term: float
    grad_term: float
    rhs_plain: float
    rhs_grad: float
    rhs_keps: float
    implied_C1: float


def _sqrt_gradient_sq(values: np.ndarray, h: float) -> np.ndarray:
    d = grad(np.sqrt(values), h)
    return np.sum(d * d, axis=0)


def local_mass_estimate(traj_eps: Trajectory, lam: float, eps: float, model: KernelModel) -> LocalMassTerms:
    """Both sides of the local mass estimate on a zoomed trajectory covering ``Q_2``.

    ``||F_eps||`` uses the kernel ``k(eps|z|)/|z| Pi(z) = eps**(gamma+3) a(z)``.
    """
    if not (0.0 < lam < 0.25):
        raise DomainError(f"lambda must lie in (0, 1/4), got {lam}")
    q2 = ParabolicCylinder(0.0, (0.0, 0.0, 0.0), 2.0)
    view2 = cylinder_restrict(traj_eps, q2)
    grid = traj_eps.grid
    if grid.half_extent < 2.0:
        raise WindowError("zoomed trajectory must cover the ball of radius 2")
    if view2.time_indices.size == 0:
        raise WindowError("zoomed trajectory has no snapshot in (-4, 0]")
    small = cylinder_restrict(traj_eps, ParabolicCylinder(0.0, (0.0, 0.0, 0.0), 2.0 * lam))
    lhs_raw = small.sup_in_time(traj_eps, lambda s: s.values)
    mass = view2.sup_in_time(traj_eps, lambda s: s.values)
    grad_term = view2.integrate(traj_eps, lambda s: _sqrt_gradient_sq(s.values, grid.h))
    scale = eps ** (model.gamma + 3.0)
    check_resolution(model, grid)
    f_sq = view2.integrate(
        traj_eps, lambda s: dissipation_density(s, model, scale=scale) if s.values.any() else np.zeros(grid.shape)
    )
    f_norm = math.sqrt(max(f_sq, 0.0))
    k_eps = float(model.k(eps)) / eps
    rhs_plain = (1.0 + lam**-4 * f_norm) * mass
    rhs_grad = lam**-8 * (f_norm**2 + 1.0) * grad_term
    rhs_keps = lam**-8 * k_eps * f_norm**2
    lhs = lhs_raw / lam**3
    implied = _ratio(lhs, rhs_plain + rhs_grad + rhs_keps)
    return LocalMassTerms(lam, lhs_raw, lhs, f_norm, mass, grad_term, rhs_plain, rhs_grad, rhs_keps, implied)


# --------------------------------------------------------------------------
# local entropy dissipation lower bound


@dataclass(frozen=True)
class BumpSpec:
    """``amplitude cos(pi |v - c| / (2 R))**2`` inside ``B_R(c)``, zero outside."""

    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    radius: float = 2.0
    amplitude: float = 1.0

    @property
    def gradient_bound(self) -> float:
        return abs(self.amplitude) * math.pi / (2.0 * self.radius)

    def evaluate(self, grid) -> tuple[np.ndarray, np.ndarray]:
        """Values and gradient vectors ``(3, n, n, n)`` at the grid nodes."""
        c = np.asarray(self.center, dtype=float)
        diff = np.stack([m - ci for m, ci in zip(grid.mesh, c)])
        r = np.sqrt(np.sum(diff * diff, axis=0))
        inside = r < self.radius
        phase = math.pi * r / (2.0 * self.radius)
        value = np.where(inside, self.amplitude * np.cos(phase) ** 2, 0.0)
        dpsi_dr = np.where(inside, -self.amplitude * math.pi / (2.0 * self.radius) * np.sin(2.0 * phase), 0.0)
        safe = np.where(r > 0.0, r, 1.0)
        gradient = dpsi_dr[None] * diff / safe[None]
        return value, gradient


@dataclass(frozen=True)
class DissipationBound:
    lhs: float
    rhs: float
    rhs_main: float
    penalty: float
    c0_measured: float
    r0: float


def measured_ellipticity(f: DistributionField, model: KernelModel, delta: float, r0: float = 1.0) -> float:
    """``min_v lambda_min(A_out(v)) (1 + |v|)**3 / k(|v| + R0)`` over the grid."""
    m_out = KernelModel(model.gamma, delta, model.n_reg)
    eig = diffusion_matrix(f, m_out, "out_part").eigenvalues()[..., 0]
    r = f.grid.radius()
    return float(np.min(eig * (1.0 + r) ** 3 / m_out.k(r + r0)))


def entropy_dissipation_lower_bound(
    f: DistributionField,
    delta: float,
    psi: BumpSpec,
    model: KernelModel,
    r0: float = 1.0,
) -> DissipationBound:
    """Both sides of the local entropy dissipation estimate with ``F = f``.

    The ellipticity constant is measured on the grid (see
    :func:`measured_ellipticity`) instead of the non-constructive one.
    """
    if not (0.0 < delta < 1.0):
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    grid = f.grid
    m_out = KernelModel(model.gamma, delta, model.n_reg)
    value, gradient = psi.evaluate(grid)
    g, above = log_gradient(f.values, grid.h)
    w = np.where(above, f.values, 0.0)
    lhs = pair_quadratic_form(w, value[None] * g, grid, m_out, "out_part")

    c0 = measured_ellipticity(f, model, delta, r0)
    r = grid.radius()
    dv = grid.cell_volume
    weight = m_out.k(r + r0) * (1.0 + r) ** -3
    df = grad(f.values, grid.h)
    with np.errstate(divide="ignore", invalid="ignore"):
        fisher = np.where(f.values > 0.0, np.sum(df * df, axis=0) / f.values, 0.0)
    main = c0 * float(np.sum(fisher * weight * value**2) * dv)
    gnorm = np.sqrt(np.sum(gradient * gradient, axis=0))
    mass_term = float(np.sum(f.values * (value + delta * gnorm)) * dv)
    penalty = 40.0 * float(m_out.k(delta)) / delta**3 * mass_term**2
    return DissipationBound(lhs, main - penalty, main, penalty, c0, r0)


# --------------------------------------------------------------------------
# CSV emission


def write_csv(rows: Iterable, path: str | Path) -> int:
    """Write dataclass rows with their field names as header; returns the row count."""
    rows = list(rows)
    path = Path(path)
    with path.open("w", newline="") as fh:
        if not rows:
            return 0
        names = [f.name for f in dataclasses.fields(rows[0])]
        writer = csv.DictWriter(fh, fieldnames=names)
        writer.writeheader()
        for row in rows:
            writer.writerow(dataclasses.asdict(row))
    return len(rows)
