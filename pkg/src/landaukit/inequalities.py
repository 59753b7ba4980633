"""Numerical checkers for the functional inequalities behind the regularity estimates."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .collision import grad, plan_for
from .diagnostics import _sqrt_gradient_sq
from .errors import DomainError
from .fields import DistributionField, ParabolicCylinder, Trajectory, as_trajectory, cylinder_restrict
from .kernel import KernelModel
from .quadrature import radial_convolution


@dataclass(frozen=True)
class InequalityCheck:
    lhs: float
    rhs: float

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs

    @property
    def implied_constant(self) -> float:
        if self.rhs == 0.0:
            return 0.0 if self.lhs == 0.0 else math.inf
        return self.lhs / self.rhs


def _window(obj: DistributionField | Trajectory, cyl: ParabolicCylinder):
    traj = as_trajectory(obj)
    return traj, cylinder_restrict(obj, cyl)


def mixed_norm(obj: DistributionField | Trajectory, cyl: ParabolicCylinder, p: float, q: float, values=None) -> float:
    """``(sum_t dt (sum_v |u|**p h**3)**(q/p))**(1/q)`` over the cylinder; ``u`` defaults to ``f``."""
    traj, view = _window(obj, cyl)
    total = 0.0
    for k in view.time_indices:
        u = traj[int(k)].values if values is None else values(traj[int(k)])
        inner = float((np.abs(u[view.spatial_mask]) ** p).sum()) * view.cell_volume
        total += inner ** (q / p)
    return (total * view.time_weight) ** (1.0 / q)


def interpolation_check(obj: DistributionField | Trajectory, cyl: ParabolicCylinder, p: float, q: float) -> InequalityCheck:
    """``||f||_{L^q_t L^p_v}`` against ``||f||_{L^inf_t L^1_v} + ||grad sqrt f||_2**2`` on the cylinder."""
    if p < 1.0 or q < 1.0 or 1.0 / p + 2.0 / (3.0 * q) < 1.0 - 1e-15:
        raise DomainError(f"need p, q >= 1 and 1/p + 2/(3q) >= 1, got p={p}, q={q}")
    traj, view = _window(obj, cyl)
    lhs = mixed_norm(obj, cyl, p, q)
    h = traj.grid.h
    sup_mass = view.sup_in_time(traj, lambda s: s.values)
    fisher = view.integrate(traj, lambda s: _sqrt_gradient_sq(s.values, h))
    return InequalityCheck(lhs, sup_mass + fisher)


def short_range_constant(rho: float) -> float:
    """``(8 pi / (3 (2 - rho)))**(2/3)``."""
    return (8.0 * math.pi / (3.0 * (2.0 - rho))) ** (2.0 / 3.0)


def truncated_riesz_potential(f: DistributionField, delta: float, rho: float) -> np.ndarray:
    """``f * 1_{B_delta} / |.|**rho`` at the nodes with cell-averaged kernel samples."""
    plan = plan_for(f.grid, KernelModel())
    return radial_convolution(
        plan,
        f.values,
        f"riesz|delta={delta!r}|rho={rho!r}",
        lambda r: np.where(r < delta, r ** (-rho), 0.0),
        edges=(delta,),
    )


def short_range_check(
    obj: DistributionField | Trajectory, cyl: ParabolicCylinder, delta: float, rho: float
) -> InequalityCheck:
    """``||f * 1_{B_delta}/|.|**rho||_{L1_t Linf_v(I x B)}`` against the explicit Hoelder bound.

    The ``L3`` norm on the right runs over nodes within
    ``r + delta + sqrt(3) h / 2`` of the center, the nodes whose cells meet
    ``B + B_delta``.
    """
    if not (0.0 < rho < 2.0):
        raise DomainError(f"rho must lie in (0, 2), got {rho}")
    if delta <= 0.0:
        raise DomainError(f"delta must be positive, got {delta}")
    traj, view = _window(obj, cyl)
    grid = traj.grid
    outer = grid.radius(cyl.v0) < cyl.r + delta + 0.5 * math.sqrt(3.0) * grid.h
    lhs = rhs_norm = 0.0
    for k in view.time_indices:
        snap = traj[int(k)]
        if not snap.values.any():
            continue
        pot = truncated_riesz_potential(snap, delta, rho)
        if view.spatial_mask.any():
            lhs += float(pot[view.spatial_mask].max())
        rhs_norm += (float((snap.values[outer] ** 3).sum()) * grid.cell_volume) ** (1.0 / 3.0)
    c = short_range_constant(rho) * delta ** (2.0 - rho)
    return InequalityCheck(lhs * view.time_weight, c * rhs_norm * view.time_weight)


# --------------------------------------------------------------------------
# nonlinearization


def _check_levels(kappa: float, kappa_bar: float) -> None:
    if not (1.0 <= kappa < kappa_bar < kappa + 1.0):
        raise DomainError(f"need 1 <= kappa < kappa_bar < kappa + 1, got kappa={kappa}, kappa_bar={kappa_bar}")


def level_energy(g: np.ndarray, kappa: float) -> np.ndarray:
    """``Gamma((sqrt g - sqrt kappa)_+)`` with ``Gamma(r) = min(r, r**2)``."""
    r = np.maximum(np.sqrt(np.asarray(g, dtype=float)) - math.sqrt(kappa), 0.0)
    return np.minimum(r, r * r)


def nonlinearization_factor(kappa: float, kappa_bar: float) -> float:
    """``kappa_bar / (sqrt kappa_bar - sqrt kappa)**4``."""
    return kappa_bar / (math.sqrt(kappa_bar) - math.sqrt(kappa)) ** 4


@dataclass(frozen=True)
class NonlinearizationReport:
    pointwise_violations: int
    upper_violations: int
    nodes: int
    norm: InequalityCheck


def pointwise_nonlinearization(g: np.ndarray, kappa: float, kappa_bar: float) -> tuple[np.ndarray, np.ndarray]:
    """Gaps of ``(g - kbar)_+ <= 6 F G**2`` and ``G**2 <= (g - kappa)_+``; both nonnegative when they hold.

    ``kappa`` and ``kappa_bar`` may be arrays broadcast against ``g``.
    """
    g = np.asarray(g, dtype=float)
    k = np.asarray(kappa, dtype=float)
    kb = np.asarray(kappa_bar, dtype=float)
    r = np.maximum(np.sqrt(g) - np.sqrt(k), 0.0)
    G2 = np.minimum(r, r * r) ** 2
    factor = kb / (np.sqrt(kb) - np.sqrt(k)) ** 4
    upper = np.maximum(g - k, 0.0) - G2
    main = 6.0 * factor * G2 - np.maximum(g - kb, 0.0)
    return main, upper


def nonlinearization_check(
    obj: DistributionField | Trajectory,
    cyl: ParabolicCylinder,
    kappa: float,
    kappa_bar: float,
    p: float = 5.0 / 3.0,
    q: float = 5.0 / 3.0,
    rtol: float = 1e-12,
) -> NonlinearizationReport:
    """Pointwise inequalities at every node of the cylinder, then both sides of the norm inequality."""
    _check_levels(kappa, kappa_bar)
    if abs(1.0 / p + 2.0 / (3.0 * q) - 1.0) > 1e-12:
        raise DomainError(f"need 1/p + 2/(3q) = 1, got p={p}, q={q}")
    traj, view = _window(obj, cyl)
    bad_main = bad_upper = nodes = 0
    for k in view.time_indices:
        g = traj[int(k)].values[view.spatial_mask]
        main, upper = pointwise_nonlinearization(g, kappa, kappa_bar)
        scale = np.maximum(np.abs(g), 1.0) * rtol
        bad_main += int(np.count_nonzero(main < -scale))
        bad_upper += int(np.count_nonzero(upper < -scale))
        nodes += g.size
    lhs = mixed_norm(obj, cyl, p, q, values=lambda s: np.maximum(s.values - kappa_bar, 0.0))
    h = traj.grid.h
    sup_part = view.sup_in_time(traj, lambda s: np.maximum(s.values - kappa, 0.0))

    def energy(s):
        w = np.maximum(np.sqrt(s.values) - math.sqrt(kappa), 0.0)
        return (grad(w, h) ** 2).sum(axis=0)

    rhs = nonlinearization_factor(kappa, kappa_bar) * (sup_part + view.integrate(traj, energy))
    return NonlinearizationReport(bad_main, bad_upper, nodes, InequalityCheck(lhs, rhs))


# --------------------------------------------------------------------------
# iteration identity


def iteration_sum(beta: float, n: int) -> tuple[float, float]:
    """``sum_{i<n} (n - i) beta**i`` directly and via ``(beta-1)**-2 (beta**(n+1) - (n+1)(beta-1) - 1)``."""
    if beta <= 1.0:
        raise DomainError(f"beta must exceed 1, got {beta}")
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    direct = math.fsum((n - i) * beta**i for i in range(n))
    closed = (beta ** (n + 1) - (n + 1) * (beta - 1.0) - 1.0) / (beta - 1.0) ** 2
    return direct, closed


def exponent_growth(N: int) -> tuple[float, float]:
    """``p(N+1) = sum_{i<=N} (N+1-i)(4/3)**i`` and its majorant ``12 (4/3)**(N+1)``."""
    direct, _ = iteration_sum(4.0 / 3.0, N + 1)
    return direct, 12.0 * (4.0 / 3.0) ** (N + 1)


def violations(gaps: Sequence[float] | np.ndarray, rtol: float = 0.0) -> int:
    """Number of negative gaps (below ``-rtol``)."""
    return int(np.count_nonzero(np.asarray(gaps, dtype=float) < -rtol))
