"""Level-set iteration, dyadic dissipation scans and the covering estimate."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .collision import dissipation_density, grad
from .diagnostics import _sqrt_gradient_sq
from .errors import ConfigError, DomainError, WindowError
from .fields import ParabolicCylinder, Trajectory, cylinder_restrict, require_window, scaled_solution
from .kernel import KernelModel


def m_star(gamma: float) -> float:
    """Dimension exponent ``1 + (5/2)|2 + gamma|``."""
    if not (-3.0 <= gamma < -2.0):
        raise DomainError(f"gamma must lie in [-3, -2), got {gamma}")
    return 1.0 + 2.5 * abs(2.0 + gamma)


# --------------------------------------------------------------------------
# schedules and the level-set functional


def radius_schedule(j: int | np.ndarray) -> np.ndarray:
    """``r_j = (1 + 2**-j) / 2``."""
    return 0.5 * (1.0 + np.power(2.0, -np.asarray(j, dtype=float)))


def level_schedule(j: int | np.ndarray) -> np.ndarray:
    """``kappa_j = 2 - 2**-j``."""
    return 2.0 - np.power(2.0, -np.asarray(j, dtype=float))


def half_level(j: int | np.ndarray) -> np.ndarray:
    """``kappa_{j+1/2}``, the midpoint of consecutive levels."""
    return 0.5 * (level_schedule(j) + level_schedule(np.asarray(j) + 1))


def eta_dg(c2: float) -> float:
    """``min(1/2, (2 C2)**-12 / 2)``."""
    return min(0.5, (2.0 * c2) ** -12 / 2.0)


def degiorgi_functional(traj_eps: Trajectory, j: int, model: KernelModel | None = None) -> float:
    """``U_j``: sup-in-time excess mass above ``kappa_j`` on ``B_{r_j}`` plus the level-restricted Fisher term.

    ``model`` is accepted for interface symmetry; the functional does not use the kernel.
    """
    r, kap = float(radius_schedule(j)), float(level_schedule(j))
    view = cylinder_restrict(traj_eps, ParabolicCylinder(0.0, (0.0, 0.0, 0.0), r))
    h = traj_eps.grid.h
    sup_part = view.sup_in_time(traj_eps, lambda s: np.maximum(s.values - kap, 0.0))
    energy = view.integrate(traj_eps, lambda s: _sqrt_gradient_sq(s.values, h) * (s.values >= kap))
    return sup_part + energy


@dataclass(frozen=True)
class DeGiorgiTrace:
    radii: np.ndarray
    levels: np.ndarray
    U: np.ndarray
    Z: float
    C2: float
    eta: float


def degiorgi_trace(traj_eps: Trajectory, j_max: int, Z: float, C2: float) -> DeGiorgiTrace:
    js = np.arange(j_max + 1)
    U = np.array([degiorgi_functional(traj_eps, int(j)) for j in js])
    return DeGiorgiTrace(radius_schedule(js), level_schedule(js), U, Z, C2, eta_dg(C2))


@dataclass(frozen=True)
class RecurrenceResult:
    log_U: np.ndarray
    log_V: np.ndarray
    threshold: float
    vanishes: bool
    bound_violations: int

    @property
    def U(self) -> np.ndarray:
        return np.exp(self.log_U)

    @property
    def V(self) -> np.ndarray:
        return np.exp(self.log_V)


def degiorgi_recurrence_simulator(U0: float, Z_eps: float, C2: float, j_max: int) -> RecurrenceResult:
    """Iterate ``U_{j+1} = C2**(j+1) (U_j**(4/3) + Z U_j**(5/3))`` at equality, in log space.

    The verdict ``vanishes`` is ``U0 <= eta Z**(-3/2)``.  When it holds, every
    ``V_j = Z**(3/2) U_j`` is compared with ``(1/2)**((4/3)**j)`` and violations
    are counted.
    """
    if U0 < 0.0:
        raise DomainError("U0 must be nonnegative")
    if Z_eps < 1.0 or C2 < 1.0:
        raise DomainError("Z_eps and C2 must be >= 1")
    eta = eta_dg(C2)
    threshold = eta * Z_eps**-1.5
    log_u = np.empty(j_max + 1)
    log_u[0] = math.log(U0) if U0 > 0.0 else -math.inf
    log_z, log_c = math.log(Z_eps), math.log(C2)
    for j in range(j_max):
        lu = log_u[j]
        if lu == -math.inf or lu == math.inf:
            log_u[j + 1] = lu
            continue
        # log(U^(4/3) + Z U^(5/3)) = (4/3) lu + log(1 + exp(log Z + lu/3))
        log_u[j + 1] = (j + 1) * log_c + (4.0 / 3.0) * lu + np.logaddexp(0.0, log_z + lu / 3.0)
    log_v = 1.5 * log_z + log_u
    vanishes = U0 <= threshold
    violations = 0
    if vanishes:
        bound = (4.0 / 3.0) ** np.arange(j_max + 1) * math.log(0.5)
        violations = int(np.count_nonzero(log_v > bound + 1e-12 * np.abs(bound)))
    return RecurrenceResult(log_u, log_v, threshold, vanishes, violations)


@dataclass(frozen=True)
class CertifyResult:
    hypothesis: float
    threshold: float
    grid_max: float
    hypothesis_holds: bool
    conclusion_holds: bool
    certified: bool
    discretization_alert: bool


def certify_zoomed(traj_eps: Trajectory, Z_eps: float, eta: float, slack: float = 1e-9) -> CertifyResult:
    """Level-set criterion on a zoomed trajectory that covers ``Q_2``."""
    grid = traj_eps.grid
    view2 = cylinder_restrict(traj_eps, ParabolicCylinder(0.0, (0.0, 0.0, 0.0), 2.0))
    if view2.time_indices.size == 0:
        raise WindowError("zoomed trajectory has no snapshot in (-4, 0]")
    h = grid.h
    sup_part = view2.sup_in_time(traj_eps, lambda s: np.maximum(s.values - 1.0, 0.0))
    energy = view2.integrate(traj_eps, lambda s: _sqrt_gradient_sq(s.values, h) * (s.values >= 1.0))
    hyp = sup_part + energy
    threshold = eta * Z_eps**-1.5
    half = cylinder_restrict(traj_eps, ParabolicCylinder(0.0, (0.0, 0.0, 0.0), 0.5))
    gmax = 0.0
    for k in half.time_indices:
        vals = traj_eps[int(k)].values[half.spatial_mask]
        if vals.size:
            gmax = max(gmax, float(vals.max()))
    holds = hyp <= threshold
    concl = gmax <= 2.0 + slack
    return CertifyResult(hyp, threshold, gmax, holds, concl, holds and concl, holds and not concl)


def degiorgi_certify(
    traj: Trajectory,
    t0: float,
    v0: Sequence[float],
    eps: float,
    Z_eps: float,
    eta_DG: float,
    n_per_axis: int = 32,
    slack: float = 1e-9,
) -> CertifyResult:
    """Zoom around ``(t0, v0)`` at scale ``eps`` and test the level-set criterion on ``Q_2``."""
    zoom = scaled_solution(traj, t0, v0, eps, n_per_axis, 2.0, t_window=4.0)
    return certify_zoomed(zoom, Z_eps, eta_DG, slack)


# --------------------------------------------------------------------------
# dyadic scans


@dataclass(frozen=True)
class ScaleScan:
    """``D_j`` per scale; ``None`` marks coarse scales whose time window precedes the run."""

    seed: tuple[float, float, float, float]
    lam: float
    D: tuple[float | None, ...]
    floor_index: int | None
    floor_reason: str

    @property
    def finest(self) -> int | None:
        """Index of the finest scale with a value."""
        idx = [j for j, d in enumerate(self.D) if d is not None]
        return idx[-1] if idx else None

    @property
    def finest_value(self) -> float | None:
        j = self.finest
        return None if j is None else self.D[j]

    def manifest(self, flagged: bool = False) -> dict:
        return {
            "seed": list(self.seed),
            "lambda": self.lam,
            "D": list(self.D),
            "flagged": bool(flagged),
            "floor_index": self.floor_index,
            "floor_reason": self.floor_reason,
        }


class _IntegrandCache:
    """Per-snapshot ``|D sqrt f|**2 + sum_w |F|**2 h**3``, computed once per trajectory."""

    def __init__(self, traj: Trajectory, model: KernelModel) -> None:
        self.traj = traj
        self.model = model
        self._store: dict[int, np.ndarray] = {}

    def __call__(self, k: int) -> np.ndarray:
        if k not in self._store:
            snap = self.traj[k]
            h = snap.grid.h
            val = _sqrt_gradient_sq(snap.values, h)
            if snap.values.any():
                val = val + dissipation_density(snap, self.model)
            self._store[k] = val
        return self._store[k]


_CACHES: dict[tuple[int, KernelModel], _IntegrandCache] = {}


def _cache_for(traj: Trajectory, model: KernelModel) -> _IntegrandCache:
    key = (id(traj), model)
    cache = _CACHES.get(key)
    if cache is None or cache.traj is not traj:
        if len(_CACHES) > 8:
            _CACHES.clear()
        cache = _CACHES[key] = _IntegrandCache(traj, model)
    return cache


def scan_density(traj: Trajectory, t0: float, v0: Sequence[float], eps: float, model: KernelModel, gamma: float) -> float:
    """``eps**(-m*) int_{Q_{2 eps}(t0, v0)} (|grad sqrt f|**2 + int |F|**2 dw)``."""
    cyl = ParabolicCylinder(t0, v0, 2.0 * eps)
    view = cylinder_restrict(traj, cyl)
    require_window(view, traj, "dissipation scan")
    cache = _cache_for(traj, model)
    total = 0.0
    for k in view.time_indices:
        total += float(cache(int(k))[view.spatial_mask].sum())
    total *= view.cell_volume * view.time_weight
    return eps ** (-m_star(gamma)) * total


def dissipation_scan(
    traj: Trajectory,
    t0: float,
    v0: Sequence[float],
    lam: float,
    j_max: int,
    model: KernelModel,
) -> ScaleScan:
    """``D_j`` at ``eps_j = lam**j`` for ``j = 0..j_max``.

    Scales whose window ``(t0 - 4 eps_j**2, t0]`` starts before the first
    snapshot are skipped.  The scan stops at the first scale with
    ``h > eps_j / 4`` or without a saved snapshot in its window.
    """
    if not (0.0 < lam < 0.25):
        raise DomainError(f"lambda must lie in (0, 1/4), got {lam}")
    seed = (float(t0),) + tuple(float(x) for x in v0)
    times = traj.times
    tol = 1e-9 * traj.save_interval
    values: list[float | None] = []
    floor, reason = None, ""
    for j in range(j_max + 1):
        eps = lam**j
        if traj.grid.h > eps / 4.0:
            floor, reason = j, f"grid spacing {traj.grid.h:.4g} exceeds eps/4 = {eps / 4:.4g}"
            break
        if t0 - 4.0 * eps**2 < times[0] - tol:
            values.append(None)
            continue
        in_window = (times > t0 - 4.0 * eps**2 + tol) & (times <= t0 + tol)
        if not in_window.any():
            floor, reason = j, f"no saved snapshot inside the time window of length {4 * eps**2:.4g}"
            break
        values.append(scan_density(traj, t0, v0, eps, model, model.gamma))
    return ScaleScan(seed, lam, tuple(values), floor, reason)


def scan_via_zoom(
    traj: Trajectory, t0: float, v0: Sequence[float], eps: float, model: KernelModel, n_per_axis: int | None = None
) -> float:
    """Same density through the zoomed trajectory: ``eps**(1 - m*) int_{Q_2} (...)`` with kernel ``k(eps|z|)/|z|``.

    The zoom window is the largest cube around ``v0`` inside the source box,
    which is the whole box for ``v0 = 0``.  A window reaching past the box
    would meet the zero extension there, and the jump would show up as a huge
    log-gradient in the pair dissipation.  By default the zoomed spacing is
    ``h / eps``, which puts zoomed nodes on source nodes when ``v0`` is a node.
    """
    src = traj.grid
    if model.n_reg * eps < 1.0:
        raise ConfigError(f"zoomed regularization n_reg * eps = {model.n_reg * eps:.4g} is below 1")
    reach = src.half_extent - float(np.max(np.abs(np.asarray(v0, dtype=float))))
    if reach < 2.0 * eps + src.h:
        raise WindowError(f"seed {tuple(v0)} is too close to the box edge for a zoom at eps={eps}")
    if n_per_axis is None:
        n_per_axis = 2 * int(math.floor(reach / src.h + 1e-9))
        lam = n_per_axis * src.h / (2.0 * eps)
    else:
        lam = reach / eps
    zoom = scaled_solution(traj, t0, v0, eps, n_per_axis, lam, t_window=4.0)
    view = cylinder_restrict(zoom, ParabolicCylinder(0.0, (0.0, 0.0, 0.0), 2.0))
    zoom_model = KernelModel(model.gamma, model.delta, model.n_reg * eps)
    scale = eps ** (model.gamma + 3.0)
    h = zoom.grid.h

    def integrand(s):
        val = _sqrt_gradient_sq(s.values, h)
        if s.values.any():
            val = val + dissipation_density(s, zoom_model, scale=scale)
        return val

    return eps ** (1.0 - m_star(model.gamma)) * view.integrate(zoom, integrand)


# --------------------------------------------------------------------------
# covering


def vitali_expansion(cyl: ParabolicCylinder, factor: float = 5.0) -> ParabolicCylinder:
    """Cylinder of radius ``factor * r`` with top time ``t0 + r**2``.

    Cylinders reach only into the past, so a cylinder that meets ``Q_r(t0, v0)``
    may end up to ``r**2`` after ``t0``.  Lifting the top by ``r**2`` makes the
    ``5r`` cylinder contain every cylinder of radius at most ``r`` that meets
    the original.
    """
    return ParabolicCylinder(cyl.t0 + cyl.r**2, cyl.v0, factor * cyl.r)


def vitali_cover(cylinders: Sequence[ParabolicCylinder], priority: Sequence[float] | None = None) -> list[int]:
    """Greedy disjoint subfamily, processed by decreasing radius.

    Ties are broken by decreasing ``priority`` (default: input order).  Returns
    indices into ``cylinders``.
    """
    for c in cylinders:
        if not (0.0 < c.r < 1.0):
            raise ConfigError(f"cylinder radius must lie in (0, 1), got {c.r}")
    prio = np.zeros(len(cylinders)) if priority is None else np.asarray(priority, dtype=float)
    order = sorted(range(len(cylinders)), key=lambda i: (-cylinders[i].r, -prio[i], i))
    chosen: list[int] = []
    for i in order:
        if all(not cylinders[i].intersects(cylinders[k]) for k in chosen):
            chosen.append(i)
    return chosen


def cover_violations(cylinders: Sequence[ParabolicCylinder], chosen: Sequence[int], literal: bool = False) -> int:
    """Inputs not contained in the expansion of any chosen cylinder (brute force)."""
    expand = (lambda c: c.scaled(5.0)) if literal else vitali_expansion
    expansions = [expand(cylinders[k]) for k in chosen]
    return sum(1 for c in cylinders if not any(e.contains_cylinder(c) for e in expansions))


def disjointness_violations(cylinders: Sequence[ParabolicCylinder], chosen: Sequence[int]) -> int:
    return sum(
        1 for a in range(len(chosen)) for b in range(a + 1, len(chosen)) if cylinders[chosen[a]].intersects(cylinders[chosen[b]])
    )


@dataclass(frozen=True)
class ScanResult:
    scans: tuple[ScaleScan, ...]
    flagged: tuple[int, ...]
    cylinders: tuple[ParabolicCylinder, ...]
    selected: tuple[int, ...]
    hausdorff_bound: float
    eta_plus: float
    m_star: float
    notes: tuple[str, ...] = field(default=())

    def manifest(self) -> dict:
        flagged = set(self.flagged)
        return {
            "scans": [s.manifest(i in flagged) for i, s in enumerate(self.scans)],
            "eta_plus": self.eta_plus,
            "m_star": self.m_star,
            "flagged": len(self.flagged),
            "selected": [
                {"t0": self.cylinders[k].t0, "v0": list(self.cylinders[k].v0), "r": self.cylinders[k].r}
                for k in self.selected
            ],
            "hausdorff_bound": self.hausdorff_bound,
        }


def hausdorff_upper_bound(scans: Sequence[ScaleScan], eta_plus: float, mstar: float) -> ScanResult:
    """Flag seeds with ``D > 2 eta_plus`` at their finest resolved scale and return ``sum (5 r)**m*``.

    Each flagged seed is covered by ``Q_{eps_j}`` at that scale.  The covering
    processes equal radii by decreasing ``D``, so raising ``eta_plus`` removes
    a suffix of the processing order and the bound cannot grow.
    """
    lams = {s.lam for s in scans}
    if len(lams) > 1:
        raise ConfigError(f"scans use different lambda values: {sorted(lams)}")
    flagged, cyls, prio = [], [], []
    for i, s in enumerate(scans):
        value = s.finest_value
        if value is None:
            continue
        if value > 2.0 * eta_plus:
            r = s.lam ** s.finest
            if r >= 1.0:
                raise DomainError(f"seed {s.seed} is flagged but no scale below 1 is resolved")
            flagged.append(i)
            cyls.append(ParabolicCylinder(s.seed[0], s.seed[1:], r))
            prio.append(value)
    chosen = vitali_cover(cyls, prio)
    bound = float(sum((5.0 * cyls[k].r) ** mstar for k in chosen))
    return ScanResult(tuple(scans), tuple(flagged), tuple(cyls), tuple(chosen), bound, eta_plus, mstar)
