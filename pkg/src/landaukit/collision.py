"""Diffusion matrix, drift, collision right-hand side and pair dissipation.

Discretization
--------------
``D`` is the grid gradient of :func:`numpy.gradient` with second-order
one-sided rows at the box faces.  It is exact on polynomials of degree two.
The discrete divergence is ``-D^T``, so ``sum_v phi * (-D^T J) = -sum_v
D(phi) . J`` holds exactly for every grid function ``phi``.

The default ``"divergence"`` form writes the flux as the pair integral

    J(v) = sum_w a_n(v - w) f(v) f(w) (g(v) - g(w)) h**3,   g = D ln f,

evaluated with FFT convolutions.  Because ``D`` is exact on ``1, v, |v|**2``
and ``a_n(z) z = 0``, this form conserves mass, momentum and energy up to
round-off.  It dissipates ``sum f ln f``, and it vanishes identically on
every discrete Maxwellian.  The ``"divergence_drift"`` form uses the drift
``(div a_n) * f`` directly, and ``"nondivergence"`` is the Coulomb form
``Tr[A D^2 f] + c f**2``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _accel
from .errors import ConfigError, DomainError
from .fields import DistributionField, VelocityGrid
from .kernel import SYM_INDEX, KernelModel, kernel_hessian_trace, kernel_sqrt, packed_components, packed_divergence

logger = logging.getLogger(__name__)

LOG_FLOOR = 1e-30
FORMS = ("divergence", "divergence_drift", "nondivergence")


# --------------------------------------------------------------------------
# grid operators


@lru_cache(maxsize=32)
def gradient_matrix(n: int, h: float) -> np.ndarray:
    """Dense 1-D matrix of :func:`numpy.gradient` with ``edge_order=2``."""
    return np.gradient(np.eye(n), h, axis=0, edge_order=2)


def _apply_along(mat: np.ndarray, values: np.ndarray, axis: int) -> np.ndarray:
    moved = np.moveaxis(values, axis, 0)
    out = np.tensordot(mat, moved, axes=(1, 0))
    return np.moveaxis(out, 0, axis)


def grad(values: np.ndarray, h: float) -> np.ndarray:
    """Grid gradient, shape ``(3,) + values.shape``."""
    return np.stack(np.gradient(values, h, edge_order=2))


def div(flux: np.ndarray, h: float) -> np.ndarray:
    """Discrete divergence ``-D^T`` of a vector field of shape ``(3, n, n, n)``."""
    n = flux.shape[1]
    mat = gradient_matrix(n, h).T
    return -sum(_apply_along(mat, flux[a], a) for a in range(3))


def second_difference(values: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Three-point second difference with zero values beyond the box."""
    padded = np.pad(values, [(1, 1) if a == axis else (0, 0) for a in range(values.ndim)])
    sl = [slice(None)] * values.ndim

    def take(start: int, stop: int | None) -> np.ndarray:
        sl[axis] = slice(start, stop)
        return padded[tuple(sl)]

    return (take(2, None) - 2.0 * take(1, -1) + take(0, -2)) / h**2


def log_gradient(values: np.ndarray, h: float, kappa: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """``D ln f`` (or ``D ln_+(f/kappa)``) with ``f`` clamped at ``1e-30 * peak``.

    Returns the gradient and the boolean mask of nodes above the floor.
    """
    peak = float(values.max()) if values.size else 0.0
    if peak <= 0.0:
        return np.zeros((3,) + values.shape), np.zeros(values.shape, dtype=bool)
    floor = LOG_FLOOR * peak
    logs = np.log(np.maximum(values, floor))
    if kappa is not None:
        logs = np.maximum(logs - math.log(kappa), 0.0)
    return grad(logs, h), values >= floor


# --------------------------------------------------------------------------
# resolution policy


def regularization_for_grid(grid: VelocityGrid) -> float:
    """Mollification index with ``1/n = 3h``, the middle of the admissible band ``[2h, 4h]``."""
    return max(1.0, 1.0 / (3.0 * grid.h))


def check_resolution(model: KernelModel, grid: VelocityGrid) -> None:
    """Reject a mollification scale the grid cannot see: ``1/(2n) < h/2``."""
    if 1.0 / (2.0 * model.n_reg) < grid.h / 2.0:
        raise ConfigError(
            f"n_reg={model.n_reg} cuts the kernel off at 1/(2n)={1 / (2 * model.n_reg):.4g}, "
            f"below half the grid spacing h/2={grid.h / 2:.4g}"
        )


# --------------------------------------------------------------------------
# FFT convolution plan


def _offset_axis(n: int, h: float) -> np.ndarray:
    idx = np.arange(2 * n)
    return np.where(idx < n, idx, idx - 2 * n) * h


class ConvolutionPlan:
    """Cached kernel transforms for linear convolution on one grid.

    The grid is zero-padded to ``2n`` points per axis, so the circular FFT
    product realizes the aperiodic sum ``sum_w K(v - w) u(w) h**3`` over the box.
    """

    def __init__(self, grid: VelocityGrid, model: KernelModel) -> None:
        self.grid = grid
        self.model = model
        self._cache: dict[tuple[str, str], np.ndarray] = {}
        ax = _offset_axis(grid.n, grid.h)
        self._offsets = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1)

    @property
    def offsets(self) -> np.ndarray:
        return self._offsets

    def _transform(self, samples: np.ndarray) -> np.ndarray:
        return np.fft.rfftn(samples * self.grid.cell_volume, axes=(-3, -2, -1))

    def matrix_kernel(self, variant: str) -> np.ndarray:
        key = ("matrix", variant)
        if key not in self._cache:
            self._cache[key] = self._transform(packed_components(self._offsets, self.model, variant))
        return self._cache[key]

    def divergence_kernel(self, variant: str) -> np.ndarray:
        key = ("divergence", variant)
        if key not in self._cache:
            self._cache[key] = self._transform(packed_divergence(self._offsets, self.model, variant))
        return self._cache[key]

    def scalar_kernel(self, name: str, samples_fn) -> np.ndarray:
        key = ("scalar", name)
        if key not in self._cache:
            self._cache[key] = self._transform(samples_fn(self._offsets))
        return self._cache[key]

    def forward(self, values: np.ndarray) -> np.ndarray:
        n = self.grid.n
        return np.fft.rfftn(values, s=(2 * n, 2 * n, 2 * n), axes=(-3, -2, -1))

    def backward(self, spectrum: np.ndarray) -> np.ndarray:
        n = self.grid.n
        full = np.fft.irfftn(spectrum, s=(2 * n, 2 * n, 2 * n), axes=(-3, -2, -1))
        return full[..., :n, :n, :n]


_PLANS: dict[tuple[VelocityGrid, KernelModel], ConvolutionPlan] = {}


def plan_for(grid: VelocityGrid, model: KernelModel) -> ConvolutionPlan:
    key = (grid, model)
    if key not in _PLANS:
        if len(_PLANS) > 16:
            _PLANS.clear()
        _PLANS[key] = ConvolutionPlan(grid, model)
    return _PLANS[key]


# --------------------------------------------------------------------------
# matrix fields


@dataclass(frozen=True, eq=False)
class MatrixField:
    """One symmetric 3x3 matrix per node, stored as six packed components."""

    grid: VelocityGrid
    components: np.ndarray

    def as_matrices(self) -> np.ndarray:
        out = np.empty(self.grid.shape + (3, 3))
        for c, (i, j) in enumerate(SYM_INDEX):
            out[..., i, j] = self.components[c]
            out[..., j, i] = self.components[c]
        return out

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.as_matrices())

    def apply(self, vec: np.ndarray) -> np.ndarray:
        """Node-wise product with a vector field of shape ``(3, n, n, n)``."""
        return matvec(self.components, vec)

    def is_psd(self) -> bool:
        eig = self.eigenvalues()
        scale = max(float(np.abs(eig).max()), 1e-300)
        return bool(eig.min() >= -1e-12 * scale)


def matvec(comp: np.ndarray, vec: np.ndarray) -> np.ndarray:
    xx, yy, zz, xy, xz, yz = comp
    return np.stack(
        [
            xx * vec[0] + xy * vec[1] + xz * vec[2],
            xy * vec[0] + yy * vec[1] + yz * vec[2],
            xz * vec[0] + yz * vec[1] + zz * vec[2],
        ]
    )


def _convolve_packed(plan: ConvolutionPlan, spectrum_u: np.ndarray, variant: str) -> np.ndarray:
    return plan.backward(plan.matrix_kernel(variant) * spectrum_u[None])


def diffusion_matrix(f: DistributionField, model: KernelModel, variant: str = "mollified") -> MatrixField:
    """``A = a_variant * f`` by zero-padded FFT convolution."""
    if "mollified" in variant:
        check_resolution(model, f.grid)
    plan = plan_for(f.grid, model)
    comps = _convolve_packed(plan, plan.forward(f.values), variant)
    return MatrixField(f.grid, comps)


def diffusion_matrix_direct(f: DistributionField, model: KernelModel, variant: str = "mollified") -> MatrixField:
    """Same quantity by direct summation over all node pairs (O(N**6) oracle)."""
    grid = f.grid
    pts = grid.points
    comps = _accel.direct_matrix_convolution(pts, pts, f.values.ravel(), grid.cell_volume, model, variant)
    return MatrixField(grid, comps.T.reshape((6,) + grid.shape))


def drift_field(f: DistributionField, model: KernelModel, variant: str = "mollified") -> np.ndarray:
    """``b = (div a_variant) * f``, shape ``(3, n, n, n)``."""
    if "mollified" in variant:
        check_resolution(model, f.grid)
    plan = plan_for(f.grid, model)
    return plan.backward(plan.divergence_kernel(variant) * plan.forward(f.values)[None])


def smeared_dirac_mass(grid: VelocityGrid, model: KernelModel) -> float:
    """Lattice sum of ``-div div a_n``: the measured mass of the mollified point mass."""
    plan = plan_for(grid, model)
    z = plan.offsets.reshape(-1, 3)
    r = np.linalg.norm(z, axis=1)
    keep = r > 0.0
    vals = -kernel_hessian_trace(z[keep], model, "mollified")
    return float(vals.sum() * grid.cell_volume)


# --------------------------------------------------------------------------
# right-hand side


@dataclass(frozen=True, eq=False)
class FluxParts:
    """Ingredients of the pair-form flux, reused by the stepper and dissipation."""

    matrix: np.ndarray
    log_grad: np.ndarray
    cross: np.ndarray
    weights: np.ndarray


def flux_parts(
    f: DistributionField,
    model: KernelModel,
    variant: str = "mollified",
    kappa: float | None = None,
) -> FluxParts:
    """``A = a * w``, ``g = D ln f`` and ``C = a * (w g)`` with ``w = f`` masked at the log floor."""
    if "mollified" in variant:
        check_resolution(model, f.grid)
    plan = plan_for(f.grid, model)
    g, above = log_gradient(f.values, f.grid.h, kappa)
    w = np.where(above, f.values, 0.0)
    kern = plan.matrix_kernel(variant)
    spec_w = plan.forward(w)
    spec_wg = plan.forward(w[None] * g)
    comps = plan.backward(kern * spec_w[None])
    xx, yy, zz, xy, xz, yz = kern
    s0, s1, s2 = spec_wg
    cross_spec = np.stack(
        [xx * s0 + xy * s1 + xz * s2, xy * s0 + yy * s1 + yz * s2, xz * s0 + yz * s1 + zz * s2]
    )
    return FluxParts(comps, g, plan.backward(cross_spec), w)


def pair_flux(parts: FluxParts) -> np.ndarray:
    """``J = w (A g - C)``."""
    return parts.weights[None] * (matvec(parts.matrix, parts.log_grad) - parts.cross)


def collision_rhs(f: DistributionField, model: KernelModel, form: str = "divergence") -> np.ndarray:
    """Collision operator ``Q_n(f, f)`` on the grid in one of :data:`FORMS`."""
    if form not in FORMS:
        raise ConfigError(f"unknown form {form!r}; choose from {FORMS}")
    h = f.grid.h
    if not np.any(f.values):
        return np.zeros(f.grid.shape)
    if form == "divergence":
        return div(pair_flux(flux_parts(f, model)), h)
    if form == "divergence_drift":
        a = diffusion_matrix(f, model)
        b = drift_field(f, model)
        flux = a.apply(grad(f.values, h)) - b * f.values[None]
        return div(flux, h)
    if model.gamma != -3.0:
        raise DomainError("the nondivergence form is only available for gamma = -3")
    a = diffusion_matrix(f, model).components
    d = grad(f.values, h)
    trace = sum(a[c] * second_difference(f.values, h, c) for c in range(3))
    for c, (i, j) in enumerate(SYM_INDEX[3:], start=3):
        trace = trace + 2.0 * a[c] * np.gradient(d[j], h, axis=i, edge_order=2)
    return trace + smeared_dirac_mass(f.grid, model) * f.values**2


# --------------------------------------------------------------------------
# pair dissipation


@dataclass(frozen=True, eq=False)
class DissipationReport:
    """Sampled pair fields and the total ``1/2 sum |F|**2`` on the sampled pair set."""

    indices: np.ndarray
    pair_values: np.ndarray | None
    total: float
    masked_nodes: int
    stride: int


def _subsample(f: DistributionField, stride: int) -> tuple[np.ndarray, np.ndarray]:
    if stride < 1:
        raise ConfigError(f"subsample stride must be >= 1, got {stride}")
    n = f.grid.n
    sel = np.arange(0, n, stride)
    ii, jj, kk = np.meshgrid(sel, sel, sel, indexing="ij")
    idx = np.stack([ii.ravel(), jj.ravel(), kk.ravel()], axis=1)
    return idx, f.grid.index_to_coordinate(idx)


def dissipation_pairs(
    f: DistributionField,
    model: KernelModel,
    subsample: int = 1,
    variant: str = "mollified",
    kappa: float | None = None,
    keep_pairs: bool = False,
    use_numba: bool | None = None,
) -> DissipationReport:
    """Pair field ``F(v, w) = sqrt(a(v - w)) sqrt(f(v) f(w)) (g(v) - g(w))`` on a node subsample.

    ``g`` is ``D ln f`` (or ``D ln_+(f/kappa)``).  The total is the brute-force
    sum ``1/2 sum |F|**2 (stride h)**6``; with ``stride=1`` it equals
    :func:`dissipation_total` up to round-off.  Nodes below the log floor are
    skipped and counted.
    """
    g, above = log_gradient(f.values, f.grid.h, kappa)
    idx, pts = _subsample(f, subsample)
    fv = f.values[idx[:, 0], idx[:, 1], idx[:, 2]]
    ok = above[idx[:, 0], idx[:, 1], idx[:, 2]]
    fv = np.where(ok, fv, 0.0)
    gv = g[:, idx[:, 0], idx[:, 1], idx[:, 2]].T
    weight = (subsample * f.grid.h) ** 3
    total = _accel.direct_pair_dissipation(pts, fv, gv, weight, model, variant, use_numba=use_numba)
    pair_values = None
    if keep_pairs:
        z = pts[:, None, :] - pts[None, :, :]
        root = _sqrt_with_zero_diagonal(z, model, variant)
        diff = gv[:, None, :] - gv[None, :, :]
        amp = np.sqrt(fv[:, None] * fv[None, :])
        pair_values = amp[..., None] * np.einsum("pqij,pqj->pqi", root, diff)
    return DissipationReport(idx, pair_values, float(total), int(np.count_nonzero(~above)), subsample)


def _sqrt_with_zero_diagonal(z: np.ndarray, model: KernelModel, variant: str) -> np.ndarray:
    r = np.linalg.norm(z, axis=-1)
    out = np.zeros(z.shape[:-1] + (3, 3))
    nz = r > 0.0
    out[nz] = kernel_sqrt(z[nz], model, variant)
    return out


def pair_quadratic_form(
    weights: np.ndarray,
    vectors: np.ndarray,
    grid: VelocityGrid,
    model: KernelModel,
    variant: str,
) -> float:
    """``1/2 sum_{v,w} w_v w_w (G_v - G_w).a(v - w)(G_v - G_w) h**6`` by FFT convolutions."""
    plan = plan_for(grid, model)
    kern = plan.matrix_kernel(variant)
    mat = plan.backward(kern * plan.forward(weights)[None])
    spec = plan.forward(weights[None] * vectors)
    xx, yy, zz, xy, xz, yz = kern
    s0, s1, s2 = spec
    cross = plan.backward(
        np.stack([xx * s0 + xy * s1 + xz * s2, xy * s0 + yy * s1 + yz * s2, xz * s0 + yz * s1 + zz * s2])
    )
    flux = weights[None] * (matvec(mat, vectors) - cross)
    return float(np.sum(vectors * flux) * grid.cell_volume)


def dissipation_total(
    f: DistributionField,
    model: KernelModel,
    variant: str = "mollified",
    kappa: float | None = None,
) -> float:
    """Fast ``1/2 sum_{v,w} |F(v,w)|**2 h**6`` through the flux identity ``sum_v g . J h**3``."""
    parts = flux_parts(f, model, variant, kappa)
    return float(np.sum(parts.log_grad * pair_flux(parts)) * f.grid.cell_volume)


def dissipation_density(
    f: DistributionField,
    model: KernelModel,
    variant: str = "mollified",
    kappa: float | None = None,
    scale: float = 1.0,
) -> np.ndarray:
    """Per-node ``sum_w |F(v, w)|**2 h**3`` for the kernel ``scale * a_variant``.

    Expands ``|F|**2 = f(v) f(w) (g_v - g_w).a(g_v - g_w)`` into three
    convolutions.
    """
    parts = flux_parts(f, model, variant, kappa)
    plan = plan_for(f.grid, model)
    w, g = parts.weights, parts.log_grad
    kern = plan.matrix_kernel(variant)
    third = np.zeros(f.grid.shape)
    for c, (i, j) in enumerate(SYM_INDEX):
        factor = 1.0 if i == j else 2.0
        third += factor * plan.backward(kern[c] * plan.forward(w * g[i] * g[j]))
    first = np.sum(g * matvec(parts.matrix, g), axis=0)
    second = np.sum(g * parts.cross, axis=0)
    return scale * w * (first - 2.0 * second + third)
