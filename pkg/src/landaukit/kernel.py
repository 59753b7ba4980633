"""Matrix collision kernel for very soft power-law interactions.

The kernel is ``a(z) = k(|z|)/|z| * Pi(z)`` with ``k(r) = r**(gamma + 3)`` and
``Pi(z)`` the orthogonal projection onto the plane normal to ``z``.  Every
variant used by the solver and the diagnostics is obtained by multiplying
``k`` with a radial cutoff factor ``c(r)``, so a variant is fully described
by the radial profile ``K(r) = k(r) c(r)``:

* matrix        ``K(r)/r * Pi(z)``
* divergence    ``-2 K(r) z / r**3``
* Hessian trace ``-2 K'(r) / r**2`` (absolutely continuous part)

The Coulomb case ``gamma = -3`` also carries a point mass ``-8 pi k(0)`` at
the origin in the Hessian trace.  Point masses cannot live on a grid, so it
is exposed separately through :func:`dirac_weight`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import ConfigError, DomainError

Variant = Literal[
    "full",
    "mollified",
    "in_part",
    "out_part",
    "in_part_mollified",
    "out_part_mollified",
]

VARIANTS: tuple[str, ...] = (
    "full",
    "mollified",
    "in_part",
    "out_part",
    "in_part_mollified",
    "out_part_mollified",
)

# Variants whose profile vanishes near the origin; they extend by zero at z = 0.
_REGULAR_AT_ORIGIN = frozenset({"mollified", "out_part", "in_part_mollified", "out_part_mollified"})

# Upper-triangle component order used for packed symmetric matrices.
SYM_INDEX: tuple[tuple[int, int], ...] = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))


class C2Cutoff:
    """Monotone C^2 transition from 0 on ``(-inf, 1/2]`` to 1 on ``[1, inf)``.

    In the variable ``s = 2r - 1`` the slope ``P'(s)`` rises along a cubic
    smoothstep to 3/2, stays flat on the middle third and falls back
    symmetrically.  Hence ``X'(r) = 2 P'(s)`` peaks at exactly 3.
    """

    third = 1.0 / 3.0
    max_slope = 3.0

    def _left(self, s: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        a = self.third
        x = s / a
        p = 1.5 * a * (x**3 - 0.5 * x**4)
        dp = 1.5 * (3.0 * x**2 - 2.0 * x**3)
        d2p = 1.5 * (6.0 * x - 6.0 * x**2) / a
        return p, dp, d2p

    def evaluate(self, r: np.ndarray | float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return ``(X, X', X'')`` at ``r``."""
        r = np.asarray(r, dtype=float)
        s = np.clip(2.0 * r - 1.0, 0.0, 1.0)
        a = self.third
        value = np.zeros_like(s)
        slope = np.zeros_like(s)
        curve = np.zeros_like(s)

        lo = s < a
        mid = (s >= a) & (s <= 1.0 - a)
        hi = s > 1.0 - a

        p, dp, d2p = self._left(s[lo])
        value[lo], slope[lo], curve[lo] = p, dp, d2p

        value[mid] = 0.25 + 1.5 * (s[mid] - a)
        slope[mid] = 1.5

        p, dp, d2p = self._left(1.0 - s[hi])
        value[hi], slope[hi], curve[hi] = 1.0 - p, dp, -d2p

        inside = (r > 0.5) & (r < 1.0)
        slope = np.where(inside, 2.0 * slope, 0.0)
        curve = np.where(inside, 4.0 * curve, 0.0)
        return value, slope, curve

    def __call__(self, r: np.ndarray | float) -> np.ndarray:
        return self.evaluate(r)[0]

    def derivative(self, r: np.ndarray | float) -> np.ndarray:
        return self.evaluate(r)[1]


CUTOFF = C2Cutoff()


@dataclass(frozen=True)
class KernelModel:
    """Power-law kernel with its split radius and mollification index.

    ``n_reg`` may be any real number at least 1; the mollified kernel vanishes
    for ``|z| <= 1/(2 n_reg)`` and coincides with the full kernel for
    ``|z| >= 1/n_reg``.
    """

    gamma: float = -3.0
    delta: float = 0.5
    n_reg: float = 4.0
    cutoff: C2Cutoff = CUTOFF

    def __post_init__(self) -> None:
        if not (-3.0 <= self.gamma < -2.0):
            raise ConfigError(f"gamma must lie in [-3, -2), got {self.gamma}")
        if not (0.0 < self.delta < 1.0):
            raise ConfigError(f"delta must lie in (0, 1), got {self.delta}")
        if not self.n_reg >= 1.0:
            raise ConfigError(f"n_reg must be >= 1, got {self.n_reg}")

    @property
    def gamma_star(self) -> float:
        return -(self.gamma + 2.0)

    @property
    def k0(self) -> float:
        """Limit of ``k(r)`` as ``r -> 0``: 1 in the Coulomb case, else 0."""
        return 1.0 if self.gamma == -3.0 else 0.0

    def k(self, r: np.ndarray | float) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.gamma == -3.0:
            return np.ones_like(r)
        return r ** (self.gamma + 3.0)

    def dk(self, r: np.ndarray | float) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.gamma == -3.0:
            return np.zeros_like(r)
        return (self.gamma + 3.0) * r ** (self.gamma + 2.0)

    def with_n_reg(self, n_reg: float) -> KernelModel:
        return KernelModel(self.gamma, self.delta, n_reg, self.cutoff)

    def radial_profile(self, r: np.ndarray | float, variant: str) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(K(r), K'(r))`` for ``K = k * c`` with the variant's cutoff ``c``."""
        if variant not in VARIANTS:
            raise ConfigError(f"unknown kernel variant {variant!r}")
        r = np.asarray(r, dtype=float)
        k = self.k(r)
        dk = self.dk(r)
        c = np.ones_like(r)
        dc = np.zeros_like(r)
        if "mollified" in variant:
            x, dx, _ = self.cutoff.evaluate(self.n_reg * r)
            c, dc = c * x, dc * x + c * self.n_reg * dx
        if variant.startswith("in_part") or variant.startswith("out_part"):
            x, dx, _ = self.cutoff.evaluate(r / self.delta)
            dx = dx / self.delta
            if variant.startswith("in_part"):
                x, dx = 1.0 - x, -dx
            c, dc = c * x, dc * x + c * dx
        return k * c, dk * c + k * dc


def _as_vector(z: np.ndarray | list[float] | tuple[float, ...]) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != 3:
        raise DomainError(f"expected 3-vectors, got trailing shape {z.shape}")
    return z


def _norm(z: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(z * z, axis=-1))


def _require_nonzero(r: np.ndarray, what: str) -> None:
    if np.any(r == 0.0):
        raise DomainError(f"{what} is undefined at z = 0")


def projection_matrix(z: np.ndarray | list[float]) -> np.ndarray:
    """Orthogonal projection onto the plane normal to ``z`` (batched over leading axes)."""
    z = _as_vector(z)
    r = _norm(z)
    _require_nonzero(r, "projection_matrix")
    u = z / r[..., None]
    return np.eye(3) - u[..., :, None] * u[..., None, :]


def _safe_projection(z: np.ndarray, r: np.ndarray) -> np.ndarray:
    safe = np.where(r > 0.0, r, 1.0)
    u = z / safe[..., None]
    return np.eye(3) - u[..., :, None] * u[..., None, :]


def kernel_prefactor(r: np.ndarray | float, model: KernelModel, variant: str = "full") -> np.ndarray:
    """Scalar ``m(r) = K(r)/r`` such that ``a_variant(z) = m(|z|) Pi(z)``; zero at r = 0 when regular."""
    r = np.asarray(r, dtype=float)
    big_k, _ = model.radial_profile(r, variant)
    safe = np.where(r > 0.0, r, 1.0)
    return np.where(r > 0.0, big_k / safe, 0.0)


def kernel_matrix(z: np.ndarray | list[float], model: KernelModel, variant: str = "full") -> np.ndarray:
    """Kernel matrix of the requested variant at ``z`` (batched over leading axes)."""
    z = _as_vector(z)
    r = _norm(z)
    if variant not in _REGULAR_AT_ORIGIN:
        _require_nonzero(r, f"kernel variant {variant!r}")
    m = kernel_prefactor(r, model, variant)
    return m[..., None, None] * _safe_projection(z, r)


def kernel_sqrt(z: np.ndarray | list[float], model: KernelModel, variant: str = "full") -> np.ndarray:
    """Symmetric square root ``sqrt(K/r) Pi(z)`` of the kernel matrix."""
    z = _as_vector(z)
    r = _norm(z)
    if variant not in _REGULAR_AT_ORIGIN:
        _require_nonzero(r, "kernel_sqrt")
    m = kernel_prefactor(r, model, variant)
    return np.sqrt(m)[..., None, None] * _safe_projection(z, r)


def kernel_divergence(z: np.ndarray | list[float], model: KernelModel, variant: str = "full") -> np.ndarray:
    """Row divergence ``-2 K(|z|) z / |z|**3`` of the kernel matrix."""
    z = _as_vector(z)
    r = _norm(z)
    _require_nonzero(r, "kernel_divergence")
    big_k, _ = model.radial_profile(r, variant)
    return (-2.0 * big_k / r**3)[..., None] * z


def kernel_hessian_trace(z: np.ndarray | list[float], model: KernelModel, variant: str = "out_part") -> np.ndarray:
    """Absolutely continuous part ``-2 K'(|z|)/|z|**2`` of the double divergence."""
    z = _as_vector(z)
    r = _norm(z)
    _require_nonzero(r, "kernel_hessian_trace")
    _, dk = model.radial_profile(r, variant)
    return -2.0 * dk / r**2


def dirac_weight(model: KernelModel) -> float:
    """Mass ``8 pi k(0)`` of the point mass removed from the Hessian trace."""
    return 8.0 * math.pi * model.k0


def out_part_divergence_bound(model: KernelModel) -> float:
    """Bound ``8 k(delta/2)/delta**2`` on the out-part divergence."""
    d = model.delta
    return float(8.0 * model.k(d / 2.0) / d**2)


def out_part_hessian_bound(model: KernelModel) -> float:
    """Bound ``40 k(delta/2)/delta**3`` on the out-part Hessian trace for ``|z| >= delta/2``."""
    d = model.delta
    return float(40.0 * model.k(d / 2.0) / d**3)


def packed_components(z: np.ndarray, model: KernelModel, variant: str) -> np.ndarray:
    """Kernel matrices at many offsets as six packed components, zero at the origin.

    Returns an array of shape ``(6,) + z.shape[:-1]`` ordered as :data:`SYM_INDEX`.
    Singular variants are set to zero at ``z = 0``; the diagonal pair term they
    would multiply cancels in every pair functional.
    """
    r = _norm(z)
    m = kernel_prefactor(r, model, variant)
    safe = np.where(r > 0.0, r, 1.0)
    out = np.empty((6,) + r.shape)
    for c, (i, j) in enumerate(SYM_INDEX):
        proj = (1.0 if i == j else 0.0) - z[..., i] * z[..., j] / safe**2
        out[c] = m * proj
    return out


def packed_divergence(z: np.ndarray, model: KernelModel, variant: str) -> np.ndarray:
    """Divergence vectors at many offsets, shape ``(3,) + z.shape[:-1]``, zero at the origin."""
    r = _norm(z)
    big_k, _ = model.radial_profile(r, variant)
    safe = np.where(r > 0.0, r, 1.0)
    scale = np.where(r > 0.0, -2.0 * big_k / safe**3, 0.0)
    return np.moveaxis(scale[..., None] * z, -1, 0)
