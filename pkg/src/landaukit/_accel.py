"""Hot loops with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly and the environment
variable ``LANDAUKIT_DISABLE_NUMBA`` is not set to a truthy value.  Both
paths compute the same quantities; the test-suite runs them side by side.

The brute-force pair sums here evaluate the kernel with their own scalar
formula rather than through :mod:`landaukit.kernel`, which keeps them
independent of the FFT production path they are used to check.
"""

from __future__ import annotations

import logging
import math
import os

import numpy as np

from .kernel import VARIANTS, KernelModel, kernel_prefactor

logger = logging.getLogger(__name__)

try:
    import numba

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    NUMBA_AVAILABLE = False

_DISABLED = os.environ.get("LANDAUKIT_DISABLE_NUMBA", "").lower() in {"1", "true", "yes", "on"}
USE_NUMBA = NUMBA_AVAILABLE and not _DISABLED

VARIANT_CODES = {name: code for code, name in enumerate(VARIANTS)}


def _jit(func):
    if NUMBA_AVAILABLE:
        return numba.njit(cache=True, fastmath=False)(func)
    return func


def kernel_params(model: KernelModel, variant: str) -> tuple[float, float, float, int]:
    return float(model.gamma), float(model.n_reg), float(model.delta), VARIANT_CODES[variant]


# --------------------------------------------------------------------------
# scalar kernel, duplicated on purpose for the brute-force oracles


@_jit
def _cutoff_scalar(r):
    s = 2.0 * r - 1.0
    if s <= 0.0:
        return 0.0
    if s >= 1.0:
        return 1.0
    a = 1.0 / 3.0
    if s < a:
        x = s / a
        return 1.5 * a * (x**3 - 0.5 * x**4)
    if s <= 1.0 - a:
        return 0.25 + 1.5 * (s - a)
    x = (1.0 - s) / a
    return 1.0 - 1.5 * a * (x**3 - 0.5 * x**4)


@_jit
def _prefactor_scalar(r, gamma, n_reg, delta, code):
    if r == 0.0:
        return 0.0
    m = r ** (gamma + 2.0)
    if code == 1 or code == 4 or code == 5:
        m *= _cutoff_scalar(n_reg * r)
    if code == 2 or code == 4:
        m *= 1.0 - _cutoff_scalar(r / delta)
    elif code == 3 or code == 5:
        m *= _cutoff_scalar(r / delta)
    return m


# --------------------------------------------------------------------------
# brute-force matrix convolution  A(x) = sum_w a(x - w) f(w) * weight


@_jit
def _direct_matrix_numba(targets, points, values, weight, gamma, n_reg, delta, code):
    out = np.zeros((targets.shape[0], 6))
    for t in range(targets.shape[0]):
        for p in range(points.shape[0]):
            fv = values[p]
            if fv == 0.0:
                continue
            z0 = targets[t, 0] - points[p, 0]
            z1 = targets[t, 1] - points[p, 1]
            z2 = targets[t, 2] - points[p, 2]
            r2 = z0 * z0 + z1 * z1 + z2 * z2
            if r2 == 0.0:
                continue
            m = _prefactor_scalar(math.sqrt(r2), gamma, n_reg, delta, code) * fv * weight
            out[t, 0] += m * (1.0 - z0 * z0 / r2)
            out[t, 1] += m * (1.0 - z1 * z1 / r2)
            out[t, 2] += m * (1.0 - z2 * z2 / r2)
            out[t, 3] -= m * z0 * z1 / r2
            out[t, 4] -= m * z0 * z2 / r2
            out[t, 5] -= m * z1 * z2 / r2
    return out


def _direct_matrix_numpy(targets, points, values, weight, model, variant, chunk=256):
    out = np.zeros((targets.shape[0], 6))
    keep = values != 0.0
    points, values = points[keep], values[keep]
    for start in range(0, targets.shape[0], chunk):
        z = targets[start : start + chunk, None, :] - points[None, :, :]
        r2 = np.sum(z * z, axis=-1)
        m = kernel_prefactor(np.sqrt(r2), model, variant) * values[None, :] * weight
        safe = np.where(r2 > 0.0, r2, 1.0)
        for c, (i, j) in enumerate(((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))):
            proj = (1.0 if i == j else 0.0) - z[..., i] * z[..., j] / safe
            out[start : start + chunk, c] = np.sum(np.where(r2 > 0.0, m * proj, 0.0), axis=1)
    return out


def direct_matrix_convolution(
    targets: np.ndarray,
    points: np.ndarray,
    values: np.ndarray,
    weight: float,
    model: KernelModel,
    variant: str,
    use_numba: bool | None = None,
) -> np.ndarray:
    """Packed ``sum_p a(t - p) f(p) weight`` for every target, by direct summation."""
    targets = np.ascontiguousarray(targets, dtype=float)
    points = np.ascontiguousarray(points, dtype=float)
    values = np.ascontiguousarray(values, dtype=float)
    if USE_NUMBA if use_numba is None else use_numba:
        return _direct_matrix_numba(targets, points, values, float(weight), *kernel_params(model, variant))
    return _direct_matrix_numpy(targets, points, values, float(weight), model, variant)


# --------------------------------------------------------------------------
# brute-force pair dissipation  1/2 sum_{p,q} f_p f_q d.a(z)d * weight**2


@_jit
def _pair_sum_numba(points, values, grads, weight, gamma, n_reg, delta, code):
    total = 0.0
    n = points.shape[0]
    for p in range(n):
        fp = values[p]
        if fp == 0.0:
            continue
        for q in range(p + 1, n):
            fq = values[q]
            if fq == 0.0:
                continue
            z0 = points[p, 0] - points[q, 0]
            z1 = points[p, 1] - points[q, 1]
            z2 = points[p, 2] - points[q, 2]
            r2 = z0 * z0 + z1 * z1 + z2 * z2
            d0 = grads[p, 0] - grads[q, 0]
            d1 = grads[p, 1] - grads[q, 1]
            d2 = grads[p, 2] - grads[q, 2]
            dz = d0 * z0 + d1 * z1 + d2 * z2
            quad = d0 * d0 + d1 * d1 + d2 * d2 - dz * dz / r2
            total += fp * fq * _prefactor_scalar(math.sqrt(r2), gamma, n_reg, delta, code) * quad
    # each unordered pair counted once equals one half of the ordered double sum
    return total * weight * weight


def _pair_sum_numpy(points, values, grads, weight, model, variant, chunk=256):
    total = 0.0
    for start in range(0, points.shape[0], chunk):
        z = points[start : start + chunk, None, :] - points[None, :, :]
        d = grads[start : start + chunk, None, :] - grads[None, :, :]
        r2 = np.sum(z * z, axis=-1)
        safe = np.where(r2 > 0.0, r2, 1.0)
        dz = np.sum(d * z, axis=-1)
        quad = np.sum(d * d, axis=-1) - dz * dz / safe
        m = kernel_prefactor(np.sqrt(r2), model, variant)
        ff = values[start : start + chunk, None] * values[None, :]
        total += float(np.sum(np.where(r2 > 0.0, ff * m * quad, 0.0)))
    return 0.5 * total * weight * weight


def direct_pair_dissipation(
    points: np.ndarray,
    values: np.ndarray,
    grads: np.ndarray,
    weight: float,
    model: KernelModel,
    variant: str,
    use_numba: bool | None = None,
) -> float:
    """``1/2 sum_{p != q} f_p f_q (g_p - g_q).a(x_p - x_q)(g_p - g_q) weight**2`` by direct summation."""
    points = np.ascontiguousarray(points, dtype=float)
    values = np.ascontiguousarray(values, dtype=float)
    grads = np.ascontiguousarray(grads, dtype=float)
    if USE_NUMBA if use_numba is None else use_numba:
        return float(_pair_sum_numba(points, values, grads, float(weight), *kernel_params(model, variant)))
    return _pair_sum_numpy(points, values, grads, float(weight), model, variant)


# --------------------------------------------------------------------------
# trilinear interpolation on a uniform grid, zero outside the node box


@_jit
def _trilinear_numba(values, lo, h, points):
    n0, n1, n2 = values.shape
    out = np.zeros(points.shape[0])
    for p in range(points.shape[0]):
        x = (points[p, 0] - lo) / h
        y = (points[p, 1] - lo) / h
        z = (points[p, 2] - lo) / h
        i0 = int(math.floor(x))
        j0 = int(math.floor(y))
        k0 = int(math.floor(z))
        fx = x - i0
        fy = y - j0
        fz = z - k0
        acc = 0.0
        for di in range(2):
            i = i0 + di
            if i < 0 or i >= n0:
                continue
            wx = fx if di == 1 else 1.0 - fx
            if wx == 0.0:
                continue
            for dj in range(2):
                j = j0 + dj
                if j < 0 or j >= n1:
                    continue
                wy = fy if dj == 1 else 1.0 - fy
                if wy == 0.0:
                    continue
                for dk in range(2):
                    k = k0 + dk
                    if k < 0 or k >= n2:
                        continue
                    wz = fz if dk == 1 else 1.0 - fz
                    if wz == 0.0:
                        continue
                    acc += wx * wy * wz * values[i, j, k]
        out[p] = acc
    return out


def _trilinear_numpy(values, lo, h, points):
    pos = (points - lo) / h
    base = np.floor(pos).astype(np.int64)
    frac = pos - base
    out = np.zeros(points.shape[0])
    shape = np.array(values.shape)
    for corner in range(8):
        offs = np.array([(corner >> 2) & 1, (corner >> 1) & 1, corner & 1])
        idx = base + offs
        w = np.prod(np.where(offs == 1, frac, 1.0 - frac), axis=1)
        ok = np.all((idx >= 0) & (idx < shape), axis=1) & (w != 0.0)
        out[ok] += w[ok] * values[idx[ok, 0], idx[ok, 1], idx[ok, 2]]
    return out


def trilinear_sample(
    values: np.ndarray,
    lo: float,
    h: float,
    points: np.ndarray,
    use_numba: bool | None = None,
) -> np.ndarray:
    """Trilinear interpolation of node ``values`` (first node at ``lo``) at ``points`` of shape (P, 3)."""
    values = np.ascontiguousarray(values, dtype=float)
    points = np.ascontiguousarray(np.reshape(points, (-1, 3)), dtype=float)
    if USE_NUMBA if use_numba is None else use_numba:
        return _trilinear_numba(values, float(lo), float(h), points)
    return _trilinear_numpy(values, float(lo), float(h), points)
