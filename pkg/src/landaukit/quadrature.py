"""Lattice samples of radial convolution kernels.

Kernels singular at the origin, or cut off sharply at a radius, are
averaged over the grid cell around each offset instead of sampled at its
center.  Cell averages of ``K**p`` are bounded by averages of ``K**p`` (Jensen),
which keeps discrete Hoelder-type inequalities faithful to their continuous
counterparts.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .collision import ConvolutionPlan

RadialFn = Callable[[np.ndarray], np.ndarray]


def cell_averaged_samples(
    offsets: np.ndarray,
    h: float,
    fn: RadialFn,
    edges: tuple[float, ...] = (),
    near_cells: int = 2,
    sub: int = 6,
) -> np.ndarray:
    """Samples of ``fn(|z|)`` at lattice ``offsets`` (shape ``(..., 3)``).

    Cells within ``near_cells`` of the origin, and cells straddling any radius
    in ``edges``, are replaced by the mean over ``sub**3`` interior midpoints.
    ``sub`` must be even so no midpoint sits at the origin.
    """
    if sub % 2:
        raise ValueError("sub must be even")
    r = np.linalg.norm(offsets, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(r > 0.0, fn(np.where(r > 0.0, r, 1.0)), 0.0)
    half_diag = 0.5 * np.sqrt(3.0) * h
    refine = r <= near_cells * h + 1e-12
    for e in edges:
        refine |= np.abs(r - e) <= half_diag
    if not refine.any():
        return out
    local = (np.arange(sub) + 0.5) / sub - 0.5
    sx, sy, sz = np.meshgrid(local, local, local, indexing="ij")
    subpts = h * np.stack([sx.ravel(), sy.ravel(), sz.ravel()], axis=1)
    centers = offsets[refine]
    pts = centers[:, None, :] + subpts[None, :, :]
    rr = np.linalg.norm(pts, axis=-1)
    out[refine] = fn(rr).mean(axis=1)
    return out


def radial_convolution(
    plan: ConvolutionPlan,
    values: np.ndarray,
    name: str,
    fn: RadialFn,
    edges: tuple[float, ...] = (),
    averaged: bool = True,
) -> np.ndarray:
    """``sum_w K(v - w) u(w) h**3`` for a radial kernel ``K = fn(|z|)``, cached under ``name``."""
    h = plan.grid.h
    if averaged:
        sampler = lambda z: cell_averaged_samples(z, h, fn, edges)  # noqa: E731
    else:

        def sampler(z: np.ndarray) -> np.ndarray:
            r = np.linalg.norm(z, axis=-1)
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(r > 0.0, fn(np.where(r > 0.0, r, 1.0)), 0.0)

    kern = plan.scalar_kernel(f"{name}|avg={averaged}", sampler)
    return plan.backward(kern * plan.forward(values))
