from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from landaukit.collision import (
    collision_rhs,
    check_resolution,
    diffusion_matrix,
    diffusion_matrix_direct,
    dissipation_density,
    dissipation_pairs,
    dissipation_total,
    div,
    drift_field,
    grad,
    regularization_for_grid,
)
from landaukit.errors import ConfigError, DomainError
from landaukit.fields import DistributionField, VelocityGrid
from landaukit.kernel import KernelModel, kernel_divergence, kernel_matrix
from landaukit.stepper import maxwellian


def bimodal(grid: VelocityGrid) -> DistributionField:
    vals = maxwellian(grid, 0.5, 0.5, (-1.0, 0, 0)) + maxwellian(grid, 0.5, 0.5, (1.0, 0, 0))
    return DistributionField(grid, 0.0, vals)


def tied_model(grid: VelocityGrid, gamma: float = -3.0) -> KernelModel:
    return KernelModel(gamma, 0.5, regularization_for_grid(grid))


@pytest.fixture(scope="module")
def grid8():
    return VelocityGrid(8, 2.0)


# --------------------------------------------------------------------------
# discrete operators


def test_div_is_negative_adjoint_of_grad(grid16, rng):
    u = rng.random(grid16.shape)
    flux = rng.random((3,) + grid16.shape)
    lhs = np.sum(grad(u, grid16.h) * flux)
    rhs = -np.sum(u * div(flux, grid16.h))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_div_sums_to_zero(grid16, rng):
    flux = rng.standard_normal((3,) + grid16.shape)
    assert abs(div(flux, grid16.h).sum()) < 1e-10 * np.abs(flux).sum() / grid16.h


# --------------------------------------------------------------------------
# convolutions


@pytest.mark.parametrize("variant", ["mollified", "out_part", "in_part_mollified"])
def test_fft_matches_direct_matrix_convolution(grid8, rng, variant):
    # delta = 0.9 puts lattice distances inside the support of every split part
    model = KernelModel(-3.0, 0.9, 2.0)
    f = DistributionField(grid8, 0.0, rng.random(grid8.shape))
    fast = diffusion_matrix(f, model, variant).components
    slow = diffusion_matrix_direct(f, model, variant).components
    assert np.abs(slow).max() > 0.0
    assert np.abs(fast - slow).max() <= 1e-10 * np.abs(slow).max()


def test_point_mass_gives_shifted_kernel(grid16, model16):
    vals = np.zeros(grid16.shape)
    node = (5, 9, 7)
    vals[node] = 1.0 / grid16.cell_volume
    f = DistributionField(grid16, 0.0, vals)
    src = grid16.index_to_coordinate(np.array(node))
    pts = grid16.points
    z = pts - src
    keep = np.linalg.norm(z, axis=1) > 0
    expected = kernel_matrix(z[keep], model16, "mollified")
    got = diffusion_matrix(f, model16).as_matrices().reshape(-1, 3, 3)[keep]
    np.testing.assert_allclose(got, expected, atol=1e-12 * np.abs(expected).max())
    drift = drift_field(f, model16).reshape(3, -1).T[keep]
    np.testing.assert_allclose(drift, kernel_divergence(z[keep], model16, "mollified"), atol=1e-12)


def test_isotropic_density_gives_isotropic_matrix_at_origin():
    grid = VelocityGrid(32, 6.0)
    model = tied_model(grid)
    f = DistributionField(grid, 0.0, maxwellian(grid))
    centre = diffusion_matrix(f, model).as_matrices()[16, 16, 16]
    diag = np.diag(centre)
    assert np.ptp(diag) < 1e-12 * diag.mean()
    assert np.abs(centre - np.diag(diag)).max() < 1e-12 * diag.mean()
    assert diag.min() > 0.0


def test_even_density_has_no_drift_at_origin():
    grid = VelocityGrid(32, 4.0)
    # node -L has no mirror image, so clear that layer to make f exactly even
    vals = np.array(bimodal(grid).values)
    vals[0], vals[:, 0], vals[:, :, 0] = 0.0, 0.0, 0.0
    b = drift_field(DistributionField(grid, 0.0, vals), tied_model(grid))
    assert np.abs(b[:, 16, 16, 16]).max() < 1e-12 * np.abs(b).max()


def test_drift_matches_difference_of_matrix_at_second_order():
    # divergence of A by central differences; residual should shrink like h**2
    errors = []
    for n in (16, 32):
        grid = VelocityGrid(n, 4.0)
        model = tied_model(grid)
        f = bimodal(grid)
        mat = diffusion_matrix(f, model).as_matrices()
        b = drift_field(f, model)
        fd = np.zeros_like(b)
        for i in range(3):
            for j in range(3):
                fd[i] += np.gradient(mat[..., i, j], grid.h, axis=j)
        inner = grid.radius() < 2.0
        errors.append(np.abs(fd - b)[:, inner].max() / np.abs(b[:, inner]).max())
    assert errors[1] < errors[0] / 3.0


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=15)
def test_matrix_is_positive_semidefinite(seed):
    grid = VelocityGrid(8, 2.0)
    f = DistributionField(grid, 0.0, np.random.default_rng(seed).random(grid.shape))
    assert diffusion_matrix(f, KernelModel(-3.0, 0.5, 2.0)).is_psd()


# --------------------------------------------------------------------------
# right-hand side


def test_zero_field_has_zero_rhs(grid16, model16):
    f = DistributionField(grid16, 0.0, np.zeros(grid16.shape))
    for form in ("divergence", "divergence_drift", "nondivergence"):
        assert not np.any(collision_rhs(f, model16, form))


def test_pair_form_conserves_mass_momentum_energy(grid16, model16, rng):
    f = DistributionField(grid16, 0.0, bimodal(grid16).values * (1.0 + 0.2 * rng.random(grid16.shape)))
    q = collision_rhs(f, model16)
    vx, vy, vz = grid16.mesh
    scale = np.abs(q).sum()
    for weight in (np.ones(grid16.shape), vx, vy, vz):
        assert abs(np.sum(q * weight)) < 1e-12 * scale * 4.0
    assert abs(np.sum(q * (vx**2 + vy**2 + vz**2))) < 1e-12 * scale * 50.0


def test_drift_form_conserves_mass(grid16, model16, rng):
    f = DistributionField(grid16, 0.0, rng.random(grid16.shape))
    q = collision_rhs(f, model16, "divergence_drift")
    assert abs(q.sum()) < 1e-12 * np.abs(q).sum()


def test_pair_form_vanishes_on_maxwellian(maxwell16, model16):
    q = collision_rhs(maxwell16, model16)
    assert np.sqrt(np.mean(q**2)) < 1e-15


def test_pair_form_dissipates_entropy(grid16, model16):
    f = bimodal(grid16)
    q = collision_rhs(f, model16)
    assert np.sum(q * np.log(f.values)) < 0.0


def test_drift_form_maxwellian_residual_converges():
    rms = []
    for n in (16, 32):
        grid = VelocityGrid(n, 4.0)
        f = DistributionField(grid, 0.0, maxwellian(grid))
        rms.append(np.sqrt(np.mean(collision_rhs(f, tied_model(grid), "divergence_drift") ** 2)))
    assert np.log2(rms[0] / rms[1]) >= 1.5


def test_divergence_and_nondivergence_forms_approach_each_other():
    gaps = []
    for n in (16, 32):
        grid = VelocityGrid(n, 4.0)
        model = tied_model(grid)
        f = bimodal(grid)
        a = collision_rhs(f, model, "divergence_drift")
        b = collision_rhs(f, model, "nondivergence")
        gaps.append(np.linalg.norm(a - b) / np.linalg.norm(a))
    assert gaps[1] < gaps[0]


def test_form_errors(maxwell16, model16, grid16):
    with pytest.raises(ConfigError):
        collision_rhs(maxwell16, model16, "weak")
    with pytest.raises(DomainError):
        collision_rhs(maxwell16, KernelModel(-2.5, 0.5, model16.n_reg), "nondivergence")


def test_resolution_check(grid16):
    with pytest.raises(ConfigError):
        check_resolution(KernelModel(-3.0, 0.5, 10.0), grid16)
    check_resolution(KernelModel(-3.0, 0.5, 2.0), grid16)
    fine = VelocityGrid(32, 2.0)
    assert regularization_for_grid(fine) == pytest.approx(1.0 / (3.0 * fine.h))
    assert regularization_for_grid(grid16) == 1.0


# --------------------------------------------------------------------------
# dissipation


def test_fast_dissipation_matches_pair_sum(grid8, rng):
    model = KernelModel(-3.0, 0.5, 2.0)
    f = DistributionField(grid8, 0.0, maxwellian(grid8, 1.0, 0.6) * (1.0 + 0.5 * rng.random(grid8.shape)))
    slow = dissipation_pairs(f, model).total
    fast = dissipation_total(f, model)
    density = dissipation_density(f, model).sum() * grid8.cell_volume / 2.0
    assert fast == pytest.approx(slow, rel=1e-10)
    assert density == pytest.approx(slow, rel=1e-10)
    assert slow > 0.0


def test_pair_field_is_antisymmetric(grid8, rng):
    model = KernelModel(-3.0, 0.5, 2.0)
    f = DistributionField(grid8, 0.0, rng.random(grid8.shape) + 0.1)
    rep = dissipation_pairs(f, model, subsample=2, keep_pairs=True)
    pairs = rep.pair_values
    np.testing.assert_allclose(pairs, -np.swapaxes(pairs, 0, 1), atol=1e-14 * np.abs(pairs).max())
    assert np.all(np.diagonal(pairs, axis1=0, axis2=1) == 0.0)
    weight = (2 * grid8.h) ** 3
    assert 0.5 * np.sum(pairs**2) * weight**2 == pytest.approx(rep.total, rel=1e-10)


def test_pair_field_vanishes_where_density_vanishes(grid8, rng):
    model = KernelModel(-3.0, 0.5, 2.0)
    vals = rng.random(grid8.shape) + 0.1
    vals[0] = 0.0
    rep = dissipation_pairs(DistributionField(grid8, 0.0, vals), model, keep_pairs=True)
    zero = rep.indices[:, 0] == 0
    assert not np.any(rep.pair_values[zero])
    assert rep.masked_nodes == 64


def test_maxwellian_dissipation_vanishes(maxwell16, model16):
    assert abs(dissipation_total(maxwell16, model16)) < 1e-12


def test_subsample_validation(maxwell16, model16):
    with pytest.raises(ConfigError):
        dissipation_pairs(maxwell16, model16, subsample=0)
