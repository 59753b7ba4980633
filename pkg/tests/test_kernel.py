from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from landaukit.errors import ConfigError, DomainError
from landaukit.kernel import (
    CUTOFF,
    KernelModel,
    dirac_weight,
    kernel_divergence,
    kernel_hessian_trace,
    kernel_matrix,
    kernel_prefactor,
    kernel_sqrt,
    out_part_divergence_bound,
    out_part_hessian_bound,
    projection_matrix,
)

GAMMAS = (-3.0, -2.8, -2.5, -2.2)

nonzero_vectors = st.tuples(*[st.floats(-5.0, 5.0, allow_nan=False)] * 3).filter(
    lambda v: 1e-3 < math.sqrt(sum(x * x for x in v)) < 8.0
)


def random_directions(rng, count, radius):
    d = rng.normal(size=(count, 3))
    return radius[:, None] * d / np.linalg.norm(d, axis=1, keepdims=True)


# --------------------------------------------------------------------------
# projection


@pytest.mark.parametrize(
    "z, expected",
    [((1.0, 0.0, 0.0), np.diag([0.0, 1.0, 1.0])), ((0.0, 0.0, 2.0), np.diag([1.0, 1.0, 0.0]))],
)
def test_projection_axis_aligned(z, expected):
    np.testing.assert_allclose(projection_matrix(z), expected, atol=1e-15)


def test_projection_annihilates_argument():
    z = np.array([1.0, 2.0, 3.0])
    np.testing.assert_allclose(projection_matrix(z) @ z, 0.0, atol=1e-14)


def test_projection_rejects_zero():
    with pytest.raises(DomainError):
        projection_matrix([0.0, 0.0, 0.0])


@given(nonzero_vectors)
def test_projection_is_symmetric_idempotent_trace_two(z):
    p = projection_matrix(z)
    np.testing.assert_allclose(p, p.T, atol=1e-15)
    np.testing.assert_allclose(p @ p, p, atol=1e-13)
    assert abs(np.trace(p) - 2.0) < 1e-13


# --------------------------------------------------------------------------
# kernel matrix examples


def test_coulomb_kernel_at_distance_two():
    m = KernelModel(-3.0)
    np.testing.assert_allclose(kernel_matrix([2.0, 0.0, 0.0], m, "full"), 0.5 * np.diag([0.0, 1.0, 1.0]), atol=1e-15)


def test_mollified_kernel_vanishes_inside_cutoff():
    m = KernelModel(-3.0, 0.5, 4.0)
    z = np.array([1.0, 1.0, 1.0]) / math.sqrt(3.0) / 16.0
    assert np.all(kernel_matrix(z, m, "mollified") == 0.0)


def test_split_at_unit_distance_with_half_radius():
    m = KernelModel(-3.0, 0.5)
    z = [0.0, 1.0, 0.0]
    assert np.all(kernel_matrix(z, m, "in_part") == 0.0)
    np.testing.assert_array_equal(kernel_matrix(z, m, "out_part"), kernel_matrix(z, m, "full"))


def test_full_kernel_rejects_origin_but_regular_variants_vanish():
    m = KernelModel(-3.0)
    with pytest.raises(DomainError):
        kernel_matrix([0.0, 0.0, 0.0], m, "full")
    for variant in ("mollified", "out_part", "in_part_mollified", "out_part_mollified"):
        assert np.all(kernel_matrix([0.0, 0.0, 0.0], m, variant) == 0.0)


def test_unknown_variant_rejected():
    with pytest.raises(ConfigError):
        kernel_matrix([1.0, 0.0, 0.0], KernelModel(), "sideways")


@pytest.mark.parametrize("kwargs", [{"gamma": -2.0}, {"gamma": -3.5}, {"delta": 1.0}, {"delta": 0.0}, {"n_reg": 0.5}])
def test_model_validation(kwargs):
    with pytest.raises(ConfigError):
        KernelModel(**kwargs)


@pytest.mark.parametrize("gamma", GAMMAS)
def test_eigenvalues_and_null_space(gamma, rng):
    m = KernelModel(gamma)
    z = random_directions(rng, 200, rng.uniform(0.01, 5.0, 200))
    a = kernel_matrix(z, m, "full")
    eig = np.linalg.eigvalsh(a)
    pref = kernel_prefactor(np.linalg.norm(z, axis=1), m, "full")
    np.testing.assert_allclose(eig[:, 0], 0.0, atol=1e-12 * pref.max())
    np.testing.assert_allclose(eig[:, 1:], np.repeat(pref[:, None], 2, axis=1), rtol=1e-12)
    np.testing.assert_allclose(np.einsum("pij,pj->pi", a, z), 0.0, atol=1e-12 * pref.max())


# --------------------------------------------------------------------------
# square root


def test_sqrt_examples():
    m = KernelModel(-3.0)
    np.testing.assert_allclose(kernel_sqrt([1.0, 0.0, 0.0], m), np.diag([0.0, 1.0, 1.0]), atol=1e-15)
    root = kernel_sqrt([0.0, 4.0, 0.0], m)
    assert root[0, 0] == pytest.approx(0.5, abs=1e-15)
    with pytest.raises(DomainError):
        kernel_sqrt([0.0, 0.0, 0.0], m)


@given(nonzero_vectors, st.sampled_from(GAMMAS))
def test_sqrt_squares_to_kernel(z, gamma):
    m = KernelModel(gamma)
    root = kernel_sqrt(z, m)
    a = kernel_matrix(z, m)
    assert np.abs(root @ root - a).max() <= 1e-14 * max(1.0, np.abs(a).max())


# --------------------------------------------------------------------------
# split consistency, support, monotonicity


@pytest.mark.parametrize("gamma", GAMMAS)
@pytest.mark.parametrize("pair", [("in_part", "out_part", "full"), ("in_part_mollified", "out_part_mollified", "mollified")])
def test_split_consistency_random(gamma, pair, rng):
    m = KernelModel(gamma, 0.4, 6.0)
    z = random_directions(rng, 1000, rng.uniform(1e-3, 4.0, 1000))
    a_in, a_out, whole = (kernel_matrix(z, m, v) for v in pair)
    scale = np.abs(whole).max(axis=(1, 2))
    assert np.all(np.abs(a_in + a_out - whole).max(axis=(1, 2)) <= 1e-13 * scale)


@pytest.mark.parametrize("n_reg", [1.0, 2.5, 4.0, 16.0])
def test_mollified_support(n_reg, rng):
    m = KernelModel(-2.5, 0.5, n_reg)
    inside = random_directions(rng, 300, rng.uniform(0.0, 1.0 / (2.0 * n_reg), 300))
    assert np.all(kernel_matrix(inside, m, "mollified") == 0.0)
    edge = random_directions(rng, 5, np.full(5, 1.0 / (2.0 * n_reg)))
    assert np.all(kernel_matrix(edge, m, "mollified") == 0.0)
    outside = random_directions(rng, 300, rng.uniform(1.0 / n_reg, 10.0, 300))
    np.testing.assert_array_equal(kernel_matrix(outside, m, "mollified"), kernel_matrix(outside, m, "full"))


@pytest.mark.parametrize("gamma", GAMMAS)
def test_monotonicity_on_log_grid(gamma):
    m = KernelModel(gamma)
    r = np.logspace(-6, 3, 4000)
    k = m.k(r)
    assert np.all(np.diff(k) >= 0.0)
    assert np.all(np.diff(k / r) <= 0.0)


def test_dirac_weight():
    assert dirac_weight(KernelModel(-3.0)) == pytest.approx(8.0 * math.pi)
    assert dirac_weight(KernelModel(-2.5)) == 0.0


# --------------------------------------------------------------------------
# cutoff profile


def test_cutoff_profile_shape():
    r = np.linspace(-1.0, 2.0, 30001)
    x, dx, _ = CUTOFF.evaluate(r)
    assert np.all(x[r <= 0.5] == 0.0)
    assert np.all(x[r >= 1.0] == 1.0)
    assert np.all(np.diff(x) >= 0.0)
    assert dx.min() >= 0.0
    assert dx.max() <= 3.0 + 1e-12
    assert dx.max() == pytest.approx(3.0)


def test_cutoff_derivatives_match_differences():
    r = np.linspace(0.45, 1.05, 997)
    h = 1e-6
    x, dx, d2x = CUTOFF.evaluate(r)
    fd1 = (CUTOFF(r + h) - CUTOFF(r - h)) / (2 * h)
    fd2 = (CUTOFF.derivative(r + h) - CUTOFF.derivative(r - h)) / (2 * h)
    assert np.abs(fd1 - dx).max() < 1e-6
    assert np.abs(fd2 - d2x).max() < 1e-5 * np.abs(d2x).max()


def test_cutoff_is_twice_continuous_at_breakpoints():
    for b in (0.5, 2.0 / 3.0, 5.0 / 6.0, 1.0):
        lo, hi = CUTOFF.evaluate(np.array([b - 1e-9, b + 1e-9]))[2]
        assert abs(lo - hi) < 1e-6


# --------------------------------------------------------------------------
# derivative formulas


def test_divergence_example():
    np.testing.assert_allclose(kernel_divergence([1.0, 0.0, 0.0], KernelModel(-3.0)), [-2.0, 0.0, 0.0], atol=1e-15)
    with pytest.raises(DomainError):
        kernel_divergence([0.0, 0.0, 0.0], KernelModel(-3.0))
    with pytest.raises(DomainError):
        kernel_hessian_trace([0.0, 0.0, 0.0], KernelModel(-3.0))


@pytest.mark.parametrize("gamma", GAMMAS)
@pytest.mark.parametrize("delta", [0.2, 0.5, 0.9])
def test_out_part_bounds_sampled(gamma, delta, rng):
    m = KernelModel(gamma, delta)
    r_div = rng.uniform(delta, 4.0, 1000)
    z = random_directions(rng, 1000, r_div)
    assert np.count_nonzero(np.linalg.norm(kernel_divergence(z, m, "out_part"), axis=1) > out_part_divergence_bound(m)) == 0
    r_hess = rng.uniform(delta / 2.0, 4.0, 1000)
    z = random_directions(rng, 1000, r_hess)
    assert np.count_nonzero(np.abs(kernel_hessian_trace(z, m, "out_part")) > out_part_hessian_bound(m)) == 0


def test_coulomb_inner_mollified_trace_vanishes_between_shells(rng):
    m = KernelModel(-3.0, 0.5, 16.0)
    # X(n r) = 1 for r >= 1/16 and X(r/delta) = 0 for r <= 1/4
    z = random_directions(rng, 500, rng.uniform(1.0 / 16.0, 0.25, 500))
    assert np.all(kernel_hessian_trace(z, m, "in_part_mollified") == 0.0)


def _fd_divergence(z, model, variant, h):
    out = np.zeros(3)
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        out += (kernel_matrix(z + e, model, variant)[:, j] - kernel_matrix(z - e, model, variant)[:, j]) / (2 * h)
    return out


def _fd_trace_from_divergence(z, model, variant, h):
    total = 0.0
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        total += (kernel_divergence(z + e, model, variant)[j] - kernel_divergence(z - e, model, variant)[j]) / (2 * h)
    return total


def _fd_trace_second_differences(z, model, variant, h):
    total = 0.0
    for i in range(3):
        for j in range(3):
            ei, ej = np.zeros(3), np.zeros(3)
            ei[i], ej[j] = h, h
            total += (
                kernel_matrix(z + ei + ej, model, variant)[i, j]
                - kernel_matrix(z + ei - ej, model, variant)[i, j]
                - kernel_matrix(z - ei + ej, model, variant)[i, j]
                + kernel_matrix(z - ei - ej, model, variant)[i, j]
            ) / (4 * h * h)
    return total


# radii avoid the cutoff breakpoints 1/2, 2/3, 5/6, 1 (in units of 1/n or delta)
SMOOTH_POINTS = [
    ("full", 0.7),
    ("out_part", 0.4),
    ("out_part", 1.3),
    ("in_part_mollified", 0.2),
    ("mollified", 0.2),
]


@pytest.mark.parametrize("gamma", [-3.0, -2.5])
@pytest.mark.parametrize("variant, radius", SMOOTH_POINTS)
def test_divergence_finite_difference_second_order(gamma, variant, radius, rng):
    m = KernelModel(gamma, 0.5, 4.0)
    d = rng.normal(size=3)
    z = radius * d / np.linalg.norm(d)
    exact = kernel_divergence(z, m, variant)
    e3, e4 = (np.abs(_fd_divergence(z, m, variant, h) - exact).max() for h in (1e-3, 1e-4))
    assert e4 < 1e-4 * max(1.0, np.abs(exact).max())
    assert 50.0 < e3 / e4 < 200.0


@pytest.mark.parametrize("gamma", [-3.0, -2.5])
@pytest.mark.parametrize("variant, radius", [p for p in SMOOTH_POINTS if p[0] in ("out_part", "in_part_mollified")])
def test_hessian_trace_finite_difference_second_order(gamma, variant, radius, rng):
    m = KernelModel(gamma, 0.5, 4.0)
    d = rng.normal(size=3)
    z = radius * d / np.linalg.norm(d)
    exact = float(kernel_hessian_trace(z, m, variant))
    e3, e4 = (abs(_fd_trace_from_divergence(z, m, variant, h) - exact) for h in (1e-3, 1e-4))
    assert e4 < 1e-3 * max(1.0, abs(exact))
    assert 50.0 < e3 / e4 < 200.0
    # independent route through second differences of the matrix itself
    assert abs(_fd_trace_second_differences(z, m, variant, 1e-3) - exact) < 1e-3 * max(1.0, abs(exact))
