from __future__ import annotations

import math
import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from landaukit.errors import (
    ConfigError,
    DomainError,
    MagicMismatchError,
    SnapshotFormatError,
    TruncatedPayloadError,
    VersionMismatchError,
    WindowError,
)
from landaukit.fields import (
    DistributionField,
    ParabolicCylinder,
    Trajectory,
    VelocityGrid,
    cylinder_restrict,
    field_from_bytes,
    field_to_bytes,
    read_snapshot,
    scaled_solution,
    write_snapshot,
)
from landaukit.stepper import maxwellian

from .conftest import static_trajectory


def bumpy_values(grid, rng):
    base = maxwellian(grid, 1.0, 0.7, (0.3, -0.2, 0.1))
    return base * (1.0 + 0.3 * rng.random(grid.shape))


# --------------------------------------------------------------------------
# grids and fields


@pytest.mark.parametrize("n, L", [(7, 1.0), (8, 0.0), (8, -1.0), (8.5, 1.0)])
def test_grid_validation(n, L):
    with pytest.raises(ConfigError):
        VelocityGrid(n, L)


@given(st.integers(8, 64), st.floats(0.1, 20.0), st.integers(0, 63))
def test_index_coordinate_map_is_affine_and_invertible(n, L, i):
    grid = VelocityGrid(n, L)
    i = min(i, n - 1)
    x = grid.index_to_coordinate(i)
    assert x == pytest.approx(-L + i * 2 * L / n)
    assert grid.coordinate_to_index(x) == pytest.approx(i)
    assert grid.axis[0] == -L
    assert grid.axis[-1] < L


def test_field_validation(grid16):
    bad = np.zeros(grid16.shape)
    bad[0, 0, 0] = -1e-12
    with pytest.raises(DomainError):
        DistributionField(grid16, 0.0, bad)
    with pytest.raises(DomainError):
        DistributionField(grid16, 0.0, np.full(grid16.shape, np.nan))
    with pytest.raises(ConfigError):
        DistributionField(grid16, 0.0, np.zeros((8, 8, 8)))


def test_field_is_immutable(maxwell16):
    with pytest.raises(ValueError):
        maxwell16.values[0, 0, 0] = 1.0


def test_field_copies_input(grid16):
    raw = np.ones(grid16.shape)
    f = DistributionField(grid16, 0.0, raw)
    raw[0, 0, 0] = 5.0
    assert f.values[0, 0, 0] == 1.0


# --------------------------------------------------------------------------
# snapshot format


def test_snapshot_round_trip(tmp_path, grid16, rng):
    f = DistributionField(grid16, 1.25, bumpy_values(grid16, rng))
    path = tmp_path / "s.lndf"
    write_snapshot(path, f)
    g = read_snapshot(path)
    assert g.grid == f.grid and g.time == f.time
    np.testing.assert_array_equal(g.values, f.values)
    assert field_to_bytes(g) == field_to_bytes(f)


def test_snapshot_layout_and_size(rng):
    grid = VelocityGrid(8, 2.0)
    vals = rng.random(grid.shape)
    data = field_to_bytes(DistributionField(grid, 0.5, vals))
    header = 4 + 4 + 4 + 8 + 8
    assert len(data) == header + 512 * 8
    magic, version, n, L, t = struct.unpack_from("<4sIIdd", data)
    assert (magic, version, n, L, t) == (b"LNDF", 1, 8, 2.0, 0.5)
    flat = np.frombuffer(data, "<f8", offset=header)
    for ix, iy, iz in [(1, 0, 0), (0, 1, 0), (0, 0, 1), (3, 5, 7)]:
        assert flat[ix + 8 * (iy + 8 * iz)] == vals[ix, iy, iz]


def test_snapshot_errors_are_distinct(maxwell16):
    data = field_to_bytes(maxwell16)
    with pytest.raises(MagicMismatchError):
        field_from_bytes(b"XXXX" + data[4:])
    bumped = bytearray(data)
    struct.pack_into("<I", bumped, 4, 2)
    with pytest.raises(VersionMismatchError):
        field_from_bytes(bytes(bumped))
    with pytest.raises(TruncatedPayloadError):
        field_from_bytes(data[:-8])
    with pytest.raises(TruncatedPayloadError):
        field_from_bytes(data[:10])
    for exc in (MagicMismatchError, VersionMismatchError, TruncatedPayloadError):
        assert issubclass(exc, SnapshotFormatError)
    assert len({MagicMismatchError, VersionMismatchError, TruncatedPayloadError}) == 3


# --------------------------------------------------------------------------
# interpolation


def test_interpolation_exact_on_nodes(grid16, rng):
    f = DistributionField(grid16, 0.0, rng.random(grid16.shape))
    np.testing.assert_array_equal(f.sample(grid16.points), f.values.ravel())


def test_interpolation_reproduces_affine_functions(grid16, rng):
    vx, vy, vz = grid16.mesh
    f = DistributionField(grid16, 0.0, 20.0 + vx - 2 * vy + 0.5 * vz)
    pts = rng.uniform(-4.0, 4.0 - grid16.h, size=(500, 3))
    np.testing.assert_allclose(f.sample(pts), 20.0 + pts[:, 0] - 2 * pts[:, 1] + 0.5 * pts[:, 2], rtol=1e-13)


@given(
    arrays(np.float64, (8, 8, 8), elements=st.floats(0.0, 10.0)),
    st.tuples(*[st.floats(-1.0, 0.75)] * 3),
)
def test_interpolation_within_stencil_bounds(values, point):
    grid = VelocityGrid(8, 1.0)
    f = DistributionField(grid, 0.0, values)
    p = np.array(point)
    lo = np.floor((p + 1.0) / grid.h).astype(int)
    hi = np.minimum(lo + 1, 7)
    stencil = values[lo[0] : hi[0] + 1, lo[1] : hi[1] + 1, lo[2] : hi[2] + 1]
    v = f.sample(p[None, :])[0]
    assert stencil.min() - 1e-12 <= v <= stencil.max() + 1e-12


def test_interpolation_zero_outside(grid16):
    f = DistributionField(grid16, 0.0, np.ones(grid16.shape))
    assert f.sample(np.array([[10.0, 0.0, 0.0], [0.0, -10.0, 0.0]])).tolist() == [0.0, 0.0]


# --------------------------------------------------------------------------
# cylinders


def test_cylinder_validation_and_membership():
    with pytest.raises(ConfigError):
        ParabolicCylinder(0.0, (0, 0, 0), 0.0)
    q = ParabolicCylinder(1.0, (0.0, 0.0, 0.0), 0.5)
    assert q.t_start == 0.75
    assert q.contains(1.0, (0.1, 0.0, 0.0))
    assert not q.contains(0.75, (0.0, 0.0, 0.0))
    assert not q.contains(0.9, (0.5, 0.0, 0.0))


def test_cylinder_intersection_is_exact():
    a = ParabolicCylinder(1.0, (0.0, 0.0, 0.0), 0.5)
    assert not a.intersects(ParabolicCylinder(1.0, (1.0, 0.0, 0.0), 0.5))
    assert a.intersects(ParabolicCylinder(1.0, (0.99, 0.0, 0.0), 0.5))
    assert not a.intersects(ParabolicCylinder(0.75, (0.0, 0.0, 0.0), 0.5))
    assert a.intersects(ParabolicCylinder(0.76, (0.0, 0.0, 0.0), 0.5))


def test_tiny_cylinder_between_nodes_is_empty(grid16):
    center = np.full(3, -4.0 + 0.5 * grid16.h)
    view = cylinder_restrict(DistributionField(grid16, 0.0, np.ones(grid16.shape)), ParabolicCylinder(0.0, center, 0.4 * grid16.h))
    assert view.is_empty
    assert view.weight_sum == 0.0


def test_full_cover_weights(grid16):
    traj = static_trajectory(grid16, np.ones(grid16.shape), 5, 0.25)
    view = cylinder_restrict(traj, ParabolicCylinder(1.0, (0.0, 0.0, 0.0), 100.0))
    assert view.weight_sum == pytest.approx(8.0**3 * 5 * 0.25, rel=1e-12)


@pytest.mark.parametrize("r", [0.5, 1.0, 2.0])
def test_ball_volume_converges(r):
    grid = VelocityGrid(int(round(2 * 3.0 * r / (r / 16.0))), 3.0 * r)
    assert grid.h == pytest.approx(r / 16.0)
    view = cylinder_restrict(DistributionField(grid, 0.0, np.zeros(grid.shape)), ParabolicCylinder(0.0, (0.0, 0.0, 0.0), r))
    assert view.weight_sum == pytest.approx(4.0 / 3.0 * math.pi * r**3, rel=0.05)


def test_restriction_is_idempotent(grid16, rng):
    f = DistributionField(grid16, 0.0, rng.random(grid16.shape))
    view = cylinder_restrict(f, ParabolicCylinder(0.0, (0.5, 0.0, -0.5), 1.7))
    once = view.apply(f)
    np.testing.assert_array_equal(view.apply(once).values, once.values)


# --------------------------------------------------------------------------
# trajectories


def test_trajectory_validation(grid16):
    a = DistributionField(grid16, 0.0, np.zeros(grid16.shape))
    b = DistributionField(grid16, 1.0, np.zeros(grid16.shape))
    c = DistributionField(grid16, 3.0, np.zeros(grid16.shape))
    with pytest.raises(ConfigError):
        Trajectory((b, a))
    with pytest.raises(ConfigError):
        Trajectory((a, b, c))
    with pytest.raises(ConfigError):
        Trajectory((a, DistributionField(VelocityGrid(8, 4.0), 1.0, np.zeros((8, 8, 8)))))


def test_time_interpolation_is_linear(grid16):
    traj = Trajectory(tuple(DistributionField(grid16, t, np.full(grid16.shape, 1.0 + 2.0 * t)) for t in (0.0, 0.5, 1.0)))
    assert traj.at_time(0.3).values[0, 0, 0] == pytest.approx(1.6)
    assert traj.at_time(0.5) is traj[1]
    with pytest.raises(WindowError):
        traj.at_time(1.5)


# --------------------------------------------------------------------------
# scaling transform


def test_unit_scale_is_identity(grid16, rng):
    traj = Trajectory(tuple(DistributionField(grid16, 0.1 * k, bumpy_values(grid16, rng)) for k in range(4)))
    zoom = scaled_solution(traj, 0.3, (0.0, 0.0, 0.0), 1.0)
    np.testing.assert_allclose(zoom.times, [-0.3, -0.2, -0.1, 0.0], atol=1e-15)
    for a, b in zip(zoom, traj):
        np.testing.assert_array_equal(a.values, b.values)


def test_unit_scale_interpolated_queries_agree(grid16, rng):
    traj = static_trajectory(grid16, bumpy_values(grid16, rng), 3, 0.1)
    zoom = scaled_solution(traj, 0.2, (0.1, 0.0, 0.0), 1.0, allow_outside=True)
    expected = traj[-1].sample(grid16.points + np.array([0.1, 0.0, 0.0])).reshape(grid16.shape)
    assert np.abs(zoom[-1].values - expected).max() < 1e-12


def ball_mass(f, radius, center=(0.0, 0.0, 0.0)):
    return float(f.values[f.grid.radius(center) < radius].sum() * f.grid.cell_volume)


def test_scaled_mass_identity_on_aligned_nodes(rng):
    src = VelocityGrid(32, 4.0)
    traj = static_trajectory(src, bumpy_values(src, rng), 3, 0.1)
    eps, R = 0.5, 1.5
    # zoomed spacing h/eps puts every zoomed node on a source node
    zoom = scaled_solution(traj, 0.2, (0.0, 0.0, 0.0), eps, 16, 4.0, t_window=0.0)
    assert ball_mass(zoom[-1], R) == pytest.approx(ball_mass(traj[-1], eps * R) / eps, rel=1e-12)


def test_scaled_mass_identity_interpolated():
    src = VelocityGrid(32, 4.0)
    center, temp, eps, R, v0 = np.array([0.2, 0.0, -0.1]), 0.8, 0.5, 1.5, np.array([0.25, 0.0, 0.0])
    traj = static_trajectory(src, maxwellian(src, 1.0, temp, center), 3, 0.1)
    zoom = scaled_solution(traj, 0.2, v0, eps, 96, 3.0, t_window=0.0)
    # midpoint quadrature of the exact density over B_{eps R}(v0) on a fine lattice
    m = 160
    ax = (np.arange(m) + 0.5) / m * 2.0 - 1.0
    x, y, z = np.meshgrid(ax, ax, ax, indexing="ij")
    inside = x**2 + y**2 + z**2 < 1.0
    pts = v0 + eps * R * np.stack([x[inside], y[inside], z[inside]], axis=1)
    dens = (2 * np.pi * temp) ** -1.5 * np.exp(-np.sum((pts - center) ** 2, axis=1) / (2 * temp))
    exact = dens.sum() * (2.0 * eps * R / m) ** 3
    assert ball_mass(zoom[-1], R) == pytest.approx(exact / eps, rel=0.03)


@given(st.floats(0.1, 1.0), st.floats(1.0, 3.0))
def test_level_rescaling(eps, kappa):
    grid = VelocityGrid(8, 2.0)
    vals = 3.0 * maxwellian(grid, 10.0, 0.5)
    traj = static_trajectory(grid, vals, 2, 0.1)
    zoom = scaled_solution(traj, 0.1, (0.0, 0.0, 0.0), eps, 8, 2.0, t_window=0.0, allow_outside=True)
    src_vals = traj[-1].sample(eps * grid.points).reshape(grid.shape)
    np.testing.assert_allclose(
        np.maximum(zoom[-1].values - eps**2 * kappa, 0.0), eps**2 * np.maximum(src_vals - kappa, 0.0), atol=1e-12
    )


def test_scaled_window_errors(grid16, maxwell16):
    traj = static_trajectory(grid16, maxwell16.values, 3, 0.1)
    with pytest.raises(WindowError, match="axis 0"):
        scaled_solution(traj, 0.2, (3.5, 0.0, 0.0), 0.5, 16, 2.0)
    with pytest.raises(WindowError, match="before the first snapshot"):
        scaled_solution(traj, 0.2, (0.0, 0.0, 0.0), 0.5, 16, 2.0, t_window=4.0)
    with pytest.raises(WindowError):
        scaled_solution(traj, 0.5, (0.0, 0.0, 0.0), 0.5, 16, 2.0)
    with pytest.raises(DomainError):
        scaled_solution(traj, 0.2, (0.0, 0.0, 0.0), 1.5)


def test_scaled_time_axis(grid16, maxwell16):
    traj = static_trajectory(grid16, maxwell16.values, 5, 0.01)
    zoom = scaled_solution(traj, 0.04, (0.0, 0.0, 0.0), 0.1, 16, 2.0)
    assert zoom.save_interval == pytest.approx(1.0)
    np.testing.assert_allclose(zoom.times, [-4.0, -3.0, -2.0, -1.0, 0.0], atol=1e-12)
