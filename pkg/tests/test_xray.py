import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from momray.catalog import catalog_phantom, random_phantom
from momray.tensor import Phantom
from momray.xray import (FreeLinePoint, LinePoint, check_homogeneity, check_origin_shift,
                         check_shift_law, chart_points, fourier_slice_check, j_from_i,
                         moment_transform_I, moment_transform_J, project_to_bundle, sinogram_values)

from oracles import line_moment

E1 = np.array([1.0, 0.0])
ORIGIN = np.zeros(2)
STD_GAUSS = catalog_phantom("gauss-scalar-0")  # exp(-|x|^2 / 2)


def unit_gauss():
    from momray.tensor import Lump
    return Phantom(0, 2, (Lump.gaussian([0.0, 0.0], 1.0, [1.0]),))


# -- J^k -------------------------------------------------------------------------

@pytest.mark.parametrize("k", range(4))
def test_zero_field_has_zero_transforms(k):
    assert moment_transform_J(Phantom.zero(1), k, [0.3, 0.2], [0.5, 1.0]) == 0


def test_gaussian_zeroth_moment():
    val = moment_transform_J(unit_gauss(), 0, ORIGIN, E1)
    assert abs(val - math.sqrt(math.pi)) < 1e-15
    assert abs(moment_transform_J(unit_gauss(), 1, ORIGIN, E1)) < 1e-15


def test_negative_order_is_rejected():
    with pytest.raises(ValueError):
        moment_transform_J(unit_gauss(), -1, ORIGIN, E1)


def test_zero_direction_is_rejected():
    with pytest.raises(ValueError):
        FreeLinePoint(ORIGIN, ORIGIN)


def test_line_point_membership_is_enforced():
    with pytest.raises(ValueError):
        LinePoint([0.0, 0.0], [2.0, 0.0])
    with pytest.raises(ValueError):
        LinePoint([1.0, 0.0], [1.0, 0.0])


# frozen from adaptive scipy quadrature of the sampled fields
FROZEN_J = [
    ("gauss-vec-1", 2, (0.3, -0.2), (1.3, 0.4), 1.988727778831358),
    ("two-lump-scalar-0", 1, (0.5, 0.5), (-0.6, 0.8), -1.2451738499941993),
    ("gauss-tensor-2", 3, (-0.4, 1.1), (0.2, -0.9), 4.329447775090105),
    ("solenoidal-vec-1", 0, (1.0, 0.2), (0.0, 1.0), -2.084562264748959),
    ("isotropic-tensor-2", 2, (0.1, 0.1), (2.0, 1.0), 0.35228549801798),
]


@pytest.mark.parametrize("name, k, x, xi, expected", FROZEN_J)
@pytest.mark.parametrize("mode", ["analytic", "quadrature"])
def test_transform_matches_frozen_quadrature_values(name, k, x, xi, expected, mode):
    val = moment_transform_J(catalog_phantom(name), k, np.array(x), np.array(xi), mode=mode)
    assert abs(val - expected) < 1e-12 * max(1.0, abs(expected))


def test_random_vector_phantom_quadrature_matches_analytic(rng):
    f = random_phantom(rng, 1)
    x = rng.normal(size=(50, 2))
    xi = rng.normal(size=(50, 2))
    a = moment_transform_J(f, 2, x, xi)
    q = moment_transform_J(f, 2, x, xi, mode="quadrature")
    assert np.max(np.abs(a - q)) < 1e-8


def test_live_oracle_on_random_tensor(rng):
    f = random_phantom(rng, 2)
    x, xi = np.array([0.4, -0.3]), np.array([0.8, 0.5])
    assert abs(moment_transform_J(f, 3, x, xi) - line_moment(f, 3, x, xi)) < 1e-9


# -- I^k -------------------------------------------------------------------------

def test_i_is_j_on_the_bundle(rng):
    f = random_phantom(rng, 2)
    th = rng.uniform(0, 2 * np.pi, 20)
    xi = np.stack([np.cos(th), np.sin(th)], -1)
    x = rng.normal(size=20)[:, None] * np.stack([-np.sin(th), np.cos(th)], -1)
    for k in range(3):
        np.testing.assert_array_equal(moment_transform_I(f, k, x, xi), moment_transform_J(f, k, x, xi))


def test_i0_of_gaussian_through_origin():
    assert abs(moment_transform_I(unit_gauss(), 0, ORIGIN, E1) - math.sqrt(math.pi)) < 1e-15


def _chart(size=64, p_max=6.0):
    p = -p_max + 2 * p_max / size * np.arange(size)
    th = 2 * np.pi / size * np.arange(size)
    return p, th


def test_i0_of_potential_field_vanishes():
    f = catalog_phantom("two-lump-scalar-0").d()
    p, th = _chart()
    assert np.max(np.abs(sinogram_values(f, 0, p, th))) < 1e-12


def test_integration_by_parts_identity():
    p, th = _chart()
    for rank in (0, 1):
        f = random_phantom(np.random.default_rng(rank), rank)
        df = f.d()
        for k in range(1, 4):
            lhs = sinogram_values(df, k, p, th)
            rhs = -k * sinogram_values(f, k - 1, p, th)
            assert np.max(np.abs(lhs - rhs)) < 1e-8


# -- j_from_i -----------------------------------------------------------------------

def test_j_from_i_on_the_bundle_is_identity():
    f = catalog_phantom("gauss-vec-1")
    x, xi = np.array([0.0, 0.7]), E1
    i0 = moment_transform_I(f, 0, x, xi)
    assert j_from_i([i0], x, xi, 0, 1) == pytest.approx(i0, abs=0)


def test_j_from_i_scaled_direction_vector_field():
    f = catalog_phantom("gauss-vec-1")
    x, xi, t = np.array([0.0, 0.7]), E1, 2.5
    i0 = moment_transform_I(f, 0, x, xi)
    assert abs(j_from_i([i0], x, t * xi, 0, 1) - i0) < 1e-15  # t^(m-k)/|t| = 1 for m = 1, k = 0


def test_j_from_i_off_manifold(rng):
    f = random_phantom(rng, 1)
    x, xi = np.array([0.6, -0.9]), np.array([1.7, 0.4])
    xp, up = project_to_bundle(x, xi)
    ivals = [moment_transform_I(f, l, xp, up) for l in range(3)]
    assert abs(j_from_i(ivals, x, xi, 2, 1) - moment_transform_J(f, 2, x, xi)) < 1e-8


def test_j_from_i_rejects_zero_direction():
    with pytest.raises(ValueError):
        j_from_i([1.0], ORIGIN, ORIGIN, 0, 0)


# -- identities ----------------------------------------------------------------------

def test_homogeneity_examples(rng):
    f = catalog_phantom("gauss-vec-1")
    x, xi = np.array([0.2, 0.3]), np.array([0.6, -0.8])
    assert check_homogeneity(f, 1, x, xi, 1.0) == 0.0
    flipped = moment_transform_J(f, 0, x, -xi)
    assert abs(flipped + moment_transform_J(f, 0, x, xi)) < 1e-14
    g = random_phantom(rng, 2)
    assert check_homogeneity(g, 1, x, xi, 2.0) < 1e-8
    with pytest.raises(ValueError):
        check_homogeneity(f, 0, x, xi, 0.0)


def test_shift_law_examples(rng):
    f = random_phantom(rng, 1)
    x, xi = np.array([0.2, 0.3]), np.array([0.6, -0.8])
    assert check_shift_law(f, 0, x, xi, 0.9) < 1e-12
    assert check_shift_law(f, 2, x, xi, 0.0) == 0.0
    assert check_shift_law(f, 2, x, xi, 0.7) < 1e-8


def test_origin_shift_examples(rng):
    f = random_phantom(rng, 1)
    x, xi = np.array([0.0, 0.4]), E1
    assert check_origin_shift(f, [0.0, 0.0], 2, x, xi) < 1e-14
    a = np.array([0.3, -0.5])
    moved = x + a - (a @ xi) * xi
    assert abs(moment_transform_J(f.shifted(a), 0, x, xi) - moment_transform_J(f, 0, moved, xi)) < 1e-14
    assert check_origin_shift(f, rng.uniform(-1, 1, 2), 1, x, xi) < 1e-8


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.1, 2.0), st.floats(-1, 1))
def test_linearity(alpha, beta, scale, shift):
    f = catalog_phantom("gauss-vec-1")
    g = catalog_phantom("solenoidal-vec-1")
    combo = f.scaled(alpha) + g.scaled(beta)
    x, xi = np.array([shift, 0.3]), np.array([scale, 0.5])
    for k in range(3):
        lhs = moment_transform_J(combo, k, x, xi)
        rhs = alpha * moment_transform_J(f, k, x, xi) + beta * moment_transform_J(g, k, x, xi)
        assert abs(lhs - rhs) < 1e-12 * max(1.0, abs(lhs))


@given(st.floats(0, 2 * np.pi), st.floats(-3, 3), st.integers(0, 3))
def test_parity(theta, p, k):
    f = catalog_phantom("gauss-tensor-2")
    x, xi = chart_points([p], [theta])
    lhs = moment_transform_J(f, k, x, -xi)
    assert abs(lhs - (-1) ** (f.rank - k) * moment_transform_J(f, k, x, xi)) < 1e-12


# -- Fourier slice -------------------------------------------------------------------

def test_fourier_slice_at_origin_scalar():
    f = STD_GAUSS
    assert fourier_slice_check(f, 0, [0.0, 0.0], E1) < 1e-12


def test_fourier_slice_zero_field():
    assert fourier_slice_check(Phantom.zero(1), 1, [0.0, 0.5], E1) == 0.0


def test_fourier_slice_vector_gaussian():
    f = catalog_phantom("gauss-vec-1")
    th = 0.4
    xi = np.array([math.cos(th), math.sin(th)])
    y = 1.3 * np.array([-math.sin(th), math.cos(th)])
    assert fourier_slice_check(f, 1, y, xi) < 1e-6


def test_fourier_slice_rejects_off_bundle_pairs():
    with pytest.raises(ValueError):
        fourier_slice_check(STD_GAUSS, 0, [1.0, 0.0], E1)


def test_three_dimensional_smoke():
    from momray.tensor import Lump
    f = Phantom(1, 3, (Lump.gaussian([0.2, 0.0, -0.1], 1.0, [1.0, 0.5, -0.3]),))
    x, xi = np.array([0.1, 0.4, -0.2]), np.array([0.3, -0.5, 0.8])
    assert abs(moment_transform_J(f, 1, x, xi) - line_moment(f, 1, x, xi)) < 1e-10
    assert abs(moment_transform_J(f, 2, x, xi, mode="quadrature") - moment_transform_J(f, 2, x, xi)) < 1e-8
    xi_u = xi / np.linalg.norm(xi)
    y = np.cross(xi_u, [1.0, 0.0, 0.0])
    assert fourier_slice_check(f, 1, 0.5 * y / np.linalg.norm(y), xi_u, p_count=128, p_max=8.0) < 1e-6
