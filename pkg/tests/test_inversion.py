import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from momray.catalog import catalog_phantom
from momray.inversion import (ComponentSinogram, DecayWarning, JData, PhantomSource, PipelineError,
                              SinogramSource, component_errors, full_pipeline, scalar_inversion_constant,
                              scalar_invert_2d, theorem31_recursion, theorem_intrinsic_m1,
                              theorem_intrinsic_m2)
from momray.sphere import SinogramGrid, X
from momray.xray import moment_transform_J, sinogram_values

from oracles import gamma_ratio


def sinos_of(f, theta_count=64, p_count=256, p_max=12.0, top=None):
    g = SinogramGrid.zeros(theta_count, p_count, p_max)
    top = f.rank if top is None else top
    return [g.with_values(sinogram_values(f, k, g.p, g.theta)) for k in range(top + 1)]


def direct_components(f, grid):
    return {idx: sinogram_values(f.component(idx), 0, grid.p, grid.theta)
            for idx in ComponentSinogram(f.rank, 2, {i: None for i in _indices(f)}).keys()}


def _indices(f):
    from momray.tensor import multi_indices
    return multi_indices(f.dim, f.rank)


def scattered(count=24, seed=0):
    rng = np.random.default_rng(seed)
    th = rng.uniform(0, 2 * np.pi, count)
    p = rng.uniform(-2.5, 2.5, count)
    xi = np.stack([np.cos(th), np.sin(th)], -1)
    x = p[:, None] * np.stack([-np.sin(th), np.cos(th)], -1)
    return x, xi


def component_oracle(f, x, xi):
    return {idx: moment_transform_J(f.component(idx), 0, x, xi) for idx in _indices(f)}


# -- component sinograms --------------------------------------------------------------

def test_component_lookup_is_symmetric():
    cs = ComponentSinogram(2, 2, {(0, 0): 1, (1, 0): 2, (1, 1): 3})
    assert cs[0, 1] == cs[1, 0] == 2
    with pytest.raises(ValueError):
        ComponentSinogram(2, 2, {(0, 0): 1})


# -- finite-difference route ------------------------------------------------------------

def test_recursion_at_rank_zero_returns_the_data():
    f = catalog_phantom("two-lump-scalar-0")
    x, xi = scattered()
    out = theorem31_recursion(JData(PhantomSource(f), 0, x, xi), 0)
    np.testing.assert_array_equal(out[()], moment_transform_J(f, 0, x, xi))


@pytest.mark.parametrize("name, tol", [("gauss-vec-1", 1e-3), ("gauss-tensor-2", 5e-3)])
def test_recursion_matches_direct_component_transforms(name, tol):
    f = catalog_phantom(name)
    x, xi = scattered()
    out = theorem31_recursion(JData(PhantomSource(f), f.rank, x, xi, h=1e-2), f.rank)
    for idx, exact in component_oracle(f, x, xi).items():
        err = np.max(np.abs(out[idx] - exact)) / np.max(np.abs(exact))
        assert err < tol


@pytest.mark.parametrize("name", ["gauss-vec-1", "gauss-tensor-2"])
def test_recursion_converges_under_step_refinement(name):
    f = catalog_phantom(name)
    x, xi = scattered(12, seed=4)
    exact = component_oracle(f, x, xi)
    errs = []
    for h in (8e-2, 4e-2, 2e-2):
        out = theorem31_recursion(JData(PhantomSource(f), f.rank, x, xi, h=h), f.rank)
        errs.append(max(np.max(np.abs(out[i] - exact[i])) for i in exact))
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert min(orders) >= 1.9


def test_recursion_rejects_short_stencil_and_missing_moments():
    f = catalog_phantom("gauss-tensor-2")
    x, xi = scattered(4)
    with pytest.raises(ValueError):
        JData(PhantomSource(f), 2, x, xi, radius=1)
    src = SinogramSource(sinos_of(f, 16, 64, top=1), rank=2)
    with pytest.raises(ValueError):
        JData(src, 2, x, xi)
    jd = JData(PhantomSource(f), 1, x, xi)
    with pytest.raises(ValueError):
        theorem31_recursion(jd, 2)


def test_sinogram_source_interpolates_on_and_off_nodes():
    f = catalog_phantom("gauss-vec-1")
    sinos = sinos_of(f, 128, 512, top=1)
    src = SinogramSource(sinos, rank=1)
    x, xi = scattered(30, seed=9)
    for k in (0, 1):
        exact = moment_transform_J(f, k, x, xi)
        assert np.max(np.abs(src.values(k, x, xi) - exact)) < 1e-6


# -- intrinsic route ---------------------------------------------------------------------

def test_intrinsic_m1_zero():
    z = SinogramGrid.zeros(16, 64)
    out = theorem_intrinsic_m1(z, z)
    assert all(np.max(np.abs(v.values)) == 0 for v in out.parts.values())


def test_intrinsic_m1_gaussian_vector():
    f = catalog_phantom("gauss-vec-1")
    i0, i1 = sinos_of(f)
    out = theorem_intrinsic_m1(i0, i1)
    for idx, exact in direct_components(f, i0).items():
        assert np.max(np.abs(out[idx].values - exact)) < 1e-8


def test_intrinsic_m1_potential_field():
    phi = catalog_phantom("two-lump-scalar-0")
    f = phi.d()
    i0, i1 = sinos_of(f)
    assert np.max(np.abs(i0.values)) < 1e-12
    minus_i0_phi = i0.with_values(-sinogram_values(phi, 0, i0.p, i0.theta))
    np.testing.assert_allclose(i1.values, minus_i0_phi.values, atol=1e-12)
    out = theorem_intrinsic_m1(i0, i1)
    for i in (0, 1):
        assert np.max(np.abs(out[i].values + X(minus_i0_phi, i).values)) < 1e-12


def test_intrinsic_m2_zero_and_grid_mismatch():
    z = SinogramGrid.zeros(16, 64)
    out = theorem_intrinsic_m2(z, z, z)
    assert all(np.max(np.abs(v.values)) == 0 for v in out.parts.values())
    with pytest.raises(ValueError):
        theorem_intrinsic_m2(z, z, SinogramGrid.zeros(16, 128))
    with pytest.raises(ValueError):
        theorem_intrinsic_m1(z, SinogramGrid.zeros(32, 64))


@pytest.mark.parametrize("name", ["gauss-tensor-2", "potential-tensor-2"])
def test_intrinsic_m2_tensor(name):
    f = catalog_phantom(name)
    sinos = sinos_of(f)
    out = theorem_intrinsic_m2(*sinos)
    for idx, exact in direct_components(f, sinos[0]).items():
        assert np.max(np.abs(out[idx].values - exact)) < 1e-7


def test_intrinsic_m2_isotropic_trace():
    f = catalog_phantom("isotropic-tensor-2")
    g = catalog_phantom("two-lump-scalar-0")
    sinos = sinos_of(f)
    out = theorem_intrinsic_m2(*sinos)
    trace = out[0, 0].values + out[1, 1].values
    ig = sinogram_values(g, 0, sinos[0].p, sinos[0].theta)
    assert np.max(np.abs(trace - 2 * ig)) < 1e-7


def test_fd_route_on_a_chart_grid_approaches_the_intrinsic_route():
    f = catalog_phantom("gauss-vec-1")
    sinos = sinos_of(f, 64, 64, 8.0)
    spectral = theorem_intrinsic_m1(*sinos)
    fd = theorem31_recursion(JData(PhantomSource(f), 1, grid=sinos[0]), 1)
    for i in (0, 1):
        assert np.max(np.abs(fd[i].values - spectral[i].values)) < 1e-6


# -- scalar inversion --------------------------------------------------------------------

def test_inversion_constant():
    assert scalar_inversion_constant(2) == pytest.approx(1 / (4 * math.pi), rel=1e-15)
    assert scalar_inversion_constant(3) == pytest.approx(gamma_ratio(3), rel=1e-15)


def test_zero_sinogram_inverts_to_zero():
    fg = scalar_invert_2d(SinogramGrid.zeros(32, 128), grid_size=32)
    assert np.max(np.abs(fg.values)) == 0


def test_gaussian_scalar_inversion():
    f = catalog_phantom("gauss-scalar-0")
    (sino,) = sinos_of(f, 256, 1024)
    fg = scalar_invert_2d(sino, grid_size=256)
    (row,) = component_errors({(): fg}, f)
    assert row["L2_err"] < 0.01


def test_undecayed_sinogram_warns_and_clamps():
    f = catalog_phantom("gauss-scalar-0")
    (sino,) = sinos_of(f, 32, 64, 3.0)
    with pytest.warns(DecayWarning):
        fg = scalar_invert_2d(sino, grid_size=32, extent=4.0)
    assert fg.diagnostics["clamped_samples"] > 0


# -- pipeline -------------------------------------------------------------------------------

def test_pipeline_rank_zero_is_scalar_inversion():
    f = catalog_phantom("two-lump-scalar-0")
    sinos = sinos_of(f, 64, 256)
    rec = full_pipeline(sinos, 0, grid_size=64)
    direct = scalar_invert_2d(sinos[0], grid_size=64)
    assert list(rec) == [()]
    np.testing.assert_array_equal(rec[()].values, direct.values)


@pytest.mark.parametrize("name, tol", [("gauss-vec-1", 0.02), ("solenoidal-vec-1", 0.02),
                                       ("gauss-tensor-2", 0.03)])
def test_pipeline_recovers_components(name, tol):
    f = catalog_phantom(name)
    rec = full_pipeline(sinos_of(f, 128, 512), f.rank, grid_size=128)
    assert len(rec) == f.ncomp
    assert max(r["L2_err"] for r in component_errors(rec, f)) < tol


def test_pipeline_fd_route():
    f = catalog_phantom("gauss-vec-1")
    rec = full_pipeline(sinos_of(f, 64, 256), 1, route="fd", grid_size=64)
    assert max(r["L2_err"] for r in component_errors(rec, f)) < 0.02


def test_gauge_recovery_of_potential_field():
    f = catalog_phantom("potential-vec-1")
    sinos = sinos_of(f, 128, 512)
    assert np.max(np.abs(sinos[0].values)) < 1e-9
    rec = full_pipeline(sinos, 1, grid_size=128)
    assert max(r["L2_err"] for r in component_errors(rec, f)) < 0.02


def test_pipeline_is_linear():
    f = catalog_phantom("gauss-vec-1")
    g = catalog_phantom("solenoidal-vec-1")
    a, b = 0.7, -1.9
    sf, sg = sinos_of(f, 32, 128), sinos_of(g, 32, 128)
    combo = [x * a + y * b for x, y in zip(sf, sg)]
    rc = full_pipeline(combo, 1, grid_size=32)
    rf, rg = full_pipeline(sf, 1, grid_size=32), full_pipeline(sg, 1, grid_size=32)
    for idx in rc:
        expected = a * rf[idx].values + b * rg[idx].values
        assert np.linalg.norm(rc[idx].values - expected) < 1e-10 * np.linalg.norm(expected)


def test_pipeline_parallel_map_gives_identical_result():
    f = catalog_phantom("gauss-tensor-2")
    sinos = sinos_of(f, 32, 128)
    serial = full_pipeline(sinos, 2, grid_size=32)
    with ThreadPoolExecutor(3) as ex:
        par = full_pipeline(sinos, 2, grid_size=32, mapper=ex.map)
    for idx in serial:
        np.testing.assert_array_equal(serial[idx].values, par[idx].values)


def test_pipeline_errors_carry_stage_labels():
    z = SinogramGrid.zeros(16, 64)
    with pytest.raises(PipelineError) as info:
        full_pipeline([z], 1)
    assert info.value.stage == "validate"
    with pytest.raises(PipelineError) as info:
        full_pipeline([z, SinogramGrid.zeros(16, 128)], 1)
    assert info.value.stage == "validate"
    with pytest.raises(PipelineError) as info:
        full_pipeline([z, z], 1, grid_size=1)
    assert info.value.stage == "scalar-inversion"
