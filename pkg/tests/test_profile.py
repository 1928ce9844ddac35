import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from conftest import W, linear_shape, uniform
from fragrate.errors import ConvergenceError, DomainError, UnsupportedKernelError
from fragrate.grid import default_x_max, make_grid, mass_moment, norm_X
from fragrate.operators import assemble_T
from fragrate.profile import (
    ProfileTable,
    check_monotone_K,
    check_profile_bounds,
    compute_profile,
    eigen_residual,
    explicit_normalizer,
    explicit_profile,
    stationarity_residual,
)


# ---------------------------------------------------------------- explicit profile


def test_normalizer_examples():
    assert explicit_normalizer(2.0) == pytest.approx(1.0, rel=1e-14)
    assert explicit_normalizer(0.5) == pytest.approx(0.75, rel=1e-14)
    assert explicit_normalizer(1.0) == pytest.approx(1.0, rel=1e-14)


@pytest.mark.parametrize("gamma", [0.5, 1.0, 1.5, 2.0])
def test_normalizer_against_quadrature(gamma):
    val, _ = quad(lambda x: x * math.exp(-(x**gamma) / gamma), 0, np.inf)
    assert explicit_normalizer(gamma) == pytest.approx(val, rel=1e-10)


def test_explicit_profile_gamma_2():
    grid = make_grid(1e-3, 10.0, 64)
    G = explicit_profile(uniform(2.0), grid)
    assert np.allclose(G.values, np.exp(-grid.x**2 / 2), rtol=1e-14)
    assert G(np.array([1.0]))[0] == pytest.approx(math.exp(-0.5))


def test_explicit_profile_needs_c_equal_two(grid512):
    with pytest.raises(UnsupportedKernelError):
        explicit_profile(uniform(1.0, c=3.0), grid512)
    with pytest.raises(UnsupportedKernelError):
        explicit_profile(linear_shape(), grid512)


def test_profile_table_invariants(grid512):
    with pytest.raises(DomainError):
        ProfileTable(grid512, -np.ones(grid512.n), 1.0)
    with pytest.raises(DomainError):
        ProfileTable(grid512, np.ones(grid512.n), 1.1)
    with pytest.raises(DomainError):
        ProfileTable(grid512, np.ones(3), 1.0)


def test_profile_interpolation(G512, grid512):
    x = grid512.x
    mid = np.sqrt(x[10] * x[11])
    assert G512(np.array([x[10]]))[0] == pytest.approx(G512.values[10], rel=1e-12)
    assert min(G512.values[10], G512.values[11]) <= G512(np.array([mid]))[0] <= max(G512.values[10], G512.values[11])


# ---------------------------------------------------------------- computed profile


def test_computed_profile_matches_explicit(G512, G_exact512, grid512):
    err = norm_X(grid512, G512.values - G_exact512.values, W) / norm_X(grid512, G_exact512.values, W)
    assert err < 5e-3
    assert G512.source == "computed" and G512.mass == pytest.approx(1.0, abs=1e-12)


def test_computed_profile_tabulated_shape():
    spec = linear_shape()
    grid = make_grid(1e-4, default_x_max(spec), 256)
    T = assemble_T(spec, grid)
    G = compute_profile(spec, grid, tol=1e-10, T_h=T)
    assert G.mass == pytest.approx(1.0, abs=1e-12)
    assert eigen_residual(T, G.values, W)[0] < 1e-10
    assert np.all(G.values > 0)


def test_computed_profile_convergence_failure():
    grid = make_grid(1e-4, 50.0, 128)
    with pytest.raises(ConvergenceError) as info:
        compute_profile(uniform(1.0), grid, tol=1e-10, t_max=1.0)
    assert info.value.residual > 1e-10


def test_computed_profile_rejects_invalid_kernel(grid512):
    with pytest.raises(DomainError, match="Hypothesis 3"):
        compute_profile(uniform(2.5), grid512)


# ---------------------------------------------------------------- bounds


def test_bound_examples(G_exact512, spec1):
    rep = check_profile_bounds(G_exact512, spec1, 0.9, 1.1)
    x0 = G_exact512.grid.x_min
    assert rep.sup_ratio_upper == pytest.approx(math.exp(-0.1 * x0), rel=1e-12)
    assert rep.inf_ratio_lower == pytest.approx(math.exp(0.1 * x0), rel=1e-12)
    assert rep.monotone_K and rep.passed
    assert rep.K_origin_limit == pytest.approx(x0**2, rel=1e-12)
    assert (rep.x_min, rep.x_max) == (x0, 50.0)


def test_bound_exponent_errors(G_exact512, spec1):
    with pytest.raises(DomainError):
        check_profile_bounds(G_exact512, spec1, 1.5, 1.1)
    with pytest.raises(DomainError):
        check_profile_bounds(G_exact512, spec1, 0.9, 0.9)


def test_K_is_x_squared_for_gamma_2():
    grid = make_grid(1e-3, 10.0, 256)
    G = explicit_profile(uniform(2.0), grid)
    monotone, k0 = check_monotone_K(G, uniform(2.0))
    assert monotone and k0 == pytest.approx(1e-6, rel=1e-10)


def test_K_detects_a_dip(G_exact512, spec1, grid512):
    v = G_exact512.values.copy()
    v[200:210] *= 0.5
    G = ProfileTable(grid512, v, 1.0 + 0.0 * mass_moment(grid512, v), "perturbed")
    assert not check_monotone_K(G, spec1)[0]


# ---------------------------------------------------------------- stationarity


@pytest.fixture(scope="module")
def explicit_residuals(spec1):
    out = {}
    for n in (256, 512):
        grid = make_grid(1e-4, 50.0, n)
        out[n] = stationarity_residual(explicit_profile(spec1, grid), assemble_T(spec1, grid), W)
    return out


def test_stationarity_residual_small(explicit_residuals):
    assert explicit_residuals[512] < 1e-3


def test_stationarity_residual_second_order(explicit_residuals):
    assert explicit_residuals[256] / explicit_residuals[512] >= 3.5


def test_stationarity_residual_homogeneous(G_exact512, T512):
    doubled = SimpleNamespace(grid=G_exact512.grid, values=2 * G_exact512.values)
    assert stationarity_residual(doubled, T512, W) == pytest.approx(stationarity_residual(G_exact512, T512, W), rel=1e-13)


def test_computed_profile_near_discrete_kernel(G512, T512):
    res, mu = eigen_residual(T512, G512.values, W)
    assert res < 1e-10
    assert abs(mu) < 1e-3


# ---------------------------------------------------------------- properties


@given(gamma=st.floats(0.3, 1.9))
@settings(max_examples=25, deadline=None)
def test_explicit_profile_mass_and_K(gamma):
    spec = uniform(gamma)
    grid = make_grid(1e-4, default_x_max(spec), 400)
    G = explicit_profile(spec, grid)
    assert G.mass == pytest.approx(1.0, abs=1e-5)
    monotone, k0 = check_monotone_K(G, spec)
    # K = x^2 / Z exactly for this family
    assert monotone and k0 == pytest.approx(grid.x_min**2 / explicit_normalizer(gamma), rel=1e-10)
