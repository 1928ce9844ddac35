import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import W, uniform
from fragrate.errors import DomainError, GridMismatchError
from fragrate.grid import (
    WeightPair,
    default_x_max,
    embedding_constant,
    inner_H,
    make_grid,
    mass_moment,
    norm_H,
    norm_X,
    parse_initial,
    project_zero_mass,
    read_density_csv,
    sample_initial,
    write_density_csv,
)
from fragrate.profile import explicit_profile


@pytest.fixture(scope="module")
def grid1024():
    return make_grid(1e-4, 50.0, 1024)


@pytest.fixture(scope="module")
def G1024(grid1024):
    return explicit_profile(uniform(1.0), grid1024)


# ---------------------------------------------------------------- grid


def test_grid_spacing():
    g = make_grid(1e-4, 50, 512)
    assert g.dxi == pytest.approx((math.log(50) - math.log(1e-4)) / 511, rel=1e-14)
    assert g.x[0] == 1e-4 and g.x[-1] == 50.0
    assert np.allclose(np.diff(np.log(g.x)), g.dxi, rtol=1e-9)


def test_two_node_grid():
    g = make_grid(1.0, math.e, 2)
    assert g.dxi == pytest.approx(1.0)
    assert np.allclose(g.x, [1.0, math.e])


def test_grid_errors():
    with pytest.raises(DomainError):
        make_grid(2, 1, 64)
    with pytest.raises(DomainError):
        make_grid(0.0, 1, 64)
    with pytest.raises(DomainError):
        make_grid(1e-3, 1, 1)


def test_check_same():
    a, b = make_grid(1e-3, 10, 64), make_grid(1e-3, 10, 65)
    a.check_same(make_grid(1e-3, 10, 64))
    with pytest.raises(GridMismatchError):
        a.check_same(b)


def test_default_x_max():
    assert default_x_max(uniform(1.0)) == pytest.approx(50.0)
    # same depth in Lambda for other homogeneities
    assert default_x_max(uniform(2.0)) == pytest.approx(10.0)


def test_weight_pair_bounds():
    with pytest.raises(DomainError):
        WeightPair(0.4, 1.5)
    with pytest.raises(DomainError):
        WeightPair(0.75, 2.0)


# ---------------------------------------------------------------- moments and norms


def test_mass_of_explicit_profile(G1024, grid1024):
    assert mass_moment(grid1024, G1024.values) == pytest.approx(1.0, abs=1e-6)
    assert mass_moment(grid1024, np.zeros(grid1024.n)) == 0.0


def test_mass_of_indicator(grid1024):
    g = sample_initial("indicator:1:2", grid1024, normalize_mass=False)
    assert mass_moment(grid1024, g) == pytest.approx(1.5, abs=1e-3)


def test_norm_X_gamma_oracle(G1024, grid1024):
    target = math.gamma(1.75) + math.gamma(2.5)
    assert norm_X(grid1024, G1024.values, W) == pytest.approx(target, abs=1e-4)
    assert norm_X(grid1024, np.zeros(grid1024.n), W) == 0.0


def test_norm_H_of_profile(G1024, grid1024):
    assert norm_H(grid1024, G1024.values, G1024) == pytest.approx(1.0, abs=1e-6)
    assert norm_H(grid1024, np.zeros(grid1024.n), G1024) == 0.0


def test_norm_H_needs_positive_profile(grid1024):
    with pytest.raises(DomainError):
        norm_H(grid1024, np.ones(grid1024.n), np.zeros(grid1024.n))
    with pytest.raises(GridMismatchError):
        norm_H(grid1024, np.ones(grid1024.n), np.ones(3))


def test_projection_examples(G1024, grid1024):
    # the sampled explicit profile has discrete mass 1 - 5e-9
    assert np.max(np.abs(project_zero_mass(grid1024, G1024.values, G1024))) < 1e-8
    G = G1024.values / mass_moment(grid1024, G1024.values)
    assert np.max(np.abs(project_zero_mass(grid1024, G, G))) < 1e-15
    assert np.max(np.abs(project_zero_mass(grid1024, 2 * G, G))) < 1e-15
    h = (grid1024.x - 2) * G
    h = h - mass_moment(grid1024, h) * G
    assert np.allclose(project_zero_mass(grid1024, h, G), h, atol=1e-15)


def test_embedding_constant_bounds_norm(G1024, grid1024, rng):
    C = embedding_constant(grid1024, G1024, W)
    for _ in range(20):
        g = rng.normal(size=grid1024.n) * G1024.values
        assert norm_X(grid1024, g, W) <= C * norm_H(grid1024, g, G1024) * (1 + 1e-12)


# ---------------------------------------------------------------- initial data


def test_bump_is_normalized(grid1024):
    g = sample_initial("bump:1:0.1", grid1024)
    assert mass_moment(grid1024, g) == pytest.approx(1.0, abs=1e-14)


def test_scaled_profile_mass(G1024, grid1024):
    g = sample_initial(("scaled_profile", (2.0,)), grid1024, normalize_mass=False, profile=G1024)
    assert mass_moment(grid1024, g) == pytest.approx(1.0, abs=1e-5)


def test_initial_errors(grid1024):
    with pytest.raises(DomainError):
        sample_initial("indicator:5:60", grid1024)
    with pytest.raises(DomainError):
        sample_initial("bump:1", grid1024)
    with pytest.raises(DomainError):
        sample_initial("spike:1:2", grid1024)
    with pytest.raises(DomainError):
        parse_initial("bump:one:2")


def test_density_csv_round_trip(tmp_path, grid1024):
    g = sample_initial("bump:1:0.3", grid1024)
    p = tmp_path / "g.csv"
    write_density_csv(p, grid1024, g, ["a header"])
    x, v = read_density_csv(p)
    assert p.read_text().startswith("# a header\n")
    assert np.array_equal(x, grid1024.x) and np.array_equal(v, g)


# ---------------------------------------------------------------- properties

vectors = st.integers(0, 2**32 - 1).map(lambda s: np.random.default_rng(s).normal(size=64))


@given(g=vectors, c=st.floats(-5, 5).filter(lambda c: c == 0 or abs(c) > 1e-100))
def test_norms_are_homogeneous(g, c):
    grid = make_grid(1e-3, 20.0, 64)
    G = np.exp(-grid.x)
    assert norm_X(grid, c * g, W) == pytest.approx(abs(c) * norm_X(grid, g, W), rel=1e-12, abs=1e-300)
    assert norm_H(grid, c * g, G) == pytest.approx(abs(c) * norm_H(grid, g, G), rel=1e-12, abs=1e-300)


@given(f=vectors, g=vectors)
def test_norm_X_triangle_and_H_inner(f, g):
    grid = make_grid(1e-3, 20.0, 64)
    G = np.exp(-grid.x)
    assert norm_X(grid, f + g, W) <= norm_X(grid, f, W) + norm_X(grid, g, W) + 1e-12
    assert inner_H(grid, f, g, G) == pytest.approx(inner_H(grid, g, f, G), rel=1e-12, abs=1e-12)
    assert abs(inner_H(grid, f, g, G)) <= norm_H(grid, f, G) * norm_H(grid, g, G) * (1 + 1e-12)


@given(g=vectors)
@settings(max_examples=50)
def test_projection_has_zero_mass_and_is_idempotent(g):
    grid = make_grid(1e-3, 20.0, 64)
    G = np.exp(-grid.x)
    G = G / mass_moment(grid, G)
    p = project_zero_mass(grid, g, G)
    scale = float(np.dot(grid.w * grid.x, np.abs(g))) + 1e-300
    assert abs(mass_moment(grid, p)) <= 1e-12 * scale
    assert np.allclose(project_zero_mass(grid, p, G), p, atol=1e-12 * scale)
