import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hermvar.chaos import kernel_tensor, multiple_wiener_integral, simulate_hermite_path
from hermvar.grid import Partition, make_dyadic_grid
from hermvar.kernel import HermiteParams
from hermvar.malliavin import (
    PROFILES,
    CylindricalVariable,
    Direction,
    ElementaryProcess,
    affine_profile,
    derivative_tensor,
    duality_check,
    first_chaos_oracle,
    get_profile,
    malliavin_derivative,
    parse_integrand,
    realize,
    realize_batch,
    skorokhod_integral,
    skorokhod_paths,
    sobolev_norm_estimate,
    windowed_norm_scaling,
)
from hermvar.randomness import SeedSpec, mc_mean, noise_batch, sample_noise, wiener_integral

SEED = 12345
CATALOG = ["sin", "cos", "tanh", "gauss"]


def ridge(profile="tanh", weights=(1.0, 0.5), directions=None):
    directions = directions or (Direction("cos", omega=2.0), Direction("poly", (1.0, -1.0, 0.5)))
    return CylindricalVariable(PROFILES[profile], weights, directions)


@pytest.fixture
def grid():
    return make_dyadic_grid(1.0, 6)


def test_constant_realizes_to_itself(grid):
    F = CylindricalVariable.constant(2.5)
    for r in range(5):
        assert realize(F, sample_noise(SeedSpec(SEED, r), grid)) == 2.5


def test_single_direction_sin(grid):
    h = Direction("poly", (0.2, 1.0))
    F = CylindricalVariable(PROFILES["sin"], (1.0,), (h,))
    w = sample_noise(SeedSpec(SEED), grid)
    assert realize(F, w) == pytest.approx(math.sin(wiener_integral(h.sample(grid), w)), rel=1e-14)


@pytest.mark.parametrize("name", CATALOG)
def test_realizations_bounded(name, grid):
    F = ridge(name, weights=(3.0, 2.0))
    vals = realize_batch(F, noise_batch(SEED, range(1000), grid), grid)
    assert np.all(np.abs(vals) <= PROFILES[name].bounds[0])


@pytest.mark.parametrize("name", CATALOG)
def test_profile_derivative_bounds(name):
    x = np.linspace(-6, 6, 200_001)
    prof = PROFILES[name]
    for order in range(4):
        observed = np.max(np.abs(prof(x, order)))
        assert observed <= prof.bounds[order] * (1 + 1e-9)
        assert observed >= 0.999 * prof.bounds[order]


@pytest.mark.parametrize("name", CATALOG)
def test_profile_derivatives_are_derivatives(name):
    prof, x, h = PROFILES[name], np.linspace(-2, 2, 41), 1e-6
    for order in range(3):
        fd = (prof(x + h, order) - prof(x - h, order)) / (2 * h)
        assert np.allclose(fd, prof(x, order + 1), atol=1e-7)


def test_uniform_bound(grid):
    F = ridge("gauss", weights=(1.5, -0.5))
    bound = F.uniform_bound(grid.horizon)
    assert math.isfinite(bound)
    w = sample_noise(SeedSpec(SEED), grid)
    for order in range(4):
        for x in np.linspace(0.01, 0.99, 7):
            assert abs(malliavin_derivative(F, order, w, [x] * order)) <= bound


def test_derivative_order_zero_is_value(grid):
    F = ridge()
    w = sample_noise(SeedSpec(SEED), grid)
    assert malliavin_derivative(F, 0, w, []) == realize(F, w)


def test_constant_derivative_vanishes(grid):
    w = sample_noise(SeedSpec(SEED), grid)
    assert malliavin_derivative(CylindricalVariable.constant(3.0), 1, w, [0.4]) == 0.0


def test_derivative_ridge_form(grid):
    F = ridge("sin")
    w = sample_noise(SeedSpec(SEED), grid)
    X = F.argument(w.increments, grid)
    x = [0.2, 0.7]
    expected = -math.sin(X) * float(F.ridge_at(0.2) * F.ridge_at(0.7))
    assert malliavin_derivative(F, 2, w, x) == pytest.approx(expected, rel=1e-13)


def test_derivative_order_cap(grid):
    with pytest.raises(ValueError):
        malliavin_derivative(ridge(), 4, sample_noise(SeedSpec(SEED), grid), [0.1] * 4)


@pytest.mark.parametrize("name", CATALOG)
def test_directional_finite_difference(name, grid):
    F = ridge(name)
    w = sample_noise(SeedSpec(SEED, 1), grid)
    h = np.cos(4 * grid.midpoints)
    eps = 1e-5
    fd = (realize(F, w.perturbed(h, eps)) - realize(F, w)) / eps
    exact = grid.step * float(derivative_tensor(F, 1, w).values @ h)
    assert abs(fd - exact) <= 1e-3 * max(abs(exact), 1e-3)


def test_direction_validation():
    with pytest.raises(ValueError):
        Direction("poly", (1, 2, 3, 4, 5, 6))
    with pytest.raises(ValueError):
        Direction("exp", omega=1.0)
    with pytest.raises(ValueError):
        Direction("cos", omega=float("inf"))
    assert Direction("poly", (0.0, 2.0, -1.0)).sup_norm(2.0) == pytest.approx(1.0)
    assert Direction("poly", (0.0, 2.0, -1.0)).sup_norm(3.0) == pytest.approx(3.0)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_deterministic_integrand_is_sum_of_increments(k, grid):
    p = HermiteParams(0.7, k)
    g = ElementaryProcess.deterministic((0.0, 0.25, 0.75, 1.0), (2.0, -0.5, 1.25))
    for r in range(3):
        w = sample_noise(SeedSpec(SEED, r), grid)
        Z = simulate_hermite_path(p, grid, w)
        direct = 2.0 * Z.at(0.25) - 0.5 * (Z.at(0.75) - Z.at(0.25)) + 1.25 * (Z.at(1.0) - Z.at(0.75))
        assert skorokhod_integral(p, g, w) == pytest.approx(direct, rel=1e-9)


@pytest.mark.parametrize("name", CATALOG)
def test_first_order_pull_out_matches_oracle(name, grid):
    p = HermiteParams(0.75, 1)
    g = ElementaryProcess(Partition((0.0, 0.25, 0.625, 1.0)), (ridge(name), CylindricalVariable.constant(-1.0), ridge("sin")))
    for r in range(3):
        w = sample_noise(SeedSpec(SEED, r), grid)
        for window in [(0.0, 1.0), (0.125, 0.75)]:
            expansion = skorokhod_integral(p, g, w, window)
            assert expansion == pytest.approx(first_chaos_oracle(p, g, w, window), rel=1e-9)


def test_affine_coefficient_product_formula(grid):
    # F = 0.3 + 1.2 I(h) is not bounded; the expansion must still give F I(u) - 1.2 <h, u>
    p = HermiteParams(0.75, 1)
    h = Direction("sin", omega=1.0)
    F = CylindricalVariable(affine_profile(0.3, 1.2), (1.0,), (h,))
    g = ElementaryProcess(Partition((0.0, 1.0)), (F,))
    u = kernel_tensor(p, grid)
    for r in range(3):
        w = sample_noise(SeedSpec(SEED, r), grid)
        F_val = 0.3 + 1.2 * wiener_integral(h.sample(grid), w)
        expected = F_val * multiple_wiener_integral(u, w) - 1.2 * grid.step * float(h.sample(grid) @ u.values)
        assert skorokhod_integral(p, g, w) == pytest.approx(expected, rel=1e-6)


def test_zero_integrand(grid):
    g = ElementaryProcess.deterministic((0.0, 1.0), (0.0,))
    assert skorokhod_integral(HermiteParams(0.7, 2), g, sample_noise(SeedSpec(SEED), grid)) == 0.0


@settings(max_examples=15, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**32))
def test_linearity_in_integrand(c1, c2, seed):
    grid = make_dyadic_grid(1.0, 5)
    p = HermiteParams(0.7, 2)
    pts = (0.0, 0.25, 0.5, 1.0)
    u, v = (1.0, -2.0, 0.5), (0.3, 0.0, 4.0)
    w = sample_noise(SeedSpec(seed), grid)
    combo = ElementaryProcess.deterministic(pts, tuple(c1 * a + c2 * b for a, b in zip(u, v)))
    parts = c1 * skorokhod_integral(p, ElementaryProcess.deterministic(pts, u), w) + c2 * skorokhod_integral(
        p, ElementaryProcess.deterministic(pts, v), w
    )
    assert skorokhod_integral(p, combo, w) == pytest.approx(parts, rel=1e-9, abs=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 31), st.integers(0, 2**32))
def test_additive_over_windows(cut, seed):
    grid = make_dyadic_grid(1.0, 5)
    p = HermiteParams(0.7, 2)
    g = ElementaryProcess(Partition((0.0, 0.5, 1.0)), (ridge("tanh"), ridge("cos", weights=(0.7, -1.0))))
    w = sample_noise(SeedSpec(seed), grid)
    t = grid.nodes[cut]
    whole = skorokhod_integral(p, g, w)
    split = skorokhod_integral(p, g, w, (0.0, t)) + skorokhod_integral(p, g, w, (t, 1.0))
    assert whole == pytest.approx(split, rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("k", [1, 2])
def test_zero_mean(k):
    grid = make_dyadic_grid(1.0, 5)
    p = HermiteParams(0.7, k)
    g = ElementaryProcess(Partition((0.0, 0.5, 1.0)), (ridge("tanh"), ridge("gauss", weights=(1.0, 1.0))))
    vals = skorokhod_paths(p, g, grid, SEED, 10_000)[:, -1]
    m, se = mc_mean(vals)
    assert abs(m) <= 3 * se


def test_window_must_use_nodes(grid):
    g = ElementaryProcess.deterministic((0.0, 1.0), (1.0,))
    w = sample_noise(SeedSpec(SEED), grid)
    with pytest.raises(ValueError):
        skorokhod_integral(HermiteParams(0.7, 1), g, w, (0.0, 0.3))
    with pytest.raises(ValueError):
        skorokhod_integral(HermiteParams(0.7, 1), g, w, (0.5, 0.25))


def test_order_cap(grid):
    g = ElementaryProcess.deterministic((0.0, 1.0), (1.0,))
    with pytest.raises(ValueError):
        skorokhod_integral(HermiteParams(0.7, 4), g, sample_noise(SeedSpec(SEED), grid))


def test_unaligned_integrand(grid):
    g = ElementaryProcess.deterministic((0.0, 0.3, 1.0), (1.0, 2.0))
    with pytest.raises(ValueError):
        skorokhod_integral(HermiteParams(0.7, 1), g, sample_noise(SeedSpec(SEED), grid))


def test_coefficient_count():
    with pytest.raises(ValueError):
        ElementaryProcess(Partition((0.0, 0.5, 1.0)), (CylindricalVariable.constant(1.0),))


def test_duality_constant_coefficient():
    grid = make_dyadic_grid(1.0, 4)
    f = kernel_tensor(HermiteParams(0.7, 2), grid)
    res = duality_check(CylindricalVariable.constant(1.7), f, 10_000, SEED)
    assert res.rhs == 0.0
    assert abs(res.lhs) <= 3 * res.lhs_stderr


@pytest.mark.parametrize("k", [1, 2])
@pytest.mark.parametrize("name", CATALOG)
def test_duality_monte_carlo(k, name):
    grid = make_dyadic_grid(1.0, 5)
    f = kernel_tensor(HermiteParams(0.7, k), grid)
    F = CylindricalVariable(PROFILES[name], (1.0,), (Direction("poly", (0.5, 1.0)),))
    res = duality_check(F, f, 10_000, SEED)
    assert res.z_score <= 3


def test_sobolev_constant():
    grid = make_dyadic_grid(1.0, 4)
    for k in (0, 1, 3):
        assert sobolev_norm_estimate(CylindricalVariable.constant(-2.0), k, 2.0, 100, SEED, grid) == pytest.approx(2.0)


@pytest.mark.parametrize("name", CATALOG)
def test_sobolev_monotone_in_order(name):
    grid = make_dyadic_grid(1.0, 4)
    F = ridge(name)
    values = [sobolev_norm_estimate(F, k, 1.5, 2000, SEED, grid) for k in (1, 2, 3)]
    assert values[0] <= values[1] <= values[2]


def test_windowed_norm_scaling():
    p = HermiteParams(0.7, 2)
    slope, lengths, norms = windowed_norm_scaling(p, make_dyadic_grid(1.0, 8), range(2, 7), 1000, SEED)
    assert p.H / 2 <= slope <= 2 * p.H
    assert np.all(np.diff(norms) < 0)


def test_parse_integrand(grid):
    doc = {
        "partition": [0.0, 0.5, 1.0],
        "segments": [
            {"kind": "const", "value": 2.0},
            {"kind": "ridge", "profile": "sin", "weights": [1.0, -0.5],
             "directions": [{"type": "poly", "coeffs": [0, 1]}, {"type": "cos", "omega": 3.0}]},
        ],
    }
    g = parse_integrand(doc, grid)
    assert g.partition.points == (0.0, 0.5, 1.0)
    assert g.coefficients[0].profile.value == 2.0
    assert g.coefficients[1].directions[1] == Direction("cos", omega=3.0)


@pytest.mark.parametrize(
    "doc, field",
    [
        ({"segments": []}, "integrand.partition"),
        ({"partition": [0, 1], "segments": [{"kind": "ridge", "profile": "exp", "weights": [], "directions": []}]},
         "integrand.segments[0].profile"),
        ({"partition": [0, 1], "segments": [{"kind": "const"}]}, "integrand.segments[0].value"),
        ({"partition": [0, 0.5, 1], "segments": [{"kind": "const", "value": 1}]}, "integrand.segments"),
        ({"partition": [0, 0.3, 1], "segments": [{"kind": "const", "value": 1}] * 2}, "integrand.partition"),
        ({"partition": [0, 1], "segments": [{"kind": "ridge", "profile": "sin", "weights": [1],
                                             "directions": [{"type": "poly", "coeffs": [1, 2, 3, 4, 5, 6]}]}]},
         "integrand.segments[0].directions[0]"),
    ],
)
def test_parse_integrand_errors(doc, field, grid):
    with pytest.raises(ValueError, match=field.replace("[", r"\[").replace("]", r"\]")):
        parse_integrand(doc, grid)


def test_get_profile():
    assert get_profile("const", 3.0).value == 3.0
    with pytest.raises(ValueError):
        get_profile("relu")
