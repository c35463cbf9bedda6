import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from hermvar.chaos import PathSample
from hermvar.grid import Partition, make_dyadic_grid
from hermvar.kernel import HermiteParams
from hermvar.malliavin import PROFILES, CylindricalVariable, Direction, ElementaryProcess
from hermvar.special import gaussian_abs_moment
from hermvar.variation import (
    CSV_COLUMNS,
    VariationReport,
    converge_integral,
    converge_z,
    deterministic_integral_target,
    distance_bound,
    estimate_C,
    inequality_suite,
    limit_constant,
    triangle_holds,
    variation_batch,
    variation_statistic,
)

SEED = 12345
# C (2^{4/3} / 2 + 2^{-4/3} / 2) with C = E|N(0,1)|^{4/3}
TWO_STEP_TARGET = 1.2116828572837668

finite = st.floats(-1e3, 1e3, allow_nan=False)


def path(values, T=1.0):
    values = np.asarray(values, float)
    grid = make_dyadic_grid(T, int(math.log2(values.size - 1)))
    return PathSample(grid, values)


def test_variation_of_linear_path():
    x = path(np.linspace(0.0, 2.0, 17))
    assert variation_statistic(x, 1.0, 3) == pytest.approx(2.0, rel=1e-14)
    assert variation_statistic(x, 2.0, 3) == pytest.approx(0.5, rel=1e-14)
    assert variation_statistic(x, 2.0, 0) == pytest.approx(4.0, rel=1e-14)


def test_variation_of_zigzag():
    x = path([0.0, 1.0, 0.0, 1.0, 0.0])
    assert variation_statistic(x, 1.5, 2) == 4.0
    assert variation_statistic(x, 1.5, 1) == 0.0


def test_variation_argument_checks():
    x = path(np.zeros(9))
    with pytest.raises(ValueError):
        variation_statistic(x, 0.5, 2)
    with pytest.raises(ValueError):
        variation_statistic(x, 2.0, 4)
    with pytest.raises(ValueError):
        variation_batch(np.zeros((2, 5)), x.grid, 2.0, 1)


@settings(max_examples=60, deadline=None)
@given(arrays(float, 17, elements=finite), st.floats(1, 4), st.integers(0, 4), finite, st.floats(-10, 10))
def test_variation_invariances(values, p, n, shift, scale):
    grid = make_dyadic_grid(1.0, 4)

    def V(x):
        return float(variation_batch(x, grid, p, n)[0])

    v = V(values)
    assert v >= 0
    assert V(values + shift) == pytest.approx(v, rel=1e-9, abs=1e-6)
    assert V(-values) == v
    assert V(values[::-1]) == pytest.approx(v, rel=1e-12)
    assert V(scale * values) == pytest.approx(abs(scale) ** p * v, rel=1e-9, abs=1e-300)


@settings(max_examples=60, deadline=None)
@given(arrays(float, (3, 17), elements=finite), arrays(float, (3, 17), elements=finite), st.floats(1, 4),
       st.integers(0, 4))
def test_triangle_bound_property(X, Y, p, n):
    grid = make_dyadic_grid(1.0, 4)
    assert triangle_holds(X, Y, grid, p, n).all()
    assert triangle_holds(X, X, grid, p, n).all()


def test_distance_bound_values():
    gap, bound, se = distance_bound([1.0, 1.0], [1.0, 1.0], [0.0, 0.0], 2.0)
    assert (gap, bound, se) == (0.0, 0.0, 0.0)
    gap, bound, _ = distance_bound([4.0], [1.0], [1.0], 2.0)
    assert gap == 3.0 and bound == pytest.approx(2.0 * 1.0 * (2.0 + 1.0))


def test_limit_constant():
    assert limit_constant(HermiteParams(0.75, 1)) == pytest.approx(gaussian_abs_moment(4 / 3), rel=1e-15)
    assert limit_constant(HermiteParams(0.75, 2)) is None


def test_estimate_C_gaussian_case():
    p = HermiteParams(0.75, 1)
    c, se = estimate_C(p, make_dyadic_grid(1.0, 6), 4000, SEED)
    assert abs(c - limit_constant(p)) <= 3 * se


def test_estimate_C_single_replicate():
    c, se = estimate_C(HermiteParams(0.7, 2), make_dyadic_grid(1.0, 4), 1, SEED)
    assert math.isfinite(c) and math.isnan(se)


def test_estimate_C_needs_unit_time():
    with pytest.raises(ValueError):
        estimate_C(HermiteParams(0.7, 2), make_dyadic_grid(0.5, 4), 10, SEED)


def test_converge_z_report_shape():
    rep = converge_z(HermiteParams(0.7, 2), make_dyadic_grid(1.0, 5), [1, 3, 5], 100, SEED)
    assert rep.levels == [1, 3, 5] and len(rep.mean_V) == 3 and len(rep.l1_err) == 3
    assert rep.triangle_violations == 0
    assert all(s > 0 for s in rep.stderr)
    assert math.isfinite(rep.target) and rep.target_stderr > 0


def test_converge_z_level_checks():
    with pytest.raises(ValueError):
        converge_z(HermiteParams(0.7, 2), make_dyadic_grid(1.0, 4), [5], 10, SEED)
    with pytest.raises(ValueError):
        converge_z(HermiteParams(0.7, 2), make_dyadic_grid(1.0, 4), [3, 2], 10, SEED)


def test_report_rejects_unordered_levels():
    with pytest.raises(ValueError):
        VariationReport("x", 0.7, 1, 1.4, [2, 2], [1.0, 1.0], [0.1, 0.1], 1.0, 10, SEED)


def test_double_power_halves_per_level():
    p = HermiteParams(0.75, 1)
    rep = converge_z(p, make_dyadic_grid(1.0, 6), [1, 2, 3, 4], 2000, SEED, power=2 / p.H)
    assert rep.target == 0.0
    ratios = np.array(rep.mean_V[1:]) / np.array(rep.mean_V[:-1])
    assert np.all(np.abs(ratios - 0.5) < 0.1)


def test_csv_layout():
    rep = converge_z(HermiteParams(0.75, 1), make_dyadic_grid(1.0, 4), [2, 4], 20, SEED)
    lines = rep.to_csv(["command: converge-z"]).splitlines()
    assert lines[0] == "# command: converge-z"
    assert lines[1] == ",".join(CSV_COLUMNS)
    row = lines[2].split(",")
    assert len(row) == len(CSV_COLUMNS)
    assert row[0] == "converge-z" and row[4] == "2" and row[10] == str(SEED)
    assert float(row[8]) == abs(float(row[5]) - float(row[7]))


def test_deterministic_target_constant_one():
    p = HermiteParams(0.75, 1)
    g = ElementaryProcess.deterministic((0.0, 1.0), (1.0,))
    assert abs(deterministic_integral_target(p, g) - gaussian_abs_moment(4 / 3)) <= 1e-10


def test_deterministic_target_two_step():
    g = ElementaryProcess.deterministic((0.0, 0.5, 1.0), (2.0, 0.5))
    assert abs(deterministic_integral_target(HermiteParams(0.75, 1), g) - TWO_STEP_TARGET) <= 1e-10


def test_deterministic_target_needs_gaussian_case_and_constants():
    g = ElementaryProcess.deterministic((0.0, 1.0), (1.0,))
    with pytest.raises(ValueError):
        deterministic_integral_target(HermiteParams(0.75, 2), g)
    F = CylindricalVariable(PROFILES["sin"], (1.0,), (Direction("poly", (1.0,)),))
    with pytest.raises(ValueError):
        deterministic_integral_target(HermiteParams(0.75, 1), ElementaryProcess(Partition((0.0, 1.0)), (F,)))


@pytest.mark.parametrize("k", [1, 2])
def test_unit_integrand_reproduces_process_variation(k):
    p, grid = HermiteParams(0.75, k), make_dyadic_grid(1.0, 5)
    g = ElementaryProcess.deterministic((0.0, 1.0), (1.0,))
    a = converge_integral(p, g, grid, [2, 4, 5], 128, SEED)
    b = converge_z(p, grid, [2, 4, 5], 128, SEED)
    assert np.allclose(a.mean_V, b.mean_V, rtol=1e-12)
    assert a.target == pytest.approx(b.target, rel=1e-12)


def test_converge_integral_random_integrand():
    p, grid = HermiteParams(0.75, 1), make_dyadic_grid(1.0, 5)
    F = CylindricalVariable(PROFILES["tanh"], (1.0,), (Direction("cos", omega=3.0),))
    g = ElementaryProcess(Partition((0.0, 0.5, 1.0)), (CylindricalVariable.constant(1.0), F))
    rep = converge_integral(p, g, grid, [1, 3, 5], 200, SEED)
    assert 0 < rep.target < limit_constant(p)
    assert rep.triangle_violations == 0
    assert rep.l1_err[-1] < rep.l1_err[0]


def test_inequality_suite():
    rep = inequality_suite(HermiteParams(0.7, 2), make_dyadic_grid(1.0, 6), 4, 200, SEED)
    names = [c.name for c in rep.checks]
    assert names == ["triangle_independent", "triangle_equal", "distance_independent", "distance_zero",
                     "integral_distance"]
    assert rep.passed
    assert not rep.checks[-1].asserted
    assert rep.checks[-1].detail["fitted_constant"] > 0
    csv = rep.to_csv()
    assert csv.splitlines()[0] == "check,passed,key,value"
    assert "integral_distance,reported,fitted_constant," in csv


def test_estimate_C_gaussian_closed_form_5000():
    p = HermiteParams(0.75, 1)
    c, se = estimate_C(p, make_dyadic_grid(1.0, 8), 5000, SEED)
    assert abs(c - 0.8309) <= 3 * se


def test_estimate_C_stable_under_grid_refinement():
    p = HermiteParams(0.7, 2)
    c7, s7 = estimate_C(p, make_dyadic_grid(1.0, 7), 2000, SEED)
    c8, s8 = estimate_C(p, make_dyadic_grid(1.0, 8), 2000, SEED)
    assert c7 > 0 and c8 > 0
    assert abs(c7 - c8) <= 2 * math.hypot(s7, s8)


def test_gaussian_abs_err_decreasing_in_level():
    # literal form of the first-order convergence example: N = 2^10, 2000 replicates, levels 4..10
    p = HermiteParams(0.75, 1)
    rep = converge_z(p, make_dyadic_grid(1.0, 10), range(4, 11), 2000, SEED)
    assert rep.abs_err[-1] <= 0.05 + 3 * rep.stderr[-1]
    assert all(b < a for a, b in zip(rep.abs_err, rep.abs_err[1:])), rep.abs_err
