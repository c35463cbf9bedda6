"""p-variation along dyadic partitions and the convergence experiments built on it."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .chaos import PathSample, cell_kernel, paths_from_increments, simulate_hermite_paths
from .grid import DyadicGrid
from .kernel import HermiteParams
from .malliavin import ElementaryProcess, integrand_abs_power, skorokhod_cell_terms
from .randomness import map_replicates, mc_mean, noise_batch
from .special import gaussian_abs_moment

CSV_COLUMNS = ("experiment", "H", "k", "p", "n", "mean_V", "stderr", "target", "abs_err", "replicates", "seed",
               "l1_err", "l1_stderr")


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def variation_batch(values: np.ndarray, grid: DyadicGrid, p: float, n: int) -> np.ndarray:
    """``sum_i |X(t_{i+1}) - X(t_i)|^p`` over the level-``n`` partition, one value per row."""
    if p < 1:
        raise ValueError("need p >= 1")
    stride = grid.level_stride(n)
    v = np.atleast_2d(values)
    if v.shape[1] != grid.cells + 1:
        raise ValueError("path length does not match the grid")
    return np.sum(np.abs(np.diff(v[:, ::stride], axis=1)) ** p, axis=1)


def variation_statistic(path: PathSample, p: float, n: int) -> float:
    return float(variation_batch(path.values, path.grid, p, n)[0])


@dataclass
class VariationReport:
    experiment: str
    H: float
    k: int
    p: float
    levels: list[int]
    mean_V: list[float]
    stderr: list[float]
    target: float
    replicates: int
    seed: int
    l1_err: list[float] = field(default_factory=list)
    l1_stderr: list[float] = field(default_factory=list)
    target_stderr: float = float("nan")
    triangle_violations: int = 0

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise ValueError("levels must be increasing")
        if any(s < 0 for s in self.stderr if not math.isnan(s)):
            raise ValueError("standard errors must be nonnegative")

    @property
    def abs_err(self) -> list[float]:
        return [abs(m - self.target) for m in self.mean_V]

    def rows(self):
        for i, n in enumerate(self.levels):
            yield (self.experiment, self.H, self.k, self.p, n, self.mean_V[i], self.stderr[i], self.target,
                   self.abs_err[i], self.replicates, self.seed, self.l1_err[i], self.l1_stderr[i])

    def to_csv(self, header_lines: Sequence[str] = ()) -> str:
        buf = io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        buf.write(",".join(CSV_COLUMNS) + "\n")
        for row in self.rows():
            buf.write(",".join(r if isinstance(r, str) else fmt(r) for r in row) + "\n")
        return buf.getvalue()


def _report(experiment, p, power, levels, V, target_each, replicates, seed, target_se=float("nan"), violations=0):
    """Summaries of per-replicate statistics ``V`` (shape ``(R, levels)``)."""
    target = mc_mean(target_each)[0]
    means, ses, l1, l1s = [], [], [], []
    for i in range(len(levels)):
        m, s = mc_mean(V[:, i])
        e, es = mc_mean(np.abs(V[:, i] - target_each))
        means.append(m), ses.append(s), l1.append(e), l1s.append(es)
    return VariationReport(experiment, p.H, p.k, power, list(levels), means, ses, target, replicates, seed, l1, l1s,
                           target_se, int(violations))


def _check_levels(levels, grid):
    levels = [int(n) for n in levels]
    if not levels:
        raise ValueError("need at least one level")
    if max(levels) > grid.level_max or min(levels) < 0:
        raise ValueError(f"levels must lie in 0..{grid.level_max}")
    return levels


def estimate_C(p: HermiteParams, g: DyadicGrid, replicates: int, seed: int, threads: int = 1) -> tuple[float, float]:
    """Monte Carlo ``E|Z_1|^{1/H}`` with its standard error (``nan`` for one replicate)."""
    if g.horizon < 1:
        raise ValueError("grid horizon must be >= 1 so that Z_1 is on the grid")
    i1 = g.node_index(1.0)
    Z = simulate_hermite_paths(p, g, seed, replicates, threads)
    return mc_mean(np.abs(Z[:, i1]) ** (1 / p.H))


def limit_constant(p: HermiteParams) -> float | None:
    """Closed-form ``E|Z_1|^{1/H}``, available for the Gaussian case only."""
    return gaussian_abs_moment(1 / p.H) if p.k == 1 else None


def converge_z(p: HermiteParams, grid: DyadicGrid, levels, replicates: int, seed: int, threads: int = 1,
               power: float | None = None, experiment: str = "converge-z") -> VariationReport:
    """``V^{power}_{n,T}(Z)`` per level against ``C T`` (``power`` defaults to ``1/H``).

    ``C`` is the closed form for ``k = 1`` and otherwise ``mean |Z_T|^{1/H} / T``
    over the same replicates. With ``power != 1/H`` the target is 0.
    """
    levels = _check_levels(levels, grid)
    q = 1 / p.H if power is None else float(power)
    T = grid.horizon

    def chunk(idx):
        Z = paths_from_increments(cell_kernel(p, grid).increments(noise_batch(seed, idx, grid)))
        cols = [variation_batch(Z, grid, q, n) for n in levels] + [np.abs(Z[:, -1]) ** (1 / p.H) / T]
        cols.append(_triangle_violations(Z, grid, q, levels))
        return np.stack(cols, axis=1)

    vals = map_replicates(chunk, replicates, threads)
    violations = int(vals[:, -1].sum())
    vals = vals[:, :-1]
    V = vals[:, :-1]
    if power is not None and not math.isclose(q, 1 / p.H):
        target_each, tse = np.zeros(replicates), 0.0
    elif p.k == 1:
        target_each, tse = np.full(replicates, limit_constant(p) * T), 0.0
    else:
        c_hat, tse = mc_mean(vals[:, -1])
        target_each, tse = np.full(replicates, c_hat * T), tse * T
    return _report(experiment, p, q, levels, V, target_each, replicates, seed, tse, violations)


def deterministic_integral_target(p: HermiteParams, g: ElementaryProcess) -> float:
    """``C sum_j |G_j|^{1/H} (s_{j+1} - s_j)`` for constant coefficients and ``k = 1``."""
    if p.k != 1 or not g.is_deterministic:
        raise ValueError("closed-form target needs k = 1 and constant coefficients")
    q = 1 / p.H
    pts = g.partition.points
    vals = [F.profile.value if F.profile.value is not None else float(F.profile(0.0)) for F in g.coefficients]
    return limit_constant(p) * math.fsum(abs(v) ** q * (b - a) for v, a, b in zip(vals, pts, pts[1:]))


def converge_integral(p: HermiteParams, g: ElementaryProcess, grid: DyadicGrid, levels, replicates: int, seed: int,
                      threads: int = 1, experiment: str = "converge-integral") -> VariationReport:
    """``V^{1/H}_{n,T}`` of ``t -> int_0^t g dZ`` per level.

    The pathwise limit is ``C int_0^T |g_s|^{1/H} ds``; the ``target`` column is
    its replicate mean and ``l1_err`` is ``E|V_n - C int |g|^{1/H}|``. ``C`` is
    the closed form for ``k = 1`` and ``mean |Z_1|^{1/H}`` (via ``|Z_T|^{1/H} / T``)
    on the same replicates otherwise.
    """
    levels = _check_levels(levels, grid)
    q, T = 1 / p.H, grid.horizon
    ck = cell_kernel(p, grid)

    def chunk(idx):
        xi = noise_batch(seed, idx, grid)
        Y = paths_from_increments(skorokhod_cell_terms(p, g, grid, xi))
        cols = [variation_batch(Y, grid, q, n) for n in levels]
        cols.append(integrand_abs_power(g, q, grid, xi))
        zT = ck.increments(xi).sum(axis=1) if p.k > 1 else np.zeros(len(idx))
        cols.append(np.abs(zT) ** q / T)
        cols.append(_triangle_violations(Y, grid, q, levels))
        return np.stack(cols, axis=1)

    vals = map_replicates(chunk, replicates, threads)
    violations = int(vals[:, -1].sum())
    vals = vals[:, :-1]
    V, G = vals[:, : len(levels)], vals[:, len(levels)]
    if p.k == 1:
        c, cse = limit_constant(p), 0.0
    else:
        c, cse = mc_mean(vals[:, -1])
    return _report(experiment, p, q, levels, V, c * G, replicates, seed, cse * mc_mean(G)[0], violations)


@dataclass
class CheckResult:
    name: str
    passed: bool | None
    detail: dict

    @property
    def asserted(self) -> bool:
        return self.passed is not None


@dataclass
class InequalityReport:
    checks: list[CheckResult]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.asserted)

    def to_csv(self, header_lines: Sequence[str] = ()) -> str:
        buf = io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        buf.write("check,passed,key,value\n")
        for c in self.checks:
            status = "reported" if c.passed is None else ("pass" if c.passed else "fail")
            for key in sorted(c.detail):
                buf.write(f"{c.name},{status},{key},{fmt(c.detail[key])}\n")
        return buf.getvalue()


ROUNDING_SLACK = 1e-12


def triangle_holds(X: np.ndarray, Y: np.ndarray, grid: DyadicGrid, p: float, n: int) -> np.ndarray:
    """Per path: ``V(X + Y) <= 2^{p-1} (V(X) + V(Y))`` up to rounding of the sums."""
    lhs = variation_batch(X + Y, grid, p, n)
    rhs = 2 ** (p - 1) * (variation_batch(X, grid, p, n) + variation_batch(Y, grid, p, n))
    return lhs <= rhs * (1 + ROUNDING_SLACK)


def _triangle_violations(paths: np.ndarray, grid: DyadicGrid, p: float, levels) -> np.ndarray:
    """Per row, the number of levels where the triangle bound fails against the next row of the chunk."""
    other = np.roll(paths, -1, axis=0)
    return sum((~triangle_holds(paths, other, grid, p, n)).astype(float) for n in levels)


def distance_bound(vx, vy, vd, p: float) -> tuple[float, float, float]:
    """``(|E V(X) - E V(Y)|, bound, joint stderr)`` for per-replicate ``V(X), V(Y), V(X - Y)``."""
    mx, my, md = (mc_mean(v)[0] for v in (vx, vy, vd))
    _, se = mc_mean(np.asarray(vx) - np.asarray(vy))
    bound = p * md ** (1 / p) * (mx ** (1 - 1 / p) + my ** (1 - 1 / p))
    return abs(mx - my), bound, 0.0 if math.isnan(se) else se


def inequality_suite(p: HermiteParams, grid: DyadicGrid, level: int, replicates: int, seed: int,
                     g1: ElementaryProcess | None = None, g2: ElementaryProcess | None = None,
                     threads: int = 1) -> InequalityReport:
    """Triangle and distance inequalities for ``V^{1/H}`` at one level, plus a fitted
    constant for the distance of two integral processes (reported, not asserted)."""
    q = 1 / p.H
    T = grid.horizon
    X = simulate_hermite_paths(p, grid, seed, replicates, threads)
    ck = cell_kernel(p, grid)
    Y = map_replicates(lambda idx: paths_from_increments(ck.increments(noise_batch(seed, idx, grid))),
                       replicates, threads, start=replicates)
    checks = []
    ok = triangle_holds(X, Y, grid, q, level)
    checks.append(CheckResult("triangle_independent", bool(ok.all()), {"replicates": replicates, "holding": int(ok.sum())}))
    ok_eq = triangle_holds(X, X, grid, q, level)
    checks.append(CheckResult("triangle_equal", bool(ok_eq.all()), {"replicates": replicates, "holding": int(ok_eq.sum())}))

    vx = variation_batch(X, grid, q, level)
    vy = variation_batch(Y, grid, q, level)
    for name, other, v_other in (("distance_independent", Y, vy), ("distance_zero", 0 * X, np.zeros(replicates))):
        gap, bound, se = distance_bound(vx, v_other, variation_batch(X - other, grid, q, level), q)
        checks.append(CheckResult(name, gap <= bound + se, {"gap": gap, "bound": bound, "stderr": se}))

    if g1 is None:
        g1 = ElementaryProcess.deterministic((0.0, T / 2, T), (1.0, 1.0))
    if g2 is None:
        g2 = ElementaryProcess.deterministic((0.0, T / 2, T), (1.0, 0.5))

    def chunk(idx):
        xi = noise_batch(seed, idx, grid)
        diff = skorokhod_cell_terms(p, g1, grid, xi) - skorokhod_cell_terms(p, g2, grid, xi)
        vd = variation_batch(paths_from_increments(diff), grid, q, level)
        gd = _abs_power_difference(g1, g2, q, grid, xi)
        return np.stack([vd, gd], axis=1)

    vals = map_replicates(chunk, replicates, threads)
    ev, ed = mc_mean(vals[:, 0])[0], mc_mean(vals[:, 1])[0]
    checks.append(CheckResult("integral_distance", None,
                              {"mean_V_difference": ev, "mean_integrand_distance": ed,
                               "fitted_constant": ev / ed if ed > 0 else float("nan")}))
    return InequalityReport(checks)


def _abs_power_difference(g1: ElementaryProcess, g2: ElementaryProcess, q: float, grid: DyadicGrid, xi) -> np.ndarray:
    """``int_0^T |g1 - g2|^q ds`` per noise row, on the grid cells."""
    xi = np.atleast_2d(xi)
    s1, s2 = g1.cell_segments(grid), g2.cell_segments(grid)
    vals1 = np.stack([F.profile(F.argument(xi, grid)) for F in g1.coefficients], axis=1)
    vals2 = np.stack([F.profile(F.argument(xi, grid)) for F in g2.coefficients], axis=1)
    return np.sum(np.abs(vals1[:, s1] - vals2[:, s2]) ** q, axis=1) * grid.step
