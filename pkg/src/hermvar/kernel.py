"""Deterministic kernel machinery of Hermite processes.

For ``H in (1/2, 1)`` and order ``k`` the weight

    phi(u, x) = (u/x)^a (u - x)_+^(-b),   a = 1/2 - (1-H)/k,  b = 1/2 + (1-H)/k,

generates the Hermite kernel ``L_t(x) = c_{H,k} int_{max x}^t prod_i phi(u, x_i) du``
and, more generally, the transfer operator acting on step functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special as sp

from .grid import DyadicGrid, Partition
from .special import (
    DEFAULT_SPEC,
    QuadratureSpec,
    SingularIntegrand,
    beta_fn,
    quadrature_rule,
    singular_integral,
)

MERGE_TOL = 1e-12


def c_constant(H: float, k: int) -> float:
    """Normalizing constant making ``Var Z_1 = 1``."""
    _check_hk(H, k)
    B = beta_fn(0.5 - (1 - H) / k, 2 * (1 - H) / k)
    return math.sqrt(H * (2 * H - 1) / (math.factorial(k) * B**k))


def _check_hk(H, k):
    if not 0.5 < H < 1:
        raise ValueError(f"H must lie in (1/2, 1), got {H}")
    if int(k) != k or k < 1:
        raise ValueError(f"order k must be an integer >= 1, got {k}")


@dataclass(frozen=True)
class HermiteParams:
    H: float
    k: int
    a: float = field(init=False)
    b: float = field(init=False)
    c: float = field(init=False)

    def __post_init__(self):
        _check_hk(self.H, self.k)
        object.__setattr__(self, "k", int(self.k))
        a = 0.5 - (1 - self.H) / self.k
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", 1.0 - a)
        object.__setattr__(self, "c", c_constant(self.H, self.k))

    @property
    def beta_const(self) -> float:
        """B(a, 2(1-H)/k), the constant in the closed form of K(u, v)."""
        return beta_fn(self.a, 2 * (1 - self.H) / self.k)


@dataclass(frozen=True)
class ReducedKernelParams:
    """Kernel of the order ``k - level`` integral left after pulling out ``level`` derivatives."""

    parent: HermiteParams
    level: int
    H_prime: float = field(init=False)
    c_ell: float = field(init=False)

    def __post_init__(self):
        k = self.parent.k
        if not 1 <= self.level <= k - 1:
            raise ValueError(f"level must lie in 1..{k - 1}, got {self.level}")
        Hp = self.parent.H * (1 - self.level / k) + self.level / k
        object.__setattr__(self, "H_prime", Hp)
        object.__setattr__(self, "c_ell", self.parent.c / c_constant(Hp, k - self.level))


def fbm_covariance(H: float, s, t):
    s, t = np.asarray(s, float), np.asarray(t, float)
    return 0.5 * (s ** (2 * H) + t ** (2 * H) - np.abs(s - t) ** (2 * H))


def _weight_product(p: HermiteParams, x: np.ndarray, u: np.ndarray, skip: np.ndarray) -> np.ndarray:
    """prod_i (u/x_i)^a * prod_{i not skipped} (u - x_i)^-b, vectorized over ``u``."""
    u = u[:, None]
    out = np.prod((u / x) ** p.a, axis=1)
    rest = x[~skip]
    if rest.size:
        out = out * np.prod((u - rest) ** (-p.b), axis=1)
    return out


def _segment_integral(p: HermiteParams, x: np.ndarray, lo: float, hi: float, spec: QuadratureSpec) -> float:
    """int_lo^hi prod_i phi(u, x_i) du (without the constant)."""
    xmax = float(x.max())
    lo = max(lo, xmax)
    if hi <= lo:
        return 0.0
    if lo == xmax:
        top = np.abs(x - xmax) <= MERGE_TOL
        e = -p.b * int(top.sum())
        if e <= -1:
            raise ValueError(
                f"{int(top.sum())} coinciding coordinates give a non-integrable singularity (exponent {e:.3f})"
            )
        integrand = SingularIntegrand(lambda u: _weight_product(p, x, u, top), left_exponent=e, grade_left=True)
    else:
        none = np.zeros(x.shape, bool)
        integrand = SingularIntegrand(lambda u: _weight_product(p, x, u, none), grade_left=True)
    return singular_integral(integrand, (lo, hi), spec)


def _as_point(p: HermiteParams, x, dim: int | None = None) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    dim = p.k if dim is None else dim
    if x.shape != (dim,):
        raise ValueError(f"expected a point with {dim} coordinates, got shape {x.shape}")
    if np.any(x <= 0):
        raise ValueError("kernel coordinates must be positive")
    return x


def kernel_Lt(p: HermiteParams, t: float, x, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """Value of the Hermite kernel ``L_t`` at ``x in (0, T]^k``."""
    x = _as_point(p, x)
    if t < 0:
        raise ValueError("t must be >= 0")
    if x.max() >= t:
        return 0.0
    return p.c * _segment_integral(p, x, 0.0, float(t), spec)


@dataclass(frozen=True)
class StepFunction:
    """Piecewise constant ``g = sum_j values[j] 1_[s_j, s_{j+1})``."""

    partition: Partition
    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if len(vals) != self.partition.segments:
            raise ValueError("one value per partition segment is required")
        object.__setattr__(self, "values", vals)

    @classmethod
    def indicator(cls, s: float, t: float, T: float) -> "StepFunction":
        pts = sorted({0.0, float(s), float(t), float(T)})
        vals = [1.0 if (a >= s and b <= t and b > a) else 0.0 for a, b in zip(pts, pts[1:])]
        return cls(Partition(tuple(pts)), tuple(vals))

    def __add__(self, other: "StepFunction") -> "StepFunction":
        pts = tuple(sorted(set(self.partition.points) | set(other.partition.points)))
        return StepFunction(Partition(pts), tuple(self(m) + other(m) for m in _mids(pts)))

    def __call__(self, s: float) -> float:
        pts = self.partition.points
        j = int(np.searchsorted(pts, s, side="right")) - 1
        if 0 <= j < len(self.values):
            return self.values[j]
        return 0.0


def _mids(pts):
    return [0.5 * (a + b) for a, b in zip(pts, pts[1:])]


def transfer_operator(
    p: HermiteParams,
    g: StepFunction,
    x,
    grid: DyadicGrid | None = None,
    spec: QuadratureSpec = DEFAULT_SPEC,
) -> float:
    """``(L g)(x) = c int_0^T g(u) prod_i phi(u, x_i) du`` for a step function ``g``."""
    if grid is not None and not g.partition.is_aligned(grid):
        raise ValueError("step function partition is not aligned to the grid")
    x = _as_point(p, x)
    pts = g.partition.points
    total = 0.0
    for gj, lo, hi in zip(g.values, pts, pts[1:]):
        if gj != 0.0 and hi > lo:
            total += gj * _segment_integral(p, x, lo, hi, spec)
    return p.c * total


def k_closed_form(p: HermiteParams, u: float, v: float) -> float:
    """K(u, v) = B(a, 2(1-H)/k)^k |u - v|^(2H - 2)."""
    _check_uv(u, v)
    return p.beta_const**p.k * abs(u - v) ** (2 * p.H - 2)


def k_quadrature_form(p: HermiteParams, u: float, v: float, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """K(u, v) from its defining integral ``((uv)^a int_0^{u^v} x^-2a (u-x)^-b (v-x)^-b dx)^k``."""
    _check_uv(u, v)
    lo, hi = min(u, v), max(u, v)
    integrand = SingularIntegrand(
        smooth=lambda x: (hi - x) ** (-p.b),
        left_exponent=-2 * p.a,
        right_exponent=-p.b,
    )
    inner = singular_integral(integrand, (0.0, lo), spec)
    return ((u * v) ** p.a * inner) ** p.k


def _check_uv(u, v):
    if not (u > 0 and v > 0):
        raise ValueError("u and v must be positive")
    if u == v:
        raise ValueError("K(u, v) is singular at u == v")


def kernel_inner_product(p: HermiteParams, s: float, t: float, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """``<L_s, L_t>`` in L^2([0,T]^k) via the reduction ``c^2 int_0^s int_0^t K(u, v) du dv``.

    The inner integral over ``v`` is split at the diagonal and both halves use
    the endpoint power rule; the outer integral is split at ``min(s, t)``.
    """
    if s <= 0 or t <= 0:
        return 0.0
    e = 2 * p.H - 2
    ref_r = quadrature_rule(0.0, 1.0, SingularIntegrand(lambda y: np.ones_like(y), right_exponent=e), spec)
    ref_l = quadrature_rule(0.0, 1.0, SingularIntegrand(lambda y: np.ones_like(y), left_exponent=e), spec)
    wr, wl = ref_r[1].sum(), ref_l[1].sum()

    def inner(u):
        # int_0^t |u - v|^e dv
        below = u ** (e + 1) * wr
        at_or_before = below + np.clip(t - u, 0.0, None) ** (e + 1) * wl
        after = (u ** (e + 1) - np.clip(u - t, 0.0, None) ** (e + 1)) * wr
        return np.where(u <= t, at_or_before, after)

    m = min(s, t)
    total = 0.0
    for lo, hi in ((0.0, m), (m, s)):
        if hi > lo:
            integrand = SingularIntegrand(inner, grade_left=True, grade_right=True)
            total += singular_integral(integrand, (lo, hi), spec)
    return p.c**2 * p.beta_const**p.k * total


def gl_kernel(r: ReducedKernelParams, x, u: float) -> float:
    """``g^l(x, u) = c_l prod_{i<=l} (u/x_i)^a (u - x_i)_+^-b``."""
    p = r.parent
    x = _as_point(p, x, dim=r.level)
    if np.any(x >= u):
        return 0.0
    return float(r.c_ell * np.prod((u / x) ** p.a * (u - x) ** (-p.b)))


def _ref_rule(e_left: float, cells: int, order: int, grade_right: bool = False):
    spec = QuadratureSpec(cells=cells, order=order, ratio=0.5)
    integrand = SingularIntegrand(lambda y: np.ones_like(y), left_exponent=e_left, grade_left=True, grade_right=grade_right)
    return quadrature_rule(0.0, 1.0, integrand, spec)


def gl_integrability(r: ReducedKernelParams, T: float = 1.0, cells: int = 16, order: int = 6) -> float:
    """Nested quadrature of ``int_{[0,T]^l} (int_0^T |g^l(x,u)|^(1/H') du)^H' dx``.

    Supported for ``level`` in {1, 2}.
    """
    p, Hp, l = r.parent, r.H_prime, r.level
    q = 1.0 / Hp
    e_in = -p.b * q
    s_in, w_in = _ref_rule(e_in, cells, order)  # weight s^e_in on [0, 1]

    def inner(x1, x2=None):
        # int_{x1}^T |g|^q du, x1 the largest coordinate; u = x1 + (T - x1) s
        x1 = np.asarray(x1, float)[..., None]
        L = T - x1
        u = x1 + L * s_in
        val = (u / x1) ** (p.a * q)
        if x2 is not None:
            x2 = np.asarray(x2, float)[..., None]
            val = val * (u / x2) ** (p.a * q) * (u - x2) ** (-p.b * q)
        return r.c_ell**q * L[..., 0] ** (e_in + 1) * (val @ w_in)

    if l == 1:
        xo, wo = _ref_rule(-p.a, cells, order, grade_right=True)
        x = T * xo
        f = inner(x) ** Hp * x ** p.a
        return float(T ** (1 - p.a) * (wo @ f))
    if l == 2:
        # 2 * int_0^T int_0^{x1} ..., x2 = x1 * s
        xo, wo = _ref_rule(-p.a, cells, order, grade_right=True)
        so, ws = _ref_rule(-p.a, cells, order, grade_right=True)
        x1 = T * xo
        total = np.empty_like(x1)
        for i, xi in enumerate(x1):
            x2 = xi * so
            f = inner(np.full_like(x2, xi), x2) ** Hp * so ** p.a
            total[i] = xi * (ws @ f)
        total = total * x1 ** p.a
        return float(2 * T ** (1 - p.a) * (wo @ total))
    raise ValueError("integrability check implemented for level 1 and 2 only")


def aux_integral_ratio(T: float, a: float, theta: float, eps: float, x_grid: Sequence[float],
                       spec: QuadratureSpec = DEFAULT_SPEC) -> np.ndarray:
    """``int_0^T (y+x)^-(a+theta) y^-(1-a) dy / x^-eps`` for every ``x`` in ``x_grid``."""
    if not 0 < a < 1:
        raise ValueError("a must lie in (0, 1)")
    if theta < 0:
        raise ValueError("theta must be >= 0")
    if not theta < eps < a + theta:
        raise ValueError(f"eps must lie in ({theta}, {a + theta}), got {eps}")
    out = []
    for x in np.asarray(x_grid, float):
        if not 0 < x <= T:
            raise ValueError("x values must lie in (0, T]")
        integrand = SingularIntegrand(lambda y, x=x: (y + x) ** (-(a + theta)), left_exponent=a - 1, grade_left=True)
        out.append(singular_integral(integrand, (0.0, T), spec) * x**eps)
    return np.array(out)


def averaged_weight(p: HermiteParams, u, grid: DyadicGrid, upto: int | None = None, start: int = 0) -> np.ndarray:
    """Cell averages ``(1/step) int_{cell i} phi(u, x) dx`` for cells ``start <= i < upto``.

    With ``x = u s`` the average is an incomplete Beta function:
    ``u^a B(b, a) [I_{s1}(b, a) - I_{s0}(b, a)] / step``. Returns an array of
    shape ``(len(u), upto - start)``.
    """
    u = np.atleast_1d(np.asarray(u, float))[:, None]
    n = grid.cells if upto is None else upto
    s = np.minimum(np.arange(start, n + 1) * grid.step / u, 1.0)
    # one incomplete Beta per cell boundary; the upper tail is kept separately
    # so that differences of values close to 1 do not cancel
    upper = s > 0.5
    lower_val = np.zeros_like(s)
    upper_val = np.zeros_like(s)
    lower_val[~upper] = sp.betainc(p.b, p.a, s[~upper])
    upper_val[upper] = sp.betaincc(p.b, p.a, s[upper])
    lo_up, hi_up = upper[:, :-1], upper[:, 1:]
    diff = np.where(
        lo_up,
        upper_val[:, :-1] - upper_val[:, 1:],
        np.where(hi_up, 1.0 - upper_val[:, 1:], lower_val[:, 1:]) - lower_val[:, :-1],
    )
    return u**p.a * beta_fn(p.b, p.a) * diff / grid.step
