"""Beta/Gamma values, Gaussian absolute moments and endpoint-singular quadrature.

The quadrature handles integrals of the form

    int_a^b (x - a)^eL (b - x)^eR f(x) dx,     eL, eR > -1,

with ``f`` smooth (it may still have singularities just outside ``[a, b]``).
The mesh is graded geometrically toward every singular endpoint; the
innermost cell at such an endpoint uses Gauss-Jacobi nodes for the exact
power weight and all other cells use Gauss-Legendre.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import special as sp


class QuadratureError(RuntimeError):
    """Raised when a quadrature cannot reach its tolerance."""


def beta_fn(a: float, b: float) -> float:
    if not (a > 0 and b > 0):
        raise ValueError(f"Beta function needs positive arguments, got ({a}, {b})")
    return float(sp.beta(a, b))


def gaussian_abs_moment(p: float) -> float:
    """E|N(0,1)|^p = 2^(p/2) Gamma((p+1)/2) / sqrt(pi)."""
    if not p >= 0:
        raise ValueError(f"moment order must be >= 0, got {p}")
    return math.exp(0.5 * p * math.log(2.0) + math.lgamma(0.5 * (p + 1)) - 0.5 * math.log(math.pi))


@dataclass(frozen=True)
class QuadratureSpec:
    scheme: str = "graded"
    cells: int = 40
    ratio: float = 0.5
    tol: float = 1e-10
    order: int = 8
    max_cells: int = 1280

    def __post_init__(self):
        if self.scheme not in ("graded", "plain"):
            raise ValueError(f"unknown quadrature scheme {self.scheme!r}")
        if self.cells < 4:
            raise ValueError("at least 4 cells are required")
        if not 0 < self.ratio < 1:
            raise ValueError("grading ratio must lie in (0, 1)")
        if not 0 < self.tol <= 1e-2:
            raise ValueError("tolerance must lie in (0, 1e-2]")


DEFAULT_SPEC = QuadratureSpec()


@dataclass(frozen=True)
class SingularIntegrand:
    """``(x-a)^left_exponent (b-x)^right_exponent * smooth(x)`` on ``[a, b]``.

    ``grade_left``/``grade_right`` force mesh grading toward an endpoint even
    when its exponent is zero (useful for singularities just outside the
    interval).
    """

    smooth: Callable[[np.ndarray], np.ndarray]
    left_exponent: float = 0.0
    right_exponent: float = 0.0
    grade_left: bool = False
    grade_right: bool = False


@lru_cache(maxsize=None)
def _legendre(order: int):
    return np.polynomial.legendre.leggauss(order)


@lru_cache(maxsize=256)
def _jacobi_right(order: int, e: float):
    # weight (1+x)^e on [-1, 1]
    x, w = sp.roots_jacobi(order, 0.0, e)
    return x, w


def _graded_edges(length: float, cells: int, ratio: float) -> np.ndarray:
    """Edges in [0, length] geometrically refined toward 0."""
    inner = length * ratio ** np.arange(cells - 1, 0, -1, dtype=float)
    return np.concatenate(([0.0], inner, [length]))


def _cells(L: float, cells: int, ratio: float, gl: bool, gr: bool):
    """Cells as ``(lo, hi, from_right)``; offsets are measured from the nearer graded end."""
    if gl and gr:
        half = cells // 2
        left = _graded_edges(L / 2, half, ratio)
        right = _graded_edges(L / 2, cells - half, ratio)
        return [(lo, hi, False) for lo, hi in zip(left, left[1:])] + [
            (lo, hi, True) for lo, hi in zip(right[-2::-1], right[:0:-1])
        ]
    if gl:
        e = _graded_edges(L, cells, ratio)
        return [(lo, hi, False) for lo, hi in zip(e, e[1:])]
    if gr:
        e = _graded_edges(L, cells, ratio)
        return [(lo, hi, True) for lo, hi in zip(e[-2::-1], e[:0:-1])]
    e = np.linspace(0.0, L, cells + 1)
    return [(lo, hi, False) for lo, hi in zip(e, e[1:])]


def _rule(a: float, b: float, integrand: SingularIntegrand, spec: QuadratureSpec, cells: int, ratio: float):
    """Nodes and weights of the full composite rule.

    Weights already include the endpoint power factors, so the integral is
    ``sum(w * smooth(x))``. Power factors are evaluated from offsets to the
    endpoints, never from ``x - a`` or ``b - x``, so cells far smaller than
    the interval's rounding unit keep full relative accuracy.
    """
    eL, eR = integrand.left_exponent, integrand.right_exponent
    gl = spec.scheme == "graded" and (eL != 0 or integrand.grade_left)
    gr = spec.scheme == "graded" and (eR != 0 or integrand.grade_right)
    L = b - a
    gx, gw = _legendre(spec.order)
    xs, ws = [], []
    for lo, hi, from_right in _cells(L, cells, ratio, gl, gr):
        h = hi - lo
        e_near, e_far = (eR, eL) if from_right else (eL, eR)
        if lo == 0.0 and e_near != 0:
            jx, jw = _jacobi_right(spec.order, float(e_near))
            near = 0.5 * h * (1 + jx)
            w = (0.5 * h) ** (e_near + 1) * jw * (L - near) ** e_far
        else:
            near = lo + 0.5 * h * (1 + gx)
            w = 0.5 * h * gw * near**e_near * (L - near) ** e_far
        xs.append(b - near if from_right else a + near)
        ws.append(w)
    return np.concatenate(xs), np.concatenate(ws)


def quadrature_rule(a: float, b: float, integrand: SingularIntegrand, spec: QuadratureSpec = DEFAULT_SPEC):
    """Nodes and (power-weighted) weights of the base rule for ``integrand`` on ``[a, b]``."""
    _check(a, b, integrand)
    return _rule(a, b, integrand, spec, spec.cells, spec.ratio)


def _check(a, b, integrand):
    if not b > a:
        raise ValueError(f"empty or reversed interval [{a}, {b}]")
    for e in (integrand.left_exponent, integrand.right_exponent):
        if not e > -1:
            raise ValueError(f"endpoint exponent {e} is not integrable (must exceed -1)")


def singular_integral_with_error(
    integrand: SingularIntegrand, interval: tuple[float, float], spec: QuadratureSpec = DEFAULT_SPEC
) -> tuple[float, float]:
    """Integral and an error estimate from successive 2x cell refinement."""
    a, b = map(float, interval)
    _check(a, b, integrand)
    cells, ratio = spec.cells, spec.ratio
    x, w = _rule(a, b, integrand, spec, cells, ratio)
    prev = float(w @ integrand.smooth(x))
    while True:
        cells, ratio = 2 * cells, math.sqrt(ratio)
        x, w = _rule(a, b, integrand, spec, cells, ratio)
        terms = w * integrand.smooth(x)
        cur = float(terms.sum())
        err = abs(cur - prev)
        if not math.isfinite(cur):
            raise QuadratureError("non-finite quadrature value")
        # roundoff floor of the weighted sum
        floor = 64 * np.finfo(float).eps * float(np.abs(terms).sum())
        if err <= max(spec.tol * abs(cur), floor):
            return cur, err
        if cells >= spec.max_cells:
            raise QuadratureError(
                f"relative error {err / abs(cur):.3g} above tolerance {spec.tol:g} at {cells} cells"
            )
        prev = cur


def singular_integral(
    integrand: SingularIntegrand, interval: tuple[float, float], spec: QuadratureSpec = DEFAULT_SPEC
) -> float:
    return singular_integral_with_error(integrand, interval, spec)[0]


def beta_substitution_identity(
    u: float, v: float, alpha: float, spec: QuadratureSpec = DEFAULT_SPEC
) -> tuple[float, float]:
    """Both sides of

        int_0^{u^v} x^(-2 alpha) (u-x)^(alpha-1) (v-x)^(alpha-1) dx
            = B(alpha, 1-2 alpha) (uv)^(-alpha) |u-v|^(2 alpha - 1).
    """
    if not 0 < alpha < 0.5:
        raise ValueError(f"alpha must lie in (0, 1/2), got {alpha}")
    if not (u > 0 and v > 0):
        raise ValueError("u and v must be positive")
    if u == v:
        raise ValueError("u == v: the right-hand side is singular")
    lo, hi = min(u, v), max(u, v)
    integrand = SingularIntegrand(
        smooth=lambda x: (hi - x) ** (alpha - 1),
        left_exponent=-2 * alpha,
        right_exponent=alpha - 1,
    )
    lhs = singular_integral(integrand, (0.0, lo), spec)
    rhs = beta_fn(alpha, 1 - 2 * alpha) * (u * v) ** (-alpha) * abs(u - v) ** (2 * alpha - 1)
    return lhs, rhs
