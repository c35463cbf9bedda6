"""Ridge-type smooth functionals of the noise, their Malliavin derivatives,
and Skorokhod integrals of elementary processes against the Hermite process.

A coefficient is ``F = phi(sum_i a_i I(h_i))``. Writing ``rho = sum_i a_i h_i``
(the ridge), every derivative is ``D^l F = phi^(l)(I(rho)) rho^{(x)l}``, so the
integral of an elementary process reduces to

    delta^k(F u) = sum_l (-1)^l C(k, l) phi^(l)(X) I_{k-l}(<u, rho^{(x)l}>),

which is evaluated per grid cell with the rank-one factors of ``chaos``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .chaos import CellKernel, CellQuadrature, KernelTensor, cell_kernel, hermite_poly, kernel_tensor
from .chaos import multiple_wiener_integral
from .grid import DyadicGrid, Partition
from .kernel import HermiteParams
from .randomness import NoisePath, map_replicates, mc_mean, noise_batch

MAX_DERIVATIVE = 3


@dataclass(frozen=True)
class Profile:
    """Scalar function with derivatives up to order 3 and their sup bounds."""

    name: str
    derivatives: tuple[Callable[[np.ndarray], np.ndarray], ...] = field(repr=False, compare=False)
    bounds: tuple[float, ...]
    value: float | None = None

    def __call__(self, x, order: int = 0):
        if not 0 <= order <= MAX_DERIVATIVE:
            raise ValueError(f"derivative order {order} exceeds {MAX_DERIVATIVE}")
        return self.derivatives[order](np.asarray(x, float))

    @property
    def is_constant(self) -> bool:
        return self.name == "const"

    @property
    def bounded(self) -> bool:
        return all(math.isfinite(b) for b in self.bounds)


def _zero(x):
    return np.zeros_like(x)


_GAUSS_D3 = 3.9035822
PROFILES: dict[str, Profile] = {
    "sin": Profile("sin", (np.sin, np.cos, lambda x: -np.sin(x), lambda x: -np.cos(x)), (1.0, 1.0, 1.0, 1.0)),
    "cos": Profile("cos", (np.cos, lambda x: -np.sin(x), lambda x: -np.cos(x), np.sin), (1.0, 1.0, 1.0, 1.0)),
    "tanh": Profile(
        "tanh",
        (
            np.tanh,
            lambda x: 1 - np.tanh(x) ** 2,
            lambda x: -2 * np.tanh(x) * (1 - np.tanh(x) ** 2),
            lambda x: (1 - np.tanh(x) ** 2) * (6 * np.tanh(x) ** 2 - 2),
        ),
        (1.0, 1.0, 4 / (3 * math.sqrt(3)), 2.0),
    ),
    "gauss": Profile(
        "gauss",
        (
            lambda x: np.exp(-x * x),
            lambda x: -2 * x * np.exp(-x * x),
            lambda x: (4 * x * x - 2) * np.exp(-x * x),
            lambda x: (12 * x - 8 * x**3) * np.exp(-x * x),
        ),
        (1.0, math.sqrt(2) * math.exp(-0.5), 2.0, _GAUSS_D3),
    ),
}
CATALOG = ("sin", "cos", "tanh", "gauss", "const")


def const_profile(c: float) -> Profile:
    c = float(c)
    if not math.isfinite(c):
        raise ValueError("constant must be finite")
    return Profile("const", (lambda x, c=c: np.full_like(x, c), _zero, _zero, _zero), (abs(c), 0.0, 0.0, 0.0), c)


def affine_profile(intercept: float, slope: float) -> Profile:
    """``x -> intercept + slope x``. Unbounded, so kept out of the catalog; used by oracles."""
    a, b = float(intercept), float(slope)
    return Profile(
        "affine",
        (lambda x: a + b * x, lambda x: np.full_like(x, b), _zero, _zero),
        (math.inf, abs(b), 0.0, 0.0),
    )


def get_profile(name: str, value: float | None = None) -> Profile:
    if name == "const":
        return const_profile(0.0 if value is None else value)
    if name not in PROFILES:
        raise ValueError(f"unknown profile {name!r}; expected one of {', '.join(CATALOG)}")
    return PROFILES[name]


@dataclass(frozen=True)
class Direction:
    """Continuous direction function: polynomial (degree <= 4), ``cos(omega t)`` or ``sin(omega t)``."""

    kind: str
    coeffs: tuple[float, ...] = ()
    omega: float = 0.0

    def __post_init__(self):
        if self.kind == "poly":
            if not 1 <= len(self.coeffs) <= 5:
                raise ValueError("polynomial directions need 1 to 5 coefficients (degree <= 4)")
            object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        elif self.kind in ("cos", "sin"):
            if not math.isfinite(self.omega):
                raise ValueError("omega must be finite")
        else:
            raise ValueError(f"unknown direction type {self.kind!r}")
        vals = self.coeffs if self.kind == "poly" else (self.omega,)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("direction parameters must be finite")

    def __call__(self, t):
        t = np.asarray(t, float)
        if self.kind == "poly":
            return np.polynomial.polynomial.polyval(t, self.coeffs)
        return np.cos(self.omega * t) if self.kind == "cos" else np.sin(self.omega * t)

    def sup_norm(self, T: float) -> float:
        """``max |h|`` on ``[0, T]`` (exact for polynomials, 1 bounds the trigonometric families)."""
        if self.kind != "poly":
            return 1.0
        poly = np.polynomial.Polynomial(self.coeffs)
        crit = [r.real for r in poly.deriv().roots() if abs(r.imag) < 1e-12 and 0 <= r.real <= T] if len(self.coeffs) > 1 else []
        return float(np.max(np.abs(poly(np.array([0.0, T] + crit)))))

    def sample(self, grid: DyadicGrid) -> np.ndarray:
        return self(grid.midpoints)


@dataclass(frozen=True)
class CylindricalVariable:
    """``F = profile(sum_i weights[i] * I(directions[i]))``."""

    profile: Profile
    weights: tuple[float, ...] = ()
    directions: tuple[Direction, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(a) for a in self.weights))
        object.__setattr__(self, "directions", tuple(self.directions))
        if len(self.weights) != len(self.directions):
            raise ValueError("need one weight per direction")
        if not all(math.isfinite(a) for a in self.weights):
            raise ValueError("weights must be finite")

    @classmethod
    def constant(cls, c: float) -> "CylindricalVariable":
        return cls(const_profile(c))

    @property
    def is_constant(self) -> bool:
        return self.profile.is_constant or not self.directions

    def ridge(self, grid: DyadicGrid) -> np.ndarray:
        """``rho = sum_i a_i h_i`` at the cell midpoints."""
        rho = np.zeros(grid.cells)
        for a, h in zip(self.weights, self.directions):
            rho += a * h.sample(grid)
        return rho

    def ridge_at(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        out = np.zeros_like(x)
        for a, h in zip(self.weights, self.directions):
            out = out + a * h(x)
        return out

    def argument(self, xi: np.ndarray, grid: DyadicGrid) -> np.ndarray:
        return np.asarray(xi, float) @ self.ridge(grid)

    def uniform_bound(self, T: float) -> float:
        """Bound on ``sup |D^l F|`` over ``l <= 3`` from the catalog derivative bounds."""
        spread = sum(abs(a) * h.sup_norm(T) for a, h in zip(self.weights, self.directions))
        return max(b * spread**l for l, b in enumerate(self.profile.bounds))


def realize(F: CylindricalVariable, w: NoisePath) -> float:
    return float(F.profile(F.argument(w.increments, w.grid)))


def realize_batch(F: CylindricalVariable, xi: np.ndarray, grid: DyadicGrid) -> np.ndarray:
    return F.profile(F.argument(xi, grid))


def malliavin_derivative(F: CylindricalVariable, order: int, w: NoisePath, x: Sequence[float]) -> float:
    """``D^l F`` at the point ``x`` of ``[0, T]^l``, directions evaluated exactly at ``x``."""
    x = np.atleast_1d(np.asarray(x, float))
    if x.size != order:
        raise ValueError(f"need a point with {order} coordinates, got {x.size}")
    if np.any((x < 0) | (x > w.grid.horizon)):
        raise ValueError("derivative point outside [0, T]")
    scalar = float(F.profile(F.argument(w.increments, w.grid), order))
    return scalar * float(np.prod(F.ridge_at(x)))


def derivative_tensor(F: CylindricalVariable, order: int, w: NoisePath) -> KernelTensor | float:
    """Grid version of ``D^l F``: constant on cells, directions at midpoints."""
    scalar = float(F.profile(F.argument(w.increments, w.grid), order))
    if order == 0:
        return scalar
    ridge_power = KernelTensor.outer_power(F.ridge(w.grid), order, w.grid)
    return KernelTensor(order, w.grid, scalar * ridge_power.values)


@dataclass(frozen=True)
class ElementaryProcess:
    """Step process: ``coefficients[j]`` on ``[s_j, s_{j+1})``."""

    partition: Partition
    coefficients: tuple[CylindricalVariable, ...]

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(self.coefficients))
        if len(self.coefficients) != self.partition.segments:
            raise ValueError(
                f"{len(self.coefficients)} coefficients for {self.partition.segments} segments"
            )

    @classmethod
    def deterministic(cls, points, values) -> "ElementaryProcess":
        return cls(Partition(tuple(points)), tuple(CylindricalVariable.constant(v) for v in values))

    @property
    def is_deterministic(self) -> bool:
        return all(F.is_constant for F in self.coefficients)

    def cell_segments(self, grid: DyadicGrid) -> np.ndarray:
        """Segment index of every grid cell, ``-1`` outside the partition."""
        if not self.partition.is_aligned(grid):
            raise ValueError("integrand partition is not aligned to the grid")
        seg = np.full(grid.cells, -1)
        idx = self.partition.indices(grid)
        for j in range(self.partition.segments):
            seg[idx[j] : idx[j + 1]] = j
        return seg


def window_indices(grid: DyadicGrid, window) -> tuple[int, int]:
    """Cell index range ``[lo, hi)`` of a window whose endpoints are grid nodes."""
    t0, t1 = window
    if not 0 <= t0 <= t1 <= grid.horizon:
        raise ValueError(f"window {window} must satisfy 0 <= t0 <= t1 <= T")
    lo, hi = (int(round(t / grid.step)) for t in (t0, t1))
    if abs(lo * grid.step - t0) > 1e-12 * max(1.0, grid.horizon) or abs(hi * grid.step - t1) > 1e-12 * max(1.0, grid.horizon):
        raise ValueError(f"window {window} endpoints are not grid nodes")
    return lo, hi


def skorokhod_cell_terms(p: HermiteParams, g: ElementaryProcess, grid: DyadicGrid, xi: np.ndarray,
                         quad: CellQuadrature = CellQuadrature()) -> np.ndarray:
    """Contribution of every grid cell to the integral, shape ``(R, N)``.

    The integral over a window ``[t0, t1]`` is the sum of the columns of the
    cells inside the window.
    """
    xi = np.atleast_2d(np.asarray(xi, float))
    ck: CellKernel = cell_kernel(p, grid, quad)
    k, c_h, d = p.k, p.c, grid.step
    seg = g.cell_segments(grid)
    out = np.zeros((xi.shape[0], grid.cells))
    coeffs = []
    for F in g.coefficients:
        rho = F.ridge(grid)
        X = xi @ rho
        scal = [F.profile(X, l) for l in range(k + 1)]
        coeffs.append((F, rho, scal))
    for c, A in enumerate(ck.factors):
        j = seg[c]
        if j < 0:
            continue
        F, rho, scal = coeffs[j]
        S = xi[:, : c + 1] @ A.T
        w = ck.weights
        total = scal[0][:, None] * hermite_poly(k, S, ck.norms[c])
        if not F.is_constant:
            r = d * (A @ rho[: c + 1])
            for l in range(1, k + 1):
                term = hermite_poly(k - l, S, ck.norms[c]) * r**l
                total = total + ((-1) ** l * math.comb(k, l)) * scal[l][:, None] * term
        out[:, c] = c_h * (total @ w)
    return out


def skorokhod_integral(p: HermiteParams, g: ElementaryProcess, w: NoisePath, window=None,
                       quad: CellQuadrature = CellQuadrature()) -> float:
    """``int_{t0}^{t1} g dZ`` in the Skorokhod sense on one noise path."""
    if p.k > 3:
        raise ValueError("order cap is 3")
    lo, hi = window_indices(w.grid, (0.0, w.grid.horizon) if window is None else window)
    terms = skorokhod_cell_terms(p, g, w.grid, w.increments[None, :], quad)[0]
    return float(np.sum(terms[lo:hi]))


def skorokhod_paths(p: HermiteParams, g: ElementaryProcess, grid: DyadicGrid, master_seed: int, replicates: int,
                    threads: int = 1, quad: CellQuadrature = CellQuadrature()) -> np.ndarray:
    """Integral over ``[0, t]`` at every grid node, one row per replicate, shape ``(R, N+1)``."""
    g.cell_segments(grid)

    def chunk(idx):
        terms = skorokhod_cell_terms(p, g, grid, noise_batch(master_seed, idx, grid), quad)
        out = np.zeros((len(idx), grid.cells + 1))
        np.cumsum(terms, axis=1, out=out[:, 1:])
        return out

    return map_replicates(chunk, replicates, threads)


def first_chaos_oracle(p: HermiteParams, g: ElementaryProcess, w: NoisePath, window=None) -> float:
    """Order-one integral computed as ``sum_j F_j I(u_j) - <D F_j, u_j>`` from explicit kernels.

    Independent of the cell-by-cell expansion: it uses explicit tensors of
    each segment and the product rule for the first chaos.
    """
    if p.k != 1:
        raise ValueError("first-chaos oracle needs k = 1")
    grid = w.grid
    lo, hi = window_indices(grid, (0.0, grid.horizon) if window is None else window)
    idx = g.partition.indices(grid)
    total = 0.0
    for j, F in enumerate(g.coefficients):
        a, b = max(idx[j], lo), min(idx[j + 1], hi)
        if a >= b:
            continue
        u = kernel_tensor(p, grid, a * grid.step, b * grid.step)
        X = F.argument(w.increments, grid)
        total += float(F.profile(X)) * multiple_wiener_integral(u, w)
        total -= float(F.profile(X, 1)) * grid.step * float(F.ridge(grid) @ u.values)
    return total


@dataclass(frozen=True)
class DualityResult:
    lhs: float
    lhs_stderr: float
    rhs: float
    rhs_stderr: float
    diff_stderr: float

    @property
    def z_score(self) -> float:
        if self.diff_stderr == 0:
            return 0.0 if self.lhs == self.rhs else math.inf
        return abs(self.lhs - self.rhs) / self.diff_stderr


def _contract(f: KernelTensor, rho: np.ndarray) -> float:
    v = f.values
    for _ in range(f.order):
        v = v @ rho
    return float(v) * f.grid.step**f.order


def duality_check(F: CylindricalVariable, f: KernelTensor, replicates: int, seed: int, threads: int = 1) -> DualityResult:
    """Monte Carlo ``E[F I_k(f)]`` against ``E[<D^k F, f>]`` on shared replicates."""
    if f.order > 3:
        raise ValueError("order cap is 3")
    grid = f.grid
    contracted = _contract(f, F.ridge(grid))

    def chunk(idx):
        xi = noise_batch(seed, idx, grid)
        X = F.argument(xi, grid)
        left = F.profile(X) * multiple_wiener_integral(f, xi)
        right = F.profile(X, f.order) * contracted
        return np.stack([left, right], axis=1)

    vals = map_replicates(chunk, replicates, threads)
    lm, ls = mc_mean(vals[:, 0])
    rm, rs = mc_mean(vals[:, 1])
    _, ds = mc_mean(vals[:, 0] - vals[:, 1])
    return DualityResult(lm, ls, rm, rs, ds)


def sobolev_norm_estimate(F: CylindricalVariable, k: int, p: float, replicates: int, seed: int, grid: DyadicGrid,
                          threads: int = 1) -> float:
    """Monte Carlo ``(E|F|^p + sum_{l=1..k} E |D^l F|_{L^2}^p)^{1/p}``."""
    if not 0 <= k <= 3:
        raise ValueError("order cap is 3")
    if p < 1:
        raise ValueError("need p >= 1")
    rho = F.ridge(grid)
    rho_norm = math.sqrt(grid.step * float(rho @ rho))

    def chunk(idx):
        X = F.argument(noise_batch(seed, idx, grid), grid)
        cols = [np.abs(F.profile(X)) ** p]
        cols += [np.abs(F.profile(X, l) * rho_norm**l) ** p for l in range(1, k + 1)]
        return np.stack(cols, axis=1)

    vals = map_replicates(chunk, replicates, threads)
    total = math.fsum(mc_mean(vals[:, i])[0] for i in range(vals.shape[1]))
    return total ** (1 / p)


def windowed_norm_scaling(p: HermiteParams, grid: DyadicGrid, ms: Sequence[int], replicates: int, seed: int,
                          threads: int = 1) -> tuple[float, np.ndarray, np.ndarray]:
    """Fit ``log ||int_0^w 1 dZ||_{L^{1/H}} ~ e log w`` over windows ``w = 2^-m``.

    Returns ``(exponent, window lengths, norms)``.
    """
    g = ElementaryProcess.deterministic((0.0, grid.horizon), (1.0,))
    paths = skorokhod_paths(p, g, grid, seed, replicates, threads)
    q = 1 / p.H
    lengths = np.array([grid.horizon * 2.0**-m for m in ms])
    norms = np.array([mc_mean(np.abs(paths[:, grid.node_index(L)]) ** q)[0] ** (1 / q) for L in lengths])
    slope = np.polyfit(np.log(lengths), np.log(norms), 1)[0]
    return float(slope), lengths, norms


def _field(doc, key, path, kind=None):
    if not isinstance(doc, dict) or key not in doc:
        raise ValueError(f"{path}.{key}: missing field")
    v = doc[key]
    if kind is not None and not isinstance(v, kind):
        raise ValueError(f"{path}.{key}: expected {getattr(kind, '__name__', kind)}")
    return v


def _number(v, path) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ValueError(f"{path}: expected a finite number")
    return float(v)


def parse_direction(doc, path="direction") -> Direction:
    kind = _field(doc, "type", path, str)
    try:
        if kind == "poly":
            coeffs = _field(doc, "coeffs", path, list)
            return Direction("poly", tuple(_number(c, f"{path}.coeffs[{i}]") for i, c in enumerate(coeffs)))
        if kind in ("cos", "sin"):
            return Direction(kind, omega=_number(_field(doc, "omega", path), f"{path}.omega"))
    except ValueError as exc:
        msg = str(exc)
        raise ValueError(msg if msg.startswith(path) else f"{path}: {msg}") from None
    raise ValueError(f"{path}.type: unknown direction type {kind!r}")


def parse_integrand(doc, grid: DyadicGrid | None = None, path: str = "integrand") -> ElementaryProcess:
    """Build an elementary process from its JSON-like description."""
    points = _field(doc, "partition", path, list)
    pts = tuple(_number(x, f"{path}.partition[{i}]") for i, x in enumerate(points))
    segments = _field(doc, "segments", path, list)
    try:
        part = Partition(pts)
    except ValueError as exc:
        raise ValueError(f"{path}.partition: {exc}") from None
    if len(segments) != part.segments:
        raise ValueError(f"{path}.segments: {len(segments)} entries for {part.segments} partition segments")
    if grid is not None and not part.is_aligned(grid):
        raise ValueError(f"{path}.partition: points are not grid nodes")
    coeffs = []
    for j, seg in enumerate(segments):
        sp = f"{path}.segments[{j}]"
        kind = _field(seg, "kind", sp, str)
        if kind == "const":
            coeffs.append(CylindricalVariable.constant(_number(_field(seg, "value", sp), f"{sp}.value")))
        elif kind == "ridge":
            name = _field(seg, "profile", sp, str)
            if name not in PROFILES:
                raise ValueError(f"{sp}.profile: unknown profile {name!r}")
            weights = _field(seg, "weights", sp, list)
            dirs = _field(seg, "directions", sp, list)
            if len(weights) != len(dirs):
                raise ValueError(f"{sp}: {len(weights)} weights for {len(dirs)} directions")
            coeffs.append(
                CylindricalVariable(
                    PROFILES[name],
                    tuple(_number(a, f"{sp}.weights[{i}]") for i, a in enumerate(weights)),
                    tuple(parse_direction(d, f"{sp}.directions[{i}]") for i, d in enumerate(dirs)),
                )
            )
        else:
            raise ValueError(f"{sp}.kind: expected 'const' or 'ridge', got {kind!r}")
    return ElementaryProcess(part, tuple(coeffs))


def integrand_abs_power(g: ElementaryProcess, q: float, grid: DyadicGrid, xi: np.ndarray) -> np.ndarray:
    """``int_0^T |g_s|^q ds`` per noise row."""
    xi = np.atleast_2d(xi)
    seg_len = np.diff(np.asarray(g.partition.points, float))
    total = np.zeros(xi.shape[0])
    for F, L in zip(g.coefficients, seg_len):
        total += np.abs(F.profile(F.argument(xi, grid))) ** q * L
    return total
