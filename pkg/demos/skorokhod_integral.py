"""Skorokhod integrals of random step integrands against the Rosenblatt process.

Run: python demos/skorokhod_integral.py
1. The integral of a smooth functional of the noise has mean zero and
   satisfies the duality relation with the Malliavin derivative.
2. Its 1/H-variation approaches C * int |g|^{1/H} ds as the partition refines.
"""

from hermvar import (
    CylindricalVariable,
    Direction,
    ElementaryProcess,
    HermiteParams,
    Partition,
    converge_integral,
    duality_check,
    kernel_tensor,
    make_dyadic_grid,
)
from hermvar.malliavin import PROFILES, skorokhod_paths
from hermvar.randomness import mc_mean

SEED = 12345


def integrand():
    ridge = CylindricalVariable(PROFILES["sin"], (1.0,), (Direction("cos", omega=3.0),))
    return ElementaryProcess(Partition((0.0, 0.5, 1.0)), (CylindricalVariable.constant(1.0), ridge))


def mean_and_duality(p: HermiteParams):
    grid = make_dyadic_grid(1.0, 6)
    vals = skorokhod_paths(p, integrand(), grid, SEED, 5000)[:, -1]
    m, se = mc_mean(vals)
    print(f"E[int g dZ] = {m:+.4f} +- {se:.4f}")
    F = CylindricalVariable(PROFILES["tanh"], (1.0,), (Direction("poly", (0.5, 1.0)),))
    res = duality_check(F, kernel_tensor(p, make_dyadic_grid(1.0, 5)), 10_000, SEED)
    print(f"E[F I_k(f)] = {res.lhs:+.4f} +- {res.lhs_stderr:.4f},  E<D^k F, f> = {res.rhs:+.4f}  (z = {res.z_score:.2f})")


def variation(p: HermiteParams, n_max: int = 8, replicates: int = 300):
    rep = converge_integral(p, integrand(), make_dyadic_grid(1.0, n_max), range(2, n_max - 1), replicates, SEED)
    print(f"\ntarget C E[int |g|^(1/H)] = {rep.target:.4f}")
    print("  n   mean V   L1 err")
    for n, m, e in zip(rep.levels, rep.mean_V, rep.l1_err):
        print(f"{n:3d}  {m:7.4f}  {e:7.4f}")


if __name__ == "__main__":
    p = HermiteParams(0.7, 2)
    mean_and_duality(p)
    variation(p)
