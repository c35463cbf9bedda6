"""1/H-variation of Hermite paths along dyadic partitions.

Run: python demos/variation_convergence.py
For k=1 the limit is E|N(0,1)|^{1/H}; for k=2 it is estimated from Z_1 on the
same replicates. The last column is the L1 error E|V_n - C|.

Increments over one or a few grid cells carry a variance deficit (the grid
process only sees the noise cell by cell), so the finest levels sit below the
target; the L1 error of k=2 stalls at the last level for that reason.
"""

from hermvar import HermiteParams, converge_z, make_dyadic_grid

SEED = 12345


def table(H: float, k: int, n_max: int, replicates: int):
    rep = converge_z(HermiteParams(H, k), make_dyadic_grid(1.0, n_max), range(2, n_max + 1), replicates, SEED)
    print(f"\nH={H} k={k}: target C = {rep.target:.4f} ({replicates} replicates, N=2^{n_max})")
    print("  n   mean V   stderr   L1 err")
    for n, m, s, e in zip(rep.levels, rep.mean_V, rep.stderr, rep.l1_err):
        print(f"{n:3d}  {m:7.4f}  {s:7.4f}  {e:7.4f}")


def vanishing_regime(H: float = 0.75, n_max: int = 8, replicates: int = 500):
    # above the critical order the variation vanishes, halving per level for p = 2/H
    rep = converge_z(HermiteParams(H, 1), make_dyadic_grid(1.0, n_max), range(2, n_max + 1), replicates, SEED,
                     power=2 / H)
    print(f"\np = 2/H = {2 / H:.3f}: mean V per level")
    print("  ".join(f"{m:.2e}" for m in rep.mean_V))


if __name__ == "__main__":
    table(0.75, 1, 9, 1000)
    table(0.7, 2, 8, 300)
    vanishing_regime()
