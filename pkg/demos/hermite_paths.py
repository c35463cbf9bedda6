"""Sample Hermite paths of order 1, 2 and 3 from one noise path and check their scaling.

Run: python demos/hermite_paths.py [out_dir]
Writes one CSV per order (t,value) and prints E[Z_t^2] against t^{2H}.
"""

import sys
from pathlib import Path

from hermvar import HermiteParams, SeedSpec, make_dyadic_grid, sample_noise, simulate_hermite_path, simulate_hermite_paths
from hermvar.randomness import mc_mean

SEED = 12345


def write_paths(out: Path, H: float = 0.7, n_max: int = 8):
    grid = make_dyadic_grid(1.0, n_max)
    noise = sample_noise(SeedSpec(SEED), grid)
    out.mkdir(parents=True, exist_ok=True)
    for k in (1, 2, 3):
        path = simulate_hermite_path(HermiteParams(H, k), grid, noise)
        path.to_csv(out / f"hermite_k{k}.csv", header_lines=[f"H={H} k={k} seed={SEED}"])
        print(f"k={k}: Z_1 = {path.at(1.0):+.4f}, wrote {out / f'hermite_k{k}.csv'}")


def scaling_table(H: float = 0.7, n_max: int = 8, replicates: int = 1000):
    # self-similarity: E[Z_t^2] = t^{2H}; the grid lowers short windows slightly
    grid = make_dyadic_grid(1.0, n_max)
    print(f"\nE[Z_t^2] / t^(2H), H={H}, N=2^{n_max}, {replicates} replicates")
    print("   t     k=1     k=2")
    Z = {k: simulate_hermite_paths(HermiteParams(H, k), grid, SEED, replicates) for k in (1, 2)}
    for t in (0.125, 0.25, 0.5, 1.0):
        i = grid.node_index(t)
        row = [mc_mean(Z[k][:, i] ** 2)[0] / t ** (2 * H) for k in (1, 2)]
        print(f"{t:6.3f}  {row[0]:6.3f}  {row[1]:6.3f}")


if __name__ == "__main__":
    write_paths(Path(sys.argv[1]) if len(sys.argv) > 1 else Path("demo_output"))
    scaling_table()
