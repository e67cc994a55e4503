"""Solve a coarse version of the retirement problem and look at simulated pension phases."""

import argparse
import time

import numpy as np

from decumulation.economics import FamilyStatus, ModelParams
from decumulation.simulator import PHASES, expected_wealth_path, simulate_paths
from decumulation.solver import SolveOptions, build_grid, optimize_housing, solve


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--grid", type=int, default=100, help="grid intervals")
    ap.add_argument("--w0", type=float, default=400000.0)
    ap.add_argument("--paths", type=int, default=2000)
    args = ap.parse_args()

    params = ModelParams().validate()
    grid = build_grid(params.market, 2.0e6, args.grid)
    t = time.perf_counter()
    sol = solve(params, grid, SolveOptions())
    print(f"solved {grid.nodes.size} nodes x {len(sol.ages)} ages in {time.perf_counter() - t:.1f} s")

    for total in (300e3, 800e3, 2e6):
        H, _ = optimize_housing(total, 0, sol, owner_only=True)
        print(f"single with total wealth {total:9.0f}: best house if owning {H:9.0f}")

    path = expected_wealth_path(sol, args.w0, FamilyStatus.SINGLE, 0)
    print("\nexpected path, single renter")
    for j in range(0, len(path.ages) - 1, 5):
        print(f"  age {path.ages[j]}: wealth {path.wealth[0, j]:10.0f}  consumption {path.consumption[0, j]:8.0f}"
              f"  phase {PHASES[path.phase[0, j]].value}")

    paths = simulate_paths(sol, args.w0, FamilyStatus.SINGLE, 0, args.paths, seed=1)
    alive = paths.phase >= 0
    print(f"\nshare of living households per phase over {args.paths} paths")
    for k, ph in enumerate(PHASES):
        share = np.sum(paths.phase == k, axis=0) / np.maximum(alive.sum(axis=0), 1)
        print(f"  {ph.value:>18}: " + " ".join(f"{s:4.2f}" for s in share[::5]))


if __name__ == "__main__":
    main()
