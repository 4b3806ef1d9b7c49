"""Time the numba kernels against the pure-numpy path on table-sized inputs.

    python benchmarks/bench_kernels.py [--rows 4096] [--nx 50] [--repeat 3]

Both backends are imported directly, so DFUSE_DISABLE_NUMBA does not matter
here. Outputs are compared before timing.
"""

import argparse
import time

import numpy as np

from dfuse import kernels
from dfuse.fusion import ParameterGrid, build_glod_table, build_llr_table
from dfuse.lod import lod_weights
from dfuse.model import Box, PowerLaw, build_grid_network


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=4096)
    ap.add_argument("--nx", type=int, default=50)
    ap.add_argument("--nsigma", type=int, default=10)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--bep", type=float, default=0.0)
    args = ap.parse_args()

    net = build_grid_network(64, bep=args.bep)
    aaf = PowerLaw(0.2, 4.0)
    grid = ParameterGrid.uniform(Box.unit(), args.nx, 10.0, 0.1, args.nsigma)
    table = build_llr_table(net, aaf, grid)
    glod = build_glod_table(net, aaf, lod_weights(net), grid)
    rng = np.random.default_rng(0)
    rows = (rng.random((args.rows, 64)) < 0.1).astype(np.uint8)
    grid_args = (rows, table.base, table.weights_t, grid.log_position_mass, grid.log_power_mass)
    glod_args = (rows, glod.num_base, glod.dnu_g2T, glod.inv_den, glod.valid)

    # warm up (JIT compile or load from cache) and check agreement
    a, b = kernels.grid_rule_stats_numpy(*grid_args), kernels.grid_rule_stats_numba(*grid_args)
    print(f"grid rules max abs diff {np.max(np.abs(a - b)):.2e}")
    a, b = kernels.glod_stats_numpy(*glod_args), kernels.glod_stats_numba(*glod_args)
    print(f"glod       max abs diff {np.max(np.abs(a - b)):.2e}")

    print(f"{args.rows} rows, K=64, {grid.n_cells} cells, best of {args.repeat}")
    print(f"{'kernel':12s}{'numpy s':>10s}{'numba s':>10s}{'speedup':>9s}")
    for name, np_fn, nb_fn, fargs in (
        ("grid rules", kernels.grid_rule_stats_numpy, kernels.grid_rule_stats_numba, grid_args),
        ("glod", kernels.glod_stats_numpy, kernels.glod_stats_numba, glod_args),
    ):
        t_np = best_of(lambda: np_fn(*fargs), args.repeat)
        t_nb = best_of(lambda: nb_fn(*fargs), args.repeat)
        print(f"{name:12s}{t_np:10.3f}{t_nb:10.3f}{t_np / t_nb:9.1f}x")


if __name__ == "__main__":
    main()
