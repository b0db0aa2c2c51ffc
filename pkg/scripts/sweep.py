"""Sweep drive amplitude and ramp rate; record how well each reference family is followed.

    python3 scripts/sweep.py --omega 0.05 0.1 0.2 --eps 0.05 0.1 --out sweep.csv
"""

import argparse
import itertools
import math

import numpy as np

from adiabath.grid import Grid, PhysicalParams
from adiabath.model import Schedule
from adiabath.runner import emit_csv, separation_ratio, theorem_runs

SCHEMA = ["Omega", "eps_R", "max_deficit_invariant", "max_deficit_hamiltonian", "separation_ratio", "berry_phase_error"]


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--omega", type=float, nargs="+", default=[0.05, 0.1, 0.2])
    parser.add_argument("--eps", type=float, nargs="+", default=[0.05])
    parser.add_argument("--dt", type=float, default=1e-3)
    parser.add_argument("--points", type=int, default=1024)
    parser.add_argument("--half-width", type=float, default=10.0)
    parser.add_argument("--levels", type=int, default=1)
    parser.add_argument("--out", default="sweep.csv")
    args = parser.parse_args(argv)

    params = PhysicalParams()
    grid = Grid(-args.half_width, args.half_width, args.points)
    rows = []
    for W, eps in itertools.product(args.omega, args.eps):
        schedule = Schedule("cos_ramp", eps_R=eps, Omega=W)
        t1 = round(2 * math.pi / W / args.dt) * args.dt
        result = theorem_runs(params, schedule, grid, 0.0, t1, args.dt, n_max=args.levels, n_phase=0)
        row = [
            W,
            eps,
            float(np.max(result.deficit_invariant)),
            float(np.max(result.deficit_hamiltonian)),
            separation_ratio(result),
            result.berry_phase_error,
        ]
        rows.append(row)
        print("  ".join(f"{v:.3e}" for v in row))
    emit_csv(rows, SCHEMA, args.out)


if __name__ == "__main__":
    main()
