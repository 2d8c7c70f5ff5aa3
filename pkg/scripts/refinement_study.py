"""Grid refinement of the profile maximum, the first eigenvalue and the Barenblatt residual."""
import argparse

import numpy as np

from dnle.grid import Interval, Parameters, build_domain
from dnle.selfsimilar import barenblatt_pde_residual
from dnle.stationary import compute_first_eigenpair, compute_profile_f, exact_eigenvalue_1d

from oracles import profile_max


def table(title, rows):
    print(title)
    prev = None
    for n, err in rows:
        rate = "" if prev is None else f"  order {np.log2(prev / err):5.2f}"
        print(f"  nodes {n:5d}  error {err:.3e}{rate}")
        prev = err


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--levels", type=int, default=5, help="grids 33, 65, ... (default 5)")
    args = ap.parse_args()
    grids = [32 * 2 ** k + 1 for k in range(args.levels)]
    for mp in [(2.0, 2.0), (1.0, 3.0), (3.0, 1.5)]:
        P = Parameters(*mp)
        ref = profile_max(*mp)
        rows = [(n, abs(compute_profile_f(P, build_domain(Interval(1.0), n)).f.max() - ref)) for n in grids]
        table(f"max f, m={mp[0]:g} p={mp[1]:g} (exact {ref:.12f})", rows)
    for p in (1.5, 2.0, 3.0):
        ref = exact_eigenvalue_1d(p)
        rows = [(n, abs(compute_first_eigenpair(p, build_domain(Interval(1.0), n)).lambda1 - ref)) for n in grids]
        table(f"lambda1, p={p:g} (exact {ref:.10f})", rows)
    for mp in [(2.0, 2.0), (1.0, 3.0)]:
        P = Parameters(*mp)
        rows = [(n, barenblatt_pde_residual(P, 4 * n - 3)) for n in grids]
        table(f"Barenblatt discrete residual (L1, |x| < 0.8 R), m={mp[0]:g} p={mp[1]:g}", rows)


if __name__ == "__main__":
    main()
