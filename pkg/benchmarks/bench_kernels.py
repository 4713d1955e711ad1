"""Compare the numba kernels with their numpy fallbacks.

Usage: python benchmarks/bench_kernels.py [--n 200] [--repeat 3]

Both kernels are timed on inputs from a simulated directed network and
its joint maximum likelihood fit; the script also checks that the two
back ends agree.
"""
import argparse
import time

import numpy as np

from stratnet import kernels
from stratnet.formation import FormationParams, simulate_network
from stratnet.jml import FitGeometry, JmlSettings, jml_estimate
from stratnet.montecarlo import McDesign, build_design


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    design = McDesign(n=args.n, rho0=0.0, c_n_rule="loglog", reps=1)
    cov, A = build_design(design)
    params = FormationParams(beta=[1.0], A=A, family="probit")
    net = simulate_network(args.n, cov, params, seed=args.seed, directed=True)
    fit = jml_estimate(net, cov, settings=JmlSettings(family="probit", drop_degenerate=True))
    geom = FitGeometry.from_fit(fit, net, cov)
    sub, _ = fit.restrict(net, cov)
    P, dp, X = geom.p, geom.dp, geom.x
    tri_args = (dp, P, X, geom.Ctt, geom.Ctf, geom.Cff, geom.sidx, geom.ridx)
    adj = np.ascontiguousarray(sub.adjacency, dtype=np.bool_)

    # warm up the JIT so compilation is not timed
    kernels.edge_connectivity_numba(adj, True)
    kernels.triad_cross_sum_numba(*[np.ascontiguousarray(a) for a in tri_args])

    rows = []
    for name, fnb, fnp in (
        ("edge_connectivity",
         lambda: kernels.edge_connectivity_numba(adj, True),
         lambda: kernels.edge_connectivity_numpy(adj, True)),
        ("triad_cross_sum",
         lambda: kernels.triad_cross_sum_numba(*[np.ascontiguousarray(a) for a in tri_args]),
         lambda: kernels.triad_cross_sum_numpy(*tri_args)),
    ):
        tb, vb = best_of(fnb, args.repeat)
        tp, vp = best_of(fnp, args.repeat)
        agree = np.isclose(float(vb), float(vp), rtol=1e-9, atol=1e-12)
        rows.append((name, tb, tp, tp / tb, agree))

    print(f"n={geom.n} players, best of {args.repeat}")
    print(f"{'kernel':<20}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}{'agree':>8}")
    for name, tb, tp, sp, ok in rows:
        print(f"{name:<20}{tb:>12.4f}{tp:>12.4f}{sp:>10.1f}{str(ok):>8}")


if __name__ == "__main__":
    main()
