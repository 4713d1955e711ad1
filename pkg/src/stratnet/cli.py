"""Command line front end.

Every subcommand reads its settings from the matching block of an
optional JSON ``--config`` file, writes results under ``--out`` and prints
a JSON summary.  Failures print ``{"error": code, "message": ...}`` on
stderr and exit with a nonzero status.
"""
import argparse
import csv
import json
import os
import sys

import numpy as np

from . import game as gm
from . import montecarlo as mc
from . import npl
from .errors import DomainError, StratnetError
from .formation import DyadCovariates, FormationParams, simulate_network
from .graph import read_edge_list, summary_stats, write_edge_list
from .jml import JmlSettings, jml_estimate
from .transitivity import bias_corrected_estimates, rho_estimate, transitivity_test


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def _emit(payload, out_dir=None, name=None):
    text = json.dumps(_jsonable(payload), indent=2, sort_keys=True)
    if out_dir and name:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, name), "w") as fh:
            fh.write(text + "\n")
    print(text)


def _load_config(path):
    if not path:
        return {}
    with open(path) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise DomainError("config must be a JSON object with one block per module")
    return cfg


def parity_attribute(n):
    """x_i = 1 - 2 * 1{i even} for 1-based i."""
    i = np.arange(1, n + 1)
    return 1.0 - 2.0 * (i % 2 == 0)


def load_covariates(path, n):
    """Dyad covariates from CSV.

    A ``player,x`` file gives the product covariate x_i x_j; an
    ``i,j,x1,...`` file lists dyads (1-based, unlisted dyads are zero).
    Without a file the parity attribute is used.
    """
    if path is None:
        return DyadCovariates.product(parity_attribute(n))
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], [r for r in rows[1:] if r]
    if header[:2] == ["player", "x"]:
        x = np.zeros(n)
        for r in body:
            x[int(r[0]) - 1] = float(r[1])
        return DyadCovariates.product(x)
    if header[:2] == ["i", "j"]:
        k = len(header) - 2
        x = np.zeros((n, n, k))
        for r in body:
            x[int(r[0]) - 1, int(r[1]) - 1] = [float(v) for v in r[2:]]
        return DyadCovariates(x)
    raise DomainError("covariate CSV needs a 'player,x' or 'i,j,x1,...' header")


def _read_matrix_csv(path, n=None):
    """Player-indexed CSV (first column 1-based player) into a dense array."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    body = rows[1:]
    n = n or max(int(r[0]) for r in body)
    out = np.zeros((n, len(rows[0]) - 1))
    for r in body:
        out[int(r[0]) - 1] = [float(v) for v in r[1:]]
    return out


def _read_actions(path, n, r):
    """``player,activity,value`` rows into an n x r binary array."""
    a = np.zeros((n, r))
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        next(rd)
        for row in rd:
            if row:
                a[int(row[0]) - 1, int(row[1]) - 1] = float(row[2])
    return a


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(args, cfg):
    c = cfg.get("formation", {})
    n = int(c.get("n", 200))
    directed = bool(c.get("directed", True))
    if "A" in c:
        A = np.asarray(c["A"], dtype=np.float64)
    else:
        rule = c.get("c_n_rule", "loglog")
        A = mc.build_design(mc.McDesign(n=n, c_n_rule=rule, reps=1))[1]
    cov = load_covariates(args.covariates, n)
    params = FormationParams(beta=c.get("beta", [1.0]), delta=float(c.get("delta", 0.0)), A=A,
                             rho=float(c.get("rho", 0.0)), family=c.get("family", "probit"))
    net = simulate_network(n, cov, params, seed=args.seed, directed=directed)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "network.csv")
    write_edge_list(net, path)
    _emit({"network": path, "n": n, "directed": directed, "edges": int(net.adjacency.sum())})


def cmd_stats(args, cfg):
    net = read_edge_list(args.network)
    s = summary_stats(net)
    _emit({c: getattr(s, c) for c in s.COLUMNS}, args.out, "stats.json")


def _fit(args, cfg, net, cov):
    c = cfg.get("jml", {})
    settings = JmlSettings(family=c.get("family", "probit" if net.directed else "logistic"),
                           estimate_delta=bool(c.get("estimate_delta", False)),
                           drop_degenerate=bool(c.get("drop_degenerate", True)))
    return jml_estimate(net, cov, settings=settings)


def cmd_jml(args, cfg):
    net = read_edge_list(args.network)
    cov = load_covariates(args.covariates, net.n)
    fit = _fit(args, cfg, net, cov)
    bc = bias_corrected_estimates(fit, net, cov)
    out = {"theta_hat": fit.theta_hat, "theta_bc": bc.theta_bc, "loglik": fit.loglik,
           "A_hat": fit.A_hat, "B_hat": fit.B_hat, "dropped": fit.dropped,
           "converged": fit.converged, "family": fit.family}
    _emit(out, args.out, "jml.json")


def cmd_transitivity(args, cfg):
    net = read_edge_list(args.network)
    cov = load_covariates(args.covariates, net.n)
    fit = _fit(args, cfg, net, cov)
    rho = 0.0
    if net.directed and cfg.get("transitivity", {}).get("estimate_rho", True):
        rho = rho_estimate(net, cov, fit).rho_hat
    rep = transitivity_test(net, cov, fit, rho=rho)
    d = rep.to_dict()
    d["reject_10pct"] = bool(rep.reject(1.645))
    _emit(d, args.out, "transitivity.json")


def cmd_rho(args, cfg):
    net = read_edge_list(args.network)
    cov = load_covariates(args.covariates, net.n)
    fit = _fit(args, cfg, net, cov)
    c_tilde = float(cfg.get("rho", {}).get("c_tilde", 0.01))
    rf = rho_estimate(net, cov, fit, c_tilde=c_tilde)
    bc = bias_corrected_estimates(fit, net, cov, rf)
    _emit({"rho_hat": rf.rho_hat, "rho_bc": bc.rho_bc, "bias": bc.rho_correction,
           "se": bc.extras.get("rho_se"), "at_boundary": rf.at_boundary,
           "loglik": rf.loglik}, args.out, "rho.json")


def cmd_npl(args, cfg):
    c = cfg.get("npl")
    if not c:
        raise DomainError("npl needs an 'npl' config block")
    nets = [read_edge_list(p) for p in c["networks"]]
    ops = []
    for net in nets:
        g = net.adjacency.astype(np.float64)
        if c.get("normalization", "row") == "row":
            d = g.sum(1)
            g = g / np.where(d > 0, d, 1.0)[:, None]
        ops.append(g)
    n = sum(g.shape[0] for g in ops)
    r = int(c.get("r", 2))
    X = _read_matrix_csv(c["covariates"], n)
    a = _read_actions(c["actions"], n, r)
    settings = npl.NplSettings(tol=float(c.get("tol", 1e-8)), max_iters=int(c.get("max_iters", 200)))
    red, beliefs, trace = npl.npl_run(ops, X, a, psi0=c.get("psi0"), settings=settings)
    os.makedirs(args.out, exist_ok=True)
    est_path = os.path.join(args.out, "npl_estimates.csv")
    with open(est_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["parameter", "row", "activity", "value"])
        for name, mat in (("lambda", red.lambda_star), ("alpha", red.alpha_star),
                          ("gamma", red.gamma_star)):
            for i in range(mat.shape[0]):
                for k in range(mat.shape[1]):
                    w.writerow([name, i + 1, k + 1, repr(float(mat[i, k]))])
    log_path = os.path.join(args.out, "npl_trace.log")
    with open(log_path, "w") as fh:
        for it, (ll, st) in enumerate(zip(trace.loglik, trace.step), start=1):
            fh.write(f"sweep={it} loglik={ll!r} step={st!r}\n")
    out = {"estimates": est_path, "trace": log_path, "reduced_form": red.to_dict(),
           "iterations": len(trace.loglik), "converged": trace.converged}
    if "restrictions" in c:
        q, t = red.alpha_star.shape[0], red.gamma_star.shape[0]
        zeros = [[(name, int(idx)) for name, idx in per] for per in c["restrictions"]]
        R = npl.exclusion_restrictions(r, q, t, zeros)
        out["identification"] = npl.identification_check(R, red).to_dict()
        out["structural"] = npl.structural_recovery(red, R).to_dict()
    _emit(out, args.out, "npl.json")


def cmd_montecarlo(args, cfg):
    c = cfg.get("montecarlo", {})
    reps = int(c.get("reps", 700))
    if "designs" in c:
        designs = [mc.McDesign(n=int(d["n"]), rho0=float(d["rho0"]), c_n_rule=d["c_n_rule"],
                               reps=reps, alpha=float(c.get("alpha", 0.1)), base_seed=args.seed,
                               estimate=bool(c.get("estimate", True)))
                   for d in c["designs"]]
    else:
        designs = mc.design_grid(reps=reps, base_seed=args.seed, estimate=bool(c.get("estimate", True)))
    reports = [mc.run_design(d, threads=args.threads) for d in designs]
    paths = mc.emit_tables(reports, args.out)
    meta = {"tables": paths, "se_convention": "replication spread",
            "designs": [r.to_dict() for r in reports]}
    _emit(meta, args.out, "montecarlo.json")


def _game_inputs(cfg):
    c = cfg.get("game")
    if not c:
        raise DomainError("this command needs a 'game' config block")
    spec = gm.GameSpec.from_config(c)
    beliefs = gm.Beliefs(c["beliefs"]) if "beliefs" in c else None
    return spec, beliefs, c


def _default_beliefs(spec):
    _, wt = gm.reduced_form(spec)
    return gm.Beliefs(np.column_stack([gm.shock_cdf(wt[:, m], f)
                                       for m, f in enumerate(spec.families)]))


def cmd_ps_enumerate(args, cfg):
    spec, beliefs, c = _game_inputs(cfg)
    beliefs = beliefs or _default_beliefs(spec)
    if "shocks" in c:
        eps = np.asarray(c["shocks"], dtype=np.float64)
    else:
        eps = gm.draw_game_shocks(spec.n, spec.families, np.random.default_rng(args.seed))
    nets = sorted(gm.enumerate_ps(spec.n, spec, beliefs, eps), key=lambda g: g.adjacency.tobytes())
    edges = [[[int(i) + 1, int(j) + 1] for i, j in g.edges()] for g in nets]
    _emit({"n": spec.n, "count": len(nets), "networks": edges, "shocks": eps}, args.out, "ps.json")


def cmd_bounds(args, cfg):
    spec, beliefs, c = _game_inputs(cfg)
    b = cfg.get("bounds", {})
    nodes = [int(v) - 1 for v in b.get("sub_nodes", [1, 2])]
    from .graph import Network
    sub = Network.from_edges(len(nodes), [(i - 1, j - 1) for i, j in b.get("sub_edges", [])], False)
    res = gm.subnetwork_bounds(nodes, sub, spec, beliefs, n_draws=int(b.get("n_draws", 10_000)),
                               seed=args.seed)
    _emit({"lower": res.lower, "upper": res.upper, "empirical": res.empirical,
           "n_draws": res.n_draws, "empty_draws": res.empty_draws}, args.out, "bounds.json")


COMMANDS = {
    "simulate": (cmd_simulate, "draw a network from the dyadic formation model"),
    "stats": (cmd_stats, "summary statistics of an edge list"),
    "jml": (cmd_jml, "joint maximum likelihood fit with bias correction"),
    "transitivity": (cmd_transitivity, "excess transitivity test of the dyadic model"),
    "rho": (cmd_rho, "reciprocity correlation of a directed network"),
    "npl": (cmd_npl, "nested pseudo-likelihood estimation of the activity game"),
    "montecarlo": (cmd_montecarlo, "Monte Carlo tables for the dyadic estimators"),
    "ps-enumerate": (cmd_ps_enumerate, "pairwise stable networks of a small game"),
    "bounds": (cmd_bounds, "bounds on the probability of a subnetwork"),
}


def build_parser():
    p = argparse.ArgumentParser(prog="stratnet", description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=0, help="base random seed")
    p.add_argument("--config", default=None, help="JSON file with one block per module")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--threads", type=int, default=1, help="worker processes for Monte Carlo")
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_text)
        if name in ("stats", "jml", "transitivity", "rho"):
            sp.add_argument("network", help="edge list file")
        if name in ("simulate", "jml", "transitivity", "rho"):
            sp.add_argument("--covariates", default=None, help="player or dyad covariate CSV")
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error("--threads must be at least 1")
    try:
        cfg = _load_config(args.config)
        COMMANDS[args.command][0](args, cfg)
    except StratnetError as exc:
        print(json.dumps(exc.to_dict()), file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
