"""Monte Carlo harness for the directed dyadic model with reciprocity.

Design: X_i = 1 - 2 * 1{i even} (1-based i), X_ij = X_i X_j, beta = 1,
delta = 0 and A_i = -((n - i)/(n - 1)) C_n with a sparsity rate C_n.
Dyad shocks are bivariate normal with correlation rho0.  Every
replication draws a network, records the summary statistics, fits the
sender/receiver probit by joint maximum likelihood, estimates rho and
applies the analytic bias corrections.

Biases are reported in units of the replication standard deviation and
rejection rates use the same replication spread to studentize.
"""
import csv
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import DomainError, StratnetError
from .formation import DyadCovariates, FormationParams, simulate_network
from .graph import summary_stats
from .jml import JmlSettings, jml_estimate
from .transitivity import bias_corrected_estimates, rho_estimate

CN_RULES = {
    "loglog": lambda n: math.log(math.log(n)),
    "sqrtlog": lambda n: math.sqrt(math.log(n)),
    "2sqrtlog": lambda n: math.sqrt(2.0 * math.log(n)),
    "log": lambda n: math.log(n),
}

STAT_FIELDS = ("density", "in_mean", "in_median", "out_mean", "out_median", "comp_share",
               "min_cut", "clustering")
TABLE1_COLUMNS = ("n", "rho", "Cn", "density", "bias_beta", "bias_beta_bc", "bias_rho",
                  "bias_rho_bc", "rej_beta", "rej_rho")
TABLE2_COLUMNS = ("n", "rho", "Cn", "density", "in_mean", "in_median", "out_mean", "out_median",
                  "comp_connected", "min_cut", "clustering")
MISSING = "-"


@dataclass(frozen=True)
class McDesign:
    n: int = 200
    rho0: float = 0.0
    c_n_rule: str = "loglog"
    beta0: float = 1.0
    delta0: float = 0.0
    reps: int = 700
    alpha: float = 0.1
    base_seed: int = 0
    estimate: bool = True

    def __post_init__(self):
        if self.reps < 1:
            raise DomainError("reps must be at least 1")
        if not 0.0 < self.alpha < 1.0:
            raise DomainError("alpha must lie in (0, 1)")
        if self.c_n_rule not in CN_RULES:
            raise DomainError(f"c_n_rule must be one of {tuple(CN_RULES)}")
        if self.n < 3:
            raise DomainError("n must be at least 3")
        if not -1.0 < self.rho0 < 1.0:
            raise DomainError("rho0 must lie in (-1, 1)")

    @property
    def c_n(self):
        return CN_RULES[self.c_n_rule](self.n)


def design_grid(reps=700, base_seed=0, estimate=True):
    """The 16 designs: n in (200, 250), rho0 in (0, 0.5) and four C_n rules."""
    return [McDesign(n=n, rho0=r, c_n_rule=c, reps=reps, base_seed=base_seed, estimate=estimate)
            for n in (200, 250) for r in (0.0, 0.5) for c in ("loglog", "sqrtlog", "2sqrtlog", "log")]


def build_design(design):
    """Covariates and heterogeneity vector for a design."""
    n = design.n
    i = np.arange(1, n + 1)
    xi = 1.0 - 2.0 * (i % 2 == 0)
    A = -((n - i) / (n - 1.0)) * design.c_n
    return DyadCovariates.product(xi), A


def run_rep(design, rep):
    """One replication: summary statistics always, estimates when they exist."""
    cov, A = build_design(design)
    params = FormationParams(beta=[design.beta0], delta=design.delta0, A=A, rho=design.rho0,
                             family="probit")
    net = simulate_network(design.n, cov, params, seed=[design.base_seed, rep], directed=True)
    s = summary_stats(net)
    out = {"rep": rep, "stats": {f: float(getattr(s, f)) for f in STAT_FIELDS}, "failure": None}
    if not design.estimate:
        return out
    try:
        with np.errstate(all="ignore"):
            fit = jml_estimate(net, cov, settings=JmlSettings(family="probit", drop_degenerate=True))
            rf = rho_estimate(net, cov, fit)
            bc = bias_corrected_estimates(fit, net, cov, rf)
        vals = [fit.beta[0], bc.theta_bc[0], rf.rho_hat, bc.rho_bc]
        if not all(np.isfinite(vals)):
            raise FloatingPointError("non-finite estimate")
        out.update(beta=float(vals[0]), beta_bc=float(vals[1]), rho=float(vals[2]),
                   rho_bc=float(vals[3]), rho_boundary=bool(rf.at_boundary),
                   dropped=len(fit.dropped))
    except (StratnetError, np.linalg.LinAlgError, FloatingPointError) as exc:
        out["failure"] = type(exc).__name__
    return out


def _rep_task(args):
    return run_rep(*args)


def _mean(x):
    return math.fsum(x) / len(x)


def _sd(x):
    if len(x) < 2:
        return float("nan")
    m = _mean(x)
    return math.sqrt(math.fsum((v - m) ** 2 for v in x) / (len(x) - 1))


@dataclass
class McReport:
    design: McDesign
    stats: dict
    completed: int
    failures: dict
    unstable: bool
    bias: dict = field(default_factory=dict)
    rejection: dict = field(default_factory=dict)
    means: dict = field(default_factory=dict)
    sds: dict = field(default_factory=dict)
    elapsed: float = 0.0
    se_convention: str = "replication spread"

    def table1_row(self):
        d = self.design
        row = {"n": d.n, "rho": d.rho0, "Cn": d.c_n_rule, "density": self.stats.get("density")}
        for key, name in (("bias_beta", "beta"), ("bias_beta_bc", "beta_bc"),
                          ("bias_rho", "rho"), ("bias_rho_bc", "rho_bc")):
            row[key] = None if self.unstable else self.bias.get(name)
        row["rej_beta"] = None if self.unstable else self.rejection.get("beta")
        row["rej_rho"] = None if self.unstable else self.rejection.get("rho")
        return row

    def table2_row(self):
        d = self.design
        row = {"n": d.n, "rho": d.rho0, "Cn": d.c_n_rule}
        for f in STAT_FIELDS:
            row["comp_connected" if f == "comp_share" else f] = self.stats.get(f)
        return row

    def to_dict(self):
        d = asdict(self)
        d["design"] = asdict(self.design)
        return d


def aggregate(design, results, elapsed=0.0):
    """Order-independent aggregation of replication records."""
    results = sorted(results, key=lambda r: r["rep"])
    stats = {f: _mean([r["stats"][f] for r in results]) for f in STAT_FIELDS}
    failures = {}
    for r in results:
        if r["failure"]:
            failures[r["failure"]] = failures.get(r["failure"], 0) + 1
    ok = [r for r in results if design.estimate and r["failure"] is None]
    n_fail = sum(failures.values())
    unstable = design.estimate and n_fail > 0.5 * len(results)
    rep = McReport(design=design, stats=stats, completed=len(ok), failures=failures,
                   unstable=unstable, elapsed=elapsed)
    if not design.estimate or len(ok) < 2 or unstable:
        return rep
    crit = float(ndtri(1.0 - design.alpha / 2.0))
    truth = {"beta": design.beta0, "beta_bc": design.beta0, "rho": design.rho0,
             "rho_bc": design.rho0}
    for key, t0 in truth.items():
        x = [r[key] for r in ok]
        m, s = _mean(x), _sd(x)
        rep.means[key], rep.sds[key] = m, s
        rep.bias[key] = (m - t0) / s if s > 0 else float("nan")
    # two-sided t-tests of the true value using the bias-corrected estimators
    for key, est in (("beta", "beta_bc"), ("rho", "rho_bc")):
        s = rep.sds[est]
        if not s > 0:
            rep.rejection[key] = float("nan")
            continue
        rej = [abs(r[est] - truth[est]) / s > crit for r in ok]
        rep.rejection[key] = sum(rej) / len(rej)
    return rep


def run_design(design, threads=1, progress=None):
    """Run all replications of a design, optionally across worker processes."""
    t0 = time.perf_counter()
    tasks = [(design, r) for r in range(design.reps)]
    if threads <= 1:
        results = []
        for t in tasks:
            results.append(run_rep(*t))
            if progress:
                progress(len(results), design.reps)
    else:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(_rep_task, tasks, chunksize=max(1, design.reps // (4 * threads))))
    return aggregate(design, results, elapsed=time.perf_counter() - t0)


def _fmt(v):
    if v is None or (isinstance(v, float) and not math.isfinite(v)):
        return MISSING
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit_tables(reports, sink):
    """Write table1.csv and table2.csv into the directory ``sink``."""
    os.makedirs(sink, exist_ok=True)
    paths = []
    for name, cols, getter in (("table1.csv", TABLE1_COLUMNS, "table1_row"),
                               ("table2.csv", TABLE2_COLUMNS, "table2_row")):
        path = os.path.join(sink, name)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for rep in reports:
                row = getattr(rep, getter)()
                w.writerow([_fmt(row.get(c)) for c in cols])
        paths.append(path)
    return paths


def read_table(path):
    """Parse an emitted table; missing cells come back as ``None``."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        parsed = {}
        for k, v in row.items():
            if v == MISSING:
                parsed[k] = None
            elif k == "Cn":
                parsed[k] = v
            else:
                parsed[k] = float(v)
        out.append(parsed)
    return out


def expected_density(design):
    """Exact expected density of the design from the link probabilities."""
    cov, A = build_design(design)
    z = cov.x[:, :, 0] * design.beta0 + A[:, None] + A[None, :]
    p = ndtr(z)
    np.fill_diagonal(p, 0.0)
    n = design.n
    return float(p.sum() / (n * (n - 1)))
