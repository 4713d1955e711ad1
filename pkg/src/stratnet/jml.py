"""Joint maximum likelihood for the dyadic model with degree heterogeneity.

Two model layouts are supported:

* undirected: z_ij = x_ij' theta + A_i + A_j over dyads i < j;
* directed:   z_ij = x_ij' theta + a_i + b_j over ordered pairs i != j
  (sender and receiver effects; one direction is not identified and is
  pinned by b_{n-1} = 0).

The undirected logit is estimated with the concentrated likelihood: the
heterogeneity vector solves A_i = ln G_i+ - ln r_i(theta, A) by Picard
iteration and theta is searched by bounded quasi-Newton.  Everything else
uses joint Newton-Raphson on (theta, fixed effects).

``theta`` always has the layout (beta..., delta).
"""
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, log_ndtr, ndtri

from .errors import IdentificationError, NoConvergenceError, NonexistenceError
from .formation import dyad_mask, link_prob_derivs, log_link_prob, triad_counts
from .graph import degree_sequence


# Picard sweeps before concentrate_A switches to Newton steps
PICARD_SWEEPS = 200


@dataclass
class JmlSettings:
    family: str = "logistic"
    estimate_delta: bool = False
    tol: float = 1e-10
    max_inner: int = 10_000
    max_outer: int = 500
    max_newton: int = 100
    theta_box: float = 20.0
    A_box: float = 20.0
    drop_degenerate: bool = False


@dataclass
class JmlFit:
    theta_hat: np.ndarray
    A_hat: np.ndarray
    loglik: float
    inner_iters: int
    outer_iters: int
    converged: bool
    family: str
    directed: bool
    estimate_delta: bool
    B_hat: np.ndarray = None
    players: np.ndarray = None
    dropped: list = field(default_factory=list)
    boundary: bool = False

    @property
    def beta(self):
        return self.theta_hat[:-1]

    @property
    def delta(self):
        return float(self.theta_hat[-1])

    def restrict(self, net, cov):
        """Subnetwork and covariates of the players used in the fit."""
        if self.players is None or len(self.players) == net.n:
            return net, cov
        from .formation import DyadCovariates
        idx = self.players
        return net.subnetwork(idx), DyadCovariates(cov.x[np.ix_(idx, idx)])

    def regressors(self, net, cov):
        return design_regressors(net, cov, self.estimate_delta)

    def index(self, net, cov):
        """Fitted index matrix on the fitted players (zero diagonal)."""
        net, cov = self.restrict(net, cov)
        x = self.regressors(net, cov)
        k = x.shape[2]
        z = x @ self.theta_hat[:k]
        b = self.B_hat if self.directed else self.A_hat
        z = z + self.A_hat[:, None] + b[None, :]
        np.fill_diagonal(z, 0.0)
        return z

    def to_dict(self):
        d = asdict(self)
        for key, v in d.items():
            if isinstance(v, np.ndarray):
                d[key] = v.tolist()
        return d


def design_regressors(net, cov, estimate_delta):
    """Regressor array (n, n, k'): covariates plus the triad count when delta is estimated."""
    x = cov.x
    if estimate_delta:
        x = np.concatenate([x, triad_counts(net)[:, :, None]], axis=2)
    return x


def _full_theta(theta, k, estimate_delta):
    theta = np.asarray(theta, dtype=np.float64)
    if theta.size == k + 1:
        return theta
    if theta.size == k:
        return np.append(theta, 0.0)
    raise ValueError(f"theta must have {k} or {k + 1} entries")


# ---------------------------------------------------------------------------
# existence
# ---------------------------------------------------------------------------

def degenerate_players(net):
    """Players whose fixed effect has no finite maximum likelihood estimate."""
    ds = degree_sequence(net)
    n = net.n
    bad = (ds.out_degree == 0) | (ds.out_degree == n - 1)
    if net.directed:
        bad |= (ds.in_degree == 0) | (ds.in_degree == n - 1)
    return np.flatnonzero(bad)


def prune_degenerate(net):
    """Iteratively drop degenerate players; returns kept indices."""
    keep = np.arange(net.n)
    sub = net
    while True:
        bad = degenerate_players(sub)
        if bad.size == 0 or sub.n - bad.size < 3:
            break
        mask = np.ones(sub.n, dtype=bool)
        mask[bad] = False
        keep = keep[mask]
        sub = net.subnetwork(keep)
    return keep


# ---------------------------------------------------------------------------
# concentrated logit (undirected)
# ---------------------------------------------------------------------------

def _logit_loglik(g, cu, A, iu, deg, ecu=None):
    # g, cu: outcomes and index offsets over the upper-triangle dyads iu;
    # sum_{i<j} G_ij (A_i + A_j) = deg' A
    lin = g @ cu + deg @ A
    if ecu is not None:
        eA = np.exp(A)
        with np.errstate(over="ignore"):
            s = np.sum(np.log1p(ecu * eA[iu[0]] * eA[iu[1]]))
        if np.isfinite(s):
            return float(lin - s)
    z = cu + A[iu[0]] + A[iu[1]]
    return float(lin - np.sum(np.logaddexp(0.0, z)))


def _phi_map(ec, A, deg):
    den = np.exp(-A)[None, :] + ec * np.exp(A)[:, None]
    r = np.sum(ec / den, axis=1)
    return np.log(deg) - np.log(r)


def _newton_A_step(c, A, deg, g, cu, iu, ecu, ll):
    """Damped Newton step on the (strictly concave) heterogeneity likelihood."""
    p = expit(c + A[:, None] + A[None, :])
    np.fill_diagonal(p, 0.0)
    w = p * (1.0 - p)
    M = w + np.diag(w.sum(axis=1))
    d = np.linalg.solve(M, deg - p.sum(axis=1))
    t = 1.0
    while True:
        A_new = A + t * d
        ll_new = _logit_loglik(g, cu, A_new, iu, deg, ecu)
        if ll_new >= ll - 1e-12 * abs(ll) or t < 1e-10:
            return A_new, ll_new
        t *= 0.5


def concentrate_A(net, cov, theta, tol=1e-10, max_iters=10_000, A0=None, return_iters=False):
    """Heterogeneity vector maximising the undirected logit likelihood at ``theta``.

    Solves A_i = ln G_i+ - ln sum_j e^{c_ij} / (e^{-A_j} + e^{c_ij + A_i}) with
    c_ij = x_ij' beta + delta T_ij by Picard iteration.  A sweep that lowers
    the likelihood is replaced by a damped step.  Picard contracts very slowly
    when the e^{c_ij} are tiny, so after ``PICARD_SWEEPS`` sweeps the remaining
    iterations are damped Newton steps; convergence is still declared on the
    fixed-point residual |A - phi(A)|.
    """
    if net.directed:
        raise ValueError("concentrate_A applies to undirected networks")
    bad = degenerate_players(net)
    if bad.size:
        raise NonexistenceError(f"fixed effects diverge for players with degree 0 or n-1: {bad.tolist()}", bad)
    k = cov.k
    theta = _full_theta(theta, k, True)
    c = cov.x @ theta[:k]
    if theta[k] != 0.0:
        c = c + theta[k] * triad_counts(net)
    G = net.adjacency.astype(np.float64)
    n = net.n
    deg = G.sum(axis=1)
    ec = np.exp(np.clip(c, -700, 700))
    np.fill_diagonal(ec, 0.0)
    iu = np.triu_indices(n, 1)
    g, cu = G[iu], c[iu]
    with np.errstate(over="ignore"):
        ecu = np.exp(cu)
    if A0 is None:
        q = deg / (n - 1)
        A = 0.5 * np.log(q / (1.0 - q)) - 0.5 * np.mean(cu)
    else:
        A = np.array(A0, dtype=np.float64)
    ll = _logit_loglik(g, cu, A, iu, deg, ecu)
    for it in range(1, max_iters + 1):
        if it > PICARD_SWEEPS:
            A, ll = _newton_A_step(c, A, deg, g, cu, iu, ecu, ll)
            if np.max(np.abs(_phi_map(ec, A, deg) - A)) <= tol:
                return (A, it) if return_iters else A
            continue
        A_new = _phi_map(ec, A, deg)
        ll_new = _logit_loglik(g, cu, A_new, iu, deg, ecu)
        step = 1.0
        while ll_new < ll - 1e-12 * abs(ll) and step > 1e-3:
            step *= 0.5
            A_try = A + step * (A_new - A)
            ll_new = _logit_loglik(g, cu, A_try, iu, deg, ecu)
            if ll_new >= ll - 1e-12 * abs(ll):
                A_new = A_try
        change = np.max(np.abs(A_new - A))
        A, ll = A_new, ll_new
        if change <= tol:
            return (A, it) if return_iters else A
    raise NoConvergenceError(f"heterogeneity fixed point not reached in {max_iters} sweeps", last=A)


def _fe_residual_norms(x, mask, directed):
    """Relative norm of each regressor after removing additive fixed effects."""
    n = x.shape[0]
    out = []
    for col in range(x.shape[2]):
        v = np.where(mask, x[:, :, col], 0.0)
        if directed:
            r = v.copy()
            rs, cs = mask.sum(1), mask.sum(0)
            tol = 1e-13 * (1.0 + np.abs(v).max())
            for _ in range(200):
                r = r - np.where(mask, (r.sum(1) / rs)[:, None], 0.0)
                cm = r.sum(0) / cs
                r = r - np.where(mask, cm[None, :], 0.0)
                if np.abs(cm).max() < tol and np.abs(r.sum(1) / rs).max() < tol:
                    break
        else:
            full = v + v.T
            M = (n - 2) * np.eye(n) + np.ones((n, n))
            a = np.linalg.solve(M, full.sum(1))
            r = np.where(mask, v - a[:, None] - a[None, :], 0.0)
        scale = np.sqrt(np.sum(v ** 2))
        out.append(np.sqrt(np.sum(r ** 2)) / scale if scale > 0 else 0.0)
    return np.array(out)


def _check_identified(x, mask, directed):
    norms = _fe_residual_norms(x, mask, directed)
    flat = np.flatnonzero(norms < 1e-8)
    if flat.size:
        raise IdentificationError(f"regressor column(s) {flat.tolist()} are absorbed by the fixed effects; "
                                  "the likelihood is flat in the corresponding coefficients")


def _fit_concentrated_logit(net, cov, theta0, s):
    x = design_regressors(net, cov, s.estimate_delta)
    k = cov.k
    mask = dyad_mask(net.n, False)
    _check_identified(x, mask, False)
    G = net.adjacency.astype(np.float64)
    iu = np.triu_indices(net.n, 1)
    g = G[iu]
    deg = G.sum(axis=1)
    kk = x.shape[2]
    state = {"A": None, "inner": 0}

    def objective(t):
        theta = np.append(t[:k], t[k] if s.estimate_delta else 0.0)
        A, iters = concentrate_A(net, cov, theta, s.tol, s.max_inner, A0=state["A"], return_iters=True)
        state["A"] = A
        state["inner"] += iters
        c = x @ t
        ll = _logit_loglik(g, c[iu], A, iu, deg)
        resid = np.where(mask, G - expit(c + A[:, None] + A[None, :]), 0.0)
        grad = np.einsum("ij,ijk->k", resid, x)
        return -ll, -grad

    t0 = np.zeros(kk) if theta0 is None else np.asarray(theta0, dtype=np.float64)[:kk]
    if theta0 is not None and t0.size < kk:
        t0 = np.append(t0, np.zeros(kk - t0.size))
    bounds = [(-s.theta_box, s.theta_box)] * kk
    res = minimize(objective, t0, jac=True, method="L-BFGS-B", bounds=bounds,
                   options={"maxiter": s.max_outer, "ftol": 1e-15, "gtol": 1e-9, "maxcor": 20})
    t = res.x
    theta = np.append(t[:k], t[k] if s.estimate_delta else 0.0)
    A = concentrate_A(net, cov, theta, s.tol, s.max_inner, A0=state["A"])
    ll = _logit_loglik(g, (x @ t)[iu], A, iu, deg)
    at_box = bool(np.any(np.abs(t) >= s.theta_box - 1e-8) or np.any(np.abs(A) >= s.A_box))
    return JmlFit(theta_hat=theta, A_hat=A, loglik=ll, inner_iters=state["inner"], outer_iters=int(res.nit),
                  converged=bool(res.success) or np.max(np.abs(res.jac)) <= 1e-6,
                  family="logistic", directed=False, estimate_delta=s.estimate_delta, boundary=at_box)


# ---------------------------------------------------------------------------
# joint Newton-Raphson (probit and/or directed)
# ---------------------------------------------------------------------------

def _loglik_derivs(G, z, family, mask):
    """Per-dyad log-likelihood, score and negative second derivative."""
    if family == "logistic":
        lp, lq = log_link_prob(z, family)
        p = expit(z)
        ll = np.where(G > 0, lp, lq)
        d1 = G - p
        w = p * (1.0 - p)
    else:
        lp, lq = log_ndtr(z), log_ndtr(-z)
        ll = np.where(G > 0, lp, lq)
        logphi = -0.5 * z * z - 0.5 * np.log(2.0 * np.pi)
        lam = np.where(G > 0, np.exp(logphi - lp), -np.exp(logphi - lq))
        d1 = lam
        w = lam * (lam + z)
    ll = np.where(mask, ll, 0.0)
    d1 = np.where(mask, d1, 0.0)
    w = np.where(mask, w, 0.0)
    return ll, d1, w


def _newton_system(x, d1, w, directed):
    """Gradient and negative Hessian in (theta, fixed effects)."""
    n, _, k = x.shape
    gt = np.einsum("ij,ijk->k", d1, x)
    Htt = np.einsum("ij,ijk,ijl->kl", w, x, x)
    if directed:
        g = np.concatenate([gt, d1.sum(1), d1.sum(0)])
        Hta = np.einsum("ij,ijk->ki", w, x)
        Htb = np.einsum("ij,ijk->kj", w, x)
        H = np.zeros((k + 2 * n, k + 2 * n))
        H[:k, :k] = Htt
        H[:k, k:k + n] = Hta
        H[:k, k + n:] = Htb
        H[k:k + n, k:k + n] = np.diag(w.sum(1))
        H[k + n:, k + n:] = np.diag(w.sum(0))
        H[k:k + n, k + n:] = w
        H[k + n:, k:k + n] = w.T
    else:
        ws = w + w.T
        d1s = d1 + d1.T
        g = np.concatenate([gt, d1s.sum(1)])
        H = np.zeros((k + n, k + n))
        H[:k, :k] = Htt
        H[:k, k:] = np.einsum("ij,ijk->ki", ws, (x + x.transpose(1, 0, 2)) / 2.0)
        H[k:, k:] = np.diag(ws.sum(1)) + ws
    H[k:, :k] = H[:k, k:].T
    return g, H


def _fit_newton(net, cov, theta0, s):
    n = net.n
    directed = net.directed
    x = design_regressors(net, cov, s.estimate_delta)
    k = cov.k
    kk = x.shape[2]
    mask = dyad_mask(n, directed)
    _check_identified(x, mask, directed)
    G = net.adjacency.astype(np.float64)
    ds = degree_sequence(net)
    q_out = np.clip(ds.out_degree / (n - 1), 1e-3, 1 - 1e-3)
    q_in = np.clip(ds.in_degree / (n - 1), 1e-3, 1 - 1e-3)
    if s.family == "probit":
        a, b = ndtri(q_out) / 2.0, ndtri(q_in) / 2.0
    else:
        a, b = np.log(q_out / (1 - q_out)) / 2.0, np.log(q_in / (1 - q_in)) / 2.0
    t = np.zeros(kk) if theta0 is None else np.resize(np.asarray(theta0, dtype=np.float64), kk)
    if directed:
        params = np.concatenate([t, a, b - b[-1]])
        free = np.ones(kk + 2 * n, dtype=bool)
        free[-1] = False                # pin b_{n-1} = 0
    else:
        params = np.concatenate([t, a])
        free = np.ones(kk + n, dtype=bool)

    def unpack(p):
        th = p[:kk]
        A = p[kk:kk + n]
        B = p[kk + n:] if directed else A
        return th, A, B

    def evaluate(p):
        th, A, B = unpack(p)
        z = x @ th + A[:, None] + B[None, :]
        ll, d1, w = _loglik_derivs(G, z, s.family, mask)
        return float(ll.sum()), d1, w

    ll, d1, w = evaluate(params)
    converged = False
    for it in range(1, s.max_newton + 1):
        g, H = _newton_system(x, d1, w, directed)
        gf = g[free]
        Hf = H[np.ix_(free, free)]
        try:
            step = np.linalg.solve(Hf, gf)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(Hf, gf, rcond=None)[0]
        lam = 1.0
        while True:
            trial = params.copy()
            trial[free] += lam * step
            ll_t, d1_t, w_t = evaluate(trial)
            if np.isfinite(ll_t) and ll_t >= ll - 1e-10 * abs(ll):
                break
            lam *= 0.5
            if lam < 1e-10:
                raise NoConvergenceError("Newton line search failed", last=params)
        params, ll, d1, w = trial, ll_t, d1_t, w_t
        if np.max(np.abs(lam * step)) < 1e-10 or np.max(np.abs(gf)) < 1e-10:
            g, _ = _newton_system(x, d1, w, directed)
            if np.max(np.abs(g[free])) < 1e-7:
                converged = True
                break
    if not converged:
        raise NoConvergenceError(f"joint Newton did not converge in {s.max_newton} iterations", last=params)
    th, A, B = unpack(params)
    if directed:
        # symmetric normalisation: equal mean sender and receiver effects
        shift = (A.mean() - B.mean()) / 2.0
        A, B = A - shift, B + shift
    theta = np.append(th[:k], th[k] if s.estimate_delta else 0.0)
    at_box = bool(np.any(np.abs(A) >= s.A_box) or (directed and np.any(np.abs(B) >= s.A_box)))
    return JmlFit(theta_hat=theta, A_hat=A, B_hat=B if directed else None, loglik=ll, inner_iters=it,
                  outer_iters=it, converged=converged, family=s.family, directed=directed,
                  estimate_delta=s.estimate_delta, boundary=at_box)


def jml_estimate(net, cov, theta_init=None, settings=None):
    """Joint maximum likelihood estimate of (theta, heterogeneity)."""
    s = settings or JmlSettings()
    players = np.arange(net.n)
    dropped = []
    bad = degenerate_players(net)
    if bad.size:
        if not s.drop_degenerate:
            raise NonexistenceError(f"fixed effects diverge for players with extreme degree: {bad.tolist()}", bad)
        players = prune_degenerate(net)
        dropped = sorted(set(range(net.n)) - set(players.tolist()))
        if degenerate_players(net.subnetwork(players)).size:
            raise NonexistenceError("no non-degenerate subnetwork remains after dropping players", dropped)
    sub = net if len(players) == net.n else net.subnetwork(players)
    from .formation import DyadCovariates
    subcov = cov if len(players) == net.n else DyadCovariates(cov.x[np.ix_(players, players)])
    if not net.directed and s.family == "logistic":
        fit = _fit_concentrated_logit(sub, subcov, theta_init, s)
    else:
        fit = _fit_newton(sub, subcov, theta_init, s)
    fit.players = players
    fit.dropped = dropped
    return fit


# ---------------------------------------------------------------------------
# local geometry of the likelihood at a fit
# ---------------------------------------------------------------------------

class FitGeometry:
    """Fisher information and second-order objects at a JML fit.

    Observations are the dyads in ``mask``; the index of observation (i, j)
    loads on ``x[i, j]`` and the fixed effects ``sidx[i]`` and ``ridx[j]``.
    ``C`` is the Moore-Penrose inverse of the expected information, so
    ``Q(e, f) = D_e' C D_f`` is the first-order covariance of fitted indices.
    """

    def __init__(self, z, x, family, directed):
        n = z.shape[0]
        self.n = n
        self.directed = directed
        self.family = family
        self.x = x
        self.k = x.shape[2]
        self.mask = dyad_mask(n, directed)
        p, dp, d2p = link_prob_derivs(z, family)
        p1 = p * (1.0 - p)
        m = self.mask
        self.z = z
        self.p = np.where(m, p, 0.0)
        self.dp = np.where(m, dp, 0.0)
        self.d2p = np.where(m, d2p, 0.0)
        self.p1 = np.where(m, p1, 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            self.H = np.where(m, dp / p1, 0.0)
        self.rho = self.H * self.dp
        self.sidx = np.arange(n)
        self.ridx = np.arange(n) + (n if directed else 0)
        self.nfe = 2 * n if directed else n
        K = self._information()
        self.K = K
        self.C = np.linalg.pinv(K, rcond=1e-12, hermitian=True)
        k = self.k
        self.Ctt = self.C[:k, :k]
        self.Ctf = self.C[:k, k:]
        self.Cff = self.C[k:, k:]

    @classmethod
    def from_fit(cls, fit, net, cov):
        net, cov = fit.restrict(net, cov)
        x = fit.regressors(net, cov)
        return cls(fit.index(net, cov), x, fit.family, fit.directed)

    def _information(self):
        x, r, k, n = self.x, self.rho, self.k, self.n
        rs = r if self.directed else r + r.T
        K = np.zeros((k + self.nfe, k + self.nfe))
        K[:k, :k] = np.einsum("ij,ijk,ijl->kl", r, x, x)
        if self.directed:
            K[:k, k:k + n] = np.einsum("ij,ijk->ki", r, x)
            K[:k, k + n:] = np.einsum("ij,ijk->kj", r, x)
            K[k:k + n, k:k + n] = np.diag(r.sum(1))
            K[k + n:, k + n:] = np.diag(r.sum(0))
            K[k:k + n, k + n:] = r
            K[k + n:, k:k + n] = r.T
        else:
            # dyad (i, j), i < j, loads on both A_i and A_j
            K[:k, k:] = np.einsum("ij,ijk->ki", r, x) + np.einsum("ji,jik->ki", r, x)
            K[k:, k:] = np.diag(rs.sum(1)) + rs
        K[k:, :k] = K[:k, k:].T
        return K

    # -- products with D, D' -------------------------------------------------
    def Dt(self, v):
        """D' v for an observation-indexed matrix ``v`` (zero off the mask)."""
        v = np.where(self.mask, v, 0.0)
        t = np.einsum("ij,ijk->k", v, self.x)
        if self.directed:
            return np.concatenate([t, v.sum(1), v.sum(0)])
        return np.concatenate([t, v.sum(1) + v.sum(0)])

    def D(self, c):
        """D c as an n x n matrix (masked)."""
        k = self.k
        z = self.x @ c[:k]
        fe = c[k:]
        z = z + fe[self.sidx][:, None] + fe[self.ridx][None, :]
        return np.where(self.mask, z, 0.0)

    def q_apply(self, v):
        """Q v = D C D' v."""
        return self.D(self.C @ self.Dt(v))

    def project(self, chi):
        """rho-weighted least-squares projection of ``chi`` on the columns of D."""
        return self.q_apply(self.rho * chi)

    def q_pair(self, a_rows, b_cols, c_rows, d_cols, cov=None):
        """Q((a, b), (c, d)) for broadcastable index arrays.

        ``cov`` replaces ``C`` by another parameter covariance (for example
        :meth:`sandwich`).
        """
        x = self.x
        xab = x[a_rows, b_cols]
        xcd = x[c_rows, d_cols]
        s, r = self.sidx, self.ridx
        k = self.k
        C = self.C if cov is None else cov
        Ctt, Ctf, Cff = C[:k, :k], C[:k, k:], C[k:, k:]
        q = np.einsum("...k,kl,...l->...", xab, Ctt, xcd)
        q = q + np.einsum("...k,k...->...", xab, Ctf[:, s[c_rows]] + Ctf[:, r[d_cols]])
        q = q + np.einsum("...k,k...->...", xcd, Ctf[:, s[a_rows]] + Ctf[:, r[b_cols]])
        q = q + Cff[s[a_rows], s[c_rows]] + Cff[s[a_rows], r[d_cols]] + Cff[r[b_cols], s[c_rows]] + Cff[r[b_cols], r[d_cols]]
        return q

    def diag_q(self, cov=None):
        i, j = np.meshgrid(np.arange(self.n), np.arange(self.n), indexing="ij")
        return np.where(self.mask, self.q_pair(i, j, i, j, cov), 0.0)

    def cross_q(self, cov=None):
        """Q((i, j), (j, i)) for every ordered pair."""
        i, j = np.meshgrid(np.arange(self.n), np.arange(self.n), indexing="ij")
        off = ~np.eye(self.n, dtype=bool)
        return np.where(off, self.q_pair(i, j, j, i, cov), 0.0)

    def sandwich(self, omega):
        """Parameter covariance C + C M C when reciprocal scores covary.

        ``omega[i, j]`` is Cov(score_ij, score_ji) (symmetric, directed only);
        M = D' Omega D collects these within-dyad covariances.
        """
        if not self.directed:
            return self.C
        x, k, n = self.x, self.k, self.n
        w = np.where(self.mask, omega, 0.0)
        M = np.zeros_like(self.K)
        a, b = slice(k, k + n), slice(k + n, k + 2 * n)
        M[:k, :k] = np.einsum("ij,ijk,jil->kl", w, x, x)
        M[:k, a] = np.einsum("ij,ijk->kj", w, x)
        M[:k, b] = np.einsum("ij,ijk->ki", w, x)
        M[a, :k] = M[:k, a].T
        M[b, :k] = M[:k, b].T
        M[a, a] = w
        M[b, b] = w.T
        M[a, b] = np.diag(w.sum(1))
        M[b, a] = np.diag(w.sum(0))
        return self.C + self.C @ M @ self.C

    def cox_snell(self, diag_q=None):
        """Leading bias of the estimated parameters, -1/2 C D'(H p'' diag Q)."""
        if diag_q is None:
            diag_q = self.diag_q()
        return -0.5 * self.C @ self.Dt(self.H * self.d2p * diag_q)


def bias_corrected_theta(fit, net, cov, geometry=None):
    """theta-hat minus its estimated leading incidental-parameter bias."""
    geom = geometry or FitGeometry.from_fit(fit, net, cov)
    b = geom.cox_snell()[:geom.k]
    corrected = fit.theta_hat.copy()
    corrected[:geom.k] -= b
    return corrected, b
