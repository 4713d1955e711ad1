"""Nested pseudo-likelihood (NPL) estimation of the multi-activity game.

The reduced form is

    P(a_ik = 1) = N(sum_l lambda~_lk (G psi_l)_i + x_i' alpha~_k + gamma~_{k,b(i)}),

with beliefs psi solving psi = g(psi).  NPL alternates a per-activity
probit given the previous beliefs (Step 1) with one application of the
belief map at the new estimates (Step 2).

Structural parameters are tied to the reduced form by
Pi = B (I - Phi)^{-1}, with B = [Lambda; alpha; gamma] stacked by rows
and Pi = [Lambda~; alpha~; gamma~].  Column k of
Omega = [I - Phi; -B] satisfies [Pi, I] omega_k = 0, and exclusion
restrictions are written R_k omega_k = 0.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import block_diag
from scipy.optimize import least_squares, minimize, root
from scipy.special import log_ndtr, ndtr

from .errors import (ContractionViolationError, DomainError, IdentificationError,
                     NoConvergenceError, NonContractionError, SingularityError)
from .game import Beliefs, contraction_modulus, equilibrium_map

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass(frozen=True)
class ReducedFormParams:
    """Lambda~ (r x r), alpha~ (q x r) and block effects gamma~ (T x r)."""

    lambda_star: np.ndarray
    alpha_star: np.ndarray
    gamma_star: np.ndarray

    def __post_init__(self):
        lam = np.atleast_2d(np.asarray(self.lambda_star, dtype=np.float64))
        r = lam.shape[0]
        alpha = np.asarray(self.alpha_star, dtype=np.float64).reshape(-1, r)
        gamma = np.asarray(self.gamma_star, dtype=np.float64).reshape(-1, r)
        if lam.shape != (r, r):
            raise DomainError("lambda_star must be square")
        for name, v in (("lambda_star", lam), ("alpha_star", alpha), ("gamma_star", gamma)):
            if not np.all(np.isfinite(v)):
                raise DomainError(f"{name} must be finite")
        object.__setattr__(self, "lambda_star", lam)
        object.__setattr__(self, "alpha_star", alpha)
        object.__setattr__(self, "gamma_star", gamma)

    @property
    def r(self):
        return self.lambda_star.shape[0]

    @property
    def pi(self):
        """Stacked reduced form [Lambda~; alpha~; gamma~] ((r + q + T) x r)."""
        return np.vstack([self.lambda_star, self.alpha_star, self.gamma_star])

    @classmethod
    def from_pi(cls, pi, r, q):
        return cls(pi[:r], pi[r:r + q], pi[r + q:])

    def to_dict(self):
        return {"lambda_star": self.lambda_star.tolist(), "alpha_star": self.alpha_star.tolist(),
                "gamma_star": self.gamma_star.tolist()}


@dataclass(frozen=True)
class StructuralParams:
    """Simultaneity Phi (zero diagonal), peer effects Lambda, alpha and gamma."""

    Phi: np.ndarray
    Lambda: np.ndarray
    alpha: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        Phi = np.atleast_2d(np.asarray(self.Phi, dtype=np.float64))
        r = Phi.shape[0]
        if np.any(np.diag(Phi) != 0.0):
            raise DomainError("Phi must have a zero diagonal")
        object.__setattr__(self, "Phi", Phi)
        object.__setattr__(self, "Lambda", np.atleast_2d(np.asarray(self.Lambda, dtype=np.float64)))
        object.__setattr__(self, "alpha", np.asarray(self.alpha, dtype=np.float64).reshape(-1, r))
        object.__setattr__(self, "gamma", np.asarray(self.gamma, dtype=np.float64).reshape(-1, r))
        if abs(np.linalg.det(np.eye(r) - Phi)) < 1e-12:
            raise SingularityError("I - Phi is singular")

    @property
    def B(self):
        return np.vstack([self.Lambda, self.alpha, self.gamma])

    def omega(self):
        """Omega = [I - Phi; -Lambda; -alpha; -gamma]."""
        return np.vstack([np.eye(self.Phi.shape[0]) - self.Phi, -self.B])

    def reduced(self):
        inv = np.linalg.inv(np.eye(self.Phi.shape[0]) - self.Phi)
        return ReducedFormParams(self.Lambda @ inv, self.alpha @ inv, self.gamma @ inv)

    def to_dict(self):
        return {"Phi": self.Phi.tolist(), "Lambda": self.Lambda.tolist(),
                "alpha": self.alpha.tolist(), "gamma": self.gamma.tolist()}


def exclusion_restrictions(r, q, t, zeros):
    """Selection matrices R_k from zero restrictions.

    ``zeros[k]`` lists entries of omega_k forced to zero as ``("phi", l)``,
    ``("lambda", l)``, ``("alpha", j)`` or ``("gamma", b)`` (0-based).
    """
    offsets = {"phi": 0, "lambda": r, "alpha": 2 * r, "gamma": 2 * r + q}
    sizes = {"phi": r, "lambda": r, "alpha": q, "gamma": t}
    dim = 2 * r + q + t
    out = []
    for k in range(r):
        rows = []
        for name, idx in zeros[k]:
            if name not in offsets or not 0 <= idx < sizes[name]:
                raise DomainError(f"bad restriction {(name, idx)}")
            if name == "phi" and idx == k:
                raise DomainError("the diagonal of I - Phi is a normalisation, not a restriction")
            e = np.zeros(dim)
            e[offsets[name] + idx] = 1.0
            rows.append(e)
        out.append(np.array(rows).reshape(-1, dim))
    return out


def example_restrictions(q, t):
    """Two activities; y_2 enters equation 1, psi_1 does not, and equation 2
    excludes y_1 and psi_2."""
    return exclusion_restrictions(2, q, t, [[("lambda", 0)], [("phi", 0), ("lambda", 1)]])


@dataclass
class IdentificationReport:
    rank: list
    order: list
    rank_ok: list
    order_ok: list
    instrument_rank: int = None
    instrument_cols: int = None

    @property
    def identified(self):
        inst = self.instrument_rank is None or self.instrument_rank == self.instrument_cols
        return all(self.rank_ok) and all(self.order_ok) and inst

    def to_dict(self):
        return {"rank": self.rank, "order": self.order, "rank_ok": self.rank_ok,
                "order_ok": self.order_ok, "instrument_rank": self.instrument_rank,
                "instrument_cols": self.instrument_cols, "identified": self.identified}


def _omega_from(params):
    if isinstance(params, StructuralParams):
        return params.omega()
    if isinstance(params, ReducedFormParams):
        pi = params.pi
        return np.vstack([np.eye(params.r), -pi])
    return np.asarray(params, dtype=np.float64)


def identification_check(R, params, instruments=None, tol=1e-10):
    """Rank and order conditions per activity; never raises.

    ``params`` is a :class:`StructuralParams`, a :class:`ReducedFormParams`
    (then Omega = [I; -Pi], which has the rank of the structural Omega) or
    an explicit Omega.  ``instruments`` is the [G Psi, X] block whose full
    column rank is also checked.
    """
    om = _omega_from(params)
    r = om.shape[1]
    rank, order = [], []
    for Rk in R:
        Rk = np.atleast_2d(np.asarray(Rk, dtype=np.float64))
        order.append(int(np.linalg.matrix_rank(Rk, tol=tol)) if Rk.size else 0)
        rank.append(int(np.linalg.matrix_rank(Rk @ om, tol=tol)) if Rk.size else 0)
    rep = IdentificationReport(rank=rank, order=order, rank_ok=[x == r - 1 for x in rank],
                               order_ok=[h >= max(r - 1, 1) for h in order])
    if instruments is not None:
        Z = np.asarray(instruments, dtype=np.float64)
        rep.instrument_rank = int(np.linalg.matrix_rank(Z))
        rep.instrument_cols = Z.shape[1]
    return rep


def _unpack(theta, r, p):
    """Free entries of (I - Phi) off the diagonal, then B."""
    c = np.eye(r)
    off = ~np.eye(r, dtype=bool)
    c[off] = theta[:r * (r - 1)]
    return c, theta[r * (r - 1):].reshape(p, r)


def structural_recovery(reduced, R, tol=1e-10):
    """Structural parameters from the reduced form under R_k omega_k = 0.

    Each column of I - Phi solves min ||R_k [I; -Pi] c||^2 with c_k = 1,
    which is exact when the pattern is exactly identified.  With
    over-identifying restrictions the answer is refined by minimising
    ||Pi - B (I - Phi)^{-1}||_F over the restricted parameters.
    """
    rep = identification_check(R, reduced, tol=tol)
    # estimated reduced forms satisfy over-identifying restrictions only
    # approximately, which raises the rank above r - 1; too low a rank is fatal
    r = reduced.r
    if any(k < r - 1 for k in rep.rank) or not all(rep.order_ok):
        raise IdentificationError(f"rank/order conditions fail: {rep.to_dict()}")
    pi = reduced.pi
    p = pi.shape[0]
    W = np.vstack([np.eye(r), -pi])
    C = np.eye(r)
    for k in range(r):
        M = np.atleast_2d(R[k]) @ W
        free = [l for l in range(r) if l != k]
        sol, *_ = np.linalg.lstsq(M[:, free], -M[:, k], rcond=None)
        C[free, k] = sol
    B = pi @ C
    over = any(np.atleast_2d(R[k]).shape[0] > r - 1 for k in range(r))
    if over:
        # zero the restricted entries and refine by minimum distance
        mask = np.ones((2 * r + (p - r), r), dtype=bool)
        for k in range(r):
            for row in np.atleast_2d(R[k]):
                nz = np.flatnonzero(row)
                if nz.size == 1:
                    mask[nz[0], k] = False
        off = ~np.eye(r, dtype=bool)
        cmask, bmask = mask[:r][off], mask[r:].ravel()
        x0 = np.concatenate([C[off], B.ravel()])
        keep = np.concatenate([cmask, bmask])

        def resid(z):
            full = np.zeros_like(x0)
            full[keep] = z
            c, b = _unpack(full, r, p)
            return (pi - b @ np.linalg.inv(c)).ravel()

        x0[~keep] = 0.0
        fit = least_squares(resid, x0[keep], xtol=1e-15, ftol=1e-15, gtol=1e-15)
        full = np.zeros_like(x0)
        full[keep] = fit.x
        C, B = _unpack(full, r, p)
    if abs(np.linalg.det(C)) < 1e-12:
        raise SingularityError("I - Phi is singular at the recovered parameters")
    Phi = np.eye(r) - C
    np.fill_diagonal(Phi, 0.0)
    q = reduced.alpha_star.shape[0]
    return StructuralParams(Phi, B[:r], B[r:r + q], B[r + q:])


@dataclass
class NplSettings:
    tol: float = 1e-8
    max_iters: int = 200
    max_drops: int = 5
    gtol: float = 1e-8


@dataclass
class NplTrace:
    psi: list = field(default_factory=list)
    xi: list = field(default_factory=list)
    loglik: list = field(default_factory=list)
    step: list = field(default_factory=list)
    converged: bool = False

    def to_dict(self):
        return {"loglik": self.loglik, "step": self.step, "converged": self.converged,
                "iterations": len(self.loglik)}


def _probit_nll(zeta, Z, a):
    q = Z @ zeta
    s = 2.0 * a - 1.0
    lp = log_ndtr(s * q)
    mills = np.exp(-0.5 * q * q - _LOG_SQRT_2PI - lp)
    return -float(np.sum(lp)), -Z.T @ (s * mills)


def _probit_newton(zeta, Z, a, steps=5, gtol=1e-8):
    """Polish a quasi-Newton solution with exact Newton steps."""
    for _ in range(steps):
        f, g = _probit_nll(zeta, Z, a)
        if np.max(np.abs(g)) <= gtol:
            break
        q = Z @ zeta
        s = 2.0 * a - 1.0
        m = np.exp(-0.5 * q * q - _LOG_SQRT_2PI - log_ndtr(s * q))
        w = m * (m + s * q)
        H = Z.T @ (Z * w[:, None])
        zeta = zeta - np.linalg.solve(H, g)
    return zeta


def probit_fit(Z, a, zeta0=None, gtol=1e-8):
    """Probit maximum likelihood by BFGS with an analytic score."""
    zeta0 = np.zeros(Z.shape[1]) if zeta0 is None else zeta0
    res = minimize(_probit_nll, zeta0, args=(Z, a), jac=True, method="BFGS",
                   options={"gtol": gtol, "maxiter": 2000})
    zeta = _probit_newton(res.x, Z, a, gtol=gtol)
    f, g = _probit_nll(zeta, Z, a)
    return zeta, -f, float(np.max(np.abs(g)))


def _stack_blocks(nets):
    """Block-diagonal interaction matrix and block labels."""
    mats = [n if isinstance(n, np.ndarray) else n.adjacency for n in nets]
    G = block_diag(*[np.asarray(m, dtype=np.float64) for m in mats])
    labels = np.concatenate([np.full(m.shape[0], b) for b, m in enumerate(mats)])
    return G, labels


def step1_design(GPsi, X, labels):
    L = (labels[:, None] == np.arange(labels.max() + 1)[None, :]).astype(np.float64)
    return np.hstack([GPsi, X, L])


def npl_run(nets, X, actions, psi0=None, settings=None):
    """NPL alternation on block-diagonal networks.

    ``nets`` are per-block adjacency matrices (or :class:`Network` objects)
    used as the interaction operator as given; ``X`` is n x q and
    ``actions`` n x r binary.  ``psi0`` is an n x r array or one of
    "observed" (default, psi0 = actions) and "marginal" (activity means).
    Returns (reduced form, beliefs, trace).
    """
    settings = settings or NplSettings()
    G, labels = _stack_blocks(nets)
    a = np.asarray(actions, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64).reshape(a.shape[0], -1)
    n, r = a.shape
    q = X.shape[1]
    if G.shape[0] != n:
        raise DomainError("actions and networks disagree on the number of players")
    if not np.all((a == 0) | (a == 1)):
        raise DomainError("actions must be binary")
    if psi0 is None or isinstance(psi0, str):
        psi0 = psi0 or "observed"
        if psi0 == "observed":
            # each player's own action frequency; a constant start makes the
            # G psi columns collinear with one another
            psi = a.copy()
        elif psi0 == "marginal":
            psi = np.tile(a.mean(0), (n, 1))
        else:
            raise DomainError(f"unknown psi0 rule {psi0!r}")
    else:
        psi = np.asarray(psi0, dtype=np.float64)
    if psi.shape != (n, r) or np.any(psi < 0) or np.any(psi > 1):
        raise DomainError("psi0 must be an n x r array in [0, 1]")
    fams = ("probit",) * r
    trace = NplTrace()
    zetas = [None] * r
    drops = 0
    for it in range(settings.max_iters):
        Z = step1_design(G @ psi, X, labels)
        if np.linalg.matrix_rank(Z) < Z.shape[1]:
            raise IdentificationError(f"Step 1 design is rank deficient at sweep {it}")
        ll = 0.0
        for k in range(r):
            zetas[k], llk, _ = probit_fit(Z, a[:, k], zetas[k], settings.gtol)
            ll += llk
        Xi = np.column_stack(zetas)
        lam = Xi[:r]
        w_tilde = Z[:, r:] @ Xi[r:]
        psi_new = equilibrium_map(psi, G, lam, w_tilde, fams)
        step = float(np.max(np.abs(psi_new - psi)))
        # a sweep counts against convergence when the belief step fails to
        # shrink; this catches steady likelihood falls and two-cycles alike
        if trace.step and step > settings.tol and step >= trace.step[-1] * (1.0 - 1e-6):
            drops += 1
        else:
            drops = 0
        trace.psi.append(psi_new)
        trace.xi.append(Xi)
        trace.loglik.append(ll)
        trace.step.append(step)
        psi = psi_new
        if drops >= settings.max_drops:
            raise NonContractionError(f"belief step did not shrink in {drops} consecutive sweeps",
                                      trace=trace)
        if step <= settings.tol:
            trace.converged = True
            break
    else:
        raise NoConvergenceError(f"NPL did not converge in {settings.max_iters} sweeps", last=trace)
    red = ReducedFormParams(Xi[:r], Xi[r:r + q], Xi[r + q:])
    return red, Beliefs(psi), trace


def npl_fixed_point_residuals(nets, X, actions, reduced, beliefs):
    """(max |psi - g(psi)|, max |Step 1 score|) at a candidate NPL fixed point."""
    G, labels = _stack_blocks(nets)
    a = np.asarray(actions, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64).reshape(a.shape[0], -1)
    psi = beliefs.psi
    Z = step1_design(G @ psi, X, labels)
    Xi = reduced.pi
    r = reduced.r
    g = equilibrium_map(psi, G, Xi[:r], Z[:, r:] @ Xi[r:], ("probit",) * r)
    score = max(float(np.max(np.abs(_probit_nll(Xi[:, k], Z, a[:, k])[1]))) for k in range(r))
    return float(np.max(np.abs(g - psi))), score


def solve_beliefs(G, reduced, X, labels, tol=1e-12, max_iters=10_000, force=False,
                  method="iterate"):
    """Equilibrium beliefs of the reduced-form game.

    ``method="iterate"`` applies the belief map until it settles and needs
    the contraction bound unless ``force``; ``"newton"`` solves the
    index equation q = G F(q) Lambda~ + W~ with a Jacobian-based root
    finder, which also finds equilibria of non-contracting maps.
    """
    r = reduced.r
    fams = ("probit",) * r
    lam = reduced.lambda_star
    kappa = contraction_modulus(G, lam, fams)
    if kappa >= 1.0 and not force:
        raise ContractionViolationError(f"belief map modulus bound {kappa:.4f} >= 1")
    L = (labels[:, None] == np.arange(labels.max() + 1)[None, :]).astype(np.float64)
    w_tilde = X @ reduced.alpha_star + L @ reduced.gamma_star
    n = G.shape[0]
    psi = np.full((n, r), 0.5)
    if method == "iterate":
        for _ in range(max_iters):
            new = equilibrium_map(psi, G, lam, w_tilde, fams)
            if np.max(np.abs(new - psi)) <= tol:
                return new
            psi = new
        raise NoConvergenceError("belief iteration did not converge", last=psi)
    if method != "newton":
        raise DomainError(f"unknown method {method!r}")
    # solve q = G F(q) Lambda~ + W~ in the unbounded index space
    K = np.kron(lam.T, G)
    w = w_tilde.ravel(order="F")

    def fun(q):
        return q - K @ ndtr(q) - w

    def jac(q):
        return np.eye(n * r) - K * (np.exp(-0.5 * q * q) / np.sqrt(2.0 * np.pi))[None, :]

    sol = root(fun, w, jac=jac, method="hybr", options={"xtol": 1e-14})
    psi = ndtr(sol.x).reshape((n, r), order="F")
    if np.max(np.abs(psi - equilibrium_map(psi, G, lam, w_tilde, fams))) > max(tol, 1e-10):
        raise NoConvergenceError("Newton belief solve did not converge", last=psi)
    return psi


@dataclass
class NplData:
    nets: list
    X: np.ndarray
    actions: np.ndarray
    psi: np.ndarray
    labels: np.ndarray


def simulate_npl_data(reduced, blocks, size, link_prob, seed, sigma=None, normalize=True,
                      force=False, method="iterate"):
    """Draw block networks, covariates and actions from the reduced-form game.

    Each block is an undirected Erdos-Renyi graph with ``link_prob``; its
    row-normalised adjacency (raw with ``normalize=False``) is the
    interaction operator.  x_i ~ N(0, 1) for each of the q columns.
    Shocks are N(0, sigma) with unit variances (default identity).
    """
    rng = np.random.default_rng(seed)
    r = reduced.r
    q = reduced.alpha_star.shape[0]
    if reduced.gamma_star.shape[0] != blocks:
        raise DomainError("gamma_star needs one row per block")
    nets = []
    for _ in range(blocks):
        u = np.triu(rng.random((size, size)) < link_prob, 1)
        g = (u | u.T).astype(np.float64)
        if normalize:
            d = g.sum(1)
            g = g / np.where(d > 0, d, 1.0)[:, None]
        nets.append(g)
    G, labels = _stack_blocks(nets)
    n = G.shape[0]
    X = rng.standard_normal((n, q))
    psi = solve_beliefs(G, reduced, X, labels, force=force, method=method)
    sigma = np.eye(r) if sigma is None else np.asarray(sigma, dtype=np.float64)
    if not np.allclose(np.diag(sigma), 1.0):
        raise DomainError("shock variances must be one")
    eps = rng.standard_normal((n, r)) @ np.linalg.cholesky(sigma).T
    L = (labels[:, None] == np.arange(blocks)[None, :]).astype(np.float64)
    index = G @ psi @ reduced.lambda_star + X @ reduced.alpha_star + L @ reduced.gamma_star
    actions = (index - eps > 0.0).astype(np.uint8)
    return NplData(nets, X, actions, psi, labels)
