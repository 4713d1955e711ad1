"""Dyadic link formation: link indices, probabilities, likelihood and simulation.

A link from i to j forms when

    delta * sum_k G_ik G_jk + X_ij' beta + A_i + A_j - nu_ij >= 0,

with logistic or standard normal shocks.  In directed networks the pair
(nu_ij, nu_ji) is bivariate normal with correlation ``rho``.
"""
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_expit, log_ndtr, ndtr

from .bivariate import bvn_cdf
from .errors import DomainError, NoConvergenceError
from .graph import Network

FAMILIES = ("logistic", "probit")


class NonFiniteLikelihoodWarning(RuntimeWarning):
    """A link probability is numerically 0 or 1 but contradicts the data."""


@dataclass(frozen=True)
class DyadCovariates:
    """Dyad covariates ``x[i, j, :]`` (n x n x k)."""

    x: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        if x.ndim == 2:
            x = x[:, :, None]
        if x.ndim != 3 or x.shape[0] != x.shape[1]:
            raise ValueError("dyad covariates must have shape (n, n, k)")
        off = ~np.eye(x.shape[0], dtype=bool)
        if not np.all(np.isfinite(x[off])):
            raise ValueError("dyad covariates must be finite off the diagonal")
        x = x.copy()
        x[np.arange(x.shape[0]), np.arange(x.shape[0])] = 0.0
        x.setflags(write=False)
        object.__setattr__(self, "x", x)

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def k(self):
        return self.x.shape[2]

    @classmethod
    def product(cls, xi):
        """X_ij = X_i * X_j for a vector of player attributes."""
        xi = np.asarray(xi, dtype=np.float64)
        return cls(np.outer(xi, xi)[:, :, None])

    @classmethod
    def zeros(cls, n, k=1):
        return cls(np.zeros((n, n, k)))


@dataclass(frozen=True)
class FormationParams:
    beta: np.ndarray
    delta: float = 0.0
    A: np.ndarray = field(default=None)
    rho: float = 0.0
    family: str = "probit"

    def __post_init__(self):
        object.__setattr__(self, "beta", np.atleast_1d(np.asarray(self.beta, dtype=np.float64)))
        if self.A is None:
            raise ValueError("heterogeneity vector A is required")
        A = np.asarray(self.A, dtype=np.float64)
        if not np.all(np.isfinite(A)):
            raise ValueError("A entries must be finite")
        object.__setattr__(self, "A", A)
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}")
        if not -1.0 < self.rho < 1.0:
            raise DomainError("rho must lie in (-1, 1)")


def triad_counts(net):
    """Common out-neighbour counts T_ij = sum_k G_ik G_jk (zero diagonal)."""
    a = net.adjacency.astype(np.float64)
    t = a @ a.T
    np.fill_diagonal(t, 0.0)
    return t


def index_matrix(net, cov, params):
    """All link indices z_ij as an n x n matrix with zero diagonal."""
    z = cov.x @ params.beta + params.A[:, None] + params.A[None, :]
    if params.delta != 0.0:
        z = z + params.delta * triad_counts(net)
    np.fill_diagonal(z, 0.0)
    return z


def link_index(i, j, net, cov, params):
    if i == j:
        raise DomainError("link index undefined for i == j")
    a = net.adjacency
    common = float(np.dot(a[i].astype(np.float64), a[j]))
    return params.delta * common + float(cov.x[i, j] @ params.beta) + params.A[i] + params.A[j]


def link_prob(z, family):
    """Link probability F(z) for the logistic or standard normal family."""
    if family == "logistic":
        return expit(z)
    if family == "probit":
        return ndtr(z)
    raise ValueError(f"unknown family {family!r}")


def link_prob_derivs(z, family):
    """Return (p, dp/dz, d2p/dz2)."""
    if family == "logistic":
        p = expit(z)
        d1 = p * (1.0 - p)
        return p, d1, d1 * (1.0 - 2.0 * p)
    if family == "probit":
        d1 = np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)
        return ndtr(z), d1, -z * d1
    raise ValueError(f"unknown family {family!r}")


def log_link_prob(z, family):
    """Stable (log F(z), log(1 - F(z)))."""
    if family == "logistic":
        return log_expit(z), log_expit(-z)
    if family == "probit":
        return log_ndtr(z), log_ndtr(-z)
    raise ValueError(f"unknown family {family!r}")


def reciprocal_prob(g1, g2, rho):
    """P(nu_1 <= g1, nu_2 <= g2) for unit normals with correlation ``rho``."""
    return bvn_cdf(g1, g2, rho)


def dyad_mask(n, directed):
    """Boolean mask of the dyads entering the likelihood."""
    if directed:
        return ~np.eye(n, dtype=bool)
    return np.triu(np.ones((n, n), dtype=bool), 1)


def conditional_log_likelihood(net, cov, params, mask=None):
    """Sum over dyads of G ln p + (1 - G) ln(1 - p).

    Returns ``-inf`` (with a :class:`NonFiniteLikelihoodWarning`) when a
    probability underflows to 0 or 1 against the observed outcome.
    """
    z = index_matrix(net, cov, params)
    if mask is None:
        mask = dyad_mask(net.n, net.directed)
    g = net.adjacency[mask].astype(bool)
    lp, lq = log_link_prob(z[mask], params.family)
    ll = float(np.sum(np.where(g, lp, lq)))
    if not np.isfinite(ll):
        warnings.warn("link probability numerically 0 or 1 for an observed outcome",
                      NonFiniteLikelihoodWarning, stacklevel=2)
        return float("-inf")
    return ll


def draw_shocks(n, directed, rho, family, rng):
    """Dyad shocks nu (n x n).  Undirected draws use the upper triangle."""
    if family == "logistic":
        if directed and rho != 0.0:
            raise DomainError("correlated dyad shocks are only defined for the probit family")
        nu = rng.logistic(size=(n, n))
    elif directed and rho != 0.0:
        e1 = rng.standard_normal((n, n))
        e2 = rng.standard_normal((n, n))
        iu = np.triu_indices(n, 1)
        nu = np.zeros((n, n))
        nu[iu] = e1[iu]
        nu.T[iu] = rho * e1[iu] + np.sqrt(1.0 - rho * rho) * e2[iu]
    else:
        nu = rng.standard_normal((n, n))
    if not directed:
        nu = np.triu(nu, 1)
        nu = nu + nu.T
    np.fill_diagonal(nu, 0.0)
    return nu


def _threshold(z, nu, directed):
    g = (z - nu >= 0.0).astype(np.uint8)
    np.fill_diagonal(g, 0)
    if not directed:
        g = np.triu(g, 1)
        g = g | g.T
    return g


def simulate_network(n, cov, params, seed, directed=False, max_iters=100):
    """Draw a network from the link rule.

    With ``delta != 0`` the shocks are held fixed and the rule is iterated
    from the ``delta = 0`` draw until it reproduces itself.
    """
    if cov.n != n or params.A.shape != (n,):
        raise ValueError("covariates and heterogeneity must match n")
    rng = np.random.default_rng(seed)
    nu = draw_shocks(n, directed, params.rho, params.family, rng)
    base = cov.x @ params.beta + params.A[:, None] + params.A[None, :]
    g = _threshold(base, nu, directed)
    if params.delta == 0.0:
        return Network(g, directed)
    for _ in range(max_iters):
        a = g.astype(np.float64)
        t = a @ a.T
        g_new = _threshold(base + params.delta * t, nu, directed)
        if np.array_equal(g_new, g):
            return Network(g, directed)
        g = g_new
    raise NoConvergenceError(f"triadic link rule did not reach a fixed point in {max_iters} sweeps",
                             last=Network(g, directed))
