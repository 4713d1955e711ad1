"""Multi-activity network game with incomplete information.

Player i chooses intents y_i (r-vector); actions are a_ik = 1{y_ik > 0}.
With peer averages abar_il = sum_j G_ij a_jl / n_g over i's group,

    U_i = sum_k w_ik(.) (sum_l s_lk abar_il + w_ik - eps_ik) y_ik
          - 1/2 sum_{k,l} phi_lk y_ik y_il,

where ``w_ik(.)`` is the pluggable group-membership weight (default 1).
The first-order conditions give Y = Y Phi + G Psi Lambda + W - eps, with
reduced form Y = G Psi Lambda~ + W~ - eps~.  Beliefs psi_il = P(a_il = 1)
solve the fixed point psi = g(psi), g_m = F_m(q_m),
q_im = sum_l lambda~_lm sum_j G_ij psi_jl + w~_im.

Link formation is a transferable-utility game.  The expected marginal
utility of i from a link to j is (1/n_g) sum_{k,l} s_lk psi_jl y*_ik, with
y* the optimal intents without the link; a network is pairwise stable when
every present link has a nonnegative joint surplus and every absent link a
negative one.  The joint surplus has an exact potential
(:func:`indirect_potential`), so improvement paths cannot cycle.
"""
import csv
import io
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.special import expit, ndtr

from .errors import (ContractionViolationError, DomainError, NoConvergenceError, ScaleError,
                     SingularityError, StructuralError)
from .graph import Network

_SUP_DENSITY = {"probit": 1.0 / np.sqrt(2.0 * np.pi), "logit": 0.25}
MAX_ENUMERATE = 7


def shock_cdf(q, family):
    if family == "probit":
        return ndtr(q)
    if family == "logit":
        return expit(q)
    raise DomainError(f"unknown shock family {family!r}")


def shock_pdf(q, family):
    if family == "probit":
        return np.exp(-0.5 * q * q) / np.sqrt(2.0 * np.pi)
    if family == "logit":
        p = expit(q)
        return p * (1.0 - p)
    raise DomainError(f"unknown shock family {family!r}")


def draw_game_shocks(n, families, rng, size=None):
    """Independent eps_ik from F_k, shape (n, r) or (size, n, r)."""
    shape = (n,) if size is None else (size, n)
    out = np.empty(shape + (len(families),))
    for k, fam in enumerate(families):
        out[..., k] = rng.standard_normal(shape) if fam == "probit" else rng.logistic(size=shape)
    return out


def unit_weight(i, k, n_g, a_ik=None):
    return 1.0


@dataclass(frozen=True)
class GameSpec:
    """Parameters of the r-activity game on n players.

    ``groups[i]`` is the group label of player i (negative for none); links
    are allowed only within groups.  ``weight_fn(i, k, n_g, a_ik)`` returns
    the payoff weight of activity k for player i (``a_ik`` is ``None`` when
    only beliefs are available).
    """

    synergy: np.ndarray
    cost: np.ndarray
    w: np.ndarray
    families: tuple = None
    groups: np.ndarray = None
    weight_fn: object = field(default=unit_weight, compare=False)

    def __post_init__(self):
        s = np.atleast_2d(np.asarray(self.synergy, dtype=np.float64))
        c = np.atleast_2d(np.asarray(self.cost, dtype=np.float64))
        w = np.asarray(self.w, dtype=np.float64)
        if w.ndim == 1:
            w = w[:, None]
        r = s.shape[0]
        if s.shape != (r, r) or c.shape != (r, r) or w.shape[1] != r:
            raise DomainError("synergy, cost and w must agree in the activity count r")
        if np.any(np.diag(c) <= 0.0):
            raise DomainError("cost diagonal must be positive")
        if not np.allclose(c, c.T, rtol=0.0, atol=1e-14):
            raise DomainError("cost matrix must be symmetric")
        fams = tuple(self.families) if self.families is not None else ("probit",) * r
        if len(fams) != r or any(f not in _SUP_DENSITY for f in fams):
            raise DomainError(f"families must be {r} entries from {tuple(_SUP_DENSITY)}")
        n = w.shape[0]
        g = np.zeros(n, dtype=np.int64) if self.groups is None else np.asarray(self.groups)
        if g.shape != (n,):
            raise DomainError("groups must label every player")
        object.__setattr__(self, "synergy", s)
        object.__setattr__(self, "cost", c)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "families", fams)
        object.__setattr__(self, "groups", g)

    @property
    def r(self):
        return self.synergy.shape[0]

    @property
    def n(self):
        return self.w.shape[0]

    @property
    def simultaneity(self):
        """Phi[l, m] = -phi_lm / phi_mm off the diagonal, zero on it."""
        d = np.diag(self.cost)
        Phi = -self.cost / d[None, :]
        np.fill_diagonal(Phi, 0.0)
        return Phi

    @property
    def peer(self):
        """Lambda[l, m] = s_lm / phi_mm."""
        return self.synergy / np.diag(self.cost)[None, :]

    @property
    def w_bar(self):
        return self.w / np.diag(self.cost)[None, :]

    def group_sizes(self):
        """n_g for every player; raises if a player belongs to no group."""
        g = self.groups
        if np.any(g < 0):
            raise StructuralError(f"players outside every group: {np.flatnonzero(g < 0).tolist()}")
        _, inv, counts = np.unique(g, return_inverse=True, return_counts=True)
        return counts[inv].astype(np.float64)

    def weights(self, actions=None):
        """Payoff weights (n x r) from ``weight_fn``."""
        ng = self.group_sizes()
        if self.weight_fn is unit_weight:
            return np.ones((self.n, self.r))
        out = np.empty((self.n, self.r))
        for i in range(self.n):
            for k in range(self.r):
                a = None if actions is None else int(actions[i, k])
                out[i, k] = float(self.weight_fn(i, k, int(ng[i]), a))
        return out

    def check_network(self, net):
        if net.n != self.n:
            raise DomainError("network size does not match the game")
        g = self.groups
        self.group_sizes()
        a = net.adjacency
        if np.any(a & (g[:, None] != g[None, :])):
            raise StructuralError("links across groups are not allowed")

    def sup_density(self):
        return max(_SUP_DENSITY[f] for f in self.families)

    def to_config(self):
        return {"r": self.r, "s": self.synergy.tolist(), "phi": self.cost.tolist(),
                "w": self.w.tolist(), "families": list(self.families), "groups": self.groups.tolist()}

    @classmethod
    def from_config(cls, cfg):
        return cls(synergy=cfg["s"], cost=cfg["phi"], w=cfg["w"], families=cfg.get("families"),
                   groups=cfg.get("groups"))


@dataclass(frozen=True)
class Beliefs:
    psi: np.ndarray

    def __post_init__(self):
        psi = np.atleast_2d(np.asarray(self.psi, dtype=np.float64))
        if np.any(~np.isfinite(psi)) or np.any(psi < 0.0) or np.any(psi > 1.0):
            raise DomainError("beliefs must lie in [0, 1]")
        object.__setattr__(self, "psi", psi)

    def to_csv(self, sink=None):
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["player", "activity", "psi"])
        n, r = self.psi.shape
        for i in range(n):
            for k in range(r):
                wr.writerow([i + 1, k + 1, repr(float(self.psi[i, k]))])
        text = buf.getvalue()
        if sink is None:
            return text
        if hasattr(sink, "write"):
            sink.write(text)
        else:
            with open(sink, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, text):
        rows = list(csv.DictReader(io.StringIO(text)))
        n = max(int(r["player"]) for r in rows)
        m = max(int(r["activity"]) for r in rows)
        psi = np.full((n, m), np.nan)
        for r in rows:
            psi[int(r["player"]) - 1, int(r["activity"]) - 1] = float(r["psi"])
        if np.any(np.isnan(psi)):
            raise DomainError("belief table is incomplete")
        return cls(psi)


# ---------------------------------------------------------------------------
# utilities
# ---------------------------------------------------------------------------

def _peer_average(net, spec, x):
    """sum_j G_ij x_j / n_g."""
    return (net.adjacency.astype(np.float64) @ x) / spec.group_sizes()[:, None]


def utility(i, net, actions, intents, spec, shocks):
    """Realised utility of player i."""
    spec.check_network(net)
    a = np.asarray(actions, dtype=np.float64)
    y = np.asarray(intents, dtype=np.float64)
    eps = np.asarray(shocks, dtype=np.float64)
    abar = _peer_average(net, spec, a)[i]
    om = spec.weights(a)[i]
    payoff = np.sum(om * (abar @ spec.synergy + spec.w[i] - eps[i]) * y[i])
    cost = 0.5 * y[i] @ spec.cost @ y[i]
    return float(payoff - cost)


def marginal_utility(i, j, net_minus_ij, actions, intents, spec):
    """Utility gain of i from adding the link ij to ``net_minus_ij``."""
    if net_minus_ij.adjacency[i, j]:
        raise DomainError("link ij must be absent")
    spec.check_network(net_minus_ij.with_link(i, j, 1))
    a = np.asarray(actions, dtype=np.float64)
    y = np.asarray(intents, dtype=np.float64)
    ng = spec.group_sizes()[i]
    om = spec.weights(a)[i]
    return float(np.sum(om * (a[j] @ spec.synergy) * y[i]) / ng)


def reduced_form(spec):
    """(Lambda~, W~) with Lambda~ = Lambda (I - Phi)^-1 and W~ = W_bar (I - Phi)^-1."""
    r = spec.r
    M = np.eye(r) - spec.simultaneity
    if np.linalg.cond(M) > 1e12:
        raise SingularityError("I - Phi is singular")
    inv = np.linalg.inv(M)
    lam = spec.peer @ inv
    if np.max(np.abs(lam @ M - spec.peer)) > 1e-10 * max(1.0, np.max(np.abs(spec.peer))):
        raise SingularityError("I - Phi is too ill-conditioned for the reduced form")
    return lam, spec.w_bar @ inv


# ---------------------------------------------------------------------------
# Bayesian Nash equilibrium
# ---------------------------------------------------------------------------

def peer_operator(net, spec=None, normalization="row"):
    """Interaction matrix for the belief map: row-normalised, group-scaled or raw."""
    G = net.adjacency.astype(np.float64)
    if normalization == "row":
        d = G.sum(1)
        return G / np.where(d > 0, d, 1.0)[:, None]
    if normalization == "group":
        return G / spec.group_sizes()[:, None]
    if normalization == "none":
        return G
    raise DomainError(f"unknown normalization {normalization!r}")


def equilibrium_map(psi, G, lam_tilde, w_tilde, families):
    """g(psi): F_m(q_im), q = G psi Lambda~ + W~."""
    q = G @ psi @ lam_tilde + w_tilde
    out = np.empty_like(q)
    for m, fam in enumerate(families):
        out[:, m] = shock_cdf(q[:, m], fam)
    return out


def contraction_modulus(G, lam_tilde, families):
    """Smallest available Lipschitz bound of the belief map."""
    f = max(_SUP_DENSITY[x] for x in families)
    k1 = np.abs(lam_tilde).sum(0).max() * f * np.abs(G).sum(1).max()
    kinf = np.abs(lam_tilde).sum(1).max() * f * np.abs(G).sum(0).max()
    return float(min(k1, kinf))


@dataclass
class BneResult:
    beliefs: Beliefs
    iterations: int
    residual: float
    modulus: float


def bne_solve(net, spec, tol=1e-10, max_iters=10_000, psi0=None, normalization="row",
              force=False, return_info=False):
    """Fixed point psi = g(psi) by Picard iteration.

    Under the contraction bound the iteration stops once the a-posteriori
    error bound kappa |dpsi| / (1 - kappa) is below ``tol``, so solutions from
    any two starts agree within ``2 tol``.
    """
    spec.check_network(net)
    lam, wt = reduced_form(spec)
    G = peer_operator(net, spec, normalization)
    kappa = contraction_modulus(G, lam, spec.families)
    if kappa >= 1.0 and not force:
        raise ContractionViolationError(
            f"contraction bound violated: Lipschitz bound {kappa:.4f} >= 1 "
            f"(||Lambda~||_1 = {np.abs(lam).sum(0).max():.4f})")
    n, r = spec.n, spec.r
    psi = np.zeros((n, r)) if psi0 is None else np.broadcast_to(np.asarray(psi0, dtype=np.float64), (n, r)).copy()
    factor = kappa / (1.0 - kappa) if kappa < 1.0 else 1.0
    for it in range(1, max_iters + 1):
        new = equilibrium_map(psi, G, lam, wt, spec.families)
        step = float(np.max(np.abs(new - psi)))
        psi = new
        if factor * step <= tol or step == 0.0:
            res = float(np.max(np.abs(equilibrium_map(psi, G, lam, wt, spec.families) - psi)))
            out = BneResult(Beliefs(psi), it, res, kappa)
            return out if return_info else out.beliefs
    raise NoConvergenceError(f"belief iteration did not converge in {max_iters} steps", last=psi)


# ---------------------------------------------------------------------------
# potential of the realised game
# ---------------------------------------------------------------------------

def potential(net, actions, intents, spec, shocks):
    """Theta(G) = sum_i sum_k (sum_l s_lk sum_j G_ij a_jl a_ik + w_ik - eps_ik) y_ik."""
    a = np.asarray(actions, dtype=np.float64)
    y = np.asarray(intents, dtype=np.float64)
    eps = np.asarray(shocks, dtype=np.float64)
    G = net.adjacency.astype(np.float64)
    peer = (G @ a) @ spec.synergy              # [i, k] = sum_l s_lk sum_j G_ij a_jl
    return float(np.sum((peer * a + spec.w - eps) * y))


def potential_gain(i, j, actions, intents, spec):
    """Change of i's term in :func:`potential` when the link ij is added."""
    a = np.asarray(actions, dtype=np.float64)
    y = np.asarray(intents, dtype=np.float64)
    return float(np.sum((a[j] @ spec.synergy) * a[i] * y[i]))


# ---------------------------------------------------------------------------
# expected utilities, transfers and pairwise stability
# ---------------------------------------------------------------------------

def optimal_intents(net, spec, beliefs, shocks):
    """y*_i = phi^-1 c_i with c_ik = w_ik(.) (sum_l s_lk psibar_il + w_ik - eps_ik)."""
    spec.check_network(net)
    psibar = _peer_average(net, spec, beliefs.psi)
    c = spec.weights() * (psibar @ spec.synergy + spec.w - np.asarray(shocks, dtype=np.float64))
    return np.linalg.solve(spec.cost, c.T).T


def _link_increments(spec, beliefs):
    """D[i, j] = change of c_i when i links to j (n x n x r)."""
    om = spec.weights()
    ng = spec.group_sizes()
    inc = beliefs.psi @ spec.synergy                       # [j, k]
    return om[:, None, :] * inc[None, :, :] / ng[:, None, None]


def expected_marginal_utility(i, j, net, spec, beliefs, shocks):
    """(1/n_g) sum_{k,l} s_lk psi_jl y*_ik evaluated without the link ij."""
    base = net.with_link(i, j, 0)
    y = optimal_intents(base, spec, beliefs, shocks)
    return float(_link_increments(spec, beliefs)[i, j] @ y[i])


def link_surplus(net, spec, beliefs, shocks):
    """Joint surplus t_ij + t_ji of every dyad, evaluated without that link (n x n)."""
    y = optimal_intents(net, spec, beliefs, shocks)
    D = _link_increments(spec, beliefs)
    Dc = np.linalg.solve(spec.cost, D.reshape(-1, spec.r).T).T.reshape(D.shape)
    G = net.adjacency.astype(np.float64)
    # y*_i without ij = y*_i - G_ij phi^-1 D_ij
    t = np.einsum("ijk,ik->ij", D, y) - G * np.einsum("ijk,ijk->ij", D, Dc)
    t = t + t.T
    np.fill_diagonal(t, 0.0)
    return t


@dataclass
class TransferProfile:
    t: np.ndarray                      # t[i, j] = t^i_ij

    def formed(self):
        s = self.t + self.t.T
        g = (s >= 0.0).astype(np.uint8)
        np.fill_diagonal(g, 0)
        return g


def transfers(net, spec, beliefs, shocks):
    """t^i_ij: expected marginal utility of i from ij, without the link."""
    y = optimal_intents(net, spec, beliefs, shocks)
    D = _link_increments(spec, beliefs)
    Dc = np.linalg.solve(spec.cost, D.reshape(-1, spec.r).T).T.reshape(D.shape)
    G = net.adjacency.astype(np.float64)
    t = np.einsum("ijk,ik->ij", D, y) - G * np.einsum("ijk,ijk->ij", D, Dc)
    np.fill_diagonal(t, 0.0)
    return TransferProfile(t)


def payoff_with_transfers(i, net, actions, intents, spec, shocks, profile):
    """pi_i = U_i minus the transfers i pays on its formed links."""
    g = profile.formed()
    return utility(i, net, actions, intents, spec, shocks) - float(np.sum(profile.t[i] * g[i]))


def indirect_potential(net, spec, beliefs, shocks):
    """Exact potential of the joint link surplus.

    sum_i 1/2 c_i' phi^-1 c_i minus, for each link, 1/2 (D_ij' phi^-1 D_ij +
    D_ji' phi^-1 D_ji); its change from adding ij equals the joint surplus.
    """
    y = optimal_intents(net, spec, beliefs, shocks)
    c = y @ spec.cost
    D = _link_increments(spec, beliefs)
    Dc = np.linalg.solve(spec.cost, D.reshape(-1, spec.r).T).T.reshape(D.shape)
    quad = np.einsum("ijk,ijk->ij", D, Dc)
    G = np.triu(net.adjacency.astype(np.float64), 1)
    return float(0.5 * np.sum(c * y) - 0.5 * np.sum(G * (quad + quad.T)))


def _allowed_dyads(spec):
    g = spec.groups
    return [(i, j) for i, j in combinations(range(spec.n), 2) if g[i] == g[j] and g[i] >= 0]


def is_pairwise_stable(net, spec, beliefs, shocks=None):
    """True iff present links have surplus >= 0 and absent links surplus < 0."""
    eps = np.zeros((spec.n, spec.r)) if shocks is None else shocks
    t = link_surplus(net, spec, beliefs, eps)
    a = net.adjacency
    for i, j in _allowed_dyads(spec):
        if a[i, j] and t[i, j] < 0.0:
            return False
        if not a[i, j] and t[i, j] >= 0.0:
            return False
    return True


class _Enumerator:
    """Vectorised joint surplus over every network on the allowed dyads."""

    def __init__(self, spec, beliefs):
        n = spec.n
        if n > MAX_ENUMERATE:
            raise ScaleError(f"exhaustive enumeration is limited to n <= {MAX_ENUMERATE}")
        self.spec = spec
        self.dyads = _allowed_dyads(spec)
        m = len(self.dyads)
        codes = np.arange(2 ** m, dtype=np.int64)
        self.bits = ((codes[:, None] >> np.arange(m)) & 1).astype(np.float64)   # N x m
        G = np.zeros((2 ** m, n, n))
        for d, (i, j) in enumerate(self.dyads):
            G[:, i, j] = self.bits[:, d]
            G[:, j, i] = self.bits[:, d]
        self.G = G
        ng = spec.group_sizes()
        om = spec.weights()
        psibar = (G @ beliefs.psi) / ng[None, :, None]                 # N x n x r
        self.base = om[None] * (psibar @ spec.synergy + spec.w[None])   # c without shocks
        self.om = om
        D = _link_increments(spec, beliefs)
        Dc = np.linalg.solve(spec.cost, D.reshape(-1, spec.r).T).T.reshape(D.shape)
        self.D = D
        ii = np.array([i for i, _ in self.dyads], dtype=np.int64)
        jj = np.array([j for _, j in self.dyads], dtype=np.int64)
        self.ii, self.jj = ii, jj
        self.quad = np.einsum("dk,dk->d", D[ii, jj], Dc[ii, jj]) + np.einsum("dk,dk->d", D[jj, ii], Dc[jj, ii])
        self.phi_inv = np.linalg.inv(spec.cost)

    def surplus(self, shocks):
        """Joint surplus of every dyad in every network: (draws, N, m)."""
        eps = np.atleast_3d(shocks) if np.ndim(shocks) == 3 else np.asarray(shocks)[None]
        c = self.base[None] - self.om[None, None] * eps[:, None]       # S x N x n x r
        y = c @ self.phi_inv                                           # phi symmetric
        Dij = self.D[self.ii, self.jj]                                 # m x r
        Dji = self.D[self.jj, self.ii]
        t = np.einsum("snmk,mk->snm", y[:, :, self.ii], Dij) + np.einsum("snmk,mk->snm", y[:, :, self.jj], Dji)
        return t - self.bits[None] * self.quad[None, None]

    def stable(self, shocks):
        """Boolean (draws, N): pairwise stability of every network."""
        t = self.surplus(shocks)
        ok = np.where(self.bits[None] > 0, t >= 0.0, t < 0.0)
        return ok.all(axis=2)

    def network(self, code):
        return Network(self.G[code].astype(np.uint8), directed=False)


def enumerate_ps(n, spec, beliefs, shocks=None):
    """All pairwise stable networks (exhaustive over allowed dyads)."""
    if n != spec.n:
        raise DomainError("n does not match the game")
    if n > MAX_ENUMERATE:
        raise ScaleError(f"exhaustive enumeration is limited to n <= {MAX_ENUMERATE}")
    eps = np.zeros((n, spec.r)) if shocks is None else np.asarray(shocks, dtype=np.float64)
    en = _Enumerator(spec, beliefs)
    codes = np.flatnonzero(en.stable(eps)[0])
    return {en.network(c) for c in codes}


def improvement_path(net, spec, beliefs, shocks=None, max_steps=10_000):
    """Follow best single-link improvements until a pairwise stable network.

    An absent link with surplus >= 0 may be added and a present link with
    surplus < 0 may be deleted; the flip raising the potential most is taken.
    Returns the list of visited networks.  A revisit raises, since the
    potential rules out cycles.
    """
    eps = np.zeros((spec.n, spec.r)) if shocks is None else shocks
    dyads = _allowed_dyads(spec)
    path = [net]
    seen = {net}
    for _ in range(max_steps):
        t = link_surplus(net, spec, beliefs, eps)
        a = net.adjacency
        best, gain = None, -np.inf
        for i, j in dyads:
            if a[i, j] and t[i, j] < 0.0:
                g = -t[i, j]
            elif not a[i, j] and t[i, j] >= 0.0:
                g = t[i, j]
            else:
                continue
            if g > gain:
                best, gain = (i, j), g
        if best is None:
            return path
        net = net.with_link(best[0], best[1], 1 - a[best])
        if net in seen:
            raise NoConvergenceError("improvement path revisited a network", last=net)
        seen.add(net)
        path.append(net)
    raise NoConvergenceError("improvement path did not terminate", last=net)


# ---------------------------------------------------------------------------
# bounds on subnetwork probabilities
# ---------------------------------------------------------------------------

@dataclass
class PsBounds:
    lower: float
    upper: float
    empirical: float = None
    n_draws: int = 0
    empty_draws: int = 0

    def __post_init__(self):
        if not (0.0 <= self.lower <= self.upper <= 1.0):
            raise DomainError("bounds must satisfy 0 <= lower <= upper <= 1")


def subnetwork_bounds(sub_nodes, sub, spec, beliefs=None, n_draws=10_000, seed=0, chunk=2_000):
    """Monte Carlo bounds on P(G restricted to ``sub_nodes`` equals ``sub``).

    Upper: the draw admits a pairwise stable network extending ``sub``.
    Lower: additionally that stable network is the only one.  ``empirical``
    is the frequency of ``sub`` when a stable network is selected uniformly
    at random in each draw.  Shocks eps_ik are drawn from F_k; beliefs
    default to the no-interaction prediction F_m(w~_im).
    """
    sub_nodes = np.asarray(sub_nodes, dtype=np.int64)
    if len(sub_nodes) > 5:
        raise ScaleError("subnetworks are limited to 5 players")
    if sub.n != len(sub_nodes):
        raise DomainError("subnetwork size does not match its node list")
    if beliefs is None:
        _, wt = reduced_form(spec)
        psi = np.column_stack([shock_cdf(wt[:, m], f) for m, f in enumerate(spec.families)])
        beliefs = Beliefs(psi)
    en = _Enumerator(spec, beliefs)
    target = sub.adjacency.astype(np.float64)
    restr = en.G[:, sub_nodes][:, :, sub_nodes]
    match = np.all(restr == target[None], axis=(1, 2))              # N
    rng = np.random.default_rng(seed)
    up = lo = emp = empty = 0
    done = 0
    while done < n_draws:
        s = min(chunk, n_draws - done)
        eps = draw_game_shocks(spec.n, spec.families, rng, size=s)
        ps = en.stable(eps)                                          # s x N
        count = ps.sum(1)
        hit = ps & match[None]
        up += int(np.sum(hit.any(1)))
        lo += int(np.sum((count == 1) & hit.any(1)))
        empty += int(np.sum(count == 0))
        # uniform selection among stable networks
        u = rng.random(s)
        pick = np.minimum((u * count).astype(np.int64), np.maximum(count - 1, 0))
        cum = np.cumsum(ps, axis=1)
        sel = np.argmax(cum > pick[:, None], axis=1)
        emp += int(np.sum((count > 0) & match[sel]))
        done += s
    return PsBounds(lower=lo / n_draws, upper=up / n_draws, empirical=emp / n_draws,
                    n_draws=n_draws, empty_draws=empty)
