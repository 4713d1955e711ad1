"""Excess-transitivity test and the reciprocity estimator.

The count of transitive triangles is compared with its plug-in prediction
from a fitted dyadic model.  Estimation noise in the fixed effects makes the
plug-in prediction biased; the leading bias and variance follow from a
second-order expansion of the prediction in the fitted indices, using the
first-order covariance ``Q`` of the fitted indices (:class:`FitGeometry`).

For directed networks the reciprocity parameter is the correlation of the
two shocks in a dyad.  It is estimated by maximising the pseudo-likelihood of
mutual links given the fitted indices, and bias corrected with the same
second-order expansion.
"""
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .bivariate import bvn_cdf, bvn_cdf_grad
from .errors import DomainError, IllConditionedError
from .graph import count_transitive_triangles
from .jml import FitGeometry
from .kernels import triad_cross_sum


# ---------------------------------------------------------------------------
# triangle counts and their expectation
# ---------------------------------------------------------------------------

def _zero_diag(P):
    P = np.array(P, dtype=np.float64)
    np.fill_diagonal(P, 0.0)
    return P


def expected_triangles(P, directed):
    """Sum over transitive triangles of the product of their link probabilities."""
    P = _zero_diag(P)
    f = float(np.sum(P * (P @ P.T)))
    return f if directed else f / 6.0


def triangle_gradient(P, directed):
    """d expected_triangles / d p_ij, as an n x n matrix.

    Undirected entries refer to the unordered pair {i, j}.
    """
    P = _zero_diag(P)
    if directed:
        g = P @ P.T + P @ P + P.T @ P
    else:
        g = P @ P
    np.fill_diagonal(g, 0.0)
    return g


def excess_transitivity(net, P):
    """(S - sum over triangles of prod p_e) / n^3 for a link probability matrix."""
    P = np.asarray(P, dtype=np.float64)
    if P.shape != (net.n, net.n):
        raise DomainError("probability matrix must be n x n")
    if not net.directed and not np.allclose(P, P.T):
        raise DomainError("undirected probability matrix must be symmetric")
    s = count_transitive_triangles(net)
    return (s - expected_triangles(P, net.directed)) / float(net.n) ** 3


def _projected_pairs(wl, wr, C, ul, ur, same):
    """Residual second-order variance at every centre.

    For centre c the pairs (a, b) carry weight wl[c, a] wr[c, b], kernel
    C[a, b] and are projected on the squared-score direction ul[c, a] ur[c, b].
    ``same`` marks pairs of the same orientation, counted once (a < b).
    """
    tot = np.einsum("ca,ab,cb->c", wl, C * C, wr)
    cross = np.einsum("ca,ab,cb->c", wl * ul, C, wr * ur)
    kk = (wl * ul * ul).sum(1) * (wr * ur * ur).sum(1) - np.sum(wl * ul * ul * wr * ur * ur, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        proj = np.where(kk > 0, cross * cross / kk, 0.0)
    res = tot - proj
    return float(np.sum(res) * (0.5 if same else 1.0))


def _nonlinear_variance(P, p1, H, directed):
    """Variance of the degenerate parts of S - E[S] left after fixed-effect fitting.

    The pair terms u_e u_f p_g of the Hoeffding expansion that share a centre
    are partly absorbed by the squared fixed-effect scores; each centre's
    kernel is replaced by its residual after projection on H_e H_f.  The
    third-order term is kept in full.
    """
    if directed:
        Ps = P + P.T
        v = _projected_pairs(p1, p1, Ps, H, H, True)                  # common sender
        v += _projected_pairs(p1.T, p1.T, Ps, H.T, H.T, True)         # common receiver
        v += _projected_pairs(p1.T, p1, P, H.T, H, False)             # path i -> c -> k
        v += np.sum(p1 * (p1 @ p1.T))
        return float(v)
    v = _projected_pairs(p1, p1, P, H, H, True)
    v += np.sum(p1 * (p1 @ p1)) / 6.0
    return float(v)


# ---------------------------------------------------------------------------
# transitivity test
# ---------------------------------------------------------------------------

@dataclass
class TransitivityReport:
    """Excess transitivity on the n * E_hat scale with its bias and variance.

    ``bias_terms`` are (fixed-effect part, beta part, delta part); the
    studentised statistic is ``(n_e_hat + sum(bias_terms)) / sqrt(variance)``.
    """

    n: int
    s_n: int
    expected: float
    e_hat: float
    n_e_hat: float
    bias_terms: tuple
    variance: float
    z_stat: float
    corr: np.ndarray
    e_n_oracle: float = None
    variance_linear: float = None
    lambda_min_w: float = None

    @property
    def bias(self):
        return float(sum(self.bias_terms))

    def reject(self, crit=1.645):
        return bool(abs(self.z_stat) > crit)

    def to_dict(self):
        d = asdict(self)
        d["corr"] = np.asarray(self.corr).tolist()
        d["bias_terms"] = list(self.bias_terms)
        return d


def _full_matrices(geom):
    """Probabilities and derivatives on all ordered pairs (symmetric if undirected)."""
    P, dp, d2p, p1 = geom.p, geom.dp, geom.d2p, geom.p1
    if not geom.directed:
        P, dp, d2p, p1 = (m + m.T for m in (P, dp, d2p, p1))
    return P, dp, d2p, p1


def _dyad_omega(geom, rho):
    """Cov(score_ij, score_ji) under shock correlation ``rho`` (directed only)."""
    n = geom.n
    if not geom.directed or rho == 0.0:
        return np.zeros((n, n))
    z = geom.z
    s = bvn_cdf(z, z.T, rho)
    om = geom.H * geom.H.T * (s - geom.p * geom.p.T)
    np.fill_diagonal(om, 0.0)
    return om


def neighbourhood_correlation(geom, rho=0.0):
    """corr_i: correlation of the scores of i's outgoing and incoming links."""
    n = geom.n
    if not geom.directed:
        return np.zeros(n)
    om = _dyad_omega(geom, rho)
    r = geom.rho
    den = np.sqrt(r.sum(1) * r.sum(0))
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, om.sum(1) / den, 0.0)


def transitivity_test(net, cov, fit, rho=0.0, p_true=None, geometry=None):
    """Bias-corrected excess-transitivity test at a JML fit.

    ``rho`` is the (estimated) reciprocity correlation used in the variance of
    directed networks.  ``p_true`` (link probabilities under the true
    parameters, on the fitted players) adds the oracle statistic E_n.
    """
    sub, subcov = fit.restrict(net, cov)
    geom = geometry or FitGeometry.from_fit(fit, net, cov)
    n, k, directed = geom.n, geom.k, geom.directed

    Ctt = geom.C[:k, :k]
    lam_w = float(np.linalg.eigvalsh(np.linalg.inv(Ctt)).min()) / n ** 2 if k else np.inf
    if not np.isfinite(lam_w) or lam_w < 1e-10:
        raise IllConditionedError(f"smallest eigenvalue of the covariate information is {lam_w:.3g}")

    P, dp, d2p, p1 = _full_matrices(geom)
    S = count_transitive_triangles(sub)
    f_hat = expected_triangles(P, directed)
    T = S - f_hat

    # gradient per observation (ordered pair if directed, i < j otherwise)
    grad = np.where(geom.mask, triangle_gradient(P, directed), 0.0)

    # first order: Var(sum_e h_e chi~_e) with chi = grad / H
    with np.errstate(divide="ignore", invalid="ignore"):
        chi = np.where(geom.H > 0, grad / geom.H, 0.0)
    chi_t = chi - geom.project(chi)
    v_lin = float(np.sum(geom.rho * chi_t ** 2))
    omega = _dyad_omega(geom, rho)
    if directed:
        v_lin += float(np.sum(omega * chi_t * chi_t.T))
    Hf = geom.H if directed else geom.H + geom.H.T
    v_nl = _nonlinear_variance(P, p1, Hf, directed)
    var = v_lin + v_nl

    # bias of the plug-in prediction f(p_hat) - f(p0)
    dq = geom.diag_q()
    b = geom.cox_snell(dq)
    gp = grad * geom.dp
    x = geom.x
    b_theta = np.einsum("ij,ijk->k", gp, x) * b[:k]
    fe = b.copy()
    fe[:k] = 0.0
    b_fe = float(np.sum(gp * geom.D(fe)))
    b_fe += 0.5 * float(np.sum(grad * geom.d2p * dq))
    cross = triad_cross_sum(dp, P, x, geom.Ctt, geom.Ctf, geom.Cff, geom.sidx, geom.ridx)
    b_fe += cross if directed else cross / 6.0
    b_beta = float(np.sum(b_theta[:k - 1])) if fit.estimate_delta else float(np.sum(b_theta))
    b_delta = float(b_theta[k - 1]) if fit.estimate_delta else 0.0

    scale = float(n) ** 2
    bias_terms = (b_fe / scale, b_beta / scale, b_delta / scale)
    z = (T + b_fe + b_beta + b_delta) / np.sqrt(var) if var > 0 else float("nan")

    e_oracle = None
    if p_true is not None:
        e_oracle = (S - expected_triangles(p_true, directed)) / float(n) ** 3

    return TransitivityReport(
        n=n, s_n=S, expected=f_hat, e_hat=T / float(n) ** 3, n_e_hat=T / scale,
        bias_terms=bias_terms, variance=var / scale ** 2, z_stat=float(z),
        corr=neighbourhood_correlation(geom, rho), e_n_oracle=e_oracle,
        variance_linear=v_lin / scale ** 2, lambda_min_w=lam_w)


def plug_in_probabilities(fit, net, cov):
    """Fitted link probabilities on all ordered pairs of the fitted players."""
    geom = FitGeometry.from_fit(fit, net, cov)
    return _full_matrices(geom)[0]


# ---------------------------------------------------------------------------
# reciprocity
# ---------------------------------------------------------------------------

@dataclass
class ReciprocityFit:
    rho_hat: float
    loglik: float
    at_boundary: bool
    c_tilde: float = 0.01
    bias: float = None
    rho_bc: float = None
    se: float = None

    def to_dict(self):
        return asdict(self)


def _dyad_arrays(fit, net, cov):
    sub, subcov = fit.restrict(net, cov)
    z = fit.index(net, cov)
    iu = np.triu_indices(sub.n, 1)
    a = sub.adjacency
    w = (a[iu] & a.T[iu]).astype(np.float64)
    return z, iu, w


def reciprocity_loglik(rho, z1, z2, w):
    """sum over dyads of w ln s + (1 - w) ln(1 - s), s = P(both links)."""
    s = np.clip(bvn_cdf(z1, z2, rho), 1e-300, 1.0 - 1e-16)
    return float(np.sum(w * np.log(s) + (1.0 - w) * np.log1p(-s)))


def rho_estimate(net, cov, fit, c_tilde=0.01, xatol=1e-10):
    """Maximise the mutual-link pseudo-likelihood over [-1 + c, 1 - c]."""
    if not net.directed:
        raise DomainError("reciprocity is defined for directed networks")
    if not 0.0 < c_tilde < 0.5:
        raise DomainError("c_tilde must lie in (0, 1/2)")
    z, iu, w = _dyad_arrays(fit, net, cov)
    z1, z2 = z[iu], z.T[iu]
    lo, hi = -1.0 + c_tilde, 1.0 - c_tilde
    res = minimize_scalar(lambda r: -reciprocity_loglik(r, z1, z2, w), bounds=(lo, hi),
                          method="bounded", options={"xatol": xatol})
    r = float(res.x)
    # Brent never evaluates the end points; compare them explicitly
    cand = [(r, -res.fun)] + [(e, reciprocity_loglik(e, z1, z2, w)) for e in (lo, hi)]
    r, ll = max(cand, key=lambda t: t[1])
    at_bd = bool(min(r - lo, hi - r) < 1e-6)
    return ReciprocityFit(rho_hat=r, loglik=float(ll), at_boundary=at_bd, c_tilde=c_tilde)


def _dyad_parts(z1, z2, r):
    """s, its first derivatives (z1, z2, rho) and J = s_rho / (s (1 - s))."""
    s = np.clip(bvn_cdf(z1, z2, r), 1e-300, 1.0 - 1e-16)
    s1, s2, sr = bvn_cdf_grad(z1, z2, r)
    return s, s1, s2, sr, sr / (s * (1.0 - s))


def rho_bias(fit, net, cov, rho_hat, geometry=None, h=1e-5):
    """Leading bias of the reciprocity estimate and its first-order variance.

    Returns ``(bias, variance)``.  The estimating equation is
    F(z, rho) = sum_d J_d (w_d - s_d); the bias collects the second-order
    terms of its expansion in the fitted indices and in rho.
    """
    geom = geometry or FitGeometry.from_fit(fit, net, cov)
    z, iu, w = _dyad_arrays(fit, net, cov)
    n = geom.n
    ju = (iu[1], iu[0])
    z1, z2 = z[iu], z.T[iu]
    r = float(rho_hat)
    if not -1.0 < r - h and r + h < 1.0:
        raise DomainError("rho too close to the boundary for the bias correction")
    s, s1, s2, sr, J = _dyad_parts(z1, z2, r)

    # derivatives of J and of the gradient of s by central differences
    def diff(dz1, dz2, dr):
        up = _dyad_parts(z1 + dz1, z2 + dz2, r + dr)
        dn = _dyad_parts(z1 - dz1, z2 - dz2, r - dr)
        return [(u - d) / (2.0 * h) for u, d in zip(up[1:], dn[1:])]

    s11, s21, sr1, J1 = diff(h, 0.0, 0.0)
    s12, s22, sr2, J2 = diff(0.0, h, 0.0)
    s1r, s2r, srr, Jr = diff(0.0, 0.0, h)

    # expected derivatives of F
    F_r = -np.sum(J * sr)
    F_1, F_2 = -J * s1, -J * s2
    F_11 = -(2.0 * J1 * s1 + J * s11)
    F_22 = -(2.0 * J2 * s2 + J * s22)
    F_12 = -(J1 * s2 + J2 * s1 + J * 0.5 * (s12 + s21))
    F_1r = -(J1 * sr + Jr * s1 + J * s1r)
    F_2r = -(J2 * sr + Jr * s2 + J * s2r)
    F_rr = -(2.0 * Jr * sr + J * srr)

    def to_mat(a, b):
        m = np.zeros((n, n))
        m[iu] = a
        m[ju] = b
        return m

    p = geom.p
    # Cov(w_d, score_e) for e in d, and the score weights of F
    c = geom.H * np.where(geom.mask, to_mat(s, s) * (1.0 - p), 0.0)
    Jm = to_mat(J, J)
    Fz = to_mat(F_1, F_2)
    Jz = to_mat(J1, J2)
    Fzr = to_mat(F_1r, F_2r)

    omega = _dyad_omega(geom, r)
    sw = geom.sandwich(omega)
    dq, xq = geom.diag_q(), geom.cross_q()
    dqs, xqs = geom.diag_q(sw), geom.cross_q(sw)

    Qm = geom.q_apply(Jm * c)                      # Cov(dz_e, F)
    dtF = geom.Dt(Fz)
    SzF = geom.D(sw @ dtF)                         # Cov(dz_e, Fz' dz)
    var_F = float(np.sum(J * J * s * (1.0 - s)))
    cov_F = float(np.sum(Fz * Qm))
    var_lin = float(dtF @ sw @ dtF)
    var_r1 = (var_F + 2.0 * cov_F + var_lin) / F_r ** 2
    e_zr = -(Qm + SzF) / F_r                       # E[dz_e drho]

    b_psi = geom.cox_snell(dq)
    t_a = float(np.sum(Jz * (dq * c + xq * c.T)))
    t_b = float(np.sum(Fz * geom.D(b_psi)))
    t_c = 0.5 * float(np.sum(F_11 * dqs[iu] + 2.0 * F_12 * xqs[iu] + F_22 * dqs[ju]))
    t_d = float(np.sum(Fzr * e_zr))
    vc = geom.q_apply(Fz) * c
    t_e = -float(np.sum(Jr * J * s * (1.0 - s)) + np.sum(Jr * (vc[iu] + vc[ju]))) / F_r
    t_f = 0.5 * float(np.sum(F_rr)) * var_r1
    bias = -(t_a + t_b + t_c + t_d + t_e + t_f) / F_r
    return float(bias), float(var_r1)


@dataclass
class BiasCorrected:
    theta: np.ndarray
    theta_bc: np.ndarray
    theta_correction: np.ndarray
    rho: float = None
    rho_bc: float = None
    rho_correction: float = None
    extras: dict = field(default_factory=dict)


def bias_corrected_estimates(fit, net, cov, rho_fit=None, geometry=None):
    """Subtract the estimated leading biases from theta-hat and rho-hat."""
    geom = geometry or FitGeometry.from_fit(fit, net, cov)
    k = geom.k
    b = geom.cox_snell()[:k]
    theta = fit.theta_hat.copy()
    corr = np.zeros_like(theta)
    corr[:k] = b
    out = BiasCorrected(theta=theta, theta_bc=theta - corr, theta_correction=corr)
    if rho_fit is not None:
        br, vr = rho_bias(fit, net, cov, rho_fit.rho_hat, geometry=geom)
        out.rho = rho_fit.rho_hat
        out.rho_correction = br
        out.rho_bc = rho_fit.rho_hat - br
        out.extras["rho_se"] = float(np.sqrt(vr))
        rho_fit.bias, rho_fit.rho_bc, rho_fit.se = br, out.rho_bc, out.extras["rho_se"]
    return out
