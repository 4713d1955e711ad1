"""Hot loops with a numba implementation and a numpy/scipy fallback.

Each public kernel dispatches on :data:`stratnet._accel.USE_NUMBA`.  Both
variants are importable (``*_numba`` / ``*_numpy``) so tests and the
benchmark can compare them directly.
"""
import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_flow

from . import _accel
from ._accel import njit


# ---------------------------------------------------------------------------
# global edge connectivity (unit capacity max flow)
# ---------------------------------------------------------------------------

@njit
def _augment_capped(cap, indptr, indices, s, t, limit, parent, queue):
    """Unit-capacity Edmonds-Karp on residual matrix ``cap``, stopping at ``limit``."""
    n = cap.shape[0]
    flow = 0
    while flow < limit:
        for v in range(n):
            parent[v] = -1
        parent[s] = s
        head = 0
        tail = 1
        queue[0] = s
        found = False
        while head < tail and not found:
            u = queue[head]
            head += 1
            for p in range(indptr[u], indptr[u + 1]):
                v = indices[p]
                if parent[v] == -1 and cap[u, v] > 0:
                    parent[v] = u
                    if v == t:
                        found = True
                        break
                    queue[tail] = v
                    tail += 1
        if not found:
            break
        v = t
        while v != s:
            u = parent[v]
            cap[u, v] -= 1
            cap[v, u] += 1
            v = u
        flow += 1
    return flow


@njit
def edge_connectivity_numba(adj, directed):
    n = adj.shape[0]
    if n < 2:
        return 0
    out_deg = np.zeros(n, np.int64)
    in_deg = np.zeros(n, np.int64)
    for i in range(n):
        for j in range(n):
            if adj[i, j]:
                out_deg[i] += 1
                in_deg[j] += 1
    best = min(out_deg.min(), in_deg.min())
    if best == 0:
        return 0
    # neighbour lists of the symmetrised graph cover every residual arc
    indptr = np.zeros(n + 1, np.int64)
    for i in range(n):
        c = 0
        for j in range(n):
            if adj[i, j] or adj[j, i]:
                c += 1
        indptr[i + 1] = indptr[i] + c
    indices = np.empty(indptr[n], np.int64)
    for i in range(n):
        p = indptr[i]
        for j in range(n):
            if adj[i, j] or adj[j, i]:
                indices[p] = j
                p += 1
    base = np.zeros((n, n), np.int32)
    for i in range(n):
        for j in range(n):
            if adj[i, j]:
                base[i, j] = 1
    cap = np.empty((n, n), np.int32)
    parent = np.empty(n, np.int64)
    queue = np.empty(n, np.int64)
    for t in range(1, n):
        cap[:, :] = base
        f = _augment_capped(cap, indptr, indices, 0, t, best, parent, queue)
        if f < best:
            best = f
        if best == 0:
            return 0
        if directed:
            cap[:, :] = base
            f = _augment_capped(cap, indptr, indices, t, 0, best, parent, queue)
            if f < best:
                best = f
            if best == 0:
                return 0
    return best


def edge_connectivity_numpy(adj, directed):
    adj = np.asarray(adj, dtype=bool)
    n = adj.shape[0]
    if n < 2:
        return 0
    best = int(min(adj.sum(1).min(), adj.sum(0).min()))
    if best == 0:
        return 0
    cap = csr_matrix(adj.astype(np.int32))
    for t in range(1, n):
        best = min(best, maximum_flow(cap, 0, t).flow_value)
        if directed and best > 0:
            best = min(best, maximum_flow(cap, t, 0).flow_value)
        if best == 0:
            break
    return int(best)


def edge_connectivity(adj, directed):
    """Minimum number of arcs whose removal disconnects the graph.

    For directed graphs this is the strong edge connectivity, which is zero
    unless the graph is strongly connected.
    """
    adj = np.ascontiguousarray(adj, dtype=np.bool_)
    if _accel.USE_NUMBA:
        return int(edge_connectivity_numba(adj, bool(directed)))
    return edge_connectivity_numpy(adj, directed)


# ---------------------------------------------------------------------------
# second-order triad sum used by the transitivity bias correction
# ---------------------------------------------------------------------------
#
# Edges are ordered pairs (a, b).  The index of edge (a, b) loads on the
# covariates X[a, b] and on the fixed effects sidx[a] and ridx[b]; for an
# undirected model sidx == ridx.  With C the inverse information split into
# blocks (theta, fixed effects), Q(ab, cd) is the covariance of the
# first-order index errors of the two edges:
#   Q(ab, cd) = x_ab' Ctt x_cd + x_ab'(Cs_c + Cr_d) + x_cd'(Cs_a + Cr_b)
#               + Css[a, c] + Csr[a, d] + Crs[b, c] + Crr[b, d]

@njit
def _triad_cross_sum_blocks(dp, P, X, Ctt, Cs, Cr, Css, Csr, Crs, Crr):
    n = dp.shape[0]
    k = X.shape[2]
    XiCt = np.empty((n, k))
    XiCr = np.empty((n, n))
    u = np.empty(n)
    total = 0.0
    for i in range(n):
        # per-sender projections x_ij' Ctt, x_ij' Cr[:, m] and x_ij' Cs[:, i]
        for j in range(n):
            s = 0.0
            for p in range(k):
                s += X[i, j, p] * Cs[p, i]
                acc = 0.0
                for r in range(k):
                    acc += X[i, j, r] * Ctt[r, p]
                XiCt[j, p] = acc
            u[j] = s
            for m in range(n):
                acc = 0.0
                for p in range(k):
                    acc += X[i, j, p] * Cr[p, m]
                XiCr[j, m] = acc
        for j in range(n):
            dij = dp[i, j]
            if dij == 0.0:
                continue
            # sender-sharing pair (i,j),(i,m)
            for m in range(n):
                w = dp[i, m] * P[j, m]
                if w == 0.0:
                    continue
                q = u[j] + u[m] + XiCr[j, m] + XiCr[m, j] + Css[i, i] + Csr[i, m] + Crs[j, i] + Crr[j, m]
                for p in range(k):
                    q += XiCt[j, p] * X[i, m, p]
                total += dij * w * q
            # path pair (i,j),(j,m)
            xs = 0.0
            for p in range(k):
                xs += X[i, j, p] * Cs[p, j]
            for m in range(n):
                w = dp[j, m] * P[i, m]
                if w == 0.0:
                    continue
                q = xs + XiCr[j, m] + Css[i, j] + Csr[i, m] + Crs[j, j] + Crr[j, m]
                for p in range(k):
                    q += XiCt[j, p] * X[j, m, p] + X[j, m, p] * (Cs[p, i] + Cr[p, j])
                total += dij * w * q
    for m in range(n):
        # receiver-sharing pair (i,m),(j,m)
        for i in range(n):
            dim = dp[i, m]
            if dim == 0.0:
                continue
            for j in range(n):
                w = dp[j, m] * P[i, j]
                if w == 0.0:
                    continue
                q = Css[i, j] + Csr[i, m] + Crs[m, j] + Crr[m, m]
                for p in range(k):
                    xi = X[i, m, p]
                    xj = X[j, m, p]
                    q += xi * (Cs[p, j] + Cr[p, m]) + xj * (Cs[p, i] + Cr[p, m])
                    for r in range(k):
                        q += xi * Ctt[p, r] * X[j, m, r]
                total += dim * w * q
    return total


def triad_cross_sum_numba(dp, P, X, Ctt, Ctf, Cff, sidx, ridx):
    return _triad_cross_sum_blocks(
        dp, P, X, Ctt,
        np.ascontiguousarray(Ctf[:, sidx]), np.ascontiguousarray(Ctf[:, ridx]),
        np.ascontiguousarray(Cff[np.ix_(sidx, sidx)]), np.ascontiguousarray(Cff[np.ix_(sidx, ridx)]),
        np.ascontiguousarray(Cff[np.ix_(ridx, sidx)]), np.ascontiguousarray(Cff[np.ix_(ridx, ridx)]))


def triad_cross_sum_numpy(dp, P, X, Ctt, Ctf, Cff, sidx, ridx):
    n = dp.shape[0]
    Cs = Ctf[:, sidx]                 # k x n
    Cr = Ctf[:, ridx]
    Css = Cff[np.ix_(sidx, sidx)]
    Csr = Cff[np.ix_(sidx, ridx)]
    Crs = Cff[np.ix_(ridx, sidx)]
    Crr = Cff[np.ix_(ridx, ridx)]
    # x_jm' Ctf[:, r_j], indexed [j, m]
    xr_own = np.einsum("jmp,pj->jm", X, Cr)
    total = 0.0
    for i in range(n):
        Xi = X[i]                     # n x k, rows x_ij
        d = dp[i]
        # sender-sharing pair (i,j),(i,m)
        q = (Xi @ Ctt @ Xi.T
             + (Xi @ Cs[:, i])[:, None] + Xi @ Cr
             + (Xi @ Cs[:, i])[None, :] + (Xi @ Cr).T
             + Css[i, i] + Csr[i][None, :] + Crs[:, i][:, None] + Crr)
        total += np.sum(np.outer(d, d) * P * q)
        # path pair (i,j),(j,m)
        q = (np.einsum("jp,jmp->jm", Xi @ Ctt, X)
             + np.einsum("jp,pj->j", Xi, Cs)[:, None] + Xi @ Cr
             + X @ Cs[:, i] + xr_own
             + Css[i][:, None] + Csr[i][None, :] + np.diag(Crs)[:, None] + Crr)
        total += np.sum(d[:, None] * dp * P[i][None, :] * q)
    for m in range(n):
        Xm = X[:, m]                  # rows x_im
        d = dp[:, m]
        # receiver-sharing pair (i,m),(j,m)
        q = (Xm @ Ctt @ Xm.T
             + Xm @ Cs + (Xm @ Cr[:, m])[:, None]
             + (Xm @ Cs).T + (Xm @ Cr[:, m])[None, :]
             + Css + Csr[:, m][:, None] + Crs[m][None, :] + Crr[m, m])
        total += np.sum(np.outer(d, d) * P * q)
    return float(total)


def triad_cross_sum(dp, P, X, Ctt, Ctf, Cff, sidx, ridx):
    """Sum over ordered transitive triples of d_e d_f p_g Q(e, f) for each edge pair.

    ``dp`` and ``P`` must have zero diagonals.
    """
    args = (np.ascontiguousarray(dp, dtype=np.float64), np.ascontiguousarray(P, dtype=np.float64),
            np.ascontiguousarray(X, dtype=np.float64), np.ascontiguousarray(Ctt, dtype=np.float64),
            np.ascontiguousarray(Ctf, dtype=np.float64), np.ascontiguousarray(Cff, dtype=np.float64),
            np.ascontiguousarray(sidx, dtype=np.int64), np.ascontiguousarray(ridx, dtype=np.int64))
    if _accel.USE_NUMBA:
        return float(triad_cross_sum_numba(*args))
    return triad_cross_sum_numpy(*args)
