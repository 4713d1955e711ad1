"""Network container, degree statistics, summary statistics and edge-list I/O."""
import io
import re
from dataclasses import dataclass, fields

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import DegenerateInputError, EdgeListParseError
from .kernels import edge_connectivity


class Network:
    """Immutable binary adjacency matrix with zero diagonal.

    ``adjacency[i, j] == 1`` means a link from ``i`` to ``j``.  Undirected
    networks store a symmetric matrix.
    """

    __slots__ = ("_adj", "directed")

    def __init__(self, adjacency, directed=False):
        adj = np.array(adjacency, copy=True)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise ValueError("adjacency must be a square matrix")
        if not np.all((adj == 0) | (adj == 1)):
            raise ValueError("adjacency entries must be 0 or 1")
        adj = adj.astype(np.uint8)
        if np.any(np.diag(adj)):
            raise ValueError("adjacency diagonal must be zero")
        if not directed and not np.array_equal(adj, adj.T):
            raise ValueError("undirected adjacency must be symmetric")
        adj.setflags(write=False)
        self._adj = adj
        self.directed = bool(directed)

    @property
    def adjacency(self):
        return self._adj

    @property
    def n(self):
        return self._adj.shape[0]

    @classmethod
    def from_edges(cls, n, edges, directed=False):
        adj = np.zeros((n, n), dtype=np.uint8)
        for i, j in edges:
            adj[i, j] = 1
            if not directed:
                adj[j, i] = 1
        return cls(adj, directed)

    @classmethod
    def empty(cls, n, directed=False):
        return cls(np.zeros((n, n), dtype=np.uint8), directed)

    @classmethod
    def complete(cls, n, directed=False):
        adj = np.ones((n, n), dtype=np.uint8)
        np.fill_diagonal(adj, 0)
        return cls(adj, directed)

    def edges(self):
        """Links as (i, j) pairs, 0-based; undirected links listed once with i < j."""
        a = self._adj if self.directed else np.triu(self._adj)
        return [(int(i), int(j)) for i, j in zip(*np.nonzero(a))]

    def n_links(self):
        s = int(self._adj.sum())
        return s if self.directed else s // 2

    def skeleton(self):
        """Undirected skeleton: i and j are linked if either arc is present."""
        a = self._adj | self._adj.T
        return Network(a, directed=False)

    def with_link(self, i, j, value):
        adj = self._adj.copy()
        adj[i, j] = value
        if not self.directed:
            adj[j, i] = value
        return Network(adj, self.directed)

    def subnetwork(self, nodes):
        nodes = np.asarray(nodes, dtype=int)
        return Network(self._adj[np.ix_(nodes, nodes)], self.directed)

    def __eq__(self, other):
        return (isinstance(other, Network) and self.directed == other.directed
                and np.array_equal(self._adj, other._adj))

    def __hash__(self):
        return hash((self.directed, self._adj.shape, self._adj.tobytes()))

    def __repr__(self):
        kind = "directed" if self.directed else "undirected"
        return f"Network(n={self.n}, {kind}, links={self.n_links()})"


def block_diagonal(blocks):
    """Stack networks of the same kind into one block-diagonal network."""
    if not blocks:
        raise DegenerateInputError("no blocks supplied")
    directed = blocks[0].directed
    n = sum(b.n for b in blocks)
    adj = np.zeros((n, n), dtype=np.uint8)
    o = 0
    for b in blocks:
        adj[o:o + b.n, o:o + b.n] = b.adjacency
        o += b.n
    return Network(adj, directed)


@dataclass(frozen=True)
class DegreeSequence:
    out_degree: np.ndarray
    in_degree: np.ndarray

    @property
    def degrees(self):
        return self.out_degree


def degree_sequence(net):
    a = net.adjacency.astype(np.int64)
    return DegreeSequence(a.sum(axis=1), a.sum(axis=0))


def count_transitive_triangles(net):
    """Number of transitive triangles.

    Undirected: unordered triples with all three links.  Directed: ordered
    triples (i, j, k) with arcs i->j, i->k and j->k.
    """
    a = net.adjacency.astype(np.float64)
    s = float(np.sum(a * (a @ a.T)))
    if not net.directed:
        s /= 6.0
    return int(round(s))


@dataclass(frozen=True)
class NetworkSummary:
    n: int
    directed: bool
    density: float
    in_mean: float
    in_median: float
    out_mean: float
    out_median: float
    comp_share: float
    min_cut: float
    clustering: float

    COLUMNS = ("n", "directed", "density", "in_mean", "in_median", "out_mean",
               "out_median", "comp_share", "min_cut", "clustering")

    def to_csv_row(self):
        vals = []
        for c in self.COLUMNS:
            v = getattr(self, c)
            if isinstance(v, bool):
                vals.append(str(int(v)))
            elif isinstance(v, (int, np.integer)):
                vals.append(str(int(v)))
            else:
                vals.append(repr(float(v)))
        return ",".join(vals)

    @classmethod
    def csv_header(cls):
        return ",".join(cls.COLUMNS)

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def largest_component(net):
    """Node indices of the largest (strongly, if directed) connected component."""
    conn = "strong" if net.directed else "weak"
    _, labels = connected_components(csr_matrix(net.adjacency), directed=net.directed, connection=conn)
    counts = np.bincount(labels)
    return np.flatnonzero(labels == np.argmax(counts))


def clustering(net):
    """Global transitivity ratio on the undirected skeleton."""
    a = net.skeleton().adjacency.astype(np.float64)
    deg = a.sum(axis=1)
    triples = float(np.sum(deg * (deg - 1)))
    if triples == 0.0:
        return 0.0
    closed = float(np.sum(a * (a @ a)))
    return closed / triples


def min_cut(net):
    """Global minimum edge cut.

    Undirected graphs use the edge connectivity of the graph; directed
    graphs use the strong edge connectivity.  Both are zero when the graph
    is not (strongly) connected.
    """
    return edge_connectivity(net.adjacency, net.directed)


def summary_stats(net):
    n = net.n
    if n < 2:
        raise DegenerateInputError("summary statistics need at least two players")
    ds = degree_sequence(net)
    pairs = n * (n - 1) if net.directed else n * (n - 1) / 2
    return NetworkSummary(
        n=n,
        directed=net.directed,
        density=net.n_links() / pairs,
        in_mean=float(ds.in_degree.mean()),
        in_median=float(np.median(ds.in_degree)),
        out_mean=float(ds.out_degree.mean()),
        out_median=float(np.median(ds.out_degree)),
        comp_share=len(largest_component(net)) / n,
        min_cut=float(min_cut(net)),
        clustering=clustering(net),
    )


# ---------------------------------------------------------------------------
# edge lists
# ---------------------------------------------------------------------------

_HEADER = re.compile(r"^#\s*n\s*=\s*(\d+)\s*[, ]\s*directed\s*=\s*(\w+)\s*$", re.I)


def write_edge_list(net, sink):
    """Write ``# n=<n> directed=<0|1>`` followed by 1-based ``i,j`` rows."""
    lines = [f"# n={net.n} directed={int(net.directed)}"]
    lines += [f"{i + 1},{j + 1}" for i, j in net.edges()]
    text = "\n".join(lines) + "\n"
    if hasattr(sink, "write"):
        sink.write(text)
    else:
        with open(sink, "w") as fh:
            fh.write(text)


def read_edge_list(source):
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source) as fh:
            text = fh.read()
    return parse_edge_list(text)


def parse_edge_list(text):
    rows = io.StringIO(text).read().splitlines()
    n = directed = None
    seen = set()
    edges = []
    for lineno, raw in enumerate(rows, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            m = _HEADER.match(line)
            if m and n is None:
                n = int(m.group(1))
                flag = m.group(2).lower()
                if flag not in ("0", "1", "true", "false"):
                    raise EdgeListParseError(f"bad directed flag {m.group(2)!r}", lineno)
                directed = flag in ("1", "true")
            continue
        if n is None:
            raise EdgeListParseError("edge row before the '# n=.. directed=..' header", lineno)
        parts = line.split(",")
        if len(parts) != 2:
            raise EdgeListParseError(f"expected 'i,j', got {line!r}", lineno)
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError:
            raise EdgeListParseError(f"non-integer index in {line!r}", lineno) from None
        if not (1 <= i <= n and 1 <= j <= n):
            raise EdgeListParseError(f"index out of range 1..{n} in {line!r}", lineno)
        if i == j:
            raise EdgeListParseError(f"self-loop {line!r}", lineno)
        key = (i, j) if directed else (min(i, j), max(i, j))
        if key in seen:
            raise EdgeListParseError(f"duplicate edge {line!r}", lineno)
        seen.add(key)
        edges.append((key[0] - 1, key[1] - 1))
    if n is None:
        raise EdgeListParseError("missing '# n=.. directed=..' header")
    return Network.from_edges(n, edges, directed)
