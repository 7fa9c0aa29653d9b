"""Simple graphs, peeling, Warning Propagation and the core/mantle decomposition."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from functools import cached_property

import networkx as nx
import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from . import _kernels as K

# vertex type codes
T0, TSTAR, T1 = 0, 1, 2
TYPE_NAMES = {T0: "0", TSTAR: "star", T1: "1"}


class Graph:
    """Simple undirected graph on vertices ``0..n-1``.

    Edges are stored sorted with ``u < v``; the CSR adjacency is built lazily.
    """

    def __init__(self, n: int, edges=()):
        self.n = int(n)
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if e.size:
            if e.min() < 0 or e.max() >= self.n:
                raise ValueError("edge endpoint out of range")
            e = np.sort(e, axis=1)
            if np.any(e[:, 0] == e[:, 1]):
                raise ValueError("loops are not allowed in a simple graph")
            order = np.lexsort((e[:, 1], e[:, 0]))
            e = e[order]
            if np.any(np.all(e[1:] == e[:-1], axis=1)):
                raise ValueError("duplicate edge")
        self.edges = e

    @property
    def m(self) -> int:
        return len(self.edges)

    @cached_property
    def _csr(self):
        return K.build_csr(self.n, self.edges[:, 0].copy(), self.edges[:, 1].copy())

    @property
    def indptr(self):
        return self._csr[0]

    @property
    def indices(self):
        return self._csr[1]

    @property
    def rev(self):
        return self._csr[2]

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def half_edge_sources(self) -> np.ndarray:
        return np.repeat(np.arange(self.n), self.degrees())

    def edge_key(self) -> int:
        """Bitmask over pair indices ``v(v-1)/2 + u``; only sensible for tiny n."""
        idx = self.edges[:, 1] * (self.edges[:, 1] - 1) // 2 + self.edges[:, 0]
        return int(sum(1 << int(i) for i in idx))

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.n))
        g.add_edges_from(map(tuple, self.edges.tolist()))
        return g

    def __eq__(self, other):
        return isinstance(other, Graph) and self.n == other.n and np.array_equal(self.edges, other.edges)

    def __repr__(self):
        return f"Graph(n={self.n}, m={self.m})"


def read_edgelist(path) -> Graph:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.split() for ln in fh if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty edge list")
    n, m = int(lines[0][0]), int(lines[0][1])
    body = lines[1:]
    if len(body) != m:
        raise ValueError(f"{path}: header says {m} edges, found {len(body)}")
    edges = [(int(a), int(b)) for a, b in body]
    for u, v in edges:
        if not 0 <= u < v < n:
            raise ValueError(f"{path}: bad edge line {u} {v}")
    return Graph(n, edges)


def format_edgelist(g: Graph) -> str:
    rows = [f"{g.n} {g.m}"] + [f"{u} {v}" for u, v in g.edges.tolist()]
    return "\n".join(rows) + "\n"


def write_edgelist(g: Graph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_edgelist(g))


def peel_core(g: Graph, k: int) -> np.ndarray:
    """Sorted vertex array of the k-core."""
    return np.flatnonzero(K.peel(g.indptr, g.indices, int(k)))


@dataclass(frozen=True)
class WpState:
    """WP fixed point. ``messages[e]`` is the message along half-edge ``e = (v -> w)``."""

    graph: Graph
    k: int
    messages: np.ndarray
    marks: np.ndarray
    rounds: int

    @property
    def incoming(self) -> np.ndarray:
        g = self.graph
        return np.bincount(g.indices, weights=self.messages, minlength=g.n).astype(np.int64)

    def message(self, v: int, w: int) -> int:
        g = self.graph
        nb = g.neighbors(v)
        i = np.searchsorted(nb, w)
        if i >= len(nb) or nb[i] != w:
            raise KeyError(f"{v} and {w} are not adjacent")
        return int(self.messages[g.indptr[v] + i])

    def as_dict(self) -> dict:
        src = self.graph.half_edge_sources()
        return {(int(v), int(w)): int(x) for v, w, x in zip(src, self.graph.indices, self.messages)}


def wp_run(g: Graph, k: int) -> WpState:
    """Synchronous Warning Propagation from the all-ones start."""
    k = int(k)
    src = g.half_edge_sources()
    dst = g.indices
    rev = g.rev
    msg = np.ones(2 * g.m, dtype=np.int8)
    rounds = 0
    while True:
        rounds += 1
        inc = np.bincount(dst, weights=msg, minlength=g.n)
        new = (inc[src] - msg[rev] >= k - 1).astype(np.int8)
        if np.any(new > msg):
            raise AssertionError("WP message flipped 0 -> 1")
        if np.array_equal(new, msg):
            break
        msg = new
    inc = np.bincount(dst, weights=msg, minlength=g.n)
    marks = (inc >= k).astype(np.int8)
    return WpState(graph=g, k=k, messages=msg, marks=marks, rounds=rounds)


def wp_fast(g: Graph, k: int) -> WpState:
    """Same fixed point as ``wp_run`` via the event-driven kernel (rounds = -1)."""
    msg, s = K.wp_fixed_point(g.indptr, g.indices, g.rev, int(k))
    return WpState(graph=g, k=int(k), messages=msg, marks=(s >= k).astype(np.int8), rounds=-1)


@dataclass(frozen=True)
class Decomposition:
    """Core/mantle split: vertex types, typed degrees and the seven counts.

    ``typed_degrees[v]`` holds ``(d_00, d_01, d_10, d_11)``, where ``d_ab(v)``
    counts neighbours ``w`` with ``mu(w -> v) = a`` and ``mu(v -> w) = b``.
    """

    k: int
    types: np.ndarray
    typed_degrees: np.ndarray
    counts: tuple
    wp: WpState

    @property
    def N0(self):
        return np.flatnonzero(self.types == T0)

    @property
    def Nstar(self):
        return np.flatnonzero(self.types == TSTAR)

    @property
    def N1(self):
        return np.flatnonzero(self.types == T1)

    @property
    def n_vec(self):
        return self.counts[:3]

    @property
    def m_vec(self):
        return self.counts[3:]

    @property
    def observables(self):
        """(n_star, n_1, m_10, m_11)."""
        c = self.counts
        return (c[1], c[2], c[5], c[6])

    def to_json(self) -> dict:
        names = ("n_0", "n_star", "n_1", "m_00", "m_01", "m_10", "m_11")
        return {
            "k": self.k,
            "N_0": self.N0.tolist(),
            "N_star": self.Nstar.tolist(),
            "N_1": self.N1.tolist(),
            "counts": dict(zip(names, map(int, self.counts))),
        }


def decompose(g: Graph, k: int, state: WpState | None = None) -> Decomposition:
    k = int(k)
    st = state if state is not None else wp_run(g, k)
    inc = st.incoming
    types = np.where(inc <= k - 2, T0, np.where(inc == k - 1, TSTAR, T1)).astype(np.int8)
    src = g.half_edge_sources()
    code = 2 * st.messages[g.rev].astype(np.int64) + st.messages
    td = np.zeros((g.n, 4), dtype=np.int64)
    np.add.at(td, (src, code), 1)
    n_vec = tuple(int(np.sum(types == t)) for t in (T0, TSTAR, T1))
    m_vec = tuple(int(x) for x in td.sum(axis=0))
    return Decomposition(k=k, types=types, typed_degrees=td, counts=n_vec + m_vec, wp=st)


def plus_set(dec: Decomposition) -> np.ndarray:
    """N_+ = vertices of N_0 receiving exactly k-2 ones."""
    return np.flatnonzero((dec.types == T0) & (dec.typed_degrees[:, 2] == dec.k - 2))


# ---------------------------------------------------------------- cycles

def _nontrivial_sccs(nodes, src, dst, directed):
    """Components (as node lists) that can carry a cycle."""
    if len(src) == 0:
        return []
    idx = {v: i for i, v in enumerate(nodes)}
    a = np.array([idx[x] for x in src])
    b = np.array([idx[x] for x in dst])
    mat = coo_matrix((np.ones(len(a)), (a, b)), shape=(len(nodes), len(nodes)))
    ncomp, lab = connected_components(mat, directed=directed, connection="strong")
    sizes = np.bincount(lab, minlength=ncomp)
    loops = set(lab[a[a == b]].tolist())
    keep = [c for c in range(ncomp) if sizes[c] > 1 or c in loops]
    nodes = np.asarray(nodes)
    return [nodes[lab == c].tolist() for c in keep]


def count_directed_cycles(arcs) -> int:
    """Directed simple cycles of a multi-digraph, counted with arc multiplicities.

    Loops are cycles of length 1 and opposite arcs give cycles of length 2.
    """
    mult = Counter((int(a), int(b)) for a, b in arcs)
    if not mult:
        return 0
    nodes = sorted({x for e in mult for x in e})
    src = [a for a, _ in mult]
    dst = [b for _, b in mult]
    total = 0
    for comp in _nontrivial_sccs(nodes, src, dst, directed=True):
        cs = set(comp)
        h = nx.DiGraph()
        h.add_edges_from(e for e in mult if e[0] in cs and e[1] in cs)
        for cyc in nx.simple_cycles(h):
            w = 1
            for i in range(len(cyc)):
                w *= mult[(cyc[i], cyc[(i + 1) % len(cyc)])]
            total += w
    return total


def count_undirected_cycles(edges) -> int:
    """Simple cycles of an undirected multigraph up to rotation and reflection.

    A loop is a 1-cycle, a pair joined by t parallel edges carries C(t, 2)
    2-cycles, longer cycles are weighted by the product of multiplicities.
    """
    mult = Counter()
    total = 0
    for a, b in edges:
        a, b = int(a), int(b)
        if a == b:
            total += 1
        else:
            mult[(min(a, b), max(a, b))] += 1
    total += sum(t * (t - 1) // 2 for t in mult.values())
    if not mult:
        return total
    h = nx.Graph()
    h.add_edges_from(mult)
    core = nx.k_core(h, 2)
    for comp in nx.biconnected_components(core):
        if len(comp) < 3:
            continue
        sub = core.subgraph(comp)
        for cyc in nx.simple_cycles(sub):
            if len(cyc) < 3:
                continue
            w = 1
            for i in range(len(cyc)):
                a, b = cyc[i], cyc[(i + 1) % len(cyc)]
                w *= mult[(min(a, b), max(a, b))]
            total += w
    return total


def count_forbidden_cycles(g: Graph, dec: Decomposition, k: int | None = None):
    """(x_star, x_plus) on a simple graph.

    x_star counts directed cycles inside N_star along arcs v -> w with
    mu(v -> w) = 1 and mu(w -> v) = 0; x_plus counts cycles inside N_+ using
    edges whose two messages are both 0.
    """
    msg = dec.wp.messages
    src = g.half_edge_sources()
    dst = g.indices
    back = msg[g.rev]
    star = dec.types == TSTAR
    sel = (msg == 1) & (back == 0) & star[src] & star[dst]
    x_star = count_directed_cycles(zip(src[sel], dst[sel]))
    plus = np.zeros(g.n, bool)
    plus[plus_set(dec)] = True
    sel = (msg == 0) & (back == 0) & plus[src] & plus[dst] & (src < dst)
    x_plus = count_undirected_cycles(zip(src[sel], dst[sel]))
    return x_star, x_plus


def decomposition_json(dec: Decomposition) -> str:
    return json.dumps(dec.to_json(), sort_keys=True)
