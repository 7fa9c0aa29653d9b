import itertools
import json
import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kcore_forge.graph import (T0, T1, TSTAR, Graph, WpState, count_directed_cycles, count_forbidden_cycles,
                               count_undirected_cycles, decompose, decomposition_json, format_edgelist, peel_core,
                               plus_set, read_edgelist, wp_fast, wp_run, write_edgelist)

K4 = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
K4_PENDANT = K4 + [(3, 4)]
PATH5 = [(0, 1), (1, 2), (2, 3), (3, 4)]


@st.composite
def graphs(draw, max_n=40):
    n = draw(st.integers(1, max_n))
    pairs = [(u, v) for v in range(n) for u in range(v)]
    if not pairs:
        return Graph(n)
    dens = draw(st.floats(0, 1))
    mask = draw(st.lists(st.floats(0, 1), min_size=len(pairs), max_size=len(pairs)))
    return Graph(n, [e for e, x in zip(pairs, mask) if x < dens * min(1.0, 8.0 / n)])


def core_induced_edges(g, core):
    inside = np.zeros(g.n, bool)
    inside[core] = True
    return inside[g.half_edge_sources()] & inside[g.indices]


# --------------------------------------------------------------- Graph

def test_graph_validation():
    with pytest.raises(ValueError):
        Graph(3, [(0, 0)])
    with pytest.raises(ValueError):
        Graph(3, [(0, 1), (1, 0)])
    with pytest.raises(ValueError):
        Graph(3, [(0, 3)])
    g = Graph(4, [(2, 1), (0, 3)])
    assert g.edges.tolist() == [[0, 3], [1, 2]]
    assert g.neighbors(1).tolist() == [2]
    assert g.degrees().tolist() == [1, 1, 1, 1]
    assert g.to_networkx().number_of_edges() == 2


def test_edgelist_roundtrip(tmp_path):
    g = Graph(5, K4_PENDANT)
    path = tmp_path / "g.txt"
    write_edgelist(g, path)
    assert path.read_text().splitlines()[0] == "5 7"
    assert read_edgelist(path) == g
    assert format_edgelist(Graph(2)) == "2 0\n"


@pytest.mark.parametrize("body", ["", "3 2\n0 1\n", "3 1\n1 0\n", "3 1\n0 3\n"])
def test_edgelist_errors(tmp_path, body):
    path = tmp_path / "bad.txt"
    path.write_text(body)
    with pytest.raises(ValueError):
        read_edgelist(path)


# -------------------------------------------------------- peel and WP

def test_core_examples():
    assert peel_core(Graph(4, K4), 3).tolist() == [0, 1, 2, 3]
    assert peel_core(Graph(5, PATH5), 3).tolist() == []
    assert peel_core(Graph(5, K4_PENDANT), 3).tolist() == [0, 1, 2, 3]


def test_wp_examples():
    st_ = wp_run(Graph(4, K4), 3)
    assert st_.messages.tolist() == [1] * 12 and st_.marks.tolist() == [1] * 4 and st_.rounds == 1
    st_ = wp_run(Graph(5, PATH5), 3)
    assert not st_.messages.any() and not st_.marks.any()
    g = Graph(5, K4_PENDANT)
    st_ = wp_run(g, 3)
    assert st_.message(3, 4) == 1 and st_.message(4, 3) == 0
    with pytest.raises(KeyError):
        st_.message(0, 4)
    assert st_.as_dict()[(4, 3)] == 0


def test_decompose_examples():
    dec = decompose(Graph(4, K4), 3)
    assert dec.N1.tolist() == [0, 1, 2, 3]
    assert dec.counts == (0, 0, 4, 0, 0, 0, 12)
    dec = decompose(Graph(6), 3)
    assert dec.N0.tolist() == list(range(6)) and dec.counts[3:] == (0, 0, 0, 0)
    dec = decompose(Graph(5, K4_PENDANT), 3)
    assert dec.types[4] == T0
    assert dec.typed_degrees[4].tolist() == [0, 0, 1, 0]
    out = json.loads(decomposition_json(dec))
    assert out["N_1"] == [0, 1, 2, 3] and out["counts"]["m_11"] == 12


@given(graphs(), st.integers(3, 5))
def test_wp_equals_peeling(g, k):
    state = wp_run(g, k)
    core = peel_core(g, k)
    assert np.flatnonzero(state.marks).tolist() == core.tolist()
    both = (state.messages == 1) & (state.messages[g.rev] == 1)
    assert np.array_equal(both, core_induced_edges(g, core))
    assert state.rounds <= 2 * g.m + 1
    fast = wp_fast(g, k)
    assert np.array_equal(fast.messages, state.messages)
    assert np.array_equal(fast.marks, state.marks)


@given(graphs(), st.integers(3, 5))
def test_decompose_identities(g, k):
    dec = decompose(g, k)
    n0, ns, n1, m00, m01, m10, m11 = dec.counts
    assert n0 + ns + n1 == g.n
    assert m00 + m01 + m10 + m11 == 2 * g.m
    assert m01 == m10 and m00 % 2 == 0 and m11 % 2 == 0
    td = dec.typed_degrees
    assert tuple(td.sum(axis=0)) == (m00, m01, m10, m11)
    # (v, w) in M_10 iff (w, v) in M_01
    msg = dec.wp.messages
    src, dst = g.half_edge_sources(), g.indices
    recv = msg[g.rev]
    m10_arcs = set(zip(src[(recv == 1) & (msg == 0)].tolist(), dst[(recv == 1) & (msg == 0)].tolist()))
    m01_arcs = set(zip(src[(recv == 0) & (msg == 1)].tolist(), dst[(recv == 0) & (msg == 1)].tolist()))
    assert m10_arcs == {(w, v) for v, w in m01_arcs}
    # type structure: N_0 sends only zeros, N_star has d_10 = k - 1 and no 11, N_1 has no 10
    star, one, zero = dec.types == TSTAR, dec.types == T1, dec.types == T0
    assert not td[zero][:, [1, 3]].any()
    assert np.all(td[star][:, 2] == k - 1) and not td[star][:, 3].any()
    assert not td[one][:, 2].any() and np.all(td[one][:, 3] >= k)
    assert np.all(td[zero][:, 2] <= k - 2)
    assert m10 == (k - 1) * ns + int(td[zero][:, 2].sum())


@given(graphs(), st.integers(3, 5))
def test_no_forbidden_cycles_at_true_fixed_point(g, k):
    # a directed N_star cycle or an N_+ cycle would give a larger post-fixed point
    dec = decompose(g, k)
    assert count_forbidden_cycles(g, dec, k) == (0, 0)


# ------------------------------------------------------ cycle counting

def brute_directed(arcs):
    mult = Counter(arcs)
    nodes = sorted({x for a in mult for x in a})
    total = 0
    for r in range(1, len(nodes) + 1):
        for combo in itertools.combinations(nodes, r):
            first = combo[0]
            for rest in itertools.permutations(combo[1:]):
                cyc = (first,) + rest
                w = 1
                for i in range(r):
                    w *= mult[(cyc[i], cyc[(i + 1) % r])]
                total += w
    return total


def brute_undirected(edges):
    mult = Counter((min(a, b), max(a, b)) for a, b in edges)
    total = sum(c for (a, b), c in mult.items() if a == b)
    total += sum(c * (c - 1) // 2 for (a, b), c in mult.items() if a != b)
    nodes = sorted({x for e in mult for x in e})
    for r in range(3, len(nodes) + 1):
        for combo in itertools.combinations(nodes, r):
            first = combo[0]
            for rest in itertools.permutations(combo[1:]):
                if rest[0] > rest[-1]:
                    continue  # reflection
                cyc = (first,) + rest
                w = 1
                for i in range(r):
                    a, b = cyc[i], cyc[(i + 1) % r]
                    w *= mult[(min(a, b), max(a, b))]
                total += w
    return total


def test_directed_cycle_examples():
    assert count_directed_cycles([]) == 0
    assert count_directed_cycles([(0, 1), (1, 2), (2, 0)]) == 1
    assert count_directed_cycles([(3, 3)]) == 1
    assert count_directed_cycles([(0, 1), (1, 0), (0, 1)]) == 2
    assert count_directed_cycles([(0, 1), (1, 2)]) == 0


def test_undirected_cycle_examples():
    assert count_undirected_cycles([(0, 1), (1, 2), (2, 3)]) == 0
    assert count_undirected_cycles([(0, 1), (1, 2), (2, 0)]) == 1
    assert count_undirected_cycles([(0, 0), (1, 2), (1, 2), (1, 2)]) == 1 + 3
    k4 = count_undirected_cycles(K4)
    assert k4 == 7  # 4 triangles and 3 four-cycles


@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), max_size=12))
def test_directed_cycles_vs_brute_force(arcs):
    assert count_directed_cycles(arcs) == brute_directed(arcs)


@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), max_size=10))
def test_undirected_cycles_vs_brute_force(edges):
    assert count_undirected_cycles(edges) == brute_undirected(edges)


def _with_messages(g, k, ones):
    """Decomposition from hand-set messages (a pseudo-fixed point, not WP output)."""
    msg = np.zeros(2 * g.m, np.int8)
    src = g.half_edge_sources()
    for i, (v, w) in enumerate(zip(src.tolist(), g.indices.tolist())):
        msg[i] = (v, w) in ones
    inc = np.bincount(g.indices, weights=msg, minlength=g.n)
    state = WpState(graph=g, k=k, messages=msg, marks=(inc >= k).astype(np.int8), rounds=0)
    return decompose(g, k, state=state)


def test_forbidden_cycle_fixtures():
    # directed triangle of N_star vertices, each fed one more 1 by a private neighbour
    g = Graph(6, [(0, 1), (1, 2), (0, 2), (0, 3), (1, 4), (2, 5)])
    dec = _with_messages(g, 3, {(0, 1), (1, 2), (2, 0), (3, 0), (4, 1), (5, 2)})
    assert dec.Nstar.tolist() == [0, 1, 2]
    arcs = [(v, w) for (v, w), x in dec.wp.as_dict().items()
            if x == 1 and dec.wp.message(w, v) == 0 and dec.types[v] == TSTAR and dec.types[w] == TSTAR]
    assert count_forbidden_cycles(g, dec)[0] == brute_directed(arcs) == 1
    # a 4-cycle of N_+ vertices with all-zero messages
    g = Graph(8, [(0, 1), (1, 2), (2, 3), (0, 3), (0, 4), (1, 5), (2, 6), (3, 7)])
    dec = _with_messages(g, 3, {(4, 0), (5, 1), (6, 2), (7, 3)})
    assert plus_set(dec).tolist() == [0, 1, 2, 3]
    assert count_forbidden_cycles(g, dec) == (0, 1)
    # a forest on N_+ has no cycle
    g = Graph(8, [(0, 1), (1, 2), (2, 3), (0, 4), (1, 5), (2, 6), (3, 7)])
    dec = _with_messages(g, 3, {(4, 0), (5, 1), (6, 2), (7, 3)})
    assert count_forbidden_cycles(g, dec) == (0, 0)
