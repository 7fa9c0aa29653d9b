import itertools
import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from kcore_forge import forge as F
from kcore_forge.forge import (AttemptsExhausted, Assignment, ConditionalAssignment, ConditionedSum, MultiGraph,
                               conditional_vectors, forge_conditional, forge_conditional_batch, forge_once,
                               match_halfedges, parity_ok, pseudo_messages, sample_assignment, simplicity,
                               verify_success)
from kcore_forge.graph import T0, T1, TSTAR, decompose, peel_core
from kcore_forge.llt import gamma_count
from kcore_forge.mc import enumerate_gamma, key_to_graph
from kcore_forge.params import derive_params, threshold

P53 = derive_params(5.0, 3)


def assignment(types, deg, k=3):
    return Assignment(k=k, types=np.array(types, np.int8), deg=np.array(deg, np.int64).reshape(-1, 4))


def mg(n, edges, kinds=None):
    u = np.array([a for a, _ in edges], np.int64)
    v = np.array([b for _, b in edges], np.int64)
    kind = np.array(kinds if kinds is not None else [F.E00] * len(edges), np.int8)
    return MultiGraph(n=n, u=u, v=v, kind=kind)


# ------------------------------------------------------------ assignment

def test_sample_assignment_empty():
    a = sample_assignment(0, P53, np.random.default_rng(0))
    assert a.n == 0 and a.m_hat == (0, 0, 0, 0) and a.n_hat == (0, 0, 0)


@given(st.integers(0, 2 ** 32), st.sampled_from([(5.0, 3), (6.0, 4), (8.0, 5)]))
def test_sample_assignment_invariants(seed, dk):
    P = derive_params(*dk)
    k = P.k
    a = sample_assignment(300, P, np.random.default_rng(seed))
    t, d = a.types, a.deg
    assert np.all(d[t == TSTAR, 2] == k - 1)
    assert not d[t == T0][:, [1, 3]].any() and np.all(d[t == T0, 2] <= k - 2)
    assert not d[t == TSTAR][:, [0, 3]].any()
    assert not d[t == T1][:, [0, 2]].any() and np.all(d[t == T1, 3] >= k)
    assert a.m_hat == tuple(d.sum(axis=0))
    assert np.array_equal(a.plus_set, np.flatnonzero((t == T0) & (d[:, 2] == k - 2)))


def test_sample_assignment_m11_mean():
    # E[d_11] per vertex = nu_1 E[Po_{>=k}(dp)] = p(1 - q) dp / (1 - q) = d p^2
    rng = np.random.default_rng(3)
    n, reps = 1000, 2000
    vals = np.array([sample_assignment(n, P53, rng).m_hat[3] / n for _ in range(reps)])
    target = 5.0 * P53.p ** 2
    assert abs(vals.mean() - target) <= 5 * vals.std(ddof=1) / math.sqrt(reps)


def test_parity_examples():
    assert parity_ok((0, 0, 0, 0), 0)
    assert parity_ok((2, 3, 3, 4), 6)
    assert not parity_ok((1, 3, 3, 5), 6)
    assert not parity_ok((2, 3, 2, 4), 6)


# --------------------------------------------------------------- matching

def test_match_examples():
    rng = np.random.default_rng(0)
    empty = match_halfedges(assignment([T0, T0], [0] * 8), rng)
    assert empty.m == 0
    one = match_halfedges(assignment([T0], [2, 0, 0, 0]), rng)
    assert one.u.tolist() == [0] and one.v.tolist() == [0]
    with pytest.raises(ValueError):
        match_halfedges(assignment([T0], [1, 0, 0, 0]), rng)


def test_match_two_vertices_law():
    # 3 perfect matchings of 4 half-edges: one gives two loops, two give a double edge
    a = assignment([T0, T0], [2, 0, 0, 0, 2, 0, 0, 0])
    rng = np.random.default_rng(11)
    reps = 30000
    loops = sum(simplicity(match_halfedges(a, rng))[1] == 2 for _ in range(reps))
    se = math.sqrt(reps / 3 * 2 / 3)
    assert abs(loops - reps / 3) <= 5 * se


@given(st.integers(0, 2 ** 32))
def test_match_preserves_degrees(seed):
    rng = np.random.default_rng(seed)
    a = sample_assignment(60, P53, rng)
    while not (a.m_hat[0] % 2 == 0 and a.m_hat[3] % 2 == 0 and a.m_hat[1] == a.m_hat[2]):
        a = sample_assignment(60, P53, rng)
    g = match_halfedges(a, rng)
    assert 2 * g.m == sum(a.m_hat)
    got = np.zeros((a.n, 4), np.int64)
    for u, v, kd in zip(g.u, g.v, g.kind):
        if kd == F.E00:
            got[u, 0] += 1
            got[v, 0] += 1
        elif kd == F.E11:
            got[u, 3] += 1
            got[v, 3] += 1
        else:
            got[u, 1] += 1
            got[v, 2] += 1
    assert np.array_equal(got, a.deg)


def test_simplicity_examples():
    assert simplicity(mg(3, [])) == (True, 0, 0)
    assert simplicity(mg(3, [(1, 1)])) == (False, 1, 0)
    assert simplicity(mg(3, [(0, 1), (1, 0)])) == (False, 0, 1)
    assert simplicity(mg(3, [(0, 1), (0, 1), (1, 0)])) == (False, 0, 3)
    # parallel edges across different matchings still count
    assert simplicity(mg(3, [(0, 1), (0, 1)], [F.E00, F.E01])) == (False, 0, 1)


def test_pseudo_message_examples():
    # 0, 3 in N_0; 1 in N_1; 2 in N_star with its 01 half-edge matched to vertex 0
    a = assignment([T0, T1, TSTAR, T0], [0] * 16)
    g = mg(4, [(2, 0), (1, 2), (1, 3), (0, 3)], [F.E01, F.E01, F.E01, F.E00])
    msg, marks = pseudo_messages(a, g)
    G = F.contract(g)
    out = {(int(s), int(t)): int(x) for s, t, x in zip(G.half_edge_sources(), G.indices, msg)}
    assert out[(0, 2)] == out[(0, 3)] == out[(3, 0)] == out[(3, 1)] == 0
    assert out[(1, 2)] == out[(1, 3)] == 1
    assert out[(2, 0)] == 1 and out[(2, 1)] == 0
    assert marks.tolist() == [0, 1, 0, 0]
    with pytest.raises(ValueError):
        pseudo_messages(a, mg(4, [(0, 0)]))


# ---------------------------------------------------------------- forge

def test_forge_once_trivial():
    # n = 1, m = 0 succeeds exactly when the vertex is type 0 with all degrees 0
    rng = np.random.default_rng(0)
    stages = Counter()
    res = None
    while res is None or not res.ok:
        res = forge_once(1, 0, P53, rng)
        stages[res.stage] += 1
    assert set(stages) <= {F.SUCCESS, F.PARITY}
    assert res.graph.n == 1 and res.graph.m == 0
    assert res.assignment.types.tolist() == [T0] and not res.assignment.deg.any()


def test_forge_once_deterministic():
    a = forge_once(1000, 2500, P53, np.random.default_rng(42))
    b = forge_once(1000, 2500, P53, np.random.default_rng(42))
    assert a.stage == b.stage and a.to_json() == b.to_json()


def test_forge_once_diagnostics_json():
    rng = np.random.default_rng(5)
    res = forge_once(20, 50, P53, rng)
    while res.stage == F.PARITY:
        res = forge_once(20, 50, P53, rng)
    out = res.to_json()
    assert set(out) == {"stage", "Y", "Z", "x_star", "x_plus", "n_hat", "m_hat", "attempts"}
    assert out["Y"] is not None and out["x_star"] is not None


def test_forge_conditional_success_invariants():
    rng = np.random.default_rng(8)
    for t in ((0, 6, 0, 20), (1, 4, 4, 12), (0, 0, 0, 0)):
        res = forge_conditional(7, 10, 3, t[:2], t[2:], rng)
        verify_success(res)
        dec = decompose(res.graph, 3)
        assert dec.observables == t
        assert peel_core(res.graph, 3).tolist() == np.flatnonzero(res.assignment.types == T1).tolist()


def test_forge_conditional_whole_core():
    # n_1 = n and m_11 = 2m with m >= kn/2: every vertex lands in the core
    res = forge_conditional(8, 12, 3, (0, 8), (0, 24), np.random.default_rng(2))
    assert peel_core(res.graph, 3).tolist() == list(range(8))


def test_forge_conditional_errors():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        forge_conditional(7, 10, 3, (0, 6), (0, 19), rng)
    with pytest.raises(ValueError):
        forge_conditional(7, 10, 3, (5, 6), (0, 20), rng)
    with pytest.raises(ValueError):
        forge_conditional(7, 10, 3, (0, 6), (0, 20), rng, method="rejection")
    with pytest.raises(AttemptsExhausted):
        # a lone N_star vertex can only match its 10 half-edges to itself: always loops
        forge_conditional(3, 2, 3, (1, 0), (2, 0), rng, max_attempts=20)


def test_conditional_vectors():
    assert conditional_vectors(7, 10, (1, 4), (4, 12)) == ((2, 1, 4), (0, 4, 4, 12))


# ---------------------------------------------------- conditional degrees

def exact_block_law(lo, hi, count, total):
    """All count-tuples in [lo, hi] summing to total, with weights prod 1 / x!."""
    law = {}
    for x in itertools.product(range(lo, hi + 1), repeat=count):
        if sum(x) == total:
            law[x] = math.prod(1 / math.factorial(v) for v in x)
    z = sum(law.values())
    return {x: w / z for x, w in law.items()}


@pytest.mark.parametrize("lo,hi,count,total", [(0, 1, 4, 2), (0, 2, 3, 3), (0, 3, 4, 5), (3, None, 3, 12),
                                               (4, None, 2, 11)])
def test_conditioned_sum_exact_law(lo, hi, count, total):
    law = exact_block_law(lo, hi if hi is not None else total, count, total)
    cs = ConditionedSum(lo, hi, count, total)
    rng = np.random.default_rng(1)
    reps = 20000
    obs = Counter(tuple(cs.sample(rng).tolist()) for _ in range(reps))
    assert set(obs) <= set(law)
    keys = sorted(law)
    f_obs = np.array([obs[x] for x in keys])
    f_exp = np.array([law[x] * reps for x in keys])
    assert stats.chisquare(f_obs, f_exp).pvalue > 1e-3


def test_conditioned_sum_edge_cases():
    rng = np.random.default_rng(0)
    assert ConditionedSum(0, 1, 0, 0).sample(rng).tolist() == []
    assert ConditionedSum(3, None, 4, 12).sample(rng).tolist() == [3, 3, 3, 3]
    assert ConditionedSum(0, 1, 3, 3).sample(rng).tolist() == [1, 1, 1]
    with pytest.raises(ValueError):
        ConditionedSum(0, 1, 3, 4)
    with pytest.raises(ValueError):
        ConditionedSum(0, 1, 0, 2)


def test_conditioned_sum_large_block_totals():
    cs = ConditionedSum(3, None, 5000, 5000 * 5 + 17)
    x = cs.sample(np.random.default_rng(4))
    assert x.sum() == 5000 * 5 + 17 and x.min() >= 3


@given(st.integers(0, 2 ** 32))
def test_conditional_assignment_hits_totals(seed):
    n_vec, m_vec = (40, 10, 150), (30, 45, 45, 700)
    a = ConditionalAssignment(n_vec, m_vec, 3).sample(np.random.default_rng(seed))
    assert a.n_hat == n_vec and a.m_hat == m_vec
    assert np.all(a.deg[a.types == TSTAR, 2] == 2)


def test_conditional_law_matches_rejection():
    """Direct conditional draw against rejection on the totals, at a tiny size."""
    n, k = 3, 3
    P = derive_params(threshold(3) + 0.5, 3)
    n_vec, m_vec = (0, 1, 2), (0, 2, 2, 8)  # about 1.2% of unconditional draws
    rng = np.random.default_rng(6)

    def key(a):
        return tuple(a.types.tolist()) + tuple(a.deg.ravel().tolist())

    rej = Counter()
    while sum(rej.values()) < 800:
        a = sample_assignment(n, P, rng)
        if a.n_hat == n_vec and a.m_hat == m_vec:
            rej[key(a)] += 1
    cond = ConditionalAssignment(n_vec, m_vec, k)
    dirc = Counter(key(cond.sample(rng)) for _ in range(800))
    keys = sorted(set(rej) | set(dirc))
    table = np.array([[rej[x] for x in keys], [dirc[x] for x in keys]])
    assert stats.chi2_contingency(table)[1] > 1e-3


# ---------------------------------------------------- tiny batch sampler

CENSUS = None


def census():
    global CENSUS
    if CENSUS is None:
        CENSUS = enumerate_gamma(7, 10, 3)
    return CENSUS


@pytest.mark.parametrize("t", [(0, 6, 0, 20), (1, 4, 4, 12), (0, 0, 0, 0)])
def test_batch_outputs_in_class(t):
    keys, info = forge_conditional_batch(7, 10, 3, t[:2], t[2:], 2000, seed=3)
    cls = census().class_keys(t[:2], t[2:])
    assert np.isin(keys, cls).all()
    for key in keys[:50]:
        assert decompose(key_to_graph(7, int(key)), 3).observables == t
    assert info["attempts"] >= 2000


def test_batch_matches_python_success_rate():
    t = (1, 4, 4, 12)
    _, info = forge_conditional_batch(7, 10, 3, t[:2], t[2:], 5000, seed=9)
    rate_batch = 5000 / info["attempts"]
    rng = np.random.default_rng(9)
    attempts = sum(forge_conditional(7, 10, 3, t[:2], t[2:], rng).attempts for _ in range(300))
    rate_py = 300 / attempts
    se = math.sqrt(rate_py * (1 - rate_py) / attempts)
    assert abs(rate_py - rate_batch) <= 5 * se


def test_batch_errors():
    with pytest.raises(ValueError):
        forge_conditional_batch(70, 10, 3, (0, 0), (0, 0), 1, seed=0)
    with pytest.raises(ValueError):
        forge_conditional_batch(7, 10, 3, (0, 6), (0, 21), 1, seed=0)


@pytest.mark.parametrize("t", [(0, 6, 0, 20), (1, 4, 4, 12), (0, 0, 0, 0)])
def test_class_size_identity(t):
    """|Gamma| = zeta-free asymptotic count times the measured conditional success rate, exactly."""
    samples = 20000
    _, info = forge_conditional_batch(7, 10, 3, t[:2], t[2:], samples, seed=21)
    rate = samples / info["attempts"]
    se_log = math.sqrt((1 - rate) / samples)
    P = derive_params(threshold(3) + 0.25, 3)
    log_pred = gamma_count(t[:2], t[2:], 7, 10, P, "exact-u") - math.log(P.zeta) + math.log(rate)
    size = census().classes[t]
    assert abs(log_pred - math.log(size)) <= 5 * se_log
