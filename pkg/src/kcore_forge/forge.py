"""Forge: sample a graph with prescribed core parameters by typed half-edge matching.

Steps: draw vertex types and typed pseudo-degrees, check the totals, match
half-edges of type 00 with 00, 11 with 11 and 01 with 10, contract, check
simplicity, and accept only if Warning Propagation reproduces the intended
messages. ``forge_conditional`` samples given prescribed totals, which makes
the accepted graph uniform over its class.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import optimize, signal

from . import _kernels as K
from .graph import T0, T1, TSTAR, Graph, count_directed_cycles, count_undirected_cycles, decompose, wp_fast, wp_run
from .llt import full_vectors
from .params import ModelParams, TruncatedPoisson

log = logging.getLogger(__name__)

PARITY, NOT_SIMPLE, WP_MISMATCH, SUCCESS = "parity", "not_simple", "wp_mismatch", "success"
# multigraph edge kinds
E00, E01, E11 = 0, 1, 3


class AttemptsExhausted(RuntimeError):
    pass


@dataclass(frozen=True)
class Assignment:
    """Vertex types and pseudo-degrees; ``deg[v]`` is (d_00, d_01, d_10, d_11)."""

    k: int
    types: np.ndarray
    deg: np.ndarray

    @property
    def n(self):
        return len(self.types)

    @property
    def m_hat(self):
        return tuple(int(x) for x in self.deg.sum(axis=0))

    @property
    def n_hat(self):
        return tuple(int(np.sum(self.types == t)) for t in (T0, TSTAR, T1))

    @property
    def plus_set(self):
        return np.flatnonzero((self.types == T0) & (self.deg[:, 2] == self.k - 2))


@dataclass(frozen=True)
class MultiGraph:
    """Contracted matching. Kind-01 edges run from the 01 endpoint ``u`` to the 10 endpoint ``v``."""

    n: int
    u: np.ndarray
    v: np.ndarray
    kind: np.ndarray

    @property
    def m(self):
        return len(self.u)


@dataclass
class ForgeResult:
    stage: str
    assignment: Assignment | None
    graph: Graph | None = None
    pseudo_messages: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)
    attempts: int = 1

    @property
    def ok(self):
        return self.stage == SUCCESS

    def to_json(self) -> dict:
        a = self.assignment
        diag = self.diagnostics
        return {
            "stage": self.stage,
            "Y": diag.get("Y"),
            "Z": diag.get("Z"),
            "x_star": diag.get("x_star"),
            "x_plus": diag.get("x_plus"),
            "n_hat": list(a.n_hat) if a is not None else None,
            "m_hat": list(a.m_hat) if a is not None else None,
            "attempts": int(self.attempts),
        }


# --------------------------------------------------------------- steps 1-2

def sample_assignment(n: int, params: ModelParams, rng) -> Assignment:
    k = params.k
    l00, l01, l10, l11 = params.lam
    types = rng.choice(3, size=n, p=np.asarray(params.nu) / sum(params.nu)).astype(np.int8)
    deg = np.zeros((n, 4), dtype=np.int64)
    i0 = np.flatnonzero(types == T0)
    i_s = np.flatnonzero(types == TSTAR)
    i1 = np.flatnonzero(types == T1)
    deg[i0, 0] = rng.poisson(l00, len(i0))
    deg[i0, 2] = TruncatedPoisson.at_most(l10, k - 2).sample(rng, len(i0))
    deg[i_s, 1] = rng.poisson(l01, len(i_s))
    deg[i_s, 2] = k - 1
    deg[i1, 1] = rng.poisson(l01, len(i1))
    deg[i1, 3] = TruncatedPoisson.at_least(l11, k).sample(rng, len(i1))
    return Assignment(k=k, types=types, deg=deg)


def parity_ok(assignment, m: int) -> bool:
    m00, m01, m10, m11 = assignment.m_hat if isinstance(assignment, Assignment) else assignment
    return m00 % 2 == 0 and m11 % 2 == 0 and m01 == m10 and m00 + 2 * m01 + m11 == 2 * m


# --------------------------------------------------------------- steps 4-5

def match_halfedges(assignment: Assignment, rng) -> MultiGraph:
    """Uniform perfect matchings on V_00, V_11 and between V_01 and V_10."""
    deg = assignment.deg
    n = assignment.n
    verts = np.arange(n)
    m00, m01, m10, m11 = assignment.m_hat
    if m00 % 2 or m11 % 2 or m01 != m10:
        raise ValueError("half-edge counts do not admit perfect matchings")
    h00 = rng.permutation(np.repeat(verts, deg[:, 0]))
    h11 = rng.permutation(np.repeat(verts, deg[:, 3]))
    h01 = np.repeat(verts, deg[:, 1])
    h10 = rng.permutation(np.repeat(verts, deg[:, 2]))
    u = np.concatenate([h00[0::2], h01, h11[0::2]])
    v = np.concatenate([h00[1::2], h10, h11[1::2]])
    kind = np.concatenate([np.full(m00 // 2, E00), np.full(m01, E01), np.full(m11 // 2, E11)]).astype(np.int8)
    return MultiGraph(n=n, u=u, v=v, kind=kind)


def simplicity(mg: MultiGraph):
    """(simple, Y, Z): Y loops, Z pairs of parallel edges (C(t, 2) per t-fold pair)."""
    loop = mg.u == mg.v
    y = int(loop.sum())
    a = np.minimum(mg.u[~loop], mg.v[~loop])
    b = np.maximum(mg.u[~loop], mg.v[~loop])
    _, counts = np.unique(a.astype(np.int64) * mg.n + b, return_counts=True)
    z = int((counts * (counts - 1) // 2).sum())
    return (y == 0 and z == 0), y, z


def forbidden_cycles(assignment: Assignment, mg: MultiGraph):
    """(X_star, X_plus) on the multigraph, loops and parallel pairs included."""
    star = assignment.types == TSTAR
    sel = (mg.kind == E01) & star[mg.u] & star[mg.v]
    x_star = count_directed_cycles(zip(mg.u[sel], mg.v[sel]))
    plus = np.zeros(assignment.n, bool)
    plus[assignment.plus_set] = True
    sel = (mg.kind == E00) & plus[mg.u] & plus[mg.v]
    x_plus = count_undirected_cycles(zip(mg.u[sel], mg.v[sel]))
    return x_star, x_plus


def contract(mg: MultiGraph) -> Graph:
    simple, _, _ = simplicity(mg)
    if not simple:
        raise ValueError("multigraph is not simple")
    return Graph(mg.n, np.column_stack([mg.u, mg.v]))


# --------------------------------------------------------------- steps 6-7

def pseudo_messages(assignment: Assignment, mg: MultiGraph, graph: Graph | None = None):
    """Intended messages on the half-edges of the contracted graph, and marks."""
    g = graph if graph is not None else contract(mg)
    types = assignment.types
    src = g.half_edge_sources()
    dst = g.indices
    sel = mg.kind == E01
    arcs = set(zip(mg.u[sel].tolist(), mg.v[sel].tolist()))
    msg = (types[src] == T1).astype(np.int8)
    for i in np.flatnonzero(types[src] == TSTAR):
        if (int(src[i]), int(dst[i])) in arcs:
            msg[i] = 1
    marks = (types == T1).astype(np.int8)
    return msg, marks


def _finish(assignment, mg, engine, diagnostics=True, attempts=1):
    simple, y, z = simplicity(mg)
    diag = {"Y": y, "Z": z}
    if diagnostics:
        diag["x_star"], diag["x_plus"] = forbidden_cycles(assignment, mg)
    if not simple:
        return ForgeResult(NOT_SIMPLE, assignment, diagnostics=diag, attempts=attempts)
    g = contract(mg)
    mu_hat, marks_hat = pseudo_messages(assignment, mg, g)
    st = wp_run(g, assignment.k) if engine == "sync" else wp_fast(g, assignment.k)
    if not (np.array_equal(st.messages, mu_hat) and np.array_equal(st.marks, marks_hat)):
        return ForgeResult(WP_MISMATCH, assignment, graph=g, pseudo_messages=mu_hat, diagnostics=diag,
                           attempts=attempts)
    return ForgeResult(SUCCESS, assignment, graph=g, pseudo_messages=mu_hat, diagnostics=diag, attempts=attempts)


def forge_once(n: int, m: int, params: ModelParams, rng, engine: str = "sync", diagnostics: bool = True) -> ForgeResult:
    a = sample_assignment(n, params, rng)
    if not parity_ok(a, m):
        return ForgeResult(PARITY, a)
    return _finish(a, match_halfedges(a, rng), engine, diagnostics)


# ------------------------------------------------- conditional degree laws

@njit(cache=True)
def _split_draws(fa, off_a, fb, off_b, totals, us, out):
    for i in range(totals.shape[0]):
        t = totals[i]
        lo = max(off_a, t - (off_b + fb.shape[0] - 1))
        hi = min(off_a + fa.shape[0] - 1, t - off_b)
        acc = 0.0
        for s in range(lo, hi + 1):
            acc += fa[s - off_a] * fb[t - s - off_b]
        target = us[i] * acc
        acc = 0.0
        res = hi
        for s in range(lo, hi + 1):
            acc += fa[s - off_a] * fb[t - s - off_b]
            if acc >= target:
                res = s
                break
        out[i] = res


class ConditionedSum:
    """Exact sampler of iid counts with weights prod 1/x_i! on [lo, hi] given their sum.

    The law is that of iid (truncated) Poisson variables conditioned on the
    total, for any rate; the rate is tilted so the total sits at the centre
    of the partial-sum laws. Sampling splits the block in halves recursively,
    drawing each half-sum from ``f_a(s) f_b(T - s)`` with the partial-sum laws
    cached per block size. Laws are trimmed below ``1e-15`` of their maximum.
    """

    def __init__(self, lo: int, hi, count: int, total: int):
        self.lo, self.hi, self.count, self.total = int(lo), hi, int(count), int(total)
        top = np.inf if hi is None else hi
        if count == 0:
            if total:
                raise ValueError("nonzero total over an empty block")
            self.fixed = np.zeros(0, np.int64)
            return
        if not lo * count <= total <= top * count:
            raise ValueError(f"total {total} not reachable by {count} counts in [{lo}, {hi}]")
        self.fixed = None
        if total == lo * count:
            self.fixed = np.full(count, lo, np.int64)
        elif hi is not None and total == hi * count:
            self.fixed = np.full(count, hi, np.int64)
        if self.fixed is not None:
            return
        self.subset = (hi is not None and hi - lo == 1)
        if self.subset:
            return
        target = total / count

        def gap(log_rate):
            return self._dist(math.exp(log_rate)).mean() - target

        a, b = -5.0, 5.0
        while gap(a) > 0:
            a -= 5
        while gap(b) < 0:
            b += 5
        self.rate = math.exp(optimize.brentq(gap, a, b, xtol=1e-12))
        self.base = self._dist(self.rate)
        self._laws = {}

    def _dist(self, rate):
        if self.hi is not None:
            d = TruncatedPoisson.at_most(rate, self.hi)
            return d
        return TruncatedPoisson.at_least(rate, self.lo)

    def _law(self, size):
        if size in self._laws:
            return self._laws[size]
        if size == 1:
            s = self.base.support()
            s = s[s >= self.lo]
            arr = self.base.pmf(s)
            off = int(s[0])
        else:
            a = size // 2
            oa, fa = self._law(a)
            ob, fb = self._law(size - a)
            if len(fa) * len(fb) > 4_000_000:
                arr = signal.fftconvolve(fa, fb)
            else:
                arr = np.convolve(fa, fb)
            off = oa + ob
        arr = np.clip(arr, 0, None)
        arr /= arr.max()
        keep = np.flatnonzero(arr > 1e-15)
        law = (off + int(keep[0]), np.ascontiguousarray(arr[keep[0]:keep[-1] + 1]))
        self._laws[size] = law
        return law

    def sample(self, rng) -> np.ndarray:
        if self.fixed is not None:
            return self.fixed.copy()
        if self.subset:
            x = np.full(self.count, self.lo, np.int64)
            x[rng.choice(self.count, self.total - self.lo * self.count, replace=False)] += 1
            return x
        sizes = np.array([self.count], np.int64)
        totals = np.array([self.total], np.int64)
        while sizes.max() > 1:
            split = sizes > 1
            a = sizes // 2
            left = totals.copy()
            for sz in np.unique(sizes[split]):
                idx = np.flatnonzero(sizes == sz)
                oa, fa = self._law(int(sz // 2))
                ob, fb = self._law(int(sz - sz // 2))
                out = np.empty(len(idx), np.int64)
                _split_draws(fa, oa, fb, ob, totals[idx], rng.random(len(idx)), out)
                left[idx] = out
            reps = np.where(split, 2, 1)
            pos = np.cumsum(reps) - reps
            new_sizes = np.empty(reps.sum(), np.int64)
            new_totals = np.empty(reps.sum(), np.int64)
            new_sizes[pos] = np.where(split, a, sizes)
            new_totals[pos] = left
            sp = pos[split] + 1
            new_sizes[sp] = sizes[split] - a[split]
            new_totals[sp] = totals[split] - left[split]
            sizes, totals = new_sizes, new_totals
        return totals


class ConditionalAssignment:
    """Exact law of Forge's steps (1)-(2) given prescribed type counts and totals.

    Given the counts, types form a uniform random partition, the Poisson blocks
    are multinomial and the truncated blocks follow ``ConditionedSum``; none of
    this depends on the rates.
    """

    def __init__(self, n_vec, m_vec, k):
        self.n_vec = tuple(int(x) for x in n_vec)
        self.m_vec = tuple(int(x) for x in m_vec)
        self.k = int(k)
        n0, ns, n1 = self.n_vec
        m00, m01, m10, m11 = self.m_vec
        if m01 != m10 or m00 % 2 or m11 % 2:
            raise ValueError("totals violate m_01 = m_10 or parity")
        if (m00 and not n0) or (m01 and not ns + n1):
            raise ValueError("totals need vertices of a missing type")
        self.d10 = ConditionedSum(0, k - 2, n0, m10 - (k - 1) * ns)
        self.d11 = ConditionedSum(k, None, n1, m11)

    def sample(self, rng) -> Assignment:
        n0, ns, n1 = self.n_vec
        m00, m01, _, _ = self.m_vec
        n = n0 + ns + n1
        perm = rng.permutation(n)
        i0, i_s, i1 = perm[:n0], perm[n0:n0 + ns], perm[n0 + ns:]
        types = np.empty(n, np.int8)
        types[i0], types[i_s], types[i1] = T0, TSTAR, T1
        deg = np.zeros((n, 4), np.int64)
        if n0:
            # uniform multinomial, drawn as a histogram of uniform labels
            deg[i0, 0] = np.bincount(rng.integers(0, n0, m00), minlength=n0)
            deg[i0, 2] = self.d10.sample(rng)
        if ns + n1:
            deg[perm[n0:], 1] = np.bincount(rng.integers(0, ns + n1, m01), minlength=ns + n1)
        deg[i_s, 2] = self.k - 1
        if n1:
            deg[i1, 3] = self.d11.sample(rng)
        return Assignment(k=self.k, types=types, deg=deg)


def targets_event(assignment: Assignment, n_vec, m_vec) -> bool:
    return assignment.n_hat == tuple(n_vec) and assignment.m_hat == tuple(m_vec)


def conditional_vectors(n, m, target_N, target_M):
    n_star, n_1 = target_N
    m_10, m_11 = target_M
    if int(m_11) % 2:
        raise ValueError("target m_11 must be even")
    if n_star + n_1 > n or 2 * m_10 + m_11 > 2 * m:
        raise ValueError("targets infeasible for n, m")
    return full_vectors(target_N, target_M, n, m)


# ------------------------------------------------------ conditional Forge

def forge_conditional(n, m, params: ModelParams | int, target_N, target_M, rng, max_attempts=10 ** 9,
                      method: str = "exact", engine: str = "fast", stats: list | None = None,
                      progress_every: int = 10 ** 6) -> ForgeResult:
    """First success of Forge given the totals event for ``(target_N, target_M)``.

    ``method="rejection"`` redraws steps (1)-(2) until the totals match;
    ``method="exact"`` draws from that conditional law directly. Either way a
    step (5) or (7) failure restarts from step (1). ``stats``, if given,
    collects the result of every attempt that reached step (4). The exact
    method never touches the rates, so ``params`` may be just the integer k.
    """
    n_vec, m_vec = conditional_vectors(n, m, target_N, target_M)
    if method == "exact":
        cond = ConditionalAssignment(n_vec, m_vec, params if isinstance(params, int) else params.k)
    elif isinstance(params, int):
        raise ValueError("the rejection method needs ModelParams")
    else:
        cond = None
    draws = 0
    for attempt in range(1, max_attempts + 1):
        if cond is not None:
            a = cond.sample(rng)
            draws += 1
        else:
            while True:
                draws += 1
                if draws > max_attempts:
                    raise AttemptsExhausted(f"no totals hit after {max_attempts} draws")
                if progress_every and draws % progress_every == 0:
                    log.info("forge_conditional: %d draws", draws)
                a = sample_assignment(n, params, rng)
                if targets_event(a, n_vec, m_vec):
                    break
        res = _finish(a, match_halfedges(a, rng), engine, diagnostics=stats is not None, attempts=attempt)
        if stats is not None:
            stats.append(res)
        if res.ok:
            res.diagnostics["draws"] = draws
            return res
    raise AttemptsExhausted(f"no success after {max_attempts} attempts")


def verify_success(res: ForgeResult) -> None:
    """Assert the success invariants: simple graph, WP messages and classes reproduced."""
    assert res.ok
    dec = decompose(res.graph, res.assignment.k)
    assert np.array_equal(dec.wp.messages, res.pseudo_messages)
    assert np.array_equal(dec.types, res.assignment.types)
    assert dec.counts == res.assignment.n_hat + res.assignment.m_hat


# ------------------------------------------------- tiny-n batch sampler

TINY_MAX_N = 62


def _block_table(count, total, lo, hi):
    """R[j, t]: total weight prod 1/x_i! of j counts in [lo, hi] summing to t."""
    R = np.zeros((count + 1, total + 1))
    R[0, 0] = 1.0
    top = total if hi is None else min(hi, total)
    w = np.zeros(total + 1)
    xs = np.arange(lo, top + 1)
    if len(xs):
        w[xs] = np.exp(-np.array([math.lgamma(x + 1) for x in xs]))
    if count >= 1:
        R[1] = w
    for j in range(2, count + 1):
        R[j] = np.convolve(R[j - 1], w)[:total + 1]
    return R


def forge_conditional_batch(n, m, k, target_N, target_M, samples, seed, max_attempts=10 ** 10):
    """``samples`` independent successes of conditional Forge on a tiny vertex set.

    Same law as ``forge_conditional(method="exact")``. The conditional law of
    the degrees given the totals does not depend on the Poisson rates, so no
    ModelParams are needed. Returns (edge-key array, info dict).
    """
    if n > TINY_MAX_N:
        raise ValueError(f"batch sampler needs n <= {TINY_MAX_N}")
    (n0, ns, n1), (m00, m01, m10, m11) = conditional_vectors(n, m, target_N, target_M)
    rest = m10 - (k - 1) * ns
    if rest < 0 or rest > (k - 2) * n0 or m11 < k * n1 or (m11 and not n1) or (m00 and not n0) \
            or (m01 and not ns + n1):
        raise ValueError("targets cannot be realised by any typed degree assignment")
    R10 = _block_table(n0, max(rest, 0), 0, k - 2)
    R11 = _block_table(n1, m11, k, None)
    keys, attempts, not_simple, mismatch = K.tiny_forge(n0, ns, n1, m00, m01, m10, m11, k, R10, R11,
                                                         int(samples), int(seed) % (2 ** 32), int(max_attempts))
    if len(keys) < samples:
        raise AttemptsExhausted(f"{len(keys)} of {samples} successes after {attempts} attempts")
    return keys, {"attempts": int(attempts), "not_simple": int(not_simple), "wp_mismatch": int(mismatch)}
