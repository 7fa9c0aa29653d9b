"""Monte Carlo harness and exact small-case oracles.

Uniform G(n, m) sampling, empirical laws of the core parameters, the census of
Gamma_{n,m}(N, M) at tiny n, and the statistical comparisons of simulation
against the analytic predictions.
"""

from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import _kernels as K
from .forge import (NOT_SIMPLE, SUCCESS, ConditionalAssignment, _finish, conditional_vectors,
                    forge_conditional_batch, match_halfedges)
from .graph import Graph
from .llt import clt_covariance, llt_core_probability
from .params import ModelParams, derive_params

OBS_SCHEMA = ("n_star", "n_1", "m_10", "m_11")
ENUM_LIMIT = 10 ** 8


class InsufficientReplicates(ValueError):
    pass


# ------------------------------------------------------------------ seeds

def seed_of(rng) -> int:
    """64-bit seed from an int, SeedSequence or Generator (drawing one value from it)."""
    if isinstance(rng, (int, np.integer)):
        return int(rng)
    if isinstance(rng, np.random.SeedSequence):
        return int(rng.generate_state(2, np.uint32).view(np.uint64)[0])
    return int(rng.integers(0, 2 ** 63))


def substream(seed: int, i: int) -> np.random.Generator:
    """Independent stream for replicate ``i``; its draws do not depend on scheduling."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))


# ------------------------------------------------------------------ G(n, m)

def _gnm_draws(n, m, rng):
    total = n * (n - 1) // 2
    if not 0 <= m <= total:
        raise ValueError(f"m={m} outside [0, C({n}, 2)]")
    return total, rng.integers(0, total - np.arange(m, dtype=np.int64))


def sample_gnm(n: int, m: int, rng) -> Graph:
    """Uniform graph with exactly m edges by a partial Fisher-Yates shuffle of the pairs."""
    total, draws = _gnm_draws(n, m, rng)
    idx = K.sparse_fisher_yates(total, draws)
    us = np.empty(m, np.int64)
    vs = np.empty(m, np.int64)
    K.decode_pairs(idx, us, vs)
    return Graph(n, np.column_stack([us, vs]))


# ------------------------------------------------------- empirical laws

@dataclass(frozen=True)
class EmpiricalDist:
    """Counts of observed tuples; ``schema`` names the coordinates."""

    counts: dict
    total: int
    schema: tuple = OBS_SCHEMA

    @classmethod
    def from_rows(cls, rows, schema=OBS_SCHEMA):
        rows = np.asarray(rows, dtype=np.int64).reshape(-1, len(schema))
        c = Counter(map(tuple, rows.tolist()))
        return cls(counts=dict(c), total=len(rows), schema=tuple(schema))

    def merge(self, other: "EmpiricalDist") -> "EmpiricalDist":
        if self.schema != other.schema:
            raise ValueError("schema mismatch")
        c = Counter(self.counts)
        c.update(other.counts)
        return EmpiricalDist(dict(c), self.total + other.total, self.schema)

    def arrays(self):
        """(distinct tuples, counts) sorted lexicographically."""
        if not self.counts:
            return np.zeros((0, len(self.schema)), np.int64), np.zeros(0, np.int64)
        keys = sorted(self.counts)
        return np.array(keys, np.int64), np.array([self.counts[t] for t in keys], np.int64)

    def samples(self) -> np.ndarray:
        keys, cnt = self.arrays()
        return np.repeat(keys, cnt, axis=0)

    def mean(self) -> np.ndarray:
        keys, cnt = self.arrays()
        return (keys * cnt[:, None]).sum(axis=0) / self.total

    def cov(self) -> np.ndarray:
        keys, cnt = self.arrays()
        mu = (keys * cnt[:, None]).sum(axis=0) / self.total
        c = keys - mu
        return (c.T * cnt) @ c / (self.total - 1)

    def to_csv(self) -> str:
        keys, cnt = self.arrays()
        lines = [",".join(self.schema) + ",count"]
        lines += [",".join(map(str, row)) + f",{c}" for row, c in zip(keys.tolist(), cnt.tolist())]
        return "\n".join(lines) + "\n"


def _core_rows(args):
    n, m, k, seed, start, stop = args
    out = np.empty((stop - start, 4), np.int64)
    for i in range(start, stop):
        total, draws = _gnm_draws(n, m, substream(seed, i))
        c = K.gnm_observables(n, total, draws, k)
        if c[0] + c[1] + c[2] != n or c[3] + 2 * c[4] + c[6] != 2 * m or c[4] != c[5]:
            raise AssertionError(f"conservation violated in replicate {i}: {c}")
        out[i - start] = (c[1], c[2], c[5], c[6])
    return out


def mc_core_stats(n: int, m: int, k: int, reps: int, rng, jobs: int = 1) -> EmpiricalDist:
    """Law of (n_star, n_1, m_10, m_11) over ``reps`` independent G(n, m) draws.

    Replicate i uses its own substream of the seed, so the result is the same
    for any ``jobs``.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    seed = seed_of(rng)
    if jobs <= 1:
        rows = _core_rows((n, m, k, seed, 0, reps))
    else:
        cuts = np.linspace(0, reps, jobs + 1).astype(int)
        tasks = [(n, m, k, seed, a, b) for a, b in zip(cuts[:-1], cuts[1:]) if b > a]
        with ProcessPoolExecutor(jobs) as ex:
            rows = np.concatenate(list(ex.map(_core_rows, tasks)))
    return EmpiricalDist.from_rows(rows)


# --------------------------------------------------------------- census

@dataclass(frozen=True)
class Census:
    """Exhaustive tally of every graph with n vertices and m edges by (N, M)."""

    n: int
    m: int
    k: int
    keys: np.ndarray
    obs: np.ndarray

    @property
    def classes(self) -> dict:
        u, c = np.unique(self.obs, axis=0, return_counts=True)
        return {tuple(map(int, t)): int(x) for t, x in zip(u, c)}

    @property
    def total(self) -> int:
        return len(self.keys)

    def largest(self):
        cls = self.classes
        t = max(sorted(cls), key=lambda key: cls[key])
        return t, cls[t]

    def class_keys(self, N, M) -> np.ndarray:
        t = np.array(tuple(N) + tuple(M))
        return np.sort(self.keys[np.all(self.obs == t, axis=1)])

    def graphs(self, N, M):
        return [key_to_graph(self.n, int(key)) for key in self.class_keys(N, M)]


def key_to_graph(n: int, key: int) -> Graph:
    edges = []
    for v in range(n):
        for u in range(v):
            if key >> (v * (v - 1) // 2 + u) & 1:
                edges.append((u, v))
    return Graph(n, edges)


def enumerate_gamma(n: int, m: int, k: int) -> Census:
    """Census of Gamma_{n,m}(N, M) over all m-subsets of the C(n, 2) pairs."""
    pairs = n * (n - 1) // 2
    if pairs > 62:
        raise ValueError("edge keys need C(n, 2) <= 62")
    size = math.comb(pairs, m)
    if size > ENUM_LIMIT:
        raise ValueError(f"C({pairs}, {m}) = {size} exceeds the enumeration guard {ENUM_LIMIT}")
    keys, obs = K.enumerate_classes(n, m, k)
    return Census(n, m, k, keys, obs)


# ---------------------------------------------------------- test helpers

def pool_cells(observed, expected, min_expected=5.0):
    """Merge cells with expected count < ``min_expected``.

    Cells meeting the threshold are kept; the rest are pooled in order into
    groups until each group reaches it, and a short remainder joins the last
    group.
    """
    observed = np.asarray(observed, float)
    expected = np.asarray(expected, float)
    big = expected >= min_expected
    obs_out = list(observed[big])
    exp_out = list(expected[big])
    so = se = 0.0
    go, ge = [], []
    for o, e in zip(observed[~big], expected[~big]):
        so += o
        se += e
        if se >= min_expected:
            go.append(so)
            ge.append(se)
            so = se = 0.0
    if se > 0:
        if ge:
            go[-1] += so
            ge[-1] += se
        else:
            go.append(so)
            ge.append(se)
    return np.array(obs_out + go), np.array(exp_out + ge)


def chi_square(observed, expected, min_expected=5.0, ddof=0):
    """(statistic, dof, p-value) after pooling small cells; p = nan if fewer than 2 cells remain."""
    o, e = pool_cells(observed, expected, min_expected)
    e = e * o.sum() / e.sum()
    dof = len(o) - 1 - ddof
    if dof < 1:
        return float("nan"), dof, float("nan")
    stat = float(((o - e) ** 2 / e).sum())
    return stat, dof, float(stats.chi2.sf(stat, dof))


def tv_distance(p, q) -> float:
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    return float(0.5 * np.abs(p / p.sum() - q / q.sum()).sum())


@dataclass
class StatReport:
    """Rows of (observable, empirical, predicted, stderr, tolerance, pass) plus test statistics."""

    name: str
    rows: list = field(default_factory=list)
    chi2: float | None = None
    dof: int | None = None
    p_value: float | None = None
    tv: float | None = None
    extra: dict = field(default_factory=dict)

    def add(self, observable, empirical, predicted, stderr=float("nan"), tolerance=None, rule="rel"):
        """rule: 'rel' |e - p| <= tol |p|; 'abs' |e - p| <= tol; 'le' e <= tol; 'lt' e < tol; 'ge' e >= tol; 'info' none."""
        e = float(empirical)
        p = float(predicted) if predicted is not None else float("nan")
        if rule == "rel":
            ok = abs(e - p) <= tolerance * abs(p)
        elif rule == "abs":
            ok = abs(e - p) <= tolerance
        elif rule == "le":
            ok = e <= tolerance
        elif rule == "lt":
            ok = e < tolerance
        elif rule == "ge":
            ok = e >= tolerance
        elif rule == "info":
            ok = None
        else:
            raise ValueError(rule)
        self.rows.append({"observable": observable, "empirical": e, "predicted": p, "stderr": float(stderr),
                          "tolerance": tolerance, "rule": rule, "pass": ok})
        return ok

    def row(self, observable) -> dict:
        for r in self.rows:
            if r["observable"] == observable:
                return r
        raise KeyError(observable)

    @property
    def passed(self) -> bool:
        return all(r["pass"] for r in self.rows if r["pass"] is not None)

    def to_json(self) -> dict:
        return {"name": self.name, "rows": self.rows, "chi2": self.chi2, "dof": self.dof,
                "p_value": self.p_value, "tv": self.tv, "extra": self.extra, "pass": self.passed}

    def summary(self) -> str:
        out = [f"[{'PASS' if self.passed else 'FAIL'}] {self.name}"]
        for r in self.rows:
            flag = {True: "ok ", False: "BAD", None: "   "}[r["pass"]]
            out.append(f"  {flag} {r['observable']:<28} emp={r['empirical']:.6g} pred={r['predicted']:.6g} "
                       f"se={r['stderr']:.3g} tol={r['tolerance']} ({r['rule']})")
        return "\n".join(out)


# ------------------------------------------------------ uniformity test

def uniformity_test(n, m, k, target_N=None, target_M=None, forge_samples=10 ** 6, rng=0,
                    census: Census | None = None, p_min=1e-3, tv_max=0.02) -> StatReport:
    """Chi-square and TV of conditional Forge output against the uniform law on the class.

    Without targets the largest class of the census is used.
    """
    census = census if census is not None else enumerate_gamma(n, m, k)
    if target_N is None:
        t, _ = census.largest()
        target_N, target_M = t[:2], t[2:]
    cls = census.class_keys(target_N, target_M)
    if len(cls) == 0:
        raise ValueError(f"class N={tuple(target_N)}, M={tuple(target_M)} is empty")
    keys, info = forge_conditional_batch(n, m, k, target_N, target_M, forge_samples, seed_of(rng))
    pos = np.searchsorted(cls, keys)
    if np.any(pos >= len(cls)) or np.any(cls[np.minimum(pos, len(cls) - 1)] != keys):
        raise AssertionError("Forge produced a graph outside the target class")
    observed = np.bincount(pos, minlength=len(cls))
    expected = np.full(len(cls), forge_samples / len(cls))
    rep = StatReport(f"uniformity n={n} m={m} k={k} N={tuple(target_N)} M={tuple(target_M)}")
    if len(cls) == 1:
        rep.chi2, rep.dof, rep.p_value = 0.0, 0, 1.0
    else:
        rep.chi2, rep.dof, rep.p_value = chi_square(observed, expected)
    rep.tv = tv_distance(observed, expected)
    # TV of an exactly uniform sampler at this size, for scale
    null = np.random.default_rng(seed_of(rng) + 1).multinomial(forge_samples, expected / forge_samples)
    rep.extra.update(info, class_size=len(cls), samples=forge_samples, tv_null_draw=tv_distance(null, expected),
                     tv_noise_floor=math.sqrt(2 / math.pi) * 0.5 * len(cls) * math.sqrt(
                         (1 / len(cls)) * (1 - 1 / len(cls)) / forge_samples))
    rep.add("class_size", len(cls), None, rule="info")
    if len(cls) > 1:
        rep.add("chi2_p_value", rep.p_value, None, tolerance=p_min, rule="ge")
    rep.add("tv_distance", rep.tv, 0.0, tolerance=tv_max, rule="le")
    return rep


# ----------------------------------------------------------- LLT vs MC

def llt_comparison(n, m, k, reps, window=4.0, rng=0, d=None, min_hits=1000, mean_tol=0.10, max_tol=0.25,
                   cov_tol=0.05, dist: EmpiricalDist | None = None, jobs=1) -> StatReport:
    """Binned empirical law of (X, Y) = (n_1, m_11 / 2) against the core point formula.

    Bins are rectangles of about ``c`` standard deviations per side, with ``c``
    chosen so the central bins collect a few times ``min_hits``; the predicted
    bin mass is the lattice sum of the point formula over the bin. Only bins
    inside ``window`` standard deviations with at least ``min_hits`` hits are
    scored. Also compares the normalised covariance with ``clt_covariance``.
    """
    d = 2 * m / n if d is None else d
    params = derive_params(d, k)
    if dist is None:
        if reps < min_hits:
            raise InsufficientReplicates(f"reps={reps} < min_hits={min_hits}")
        dist = mc_core_stats(n, m, k, reps, rng, jobs)
    reps = dist.total
    keys, cnt = dist.arrays()
    X = keys[:, 1]
    Y = keys[:, 3] // 2
    p, q = params.p, params.q
    x0, y0 = n * p * (1 - q), m * p * p
    C = clt_covariance(params)
    sx = math.sqrt(C[0, 0] * n)
    sy = math.sqrt(C[1, 1] * n) * d / 2
    rho = C[0, 1] / math.sqrt(C[0, 0] * C[1, 1])
    c = math.sqrt(4 * min_hits / reps * 2 * math.pi * math.sqrt(1 - rho * rho))
    bx = max(1, int(round(c * sx)))
    by = max(1, int(round(c * sy)))
    ox = int(round(x0)) - bx // 2
    oy = int(round(y0)) - by // 2
    ix = np.floor_divide(X - ox, bx)
    iy = np.floor_divide(Y - oy, by)
    hist = Counter()
    for a, b, w in zip(ix.tolist(), iy.tolist(), cnt.tolist()):
        hist[(a, b)] += w
    rel = []
    hw = int(math.ceil(window * max(sx, sy) / min(bx, by))) + 1
    bins_used = []
    for (a, b), h in sorted(hist.items()):
        if h < min_hits:
            continue
        lx, ly = ox + a * bx, oy + b * by
        cx, cy = (lx + bx / 2 - x0) / sx, (ly + by / 2 - y0) / sy
        if abs(cx) > window or abs(cy) > window or abs(a) > hw or abs(b) > hw:
            continue
        xs, ys = np.meshgrid(np.arange(lx, lx + bx), np.arange(ly, ly + by), indexing="ij")
        pred = float(np.sum(llt_core_probability(xs, ys, n, m, params)))
        emp = h / reps
        rel.append(abs(emp - pred) / pred)
        bins_used.append({"x": int(lx), "y": int(ly), "hits": int(h), "empirical": emp, "predicted": pred})
    if len(rel) < 4:
        raise InsufficientReplicates(f"only {len(rel)} bins reach {min_hits} hits; increase reps")
    rel = np.array(rel)
    rep = StatReport(f"llt n={n} m={m} k={k} reps={reps}")
    rep.extra.update(bin_width=(bx, by), bins=len(rel), bins_detail=bins_used, d=d)
    rep.add("llt_mean_rel_error", rel.mean(), 0.0, rel.std() / math.sqrt(len(rel)), mean_tol, rule="le")
    rep.add("llt_max_rel_error", rel.max(), 0.0, tolerance=max_tol, rule="le")
    # covariance of (X - n p (1-q)) / sqrt(n) and 2 (Y - m p^2) / (d sqrt(n))
    u = (X - x0) / math.sqrt(n)
    v = 2 * (Y - y0) / (d * math.sqrt(n))
    w = cnt / cnt.sum()
    mu_u, mu_v = np.dot(w, u), np.dot(w, v)
    emp_cov = np.array([[np.dot(w, (u - mu_u) ** 2), np.dot(w, (u - mu_u) * (v - mu_v))],
                        [np.dot(w, (u - mu_u) * (v - mu_v)), np.dot(w, (v - mu_v) ** 2)]]) * reps / (reps - 1)
    se = np.sqrt((C * C + np.outer(np.diag(C), np.diag(C))) / reps)
    for (i, j), name in zip([(0, 0), (0, 1), (1, 1)], ["cov_xx", "cov_xy", "cov_yy"]):
        rep.add(name, emp_cov[i, j], C[i, j], se[i, j], cov_tol, rule="rel")
    rep.add("mean_x_normalised", mu_u, 0.0, math.sqrt(C[0, 0] / reps), rule="info")
    rep.add("mean_y_normalised", mu_v, 0.0, math.sqrt(C[1, 1] / reps), rule="info")
    return rep


# -------------------------------------------------- Forge stage statistics

def forge_attempt_records(n, m, params: ModelParams, target_N, target_M, trials, rng, engine="fast"):
    """Per-attempt diagnostics of Forge under the totals event, one dict per attempt."""
    n_vec, m_vec = conditional_vectors(n, m, target_N, target_M)
    cond = ConditionalAssignment(n_vec, m_vec, params.k)
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(seed_of(rng))
    out = []
    for _ in range(trials):
        a = cond.sample(rng)
        res = _finish(a, match_halfedges(a, rng), engine, diagnostics=True)
        dg = res.diagnostics
        out.append({"stage": res.stage, "Y": dg["Y"], "Z": dg["Z"], "x_star": dg["x_star"],
                    "x_plus": dg["x_plus"]})
    return out


def _rate(flags):
    flags = np.asarray(flags, float)
    r = flags.mean() if len(flags) else float("nan")
    return r, math.sqrt(r * (1 - r) / max(len(flags), 1))


def _mean(vals):
    vals = np.asarray(vals, float)
    if len(vals) < 2:
        return float("nan"), float("nan")
    return vals.mean(), vals.std(ddof=1) / math.sqrt(len(vals))


def forge_stage_stats(n, m, k, target_N, target_M, trials, rng, d=None, rel_tol=0.05, p_min=1e-3,
                      records=None) -> StatReport:
    """Stage outcomes and multigraph diagnostics of conditional Forge against their limits."""
    d = 2 * m / n if d is None else d
    params = derive_params(d, k)
    if records is None:
        records = forge_attempt_records(n, m, params, target_N, target_M, trials, rng)
    st = np.array([r["stage"] for r in records])
    xs = np.array([r["x_star"] for r in records])
    xp = np.array([r["x_plus"] for r in records])
    Y = np.array([r["Y"] for r in records])
    Z = np.array([r["Z"] for r in records])
    e2, e3 = xs == 0, xp == 0
    e23 = e2 & e3
    e1 = st != NOT_SIMPLE
    g = params.gamma_plus
    rep = StatReport(f"forge stages n={n} m={m} k={k} trials={len(records)}")
    rep.extra.update(stages={str(s): int(np.sum(st == s)) for s in np.unique(st)}, trials=len(records),
                     e2_and_e3=int(e23.sum()), d=d)
    checks = [
        ("success_rate", _rate(st == SUCCESS), params.zeta),
        ("rate_E2", _rate(e2), 1 - g),
        ("rate_E3", _rate(e3), math.sqrt(1 - g)),
        ("rate_E1_given_E2_E3", _rate(e1[e23]), math.exp(-d / 2 - d * d / 4)),
        ("mean_x_star", _mean(xs), -math.log(1 - g)),
        ("mean_x_plus", _mean(xp), -0.5 * math.log(1 - g)),
        ("mean_Y_given_E2_E3", _mean(Y[e23]), d / 2),
        ("mean_Z_given_E2_E3", _mean(Z[e23]), d * d / 4),
    ]
    for name, (val, se), pred in checks:
        rep.add(name, val, pred, se, rel_tol)
    val, se = _rate(e23)
    rep.add("rate_E2_and_E3", val, (1 - g) ** 1.5, se, rule="info")
    for name, arr in (("mean_Y_all", Y), ("mean_Z_all", Z)):
        val, se = _mean(arr)
        rep.add(name, val, None, se, rule="info")
    # Poisson fit of X_star with the predicted mean
    lam = -math.log(1 - g)
    top = int(xs.max()) if len(xs) else 0
    observed = np.bincount(xs, minlength=top + 2)[:top + 2].astype(float)
    observed[-1] = 0.0
    pmf = stats.poisson.pmf(np.arange(top + 1), lam)
    expected = np.append(pmf, stats.poisson.sf(top, lam)) * len(xs)
    rep.chi2, rep.dof, rep.p_value = chi_square(observed, expected)
    rep.add("x_star_poisson_p_value", rep.p_value, None, tolerance=p_min, rule="ge")
    return rep
