"""The acceptance suite, shared by ``kcore-forge validate`` and the test-suite.

Every ``criterion_*`` function runs one numbered check at full scale (or a
reduced scale with ``quick=True``) and returns a ``StatReport`` whose rows
carry the declared tolerances.
"""

from __future__ import annotations

import math
import time

import numpy as np
from scipy import optimize

from . import llt, mc
from .graph import peel_core, wp_run
from .params import derive_params, largest_fixed_point, phi, phi_ell, threshold, contraction_fk
from .mc import StatReport

TITLES = {
    1: "WP equals peeling",
    2: "fixed point and threshold",
    3: "matrix identities",
    4: "LLT normalisation",
    5: "LLT vs Monte Carlo",
    6: "Forge success probability",
    7: "forbidden cycles, loops and multi-edges",
    8: "conditional uniformity",
    9: "u-probability consistency",
    10: "contraction property",
}


def _grid_dk(k, step=0.25, top=10.0):
    dk = threshold(k)
    return dk, np.arange(dk + step, top + 1e-9, step)


# ----------------------------------------------------------------- 1

def criterion_1(seed=1, graphs=2000, quick=False):
    graphs = 300 if quick else graphs
    rng = np.random.default_rng(seed)
    t0 = time.time()
    agree_v = agree_e = 0
    for _ in range(graphs):
        n = int(rng.integers(2, 201))
        d = int(rng.integers(1, 9))
        k = int(rng.integers(3, 6))
        m = min(math.ceil(d * n / 2), n * (n - 1) // 2)
        g = mc.sample_gnm(n, m, rng)
        st = wp_run(g, k)
        core = peel_core(g, k)
        agree_v += np.array_equal(np.flatnonzero(st.marks), core)
        inside = np.zeros(n, bool)
        inside[core] = True
        both = (st.messages == 1) & (st.messages[g.rev] == 1)
        src = g.half_edge_sources()
        agree_e += np.array_equal(both, inside[src] & inside[g.indices])
    dt = time.time() - t0
    rep = StatReport(f"1 {TITLES[1]}")
    rep.add("core_vertex_agreement", agree_v / graphs, 1.0, tolerance=0.0, rule="abs")
    rep.add("core_edge_agreement", agree_e / graphs, 1.0, tolerance=0.0, rule="abs")
    rep.add("runtime_s", dt, None, tolerance=30.0, rule="le")
    rep.extra["graphs"] = graphs
    return rep


# ----------------------------------------------------------------- 2

def _max_gap(d, k, xs):
    """max_x phi(x) - x, from a grid maximum refined by bounded scalar search."""
    vals = phi_ell(k, d * xs) - xs
    i = int(np.argmax(vals))
    lo, hi = xs[max(i - 1, 0)], xs[min(i + 1, len(xs) - 1)]
    r = optimize.minimize_scalar(lambda x: -(float(phi_ell(k, d * x)) - x), bounds=(lo, hi), method="bounded",
                                 options={"xatol": 1e-13})
    return max(vals[i], -r.fun)


def scan_threshold(k, lo, hi, step=1e-4, refine_tol=1e-9):
    """Threshold by a d-grid scan of ``max_x phi(x) - x >= 0`` and bisection inside the bracket.

    Does not touch the fixed-point solver; used as the independent oracle.
    """
    xs = np.linspace(1e-6, 1.0, 4001)
    ds = np.arange(lo, hi + step / 2, step)
    gaps = np.array([_max_gap(d, k, xs) for d in ds])
    j = int(np.argmax(gaps >= 0))
    if gaps[j] < 0 or j == 0:
        raise ValueError("threshold not bracketed by the scan window")
    a, b = ds[j - 1], ds[j]
    while b - a > refine_tol:
        c = 0.5 * (a + b)
        if _max_gap(c, k, xs) >= 0:
            b = c
        else:
            a = c
    return 0.5 * (a + b)


def lower_bound_sliver(k):
    """Width w such that d p < k - 2 + sqrt(k - 2) on (d_k, d_k + w); 0 if the bound always holds."""
    dk = threshold(k)
    f = lambda d: derive_params(d, k).p * d - (k - 2 + math.sqrt(k - 2))
    if f(dk + 1e-9) >= 0:
        return 0.0
    return optimize.brentq(f, dk + 1e-9, dk + 2.0, xtol=1e-12) - dk


def criterion_2(seed=1, quick=False):
    t0 = time.time()
    rep = StatReport(f"2 {TITLES[2]}")
    worst_fp = 0.0
    fact_ok = True
    for k in (3, 4, 5, 6):
        dk, grid = _grid_dk(k, step=0.25, top=12.0)
        for d in np.concatenate([[dk + 1e-3], grid]):
            p = largest_fixed_point(d, k)
            worst_fp = max(worst_fp, abs(float(phi(d, k, p)) - p))
        for d in np.concatenate([[dk + 0.05], grid]):
            P = derive_params(d, k)
            fact_ok &= P.p >= (k - 2 + math.sqrt(k - 2)) / d and P.gamma_plus < 1
        for d in (0.5, 1.0, dk - 1e-3):
            fact_ok &= largest_fixed_point(d, k) == 0.0
        # the lower bound on p is false in a sliver just above d_k; report its width
        rep.extra[f"p_bound_fails_below_dk_plus_k{k}"] = lower_bound_sliver(k)
    d3 = threshold(3)
    d3_scan = scan_threshold(3, 3.30, 3.40)
    dt = time.time() - t0
    rep.add("max_fixed_point_residual", worst_fp, 0.0, tolerance=1e-12, rule="le")
    rep.add("d3_bisection_minus_scan", abs(d3 - d3_scan), 0.0, tolerance=1e-6, rule="le")
    rep.add("fact_bounds_hold", float(fact_ok), 1.0, tolerance=0.0, rule="abs")
    rep.add("runtime_s", dt, None, tolerance=5.0, rule="le")
    rep.extra.update(d3=d3, d3_scan=d3_scan, thresholds={k: threshold(k) for k in (3, 4, 5, 6)})
    return rep


# ----------------------------------------------------------------- 3

def criterion_3(seed=1, quick=False):
    t0 = time.time()
    worst_b = worst_m = 0.0
    points = 0
    for k in (3, 4, 5, 6):
        _, grid = _grid_dk(k)
        for d in grid:
            P = derive_params(d, k)
            worst_b = max(worst_b, llt.block_identity_check(P))
            worst_m = max(worst_m, llt.marginal_consistency_check(P))
            points += 1
    dt = time.time() - t0
    rep = StatReport(f"3 {TITLES[3]}")
    rep.add("max_block_identity_error", worst_b, 0.0, tolerance=1e-8, rule="le")
    rep.add("max_marginal_consistency_error", worst_m, 0.0, tolerance=1e-8, rule="le")
    rep.add("runtime_s", dt, None, tolerance=5.0, rule="le")
    rep.extra["grid_points"] = points
    return rep


# ----------------------------------------------------------------- 4

def criterion_4(seed=1, quick=False):
    t0 = time.time()
    rep = StatReport(f"4 {TITLES[4]}")
    n = 10 ** 5
    for d, k in ((5.0, 3), (7.0, 4)):
        m = math.ceil(d * n / 2)
        P = derive_params(d, k)
        s_core = llt.core_lattice_sum(n, m, P)
        s_joint, osc = llt.joint_lattice_sum(n, m, P)
        rep.add(f"core_sum_d{d:g}_k{k}", s_core, 1.0, tolerance=0.01, rule="abs")
        rep.add(f"joint_sum_d{d:g}_k{k}", s_joint, 1.0, tolerance=0.01, rule="abs")
        rep.extra[f"theta_oscillation_d{d:g}_k{k}"] = osc
    rep.add("runtime_s", time.time() - t0, None, tolerance=60.0, rule="le")
    return rep


# ----------------------------------------------------------------- 5

def criterion_5(seed=1, quick=False, jobs=1):
    t0 = time.time()
    if quick:
        n, reps, mt, xt, limit = 2 * 10 ** 4, 2 * 10 ** 4, 0.20, 0.40, 180.0
    else:
        n, reps, mt, xt, limit = 10 ** 5, 10 ** 5, 0.10, 0.25, None
    m = math.ceil(5 * n / 2)
    rep = mc.llt_comparison(n, m, 3, reps, rng=seed, mean_tol=mt, max_tol=xt, cov_tol=0.05, jobs=jobs)
    rep.name = f"5 {TITLES[5]}" + (" (quick)" if quick else "")
    dt = time.time() - t0
    if limit:
        rep.add("runtime_s", dt, None, tolerance=limit, rule="le")
    else:
        rep.add("runtime_s", dt, None, rule="info")
    rep.extra.pop("bins_detail", None)
    return rep


# ------------------------------------------------------------- 6 and 7

_STAGE_CACHE = {}


def _stage_report(seed, quick):
    key = (seed, quick)
    if key not in _STAGE_CACHE:
        n, trials = (2 * 10 ** 4, 2000) if quick else (10 ** 5, 10 ** 4)
        m = math.ceil(5 * n / 2)
        P = derive_params(5.0, 3)
        t = llt.centered_targets(n, m, P)
        t0 = time.time()
        rep = mc.forge_stage_stats(n, m, 3, t[:2], t[2:], trials, seed)
        rep.extra["runtime_s"] = time.time() - t0
        rep.extra["targets"] = t
        _STAGE_CACHE[key] = rep
    return _STAGE_CACHE[key]


def _subset(src: StatReport, name, observables, with_chi=False):
    rep = StatReport(name)
    rep.rows = [dict(r) for r in src.rows if r["observable"] in observables]
    rep.extra = dict(src.extra)
    if with_chi:
        rep.chi2, rep.dof, rep.p_value = src.chi2, src.dof, src.p_value
    return rep


def criterion_6(seed=1, quick=False):
    src = _stage_report(seed, quick)
    return _subset(src, f"6 {TITLES[6]}" + (" (quick)" if quick else ""),
                   {"success_rate", "rate_E2", "rate_E3", "rate_E1_given_E2_E3", "rate_E2_and_E3"})


def criterion_7(seed=1, quick=False):
    src = _stage_report(seed, quick)
    return _subset(src, f"7 {TITLES[7]}" + (" (quick)" if quick else ""),
                   {"mean_x_star", "mean_x_plus", "mean_Y_given_E2_E3", "mean_Z_given_E2_E3",
                    "x_star_poisson_p_value", "mean_Y_all", "mean_Z_all"}, with_chi=True)


# ----------------------------------------------------------------- 8

def criterion_8(seed=1, quick=False):
    t0 = time.time()
    census = mc.enumerate_gamma(7, 10, 3)
    samples = 10 ** 5 if quick else 10 ** 6
    rep = mc.uniformity_test(7, 10, 3, forge_samples=samples, rng=seed, census=census)
    rep.name = f"8 {TITLES[8]}" + (" (quick)" if quick else "") + f": {rep.name}"
    rep.add("census_total", census.total, math.comb(21, 10), tolerance=0, rule="abs")
    rep.add("runtime_s", time.time() - t0, None, tolerance=1200.0, rule="le")
    return rep


# ----------------------------------------------------------------- 9

def u_support_sum(n_vec, params):
    """Sum of u_exact over the box of totals holding all but ~1e-20 of each marginal."""
    n0, ns, n1 = n_vec
    k = params.k
    l00, l01, l10, l11 = params.lam

    def box(mean, sd, lo=0):
        return range(lo, int(mean + 14 * sd + 10))
    m11_mean = n1 * l11 / (1 - params.q) if n1 else 0.0
    total = 0.0
    for m00 in box(n0 * l00, math.sqrt(n0 * l00 + 1)):
        for m01 in box((ns + n1) * l01, math.sqrt((ns + n1) * l01 + 1)):
            for r10 in range(0, (k - 2) * n0 + 1):
                for m11 in box(m11_mean, math.sqrt(m11_mean + 1), k * n1):
                    total += llt.u_exact(n_vec, (m00, m01, (k - 1) * ns + r10, m11), params)
    return total


def criterion_9(seed=1, quick=False):
    t0 = time.time()
    rep = StatReport(f"9 {TITLES[9]}")
    P = derive_params(5.0, 3)
    worst = 0.0
    for n_vec in ((5, 0, 0), (2, 1, 2), (1, 2, 2), (0, 0, 5), (1, 1, 3)):
        worst = max(worst, abs(u_support_sum(n_vec, P) - 1))
    rep.add("u_exact_support_sum_minus_1_n5", worst, 0.0, tolerance=1e-10, rule="le")
    # Gaussian u at n = 200
    n, m = 200, 500
    nv, mv = llt.u_centre(n, m, P)
    ue, ug = llt.u_exact(nv, mv, P), llt.u_gaussian(nv, mv, P)
    rep.add("u_gaussian_over_exact_n200", ug / ue, 1.0, tolerance=0.15, rule="rel")
    t = llt.centered_targets(n, m, P)
    nv2, mv2 = llt.full_vectors(t[:2], t[2:], n, m)
    rep.extra["u_ratio_at_rounded_targets"] = llt.u_gaussian(nv2, mv2, P) / llt.u_exact(nv2, mv2, P)
    rep.extra["u_centre"] = (nv, mv)
    # gamma_count modes at n = 1e4
    for d, k in ((5.0, 3), (7.0, 4)):
        n = 10 ** 4
        m = math.ceil(d * n / 2)
        Pk = derive_params(d, k)
        t = llt.centered_targets(n, m, Pk)
        vals = {mode: llt.gamma_count(t[:2], t[2:], n, m, Pk, mode) for mode in llt.GAMMA_MODES}
        spread = max(vals.values()) - min(vals.values())
        rep.add(f"gamma_mode_spread_n1e4_d{d:g}_k{k}", spread, 0.0, tolerance=0.5, rule="le")
        rep.extra[f"gamma_modes_d{d:g}_k{k}"] = vals
    # census at n = 7
    census = mc.enumerate_gamma(7, 10, 3)
    (ns, n1, m10, m11), size = census.largest()
    d_eff = threshold(3) + 0.25
    P7 = derive_params(d_eff, 3)
    lg = llt.gamma_count((ns, n1), (m10, m11), 7, 10, P7, "exact-u")
    rep.add("gamma_exact_u_minus_log_census_n7", lg - math.log(size), 0.0, tolerance=1.0, rule="abs")
    rep.extra.update(census_class=(ns, n1, m10, m11), census_size=size, d_used_n7=d_eff)
    rep.add("runtime_s", time.time() - t0, None, rule="info")
    return rep


# ----------------------------------------------------------------- 10

CONTRACTION_PAIRS = ((3.5, 3), (4, 3), (5, 3), (7, 3), (10, 3), (5.2, 4), (6, 4), (8, 4),
                     (7, 5), (9, 5), (8.5, 6), (12, 6))


def criterion_10(seed=1, quick=False):
    xs = np.linspace(0.01, 1.0, 100)
    worst_gap = -math.inf
    worst_curv = -math.inf
    for d, k in CONTRACTION_PAIRS:
        P = derive_params(d, k)
        f = contraction_fk(P, xs)
        worst_gap = max(worst_gap, float(np.max(f - xs)))
        worst_curv = max(worst_curv, float(np.max(np.diff(f, 2))))
        if float(contraction_fk(P, 0.0)) != 0.0:
            worst_gap = math.inf
    rep = StatReport(f"10 {TITLES[10]}")
    rep.add("max_f_minus_x", worst_gap, 0.0, tolerance=0.0, rule="lt")
    rep.add("max_second_difference", worst_curv, 0.0, tolerance=1e-9, rule="le")
    rep.extra["pairs"] = CONTRACTION_PAIRS
    return rep


CRITERIA = {i: globals()[f"criterion_{i}"] for i in range(1, 11)}


def run_all(seed=1, quick=False, only=None, jobs=1, log=None):
    out = []
    for i, fn in CRITERIA.items():
        if only and i not in only:
            continue
        kw = {"jobs": jobs} if i == 5 else {}
        rep = fn(seed=seed, quick=quick, **kw)
        out.append(rep)
        if log:
            log(rep)
    return out
