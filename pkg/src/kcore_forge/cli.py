"""Command-line entry point: ``kcore-forge <subcommand> [flags]``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

SCHEMA = 1
SUBCOMMANDS = ("params", "threshold", "core", "wp", "forge", "forge-cond", "mc", "enumerate", "validate")
NEEDS_N = {"forge", "forge-cond", "mc", "enumerate"}
DEFAULT_REPS = {"mc": 10_000}


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    subcommand: str
    n: int | None
    m: int | None
    d: float | None
    k: int
    seed: int
    reps: int
    targets: tuple | None
    input: str | None
    out: str | None
    format: str
    jobs: int
    deterministic: bool
    quick: bool
    plots: bool = False
    graph: str | None = None
    only: tuple | None = None
    min_hits: int = 1000
    max_attempts: int = 10 ** 6

    def echo(self) -> dict:
        skip = {"out", "graph", "plots"}
        return {k: v for k, v in asdict(self).items() if k not in skip}


# ------------------------------------------------------------------ parsing

def _common(p):
    p.add_argument("--n", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--d", type=float)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--reps", type=int)
    p.add_argument("--targets", help="n_star,n_1,m_10,m_11")
    p.add_argument("--in", dest="input", help="edge-list file")
    p.add_argument("--out", help="output file (default stdout)")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--deterministic", action="store_true", help="sequential reduction, no timings in output")
    p.add_argument("--quick", action="store_true")
    p.add_argument("--plots", action="store_true", help="write PNG figures next to --out (needs matplotlib)")
    p.add_argument("--graph", help="edge-list path for sampled graphs")
    p.add_argument("--only", help="validate: comma-separated criterion numbers")
    p.add_argument("--min-hits", type=int, default=1000, help="mc: bin occupancy threshold")
    p.add_argument("--max-attempts", type=int, default=10 ** 6, help="forge-cond: attempt cap per sample")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kcore-forge", description="k-core laws, Warning Propagation and Forge.")
    sub = ap.add_subparsers(dest="subcommand", required=True)
    helps = {
        "params": "model parameters, matrices and identity checks",
        "threshold": "core threshold d_k",
        "core": "k-core of an edge-list graph",
        "wp": "WP decomposition of an edge-list graph",
        "forge": "unconditional Forge attempts",
        "forge-cond": "Forge conditioned on the totals of a target class",
        "mc": "Monte Carlo core law against the point formula",
        "enumerate": "exhaustive census of a tiny G(n, m)",
        "validate": "acceptance suite",
    }
    for name in SUBCOMMANDS:
        _common(sub.add_parser(name, help=helps[name]))
    return ap


def _ints(text, flag, length=None):
    try:
        vals = tuple(int(x) for x in text.split(","))
    except ValueError:
        raise UsageError(f"{flag}: expected comma-separated integers, got {text!r}") from None
    if length is not None and len(vals) != length:
        raise UsageError(f"{flag}: expected {length} values, got {len(vals)}")
    return vals


def resolve(ns) -> RunConfig:
    """Validate flags and fill m = ceil(dn / 2) or d = 2m / n."""
    sc = ns.subcommand
    n, m, d = ns.n, ns.m, ns.d
    if m is not None and d is not None:
        raise UsageError("--m and --d are mutually exclusive")
    if n is not None and n < 1:
        raise UsageError("--n must be positive")
    if ns.k < 3:
        raise UsageError("--k must be at least 3")
    if not 0 <= ns.seed < 2 ** 64:
        raise UsageError("--seed must be a 64-bit unsigned integer")
    if ns.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    if sc in NEEDS_N:
        if n is None:
            raise UsageError(f"{sc} needs --n")
        if m is None and d is None:
            raise UsageError(f"{sc} needs --m or --d")
    if d is not None:
        if not d > 0 or not math.isfinite(d):
            raise UsageError("--d must be positive")
        if n is not None:
            m = math.ceil(d * n / 2)
    elif m is not None:
        if m < 0:
            raise UsageError("--m must be nonnegative")
        if n is None:
            raise UsageError("--m needs --n")
        d = 2 * m / n if m else None
    if sc == "params" and d is None:
        raise UsageError("params needs --d (or --n with --m)")
    if sc in ("core", "wp") and not ns.input:
        raise UsageError(f"{sc} needs --in")
    targets = None
    if ns.targets:
        targets = _ints(ns.targets, "--targets", 4)
        if targets[3] % 2:
            raise UsageError("--targets: m_11 must be even")
        if min(targets) < 0:
            raise UsageError("--targets: values must be nonnegative")
    reps = ns.reps if ns.reps is not None else DEFAULT_REPS.get(sc, 1)
    if reps < 1:
        raise UsageError("--reps must be >= 1")
    only = _ints(ns.only, "--only") if ns.only else None
    if only and any(i not in range(1, 11) for i in only):
        raise UsageError("--only: criteria are numbered 1..10")
    if ns.min_hits < 1:
        raise UsageError("--min-hits must be >= 1")
    if ns.max_attempts < 1:
        raise UsageError("--max-attempts must be >= 1")
    if ns.plots and ns.format != "json" and not ns.out:
        raise UsageError("--plots with csv output needs --out")
    return RunConfig(subcommand=sc, n=n, m=m, d=d, k=ns.k, seed=ns.seed, reps=reps, targets=targets,
                     input=ns.input, out=ns.out, format=ns.format, jobs=1 if ns.deterministic else ns.jobs,
                     deterministic=ns.deterministic, quick=ns.quick, plots=ns.plots, graph=ns.graph, only=only,
                     min_hits=ns.min_hits, max_attempts=ns.max_attempts)


# ------------------------------------------------------------------ output

def _clean(obj):
    """JSON-safe copy: NaN/inf to null, numpy scalars and arrays to Python."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _strip_timing(obj):
    if isinstance(obj, dict):
        out = {}
        for k, v in obj.items():
            if k == "runtime_s":
                v = None
            out[k] = _strip_timing(v)
        if out.get("observable") == "runtime_s":
            out["empirical"] = None
        return out
    if isinstance(obj, list):
        return [_strip_timing(v) for v in obj]
    return obj


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _flat_csv(payload) -> str:
    rows = []

    def walk(prefix, v):
        if isinstance(v, dict):
            for k in sorted(v):
                walk(f"{prefix}.{k}" if prefix else str(k), v[k])
        elif isinstance(v, list) and v and isinstance(v[0], (list, dict)):
            for i, x in enumerate(v):
                walk(f"{prefix}[{i}]", x)
        else:
            rows.append((prefix, json.dumps(v) if isinstance(v, list) else v))

    walk("", payload)
    return _csv(("key", "value"), rows)


def _emit(cfg: RunConfig, payload: dict, csv_text: str | None) -> None:
    payload = {"schema": SCHEMA, "config": cfg.echo(), **payload}
    payload = _clean(payload)
    if cfg.deterministic:
        payload = _strip_timing(payload)
    if cfg.format == "json":
        text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    else:
        text = csv_text if csv_text is not None else _flat_csv(payload)
    if cfg.out:
        Path(cfg.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _say(msg: str) -> None:
    print(msg, file=sys.stderr)


def _plot_path(cfg: RunConfig, tag: str) -> Path:
    base = Path(cfg.out) if cfg.out else Path(f"kcore-forge-{cfg.subcommand}.json")
    return base.with_name(f"{base.stem}_{tag}.png")


def _plots(cfg: RunConfig, jobs):
    """Run (tag, fn) plot jobs; matplotlib missing is reported, not fatal."""
    if not cfg.plots:
        return []
    try:
        import matplotlib  # noqa: F401
    except ImportError:
        _say("--plots: matplotlib is not installed (pip install kcore-forge[plots])")
        return []
    written = []
    for tag, fn in jobs:
        path = _plot_path(cfg, tag)
        if fn(path) is not None:
            written.append(str(path))
            _say(f"wrote {path}")
    return written


# ------------------------------------------------------------------ commands

def _params_obj(cfg):
    from .params import derive_params

    return derive_params(cfg.d, cfg.k)


def cmd_params(cfg):
    from . import llt

    pr = _params_obj(cfg)
    checks = {"block_identity": llt.block_identity_check(pr), "marginal_consistency": llt.marginal_consistency_check(pr)}
    mats = {
        "Q4": llt.q4_matrix(pr),
        "Q2": llt.q2_matrix(pr),
        "clt_covariance": llt.clt_covariance(pr),
        "Sigma": llt.sigma_matrix(pr),
        "L": llt.l_matrix(pr),
        "B": llt.b_matrix(pr),
    }
    ok = all(v <= 1e-8 for v in checks.values())
    _say(f"d={pr.d} k={pr.k}: p={pr.p:.12g} q={pr.q:.12g} zeta={pr.zeta:.6g} "
         f"block={checks['block_identity']:.2e} marginal={checks['marginal_consistency']:.2e}")
    return {"params": pr.to_dict(), "matrices": mats, "checks": checks, "pass": ok}, None, 0 if ok else 1


def cmd_threshold(cfg):
    from .params import threshold

    dk = threshold(cfg.k)
    _say(f"d_{cfg.k} = {dk:.12g}")
    return {"k": cfg.k, "threshold": dk}, _csv(("k", "threshold"), [(cfg.k, repr(dk))]), 0


def _read(cfg):
    from .graph import read_edgelist

    try:
        return read_edgelist(cfg.input)
    except (OSError, ValueError) as exc:
        raise UsageError(f"--in: {exc}") from None


def cmd_core(cfg):
    from .graph import peel_core, wp_run

    g = _read(cfg)
    core = peel_core(g, cfg.k)
    marks = np.flatnonzero(wp_run(g, cfg.k).marks)
    if not np.array_equal(core, marks):
        raise AssertionError("WP marks disagree with peeling")
    inside = np.zeros(g.n, bool)
    inside[core] = True
    edges = g.edges[inside[g.edges[:, 0]] & inside[g.edges[:, 1]]]
    _say(f"{cfg.k}-core: {len(core)} vertices, {len(edges)} edges (graph n={g.n}, m={g.m})")
    payload = {"k": cfg.k, "n": g.n, "m": g.m, "core": core.tolist(), "core_size": len(core),
               "core_edges": len(edges)}
    return payload, _csv(("vertex",), [(int(v),) for v in core]), 0


def cmd_wp(cfg):
    from .graph import TYPE_NAMES, decompose

    g = _read(cfg)
    dec = decompose(g, cfg.k)
    _say(f"k={cfg.k}: |N_0|={dec.counts[0]} |N_star|={dec.counts[1]} |N_1|={dec.counts[2]} "
         f"m_ab={dec.counts[3:]} rounds={dec.wp.rounds}")
    rows = [(v, TYPE_NAMES[int(t)], *map(int, dec.typed_degrees[v])) for v, t in enumerate(dec.types)]
    payload = {"decomposition": dec.to_json(), "rounds": dec.wp.rounds}
    return payload, _csv(("vertex", "type", "d_00", "d_01", "d_10", "d_11"), rows), 0


def _write_graph(cfg, g, i, total):
    from .graph import format_edgelist

    if cfg.graph:
        path = Path(cfg.graph)
        if total > 1:
            path = path.with_name(f"{path.stem}.{i}{path.suffix}")
        path.write_text(format_edgelist(g), encoding="utf-8")
        _say(f"wrote {path}")
        return str(path), None
    return None, g.edges.tolist()


_ATTEMPT_COLS = ("sample", "stage", "attempts", "Y", "Z", "x_star", "x_plus", "n_hat", "m_hat", "graph")


def _attempt_rows(records):
    rows = []
    for i, r in enumerate(records):
        rows.append([i] + [json.dumps(r.get(c)) if isinstance(r.get(c), list) else r.get(c)
                           for c in _ATTEMPT_COLS[1:]])
    return _csv(_ATTEMPT_COLS, rows)


def cmd_forge(cfg):
    from .forge import forge_once
    from .mc import substream

    pr = _params_obj(cfg)
    records, ok = [], 0
    for i in range(cfg.reps):
        res = forge_once(cfg.n, cfg.m, pr, substream(cfg.seed, i), engine="fast")
        rec = res.to_json()
        if res.ok:
            ok += 1
            rec["graph"], rec["edges"] = _write_graph(cfg, res.graph, i, cfg.reps)
        records.append(rec)
    stages = {}
    for r in records:
        stages[r["stage"]] = stages.get(r["stage"], 0) + 1
    _say(f"forge n={cfg.n} m={cfg.m} k={cfg.k}: {ok}/{cfg.reps} successes, stages {stages}")
    payload = {"params": pr.to_dict(), "successes": ok, "stages": stages, "samples": records}
    return payload, _attempt_rows(records), 0


def _targets(cfg, pr):
    from .llt import centered_targets

    t = cfg.targets if cfg.targets is not None else centered_targets(cfg.n, cfg.m, pr)
    return tuple(int(x) for x in t)


def cmd_forge_cond(cfg):
    from .forge import AttemptsExhausted, forge_conditional, verify_success
    from .mc import substream

    from .params import DegenerateParamsError

    try:
        pr = _params_obj(cfg)
    except DegenerateParamsError:
        # the conditional law is rate-free; only the default targets need p
        if cfg.targets is None:
            raise
        pr = None
    t = _targets(cfg, pr)
    records = []
    for i in range(cfg.reps):
        try:
            res = forge_conditional(cfg.n, cfg.m, pr if pr is not None else cfg.k, t[:2], t[2:],
                                    substream(cfg.seed, i),
                                    max_attempts=cfg.max_attempts)
        except ValueError as exc:
            raise UsageError(f"--targets: {exc}") from None
        except AttemptsExhausted as exc:
            _say(f"sample {i}: {exc}")
            records.append({"stage": "exhausted", "attempts": cfg.max_attempts})
            continue
        verify_success(res)
        rec = res.to_json()
        rec["graph"], rec["edges"] = _write_graph(cfg, res.graph, i, cfg.reps)
        records.append(rec)
    done = sum(r["stage"] == "success" for r in records)
    mean_att = float(np.mean([r["attempts"] for r in records]))
    _say(f"forge-cond n={cfg.n} m={cfg.m} k={cfg.k} targets={t}: {done}/{cfg.reps} samples, "
         f"mean attempts {mean_att:.1f}" + (f" (1/zeta = {1 / pr.zeta:.1f})" if pr and pr.zeta else ""))
    payload = {"params": pr.to_dict() if pr else None, "targets": t, "successes": done, "samples": records}
    return payload, _attempt_rows(records), 0 if done == cfg.reps else 1


def cmd_mc(cfg):
    from . import report
    from .mc import InsufficientReplicates, llt_comparison, mc_core_stats
    from .params import derive_params

    pr = derive_params(cfg.d, cfg.k)
    dist = mc_core_stats(cfg.n, cfg.m, cfg.k, cfg.reps, cfg.seed, jobs=cfg.jobs)
    mean_tol, max_tol = (0.20, 0.40) if cfg.quick else (0.10, 0.25)
    try:
        rep = llt_comparison(cfg.n, cfg.m, cfg.k, cfg.reps, rng=cfg.seed, d=cfg.d, dist=dist,
                             min_hits=cfg.min_hits, mean_tol=mean_tol, max_tol=max_tol)
    except InsufficientReplicates as exc:
        raise UsageError(f"--reps: {exc}") from None
    _say(rep.summary())
    plots = _plots(cfg, [("core", lambda p: report.plot_core_heatmap(dist, cfg.n, cfg.m, pr, p)),
                         ("bins", lambda p: report.plot_llt_bins(rep, p))])
    keys, cnt = dist.arrays()
    payload = {"params": pr.to_dict(), "mean": dist.mean(), "cov": dist.cov(), "support": int(len(cnt)),
               "llt": rep.to_json(), "plots": plots}
    return payload, dist.to_csv(), 0 if rep.passed else 1


def cmd_enumerate(cfg):
    from . import report
    from .mc import enumerate_gamma

    try:
        census = enumerate_gamma(cfg.n, cfg.m, cfg.k)
    except ValueError as exc:
        raise UsageError(f"--n/--m: {exc}") from None
    cls = census.classes
    largest, size = census.largest()
    _say(f"census n={cfg.n} m={cfg.m} k={cfg.k}: {census.total} graphs, {len(cls)} classes, "
         f"largest {largest} with {size}")
    plots = _plots(cfg, [("census", lambda p: report.plot_census(census, p))])
    classes = [{"N": list(t[:2]), "M": list(t[2:]), "count": c} for t, c in sorted(cls.items())]
    payload = {"total": census.total, "classes": classes, "largest": {"key": list(largest), "count": size},
               "plots": plots}
    rows = [(*t, c) for t, c in sorted(cls.items())]
    return payload, _csv(("n_star", "n_1", "m_10", "m_11", "count"), rows), 0


def cmd_validate(cfg):
    from . import report
    from .acceptance import run_all

    def log(rep):
        _say(rep.summary())

    reps = run_all(seed=cfg.seed, quick=cfg.quick, only=cfg.only, jobs=cfg.jobs, log=log)
    jobs = []
    for r in reps:
        tag = r.name.split(":")[0].strip().replace(" ", "_").lower()
        if r.extra.get("bins_detail"):
            jobs.append((tag, lambda p, r=r: report.plot_llt_bins(r, p)))
        elif any(row["rule"] == "rel" for row in r.rows):
            jobs.append((tag, lambda p, r=r: report.plot_stage_rates(r, p)))
    plots = _plots(cfg, jobs)
    ok = all(r.passed for r in reps)
    verdicts = [(r.name, "PASS" if r.passed else "FAIL") for r in reps]
    for name, v in verdicts:
        _say(f"{v}  {name}")
    payload = {"pass": ok, "criteria": [r.to_json() for r in reps], "plots": plots}
    return payload, _csv(("criterion", "verdict"), verdicts), 0 if ok else 1


COMMANDS = {
    "params": cmd_params,
    "threshold": cmd_threshold,
    "core": cmd_core,
    "wp": cmd_wp,
    "forge": cmd_forge,
    "forge-cond": cmd_forge_cond,
    "mc": cmd_mc,
    "enumerate": cmd_enumerate,
    "validate": cmd_validate,
}


def run(cfg: RunConfig) -> int:
    from .params import DegenerateParamsError

    try:
        payload, csv_text, code = COMMANDS[cfg.subcommand](cfg)
    except DegenerateParamsError as exc:
        raise UsageError(f"--d: {exc}") from None
    _emit(cfg, payload, csv_text)
    return code


def main(argv=None) -> int:
    ap = build_parser()
    ns = ap.parse_args(argv)
    try:
        return run(resolve(ns))
    except UsageError as exc:
        print(f"kcore-forge {ns.subcommand}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
