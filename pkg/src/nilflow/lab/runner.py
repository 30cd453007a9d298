"""Run one experiment config and write its tables.

Heavy arrays (sequence values, orbit segments) are computed once per
experiment up to the largest N, through the cache when one is given.  The
(N, metric) cells then run on a thread pool and are reduced in a fixed
order, so the CSV bytes depend only on the config.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .._prec import PrecisionStats, frac_float, working
from ..blocks import (
    BLOCK_CSV_HEADER,
    block_pipeline,
    direct_weyl_average,
    r_block_pipeline,
    select_block_length,
)
from ..equidist import (
    Bump,
    Character,
    Constant,
    DiscrepancyReport,
    PolySeq,
    best_obstruction,
    joint_orbit_average,
    l2_star_discrepancy,
    orbit_average,
    orbit_coords,
    star_discrepancy_1d,
    weyl_sum,
)
from ..errors import ConfigInvalid, PrecisionExhausted
from ..hardy import (
    FarFromPolys,
    NearLinearOverM,
    NotPointwiseGood,
    PolyPlusConvergent,
    SymbolicReal,
    distance_class,
    parse_constant,
    parse_expr,
)
from ..nilgroup import NilPoint, SymbolicElement, is_ergodic_heisenberg
from ..randomseq import SigmaSpec, moment_estimate, sample, weight
from ..sequences import FIRST_INDEX, HardySequence, scaled_fractional_parts
from .cache import OrbitCache, cache_key
from .config import ExperimentConfig, GroupSpec, SequenceSpec, config_hash

__all__ = ["RunReport", "run", "write_outputs", "CSV_HEADER"]

CSV_HEADER = ["experiment", "N", "metric", "value", "witness", "seconds"]
DISTANCE_TAGS = (FarFromPolys, PolyPlusConvergent, NearLinearOverM, NotPointwiseGood)


@dataclass
class RunReport:
    config: ExperimentConfig
    config_hash: str
    rows: list
    seconds: float
    escalations: int
    failures: int
    block_rows: list = field(default_factory=list)

    def csv_text(self, timings: bool = False) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow(r.csv_row(timings))
        return buf.getvalue()


# building blocks -----------------------------------------------------------

def _const(s: str) -> SymbolicReal:
    return parse_constant(s)


def build_element(g: GroupSpec) -> SymbolicElement:
    vals = [_const(s) for s in g.b]
    b = SymbolicElement.heisenberg(*vals) if g.layout == "heisenberg" else SymbolicElement(g.dim, vals)
    if g.assume_ergodic:
        return b
    if g.dim == 2 and b.entry(0, 1).is_rational:
        raise ConfigInvalid(f"b = {g.b} is a rational rotation of the circle")
    if g.dim == 3 and not is_ergodic_heisenberg(b.entry(0, 1), b.entry(1, 2)):
        raise ConfigInvalid(f"b = {g.b} does not act ergodically (1, x, y are dependent over Q)")
    if g.dim > 3:
        raise ConfigInvalid("ergodicity is only decided for dim <= 3; set assume_ergodic for larger groups")
    return b


def _x0(g: GroupSpec) -> NilPoint | None:
    if g.x0 is None:
        return None
    return NilPoint(g.dim, tuple(float(_const(s)) for s in g.x0))


def _test_function(spec):
    if spec.kind == "character":
        return Character(spec.kappa, spec.columns)
    if spec.kind == "bump":
        return Bump(spec.columns)
    return Constant(float(_const(spec.value)))


def _seq_values(seq: SequenceSpec, count: int, bits: int, stats: PrecisionStats) -> np.ndarray:
    """x_n for n = FIRST_INDEX, ..., FIRST_INDEX + count - 1 as floats in [0, 1)."""
    hs = HardySequence(seq.expr, bits=bits, stats=stats)
    if seq.integer_part:
        ints = [int(v) ** seq.power for v in hs.integer_parts(count)]
        return scaled_fractional_parts(ints, _const(seq.scale), bits=bits)
    scale = _const(seq.scale)
    if seq.power == 1 and scale.is_rational and scale.rational == 1:
        return hs.fractional_parts(count)
    out = np.empty(count)
    with working(bits):
        c = scale.value(bits)
        for k in range(count):
            out[k] = frac_float(c * hs.value(FIRST_INDEX + k) ** seq.power)
    return out


class _Store:
    """Cache front end that falls through to direct computation."""

    def __init__(self, cache: OrbitCache | None):
        self.cache = cache

    def get(self, compute, **key):
        if self.cache is None:
            return np.asarray(compute())
        return self.cache.get_or_compute(cache_key(**key), compute)


def _row(cfg, N, metric, value, witness=None, seconds=None):
    return DiscrepancyReport(cfg.name, int(N), metric, float(value), witness, seconds)


def _failed(cfg, N, metric, witness=None):
    return _row(cfg, N, metric, math.nan, witness or "precision-exhausted")


def _slug(s: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", s).strip("_")


# per-kind experiments ------------------------------------------------------

def _torus(cfg, store, stats, pool):
    seqs = cfg.sequence_specs()
    n_max = cfg.N[-1]
    if len(seqs) > 1 and "star_discrepancy" in cfg.metrics:
        raise ConfigInvalid("star_discrepancy is only computed on the circle; use l2_star_discrepancy")
    cols = [store.get(lambda s=s: _seq_values(s, n_max, cfg.bits, stats),
                      what="seq", seq=s.model_dump(mode="json"), bits=cfg.bits, count=n_max)
            for s in seqs]
    pts = np.stack(cols, axis=1)

    def cell(job):
        N, metric = job
        t0 = time.perf_counter()
        if metric == "star_discrepancy":
            v, w = star_discrepancy_1d(pts[:N, 0]), None
        elif metric == "l2_star_discrepancy":
            v, w = l2_star_discrepancy(pts[:N]), None
        else:
            v = abs(weyl_sum(pts[:N], cfg.kappa))
            w = "(" + " ".join(map(str, cfg.kappa)) + ")"
        return [_row(cfg, N, metric, v, w, time.perf_counter() - t0)]

    jobs = [(N, m) for N in cfg.N for m in cfg.metrics
            if m != "l2_star_discrepancy" or N <= cfg.l2_max_N]
    return pool(jobs, cell)


def _orbit_segments(cfg, groups, seqs, store, stats):
    n_max = cfg.N[-1]
    out = []
    for g, s in zip(groups, seqs):
        b = build_element(g)
        x0 = _x0(g)

        def compute(s=s, b=b, x0=x0):
            ints = HardySequence(s.expr, bits=cfg.bits, stats=stats).integer_parts(n_max)
            return orbit_coords(b, [int(m) for m in ints], x0, cfg.bits, stats)

        out.append(store.get(compute, what="orbit", b=g.model_dump(mode="json"), seq=s.expr,
                             bits=cfg.bits, start=FIRST_INDEX, count=n_max))
    return out


def _horizontal_rows(cfg, coords, d, witness=None):
    return [_row(cfg, N, "horizontal_l2", l2_star_discrepancy(coords[:N, : d - 1]), witness)
            for N in cfg.N if N <= cfg.l2_max_N]


def _orbit(cfg, store, stats, pool):
    seq = cfg.sequence_specs()[0]
    try:
        (coords,) = _orbit_segments(cfg, [cfg.group], [seq], store, stats)
    except PrecisionExhausted:
        return [_failed(cfg, N, m) for N in cfg.N for m in cfg.metrics]
    fns = [_test_function(t) for t in cfg.test_functions]
    rows = []
    if "haar_gap" in cfg.metrics:
        def cell(job):
            N, f = job
            t0 = time.perf_counter()
            r = orbit_average(None, None, None, f, N, coords=coords)
            return [_row(cfg, N, "haar_gap", r.gap, repr(f), time.perf_counter() - t0)]
        rows += pool([(N, f) for N in cfg.N for f in fns], cell)
    if "horizontal_l2" in cfg.metrics:
        rows += _horizontal_rows(cfg, coords, cfg.group.dim)
    if "distance_class" in cfg.metrics:
        tag = distance_class(parse_expr(seq.expr))
        idx = next(i for i, t in enumerate(DISTANCE_TAGS) if isinstance(tag, t))
        rows.append(_row(cfg, cfg.N[-1], "distance_class", idx, str(tag)))
    return rows


def _joint(cfg, store, stats, pool):
    seqs = cfg.sequence_specs()
    try:
        coords = _orbit_segments(cfg, cfg.groups, seqs, store, stats)
    except PrecisionExhausted:
        return [_failed(cfg, N, m) for N in cfg.N for m in cfg.metrics]
    fns = [_test_function(t) for t in cfg.test_functions]
    rows = []
    if "haar_gap" in cfg.metrics:
        def cell(job):
            N, f = job
            t0 = time.perf_counter()
            r = joint_orbit_average(None, None, None, f, N, coords=coords)
            return [_row(cfg, N, "haar_gap", r.gap, repr(f), time.perf_counter() - t0)]
        rows += pool([(N, f) for N in cfg.N for f in fns], cell)
    if "horizontal_l2" in cfg.metrics:
        for i, (g, c) in enumerate(zip(cfg.groups, coords)):
            rows += _horizontal_rows(cfg, c, g.dim, f"factor={i}")
    return rows


def _blocks(cfg, store, stats, pool):
    a = parse_expr(cfg.sequence_specs()[0].expr)
    kappa = cfg.kappa[0]
    bl = None
    wants_pipeline = {"block_weyl_aggregate", "block_bound", "block_weyl_max"} & set(cfg.metrics)
    if wants_pipeline:
        bl = select_block_length(a, cfg.degree, theta=cfg.theta)
    block_rows: list = []

    def cell(N):
        rows = []
        t0 = time.perf_counter()
        try:
            if wants_pipeline:
                res = block_pipeline(a, kappa, N, block_length=bl, M=cfg.M, bits=cfg.bits)
                secs = time.perf_counter() - t0
                if "block_weyl_aggregate" in cfg.metrics:
                    rows.append(_row(cfg, N, "block_weyl_aggregate", abs(res.aggregate), str(bl), secs))
                if "block_bound" in cfg.metrics:
                    rows.append(_row(cfg, N, "block_bound", res.bound, str(bl), secs))
                if "block_weyl_max" in cfg.metrics:
                    rows.append(_row(cfg, N, "block_weyl_max", res.max_modulus(N // 10), "base>=N/10", secs))
                if N == cfg.N[-1]:
                    block_rows.extend(r.csv_row() for r in res.records)
            if "direct_weyl" in cfg.metrics:
                t1 = time.perf_counter()
                d = direct_weyl_average(a, kappa, FIRST_INDEX, N, cfg.bits)
                rows.append(_row(cfg, N, "direct_weyl", abs(d), None, time.perf_counter() - t1))
            if cfg.R is not None and {"r_block_mean_abs", "r_block_model_bound", "r_block_small_fraction"} & set(cfg.metrics):
                t1 = time.perf_counter()
                eps = float(_const(cfg.eps))
                rr = r_block_pipeline([a], R=cfg.R, N=N, eps=eps, kappa=kappa, bits=cfg.bits)
                secs = time.perf_counter() - t1
                w = f"R={cfg.R} eps={cfg.eps}"
                if "r_block_mean_abs" in cfg.metrics:
                    rows.append(_row(cfg, N, "r_block_mean_abs", rr.mean_abs, w, secs))
                if "r_block_model_bound" in cfg.metrics:
                    rows.append(_row(cfg, N, "r_block_model_bound", rr.model_bound, w, secs))
                if "r_block_small_fraction" in cfg.metrics:
                    rows.append(_row(cfg, N, "r_block_small_fraction", rr.small_fraction, w, secs))
        except PrecisionExhausted:
            rows = [_failed(cfg, N, m) for m in cfg.metrics]
        return rows

    rows = pool(list(cfg.N), cell)
    return rows, block_rows


def _sigma(sc) -> SigmaSpec:
    return SigmaSpec(sc.form, c=sc.c, table=tuple(sc.table), expr=sc.expr,
                     negative_control=sc.negative_control)


def _random(cfg, store, stats, pool):
    spec = _sigma(cfg.sigma)
    n_max = cfg.N[-1]
    seeds = list(range(cfg.seed, cfg.seed + cfg.seeds))
    b = build_element(cfg.group)
    x0 = _x0(cfg.group)
    f = _test_function(cfg.test_functions[0])
    rows = []
    per_seed_metrics = {"growth_ratio", "count_ratio", "sparse_gap"} & set(cfg.metrics)
    full = None
    if "sparse_gap" in cfg.metrics:
        full = store.get(lambda: orbit_coords(b, range(1, n_max + 1), x0, cfg.bits, stats),
                         what="orbit", b=cfg.group.model_dump(mode="json"), seq="n",
                         bits=cfg.bits, start=1, count=n_max)

    def per_seed(seed):
        out = []
        if {"growth_ratio", "sparse_gap"} & set(cfg.metrics):
            smp = sample(spec, seed, terms=n_max)
        else:
            smp = sample(spec, seed, n_max=n_max)
        sparse = None
        if "sparse_gap" in cfg.metrics:
            kept = [int(m) for m in smp.kept[:n_max]]
            sparse = store.get(lambda: orbit_coords(b, kept, x0, cfg.bits, stats),
                               what="sparse-orbit", b=cfg.group.model_dump(mode="json"),
                               sigma=spec.to_json(), seed=seed, bits=cfg.bits, count=n_max)
        w = f"seed={seed}"
        for N in cfg.N:
            if "growth_ratio" in cfg.metrics and spec.form == "power" and spec.c < 1:
                expo = 1 / (1 - float(spec.c))
                out.append(_row(cfg, N, "growth_ratio", smp.term(N) / N**expo, w))
            if "count_ratio" in cfg.metrics:
                out.append(_row(cfg, N, "count_ratio", smp.count(N) / weight(spec, N), w))
            if "sparse_gap" in cfg.metrics:
                full_mean = _mean_of(f(full[:N]))
                sp = _mean_of(f(sparse[:N]))
                out.append(_row(cfg, N, "sparse_gap", abs(sp - full_mean), w))
        return out

    if per_seed_metrics:
        rows += pool(seeds, per_seed)
    mspec = _sigma(cfg.moment_sigma) if cfg.moment_sigma is not None else spec
    for N in cfg.N:
        if "moment" in cfg.metrics:
            m = moment_estimate(mspec, 1, N, trials=cfg.moment_trials, seed=cfg.seed)
            rows.append(_row(cfg, N, "moment", m.value, f"p={m.p}"))
        if "moment_bound" in cfg.metrics:
            rows.append(_row(cfg, N, "moment_bound", math.sqrt(math.log(N) / weight(mspec, N)), "sqrt(log N / w(N))"))
    return rows


def _mean_of(z) -> complex:
    z = np.asarray(z)
    if np.iscomplexobj(z):
        return complex(math.fsum(z.real) / len(z), math.fsum(z.imag) / len(z))
    return complex(math.fsum(z) / len(z), 0.0)


def _poly(coeffs, bits):
    vals = []
    for c in coeffs:
        s = _const(c)
        vals.append(s.rational if s.is_rational else s.value(bits))
    with working(bits):
        return PolySeq.from_monomial(vals)


def _obstruction(cfg, store, stats, pool):
    ps = [_poly(p, cfg.bits) for p in cfg.polys]

    def cell(N):
        t0 = time.perf_counter()
        best = best_obstruction(ps, N, cfg.M)
        secs = time.perf_counter() - t0
        rows = []
        if "cinf_norm" in cfg.metrics:
            rows.append(_row(cfg, N, "cinf_norm", float(best.norm), str(best), secs))
        if "obstructed" in cfg.metrics:
            rows.append(_row(cfg, N, "obstructed", 1.0 if best.norm <= cfg.M else 0.0,
                             str(best) if best.norm <= cfg.M else None, secs))
        return rows

    return pool(list(cfg.N), cell)


KIND_RUNNERS = {
    "torus": _torus,
    "negative-control": _torus,
    "orbit": _orbit,
    "joint": _joint,
    "blocks": _blocks,
    "random": _random,
    "obstruction": _obstruction,
}


# entry points --------------------------------------------------------------

def run(cfg: ExperimentConfig, threads: int = 1, cache: OrbitCache | None = None,
        bits: int | None = None, seed: int | None = None) -> RunReport:
    """Execute one experiment; rows come back sorted by (metric, N, witness)."""
    update = {}
    if bits is not None:
        update["bits"] = int(bits)
    if seed is not None:
        update["seed"] = int(seed)
    if update:
        cfg = cfg.model_copy(update=update)
    stats = PrecisionStats()
    store = _Store(cache)
    t0 = time.perf_counter()

    def pool(jobs, fn):
        if threads > 1:
            with ThreadPoolExecutor(threads) as ex:
                parts = list(ex.map(fn, jobs))
        else:
            parts = [fn(j) for j in jobs]
        return [r for part in parts for r in part]

    try:
        out = KIND_RUNNERS[cfg.kind](cfg, store, stats, pool)
    finally:
        if cache is not None:
            cache.release()
    rows, block_rows = out if isinstance(out, tuple) else (out, [])
    rows.sort(key=lambda r: (r.metric, r.N, r.witness or ""))
    failures = sum(1 for r in rows if math.isnan(r.value))
    return RunReport(cfg, config_hash(cfg), rows, time.perf_counter() - t0, stats.escalations,
                     failures, block_rows)


def write_outputs(report: RunReport, out_dir: str | Path, timings: bool = False) -> Path:
    """results.csv, one TSV (N, value) per metric and witness, blocks.csv, meta.json."""
    d = Path(out_dir) / report.config.name
    d.mkdir(parents=True, exist_ok=True)
    (d / "results.csv").write_text(report.csv_text(timings))
    by_metric: dict[str, list] = {}
    for r in report.rows:
        by_metric.setdefault(r.metric, []).append(r)
    for metric, rows in by_metric.items():
        # several rows per N (seeds, test functions): one series per witness
        if len({r.N for r in rows}) == len(rows):
            series = {metric: rows}
        else:
            series = {}
            for r in rows:
                series.setdefault(f"{metric}__{_slug(r.witness or 'none')}", []).append(r)
        for name, part in series.items():
            lines = ["N\tvalue"] + [f"{r.N}\t{r.value!r}" for r in part]
            (d / f"{name}.tsv").write_text("\n".join(lines) + "\n")
    if report.block_rows:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(BLOCK_CSV_HEADER)
        w.writerows(report.block_rows)
        (d / "blocks.csv").write_text(buf.getvalue())
    meta = {
        "experiment": report.config.name,
        "claim": report.config.claim,
        "config_hash": report.config_hash,
        "rows": len(report.rows),
        "failures": report.failures,
        "precision_escalations": report.escalations,
        "seconds": round(report.seconds, 3),
    }
    (d / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    return d
