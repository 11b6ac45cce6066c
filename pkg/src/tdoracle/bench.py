"""Assumption checks and the random-query benchmark harness."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .graph import FREE_FLOW, FULL_CONGESTION, TDGraph
from .search import Search, as_mask, td_profile

__all__ = [
    "AssumptionReport",
    "validate_assumptions",
    "BlowupRow",
    "freeflow_blowup",
    "QuerySet",
    "generate_queries",
    "BenchReport",
    "run_benchmark",
    "flat_algorithms",
    "RANGE_CLASSES",
    "DEFAULT_DEPARTURES",
]

RANGE_CLASSES = ("short", "mid", "long")
DEFAULT_DEPARTURES = (9 * 3600.0, 20 * 3600.0)


# -- assumptions ---------------------------------------------------------------


@dataclass
class AssumptionReport:
    zeta_avg: float
    zeta_max: float
    lambda_max: float
    neg_lambda_min: float
    n_pairs: int
    offsets: list[tuple[int, int, float]] = field(default_factory=list, repr=False)

    def as_dict(self) -> dict:
        return {
            "zeta_avg": self.zeta_avg,
            "zeta_max": self.zeta_max,
            "lambda_max": self.lambda_max,
            "neg_lambda_min": self.neg_lambda_min,
            "n_pairs": self.n_pairs,
        }


def validate_assumptions(
    g: TDGraph,
    samples: int = 100,
    seed: int = 0,
    *,
    n_origins: int = 4,
    steps: int = 96,
    departures: tuple[float, float] | None = None,
) -> AssumptionReport:
    """Opposite-direction ratios and slopes of minimum travel times.

    ``zeta`` is ``max / min`` of ``D[o,d](t)`` and ``D[d,o](t)`` over random
    ``(o, d, t)``. The slopes come from finite differences of full profiles
    of ``n_origins`` random origins on a grid of ``steps`` departures.
    ``neg_lambda_min`` is the largest descent rate (``>= 0``).
    """
    rng = np.random.default_rng(seed)
    act = g.active_vertices()
    T = g.period
    lo, hi = departures or (0.0, T)
    zetas, offsets = [], []
    if act.size >= 2:
        for _ in range(samples):
            o, d = rng.choice(act, 2, replace=False)
            t = float(rng.uniform(lo, hi))
            a = _dist(g, int(o), int(d), t)
            b = _dist(g, int(d), int(o), t)
            offsets.append((int(o), int(d), t))
            if not (math.isfinite(a) and math.isfinite(b)) or min(a, b) <= 0:
                continue
            zetas.append(max(a, b) / min(a, b))
    up, down = 0.0, 0.0
    if act.size:
        times = np.arange(steps + 1) * (T / steps)
        for o in rng.choice(act, min(n_origins, act.size), replace=False):
            prof = td_profile(g, int(o), times)
            ok = np.isfinite(prof).all(axis=0)
            if not ok.any():
                continue
            sl = np.diff(prof[:, ok], axis=0) / np.diff(times)[:, None]
            up = max(up, float(sl.max()))
            down = max(down, float(-sl.min()))
    z = np.asarray(zetas)
    return AssumptionReport(
        zeta_avg=float(z.mean()) if z.size else 1.0,
        zeta_max=float(z.max()) if z.size else 1.0,
        lambda_max=max(up, 0.0),
        neg_lambda_min=max(down, 0.0),
        n_pairs=int(z.size),
        offsets=offsets,
    )


def _dist(g, o, d, t):
    s = Search(g, o, t)
    s.run(target=d)
    return s.distance(d)


@dataclass
class BlowupRow:
    F: int
    avg_ext: float
    max_ext: int
    avg_ratio: float
    max_ratio: float

    def as_dict(self) -> dict:
        return self.__dict__.copy()


def freeflow_blowup(g: TDGraph, origins, F_values) -> list[BlowupRow]:
    """Growth of free-flow balls when widened to their full-congestion radius.

    For each origin and ``F``: take the first ``F`` vertices settled by a
    free-flow search, let ``t_CG`` be the largest full-congestion distance to
    one of them, and add every vertex whose free-flow distance is below
    ``t_CG``. The ratio is the extended size over the initial size.
    """
    origins = [int(o) for o in origins]
    ff = {o: _static_all(g, o, FREE_FLOW) for o in origins}
    rows = []
    for F in F_values:
        F = int(F)
        exts, ratios = [], []
        for o in origins:
            order, dist = ff[o]
            ball = order[:F]
            c = Search(g, o, metric=FULL_CONGESTION)
            c.run(targets=as_mask(g.n, ball))
            t_cg = float(c.label[ball].max())
            ext = ball.size + int(np.count_nonzero(dist[order[F:]] < t_cg))
            exts.append(ext)
            ratios.append(ext / ball.size)
        e = np.asarray(exts)
        r = np.asarray(ratios)
        rows.append(BlowupRow(F, float(e.mean()), int(e.max()), float(r.mean()), float(r.max())))
    return rows


def _static_all(g, o, metric):
    s = Search(g, o, metric=metric)
    s.run()
    return s.settled.copy(), s.label.copy()


# -- queries -----------------------------------------------------------------------


@dataclass
class QuerySet:
    queries: list[tuple[int, int, float]]
    departures: tuple[float, float]
    seed: int
    range_class: str | None = None

    def __len__(self) -> int:
        return len(self.queries)

    def __iter__(self):
        return iter(self.queries)


def _band(cls: str, n: int) -> tuple[int, int]:
    a, b = max(1, n // 100), max(1, n // 10)
    return {"short": (1, a), "mid": (a + 1, b), "long": (b + 1, n)}[cls]


def generate_queries(
    g: TDGraph,
    count: int,
    seed: int = 0,
    *,
    departures: tuple[float, float] = DEFAULT_DEPARTURES,
    range_class: str | None = None,
) -> QuerySet:
    """Random ``(o, d, t)`` with ``t`` uniform in ``departures``.

    With a range class, ``d`` is drawn among the vertices whose Dijkstra rank
    from ``(o, t)`` falls in the band: short up to ``n/100``, mid up to
    ``n/10``, long beyond.
    """
    if range_class is not None and range_class not in RANGE_CLASSES:
        raise ValueError(f"range class must be one of {RANGE_CLASSES}")
    rng = np.random.default_rng(seed)
    act = g.active_vertices()
    out = []
    tries = 0
    while len(out) < count and act.size >= 2:
        tries += 1
        if tries > 50 * max(count, 1):
            raise RuntimeError("could not draw enough queries for this range class")
        o = int(rng.choice(act))
        t = float(rng.uniform(*departures))
        if range_class is None:
            d = int(rng.choice(act))
            if d == o:
                continue
        else:
            s = Search(g, o, t)
            s.run()
            lo, hi = _band(range_class, g.n_active)
            cand = s.settled[lo:hi + 1]  # settle order; index 0 is o itself
            if cand.size == 0:
                continue
            d = int(rng.choice(cand))
        out.append((o, d, t))
    return QuerySet(out, tuple(departures), seed, range_class)


# -- benchmark -------------------------------------------------------------------


@dataclass
class BenchReport:
    rows: list[dict]
    per_query: list[dict] = field(repr=False, default_factory=list)
    store_sizes: dict = field(default_factory=dict)

    def row(self, name: str) -> dict:
        for r in self.rows:
            if r["algorithm"] == name:
                return r
        raise KeyError(name)

    def to_csv(self) -> str:
        return _csv(self.rows)

    def per_query_csv(self) -> str:
        return _csv(self.per_query)

    def table(self) -> str:
        if not self.rows:
            return "(no queries)"
        cols = ["algorithm", "queries", "mean_err_pct", "max_err_pct", "mean_rank", "median_rank", "speedup", "unreachable"]
        lines = ["  ".join(f"{c:>13}" for c in cols)]
        for r in self.rows:
            lines.append("  ".join(_fmt(r.get(c, "")) for c in cols))
        for k, v in self.store_sizes.items():
            lines.append(f"store {k}: {v} bytes")
        return "\n".join(lines)


def _fmt(v):
    if isinstance(v, float):
        return f"{v:>13.4f}"
    return f"{v!s:>13}"


def _csv(rows):
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0].keys()))
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def flat_algorithms(oracle, N: int = 6, r: int = 1) -> dict[str, Callable]:
    return {
        "FCA": oracle.fca,
        f"FCA+({N})": lambda o, d, t: oracle.fca_plus(o, d, t, N),
        f"RQA({r})": lambda o, d, t: oracle.rqa(o, d, t, r),
    }


def _truth(g, o, d, t):
    s = Search(g, o, t)
    s.run(target=d)
    return s.distance(d), s.rank


def run_benchmark(
    algorithms: dict[str, Callable],
    queries,
    graph: TDGraph | None = None,
    *,
    ground_truth: bool = True,
    workers: int = 1,
    store_sizes: dict | None = None,
) -> BenchReport:
    """Run every algorithm on every query; compare with tdd when asked.

    Relative error is ``(value - D) / D``; the rank speedup of an algorithm
    is mean tdd rank over its mean rank.
    """
    qs = list(queries)
    if not qs:
        return BenchReport([], [], dict(store_sizes or {}))
    if ground_truth and graph is None:
        raise ValueError("ground truth needs the graph")

    def one(q):
        o, d, t = q
        rec = {"o": o, "d": d, "t": t}
        if ground_truth:
            rec["tdd"], rec["tdd_rank"] = _truth(graph, o, d, t)
        for name, fn in algorithms.items():
            res = fn(o, d, t)
            rec[name] = res.value
            rec[name + "_rank"] = res.rank
        return rec

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            recs = list(ex.map(one, qs))
    else:
        recs = [one(q) for q in qs]

    rows = []
    tdd_rank = np.array([r["tdd_rank"] for r in recs], dtype=float) if ground_truth else None
    if ground_truth:
        rows.append({
            "algorithm": "TDD", "queries": len(recs), "mean_err_pct": 0.0, "max_err_pct": 0.0,
            "mean_rank": float(tdd_rank.mean()), "median_rank": float(np.median(tdd_rank)),
            "speedup": 1.0, "unreachable": sum(not math.isfinite(r["tdd"]) for r in recs),
        })
    for name in algorithms:
        vals = np.array([r[name] for r in recs], dtype=float)
        ranks = np.array([r[name + "_rank"] for r in recs], dtype=float)
        row = {"algorithm": name, "queries": len(recs)}
        if ground_truth:
            truth = np.array([r["tdd"] for r in recs], dtype=float)
            ok = np.isfinite(truth) & np.isfinite(vals)
            err = np.zeros(vals.size)
            pos = ok & (truth > 0)
            err[pos] = (vals[pos] - truth[pos]) / truth[pos]
            for r, e, k in zip(recs, err, ok):
                r[name + "_err"] = float(e) if k else math.nan
            row["mean_err_pct"] = 100 * float(err[ok].mean()) if ok.any() else math.nan
            row["max_err_pct"] = 100 * float(err[ok].max()) if ok.any() else math.nan
        row["mean_rank"] = float(ranks.mean())
        row["median_rank"] = float(np.median(ranks))
        if ground_truth:
            row["speedup"] = float(tdd_rank.mean() / ranks.mean()) if ranks.mean() > 0 else math.inf
        row["unreachable"] = int(np.count_nonzero(~np.isfinite(vals)))
        rows.append(row)
    return BenchReport(rows, recs, dict(store_sizes or {}))
