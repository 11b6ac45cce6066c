"""FLAT oracle: summaries from every landmark to every vertex, and its queries.

Query algorithms grow a time-dependent ball from ``(o, t_o)``:

* FCA stops at ``d`` (exact answer) or at the first informed landmark ``l``
  and answers ``D[o,l](t_o) + summary[l,d](t_o + D[o,l](t_o))``;
* FCA+(N) keeps going until ``N`` informed landmarks are settled and returns
  the best of their values;
* RQA(r) additionally grows ``r`` balls from the nearest queued vertices of
  the first ball, each started at its tentative arrival time, and returns
  the best value found by any ball.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .codec import CodecConfig, FlatIndex, Store, encode_block
from .graph import FREE_FLOW, FULL_CONGESTION, TDGraph
from .landmarks import LandmarkSet
from .search import Search, StopReason, as_mask, static_distances
from .trap import SummaryBlock, TrapConfig, Window, build_summaries, estimate_slope_bounds

__all__ = [
    "QueryResult",
    "FlatOracle",
    "EXACT",
    "VIA_LANDMARK",
    "UNREACHABLE",
    "rqa_sigma",
    "OracleBase",
]

EXACT = "exact"
VIA_LANDMARK = "via-landmark"
UNREACHABLE = "unreachable"


def rqa_sigma(eps: float, psi: float, r: int) -> float:
    """Stretch term of RQA with recursion budget ``r``: the answer is within ``1 + sigma``."""
    q = (1.0 + eps / psi) ** (r + 1)
    return eps * q / (q - 1.0)


@dataclass
class QueryResult:
    value: float
    tag: str
    rank: int
    algorithm: str
    landmarks: list[int] = field(default_factory=list)
    guarantee: str = ""
    path: list[int] | None = None

    @property
    def exact(self) -> bool:
        return self.tag == EXACT

    @property
    def reachable(self) -> bool:
        return self.tag != UNREACHABLE


@dataclass(frozen=True)
class _View:
    """What one query sees: the graph and the live-traffic overlay at query start."""

    graph: TDGraph
    patches: dict
    taints: dict


class OracleBase:
    """Shared machinery: summary lookup with live overlays, informed landmarks."""

    graph: TDGraph
    store: Store
    trap_cfg: TrapConfig
    codec_cfg: CodecConfig
    landmark_ids: np.ndarray

    def _init_live(self):
        self._live = _View(self.graph, {}, {})

    # live-traffic state is swapped as a whole, so a query never sees half an update
    def view(self) -> _View:
        return self._live

    def _swap_live(self, view: _View) -> None:
        self._live = view

    def record(self, landmark: int, v: int) -> int:
        raise NotImplementedError

    def coverage_of(self, landmark: int) -> np.ndarray | None:
        return None

    def summary_value(self, view: _View, landmark: int, d: int, t: float) -> float | None:
        """Summary from ``landmark`` to ``d`` departing at absolute time ``t``,
        or ``None`` when the landmark is not informed about ``d`` at ``t``."""
        T = view.graph.period
        for w in view.taints.get(landmark, ()):
            if w.contains(t, T):
                return None
        for w, blk in view.patches.get(landmark, ()):
            if w.contains(t, T):
                k = blk.index_of(d)
                return None if k < 0 else float(blk.eval_index(k, t))
        k = self.record(landmark, d)
        if k < 0:
            return None
        return float(self.store.block(landmark).eval_index(k, t))

    def build_block(self, g: TDGraph, landmark: int, window: Window | None = None,
                    trap_cfg: TrapConfig | None = None) -> SummaryBlock:
        return build_summaries(g, landmark, self.coverage_of(landmark), trap_cfg or self.trap_cfg, window=window)

    # -- ball helpers ------------------------------------------------------

    def _grow_to_informed(self, view, s: Search, d: int, mask: np.ndarray, t_o: float):
        """Resume ``s`` until ``d`` or an informed landmark settles.

        Returns ``("exact", None, None)``, ``("landmark", l, value)`` or
        ``("exhausted", None, None)``; value is measured from ``t_o``.
        """
        while True:
            reason = s.run(target=d, mask=mask)
            if reason == StopReason.TARGET:
                return "exact", None, None
            if reason != StopReason.LANDMARK:
                return "exhausted", None, None
            l = s.last_settled()
            val = self.summary_value(view, l, d, s.arrival(l))
            if val is not None:
                return "landmark", l, (s.t0 - t_o) + s.distance(l) + val

    def _exact(self, s: Search, d: int, alg: str, rank: int) -> QueryResult:
        return QueryResult(s.distance(d), EXACT, rank, alg, [], "exact", s.path_to(d))

    def _rqa_from_ball(self, view, s: Search, o, d, t_o, r, mask, alg, first_l, first_val, guarantee):
        """Spend the recursion budget on balls from the nearest queued vertices of ``s``."""
        g = view.graph
        best, best_l = first_val, [first_l] if first_l is not None else []
        rank = s.rank
        for w in s.frontier()[:r]:
            w = int(w)
            t_w = s.tentative(w)
            sub = Search(g, w, t_w)
            kind, l, val = self._grow_to_informed(view, sub, d, mask, t_w)
            rank += sub.rank
            if kind == "exact":
                cand, used = t_w - t_o + sub.distance(d), []
            elif kind == "landmark":
                cand, used = t_w - t_o + val, [l]
            else:
                continue
            if cand < best:
                best, best_l = cand, used
        if not math.isfinite(best):
            return QueryResult(math.inf, UNREACHABLE, rank, alg)
        return QueryResult(best, VIA_LANDMARK, rank, alg, best_l, guarantee)


class FlatOracle(OracleBase):
    """Summaries from a landmark set to all reachable vertices, with a flat index."""

    def __init__(
        self,
        graph: TDGraph,
        landmarks,
        store: Store,
        index: FlatIndex,
        trap_cfg: TrapConfig,
        codec_cfg: CodecConfig,
        psi: float | None = None,
    ):
        self.graph = graph
        self.landmark_ids = np.sort(np.asarray(list(landmarks), dtype=np.int64))
        self.store = store
        self.index = index
        self.trap_cfg = trap_cfg
        self.codec_cfg = codec_cfg
        self.psi = psi
        self.mask = as_mask(graph.n, self.landmark_ids)
        self._init_live()

    @property
    def epsilon(self) -> float:
        return self.trap_cfg.epsilon

    @classmethod
    def preprocess(
        cls,
        g: TDGraph,
        landmarks,
        trap_cfg: TrapConfig | None = None,
        codec_cfg: CodecConfig | None = None,
        *,
        workers: int = 1,
        psi: float | None = None,
    ) -> "FlatOracle":
        trap_cfg = trap_cfg or TrapConfig()
        codec_cfg = codec_cfg or CodecConfig()
        if trap_cfg.slope_bounds is None:
            trap_cfg = TrapConfig(trap_cfg.epsilon, trap_cfg.tau, estimate_slope_bounds(g), trap_cfg.max_depth)
        lms = np.asarray(list(landmarks.vertices if isinstance(landmarks, LandmarkSet) else landmarks), dtype=np.int64)
        built = build_encoded(g, lms, None, trap_cfg, codec_cfg, workers=workers)
        store = Store.from_blocks(
            [(l, dests.size, data, 0) for l, dests, data in built], codec_cfg, meta=_meta(g, trap_cfg, "flat")
        )
        index = FlatIndex.build(g.n, [(l, dests) for l, dests, _ in built])
        return cls(g, lms, store, index, trap_cfg, codec_cfg, psi)

    def record(self, landmark: int, v: int) -> int:
        return self.index.lookup(landmark, v)

    # -- queries -------------------------------------------------------------

    def _guarantee_fca(self) -> str:
        return f"1+eps+psi (eps={self.epsilon:g})"

    def fca(self, o: int, d: int, t_o: float) -> QueryResult:
        return self.fca_plus(o, d, t_o, 1, _name="FCA")

    def fca_plus(self, o: int, d: int, t_o: float, N: int = 6, *, _name: str | None = None) -> QueryResult:
        if N < 1:
            raise ValueError("N must be >= 1")
        alg = _name or f"FCA+({N})"
        view = self.view()
        s = Search(view.graph, o, t_o)
        best, used = math.inf, []
        found = 0
        while found < N:
            kind, l, val = self._grow_to_informed(view, s, d, self.mask, t_o)
            if kind == "exact":
                return self._exact(s, d, alg, s.rank)
            if kind == "exhausted":
                break
            found += 1
            if val < best:
                best, used = val, [l]
        if not math.isfinite(best):
            return QueryResult(math.inf, UNREACHABLE, s.rank, alg)
        return QueryResult(best, VIA_LANDMARK, s.rank, alg, used, self._guarantee_fca())

    def rqa(self, o: int, d: int, t_o: float, r: int = 1) -> QueryResult:
        if r < 0:
            raise ValueError("r must be >= 0")
        alg = f"RQA({r})"
        view = self.view()
        s = Search(view.graph, o, t_o)
        kind, l, val = self._grow_to_informed(view, s, d, self.mask, t_o)
        if kind == "exact":
            return self._exact(s, d, alg, s.rank)
        if kind == "exhausted":
            return QueryResult(math.inf, UNREACHABLE, s.rank, alg)
        if self.psi:
            guarantee = f"1+sigma (sigma={rqa_sigma(self.epsilon, self.psi, r):.6g})"
        else:
            guarantee = f"1+sigma (eps={self.epsilon:g}, r={r})"
        return self._rqa_from_ball(view, s, o, d, t_o, r, self.mask, alg, l, val, guarantee)

    def query(self, o: int, d: int, t_o: float, algorithm: str = "FCA", **kw) -> QueryResult:
        a = algorithm.upper()
        if a == "FCA":
            return self.fca(o, d, t_o)
        if a in ("FCA+", "FCAPLUS"):
            return self.fca_plus(o, d, t_o, kw.get("N", 6))
        if a == "RQA":
            return self.rqa(o, d, t_o, kw.get("r", 1))
        raise ValueError(f"unknown algorithm {algorithm!r}")


def _meta(g: TDGraph, trap_cfg: TrapConfig, kind: str) -> dict:
    sb = trap_cfg.slope_bounds
    return {
        "kind": kind,
        "period": g.period,
        "epsilon": trap_cfg.epsilon,
        "tau": trap_cfg.grid(g.period)[1],
        "max_depth": trap_cfg.max_depth,
        "lambda_min": sb.lambda_min,
        "lambda_max": sb.lambda_max,
    }


def build_encoded(g, landmarks, coverage, trap_cfg, codec_cfg, *, workers: int = 1):
    """Build and encode one block per landmark.

    ``coverage`` maps landmark -> vertex array (``None`` means everything).
    Returns ``[(landmark, destinations in record order, encoded bytes)]``.
    """
    const = np.array([f.is_constant for f in g.ttfs], dtype=bool)

    def one(l):
        l = int(l)
        cov = None if coverage is None else coverage[l]
        blk = build_summaries(g, l, cov, trap_cfg)
        if coverage is None and len(blk) <= 1 and g.n_active > 1:
            raise ValueError(f"landmark {l} reaches no other vertex; the instance is disconnected")
        data = encode_block(blk, codec_cfg, tails=g.tail, constant_arc=const)
        return l, blk.dests, data

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            return list(ex.map(one, landmarks))
    return [one(l) for l in landmarks]
