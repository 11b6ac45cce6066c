"""HORN oracle: a landmark hierarchy with per-level areas of coverage, and HQA.

HQA grows one ball from ``(o, t_o)`` and keeps a guess ``g`` of the target's
Dijkstra rank, starting at ``ceil(sqrt(n))`` and multiplied by ``gamma``
whenever the ball outgrows ``g**a``. The level that fits the guess is the
lowest one whose coverage size reaches ``g``. When the ball settles an
informed landmark of at least that level, the query switches to RQA
restricted to landmarks of that level and above. An informed landmark of a
lower level ends the query early when it is close compared to its
remaining estimate: ``beta * D[o,l] <= esc_ratio * summary[l,d]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .codec import CodecConfig, HornIndex, Store
from .flat import VIA_LANDMARK, UNREACHABLE, OracleBase, QueryResult, _meta, build_encoded
from .graph import TDGraph
from .landmarks import LandmarkHierarchy
from .search import Search, StopReason, as_mask
from .trap import TrapConfig, estimate_slope_bounds

__all__ = ["HornParams", "HornOracle"]


@dataclass(frozen=True)
class HornParams:
    a: float = 1.0
    beta: float = 1.0
    gamma: float = 1.88
    xi: float = 0.1
    esc_ratio: float = 0.1
    r: int = 1

    def __post_init__(self):
        if self.gamma <= 1:
            raise ValueError("gamma must be > 1")
        if self.a <= 0 or self.beta <= 0:
            raise ValueError("a and beta must be > 0")


class HornOracle(OracleBase):
    def __init__(
        self,
        graph: TDGraph,
        hierarchy: LandmarkHierarchy,
        store: Store,
        index: HornIndex,
        trap_cfg: TrapConfig,
        codec_cfg: CodecConfig,
        params: HornParams = HornParams(),
    ):
        self.graph = graph
        self.hierarchy = hierarchy
        self.store = store
        self.index = index
        self.trap_cfg = trap_cfg
        self.codec_cfg = codec_cfg
        self.params = params
        self.landmark_ids = hierarchy.all_landmarks
        self.level = np.full(graph.n, -1, dtype=np.int64)
        for i, lev in enumerate(hierarchy.levels):
            self.level[lev] = i
        L = hierarchy.n_levels
        # masks[i] marks landmarks of level i and above
        self.masks = [as_mask(graph.n, np.concatenate(hierarchy.levels[i:])) for i in range(L)]
        sizes = list(hierarchy.coverage_sizes)
        sizes[-1] = max(sizes[-1], graph.n_active)
        self.level_sizes = sizes
        self._init_live()

    @property
    def epsilon(self) -> float:
        return self.trap_cfg.epsilon

    @classmethod
    def preprocess(
        cls,
        g: TDGraph,
        hierarchy: LandmarkHierarchy,
        trap_cfg: TrapConfig | None = None,
        codec_cfg: CodecConfig | None = None,
        params: HornParams = HornParams(),
        *,
        workers: int = 1,
    ) -> "HornOracle":
        trap_cfg = trap_cfg or TrapConfig()
        codec_cfg = codec_cfg or CodecConfig()
        if trap_cfg.slope_bounds is None:
            trap_cfg = TrapConfig(trap_cfg.epsilon, trap_cfg.tau, estimate_slope_bounds(g), trap_cfg.max_depth)
        lms = hierarchy.all_landmarks
        built = build_encoded(g, lms, hierarchy.coverage, trap_cfg, codec_cfg, workers=workers)
        level = hierarchy.level_of()
        meta = _meta(g, trap_cfg, "horn")
        meta["levels"] = [lev.tolist() for lev in hierarchy.levels]
        meta["coverage_sizes"] = list(map(int, hierarchy.coverage_sizes))
        meta["params"] = params.__dict__
        store = Store.from_blocks([(l, dests.size, data, level[l]) for l, dests, data in built], codec_cfg, meta=meta)
        index = HornIndex.build(g.n, [(l, dests) for l, dests, _ in built])
        return cls(g, hierarchy, store, index, trap_cfg, codec_cfg, params)

    def record(self, landmark: int, v: int) -> int:
        return self.index.lookup(landmark, v)

    def coverage_of(self, landmark: int) -> np.ndarray | None:
        return self.hierarchy.coverage[int(landmark)]

    def appropriate_level(self, guess: float) -> int:
        for i, c in enumerate(self.level_sizes):
            if c >= guess:
                return i
        return len(self.level_sizes) - 1

    def hqa(self, o: int, d: int, t_o: float) -> QueryResult:
        p = self.params
        view = self.view()
        g = view.graph
        s = Search(g, o, t_o)
        any_mask = self.masks[0]
        guess = math.ceil(math.sqrt(max(g.n_active, 1)))
        level = self.appropriate_level(guess)
        best, best_l = math.inf, []
        while True:
            reason = s.run(target=d, mask=any_mask, max_size=max(1, math.ceil(guess ** p.a)))
            if reason == StopReason.TARGET:
                return self._exact(s, d, "HQA", s.rank)
            if reason == StopReason.SIZE:
                guess *= p.gamma
                level = max(level, self.appropriate_level(guess))
                continue
            if reason != StopReason.LANDMARK:
                break
            l = s.last_settled()
            val = self.summary_value(view, l, d, s.arrival(l))
            if val is None:
                continue
            dist = s.distance(l)
            cand = dist + val
            if cand < best:
                best, best_l = cand, [l]
            if self.level[l] >= level:
                # the rest is RQA over landmarks of this level and above
                res = self._rqa_from_ball(
                    view, s, o, d, t_o, p.r, self.masks[level], "HQA", l, cand,
                    f"1+sigma (eps={self.epsilon:g}, level={level + 1})",
                )
                if best < res.value:
                    res.value, res.landmarks = best, best_l
                return res
            if p.beta * dist <= p.esc_ratio * val:
                return QueryResult(cand, VIA_LANDMARK, s.rank, "HQA", [l], "early stop")
        if math.isfinite(best):
            return QueryResult(best, VIA_LANDMARK, s.rank, "HQA", best_l, "best informed")
        return QueryResult(math.inf, UNREACHABLE, s.rank, "HQA")

    def query(self, o: int, d: int, t_o: float, algorithm: str = "HQA", **kw) -> QueryResult:
        if algorithm.upper() != "HQA":
            raise ValueError("the horn oracle answers HQA queries")
        return self.hqa(o, d, t_o)
