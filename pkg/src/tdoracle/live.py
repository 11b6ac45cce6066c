"""Live-traffic disruptions: patch the summaries of nearby landmarks.

A disruption raises the delay of one arc ``(u, v)`` during ``[r_s, r_e]``
(by a factor, or by blocking it until ``r_e``). Landmarks within backward
free-flow distance ``r_e - r_s`` of ``u`` get rebuilt summaries for the
departure times that can reach ``u`` while the disruption is active.

Other landmarks that can reach ``u`` keep their base summaries, which may be
too optimistic inside that departure window; there they are treated as not
informed, so answers stay upper bounds.

The oracle's live state (current graph, patches, taints) is replaced as one
object, so a concurrent query sees either the old or the new state.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
import threading
from dataclasses import asdict, dataclass, field

import numpy as np

from .codec import decode_block, encode_block
from .flat import OracleBase, _View
from .graph import FREE_FLOW, FULL_CONGESTION, TDGraph
from .search import Search, static_distances
from .trap import SummaryBlock, TrapConfig, Window
from .ttf import TTF, SlopeBounds, minimum

__all__ = [
    "Disruption",
    "TemporalSummaryPatch",
    "LiveTraffic",
    "disrupted_ttf",
    "affected_landmarks",
    "compute_window",
    "widened_bounds",
    "apply_disruption",
    "expire_disruption",
]

log = logging.getLogger(__name__)

RAMP_UP = 60.0
_ids = itertools.count(1)


@dataclass(frozen=True)
class Disruption:
    """Delay increase on ``arc`` during ``[r_s, r_e]`` (absolute seconds)."""

    arc: int
    r_s: float
    r_e: float
    factor: float | None = None
    block: bool = False
    id: int = field(default_factory=lambda: next(_ids))
    allow_decrease: bool = False

    def __post_init__(self):
        if not self.r_s <= self.r_e:
            raise ValueError("need r_s <= r_e")
        if self.block == (self.factor is not None):
            raise ValueError("give exactly one of factor or block")
        if self.factor is not None:
            if not self.factor > 0:
                raise ValueError("factor must be positive")
            if self.factor < 1 and not self.allow_decrease:
                raise ValueError("delay decreases would invalidate unpatched landmarks; pass allow_decrease")

    def to_json(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TemporalSummaryPatch:
    landmark: int
    window: Window
    block: SummaryBlock = field(repr=False)
    disruption: int


def _negate(f: TTF) -> TTF:
    return TTF(f.times, -f.delays, f.period, validate=False)


def _maximum(f: TTF, h: TTF) -> TTF:
    m = _negate(minimum(_negate(f), _negate(h)))
    return TTF(m.times, m.delays, m.period)


def disrupted_ttf(f: TTF, d: Disruption) -> tuple[TTF, float, float]:
    """Modified function and the absolute span ``[start, end]`` where it may differ.

    The change is the upper envelope of ``f`` and a plateau that ramps up
    before ``r_s`` and ramps down after ``r_e`` with slope above -1, so the
    result stays FIFO.
    """
    T = f.period
    L = d.r_e - d.r_s
    if L + RAMP_UP >= T:
        raise ValueError("disruption window too long for the period")
    if d.block:
        end_val = f.eval(d.r_e)
        peak = end_val + 0.999 * L
        tail = end_val / 0.999
        pts = [(d.r_s - RAMP_UP, 0.0), (d.r_s, peak), (d.r_e, end_val), (d.r_e + tail, 0.0)]
    else:
        inside = [d.r_s, d.r_e] + [t + k * T for t in f.times for k in (math.floor(d.r_s / T), math.ceil(d.r_s / T))
                                   if d.r_s <= t + k * T <= d.r_e]
        peak = d.factor * max(f.eval(t) for t in inside)
        if d.factor <= 1:
            # a decrease: scale the function inside the window
            return _scaled_inside(f, d), d.r_s - RAMP_UP, d.r_e + f.max_delay
        tail = peak / 0.5
        pts = [(d.r_s - RAMP_UP, 0.0), (d.r_s, peak), (d.r_e, peak), (d.r_e + tail, 0.0)]
    start, end = pts[0][0], pts[-1][0]
    if end - start >= T:
        raise ValueError("disruption too long for the period")
    pts = dict((t % T, v) for t, v in pts)  # a zero-length window repeats a time
    hat = TTF.from_points(sorted(pts.items()) + _zero_fill(start, end, T), T, validate=False)
    return _maximum(f, hat), start, end


def _zero_fill(start, end, T):
    # keep the plateau's feet at zero across the rest of the period
    mid = (end + (start + T)) / 2
    return [(mid % T, 0.0)]


def _scaled_inside(f: TTF, d: Disruption) -> TTF:
    T = f.period
    ts = sorted({t % T for t in (d.r_s - RAMP_UP, d.r_s, d.r_e, d.r_e + f.max_delay)} | set(f.times.tolist()))
    vals = []
    for t in ts:
        rel = (t - d.r_s) % T
        inside = rel <= d.r_e - d.r_s
        vals.append(max(1.0, f.eval(t) * (d.factor if inside else 1.0)))
    g = TTF(ts, vals, T)
    if not g.is_fifo():
        raise ValueError("disruption makes the arc non-FIFO")
    return g


def widened_bounds(base: SlopeBounds, arcs) -> SlopeBounds:
    """Slope bounds of travel times on a graph where ``arcs`` were modified.

    Arrival times compose, so a path's arrival slope is the product of its
    pieces' arrival slopes. ``base`` bounds every stretch of unmodified arcs;
    a path alternates such stretches with modified arcs, each used at most once.
    """
    up = (1 + base.lambda_max) ** (len(arcs) + 1)
    down = (1 - base.lambda_min) ** (len(arcs) + 1)
    for f in arcs:
        r = f.slope_range()
        up *= 1 + r.lambda_max
        down *= 1 - r.lambda_min
    return SlopeBounds(lambda_min=max(base.lambda_min, 1 - down), lambda_max=max(base.lambda_max, up - 1))


def _metric_to(g: TDGraph, u: int):
    ff = static_distances(g, u, FREE_FLOW, backward=True)
    fc = static_distances(g, u, FULL_CONGESTION, backward=True)
    return ff, fc


def affected_landmarks(oracle: OracleBase, d: Disruption, graph: TDGraph | None = None) -> list[int]:
    """Landmarks within backward free-flow distance ``r_e - r_s`` of the arc's tail."""
    g = graph or oracle.view().graph
    u = int(g.tail[d.arc])
    s = Search(g, u, metric=FREE_FLOW, backward=True)
    s.run(radius=d.r_e - d.r_s)
    near = np.zeros(g.n, dtype=bool)
    near[s.settled] = True
    return [int(l) for l in oracle.landmark_ids if near[l]]


def _window(T, start, end, ff_lu, fc_lu) -> Window | None:
    if not (math.isfinite(ff_lu) and math.isfinite(fc_lu)):
        return None
    t_s = start - fc_lu
    t_e = end - ff_lu
    if t_e < t_s:
        t_s = t_e
    return Window(t_s % T, min(t_e - t_s, T))


def compute_window(oracle: OracleBase, landmark: int, d: Disruption, graph: TDGraph | None = None) -> Window | None:
    """Departures from ``landmark`` that may reach the arc's tail during the disruption.

    Uses the window ``[r_s, r_e]`` itself; :class:`LiveTraffic` applies the
    same rule to the span of the modified function, which includes the ramps.
    """
    g = graph or oracle.view().graph
    ff, fc = _metric_to(g, int(g.tail[d.arc]))
    return _window(g.period, d.r_s, d.r_e, ff[landmark], fc[landmark])


class LiveTraffic:
    """Active disruptions of one oracle."""

    def __init__(self, oracle: OracleBase):
        self.oracle = oracle
        self.base_graph = oracle.graph
        self.disruptions: dict[int, Disruption] = {}
        self._patches: dict[int, list[TemporalSummaryPatch]] = {}
        self._taints: dict[int, list[tuple[int, Window]]] = {}
        self._lock = threading.Lock()

    def trap_cfg_for(self, g: TDGraph, ds) -> TrapConfig:
        """Summary parameters valid on ``g``, the graph with disruptions ``ds`` applied."""
        cfg = self.oracle.trap_cfg
        arcs = {d.arc for d in ds}
        if not arcs:
            return cfg
        sb = widened_bounds(cfg.slope_bounds, [g.ttfs[a] for a in sorted(arcs)])
        return TrapConfig(cfg.epsilon, cfg.tau, sb, cfg.max_depth)

    @property
    def trap_cfg(self) -> TrapConfig:
        return self.trap_cfg_for(self.oracle.view().graph, self.disruptions.values())

    def _graph_for(self, ds) -> tuple[TDGraph, dict[int, tuple[float, float]]]:
        g = self.base_graph
        spans = {}
        for d in ds:
            f2, a, b = disrupted_ttf(g.ttfs[d.arc], d)
            g = g.with_arc_ttf(d.arc, f2)
            spans[d.id] = (a, b)
        return g, spans

    def _publish(self, g: TDGraph) -> None:
        patches: dict[int, list] = {}
        for plist in self._patches.values():
            for p in plist:
                patches.setdefault(p.landmark, []).append((p.window, p.block))
        taints: dict[int, list] = {}
        for tl in self._taints.values():
            for l, w in tl:
                taints.setdefault(l, []).append(w)
        self.oracle._swap_live(_View(g, patches, taints))

    def apply(self, d: Disruption) -> list[TemporalSummaryPatch]:
        if not 0 <= d.arc < self.base_graph.m or not self.base_graph.arc_active[d.arc]:
            raise ValueError(f"arc {d.arc} is not an active arc")
        if not self.base_graph.is_original(d.arc):
            raise ValueError("disruptions apply to original arcs")
        with self._lock:
            active = list(self.disruptions.values()) + [d]
            g, spans = self._graph_for(active)
            start, end = spans[d.id]
            u = int(g.tail[d.arc])
            ff, fc = _metric_to(g, u)
            affected = set(affected_landmarks(self.oracle, d, g))
            patches, taints = [], []
            cfg = self.trap_cfg_for(g, active)
            T = g.period
            for l in self.oracle.landmark_ids:
                l = int(l)
                w = _window(T, start, end, ff[l], fc[l])
                if w is None:
                    continue
                if l in affected:
                    full = w.length >= T
                    blk = self.oracle.build_block(g, l, None if full else w, cfg)
                    data = encode_block(blk, self.oracle.codec_cfg)
                    dec = decode_block(data)
                    win = Window(0.0, T) if full else w
                    patches.append(TemporalSummaryPatch(l, win, dec, d.id))
                else:
                    taints.append((l, w))
            self.disruptions[d.id] = d
            self._patches[d.id] = patches
            self._taints[d.id] = taints
            self._publish(g)
        return patches

    def expire(self, disruption_id: int) -> bool:
        with self._lock:
            if disruption_id not in self.disruptions:
                log.warning("no active disruption with id %s", disruption_id)
                return False
            del self.disruptions[disruption_id]
            self._patches.pop(disruption_id, None)
            self._taints.pop(disruption_id, None)
            g, _ = self._graph_for(self.disruptions.values())
            self._publish(g)
            return True

    def patches(self, disruption_id: int | None = None) -> list[TemporalSummaryPatch]:
        if disruption_id is not None:
            return list(self._patches.get(disruption_id, []))
        return [p for pl in self._patches.values() for p in pl]

    def tainted(self, disruption_id: int) -> list[tuple[int, Window]]:
        return list(self._taints.get(disruption_id, []))

    def dumps(self) -> str:
        return json.dumps([d.to_json() for d in self.disruptions.values()], indent=1)

    def loads(self, text: str) -> None:
        for rec in json.loads(text):
            self.apply(Disruption(**rec))


def _live(oracle: OracleBase) -> LiveTraffic:
    lt = getattr(oracle, "live", None)
    if lt is None:
        lt = oracle.live = LiveTraffic(oracle)
    return lt


def apply_disruption(oracle: OracleBase, d: Disruption) -> list[TemporalSummaryPatch]:
    return _live(oracle).apply(d)


def expire_disruption(oracle: OracleBase, disruption_id: int) -> bool:
    return _live(oracle).expire(disruption_id)
