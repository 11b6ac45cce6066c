"""Exact search primitives: time-dependent Dijkstra, static Dijkstra, balls.

All searches run the compiled kernel in :mod:`tdoracle._kernels`. A
:class:`Search` keeps its queue between calls, so a ball can be grown in
stages (first to the nearest landmark, later further) without recomputation.
Queue ties are broken by vertex id, which makes ranks reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .graph import FREE_FLOW, FULL_CONGESTION, TDGraph

__all__ = [
    "Search",
    "SearchResult",
    "StopReason",
    "tdd",
    "td_profile",
    "static_dijkstra",
    "static_distances",
    "grow_ball_to_nearest_landmark",
    "NoLandmarkReachable",
    "as_mask",
]

_EMPTY_U8 = np.zeros(0, dtype=np.uint8)


class StopReason:
    EXHAUSTED = "exhausted"
    TARGET = "target-settled"
    LANDMARK = "landmark-settled"
    SIZE = "size-reached"
    RADIUS = "radius-exceeded"
    ALL_TARGETS = "all-targets-settled"

    by_code = {
        K.EXHAUSTED: EXHAUSTED,
        K.TARGET: TARGET,
        K.MASK: LANDMARK,
        K.SIZE: SIZE,
        K.RADIUS: RADIUS,
        K.ALL_TARGETS: ALL_TARGETS,
    }


class NoLandmarkReachable(RuntimeError):
    pass


def as_mask(n: int, vertices) -> np.ndarray:
    m = np.zeros(n, dtype=np.uint8)
    if vertices is not None:
        m[np.asarray(list(vertices) if not isinstance(vertices, np.ndarray) else vertices, dtype=np.int64)] = 1
    return m


class Search:
    """A resumable single-origin search.

    Parameters
    ----------
    g : TDGraph
    origin : int
    t0 : float
        Departure time (absolute seconds). Ignored by static searches, which
        start from label 0.
    metric : None, "free-flow" or "full-congestion"
        ``None`` runs the time-dependent search.
    backward : bool
        Static searches only: follow arcs against their direction.
    """

    def __init__(self, g: TDGraph, origin: int, t0: float = 0.0, *, metric: str | None = None, backward: bool = False):
        if not 0 <= origin < g.n:
            raise IndexError(f"vertex {origin} out of range")
        if metric is None and backward:
            raise ValueError("backward search is only defined for static metrics")
        self.g = g
        self.origin = int(origin)
        self.metric = metric
        self.backward = backward
        self.t0 = float(t0) if metric is None else 0.0
        # labels are kept relative to the start of the departure day, so
        # travel times do not depend on which day the query starts
        self.base = math.floor(self.t0 / g.period) * g.period
        self.t_local = self.t0 - self.base
        n = g.n
        self.label = np.full(n, np.inf)
        self.pred = np.full(n, -1, dtype=np.int64)
        self.status = np.zeros(n, dtype=np.uint8)
        self.heap = np.zeros(n, dtype=np.int64)
        self.pos = np.zeros(n, dtype=np.int64)
        self.hsize = np.zeros(1, dtype=np.int64)
        self.order = np.zeros(n, dtype=np.int64)
        self.count = np.zeros(1, dtype=np.int64)
        self.weights = g.static_metric(metric) if metric is not None else np.zeros(0)
        self.last_stop: str | None = None
        K.push(self.origin, self.t_local, self.label, self.status, self.heap, self.pos, self.hsize)

    # -- driving ------------------------------------------------------------

    def run(
        self,
        *,
        target: int = -1,
        mask: np.ndarray | None = None,
        max_size: int = 0,
        radius: float | None = None,
        targets: np.ndarray | None = None,
    ) -> str:
        """Continue until the first criterion fires; returns a :class:`StopReason`."""
        g = self.g
        ar = g.arrays
        if self.backward:
            ptr, arc, nbr = ar.bwd_ptr, ar.bwd_arc, ar.bwd_nbr
        else:
            ptr, arc, nbr = ar.fwd_ptr, ar.fwd_arc, ar.fwd_nbr
        tremain = np.array([-1], dtype=np.int64)
        tmask = _EMPTY_U8
        if targets is not None:
            tmask = targets if targets.dtype == np.uint8 and targets.size == g.n else as_mask(g.n, targets)
            need = tmask.astype(bool) & (self.status != K.SETTLED)
            tremain[0] = int(need.sum())
            if tremain[0] == 0:
                self.last_stop = StopReason.ALL_TARGETS
                return self.last_stop
        if target >= 0 and self.status[target] == K.SETTLED:
            self.last_stop = StopReason.TARGET
            return self.last_stop
        code = K.run(
            ptr, arc, nbr, ar.arc_active, ar.vertex_active,
            ar.alt_ptr, ar.seq_ptr, ar.seq_fn, ar.fn_ptr, ar.kx, ar.ky, g.period,
            self.metric is not None, self.weights,
            self.label, self.pred, self.status, self.heap, self.pos, self.hsize, self.order, self.count,
            self.t_local, int(target), _EMPTY_U8 if mask is None else mask, int(max_size),
            -1.0 if radius is None else float(radius), tmask, tremain,
        )
        self.last_stop = StopReason.by_code[code]
        return self.last_stop

    # -- inspection ---------------------------------------------------------

    @property
    def rank(self) -> int:
        return int(self.count[0])

    @property
    def settled(self) -> np.ndarray:
        return self.order[: self.rank]

    def is_settled(self, v: int) -> bool:
        return self.status[v] == K.SETTLED

    def arrival(self, v: int) -> float:
        """Absolute arrival time at a settled vertex (``inf`` otherwise)."""
        return self.base + float(self.label[v]) if self.status[v] == K.SETTLED else math.inf

    def distance(self, v: int) -> float:
        return float(self.label[v]) - self.t_local if self.status[v] == K.SETTLED else math.inf

    def tentative(self, v: int) -> float:
        """Absolute tentative arrival time of a queued or settled vertex."""
        return self.base + float(self.label[v])

    def distances(self, vs) -> np.ndarray:
        """Travel times to the given settled vertices (labels of others are meaningless)."""
        return self.label[vs] - self.t_local

    def last_settled(self) -> int:
        return int(self.order[self.rank - 1]) if self.rank else -1

    def frontier(self) -> np.ndarray:
        """Queued vertices ordered by (label, id)."""
        q = self.heap[: int(self.hsize[0])]
        return q[np.lexsort((q, self.label[q]))]

    def peek_label(self) -> float:
        return self.base + float(self.label[self.heap[0]]) if self.hsize[0] else math.inf

    def path_to(self, v: int) -> list[int]:
        if not self.is_settled(v):
            raise ValueError(f"vertex {v} is not settled")
        arcs = []
        g = self.g
        while v != self.origin:
            a = int(self.pred[v])
            arcs.append(a)
            v = int(g.head[a] if self.backward else g.tail[a])
        arcs.reverse()
        return arcs

    def result(self) -> "SearchResult":
        s = self.settled.copy()
        return SearchResult(
            origin=self.origin, t0=self.t0, settled=s, arrival=self.base + self.label[s],
            stop=self.last_stop, search=self,
        )


@dataclass
class SearchResult:
    """Settled vertices in settle order with their labels."""

    origin: int
    t0: float
    settled: np.ndarray
    arrival: np.ndarray
    stop: str | None
    search: Search = field(repr=False)

    @property
    def rank(self) -> int:
        return int(self.settled.size)

    def distance(self, v: int) -> float:
        return self.search.distance(v)

    def path_to(self, v: int) -> list[int]:
        return self.search.path_to(v)


def tdd(g: TDGraph, origin: int, t0: float, target: int = -1, **stop) -> SearchResult:
    """Time-dependent Dijkstra from ``(origin, t0)``.

    With a target, the result's stop reason is ``target-settled`` or
    ``exhausted`` (unreachable). Other keyword criteria are those of
    :meth:`Search.run`.
    """
    s = Search(g, origin, t0)
    s.run(target=target, **stop)
    return s.result()


def td_distance(g: TDGraph, o: int, d: int, t0: float) -> float:
    s = Search(g, o, t0)
    s.run(target=d)
    return s.distance(d)


def td_profile(g: TDGraph, origin: int, times, targets=None) -> np.ndarray:
    """Exact travel times ``D[origin, v](t)``; shape ``(len(times), n)``.

    With ``targets`` each search stops once all of them are settled and only
    those columns are meaningful.
    """
    times = np.atleast_1d(np.asarray(times, dtype=np.float64))
    out = np.full((times.size, g.n), np.inf)
    tm = None if targets is None else as_mask(g.n, targets)
    for i, t in enumerate(times):
        s = Search(g, origin, t)
        s.run(targets=tm)
        st = s.settled
        out[i, st] = s.distances(st)
    return out


def static_dijkstra(
    g: TDGraph,
    origin: int,
    metric: str = FREE_FLOW,
    *,
    backward: bool = False,
    target: int = -1,
    max_size: int = 0,
    radius: float | None = None,
    mask: np.ndarray | None = None,
) -> SearchResult:
    s = Search(g, origin, metric=metric, backward=backward)
    s.run(target=target, max_size=max_size, radius=radius, mask=mask)
    return s.result()


def static_distances(g: TDGraph, origin: int, metric: str = FREE_FLOW, *, backward: bool = False) -> np.ndarray:
    s = Search(g, origin, metric=metric, backward=backward)
    s.run()
    d = np.full(g.n, np.inf)
    st = s.settled
    d[st] = s.label[st]
    return d


def grow_ball_to_nearest_landmark(g: TDGraph, origin: int, t0: float, landmarks) -> tuple[int, float, SearchResult]:
    """Grow a ball until the first landmark settles."""
    mask = landmarks if isinstance(landmarks, np.ndarray) and landmarks.dtype == np.uint8 else as_mask(g.n, landmarks)
    s = Search(g, origin, t0)
    reason = s.run(mask=mask)
    if reason != StopReason.LANDMARK:
        raise NoLandmarkReachable(f"no landmark reachable from {origin}")
    ell = s.last_settled()
    return ell, s.distance(ell), s.result()


__all__ += ["td_distance", "FULL_CONGESTION", "FREE_FLOW"]
