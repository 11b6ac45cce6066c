"""Landmark selection and landmark hierarchies with areas of coverage."""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graph import FREE_FLOW, FULL_CONGESTION, TDGraph
from .search import Search, as_mask

__all__ = [
    "LandmarkSet",
    "LandmarkHierarchy",
    "select_random",
    "select_sparse_random",
    "select_important_random",
    "select_partition_boundary",
    "select_sparse_partition",
    "select_hybrid",
    "select",
    "load_partition",
    "partition_boundary",
    "build_hierarchy",
    "coverage_ball",
    "PartitionError",
]

log = logging.getLogger(__name__)


class PartitionError(ValueError):
    pass


@dataclass(frozen=True)
class LandmarkSet:
    method: str
    vertices: np.ndarray
    seed: int | None = None
    params: dict = field(default_factory=dict)
    partial: bool = False

    def __len__(self) -> int:
        return int(self.vertices.size)

    def __iter__(self):
        return iter(self.vertices.tolist())

    def mask(self, n: int) -> np.ndarray:
        return as_mask(n, self.vertices)


def _done(method, picks, seed, params, k=None) -> LandmarkSet:
    v = np.asarray(picks, dtype=np.int64)
    partial = k is not None and v.size < k
    if partial:
        log.warning("%s selection returned %d of %d requested landmarks", method, v.size, k)
    return LandmarkSet(method, v, seed, params, partial)


def select_random(g: TDGraph, k: int, seed: int = 0) -> LandmarkSet:
    act = g.active_vertices()
    rng = np.random.default_rng(seed)
    k = min(k, act.size)
    return _done("R", rng.choice(act, size=k, replace=False), seed, {})


def _exclusion_ball(g: TDGraph, v: int, size: int) -> np.ndarray:
    """``v`` and its ``size`` closest vertices under the free-flow metric."""
    s = Search(g, v, metric=FREE_FLOW)
    s.run(max_size=size + 1)
    return s.settled


def _sparse_pick(g, k, ball_size, rng, pool: np.ndarray) -> list[int]:
    pool = pool.copy()
    picks: list[int] = []
    while len(picks) < k and pool.any():
        cand = np.flatnonzero(pool)
        v = int(cand[rng.integers(cand.size)])
        picks.append(v)
        pool[v] = False
        if ball_size > 0:
            pool[_exclusion_ball(g, v, ball_size)] = False
    return picks


def select_sparse_random(g: TDGraph, k: int, ball_size: int, seed: int = 0) -> LandmarkSet:
    """Random picks; each pick removes its ``ball_size`` closest vertices from the pool."""
    if ball_size <= 0:
        # nothing is excluded: same draw as plain random
        return _done("SR", select_random(g, k, seed).vertices, seed, {"ball_size": 0}, k)
    rng = np.random.default_rng(seed)
    picks = _sparse_pick(g, k, ball_size, rng, g.vertex_active.copy())
    return _done("SR", picks, seed, {"ball_size": ball_size}, k)


def select_important_random(
    g: TDGraph, k: int, seed: int = 0, category_threshold: int = 3, ball_size: int = 30,
) -> LandmarkSet:
    """Random picks moved to the most important nearby vertex.

    Within the free-flow ball of ``ball_size`` vertices around each pick,
    the landmark moves to the vertex of lowest road category, provided that
    category is at most ``category_threshold``; ties prefer the pick itself,
    then the lowest id. A node's category is the best class of the roads
    meeting there.
    """
    if g.category is None:
        raise ValueError("instance has no road categories")
    rng = np.random.default_rng(seed)
    act = g.active_vertices()
    chosen: list[int] = []
    centers: list[int] = []
    taken = np.zeros(g.n, dtype=bool)
    attempts = 0
    while len(chosen) < min(k, act.size) and attempts < 20 * max(k, 1):
        attempts += 1
        c = int(act[rng.integers(act.size)])
        s = Search(g, c, metric=FREE_FLOW)
        s.run(max_size=ball_size)
        ball = s.settled
        cats = g.category[ball]
        best = cats.min()
        target = c
        if best <= category_threshold and g.category[c] != best:
            target = int(ball[cats == best].min())
        if not taken[target]:
            taken[target] = True
            chosen.append(target)
            centers.append(c)
    params = {"category_threshold": category_threshold, "ball_size": ball_size, "centers": centers}
    return _done("IR", chosen, seed, params, k)


# -- partitions ---------------------------------------------------------------


def load_partition(source, n: int, active: np.ndarray | None = None) -> np.ndarray:
    """Read ``<vertex-id> <cell-id>`` lines; every active vertex needs a cell."""
    text = Path(source).read_text() if isinstance(source, (str, os.PathLike)) else source.read()
    cell = np.full(n, -1, dtype=np.int64)
    for ln, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split()
        try:
            v, c = int(parts[0]), int(parts[1])
        except (ValueError, IndexError):
            raise PartitionError(f"line {ln}: expected '<vertex-id> <cell-id>'") from None
        if not 0 <= v < n:
            raise PartitionError(f"line {ln}: vertex {v} out of range")
        cell[v] = c
    need = np.ones(n, dtype=bool) if active is None else active
    missing = np.flatnonzero(need & (cell < 0))
    if missing.size:
        raise PartitionError(f"vertex {missing[0]} has no cell ({missing.size} missing)")
    return cell


def partition_boundary(g: TDGraph, cell: np.ndarray) -> np.ndarray:
    """Active vertices with a neighbour (either arc direction) in another cell."""
    arcs = g.active_arcs()
    u, w = g.tail[arcs], g.head[arcs]
    ok = g.vertex_active[u] & g.vertex_active[w] & (cell[u] != cell[w])
    return np.unique(np.concatenate((u[ok], w[ok])))


def select_partition_boundary(g: TDGraph, cell: np.ndarray) -> LandmarkSet:
    b = partition_boundary(g, cell)
    ls = LandmarkSet("K", b, None, {"cells": int(np.unique(cell[cell >= 0]).size)}, partial=b.size == 0)
    if b.size == 0:
        log.warning("partition has no boundary vertices")
    return ls


def select_sparse_partition(g: TDGraph, cell: np.ndarray, k: int, ball_size: int, seed: int = 0) -> LandmarkSet:
    rng = np.random.default_rng(seed)
    pool = np.zeros(g.n, dtype=bool)
    pool[partition_boundary(g, cell)] = True
    picks = _sparse_pick(g, k, ball_size, rng, pool)
    return _done("SK", picks, seed, {"ball_size": ball_size}, k)


def select_hybrid(g: TDGraph, cell: np.ndarray, k: int, seed: int = 0) -> LandmarkSet:
    """``ceil(k/2)`` boundary vertices plus ``floor(k/2)`` picks spread evenly over cells."""
    rng = np.random.default_rng(seed)
    bnd = partition_boundary(g, cell)
    kb = min(math.ceil(k / 2), bnd.size)
    first = rng.choice(bnd, size=kb, replace=False) if kb else np.zeros(0, np.int64)
    taken = np.zeros(g.n, dtype=bool)
    taken[first] = True
    act = g.vertex_active
    cells = np.unique(cell[act & (cell >= 0)])
    members = {int(c): np.flatnonzero(act & (cell == c) & ~taken) for c in cells}
    for c in members:
        rng.shuffle(members[int(c)])
    order = list(rng.permutation(cells))
    rest = k - kb
    picks: list[int] = []
    cursor = {int(c): 0 for c in cells}
    while len(picks) < rest:
        progressed = False
        for c in order:
            if len(picks) >= rest:
                break
            c = int(c)
            if cursor[c] < members[c].size:
                picks.append(int(members[c][cursor[c]]))
                cursor[c] += 1
                progressed = True
        if not progressed:
            break
    return _done("H", np.concatenate((first, np.asarray(picks, dtype=np.int64))), seed, {}, k)


def select(g: TDGraph, method: str, k: int, seed: int = 0, *, ball_size: int = 0, partition=None,
           category_threshold: int = 3) -> LandmarkSet:
    """Dispatch by method tag: R, SR, IR, K, SK or H."""
    m = method.upper()
    if m == "R":
        return select_random(g, k, seed)
    if m == "SR":
        return select_sparse_random(g, k, ball_size, seed)
    if m == "IR":
        return select_important_random(g, k, seed, category_threshold)
    if partition is None:
        raise ValueError(f"method {method} needs a partition")
    if m == "K":
        return select_partition_boundary(g, partition)
    if m == "SK":
        return select_sparse_partition(g, partition, k, ball_size, seed)
    if m == "H":
        return select_hybrid(g, partition, k, seed)
    raise ValueError(f"unknown landmark method {method!r}")


# -- hierarchies ----------------------------------------------------------------


def coverage_ball(g: TDGraph, landmark: int, size: int) -> np.ndarray:
    """Free-flow ball of ``size`` vertices, widened to the radius ``R``.

    ``R`` is the largest full-congestion distance from the landmark to a
    vertex of the initial ball; every vertex within free-flow distance ``R``
    is covered.
    """
    s = Search(g, landmark, metric=FREE_FLOW)
    s.run(max_size=size)
    ball = s.settled.copy()
    c = Search(g, landmark, metric=FULL_CONGESTION)
    c.run(targets=as_mask(g.n, ball))
    radius = float(c.label[ball].max())
    s.run(radius=radius)
    return np.sort(s.settled)


@dataclass
class LandmarkHierarchy:
    """Disjoint landmark levels, lowest (most numerous, smallest coverage) first."""

    levels: list[np.ndarray]
    coverage_sizes: list[int]
    exclusion_sizes: list[int]
    coverage: dict[int, np.ndarray]
    method: str = "HSR"
    seed: int = 0
    xi: float = 0.1

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    @property
    def all_landmarks(self) -> np.ndarray:
        return np.sort(np.concatenate(self.levels)) if self.levels else np.zeros(0, np.int64)

    def level_of(self) -> dict[int, int]:
        return {int(l): i for i, lev in enumerate(self.levels) for l in lev}

    def covers(self, landmark: int, v: int) -> bool:
        cov = self.coverage[int(landmark)]
        i = np.searchsorted(cov, v)
        return bool(i < cov.size and cov[i] == v)

    def audit(self, g: TDGraph) -> bool:
        """Every active vertex is covered by some top-level landmark."""
        top = np.zeros(g.n, dtype=bool)
        for l in self.levels[-1]:
            top[self.coverage[int(l)]] = True
        return bool(np.all(top[g.vertex_active]))


def build_hierarchy(
    g: TDGraph,
    level_sizes,
    coverage_sizes,
    exclusion_sizes=None,
    method: str = "HSR",
    seed: int = 0,
    xi: float = 0.1,
) -> LandmarkHierarchy:
    """Select disjoint levels top-down and compute their areas of coverage.

    The top level covers every active vertex. Lower levels cover the
    widened free-flow ball of ``ceil((1 + xi) * coverage_size)`` vertices.
    ``method`` is ``HR`` (plain random) or ``HSR`` (sparse random with the
    level's exclusion size).
    """
    L = len(level_sizes)
    if len(coverage_sizes) != L:
        raise ValueError("level_sizes and coverage_sizes differ in length")
    exclusion_sizes = list(exclusion_sizes) if exclusion_sizes is not None else [0] * L
    method = method.upper()
    if method not in ("HR", "HSR"):
        raise ValueError("method must be HR or HSR")
    rng = np.random.default_rng(seed)
    pool = g.vertex_active.copy()
    levels: list[np.ndarray] = [np.zeros(0, np.int64)] * L
    for i in reversed(range(L)):
        if method == "HR":
            cand = np.flatnonzero(pool)
            picks = rng.choice(cand, size=min(level_sizes[i], cand.size), replace=False)
        else:
            picks = np.asarray(_sparse_pick(g, level_sizes[i], exclusion_sizes[i], rng, pool), dtype=np.int64)
            if picks.size < level_sizes[i]:
                extra = np.flatnonzero(pool & ~as_mask(g.n, picks).astype(bool))
                more = rng.choice(extra, size=min(level_sizes[i] - picks.size, extra.size), replace=False)
                picks = np.concatenate((picks, more))
        levels[i] = np.sort(picks.astype(np.int64))
        pool[picks] = False
    act = g.active_vertices()
    coverage: dict[int, np.ndarray] = {}
    for i, lev in enumerate(levels):
        for l in lev:
            if i == L - 1:
                coverage[int(l)] = act
            else:
                coverage[int(l)] = coverage_ball(g, int(l), math.ceil((1 + xi) * coverage_sizes[i]))
    return LandmarkHierarchy(levels, list(coverage_sizes), exclusion_sizes, coverage, method, seed, xi)
