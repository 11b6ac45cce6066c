"""Synthetic road-like instances with rush-hour delay profiles."""

from __future__ import annotations

import math

import numpy as np
from scipy.spatial import Delaunay

from .graph import TDGraph
from .ttf import TTF

__all__ = ["generate_instance", "KINDS", "rush_hour_ttf"]

KINDS = ("grid", "ring", "random-planar")

# speeds in m/s per road category (1 = motorway ... 5 = residential)
_SPEED = {1: 30.0, 2: 22.0, 3: 16.0, 4: 12.0, 5: 9.0}


def rush_hour_ttf(base: float, amp: float, breakpoints: int, period: float, rng: np.random.Generator) -> TTF:
    """Delay ``base * (1 + amp * peak(t))`` sampled at ``breakpoints`` times.

    ``peak`` has a morning and an evening bump placed relative to the period.
    """
    k = max(2, int(breakpoints))
    day = period
    m1 = day * (8.0 / 24) + rng.normal(0, day / 200)
    m2 = day * (17.5 / 24) + rng.normal(0, day / 200)
    w1 = day * (1.2 / 24) * rng.uniform(0.8, 1.3)
    w2 = day * (1.6 / 24) * rng.uniform(0.8, 1.3)
    lo, hi = day * (5.0 / 24), day * (22.0 / 24)
    inner = np.sort(rng.uniform(lo, hi, size=k - 2)) if k > 2 else np.zeros(0)
    times = np.unique(np.concatenate(([0.0, lo], inner, [hi])))[:k] if k > 2 else np.array([0.0, (m1 + m2) / 2])
    times = np.unique(np.round(times, 3))
    peak = np.exp(-0.5 * ((times - m1) / w1) ** 2) + 0.8 * np.exp(-0.5 * ((times - m2) / w2) ** 2)
    delays = np.maximum(1.0, np.round(base * (1.0 + amp * peak), 3))
    return TTF(times, delays, period)


def _grid(n, rng):
    rows = max(1, int(math.isqrt(n)))
    cols = math.ceil(n / rows)
    ids = np.arange(n)
    r, c = ids // cols, ids % cols
    coords = np.column_stack((c * 100.0, r * 100.0)) + rng.uniform(-15, 15, size=(n, 2))
    edges = []
    for v in range(n):
        if c[v] + 1 < cols and v + 1 < n:
            edges.append((v, v + 1))
        if v + cols < n:
            edges.append((v, v + cols))
    major = (r % 10 == 0) | (c % 10 == 0)
    cat = np.where(major, 2, 5)
    cat[(r % 30 == 0) | (c % 30 == 0)] = 1
    return coords, edges, cat


def _ring(n, rng):
    ang = 2 * np.pi * np.arange(n) / max(n, 1)
    rad = 50.0 * n / (2 * np.pi) if n > 1 else 0.0
    coords = np.column_stack((rad * np.cos(ang), rad * np.sin(ang)))
    edges = set()
    skip = max(2, int(math.isqrt(n)))
    for v in range(n):
        if n > 1:
            edges.add(tuple(sorted((v, (v + 1) % n))))
        if n > 2 * skip and v % 3 == 0:
            edges.add(tuple(sorted((v, (v + skip) % n))))
    cat = np.where(np.arange(n) % 3 == 0, 3, 5)
    return coords, sorted(e for e in edges if e[0] != e[1]), cat


def _planar(n, rng):
    side = 100.0 * math.sqrt(max(n, 1))
    coords = rng.uniform(0, side, size=(n, 2))
    if n < 3:
        return coords, [(0, 1)] if n == 2 else [], np.full(n, 5)
    tri = Delaunay(coords)
    edges = set()
    for s in tri.simplices:
        for i in range(3):
            a, b = int(s[i]), int(s[(i + 1) % 3])
            edges.add((min(a, b), max(a, b)))
    cat = rng.choice([2, 3, 4, 5], size=n, p=[0.05, 0.15, 0.3, 0.5])
    return coords, sorted(edges), cat


def generate_instance(
    kind: str = "grid",
    n: int = 100,
    td_fraction: float = 0.15,
    breakpoints: int = 8,
    seed: int = 0,
    *,
    period: float = 86400.0,
    chain_fraction: float = 0.0,
    amplitude: tuple[float, float] = (0.2, 0.8),
) -> TDGraph:
    """Build a strongly connected, FIFO-valid instance.

    Every undirected edge becomes two arcs. A ``td_fraction`` share of arcs
    get rush-hour profiles with ``breakpoints`` breakpoints; the rest are
    constant. ``chain_fraction`` subdivides that share of edges with an extra
    vertex, creating degree-2 chains; such vertices come on top of ``n``.
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    builder = {"grid": _grid, "ring": _ring, "random-planar": _planar}[kind]
    coords, edges, cat = builder(n, rng)
    coords = [tuple(p) for p in coords]
    cat = list(int(x) for x in cat)

    split = rng.random(len(edges)) < chain_fraction
    final_edges = []
    for (u, w), sp in zip(edges, split):
        if sp:
            x = len(coords)
            coords.append(tuple((np.asarray(coords[u]) + np.asarray(coords[w])) / 2))
            cat.append(max(cat[u], cat[w]))
            final_edges += [(u, x), (x, w)]
        else:
            final_edges.append((u, w))

    tails, heads, ttfs = [], [], []
    xy = np.asarray(coords)
    for u, w in final_edges:
        length = float(np.hypot(*(xy[u] - xy[w])))
        speed = _SPEED[max(cat[u], cat[w])]
        # multiples of 1/8 s add exactly in floating point, so path sums do not depend on order
        base = max(1.0, round(length / speed * rng.uniform(0.9, 1.1) * 8) / 8)
        for a, b in ((u, w), (w, u)):
            if rng.random() < td_fraction:
                f = rush_hour_ttf(base, rng.uniform(*amplitude), breakpoints, period, rng)
            else:
                f = TTF.constant(base, period)
            tails.append(a)
            heads.append(b)
            ttfs.append(f)
    return TDGraph(len(coords), tails, heads, ttfs, period, coords=xy, category=np.asarray(cat))
