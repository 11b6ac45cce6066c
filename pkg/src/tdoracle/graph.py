"""Time-dependent graph container, text instance format and degree-2 contraction."""

from __future__ import annotations

import io
import itertools
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .ttf import TTF, link, minimum

__all__ = [
    "TDGraph",
    "InstanceError",
    "FifoError",
    "InstanceStats",
    "load_instance",
    "save_instance",
    "contract_degree2",
    "instance_stats",
    "FREE_FLOW",
    "FULL_CONGESTION",
]

FREE_FLOW = "free-flow"
FULL_CONGESTION = "full-congestion"


class InstanceError(ValueError):
    """Malformed instance; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class FifoError(InstanceError):
    def __init__(self, arc: int, line: int | None = None):
        self.arc = arc
        super().__init__(f"arc {arc} violates FIFO (a delay slope is <= -1)", line)


@dataclass
class _Arrays:
    fwd_ptr: np.ndarray
    fwd_arc: np.ndarray
    fwd_nbr: np.ndarray
    bwd_ptr: np.ndarray
    bwd_arc: np.ndarray
    bwd_nbr: np.ndarray
    alt_ptr: np.ndarray
    seq_ptr: np.ndarray
    seq_fn: np.ndarray
    fn_ptr: np.ndarray
    kx: np.ndarray
    ky: np.ndarray
    arc_active: np.ndarray
    vertex_active: np.ndarray


class TDGraph:
    """Directed graph whose arcs carry periodic travel-time functions.

    Arc ids are stable: contraction flags vertices and arcs inactive and
    appends shortcut arcs instead of renumbering. ``expansion[a]`` lists the
    alternatives of arc ``a`` as tuples of original arc ids; an original arc
    expands to ``((a,),)``.
    """

    def __init__(
        self,
        n: int,
        tails: Sequence[int],
        heads: Sequence[int],
        ttfs: Sequence[TTF],
        period: float,
        *,
        coords: np.ndarray | None = None,
        category: np.ndarray | None = None,
        vertex_active: np.ndarray | None = None,
        arc_active: np.ndarray | None = None,
        expansion: Sequence[tuple[tuple[int, ...], ...]] | None = None,
    ):
        self.n = int(n)
        self.period = float(period)
        self.tail = np.asarray(tails, dtype=np.int64)
        self.head = np.asarray(heads, dtype=np.int64)
        self.ttfs: tuple[TTF, ...] = tuple(ttfs)
        m = len(self.ttfs)
        if self.tail.shape != (m,) or self.head.shape != (m,):
            raise ValueError("tails, heads and ttfs must have the same length")
        if m and (self.tail.min() < 0 or self.head.min() < 0 or self.tail.max() >= n or self.head.max() >= n):
            raise InstanceError("arc endpoint out of range")
        for a, f in enumerate(self.ttfs):
            if f.period != self.period:
                raise InstanceError(f"arc {a} has period {f.period}, expected {self.period}")
        self.coords = None if coords is None else np.asarray(coords, dtype=np.float64)
        self.category = None if category is None else np.asarray(category, dtype=np.int64)
        self.vertex_active = np.ones(n, dtype=np.bool_) if vertex_active is None else np.asarray(vertex_active, dtype=np.bool_).copy()
        self.arc_active = np.ones(m, dtype=np.bool_) if arc_active is None else np.asarray(arc_active, dtype=np.bool_).copy()
        if expansion is None:
            expansion = [((a,),) for a in range(m)]
        self.expansion = tuple(tuple(tuple(int(x) for x in alt) for alt in alts) for alts in expansion)
        for arr in (self.tail, self.head, self.vertex_active, self.arc_active):
            arr.flags.writeable = False
        self._arrays: _Arrays | None = None
        self._static: dict[str, np.ndarray] = {}

    # -- sizes and accessors -------------------------------------------------

    @property
    def m(self) -> int:
        return len(self.ttfs)

    @property
    def n_active(self) -> int:
        return int(self.vertex_active.sum())

    def active_vertices(self) -> np.ndarray:
        return np.flatnonzero(self.vertex_active)

    def active_arcs(self) -> np.ndarray:
        return np.flatnonzero(self.arc_active)

    def is_original(self, a: int) -> bool:
        return self.expansion[a] == ((a,),)

    def out_arcs(self, v: int) -> np.ndarray:
        ar = self.arrays
        arcs = ar.fwd_arc[ar.fwd_ptr[v]:ar.fwd_ptr[v + 1]]
        return arcs[self.arc_active[arcs]]

    def in_arcs(self, v: int) -> np.ndarray:
        ar = self.arrays
        arcs = ar.bwd_arc[ar.bwd_ptr[v]:ar.bwd_ptr[v + 1]]
        return arcs[self.arc_active[arcs]]

    def arc_delay(self, a: int, t: float) -> float:
        """Delay of arc ``a`` departing at ``t``, evaluated like the search does."""
        best = np.inf
        for alt in self.expansion[a]:
            x = t
            for b in alt:
                x = x + self.ttfs[b].eval(x)
            best = min(best, x)
        return best - t

    # -- derived arrays ------------------------------------------------------

    @property
    def arrays(self) -> _Arrays:
        if self._arrays is None:
            self._arrays = self._build_arrays()
        return self._arrays

    def _build_arrays(self) -> _Arrays:
        n, m = self.n, self.m
        fo = np.lexsort((self.head, self.tail)) if m else np.zeros(0, np.int64)
        fwd_ptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(fwd_ptr, self.tail + 1, 1)
        bo = np.lexsort((self.tail, self.head)) if m else np.zeros(0, np.int64)
        bwd_ptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(bwd_ptr, self.head + 1, 1)
        alt_ptr = [0]
        seq_ptr = [0]
        seq_fn: list[int] = []
        for alts in self.expansion:
            for alt in alts:
                seq_fn.extend(alt)
                seq_ptr.append(len(seq_fn))
            alt_ptr.append(len(seq_ptr) - 1)
        fn_ptr = [0]
        kx_parts = []
        ky_parts = []
        for f in self.ttfs:
            xs, ys = f.knots
            kx_parts.append(xs)
            ky_parts.append(ys)
            fn_ptr.append(fn_ptr[-1] + xs.size)
        return _Arrays(
            fwd_ptr=np.cumsum(fwd_ptr),
            fwd_arc=fo.astype(np.int64),
            fwd_nbr=self.head[fo].astype(np.int64),
            bwd_ptr=np.cumsum(bwd_ptr),
            bwd_arc=bo.astype(np.int64),
            bwd_nbr=self.tail[bo].astype(np.int64),
            alt_ptr=np.asarray(alt_ptr, dtype=np.int64),
            seq_ptr=np.asarray(seq_ptr, dtype=np.int64),
            seq_fn=np.asarray(seq_fn, dtype=np.int64),
            fn_ptr=np.asarray(fn_ptr, dtype=np.int64),
            kx=np.concatenate(kx_parts) if kx_parts else np.zeros(0),
            ky=np.concatenate(ky_parts) if ky_parts else np.zeros(0),
            arc_active=self.arc_active.astype(np.uint8),
            vertex_active=self.vertex_active.astype(np.uint8),
        )

    def static_metric(self, kind: str = FREE_FLOW) -> np.ndarray:
        """Per-arc free-flow (minimum) or full-congestion (maximum) delay."""
        if kind not in (FREE_FLOW, FULL_CONGESTION):
            raise ValueError(f"unknown metric {kind!r}")
        if kind not in self._static:
            if kind == FREE_FLOW:
                w = np.array([f.min_delay for f in self.ttfs], dtype=np.float64)
            else:
                w = np.array([f.max_delay for f in self.ttfs], dtype=np.float64)
            w.flags.writeable = False
            self._static[kind] = w
        return self._static[kind]

    # -- derived graphs ------------------------------------------------------

    def with_arc_ttf(self, a: int, f: TTF) -> "TDGraph":
        """Copy of the graph where original arc ``a`` carries ``f``."""
        if not self.is_original(a):
            raise ValueError("only original arcs can be replaced")
        if not f.is_fifo():
            raise FifoError(a)
        ttfs = list(self.ttfs)
        ttfs[a] = f
        # shortcuts through ``a`` need a fresh function for their static bounds
        for b, alts in enumerate(self.expansion):
            if b != a and any(a in alt for alt in alts):
                ttfs[b] = _expansion_ttf(alts, ttfs)
        return TDGraph(
            self.n, self.tail, self.head, ttfs, self.period,
            coords=self.coords, category=self.category,
            vertex_active=self.vertex_active, arc_active=self.arc_active,
            expansion=self.expansion,
        )

    def unpack_path(self, arcs: Iterable[int], t0: float) -> list[int]:
        """Expand shortcut arcs of a path departing at ``t0`` into original arcs."""
        out: list[int] = []
        t = t0
        for a in arcs:
            best_alt, best = None, np.inf
            for alt in self.expansion[a]:
                x = t
                for b in alt:
                    x = x + self.ttfs[b].eval(x)
                if x < best:
                    best_alt, best = alt, x
            out.extend(best_alt)
            t = best
        return out

    def __repr__(self) -> str:
        return f"TDGraph(n={self.n}, m={self.m}, active={self.n_active}, T={self.period:g})"


def _expansion_ttf(alts, ttfs) -> TTF:
    h = None
    for alt in alts:
        f = ttfs[alt[0]]
        for b in alt[1:]:
            f = link(f, ttfs[b])
        h = f if h is None else minimum(h, f)
    return h


# -- text format --------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x)) if x != int(x) else str(int(x))


def save_instance(g: TDGraph, dest: str | os.PathLike | io.TextIOBase) -> None:
    """Write the original (uncontracted) arcs of ``g`` in the text format."""
    orig = [a for a in range(g.m) if g.is_original(a)]
    lines = [f"TDGRAPH v1 {g.n} {len(orig)} {_fmt(g.period)}"]
    for v in range(g.n):
        parts = [f"node {v}"]
        if g.coords is not None:
            parts.append(f"{_fmt(g.coords[v, 0])} {_fmt(g.coords[v, 1])}")
        if g.category is not None:
            parts.append(str(int(g.category[v])))
        lines.append(" ".join(parts))
    for a in orig:
        f = g.ttfs[a]
        pts = " ".join(f"{_fmt(t)} {_fmt(d)}" for t, d in f.points())
        lines.append(f"arc {g.tail[a]} {g.head[a]} {len(f)} {pts}")
    text = "\n".join(lines) + "\n"
    if isinstance(dest, io.TextIOBase):
        dest.write(text)
    else:
        Path(dest).write_text(text)


def load_instance(source: str | os.PathLike | io.TextIOBase) -> TDGraph:
    """Parse and validate an instance file."""
    if isinstance(source, io.TextIOBase):
        text = source.read()
    else:
        text = Path(source).read_text()
    records = [(i + 1, ln.split("#", 1)[0].split()) for i, ln in enumerate(text.splitlines())]
    records = [r for r in records if r[1]]
    if not records:
        raise InstanceError("empty instance file")
    lineno, hdr = records[0]
    if len(hdr) != 5 or hdr[0] != "TDGRAPH" or hdr[1] != "v1":
        raise InstanceError("expected header 'TDGRAPH v1 <n> <m> <T>'", lineno)
    try:
        n, m, period = int(hdr[2]), int(hdr[3]), float(hdr[4])
    except ValueError:
        raise InstanceError("bad header numbers", lineno) from None
    if n < 0 or m < 0 or not period > 0:
        raise InstanceError("header needs n >= 0, m >= 0 and T > 0", lineno)
    nodes = [r for r in records[1:] if r[1][0] == "node"]
    arcs = [r for r in records[1:] if r[1][0] == "arc"]
    for ln, toks in records[1:]:
        if toks[0] not in ("node", "arc"):
            raise InstanceError(f"unknown record {toks[0]!r}", ln)
    if len(nodes) != n:
        raise InstanceError(f"header declares {n} nodes, found {len(nodes)}")
    if len(arcs) != m:
        raise InstanceError(f"header declares {m} arcs, found {len(arcs)}")

    coords = np.zeros((n, 2))
    category = np.zeros(n, dtype=np.int64)
    has_coords = has_cat = None
    seen = np.zeros(n, dtype=bool)
    for ln, toks in nodes:
        try:
            v = int(toks[1])
            extra = toks[2:]
            if len(extra) not in (0, 1, 2, 3):
                raise ValueError
            hc, hk = len(extra) >= 2, len(extra) in (1, 3)
            if hc:
                coords[v if 0 <= v < n else 0] = float(extra[0]), float(extra[1])
            if hk:
                category[v if 0 <= v < n else 0] = int(extra[-1])
        except (ValueError, IndexError):
            raise InstanceError("expected 'node <id> [<lon> <lat>] [<category>]'", ln) from None
        if not 0 <= v < n:
            raise InstanceError(f"node id {v} outside 0..{n - 1}", ln)
        if seen[v]:
            raise InstanceError(f"duplicate node {v}", ln)
        seen[v] = True
        if has_coords is None:
            has_coords, has_cat = hc, hk
        elif (hc, hk) != (has_coords, has_cat):
            raise InstanceError("all node records must carry the same optional fields", ln)

    tails, heads, ttfs = [], [], []
    pairs: set[tuple[int, int]] = set()
    for a, (ln, toks) in enumerate(arcs):
        try:
            u, w, k = int(toks[1]), int(toks[2]), int(toks[3])
            vals = [float(x) for x in toks[4:]]
        except (ValueError, IndexError):
            raise InstanceError("expected 'arc <tail> <head> <k> <t1> <d1> ...'", ln) from None
        if k < 1 or len(vals) != 2 * k:
            raise InstanceError(f"arc {a}: declared {k} breakpoints, found {len(vals) / 2:g}", ln)
        if not (0 <= u < n and 0 <= w < n):
            raise InstanceError(f"arc {a}: dangling endpoint ({u}, {w})", ln)
        if (u, w) in pairs:
            raise InstanceError(f"arc {a}: duplicate arc ({u}, {w})", ln)
        pairs.add((u, w))
        try:
            f = TTF(vals[0::2], vals[1::2], period)
        except ValueError as exc:
            raise InstanceError(f"arc {a}: {exc}", ln) from None
        if not f.is_fifo():
            raise FifoError(a, ln)
        tails.append(u)
        heads.append(w)
        ttfs.append(f)
    return TDGraph(
        n, tails, heads, ttfs, period,
        coords=coords if has_coords else None,
        category=category if has_cat else None,
    )


# -- contraction --------------------------------------------------------------


def contract_degree2(g: TDGraph) -> TDGraph:
    """Replace chains of undirected-degree-2 vertices by shortcut arcs.

    Chain endpoints are junctions (undirected degree != 2). A shortcut is
    added in each direction in which every arc of the chain exists; its
    alternatives record the original arcs so searches evaluate it exactly as
    the chain. Interior vertices and their arcs become inactive. Shortcuts
    that end up parallel to an existing arc are merged into one arc carrying
    all alternatives and the pointwise minimum function.
    """
    n = g.n
    act = g.active_arcs()
    nbrs: list[set[int]] = [set() for _ in range(n)]
    by_pair: dict[tuple[int, int], list[int]] = {}
    for a in act:
        u, w = int(g.tail[a]), int(g.head[a])
        if u == w or not (g.vertex_active[u] and g.vertex_active[w]):
            continue
        nbrs[u].add(w)
        nbrs[w].add(u)
        by_pair.setdefault((u, w), []).append(int(a))
    deg2 = np.array([g.vertex_active[v] and len(nbrs[v]) == 2 for v in range(n)], dtype=bool)
    junction = g.vertex_active & ~deg2

    visited = np.zeros(n, dtype=bool)
    chains: list[list[int]] = []

    def walk(j: int, first: int) -> list[int]:
        path = [j, first]
        prev, cur = j, first
        while deg2[cur] and not junction[cur]:
            visited[cur] = True
            a, b = nbrs[cur]
            nxt = b if a == prev else a
            prev, cur = cur, nxt
            path.append(cur)
            if cur == j:
                break
        return path

    seen_keys: set[tuple[int, ...]] = set()

    def collect(j: int) -> None:
        for w in sorted(nbrs[j]):
            if junction[w] or visited[w] and w != j:
                continue
            path = walk(j, w)
            key = tuple(path) if path[0] <= path[-1] else tuple(reversed(path))
            if key not in seen_keys:
                seen_keys.add(key)
                chains.append(path)

    for j in np.flatnonzero(junction):
        collect(int(j))
    # pure cycles: promote the lowest id vertex to a junction
    for v in range(n):
        if deg2[v] and not visited[v] and not junction[v]:
            junction[v] = True
            collect(v)

    tails = list(g.tail)
    heads = list(g.head)
    ttfs = list(g.ttfs)
    expansion = list(g.expansion)
    arc_active = g.arc_active.copy()
    vertex_active = g.vertex_active.copy()
    new_arcs: list[int] = []
    for path in chains:
        interior = path[1:-1]
        if not interior:
            continue
        vertex_active[interior] = False
        for iv in interior:
            for a in itertools.chain(g.out_arcs(iv), g.in_arcs(iv)):
                arc_active[a] = False
        for seq in (path, path[::-1]):
            s, t = seq[0], seq[-1]
            if s == t:
                continue
            hops = [by_pair.get((seq[i], seq[i + 1]), []) for i in range(len(seq) - 1)]
            if not all(hops):
                continue
            alts = []
            for combo in itertools.product(*hops):
                alt: list[int] = []
                for a in combo:
                    (inner,) = expansion[a] if len(expansion[a]) == 1 else (None,)
                    if inner is None:
                        raise NotImplementedError("nested multi-alternative arcs inside a chain")
                    alt.extend(inner)
                alts.append(tuple(alt))
            tails.append(s)
            heads.append(t)
            expansion.append(tuple(alts))
            ttfs.append(_expansion_ttf(alts, ttfs))
            arc_active = np.append(arc_active, True)
            new_arcs.append(len(ttfs) - 1)

    # merge parallel arcs that involve at least one shortcut
    groups: dict[tuple[int, int], list[int]] = {}
    for a in range(len(ttfs)):
        if arc_active[a]:
            groups.setdefault((tails[a], heads[a]), []).append(a)
    new_set = set(new_arcs)
    for (u, w), arcs_uw in groups.items():
        if len(arcs_uw) < 2 or not new_set.intersection(arcs_uw):
            continue
        alts = tuple(alt for a in arcs_uw for alt in expansion[a])
        f = ttfs[arcs_uw[0]]
        for a in arcs_uw[1:]:
            f = minimum(f, ttfs[a])
        for a in arcs_uw:
            arc_active[a] = False
        tails.append(u)
        heads.append(w)
        expansion.append(alts)
        ttfs.append(f)
        arc_active = np.append(arc_active, True)

    return TDGraph(
        n, tails, heads, ttfs, g.period,
        coords=g.coords, category=g.category,
        vertex_active=vertex_active, arc_active=arc_active,
        expansion=expansion,
    )


# -- statistics ---------------------------------------------------------------


@dataclass(frozen=True)
class InstanceStats:
    n: int
    m: int
    n_constant: int
    n_pwl: int
    min_breakpoints: int
    avg_breakpoints: float
    max_breakpoints: int
    total_breakpoints: int
    lambda_max: float
    neg_lambda_min: float
    k_max: int
    k_star: int
    per_arc_breakpoints: np.ndarray = field(repr=False, compare=False)
    per_arc_k_star: np.ndarray = field(repr=False, compare=False)

    def as_dict(self) -> dict:
        return {
            "n": self.n, "m": self.m,
            "constant_arcs": self.n_constant, "pwl_arcs": self.n_pwl,
            "min_breakpoints": self.min_breakpoints,
            "avg_breakpoints": self.avg_breakpoints,
            "max_breakpoints": self.max_breakpoints,
            "K": self.total_breakpoints, "K_max": self.k_max, "K_star": self.k_star,
            "lambda_max": self.lambda_max, "-lambda_min": self.neg_lambda_min,
        }


def instance_stats(g: TDGraph) -> InstanceStats:
    """Counts over active arcs. ``neg_lambda_min`` is the steepest descent rate (``>= 0``)."""
    arcs = g.active_arcs()
    fs = [g.ttfs[a] for a in arcs]
    const = np.array([f.is_constant for f in fs], dtype=bool)
    bps = np.array([len(f) for f in fs], dtype=np.int64)
    kst = np.array([f.concavity_spoiling() for f in fs], dtype=np.int64)
    if fs:
        slopes = np.concatenate([f.slopes() for f in fs])
        lmax, lmin = float(max(0.0, slopes.max())), float(max(0.0, -slopes.min()))
    else:
        lmax = lmin = 0.0
    return InstanceStats(
        n=g.n_active, m=len(arcs),
        n_constant=int(const.sum()), n_pwl=int((~const).sum()),
        min_breakpoints=int(bps.min()) if fs else 0,
        avg_breakpoints=float(bps.mean()) if fs else 0.0,
        max_breakpoints=int(bps.max()) if fs else 0,
        total_breakpoints=int(bps.sum()),
        lambda_max=lmax, neg_lambda_min=lmin,
        k_max=int(bps.max()) if fs else 0,
        k_star=int(kst.sum()),
        per_arc_breakpoints=bps, per_arc_k_star=kst,
    )
