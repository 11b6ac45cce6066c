"""Trapezoidal upper envelopes: travel-time summaries from one landmark.

Exact travel times ``D[l, v](t)`` are sampled on a regular grid of departure
times (one search per grid time serves every destination). Between two
samples, bounded slopes confine ``D`` to a trapezoid; its upper side is the
summary. Intervals whose upper side may exceed ``(1 + eps)`` times the lower
side are bisected, which needs new samples only for the destinations
concerned.

Sample times live on a dyadic grid: index ``i`` means departure time
``i * unit`` with ``unit = tau / 2**max_depth``.
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from .graph import FREE_FLOW, FULL_CONGESTION, TDGraph
from .search import Search, as_mask, static_distances, td_profile
from .ttf import TTF, SlopeBounds

__all__ = [
    "TrapConfig",
    "TrapPiece",
    "trap_interval",
    "SummaryBlock",
    "Summary",
    "build_summaries",
    "estimate_slope_bounds",
    "Window",
]


@dataclass(frozen=True)
class TrapConfig:
    """Summary construction parameters. ``tau=None`` means ``period / 96``."""

    epsilon: float = 0.1
    tau: float | None = None
    slope_bounds: SlopeBounds | None = None
    max_depth: int = 6

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if self.tau is not None and not self.tau > 0:
            raise ValueError("tau must be > 0")
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")

    def grid(self, period: float) -> tuple[int, float]:
        """Number of base intervals and their exact length."""
        tau = period / 96 if self.tau is None else self.tau
        p = max(1, int(round(period / tau)))
        if abs(p * tau - period) > 1e-9 * period:
            raise ValueError(f"tau={tau} does not divide the period {period}")
        return p, period / p


@dataclass(frozen=True)
class TrapPiece:
    t_s: float
    t_f: float
    d_s: float
    d_f: float
    up: float
    down: float

    @property
    def apex(self) -> tuple[float, float]:
        x, y = _apex(self.d_s, self.d_f, self.t_f - self.t_s, self.up, self.down)
        return self.t_s + float(x), float(y)

    def __call__(self, t):
        return np.minimum(self.d_s + self.up * (t - self.t_s), self.d_f + self.down * (self.t_f - t))


def _slopes(ds, df, w, lam_up, lam_down):
    sec = (df - ds) / w
    return np.maximum(lam_up, sec), np.maximum(lam_down, -sec)


def _apex(ds, df, w, up, down):
    s = up + down
    with np.errstate(invalid="ignore", divide="ignore"):
        x = np.where(s > 0, (df - ds + down * w) / np.where(s > 0, s, 1.0), 0.0)
    x = np.clip(x, 0.0, w)
    return x, ds + up * x


def _valley(ds, df, w, up, down):
    s = up + down
    with np.errstate(invalid="ignore", divide="ignore"):
        x = np.where(s > 0, (ds - df + up * w) / np.where(s > 0, s, 1.0), 0.0)
    x = np.clip(x, 0.0, w)
    return np.where(s > 0, ds - down * x, np.minimum(ds, df))


def trap_interval(d_ts: float, d_tf: float, t_s: float, t_f: float, bounds: SlopeBounds) -> TrapPiece:
    """Upper side of the trapezoid through ``(t_s, d_ts)`` and ``(t_f, d_tf)``.

    The rising line from the left sample uses slope ``lambda_max`` and the
    line into the right sample falls with ``lambda_min``. Both slopes are
    raised to the secant if the samples are steeper than the bounds, so the
    envelope always passes through both samples.
    """
    if not t_s < t_f:
        raise ValueError("need t_s < t_f")
    up, down = _slopes(d_ts, d_tf, t_f - t_s, bounds.lambda_max, bounds.lambda_min)
    return TrapPiece(float(t_s), float(t_f), float(d_ts), float(d_tf), float(up), float(down))


@dataclass
class Window:
    """Departure-time window ``[start, start + length]`` taken modulo the period."""

    start: float
    length: float

    def contains(self, t: float, period: float) -> bool:
        return (t - self.start) % period <= self.length


class SummaryBlock(Mapping):
    """Summaries from one landmark, stored as arrays.

    Per destination ``dests[k]``: samples ``tidx[ptr[k]:ptr[k+1]]`` (dyadic
    grid indices, sorted) with values ``vals[...]``, a cap (full-congestion
    distance) and optionally a reference ``ref[k] >= 0``: then the summary is
    ``min(summary(dests[ref[k]]) + ref_off[k], cap[k])`` and no samples are
    stored. With a ``span`` the block covers only grid indices
    ``span[0] .. span[1]`` and does not wrap around the period.
    """

    def __init__(
        self,
        landmark: int,
        period: float,
        tau: float,
        depth: int,
        bounds: SlopeBounds,
        dests: np.ndarray,
        ptr: np.ndarray,
        tidx: np.ndarray,
        vals: np.ndarray,
        cap: np.ndarray,
        floor: np.ndarray | None = None,
        ref: np.ndarray | None = None,
        ref_off: np.ndarray | None = None,
        span: tuple[int, int] | None = None,
        base_pred: np.ndarray | None = None,
        stats: dict | None = None,
    ):
        self.landmark = int(landmark)
        self.period = float(period)
        self.tau = float(tau)
        self.depth = int(depth)
        self.bounds = bounds
        self.unit = self.tau / (1 << self.depth)
        self.dests = np.asarray(dests, dtype=np.int64)
        self.ptr = np.asarray(ptr, dtype=np.int64)
        self.tidx = np.asarray(tidx, dtype=np.int64)
        self.vals = np.asarray(vals, dtype=np.float64)
        self.cap = np.asarray(cap, dtype=np.float64)
        nd = self.dests.size
        self.floor = floor
        self.ref = np.full(nd, -1, dtype=np.int64) if ref is None else np.asarray(ref, dtype=np.int64)
        self.ref_off = np.zeros(nd) if ref_off is None else np.asarray(ref_off, dtype=np.float64)
        self.span = span
        self.base_pred = base_pred
        self.stats = stats or {}
        self.n_base = int(round(self.period / self.tau))

    # -- mapping protocol ---------------------------------------------------

    def index_of(self, v: int) -> int:
        k = int(np.searchsorted(self.dests, v))
        if k < self.dests.size and self.dests[k] == v:
            return k
        return -1

    def __contains__(self, v) -> bool:
        return self.index_of(int(v)) >= 0

    def __getitem__(self, v) -> "Summary":
        k = self.index_of(int(v))
        if k < 0:
            raise KeyError(v)
        return Summary(self, k)

    def __iter__(self):
        return iter(self.dests.tolist())

    def __len__(self) -> int:
        return int(self.dests.size)

    @property
    def n_samples(self) -> int:
        return int(self.tidx.size)

    # -- evaluation ---------------------------------------------------------

    def samples(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.ptr[k], self.ptr[k + 1]
        return self.tidx[lo:hi] * self.unit, self.vals[lo:hi]

    def _local(self, t):
        tau = np.mod(t, self.period)
        if self.span is not None:
            start = self.span[0] * self.tau
            tau = np.where(tau < start, tau + self.period, tau)
        return tau

    def _envelope(self, k: int, t):
        xs, ys = self.samples(k)
        tau = self._local(np.asarray(t, dtype=np.float64))
        if self.span is None:
            xs = np.concatenate(([xs[-1] - self.period], xs, [xs[0] + self.period]))
            ys = np.concatenate(([ys[-1]], ys, [ys[0]]))
        elif not (np.all(tau >= xs[0]) and np.all(tau <= xs[-1])):
            raise ValueError("departure time outside the block's window")
        j = np.clip(np.searchsorted(xs, tau, side="right") - 1, 0, xs.size - 2)
        x0, x1, y0, y1 = xs[j], xs[j + 1], ys[j], ys[j + 1]
        up, down = _slopes(y0, y1, x1 - x0, self.bounds.lambda_max, self.bounds.lambda_min)
        return np.minimum(y0 + up * (tau - x0), y1 + down * (x1 - tau))

    def resolve(self, k: int) -> tuple[int, float, float]:
        """Follow references: returns ``(root, offset, cap)`` such that the
        summary of ``k`` is ``min(summary(root) + offset, cap)``."""
        off, cap = 0.0, np.inf
        seen = set()
        while self.ref[k] >= 0:
            if k in seen:
                raise ValueError(f"cyclic summary references at destination {self.dests[k]}")
            seen.add(k)
            cap = min(cap, self.cap[k] + off)
            off += self.ref_off[k]
            k = int(self.ref[k])
        return k, off, cap

    def eval_index(self, k: int, t):
        root, off, cap = self.resolve(k)
        val = np.minimum(self._envelope(root, t), self.cap[root])
        if root == k:
            return val
        return np.minimum(val + off, cap)

    def eval(self, v: int, t):
        """Summary value for destination ``v`` at departure time ``t``."""
        k = self.index_of(v)
        if k < 0:
            raise KeyError(v)
        out = self.eval_index(k, t)
        return float(out) if np.ndim(out) == 0 else out

    def points(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Breakpoints of the summary over one period (or over the span)."""
        root, off, cap = self.resolve(k)
        ts, ys = self._points_own(root)
        if root != k:
            ts = np.unique(np.concatenate((ts, _crossings(ts, ys + off, cap, self.period, self.span is None))))
            ys = self.eval_index(k, ts)
        return ts, ys

    def _points_own(self, k: int):
        xs, ys = self.samples(k)
        if self.span is None:
            x1 = np.concatenate((xs[1:], [xs[0] + self.period]))
            y1 = np.concatenate((ys[1:], [ys[0]]))
            x0, y0 = xs, ys
        else:
            x0, y0, x1, y1 = xs[:-1], ys[:-1], xs[1:], ys[1:]
        up, down = _slopes(y0, y1, x1 - x0, self.bounds.lambda_max, self.bounds.lambda_min)
        ax, ay = _apex(y0, y1, x1 - x0, up, down)
        ts = np.concatenate((x0, x0 + ax, x1))
        vs = np.concatenate((y0, ay, y1))
        order = np.argsort(ts, kind="stable")
        ts, vs = ts[order], vs[order]
        ts = np.concatenate((ts, _crossings(ts, vs, self.cap[k], self.period, False)))
        if self.span is None:
            ts = np.mod(ts, self.period)
        ts = np.unique(ts)
        return ts, self.eval_index(k, ts)

    def to_ttf(self, v: int) -> TTF:
        """Exact breakpoint form of a periodic summary."""
        if self.span is not None:
            raise ValueError("windowed blocks are not periodic")
        k = self.index_of(v)
        ts, ys = self.points(k)
        ts = ts[ts < self.period]
        return TTF(ts, ys, self.period, validate=False)

    def __repr__(self) -> str:
        return f"SummaryBlock(landmark={self.landmark}, dests={len(self)}, samples={self.n_samples})"


@dataclass(frozen=True)
class Summary:
    """View of one landmark-to-destination summary."""

    block: SummaryBlock = field(repr=False)
    index: int

    @property
    def landmark(self) -> int:
        return self.block.landmark

    @property
    def destination(self) -> int:
        return int(self.block.dests[self.index])

    def __call__(self, t):
        out = self.block.eval_index(self.index, t)
        return float(out) if np.ndim(out) == 0 else out

    def to_ttf(self) -> TTF:
        return self.block.to_ttf(self.destination)


def _crossings(ts, ys, c, period, wrap):
    """Times where the piecewise-linear ``(ts, ys)`` crosses the level ``c``."""
    if wrap:
        ts = np.concatenate((ts, [ts[0] + period]))
        ys = np.concatenate((ys, [ys[0]]))
    y0, y1 = ys[:-1], ys[1:]
    hit = (y0 - c) * (y1 - c) < 0
    t0, t1 = ts[:-1][hit], ts[1:][hit]
    out = t0 + (t1 - t0) * (c - y0[hit]) / (y1[hit] - y0[hit])
    return np.mod(out, period) if wrap else out


def _tdd_values(g, ell, t, dests, mask):
    s = Search(g, ell, t)
    s.run(targets=mask)
    return s.distances(dests), s.pred[dests]


def build_summaries(
    g: TDGraph,
    landmark: int,
    coverage=None,
    cfg: TrapConfig | None = None,
    *,
    cap: np.ndarray | None = None,
    floor: np.ndarray | None = None,
    window: Window | None = None,
) -> SummaryBlock:
    """Summaries from ``landmark`` to every reachable vertex of ``coverage``.

    ``cap`` and ``floor`` are full-congestion and free-flow distances from the
    landmark (computed when omitted). With a ``window`` only the grid
    intervals overlapping it are built.
    """
    cfg = cfg or TrapConfig()
    if cfg.slope_bounds is None:
        raise ValueError("TrapConfig.slope_bounds must be set (see estimate_slope_bounds)")
    lam_up, lam_down = cfg.slope_bounds.lambda_max, cfg.slope_bounds.lambda_min
    eps = cfg.epsilon
    T = g.period
    P, tau = cfg.grid(T)
    D = cfg.max_depth
    per = 1 << D
    total = P * per
    unit = tau / per

    if cap is None:
        cap = static_distances(g, landmark, FULL_CONGESTION)
    if floor is None:
        floor = static_distances(g, landmark, FREE_FLOW)
    cov = g.active_vertices() if coverage is None else np.unique(np.asarray(coverage, dtype=np.int64))
    cov = cov[np.isfinite(cap[cov]) & g.vertex_active[cov]]
    nd = cov.size
    mask = as_mask(g.n, cov)

    if window is None:
        i0, i1 = 0, P
    else:
        i0 = int(np.floor(window.start / tau))
        i1 = int(np.ceil((window.start + window.length) / tau))
        i1 = max(i1, i0 + 1)
        if i1 - i0 > P:
            i0, i1 = 0, P
            window = None
    base_idx = np.arange(i0, i1 + 1)
    uniq = sorted({int(i % P) for i in base_idx})
    base_vals = {}
    base_pred = np.zeros((P, nd), dtype=np.int64) if window is None else None
    for i in uniq:
        vals, pred = _tdd_values(g, landmark, (i * per % total) * unit, cov, mask)
        base_vals[i] = vals
        if base_pred is not None:
            base_pred[i] = pred
    searches = len(uniq)

    kk = np.repeat(np.arange(nd), i1 - i0)
    a = np.tile(base_idx[:-1] * per, nd)
    b = a + per
    da = np.concatenate([base_vals[int(i % P)] for i in base_idx[:-1]]).reshape(i1 - i0, nd).T.ravel()
    db = np.concatenate([base_vals[int(i % P)] for i in base_idx[1:]]).reshape(i1 - i0, nd).T.ravel()

    capk = cap[cov]
    flk = floor[cov]
    done_k, done_a, done_va = [kk], [a], [da]
    unmet = 0
    depth = 0
    while kk.size:
        w = (b - a) * unit
        up, down = _slopes(da, db, w, lam_up, lam_down)
        _, apex = _apex(da, db, w, up, down)
        valley = _valley(da, db, w, up, down)
        hi = np.minimum(apex, capk[kk])
        lo = np.maximum(valley, flk[kk])
        bad = hi > (1.0 + eps) * lo * (1 + 1e-12)
        if depth >= D or not bad.any():
            unmet += int(bad.sum())
            break
        kk, a, b, da, db = kk[bad], a[bad], b[bad], da[bad], db[bad]
        m = (a + b) // 2
        dm = np.empty(m.size)
        order = np.argsort(m, kind="stable")
        ms = m[order]
        cuts = np.flatnonzero(np.diff(ms)) + 1
        for grp in np.split(order, cuts):
            mi = int(m[grp[0]])
            need = cov[kk[grp]]
            vals, _ = _tdd_values(g, landmark, (mi % total) * unit, need, as_mask(g.n, need))
            dm[grp] = vals
            searches += 1
        done_k.append(kk)
        done_a.append(m)
        done_va.append(dm)
        kk = np.concatenate((kk, kk))
        a, b = np.concatenate((a, m)), np.concatenate((m, b))
        da, db = np.concatenate((da, dm)), np.concatenate((dm, db))
        depth += 1

    # the closing sample of each destination
    done_k.append(np.arange(nd))
    done_a.append(np.full(nd, i1 * per))
    done_va.append(base_vals[int(i1 % P)])
    K_ = np.concatenate(done_k)
    A_ = np.concatenate(done_a)
    V_ = np.concatenate(done_va)
    if window is None:
        keep = A_ < total
        K_, A_, V_ = K_[keep], A_[keep], V_[keep]
    order = np.lexsort((A_, K_))
    K_, A_, V_ = K_[order], A_[order], V_[order]
    ptr = np.zeros(nd + 1, dtype=np.int64)
    np.add.at(ptr, K_ + 1, 1)
    ptr = np.cumsum(ptr)
    return SummaryBlock(
        landmark, T, tau, D, SlopeBounds(lam_down, lam_up), cov, ptr, A_, V_,
        capk, floor=flk, span=None if window is None else (i0, i1),
        base_pred=base_pred,
        stats={"searches": searches, "unmet_intervals": unmet, "depth_reached": depth},
    )


def estimate_slope_bounds(
    g: TDGraph,
    n_origins: int = 3,
    steps: int = 192,
    seed: int = 0,
    safety: float = 2.0,
) -> SlopeBounds:
    """Slope bounds of shortest travel times, measured and inflated.

    Travel-time profiles from random origins are sampled on ``steps``
    departure times; finite differences give observed slopes. The result is
    the larger of those and the steepest arc slope, times ``safety``. A
    measured bound is not a proof; soundness checks against exact searches
    are how the result is validated.
    """
    rng = np.random.default_rng(seed)
    act = g.active_vertices()
    arcs = g.active_arcs()
    arc_up = arc_dn = 0.0
    for a in arcs:
        sb = g.ttfs[a].slope_range()
        arc_up = max(arc_up, sb.lambda_max)
        arc_dn = max(arc_dn, sb.lambda_min)
    if all(g.ttfs[a].is_constant for a in arcs):
        return SlopeBounds(0.0, 0.0)
    times = np.arange(steps) * (g.period / steps)
    up = dn = 0.0
    for o in rng.choice(act, size=min(n_origins, act.size), replace=False):
        prof = td_profile(g, int(o), np.append(times, g.period))
        fin = np.all(np.isfinite(prof), axis=0)
        diff = np.diff(prof[:, fin], axis=0) / (g.period / steps)
        if diff.size:
            up = max(up, float(diff.max()))
            dn = max(dn, float(-diff.min()))
    up = max(up, arc_up) * safety
    dn = min(max(dn, arc_dn) * safety, 0.999)
    return SlopeBounds(lambda_min=dn, lambda_max=up)
