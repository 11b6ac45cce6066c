"""Periodic piecewise-linear travel-time functions.

A :class:`TTF` is described by its breakpoints inside one period ``[0, T)``.
Between breakpoints the delay is interpolated linearly and the last
breakpoint connects back to the first one shifted by ``T``, so the function
is continuous on the whole time axis.

Evaluation here and in the compiled search kernels share one interpolation
formula (:func:`lerp`) so that both produce bit-identical arrival times.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "TTF",
    "SlopeBounds",
    "PeriodMismatch",
    "link",
    "minimum",
    "lerp",
]


class PeriodMismatch(ValueError):
    pass


def lerp(x0, y0, x1, y1, x):
    return y0 + (y1 - y0) / (x1 - x0) * (x - x0)


@dataclass(frozen=True)
class SlopeBounds:
    """Bounds on delay slopes: slopes lie in ``[-lambda_min, lambda_max]``."""

    lambda_min: float = 0.0
    lambda_max: float = 0.0

    def __post_init__(self):
        if self.lambda_max < 0 or self.lambda_min < 0:
            raise ValueError("slope bounds are magnitudes and must be >= 0")
        if self.lambda_min >= 1:
            raise ValueError("lambda_min must be < 1 (FIFO)")

    def scaled(self, factor: float) -> "SlopeBounds":
        return SlopeBounds(min(self.lambda_min * factor, 1 - 1e-9), self.lambda_max * factor)

    def union(self, other: "SlopeBounds") -> "SlopeBounds":
        return SlopeBounds(max(self.lambda_min, other.lambda_min), max(self.lambda_max, other.lambda_max))


class TTF:
    """Immutable periodic piecewise-linear delay function.

    Parameters
    ----------
    times, delays : sequences of equal length
        Breakpoints; ``times`` strictly increasing inside ``[0, period)``.
    period : float
        Length of the period in seconds.
    validate : bool
        Enforce ``delay >= 1``. Summaries from a vertex to itself carry a
        zero delay and are built with ``validate=False``.
    """

    __slots__ = ("times", "delays", "period", "_xs", "_ys")

    def __init__(self, times: Sequence[float], delays: Sequence[float], period: float, *, validate: bool = True):
        t = np.array(times, dtype=np.float64).reshape(-1)
        d = np.array(delays, dtype=np.float64).reshape(-1)
        period = float(period)
        if t.size == 0 or t.size != d.size:
            raise ValueError("a TTF needs a non-empty list of (time, delay) breakpoints")
        if not period > 0:
            raise ValueError("period must be positive")
        if t[0] < 0 or t[-1] >= period:
            raise ValueError(f"breakpoint times must lie in [0, {period})")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("breakpoint times must be strictly increasing")
        if not np.all(np.isfinite(d)):
            raise ValueError("delays must be finite")
        if validate and np.any(d < 1):
            raise ValueError("delays must be >= 1")
        t.flags.writeable = False
        d.flags.writeable = False
        self.times = t
        self.delays = d
        self.period = period
        xs = np.concatenate(([t[-1] - period], t, [t[0] + period]))
        ys = np.concatenate(([d[-1]], d, [d[0]]))
        xs.flags.writeable = False
        ys.flags.writeable = False
        self._xs = xs
        self._ys = ys

    @classmethod
    def constant(cls, delay: float, period: float, *, validate: bool = True) -> "TTF":
        return cls([0.0], [delay], period, validate=validate)

    @classmethod
    def from_points(cls, points: Iterable[tuple[float, float]], period: float, **kw) -> "TTF":
        pts = sorted(points)
        return cls([p[0] for p in pts], [p[1] for p in pts], period, **kw)

    # -- basic properties -------------------------------------------------

    def __len__(self) -> int:
        return int(self.times.size)

    @property
    def knots(self) -> tuple[np.ndarray, np.ndarray]:
        """Breakpoints extended by one wrap knot on each side."""
        return self._xs, self._ys

    @property
    def is_constant(self) -> bool:
        return bool(np.all(self.delays == self.delays[0]))

    @property
    def min_delay(self) -> float:
        return float(self.delays.min())

    @property
    def max_delay(self) -> float:
        return float(self.delays.max())

    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.times.tolist(), self.delays.tolist()))

    def __repr__(self) -> str:
        if len(self) <= 4:
            body = ", ".join(f"({a:g}, {b:g})" for a, b in self.points())
        else:
            body = f"{len(self)} breakpoints, delay {self.min_delay:g}..{self.max_delay:g}"
        return f"TTF([{body}], T={self.period:g})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, TTF):
            return NotImplemented
        return (
            self.period == other.period
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.delays, other.delays)
        )

    __hash__ = None

    # -- evaluation -------------------------------------------------------

    def __call__(self, t):
        return self.eval(t)

    def eval(self, t):
        """Delay when departing at absolute time ``t`` (scalar or array)."""
        xs, ys = self._xs, self._ys
        if np.ndim(t) == 0:
            tau = float(t) % self.period
            j = int(np.searchsorted(xs, tau, side="right")) - 1
            j = min(max(j, 0), xs.size - 2)
            return float(lerp(xs[j], ys[j], xs[j + 1], ys[j + 1], tau))
        tau = np.mod(np.asarray(t, dtype=np.float64), self.period)
        j = np.clip(np.searchsorted(xs, tau, side="right") - 1, 0, xs.size - 2)
        return lerp(xs[j], ys[j], xs[j + 1], ys[j + 1], tau)

    def arrival(self, t):
        return t + self.eval(t)

    # -- slopes -----------------------------------------------------------

    def slopes(self) -> np.ndarray:
        """Slope of every segment, the wrap segment last."""
        xs, ys = self._xs[1:], self._ys[1:]
        return np.diff(ys) / np.diff(xs)

    def is_fifo(self) -> bool:
        return bool(np.all(self.slopes() > -1.0))

    def slope_range(self) -> SlopeBounds:
        s = self.slopes()
        return SlopeBounds(lambda_min=max(0.0, -float(s.min())), lambda_max=max(0.0, float(s.max())))

    def concavity_spoiling(self) -> int:
        """Number of breakpoints inside ``(0, T)`` where the slope increases."""
        if len(self) < 2:
            return 0
        s = self.slopes()
        incoming = np.concatenate(([s[-1]], s[:-1]))
        rises = s > incoming + 1e-12 * np.maximum(1.0, np.abs(incoming))
        return int(np.count_nonzero(rises & (self.times > 0)))

    # -- simple transforms ------------------------------------------------

    def shifted(self, offset: float) -> "TTF":
        return TTF(self.times, self.delays + offset, self.period)

    def with_period_check(self, other: "TTF") -> None:
        if self.period != other.period:
            raise PeriodMismatch(f"periods differ: {self.period} != {other.period}")


def _simplify(times: np.ndarray, vals: np.ndarray, period: float, *, validate: bool = True) -> TTF:
    """Drop breakpoints collinear with their cyclic neighbours."""
    t = list(times)
    v = list(vals)
    scale = max(1.0, float(np.max(np.abs(vals))))
    tol = 1e-12 * scale
    changed = True
    while changed and len(t) > 1:
        changed = False
        i = 0
        while i < len(t) and len(t) > 1:
            k = len(t)
            tp, vp = t[i - 1] - (period if i == 0 else 0.0), v[i - 1]
            tn, vn = t[(i + 1) % k] + (period if i == k - 1 else 0.0), v[(i + 1) % k]
            if k == 2 and vp == vn and v[i] == vp:
                est = vp
            elif k == 2:
                i += 1
                continue
            else:
                est = lerp(tp, vp, tn, vn, t[i])
            if abs(est - v[i]) <= tol:
                del t[i]
                del v[i]
                changed = True
            else:
                i += 1
    if len(t) == 1:
        t = [0.0]
    return TTF(t, v, period, validate=validate)


def link(f: TTF, g: TTF) -> TTF:
    """Delay of traversing ``f`` and then ``g``: ``h(t) = f(t) + g(t + f(t))``."""
    f.with_period_check(g)
    T = f.period
    knots = np.unique(np.concatenate(([0.0], f.times, [T])))
    arr = knots + f.eval(knots)
    if np.any(np.diff(arr) <= 0):
        raise ValueError("first function is not FIFO")
    lo, hi = arr[0], arr[-1]
    k0 = np.floor((lo - g.times.max()) / T)
    k1 = np.ceil((hi - g.times.min()) / T)
    shifts = np.arange(k0, k1 + 1) * T
    targets = (g.times[None, :] + shifts[:, None]).ravel()
    targets = targets[(targets >= lo) & (targets < hi)]
    pre = np.interp(targets, arr, knots)
    cand = np.unique(np.concatenate((f.times, np.mod(pre, T))))
    cand = cand[cand < T]
    fv = f.eval(cand)
    vals = fv + g.eval(cand + fv)
    validate = bool(f.min_delay >= 1 and g.min_delay >= 1)
    return _simplify(cand, vals, T, validate=validate)


def minimum(f: TTF, g: TTF) -> TTF:
    """Pointwise minimum of two functions over the same period."""
    f.with_period_check(g)
    T = f.period
    cand = np.unique(np.concatenate((f.times, g.times)))
    ext = np.concatenate((cand, [cand[0] + T]))
    e = f.eval(ext) - g.eval(ext)
    e0, e1 = e[:-1], e[1:]
    cross = (e0 * e1) < 0
    x0, x1 = ext[:-1][cross], ext[1:][cross]
    xc = x0 + (x1 - x0) * (e0[cross] / (e0[cross] - e1[cross]))
    xc = np.mod(xc, T)
    cand = np.unique(np.concatenate((cand, xc)))
    cand = cand[cand < T]
    vals = np.minimum(f.eval(cand), g.eval(cand))
    validate = bool(f.min_delay >= 1 and g.min_delay >= 1)
    return _simplify(cand, vals, T, validate=validate)
