"""Compact storage of summary blocks, store files and lookup indices.

Encoding stages, each optional except the first:

1. fixed range: values become integers ``ceil(v / s)`` (never below the
   original), sample times are dyadic grid indices;
2. bucketing: runs of samples whose values differ by less than ``c`` collapse
   into one sample carrying the run's maximum;
3. composition: a destination reached through a constant-delay suffix from
   another destination ``p`` stores a reference to ``p`` plus an offset;
4. delay shifts: each record stores its minimum and one-byte offsets from it
   (two or four bytes when the swing is larger);
5. zlib over the whole block.

Binary layouts are documented in ``docs/FORMATS.md``.
"""

from __future__ import annotations

import io
import json
import os
import struct
import threading
import zlib
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .ttf import TTF, SlopeBounds
from .trap import SummaryBlock

__all__ = [
    "CodecConfig",
    "encode_time",
    "decode_time",
    "quantize_up",
    "bucket",
    "bucket_block",
    "compose_block",
    "encode_block",
    "decode_block",
    "compress_block",
    "decompress_block",
    "stage_sizes",
    "FlatIndex",
    "HornIndex",
    "Store",
    "write_store",
    "CodecError",
]


class CodecError(ValueError):
    pass


@dataclass(frozen=True)
class CodecConfig:
    """``s`` seconds per stored unit; ``c`` bucketing threshold in seconds."""

    s: float = 1.32
    c: float = 0.0
    compose: bool = True
    shifts: bool = True
    compress: bool = True

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError("s must be > 0")
        if self.c < 0:
            raise ValueError("c must be >= 0")

    @classmethod
    def city(cls) -> "CodecConfig":
        return cls(s=1.32, c=0.0)

    @classmethod
    def country(cls) -> "CodecConfig":
        return cls(s=1.32, c=15.0)

    @property
    def flags(self) -> int:
        return int(self.compose) | int(self.shifts) << 1 | int(self.compress) << 2

    @classmethod
    def from_header(cls, s: float, c: float, flags: int) -> "CodecConfig":
        return cls(s=s, c=c, compose=bool(flags & 1), shifts=bool(flags & 2), compress=bool(flags & 4))


# -- fixed range --------------------------------------------------------------


def quantize_up(v, s: float):
    """Smallest integers ``q`` with ``q * s >= v`` (elementwise)."""
    v = np.asarray(v, dtype=np.float64)
    q = np.ceil(v / s)
    q = np.where(q * s < v, q + 1, q)
    q = np.where((q - 1) * s >= v, q - 1, q)
    return q.astype(np.int64)


def encode_time(t_f, s: float):
    """``ceil(t_f / s)`` as an integer, never decoding below ``t_f``."""
    q = quantize_up(t_f, s)
    return int(q) if np.ndim(q) == 0 else q


def decode_time(t_i, s: float):
    out = np.asarray(t_i, dtype=np.float64) * s
    return float(out) if np.ndim(out) == 0 else out


# -- bucketing ----------------------------------------------------------------


def _runs(vals: np.ndarray, c: float, last_fixed: bool = False) -> list[tuple[int, int]]:
    """Greedy runs ``[i, j)`` whose value range stays below ``c``."""
    runs = []
    n = vals.size
    stop = n - 1 if last_fixed else n
    i = 0
    while i < stop:
        lo = hi = vals[i]
        j = i + 1
        while j < stop:
            lo2, hi2 = min(lo, vals[j]), max(hi, vals[j])
            if hi2 - lo2 >= c:
                break
            lo, hi = lo2, hi2
            j += 1
        runs.append((i, j))
        i = j
    if last_fixed and n:
        runs.append((n - 1, n))
    return runs


def bucket(f: TTF, c: float) -> TTF:
    """Merge runs of breakpoints with delay range below ``c``.

    A run becomes one breakpoint at its first time. Its delay is the run's
    maximum, raised where needed so that the straight line to the next kept
    breakpoint stays above every merged breakpoint; the result is therefore
    never below ``f``.
    """
    if c <= 0 or len(f) < 2:
        return f
    t, d = f.times, f.delays
    runs = _runs(d, c)
    if len(runs) == len(t):
        return f
    T = f.period
    nt, nd = [], []
    for r, (i, j) in enumerate(runs):
        ni = runs[r + 1][0] if r + 1 < len(runs) else 0
        t_next = t[ni] + (T if r + 1 == len(runs) else 0.0)
        v_next = d[ni]
        val = float(d[i:j].max())
        span = t_next - t[i]
        for q in range(i + 1, j):
            need = v_next + (d[q] - v_next) * span / (t_next - t[q])
            val = max(val, need)
        nt.append(t[i])
        nd.append(val)
    return TTF(nt, nd, T, validate=False)


def bucket_block(block: SummaryBlock, c: float) -> SummaryBlock:
    """Bucketing on summary samples: merged runs keep their first time and maximum.

    Summaries are envelopes built from slope bounds, and an envelope built
    from raised values at a subset of sample times is still an upper bound,
    so no lift is needed here.
    """
    if c <= 0:
        return block
    nd = len(block)
    new_t, new_v, ptr = [], [], [0]
    for k in range(nd):
        lo, hi = block.ptr[k], block.ptr[k + 1]
        ts, vs = block.tidx[lo:hi], block.vals[lo:hi]
        if ts.size:
            runs = _runs(vs, c, last_fixed=block.span is not None)
            new_t.append(np.array([ts[i] for i, _ in runs], dtype=np.int64))
            new_v.append(np.array([vs[i:j].max() for i, j in runs]))
        ptr.append(ptr[-1] + (len(runs) if ts.size else 0))
    return SummaryBlock(
        block.landmark, block.period, block.tau, block.depth, block.bounds,
        block.dests, np.asarray(ptr), np.concatenate(new_t) if new_t else np.zeros(0, np.int64),
        np.concatenate(new_v) if new_v else np.zeros(0), block.cap, floor=block.floor,
        ref=block.ref, ref_off=block.ref_off, span=block.span, base_pred=block.base_pred,
        stats=dict(block.stats),
    )


# -- composition --------------------------------------------------------------


def compose_block(block: SummaryBlock, tails: np.ndarray, constant_arc: np.ndarray, tol: float = 1e-9) -> SummaryBlock:
    """Replace summaries by references where that is never looser.

    For destination ``v`` the candidate root ``p`` is found by walking
    shortest-path predecessors while the in-arc is the same constant arc at
    every base sample. The reference ``min(summary(p) + offset, cap(v))`` is
    always an upper bound (triangle inequality); it is accepted only if it
    is nowhere above the summary of ``v`` itself, checked at the union of
    both breakpoint sets.
    """
    if block.base_pred is None or block.span is not None:
        return block
    nd = len(block)
    pred = block.base_pred
    pos = np.full(int(max(block.dests.max(initial=0), 0)) + 1, -1, dtype=np.int64)
    pos[block.dests] = np.arange(nd)
    first = pred[0]
    consistent = np.all(pred == first[None, :], axis=0) & (first >= 0)
    parent = np.full(nd, -1, dtype=np.int64)
    ok = consistent.copy()
    ok[ok] = constant_arc[first[ok]]
    tl = np.where(ok, tails[np.where(first >= 0, first, 0)], -1)
    inblk = ok & (tl >= 0) & (tl < pos.size)
    parent[inblk] = pos[tl[inblk]]
    # flatten to roots
    root = np.arange(nd)
    cur = parent.copy()
    has = cur >= 0
    root[has] = cur[has]
    for _ in range(nd):
        nxt = np.where(root >= 0, parent[root], -1)
        step = nxt >= 0
        if not step.any():
            break
        root[step] = nxt[step]
    ref = np.full(nd, -1, dtype=np.int64)
    off = np.zeros(nd)
    base_rows = lambda k: block.vals[block.ptr[k]:block.ptr[k + 1]][
        (block.tidx[block.ptr[k]:block.ptr[k + 1]] % (1 << block.depth)) == 0
    ]
    accepted = 0
    for k in np.flatnonzero(root != np.arange(nd)):
        p = int(root[k])
        dv, dp = base_rows(k), base_rows(p)
        if dv.size != dp.size or dv.size == 0:
            continue
        diff = dv - dp
        if diff.max() - diff.min() > tol * max(1.0, abs(diff.max())):
            continue
        c = float(diff.max())
        a, b = block.ptr[k], block.ptr[k + 1]
        pa, pb = block.ptr[p], block.ptr[p + 1]
        if b - a == pb - pa and np.array_equal(block.tidx[a:b], block.tidx[pa:pb]):
            full = block.vals[a:b] - block.vals[pa:pb]
            if full.max() - full.min() <= tol * max(1.0, abs(c)):
                # same samples shifted by c: the envelope shifts too, so the reference is never looser
                ref[k] = p
                off[k] = c
                accepted += 1
                continue
        ts_v, ys_v = block.points(k)
        ts_p, ys_p = block.points(p)
        ts = np.unique(np.concatenate((ts_v, ts_p)))
        own = block.eval_index(k, ts)
        via = np.minimum(block.eval_index(p, ts) + c, block.cap[k])
        if np.all(via <= own + tol * np.maximum(1.0, own)):
            ref[k] = p
            off[k] = c
            accepted += 1
    keep = ref < 0
    counts = np.diff(block.ptr)
    counts = np.where(keep, counts, 0)
    sel = np.repeat(keep, np.diff(block.ptr))
    stats = dict(block.stats)
    stats["references"] = accepted
    return SummaryBlock(
        block.landmark, block.period, block.tau, block.depth, block.bounds,
        block.dests, np.concatenate(([0], np.cumsum(counts))), block.tidx[sel], block.vals[sel],
        block.cap, floor=block.floor, ref=ref, ref_off=off, span=block.span,
        base_pred=None, stats=stats,
    )


# -- binary block layout --------------------------------------------------------

_BLOCK_MAGIC = b"TDSB"
_HDR = struct.Struct("<4sBqdddBddBqqII")
_DT = {1: np.uint8, 2: np.uint16, 3: np.uint32, 4: np.int32, 5: np.int64, 6: np.float64}
_DT_CODE = {np.dtype(v): k for k, v in _DT.items()}

KIND_REF = 1
KIND_WIDE = 2
KIND_EXPLICIT = 4
KIND_RAW = 8


def _put(buf: io.BytesIO, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(arr)
    buf.write(struct.pack("<BI", _DT_CODE[arr.dtype], arr.size))
    buf.write(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())


def _get(mv: memoryview, off: int) -> tuple[np.ndarray, int]:
    code, size = struct.unpack_from("<BI", mv, off)
    off += 5
    if code not in _DT:
        raise CodecError(f"unknown array type {code}")
    dt = np.dtype(_DT[code]).newbyteorder("<")
    nbytes = size * dt.itemsize
    if off + nbytes > len(mv):
        raise CodecError("truncated block")
    arr = np.frombuffer(mv, dtype=dt, count=size, offset=off).astype(dt.newbyteorder("="))
    return arr, off + nbytes


def _narrowest(maxval: int, choices=(np.uint8, np.uint16, np.uint32)):
    for dt in choices:
        if maxval <= np.iinfo(dt).max:
            return dt
    raise CodecError(f"value {maxval} does not fit 32 bits")


def encode_block(block: SummaryBlock, cfg: CodecConfig = CodecConfig(), *, tails=None, constant_arc=None) -> bytes:
    """Serialize (and by default compress) a summary block."""
    if cfg.compose and tails is not None and constant_arc is not None:
        block = compose_block(block, tails, constant_arc)
    if cfg.c > 0:
        block = bucket_block(block, cfg.c)
    s = cfg.s
    nd = len(block)
    per = 1 << block.depth
    lo_idx = 0 if block.span is None else block.span[0] * per
    hi_idx = (block.n_base * per if block.span is None else block.span[1] * per + 1)
    grid_all = np.arange(lo_idx, hi_idx, per)
    if block.span is None:
        grid_all = grid_all[grid_all < block.n_base * per]

    kinds = np.zeros(nd, dtype=np.uint8)
    cnt = np.zeros(nd, dtype=np.int64)
    bases = []
    times = []
    narrow, wide = [], []
    wide_max = 0
    for k in range(nd):
        if block.ref[k] >= 0:
            kinds[k] = KIND_REF
            continue
        a, b = block.ptr[k], block.ptr[k + 1]
        ti, vi = block.tidx[a:b], block.vals[a:b]
        q = quantize_up(vi, s)
        is_grid = ti % per == 0
        if np.array_equal(ti[is_grid], grid_all):
            extra = ti[~is_grid]
        else:
            kinds[k] |= KIND_EXPLICIT
            extra = ti
        cnt[k] = extra.size
        times.append(extra - lo_idx)
        if cfg.shifts:
            base = int(q.min())
            sh = q - base
            bases.append(base)
            if sh.max() > 255:
                kinds[k] |= KIND_WIDE
                wide.append(sh)
                wide_max = max(wide_max, int(sh.max()))
            else:
                narrow.append(sh)
        else:
            kinds[k] |= KIND_RAW
            wide.append(q)
            wide_max = max(wide_max, int(q.max()))

    cap_q = quantize_up(block.cap, s)
    ref = block.ref.astype(np.int32)
    ref_q = quantize_up(np.where(block.ref >= 0, block.ref_off, 0.0), s)
    tcat = np.concatenate(times) if times else np.zeros(0, np.int64)
    buf = io.BytesIO()
    buf.write(_HDR.pack(
        _BLOCK_MAGIC, 1, block.landmark, block.period, block.tau, s, block.depth,
        block.bounds.lambda_min, block.bounds.lambda_max,
        block.span is not None, *(block.span or (0, 0)), nd, block.n_base,
    ))
    _put(buf, block.dests.astype(_narrowest(int(block.dests.max(initial=0)), (np.uint32,))))
    _put(buf, kinds)
    _put(buf, cap_q.astype(_narrowest(int(cap_q.max(initial=0)))))
    _put(buf, ref)
    _put(buf, ref_q.astype(_narrowest(int(ref_q.max(initial=0)))))
    _put(buf, cnt.astype(_narrowest(int(cnt.max(initial=0)))))
    bcat = np.asarray(bases, dtype=np.int64)
    _put(buf, bcat.astype(_narrowest(int(bcat.max(initial=0)))))
    _put(buf, tcat.astype(_narrowest(int(tcat.max(initial=0)), (np.uint16, np.uint32))))
    _put(buf, np.concatenate(narrow).astype(np.uint8) if narrow else np.zeros(0, np.uint8))
    wcat = np.concatenate(wide) if wide else np.zeros(0, np.int64)
    _put(buf, wcat.astype(_narrowest(wide_max, (np.uint16, np.uint32))))
    raw = buf.getvalue()
    return compress_block(raw) if cfg.compress else raw


def decode_block(data: bytes) -> SummaryBlock:
    """Inverse of :func:`encode_block`; values come back as multiples of ``s``."""
    if data[:4] != _BLOCK_MAGIC:
        data = decompress_block(data)
    mv = memoryview(data)
    if len(mv) < _HDR.size:
        raise CodecError("truncated block header")
    (magic, ver, landmark, period, tau, s, depth, lmin, lmax,
     has_span, sp0, sp1, nd, n_base) = _HDR.unpack_from(mv, 0)
    if magic != _BLOCK_MAGIC or ver != 1:
        raise CodecError("not a summary block")
    off = _HDR.size
    fields = []
    for _ in range(10):
        arr, off = _get(mv, off)
        fields.append(arr)
    dests, kinds, cap_q, ref, ref_q, cnt, bases, tcat, narrow, wide = fields
    span = (int(sp0), int(sp1)) if has_span else None
    per = 1 << depth
    lo_idx = 0 if span is None else span[0] * per
    hi_idx = n_base * per if span is None else span[1] * per + 1
    grid_all = np.arange(lo_idx, hi_idx, per, dtype=np.int64)
    if span is None:
        grid_all = grid_all[grid_all < n_base * per]

    tparts, vparts, counts = [], [], np.zeros(nd, dtype=np.int64)
    tp = bp = npos = wpos = 0
    cnt = cnt.astype(np.int64)
    tcat = tcat.astype(np.int64)
    for k in range(nd):
        kd = int(kinds[k])
        if kd & KIND_REF:
            continue
        c = int(cnt[k])
        extra = tcat[tp:tp + c] + lo_idx
        tp += c
        ti = extra if kd & KIND_EXPLICIT else np.sort(np.concatenate((grid_all, extra)))
        m = ti.size
        if kd & KIND_RAW:
            q = wide[wpos:wpos + m].astype(np.int64)
            wpos += m
        else:
            base = int(bases[bp])
            bp += 1
            if kd & KIND_WIDE:
                q = wide[wpos:wpos + m].astype(np.int64) + base
                wpos += m
            else:
                q = narrow[npos:npos + m].astype(np.int64) + base
                npos += m
        tparts.append(ti)
        vparts.append(q * s)
        counts[k] = m
    ptr = np.concatenate(([0], np.cumsum(counts)))
    ref = ref.astype(np.int64)
    if np.any(ref >= nd):
        raise CodecError("reference outside the block")
    blk = SummaryBlock(
        landmark, period, tau, depth, SlopeBounds(lmin, lmax), dests.astype(np.int64), ptr,
        np.concatenate(tparts) if tparts else np.zeros(0, np.int64),
        np.concatenate(vparts) if vparts else np.zeros(0),
        cap_q.astype(np.float64) * s, ref=ref,
        ref_off=ref_q.astype(np.float64) * s, span=span,
    )
    for k in np.flatnonzero(ref >= 0):
        blk.resolve(int(k))  # raises on cycles
    return blk


def compress_block(raw: bytes, level: int = 6) -> bytes:
    return zlib.compress(raw, level) if raw else b""


def decompress_block(data: bytes) -> bytes:
    if not data:
        return b""
    try:
        return zlib.decompress(data)
    except zlib.error as exc:
        raise CodecError(f"corrupt compressed block: {exc}") from None


def stage_sizes(block: SummaryBlock, cfg: CodecConfig = CodecConfig(), *, tails=None, constant_arc=None) -> dict[str, int]:
    """Encoded size in bytes after each cumulative stage."""
    raw = int(block.tidx.size * 16 + len(block) * 16)
    out = {"raw": raw}
    steps = [
        ("fixed-range", CodecConfig(cfg.s, 0.0, False, False, False)),
        ("bucketing", CodecConfig(cfg.s, cfg.c, False, False, False)),
        ("composition", CodecConfig(cfg.s, cfg.c, True, False, False)),
        ("shifts", CodecConfig(cfg.s, cfg.c, True, True, False)),
        ("compression", CodecConfig(cfg.s, cfg.c, True, True, True)),
    ]
    for name, c in steps:
        out[name] = len(encode_block(block, c, tails=tails, constant_arc=constant_arc))
    return out


# -- indices ------------------------------------------------------------------


class FlatIndex:
    """``table[i, v]`` is the record position of ``v`` in landmark ``i``'s block, -1 if absent."""

    MAGIC = b"TDFX1"

    def __init__(self, landmarks: np.ndarray, table: np.ndarray):
        self.landmarks = np.asarray(landmarks, dtype=np.int64)
        self.table = np.asarray(table, dtype=np.int32)
        self._row = {int(l): i for i, l in enumerate(self.landmarks)}

    @classmethod
    def build(cls, n: int, blocks: Iterable[tuple[int, np.ndarray]]) -> "FlatIndex":
        """``blocks`` are ``(landmark, destinations in record order)`` pairs."""
        blocks = list(blocks)
        table = np.full((len(blocks), n), -1, dtype=np.int32)
        for i, (_, dests) in enumerate(blocks):
            table[i, dests] = np.arange(len(dests), dtype=np.int32)
        return cls(np.array([l for l, _ in blocks], dtype=np.int64), table)

    def lookup(self, landmark: int, v: int) -> int:
        i = self._row.get(int(landmark))
        if i is None:
            return -1
        return int(self.table[i, v])

    def to_bytes(self) -> bytes:
        L, n = self.table.shape
        return (
            self.MAGIC + struct.pack("<II", L, n)
            + self.landmarks.astype("<i8").tobytes() + self.table.astype("<i4").tobytes()
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "FlatIndex":
        if data[:5] != cls.MAGIC:
            raise CodecError("not a flat index")
        L, n = struct.unpack_from("<II", data, 5)
        off = 13
        lms = np.frombuffer(data, "<i8", L, off)
        table = np.frombuffer(data, "<i4", L * n, off + 8 * L).reshape(L, n)
        return cls(lms.astype(np.int64), table.astype(np.int32))


class HornIndex:
    """Per vertex: covering landmarks in ascending id order with record positions."""

    MAGIC = b"TDHX1"

    def __init__(self, ptr: np.ndarray, landmark: np.ndarray, offset: np.ndarray):
        self.ptr = np.asarray(ptr, dtype=np.int64)
        self.landmark = np.asarray(landmark, dtype=np.int64)
        self.offset = np.asarray(offset, dtype=np.int64)

    @property
    def n(self) -> int:
        return self.ptr.size - 1

    @classmethod
    def build(cls, n: int, blocks: Iterable[tuple[int, np.ndarray]]) -> "HornIndex":
        """``blocks`` are ``(landmark, destinations in record order)`` pairs."""
        vs, ls, ks = [], [], []
        for l, dests in blocks:
            vs.append(np.asarray(dests, dtype=np.int64))
            ls.append(np.full(len(dests), l, dtype=np.int64))
            ks.append(np.arange(len(dests), dtype=np.int64))
        v = np.concatenate(vs) if vs else np.zeros(0, np.int64)
        l = np.concatenate(ls) if ls else np.zeros(0, np.int64)
        k = np.concatenate(ks) if ks else np.zeros(0, np.int64)
        order = np.lexsort((l, v))
        ptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(ptr, v + 1, 1)
        return cls(np.cumsum(ptr), l[order], k[order])

    def entries(self, v: int) -> list[tuple[int, int]]:
        a, b = self.ptr[v], self.ptr[v + 1]
        return list(zip(self.landmark[a:b].tolist(), self.offset[a:b].tolist()))

    def lookup(self, landmark: int, v: int) -> int:
        a, b = int(self.ptr[v]), int(self.ptr[v + 1])
        i = a + int(np.searchsorted(self.landmark[a:b], landmark))
        if i < b and self.landmark[i] == landmark:
            return int(self.offset[i])
        return -1

    def to_bytes(self) -> bytes:
        return (
            self.MAGIC + struct.pack("<IQ", self.n, self.landmark.size)
            + self.ptr.astype("<u8").tobytes()
            + self.landmark.astype("<i4").tobytes()
            + self.offset.astype("<i4").tobytes()
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "HornIndex":
        if data[:5] != cls.MAGIC:
            raise CodecError("not a horn index")
        n, nnz = struct.unpack_from("<IQ", data, 5)
        off = 17
        ptr = np.frombuffer(data, "<u8", n + 1, off)
        off += 8 * (n + 1)
        lm = np.frombuffer(data, "<i4", nnz, off)
        of = np.frombuffer(data, "<i4", nnz, off + 4 * nnz)
        return cls(ptr.astype(np.int64), lm.astype(np.int64), of.astype(np.int64))


# -- store --------------------------------------------------------------------

_STORE_MAGIC = b"TDOR1"
_STORE_HDR = struct.Struct("<5sHddIIQQ")
_DIR_ENTRY = struct.Struct("<qQQiq")


@dataclass
class DirEntry:
    landmark: int
    offset: int
    length: int
    level: int
    coverage: int


class Store:
    """Encoded blocks keyed by landmark, decoded on demand.

    Decoded blocks are kept in a small LRU cache guarded by a lock, so
    concurrent readers are safe.
    """

    def __init__(self, cfg: CodecConfig, entries: list[DirEntry], blobs: dict[int, bytes], meta: dict | None = None, cache_size: int = 128):
        self.cfg = cfg
        self.entries = {e.landmark: e for e in entries}
        self.blobs = blobs
        self.meta = meta or {}
        self.cache_size = cache_size
        self._cache: OrderedDict[int, SummaryBlock] = OrderedDict()
        self._lock = threading.Lock()

    @classmethod
    def from_blocks(cls, items: Iterable[tuple[int, int, bytes, int]], cfg: CodecConfig, meta=None, cache_size=128) -> "Store":
        """``items`` are ``(landmark, coverage_size, encoded_bytes, level)``."""
        entries, blobs = [], {}
        for landmark, cov, data, level in items:
            entries.append(DirEntry(int(landmark), 0, len(data), int(level), int(cov)))
            blobs[int(landmark)] = data
        return cls(cfg, entries, blobs, meta, cache_size)

    @property
    def landmarks(self) -> list[int]:
        return sorted(self.entries)

    def nbytes(self, landmark: int | None = None) -> int:
        if landmark is not None:
            return len(self.blobs[landmark])
        return sum(len(b) for b in self.blobs.values())

    def block(self, landmark: int) -> SummaryBlock:
        with self._lock:
            blk = self._cache.get(landmark)
            if blk is not None:
                self._cache.move_to_end(landmark)
                return blk
        blk = decode_block(self.blobs[landmark])
        with self._lock:
            self._cache[landmark] = blk
            self._cache.move_to_end(landmark)
            while len(self._cache) > self.cache_size:
                self._cache.popitem(last=False)
        return blk

    def save(self, path: str | os.PathLike) -> None:
        write_store(path, self)

    @classmethod
    def load(cls, path: str | os.PathLike, cache_size: int = 128) -> "Store":
        data = Path(path).read_bytes()
        if len(data) < _STORE_HDR.size:
            raise CodecError("truncated store file")
        magic, ver, s, c, flags, nblk, meta_off, meta_len = _STORE_HDR.unpack_from(data, 0)
        if magic != _STORE_MAGIC:
            raise CodecError("not a store file (bad magic)")
        if ver != 1:
            raise CodecError(f"unsupported store version {ver}")
        off = _STORE_HDR.size
        entries, blobs = [], {}
        for i in range(nblk):
            e = DirEntry(*_DIR_ENTRY.unpack_from(data, off + i * _DIR_ENTRY.size))
            if e.offset + e.length > len(data):
                raise CodecError(f"block of landmark {e.landmark} exceeds file")
            entries.append(e)
            blobs[e.landmark] = data[e.offset:e.offset + e.length]
        meta = json.loads(data[meta_off:meta_off + meta_len]) if meta_len else {}
        return cls(CodecConfig.from_header(s, c, flags), entries, blobs, meta, cache_size)


def write_store(path: str | os.PathLike, store: Store) -> None:
    lms = store.landmarks
    meta = json.dumps(store.meta, sort_keys=True).encode()
    off = _STORE_HDR.size + _DIR_ENTRY.size * len(lms)
    directory = []
    for l in lms:
        e = store.entries[l]
        directory.append(DirEntry(l, off, len(store.blobs[l]), e.level, e.coverage))
        off += len(store.blobs[l])
    meta_off = off
    with open(path, "wb") as fh:
        fh.write(_STORE_HDR.pack(_STORE_MAGIC, 1, store.cfg.s, store.cfg.c, store.cfg.flags, len(lms), meta_off, len(meta)))
        for e in directory:
            fh.write(_DIR_ENTRY.pack(e.landmark, e.offset, e.length, e.level, e.coverage))
        for l in lms:
            fh.write(store.blobs[l])
        fh.write(meta)
