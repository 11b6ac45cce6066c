"""Compiled inner loops: resumable label-setting search over CSR arrays.

Arc evaluation follows arc -> alternatives -> function sequences. A plain arc
has one alternative made of its own function; a contraction shortcut holds
the chain of original functions, evaluated one after the other with exactly
the same arithmetic a search over the original arcs would do. Parallel
alternatives take the minimum arrival.
"""

from __future__ import annotations

import numpy as np
from numba import njit

EXHAUSTED = 0
TARGET = 1
MASK = 2
SIZE = 3
RADIUS = 4
ALL_TARGETS = 5

UNTOUCHED = 0
QUEUED = 1
SETTLED = 2


@njit(cache=True, nogil=True)
def eval_fn(fid, t, fn_ptr, kx, ky, period):
    lo = fn_ptr[fid]
    hi = fn_ptr[fid + 1]
    tau = t % period
    # searchsorted(side="right") - 1 over kx[lo:hi]
    a = lo
    b = hi
    while a < b:
        mid = (a + b) >> 1
        if kx[mid] <= tau:
            a = mid + 1
        else:
            b = mid
    j = a - 1
    if j < lo:
        j = lo
    if j > hi - 2:
        j = hi - 2
    x0 = kx[j]
    y0 = ky[j]
    x1 = kx[j + 1]
    y1 = ky[j + 1]
    return y0 + (y1 - y0) / (x1 - x0) * (tau - x0)


@njit(cache=True, nogil=True)
def arc_arrival(a, t, alt_ptr, seq_ptr, seq_fn, fn_ptr, kx, ky, period):
    best = np.inf
    for k in range(alt_ptr[a], alt_ptr[a + 1]):
        x = t
        for q in range(seq_ptr[k], seq_ptr[k + 1]):
            x = x + eval_fn(seq_fn[q], x, fn_ptr, kx, ky, period)
        if x < best:
            best = x
    return best


@njit(cache=True, nogil=True)
def _less(u, v, label):
    lu = label[u]
    lv = label[v]
    return lu < lv or (lu == lv and u < v)


@njit(cache=True, nogil=True)
def _sift_up(i, heap, pos, label):
    v = heap[i]
    while i > 0:
        p = (i - 1) >> 1
        u = heap[p]
        if _less(v, u, label):
            heap[i] = u
            pos[u] = i
            i = p
        else:
            break
    heap[i] = v
    pos[v] = i


@njit(cache=True, nogil=True)
def _sift_down(i, size, heap, pos, label):
    v = heap[i]
    while True:
        c = 2 * i + 1
        if c >= size:
            break
        if c + 1 < size and _less(heap[c + 1], heap[c], label):
            c += 1
        u = heap[c]
        if _less(u, v, label):
            heap[i] = u
            pos[u] = i
            i = c
        else:
            break
    heap[i] = v
    pos[v] = i


@njit(cache=True, nogil=True)
def push(v, lab, label, status, heap, pos, hsize):
    label[v] = lab
    status[v] = QUEUED
    i = hsize[0]
    heap[i] = v
    pos[v] = i
    hsize[0] = i + 1
    _sift_up(i, heap, pos, label)


@njit(cache=True, nogil=True)
def run(
    indptr, adj_arc, adj_nbr, arc_active, vertex_active,
    alt_ptr, seq_ptr, seq_fn, fn_ptr, kx, ky, period,
    static_mode, weights,
    label, pred, status, heap, pos, hsize, order, count,
    t0, target, mask, max_size, radius, tmask, tremain,
):
    """Continue a search until a stop criterion fires; returns the stop code.

    ``t0`` is the origin label, used by the radius test. ``target < 0``,
    ``max_size <= 0``, ``radius < 0`` and ``tremain[0] < 0`` disable the
    corresponding criteria; the mask criterion is disabled by an empty mask.
    """
    use_mask = mask.shape[0] > 0
    use_tmask = tremain[0] >= 0 and tmask.shape[0] > 0
    while hsize[0] > 0:
        v = heap[0]
        if radius >= 0.0 and label[v] - t0 > radius:
            return RADIUS
        last = hsize[0] - 1
        hsize[0] = last
        if last > 0:
            heap[0] = heap[last]
            pos[heap[0]] = 0
            _sift_down(0, last, heap, pos, label)
        status[v] = SETTLED
        order[count[0]] = v
        count[0] += 1
        lv = label[v]
        for e in range(indptr[v], indptr[v + 1]):
            a = adj_arc[e]
            if not arc_active[a]:
                continue
            w = adj_nbr[e]
            if status[w] == SETTLED or not vertex_active[w]:
                continue
            if static_mode:
                nl = lv + weights[a]
            else:
                nl = arc_arrival(a, lv, alt_ptr, seq_ptr, seq_fn, fn_ptr, kx, ky, period)
            if status[w] == UNTOUCHED:
                pred[w] = a
                push(w, nl, label, status, heap, pos, hsize)
            elif nl < label[w] or (nl == label[w] and a < pred[w]):
                label[w] = nl
                pred[w] = a
                _sift_up(pos[w], heap, pos, label)
        if v == target:
            return TARGET
        if use_tmask and tmask[v]:
            tremain[0] -= 1
            if tremain[0] == 0:
                return ALL_TARGETS
        if use_mask and mask[v]:
            return MASK
        if max_size > 0 and count[0] >= max_size:
            return SIZE
    return EXHAUSTED


@njit(cache=True, nogil=True)
def eval_many(fid, ts, fn_ptr, kx, ky, period):
    out = np.empty(ts.shape[0])
    for i in range(ts.shape[0]):
        out[i] = eval_fn(fid, ts[i], fn_ptr, kx, ky, period)
    return out
