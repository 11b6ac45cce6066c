"""Saving and reopening preprocessed oracles.

An oracle lives in three files next to each other: the store (``path``),
its index (``path + ".idx"``) and, when disruptions are active, their list
(``path + ".live.json"``). The graph itself is the instance file.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .codec import CodecError, FlatIndex, HornIndex, Store
from .flat import FlatOracle, OracleBase
from .graph import TDGraph
from .horn import HornOracle, HornParams
from .landmarks import LandmarkHierarchy
from .trap import TrapConfig
from .ttf import SlopeBounds

__all__ = ["save_oracle", "load_oracle", "index_path", "live_path"]


def index_path(path) -> Path:
    return Path(str(path) + ".idx")


def live_path(path) -> Path:
    return Path(str(path) + ".live.json")


def save_oracle(oracle: OracleBase, path: str | os.PathLike) -> None:
    oracle.store.save(path)
    index_path(path).write_bytes(oracle.index.to_bytes())
    live = getattr(oracle, "live", None)
    lp = live_path(path)
    if live is not None and live.disruptions:
        lp.write_text(live.dumps())
    elif lp.exists():
        lp.unlink()


def _trap_cfg(meta: dict) -> TrapConfig:
    return TrapConfig(
        epsilon=meta["epsilon"],
        tau=meta["tau"],
        slope_bounds=SlopeBounds(meta["lambda_min"], meta["lambda_max"]),
        max_depth=meta["max_depth"],
    )


def load_oracle(g: TDGraph, path: str | os.PathLike, *, with_live: bool = True) -> OracleBase:
    store = Store.load(path)
    meta = store.meta
    if abs(meta.get("period", g.period) - g.period) > 1e-9:
        raise CodecError("store was built for a different period")
    if not index_path(path).exists():
        raise CodecError(f"missing index file {index_path(path)}")
    raw = index_path(path).read_bytes()
    trap_cfg = _trap_cfg(meta)
    kind = meta.get("kind")
    if kind == "flat":
        index = FlatIndex.from_bytes(raw)
        oracle = FlatOracle(g, store.landmarks, store, index, trap_cfg, store.cfg, meta.get("psi"))
    elif kind == "horn":
        index = HornIndex.from_bytes(raw)
        levels = [np.asarray(lev, dtype=np.int64) for lev in meta["levels"]]
        hier = LandmarkHierarchy(
            levels,
            meta["coverage_sizes"],
            meta.get("exclusion_sizes", [0] * len(levels)),
            _coverage_from_index(index),
            meta.get("method", "HSR"),
            meta.get("seed", 0),
            meta.get("xi", 0.1),
        )
        oracle = HornOracle(g, hier, store, index, trap_cfg, store.cfg, HornParams(**meta.get("params", {})))
    else:
        raise CodecError(f"unknown oracle kind {kind!r}")
    if with_live and live_path(path).exists():
        from .live import LiveTraffic

        oracle.live = LiveTraffic(oracle)
        oracle.live.loads(live_path(path).read_text())
    return oracle


def _coverage_from_index(index: HornIndex) -> dict[int, np.ndarray]:
    verts = np.repeat(np.arange(index.n, dtype=np.int64), np.diff(index.ptr))
    order = np.lexsort((verts, index.landmark))
    lm, vs = index.landmark[order], verts[order]
    cuts = np.flatnonzero(np.diff(lm)) + 1
    return {int(group[0]): v for group, v in zip(np.split(lm, cuts), np.split(vs, cuts)) if group.size}
