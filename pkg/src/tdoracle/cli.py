"""Command line: ``tdoracle <verb> ...``.

Exit codes: 0 ok, 2 invalid input or configuration, 3 unreachable query.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import (
    flat_algorithms,
    freeflow_blowup,
    generate_queries,
    run_benchmark,
    validate_assumptions,
)
from .codec import CodecConfig, CodecError, stage_sizes
from .flat import FlatOracle
from .generate import KINDS, generate_instance
from .graph import FifoError, InstanceError, contract_degree2, instance_stats, load_instance, save_instance
from .horn import HornOracle, HornParams
from .landmarks import PartitionError, build_hierarchy, load_partition, select
from .live import Disruption, LiveTraffic
from .persist import load_oracle, save_oracle
from .trap import TrapConfig

log = logging.getLogger("tdoracle")

EXIT_OK, EXIT_INVALID, EXIT_UNREACHABLE = 0, 2, 3

# key -> parser for the key=value config file
_CONFIG_KEYS = {
    "epsilon": float,
    "tau": float,
    "max_depth": int,
    "s": float,
    "c": float,
    "compose": lambda v: v.lower() in ("1", "true", "yes"),
    "method": str,
    "landmarks": int,
    "ball_size": int,
    "category_threshold": int,
    "partition": str,
    "levels": lambda v: [int(x) for x in v.split(",")],
    "coverage": lambda v: [int(x) for x in v.split(",")],
    "exclusion": lambda v: [int(x) for x in v.split(",")],
    "hierarchy_method": str,
    "seed": int,
    "workers": int,
    "psi": float,
    "a": float,
    "beta": float,
    "gamma": float,
    "xi": float,
    "esc_ratio": float,
    "r": int,
    "N": int,
    "contract": lambda v: v.lower() in ("1", "true", "yes"),
}


class UsageError(Exception):
    pass


def read_config(path: str | Path | None) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    if path is None:
        return {}
    out = {}
    for no, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{no}: expected key=value")
        k, v = (x.strip() for x in line.split("=", 1))
        if k not in _CONFIG_KEYS:
            raise UsageError(f"{path}:{no}: unknown key {k!r}")
        try:
            out[k] = _CONFIG_KEYS[k](v)
        except ValueError as e:
            raise UsageError(f"{path}:{no}: bad value for {k}: {e}") from None
    return out


def _set_overrides(cfg: dict, pairs) -> dict:
    for p in pairs or ():
        if "=" not in p:
            raise UsageError(f"--set expects key=value, got {p!r}")
        k, v = p.split("=", 1)
        if k not in _CONFIG_KEYS:
            raise UsageError(f"unknown key {k!r}")
        cfg[k] = _CONFIG_KEYS[k](v)
    return cfg


def _config(args) -> dict:
    return _set_overrides(read_config(getattr(args, "config", None)), getattr(args, "set", None))


def _trap(cfg) -> TrapConfig:
    return TrapConfig(epsilon=cfg.get("epsilon", 0.1), tau=cfg.get("tau"), max_depth=cfg.get("max_depth", 6))


def _codec(cfg) -> CodecConfig:
    return CodecConfig(s=cfg.get("s", 1.32), c=cfg.get("c", 0.0), compose=cfg.get("compose", True))


def _load_graph(path, cfg=None):
    g = load_instance(path)
    if cfg and cfg.get("contract"):
        g = contract_degree2(g)
    return g


def _print(obj, as_json):
    if as_json:
        print(json.dumps(obj, indent=1, default=float))
    else:
        for k, v in obj.items():
            print(f"{k}: {v}")


# -- verbs -------------------------------------------------------------------------


def cmd_generate(args):
    g = generate_instance(
        args.kind, args.n, args.td_fraction, args.breakpoints, args.seed,
        chain_fraction=args.chain_fraction, period=args.period,
    )
    save_instance(g, args.out)
    print(f"wrote {args.out}: n={g.n} m={g.m}")
    return EXIT_OK


def cmd_stats(args):
    g = load_instance(args.instance)
    st = instance_stats(g).as_dict()
    out = {"arcs": st}
    if args.samples:
        out["assumptions"] = validate_assumptions(g, args.samples, args.seed).as_dict()
    if args.blowup:
        rng = np.random.default_rng(args.seed)
        act = g.active_vertices()
        origins = rng.choice(act, min(args.origins, act.size), replace=False)
        Fs = [min(int(f), act.size) for f in args.blowup.split(",")]
        out["blowup"] = [r.as_dict() for r in freeflow_blowup(g, origins, Fs)]
    if args.json:
        print(json.dumps(out, indent=1, default=float))
    else:
        _print(st, False)
        if "assumptions" in out:
            _print(out["assumptions"], False)
        for r in out.get("blowup", []):
            print("blowup " + " ".join(f"{k}={v:g}" for k, v in r.items()))
    return EXIT_OK


def cmd_preprocess(args):
    cfg = _config(args)
    g = _load_graph(args.instance, cfg)
    seed = cfg.get("seed", 0)
    workers = cfg.get("workers", 1)
    if args.kind == "flat":
        part = load_partition(cfg["partition"], g.n, g.vertex_active) if "partition" in cfg else None
        ls = select(
            g, cfg.get("method", "SR"), cfg.get("landmarks", 100), seed,
            ball_size=cfg.get("ball_size", 0), partition=part,
            category_threshold=cfg.get("category_threshold", 3),
        )
        oracle = FlatOracle.preprocess(g, ls, _trap(cfg), _codec(cfg), workers=workers, psi=cfg.get("psi"))
        oracle.store.meta["method"] = ls.method
    else:
        for k in ("levels", "coverage"):
            if k not in cfg:
                raise UsageError(f"horn preprocessing needs '{k}' in the config")
        params = HornParams(
            **{k: cfg[k] for k in ("a", "beta", "gamma", "xi", "esc_ratio", "r") if k in cfg}
        )
        h = build_hierarchy(
            g, cfg["levels"], cfg["coverage"], cfg.get("exclusion"),
            method=cfg.get("hierarchy_method", "HSR"), seed=seed, xi=params.xi,
        )
        oracle = HornOracle.preprocess(g, h, _trap(cfg), _codec(cfg), params, workers=workers)
        oracle.store.meta.update(exclusion_sizes=list(map(int, h.exclusion_sizes)), method=h.method, seed=seed, xi=h.xi)
    if cfg.get("psi") is not None:
        oracle.store.meta["psi"] = cfg["psi"]
    save_oracle(oracle, args.out)
    print(f"wrote {args.out}: {len(oracle.store.landmarks)} landmarks, {oracle.store.nbytes()} bytes")
    return EXIT_OK


def _open(args):
    cfg = _config(args)
    g = _load_graph(args.instance, cfg)
    return g, load_oracle(g, args.store), cfg


def cmd_query(args):
    g, oracle, cfg = _open(args)
    kw = {"N": cfg.get("N", 6), "r": cfg.get("r", 1)}
    if args.N is not None:
        kw["N"] = args.N
    if args.r is not None:
        kw["r"] = args.r
    alg = args.algorithm or ("HQA" if isinstance(oracle, HornOracle) else "FCA")
    for v in (args.origin, args.dest):
        if not 0 <= v < g.n or not g.vertex_active[v]:
            raise UsageError(f"vertex {v} is not an active vertex")
    res = oracle.query(args.origin, args.dest, args.time, alg, **kw)
    out = {
        "algorithm": res.algorithm, "value": res.value, "tag": res.tag, "rank": res.rank,
        "landmarks": res.landmarks, "guarantee": res.guarantee,
    }
    if args.exact:
        from .search import Search

        s = Search(g if not hasattr(oracle, "view") else oracle.view().graph, args.origin, args.time)
        s.run(target=args.dest)
        out["tdd"] = s.distance(args.dest)
        out["tdd_rank"] = s.rank
    _print(out, args.json)
    return EXIT_OK if res.reachable else EXIT_UNREACHABLE


def cmd_bench(args):
    g, oracle, cfg = _open(args)
    qs = generate_queries(g, args.queries, args.seed, range_class=args.range_class)
    if isinstance(oracle, HornOracle):
        algs = {"HQA": oracle.hqa}
    else:
        algs = flat_algorithms(oracle, cfg.get("N", 6), cfg.get("r", 1))
    rep = run_benchmark(
        algs, qs, oracle.view().graph, ground_truth=not args.no_truth, workers=cfg.get("workers", 1),
        store_sizes={"store": oracle.store.nbytes()},
    )
    print(rep.table())
    if args.csv:
        Path(args.csv).write_text(rep.to_csv())
    if args.plot_data:
        Path(args.plot_data).write_text(rep.per_query_csv())
    return EXIT_OK


def cmd_update(args):
    g, oracle, cfg = _open(args)
    live = getattr(oracle, "live", None) or LiveTraffic(oracle)
    oracle.live = live
    if args.expire is not None:
        ok = live.expire(args.expire)
        print("expired" if ok else "no such disruption")
    else:
        if args.arc is None or args.window is None:
            raise UsageError("update needs --arc and --window (or --expire)")
        try:
            r_s, r_e = (float(x) for x in args.window.split(","))
        except ValueError:
            raise UsageError("--window expects START,END") from None
        ids = [0, *live.disruptions]
        d = Disruption(
            args.arc, r_s, r_e, factor=None if args.block else args.factor, block=args.block,
            id=max(ids) + 1,
        )
        patches = live.apply(d)
        print(f"disruption {d.id}: {len(patches)} landmarks patched, {len(live.tainted(d.id))} tainted")
    save_oracle(oracle, args.store)
    return EXIT_OK


def cmd_inspect(args):
    from .codec import Store

    store = Store.load(args.store)
    out = {
        "s": store.cfg.s, "c": store.cfg.c, "flags": store.cfg.flags,
        "landmarks": len(store.landmarks), "bytes": store.nbytes(), "meta": store.meta,
    }
    if args.landmark is not None:
        if args.landmark not in store.landmarks:
            raise UsageError(f"no block for landmark {args.landmark}")
        blk = store.block(args.landmark)
        out["block"] = {"destinations": len(blk), "bytes": store.nbytes(args.landmark), "refs": int((blk.ref >= 0).sum())}
        if args.stages and args.instance:
            g = load_instance(args.instance)
            from .trap import build_summaries
            from .persist import _trap_cfg

            raw = build_summaries(g, args.landmark, None, _trap_cfg(store.meta))
            const = np.array([f.is_constant for f in g.ttfs])
            out["stages"] = stage_sizes(raw, store.cfg, tails=g.tail, constant_arc=const)
    print(json.dumps(out, indent=1, default=float))
    return EXIT_OK


# -- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tdoracle", description="Time-dependent landmark distance oracles.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp):
        sp.add_argument("--config", help="key=value file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")

    sp = sub.add_parser("generate", help="write a synthetic instance")
    sp.add_argument("--kind", choices=KINDS, default="grid")
    sp.add_argument("--n", type=int, default=1000)
    sp.add_argument("--td-fraction", type=float, default=0.15)
    sp.add_argument("--breakpoints", type=int, default=8)
    sp.add_argument("--chain-fraction", type=float, default=0.0)
    sp.add_argument("--period", type=float, default=86400.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_generate)

    sp = sub.add_parser("stats", help="arc statistics and assumption checks")
    sp.add_argument("instance")
    sp.add_argument("--samples", type=int, default=0, help="random (o,d,t) for zeta and slopes")
    sp.add_argument("--blowup", help="comma-separated ball sizes F")
    sp.add_argument("--origins", type=int, default=50)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(fn=cmd_stats)

    sp = sub.add_parser("preprocess", help="build a FLAT or HORN store")
    sp.add_argument("kind", choices=("flat", "horn"))
    sp.add_argument("instance")
    sp.add_argument("--out", required=True)
    common(sp)
    sp.set_defaults(fn=cmd_preprocess)

    sp = sub.add_parser("query", help="answer one query")
    sp.add_argument("instance")
    sp.add_argument("store")
    sp.add_argument("origin", type=int)
    sp.add_argument("dest", type=int)
    sp.add_argument("time", type=float)
    sp.add_argument("--algorithm", choices=("FCA", "FCA+", "RQA", "HQA"))
    sp.add_argument("--N", type=int)
    sp.add_argument("--r", type=int)
    sp.add_argument("--exact", action="store_true", help="also run tdd")
    sp.add_argument("--json", action="store_true")
    common(sp)
    sp.set_defaults(fn=cmd_query)

    sp = sub.add_parser("bench", help="random-query benchmark against tdd")
    sp.add_argument("instance")
    sp.add_argument("store")
    sp.add_argument("--queries", type=int, default=1000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--range-class", choices=("short", "mid", "long"))
    sp.add_argument("--no-truth", action="store_true")
    sp.add_argument("--csv")
    sp.add_argument("--plot-data")
    common(sp)
    sp.set_defaults(fn=cmd_bench)

    sp = sub.add_parser("update", help="apply or expire a disruption")
    sp.add_argument("instance")
    sp.add_argument("store")
    sp.add_argument("--arc", type=int)
    sp.add_argument("--window", metavar="START,END", help="absolute seconds")
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--factor", type=float, default=2.0)
    g.add_argument("--block", action="store_true")
    sp.add_argument("--expire", type=int, metavar="ID")
    common(sp)
    sp.set_defaults(fn=cmd_update)

    sp = sub.add_parser("inspect-store", help="describe a store file")
    sp.add_argument("store")
    sp.add_argument("--landmark", type=int)
    sp.add_argument("--stages", action="store_true", help="size after each codec stage (needs --instance)")
    sp.add_argument("--instance")
    sp.set_defaults(fn=cmd_inspect)
    return p


def main(argv=None) -> int:
    p = build_parser()
    args = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except (UsageError, InstanceError, FifoError, PartitionError, CodecError, ValueError, OSError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
