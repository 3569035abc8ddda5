"""Command-line entry points.

    homeconsult serve --config server.yaml
    homeconsult train-router --data DIR [--out FILE]
    homeconsult eval gen-corpus --seed 7 --n 2000 --out DIR
    homeconsult eval gen-scenarios --seed 11 --data DIR
    homeconsult eval run --preset all --data DIR --out DIR [--assert]

``eval run --assert`` exits nonzero when any expected ordering fails.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional, Sequence

from .kb import IngestConfig, ingest_corpus, load_amenities, load_listings
from .router import RouterModel, TrainingConfig


def _read_jsonl(path: str) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


# ---------------------------------------------------------------------------
# serve


def _load_server_config(path: str) -> dict:
    import yaml

    with open(path, encoding="utf-8") as fh:
        cfg = yaml.safe_load(fh) or {}
    if not isinstance(cfg, dict):
        raise SystemExit(f"config {path!r} must be a mapping")
    for key in ("listings", "amenities"):
        if key not in cfg:
            raise SystemExit(f"config {path!r} is missing required key {key!r}")
    return cfg


def _build_engine_from_config(cfg: dict):
    from .bench.runner import build_index
    from .generation import NoisyBackend, TemplateBackend
    from .orchestrator import Engine

    ingest = IngestConfig(
        subway_radius_m=float(cfg.get("subway_radius_m", IngestConfig.subway_radius_m)),
        school_radius_m=float(cfg.get("school_radius_m", IngestConfig.school_radius_m)),
    )
    listings = load_listings(cfg["listings"])
    amenities = load_amenities(cfg["amenities"])
    kg = ingest_corpus(listings, amenities, ingest)
    index = build_index(kg)
    router = RouterModel.load(cfg["router"]) if cfg.get("router") else None

    backend_name = str(cfg.get("backend", "template"))
    if backend_name == "template":
        backend = TemplateBackend()
    elif backend_name == "noisy":
        backend = NoisyBackend()
    else:
        raise SystemExit(f"unknown backend {backend_name!r} (expected template|noisy)")

    clock = str(cfg.get("clock", "wall"))
    if clock not in ("wall", "simulated"):
        raise SystemExit(f"unknown clock {clock!r} (expected wall|simulated)")
    return Engine(
        kg,
        index,
        router=router,
        backend=backend,
        clock_mode=clock,
        bundle_size=int(cfg.get("bundle_size", 20)),
    )


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .api import create_app

    cfg = _load_server_config(args.config)
    engine = _build_engine_from_config(cfg)
    app = create_app(engine)
    host = str(cfg.get("host", "127.0.0.1"))
    port = int(cfg.get("port", 8000))
    print(f"serving {len(engine.kg.property_ids())} listings on http://{host}:{port}")
    uvicorn.run(app, host=host, port=port, log_level=str(cfg.get("log_level", "info")))
    return 0


# ---------------------------------------------------------------------------
# knowledge-base inspection


def cmd_kb_stats(args: argparse.Namespace) -> int:
    cfg = IngestConfig(subway_radius_m=args.subway_radius, school_radius_m=args.school_radius)
    kg = ingest_corpus(load_listings(args.listings), load_amenities(args.amenities), cfg)
    stats = kg.stats()
    print("nodes:")
    for label in sorted(stats["nodes"]):
        print(f"  {label:<12} {stats['nodes'][label]}")
    print("edges:")
    for rel in sorted(stats["edges"]):
        print(f"  {rel:<12} {stats['edges'][rel]}")
    print(f"total: {stats['node_total']} nodes, {stats['edge_total']} edges")
    return 0


# ---------------------------------------------------------------------------
# router training


def cmd_train_router(args: argparse.Namespace) -> int:
    import os

    from .bench.corpus import BENCH_INGEST
    from .bench.runner import artifact_path, build_index, fit_router
    from .bench.scenarios import load_scenarios

    listings = load_listings(artifact_path(args.data, "listings.jsonl"))
    amenities = load_amenities(artifact_path(args.data, "amenities.jsonl"))
    scenarios = load_scenarios(artifact_path(args.data, "scenarios.jsonl"))
    kg = ingest_corpus(listings, amenities, BENCH_INGEST)
    index = build_index(kg)
    cfg = TrainingConfig(c_fn=args.c_fn, seed=args.seed)
    model, info = fit_router(scenarios, index, cfg)
    out = args.out or os.path.join(args.data, "router.json")
    model.save(out)
    print(
        f"trained on {info['train_rows']} rows "
        f"(held out {info['holdout_rows']}, recall {info['holdout_recall']:.3f}) -> {out}"
    )
    return 0


# ---------------------------------------------------------------------------
# eval subcommands


def cmd_gen_corpus(args: argparse.Namespace) -> int:
    from .bench.corpus import generate_corpus, write_corpus

    corpus = generate_corpus(args.seed, args.n)
    meta = write_corpus(corpus, args.out, args.seed)
    print(f"wrote {meta['listings']} listings + amenities to {args.out}")
    return 0


def cmd_gen_scenarios(args: argparse.Namespace) -> int:
    import os

    from .bench.corpus import BENCH_INGEST
    from .bench.runner import artifact_path, build_index
    from .bench.scenarios import generate_scenarios, save_scenarios

    listings = _read_jsonl(artifact_path(args.data, "listings.jsonl"))
    amenities = _read_jsonl(artifact_path(args.data, "amenities.jsonl"))
    # the capture check needs the same dense index the engine will search
    kg = ingest_corpus(load_listings(artifact_path(args.data, "listings.jsonl")), amenities, BENCH_INGEST)
    scenarios = generate_scenarios(
        args.seed,
        listings,
        amenities,
        n_scenarios=args.n,
        complex_share=args.complex_share,
        index=build_index(kg),
    )
    out = os.path.join(args.data, "scenarios.jsonl")
    save_scenarios(out, scenarios)
    n_complex = sum(1 for s in scenarios if s.klass == "complex")
    print(f"wrote {len(scenarios)} scenarios ({n_complex} complex) -> {out}")
    return 0


def cmd_eval_run(args: argparse.Namespace) -> int:
    from .bench.runner import (
        PRESET_ORDER,
        check_assertions,
        load_bench_data,
        render_tables,
        run_benchmark,
        write_outputs,
    )

    presets = list(PRESET_ORDER) if args.preset == "all" else [args.preset]
    data = load_bench_data(args.data)
    report, turn_rows = run_benchmark(data, presets, args.seed, keep_turn_rows=True)
    path = write_outputs(args.out, report, turn_rows)
    print(render_tables(report))
    print(f"report -> {path}")
    if args.check:
        failures = check_assertions(report)
        if failures:
            for f in failures:
                print(f"ASSERT FAIL: {f}", file=sys.stderr)
            return 1
        print("all benchmark assertions hold")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="homeconsult", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("serve", help="run the HTTP API")
    sp.add_argument("--config", required=True, help="YAML server config")
    sp.set_defaults(func=cmd_serve)

    kp = sub.add_parser("kb", help="knowledge-base utilities")
    ksub = kp.add_subparsers(dest="kb_command", required=True)
    ks = ksub.add_parser("stats", help="print node/edge counts per label and relation")
    ks.add_argument("--listings", required=True)
    ks.add_argument("--amenities", required=True)
    ks.add_argument("--subway-radius", type=float, default=IngestConfig.subway_radius_m)
    ks.add_argument("--school-radius", type=float, default=IngestConfig.school_radius_m)
    ks.set_defaults(func=cmd_kb_stats)

    tp = sub.add_parser("train-router", help="fit routing weights from a scenario file")
    tp.add_argument("--data", required=True, help="directory with listings/amenities/scenarios")
    tp.add_argument("--out", default=None, help="output path (default: DATA/router.json)")
    tp.add_argument("--c-fn", type=float, default=5.0, help="false-negative cost weight")
    tp.add_argument("--seed", type=int, default=7)
    tp.set_defaults(func=cmd_train_router)

    ep = sub.add_parser("eval", help="benchmark utilities")
    esub = ep.add_subparsers(dest="eval_command", required=True)

    gc = esub.add_parser("gen-corpus", help="generate the synthetic city")
    gc.add_argument("--seed", type=int, default=7)
    gc.add_argument("--n", type=int, default=2000, help="number of listings")
    gc.add_argument("--out", default="bench_data")
    gc.set_defaults(func=cmd_gen_corpus)

    gs = esub.add_parser("gen-scenarios", help="generate consultation scenarios with gold sets")
    gs.add_argument("--seed", type=int, default=11)
    gs.add_argument("--data", default="bench_data")
    gs.add_argument("--n", type=int, default=100, help="number of scenarios")
    gs.add_argument("--complex-share", type=float, default=0.2)
    gs.set_defaults(func=cmd_gen_scenarios)

    er = esub.add_parser("run", help="sweep presets and write the report")
    er.add_argument("--preset", default="all", help="preset name or 'all'")
    er.add_argument("--data", default="bench_data")
    er.add_argument("--out", default="bench_out")
    er.add_argument("--seed", type=int, default=23, help="session noise seed")
    er.add_argument("--assert", dest="check", action="store_true", help="exit 1 on ordering failures")
    er.set_defaults(func=cmd_eval_run)

    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
