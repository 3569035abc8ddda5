"""Benchmark driver: load artifacts, fit the router, sweep presets, report.

The sweep runs every requested preset over the same scenario file against a
single shared :class:`~homeconsult.orchestrator.Engine`, so all arms see the
same graph, index, router weights, and (session-scoped) generation noise.
Per-turn quality is judged against the scenario gold sets; latency is the
deterministic simulated cost model, so reports are bit-identical across runs
with the same artifacts.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Optional, Sequence

from ..constraints import EffectiveConstraintSet
from ..generation import REQUIRED_TOP_K, NoisyBackend
from ..kb import KnowledgeGraph, ingest_corpus, load_amenities, load_listings
from ..orchestrator import PRESETS, Engine, PipelineVariant, resolve_preset
from ..retrieval import enrich_query
from ..router import RouterFeatures, RouterModel, TrainingConfig, featurize, train
from ..vector import VectorIndex, render_listing_doc
from .corpus import BENCH_INGEST
from .latency import simulated_turn_ms
from .metrics import csr_at_5, faithfulness, mean, ndcg_at_5, p95, turn_accuracy
from .scenarios import Scenario, load_scenarios

__all__ = [
    "ArtifactError",
    "BenchData",
    "PRESET_ORDER",
    "build_index",
    "check_assertions",
    "fit_router",
    "load_bench_data",
    "render_tables",
    "run_benchmark",
    "scenario_training_rows",
    "write_outputs",
]

#: Canonical sweep order; "all" on the CLI expands to this.
PRESET_ORDER = (
    "full",
    "b1",
    "b2",
    "b3",
    "b4",
    "b5",
    "b6",
    "no_gate",
    "no_routing",
    "no_remediation",
    "no_validation",
)

#: Arms that switch off exactly one stage of the full pipeline.
SWITCH_OFF_ARMS = ("no_gate", "no_routing", "no_remediation", "no_validation")

ROUTER_FILE = "router.json"


class ArtifactError(FileNotFoundError):
    """A required benchmark input file is absent."""


def artifact_path(data_dir: str, name: str) -> str:
    path = os.path.join(data_dir, name)
    if not os.path.isfile(path):
        raise ArtifactError(f"missing benchmark artifact: {path}")
    return path


def build_index(kg: KnowledgeGraph) -> VectorIndex:
    docs = []
    for listing in kg.listings():
        district = kg.node(listing.district_id)
        assert district is not None
        region = kg.node(str(district.attrs["region_id"]))
        assert region is not None
        doc = render_listing_doc(listing, str(district.attrs["name"]), str(region.attrs["name"]))
        docs.append((listing.id, doc))
    return VectorIndex.build(docs)


@dataclass
class BenchData:
    kg: KnowledgeGraph
    index: VectorIndex
    scenarios: list[Scenario]
    router: Optional[RouterModel] = None


def load_bench_data(data_dir: str, require_router: bool = True) -> BenchData:
    """Load listings/amenities/scenarios (and usually the trained router)
    from ``data_dir``, raising :class:`ArtifactError` that names the first
    missing file."""
    listings = load_listings(artifact_path(data_dir, "listings.jsonl"))
    amenities = load_amenities(artifact_path(data_dir, "amenities.jsonl"))
    kg = ingest_corpus(listings, amenities, BENCH_INGEST)
    index = build_index(kg)
    scenarios = load_scenarios(artifact_path(data_dir, "scenarios.jsonl"))
    router = None
    if require_router:
        router = RouterModel.load(artifact_path(data_dir, ROUTER_FILE))
    return BenchData(kg=kg, index=index, scenarios=scenarios, router=router)


# ---------------------------------------------------------------------------
# router fitting


def scenario_training_rows(
    scenarios: Sequence[Scenario], index: VectorIndex
) -> list[tuple[RouterFeatures, int]]:
    """One row per scenario turn.  The positive label marks turns whose gold
    requires a relational join (the scenario class): exactly the turns where
    dense-only retrieval cannot reach the answer set."""
    rows: list[tuple[RouterFeatures, int]] = []
    for sc in scenarios:
        label = 1 if sc.klass == "complex" else 0
        for turn in sc.turns:
            ecs = EffectiveConstraintSet(constraints=tuple(turn.hard) + tuple(turn.soft))
            prelim = index.search(enrich_query(turn.query, ecs), 5)
            rows.append((featurize(turn.query, ecs, prelim), label))
    return rows


def holdout_split(
    rows: Sequence[tuple[RouterFeatures, int]],
) -> tuple[list[tuple[RouterFeatures, int]], list[tuple[RouterFeatures, int]]]:
    """Deterministic 3:1 split by row index (every 4th row held out)."""
    train_rows = [r for i, r in enumerate(rows) if i % 4 != 3]
    held_rows = [r for i, r in enumerate(rows) if i % 4 == 3]
    return train_rows, held_rows


def recall_on(model: RouterModel, rows: Sequence[tuple[RouterFeatures, int]]) -> float:
    positives = [f for f, y in rows if y == 1]
    if not positives:
        return 1.0
    hits = sum(1 for f in positives if model.predict(f).route == "graph")
    return hits / len(positives)


def fit_router(
    scenarios: Sequence[Scenario],
    index: VectorIndex,
    cfg: TrainingConfig = TrainingConfig(),
) -> tuple[RouterModel, dict]:
    """Train on 3/4 of the scenario turns, report held-out recall on the rest."""
    rows = scenario_training_rows(scenarios, index)
    train_rows, held_rows = holdout_split(rows)
    model = train(train_rows, cfg)
    info = {
        "rows": len(rows),
        "train_rows": len(train_rows),
        "holdout_rows": len(held_rows),
        "holdout_recall": recall_on(model, held_rows),
        "c_fn": cfg.c_fn,
    }
    return model, info


# ---------------------------------------------------------------------------
# the sweep


def _evidence_view(bundle) -> list[dict]:
    return [
        {
            "property_id": item.property_id,
            "fields": dict(item.fields),
            "graph_facts": [f.to_dict() for f in item.graph_facts],
        }
        for item in bundle.items
    ]


def run_preset(engine: Engine, preset: str, scenarios: Sequence[Scenario], seed: int) -> list[dict]:
    """Run one preset over every scenario; one result row per turn.

    ``noise_scope`` deliberately excludes the preset name so every arm faces
    the identical corruption schedule and metric deltas are attributable to
    the pipeline flags alone.
    """
    variant = resolve_preset(preset)
    rows: list[dict] = []
    for sc in scenarios:
        session = engine.create_session(preset, noise_scope=(seed, sc.scenario_id))
        for t_idx, turn in enumerate(sc.turns):
            result = engine.run_turn(session, turn.query)
            evidence = _evidence_view(result.bundle)
            claims = [c.to_dict() for c in result.response.claims]
            recommended = list(result.response.recommended_ids)
            required_k = REQUIRED_TOP_K.get(result.task, 1)
            rows.append(
                {
                    "preset": variant.name,
                    "scenario_id": sc.scenario_id,
                    "class": sc.klass,
                    "turn": t_idx,
                    "task": result.task,
                    "route": result.bundle.route_used,
                    "verdict": result.report.verdict,
                    "badge": result.badge,
                    "cycles": result.cycles,
                    "actions": list(result.actions),
                    "recommended_ids": recommended,
                    "claims": claims,
                    "evidence": evidence,
                    "acc": turn_accuracy(recommended, required_k, turn.gold_sat, claims, evidence),
                    "ndcg5": ndcg_at_5(recommended, turn.grades()),
                    "csr5": csr_at_5(recommended, turn.gold_sat),
                    "sim_ms": simulated_turn_ms(variant, result),
                }
            )
    return rows


def _subset_stats(rows: Sequence[dict]) -> dict:
    if not rows:
        return {"turns": 0}
    return {
        "turns": len(rows),
        "accuracy": mean([1.0 if r["acc"] else 0.0 for r in rows]),
        "ndcg5": mean([r["ndcg5"] for r in rows]),
        "csr5": mean([r["csr5"] for r in rows]),
        "faithfulness": faithfulness(rows),
        "graph_route_share": mean([1.0 if r["route"] == "graph" else 0.0 for r in rows]),
        "remediated_share": mean([1.0 if r["cycles"] > 0 else 0.0 for r in rows]),
        "unverified_share": mean([1.0 if r["badge"] == "unverified" else 0.0 for r in rows]),
        "latency_ms_mean": mean([r["sim_ms"] for r in rows]),
        "latency_ms_p95": p95([r["sim_ms"] for r in rows]),
    }


def aggregate(rows: Sequence[dict]) -> dict:
    return {
        "all": _subset_stats(rows),
        "complex": _subset_stats([r for r in rows if r["class"] == "complex"]),
        "simple": _subset_stats([r for r in rows if r["class"] == "simple"]),
    }


def run_benchmark(
    data: BenchData,
    presets: Sequence[str],
    seed: int,
    keep_turn_rows: bool = False,
):
    """Sweep ``presets`` over the scenario set and aggregate per-variant,
    per-subset metrics.  Returns the report dict (plus the raw turn rows when
    ``keep_turn_rows`` is set)."""
    engine = Engine(
        data.kg,
        data.index,
        router=data.router,
        backend=NoisyBackend(),
        clock_mode="simulated",
    )
    names: list[str] = []
    variants: dict[str, dict] = {}
    configs: dict[str, dict] = {}
    all_rows: list[dict] = []
    for preset in presets:
        variant = resolve_preset(preset)
        if variant.name in variants:
            continue
        rows = run_preset(engine, preset, data.scenarios, seed)
        names.append(variant.name)
        variants[variant.name] = aggregate(rows)
        configs[variant.name] = variant.to_dict()
        all_rows.extend(rows)

    n_complex = sum(1 for sc in data.scenarios if sc.klass == "complex")
    kg_stats = data.kg.stats()
    report = {
        "schema": "bench-report/v1",
        "seed": seed,
        "corpus": {
            "listings": len(data.kg.property_ids()),
            "nodes": kg_stats["node_total"],
            "edges": kg_stats["edge_total"],
        },
        "scenarios": {
            "total": len(data.scenarios),
            "complex": n_complex,
            "simple": len(data.scenarios) - n_complex,
            "turns": sum(len(sc.turns) for sc in data.scenarios),
        },
        "preset_order": names,
        "presets": configs,
        "variants": variants,
    }
    if keep_turn_rows:
        return report, all_rows
    return report


# ---------------------------------------------------------------------------
# assertions and rendering


def _metric(report: dict, name: str, subset: str, metric: str) -> float:
    return float(report["variants"][name][subset][metric])


def check_assertions(report: dict) -> list[str]:
    """Orderings the sweep is expected to reproduce; returns failure strings
    (empty list = all good).  Requires every canonical preset in the report."""
    failures: list[str] = []
    present = set(report.get("variants", {}))
    missing = [p for p in PRESET_ORDER if p not in present]
    if missing:
        return [f"assert mode needs every preset; missing: {', '.join(missing)}"]

    b2_cx = _metric(report, "b2", "complex", "csr5")
    if b2_cx > 0.2:
        failures.append(f"dense-only arm b2 complex csr5 = {b2_cx:.4f}, expected <= 0.2")
    full_cx = _metric(report, "full", "complex", "csr5")
    if full_cx < 0.9:
        failures.append(f"full complex csr5 = {full_cx:.4f}, expected >= 0.9")

    full_acc = _metric(report, "full", "all", "accuracy")
    for name in PRESET_ORDER:
        if name == "full":
            continue
        acc = _metric(report, name, "all", "accuracy")
        if acc > full_acc + 1e-9:
            failures.append(f"{name} accuracy {acc:.4f} exceeds full {full_acc:.4f}")

    drops = {arm: full_acc - _metric(report, arm, "all", "accuracy") for arm in SWITCH_OFF_ARMS}
    worst = max(SWITCH_OFF_ARMS, key=lambda a: drops[a])
    if worst != "no_routing":
        failures.append(
            "largest switch-off accuracy drop is "
            f"{worst} ({drops[worst]:.4f}), expected no_routing ({drops['no_routing']:.4f})"
        )
    cx_drop = _metric(report, "full", "complex", "accuracy") - _metric(
        report, "no_routing", "complex", "accuracy"
    )
    sm_drop = _metric(report, "full", "simple", "accuracy") - _metric(
        report, "no_routing", "simple", "accuracy"
    )
    if cx_drop <= sm_drop:
        failures.append(
            f"no_routing drop not concentrated on complex turns "
            f"(complex {cx_drop:.4f} vs simple {sm_drop:.4f})"
        )
    return failures


def _fmt(x: object, width: int = 7) -> str:
    if isinstance(x, float):
        return f"{x:>{width}.3f}"
    return f"{x!s:>{width}}"


def render_tables(report: dict) -> str:
    """Plain-text summary tables for the terminal / tables.txt."""
    names = [n for n in report.get("preset_order", []) if n in report["variants"]]
    out: list[str] = []

    out.append("overall (all turns)")
    header = ["variant", "acc", "ndcg@5", "csr@5", "faith", "ms_mean", "ms_p95"]
    out.append("  " + " ".join(f"{h:>8}" for h in header))
    for name in names:
        s = report["variants"][name]["all"]
        out.append(
            "  "
            + " ".join(
                [
                    f"{name:>8}",
                    _fmt(s["accuracy"], 8),
                    _fmt(s["ndcg5"], 8),
                    _fmt(s["csr5"], 8),
                    _fmt(s["faithfulness"], 8),
                    _fmt(s["latency_ms_mean"], 8),
                    _fmt(s["latency_ms_p95"], 8),
                ]
            )
        )

    out.append("")
    out.append("complex turns (relational constraints)")
    header = ["variant", "acc", "ndcg@5", "csr@5", "graph%"]
    out.append("  " + " ".join(f"{h:>8}" for h in header))
    for name in names:
        s = report["variants"][name]["complex"]
        if not s.get("turns"):
            continue
        out.append(
            "  "
            + " ".join(
                [
                    f"{name:>8}",
                    _fmt(s["accuracy"], 8),
                    _fmt(s["ndcg5"], 8),
                    _fmt(s["csr5"], 8),
                    _fmt(s["graph_route_share"], 8),
                ]
            )
        )

    if "full" in report["variants"]:
        full = report["variants"]["full"]
        arms = [n for n in SWITCH_OFF_ARMS if n in report["variants"]]
        if arms:
            out.append("")
            out.append("single-stage switch-offs (accuracy drop vs full)")
            header = ["variant", "all", "complex", "simple"]
            out.append("  " + " ".join(f"{h:>14}" for h in header))
            for name in arms:
                s = report["variants"][name]
                out.append(
                    "  "
                    + " ".join(
                        [
                            f"{name:>14}",
                            _fmt(full["all"]["accuracy"] - s["all"]["accuracy"], 14),
                            _fmt(full["complex"]["accuracy"] - s["complex"]["accuracy"], 14),
                            _fmt(full["simple"]["accuracy"] - s["simple"]["accuracy"], 14),
                        ]
                    )
                )
    out.append("")
    return "\n".join(out)


_TURN_ROW_KEYS = (
    "preset",
    "scenario_id",
    "class",
    "turn",
    "task",
    "route",
    "verdict",
    "badge",
    "cycles",
    "actions",
    "recommended_ids",
    "acc",
    "ndcg5",
    "csr5",
    "sim_ms",
)


def write_outputs(out_dir: str, report: dict, turn_rows: Optional[Sequence[dict]] = None) -> str:
    """Write report.json / tables.txt (and turns.jsonl when rows are given);
    returns the report path.  All three files are deterministic."""
    os.makedirs(out_dir, exist_ok=True)
    report_path = os.path.join(out_dir, "report.json")
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, sort_keys=True, indent=1)
        fh.write("\n")
    with open(os.path.join(out_dir, "tables.txt"), "w", encoding="utf-8") as fh:
        fh.write(render_tables(report))
    if turn_rows is not None:
        with open(os.path.join(out_dir, "turns.jsonl"), "w", encoding="utf-8") as fh:
            for row in turn_rows:
                compact = {k: row[k] for k in _TURN_ROW_KEYS}
                fh.write(json.dumps(compact, sort_keys=True) + "\n")
    return report_path
