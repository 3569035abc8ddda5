"""One consultation, stage by stage.

Runs a three-turn session through the complete pipeline — constraint
extraction, memory fusion, routing, retrieval, templated generation,
validation, and the remediation loop — printing what each stage produced.
The generation backend is the corruption-injecting one, so with a bit of
luck a turn will fail validation and get repaired on the spot.

Run:  python3 demos/04_turn_pipeline.py
"""

import numpy as np

from homeconsult.bench.corpus import BENCH_INGEST, generate_corpus
from homeconsult.bench.runner import build_index
from homeconsult.generation import NoisyBackend
from homeconsult.kb import ingest_corpus
from homeconsult.orchestrator import Engine
from homeconsult.router import RouterModel

corpus = generate_corpus(seed=3, n=300)
kg = ingest_corpus(corpus.listings, corpus.amenities, BENCH_INGEST)
router = RouterModel(np.array([0.0, 10.0, 0.0, 0.0]), -5.0, np.zeros(4), np.ones(4))
engine = Engine(
    kg, build_index(kg),
    router=router,
    backend=NoisyBackend(rate=0.35),
    clock_mode="simulated",
)

session = engine.create_session("full", noise_scope=("demo", 4))

for query in [
    "Show me 2 bedroom homes under 3 million.",
    "Actually, make it under 2.6 million, and I'd prefer somewhere quiet.",
    "Which of those are close to line 1?",
]:
    result = engine.run_turn(session, query)
    print(f"\n>>> {query}")
    print(f"  task={result.task}  route={result.bundle.route_used}  "
          f"verdict={result.report.verdict}  badge={result.badge}")
    if result.cycles:
        print(f"  remediation: cycles={result.cycles} actions={result.actions}")
    print(f"  scores: fact={result.report.v_fact:.2f} "
          f"entity={result.report.v_entity:.2f}")
    print(f"  bundle: {len(result.bundle.items)} items, "
          f"top: {', '.join(i.property_id for i in result.bundle.items[:5])}")
    for line in result.display.splitlines()[:3]:
        print(f"  | {line}")
    timings = result.timings
    print("  stages: " + "  ".join(f"{k}={timings[k]:.1f}" for k in timings))
