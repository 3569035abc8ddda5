"""Deterministic turn-latency model for benchmark reports.

Wall-clock timings of an in-process template backend say nothing useful
about the architecture, so reports charge each turn a simulated cost that
is proportional to the work the variant actually performed: candidate
pool sizes, ranking strategy, graph filtering, validation, and each
remediation action.  Same inputs, same milliseconds — which keeps the
whole report byte-stable across runs.
"""

from __future__ import annotations

from ..orchestrator import PipelineVariant, TurnResult

# per-stage base costs (ms)
EXTRACT_MS = 6.0
FUSE_MS = 4.0
ROUTE_MS = 3.0
MEMORY_MS = 12.0

DENSE_PER_CANDIDATE = 0.30
RERANK_PER_CANDIDATE = 0.55
BACKEND_RANK_PER_CANDIDATE = 1.60
GRAPH_BASE = 90.0
GRAPH_PER_PREDICATE = 9.0
GRAPH_PER_CANDIDATE = 0.25
GENERATE_BASE = 170.0
GENERATE_PER_CLAIM = 11.0
VALIDATE_BASE = 25.0
VALIDATE_PER_CLAIM = 2.5

ACTION_MS = {
    "retrieve_by_entity": 120.0,
    "relax_threshold": 240.0,
    "local_correct": 45.0,
    "regenerate": 0.0,  # charged as a fresh generation below
    "refuse": 5.0,
    "return_unverified": 2.0,
}


def simulated_turn_ms(variant: PipelineVariant, result: TurnResult) -> float:
    n_claims = len(result.response.claims)
    ms = EXTRACT_MS + ROUTE_MS
    if variant.memory:
        ms += FUSE_MS + MEMORY_MS

    ms += DENSE_PER_CANDIDATE * variant.dense_k
    if result.bundle.route_used == "graph":
        n_preds = len(result.bundle.query_trace.predicates) if result.bundle.query_trace else 1
        ms += GRAPH_BASE + GRAPH_PER_PREDICATE * n_preds + GRAPH_PER_CANDIDATE * variant.dense_k
    if variant.rank_mode == "rerank":
        ms += RERANK_PER_CANDIDATE * variant.dense_k
    elif variant.rank_mode == "backend":
        ms += BACKEND_RANK_PER_CANDIDATE * variant.dense_k

    ms += GENERATE_BASE + GENERATE_PER_CLAIM * n_claims
    if variant.validation:
        # one validation pass up front plus one after every cycle
        ms += (VALIDATE_BASE + VALIDATE_PER_CLAIM * n_claims) * (1 + result.cycles)
    for action in result.actions:
        name = action.split(":", 1)[0]
        ms += ACTION_MS.get(name, 0.0)
        if name in ("retrieve_by_entity", "relax_threshold", "regenerate"):
            ms += GENERATE_BASE + GENERATE_PER_CLAIM * n_claims
    return round(ms, 3)
