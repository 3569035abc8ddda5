"""Session memory and the verification gate in front of it.

A session carries five memory surfaces: the conversational ring, entity
mentions, soft biases, a recency record of what retrieval already showed,
and the fused constraint state.  Everything except the ring sits behind a
gate: turns whose answers fail validation are not allowed to write.  This
script runs the same failing turn through the gated and ungated pipelines
and diffs what sticks.

Run:  python3 demos/03_memory_gate.py
"""

import json

import numpy as np

from homeconsult.bench.corpus import BENCH_INGEST, generate_corpus
from homeconsult.bench.runner import build_index
from homeconsult.kb import ingest_corpus
from homeconsult.memory import long_term_fingerprint
from homeconsult.orchestrator import Engine
from homeconsult.router import RouterModel

corpus = generate_corpus(seed=3, n=300)
kg = ingest_corpus(corpus.listings, corpus.amenities, BENCH_INGEST)
# a hand-set relational-phrase detector stands in for the trained router
# (see demo 02 for the real fit) so this script stays fast
router = RouterModel(np.array([0.0, 10.0, 0.0, 0.0]), -5.0, np.zeros(4), np.ones(4))
engine = Engine(kg, build_index(kg), router=router, clock_mode="simulated")


def show_context(session):
    ctx = session.memory.snapshot()["context"]["salient_constraints"]
    print("  carried constraints:", json.dumps(
        [{k: c[k] for k in ("kind", "value", "name") if c.get(k) not in (None, "")}
         for c in ctx]))


print("== clean turns write through the gate ==")
s = engine.create_session("full")
engine.run_turn(s, "I'm looking for a 2 bedroom under 3 million.")
show_context(s)
engine.run_turn(s, "Actually, make it under 2.5 million.")
show_context(s)
print("  (the budget was replaced in place, not appended)")

print("\n== a failing turn is quarantined ==")
before = long_term_fingerprint(s.memory)
result = engine.run_turn(s, "Tell me about Moonbeam Palace.")  # no such listing
print(f"  verdict={result.report.verdict} badge={result.badge} "
      f"actions={result.actions}")
print(f"  long-term memory unchanged: {long_term_fingerprint(s.memory) == before}")
print(f"  conversational ring still grew: {len(s.memory.conv.entries)} entries")

print("\n== same turn with the gate disabled ==")
u = engine.create_session("no_gate")
engine.run_turn(u, "I'm looking for a 2 bedroom under 3 million.")
before = long_term_fingerprint(u.memory)
engine.run_turn(u, "Tell me about Moonbeam Palace.")
print(f"  long-term memory unchanged: {long_term_fingerprint(u.memory) == before}"
      "   <- the unverified mention leaked into entity memory")
leaked = list(u.memory.entity.entries)
print(f"  entity layer now holds: {leaked}")
