"""The HTTP surface, exercised in-process.

Everything the chat frontend needs rides on five endpoints: health, session
creation, message posting (which returns the full turn envelope: text with
badges, per-item evidence, validation report, timings), the memory snapshot,
and the per-turn audit trail.  This script drives them through the ASGI app
directly — no network, no server process.

Run:  python3 demos/05_http_api.py
"""

import json

import numpy as np
from fastapi.testclient import TestClient

from homeconsult.api import create_app
from homeconsult.bench.corpus import BENCH_INGEST, generate_corpus
from homeconsult.bench.runner import build_index
from homeconsult.kb import ingest_corpus
from homeconsult.orchestrator import Engine
from homeconsult.router import RouterModel

corpus = generate_corpus(seed=3, n=300)
kg = ingest_corpus(corpus.listings, corpus.amenities, BENCH_INGEST)
router = RouterModel(np.array([0.0, 10.0, 0.0, 0.0]), -5.0, np.zeros(4), np.ones(4))
engine = Engine(kg, build_index(kg), router=router, clock_mode="simulated")
client = TestClient(create_app(engine))

print("GET /health")
print(" ", client.get("/health").json())

print("\nPOST /sessions")
created = client.post("/sessions", json={"preset": "full"}).json()
sid = created["session_id"]
print(" ", created)

print(f"\nPOST /sessions/{sid}/messages")
envelope = client.post(
    f"/sessions/{sid}/messages",
    json={"text": "Show me 2 bedroom homes under 4 million near line 1."},
).json()
print(f"  turn={envelope['turn']} route={envelope['route']} "
      f"badge={envelope['badge']} actions={envelope['actions']}")
print(f"  display: {envelope['response']['display'].splitlines()[1]}")
first = envelope["evidence"][0]
print(f"  evidence[0]: ref={first['ref']} {first['name']} "
      f"graph_facts={len(first['graph_facts'])}")
print(f"  claims[0]: {envelope['response']['claims'][0]}")
print(f"  report: {envelope['report']}")

print(f"\nGET /sessions/{sid}/memory")
memory = client.get(f"/sessions/{sid}/memory").json()
print(f"  turns={memory['turns']} layers={sorted(memory['memory'])}")

print(f"\nGET /sessions/{sid}/audit/0")
audit = client.get(f"/sessions/{sid}/audit/0").json()
print("  stages:", [r["stage"] for r in audit["records"]])

print("\nerrors are plain HTTP")
print("  unknown session ->", client.post("/sessions/zzz/messages",
                                          json={"text": "hi"}).status_code)
print("  bad preset      ->", client.post("/sessions",
                                          json={"preset": "warp9"}).status_code)
