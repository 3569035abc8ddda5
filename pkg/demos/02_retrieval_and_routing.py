"""Dense retrieval, query enrichment, and the learned route classifier.

Shows the retrieval side of the stack in isolation: hashed bag-of-features
embeddings, the listing document renderer, top-k search, constraint-aware
query enrichment, and finally the logistic router that decides when a turn
needs the graph filter on top of dense search.

Run:  python3 demos/02_retrieval_and_routing.py   (~30 s: trains the router)
"""

from homeconsult.bench.corpus import BENCH_INGEST, generate_corpus
from homeconsult.bench.runner import build_index, fit_router
from homeconsult.bench.scenarios import generate_scenarios
from homeconsult.constraints import EffectiveConstraintSet, extract_constraints
from homeconsult.kb import ingest_corpus
from homeconsult.retrieval import enrich_query
from homeconsult.router import featurize
from homeconsult.vector import cosine, embed

print("== embeddings are lexical, hashed, and deterministic ==")
pairs = [
    ("two bedroom near a subway", "2br close to the metro"),
    ("two bedroom near a subway", "garden villa with an elevator"),
]
for a, b in pairs:
    print(f"  cos({a!r}, {b!r}) = {cosine(embed(a), embed(b)):.3f}")

corpus = generate_corpus(seed=7, n=2000)
kg = ingest_corpus(corpus.listings, corpus.amenities, BENCH_INGEST)
index = build_index(kg)

query = "a quiet renovated 3 bedroom around 5 million"
print(f"\n== dense top-5 for {query!r} ==")
for sd in index.search(query, 5):
    l = kg.listing(sd.doc_id)
    print(f"  {sd.score:.3f}  {l.name:<22} {l.bedrooms} bed, "
          f"{l.price_total:,}, {l.attributes['decoration']}")

# constraints carried in memory are folded into the query text, so the
# dense pass sees them even when the current utterance is a bare delta
delta = "Actually, make it under 4 million."
carried = EffectiveConstraintSet(
    constraints=extract_constraints("3 bedroom under 4 million in Westside").constraints
)
print(f"\n== enrichment of the delta turn {delta!r} ==")
print(f"  {enrich_query(delta, carried)!r}")

# -- routing ------------------------------------------------------------------

print("\n== training the route classifier on generated consultations ==")
listings = [l.to_dict() for l in corpus.listings]
scenarios = generate_scenarios(11, listings, corpus.amenities, n_scenarios=24, index=index)
model, info = fit_router(scenarios, index)
print(f"  {info['train_rows']} training rows, "
      f"held-out relational recall {info['holdout_recall']:.2f}")

print("\n== routing decisions ==")
for q in [
    "what can I get for 2 million?",
    "2 bedroom in the Orwell Academy school district under 4 million",
    "somewhere within walking distance of line 3",
]:
    ecs = EffectiveConstraintSet(constraints=extract_constraints(q).constraints)
    features = featurize(q, ecs, index.search(enrich_query(q, ecs), 5))
    decision = model.predict(features)
    print(f"  {decision.route:<5}  p={decision.p:.2f}  {q!r}")
