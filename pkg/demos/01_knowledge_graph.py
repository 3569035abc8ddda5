"""Build the property knowledge graph and query it directly.

Walks through the lowest layer of the stack: synthesize a small city,
ingest it into the typed graph (spatial joins included), inspect one
listing's neighborhood, then compile a natural-language constraint set
into a graph query, execute it, and widen it when it comes back empty.

Run:  python3 demos/01_knowledge_graph.py
"""

from homeconsult.bench.corpus import BENCH_INGEST, generate_corpus
from homeconsult.constraints import EffectiveConstraintSet, extract_constraints
from homeconsult.kb import execute_graph_query, ingest_corpus
from homeconsult.retrieval import compile_constraints_to_graph_query, relax_threshold

corpus = generate_corpus(seed=3, n=300)
kg = ingest_corpus(corpus.listings, corpus.amenities, BENCH_INGEST)

stats = kg.stats()
print("== graph shape ==")
for label in sorted(stats["nodes"]):
    print(f"  {label:<10} x{stats['nodes'][label]}")
for rel in sorted(stats["edges"]):
    print(f"  {rel:<16} x{stats['edges'][rel]}")
print(f"  total: {stats['node_total']} nodes / {stats['edge_total']} edges")

# -- one listing's neighborhood ---------------------------------------------

pid = kg.property_ids()[0]
listing = kg.listing(pid)
print(f"\n== neighborhood of {listing.name} ({pid}) ==")
print(f"  {listing.bedrooms} bed / {listing.area} sqm / {listing.price_total:,} total")

(district_edge,) = kg.neighbors(pid, "IN_DISTRICT")
district = kg.node(district_edge.dst)
(region_edge,) = kg.neighbors(pid, "LOCATED_IN")
region = kg.node(region_edge.dst)
print(f"  district: {district.attrs['name']}  region: {region.attrs['name']}")

for edge in kg.neighbors(pid, "NEAR_SUBWAY"):
    station = kg.node(edge.dst)
    print(f"  {edge.attrs['distance_m']:.0f} m from {station.attrs['name']}")
for edge in kg.neighbors(pid, "SERVED_BY_SCHOOL")[:2]:
    school = kg.node(edge.dst)
    print(f"  {edge.attrs['distance_m']:.0f} m from {school.attrs['name']}")

# -- compile / execute / relax ----------------------------------------------

query = "2 bedroom homes under 3 million within 300 meters of line 2"
ecs = EffectiveConstraintSet(constraints=extract_constraints(query).constraints)
gq = compile_constraints_to_graph_query(ecs)
print(f"\n== graph query for: {query!r} ==")
for p in gq.predicates:
    print(f"  {p.kind}: " + ", ".join(
        f"{k}={v!r}" for k, v in p.to_dict().items()
        if v is not None and k not in ("kind", "hardness", "priority")
    ))

everything = list(kg.property_ids())
hits = execute_graph_query(kg, gq, everything)
print(f"matches over the whole corpus: {len(hits)}")

while not hits:
    gq = relax_threshold(gq)
    last = gq.relaxations[-1]
    print(f"  empty -> relaxed {last.description}")
    hits = execute_graph_query(kg, gq, everything)
print(f"after {len(gq.relaxations)} relaxation(s): {len(hits)} matches, e.g. "
      + ", ".join(kg.listing(h).name for h in hits[:3]))
