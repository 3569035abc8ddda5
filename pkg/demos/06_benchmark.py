"""A small end-to-end benchmark sweep.

Generates the synthetic city, builds gold-labeled consultation scenarios
with the brute-force oracle, fits the router, then sweeps a handful of
pipeline variants and prints the comparison tables.  The full canonical
sweep (all eleven presets, 100 scenarios) is the CLI's job:

    homeconsult eval gen-corpus --out bench_data
    homeconsult eval gen-scenarios --data bench_data
    homeconsult train-router --data bench_data
    homeconsult eval run --data bench_data --out bench_out --assert

Run:  python3 demos/06_benchmark.py   (a few seconds)
"""

from homeconsult.bench.corpus import BENCH_INGEST, generate_corpus
from homeconsult.bench.runner import (
    BenchData,
    build_index,
    fit_router,
    render_tables,
    run_benchmark,
)
from homeconsult.bench.scenarios import generate_scenarios
from homeconsult.kb import ingest_corpus

print("generating the city ...")
corpus = generate_corpus(seed=7, n=2000)
kg = ingest_corpus(corpus.listings, corpus.amenities, BENCH_INGEST)
index = build_index(kg)
meta = corpus.meta()
print(f"  {meta['listings']} listings, "
      + ", ".join(f"{k} x{v}" for k, v in sorted(meta["amenities"].items())))

print("writing scenarios against the oracle ...")
listings = [l.to_dict() for l in corpus.listings]
scenarios = generate_scenarios(11, listings, corpus.amenities, n_scenarios=24, index=index)
n_complex = sum(1 for sc in scenarios if sc.klass == "complex")
print(f"  {len(scenarios)} scenarios ({n_complex} complex), 3 turns each")

print("fitting the router ...")
router, info = fit_router(scenarios, index)
print(f"  held-out relational recall {info['holdout_recall']:.2f}")

arms = ["full", "b2", "b3", "no_routing", "no_validation"]
print(f"sweeping {arms} ...")
data = BenchData(kg=kg, index=index, scenarios=scenarios, router=router)
report = run_benchmark(data, arms, seed=23)

print()
print(render_tables(report))
print("the same inputs always produce this byte-identical report;")
print("see tests/test_acceptance.py for the orderings the full sweep must hold")
