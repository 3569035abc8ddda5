"""Hybrid retrieval: compilation, relaxation, ordering, evidence bundles."""

from __future__ import annotations

import math

import pytest

from homeconsult.constraints import Constraint, EffectiveConstraintSet, extract_constraints, fuse_memory
from homeconsult.kb import (
    EARTH_RADIUS_M,
    GraphQuery,
    GraphQueryError,
    IngestConfig,
    Predicate,
    PropertyListing,
    ingest_corpus,
)
from homeconsult.memory import RetrievalMemory
from homeconsult.retrieval import (
    CompileError,
    EvidenceBundle,
    EvidenceItem,
    Retriever,
    compile_constraints_to_graph_query,
    enrich_query,
    merge_bundles,
    relax_threshold,
)
from homeconsult.vector import VectorIndex, render_listing_doc

_LAT0, _LON0 = 39.90, 116.40


def _north(meters: float) -> float:
    return _LAT0 + math.degrees(meters / EARTH_RADIUS_M)


def _listing(i, name, *, beds, price, area, north_m, **attrs):
    return PropertyListing(
        id=f"h{i}", name=name, price_total=price, price_per_sqm=round(price / area, 2),
        bedrooms=beds, area=float(area), lat=_north(north_m), lon=_LON0,
        district_id="d00", attributes=attrs,
    )


_LISTINGS = [
    _listing(1, "Aster Court 1", beds=2, price=2_800_000, area=85, north_m=200,
             has_elevator=True, noisy_area=False),
    _listing(2, "Bram Mews 2", beds=2, price=3_200_000, area=78, north_m=600, garden=True),
    _listing(3, "Cord Plaza 3", beds=2, price=2_500_000, area=90, north_m=1500, noisy_area=True),
    _listing(4, "Dray Towers 4", beds=3, price=4_100_000, area=110, north_m=300, has_elevator=True),
    _listing(5, "Elm Villas 5", beds=2, price=2_900_000, area=82, north_m=900, garden=True),
    _listing(6, "Fenn Heights 6", beds=4, price=7_500_000, area=150, north_m=5000),
]

_AMENITIES = [
    {"kind": "region", "id": "r0", "name": "Westside", "lat": _LAT0, "lon": _LON0},
    {"kind": "district", "id": "d00", "name": "Crestwood", "region_id": "r0",
     "lat": _LAT0, "lon": _LON0},
    {"kind": "station", "id": "st1", "name": "Crestwood station 1", "line": "line 1",
     "lat": _LAT0, "lon": _LON0},
    {"kind": "school", "id": "sch1", "name": "Orwell Academy", "lat": _north(4000), "lon": _LON0},
]


@pytest.fixture(scope="module")
def kg():
    return ingest_corpus(_LISTINGS, _AMENITIES, IngestConfig())


@pytest.fixture(scope="module")
def index():
    return VectorIndex.build(
        [(l.id, render_listing_doc(l, "Crestwood", "Westside")) for l in _LISTINGS]
    )


@pytest.fixture()
def retriever(kg, index):
    return Retriever(kg, index)


def _ecs(text):
    return fuse_memory(extract_constraints(text), None)


_EMPTY = EffectiveConstraintSet(())


class TestCompilation:
    def test_kind_to_predicate_mapping(self):
        q = compile_constraints_to_graph_query(
            _ecs("2 bedroom homes in Crestwood under 3 million near line 1 with an elevator")
        )
        by_attr = {(p.kind, p.attribute, p.relation): p for p in q.predicates}
        price = by_attr[("attribute_compare", "price_total", None)]
        assert (price.op, price.value) == ("le", 3_000_000)
        beds = by_attr[("attribute_compare", "bedrooms", None)]
        assert (beds.op, beds.value) == ("eq", 2)
        district = by_attr[("related_node_exists", None, "IN_DISTRICT")]
        assert (district.target_label, district.target_name) == ("District", "crestwood")
        transit = by_attr[("related_within", None, "NEAR_SUBWAY")]
        assert (transit.target_name, transit.threshold, transit.unit) == ("line 1", 1000.0, "m")
        elevator = by_attr[("attribute_compare", "has_elevator", None)]
        assert (elevator.op, elevator.value) == ("eq", True)
        assert q.preferences == ()

    def test_commute_school_region_and_range(self):
        q = compile_constraints_to_graph_query(
            _ecs("between 2 and 4 million in Westside, within 30 minutes of cbd, "
                 "in the Orwell Academy school district")
        )
        kinds = {(p.kind, p.relation) for p in q.predicates}
        assert kinds == {
            ("attribute_compare", None),
            ("related_node_exists", "LOCATED_IN"),
            ("related_within", None),
            ("related_node_exists", "SERVED_BY_SCHOOL"),
        }
        commute = next(p for p in q.predicates if p.kind == "related_within")
        assert (commute.target_label, commute.unit, commute.threshold) == ("Region", "min", 30.0)
        rng = next(p for p in q.predicates if p.kind == "attribute_compare")
        assert (rng.op, rng.value) == ("between", (2_000_000, 4_000_000))

    def test_soft_booleans_become_preferences_not_filters(self):
        ecs = fuse_memory(extract_constraints("2 bedrooms, avoid noisy areas"), None)
        q = compile_constraints_to_graph_query(ecs)
        assert [p.attribute for p in q.predicates] == ["bedrooms"]
        (avoid,) = q.preferences
        assert (avoid.attribute, avoid.op, avoid.value) == ("noisy_area", "ne", True)

    def test_empty_set_is_a_compile_error(self):
        with pytest.raises(CompileError, match="empty constraint set"):
            compile_constraints_to_graph_query(_EMPTY)

    def test_unknown_avoid_tag_is_a_compile_error(self):
        ecs = EffectiveConstraintSet((Constraint(kind="avoid", name="submarine", hardness="soft"),))
        with pytest.raises(CompileError, match="avoid\\(submarine\\)"):
            compile_constraints_to_graph_query(ecs)


class TestRelaxation:
    def test_least_important_soft_threshold_relaxes_first(self):
        q = GraphQuery(predicates=(
            Predicate(kind="attribute_compare", attribute="price_total", op="le",
                      value=3e6, hardness="hard"),
            Predicate(kind="attribute_compare", attribute="area", op="ge",
                      value=80.0, hardness="soft", priority=1),
            Predicate(kind="related_within", relation="NEAR_SUBWAY", target_label="Transit",
                      threshold=500.0, unit="m", hardness="soft", priority=2),
        ))
        relaxed = relax_threshold(q)
        (event,) = relaxed.relaxations
        assert event.predicate_index == 2
        assert event.old_value == 500.0
        assert event.new_value == pytest.approx(550.0)
        assert relaxed.predicates[2].threshold == pytest.approx(550.0)
        # untouched predicates survive verbatim
        assert relaxed.predicates[:2] == q.predicates[:2]
        assert event.description.startswith("NEAR_SUBWAY 500.0 ->")

    def test_priority_tie_prefers_the_earlier_predicate(self):
        q = GraphQuery(predicates=(
            Predicate(kind="attribute_compare", attribute="area", op="ge",
                      value=80.0, hardness="soft", priority=1),
            Predicate(kind="attribute_compare", attribute="price_total", op="le",
                      value=3e6, hardness="soft", priority=1),
        ))
        relaxed = relax_threshold(q)
        assert relaxed.relaxations[0].predicate_index == 0
        assert relaxed.predicates[0].value == pytest.approx(72.0)  # ge shrinks

    def test_fallback_to_first_hard_spatial(self):
        q = GraphQuery(predicates=(
            Predicate(kind="attribute_compare", attribute="bedrooms", op="eq",
                      value=2, hardness="hard"),
            Predicate(kind="related_within", relation="NEAR_SUBWAY", target_label="Transit",
                      threshold=400.0, unit="m", hardness="hard"),
        ))
        relaxed = relax_threshold(q)
        assert relaxed.relaxations[0].predicate_index == 1
        assert relaxed.predicates[1].threshold == pytest.approx(440.0)

    def test_between_widens_both_ends(self):
        q = GraphQuery(predicates=(
            Predicate(kind="attribute_compare", attribute="price_total", op="between",
                      value=(2e6, 4e6), hardness="soft", priority=1),
        ))
        relaxed = relax_threshold(q)
        assert relaxed.predicates[0].value == (pytest.approx(1.8e6), pytest.approx(4.4e6))

    def test_nothing_to_relax(self):
        q = GraphQuery(predicates=(
            Predicate(kind="attribute_compare", attribute="bedrooms", op="eq",
                      value=2, hardness="hard"),
        ))
        with pytest.raises(GraphQueryError, match="no relaxable predicate"):
            relax_threshold(q)

    def test_repeated_relaxation_accumulates_events(self):
        q = GraphQuery(predicates=(
            Predicate(kind="related_within", relation="NEAR_SUBWAY", target_label="Transit",
                      threshold=100.0, unit="m", hardness="hard"),
        ))
        twice = relax_threshold(relax_threshold(q))
        assert [e.old_value for e in twice.relaxations] == [100.0, pytest.approx(110.0)]
        assert twice.predicates[0].threshold == pytest.approx(121.0)


def test_enrich_query():
    assert enrich_query("quiet flat", _ecs("under 3 million")) == "quiet flat under 3 million"
    # aversion-only constraint sets render to nothing
    assert enrich_query("quiet flat", _ecs("avoid noisy areas")) == "quiet flat"
    assert enrich_query("", _ecs("under 3 million")) == "under 3 million"


class TestRetriever:
    def test_rank_mode_is_validated(self, kg, index):
        with pytest.raises(ValueError, match="unknown rank mode"):
            Retriever(kg, index, rank_mode="oracle")

    def test_dense_route_bundles_fields_and_facts(self, retriever):
        ecs = _ecs("2 bedroom homes in Crestwood")
        bundle = retriever.retrieve("2 bedroom homes in Crestwood", ecs, route="dense")
        assert bundle.route_used == "dense"
        assert bundle.query_trace is None
        assert set(bundle.ids()) == {"h1", "h2", "h3", "h4", "h5", "h6"}
        item = bundle.find("h1")
        assert item.fields["district_name"] == "Crestwood"
        assert item.fields["region_name"] == "Westside"
        assert item.fields["price_total"] == 2_800_000
        assert "Aster Court 1." in item.doc_text
        (fact,) = item.graph_facts
        assert (fact.relation, fact.target_name) == ("IN_DISTRICT", "Crestwood")

    def test_graph_route_filters_dense_candidates(self, retriever):
        text = "2 bedroom homes in Crestwood under 3 million"
        bundle = retriever.retrieve(text, _ecs(text), route="graph")
        assert bundle.route_used == "graph"
        assert set(bundle.ids()) == {"h1", "h3", "h5"}
        assert len(bundle.query_trace.predicates) == 3

    def test_graph_route_without_constraints_degrades_to_dense(self, retriever):
        bundle = retriever.retrieve("anything nice", _EMPTY, route="graph")
        assert bundle.route_used == "dense"
        assert bundle.query_trace is None

    def test_relational_facts_use_graph_geometry(self, retriever):
        text = "2 bedrooms near line 1, within 30 minutes of westside, " \
               "in the Orwell Academy school district"
        bundle = retriever.retrieve(text, _ecs(text), route="dense")
        facts = {f.relation: f for f in bundle.find("h1").graph_facts}
        assert facts["NEAR_SUBWAY"].value == pytest.approx(200.0, abs=0.1)
        assert facts["NEAR_SUBWAY"].unit == "m"
        assert facts["COMMUTE"].value == pytest.approx(2.5, abs=0.01)
        assert facts["COMMUTE"].unit == "min"
        assert facts["SERVED_BY_SCHOOL"].target_name == "Orwell Academy"
        assert facts["SERVED_BY_SCHOOL"].value == pytest.approx(3800.0, abs=0.1)

    def test_recently_recommended_ids_are_held_back(self, kg, index):
        rm = RetrievalMemory()
        rm.record(["h1", "h5"], 1000.0)
        r = Retriever(kg, index)
        ecs = _ecs("2 bedrooms")
        got = r.retrieve("2 bedrooms", ecs, "dense", retrieval_memory=rm, now=1000.0)
        assert set(got.ids()) == {"h2", "h3", "h4", "h6"}
        keep_all = Retriever(kg, index, dedup=False)
        got2 = keep_all.retrieve("2 bedrooms", ecs, "dense", retrieval_memory=rm, now=1000.0)
        assert set(got2.ids()) == {"h1", "h2", "h3", "h4", "h5", "h6"}

    def test_soft_aversions_order_but_do_not_drop(self, retriever):
        text = "2 bedroom homes under 3 million, avoid noisy areas"
        bundle = retriever.retrieve(text, _ecs(text), route="graph")
        ids = bundle.ids()
        assert set(ids) == {"h1", "h3", "h5"}  # h3 is noisy yet present
        assert ids[-1] == "h3"

    def test_backend_rank_mode_orders_by_raw_overlap(self, kg, index):
        r = Retriever(kg, index, rank_mode="backend")
        bundle = r.retrieve("garden", _EMPTY, route="dense")
        assert bundle.ids() == ["h2", "h5", "h1", "h3", "h4", "h6"]

    def test_bundle_size_truncates(self, kg, index):
        r = Retriever(kg, index, bundle_size=2)
        assert len(r.retrieve("2 bedrooms", _ecs("2 bedrooms"), "dense").items) == 2

    def test_relaxed_query_override(self, retriever):
        text = "2 bedrooms within 190 meters of line 1"
        ecs = _ecs(text)
        first = retriever.retrieve(text, ecs, route="graph")
        assert first.items == ()  # nearest 2-bed is 200 m out
        relaxed = relax_threshold(first.query_trace)
        second = retriever.retrieve(text, ecs, route="graph", graph_query=relaxed)
        assert second.ids() == ["h1"]
        assert second.query_trace is relaxed
        assert second.query_trace.relaxations[0].new_value == pytest.approx(209.0)


class TestEntityLookup:
    def test_kb_name_match(self, retriever):
        bundle = retriever.retrieve_by_entity("cord plaza 3")
        assert bundle.ids() == ["h3"]
        assert bundle.route_used == "graph"
        assert bundle.unresolved_entity is None
        assert bundle.items[0].fields["bedrooms"] == 2

    def test_unresolvable_name(self, retriever):
        bundle = retriever.retrieve_by_entity("Phantom Spire")
        assert bundle.items == ()
        assert bundle.unresolved_entity == "Phantom Spire"


def _bare_item(pid):
    return EvidenceItem(property_id=pid, dense_score=1.0, doc_text="", fields={})


def test_merge_bundles_appends_novel_items_only():
    trace = GraphQuery(predicates=())
    base = EvidenceBundle(items=(_bare_item("h1"), _bare_item("h2")),
                          route_used="graph", query_trace=trace)
    extra = EvidenceBundle(items=(_bare_item("h2"), _bare_item("h3")),
                           route_used="dense", unresolved_entity="Gable Grange")
    merged = merge_bundles(base, extra)
    assert merged.ids() == ["h1", "h2", "h3"]
    assert merged.route_used == "graph"
    assert merged.query_trace is trace
    assert merged.unresolved_entity == "Gable Grange"
