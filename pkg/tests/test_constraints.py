"""Constraint grammar, bias phrases, and memory fusion."""

from __future__ import annotations

from types import SimpleNamespace

import pytest
from hypothesis import given, strategies as st

from homeconsult.constraints import (
    DEFAULT_TRANSIT_RADIUS_M,
    Constraint,
    ReferencedEntity,
    _parse_amount,
    bias_constraint,
    detect_bias_phrases,
    extract_constraints,
    fuse_memory,
    render_constraint_text,
)


def _kinds(cs):
    return [c.kind for c in cs.constraints]


def _one(cs, kind):
    found = [c for c in cs.constraints if c.kind == kind]
    assert len(found) == 1, f"expected exactly one {kind}, got {found}"
    return found[0]


class TestExtraction:
    def test_typical_query(self):
        cs = extract_constraints("Show me 2 bedroom homes in Crestwood under 4.5 million")
        assert _kinds(cs) == ["budget_max", "bedrooms", "district"]
        assert _one(cs, "budget_max").value == 4_500_000
        assert _one(cs, "bedrooms").value == 2
        assert _one(cs, "district").name == "crestwood"
        assert all(c.hardness == "hard" for c in cs.constraints)

    def test_word_numbers_and_default_transit_radius(self):
        cs = extract_constraints("I want three bedrooms near line 4, no more than 5 million")
        assert _one(cs, "bedrooms").value == 3
        transit = _one(cs, "near_transit")
        assert transit.name == "line 4"
        assert transit.max_distance_m == DEFAULT_TRANSIT_RADIUS_M
        assert _one(cs, "budget_max").value == 5_000_000

    def test_explicit_transit_distance(self):
        cs = extract_constraints("within 500 meters of line 4")
        transit = _one(cs, "near_transit")
        assert (transit.name, transit.max_distance_m) == ("line 4", 500.0)

    def test_any_subway_station(self):
        cs = extract_constraints("close to a subway station")
        transit = _one(cs, "near_transit")
        assert transit.name == ""
        assert transit.max_distance_m == DEFAULT_TRANSIT_RADIUS_M

    def test_commute_folds_downtown_to_cbd(self):
        cs = extract_constraints("within 25 minutes of downtown")
        commute = _one(cs, "commute")
        assert (commute.name, commute.max_minutes) == ("cbd", 25.0)

    def test_school_district_phrase(self):
        cs = extract_constraints("in the Orwell Academy school district")
        assert _one(cs, "school_district").name == "orwell academy"
        assert "district" not in _kinds(cs)

    def test_area_forms(self):
        assert _one(extract_constraints("at least 100 square meters"), "area_min").value == 100
        assert _one(extract_constraints("45+ sqm"), "area_min").value == 45

    def test_attribute_rules(self):
        cs = extract_constraints("Any renovated flats in Maplewood with an elevator?")
        assert _kinds(cs) == ["district", "attribute_equals", "attribute_equals"]
        attrs = {(c.name, c.attr_value) for c in cs.constraints if c.kind == "attribute_equals"}
        assert attrs == {("has_elevator", True), ("decoration", "renovated")}
        garden = _one(extract_constraints("with a yard"), "attribute_equals")
        assert (garden.name, garden.attr_value) == ("garden", True)

    def test_avoid_is_soft_and_deduplicated(self):
        cs = extract_constraints("avoid noisy areas and no busy roads")
        assert _kinds(cs) == ["avoid"]
        avoid = cs.constraints[0]
        assert (avoid.name, avoid.hardness, avoid.priority) == ("noisy_area", "soft", 1)

    def test_repeated_target_kept_once(self):
        cs = extract_constraints("in Crestwood and around Crestwood")
        assert _kinds(cs) == ["district"]

    def test_gibberish_yields_empty_set(self):
        cs = extract_constraints("tell me a story about dragons")
        assert cs.n_c == 0
        assert cs.relational_kinds() == frozenset()

    def test_relational_kinds_view(self):
        cs = extract_constraints("3 bedrooms near line 2 in the Orwell Academy school district")
        assert cs.relational_kinds() == {"near_transit", "school_district"}


class TestOrdinalAnaphora:
    CTX = SimpleNamespace(referenced_entities=(
        ReferencedEntity("e1", "Amber Court 2", price_total=5_000_000),
        ReferencedEntity("e2", "Briar Mews 7", price_total=3_200_000),
        ReferencedEntity("e3", "Cobble Plaza 1", price_total=None),
    ))

    def test_resolves_against_referenced_entity_price(self):
        cs = extract_constraints("anything cheaper than the second one?", ctx=self.CTX)
        assert _one(cs, "budget_max").value == 3_200_000

    def test_without_context_the_phrase_is_inert(self):
        assert extract_constraints("cheaper than the second one").n_c == 0

    def test_ordinal_out_of_range(self):
        assert extract_constraints("cheaper than the fifth one", ctx=self.CTX).n_c == 0

    def test_entity_without_price(self):
        assert extract_constraints("cheaper than the third one", ctx=self.CTX).n_c == 0


class TestAmountParsing:
    def test_units(self):
        assert _parse_amount("4.5", "million") == 4_500_000
        assert _parse_amount("500", "k") == 500_000
        assert _parse_amount("1,200,000", None) == 1_200_000

    def test_bare_small_numbers_read_as_millions(self):
        assert _parse_amount("5", None) == 5_000_000
        assert _parse_amount("120000", None) == 120_000

    @given(st.floats(min_value=0.5, max_value=99.0, allow_nan=False))
    def test_bare_millions_heuristic_is_scale_invariant(self, x):
        assert _parse_amount(f"{x:.2f}", None) == pytest.approx(float(f"{x:.2f}") * 1e6)


class TestBiasPhrases:
    def test_signs_and_order(self):
        got = detect_bias_phrases("I hate noisy areas but love gardens")
        assert got == [("noisy_area", -1), ("garden", +1)]

    def test_negation_wins_over_embedded_positive(self):
        assert detect_bias_phrases("I don't like gardens") == [("garden", -1)]

    def test_one_verdict_per_tag(self):
        assert detect_bias_phrases("love gardens and hate gardens") == [("garden", -1)]

    def test_quiet_preference(self):
        assert detect_bias_phrases("we prefer quiet neighborhoods") == [("quiet", +1)]

    def test_plain_mention_is_not_a_preference(self):
        assert detect_bias_phrases("there is a garden out back") == []


class TestBiasConstraint:
    def test_positive_weight_prefers_attribute_value(self):
        c = bias_constraint("garden", 0.8)
        assert (c.kind, c.name, c.attr_value) == ("attribute_equals", "garden", True)
        assert (c.hardness, c.source) == ("soft", "bias_memory")

    def test_quiet_prefers_the_negated_attribute(self):
        c = bias_constraint("quiet", 0.8)
        assert (c.name, c.attr_value) == ("noisy_area", False)

    def test_negative_weight_becomes_aversion(self):
        c = bias_constraint("noisy_area", -0.9)
        assert (c.kind, c.name, c.hardness) == ("avoid", "noisy_area", "soft")

    def test_unknown_tag(self):
        assert bias_constraint("submarine", 1.0) is None


def _fake_memory(promoted=(), carried=()):
    return SimpleNamespace(
        bias=SimpleNamespace(promoted=lambda threshold: list(promoted)),
        context=SimpleNamespace(salient_constraints=list(carried)),
    )


class TestFusion:
    def test_no_memory_passthrough(self):
        cs = extract_constraints("2 bedrooms under 3 million, avoid noisy areas")
        eff = fuse_memory(cs, None)
        assert _kinds(eff) == ["budget_max", "bedrooms", "avoid"]
        assert eff.conflict_log == ()
        assert [c.kind for c in eff.hard()] == ["budget_max", "bedrooms"]
        assert [c.priority for c in eff.soft()] == [1]

    def test_turn_beats_bias_beats_context(self):
        cs = extract_constraints("2 bedrooms under 3 million, avoid noisy areas")
        mem = _fake_memory(
            promoted=[("garden", 0.7), ("noisy_area", -0.6)],
            carried=[
                Constraint(kind="district", name="crestwood"),
                Constraint(kind="budget_max", value=5_000_000),
            ],
        )
        eff = fuse_memory(cs, mem)

        assert [(c.kind, c.source) for c in eff.constraints] == [
            ("budget_max", "turn"),
            ("bedrooms", "turn"),
            ("avoid", "turn"),
            ("attribute_equals", "bias_memory"),
            ("district", "context_state"),
        ]
        # carried constraints are demoted to soft preferences
        carried = eff.constraints[-1]
        assert (carried.hardness, carried.name) == ("soft", "crestwood")
        # soft priorities are unique ranks in admission order
        assert [c.priority for c in eff.soft()] == [1, 2, 3]

        assert [
            (e["slot"], e["kept_source"], e["dropped_source"]) for e in eff.conflict_log
        ] == [
            ("avoid:noisy_area", "turn", "bias_memory"),
            ("budget", "turn", "context_state"),
        ]

    def test_same_turn_budget_conflict_is_logged(self):
        cs = extract_constraints("budget between 3 and 5 million, but can stretch to 6 million")
        assert set(_kinds(cs)) == {"budget_range", "budget_max"}
        eff = fuse_memory(cs, None)
        assert _kinds(eff) == ["budget_range"]
        (entry,) = eff.conflict_log
        assert entry["slot"] == "budget"
        assert entry["kept"].startswith("budget in [")

    def test_swapped_range_bounds_are_normalized(self):
        cs = extract_constraints("between 5 and 3 million")
        rng = _one(cs, "budget_range")
        assert (rng.low, rng.high) == (3_000_000, 5_000_000)


def test_render_constraint_text_omits_aversions():
    constraints = [
        Constraint(kind="budget_max", value=4_500_000),
        Constraint(kind="bedrooms", value=2),
        Constraint(kind="area_min", value=80),
        Constraint(kind="district", name="crestwood"),
        Constraint(kind="near_transit", name="line 4", max_distance_m=500),
        Constraint(kind="near_transit", name=""),
        Constraint(kind="commute", name="cbd", max_minutes=25),
        Constraint(kind="school_district", name="orwell academy"),
        Constraint(kind="attribute_equals", name="has_elevator", attr_value=True),
        Constraint(kind="attribute_equals", name="decoration", attr_value="renovated"),
        Constraint(kind="avoid", name="noisy_area", hardness="soft"),
    ]
    text = render_constraint_text(constraints)
    assert text == (
        "under 4.5 million 2 bedroom at least 80 sqm crestwood near line 4 "
        "near subway within 25 min of cbd the orwell academy school district "
        "elevator renovated"
    )
    assert "noisy" not in text


def test_render_feeds_back_into_the_grammar():
    """Rendered text re-extracts to the same budget/bedroom/area values."""
    cs = extract_constraints("Show me 2 bedroom homes in Crestwood under 4.5 million")
    again = extract_constraints(render_constraint_text(cs.constraints))
    assert {(c.kind, c.value) for c in again.constraints if c.value is not None} == {
        ("budget_max", 4_500_000.0),
        ("bedrooms", 2.0),
    }


def test_slot_identity():
    assert Constraint(kind="budget_max", value=1).slot() == "budget"
    assert Constraint(kind="budget_range", low=1, high=2).slot() == "budget"
    assert Constraint(kind="attribute_equals", name="garden").slot() == "attr:garden"
    assert Constraint(kind="avoid", name="garden").slot() == "avoid:garden"
    assert Constraint(kind="bedrooms", value=2).slot() == "bedrooms"


def test_constraint_dict_roundtrip():
    c = Constraint(kind="near_transit", name="line 3", max_distance_m=750.0,
                   hardness="soft", priority=2, source="context_state")
    assert Constraint.from_dict(c.to_dict()) == c
    r = ReferencedEntity("p7", "Gable Heights 4", 2_900_000)
    assert ReferencedEntity.from_dict(r.to_dict()) == r
