"""Scoring, compliance, verdicts, and the failure -> action mapping."""

from __future__ import annotations

import pytest

from homeconsult.constraints import Constraint, EffectiveConstraintSet
from homeconsult.generation import CandidateResponse, Claim
from homeconsult.retrieval import EvidenceBundle, EvidenceItem, GraphFact
from homeconsult.validation import (
    ValidationConfig,
    check_compliance,
    evidence_value,
    remediation_action,
    score_entity,
    score_fact,
    validate,
    verdict_for,
)


def _item(pid, name, price, facts=(), **attrs):
    fields = {
        "id": pid, "name": name, "price_total": price, "price_per_sqm": 30_000.0,
        "bedrooms": 2, "area": 85.0, "lat": 39.9, "lon": 116.4, "district_id": "d00",
        "attributes": attrs, "district_name": "Crestwood", "region_name": "Westside",
    }
    return EvidenceItem(property_id=pid, dense_score=0.8, doc_text=f"{name}.",
                        fields=fields, graph_facts=tuple(facts))


BUNDLE = EvidenceBundle(items=(
    _item("h1", "Aster Court 1", 2_800_000,
          facts=(GraphFact("NEAR_SUBWAY", "st1", "Crestwood station 1", 200.0, "m"),),
          year_built=2012, elevator=True),
    _item("h2", "Bram Mews 2", 3_200_000),
))

HARD = EffectiveConstraintSet((
    Constraint(kind="budget_max", value=3_500_000.0, hardness="hard", source="turn"),
))


def _resp(*claims, task="property_query", text=None):
    claims = tuple(claims)
    if text is None:
        text = " ".join(c.marker() for c in claims) or "Nothing to report."
    return CandidateResponse(text=text, claims=claims, task=task)


class TestEvidenceValue:
    def test_field_graph_and_attribute_lookups(self):
        assert evidence_value(BUNDLE, "i0", "price_total") == 2_800_000
        assert evidence_value(BUNDLE, "i1", "name") == "Bram Mews 2"
        assert evidence_value(BUNDLE, "i0", "district") == "Crestwood"
        assert evidence_value(BUNDLE, "i0", "region") == "Westside"
        assert evidence_value(BUNDLE, "i0", "year_built") == 2012
        assert evidence_value(BUNDLE, "i0.g0", "near_subway") == 200.0

    @pytest.mark.parametrize("ref", ["i2", "i0.g1", "g0", "i-1", "bogus", ""])
    def test_unresolvable_refs_return_none(self, ref):
        assert evidence_value(BUNDLE, ref, "price_total") is None

    def test_unknown_attribute_returns_none(self):
        assert evidence_value(BUNDLE, "i0", "swimming_pool") is None


class TestFactScore:
    def test_no_claims_is_vacuously_factual(self):
        assert score_fact(_resp(), BUNDLE) == (1.0, ())

    def test_tolerance_boundary_is_inclusive(self):
        at_edge = _resp(Claim("h1", "price_total", str(2_800_000 * 1.005), "", "i0"))
        score, issues = score_fact(at_edge, BUNDLE, tolerance=0.005)
        assert score == 1.0 and issues == ()

        over = _resp(Claim("h1", "price_total", str(2_800_000 * 1.006), "", "i0"))
        score, issues = score_fact(over, BUNDLE, tolerance=0.005)
        assert score == 0.0
        assert issues == ((0, "2800000"),)

    def test_unreferenced_claims_count_against_the_score(self):
        resp = _resp(
            Claim("h1", "price_total", "2800000", "", "i0"),
            Claim("Ghost Grange", "listing_status", "unverified", "", "-"),
        )
        score, issues = score_fact(resp, BUNDLE)
        assert score == 0.5
        assert issues == ()  # nothing fixable about a "-" ref

    def test_string_match_is_name_normalized(self):
        resp = _resp(Claim("h1", "district", "CRESTWOOD", "", "i0"))
        assert score_fact(resp, BUNDLE)[0] == 1.0

    def test_bool_match_uses_rendered_form(self):
        assert score_fact(_resp(Claim("h1", "elevator", "yes", "", "i0")), BUNDLE)[0] == 1.0
        assert score_fact(_resp(Claim("h1", "elevator", "true", "", "i0")), BUNDLE)[0] == 0.0

    def test_missing_attribute_is_a_miss_without_an_issue(self):
        score, issues = score_fact(_resp(Claim("h1", "swimming_pool", "yes", "", "i0")), BUNDLE)
        assert score == 0.0 and issues == ()

    def test_non_numeric_claim_against_numeric_evidence(self):
        score, issues = score_fact(_resp(Claim("h1", "price_total", "cheap", "", "i0")), BUNDLE)
        assert score == 0.0
        assert issues == ((0, "2800000"),)


class TestEntityScore:
    def test_subjects_resolve_by_id_name_or_graph_target(self):
        resp = _resp(
            Claim("h1", "price_total", "2800000", "", "i0"),
            Claim("Bram Mews 2", "bedrooms", "2", "", "i1"),
            Claim("Crestwood station 1", "distance", "200", "m", "i0.g0"),
        )
        assert score_entity(resp, BUNDLE) == (1.0, ())

    def test_duplicate_subjects_count_once(self):
        resp = _resp(
            Claim("h1", "price_total", "2800000", "", "i0"),
            Claim("h1", "area", "85", "sqm", "i0"),
            Claim("Ghost Grange", "listing_status", "unverified", "", "-"),
        )
        score, missing = score_entity(resp, BUNDLE)
        assert score == 0.5
        assert missing == ("Ghost Grange",)

    def test_no_subjects_scores_one(self):
        assert score_entity(_resp(), BUNDLE) == (1.0, ())


class TestCompliance:
    def test_clean_text_passes(self):
        assert check_compliance(_resp(text="A quiet two-bedroom near the park."))

    def test_blocklisted_phrase_fails_despite_casing_and_spacing(self):
        assert not check_compliance(_resp(text="This is a Guaranteed\n   RETURN on capital."))

    def test_extra_phrases_extend_the_list(self):
        resp = _resp(text="Act now, offer expires!")
        assert check_compliance(resp)
        assert not check_compliance(resp, extra_phrases=["offer expires"])


class TestVerdict:
    @pytest.mark.parametrize("vf,ve,expected", [
        (0.85, 0.90, "pass"),
        (0.849, 0.90, "fail"),
        (0.85, 0.899, "fail"),
        (1.0, 1.0, "pass"),
    ])
    def test_threshold_edges(self, vf, ve, expected):
        assert verdict_for(vf, ve) == expected

    def test_good_turn_passes(self):
        resp = _resp(Claim("h1", "price_total", "2800000", "", "i0"))
        report = validate(resp, BUNDLE, HARD)
        assert (report.verdict, report.failure_type) == ("pass", "none")
        assert report.comp_pass

    def test_missing_entity_outranks_fact_error(self):
        resp = _resp(
            Claim("Ghost Grange", "price_total", "999", "", "i0"),
            Claim("h1", "price_total", "1", "", "i0"),
        )
        report = validate(resp, BUNDLE, HARD)
        assert report.verdict == "fail"
        assert report.failure_type == "entity_missing"
        assert report.missing_entities == ("Ghost Grange",)

    def test_starved_bundle_is_a_conflict_even_with_clean_claims(self):
        report = validate(_resp(task="recommendation"), EvidenceBundle(items=()), HARD)
        assert (report.v_fact, report.v_entity) == (1.0, 1.0)
        assert (report.verdict, report.failure_type) == ("fail", "constraint_conflict")
        # recommendation needs five seats; two items still starve it
        short = validate(_resp(task="recommendation"), BUNDLE, HARD)
        assert short.failure_type == "constraint_conflict"

    def test_no_hard_constraints_means_no_conflict(self):
        report = validate(_resp(task="recommendation"), EvidenceBundle(items=()),
                          EffectiveConstraintSet(()))
        assert report.verdict == "pass"

    def test_fact_error_classification(self):
        resp = _resp(Claim("h1", "price_total", "9999999", "", "i0"))
        report = validate(resp, BUNDLE, HARD)
        assert (report.verdict, report.failure_type) == ("fail", "fact_error")
        assert report.issues == ((0, "2800000"),)

    def test_compliance_never_flips_the_verdict(self):
        resp = CandidateResponse(
            text="A guaranteed return! " + Claim("h1", "price_total", "2800000", "", "i0").marker(),
            claims=(Claim("h1", "price_total", "2800000", "", "i0"),),
            task="property_query",
        )
        report = validate(resp, BUNDLE, HARD)
        assert report.verdict == "pass"
        assert not report.comp_pass

    def test_report_round_trips_to_dict(self):
        resp = _resp(Claim("h1", "price_total", "9999999", "", "i0"))
        d = validate(resp, BUNDLE, HARD).to_dict()
        assert d["verdict"] == "fail"
        assert d["issues"] == [[0, "2800000"]]


class TestRemediationAction:
    def test_pass_needs_nothing(self):
        report = validate(_resp(Claim("h1", "area", "85", "sqm", "i0")), BUNDLE, HARD)
        assert remediation_action(report, 0) == "none"

    @pytest.mark.parametrize("failure,action", [
        ("entity_missing", "retrieve_by_entity"),
        ("constraint_conflict", "relax_threshold"),
        ("fact_error", "local_correct"),
    ])
    def test_failure_type_maps_to_its_recovery_move(self, failure, action):
        from homeconsult.validation import ValidationReport
        report = ValidationReport(v_fact=0.0, v_entity=1.0, comp_pass=True,
                                  verdict="fail", failure_type=failure)
        assert remediation_action(report, 0) == action
        assert remediation_action(report, 1) == action

    def test_spent_budget_returns_unverified(self):
        from homeconsult.validation import ValidationReport
        report = ValidationReport(v_fact=0.0, v_entity=1.0, comp_pass=True,
                                  verdict="fail", failure_type="fact_error")
        assert remediation_action(report, 2) == "return_unverified"
        cfg = ValidationConfig(max_remediation_cycles=0)
        assert remediation_action(report, 0, cfg) == "return_unverified"
