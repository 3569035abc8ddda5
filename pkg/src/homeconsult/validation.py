"""Response validation: factual score, entity score, compliance scan,
failure classification, and the action mapping the remediation loop uses.

The verdict is a pure function of the two scores (both thresholds
inclusive), with one carve-out: when hard constraints exist but the
evidence cannot seat the task's required number of items, the turn fails
as a constraint conflict even if every uttered claim happens to check out
(an empty answer is not a valid consultation).  Compliance is reported
alongside but never flips the verdict.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from typing import Optional, Sequence

from .constraints import EffectiveConstraintSet
from .generation import REQUIRED_TOP_K, CandidateResponse, format_value
from .kb import normalize_name
from .retrieval import EvidenceBundle


@dataclass(frozen=True)
class ValidationConfig:
    fact_threshold: float = 0.85
    entity_threshold: float = 0.90
    numeric_tolerance: float = 0.005  # relative
    max_remediation_cycles: int = 2


@dataclass(frozen=True)
class ValidationReport:
    v_fact: float
    v_entity: float
    comp_pass: bool
    verdict: str  # pass | fail
    failure_type: str  # none | entity_missing | constraint_conflict | fact_error
    issues: tuple[tuple[int, str], ...] = ()  # (claim index, expected value)
    missing_entities: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "v_fact": self.v_fact,
            "v_entity": self.v_entity,
            "comp_pass": self.comp_pass,
            "verdict": self.verdict,
            "failure_type": self.failure_type,
            "issues": [list(i) for i in self.issues],
            "missing_entities": list(self.missing_entities),
        }


def verdict_for(v_fact: float, v_entity: float, cfg: ValidationConfig = ValidationConfig()) -> str:
    """The score rule alone, thresholds inclusive."""
    return "pass" if (v_fact >= cfg.fact_threshold and v_entity >= cfg.entity_threshold) else "fail"


# ---------------------------------------------------------------------------
# evidence lookup
# ---------------------------------------------------------------------------

_REF_RE = re.compile(r"^i(\d+)(?:\.g(\d+))?$")

_FIELD_ATTRS = {"price_total", "price_per_sqm", "bedrooms", "area", "name"}
_RENAMED = {"district": "district_name", "region": "region_name"}


def evidence_value(bundle: EvidenceBundle, ref: str, attribute: str):
    """Value the referenced evidence holds for this attribute, or None."""
    m = _REF_RE.match(ref)
    if not m:
        return None
    idx = int(m.group(1))
    if idx >= len(bundle.items):
        return None
    item = bundle.items[idx]
    if m.group(2) is not None:
        g = int(m.group(2))
        if g >= len(item.graph_facts):
            return None
        return item.graph_facts[g].value
    if attribute in _FIELD_ATTRS:
        return item.fields.get(attribute)
    if attribute in _RENAMED:
        return item.fields.get(_RENAMED[attribute])
    return item.fields.get("attributes", {}).get(attribute)


def _matches(claim_value: str, expected, tolerance: float) -> bool:
    if expected is None:
        return False
    if isinstance(expected, bool):
        return claim_value == format_value(expected)
    if isinstance(expected, (int, float)):
        try:
            got = float(claim_value)
        except ValueError:
            return False
        if expected == 0:
            return got == 0
        return abs(got - float(expected)) / abs(float(expected)) <= tolerance
    return normalize_name(claim_value) == normalize_name(str(expected))


def score_fact(
    a: CandidateResponse, r: EvidenceBundle, tolerance: float = 0.005
) -> tuple[float, tuple[tuple[int, str], ...]]:
    """Share of claims whose value matches their referenced evidence.

    Unreferenced claims count against the score (they are exactly the
    hallucination surface); a zero-claim response is vacuously factual.
    Issues carry the canonical expected value for each fixable mismatch.
    """
    if not a.claims:
        return 1.0, ()
    matches = 0
    issues: list[tuple[int, str]] = []
    for i, claim in enumerate(a.claims):
        if claim.evidence_ref == "-":
            continue
        expected = evidence_value(r, claim.evidence_ref, claim.attribute)
        if _matches(claim.value, expected, tolerance):
            matches += 1
        elif expected is not None:
            issues.append((i, format_value(expected)))
    return matches / len(a.claims), tuple(issues)


def score_entity(a: CandidateResponse, r: EvidenceBundle) -> tuple[float, tuple[str, ...]]:
    """Share of distinct claim subjects that resolve inside the bundle
    (by property id, normalized listing name, or graph-fact target)."""
    subjects: list[str] = []
    seen = set()
    for c in a.claims:
        key = normalize_name(c.subject)
        if key not in seen:
            seen.add(key)
            subjects.append(c.subject)
    if not subjects:
        return 1.0, ()
    known: set[str] = set()
    for item in r.items:
        known.add(normalize_name(item.property_id))
        name = item.fields.get("name")
        if name:
            known.add(normalize_name(name))
        for f in item.graph_facts:
            known.add(normalize_name(f.target_id))
            known.add(normalize_name(f.target_name))
    missing = tuple(s for s in subjects if normalize_name(s) not in known)
    return (len(subjects) - len(missing)) / len(subjects), missing


def _load_blocklist() -> tuple[str, ...]:
    text = resources.files("homeconsult.data").joinpath("blocklist_v1.txt").read_text("utf-8")
    return tuple(
        line.strip().lower() for line in text.splitlines() if line.strip() and not line.startswith("#")
    )


_BLOCKLIST: Optional[tuple[str, ...]] = None


def check_compliance(a: CandidateResponse, extra_phrases: Sequence[str] = ()) -> bool:
    global _BLOCKLIST
    if _BLOCKLIST is None:
        _BLOCKLIST = _load_blocklist()
    text = " ".join(a.text.lower().split())
    for phrase in list(_BLOCKLIST) + list(extra_phrases):
        if phrase in text:
            return False
    return True


def validate(
    a: CandidateResponse,
    r: EvidenceBundle,
    ecs: EffectiveConstraintSet,
    cfg: ValidationConfig = ValidationConfig(),
) -> ValidationReport:
    v_fact, issues = score_fact(a, r, cfg.numeric_tolerance)
    v_entity, missing = score_entity(a, r)
    comp = check_compliance(a)

    hard_exists = any(c.hardness == "hard" for c in ecs.constraints)
    required = REQUIRED_TOP_K.get(a.task, 1)
    conflict = hard_exists and (not r.items or len(r.items) < required)

    passed = verdict_for(v_fact, v_entity, cfg) == "pass" and not conflict
    if passed:
        failure = "none"
    elif missing:
        failure = "entity_missing"
    elif conflict:
        failure = "constraint_conflict"
    else:
        failure = "fact_error"
    return ValidationReport(
        v_fact=v_fact,
        v_entity=v_entity,
        comp_pass=comp,
        verdict="pass" if passed else "fail",
        failure_type=failure,
        issues=issues,
        missing_entities=missing,
    )


def remediation_action(report: ValidationReport, cycles_used: int, cfg: ValidationConfig = ValidationConfig()) -> str:
    """Which recovery move the failure calls for; the cycle budget turns
    any failure into flagged delivery once spent."""
    if report.verdict == "pass":
        return "none"
    if cycles_used >= cfg.max_remediation_cycles:
        return "return_unverified"
    return {
        "entity_missing": "retrieve_by_entity",
        "constraint_conflict": "relax_threshold",
        "fact_error": "local_correct",
    }[report.failure_type]
