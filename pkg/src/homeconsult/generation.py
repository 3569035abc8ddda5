"""Response generation: task classification, templates, claim markers.

Every factual statement a response makes is wrapped in a claim marker::

    [[subject|attribute|value unit|ref]]

where ``ref`` is ``i<n>`` (the n-th evidence item), ``i<n>.g<m>`` (that
item's m-th graph fact) or ``-`` (unsupported).  Values appear *only*
inside markers, so a local correction is a pure span edit and validation
can re-extract claims bit-exactly.  The chat layer strips the scaffolding
and shows just the value.

The built-in backend is template-driven and fully deterministic.  A noisy
wrapper exists for benchmarking the validation loop, and an HTTP backend
adapts an external LLM to the same claim-structured contract.
"""

from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from .constraints import EffectiveConstraintSet, ReferencedEntity
from .kb import normalize_name
from .retrieval import EvidenceBundle, EvidenceItem

TASK_TYPES = (
    "recommendation",
    "property_query",
    "comparison",
    "facility_query",
    "value_analysis",
    "investment",
    "school_district",
    "first_time_buyer",
    "second_hand",
    "decoration",
    "out_of_town",
    "short_term_rental",
    "policy",
    "general_fallback",
)

# how many listed properties each task needs to do its job
REQUIRED_TOP_K = {
    "recommendation": 5,
    "school_district": 3,
    "first_time_buyer": 3,
    "second_hand": 3,
    "out_of_town": 3,
    "short_term_rental": 3,
    "comparison": 2,
    "property_query": 1,
    "facility_query": 1,
    "value_analysis": 1,
    "investment": 1,
    "decoration": 1,
    "policy": 0,
    "general_fallback": 0,
}

LISTING_TASKS = frozenset(
    ("recommendation", "school_district", "first_time_buyer", "second_hand", "out_of_town", "short_term_rental")
)


@dataclass(frozen=True)
class Claim:
    subject: str
    attribute: str
    value: str  # canonical string form
    unit: str = ""
    evidence_ref: str = "-"  # "i<n>", "i<n>.g<m>", or "-"

    def marker(self) -> str:
        v = f"{self.value} {self.unit}" if self.unit else self.value
        return f"[[{self.subject}|{self.attribute}|{v}|{self.evidence_ref}]]"

    def to_dict(self) -> dict:
        return {
            "subject": self.subject,
            "attribute": self.attribute,
            "value": self.value,
            "unit": self.unit,
            "evidence_ref": self.evidence_ref,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Claim":
        return cls(d["subject"], d["attribute"], d["value"], d.get("unit", ""), d.get("evidence_ref", "-"))


@dataclass(frozen=True)
class CandidateResponse:
    text: str
    claims: tuple[Claim, ...] = ()
    task: str = "general_fallback"
    recommended_ids: tuple[str, ...] = ()
    referenced: tuple[ReferencedEntity, ...] = ()

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "claims": [c.to_dict() for c in self.claims],
            "task": self.task,
            "recommended_ids": list(self.recommended_ids),
            "referenced": [e.to_dict() for e in self.referenced],
        }


_MARKER_RE = re.compile(r"\[\[([^|\[\]]+)\|([^|\[\]]+)\|([^|\[\]]*)\|([^|\[\]]*)\]\]")


def _split_value_unit(raw: str) -> tuple[str, str]:
    parts = raw.rsplit(" ", 1)
    if len(parts) == 2 and parts[1] and parts[1].isalpha():
        return parts[0], parts[1]
    return raw, ""


def extract_claims(text: str) -> tuple[Claim, ...]:
    """Inverse of marker rendering: claims in text order."""
    out = []
    for m in _MARKER_RE.finditer(text):
        value, unit = _split_value_unit(m.group(3))
        out.append(Claim(m.group(1), m.group(2), value, unit, m.group(4) or "-"))
    return tuple(out)


def display_text(text: str) -> str:
    """Human-facing view: markers collapse to their value."""
    return _MARKER_RE.sub(lambda m: m.group(3), text)


def format_value(v) -> str:
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, float):
        if v.is_integer():
            return str(int(v))
        return repr(round(v, 4))
    return str(v)


# ---------------------------------------------------------------------------
# task classification
# ---------------------------------------------------------------------------

_TASK_RULES: list[tuple[str, re.Pattern]] = [
    ("comparison", re.compile(r"\b(?:compare|versus|vs\.?|difference between|which (?:one )?is better)\b")),
    ("investment", re.compile(r"\b(?:invest(?:ment|ing)?|rental yield|roi|appreciat\w+)\b")),
    ("value_analysis", re.compile(r"\b(?:worth (?:the|its) price|good (?:deal|value)|overpriced|fair price|value for money)\b")),
    ("policy", re.compile(r"\b(?:policy|policies|tax(?:es)?|regulation|mortgage rules?|loan limits?|purchase restrictions?)\b")),
    ("first_time_buyer", re.compile(r"\b(?:first[- ]time|first (?:home|apartment|flat)|never bought)\b")),
    ("second_hand", re.compile(r"\b(?:second[- ]hand|resale|pre[- ]owned|older (?:home|apartment|building))\b")),
    ("short_term_rental", re.compile(r"\b(?:short[- ]term|sublet|a few months|temporary)\b")),
    ("out_of_town", re.compile(r"\b(?:out[- ]of[- ]town|relocat\w+|moving (?:here )?from|new to the city)\b")),
    ("decoration", re.compile(r"\b(?:decorat\w+|renovation|furnish\w*|interior)\b")),
    ("school_district", re.compile(r"\bschool district\b")),
    ("facility_query", re.compile(r"\b(?:facilit\w+|amenit\w+|what(?:'s| is) (?:near|around)|surroundings|nearby)\b")),
    ("property_query", re.compile(r"\b(?:tell me (?:more )?about|details (?:of|on|about)|more about|what about|how (?:big|large|old) is)\b")),
]

_REC_HINT = re.compile(r"\b(?:recommend|suggest|find|looking for|show me|search|options?|any (?:homes?|apartments?|properties))\b")


def classify_task(query: str, ecs: EffectiveConstraintSet) -> str:
    """First matching rule wins, in the order of the rule table; a
    school-district constraint forces that task; otherwise any constraints
    (or an explicit ask) mean recommendation; empty input falls through."""
    t = query.lower()
    for task, rx in _TASK_RULES:
        if rx.search(t):
            return task
    if any(c.kind == "school_district" for c in ecs.constraints):
        return "school_district"
    if _REC_HINT.search(t) or any(c.hardness == "hard" for c in ecs.constraints):
        return "recommendation"
    return "general_fallback"


# ---------------------------------------------------------------------------
# backends
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GenerationRequest:
    task: str
    query: str
    ecs: EffectiveConstraintSet
    bundle: EvidenceBundle
    referenced: tuple[ReferencedEntity, ...] = ()
    noise_key: tuple = ()


class BackendError(RuntimeError):
    """Transport/protocol failure of a generation backend (distinct from a
    validation failure)."""


class GenerationBackend:
    backend_id = "abstract"

    def generate(self, req: GenerationRequest) -> CandidateResponse:  # pragma: no cover
        raise NotImplementedError


def _fmt_money(v) -> str:
    return format_value(v)


class _ClaimWriter:
    """Accumulates text and claims together so indices stay aligned."""

    def __init__(self) -> None:
        self.parts: list[str] = []
        self.claims: list[Claim] = []

    def text(self, s: str) -> None:
        self.parts.append(s)

    def claim(self, subject: str, attribute: str, value, unit: str, ref: str) -> None:
        c = Claim(subject, attribute, format_value(value), unit, ref)
        self.claims.append(c)
        self.parts.append(c.marker())

    def render(self) -> str:
        return "".join(self.parts)


def _item_line(w: _ClaimWriter, item: EvidenceItem, idx: int, rank: int, *, facts: bool = True) -> None:
    f = item.fields
    ref = f"i{idx}"
    w.text(f"{rank}. {f['name']} — ")
    w.claim(item.property_id, "price_total", f["price_total"], "", ref)
    w.text(" total, ")
    w.claim(item.property_id, "bedrooms", f["bedrooms"], "", ref)
    w.text(" bedrooms, ")
    w.claim(item.property_id, "area", f["area"], "sqm", ref)
    if "district_name" in f:
        w.text(", in ")
        w.claim(item.property_id, "district", f["district_name"], "", ref)
    if facts:
        for j, gf in enumerate(item.graph_facts):
            if gf.relation == "NEAR_SUBWAY":
                w.text(f"; {gf.target_name} at ")
                w.claim(item.property_id, "near_subway", gf.value, "m", f"{ref}.g{j}")
            elif gf.relation == "COMMUTE":
                w.text(f"; {gf.target_name} within ")
                w.claim(item.property_id, "commute", gf.value, "min", f"{ref}.g{j}")
            elif gf.relation == "SERVED_BY_SCHOOL":
                w.text(f"; served by {gf.target_name} at ")
                w.claim(item.property_id, "school_distance", gf.value, "m", f"{ref}.g{j}")
    w.text(".\n")


def _find_subjects(req: GenerationRequest, want: int) -> list[tuple[Optional[EvidenceItem], Optional[int], str]]:
    """Entities the query is about: explicit bundle-item names first, then
    ordinal references, then names the user wrote that we could not match
    (returned with item=None so the caller can surface the gap honestly)."""
    q = normalize_name(req.query)
    found: list[tuple[Optional[EvidenceItem], Optional[int], str]] = []
    used: set[str] = set()
    for idx, item in enumerate(req.bundle.items):
        name = item.fields.get("name", "")
        if name and normalize_name(name) in q and item.property_id not in used:
            found.append((item, idx, name))
            used.add(item.property_id)
            if len(found) >= want:
                return found
    ordinals = {"first": 0, "second": 1, "third": 2, "fourth": 3, "fifth": 4}
    for word, pos in sorted(ordinals.items(), key=lambda kv: kv[1]):
        if re.search(rf"\bthe {word}\b", req.query.lower()) and pos < len(req.referenced):
            ent = req.referenced[pos]
            if ent.entity_id in used:
                continue
            for idx, item in enumerate(req.bundle.items):
                if item.property_id == ent.entity_id:
                    found.append((item, idx, ent.name))
                    used.add(ent.entity_id)
                    break
            else:
                found.append((None, None, ent.name))
                used.add(ent.entity_id)
            if len(found) >= want:
                return found
    # unmatched explicit name: "about <Name>" where Name is not in the bundle
    m = re.search(r"\b(?:about|details (?:of|on))\s+([A-Z][\w]*(?:\s+[A-Z][\w]*)+)", req.query)
    if m and len(found) < want:
        name = m.group(1)
        if normalize_name(name) not in {normalize_name(n) for _, _, n in found}:
            found.append((None, None, name))
    return found


class TemplateBackend(GenerationBackend):
    """Deterministic template renderer; speaks only from the bundle."""

    backend_id = "template"

    def generate(self, req: GenerationRequest) -> CandidateResponse:
        handler = getattr(self, "_task_" + req.task, None)
        if handler is None:
            raise BackendError(f"no template for task {req.task!r}")
        return handler(req)

    # each handler returns a full CandidateResponse ---------------------------

    def _listing_response(self, req: GenerationRequest, top: int, lead: str, tail: str = "") -> CandidateResponse:
        w = _ClaimWriter()
        items = req.bundle.items[:top]
        if not items:
            return CandidateResponse(
                text=(
                    "I could not find listings that satisfy everything you asked for. "
                    "Consider relaxing the tightest constraint (budget or distance) and I will retry."
                ),
                task=req.task,
            )
        w.text(lead + "\n")
        for rank, item in enumerate(items, start=1):
            _item_line(w, item, rank - 1, rank)
        if tail:
            w.text(tail)
        refs = tuple(
            ReferencedEntity(i.property_id, i.fields.get("name", i.property_id), i.fields.get("price_total"))
            for i in items
        )
        return CandidateResponse(
            text=w.render(),
            claims=tuple(w.claims),
            task=req.task,
            recommended_ids=tuple(i.property_id for i in items),
            referenced=refs,
        )

    def _task_recommendation(self, req: GenerationRequest) -> CandidateResponse:
        return self._listing_response(req, 5, "Here are the strongest matches for your requirements:")

    def _task_school_district(self, req: GenerationRequest) -> CandidateResponse:
        return self._listing_response(
            req, 3, "These options sit inside the school district you asked about:"
        )

    def _task_first_time_buyer(self, req: GenerationRequest) -> CandidateResponse:
        return self._listing_response(
            req,
            3,
            "For a first purchase I would start with these:",
            "As a first-time buyer, budget extra for transaction fees and check the building's management record before committing.\n",
        )

    def _task_second_hand(self, req: GenerationRequest) -> CandidateResponse:
        resp = self._listing_response(req, 3, "Resale options matching your criteria:")
        if not resp.claims:
            return resp
        w = _ClaimWriter()
        w.text(resp.text)
        for idx, item in enumerate(req.bundle.items[:3]):
            year = item.fields.get("attributes", {}).get("year_built")
            if year is not None:
                w.text(f"{item.fields['name']} was built in ")
                w.claim(item.property_id, "year_built", year, "", f"i{idx}")
                w.text(". ")
        return replace(resp, text=w.render(), claims=resp.claims + tuple(w.claims))

    def _task_out_of_town(self, req: GenerationRequest) -> CandidateResponse:
        return self._listing_response(
            req,
            3,
            "Since you are new to the area, these picks are near the centers people relocate around:",
        )

    def _task_short_term_rental(self, req: GenerationRequest) -> CandidateResponse:
        return self._listing_response(
            req,
            3,
            "For a shorter stay these are workable; confirm the owner allows sub-year terms:",
        )

    def _task_property_query(self, req: GenerationRequest) -> CandidateResponse:
        subjects = _find_subjects(req, 1)
        if not subjects:
            if req.bundle.items:
                subjects = [(req.bundle.items[0], 0, req.bundle.items[0].fields.get("name", ""))]
            else:
                return CandidateResponse(
                    text="I do not have a verified record for that property in the current evidence.",
                    task=req.task,
                )
        item, idx, name = subjects[0]
        if item is None:
            w = _ClaimWriter()
            w.text(f"I could not verify a listing called {name} against the retrieved evidence: ")
            w.claim(name, "listing_status", "unverified", "", "-")
            w.text(".")
            return CandidateResponse(text=w.render(), claims=tuple(w.claims), task=req.task)
        f = item.fields
        ref = f"i{idx}"
        w = _ClaimWriter()
        w.text(f"{f['name']} is a ")
        w.claim(item.property_id, "bedrooms", f["bedrooms"], "", ref)
        w.text("-bedroom unit of ")
        w.claim(item.property_id, "area", f["area"], "sqm", ref)
        w.text(" listed at ")
        w.claim(item.property_id, "price_total", f["price_total"], "", ref)
        w.text(" (")
        w.claim(item.property_id, "price_per_sqm", f["price_per_sqm"], "", ref)
        w.text(" per sqm)")
        if "district_name" in f:
            w.text(", located in ")
            w.claim(item.property_id, "district", f["district_name"], "", ref)
        w.text(".")
        for j, gf in enumerate(item.graph_facts):
            if gf.relation == "NEAR_SUBWAY":
                w.text(f" The nearest relevant station, {gf.target_name}, is ")
                w.claim(item.property_id, "near_subway", gf.value, "m", f"{ref}.g{j}")
                w.text(" away.")
        return CandidateResponse(
            text=w.render(),
            claims=tuple(w.claims),
            task=req.task,
            referenced=(ReferencedEntity(item.property_id, f.get("name", ""), f.get("price_total")),),
        )

    def _task_comparison(self, req: GenerationRequest) -> CandidateResponse:
        subjects = _find_subjects(req, 2)
        resolved = [(i, idx, n) for i, idx, n in subjects if i is not None]
        if len(resolved) < 2:
            missing = [n for i, _, n in subjects if i is None]
            if missing:
                w = _ClaimWriter()
                w.text(f"I can only compare properties backed by evidence; {missing[0]} is not: ")
                w.claim(missing[0], "listing_status", "unverified", "", "-")
                return CandidateResponse(text=w.render(), claims=tuple(w.claims), task=req.task)
            return CandidateResponse(
                text="Name two properties (or use 'the first/second one') and I will compare them.",
                task=req.task,
            )
        w = _ClaimWriter()
        w.text("Side by side:\n")
        for rank, (item, idx, _name) in enumerate(resolved[:2], start=1):
            _item_line(w, item, idx, rank, facts=False)
        a, b = resolved[0][0], resolved[1][0]
        cheaper = a if a.fields["price_total"] <= b.fields["price_total"] else b
        w.text(f"{cheaper.fields['name']} is the cheaper of the two.")
        return CandidateResponse(text=w.render(), claims=tuple(w.claims), task=req.task)

    def _task_facility_query(self, req: GenerationRequest) -> CandidateResponse:
        subjects = _find_subjects(req, 1)
        item, idx = (subjects[0][0], subjects[0][1]) if subjects and subjects[0][0] else (None, None)
        if item is None and req.bundle.items:
            item, idx = req.bundle.items[0], 0
        if item is None:
            return CandidateResponse(
                text="Retrieve a property first and I can describe its surroundings.", task=req.task
            )
        w = _ClaimWriter()
        f = item.fields
        w.text(f"Around {f['name']}: ")
        if "district_name" in f:
            w.text("it sits in ")
            w.claim(item.property_id, "district", f["district_name"], "", f"i{idx}")
            w.text(". ")
        for j, gf in enumerate(item.graph_facts):
            if gf.relation == "NEAR_SUBWAY":
                w.text(f"{gf.target_name} is ")
                w.claim(item.property_id, "near_subway", gf.value, "m", f"i{idx}.g{j}")
                w.text(" away. ")
            elif gf.relation == "SERVED_BY_SCHOOL":
                w.text(f"{gf.target_name} serves the address at ")
                w.claim(item.property_id, "school_distance", gf.value, "m", f"i{idx}.g{j}")
                w.text(". ")
        if not w.claims:
            w.text("No verified facility facts were retrieved for it this turn.")
        return CandidateResponse(text=w.render(), claims=tuple(w.claims), task=req.task)

    def _task_value_analysis(self, req: GenerationRequest) -> CandidateResponse:
        if not req.bundle.items:
            return CandidateResponse(
                text="I need a concrete listing in evidence before judging value.", task=req.task
            )
        item, idx = req.bundle.items[0], 0
        f = item.fields
        w = _ClaimWriter()
        w.text(f"{f['name']} asks ")
        w.claim(item.property_id, "price_total", f["price_total"], "", f"i{idx}")
        w.text(" overall, which works out to ")
        w.claim(item.property_id, "price_per_sqm", f["price_per_sqm"], "", f"i{idx}")
        w.text(" per sqm for ")
        w.claim(item.property_id, "area", f["area"], "sqm", f"i{idx}")
        w.text(
            ". Whether that is fair depends on the unit's condition and floor; "
            "compare the per-sqm figure against recent closings in the same district."
        )
        return CandidateResponse(text=w.render(), claims=tuple(w.claims), task=req.task)

    def _task_investment(self, req: GenerationRequest) -> CandidateResponse:
        if not req.bundle.items:
            return CandidateResponse(
                text=(
                    "I can only discuss investment angles for retrieved listings, and outcomes are "
                    "never assured; share your constraints and I will pull candidates."
                ),
                task=req.task,
            )
        item, idx = req.bundle.items[0], 0
        f = item.fields
        w = _ClaimWriter()
        w.text(f"On {f['name']}: entry cost is ")
        w.claim(item.property_id, "price_total", f["price_total"], "", f"i{idx}")
        w.text(" at ")
        w.claim(item.property_id, "price_per_sqm", f["price_per_sqm"], "", f"i{idx}")
        w.text(
            " per sqm. Treat any projection with caution: outcomes depend on market cycles "
            "and carrying costs, and past movement does not determine future prices."
        )
        return CandidateResponse(text=w.render(), claims=tuple(w.claims), task=req.task)

    def _task_decoration(self, req: GenerationRequest) -> CandidateResponse:
        if not req.bundle.items:
            return CandidateResponse(
                text="Tell me which listing you mean and I can report its decoration state.",
                task=req.task,
            )
        w = _ClaimWriter()
        wrote = False
        for idx, item in enumerate(req.bundle.items[:3]):
            deco = item.fields.get("attributes", {}).get("decoration")
            if deco is None:
                continue
            w.text(f"{item.fields['name']}: ")
            w.claim(item.property_id, "decoration", deco, "", f"i{idx}")
            w.text(". ")
            wrote = True
        if not wrote:
            w.text("None of the retrieved listings record a decoration state.")
        w.text("A rough-state unit typically needs a full fit-out budget on top of the price.")
        return CandidateResponse(text=w.render(), claims=tuple(w.claims), task=req.task)

    def _task_policy(self, req: GenerationRequest) -> CandidateResponse:
        return CandidateResponse(
            text=(
                "Purchase rules, taxes, and loan limits change by jurisdiction and over time; "
                "I do not cite them from memory. Check the current official guidance or a local "
                "agent before relying on any figure."
            ),
            task=req.task,
        )

    def _task_general_fallback(self, req: GenerationRequest) -> CandidateResponse:
        return CandidateResponse(
            text=(
                "Tell me what you are looking for — budget, bedrooms, area, district, or "
                "transit needs — and I will search for matching homes."
            ),
            task=req.task,
        )


class NoisyBackend(GenerationBackend):
    """Template backend plus seeded claim corruption, for benchmarking the
    validation/remediation loop.  A turn is corrupted with probability
    ``rate`` (decided by the noise key, so the same turn is corrupted
    identically across presets and re-runs); a corrupted turn gets
    ceil(n/5) numeric claim values multiplied by 1.07 — beyond numeric
    tolerance, and enough to pull the fact score to 0.8 or lower."""

    backend_id = "noisy"

    def __init__(self, rate: float = 0.08):
        self.rate = rate
        self.inner = TemplateBackend()

    def generate(self, req: GenerationRequest) -> CandidateResponse:
        import hashlib

        import numpy as np

        resp = self.inner.generate(req)
        if not resp.claims:
            return resp
        key = repr(("noise",) + tuple(req.noise_key)).encode("utf-8")
        seed = int.from_bytes(hashlib.blake2b(key, digest_size=4).digest(), "big")
        rng = np.random.default_rng(seed)
        if rng.random() >= self.rate:
            return resp
        numeric = [
            i for i, c in enumerate(resp.claims)
            if c.evidence_ref != "-" and _is_number(c.value)
        ]
        if not numeric:
            return resp
        n_bad = math.ceil(len(resp.claims) / 5)
        chosen = list(rng.choice(numeric, size=min(n_bad, len(numeric)), replace=False))
        text = resp.text
        claims = list(resp.claims)
        for i in sorted(int(x) for x in chosen):
            old = claims[i]
            bad_value = format_value(float(old.value) * 1.07)
            claims[i] = replace(old, value=bad_value)
            text = _replace_marker(text, i, claims[i])
        return replace(resp, text=text, claims=tuple(claims))


def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


class HttpBackend(GenerationBackend):  # pragma: no cover - network
    """Adapter for an external model endpoint that honors the claim
    contract: request carries task/query/constraints/evidence, response
    must be {"text", "claims", "recommended_ids"}."""

    backend_id = "http"

    def __init__(self, endpoint: Optional[str] = None, api_key: Optional[str] = None):
        self.endpoint = endpoint or os.environ.get("HOMECONSULT_GEN_ENDPOINT", "")
        self.api_key = api_key or os.environ.get("HOMECONSULT_GEN_API_KEY", "")
        if not self.endpoint:
            raise ValueError("HttpBackend requires an endpoint")

    def generate(self, req: GenerationRequest) -> CandidateResponse:
        import httpx

        headers = {"authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        payload = {
            "task": req.task,
            "query": req.query,
            "constraints": req.ecs.to_dict(),
            "evidence": req.bundle.to_dict(),
        }
        try:
            r = httpx.post(self.endpoint, json=payload, headers=headers, timeout=60.0)
            r.raise_for_status()
            body = r.json()
        except Exception as exc:
            raise BackendError(f"generation endpoint failed: {exc}") from exc
        claims = tuple(Claim.from_dict(c) for c in body.get("claims", []))
        return CandidateResponse(
            text=body["text"],
            claims=claims,
            task=req.task,
            recommended_ids=tuple(body.get("recommended_ids", [])),
        )


# ---------------------------------------------------------------------------
# local correction
# ---------------------------------------------------------------------------

class CorrectionError(ValueError):
    pass


def _replace_marker(text: str, claim_index: int, new_claim: Claim) -> str:
    """Swap the claim_index-th marker for the new claim's marker; every
    other byte of text is untouched."""
    matches = list(_MARKER_RE.finditer(text))
    if claim_index >= len(matches):
        raise CorrectionError(f"no claim at index {claim_index}")
    m = matches[claim_index]
    return text[: m.start()] + new_claim.marker() + text[m.end():]


def local_correct(a: CandidateResponse, issues: Sequence[tuple[int, str]]) -> CandidateResponse:
    """Replace only the named claims' values with the expected evidence
    values (canonical string form); all other text bytes are unchanged."""
    claims = list(a.claims)
    text = a.text
    for claim_index, expected in sorted(issues, key=lambda t: t[0]):
        if claim_index >= len(claims) or claim_index < 0:
            raise CorrectionError(f"no claim at index {claim_index}")
        fixed = replace(claims[claim_index], value=str(expected))
        text = _replace_marker(text, claim_index, fixed)
        claims[claim_index] = fixed
    return replace(a, text=text, claims=tuple(claims))


def default_backend() -> GenerationBackend:
    if os.environ.get("HOMECONSULT_GEN_ENDPOINT"):
        return HttpBackend()
    return TemplateBackend()
