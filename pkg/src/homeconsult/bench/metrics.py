"""Benchmark metrics.

All four quality metrics are plain functions of (system output, gold) so
they can be cross-checked against brute-force re-implementations; the
latency percentile uses the nearest-rank definition (no interpolation).
"""

from __future__ import annotations

import math
import re
from typing import Mapping, Optional, Sequence

#: relative numeric tolerance shared with the validation stage
NUMERIC_TOLERANCE = 0.005

_REF_RE = re.compile(r"^i(\d+)(?:\.g(\d+))?$")
_RENAMED = {"district": "district_name", "region": "region_name"}


def ndcg_at_5(ranked_ids: Sequence[str], grades: Mapping[str, int]) -> float:
    """Graded nDCG@5 with 2^g - 1 gains and log2(rank+1) discounts.  The
    ideal ranking draws from *all* graded items, not just the returned
    ones.  No gold at all -> 0.0 by convention."""
    ideal = sorted(grades.values(), reverse=True)[:5]
    idcg = sum((2 ** g - 1) / math.log2(i + 2) for i, g in enumerate(ideal))
    if idcg == 0:
        return 0.0
    dcg = 0.0
    for i, pid in enumerate(ranked_ids[:5]):
        g = grades.get(pid, 0)
        dcg += (2 ** g - 1) / math.log2(i + 2)
    return dcg / idcg


def csr_at_5(recommended_ids: Sequence[str], hard_sat_ids) -> float:
    """Fraction of the top-5 recommendations satisfying every hard
    constraint; an empty recommendation list scores 0.0 (a consultation
    that names nothing satisfied nothing)."""
    top = list(recommended_ids[:5])
    if not top:
        return 0.0
    sat = set(hard_sat_ids)
    return sum(1 for pid in top if pid in sat) / len(top)


# -- claim-level checks ------------------------------------------------------


def _evidence_lookup(evidence: Sequence[Mapping], ref: str, attribute: str):
    """Resolve a claim's evidence reference against the recorded bundle
    view ([{property_id, fields, graph_facts}, ...]); None when it does
    not resolve."""
    m = _REF_RE.match(ref or "")
    if not m:
        return None
    idx = int(m.group(1))  # refs are zero-based: i0 is the first bundle item
    if idx >= len(evidence):
        return None
    item = evidence[idx]
    if m.group(2) is not None:
        facts = item.get("graph_facts", [])
        j = int(m.group(2))
        if j >= len(facts):
            return None
        return facts[j].get("value")
    fields = item.get("fields", {})
    key = _RENAMED.get(attribute, attribute)
    if key in fields:
        return fields[key]
    return fields.get("attributes", {}).get(attribute) if "attributes" in fields else fields.get(attribute)


def _values_match(claim_value: str, expected) -> bool:
    if expected is None:
        return False
    if isinstance(expected, bool):
        return claim_value.strip().lower() == ("yes" if expected else "no")
    if isinstance(expected, (int, float)):
        try:
            got = float(str(claim_value).replace(",", ""))
        except ValueError:
            return False
        exp = float(expected)
        if exp == 0:
            return got == 0
        return abs(got - exp) / abs(exp) <= NUMERIC_TOLERANCE
    return " ".join(str(claim_value).lower().split()) == " ".join(str(expected).lower().split())


def claim_supported(claim: Mapping, evidence: Sequence[Mapping]) -> bool:
    """A claim counts as supported when its reference resolves and the
    value matches within tolerance; unreferenced claims are unsupported."""
    expected = _evidence_lookup(evidence, claim.get("evidence_ref", ""), claim.get("attribute", ""))
    if expected is None:
        return False
    return _values_match(str(claim.get("value", "")), expected)


def entities_known(claims: Sequence[Mapping], evidence: Sequence[Mapping]) -> bool:
    """Every claim subject must be an evidence item (by id or name) or a
    graph-fact target."""
    known = set()
    for item in evidence:
        known.add(str(item.get("property_id", "")).lower())
        name = item.get("fields", {}).get("name")
        if name:
            known.add(" ".join(str(name).lower().split()))
        for f in item.get("graph_facts", []):
            t = f.get("target_name")
            if t:
                known.add(" ".join(str(t).lower().split()))
    for c in claims:
        subject = " ".join(str(c.get("subject", "")).lower().split())
        if subject and subject not in known:
            return False
    return True


def turn_accuracy(
    recommended_ids: Sequence[str],
    required_k: int,
    hard_sat_ids,
    claims: Sequence[Mapping],
    evidence: Sequence[Mapping],
) -> bool:
    """Strict three-way check: (i) the recommendation list is full-size and
    entirely constraint-satisfying, (ii) every claim is evidence-supported,
    (iii) every referenced entity is known."""
    sat = set(hard_sat_ids)
    if len(recommended_ids) < required_k:
        return False
    if any(pid not in sat for pid in recommended_ids):
        return False
    if any(not claim_supported(c, evidence) for c in claims):
        return False
    return entities_known(claims, evidence)


def faithfulness(turns: Sequence[Mapping]) -> float:
    """Pooled claim-support rate over a list of per-turn records carrying
    ``claims`` and ``evidence``.  No claims anywhere -> 1.0."""
    total = 0
    good = 0
    for t in turns:
        for c in t.get("claims", []):
            total += 1
            if claim_supported(c, t.get("evidence", [])):
                good += 1
    return good / total if total else 1.0


def p95(samples: Sequence[float]) -> float:
    """Nearest-rank 95th percentile: sorted[ceil(0.95 n) - 1]."""
    if not samples:
        raise ValueError("p95 of an empty sample")
    ordered = sorted(samples)
    rank = math.ceil(0.95 * len(ordered))
    return ordered[rank - 1]


def mean(xs: Sequence[float]) -> float:
    return sum(xs) / len(xs) if xs else 0.0
