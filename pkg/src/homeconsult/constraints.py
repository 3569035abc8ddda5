"""Typed user constraints: extraction from query text and fusion with memory.

Extraction is a deterministic pattern grammar over a controlled lexicon
(``data/grammar_v1.tsv``).  The grammar file carries three record types:
district/region/property-name vocabulary, preference-tag patterns, and
the constraint rules themselves (applied in file order, first match wins
per (kind, target), overlapping spans are not re-consumed).

Fusion merges the turn's constraints with the session memory:

1. current-turn constraints are always kept;
2. promoted bias tags (|w| >= 0.5) become soft constraints, ordered by
   |w| descending (w < 0 -> avoid, w > 0 -> feature preference);
3. context-state constraints carry forward unless the turn contradicts
   them (same slot), demoted to soft;
4. every override is recorded in the conflict log;
5. entity memory never contributes constraints (reference resolution only).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Optional, Sequence

from .kb import normalize_name
from .vector import normalize_phrases

CONSTRAINT_KINDS = (
    "budget_max",
    "budget_range",
    "bedrooms",
    "area_min",
    "region",
    "district",
    "near_transit",
    "commute",
    "school_district",
    "attribute_equals",
    "avoid",
)

# kinds only a graph relation can answer
RELATIONAL_KINDS = frozenset({"near_transit", "commute", "school_district"})
BUDGET_KINDS = frozenset({"budget_max", "budget_range"})

DEFAULT_TRANSIT_RADIUS_M = 1000.0


@dataclass(frozen=True)
class ReferencedEntity:
    """Snapshot of an entity the conversation has referred to, in display
    order, so ordinal anaphora ("the second one") can resolve offline."""

    entity_id: str
    name: str
    price_total: Optional[int] = None

    def to_dict(self) -> dict:
        return {"entity_id": self.entity_id, "name": self.name, "price_total": self.price_total}

    @classmethod
    def from_dict(cls, d: dict) -> "ReferencedEntity":
        return cls(d["entity_id"], d["name"], d.get("price_total"))


@dataclass(frozen=True)
class Constraint:
    kind: str
    hardness: str = "hard"
    priority: int = 0  # rank among soft constraints, 1 = most important
    source: str = "turn"  # turn | bias_memory | context_state
    value: Optional[float] = None  # budget_max / bedrooms / area_min
    low: Optional[float] = None  # budget_range
    high: Optional[float] = None
    name: str = ""  # region/district/school/line/dest/attribute/tag
    attr_value: object = None  # attribute_equals payload
    max_distance_m: Optional[float] = None  # near_transit
    max_minutes: Optional[float] = None  # commute

    @property
    def relational(self) -> bool:
        return self.kind in RELATIONAL_KINDS

    def slot(self) -> str:
        """Identity used for override resolution during fusion; all budget
        kinds share one slot so at most one survives."""
        if self.kind in BUDGET_KINDS:
            return "budget"
        if self.kind == "attribute_equals":
            return "attr:" + self.name
        if self.kind == "avoid":
            return "avoid:" + self.name
        return self.kind

    def describe(self) -> str:
        if self.kind == "budget_max":
            return f"budget_max<={self.value:g}"
        if self.kind == "budget_range":
            return f"budget in [{self.low:g}, {self.high:g}]"
        if self.kind == "bedrooms":
            return f"bedrooms={int(self.value)}"
        if self.kind == "area_min":
            return f"area>={self.value:g}"
        if self.kind == "near_transit":
            target = self.name or "any subway"
            dist = f"{self.max_distance_m:g}" if self.max_distance_m is not None else "default"
            return f"within {dist} m of {target}"
        if self.kind == "commute":
            return f"within {self.max_minutes:g} min of {self.name}"
        if self.kind == "attribute_equals":
            return f"{self.name}={self.attr_value}"
        if self.kind == "avoid":
            return f"avoid {self.name}"
        return f"{self.kind}={self.name}"

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "hardness": self.hardness,
            "priority": self.priority,
            "source": self.source,
            "value": self.value,
            "low": self.low,
            "high": self.high,
            "name": self.name,
            "attr_value": self.attr_value,
            "max_distance_m": self.max_distance_m,
            "max_minutes": self.max_minutes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Constraint":
        return cls(
            kind=d["kind"],
            hardness=d.get("hardness", "hard"),
            priority=d.get("priority", 0),
            source=d.get("source", "turn"),
            value=d.get("value"),
            low=d.get("low"),
            high=d.get("high"),
            name=d.get("name", ""),
            attr_value=d.get("attr_value"),
            max_distance_m=d.get("max_distance_m"),
            max_minutes=d.get("max_minutes"),
        )


@dataclass(frozen=True)
class ConstraintSet:
    constraints: tuple[Constraint, ...] = ()

    @property
    def n_c(self) -> int:
        return len(self.constraints)

    def relational_kinds(self) -> frozenset[str]:
        return frozenset(c.kind for c in self.constraints if c.relational)

    def to_dict(self) -> dict:
        return {"constraints": [c.to_dict() for c in self.constraints], "n_c": self.n_c}


@dataclass(frozen=True)
class EffectiveConstraintSet(ConstraintSet):
    conflict_log: tuple[dict, ...] = ()

    def hard(self) -> tuple[Constraint, ...]:
        return tuple(c for c in self.constraints if c.hardness == "hard")

    def soft(self) -> tuple[Constraint, ...]:
        return tuple(c for c in self.constraints if c.hardness == "soft")

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["conflict_log"] = [dict(e) for e in self.conflict_log]
        return d


# ---------------------------------------------------------------------------
# grammar
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TagRule:
    pattern: str
    tag_id: str
    attribute: str
    avoid_value: object  # attribute value excluded by avoid(tag)
    prefer_value: object  # attribute value preferred when liked


def _parse_flag(s: str) -> object:
    if s == "true":
        return True
    if s == "false":
        return False
    return s


class Grammar:
    def __init__(self, text: str):
        self.districts: list[str] = []
        self.regions: list[str] = []
        self.suffixes: list[str] = []
        self.tags: list[TagRule] = []
        rule_rows: list[tuple[str, str, str]] = []
        for line in text.splitlines():
            if not line.strip() or line.startswith("#"):
                continue
            cols = line.split("\t")
            if cols[0] == "name":
                {"district": self.districts, "region": self.regions, "suffix": self.suffixes}[
                    cols[1]
                ].append(cols[2])
            elif cols[0] == "tag":
                self.tags.append(TagRule(cols[1], cols[2], cols[3], _parse_flag(cols[4]), _parse_flag(cols[5])))
            elif cols[0] == "rule":
                rule_rows.append((cols[1], cols[2], cols[3]))
            else:
                raise ValueError(f"unknown grammar record type: {cols[0]!r}")
        # longest-first alternations so multi-word names win over prefixes
        def alt(names: Sequence[str]) -> str:
            ordered = sorted(names, key=lambda n: (-len(n), n))
            return "|".join(re.escape(n.lower()) for n in ordered)

        tag_alt = "|".join(f"(?:{t.pattern})" for t in self.tags)
        self.rules: list[tuple[str, str, re.Pattern]] = []
        for rule_id, kind, pattern in rule_rows:
            pattern = pattern.replace("{districts}", alt(self.districts))
            pattern = pattern.replace("{regions}", alt(self.regions))
            pattern = pattern.replace("{tags}", tag_alt)
            self.rules.append((rule_id, kind, re.compile(pattern)))
        self._tag_res = [(re.compile(t.pattern), t) for t in self.tags]

    def tag_for_text(self, text: str) -> Optional[TagRule]:
        for rx, tag in self._tag_res:
            if rx.fullmatch(text):
                return tag
        return None

    def tag_by_id(self, tag_id: str) -> Optional[TagRule]:
        for t in self.tags:
            if t.tag_id == tag_id:
                return t
        return None


_GRAMMAR: Optional[Grammar] = None


def grammar() -> Grammar:
    global _GRAMMAR
    if _GRAMMAR is None:
        text = resources.files("homeconsult.data").joinpath("grammar_v1.tsv").read_text("utf-8")
        _GRAMMAR = Grammar(text)
    return _GRAMMAR


_WORD_NUMBERS = {"one": 1, "two": 2, "three": 3, "four": 4, "five": 5}
_ORDINALS = {
    "first": 0, "second": 1, "third": 2, "fourth": 3, "fifth": 4,
    "1st": 0, "2nd": 1, "3rd": 2, "4th": 3, "5th": 4,
}


def _parse_amount(amt: str, unit: Optional[str]) -> float:
    raw = amt.replace(",", "")
    value = float(raw)
    if unit in ("million", "m"):
        return value * 1_000_000
    if unit == "k":
        return value * 1_000
    # bare small numbers read as millions ("budget of 5")
    if value < 100_000:
        return value * 1_000_000
    return value


def _build_constraint(rule_id: str, kind: str, m: re.Match, ctx) -> Optional[Constraint]:
    if kind == "budget_range":
        lo = _parse_amount(m.group("lo"), "million")
        hi = _parse_amount(m.group("hi"), "million")
        if lo > hi:
            lo, hi = hi, lo
        return Constraint(kind="budget_range", low=lo, high=hi)
    if kind == "budget_max_anaphora":
        if ctx is None:
            return None
        entities = list(getattr(ctx, "referenced_entities", ()))
        idx = _ORDINALS[m.group("ord")]
        if idx >= len(entities):
            return None
        price = entities[idx].price_total
        if price is None:
            return None
        return Constraint(kind="budget_max", value=float(price))
    if kind == "budget_max":
        return Constraint(kind="budget_max", value=_parse_amount(m.group("amt"), m.group("unit")))
    if kind == "bedrooms":
        n = m.group("n")
        count = _WORD_NUMBERS.get(n, None)
        if count is None:
            count = int(n)
        return Constraint(kind="bedrooms", value=float(count))
    if kind == "area_min":
        return Constraint(kind="area_min", value=float(m.group("a")))
    if kind == "near_transit":
        if rule_id == "transit_within":
            return Constraint(
                kind="near_transit",
                name=f"line {m.group('line')}",
                max_distance_m=float(m.group("d")),
            )
        if rule_id == "transit_near":
            return Constraint(
                kind="near_transit",
                name=f"line {m.group('line')}",
                max_distance_m=DEFAULT_TRANSIT_RADIUS_M,
            )
        # any subway station
        return Constraint(kind="near_transit", name="", max_distance_m=DEFAULT_TRANSIT_RADIUS_M)
    if kind == "commute":
        return Constraint(kind="commute", name=m.group("dest"), max_minutes=float(m.group("m")))
    if kind == "school_district":
        return Constraint(kind="school_district", name=m.group("name").strip())
    if kind == "district":
        return Constraint(kind="district", name=m.group("name"))
    if kind == "region":
        return Constraint(kind="region", name=m.group("name"))
    if kind == "attribute_equals":
        attr, value = {
            "elevator": ("has_elevator", True),
            "garden_attr": ("garden", True),
            "renovated_attr": ("decoration", "renovated"),
        }[rule_id]
        return Constraint(kind="attribute_equals", name=attr, attr_value=value)
    if kind == "avoid":
        tag = grammar().tag_for_text(m.group("tag"))
        if tag is None:
            return None
        return Constraint(kind="avoid", name=tag.tag_id, hardness="soft")
    raise ValueError(f"grammar rule kind without builder: {kind}")


def _overlaps(span: tuple[int, int], used: list[tuple[int, int]]) -> bool:
    s, e = span
    return any(s < ue and us < e for us, ue in used)


def extract_constraints(query: str, ctx=None) -> ConstraintSet:
    """Parse a turn's text into a ConstraintSet.

    ``ctx`` is the session ContextState (anything exposing
    ``referenced_entities``); it is only consulted for ordinal anaphora.
    Unparseable text yields an empty set.
    """
    text = normalize_phrases(query)
    used: list[tuple[int, int]] = []
    seen_targets: set[tuple[str, str]] = set()
    out: list[Constraint] = []
    for rule_id, kind, rx in grammar().rules:
        for m in rx.finditer(text):
            if _overlaps(m.span(), used):
                continue
            c = _build_constraint(rule_id, kind, m, ctx)
            if c is None:
                continue
            key = (c.kind, normalize_name(c.name) if c.name else "")
            if key in seen_targets:
                continue
            used.append(m.span())
            seen_targets.add(key)
            out.append(c)
    # rank any soft constraints extracted this turn
    ranked: list[Constraint] = []
    rank = 0
    for c in out:
        if c.hardness == "soft":
            rank += 1
            ranked.append(replace(c, priority=rank))
        else:
            ranked.append(c)
    return ConstraintSet(tuple(ranked))


# ---------------------------------------------------------------------------
# preference phrases (shared with the memory layer's extract step)
# ---------------------------------------------------------------------------

_NEG_VERBS = r"(?:hate|dislike|avoid|can'?t\s+stand|don'?t\s+(?:want|like)|do\s+not\s+(?:want|like))"
_POS_VERBS = r"(?:love|really\s+like|like|prefer|want|enjoy)"


def _pref_res() -> list[tuple[re.Pattern, int]]:
    tag_alt = "|".join(f"(?:{t.pattern})" for t in grammar().tags)
    neg = re.compile(_NEG_VERBS + r"\s+(?:the\s+)?(?P<tag>" + tag_alt + r")\b")
    pos = re.compile(_POS_VERBS + r"\s+(?:the\s+)?(?P<tag>" + tag_alt + r")\b")
    return [(neg, -1), (pos, +1)]


_PREF_RES: Optional[list] = None


def detect_bias_phrases(text: str) -> list[tuple[str, int]]:
    """Liked/disliked tag mentions: [(tag_id, +1 | -1)], first mention of a
    tag wins, negations take precedence over their embedded positives
    ("don't like gardens" is a dislike)."""
    global _PREF_RES
    if _PREF_RES is None:
        _PREF_RES = _pref_res()
    t = normalize_phrases(text)
    used: list[tuple[int, int]] = []
    seen: set[str] = set()
    out: list[tuple[str, int]] = []
    for rx, sign in _PREF_RES:
        for m in rx.finditer(t):
            if _overlaps(m.span(), used):
                continue
            tag = grammar().tag_for_text(m.group("tag"))
            if tag is None or tag.tag_id in seen:
                continue
            used.append(m.span())
            seen.add(tag.tag_id)
            out.append((tag.tag_id, sign))
    return out


def bias_constraint(tag_id: str, w: float) -> Optional[Constraint]:
    """Soft constraint a promoted bias entry contributes (None when the tag
    is unknown to the lexicon)."""
    tag = grammar().tag_by_id(tag_id)
    if tag is None:
        return None
    if w < 0:
        return Constraint(kind="avoid", name=tag_id, hardness="soft", source="bias_memory")
    return Constraint(
        kind="attribute_equals",
        name=tag.attribute,
        attr_value=tag.prefer_value,
        hardness="soft",
        source="bias_memory",
    )


# ---------------------------------------------------------------------------
# fusion
# ---------------------------------------------------------------------------

BIAS_PROMOTION_THRESHOLD = 0.5


def fuse_memory(cs: ConstraintSet, mem) -> EffectiveConstraintSet:
    """Merge turn constraints with session memory.

    ``mem`` needs only two attributes: ``bias`` (with ``promoted(threshold)``
    -> [(tag, w)] sorted by |w| descending) and ``context`` (with
    ``salient_constraints``).  ``None`` means no memory (baseline presets).
    """
    out: list[Constraint] = []
    conflicts: list[dict] = []
    slots: dict[str, Constraint] = {}

    def admit(c: Constraint, origin: str) -> None:
        slot = c.slot()
        holder = slots.get(slot)
        if holder is not None:
            conflicts.append(
                {
                    "slot": slot,
                    "kept": holder.describe(),
                    "kept_source": holder.source,
                    "dropped": c.describe(),
                    "dropped_source": origin,
                }
            )
            return
        slots[slot] = c
        out.append(c)

    for c in cs.constraints:
        admit(c, c.source)

    if mem is not None:
        bias = getattr(mem, "bias", None)
        if bias is not None:
            for tag, w in bias.promoted(BIAS_PROMOTION_THRESHOLD):
                c = bias_constraint(tag, w)
                if c is not None:
                    admit(c, "bias_memory")
        context = getattr(mem, "context", None)
        if context is not None:
            for c in context.salient_constraints:
                carried = replace(c, hardness="soft", source="context_state", priority=0)
                admit(carried, "context_state")

    # unique priority ranks over the soft constraints, in admission order
    # (bias entries arrive pre-sorted by |w| descending)
    ranked: list[Constraint] = []
    rank = 0
    for c in out:
        if c.hardness == "soft":
            rank += 1
            ranked.append(replace(c, priority=rank) if c.priority != rank else c)
        else:
            ranked.append(c)
    return EffectiveConstraintSet(tuple(ranked), tuple(conflicts))


def render_constraint_text(constraints: Sequence[Constraint]) -> str:
    """Natural-language rendering of constraints, used to enrich the dense
    query so carried constraints influence retrieval.  Aversions are omitted
    (their surface words would attract what they reject)."""
    parts: list[str] = []
    for c in constraints:
        if c.kind == "budget_max":
            parts.append(f"under {c.value / 1e6:g} million")
        elif c.kind == "budget_range":
            parts.append(f"between {c.low / 1e6:g} and {c.high / 1e6:g} million")
        elif c.kind == "bedrooms":
            parts.append(f"{int(c.value)} bedroom")
        elif c.kind == "area_min":
            parts.append(f"at least {c.value:g} sqm")
        elif c.kind == "region" or c.kind == "district":
            parts.append(c.name)
        elif c.kind == "near_transit":
            parts.append(f"near {c.name}" if c.name else "near subway")
        elif c.kind == "commute":
            parts.append(f"within {c.max_minutes:g} min of {c.name}")
        elif c.kind == "school_district":
            parts.append(f"the {c.name} school district")
        elif c.kind == "attribute_equals" and c.attr_value is True:
            parts.append(c.name.replace("has_", "").replace("_", " "))
        elif c.kind == "attribute_equals" and isinstance(c.attr_value, str):
            parts.append(c.attr_value)
    return " ".join(parts)
