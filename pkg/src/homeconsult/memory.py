"""Session memory: short-term ring, three long-term layers, context state.

Layer update is *verification-gated*: a turn that fails validation appends
to the conversational ring (the exchange still happened on screen) but
leaves the entity, bias, retrieval, and context layers bit-identical.  A
``strict_conv_gate`` flag extends the gate to the ring as well.

Timestamps are plain unix seconds supplied by the caller; the orchestrator
feeds a simulated per-turn clock in benchmark mode so snapshots are
reproducible, and wall time when serving live.
"""

from __future__ import annotations

import json
from dataclasses import replace
from typing import Iterable, Optional, Sequence

from .constraints import (
    Constraint,
    ReferencedEntity,
    detect_bias_phrases,
)

CONV_MAX_TURNS = 5
CONV_TTL_SECONDS = 24 * 3600.0
RETRIEVAL_WINDOW_SECONDS = 7 * 24 * 3600.0
ENTITY_DECAY_PER_DAY = 0.9
BIAS_DELTA = 0.4
CONTEXT_MAX_CONSTRAINTS = 12
CONTEXT_MAX_ENTITIES = 8


class ConversationalMemory:
    """Ring of the most recent turns, capped in count and age."""

    def __init__(self) -> None:
        self.entries: list[dict] = []  # {"query", "answer", "ts"}

    def append(self, query: str, answer: str, ts: float) -> None:
        self.entries.append({"query": query, "answer": answer, "ts": ts})
        if len(self.entries) > CONV_MAX_TURNS:
            del self.entries[: len(self.entries) - CONV_MAX_TURNS]

    def sweep(self, now: float) -> None:
        self.entries = [e for e in self.entries if now - e["ts"] <= CONV_TTL_SECONDS]

    def snapshot(self) -> list[dict]:
        return [dict(e) for e in self.entries]


class EntityMemory:
    """entity_id -> (weight, last_seen); weight decays 0.9 per whole day
    elapsed and gains +1 on each mention."""

    def __init__(self) -> None:
        self.entries: dict[str, dict] = {}  # id -> {"weight", "last_seen"}

    def update(self, entity_id: str, now: float) -> float:
        e = self.entries.get(entity_id)
        if e is None:
            self.entries[entity_id] = {"weight": 1.0, "last_seen": now}
            return 1.0
        days = int(max(0.0, now - e["last_seen"]) // 86400)
        w = e["weight"] * (ENTITY_DECAY_PER_DAY ** days) + 1.0
        e["weight"] = w
        e["last_seen"] = now
        return w

    def sorted_view(self) -> list[tuple[str, float]]:
        return sorted(
            ((eid, e["weight"]) for eid, e in self.entries.items()),
            key=lambda t: (-t[1], t[0]),
        )

    def snapshot(self) -> dict:
        return {eid: dict(e) for eid, e in sorted(self.entries.items())}


class BiasMemory:
    """tag -> weight in [-1, 1]."""

    def __init__(self) -> None:
        self.entries: dict[str, dict] = {}  # tag -> {"w", "updated_at"}

    def update(self, tag: str, delta: float, now: float) -> float:
        e = self.entries.get(tag)
        w = (e["w"] if e else 0.0) + delta
        w = max(-1.0, min(1.0, w))
        self.entries[tag] = {"w": w, "updated_at": now}
        return w

    def promoted(self, threshold: float) -> list[tuple[str, float]]:
        hits = [(tag, e["w"]) for tag, e in self.entries.items() if abs(e["w"]) >= threshold]
        hits.sort(key=lambda t: (-abs(t[1]), t[0]))
        return hits

    def snapshot(self) -> dict:
        return {tag: dict(e) for tag, e in sorted(self.entries.items())}


class RetrievalMemory:
    """7-day rolling cache of recommended property ids, for deduplication."""

    def __init__(self) -> None:
        self.entries: dict[str, float] = {}  # property_id -> last_recommended

    def record(self, ids: Iterable[str], now: float) -> None:
        for pid in ids:
            self.entries[pid] = now

    def filter_recent(self, ids: Sequence[str], now: float) -> list[str]:
        out = []
        for pid in ids:
            ts = self.entries.get(pid)
            if ts is not None and now - ts <= RETRIEVAL_WINDOW_SECONDS:
                continue
            out.append(pid)
        return out

    def sweep(self, now: float) -> None:
        self.entries = {
            pid: ts for pid, ts in self.entries.items() if now - ts <= RETRIEVAL_WINDOW_SECONDS
        }

    def snapshot(self) -> dict:
        return dict(sorted(self.entries.items()))


class ContextState:
    """Salient constraints + recently referenced entities.

    Constraints change only through add/update/relax operations; the list
    is kept in touch order (least recently touched first) and capped, so
    eviction is LRU.  Referenced entities mirror the latest recommendation
    display order — ordinals like "the second one" resolve against it.
    """

    def __init__(self) -> None:
        self.salient_constraints: list[Constraint] = []
        self.referenced_entities: list[ReferencedEntity] = []

    def find(self, slot: str) -> Optional[Constraint]:
        for c in self.salient_constraints:
            if c.slot() == slot:
                return c
        return None

    def apply_op(self, op: str, c: Constraint) -> None:
        if op not in ("add", "update", "relax"):
            raise ValueError(f"unknown context op: {op}")
        slot = c.slot()
        self.salient_constraints = [x for x in self.salient_constraints if x.slot() != slot]
        self.salient_constraints.append(c)
        if len(self.salient_constraints) > CONTEXT_MAX_CONSTRAINTS:
            del self.salient_constraints[: len(self.salient_constraints) - CONTEXT_MAX_CONSTRAINTS]

    def set_referenced(self, entities: Sequence[ReferencedEntity]) -> None:
        fresh = list(entities)[:CONTEXT_MAX_ENTITIES]
        ids = {e.entity_id for e in fresh}
        for old in self.referenced_entities:
            if len(fresh) >= CONTEXT_MAX_ENTITIES:
                break
            if old.entity_id not in ids:
                fresh.append(old)
                ids.add(old.entity_id)
        self.referenced_entities = fresh

    def snapshot(self) -> dict:
        return {
            "salient_constraints": [c.to_dict() for c in self.salient_constraints],
            "referenced_entities": [e.to_dict() for e in self.referenced_entities],
        }


class UserMemory:
    """All layers plus the session clock; one instance per session."""

    def __init__(self, clock: float = 0.0) -> None:
        self.conv = ConversationalMemory()
        self.entity = EntityMemory()
        self.bias = BiasMemory()
        self.retrieval = RetrievalMemory()
        self.context = ContextState()
        self.clock = clock

    def snapshot(self) -> dict:
        return {
            "clock": self.clock,
            "conv": self.conv.snapshot(),
            "entity": self.entity.snapshot(),
            "bias": self.bias.snapshot(),
            "retrieval": self.retrieval.snapshot(),
            "context": self.context.snapshot(),
        }

    def to_json(self) -> str:
        return json.dumps(self.snapshot(), sort_keys=True)

    @classmethod
    def from_snapshot(cls, snap: dict) -> "UserMemory":
        m = cls(clock=snap["clock"])
        for e in snap["conv"]:
            m.conv.entries.append(dict(e))
        m.entity.entries = {k: dict(v) for k, v in snap["entity"].items()}
        m.bias.entries = {k: dict(v) for k, v in snap["bias"].items()}
        m.retrieval.entries = dict(snap["retrieval"])
        m.context.salient_constraints = [
            Constraint.from_dict(d) for d in snap["context"]["salient_constraints"]
        ]
        m.context.referenced_entities = [
            ReferencedEntity.from_dict(d) for d in snap["context"]["referenced_entities"]
        ]
        return m


def long_term_fingerprint(m: UserMemory) -> str:
    """Serialized view of exactly the gated layers (everything but the
    conversational ring and the clock)."""
    snap = m.snapshot()
    gated = {k: snap[k] for k in ("entity", "bias", "retrieval", "context")}
    return json.dumps(gated, sort_keys=True)


# ---------------------------------------------------------------------------
# preference extraction + the gate
# ---------------------------------------------------------------------------

def _widens(old: Constraint, new: Constraint) -> bool:
    if old.kind != new.kind:
        return False
    if new.kind == "budget_max":
        return new.value > old.value
    if new.kind == "budget_range":
        return new.high > old.high or new.low < old.low
    if new.kind == "area_min":
        return new.value < old.value
    if new.kind == "near_transit" and old.name == new.name:
        return (new.max_distance_m or 0) > (old.max_distance_m or 0)
    if new.kind == "commute" and old.name == new.name:
        return (new.max_minutes or 0) > (old.max_minutes or 0)
    return False


def context_delta_ops(
    turn_constraints: Sequence[Constraint], state: ContextState
) -> list[tuple[str, Constraint]]:
    ops: list[tuple[str, Constraint]] = []
    for c in turn_constraints:
        if c.source != "turn":
            continue
        cur = state.find(c.slot())
        if cur is None:
            ops.append(("add", c))
        elif _widens(cur, c):
            ops.append(("relax", c))
        elif cur != c:
            ops.append(("update", c))
    return ops


def extract_preferences(q, a) -> list[tuple]:
    """Preference tuples from a turn.

    ``q`` must expose ``text`` and ``constraints`` (the turn's extracted
    constraints — a ConstraintSet or a plain sequence); ``a`` must expose
    ``claims`` (each with a ``subject``).
    Returns a list of ("entity", id), ("bias", tag, sign) and
    ("context", op, Constraint) tuples — the context ops are computed by
    the caller's state via :func:`context_delta_ops`, so here they are
    emitted stateless as ("constraint", c) placeholders resolved at apply
    time.
    """
    out: list[tuple] = []
    seen: set[str] = set()
    for claim in getattr(a, "claims", ()):
        subject = str(claim.subject)
        if subject and subject not in seen:
            seen.add(subject)
            out.append(("entity", subject))
    for tag, sign in detect_bias_phrases(getattr(q, "text", "")):
        out.append(("bias", tag, sign))
    cs = getattr(q, "constraints", ()) or ()
    for c in getattr(cs, "constraints", cs):
        if c.source == "turn":
            out.append(("constraint", c))
    return out


def gated_update(
    m: UserMemory, q, a, report, strict_conv_gate: bool = False, gate_enabled: bool = True
) -> UserMemory:
    """Apply the turn's memory effects, gated on the validation verdict.

    Mutates and returns ``m``.  On a failing verdict only the conversational
    ring changes (nothing at all under ``strict_conv_gate``).  A skipped
    validation stage reports verdict "unchecked", which the gate lets
    through; ``gate_enabled=False`` disables the gate outright (the
    ablation arm) so every turn writes long-term memory.
    """
    now = m.clock
    passed = getattr(report, "verdict", "fail") in ("pass", "unchecked") or not gate_enabled
    if passed or not strict_conv_gate:
        m.conv.append(getattr(q, "text", ""), getattr(a, "text", ""), now)
    if not passed:
        return m

    prefs = extract_preferences(q, a)
    turn_constraints = [p[1] for p in prefs if p[0] == "constraint"]
    for op, c in context_delta_ops(turn_constraints, m.context):
        m.context.apply_op(op, replace(c, priority=0))
    for p in prefs:
        if p[0] == "entity":
            m.entity.update(p[1], now)
        elif p[0] == "bias":
            m.bias.update(p[1], p[2] * BIAS_DELTA, now)

    recommended = list(getattr(a, "recommended_ids", ()) or ())
    if recommended:
        m.retrieval.record(recommended, now)
        display = list(getattr(a, "referenced", ()) or ())
        if display:
            m.context.set_referenced(display)
    return m


def sweep_ttl(m: UserMemory, now: float) -> UserMemory:
    m.conv.sweep(now)
    m.retrieval.sweep(now)
    return m
