"""Session memory layers and the verdict-gated update."""

from __future__ import annotations

from types import SimpleNamespace

import pytest

from homeconsult.constraints import Constraint, ReferencedEntity, extract_constraints
from homeconsult.memory import (
    BIAS_DELTA,
    CONTEXT_MAX_CONSTRAINTS,
    CONV_MAX_TURNS,
    CONV_TTL_SECONDS,
    RETRIEVAL_WINDOW_SECONDS,
    BiasMemory,
    ContextState,
    ConversationalMemory,
    EntityMemory,
    RetrievalMemory,
    UserMemory,
    context_delta_ops,
    extract_preferences,
    gated_update,
    long_term_fingerprint,
    sweep_ttl,
)


class TestConversationalRing:
    def test_cap(self):
        ring = ConversationalMemory()
        for i in range(CONV_MAX_TURNS + 2):
            ring.append(f"q{i}", f"a{i}", float(i))
        assert len(ring.entries) == CONV_MAX_TURNS
        assert ring.entries[0]["query"] == "q2"
        assert ring.entries[-1]["query"] == f"q{CONV_MAX_TURNS + 1}"

    def test_ttl_sweep_is_inclusive_at_the_boundary(self):
        ring = ConversationalMemory()
        ring.append("old", "x", 0.0)
        ring.append("edge", "x", 10.0)
        ring.sweep(10.0 + CONV_TTL_SECONDS)
        assert [e["query"] for e in ring.entries] == ["edge"]


class TestEntityMemory:
    def test_first_mention(self):
        em = EntityMemory()
        assert em.update("p1", 1000.0) == 1.0

    def test_same_day_mentions_accumulate_undecayed(self):
        em = EntityMemory()
        em.update("p1", 1000.0)
        assert em.update("p1", 1000.0 + 3600) == 2.0

    def test_decay_counts_whole_days_only(self):
        em = EntityMemory()
        em.update("p1", 0.0)
        # 2.5 days later: two whole days of decay, then the new mention
        assert em.update("p1", 2.5 * 86400) == pytest.approx(0.9**2 + 1.0)

    def test_sorted_view_breaks_ties_by_id(self):
        em = EntityMemory()
        em.update("zeta", 0.0)
        em.update("alpha", 0.0)
        em.update("mid", 0.0)
        em.update("mid", 0.0)
        assert em.sorted_view() == [("mid", 2.0), ("alpha", 1.0), ("zeta", 1.0)]


class TestBiasMemory:
    def test_accumulates_and_clamps(self):
        bm = BiasMemory()
        for _ in range(2):
            bm.update("garden", BIAS_DELTA, 0.0)
        assert bm.entries["garden"]["w"] == pytest.approx(0.8)
        assert bm.update("garden", BIAS_DELTA, 0.0) == 1.0
        assert bm.update("noisy_area", -3.0, 0.0) == -1.0

    def test_promoted_sorts_by_magnitude_then_tag(self):
        bm = BiasMemory()
        bm.update("noisy_area", -0.8, 0.0)
        bm.update("garden", 0.8, 0.0)
        bm.update("quiet", 0.4, 0.0)
        assert bm.promoted(0.5) == [("garden", 0.8), ("noisy_area", -0.8)]
        assert bm.promoted(0.4) == [("garden", 0.8), ("noisy_area", -0.8), ("quiet", 0.4)]


class TestRetrievalMemory:
    def test_filter_recent_window(self):
        rm = RetrievalMemory()
        rm.record(["p1", "p2"], 0.0)
        now = RETRIEVAL_WINDOW_SECONDS  # p1/p2 are exactly window-old: still held back
        assert rm.filter_recent(["p1", "p2", "p3"], now) == ["p3"]
        assert rm.filter_recent(["p1", "p2", "p3"], now + 1) == ["p1", "p2", "p3"]

    def test_sweep(self):
        rm = RetrievalMemory()
        rm.record(["stale"], 0.0)
        rm.record(["fresh"], 500.0)
        rm.sweep(RETRIEVAL_WINDOW_SECONDS + 1.0)
        assert list(rm.entries) == ["fresh"]


class TestContextState:
    def test_apply_op_validates_the_op(self):
        with pytest.raises(ValueError, match="unknown context op"):
            ContextState().apply_op("delete", Constraint(kind="bedrooms", value=2))

    def test_touch_order_and_slot_replacement(self):
        ctx = ContextState()
        beds = Constraint(kind="bedrooms", value=2)
        budget = Constraint(kind="budget_max", value=3e6)
        ctx.apply_op("add", beds)
        ctx.apply_op("add", budget)
        ctx.apply_op("update", Constraint(kind="bedrooms", value=3))
        assert [c.slot() for c in ctx.salient_constraints] == ["budget", "bedrooms"]
        assert ctx.find("bedrooms").value == 3

    def test_lru_eviction_at_the_cap(self):
        ctx = ContextState()
        for i in range(CONTEXT_MAX_CONSTRAINTS + 1):
            ctx.apply_op("add", Constraint(kind="attribute_equals", name=f"a{i}", attr_value=True))
        assert len(ctx.salient_constraints) == CONTEXT_MAX_CONSTRAINTS
        assert ctx.find("attr:a0") is None
        assert ctx.find(f"attr:a{CONTEXT_MAX_CONSTRAINTS}") is not None

    def test_set_referenced_merges_up_to_the_cap(self):
        ctx = ContextState()
        ctx.set_referenced([ReferencedEntity(f"o{i}", f"Old {i}") for i in range(1, 7)])
        ctx.set_referenced([
            ReferencedEntity("n1", "New 1"),
            ReferencedEntity("n2", "New 2"),
            ReferencedEntity("o3", "Old 3"),
        ])
        assert [e.entity_id for e in ctx.referenced_entities] == [
            "n1", "n2", "o3", "o1", "o2", "o4", "o5", "o6",
        ]


class TestContextDeltaOps:
    def test_add_update_relax(self):
        ctx = ContextState()
        ctx.apply_op("add", Constraint(kind="budget_max", value=3e6))
        ctx.apply_op("add", Constraint(kind="area_min", value=80))

        ops = context_delta_ops(
            [
                Constraint(kind="budget_max", value=5e6),   # wider -> relax
                Constraint(kind="area_min", value=100),     # tighter -> update
                Constraint(kind="bedrooms", value=2),       # new slot -> add
            ],
            ctx,
        )
        assert [(op, c.kind) for op, c in ops] == [
            ("relax", "budget_max"), ("update", "area_min"), ("add", "bedrooms"),
        ]

    def test_identical_and_foreign_constraints_are_inert(self):
        ctx = ContextState()
        same = Constraint(kind="bedrooms", value=2)
        ctx.apply_op("add", same)
        carried = Constraint(kind="district", name="crestwood", source="context_state")
        assert context_delta_ops([same, carried], ctx) == []

    def test_relax_semantics_per_kind(self):
        ctx = ContextState()
        ctx.apply_op("add", Constraint(kind="near_transit", name="line 2", max_distance_m=500))
        wider = Constraint(kind="near_transit", name="line 2", max_distance_m=800)
        other_line = Constraint(kind="near_transit", name="line 3", max_distance_m=800)
        assert context_delta_ops([wider], ctx)[0][0] == "relax"
        assert context_delta_ops([other_line], ctx)[0][0] == "update"


def _turn(text, constraint_text=None):
    return SimpleNamespace(
        text=text,
        constraints=extract_constraints(constraint_text if constraint_text is not None else text),
    )


def _answer(subjects=("Alpha Court 1",), recommended=("p1",), referenced=()):
    return SimpleNamespace(
        text="Here is what I found.",
        claims=[SimpleNamespace(subject=s) for s in subjects],
        recommended_ids=list(recommended),
        referenced=list(referenced),
    )


_PASS = SimpleNamespace(verdict="pass")
_FAIL = SimpleNamespace(verdict="fail")


class TestGatedUpdate:
    def test_passing_turn_writes_every_layer(self):
        m = UserMemory(clock=1000.0)
        q = _turn("2 bedrooms under 3 million, and I hate noisy areas",
                  constraint_text="2 bedrooms under 3 million")
        a = _answer(
            subjects=("Alpha Court 1", "Alpha Court 1", "Briar Mews 2"),
            recommended=("p1", "p2"),
            referenced=(ReferencedEntity("p1", "Alpha Court 1", 2_900_000),),
        )
        gated_update(m, q, a, _PASS)

        assert [e["query"] for e in m.conv.entries] == [q.text]
        # duplicate claim subjects count once
        assert m.entity.sorted_view() == [("Alpha Court 1", 1.0), ("Briar Mews 2", 1.0)]
        assert m.bias.entries["noisy_area"]["w"] == pytest.approx(-BIAS_DELTA)
        assert set(m.retrieval.entries) == {"p1", "p2"}
        assert [c.slot() for c in m.context.salient_constraints] == ["budget", "bedrooms"]
        assert all(c.priority == 0 for c in m.context.salient_constraints)
        assert [e.entity_id for e in m.context.referenced_entities] == ["p1"]

    def test_failing_turn_touches_only_the_ring(self):
        m = UserMemory(clock=1000.0)
        gated_update(m, _turn("2 bedrooms under 3 million"), _answer(), _PASS)
        before = long_term_fingerprint(m)

        m.clock = 2000.0
        gated_update(m, _turn("garden homes under 9 million"), _answer(subjects=("X",)), _FAIL)
        assert long_term_fingerprint(m) == before
        assert len(m.conv.entries) == 2

    def test_strict_gate_blocks_the_ring_too(self):
        m = UserMemory(clock=0.0)
        gated_update(m, _turn("hello"), _answer(), _FAIL, strict_conv_gate=True)
        assert m.conv.entries == []

    def test_unchecked_verdict_passes_the_gate(self):
        m = UserMemory(clock=0.0)
        gated_update(m, _turn("2 bedrooms"), _answer(), SimpleNamespace(verdict="unchecked"))
        assert m.context.find("bedrooms") is not None

    def test_disabled_gate_writes_despite_failure(self):
        m = UserMemory(clock=0.0)
        gated_update(m, _turn("2 bedrooms"), _answer(), _FAIL, gate_enabled=False)
        assert m.context.find("bedrooms") is not None
        assert set(m.retrieval.entries) == {"p1"}

    def test_widened_budget_relaxes_in_place(self):
        m = UserMemory(clock=0.0)
        gated_update(m, _turn("under 3 million"), _answer(), _PASS)
        m.clock = 60.0
        gated_update(m, _turn("can stretch to 5 million"), _answer(), _PASS)
        assert m.context.find("budget").value == 5_000_000

    def test_referenced_entities_require_a_recommendation(self):
        m = UserMemory(clock=0.0)
        a = _answer(recommended=(), referenced=(ReferencedEntity("p1", "Alpha"),))
        gated_update(m, _turn("2 bedrooms"), a, _PASS)
        assert m.context.referenced_entities == []


def test_extract_preferences_order_and_sources():
    q = SimpleNamespace(
        text="I love gardens",
        constraints=SimpleNamespace(constraints=(
            Constraint(kind="bedrooms", value=2),
            Constraint(kind="district", name="crestwood", source="context_state"),
        )),
    )
    a = SimpleNamespace(claims=[SimpleNamespace(subject="Fern Villas 3")])
    got = extract_preferences(q, a)
    assert got == [
        ("entity", "Fern Villas 3"),
        ("bias", "garden", 1),
        ("constraint", Constraint(kind="bedrooms", value=2)),
    ]


def test_fingerprint_ignores_ring_and_clock():
    m = UserMemory(clock=0.0)
    m.entity.update("p1", 0.0)
    fp = long_term_fingerprint(m)
    m.conv.append("q", "a", 0.0)
    m.clock = 99.0
    assert long_term_fingerprint(m) == fp
    m.entity.update("p2", 99.0)
    assert long_term_fingerprint(m) != fp


def test_snapshot_roundtrip():
    m = UserMemory(clock=42.0)
    gated_update(
        m,
        _turn("3 bedrooms in Crestwood under 6 million, I love gardens",
              constraint_text="3 bedrooms in Crestwood under 6 million"),
        _answer(subjects=("A", "B"), recommended=("p1", "p2"),
                referenced=(ReferencedEntity("p1", "A", 1_000_000),)),
        _PASS,
    )
    clone = UserMemory.from_snapshot(m.snapshot())
    assert clone.to_json() == m.to_json()
    assert long_term_fingerprint(clone) == long_term_fingerprint(m)


def test_sweep_ttl_clears_both_timed_layers():
    m = UserMemory(clock=0.0)
    m.conv.append("q", "a", 0.0)
    m.retrieval.record(["p1"], 0.0)
    sweep_ttl(m, RETRIEVAL_WINDOW_SECONDS + 1)
    assert m.conv.entries == [] and m.retrieval.entries == {}
