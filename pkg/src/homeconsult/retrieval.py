"""Hybrid retrieval: dense candidates, optional graph filtering, dedup,
and the evidence bundle handed to generation and validation.

The dense query is enriched with a rendering of the effective constraints
so constraints carried by memory (or stated in earlier turns) influence
retrieval even though the raw turn text omits them.  Graph routing then
re-filters the dense candidates through a compiled :class:`GraphQuery`;
soft boolean preferences never filter, they only order (satisfying items
first).  Every evidence item carries its listing fields, document text,
and graph facts recomputed from the knowledge graph, so downstream
validation can check claims without re-querying anything.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

from .constraints import Constraint, EffectiveConstraintSet, render_constraint_text
from .kb import (
    GraphQuery,
    GraphQueryError,
    KnowledgeGraph,
    Predicate,
    RelaxEvent,
    WALK_SPEED_M_PER_MIN,
    execute_graph_query,
    geodesic_distance,
    normalize_name,
)
from .vector import ScoredDoc, VectorIndex, tokenize


class CompileError(ValueError):
    pass


@dataclass(frozen=True)
class GraphFact:
    relation: str
    target_id: str
    target_name: str
    value: Optional[float] = None
    unit: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "relation": self.relation,
            "target_id": self.target_id,
            "target_name": self.target_name,
            "value": self.value,
            "unit": self.unit,
        }


@dataclass(frozen=True)
class EvidenceItem:
    property_id: str
    dense_score: float
    doc_text: str
    fields: dict
    graph_facts: tuple[GraphFact, ...] = ()

    def to_dict(self) -> dict:
        return {
            "property_id": self.property_id,
            "dense_score": self.dense_score,
            "doc_text": self.doc_text,
            "fields": dict(self.fields),
            "graph_facts": [f.to_dict() for f in self.graph_facts],
        }


@dataclass(frozen=True)
class EvidenceBundle:
    items: tuple[EvidenceItem, ...] = ()
    route_used: str = "dense"  # dense | graph
    query_trace: Optional[GraphQuery] = None
    unresolved_entity: Optional[str] = None

    def ids(self) -> list[str]:
        return [i.property_id for i in self.items]

    def find(self, property_id: str) -> Optional[EvidenceItem]:
        for i in self.items:
            if i.property_id == property_id:
                return i
        return None

    def to_dict(self) -> dict:
        return {
            "items": [i.to_dict() for i in self.items],
            "route_used": self.route_used,
            "query_trace": self.query_trace.to_dict() if self.query_trace else None,
            "unresolved_entity": self.unresolved_entity,
        }


# ---------------------------------------------------------------------------
# constraint -> graph query compilation
# ---------------------------------------------------------------------------

def _predicate_for(c: Constraint) -> Predicate:
    if c.kind == "budget_max":
        return Predicate(
            kind="attribute_compare", attribute="price_total", op="le", value=c.value,
            hardness=c.hardness, priority=c.priority or None,
        )
    if c.kind == "budget_range":
        return Predicate(
            kind="attribute_compare", attribute="price_total", op="between",
            value=(c.low, c.high), hardness=c.hardness, priority=c.priority or None,
        )
    if c.kind == "bedrooms":
        return Predicate(
            kind="attribute_compare", attribute="bedrooms", op="eq", value=int(c.value),
            hardness=c.hardness, priority=c.priority or None,
        )
    if c.kind == "area_min":
        return Predicate(
            kind="attribute_compare", attribute="area", op="ge", value=c.value,
            hardness=c.hardness, priority=c.priority or None,
        )
    if c.kind == "district":
        return Predicate(
            kind="related_node_exists", relation="IN_DISTRICT", target_label="District",
            target_name=c.name, hardness=c.hardness, priority=c.priority or None,
        )
    if c.kind == "region":
        return Predicate(
            kind="related_node_exists", relation="LOCATED_IN", target_label="Region",
            target_name=c.name, hardness=c.hardness, priority=c.priority or None,
        )
    if c.kind == "school_district":
        return Predicate(
            kind="related_node_exists", relation="SERVED_BY_SCHOOL", target_label="School",
            target_name=c.name, hardness=c.hardness, priority=c.priority or None,
        )
    if c.kind == "near_transit":
        return Predicate(
            kind="related_within", relation="NEAR_SUBWAY", target_label="Transit",
            target_name=c.name or None, threshold=c.max_distance_m, unit="m",
            hardness=c.hardness, priority=c.priority or None,
        )
    if c.kind == "commute":
        return Predicate(
            kind="related_within", relation=None, target_label="Region",
            target_name=c.name, threshold=c.max_minutes, unit="min",
            hardness=c.hardness, priority=c.priority or None,
        )
    if c.kind == "attribute_equals":
        return Predicate(
            kind="attribute_compare", attribute=c.name, op="eq", value=c.attr_value,
            hardness=c.hardness, priority=c.priority or None,
        )
    raise CompileError(f"constraint kind has no graph mapping: {c.kind}")


def _is_preference(c: Constraint) -> bool:
    """Soft boolean constraints order results instead of filtering."""
    return c.hardness == "soft" and c.kind in ("avoid", "attribute_equals")


def _avoid_predicate(c: Constraint) -> Optional[Predicate]:
    from .constraints import grammar

    tag = grammar().tag_by_id(c.name)
    if tag is None:
        return None
    return Predicate(
        kind="attribute_compare", attribute=tag.attribute, op="ne", value=tag.avoid_value,
        hardness="soft", priority=c.priority or None,
    )


def compile_constraints_to_graph_query(ecs: EffectiveConstraintSet) -> GraphQuery:
    if not ecs.constraints:
        raise CompileError("cannot compile an empty constraint set")
    predicates: list[Predicate] = []
    preferences: list[Predicate] = []
    for c in ecs.constraints:
        if c.kind == "avoid":
            p = _avoid_predicate(c)
            if p is None:
                raise CompileError(f"constraint kind has no graph mapping: avoid({c.name})")
            preferences.append(p)
        elif _is_preference(c):
            preferences.append(_predicate_for(c))
        else:
            predicates.append(_predicate_for(c))
    return GraphQuery(predicates=tuple(predicates), preferences=tuple(preferences))


# ---------------------------------------------------------------------------
# threshold relaxation
# ---------------------------------------------------------------------------

def _relax_predicate(p: Predicate) -> tuple[Predicate, object, object]:
    """Widen one predicate's feasible set by 10% of its restrictive
    direction (upper bounds and radii x1.1, lower bounds x0.9 — a 0.9
    factor on a >=-threshold is the same move for similarity scores)."""
    if p.kind == "related_within":
        old = p.threshold
        new = old * 1.1
        return replace(p, threshold=new), old, new
    if p.op == "le":
        old = p.value
        new = old * 1.1
        return replace(p, value=new), old, new
    if p.op == "ge":
        old = p.value
        new = old * 0.9
        return replace(p, value=new), old, new
    if p.op == "between":
        old = p.value
        new = (old[0] * 0.9, old[1] * 1.1)
        return replace(p, value=new), old, new
    raise GraphQueryError(f"predicate op {p.op!r} is not relaxable")


def _has_numeric_threshold(p: Predicate) -> bool:
    if p.kind == "related_within":
        return p.threshold is not None
    if p.kind == "attribute_compare" and p.op in ("le", "ge", "between"):
        return isinstance(p.value, (int, float, tuple))
    return False


def relax_threshold(q: GraphQuery) -> GraphQuery:
    """Relax exactly one predicate: the least important soft thresholded
    one (largest priority rank; ties by position), falling back to the
    first hard distance/time predicate when no soft candidate exists."""
    soft = [
        (i, p) for i, p in enumerate(q.predicates)
        if p.hardness == "soft" and _has_numeric_threshold(p)
    ]
    if soft:
        idx, pred = max(soft, key=lambda t: (t[1].priority or 0, -t[0]))
    else:
        hard_spatial = [
            (i, p) for i, p in enumerate(q.predicates)
            if p.hardness == "hard" and p.kind == "related_within"
        ]
        if not hard_spatial:
            raise GraphQueryError("no relaxable predicate in query")
        idx, pred = hard_spatial[0]
    relaxed, old, new = _relax_predicate(pred)
    preds = list(q.predicates)
    preds[idx] = relaxed
    event = RelaxEvent(
        predicate_index=idx,
        description=f"{pred.attribute or pred.relation or pred.kind} {old} -> {new}",
        old_value=old,
        new_value=new,
    )
    return replace(q, predicates=tuple(preds), relaxations=q.relaxations + (event,))


def enrich_query(query: str, ecs: EffectiveConstraintSet) -> str:
    """The text the dense index actually sees: raw query plus a rendered
    form of the effective constraints, so carried-over preferences keep
    steering retrieval even when the turn's wording is terse."""
    rendered = render_constraint_text(ecs.constraints)
    if not rendered:
        return query
    return f"{query} {rendered}" if query else rendered


# ---------------------------------------------------------------------------
# the retriever
# ---------------------------------------------------------------------------

class Retriever:
    def __init__(
        self,
        kg: KnowledgeGraph,
        index: VectorIndex,
        k: int = 100,
        bundle_size: int = 20,
        rank_mode: str = "rerank",  # rerank | dense | backend
        dedup: bool = True,
    ):
        if rank_mode not in ("rerank", "dense", "backend"):
            raise ValueError(f"unknown rank mode: {rank_mode}")
        self.kg = kg
        self.index = index
        self.k = k
        self.bundle_size = bundle_size
        self.rank_mode = rank_mode
        self.dedup = dedup

    # -- ordering -----------------------------------------------------------

    def _order(self, query: str, raw_query: str, scored: list[ScoredDoc]) -> list[ScoredDoc]:
        if self.rank_mode == "rerank":
            return self.index.rerank(query, scored)
        if self.rank_mode == "backend":
            # rank by raw-query token overlap alone, the stand-in for
            # "let the generation backend pick from a big candidate pool"
            q_tokens = frozenset(tokenize(raw_query))
            def overlap(s: ScoredDoc) -> float:
                if not q_tokens:
                    return 0.0
                d = frozenset(tokenize(self.index.doc_text(s.doc_id) or ""))
                return len(q_tokens & d) / len(q_tokens)
            return sorted(scored, key=lambda s: (-overlap(s), s.doc_id))
        return scored

    def _prefer(self, scored: list[ScoredDoc], preferences: tuple[Predicate, ...]) -> list[ScoredDoc]:
        if not preferences:
            return scored
        def satisfies_all(pid: str) -> bool:
            node = self.kg.node(pid)
            for p in preferences:
                actual = node.attrs.get(p.attribute)
                ok = (actual == p.value) if p.op == "eq" else (actual != p.value)
                if not ok:
                    return False
            return True
        good = [s for s in scored if satisfies_all(s.doc_id)]
        rest = [s for s in scored if not satisfies_all(s.doc_id)]
        return good + rest

    # -- graph facts ---------------------------------------------------------

    def _facts_for(self, pid: str, ecs: EffectiveConstraintSet) -> tuple[GraphFact, ...]:
        listing = self.kg.listing(pid)
        if listing is None:
            return ()
        facts: list[GraphFact] = []
        seen: set[tuple] = set()

        def add(f: GraphFact) -> None:
            key = (f.relation, f.target_id)
            if key not in seen:
                seen.add(key)
                facts.append(f)

        for c in ecs.constraints:
            if c.kind == "district":
                d = self.kg.node(listing.district_id)
                if d is not None:
                    add(GraphFact("IN_DISTRICT", d.id, d.attrs.get("name", d.id)))
            elif c.kind == "region":
                d = self.kg.node(listing.district_id)
                if d is None:
                    continue
                region_id = str(d.attrs.get("region_id", ""))
                r = self.kg.node(region_id)
                if r is not None:
                    add(GraphFact("LOCATED_IN", r.id, r.attrs.get("name", r.id)))
            elif c.kind == "near_transit":
                best = self._nearest(listing, "Transit", c.name or None)
                if best is not None:
                    node, dist = best
                    add(GraphFact("NEAR_SUBWAY", node.id, node.attrs.get("name", node.id), round(dist, 1), "m"))
            elif c.kind == "commute":
                best = self._nearest(listing, "Region", c.name)
                if best is not None:
                    node, dist = best
                    minutes = dist / WALK_SPEED_M_PER_MIN
                    add(GraphFact("COMMUTE", node.id, node.attrs.get("name", node.id), round(minutes, 1), "min"))
            elif c.kind == "school_district":
                best = self._nearest(listing, "School", c.name)
                if best is not None:
                    node, dist = best
                    add(GraphFact("SERVED_BY_SCHOOL", node.id, node.attrs.get("name", node.id), round(dist, 1), "m"))
        return tuple(facts)

    def _nearest(self, listing, label: str, name: Optional[str]):
        nodes = self.kg.nodes_matching(label, name)
        best = None
        best_d = None
        for nid in nodes:
            node = self.kg.node(nid)
            d = geodesic_distance((listing.lat, listing.lon), (node.attrs["lat"], node.attrs["lon"]))
            if best_d is None or d < best_d or (d == best_d and nid < best.id):
                best, best_d = node, d
        return (best, best_d) if best is not None else None

    def _items(self, scored: Sequence[ScoredDoc], ecs: Optional[EffectiveConstraintSet]) -> tuple[EvidenceItem, ...]:
        items = []
        for s in scored[: self.bundle_size]:
            listing = self.kg.listing(s.doc_id)
            fields = listing.to_dict() if listing else {}
            if listing is not None:
                d = self.kg.node(listing.district_id)
                if d is not None:
                    fields["district_name"] = d.attrs.get("name", d.id)
                    r = self.kg.node(str(d.attrs.get("region_id", "")))
                    if r is not None:
                        fields["region_name"] = r.attrs.get("name", r.id)
            items.append(
                EvidenceItem(
                    property_id=s.doc_id,
                    dense_score=s.score,
                    doc_text=self.index.doc_text(s.doc_id) or "",
                    fields=fields,
                    graph_facts=self._facts_for(s.doc_id, ecs) if ecs else (),
                )
            )
        return tuple(items)

    # -- entry points ---------------------------------------------------------

    def retrieve(
        self,
        query: str,
        ecs: EffectiveConstraintSet,
        route: str,
        retrieval_memory=None,
        now: float = 0.0,
        graph_query: Optional[GraphQuery] = None,
    ) -> EvidenceBundle:
        """One retrieval pass.  ``graph_query`` overrides compilation (the
        remediation loop passes a relaxed query back through here)."""
        enriched = enrich_query(query, ecs)
        scored = self.index.search(enriched, self.k)

        trace: Optional[GraphQuery] = None
        route_used = "dense"
        if route == "graph" and (ecs.constraints or graph_query is not None):
            trace = graph_query if graph_query is not None else compile_constraints_to_graph_query(ecs)
            keep = set(execute_graph_query(self.kg, trace, [s.doc_id for s in scored]))
            scored = [s for s in scored if s.doc_id in keep]
            route_used = "graph"

        if self.dedup and retrieval_memory is not None:
            fresh = set(retrieval_memory.filter_recent([s.doc_id for s in scored], now))
            scored = [s for s in scored if s.doc_id in fresh]

        scored = self._order(enriched, query, scored)
        if trace is not None and trace.preferences:
            scored = self._prefer(scored, trace.preferences)
        return EvidenceBundle(
            items=self._items(scored, ecs),
            route_used=route_used,
            query_trace=trace,
        )

    def retrieve_by_entity(self, e_miss: str) -> EvidenceBundle:
        """Entity-centered lookup: normalized KB name match first, dense
        search on the name as fallback."""
        matches = self.kg.nodes_matching("Property", e_miss)
        if matches:
            scored = [ScoredDoc(pid, 1.0) for pid in matches]
            return EvidenceBundle(items=self._items(scored, None), route_used="graph")
        scored = self.index.search(e_miss, self.bundle_size)
        # a dense fallback only counts as resolution if some hit actually
        # carries the requested name
        target = normalize_name(e_miss)
        resolved = [
            s for s in scored
            if (l := self.kg.listing(s.doc_id)) is not None and normalize_name(l.name) == target
        ]
        if resolved:
            return EvidenceBundle(items=self._items(resolved, None), route_used="dense")
        return EvidenceBundle(items=(), route_used="dense", unresolved_entity=e_miss)


def merge_bundles(base: EvidenceBundle, extra: EvidenceBundle) -> EvidenceBundle:
    """Append ``extra``'s novel items to ``base`` (evidence enrichment during
    remediation); keeps base's route/trace."""
    seen = {i.property_id for i in base.items}
    merged = list(base.items) + [i for i in extra.items if i.property_id not in seen]
    return replace(base, items=tuple(merged), unresolved_entity=extra.unresolved_entity)
