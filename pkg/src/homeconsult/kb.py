"""Property corpus ingestion and an immutable typed knowledge graph.

The graph holds five node labels (Property, Region, Transit, School,
District) and five edge relations (LOCATED_IN, NEAR_SUBWAY,
SERVED_BY_SCHOOL, IN_DISTRICT, ADJACENT_TO).  Once built by
:func:`ingest_corpus` a graph never changes, so any number of readers may
share it and repeated queries return bit-identical results.

Distance semantics
------------------
All distances are great-circle distances on a sphere of radius
6,371,000 m.  NEAR_SUBWAY and SERVED_BY_SCHOOL edges are materialized at
ingest time for pairs within the configured radii; they carry
``distance_m`` (and ``walk_minutes`` for transit) and serve as provenance.
Distance/time predicates in queries are evaluated directly against node
coordinates, so thresholds larger than the materialization radius still
behave monotonically.  Walk time is distance at 80 m per minute unless an
edge supplies an explicit ``walk_minutes``.

Queries are structured values (:class:`GraphQuery`), not a text query
language: a conjunction of typed predicates anchored at Property nodes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional, Sequence

EARTH_RADIUS_M = 6_371_000.0
WALK_SPEED_M_PER_MIN = 80.0

NODE_LABELS = frozenset({"Property", "Region", "Transit", "School", "District"})
RELATIONS = frozenset(
    {"LOCATED_IN", "NEAR_SUBWAY", "SERVED_BY_SCHOOL", "IN_DISTRICT", "ADJACENT_TO"}
)

PREDICATE_KINDS = ("attribute_compare", "related_node_exists", "related_within")


class CorpusError(ValueError):
    """Raised when listings or amenity records violate the ingest contract."""


class GraphQueryError(ValueError):
    """Raised for malformed queries (e.g. a relation outside the closed set)."""


def geodesic_distance(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Great-circle distance in meters between (lat, lon) pairs (haversine)."""
    lat1, lon1 = math.radians(a[0]), math.radians(a[1])
    lat2, lon2 = math.radians(b[0]), math.radians(b[1])
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    h = math.sin(dlat / 2.0) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def normalize_name(name: str) -> str:
    """Case/space-insensitive key used for node-name matching."""
    return " ".join(str(name).replace("-", " ").replace("_", " ").lower().split())


@dataclass(frozen=True)
class PropertyListing:
    """One sale listing. ``attributes`` holds free-form typed extras
    (year_built, has_elevator, noisy_area, decoration, ...)."""

    id: str
    name: str
    price_total: int
    price_per_sqm: float
    bedrooms: int
    area: float
    lat: float
    lon: float
    district_id: str
    attributes: Mapping[str, object] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "name": self.name,
            "price_total": self.price_total,
            "price_per_sqm": self.price_per_sqm,
            "bedrooms": self.bedrooms,
            "area": self.area,
            "lat": self.lat,
            "lon": self.lon,
            "district_id": self.district_id,
            "attributes": dict(self.attributes),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "PropertyListing":
        return cls(
            id=str(d["id"]),
            name=str(d["name"]),
            price_total=int(d["price_total"]),
            price_per_sqm=float(d["price_per_sqm"]),
            bedrooms=int(d["bedrooms"]),
            area=float(d["area"]),
            lat=float(d["lat"]),
            lon=float(d["lon"]),
            district_id=str(d["district_id"]),
            attributes=dict(d.get("attributes", {})),
        )


@dataclass(frozen=True)
class GraphNode:
    id: str
    label: str
    attrs: Mapping[str, object] = field(default_factory=dict)


@dataclass(frozen=True)
class GraphEdge:
    src: str
    dst: str
    relation: str
    attrs: Mapping[str, object] = field(default_factory=dict)


@dataclass(frozen=True)
class Predicate:
    """One conjunct of a :class:`GraphQuery`.

    kind:
      * ``attribute_compare``: compare a property field/attribute against
        ``value`` with ``op`` in {le, ge, eq, ne, between}.
      * ``related_node_exists``: an edge of ``relation`` to a node matching
        (``target_label``, ``target_name``) exists.
      * ``related_within``: the nearest matching target node lies within
        ``threshold`` (unit ``m`` for meters, ``min`` for walk minutes).
        ``relation=None`` means a plain computed walk-time/distance check
        (used for commute-style constraints with no materialized edges).
    """

    kind: str
    attribute: Optional[str] = None
    op: Optional[str] = None
    value: object = None
    relation: Optional[str] = None
    target_label: Optional[str] = None
    target_name: Optional[str] = None
    threshold: Optional[float] = None
    unit: Optional[str] = None
    hardness: str = "hard"
    priority: Optional[int] = None

    def to_dict(self) -> dict:
        d = {
            "kind": self.kind,
            "attribute": self.attribute,
            "op": self.op,
            "value": list(self.value) if isinstance(self.value, tuple) else self.value,
            "relation": self.relation,
            "target_label": self.target_label,
            "target_name": self.target_name,
            "threshold": self.threshold,
            "unit": self.unit,
            "hardness": self.hardness,
            "priority": self.priority,
        }
        return d


@dataclass(frozen=True)
class RelaxEvent:
    """Record of one threshold relaxation applied to a query."""

    predicate_index: int
    description: str
    old_value: object
    new_value: object

    def to_dict(self) -> dict:
        return {
            "predicate_index": self.predicate_index,
            "description": self.description,
            "old_value": list(self.old_value) if isinstance(self.old_value, tuple) else self.old_value,
            "new_value": list(self.new_value) if isinstance(self.new_value, tuple) else self.new_value,
        }


@dataclass(frozen=True)
class GraphQuery:
    """Conjunctive filter over Property nodes, order-preserving over the
    candidate list it is executed against.

    ``preferences`` ride along without filtering: they are soft boolean
    predicates (tag aversions, feature preferences) that the retrieval layer
    uses for ordering, never for exclusion.
    """

    predicates: tuple[Predicate, ...]
    anchor_label: str = "Property"
    limit: int = 0
    relaxations: tuple[RelaxEvent, ...] = ()
    preferences: tuple[Predicate, ...] = ()

    def to_dict(self) -> dict:
        return {
            "anchor_label": self.anchor_label,
            "limit": self.limit,
            "predicates": [p.to_dict() for p in self.predicates],
            "relaxations": [r.to_dict() for r in self.relaxations],
            "preferences": [p.to_dict() for p in self.preferences],
        }


@dataclass(frozen=True)
class IngestConfig:
    subway_radius_m: float = 1000.0
    school_radius_m: float = 1500.0
    # lat_min, lat_max, lon_min, lon_max
    bbox: tuple[float, float, float, float] = (39.4, 40.4, 115.8, 117.2)
    enforce_bbox: bool = True


class KnowledgeGraph:
    """Immutable after construction; built only via :func:`ingest_corpus`."""

    def __init__(
        self,
        nodes: dict[str, GraphNode],
        edges: list[GraphEdge],
        listings: dict[str, PropertyListing],
        config: IngestConfig,
    ):
        self._nodes = nodes
        self._edges = tuple(edges)
        self._listings = listings
        self._config = config
        self._out: dict[tuple[str, str], tuple[GraphEdge, ...]] = {}
        out_build: dict[tuple[str, str], list[GraphEdge]] = {}
        for e in edges:
            out_build.setdefault((e.src, e.relation), []).append(e)
        self._out = {k: tuple(v) for k, v in out_build.items()}
        # name indexes, one per label, plus a Transit line index
        self._by_name: dict[tuple[str, str], tuple[str, ...]] = {}
        by_name_build: dict[tuple[str, str], list[str]] = {}
        line_build: dict[str, list[str]] = {}
        for n in nodes.values():
            nm = n.attrs.get("name")
            if nm is not None:
                by_name_build.setdefault((n.label, normalize_name(str(nm))), []).append(n.id)
            if n.label == "Transit":
                ln = n.attrs.get("line")
                if ln is not None:
                    line_build.setdefault(normalize_name(str(ln)), []).append(n.id)
        self._by_name = {k: tuple(sorted(v)) for k, v in by_name_build.items()}
        self._by_line = {k: tuple(sorted(v)) for k, v in line_build.items()}

    # -- read-only views -------------------------------------------------
    @property
    def config(self) -> IngestConfig:
        return self._config

    def node(self, node_id: str) -> Optional[GraphNode]:
        return self._nodes.get(node_id)

    def listing(self, prop_id: str) -> Optional[PropertyListing]:
        return self._listings.get(prop_id)

    def listings(self) -> tuple[PropertyListing, ...]:
        return tuple(self._listings[k] for k in sorted(self._listings))

    def property_ids(self) -> tuple[str, ...]:
        return tuple(sorted(self._listings))

    def neighbors(self, src: str, relation: str) -> tuple[GraphEdge, ...]:
        return self._out.get((src, relation), ())

    def nodes_matching(self, label: str, name: Optional[str]) -> tuple[str, ...]:
        """Node ids of ``label`` whose name (or, for Transit, line) matches."""
        if name is None:
            return tuple(sorted(n.id for n in self._nodes.values() if n.label == label))
        key = normalize_name(name)
        ids = list(self._by_name.get((label, key), ()))
        if label == "Transit":
            for nid in self._by_line.get(key, ()):
                if nid not in ids:
                    ids.append(nid)
        return tuple(sorted(ids))

    def stats(self) -> dict:
        nodes: dict[str, int] = {}
        for n in self._nodes.values():
            nodes[n.label] = nodes.get(n.label, 0) + 1
        edges: dict[str, int] = {}
        for e in self._edges:
            edges[e.relation] = edges.get(e.relation, 0) + 1
        return {
            "nodes": dict(sorted(nodes.items())),
            "edges": dict(sorted(edges.items())),
            "node_total": len(self._nodes),
            "edge_total": len(self._edges),
        }


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise CorpusError(msg)


def _validate_listing(l: PropertyListing, cfg: IngestConfig) -> None:
    _require(l.price_total > 0, f"listing {l.id}: price_total must be positive")
    _require(l.area > 0, f"listing {l.id}: area must be positive")
    _require(l.bedrooms >= 0, f"listing {l.id}: bedrooms must be >= 0")
    if cfg.enforce_bbox:
        lat_min, lat_max, lon_min, lon_max = cfg.bbox
        _require(
            lat_min <= l.lat <= lat_max and lon_min <= l.lon <= lon_max,
            f"listing {l.id}: coordinates ({l.lat}, {l.lon}) outside configured bbox",
        )


def ingest_corpus(
    listings: Sequence[PropertyListing],
    amenities: Sequence[Mapping],
    cfg: IngestConfig | None = None,
) -> KnowledgeGraph:
    """Build the knowledge graph from listings plus amenity records.

    Amenity records are dicts with a ``kind`` key:
      * ``region``:   id, name, lat, lon
      * ``district``: id, name, region_id, lat, lon
      * ``station``:  id, name, line, lat, lon
      * ``school``:   id, name, lat, lon
      * ``adjacency``: src_district, dst_district (edges added both ways)

    Raises :class:`CorpusError` on duplicate ids, dangling district/region
    references, or listings violating their invariants.
    """
    cfg = cfg or IngestConfig()

    nodes: dict[str, GraphNode] = {}
    edges: list[GraphEdge] = []
    listing_index: dict[str, PropertyListing] = {}

    regions: dict[str, Mapping] = {}
    districts: dict[str, Mapping] = {}
    stations: list[Mapping] = []
    schools: list[Mapping] = []
    adjacency: list[Mapping] = []

    for rec in amenities:
        kind = rec.get("kind")
        if kind == "region":
            regions[str(rec["id"])] = rec
        elif kind == "district":
            districts[str(rec["id"])] = rec
        elif kind == "station":
            stations.append(rec)
        elif kind == "school":
            schools.append(rec)
        elif kind == "adjacency":
            adjacency.append(rec)
        else:
            raise CorpusError(f"unknown amenity kind: {kind!r}")

    def add_node(node: GraphNode) -> None:
        _require(node.id not in nodes, f"duplicate node id: {node.id}")
        nodes[node.id] = node

    for rid, rec in regions.items():
        add_node(GraphNode(rid, "Region", {"name": rec["name"], "lat": rec.get("lat"), "lon": rec.get("lon")}))
    for did, rec in districts.items():
        region_id = str(rec["region_id"])
        _require(region_id in regions, f"district {did}: unknown region_id {region_id}")
        add_node(
            GraphNode(
                did,
                "District",
                {"name": rec["name"], "region_id": region_id, "lat": rec.get("lat"), "lon": rec.get("lon")},
            )
        )
    for rec in stations:
        add_node(
            GraphNode(
                str(rec["id"]),
                "Transit",
                {"name": rec["name"], "line": rec["line"], "lat": float(rec["lat"]), "lon": float(rec["lon"])},
            )
        )
    for rec in schools:
        add_node(
            GraphNode(
                str(rec["id"]),
                "School",
                {"name": rec["name"], "lat": float(rec["lat"]), "lon": float(rec["lon"])},
            )
        )

    for rec in adjacency:
        a, b = str(rec["src_district"]), str(rec["dst_district"])
        _require(a in districts, f"adjacency references unknown district {a}")
        _require(b in districts, f"adjacency references unknown district {b}")
        edges.append(GraphEdge(a, b, "ADJACENT_TO"))
        edges.append(GraphEdge(b, a, "ADJACENT_TO"))

    # coarse bounding-box prefilter bounds for the radius joins
    def _prefilter_bounds(radius_m: float, lat_abs_max: float) -> tuple[float, float]:
        dlat = math.degrees(radius_m / EARTH_RADIUS_M) * 1.01
        dlon = math.degrees(radius_m / (EARTH_RADIUS_M * max(0.05, math.cos(math.radians(lat_abs_max))))) * 1.01
        return dlat, dlon

    lat_abs_max = max((abs(float(s["lat"])) for s in stations + schools), default=60.0)
    lat_abs_max = max(lat_abs_max, max((abs(l.lat) for l in listings), default=0.0))
    st_dlat, st_dlon = _prefilter_bounds(cfg.subway_radius_m, lat_abs_max)
    sc_dlat, sc_dlon = _prefilter_bounds(cfg.school_radius_m, lat_abs_max)

    for l in listings:
        _require(l.id not in listing_index, f"duplicate listing id: {l.id}")
        _validate_listing(l, cfg)
        _require(
            l.district_id in districts,
            f"listing {l.id}: unknown district_id {l.district_id}",
        )
        listing_index[l.id] = l
        attrs = {
            "name": l.name,
            "price_total": l.price_total,
            "price_per_sqm": l.price_per_sqm,
            "bedrooms": l.bedrooms,
            "area": l.area,
            "lat": l.lat,
            "lon": l.lon,
            "district_id": l.district_id,
        }
        attrs.update(l.attributes)
        add_node(GraphNode(l.id, "Property", attrs))

        district = districts[l.district_id]
        region_id = str(district["region_id"])
        edges.append(GraphEdge(l.id, l.district_id, "IN_DISTRICT"))
        edges.append(GraphEdge(l.id, region_id, "LOCATED_IN"))

        for st in stations:
            slat, slon = float(st["lat"]), float(st["lon"])
            if abs(slat - l.lat) > st_dlat or abs(slon - l.lon) > st_dlon:
                continue
            d = geodesic_distance((l.lat, l.lon), (slat, slon))
            if d <= cfg.subway_radius_m:
                edges.append(
                    GraphEdge(
                        l.id,
                        str(st["id"]),
                        "NEAR_SUBWAY",
                        {"distance_m": d, "walk_minutes": d / WALK_SPEED_M_PER_MIN},
                    )
                )
        for sc in schools:
            slat, slon = float(sc["lat"]), float(sc["lon"])
            if abs(slat - l.lat) > sc_dlat or abs(slon - l.lon) > sc_dlon:
                continue
            d = geodesic_distance((l.lat, l.lon), (slat, slon))
            if d <= cfg.school_radius_m:
                edges.append(GraphEdge(l.id, str(sc["id"]), "SERVED_BY_SCHOOL", {"distance_m": d}))

    return KnowledgeGraph(nodes, edges, listing_index, cfg)


# ---------------------------------------------------------------------------
# query execution
# ---------------------------------------------------------------------------

_NUMERIC_FIELDS = {"price_total", "price_per_sqm", "bedrooms", "area"}


def _listing_value(g: KnowledgeGraph, prop_id: str, attribute: str):
    node = g.node(prop_id)
    if node is None:
        return None
    return node.attrs.get(attribute)


def _compare(actual, op: str, expected) -> bool:
    if op == "between":
        if actual is None:
            return False
        lo, hi = expected
        try:
            return float(lo) <= float(actual) <= float(hi)
        except (TypeError, ValueError):
            return False
    if op == "eq":
        if actual is None:
            return False
        if isinstance(expected, bool) or isinstance(actual, bool):
            return bool(actual) == bool(expected)
        if isinstance(expected, (int, float)) and isinstance(actual, (int, float)):
            return float(actual) == float(expected)
        return normalize_name(str(actual)) == normalize_name(str(expected))
    if op == "ne":
        if actual is None:
            return True
        if isinstance(expected, bool) or isinstance(actual, bool):
            return bool(actual) != bool(expected)
        if isinstance(expected, (int, float)) and isinstance(actual, (int, float)):
            return float(actual) != float(expected)
        return normalize_name(str(actual)) != normalize_name(str(expected))
    if actual is None:
        return False
    try:
        a, e = float(actual), float(expected)
    except (TypeError, ValueError):
        return False
    if op == "le":
        return a <= e
    if op == "ge":
        return a >= e
    raise GraphQueryError(f"unknown comparison op: {op!r}")


def _min_distance_to_targets(g: KnowledgeGraph, prop: GraphNode, target_ids: Sequence[str]) -> Optional[float]:
    plat, plon = prop.attrs.get("lat"), prop.attrs.get("lon")
    if plat is None or plon is None:
        return None
    best: Optional[float] = None
    for tid in target_ids:
        t = g.node(tid)
        if t is None:
            continue
        tlat, tlon = t.attrs.get("lat"), t.attrs.get("lon")
        if tlat is None or tlon is None:
            continue
        d = geodesic_distance((float(plat), float(plon)), (float(tlat), float(tlon)))
        if best is None or d < best:
            best = d
    return best


def _eval_predicate(g: KnowledgeGraph, prop_id: str, pred: Predicate) -> bool:
    if pred.kind == "attribute_compare":
        actual = _listing_value(g, prop_id, pred.attribute or "")
        return _compare(actual, pred.op or "eq", pred.value)

    if pred.relation is not None and pred.relation not in RELATIONS:
        raise GraphQueryError(f"unknown relation: {pred.relation!r}")

    if pred.kind == "related_node_exists":
        if pred.relation is None:
            raise GraphQueryError("related_node_exists requires a relation")
        targets = set(g.nodes_matching(pred.target_label or "", pred.target_name))
        if not targets:
            return False
        return any(e.dst in targets for e in g.neighbors(prop_id, pred.relation))

    if pred.kind == "related_within":
        if pred.threshold is None:
            raise GraphQueryError("related_within requires a threshold")
        prop = g.node(prop_id)
        if prop is None:
            return False
        target_ids = g.nodes_matching(pred.target_label or "", pred.target_name)
        if not target_ids:
            return False
        d = _min_distance_to_targets(g, prop, target_ids)
        if d is None:
            return False
        if pred.unit == "min":
            return (d / WALK_SPEED_M_PER_MIN) <= float(pred.threshold)
        return d <= float(pred.threshold)

    raise GraphQueryError(f"unknown predicate kind: {pred.kind!r}")


def execute_graph_query(
    g: KnowledgeGraph, q: GraphQuery, candidates: Sequence[str]
) -> list[str]:
    """Filter ``candidates`` (order preserved) down to properties satisfying
    every predicate of ``q`` (hard and not-yet-relaxed soft alike; relaxed
    predicates are already rewritten with their widened thresholds)."""
    if q.anchor_label != "Property":
        raise GraphQueryError(f"unsupported anchor label: {q.anchor_label!r}")
    for p in q.predicates:
        if p.kind not in PREDICATE_KINDS:
            raise GraphQueryError(f"unknown predicate kind: {p.kind!r}")
        if p.relation is not None and p.relation not in RELATIONS:
            raise GraphQueryError(f"unknown relation: {p.relation!r}")
    out: list[str] = []
    for cid in candidates:
        if g.listing(cid) is None:
            continue
        if all(_eval_predicate(g, cid, p) for p in q.predicates):
            out.append(cid)
            if q.limit and len(out) >= q.limit:
                break
    return out


# ---------------------------------------------------------------------------
# file I/O (JSON Lines)
# ---------------------------------------------------------------------------

def load_listings(path: str) -> list[PropertyListing]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(PropertyListing.from_dict(json.loads(line)))
    return out


def load_amenities(path: str) -> list[dict]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def dump_jsonl(path: str, records: Iterable[Mapping]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
