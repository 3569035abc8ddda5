"""Gold labeling by brute-force scan over the raw corpus records.

This is the benchmark's ground truth and is deliberately written against
listing/amenity dicts rather than the knowledge graph, so a bug in graph
construction or query execution cannot leak into the labels.  Spatial
semantics (great-circle distance, 80 m/min walking pace) are re-stated
here from first principles with an independently coded haversine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

EARTH_RADIUS_M = 6_371_000.0
WALK_M_PER_MIN = 80.0
DEFAULT_TRANSIT_RADIUS_M = 1000.0


def haversine_m(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.atan2(math.sqrt(a), math.sqrt(1 - a))


def _norm(s) -> str:
    return " ".join(str(s).replace("-", " ").replace("_", " ").lower().split())


@dataclass(frozen=True)
class OracleConfig:
    school_radius_m: float = 4500.0
    transit_radius_m: float = DEFAULT_TRANSIT_RADIUS_M


class CorpusView:
    """Amenity lookups for the scan, built once per corpus."""

    def __init__(self, listings: Sequence[Mapping], amenities: Sequence[Mapping]):
        self.listings = list(listings)
        self.district_name: dict[str, str] = {}
        self.district_region: dict[str, str] = {}
        self.region_name: dict[str, str] = {}
        self.region_coord: dict[str, tuple[float, float]] = {}
        self.stations: list[tuple[str, float, float]] = []  # (line, lat, lon)
        self.schools: dict[str, tuple[float, float]] = {}  # normalized name
        for rec in amenities:
            kind = rec.get("kind")
            if kind == "region":
                self.region_name[str(rec["id"])] = str(rec["name"])
                self.region_coord[_norm(rec["name"])] = (float(rec["lat"]), float(rec["lon"]))
            elif kind == "district":
                self.district_name[str(rec["id"])] = str(rec["name"])
                self.district_region[str(rec["id"])] = str(rec["region_id"])
            elif kind == "station":
                self.stations.append((_norm(rec["line"]), float(rec["lat"]), float(rec["lon"])))
            elif kind == "school":
                self.schools[_norm(rec["name"])] = (float(rec["lat"]), float(rec["lon"]))

    def region_of(self, district_id: str) -> str:
        rid = self.district_region.get(district_id, "")
        return self.region_name.get(rid, "")


def _min_station_distance(view: CorpusView, lat: float, lon: float, line: Optional[str]) -> Optional[float]:
    want = _norm(line) if line else None
    best: Optional[float] = None
    for ln, slat, slon in view.stations:
        if want is not None and ln != want:
            continue
        d = haversine_m(lat, lon, slat, slon)
        if best is None or d < best:
            best = d
    return best


def satisfies(listing: Mapping, c, view: CorpusView, cfg: OracleConfig = OracleConfig()) -> bool:
    """Does one listing record satisfy one constraint?  ``c`` is anything
    with the constraint fields (dataclass or attribute bag)."""
    kind = c.kind
    attrs = listing.get("attributes", {})
    if kind == "budget_max":
        return float(listing["price_total"]) <= float(c.value)
    if kind == "budget_range":
        return float(c.low) <= float(listing["price_total"]) <= float(c.high)
    if kind == "bedrooms":
        return int(listing["bedrooms"]) == int(c.value)
    if kind == "area_min":
        return float(listing["area"]) >= float(c.value)
    if kind == "district":
        return _norm(view.district_name.get(str(listing["district_id"]), "")) == _norm(c.name)
    if kind == "region":
        return _norm(view.region_of(str(listing["district_id"]))) == _norm(c.name)
    if kind == "near_transit":
        d = _min_station_distance(view, float(listing["lat"]), float(listing["lon"]), c.name or None)
        limit = c.max_distance_m if c.max_distance_m is not None else cfg.transit_radius_m
        return d is not None and d <= float(limit)
    if kind == "commute":
        anchor = view.region_coord.get(_norm(c.name))
        if anchor is None:
            return False
        d = haversine_m(float(listing["lat"]), float(listing["lon"]), anchor[0], anchor[1])
        return (d / WALK_M_PER_MIN) <= float(c.max_minutes)
    if kind == "school_district":
        coord = view.schools.get(_norm(c.name))
        if coord is None:
            return False
        d = haversine_m(float(listing["lat"]), float(listing["lon"]), coord[0], coord[1])
        return d <= cfg.school_radius_m
    if kind == "attribute_equals":
        actual = attrs.get(c.name)
        expected = c.attr_value
        if isinstance(expected, bool) or isinstance(actual, bool):
            return bool(actual) == bool(expected)
        return _norm(actual) == _norm(expected)
    if kind == "avoid":
        # an avoid is satisfied when the disliked trait is absent; the tag
        # vocabulary is small enough to restate here
        tag_attr = {
            "noisy_area": ("noisy_area", True),
            "quiet": ("noisy_area", False),
            "garden": ("garden", True),
            "has_elevator": ("has_elevator", True),
            "ground_floor": ("ground_floor", True),
            "renovated": ("decoration", "renovated"),
        }.get(c.name)
        if tag_attr is None:
            return True
        attr, avoided = tag_attr
        actual = attrs.get(attr)
        if isinstance(avoided, bool) or isinstance(actual, bool):
            return bool(actual) != bool(avoided)
        return _norm(actual) != _norm(avoided)
    raise ValueError(f"oracle cannot evaluate constraint kind {kind!r}")


def satisfying_ids(
    view: CorpusView, constraints: Iterable, cfg: OracleConfig = OracleConfig()
) -> list[str]:
    """Ids of listings satisfying every given constraint, corpus order."""
    cs = list(constraints)
    out = []
    for l in view.listings:
        if all(satisfies(l, c, view, cfg) for c in cs):
            out.append(str(l["id"]))
    return out


def grade_map(
    view: CorpusView,
    hard: Sequence,
    soft: Sequence,
    cfg: OracleConfig = OracleConfig(),
) -> dict[str, int]:
    """2 = hard and soft both satisfied, 1 = hard only, 0 otherwise
    (grade-0 entries are omitted)."""
    grades: dict[str, int] = {}
    for l in view.listings:
        if not all(satisfies(l, c, view, cfg) for c in hard):
            continue
        pid = str(l["id"])
        grades[pid] = 2 if all(satisfies(l, c, view, cfg) for c in soft) else 1
    return grades
