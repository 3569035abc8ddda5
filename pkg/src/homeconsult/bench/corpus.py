"""Seeded synthetic city generator.

Layout: 60 districts on a 10x6 grid of 3 km cells around (39.90, 116.40),
grouped column-wise into 5 regions of 12 districts.  Stations and schools
sit near district centers; properties scatter around their district center
with ~700 m spread.  All counts and spreads are calibrated so that, at the
default scale, the knowledge graph's edge/node ratio lands near the
production system's (~7.5) and the relational constraints used by the
scenario generator select 10-18% of the corpus.

Everything is drawn from one ``numpy`` generator seeded by the caller, so
identical seeds give bit-identical corpus files.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from ..kb import IngestConfig, PropertyListing, dump_jsonl

# grid geometry
CITY_LAT = 39.90
CITY_LON = 116.40
GRID_COLS = 10
GRID_ROWS = 6
CELL_KM = 3.0
KM_PER_DEG_LAT = 111.32
KM_PER_DEG_LON = KM_PER_DEG_LAT * math.cos(math.radians(CITY_LAT))

N_LINES = 12
STATIONS_PER_LINE = 16
N_SCHOOLS = 24
PROP_SPREAD_M = 700.0
AMENITY_SPREAD_M = 300.0

#: Graph build settings the benchmark uses everywhere (the school catchment
#: is deliberately wide so a single school serves a realistic slice of the
#: city rather than one grid cell).
BENCH_INGEST = IngestConfig(subway_radius_m=1000.0, school_radius_m=4500.0)

REGION_NAMES = ["Westside", "Northside", "CBD", "Southside", "Eastside"]

DISTRICT_NAMES = [
    "Crestwood", "Riverside", "Lakeview", "Westbrook", "Harborview",
    "Midtown", "Eastfield", "Greenhill", "Sunnyvale", "Brookside",
    "Stonebridge", "Maplewood", "Oakridge", "Pinehurst", "Cedarvale",
    "Elmhurst", "Birchwood", "Willowdale", "Ashford", "Claymont",
    "Dunmore", "Fairview", "Glenbrook", "Hazelton", "Ivydale",
    "Kingsley", "Larchmont", "Moorfield", "Norwood", "Oldbury",
    "Parkdale", "Quarrington", "Redfern", "Silverlake", "Thornbury",
    "Underhill", "Valemont", "Wexford", "Yarrow", "Zephyr",
    "Ambleside", "Bexley", "Coleridge", "Dartmouth", "Edgewater",
    "Ferndale", "Gladstone", "Hollowell", "Inglewood", "Jessfield",
    "Kenwood", "Lynnwood", "Marlowe", "Newhaven", "Ockley",
    "Pembroke", "Rosedale", "Saxonhill", "Tilbury", "Ulverston",
]

NAME_SUFFIXES = [
    "Gardens", "Court", "Residences", "Heights", "Park",
    "Towers", "Manor", "Villas", "Plaza", "Mews",
]

# property-name word bank; deliberately disjoint from district, region and
# school names so a property name never reads as a location constraint
NAME_WORDS = [
    "Amber", "Aspen", "Aurora", "Bayberry", "Beacon", "Bellflower", "Birchall",
    "Bluebell", "Bramble", "Briar", "Bronte", "Cadence", "Camellia", "Caspian",
    "Cavendish", "Celadon", "Chesterton", "Cinnabar", "Citrine", "Clover",
    "Cobalt", "Copperfield", "Coral", "Cordelia", "Crane", "Crimson", "Damson",
    "Dovetail", "Drummond", "Dunbar", "Eider", "Elderberry", "Ellington",
    "Ember", "Emerald", "Evergreen", "Fairbanks", "Fennel", "Finch", "Foxglove",
    "Galloway", "Garnet", "Ginger", "Goldcrest", "Greystone", "Halcyon",
    "Harrier", "Hawthorn", "Hazelmere", "Heron", "Hickory", "Holloway",
    "Honeysuckle", "Ibis", "Indigo", "Ironwood", "Jacaranda", "Jasmine",
    "Jasper", "Juniper", "Kestrel", "Kingfisher", "Lantern", "Larkspur",
    "Lavender", "Linden", "Magnolia", "Mallard", "Marigold", "Meridian",
    "Mistral", "Monarch", "Moonstone", "Mulberry", "Nightingale", "Nutmeg",
    "Obsidian", "Olive", "Onyx", "Opal", "Orchid", "Osprey", "Paloma",
    "Peregrine", "Pimlico", "Plover", "Primrose", "Quince", "Raven",
    "Redwood", "Regent", "Rosemary", "Rowan", "Saffron", "Sandpiper",
    "Sapphire", "Seabrook", "Sequoia", "Sheffield", "Sorrel", "Sparrow",
    "Starling", "Sterling", "Sycamore", "Tamarind", "Tanager", "Teasel",
    "Thistle", "Topaz", "Tremont", "Trillium", "Tulip", "Vermilion",
    "Veronica", "Vesper", "Violet", "Wagtail", "Walnut", "Warbler",
    "Whitfield", "Wisteria", "Woodruff", "Wren", "Yewtree", "Zinnia",
]

SCHOOL_WORDS = [
    "Kingsgrove", "Harrowgate", "Allerton", "Bowmont", "Carrick", "Denholm",
    "Eastwick", "Farleigh", "Granby", "Heathcote", "Islington", "Jericho",
    "Keswick", "Lambourne", "Milford", "Nethercott", "Orwell", "Pickering",
    "Queensbury", "Rutherford", "Stanhope", "Thackeray", "Uxbridge", "Verwood",
]

REGION_PPSQM = {
    "Westside": 42_000.0,
    "Northside": 52_000.0,
    "CBD": 78_000.0,
    "Southside": 48_000.0,
    "Eastside": 38_000.0,
}

_ROMAN = ["", " II", " III", " IV", " V"]


def _cell_center(col: int, row: int) -> tuple[float, float]:
    x_km = (col - (GRID_COLS - 1) / 2.0) * CELL_KM
    y_km = (row - (GRID_ROWS - 1) / 2.0) * CELL_KM
    return CITY_LAT + y_km / KM_PER_DEG_LAT, CITY_LON + x_km / KM_PER_DEG_LON


def _jitter(rng: np.random.Generator, lat: float, lon: float, spread_m: float) -> tuple[float, float]:
    dy, dx = rng.normal(0.0, spread_m, size=2)
    return (
        round(lat + (dy / 1000.0) / KM_PER_DEG_LAT, 6),
        round(lon + (dx / 1000.0) / KM_PER_DEG_LON, 6),
    )


def property_name(k: int) -> str:
    word = NAME_WORDS[k % len(NAME_WORDS)]
    suffix = NAME_SUFFIXES[(k // len(NAME_WORDS)) % len(NAME_SUFFIXES)]
    gen = (k // (len(NAME_WORDS) * len(NAME_SUFFIXES))) % len(_ROMAN)
    return f"{word} {suffix}{_ROMAN[gen]}"


def _bedrooms_for(area: float) -> int:
    if area < 60:
        return 1
    if area < 85:
        return 2
    if area < 115:
        return 3
    if area < 145:
        return 4
    return 5


@dataclass(frozen=True)
class GeneratedCorpus:
    listings: list[PropertyListing]
    amenities: list[dict]

    def meta(self) -> dict:
        kinds: dict[str, int] = {}
        for a in self.amenities:
            kinds[a["kind"]] = kinds.get(a["kind"], 0) + 1
        return {"listings": len(self.listings), "amenities": kinds}


def generate_corpus(seed: int, n: int) -> GeneratedCorpus:
    if n < 1:
        raise ValueError(f"corpus size must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    amenities: list[dict] = []

    # regions (column bands of two) and districts
    district_center: dict[str, tuple[float, float]] = {}
    district_region: dict[str, str] = {}
    for b, rname in enumerate(REGION_NAMES):
        centers = [_cell_center(c, r) for c in (2 * b, 2 * b + 1) for r in range(GRID_ROWS)]
        lat = sum(c[0] for c in centers) / len(centers)
        lon = sum(c[1] for c in centers) / len(centers)
        amenities.append(
            {"kind": "region", "id": f"r{b}", "name": rname, "lat": round(lat, 6), "lon": round(lon, 6)}
        )
    for k, dname in enumerate(DISTRICT_NAMES):
        col, row = k % GRID_COLS, k // GRID_COLS
        lat, lon = _cell_center(col, row)
        did = f"d{k:02d}"
        district_center[did] = (lat, lon)
        district_region[did] = f"r{col // 2}"
        amenities.append(
            {
                "kind": "district", "id": did, "name": dname,
                "region_id": f"r{col // 2}", "lat": round(lat, 6), "lon": round(lon, 6),
            }
        )

    # district adjacency along the grid (4-neighborhood, recorded once per pair)
    for k in range(len(DISTRICT_NAMES)):
        col, row = k % GRID_COLS, k // GRID_COLS
        if col + 1 < GRID_COLS:
            amenities.append({"kind": "adjacency", "src_district": f"d{k:02d}", "dst_district": f"d{k + 1:02d}"})
        if row + 1 < GRID_ROWS:
            amenities.append({"kind": "adjacency", "src_district": f"d{k:02d}", "dst_district": f"d{k + GRID_COLS:02d}"})

    # subway lines: each picks distinct districts and drops one station near
    # each center
    district_ids = sorted(district_center)
    for line_no in range(1, N_LINES + 1):
        picks = rng.choice(len(district_ids), size=STATIONS_PER_LINE, replace=False)
        for j, di in enumerate(sorted(int(p) for p in picks)):
            did = district_ids[di]
            lat, lon = _jitter(rng, *district_center[did], AMENITY_SPREAD_M)
            amenities.append(
                {
                    "kind": "station",
                    "id": f"st{line_no:02d}_{j:02d}",
                    "name": f"{DISTRICT_NAMES[int(did[1:])]} station {line_no}",
                    "line": f"line {line_no}",
                    "lat": lat, "lon": lon,
                }
            )

    # schools: one per chosen district
    school_districts = rng.choice(len(district_ids), size=N_SCHOOLS, replace=False)
    for j, di in enumerate(sorted(int(p) for p in school_districts)):
        did = district_ids[di]
        lat, lon = _jitter(rng, *district_center[did], AMENITY_SPREAD_M)
        amenities.append(
            {
                "kind": "school",
                "id": f"sch{j:02d}",
                "name": f"{SCHOOL_WORDS[j]} Academy",
                "lat": lat, "lon": lon,
            }
        )

    # per-district price factor
    district_factor = {did: float(rng.uniform(0.85, 1.2)) for did in district_ids}

    listings: list[PropertyListing] = []
    for k in range(n):
        did = district_ids[int(rng.integers(0, len(district_ids)))]
        lat, lon = _jitter(rng, *district_center[did], PROP_SPREAD_M)
        area = float(np.round(rng.uniform(40.0, 160.0), 0))
        bedrooms = _bedrooms_for(area)
        base = REGION_PPSQM[REGION_NAMES[int(district_region[did][1:])]]
        ppsqm = base * district_factor[did] * float(rng.uniform(0.9, 1.1))
        ppsqm = float(round(ppsqm / 100.0) * 100)
        price_total = int(round(ppsqm * area / 10_000.0) * 10_000)
        deco_draw = float(rng.random())
        decoration = "renovated" if deco_draw < 0.35 else ("simple" if deco_draw < 0.75 else "rough")
        listings.append(
            PropertyListing(
                id=f"p{k:05d}",
                name=property_name(k),
                price_total=price_total,
                price_per_sqm=ppsqm,
                bedrooms=bedrooms,
                area=area,
                lat=lat,
                lon=lon,
                district_id=did,
                attributes={
                    "has_elevator": bool(rng.random() < 0.55),
                    "garden": bool(rng.random() < 0.25),
                    "balcony": bool(rng.random() < 0.50),
                    "noisy_area": bool(rng.random() < 0.22),
                    "ground_floor": bool(rng.random() < 0.12),
                    "decoration": decoration,
                    "year_built": int(rng.integers(1995, 2024)),
                    "listing_status": "active",
                },
            )
        )
    return GeneratedCorpus(listings=listings, amenities=amenities)


def write_corpus(corpus: GeneratedCorpus, out_dir: str, seed: int) -> dict:
    os.makedirs(out_dir, exist_ok=True)
    dump_jsonl(os.path.join(out_dir, "listings.jsonl"), (l.to_dict() for l in corpus.listings))
    dump_jsonl(os.path.join(out_dir, "amenities.jsonl"), corpus.amenities)
    meta = {"seed": seed, **corpus.meta()}
    with open(os.path.join(out_dir, "corpus_meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return meta
