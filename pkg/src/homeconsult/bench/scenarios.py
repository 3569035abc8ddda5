"""Seeded 3-turn consultation scenarios with oracle gold labels.

Two scenario classes:

* simple (default 80%): 1-2 non-relational constraints, where turns 2 and 3
  are *delta-only* utterances ("Actually, make it under 3.5 million.") —
  the cumulative gold then measures whether a pipeline actually carries
  context across turns.
* complex (default 20%): bedrooms + budget + one relational constraint
  (subway line proximity or a school catchment), restated fully each turn;
  turn 2 tightens the budget and turn 3 pivots to a different line/school.
  The relational fact never appears in listing doc text, so dense-only
  retrieval cannot satisfy it; these turns are the graph-vs-dense probe.

Every turn stores the cumulative hard constraint set, the soft preference
set, and the oracle's satisfying/grade-2 id sets.  The generator checks
its own query phrasing round-trips through the constraint grammar and
enforces a minimum gold size so retrieval is never starved by construction.
For complex turns it additionally pins the *conditional* relational share —
gold over the bed+budget cohort — into a fixed band at every turn: that is
what a dense-only top-5 can reach by luck.  When the caller supplies the
dense index, each complex candidate is also checked against the index
itself: every turn must land enough *fresh* gold inside the dense top-100
(worst-case deduplication assumed) for the graph route to fill its top-5.
The hashed 256-dim embedding makes within-cohort ranking collide-noisy and
mildly geography-correlated, so some anchor/budget combinations starve the
prefilter; the generator simply retries past those instead of shipping
turns the pipeline cannot possibly answer."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace
from typing import Mapping, Optional, Sequence

import numpy as np

from ..constraints import (
    DEFAULT_TRANSIT_RADIUS_M,
    Constraint,
    EffectiveConstraintSet,
    extract_constraints,
)
from ..kb import normalize_name
from ..retrieval import enrich_query
from .corpus import N_LINES, REGION_NAMES, SCHOOL_WORDS
from .oracle import CorpusView, OracleConfig, grade_map, satisfying_ids

SELECTIVITY_LO = 0.10
SELECTIVITY_HI = 0.18
#: Window for the relational share *conditional on the bed+budget cohort*,
#: checked per complex turn (see module docstring).
COHORT_SHARE_LO = 0.11
COHORT_SHARE_HI = 0.21
BUDGET_GRID_M = [x / 2.0 for x in range(2, 21)]  # 1.0 .. 10.0 in 0.5 steps

#: Area thresholds that actually bite inside each bedroom band (the corpus
#: derives bedrooms from area, so e.g. ">= 60 sqm" is vacuous for 2+ beds).
AREA_STEP_FOR_BED = {1: 50.0, 2: 70.0, 3: 90.0, 4: 120.0, 5: 150.0}


class ScenarioError(RuntimeError):
    """Corpus cannot support the requested scenario mix."""


@dataclass(frozen=True)
class ScenarioTurn:
    query: str
    hard: tuple[Constraint, ...]  # cumulative
    soft: tuple[Constraint, ...]  # cumulative
    gold_sat: tuple[str, ...]  # ids satisfying all hard constraints
    gold_grade2: tuple[str, ...]  # subset also satisfying the soft set

    def grades(self) -> dict[str, int]:
        g2 = set(self.gold_grade2)
        return {pid: (2 if pid in g2 else 1) for pid in self.gold_sat}

    def to_dict(self) -> dict:
        return {
            "query": self.query,
            "hard": [c.to_dict() for c in self.hard],
            "soft": [c.to_dict() for c in self.soft],
            "gold_sat": list(self.gold_sat),
            "gold_grade2": list(self.gold_grade2),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ScenarioTurn":
        return cls(
            query=d["query"],
            hard=tuple(Constraint.from_dict(c) for c in d["hard"]),
            soft=tuple(Constraint.from_dict(c) for c in d["soft"]),
            gold_sat=tuple(d["gold_sat"]),
            gold_grade2=tuple(d["gold_grade2"]),
        )


@dataclass(frozen=True)
class Scenario:
    scenario_id: str
    klass: str  # simple | complex
    turns: tuple[ScenarioTurn, ...]

    def to_dict(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "class": self.klass,
            "turns": [t.to_dict() for t in self.turns],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Scenario":
        return cls(
            scenario_id=d["scenario_id"],
            klass=d["class"],
            turns=tuple(ScenarioTurn.from_dict(t) for t in d["turns"]),
        )


def _fmt_m(v: float) -> str:
    return f"{v:g}"


def _ckey(c: Constraint) -> tuple:
    return (
        c.kind, c.hardness, c.value, c.low, c.high,
        normalize_name(c.name) if c.name else "",
        c.attr_value, c.max_distance_m, c.max_minutes,
    )


def _roundtrip_check(query: str, intended: Sequence[Constraint]) -> None:
    got = extract_constraints(query).constraints
    if sorted(_ckey(c) for c in got) != sorted(_ckey(c) for c in intended):
        raise ScenarioError(
            f"query does not round-trip through the grammar: {query!r} -> "
            f"{[c.describe() for c in got]} expected {[c.describe() for c in intended]}"
        )


def _turn(
    view: CorpusView,
    cfg: OracleConfig,
    query: str,
    turn_constraints: Sequence[Constraint],
    hard: Sequence[Constraint],
    soft: Sequence[Constraint],
) -> ScenarioTurn:
    _roundtrip_check(query, turn_constraints)
    grades = grade_map(view, list(hard), list(soft), cfg)
    sat = sorted(grades)
    g2 = sorted(pid for pid, g in grades.items() if g == 2)
    return ScenarioTurn(
        query=query, hard=tuple(hard), soft=tuple(soft),
        gold_sat=tuple(sat), gold_grade2=tuple(g2),
    )


# ---------------------------------------------------------------------------
# scenario construction
# ---------------------------------------------------------------------------

def _pick_budget(
    view: CorpusView, cfg: OracleConfig, fixed: Sequence[Constraint], floor: int,
    step_down_m: float = 0.5,
) -> Optional[tuple[float, float]]:
    """Smallest (b1, b2=b1-step) in millions, with the *tighter* turn-2/3
    budget still leaving ``floor`` satisfying listings."""
    for b1 in BUDGET_GRID_M:
        b2 = b1 - step_down_m
        if b2 < BUDGET_GRID_M[0]:
            continue
        probe = Constraint(kind="budget_max", value=b2 * 1e6)
        if len(satisfying_ids(view, list(fixed) + [probe], cfg)) >= floor:
            return b1, b2
    return None


def _anchor_pair(
    rng: np.random.Generator,
) -> tuple[Constraint, str, Constraint, str]:
    """Two distinct relational anchors of the same kind; the scenario opens
    on the first and pivots to the second on its final turn."""
    if rng.random() < 0.5:
        i, j = (int(x) for x in rng.choice(len(SCHOOL_WORDS), size=2, replace=False))
        pair = []
        for idx in (i, j):
            name = f"{SCHOOL_WORDS[idx]} Academy"
            pair.append((Constraint(kind="school_district", name=name),
                         f"in the {name} school district"))
    else:
        a, b = (int(x) for x in rng.choice(np.arange(1, N_LINES + 1), size=2, replace=False))
        pair = [
            (Constraint(kind="near_transit", name=f"line {k}", max_distance_m=DEFAULT_TRANSIT_RADIUS_M),
             f"near line {k}")
            for k in (a, b)
        ]
    (rel_a, phrase_a), (rel_b, phrase_b) = pair
    return rel_a, phrase_a, rel_b, phrase_b


def _complex_queries(
    lead: str, bed: int, b1: float, b2: float, phrase_a: str, phrase_b: str,
) -> tuple[str, str, str]:
    pivot = phrase_b.removeprefix("in ")  # "How about in the..." reads badly
    q1 = f"{lead} {bed}-bedroom homes under {_fmt_m(b1)} million {phrase_a}."
    q2 = (
        f"Let's go tighter: {bed}-bedroom homes under {_fmt_m(b2)} million "
        f"{phrase_a}."
    )
    q3 = (
        f"How about {pivot} instead? Still {bed}-bedroom homes "
        f"under {_fmt_m(b2)} million."
    )
    return q1, q2, q3


def _fresh_capture_ok(index, plan, floor: int) -> bool:
    """Every planned turn must keep at least ``floor`` gold listings inside
    the dense top-100 after excluding all gold surfaced on earlier turns —
    a strict upper bound on what recency dedup can remove at run time."""
    seen: set[str] = set()
    for query, constraints, gold in plan:
        ecs = EffectiveConstraintSet(constraints=tuple(constraints))
        hit_gold = {
            sd.doc_id
            for sd in index.search(enrich_query(query, ecs), 100)
            if sd.doc_id in gold
        }
        if len(hit_gold - seen) < floor:
            return False
        seen |= hit_gold
    return True


def _complex_scenario(
    rng: np.random.Generator, view: CorpusView, cfg: OracleConfig,
    sid: str, floor: int, retries: int, index=None, capture_floor: int = 8,
) -> Scenario:
    n = len(view.listings)
    for _ in range(retries):
        bed = int(rng.choice([2, 3]))
        rel_a, phrase_a, rel_b, phrase_b = _anchor_pair(rng)
        sels = [len(satisfying_ids(view, [r], cfg)) / n for r in (rel_a, rel_b)]
        if not all(SELECTIVITY_LO <= s <= SELECTIVITY_HI for s in sels):
            continue

        bedc = Constraint(kind="bedrooms", value=float(bed))
        ids_a = set(satisfying_ids(view, [rel_a], cfg))
        ids_b = set(satisfying_ids(view, [rel_b], cfg))
        bed_prices = [
            (l["id"], float(l["price_total"]))
            for l in view.listings
            if int(l["bedrooms"]) == bed
        ]

        def turn_gold(budget_m: float, rel_ids: set) -> Optional[set]:
            cohort = [pid for pid, p in bed_prices if p <= budget_m * 1e6]
            if not cohort:
                return None
            gold = {pid for pid in cohort if pid in rel_ids}
            share = len(gold) / len(cohort)
            if len(gold) >= floor and COHORT_SHARE_LO <= share <= COHORT_SHARE_HI:
                return gold
            return None

        lead = ["Show me", "I'm looking for", "Find me"][int(rng.integers(0, 3))]
        picked = None
        for b1 in BUDGET_GRID_M:
            b2 = b1 - 1.0
            if b2 < BUDGET_GRID_M[0]:
                continue
            gold1 = turn_gold(b1, ids_a)
            gold2 = turn_gold(b2, ids_a)
            gold3 = turn_gold(b2, ids_b)
            if gold1 is None or gold2 is None or gold3 is None:
                continue
            bud1 = Constraint(kind="budget_max", value=b1 * 1e6)
            bud2 = Constraint(kind="budget_max", value=b2 * 1e6)
            q1, q2, q3 = _complex_queries(lead, bed, b1, b2, phrase_a, phrase_b)
            if index is not None and not _fresh_capture_ok(
                index,
                [
                    (q1, [bedc, bud1, rel_a], gold1),
                    (q2, [bedc, bud2, rel_a], gold2),
                    (q3, [bedc, bud2, rel_b], gold3),
                ],
                capture_floor,
            ):
                continue
            picked = (bud1, bud2, q1, q2, q3)
            break
        if picked is None:
            continue
        bud1, bud2, q1, q2, q3 = picked

        turns = (
            _turn(view, cfg, q1, [bedc, bud1, rel_a], [bedc, bud1, rel_a], []),
            _turn(view, cfg, q2, [bedc, bud2, rel_a], [bedc, bud2, rel_a], []),
            _turn(view, cfg, q3, [bedc, bud2, rel_b], [bedc, bud2, rel_b], []),
        )
        if all(len(t.gold_sat) >= floor for t in turns):
            return Scenario(scenario_id=sid, klass="complex", turns=turns)
    raise ScenarioError(
        f"could not build a complex scenario within {retries} retries "
        f"(corpus too small or selectivity band unreachable)"
    )


def _simple_scenario(
    rng: np.random.Generator, view: CorpusView, cfg: OracleConfig,
    sid: str, floor: int, retries: int,
) -> Scenario:
    for _ in range(retries):
        bed = int(rng.choice([1, 2, 3, 4], p=[0.15, 0.35, 0.35, 0.15]))
        bedc = Constraint(kind="bedrooms", value=float(bed))
        fixed: list[Constraint] = [bedc]
        region: Optional[str] = None
        if rng.random() < 0.6:
            region = REGION_NAMES[int(rng.integers(0, len(REGION_NAMES)))]
            fixed.append(Constraint(kind="region", name=region))
        with_pref = rng.random() < 0.4
        soft = (
            (Constraint(kind="avoid", name="noisy_area", hardness="soft"),)
            if with_pref else ()
        )
        t3_area: Optional[float] = None
        t3_bed: Optional[int] = None
        if rng.random() < 0.7:
            t3_area = AREA_STEP_FOR_BED[bed]
            t3_fixed = fixed + [Constraint(kind="area_min", value=t3_area)]
        else:
            t3_bed = bed + 1 if bed < 3 else bed - 1
            t3_fixed = [Constraint(kind="bedrooms", value=float(t3_bed))] + fixed[1:]
        picked = _pick_budget(view, cfg, t3_fixed, floor)
        if picked is None:
            continue
        b1, b2 = picked
        bud1: Constraint
        between = rng.random() < 0.3
        if between:
            lo = max(BUDGET_GRID_M[0], b1 - 1.5)
            bud1 = Constraint(kind="budget_range", low=lo * 1e6, high=b1 * 1e6)
        else:
            bud1 = Constraint(kind="budget_max", value=b1 * 1e6)
        bud2 = Constraint(kind="budget_max", value=b2 * 1e6)

        where = f" in {region}" if region else ""
        pref_text = " Please avoid noisy areas." if with_pref else ""
        if between:
            q1 = (
                f"My budget is between {_fmt_m(bud1.low / 1e6)} and "
                f"{_fmt_m(b1)} million; looking for a {bed} bedroom{where}."
                f"{pref_text}"
            )
        else:
            q1 = f"I'm looking for a {bed} bedroom under {_fmt_m(b1)} million{where}.{pref_text}"
        q2 = f"Actually, make it under {_fmt_m(b2)} million."
        if t3_area is not None:
            q3 = f"And it should be at least {_fmt_m(t3_area)} sqm."
            t3_delta: list[Constraint] = [Constraint(kind="area_min", value=t3_area)]
        else:
            q3 = f"On second thought, make it {t3_bed} bedrooms."
            t3_delta = [Constraint(kind="bedrooms", value=float(t3_bed))]

        h1 = fixed + [bud1]
        h2 = fixed + [bud2]
        h3 = t3_fixed + [bud2]
        t1_turn_cs = fixed + [bud1] + list(soft)
        turns = (
            _turn(view, cfg, q1, t1_turn_cs, h1, soft),
            _turn(view, cfg, q2, [bud2], h2, soft),
            _turn(view, cfg, q3, t3_delta, h3, soft),
        )
        if all(len(t.gold_sat) >= floor for t in turns):
            return Scenario(scenario_id=sid, klass="simple", turns=turns)
    raise ScenarioError(
        f"could not build a simple scenario within {retries} retries"
    )


def generate_scenarios(
    seed: int,
    listings: Sequence[Mapping],
    amenities: Sequence[Mapping],
    n_scenarios: int = 100,
    complex_share: float = 0.2,
    floor_complex: int = 15,
    floor_simple: int = 30,
    retries: int = 60,
    cfg: OracleConfig = OracleConfig(),
    index=None,
    capture_floor: int = 8,
) -> list[Scenario]:
    """``index`` (a built VectorIndex over the same corpus) is optional but
    strongly recommended: with it, complex scenarios are guaranteed to keep
    their gold reachable through the dense prefilter (see module docstring)."""
    if n_scenarios < 1:
        raise ValueError("n_scenarios must be >= 1")
    rng = np.random.default_rng(seed)
    view = CorpusView(listings, amenities)
    n_complex = int(round(n_scenarios * complex_share))
    classes = ["complex"] * n_complex + ["simple"] * (n_scenarios - n_complex)
    order = rng.permutation(len(classes))
    out: list[Scenario] = []
    for i, idx in enumerate(order):
        sid = f"sc{i:03d}"
        if classes[int(idx)] == "complex":
            out.append(
                _complex_scenario(
                    rng, view, cfg, sid, floor_complex, retries,
                    index=index, capture_floor=capture_floor,
                )
            )
        else:
            out.append(_simple_scenario(rng, view, cfg, sid, floor_simple, retries))
    return out


def save_scenarios(path: str, scenarios: Sequence[Scenario]) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for sc in scenarios:
            fh.write(json.dumps(sc.to_dict(), sort_keys=True) + "\n")


def load_scenarios(path: str) -> list[Scenario]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(Scenario.from_dict(json.loads(line)))
    return out
