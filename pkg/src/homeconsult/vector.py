"""Deterministic dense retrieval: hashed bag-of-token embeddings + cosine.

The built-in embedding provider is fully deterministic so that retrieval
results are reproducible bit-for-bit across runs and machines:

1. lowercase; apply the versioned synonym table (``data/synonyms_v1.tsv``,
   longest phrase first);
2. apply band rewrites: a constraint phrasing expands to every band token it
   admits (``under 4.5 million`` -> ``price_band_1m ... price_band_4_5m``,
   ``at least 80 sqm`` -> ``area_band_80 ... area_band_160``, ``3-bedroom``
   -> ``bed_3``, ``line 10`` -> ``line_10``), while each listing document
   carries the *single* band it belongs to;
3. split on ``[a-z0-9_]+`` and feature-hash each token into a 256-dim count
   vector, then L2-normalize.  The hash layout is namespaced: the closed
   structured vocabulary (price bands, area bands, ``bed_N``, ``line_N``)
   maps to reserved coordinate blocks with a distinct slot per value, and
   only free text is hashed (BLAKE2b, fixed, no process salt) into the
   remaining dimensions — at 256 dims an unpartitioned hash regularly
   aliases one constraint family into another (a price band colliding with
   an area band silently rewards the wrong listings), which poisons
   retrieval far more than any free-word collision can.

Documents are listings rendered by :func:`render_listing_doc`, a fixed
field-order template that deliberately carries *no* transit/commute/school
facts; those live only in the knowledge graph.

An external provider can be plugged in through ``HOMECONSULT_EMBED_ENDPOINT``
/ ``HOMECONSULT_EMBED_API_KEY``; it must honor the same interface
(text in, unit-norm vector out).
"""

from __future__ import annotations

import hashlib
import math
import os
import re
from dataclasses import dataclass
from importlib import resources
from typing import Optional, Sequence

import numpy as np

from .kb import PropertyListing

EMBED_DIM = 256

# Price/area band grids.  A document carries exactly ONE band token each for
# price and area; the query-side rewrites expand a constraint phrase to every
# band it admits.  Keeping the expansion on the query side keeps document
# lengths flat, so cosine does not systematically favor cheap or small
# listings (a cumulative doc-side tail made doc length track price, which
# leaked geography into the dense ranking).
BAND_MIN_M = 1.0
BAND_MAX_M = 10.0
AREA_BAND_STEP = 10
AREA_BAND_MIN = 40
AREA_BAND_MAX = 160


def _price_band_grid() -> list[float]:
    steps = int(round((BAND_MAX_M - BAND_MIN_M) / 0.5)) + 1
    return [BAND_MIN_M + 0.5 * i for i in range(steps)]


def _price_band_name(g: float) -> str:
    return "price_band_" + (f"{g:g}").replace(".", "_") + "m"


def _price_bands_between(lo_m: float, hi_m: float) -> str:
    """Band tokens admitted by a (lo, hi] budget window, space-joined."""
    names = [
        _price_band_name(g)
        for g in _price_band_grid()
        if g > lo_m + 1e-9 and g <= hi_m + 1e-9
    ]
    return " ".join(names)


def _area_band_name(d: int) -> str:
    return f"area_band_{d}"


def _area_bands_from(min_sqm: float) -> str:
    lo = max(AREA_BAND_MIN, int(min_sqm // AREA_BAND_STEP) * AREA_BAND_STEP)
    return " ".join(
        _area_band_name(d) for d in range(lo, AREA_BAND_MAX + 1, AREA_BAND_STEP)
    )


def _load_synonyms() -> list[tuple[str, str]]:
    pairs: list[tuple[str, str]] = []
    text = resources.files("homeconsult.data").joinpath("synonyms_v1.tsv").read_text("utf-8")
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        phrase, repl = line.split("\t")
        pairs.append((phrase, repl))
    # longest phrase first so multiword synonyms win over their prefixes
    pairs.sort(key=lambda p: (-len(p[0]), p[0]))
    return pairs


_SYNONYMS = _load_synonyms()
_SYNONYM_RES = [(re.compile(r"\b" + re.escape(p) + r"\b"), r) for p, r in _SYNONYMS]

_BUDGET_TRIGGER = (
    r"(?:under|below|at most|up to|no more than|less than|cheaper than|"
    r"can go up to|can stretch to|max(?:imum)? (?:budget )?(?:of )?|"
    r"budget (?:is |of )?(?:about |around )?)"
)
_REWRITES = [
    (re.compile(r"\bbetween\s+(\d+(?:\.\d+)?)\s+and\s+(\d+(?:\.\d+)?)\s*(?:million|m)\b"),
     lambda m: _price_bands_between(float(m.group(1)), float(m.group(2)))),
    (re.compile(_BUDGET_TRIGGER + r"\s*(\d+(?:\.\d+)?)\s*(?:million|m)\b"),
     lambda m: _price_bands_between(0.0, float(m.group(1)))),
    (re.compile(r"\b(?:at least|minimum (?:of )?|no less than|over|above|more than)\s+(\d+)\s*sqm\b"),
     lambda m: _area_bands_from(float(m.group(1)))),
    (re.compile(r"\b(\d+)\+\s*sqm\b"), lambda m: _area_bands_from(float(m.group(1)))),
    (re.compile(r"\b(\d+)[\s-]*bed(?:room)?\b"), lambda m: "bed_" + m.group(1)),
    (re.compile(r"\bline\s+(\d+)\b"), lambda m: "line_" + m.group(1)),
]

_TOKEN_RE = re.compile(r"[a-z0-9_]+")
# Long digit runs are raw prices (and ids): near-unique per listing, so they
# would blow the hashed vocabulary far past EMBED_DIM and bury the real
# match signal in collision noise.  Budget information reaches the index
# through the band tokens instead.
_LONG_DIGITS_RE = re.compile(r"^\d{5,}$")


def normalize_phrases(text: str) -> str:
    """Lowercase + synonym folding only (no band rewrites).

    Shared with constraint extraction so the grammar and the embedder see
    the same surface forms.
    """
    t = text.lower()
    for pattern, repl in _SYNONYM_RES:
        t = pattern.sub(repl, t)
    return t


def tokenize(text: str) -> list[str]:
    """Normalized token stream (synonyms + band rewrites applied)."""
    t = normalize_phrases(text)
    for pattern, repl in _REWRITES:
        t = pattern.sub(repl, t)
    return [tok for tok in _TOKEN_RE.findall(t) if not _LONG_DIGITS_RE.match(tok)]


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]
    is_empty: bool = False

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)


# reserved coordinate blocks for the structured vocabulary (see module
# docstring); everything else hashes into [_FREE_BASE, EMBED_DIM)
_PRICE_BLOCK = (0, 32)
_AREA_BLOCK = (32, 48)
_BED_BLOCK = (48, 56)
_LINE_BLOCK = (56, 72)
_FREE_BASE = 72

_PRICE_TOKEN_RE = re.compile(r"^price_band_(\d+)(?:_(\d))?m(_plus)?$")
_AREA_TOKEN_RE = re.compile(r"^area_band_(\d+)$")
_BED_TOKEN_RE = re.compile(r"^bed_(\d+)$")
_LINE_TOKEN_RE = re.compile(r"^line_(\d+)$")


def _token_slot(token: str) -> int:
    m = _PRICE_TOKEN_RE.match(token)
    if m:
        g = float(m.group(1)) + (0.5 if m.group(2) else 0.0)
        idx = int(round((g - BAND_MIN_M) / 0.5)) + (1 if m.group(3) else 0)
        lo, hi = _PRICE_BLOCK
        return lo + idx % (hi - lo)
    m = _AREA_TOKEN_RE.match(token)
    if m:
        idx = (int(m.group(1)) - AREA_BAND_MIN) // AREA_BAND_STEP
        lo, hi = _AREA_BLOCK
        return lo + idx % (hi - lo)
    m = _BED_TOKEN_RE.match(token)
    if m:
        lo, hi = _BED_BLOCK
        return lo + int(m.group(1)) % (hi - lo)
    m = _LINE_TOKEN_RE.match(token)
    if m:
        lo, hi = _LINE_BLOCK
        return lo + int(m.group(1)) % (hi - lo)
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return _FREE_BASE + int.from_bytes(digest[:4], "big") % (EMBED_DIM - _FREE_BASE)


def embed(text: str) -> EmbeddingVector:
    """Unit-norm hashed embedding; empty/whitespace text yields a flagged
    all-zeros vector (cosine against it is defined as 0).

    Plain (unsigned) token counts: with a vocabulary dominated by a small
    set of canonical band/constraint tokens, signed hashing lets one bin
    collision erase a true match for an entire price or area class at once,
    whereas unsigned collisions only ever add mild uniform noise."""
    tokens = tokenize(text)
    vec = np.zeros(EMBED_DIM, dtype=np.float64)
    for tok in tokens:
        vec[_token_slot(tok)] += 1.0
    norm = float(np.linalg.norm(vec))
    if not tokens or norm == 0.0:
        return EmbeddingVector(tuple(np.zeros(EMBED_DIM)), is_empty=True)
    return EmbeddingVector(tuple(vec / norm), is_empty=False)


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    if a.is_empty or b.is_empty:
        return 0.0
    return float(np.dot(a.as_array(), b.as_array()))


@dataclass(frozen=True)
class ScoredDoc:
    doc_id: str
    score: float


class IndexNotBuiltError(RuntimeError):
    pass


class VectorIndex:
    """Exhaustive cosine index over rendered listing documents.

    Rows are stored sorted by doc_id so a stable descending-score argsort
    yields the documented tie-break (ascending doc_id) for free.
    """

    def __init__(self) -> None:
        self._built = False
        self._ids: list[str] = []
        self._matrix: Optional[np.ndarray] = None
        self._texts: dict[str, str] = {}
        self._token_sets: dict[str, frozenset[str]] = {}

    @classmethod
    def build(cls, docs: Sequence[tuple[str, str]]) -> "VectorIndex":
        idx = cls()
        ordered = sorted(docs, key=lambda d: d[0])
        seen = set()
        rows = []
        for doc_id, text in ordered:
            if doc_id in seen:
                raise ValueError(f"duplicate doc id: {doc_id}")
            seen.add(doc_id)
            idx._ids.append(doc_id)
            idx._texts[doc_id] = text
            idx._token_sets[doc_id] = frozenset(tokenize(text))
            rows.append(embed(text).as_array())
        idx._matrix = np.vstack(rows) if rows else np.zeros((0, EMBED_DIM))
        idx._built = True
        return idx

    def __len__(self) -> int:
        return len(self._ids)

    def doc_text(self, doc_id: str) -> Optional[str]:
        return self._texts.get(doc_id)

    def search(self, query: str, k: int) -> list[ScoredDoc]:
        if not self._built:
            raise IndexNotBuiltError("vector index used before build()")
        if k < 1:
            raise ValueError("k must be >= 1")
        if not self._ids:
            return []
        q = embed(query)
        scores = self._matrix @ q.as_array()
        order = np.argsort(-scores, kind="stable")[:k]
        return [ScoredDoc(self._ids[i], float(scores[i])) for i in order]

    def rerank(self, query: str, candidates: Sequence[ScoredDoc]) -> list[ScoredDoc]:
        """0.5 * cosine + 0.5 * token-overlap(query) reordering.

        Overlap = |query_tokens ∩ doc_tokens| / |query_tokens| (0 when the
        query has no tokens).  Output order is independent of candidate
        input order: ties break by ascending doc_id.
        """
        q_tokens = frozenset(tokenize(query))
        rescored = []
        for c in candidates:
            overlap = 0.0
            if q_tokens:
                d_tokens = self._token_sets.get(c.doc_id, frozenset())
                overlap = len(q_tokens & d_tokens) / len(q_tokens)
            rescored.append(ScoredDoc(c.doc_id, 0.5 * c.score + 0.5 * overlap))
        rescored.sort(key=lambda s: (-s.score, s.doc_id))
        return rescored


def dense_search(index: VectorIndex, query: str, k: int = 100) -> list[ScoredDoc]:
    return index.search(query, k)


def rerank(index: VectorIndex, query: str, candidates: Sequence[ScoredDoc]) -> list[ScoredDoc]:
    return index.rerank(query, candidates)


def score_drop(results: Sequence[ScoredDoc]) -> float:
    """Spread between rank-1 and rank-5 scores (last available when fewer
    than five results; 0.0 when fewer than two)."""
    if len(results) < 2:
        return 0.0
    tail = results[4] if len(results) >= 5 else results[-1]
    return results[0].score - tail.score


# ---------------------------------------------------------------------------
# document rendering
# ---------------------------------------------------------------------------

def _budget_bands(price_total: int) -> list[str]:
    millions = price_total / 1_000_000.0
    for g in _price_band_grid():
        if millions <= g + 1e-9:
            return [_price_band_name(g)]
    return [_price_band_name(BAND_MAX_M) + "_plus"]


def _area_bands(area: float) -> list[str]:
    d = int(area // AREA_BAND_STEP) * AREA_BAND_STEP
    d = min(max(d, AREA_BAND_MIN), AREA_BAND_MAX)
    return [_area_band_name(d)]


def _feature_words(attrs) -> list[str]:
    words = []
    if attrs.get("has_elevator"):
        words.append("elevator")
    if attrs.get("garden"):
        words.append("garden")
    if attrs.get("balcony"):
        words.append("balcony")
    words.append("noisy" if attrs.get("noisy_area") else "quiet")
    if attrs.get("ground_floor"):
        words.append("ground floor")
    deco = attrs.get("decoration")
    if deco:
        words.append(str(deco))
    return words


def render_listing_doc(listing: PropertyListing, district_name: str, region_name: str) -> str:
    """Fixed-order textual rendering of a listing.

    Field order is frozen (name, district, region, bedrooms, area, price,
    year, features, then the listing's own band tokens) so the rendering is
    bit-stable.  Transit, commute and school facts are intentionally absent:
    relational knowledge is only reachable through the graph.
    """
    attrs = listing.attributes
    parts = [
        f"{listing.name}.",
        f"district: {district_name}.",
        f"region: {region_name}.",
        f"bedrooms: {listing.bedrooms}.",
        f"area: {listing.area:.0f} sqm.",
        f"price: {listing.price_total}.",
        f"year built: {attrs.get('year_built', 'unknown')}.",
        "features: " + ", ".join(_feature_words(attrs)) + ".",
        " ".join([f"bed_{listing.bedrooms}"] + _budget_bands(listing.price_total) + _area_bands(listing.area)),
    ]
    return " ".join(parts)


# ---------------------------------------------------------------------------
# pluggable provider contract
# ---------------------------------------------------------------------------

class EmbeddingProvider:
    """Interface for embedding backends."""

    def embed(self, text: str) -> EmbeddingVector:  # pragma: no cover - interface
        raise NotImplementedError


class BuiltinEmbeddingProvider(EmbeddingProvider):
    def embed(self, text: str) -> EmbeddingVector:
        return embed(text)


class HttpEmbeddingProvider(EmbeddingProvider):
    """POSTs {"text": ...} to the configured endpoint, expects
    {"vector": [float, ...]}; vector is re-normalized on receipt."""

    def __init__(self, endpoint: Optional[str] = None, api_key: Optional[str] = None):
        self.endpoint = endpoint or os.environ.get("HOMECONSULT_EMBED_ENDPOINT", "")
        self.api_key = api_key or os.environ.get("HOMECONSULT_EMBED_API_KEY", "")
        if not self.endpoint:
            raise ValueError("HttpEmbeddingProvider requires an endpoint")

    def embed(self, text: str) -> EmbeddingVector:  # pragma: no cover - network
        import httpx

        headers = {"authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        resp = httpx.post(self.endpoint, json={"text": text}, headers=headers, timeout=30.0)
        resp.raise_for_status()
        values = resp.json()["vector"]
        arr = np.asarray(values, dtype=np.float64)
        norm = float(np.linalg.norm(arr))
        if norm == 0.0:
            return EmbeddingVector(tuple(np.zeros(len(arr))), is_empty=True)
        return EmbeddingVector(tuple(arr / norm), is_empty=False)


def default_provider() -> EmbeddingProvider:
    if os.environ.get("HOMECONSULT_EMBED_ENDPOINT"):
        return HttpEmbeddingProvider()
    return BuiltinEmbeddingProvider()
