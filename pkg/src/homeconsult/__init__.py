"""Multi-turn housing consultation engine.

The pipeline per user turn: extract constraints, fuse them with session
memory, route retrieval (dense index vs. knowledge-graph filter), generate a
cited answer, verify its claims against the retrieved evidence, remediate on
failure, and gate memory writes on the verification outcome.
"""

__version__ = "0.1.0"

from .constraints import (
    Constraint,
    ConstraintSet,
    EffectiveConstraintSet,
    extract_constraints,
    fuse_memory,
)
from .kb import IngestConfig, KnowledgeGraph, ingest_corpus, load_amenities, load_listings
from .memory import UserMemory, gated_update, sweep_ttl
from .orchestrator import PRESETS, Engine, PipelineVariant, TurnResult, resolve_preset
from .retrieval import EvidenceBundle, Retriever
from .router import RouterModel, featurize, train
from .validation import ValidationConfig, ValidationReport, validate
from .vector import VectorIndex, render_listing_doc

__all__ = [
    "__version__",
    "Constraint",
    "ConstraintSet",
    "EffectiveConstraintSet",
    "extract_constraints",
    "fuse_memory",
    "IngestConfig",
    "KnowledgeGraph",
    "ingest_corpus",
    "load_amenities",
    "load_listings",
    "UserMemory",
    "gated_update",
    "sweep_ttl",
    "PRESETS",
    "Engine",
    "PipelineVariant",
    "TurnResult",
    "resolve_preset",
    "EvidenceBundle",
    "Retriever",
    "RouterModel",
    "featurize",
    "train",
    "ValidationConfig",
    "ValidationReport",
    "validate",
    "VectorIndex",
    "render_listing_doc",
]
