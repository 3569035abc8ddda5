"""Session engine: runs the five-stage consultation turn per session and
realizes every named pipeline variant (the shipping configuration, the
retrieval-only baselines, and the leave-one-out arms) as pure flag sets
over the same code path.

Turn flow: extract constraints -> fuse with memory -> preliminary dense
pass + route choice -> retrieve -> generate -> validate with bounded
remediation -> gated memory update.  Variant flags short-circuit stages;
they never fork the pipeline into separate implementations.
"""

from __future__ import annotations

import itertools
import threading
import time
from dataclasses import dataclass, field
from typing import Optional

from .constraints import extract_constraints, fuse_memory
from .generation import (
    BackendError,
    CandidateResponse,
    GenerationBackend,
    GenerationRequest,
    TemplateBackend,
    NoisyBackend,
    classify_task,
    display_text,
    local_correct,
)
from .kb import GraphQueryError, KnowledgeGraph
from .memory import UserMemory, gated_update, sweep_ttl
from .retrieval import (
    CompileError,
    EvidenceBundle,
    Retriever,
    compile_constraints_to_graph_query,
    enrich_query,
    merge_bundles,
    relax_threshold,
)
from .router import RouterModel, RoutingDecision, RoutingHistoryEvent, featurize
from .validation import ValidationConfig, ValidationReport, remediation_action, validate
from .vector import VectorIndex

# Simulated clock used by deterministic runs: fixed epoch, one minute per
# turn.  Wall-clock mode exists for live serving where TTLs should be real.
SIM_CLOCK_START = 1_700_000_000.0
SIM_CLOCK_STEP = 60.0

REFUSAL_TEXT = (
    "I could not verify enough of this answer against the evidence I have, "
    "so I would rather not present it as fact. Could you rephrase the "
    "request or relax one of the constraints?"
)


class TurnError(RuntimeError):
    """A turn that could not produce a response (backend failure)."""


# ---------------------------------------------------------------------------
# variants
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PipelineVariant:
    """One named configuration of the pipeline.

    memory      -- personalization layers exist at all (fusion, anaphora,
                   dedup, context carry-over)
    memory_gate -- long-term writes require a passing verdict; with the
                   gate off every turn writes through
    routing     -- adaptive | always_dense | always_graph
    validation  -- run the checking stage; off records verdict "unchecked"
    remediation -- targeted | regenerate | refuse | off
    rank_mode   -- rerank | dense | backend (candidate ordering)
    dense_k     -- dense candidate pool size
    backend     -- generation backend id ("default" = whatever the engine
                   was built with)
    """

    name: str
    memory: bool = True
    memory_gate: bool = True
    routing: str = "adaptive"
    validation: bool = True
    remediation: str = "targeted"
    rank_mode: str = "rerank"
    dense_k: int = 100
    backend: str = "default"

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "memory": self.memory,
            "memory_gate": self.memory_gate,
            "routing": self.routing,
            "validation": self.validation,
            "remediation": self.remediation,
            "rank_mode": self.rank_mode,
            "dense_k": self.dense_k,
            "backend": self.backend,
        }


#: The documented preset table.  b1-b4 are single-pass retrieval baselines
#: (no memory, no checking); b5/b6 keep the full stack but swap the
#: remediation strategy; the no_* arms switch exactly one thing off.
PRESETS: dict[str, PipelineVariant] = {
    "full": PipelineVariant("full"),
    "b1": PipelineVariant(
        "b1", memory=False, routing="always_dense", validation=False,
        remediation="off", rank_mode="dense",
    ),
    "b2": PipelineVariant(
        "b2", memory=False, routing="always_dense", validation=False,
        remediation="off", rank_mode="rerank",
    ),
    "b3": PipelineVariant(
        "b3", memory=False, routing="always_graph", validation=False,
        remediation="off", rank_mode="rerank",
    ),
    "b4": PipelineVariant(
        "b4", memory=False, routing="always_dense", validation=False,
        remediation="off", rank_mode="backend", dense_k=500,
    ),
    "b5": PipelineVariant("b5", remediation="regenerate"),
    "b6": PipelineVariant("b6", remediation="refuse"),
    "no_gate": PipelineVariant("no_gate", memory_gate=False),
    "no_routing": PipelineVariant("no_routing", routing="always_dense"),
    "no_remediation": PipelineVariant("no_remediation", remediation="off"),
    "no_validation": PipelineVariant("no_validation", validation=False),
}


def resolve_preset(name: str) -> PipelineVariant:
    key = name.strip().lower().replace("w/o", "no").replace("-", "_").replace(" ", "_")
    key = key.replace("__", "_")
    if key not in PRESETS:
        raise KeyError(f"unknown preset {name!r} (have: {', '.join(sorted(PRESETS))})")
    return PRESETS[key]


# ---------------------------------------------------------------------------
# per-turn and per-session state
# ---------------------------------------------------------------------------

@dataclass
class Query:
    """What the memory layer sees of a turn: raw text plus the constraints
    extracted from it (turn-level, pre-fusion)."""

    text: str
    ts: float = 0.0
    constraints: tuple = ()


@dataclass
class TurnResult:
    turn_index: int
    response: CandidateResponse
    display: str
    report: ValidationReport
    bundle: EvidenceBundle
    routing: RoutingDecision
    task: str
    cycles: int
    actions: tuple[str, ...]
    timings: dict[str, float]
    total_ms: float
    badge: str

    def to_dict(self) -> dict:
        return {
            "turn_index": self.turn_index,
            "text": self.response.text,
            "display": self.display,
            "claims": [c.to_dict() for c in self.response.claims],
            "recommended_ids": list(self.response.recommended_ids),
            "task": self.task,
            "route": self.routing.route,
            "report": self.report.to_dict(),
            "cycles": self.cycles,
            "actions": list(self.actions),
            "badge": self.badge,
            "total_ms": self.total_ms,
        }


@dataclass
class SessionState:
    session_id: str
    variant: PipelineVariant
    memory: UserMemory = field(default_factory=UserMemory)
    turn_counter: int = 0
    audit: list[dict] = field(default_factory=list)
    history: list[RoutingHistoryEvent] = field(default_factory=list)
    clock_mode: str = "simulated"  # simulated | wall
    noise_scope: tuple = ()
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def now_for(self, turn_index: int) -> float:
        if self.clock_mode == "wall":
            return time.time()
        return SIM_CLOCK_START + SIM_CLOCK_STEP * turn_index

    def audit_for_turn(self, turn_index: int) -> list[dict]:
        return [r for r in self.audit if r["turn"] == turn_index]


def badge_for(report: ValidationReport, cycles: int) -> str:
    if report.verdict == "fail":
        return "unverified"
    return "remediated" if cycles > 0 else "pass"


# ---------------------------------------------------------------------------
# the engine
# ---------------------------------------------------------------------------

class Engine:
    """Shared immutable artifacts (graph, index, router, backend) plus the
    session registry.  One in-flight turn per session; sessions are
    independent and may run concurrently."""

    def __init__(
        self,
        kg: KnowledgeGraph,
        index: VectorIndex,
        router: Optional[RouterModel] = None,
        backend: Optional[GenerationBackend] = None,
        vcfg: ValidationConfig = ValidationConfig(),
        clock_mode: str = "simulated",
        bundle_size: int = 20,
    ):
        self.kg = kg
        self.index = index
        self.router = router
        self.default_backend = backend if backend is not None else TemplateBackend()
        self.vcfg = vcfg
        self.clock_mode = clock_mode
        self.bundle_size = bundle_size
        self.sessions: dict[str, SessionState] = {}
        self._retrievers: dict[tuple, Retriever] = {}
        self._ids = itertools.count(1)
        self._registry_lock = threading.Lock()

    # -- plumbing -----------------------------------------------------------

    def retriever_for(self, v: PipelineVariant) -> Retriever:
        key = (v.rank_mode, v.dense_k)
        if key not in self._retrievers:
            self._retrievers[key] = Retriever(
                self.kg, self.index, k=v.dense_k,
                bundle_size=self.bundle_size, rank_mode=v.rank_mode,
            )
        return self._retrievers[key]

    def backend_for(self, v: PipelineVariant) -> GenerationBackend:
        if v.backend == "default":
            return self.default_backend
        if v.backend == "template":
            return TemplateBackend()
        if v.backend == "noisy":
            return NoisyBackend()
        raise KeyError(f"unknown backend id {v.backend!r}")

    def create_session(
        self,
        preset: str = "full",
        clock_mode: Optional[str] = None,
        noise_scope: tuple = (),
        session_id: Optional[str] = None,
    ) -> SessionState:
        variant = resolve_preset(preset)
        with self._registry_lock:
            sid = session_id if session_id is not None else f"s{next(self._ids):04d}"
            if sid in self.sessions:
                raise KeyError(f"session id {sid!r} already exists")
            s = SessionState(
                session_id=sid,
                variant=variant,
                clock_mode=clock_mode or self.clock_mode,
                noise_scope=tuple(noise_scope),
            )
            self.sessions[sid] = s
            return s

    def session(self, session_id: str) -> SessionState:
        try:
            return self.sessions[session_id]
        except KeyError:
            raise KeyError(f"no such session: {session_id}") from None

    # -- the turn -----------------------------------------------------------

    def run_turn(self, s: SessionState, text: str) -> TurnResult:
        v = s.variant
        with s.lock:
            turn_index = s.turn_counter
            now = s.now_for(turn_index)
            mem = s.memory
            mem.clock = now
            if v.memory:
                sweep_ttl(mem, now)

            records: list[dict] = []
            t_turn = time.perf_counter()

            def record(stage: str, t0: float, **detail) -> float:
                ms = (time.perf_counter() - t0) * 1000.0
                records.append({"turn": turn_index, "stage": stage, "ms": ms, **detail})
                return ms

            # -- stage 1a: constraint extraction
            t0 = time.perf_counter()
            ctx = mem.context if v.memory else None
            cs = extract_constraints(text, ctx)
            record("extract", t0, n_constraints=cs.n_c)

            # -- stage 1b: memory fusion
            t0 = time.perf_counter()
            ecs = fuse_memory(cs, mem if v.memory else None)
            record(
                "fuse", t0, n_effective=ecs.n_c,
                conflicts=[dict(c) for c in ecs.conflict_log],
            )

            # -- routing (with its preliminary dense pass)
            t0 = time.perf_counter()
            prelim = self.index.search(enrich_query(text, ecs), 5)
            features = featurize(text, ecs, prelim, s.history)
            if v.routing == "always_dense":
                decision = RoutingDecision(0.0, "dense", features)
            elif v.routing == "always_graph":
                decision = RoutingDecision(1.0, "graph", features)
            else:
                if self.router is None:
                    raise TurnError("adaptive routing requires a trained router model")
                decision = self.router.predict(features)
            record("route", t0, mode=v.routing, **decision.to_dict())

            # -- stage 2: retrieval
            retriever = self.retriever_for(v)
            rmem = mem.retrieval if v.memory else None
            t0 = time.perf_counter()
            bundle = retriever.retrieve(text, ecs, decision.route, rmem, now)
            record(
                "retrieve", t0, route_used=bundle.route_used,
                n_items=len(bundle.items),
            )

            # -- stage 3: generation
            backend = self.backend_for(v)
            task = classify_task(text, ecs)
            referenced = tuple(mem.context.referenced_entities) if v.memory else ()
            # noise draws key on (scope..., turn) and not on the variant or
            # session id, so every pipeline configuration faces the same
            # corruption pattern and deltas are attributable to the flags
            noise_key = s.noise_scope + (turn_index,)

            def generate(b: EvidenceBundle) -> CandidateResponse:
                req = GenerationRequest(
                    task=task, query=text, ecs=ecs, bundle=b,
                    referenced=referenced, noise_key=noise_key,
                )
                try:
                    return backend.generate(req)
                except BackendError as exc:
                    if v.memory:
                        mem.conv.append(text, f"[turn error: {exc}]", now)
                    raise TurnError(str(exc)) from exc

            t0 = time.perf_counter()
            resp = generate(bundle)
            record("generate", t0, task=task, n_claims=len(resp.claims))

            # -- stage 4: validation + remediation loop
            t0 = time.perf_counter()
            cycles = 0
            actions: list[str] = []
            if not v.validation:
                report = ValidationReport(1.0, 1.0, True, "unchecked", "none")
            else:
                report = validate(resp, bundle, ecs, self.vcfg)
                while report.verdict == "fail":
                    if v.remediation == "off":
                        actions.append("return_unverified")
                        break
                    if v.remediation == "refuse":
                        resp = CandidateResponse(text=REFUSAL_TEXT, task=task)
                        actions.append("refuse")
                        break
                    if v.remediation == "regenerate":
                        action = (
                            "regenerate"
                            if cycles < self.vcfg.max_remediation_cycles
                            else "return_unverified"
                        )
                    else:
                        action = remediation_action(report, cycles, self.vcfg)
                    if action == "return_unverified":
                        actions.append(action)
                        break
                    step = self._apply_remediation(
                        action, report, resp, bundle, ecs, text,
                        retriever, rmem, now, generate,
                    )
                    if step is None:
                        actions.append(f"{action}:unavailable")
                        break
                    actions.append(action)
                    resp, bundle = step
                    cycles += 1
                    report = validate(resp, bundle, ecs, self.vcfg)
            record(
                "validate", t0, verdict=report.verdict,
                failure_type=report.failure_type, v_fact=report.v_fact,
                v_entity=report.v_entity, cycles=cycles, actions=list(actions),
                skipped=not v.validation,
            )

            # -- stage 5: memory update
            t0 = time.perf_counter()
            if v.memory:
                q = Query(text=text, ts=now, constraints=cs.constraints)
                gated_update(mem, q, resp, report, gate_enabled=v.memory_gate)
                gate = (
                    "open"
                    if report.verdict in ("pass", "unchecked") or not v.memory_gate
                    else "closed"
                )
            else:
                gate = "disabled"
            record("memory_update", t0, gate=gate)

            s.history.append(
                RoutingHistoryEvent(
                    relational_kinds=frozenset(ecs.relational_kinds()),
                    failed=report.verdict == "fail",
                )
            )
            s.turn_counter = turn_index + 1
            s.audit.extend(records)

            total_ms = (time.perf_counter() - t_turn) * 1000.0
            return TurnResult(
                turn_index=turn_index,
                response=resp,
                display=display_text(resp.text),
                report=report,
                bundle=bundle,
                routing=decision,
                task=task,
                cycles=cycles,
                actions=tuple(actions),
                timings={r["stage"]: r["ms"] for r in records},
                total_ms=total_ms,
                badge=badge_for(report, cycles),
            )

    def _apply_remediation(
        self, action, report, resp, bundle, ecs, text, retriever, rmem, now, generate,
    ) -> Optional[tuple[CandidateResponse, EvidenceBundle]]:
        """Run one remediation action; None means it could not apply (no
        target entity, nothing relaxable, no issue spans) and the loop
        should stop with what it has."""
        if action == "retrieve_by_entity":
            if not report.missing_entities:
                return None
            extra = retriever.retrieve_by_entity(report.missing_entities[0])
            merged = merge_bundles(bundle, extra)
            return generate(merged), merged
        if action == "relax_threshold":
            gq = bundle.query_trace
            if gq is None:
                try:
                    gq = compile_constraints_to_graph_query(ecs)
                except CompileError:
                    return None
            try:
                relaxed = relax_threshold(gq)
            except GraphQueryError:
                return None
            fresh = retriever.retrieve(text, ecs, "graph", rmem, now, graph_query=relaxed)
            return generate(fresh), fresh
        if action == "local_correct":
            if not report.issues:
                return None
            return local_correct(resp, report.issues), bundle
        if action == "regenerate":
            return generate(bundle), bundle
        return None
