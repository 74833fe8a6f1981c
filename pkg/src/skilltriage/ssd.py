"""Layer 2: four-way decomposed semantic analysis.

Four focused questions (intent alignment, permission justification,
covert behavior, cross-file consistency) run concurrently against one
model backend; their scores combine as a fixed-weight sum. The weighted
score R2 drives the escalate-to-jury decision, failing closed when too
many sub-tasks break.
"""

from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .errors import GatewayError, SchemaError
from .gateway import ChatExchange, Gateway, extract_json
from .model import SkillPackage
from .prompts import load_template, truncate_content
from .triage import TriageVerdict

logger = logging.getLogger(__name__)

TASKS = (
    "intent_alignment",
    "permission_justification",
    "covert_behavior",
    "cross_file_consistency",
)

DEFAULT_TASK_WEIGHTS = {
    "intent_alignment": 0.35,
    "permission_justification": 0.25,
    "covert_behavior": 0.25,
    "cross_file_consistency": 0.15,
}

DEFAULT_ESCALATION_THRESHOLD = 0.4

RATING_TO_SCORE = {"none": 0.0, "low": 0.25, "medium": 0.5, "high": 0.75, "critical": 1.0}

SUBTASK_SCHEMA = {
    "type": "object",
    "required": ["risk_score", "rating", "evidence", "reasoning"],
    "properties": {
        "risk_score": {"type": "number", "minimum": 0, "maximum": 1},
        "rating": {"enum": list(RATING_TO_SCORE)},
        "evidence": {"type": "array", "items": {"type": "string"}},
        "reasoning": {"type": "string"},
    },
}


@dataclass(frozen=True)
class SubTaskResult:
    task: str
    s: float
    rating: str
    evidence: tuple[str, ...]
    unverified_evidence: tuple[str, ...]
    reasoning: str
    failed: bool = False

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "s": round(self.s, 6),
            "rating": self.rating,
            "evidence": list(self.evidence),
            "unverified_evidence": list(self.unverified_evidence),
            "reasoning": self.reasoning,
            "failed": self.failed,
        }


@dataclass(frozen=True)
class SsdConfig:
    backend: str = ""
    weights: dict = field(default_factory=lambda: dict(DEFAULT_TASK_WEIGHTS))
    escalation_threshold: float = DEFAULT_ESCALATION_THRESHOLD

    def __post_init__(self):
        if set(self.weights) != set(TASKS):
            raise ValueError(f"weights must cover exactly the tasks {TASKS}")
        total = sum(self.weights.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"task weights must sum to 1.0, got {total}")
        if not 0.0 < self.escalation_threshold < 1.0:
            raise ValueError("escalation_threshold must be in (0, 1)")


@dataclass(frozen=True)
class SsdOutcome:
    results: tuple[SubTaskResult, ...]
    R2: float
    decision: str  # clear_safe | escalate_jury
    cost_usd: float
    latency_ms: float

    @property
    def escalated(self) -> bool:
        return self.decision == "escalate_jury"

    def to_dict(self, *, include_timings: bool = True) -> dict:
        return {
            "results": [r.to_dict() for r in self.results],
            "R2": round(self.R2, 6),
            "decision": self.decision,
            "cost_usd": round(self.cost_usd, 9),
            "latency_ms": round(self.latency_ms, 3) if include_timings else 0.0,
        }


def skill_content_block(pkg: SkillPackage) -> str:
    """Full package text as shown to models, size-capped with a marker."""
    parts = [
        f"Skill id: {pkg.skill_id}",
        f"Name: {pkg.name}",
        f"Description: {pkg.description}",
        f"Requested env: {', '.join(pkg.requested_env) or '(none)'}",
        f"Required binaries: {', '.join(pkg.required_binaries) or '(none)'}",
        f"Declared permissions: {', '.join(pkg.declared_permissions) or '(none)'}",
        "",
        "--- SKILL.md ---",
        pkg.instruction_body,
    ]
    for script in pkg.scripts:
        parts.append(f"--- scripts: {script.rel_path} ({script.language}) ---")
        parts.append(script.content)
    return truncate_content("\n".join(parts))


def findings_block(verdict: TriageVerdict) -> str:
    if not verdict.findings:
        return f"Risk score r={verdict.r:.2f}. No pattern matches."
    lines = [f"Risk score r={verdict.r:.2f}. Pattern matches:"]
    for f in verdict.findings:
        lines.append(f"- [{f.category}] rule {f.rule_id} in {f.file}: {f.excerpt!r}")
    return "\n".join(lines)


def build_subtask_prompt(task: str, pkg: SkillPackage, verdict: TriageVerdict) -> tuple[str, str]:
    """(system_text, user_text) for one sub-task."""
    if task not in TASKS:
        raise ValueError(f"unknown sub-task {task!r}")
    system_text = load_template("ssd_system.txt")
    user_text = (
        load_template(f"ssd_{task}.txt")
        .replace("{SKILL_CONTENT}", skill_content_block(pkg))
        .replace("{L1_FINDINGS}", findings_block(verdict))
        .replace("{SCHEMA}", json.dumps(SUBTASK_SCHEMA, indent=2))
    )
    return system_text, user_text


def _verify_evidence(quotes: list[str], haystack: str) -> tuple[tuple[str, ...], tuple[str, ...]]:
    verified, unverified = [], []
    for q in quotes:
        (verified if q and q in haystack else unverified).append(q)
    return tuple(verified), tuple(unverified)


def interpret_subtask_response(task: str, text: str, haystack: str) -> SubTaskResult:
    """Parse one sub-task reply, salvaging a categorical rating when the
    numeric score is missing or out of range. Raises SchemaError when
    neither a usable score nor a usable rating is present.
    """
    obj = extract_json(text, {"type": "object"})
    raw_score = obj.get("risk_score")
    raw_rating = str(obj.get("rating", "")).lower()
    s: float | None = None
    if isinstance(raw_score, (int, float)) and 0.0 <= float(raw_score) <= 1.0:
        s = float(raw_score)
    rating = raw_rating if raw_rating in RATING_TO_SCORE else None
    if s is None and rating is not None:
        s = RATING_TO_SCORE[rating]
    if s is None:
        raise SchemaError("schema_violation", f"{task}: no usable risk_score or rating")
    if rating is None:
        rating = _rating_from_score(s)
    quotes = [str(q) for q in obj.get("evidence") or [] if isinstance(q, str)]
    verified, unverified = _verify_evidence(quotes, haystack)
    return SubTaskResult(
        task=task,
        s=s,
        rating=rating,
        evidence=verified,
        unverified_evidence=unverified,
        reasoning=str(obj.get("reasoning", "")),
    )


def _rating_from_score(s: float) -> str:
    if s < 0.125:
        return "none"
    if s < 0.375:
        return "low"
    if s < 0.625:
        return "medium"
    if s < 0.875:
        return "high"
    return "critical"


def _failed_result(task: str) -> SubTaskResult:
    return SubTaskResult(
        task=task, s=0.0, rating="none", evidence=(), unverified_evidence=(), reasoning="", failed=True
    )


def aggregate(results: dict[str, SubTaskResult], weights: dict[str, float]) -> float:
    """Weighted sum over successful sub-tasks, weights renormalized to the
    successful subset. 0.0 when every task failed (callers treat that as
    a pipeline error before aggregation matters).

    fsum keeps the sum correctly rounded so a score sitting exactly on
    the escalation threshold compares as equal to it.
    """
    ok = [t for t in TASKS if not results[t].failed]
    if not ok:
        return 0.0
    total_w = math.fsum(weights[t] for t in ok)
    return math.fsum(weights[t] * results[t].s for t in ok) / total_w


def run_ssd(
    pkg: SkillPackage,
    verdict: TriageVerdict,
    cfg: SsdConfig,
    gateway: Gateway,
    *,
    ledger_key: str | None = None,
) -> SsdOutcome:
    """Dispatch the four sub-tasks concurrently and aggregate.

    One retry per task on schema failure; a task that still fails is
    excluded from the weighted sum. With two or more failures the
    decision is forced to escalate_jury (fail closed); with all four
    failed a GatewayError propagates.
    """
    if verdict.decision != "escalate":
        raise ValueError("run_ssd requires an escalated triage verdict")
    haystack = skill_content_block(pkg)
    started = time.perf_counter()
    exchanges: list[ChatExchange] = []

    def run_task(task: str) -> SubTaskResult:
        system_text, user_text = build_subtask_prompt(task, pkg, verdict)
        for attempt in (1, 2):
            try:
                exchange = gateway.complete(
                    cfg.backend,
                    system_text,
                    user_text,
                    role=f"ssd:{task}",
                    skill_id=pkg.skill_id,
                    ledger_key=ledger_key,
                )
            except GatewayError as exc:
                logger.warning("ssd %s/%s backend failure: %s", pkg.skill_id, task, exc)
                return _failed_result(task)
            exchanges.append(exchange)
            try:
                return interpret_subtask_response(task, exchange.response_text, haystack)
            except SchemaError as exc:
                logger.warning(
                    "ssd %s/%s attempt %d unparseable: %s", pkg.skill_id, task, attempt, exc
                )
        return _failed_result(task)

    with ThreadPoolExecutor(max_workers=len(TASKS)) as pool:
        futures = {task: pool.submit(run_task, task) for task in TASKS}
        results = {task: fut.result() for task, fut in futures.items()}

    failed = sum(1 for r in results.values() if r.failed)
    if failed == len(TASKS):
        raise GatewayError("transport", "all four semantic sub-tasks failed", 0)

    r2 = aggregate(results, cfg.weights)
    if failed >= 2:
        decision = "escalate_jury"  # fail closed on degraded analysis
    else:
        decision = "escalate_jury" if r2 >= cfg.escalation_threshold else "clear_safe"
    latency_ms = (time.perf_counter() - started) * 1000.0
    return SsdOutcome(
        results=tuple(results[t] for t in TASKS),
        R2=r2,
        decision=decision,
        cost_usd=sum(e.cost_usd for e in exchanges),
        latency_ms=latency_ms,
    )
