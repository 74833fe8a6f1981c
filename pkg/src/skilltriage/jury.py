"""Layer 3: three-juror vote, debate on disagreement, majority resolution.

Round 1 collects independent verdicts. Unanimity ends the session; any
disagreement among valid votes triggers one structured debate round in
which each juror sees the others' Round 1 opinions verbatim and re-votes.
Majority (2 of 3) decides; without a majority the skill goes to a human.
With three valid binary votes a majority always exists, so the contested
outcome is reachable only through abstentions (failed juror calls).
"""

from __future__ import annotations

import dataclasses
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .errors import ConfigError, GatewayError, SchemaError
from .gateway import Gateway, extract_json
from .model import SkillPackage
from .prompts import load_template
from .ssd import SsdOutcome, findings_block, skill_content_block
from .triage import TriageVerdict

logger = logging.getLogger(__name__)

ATTACK_TAXONOMY = (
    "prompt_injection",
    "credential_theft",
    "remote_execution",
    "data_exfiltration",
    "typosquatting",
    "obfuscation",
    "social_engineering",
)

JUROR_SCHEMA = {
    "type": "object",
    "required": ["verdict", "confidence", "attack_types", "evidence", "reasoning"],
    "properties": {
        "verdict": {"enum": ["SAFE", "MALICIOUS"]},
        "confidence": {"type": "number", "minimum": 0, "maximum": 1},
        "attack_types": {"type": "array", "items": {"enum": list(ATTACK_TAXONOMY)}},
        "evidence": {"type": "array", "items": {"type": "string"}},
        "reasoning": {"type": "string"},
    },
}


@dataclass(frozen=True)
class JurorOpinion:
    juror: str
    round: int
    verdict: str | None  # SAFE | MALICIOUS | None when abstained
    confidence: float
    attack_types: tuple[str, ...]
    evidence: tuple[str, ...]
    unverified_evidence: tuple[str, ...]
    reasoning: str
    changed_from_round1: bool = False
    abstained: bool = False

    def to_dict(self) -> dict:
        return {
            "juror": self.juror,
            "round": self.round,
            "verdict": self.verdict,
            "confidence": round(self.confidence, 6),
            "attack_types": list(self.attack_types),
            "evidence": list(self.evidence),
            "unverified_evidence": list(self.unverified_evidence),
            "reasoning": self.reasoning,
            "changed_from_round1": self.changed_from_round1,
            "abstained": self.abstained,
        }


@dataclass(frozen=True)
class JuryVerdict:
    outcome: str  # unanimous_round1 | unanimous_after_debate | majority | contested_human_review
    final: str  # SAFE | MALICIOUS | NEEDS_HUMAN
    opinions: tuple[JurorOpinion, ...]
    debate_occurred: bool

    def final_round_opinions(self) -> tuple[JurorOpinion, ...]:
        last = max(o.round for o in self.opinions) if self.opinions else 1
        return tuple(o for o in self.opinions if o.round == last)

    def mean_confidence(self) -> float:
        """Mean confidence of final-round jurors agreeing with the final verdict."""
        agreeing = [
            o.confidence
            for o in self.final_round_opinions()
            if not o.abstained and o.verdict == self.final
        ]
        return sum(agreeing) / len(agreeing) if agreeing else 0.0

    def attack_type_union(self) -> tuple[str, ...]:
        seen: set[str] = set()
        for o in self.opinions:
            seen.update(o.attack_types)
        return tuple(sorted(seen))

    def to_dict(self) -> dict:
        return {
            "outcome": self.outcome,
            "final": self.final,
            "debate_occurred": self.debate_occurred,
            "opinions": [o.to_dict() for o in self.opinions],
        }


class DebateNeeded:
    """Sentinel returned by resolve() when Round 2 must run."""

    def __init__(self, opinions: tuple[JurorOpinion, ...]):
        self.opinions = opinions


def _abstained(juror: str, round_no: int) -> JurorOpinion:
    return JurorOpinion(
        juror=juror,
        round=round_no,
        verdict=None,
        confidence=0.0,
        attack_types=(),
        evidence=(),
        unverified_evidence=(),
        reasoning="",
        abstained=True,
    )


def interpret_juror_response(
    juror: str, round_no: int, text: str, haystack: str
) -> JurorOpinion:
    obj = extract_json(text, {"type": "object"})
    verdict = str(obj.get("verdict", "")).upper()
    if verdict not in ("SAFE", "MALICIOUS"):
        raise SchemaError("schema_violation", f"juror {juror}: verdict must be SAFE or MALICIOUS")
    confidence = obj.get("confidence")
    if not isinstance(confidence, (int, float)) or not 0.0 <= float(confidence) <= 1.0:
        confidence = 0.5
    raw_types = obj.get("attack_types") or []
    attack_types = tuple(t for t in (str(x) for x in raw_types) if t in ATTACK_TAXONOMY)
    quotes = [str(q) for q in obj.get("evidence") or [] if isinstance(q, str)]
    verified = tuple(q for q in quotes if q and q in haystack)
    unverified = tuple(q for q in quotes if not (q and q in haystack))
    return JurorOpinion(
        juror=juror,
        round=round_no,
        verdict=verdict,
        confidence=float(confidence),
        attack_types=attack_types,
        evidence=verified,
        unverified_evidence=unverified,
        reasoning=str(obj.get("reasoning", "")),
    )


def _l2_block(ssd: SsdOutcome | None) -> str:
    if ssd is None:
        return "(semantic analysis not run)"
    lines = [f"Aggregate semantic risk R2={ssd.R2:.3f} ({ssd.decision})"]
    for r in ssd.results:
        if r.failed:
            lines.append(f"- {r.task}: analysis failed")
        else:
            lines.append(f"- {r.task}: s={r.s:.2f} ({r.rating}) {r.reasoning}")
    return "\n".join(lines)


def _round1_prompt(pkg: SkillPackage, verdict: TriageVerdict, ssd: SsdOutcome | None) -> tuple[str, str]:
    system_text = load_template("jury_system.txt")
    user_text = (
        load_template("jury_round1.txt")
        .replace("{SKILL_CONTENT}", skill_content_block(pkg))
        .replace("{L1_FINDINGS}", findings_block(verdict))
        .replace("{L2_ANALYSIS}", _l2_block(ssd))
        .replace("{SCHEMA}", json.dumps(JUROR_SCHEMA, indent=2))
    )
    return system_text, user_text


def render_opinion(opinion: JurorOpinion) -> str:
    """One juror's opinion as quoted into the debate prompt. Reasoning is
    embedded byte-exactly."""
    lines = [
        f"--- Panelist {opinion.juror} (Round 1) ---",
        f"Verdict: {opinion.verdict} (confidence {opinion.confidence})",
        f"Attack types: {', '.join(opinion.attack_types) or '(none)'}",
        "Evidence:",
    ]
    for q in opinion.evidence + opinion.unverified_evidence:
        lines.append(f"- {q!r}")
    if not (opinion.evidence or opinion.unverified_evidence):
        lines.append("- (none)")
    lines.append("Reasoning (verbatim):")
    lines.append(opinion.reasoning)
    return "\n".join(lines)


def _round2_prompt(
    pkg: SkillPackage,
    verdict: TriageVerdict,
    ssd: SsdOutcome | None,
    own: JurorOpinion,
    others: list[JurorOpinion],
) -> tuple[str, str]:
    system_text = load_template("jury_system.txt")
    user_text = (
        load_template("jury_round2.txt")
        .replace("{SKILL_CONTENT}", skill_content_block(pkg))
        .replace("{L1_FINDINGS}", findings_block(verdict))
        .replace("{L2_ANALYSIS}", _l2_block(ssd))
        .replace("{OWN_VERDICT}", str(own.verdict))
        .replace("{OWN_CONFIDENCE}", str(own.confidence))
        .replace("{OTHER_OPINIONS}", "\n\n".join(render_opinion(o) for o in others))
        .replace("{SCHEMA}", json.dumps(JUROR_SCHEMA, indent=2))
    )
    return system_text, user_text


def _collect_votes(jurors, call, round_no) -> list[JurorOpinion]:
    """Run one juror call per roster entry concurrently, in roster order."""
    with ThreadPoolExecutor(max_workers=max(1, len(jurors))) as pool:
        futures = [pool.submit(call, name) for name in jurors]
        out = []
        for name, fut in zip(jurors, futures):
            try:
                out.append(fut.result())
            except Exception:  # defensive: a juror failure never kills the session
                logger.exception("juror %s round %d raised", name, round_no)
                out.append(_abstained(name, round_no))
    return out


def round1_vote(
    pkg: SkillPackage,
    verdict: TriageVerdict,
    ssd: SsdOutcome | None,
    jurors: tuple[str, ...],
    gateway: Gateway,
    *,
    ledger_key: str | None = None,
) -> list[JurorOpinion]:
    """Three concurrent independent votes; schema failure after one retry
    becomes an abstention."""
    if len(jurors) != 3 or len(set(jurors)) != 3:
        raise ConfigError(f"jury requires exactly 3 distinct backends, got {jurors}")
    haystack = skill_content_block(pkg)
    system_text, user_text = _round1_prompt(pkg, verdict, ssd)

    def call(name: str) -> JurorOpinion:
        for _ in (1, 2):
            try:
                exchange = gateway.complete(
                    name,
                    system_text,
                    user_text,
                    role="jury:r1",
                    skill_id=pkg.skill_id,
                    ledger_key=ledger_key,
                )
                return interpret_juror_response(name, 1, exchange.response_text, haystack)
            except (SchemaError, GatewayError) as exc:
                logger.warning("juror %s round 1 failed: %s", name, exc)
        return _abstained(name, 1)

    return _collect_votes(jurors, call, 1)


def resolve(opinions_r1: list[JurorOpinion]) -> JuryVerdict | DebateNeeded:
    """Round 1 resolution.

    All three valid and identical: unanimous. Two valid and identical
    with one abstention: resolved without debate but labeled majority
    (degraded quorum). Disagreement among valid votes: debate. One or
    zero valid votes: contested, straight to human review.
    """
    opinions = tuple(opinions_r1)
    valid = [o for o in opinions if not o.abstained]
    if len(valid) <= 1:
        return JuryVerdict("contested_human_review", "NEEDS_HUMAN", opinions, debate_occurred=False)
    verdicts = {o.verdict for o in valid}
    if len(verdicts) == 1:
        final = valid[0].verdict or "NEEDS_HUMAN"
        if len(valid) == 3:
            return JuryVerdict("unanimous_round1", final, opinions, debate_occurred=False)
        return JuryVerdict("majority", final, opinions, debate_occurred=False)
    return DebateNeeded(opinions)


def resolve_debate(
    opinions_r1: tuple[JurorOpinion, ...], opinions_r2: list[JurorOpinion]
) -> JuryVerdict:
    """Round 2 resolution over the re-votes (abstained Round 1 jurors do
    not re-vote and stay abstained)."""
    all_opinions = tuple(opinions_r1) + tuple(opinions_r2)
    valid = [o for o in opinions_r2 if not o.abstained]
    counts: dict[str, int] = {}
    for o in valid:
        counts[o.verdict] = counts.get(o.verdict, 0) + 1
    if valid and len(counts) == 1 and len(valid) == 3:
        return JuryVerdict("unanimous_after_debate", valid[0].verdict, all_opinions, debate_occurred=True)
    for verdict_value, n in counts.items():
        if n >= 2:
            return JuryVerdict("majority", verdict_value, all_opinions, debate_occurred=True)
    return JuryVerdict("contested_human_review", "NEEDS_HUMAN", all_opinions, debate_occurred=True)


def round2_debate(
    pkg: SkillPackage,
    verdict: TriageVerdict,
    ssd: SsdOutcome | None,
    opinions_r1: tuple[JurorOpinion, ...],
    gateway: Gateway,
    *,
    ledger_key: str | None = None,
) -> JuryVerdict:
    """Structured debate: every non-abstaining juror sees the other two
    Round 1 opinions verbatim and must maintain or change its verdict."""
    haystack = skill_content_block(pkg)
    participants = [o for o in opinions_r1 if not o.abstained]
    by_name = {o.juror: o for o in participants}

    def call(name: str) -> JurorOpinion:
        own = by_name[name]
        others = [o for o in participants if o.juror != name]
        system_text, user_text = _round2_prompt(pkg, verdict, ssd, own, others)
        for _ in (1, 2):
            try:
                exchange = gateway.complete(
                    name,
                    system_text,
                    user_text,
                    role="jury:r2",
                    skill_id=pkg.skill_id,
                    ledger_key=ledger_key,
                )
                opinion = interpret_juror_response(name, 2, exchange.response_text, haystack)
                if opinion.verdict != own.verdict:
                    opinion = dataclasses.replace(opinion, changed_from_round1=True)
                return opinion
            except (SchemaError, GatewayError) as exc:
                logger.warning("juror %s round 2 failed: %s", name, exc)
        return _abstained(name, 2)

    names = [o.juror for o in participants]
    opinions_r2 = _collect_votes(names, call, 2)
    return resolve_debate(opinions_r1, opinions_r2)


def run_jury(
    pkg: SkillPackage,
    verdict: TriageVerdict,
    ssd: SsdOutcome | None,
    jurors: tuple[str, ...],
    gateway: Gateway,
    *,
    ledger_key: str | None = None,
) -> JuryVerdict:
    """Full two-round session: vote, then debate only on disagreement."""
    started = time.perf_counter()
    opinions = round1_vote(pkg, verdict, ssd, jurors, gateway, ledger_key=ledger_key)
    outcome = resolve(opinions)
    if isinstance(outcome, DebateNeeded):
        outcome = round2_debate(pkg, verdict, ssd, outcome.opinions, gateway, ledger_key=ledger_key)
    logger.debug(
        "jury for %s: %s in %.0f ms", pkg.skill_id, outcome.outcome, (time.perf_counter() - started) * 1000
    )
    return outcome
