"""Per-skill scan reports: the three-layer evidence chain, the final
verdict, and the recommended action, in canonical JSON and Markdown."""

from __future__ import annotations

import json
from dataclasses import dataclass

from .jury import JuryVerdict
from .rules import Finding
from .ssd import SsdOutcome
from .triage import TriageVerdict

TOOL_VERSION = "0.1.0"

FINAL_VERDICTS = ("SAFE", "MALICIOUS", "NEEDS_HUMAN", "ERROR")
ACTIONS = ("allow", "block", "report", "escalate")

# Rule categories mapped onto the seven-type attack taxonomy used for
# report-level attack typing when no jury ran. Trigger/delay constructs
# are classified as obfuscation: they are concealment mechanics, not a
# distinct attack goal.
CATEGORY_TO_TAXONOMY = {
    "reverse_shell": "remote_execution",
    "credential_theft": "credential_theft",
    "data_exfiltration": "data_exfiltration",
    "obfuscation": "obfuscation",
    "prompt_injection": "prompt_injection",
    "social_engineering": "social_engineering",
    "conditional_trigger": "obfuscation",
    "time_delay": "obfuscation",
    "metadata_homoglyph": "typosquatting",
}

BLOCK_CONFIDENCE = 0.8


@dataclass(frozen=True)
class ScanReport:
    skill_id: str
    final_verdict: str
    resolved_at_layer: int
    attack_types: tuple[str, ...]
    recommended_action: str
    layer1: TriageVerdict | None
    layer2: SsdOutcome | None
    layer3: JuryVerdict | None
    error: dict | None
    total_cost_usd: float
    total_latency_ms: float
    rules_hash: str
    template_hash: str
    tool_version: str = TOOL_VERSION

    def to_dict(self, *, include_timings: bool = True, include_features: bool = False) -> dict:
        return {
            "skill_id": self.skill_id,
            "final_verdict": self.final_verdict,
            "resolved_at_layer": self.resolved_at_layer,
            "attack_types": list(self.attack_types),
            "recommended_action": self.recommended_action,
            "layer1": self.layer1.to_dict(
                include_features=include_features, include_timings=include_timings
            )
            if self.layer1
            else None,
            "layer2": self.layer2.to_dict(include_timings=include_timings) if self.layer2 else None,
            "layer3": self.layer3.to_dict() if self.layer3 else None,
            "error": self.error,
            "total_cost_usd": round(self.total_cost_usd, 9),
            "total_latency_ms": round(self.total_latency_ms, 3) if include_timings else 0.0,
            "tool_version": self.tool_version,
            "rules_hash": self.rules_hash,
            "template_hash": self.template_hash,
        }

    def to_json(self, **kwargs) -> str:
        return canonical_json(self.to_dict(**kwargs))


def canonical_json(obj) -> str:
    """Stable single-line serialization; equal dicts give equal bytes."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def infer_attack_types(findings: tuple[Finding, ...]) -> tuple[str, ...]:
    return tuple(sorted({CATEGORY_TO_TAXONOMY[f.category] for f in findings}))


def _confidence_proxy(
    final_verdict: str,
    layer1: TriageVerdict | None,
    layer2: SsdOutcome | None,
    layer3: JuryVerdict | None,
) -> float:
    if layer3 is not None:
        return layer3.mean_confidence()
    if layer2 is not None:
        return layer2.R2
    return layer1.r if layer1 else 0.0


def recommended_action(final_verdict: str, confidence: float) -> str:
    if final_verdict == "SAFE":
        return "allow"
    if final_verdict == "MALICIOUS":
        return "block" if confidence >= BLOCK_CONFIDENCE else "report"
    # NEEDS_HUMAN and ERROR both route to a person.
    return "escalate"


def assemble_report(
    skill_id: str,
    *,
    layer1: TriageVerdict | None = None,
    layer2: SsdOutcome | None = None,
    layer3: JuryVerdict | None = None,
    error: dict | None = None,
    total_cost_usd: float = 0.0,
    rules_hash: str = "",
    template_hash: str = "",
) -> ScanReport:
    """Deterministic report assembly from whatever layers ran.

    Layer artifacts must be consistent (no layer3 without layer2, no
    layer2 without an escalated layer1); violations raise ValueError as
    they indicate a pipeline bug, not bad user input.
    """
    if layer3 is not None and layer2 is None:
        raise ValueError("layer3 artifact without layer2")
    if layer2 is not None and (layer1 is None or not layer1.escalated):
        raise ValueError("layer2 artifact without an escalated layer1 verdict")

    if error is not None:
        final = "ERROR"
        resolved = error.get("layer", 1)
    elif layer3 is not None:
        final = layer3.final
        resolved = 3
    elif layer2 is not None:
        if layer2.escalated:
            # Layer cap stopped the pipeline here; an unresolved
            # escalation is treated as a detection.
            final = "MALICIOUS"
        else:
            final = "SAFE"
        resolved = 2
    elif layer1 is not None:
        final = "MALICIOUS" if layer1.escalated else "SAFE"
        resolved = 1
    else:
        raise ValueError("no layer artifacts and no error")

    if final == "MALICIOUS":
        if layer1 is not None and not layer1.findings:
            raise ValueError("malicious verdict with an empty layer-1 evidence chain")
        if layer3 is not None and not layer3.opinions:
            raise ValueError("malicious verdict with an empty jury record")

    if layer3 is not None and final == "MALICIOUS":
        attack_types = layer3.attack_type_union()
        if not attack_types and layer1 is not None:
            attack_types = infer_attack_types(layer1.findings)
    elif layer1 is not None and final != "SAFE":
        attack_types = infer_attack_types(layer1.findings)
    else:
        attack_types = ()

    confidence = _confidence_proxy(final, layer1, layer2, layer3)
    latency = (layer1.elapsed_ms if layer1 else 0.0) + (layer2.latency_ms if layer2 else 0.0)

    return ScanReport(
        skill_id=skill_id,
        final_verdict=final,
        resolved_at_layer=resolved,
        attack_types=attack_types,
        recommended_action=recommended_action(final, confidence),
        layer1=layer1,
        layer2=layer2,
        layer3=layer3,
        error=error,
        total_cost_usd=total_cost_usd,
        total_latency_ms=latency,
        rules_hash=rules_hash,
        template_hash=template_hash,
    )


def _md_finding(f: Finding) -> str:
    return (
        f"- `[{f.category}]` rule `{f.rule_id}` in `{f.file}` "
        f"@ bytes {f.byte_span[0]}-{f.byte_span[1]}: `{f.excerpt}`"
    )


def render_markdown(report: ScanReport, *, include_timings: bool = False) -> str:
    """Human-readable report with the evidence chain ordered layer 1 -> 3."""
    lines = [
        f"# Scan report: {report.skill_id}",
        "",
        f"**Final verdict:** {report.final_verdict} (resolved at layer {report.resolved_at_layer})",
        f"**Recommended action:** {report.recommended_action}",
        f"**Attack types:** {', '.join(report.attack_types) or '(none)'}",
        f"**Total cost:** ${report.total_cost_usd:.6f}",
    ]
    if include_timings:
        lines.append(f"**Total latency:** {report.total_latency_ms:.1f} ms")
    if report.error:
        lines += ["", f"**Error:** {report.error.get('kind')}: {report.error.get('detail', '')}"]
    lines += ["", "## Evidence chain", ""]

    if report.layer1 is not None:
        v = report.layer1
        lines.append(f"### Layer 1 - static triage (r={v.r:.2f}, {v.decision})")
        if v.findings:
            lines.extend(_md_finding(f) for f in v.findings)
        else:
            lines.append("No static findings.")
        lines.append("")

    if report.layer2 is not None:
        o = report.layer2
        lines.append(f"### Layer 2 - semantic decomposition (R2={o.R2:.3f}, {o.decision})")
        for r in o.results:
            if r.failed:
                lines.append(f"- **{r.task}**: analysis failed")
                continue
            lines.append(f"- **{r.task}**: s={r.s:.2f} ({r.rating}) {r.reasoning}")
            for q in r.evidence:
                lines.append(f"  - evidence: {q!r}")
            for q in r.unverified_evidence:
                lines.append(f"  - evidence: {q!r} [unverified]")
        lines.append("")

    if report.layer3 is not None:
        j = report.layer3
        lines.append(f"### Layer 3 - jury ({j.outcome}, final {j.final})")
        for op in j.opinions:
            if op.abstained:
                lines.append(f"- Round {op.round} {op.juror}: abstained")
                continue
            changed = " [changed]" if op.changed_from_round1 else ""
            lines.append(
                f"- Round {op.round} {op.juror}: {op.verdict} "
                f"(confidence {op.confidence:.2f}){changed} {op.reasoning}"
            )
            for q in op.evidence:
                lines.append(f"  - evidence: {q!r}")
            for q in op.unverified_evidence:
                lines.append(f"  - evidence: {q!r} [unverified]")
        lines.append("")

    return "\n".join(lines)
