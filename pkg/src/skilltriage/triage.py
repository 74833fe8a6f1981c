"""Layer 1 risk scoring and the release/escalate decision.

The scorer consumes rule findings only: the strongest effective match
plus a small bonus per additional distinct category. Feature values are
attached to the verdict for downstream context and export but do not
move the score; swapping in a learned scorer is a config-level change.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from .errors import ParseError
from .features import FeatureConfig, FeatureVector, extract_all
from .model import SkillPackage, parse_skill
from .rules import DEFAULT_CATEGORY_WEIGHTS, Finding, RuleSet, scan_package

DEFAULT_TAU = 0.3
DEFAULT_COMPOUND_BONUS = 0.10
DEFAULT_PARTIAL_DISCOUNT = 1.0 / 3.0

# Deterministic order so the category bonus and "top category" tie-breaks
# never depend on finding order.
_CATEGORY_ORDER = sorted(DEFAULT_CATEGORY_WEIGHTS)


@dataclass(frozen=True)
class TriageConfig:
    tau: float = DEFAULT_TAU
    category_weights: dict = field(default_factory=lambda: dict(DEFAULT_CATEGORY_WEIGHTS))
    compound_bonus: float = DEFAULT_COMPOUND_BONUS
    partial_discount: float = DEFAULT_PARTIAL_DISCOUNT

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must be in (0, 1), got {self.tau}")
        for cat, w in self.category_weights.items():
            if not 0.0 <= w <= 1.0:
                raise ValueError(f"category weight out of range for {cat}: {w}")


@dataclass(frozen=True)
class TriageVerdict:
    skill_id: str
    r: float
    decision: str  # release_safe | escalate
    findings: tuple[Finding, ...]
    features: FeatureVector
    elapsed_ms: float

    @property
    def escalated(self) -> bool:
        return self.decision == "escalate"

    def top_category(self, cfg: TriageConfig | None = None) -> str | None:
        """Category of the strongest finding (effective weight, ties by name)."""
        cfg = cfg or TriageConfig()
        best: tuple[float, str] | None = None
        for f in self.findings:
            eff = effective_weight(f, cfg)
            # higher weight wins; on equal weight the alphabetically first
            # category wins, so the result is order-independent
            if best is None or eff > best[0] or (eff == best[0] and f.category < best[1]):
                best = (eff, f.category)
        return best[1] if best else None

    def to_dict(self, *, include_features: bool = False, include_timings: bool = True) -> dict:
        out = {
            "skill_id": self.skill_id,
            "r": round(self.r, 6),
            "decision": self.decision,
            "findings": [f.to_dict() for f in self.findings],
            "elapsed_ms": round(self.elapsed_ms, 3) if include_timings else 0.0,
        }
        if include_features:
            out["features"] = self.features.to_dict()
        return out


def effective_weight(finding: Finding, cfg: TriageConfig) -> float:
    w = finding.weight
    if finding.partial:
        w *= cfg.partial_discount
    return w


def score(findings: list[Finding] | tuple[Finding, ...], cfg: TriageConfig | None = None) -> float:
    """Risk score in [0, 1]: max effective finding weight plus a bonus of
    compound_bonus per distinct matched category beyond the first.
    Empty findings score 0.
    """
    cfg = cfg or TriageConfig()
    if not findings:
        return 0.0
    best = max(effective_weight(f, cfg) for f in findings)
    categories = {f.category for f in findings}
    return min(1.0, best + cfg.compound_bonus * (len(categories) - 1))


def triage(
    pkg: SkillPackage,
    rules: RuleSet,
    cfg: TriageConfig | None = None,
    feature_cfg: FeatureConfig | None = None,
) -> TriageVerdict:
    """Full Layer 1 pass: rule scan + feature extraction + decision."""
    cfg = cfg or TriageConfig()
    started = time.perf_counter()
    findings = scan_package(pkg, rules)
    features = extract_all(pkg, feature_cfg)
    r = score(findings, cfg)
    elapsed_ms = (time.perf_counter() - started) * 1000.0
    return TriageVerdict(
        skill_id=pkg.skill_id,
        r=r,
        decision="escalate" if r >= cfg.tau else "release_safe",
        findings=tuple(findings),
        features=features,
        elapsed_ms=elapsed_ms,
    )


def triage_path(
    path,
    rules: RuleSet,
    cfg: TriageConfig | None = None,
    feature_cfg: FeatureConfig | None = None,
) -> TriageVerdict:
    """Parse-then-triage; ParseError propagates for the caller's error
    accounting (unparseable packages are a separate verdict class)."""
    pkg = parse_skill(path)
    return triage(pkg, rules, cfg, feature_cfg)


__all__ = [
    "DEFAULT_TAU",
    "ParseError",
    "TriageConfig",
    "TriageVerdict",
    "effective_weight",
    "score",
    "triage",
    "triage_path",
]
