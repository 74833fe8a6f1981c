"""Regex rule library and package scanner (static triage, module A).

Rules are plain regexes compiled case-insensitively. The dialect is
restricted to constructs with linear-time matching behaviour: no
backreferences and no lookaround, so a hostile package cannot trigger
catastrophic backtracking during a corpus scan.
"""

from __future__ import annotations

import hashlib
import logging
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import yaml

from .errors import ConfigError
from .model import SkillPackage

logger = logging.getLogger(__name__)

CATEGORIES = (
    "reverse_shell",
    "credential_theft",
    "data_exfiltration",
    "obfuscation",
    "prompt_injection",
    "social_engineering",
    "conditional_trigger",
    "time_delay",
    "metadata_homoglyph",
)

# Default per-category weights, used when a rule does not set its own.
# The scheme is calibrated so the five canonical evasion fixtures land on
# their published L1 scores; see TriageConfig for the combination rule.
DEFAULT_CATEGORY_WEIGHTS = {
    "reverse_shell": 0.90,
    "credential_theft": 0.90,
    "data_exfiltration": 0.30,
    "obfuscation": 0.35,
    "prompt_injection": 0.70,
    "social_engineering": 0.50,
    "conditional_trigger": 0.70,
    "time_delay": 0.70,
    "metadata_homoglyph": 0.40,
}

_ALLOWED_KEYS = {"id", "category", "pattern", "weight", "partial", "description", "scope"}
_SCOPES = ("all", "metadata")

# Constructs whose presence breaks the linear-time guarantee.
_FORBIDDEN_CONSTRUCTS = (
    (re.compile(r"\(\?=|\(\?!|\(\?<=|\(\?<!"), "lookaround"),
    (re.compile(r"\(\?P="), "named backreference"),
    (re.compile(r"(?<!\\)\\[1-9]"), "backreference"),
)


@dataclass(frozen=True)
class Rule:
    id: str
    category: str
    pattern: str
    weight: float
    partial: bool
    description: str
    scope: str  # "all" scans every file; "metadata" only the pseudo-file
    compiled: re.Pattern

    def __hash__(self):
        return hash(self.id)


@dataclass(frozen=True)
class Finding:
    """One rule match inside one file of a package."""

    rule_id: str
    category: str
    file: str
    byte_span: tuple[int, int]
    excerpt: str
    weight: float
    partial: bool = False

    def to_dict(self) -> dict:
        return {
            "rule_id": self.rule_id,
            "category": self.category,
            "file": self.file,
            "byte_span": list(self.byte_span),
            "excerpt": self.excerpt,
            "weight": self.weight,
            "partial": self.partial,
        }


class RuleSet:
    """Immutable compiled rule collection, shareable across scan workers."""

    def __init__(self, rules: list[Rule], content_hash: str, source: str):
        self.rules = tuple(rules)
        self.content_hash = content_hash
        self.source = source
        self._by_scope = {
            "all": tuple(r for r in self.rules if r.scope == "all"),
            "metadata": tuple(r for r in self.rules if r.scope == "metadata"),
        }

    def __len__(self):
        return len(self.rules)

    def categories(self) -> set[str]:
        return {r.category for r in self.rules}


def default_rules_path() -> Path:
    return Path(str(resources.files("skilltriage").joinpath("data/rules.yaml")))


def _check_linear_safe(pattern: str) -> str | None:
    for rx, label in _FORBIDDEN_CONSTRUCTS:
        if rx.search(pattern):
            return label
    return None


def load_rules(path: str | Path | None = None, *, category_weights: dict | None = None) -> RuleSet:
    """Load and compile a YAML rule file.

    Raises ConfigError naming the first offending rule. ``None`` loads
    the bundled default library. Rules that omit ``weight`` inherit the
    category default from ``category_weights``.
    """
    rules_path = Path(path) if path is not None else default_rules_path()
    weights = dict(DEFAULT_CATEGORY_WEIGHTS)
    if category_weights:
        weights.update(category_weights)
    try:
        raw_bytes = rules_path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read rules file {rules_path}: {exc}") from exc
    try:
        doc = yaml.safe_load(raw_bytes) or []
    except yaml.YAMLError as exc:
        raise ConfigError(f"rules file is not valid YAML: {exc}") from exc
    if not isinstance(doc, list):
        raise ConfigError("rules file must be a YAML list of rule entries")

    rules: list[Rule] = []
    seen_ids: set[str] = set()
    for idx, entry in enumerate(doc):
        if not isinstance(entry, dict):
            raise ConfigError(f"rule #{idx} is not a mapping")
        unknown = set(entry) - _ALLOWED_KEYS
        if unknown:
            raise ConfigError(
                f"rule #{idx} has unknown keys: {sorted(unknown)}", rule_id=str(entry.get("id", idx))
            )
        rule_id = str(entry.get("id", "")).strip()
        if not rule_id:
            raise ConfigError(f"rule #{idx} is missing an id")
        if rule_id in seen_ids:
            raise ConfigError(f"duplicate rule id {rule_id!r}", rule_id=rule_id)
        seen_ids.add(rule_id)
        category = entry.get("category")
        if category not in CATEGORIES:
            raise ConfigError(f"unknown category {category!r}", rule_id=rule_id)
        pattern = entry.get("pattern")
        if not isinstance(pattern, str) or not pattern:
            raise ConfigError("missing or empty pattern", rule_id=rule_id)
        bad = _check_linear_safe(pattern)
        if bad:
            raise ConfigError(f"pattern uses forbidden construct ({bad})", rule_id=rule_id)
        try:
            compiled = re.compile(pattern, re.IGNORECASE)
        except re.error as exc:
            raise ConfigError(f"pattern does not compile: {exc}", rule_id=rule_id) from exc
        weight = entry.get("weight", weights[category])
        if not isinstance(weight, (int, float)) or not 0.0 <= float(weight) <= 1.0:
            raise ConfigError("weight out of range [0, 1]", rule_id=rule_id)
        scope = entry.get("scope", "all")
        if scope not in _SCOPES:
            raise ConfigError(f"unknown scope {scope!r}", rule_id=rule_id)
        rules.append(
            Rule(
                id=rule_id,
                category=category,
                pattern=pattern,
                weight=float(weight),
                partial=bool(entry.get("partial", False)),
                description=str(entry.get("description", "")),
                scope=scope,
                compiled=compiled,
            )
        )

    if not rules:
        logger.warning("rules file %s contains no rules", rules_path)
    content_hash = "sha256:" + hashlib.sha256(raw_bytes).hexdigest()
    return RuleSet(rules, content_hash, str(rules_path))


def _scan_text(file_label: str, text: str, rules: tuple[Rule, ...], findings: list[Finding]) -> None:
    if not text:
        return
    is_ascii = text.isascii()
    for rule in rules:
        for match in rule.compiled.finditer(text):
            start, end = match.start(), match.end()
            if start == end:
                continue
            if is_ascii:
                b_start, b_end = start, end
            else:
                b_start = len(text[:start].encode("utf-8"))
                b_end = b_start + len(text[start:end].encode("utf-8"))
            findings.append(
                Finding(
                    rule_id=rule.id,
                    category=rule.category,
                    file=file_label,
                    byte_span=(b_start, b_end),
                    excerpt=match.group(0)[:120],
                    weight=rule.weight,
                    partial=rule.partial,
                )
            )


def scan_package(pkg: SkillPackage, rules: RuleSet) -> list[Finding]:
    """Match every rule against the instruction body, scripts, and the
    synthesized metadata pseudo-file. Deterministic: findings are sorted
    by (file, span, rule id).
    """
    findings: list[Finding] = []
    _scan_text("SKILL.md", pkg.instruction_body, rules._by_scope["all"], findings)
    _scan_text("metadata", pkg.metadata_text(), rules.rules, findings)
    for script in pkg.scripts:
        _scan_text(script.rel_path, script.content, rules._by_scope["all"], findings)
    findings.sort(key=lambda f: (f.file, f.byte_span[0], f.byte_span[1], f.rule_id))
    return findings
