"""Structural, metadata, and surface feature extraction (modules B-D).

Produces the 31-candidate feature vector of which 15 are marked selected.
The default scorer does not consume these values; they ride along on the
triage verdict for semantic-analysis context and for training-data export.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path
from urllib.parse import urlparse

import yaml

from ._kernels import min_levenshtein, shannon_entropy_bits
from .errors import ConfigError
from .model import SkillPackage

# Confusable codepoints folded to ASCII before name comparison. Covers the
# Cyrillic and Greek look-alikes seen in typosquatting campaigns plus the
# fullwidth ASCII block.
CONFUSABLES = {
    # Cyrillic
    "а": "a", "в": "b", "е": "e", "з": "3", "и": "u", "к": "k", "м": "m",
    "н": "h", "о": "o", "р": "p", "с": "c", "т": "t", "у": "y", "х": "x",
    "ь": "b", "і": "i", "ј": "j", "ѕ": "s", "ԁ": "d", "ԛ": "q", "ԝ": "w",
    "А": "A", "В": "B", "Е": "E", "К": "K", "М": "M", "Н": "H", "О": "O",
    "Р": "P", "С": "C", "Т": "T", "Х": "X",
    # Greek
    "α": "a", "β": "b", "ε": "e", "η": "n", "ι": "i", "κ": "k", "ν": "v",
    "ο": "o", "ρ": "p", "τ": "t", "υ": "u", "χ": "x", "Α": "A", "Β": "B",
    "Ε": "E", "Ζ": "Z", "Η": "H", "Ι": "I", "Κ": "K", "Μ": "M", "Ν": "N",
    "Ο": "O", "Ρ": "P", "Τ": "T", "Υ": "Y", "Χ": "X",
}
# Fullwidth ASCII variants (U+FF01..U+FF5E map onto U+0021..U+007E).
CONFUSABLES.update({chr(0xFF01 + i): chr(0x21 + i) for i in range(0x5E)})

DEFAULT_URGENCY_TERMS = (
    "immediately",
    "must",
    "urgent",
    "urgently",
    "asap",
    "critical",
    "right away",
    "do not tell",
    "do not mention",
)

DEFAULT_SENSITIVE_PATHS = ("~/.env", "~/.ssh", "~/.aws", "~/.config")

DEFAULT_DANGEROUS_BINARIES = (
    "curl", "wget", "nc", "ncat", "socat", "base64", "openssl", "ssh", "scp",
)

SENSITIVE_ENV_MARKERS = ("key", "token", "secret")

# Default 15-of-31 selection: the named primary candidates minus the
# instruction/description length ratio.
DEFAULT_SELECTED = (
    "syscall_count",
    "network_op_count",
    "env_access_count",
    "dynamic_exec_count",
    "encoded_literal_count",
    "max_string_entropy_bits",
    "mean_string_entropy_bits",
    "min_name_edit_distance",
    "requests_sensitive_env",
    "requires_dangerous_binary",
    "instruction_len_chars",
    "external_url_count",
    "permission_request_count",
    "sensitive_path_mentions",
    "urgency_density",
)


@dataclass(frozen=True)
class FeatureVector:
    """All 31 candidate features plus the selection mask."""

    # structural (scripts)
    syscall_count: int = 0
    network_op_count: int = 0
    env_access_count: int = 0
    dynamic_exec_count: int = 0
    encoded_literal_count: int = 0
    max_string_entropy_bits: float = 0.0
    mean_string_entropy_bits: float = 0.0
    script_count: int = 0
    script_bytes: int = 0
    comment_ratio: float = 0.0
    shebang_present: bool = False
    hex_literal_count: int = 0
    pipe_to_shell_count: int = 0
    conditional_depth: int = 0
    sleep_call_count: int = 0
    # metadata (frontmatter)
    min_name_edit_distance: int = 0
    requests_sensitive_env: bool = False
    requires_dangerous_binary: bool = False
    non_ascii_name: bool = False
    frontmatter_key_count: int = 0
    author_name_len: int = 0
    version_present: bool = False
    # surface (instruction body)
    instruction_len_chars: int = 0
    external_url_count: int = 0
    permission_request_count: int = 0
    sensitive_path_mentions: int = 0
    urgency_density: float = 0.0
    instr_to_desc_ratio: float = 0.0
    markdown_code_block_count: int = 0
    distinct_domain_count: int = 0
    dotfile_mention_count: int = 0
    # mask
    selected: tuple[str, ...] = DEFAULT_SELECTED

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            if f.name == "selected":
                continue
            out[f.name] = getattr(self, f.name)
        out["selected"] = list(self.selected)
        return out


FEATURE_NAMES = tuple(f.name for f in fields(FeatureVector) if f.name != "selected")
assert len(FEATURE_NAMES) == 31


@dataclass(frozen=True)
class FeatureConfig:
    selected: tuple[str, ...] = DEFAULT_SELECTED
    urgency_terms: tuple[str, ...] = DEFAULT_URGENCY_TERMS
    sensitive_paths: tuple[str, ...] = DEFAULT_SENSITIVE_PATHS
    dangerous_binaries: tuple[str, ...] = DEFAULT_DANGEROUS_BINARIES
    popular_names: tuple[str, ...] = ()


def load_popular_names(path: str | Path | None = None) -> tuple[str, ...]:
    """Bundled (or user-provided) top-popular skill name list."""
    if path is None:
        text = resources.files("skilltriage").joinpath("data/popular_names.txt").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    names = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    return tuple(names)


def load_feature_config(path: str | Path | None = None) -> FeatureConfig:
    """Load features.yaml; None gives the bundled defaults."""
    if path is None:
        return FeatureConfig(popular_names=load_popular_names())
    try:
        doc = yaml.safe_load(Path(path).read_text("utf-8")) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot load feature config {path}: {exc}") from exc
    selected = tuple(doc.get("selected", DEFAULT_SELECTED))
    unknown = set(selected) - set(FEATURE_NAMES)
    if unknown:
        raise ConfigError(f"unknown feature names in selection: {sorted(unknown)}")
    if len(set(selected)) != 15:
        raise ConfigError(f"feature selection must name exactly 15 features, got {len(set(selected))}")
    names_file = doc.get("popular_names")
    if names_file:
        names_path = Path(names_file)
        if not names_path.is_absolute():
            names_path = Path(path).parent / names_path
        popular = load_popular_names(names_path)
    else:
        popular = load_popular_names()
    return FeatureConfig(
        selected=selected,
        urgency_terms=tuple(doc.get("urgency_terms", DEFAULT_URGENCY_TERMS)),
        sensitive_paths=tuple(doc.get("sensitive_paths", DEFAULT_SENSITIVE_PATHS)),
        dangerous_binaries=tuple(doc.get("dangerous_binaries", DEFAULT_DANGEROUS_BINARIES)),
        popular_names=popular,
    )


def normalize_confusables(name: str) -> str:
    """Case-folded name with confusable codepoints mapped to ASCII."""
    return "".join(CONFUSABLES.get(ch, ch) for ch in name).casefold()


# ---------------------------------------------------------------------------
# Script lexing. A lightweight per-language splitter that separates code,
# string literals, and comments so literal contents feed the entropy and
# encoded-literal features instead of the call counters. The counter
# contract is the module boundary; a grammar-level parser can replace this
# lexer without touching callers.
# ---------------------------------------------------------------------------


def split_source(text: str, language: str) -> tuple[str, list[str], str]:
    """Return (code_text, string_literals, comment_text) for a script."""
    if language == "python":
        return _lex(text, line_comment="#", triple_quotes=True, backtick=False, block_comment=False)
    if language == "bash":
        return _lex(
            text,
            line_comment="#",
            triple_quotes=False,
            backtick=False,
            block_comment=False,
            single_quote_escapes=False,
        )
    if language == "javascript":
        return _lex(text, line_comment="//", triple_quotes=False, backtick=True, block_comment=True)
    # Unknown languages: no call counting, but quoted spans still feed the
    # literal-based features.
    _, literals, comments = _lex(
        text, line_comment=None, triple_quotes=False, backtick=False, block_comment=False
    )
    return "", literals, comments


def _lex(text, *, line_comment, triple_quotes, backtick, block_comment, single_quote_escapes=True):
    code: list[str] = []
    literals: list[str] = []
    comments: list[str] = []
    i, n = 0, len(text)
    quotes = "\"'" + ("`" if backtick else "")
    while i < n:
        ch = text[i]
        if line_comment and text.startswith(line_comment, i):
            end = text.find("\n", i)
            end = n if end < 0 else end
            comments.append(text[i:end])
            i = end
            continue
        if block_comment and text.startswith("/*", i):
            end = text.find("*/", i + 2)
            end = n if end < 0 else end + 2
            comments.append(text[i:end])
            i = end
            continue
        if ch in quotes:
            if triple_quotes and text.startswith(ch * 3, i):
                quote, qlen = ch * 3, 3
            else:
                quote, qlen = ch, 1
            honor_escapes = single_quote_escapes or ch != "'"
            j = i + qlen
            buf: list[str] = []
            while j < n:
                if honor_escapes and text[j] == "\\":
                    buf.append(text[j : j + 2])
                    j += 2
                    continue
                if text.startswith(quote, j):
                    j += qlen
                    break
                buf.append(text[j])
                j += 1
            literals.append("".join(buf))
            code.append(" ")  # keep token boundaries stable
            i = j
            continue
        code.append(ch)
        i += 1
    return "".join(code), literals, comments


_SYSCALL_RE = re.compile(
    r"os\.system\(|subprocess\.|\bpopen\(|child_process|execSync|spawnSync|os\.exec[a-z]*\(|os\.spawn[a-z]*\(",
    re.IGNORECASE,
)
_NETWORK_RE = re.compile(
    r"requests\.|urllib|http\.client|\bsocket\.|\bfetch\(|axios|XMLHttpRequest|websocket|\bcurl\b|\bwget\b|\bnc\b|netcat",
    re.IGNORECASE,
)
_ENV_RE = re.compile(
    r"os\.environ|os\.getenv|process\.env|\bgetenv\(|\bprintenv\b|\$\{?[A-Z_]{3,}\}?",
)
_DYNEXEC_RE = re.compile(
    r"\beval[\s(]|\bexec\(|subprocess\.(run|call|Popen|check_output|check_call)\(|os\.system\(|new\s+Function\(",
    re.IGNORECASE,
)
_PIPE_SHELL_RE = re.compile(r"\|\s*(ba|z|da)?sh\b")
_SLEEP_RE = re.compile(r"time\.sleep\(|\bsleep\s+\d|setTimeout\(|setInterval\(", re.IGNORECASE)
_CONDITIONAL_RE = re.compile(r"\bif\b|\belif\b|\bcase\b")
_BASE64_LITERAL_RE = re.compile(r"[A-Za-z0-9+/=\s]+")
_HEX_LITERAL_RE = re.compile(r"(0x)?[0-9a-fA-F]{16,}")
_HEX_ESCAPE_RUN_RE = re.compile(r"(\\x[0-9a-fA-F]{2}){8,}")

MIN_ENTROPY_LITERAL_BYTES = 16


def _looks_encoded(literal: str) -> bool:
    s = literal.strip()
    if len(s) < 20:
        return False
    if _HEX_ESCAPE_RUN_RE.search(s):
        return True
    if _HEX_LITERAL_RE.fullmatch(s):
        return True
    if _BASE64_LITERAL_RE.fullmatch(s):
        compact = re.sub(r"\s+", "", s)
        if len(compact) >= 20:
            has_digit = any(c.isdigit() for c in compact)
            has_lower = any(c.islower() for c in compact)
            has_upper = any(c.isupper() for c in compact)
            return has_digit and has_lower and has_upper
    return False


def extract_structural(pkg: SkillPackage) -> dict:
    """Call/entropy counters over every script, literal-boundary aware."""
    out = {
        "syscall_count": 0,
        "network_op_count": 0,
        "env_access_count": 0,
        "dynamic_exec_count": 0,
        "encoded_literal_count": 0,
        "max_string_entropy_bits": 0.0,
        "mean_string_entropy_bits": 0.0,
        "script_count": len(pkg.scripts),
        "script_bytes": sum(s.size_bytes for s in pkg.scripts),
        "comment_ratio": 0.0,
        "shebang_present": any(s.content.startswith("#!") for s in pkg.scripts),
        "hex_literal_count": 0,
        "pipe_to_shell_count": 0,
        "conditional_depth": 0,
        "sleep_call_count": 0,
    }
    entropies: list[float] = []
    total_chars = 0
    comment_chars = 0
    for script in pkg.scripts:
        code, literals, comments = split_source(script.content, script.language)
        total_chars += len(script.content)
        comment_chars += sum(len(c) for c in comments)
        if code:
            out["syscall_count"] += len(_SYSCALL_RE.findall(code))
            out["network_op_count"] += len(_NETWORK_RE.findall(code))
            out["env_access_count"] += len(_ENV_RE.findall(code))
            out["dynamic_exec_count"] += len(_DYNEXEC_RE.findall(code))
            out["pipe_to_shell_count"] += len(_PIPE_SHELL_RE.findall(code))
            out["sleep_call_count"] += len(_SLEEP_RE.findall(code))
            out["conditional_depth"] = max(
                out["conditional_depth"], len(_CONDITIONAL_RE.findall(code))
            )
        for literal in literals:
            raw = literal.encode("utf-8")
            if len(raw) >= MIN_ENTROPY_LITERAL_BYTES:
                entropies.append(shannon_entropy_bits(raw))
            if _looks_encoded(literal):
                out["encoded_literal_count"] += 1
            if _HEX_LITERAL_RE.fullmatch(literal.strip()) or _HEX_ESCAPE_RUN_RE.search(literal):
                out["hex_literal_count"] += 1
    if entropies:
        out["max_string_entropy_bits"] = max(entropies)
        out["mean_string_entropy_bits"] = sum(entropies) / len(entropies)
    if total_chars:
        out["comment_ratio"] = comment_chars / total_chars
    return out


def extract_metadata(pkg: SkillPackage, popular_names: list[str] | tuple[str, ...]) -> dict:
    """Reputation features from the frontmatter (module C)."""
    if not popular_names:
        raise ValueError("popular_names must be non-empty")
    normalized = normalize_confusables(pkg.name)
    candidates = [normalize_confusables(n) for n in popular_names]
    env_blob = " ".join(pkg.requested_env).lower()
    binaries = {b.lower() for b in pkg.required_binaries}
    return {
        "min_name_edit_distance": min_levenshtein(normalized, candidates),
        "requests_sensitive_env": any(m in env_blob for m in SENSITIVE_ENV_MARKERS),
        "requires_dangerous_binary": bool(binaries & set(DEFAULT_DANGEROUS_BINARIES)),
        "non_ascii_name": not pkg.name.isascii(),
        "frontmatter_key_count": len(pkg.raw_frontmatter),
        "author_name_len": len(pkg.author),
        "version_present": bool(pkg.version),
    }


_URL_RE = re.compile(r"https?://[^\s)>\]\"']+", re.IGNORECASE)
_WORD_RE = re.compile(r"[A-Za-z0-9_']+")
_DOTFILE_RE = re.compile(r"(?:~|\$HOME)/\.[\w.\-/]+|\B\.(?:env|ssh|aws|config|netrc|bashrc|zshrc|profile)\b")


def tokenize(text: str) -> list[str]:
    """The documented urgency tokenizer: split on whitespace/punctuation,
    keeping word-internal apostrophes and underscores."""
    return _WORD_RE.findall(text)


def urgency_density(body: str, terms: tuple[str, ...]) -> float:
    """Urgency tokens over total tokens, in [0, 1].

    Multi-word terms are counted as phrases (one urgency token per
    occurrence) before single-word matching; 0.0 for an empty body.
    """
    tokens = [t.lower() for t in tokenize(body)]
    if not tokens:
        return 0.0
    lowered = body.lower()
    phrase_hits = 0
    single_terms = set()
    for term in terms:
        if " " in term:
            phrase_hits += lowered.count(term.lower())
        else:
            single_terms.add(term.lower())
    word_hits = sum(1 for t in tokens if t in single_terms)
    return min(1.0, (phrase_hits + word_hits) / len(tokens))


def extract_surface(pkg: SkillPackage, cfg: FeatureConfig | None = None) -> dict:
    """Instruction-text statistics (module D); no model calls involved."""
    cfg = cfg or FeatureConfig()
    body = pkg.instruction_body
    urls = _URL_RE.findall(body)
    distinct_urls = sorted(set(urls))
    domains = {urlparse(u).netloc.lower() for u in distinct_urls}
    lowered = body.lower()
    sensitive_hits = sum(lowered.count(p.lower()) for p in cfg.sensitive_paths)
    return {
        "instruction_len_chars": len(body),
        "external_url_count": len(distinct_urls),
        "permission_request_count": len(pkg.declared_permissions)
        + len(pkg.requested_env)
        + len(pkg.required_binaries),
        "sensitive_path_mentions": sensitive_hits,
        "urgency_density": urgency_density(body, cfg.urgency_terms),
        "instr_to_desc_ratio": len(body) / max(1, len(pkg.description)),
        "markdown_code_block_count": body.count("```") // 2,
        "distinct_domain_count": len(domains),
        "dotfile_mention_count": len(_DOTFILE_RE.findall(body)),
    }


def assemble_features(*parts: dict, selected: tuple[str, ...] | None = None) -> FeatureVector:
    """Merge extractor outputs into one vector and apply the mask.

    Parts must not overlap; a collision means two extractors were run
    against different packages or the same extractor twice.
    """
    merged: dict = {}
    for part in parts:
        overlap = merged.keys() & part.keys()
        if overlap:
            raise ValueError(f"conflicting feature fields: {sorted(overlap)}")
        merged.update(part)
    mask = tuple(selected) if selected is not None else DEFAULT_SELECTED
    if len(set(mask)) != 15:
        raise ValueError("selected mask must name exactly 15 features")
    return FeatureVector(selected=mask, **merged)


def extract_all(pkg: SkillPackage, cfg: FeatureConfig | None = None) -> FeatureVector:
    """All three extractors against one package, assembled."""
    cfg = cfg or FeatureConfig(popular_names=load_popular_names())
    popular = cfg.popular_names or load_popular_names()
    return assemble_features(
        extract_structural(pkg),
        extract_metadata(pkg, popular),
        extract_surface(pkg, cfg),
        selected=cfg.selected,
    )
