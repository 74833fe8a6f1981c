"""Skill package parsing: SKILL.md frontmatter, instruction body, scripts.

Parsing is purely textual. No file content is ever executed or evaluated,
and nothing outside the package root is read.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ParseError

logger = logging.getLogger(__name__)

MAX_FILE_BYTES = 2 * 1024 * 1024
MAX_PACKAGE_BYTES = 20 * 1024 * 1024

# Frontmatter keys harvested into the structured fields, case-insensitive.
# The skill format in the wild does not pin these spellings, so they are
# parameters of parse_skill rather than constants of the format.
ENV_KEYS = ("env", "environment", "environment_variables")
BINARY_KEYS = ("requires", "binaries", "dependencies", "required_binaries")
PERMISSION_KEYS = ("permissions", "allowed_tools", "allowed-tools", "capabilities")

_SCRIPT_EXTENSIONS = {
    ".py": "python",
    ".sh": "bash",
    ".bash": "bash",
    ".js": "javascript",
    ".mjs": "javascript",
}

_SHEBANG_HINTS = (
    ("python", "python"),
    ("bash", "bash"),
    ("sh", "bash"),
    ("node", "javascript"),
)


@dataclass(frozen=True)
class ScriptFile:
    """One text file from the package's scripts/ tree."""

    rel_path: str
    language: str  # python | bash | javascript | other
    content: str
    size_bytes: int


@dataclass(frozen=True)
class SkillPackage:
    """Normalized, immutable view of one skill package on disk."""

    skill_id: str
    name: str
    description: str
    version: str
    author: str
    requested_env: tuple[str, ...]
    required_binaries: tuple[str, ...]
    declared_permissions: tuple[str, ...]
    instruction_body: str
    scripts: tuple[ScriptFile, ...]
    raw_frontmatter: dict
    warnings: tuple[str, ...] = field(default=())

    def metadata_text(self) -> str:
        """Synthesized pseudo-file scanned for metadata-level rules.

        Contains the skill name followed by every frontmatter value,
        flattened one per line, in file order.
        """
        lines = [self.name]
        for value in self.raw_frontmatter.values():
            lines.extend(_flatten_value(value))
        return "\n".join(lines)

    def to_dict(self) -> dict:
        """Report form of the package; round-trips via from_dict."""
        return {
            "skill_id": self.skill_id,
            "name": self.name,
            "description": self.description,
            "version": self.version,
            "author": self.author,
            "requested_env": list(self.requested_env),
            "required_binaries": list(self.required_binaries),
            "declared_permissions": list(self.declared_permissions),
            "script_paths": [s.rel_path for s in self.scripts],
            "warnings": list(self.warnings),
        }


def _flatten_value(value) -> list[str]:
    if isinstance(value, str):
        return [value]
    if isinstance(value, list):
        out: list[str] = []
        for item in value:
            out.extend(_flatten_value(item))
        return out
    if isinstance(value, dict):
        out = []
        for sub in value.values():
            out.extend(_flatten_value(sub))
        return out
    return [str(value)]


# ---------------------------------------------------------------------------
# Restricted frontmatter parser.
#
# Deliberately not a YAML library: untrusted input gets scalar strings,
# flat lists, and one nesting level only. Anything deeper is preserved as
# an opaque string so exotic YAML constructs stay inert data.
# ---------------------------------------------------------------------------


def _unquote(value: str) -> str:
    value = value.strip()
    if len(value) >= 2 and value[0] == value[-1] and value[0] in ("'", '"'):
        return value[1:-1]
    return value


def _parse_flow_list(value: str) -> list[str]:
    inner = value.strip()[1:-1]
    if not inner.strip():
        return []
    return [_unquote(part) for part in inner.split(",")]


def parse_frontmatter(text: str) -> dict:
    """Parse the restricted frontmatter grammar into a key->value map.

    Values are strings, flat lists of strings, or one-level string maps.
    Structures nested deeper than one level are kept as opaque strings.
    Raises ValueError on lines that fit no production.
    """
    result: dict = {}
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        line = lines[i]
        i += 1
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        if line[0] in " \t":
            raise ValueError(f"unexpected indented line at top level: {line!r}")
        if ":" not in line:
            raise ValueError(f"expected 'key: value' line: {line!r}")
        key, _, rest = line.partition(":")
        key = key.strip()
        if not key:
            raise ValueError(f"empty key in line: {line!r}")
        rest = rest.strip()
        if rest:
            if rest.startswith("[") and rest.endswith("]"):
                result[key] = _parse_flow_list(rest)
            else:
                result[key] = _unquote(rest)
            continue
        # Block form: gather the indented lines that belong to this key.
        block: list[str] = []
        while i < len(lines) and (not lines[i].strip() or lines[i][0] in " \t"):
            if not lines[i].strip():
                i += 1
                continue
            block.append(lines[i])
            i += 1
        result[key] = _parse_block(key, block)
    return result


def _parse_block(key: str, block: list[str]):
    if not block:
        return ""
    stripped = [b.strip() for b in block]
    if all(s.startswith("- ") or s == "-" for s in stripped):
        return [_unquote(s[1:].strip()) for s in stripped]
    # One-level map: every entry must be a simple "sub: scalar" line at a
    # single indent depth. Anything else is preserved verbatim.
    indents = {len(b) - len(b.lstrip()) for b in block}
    if len(indents) == 1 and all(":" in s for s in stripped):
        sub: dict[str, str] = {}
        for s in stripped:
            sk, _, sv = s.partition(":")
            sv = sv.strip()
            if not sk.strip() or not sv or (sv.startswith("[") or sv.startswith("{")):
                return "\n".join(block)
            sub[sk.strip()] = _unquote(sv)
        return sub
    return "\n".join(block)


def split_frontmatter(text: str) -> tuple[str | None, str]:
    """Split SKILL.md text into (frontmatter_text, body).

    Frontmatter is a leading block delimited by '---' lines. Returns
    (None, full_text) when no well-formed block is present.
    """
    if text.startswith("﻿"):
        text = text[1:]
    first_nl = text.find("\n")
    if first_nl < 0 or text[:first_nl].strip() != "---":
        return None, text
    rest = text[first_nl + 1 :]
    lines = rest.split("\n")
    for idx, line in enumerate(lines):
        if line.strip() == "---":
            return "\n".join(lines[:idx]), "\n".join(lines[idx + 1 :])
    return None, text


def _as_string_list(value) -> list[str]:
    if isinstance(value, str):
        parts = [p.strip() for p in value.replace(",", " ").split()]
        return [p for p in parts if p]
    if isinstance(value, list):
        return [str(v) for v in value]
    if isinstance(value, dict):
        return [str(k) for k in value]
    return []


def _harvest(fm: dict, keys: tuple[str, ...]) -> list[str]:
    wanted = {k.lower() for k in keys}
    out: list[str] = []
    for key, value in fm.items():
        if key.lower() in wanted:
            out.extend(_as_string_list(value))
    return out


# ---------------------------------------------------------------------------
# Package parsing
# ---------------------------------------------------------------------------


def _read_text_file(path: Path, budget: list[int]) -> tuple[str, int]:
    """Read one package file: returns (lossy-decoded text, byte length).

    Enforces the per-file and package-wide size caps and rejects binary
    (NUL-containing) content.
    """
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ParseError("unreadable", f"{path}: {exc}") from exc
    if len(raw) > MAX_FILE_BYTES:
        raise ParseError("size_cap", f"{path.name} exceeds per-file cap ({len(raw)} bytes)")
    budget[0] += len(raw)
    if budget[0] > MAX_PACKAGE_BYTES:
        raise ParseError("size_cap", "package exceeds total size cap")
    if b"\x00" in raw:
        raise ParseError("nul_bytes", f"{path.name} contains NUL bytes")
    text = raw.decode("utf-8", errors="replace")
    if text.startswith("﻿"):
        text = text[1:]
    return text, len(raw)


def _script_language(rel_path: str, content: str) -> str:
    ext = Path(rel_path).suffix.lower()
    if ext in _SCRIPT_EXTENSIONS:
        return _SCRIPT_EXTENSIONS[ext]
    first_line = content.split("\n", 1)[0]
    if first_line.startswith("#!"):
        for hint, lang in _SHEBANG_HINTS:
            if hint in first_line:
                return lang
    return "other"


def parse_skill(
    root_path: str | os.PathLike,
    *,
    env_keys: tuple[str, ...] = ENV_KEYS,
    binary_keys: tuple[str, ...] = BINARY_KEYS,
    permission_keys: tuple[str, ...] = PERMISSION_KEYS,
) -> SkillPackage:
    """Parse a skill package directory into a SkillPackage.

    Raises ParseError when SKILL.md is absent/unreadable, any file
    contains NUL bytes, or size caps are exceeded. A malformed
    frontmatter block degrades to empty metadata plus a warning.
    """
    root = Path(root_path)
    manifest = root / "SKILL.md"
    if not manifest.is_file():
        raise ParseError("missing_manifest", f"no SKILL.md under {root}")

    budget = [0]
    text, _ = _read_text_file(manifest, budget)
    warnings: list[str] = []

    fm_text, body = split_frontmatter(text)
    frontmatter: dict = {}
    if fm_text is None:
        warnings.append("no frontmatter block; treating entire file as instructions")
    else:
        try:
            frontmatter = parse_frontmatter(fm_text)
        except ValueError as exc:
            warnings.append(f"frontmatter ignored: {exc}")
            frontmatter = {}

    skill_id = root.name or str(root)
    name = str(frontmatter.get("name", "")) or skill_id
    description = _scalar(frontmatter.get("description"))
    version = _scalar(frontmatter.get("version"))
    author = _scalar(frontmatter.get("author"))

    scripts = _load_scripts(root, budget, warnings)

    return SkillPackage(
        skill_id=skill_id,
        name=name,
        description=description,
        version=version,
        author=author,
        requested_env=tuple(_harvest(frontmatter, env_keys)),
        required_binaries=tuple(_harvest(frontmatter, binary_keys)),
        declared_permissions=tuple(_harvest(frontmatter, permission_keys)),
        instruction_body=body,
        scripts=tuple(scripts),
        raw_frontmatter=frontmatter,
        warnings=tuple(warnings),
    )


def _scalar(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    return str(value)


def _load_scripts(root: Path, budget: list[int], warnings: list[str]) -> list[ScriptFile]:
    scripts_dir = root / "scripts"
    if not scripts_dir.is_dir():
        return []
    resolved_root = root.resolve()
    out: list[ScriptFile] = []
    for path in sorted(scripts_dir.rglob("*")):
        if not path.is_file():
            continue
        # Refuse to read through links escaping the package root.
        if not path.resolve().is_relative_to(resolved_root):
            warnings.append(f"skipped {path.name}: resolves outside package root")
            continue
        content, size = _read_text_file(path, budget)
        rel = path.relative_to(root).as_posix()
        out.append(
            ScriptFile(
                rel_path=rel,
                language=_script_language(rel, content),
                content=content,
                size_bytes=size,
            )
        )
    return out


def enumerate_corpus(root: str | os.PathLike) -> list[Path]:
    """Every directory under root containing a SKILL.md, lexicographic.

    Unreadable subtrees are skipped; each skip is logged and counted in
    the debug log rather than aborting the walk.
    """
    rootp = Path(root)
    found: list[Path] = []
    skipped = 0

    def walk(directory: Path) -> None:
        nonlocal skipped
        try:
            entries = sorted(os.scandir(directory), key=lambda e: e.name)
        except OSError as exc:
            skipped += 1
            logger.warning("skipping unreadable directory %s: %s", directory, exc)
            return
        has_manifest = False
        subdirs: list[Path] = []
        for entry in entries:
            try:
                if entry.is_file(follow_symlinks=False) and entry.name == "SKILL.md":
                    has_manifest = True
                elif entry.is_dir(follow_symlinks=False):
                    subdirs.append(Path(entry.path))
            except OSError:
                skipped += 1
        if has_manifest:
            found.append(directory)
        for sub in subdirs:
            walk(sub)

    if rootp.is_dir():
        walk(rootp)
    if skipped:
        logger.warning("corpus walk skipped %d unreadable entries", skipped)
    return found
