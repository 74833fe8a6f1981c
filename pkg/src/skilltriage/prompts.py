"""Editable prompt templates for the semantic layers.

Templates live under prompts/ as plain text with {PLACEHOLDER} markers;
the combined content hash is recorded in every report so a scan can be
traced to the exact prompt wording that produced it.
"""

from __future__ import annotations

import hashlib
from functools import lru_cache
from importlib import resources

TEMPLATE_NAMES = (
    "ssd_system.txt",
    "ssd_intent_alignment.txt",
    "ssd_permission_justification.txt",
    "ssd_covert_behavior.txt",
    "ssd_cross_file_consistency.txt",
    "jury_system.txt",
    "jury_round1.txt",
    "jury_round2.txt",
)

MAX_SKILL_CONTENT_CHARS = 24_000
_HEAD_CHARS = 16_000


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    if name not in TEMPLATE_NAMES:
        raise KeyError(f"unknown prompt template {name!r}")
    return resources.files("skilltriage").joinpath(f"prompts/{name}").read_text("utf-8")


@lru_cache(maxsize=1)
def template_hash() -> str:
    h = hashlib.sha256()
    for name in TEMPLATE_NAMES:
        h.update(name.encode())
        h.update(b"\x00")
        h.update(load_template(name).encode("utf-8"))
    return "sha256:" + h.hexdigest()


def truncate_content(text: str, cap: int = MAX_SKILL_CONTENT_CHARS) -> str:
    """Head/tail truncation with an explicit marker once text exceeds cap."""
    if len(text) <= cap:
        return text
    head = text[:_HEAD_CHARS]
    tail_len = cap - _HEAD_CHARS
    tail = text[-tail_len:] if tail_len > 0 else ""
    dropped = len(text) - len(head) - len(tail)
    return f"{head}\n[... truncated {dropped} characters ...]\n{tail}"
