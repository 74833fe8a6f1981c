from __future__ import annotations

import json
from pathlib import Path

import pytest

from skilltriage.gateway import BackendConfig, Gateway, GatewaySetup, ScriptedStore
from skilltriage.rules import load_rules


@pytest.fixture(scope="session")
def default_rules():
    return load_rules()


def write_skill(
    root: Path,
    *,
    frontmatter: str | None = "name: hello\ndescription: says hi\n",
    body: str = "Say hi politely.\n",
    scripts: dict[str, str] | None = None,
) -> Path:
    """Create a skill package directory for tests."""
    root.mkdir(parents=True, exist_ok=True)
    if frontmatter is None:
        (root / "SKILL.md").write_text(body, encoding="utf-8")
    else:
        (root / "SKILL.md").write_text(f"---\n{frontmatter}---\n{body}", encoding="utf-8")
    for rel, content in (scripts or {}).items():
        path = root / "scripts" / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(content, encoding="utf-8")
    return root


def ssd_response(score: float, rating: str = "", evidence: list[str] | None = None, reasoning: str = "analysis") -> str:
    doc = {"risk_score": score, "evidence": evidence or [], "reasoning": reasoning}
    if rating:
        doc["rating"] = rating
    return json.dumps(doc)


def jury_response(
    verdict: str,
    confidence: float = 0.9,
    attack_types: list[str] | None = None,
    evidence: list[str] | None = None,
    reasoning: str = "panel reasoning",
) -> str:
    return json.dumps(
        {
            "verdict": verdict,
            "confidence": confidence,
            "attack_types": attack_types or [],
            "evidence": evidence or [],
            "reasoning": reasoning,
        }
    )


def make_gateway(
    fixture_doc: dict | None = None,
    *,
    jurors: tuple[str, str, str] = ("juror-a", "juror-b", "juror-c"),
    analyst: str = "analyst",
    prices: dict | None = None,
) -> Gateway:
    """All-scripted gateway sharing one fixture document."""
    names = (analyst, *jurors)
    store = ScriptedStore(fixture_doc or {})
    setup = GatewaySetup(
        backends={
            n: BackendConfig(name=n, endpoint_url="scripted:", model_id=f"{n}-model")
            for n in names
        },
        prices=prices or {},
        layer2=analyst,
        jury=jurors,
        fixtures={n: store for n in names},
    )
    return Gateway(setup)
