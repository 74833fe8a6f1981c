"""Adversarial generator: calibration, determinism, purity, batches."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import pytest

from skilltriage.adversarial import (
    STEALTH_RATINGS,
    TECHNIQUES,
    AdvSpec,
    generate,
    generate_batch,
    write_benign_template,
)
from skilltriage.model import parse_skill
from skilltriage.triage import TriageConfig, triage

EXPECTED_L1 = {
    "encoding": (0.35, "obfuscation"),
    "cross_file": (0.40, "credential_theft"),
    "conditional": (0.70, "conditional_trigger"),
    "homoglyph": (0.80, "prompt_injection"),
    "time_delay": (0.70, "time_delay"),
}

CANONICAL_SEED = 1


def tree_bytes(root: Path) -> bytes:
    h = hashlib.sha256()
    for path in sorted(root.rglob("*")):
        if path.is_file():
            h.update(path.relative_to(root).as_posix().encode())
            h.update(path.read_bytes())
    return h.digest()


class TestCalibration:
    @pytest.mark.parametrize("technique", TECHNIQUES)
    def test_canonical_fixture_scores(self, tmp_path, default_rules, technique):
        pkg = generate(AdvSpec(technique=technique, seed=CANONICAL_SEED), tmp_path / technique)
        verdict = triage(pkg, default_rules)
        want_score, want_category = EXPECTED_L1[technique]
        assert verdict.r == pytest.approx(want_score, abs=0.05)
        assert verdict.top_category() == want_category
        assert verdict.escalated

    def test_homoglyph_hits_both_categories(self, tmp_path, default_rules):
        pkg = generate(AdvSpec(technique="homoglyph", seed=CANONICAL_SEED), tmp_path / "hg")
        verdict = triage(pkg, default_rules)
        categories = {f.category for f in verdict.findings}
        assert categories == {"prompt_injection", "metadata_homoglyph"}

    def test_encoding_triggers_obfuscation_only(self, tmp_path, default_rules):
        pkg = generate(AdvSpec(technique="encoding", seed=3), tmp_path / "enc")
        verdict = triage(pkg, default_rules)
        assert {f.category for f in verdict.findings} == {"obfuscation"}
        assert verdict.r == pytest.approx(0.35)

    def test_conditional_seed_seven(self, tmp_path, default_rules):
        pkg = generate(AdvSpec(technique="conditional", seed=7), tmp_path / "cond")
        verdict = triage(pkg, default_rules)
        assert verdict.r == pytest.approx(0.70)
        assert verdict.top_category() == "conditional_trigger"


class TestTemplate:
    def test_template_purity(self, tmp_path, default_rules):
        pkg = write_benign_template(tmp_path / "benign", seed=0)
        verdict = triage(pkg, default_rules)
        assert verdict.r == 0.0
        assert verdict.findings == ()

    def test_template_varies_with_seed_but_stays_pure(self, tmp_path, default_rules):
        for seed in range(5):
            pkg = write_benign_template(tmp_path / f"b{seed}", seed=seed)
            assert triage(pkg, default_rules).r == 0.0


class TestCrossFileCompleteness:
    def test_fragments_release_package_escalates(self, tmp_path, default_rules):
        cfg = TriageConfig()
        root = tmp_path / "xf"
        generate(AdvSpec(technique="cross_file", seed=2), root)
        full = triage(parse_skill(root), default_rules, cfg)
        assert full.escalated

        scripts = [p for p in (root / "scripts").iterdir() if p.name != "format_notes.py"]
        assert len(scripts) == 2
        for script in scripts:
            frag_root = tmp_path / f"frag-{script.name}"
            (frag_root / "scripts").mkdir(parents=True)
            (frag_root / "SKILL.md").write_text((root / "SKILL.md").read_text())
            (frag_root / "scripts" / script.name).write_text(script.read_text())
            frag = triage(parse_skill(frag_root), default_rules, cfg)
            assert frag.r < cfg.tau, f"{script.name} alone must not escalate"


class TestDeterminism:
    @pytest.mark.parametrize("technique", TECHNIQUES)
    def test_same_spec_identical_bytes(self, tmp_path, technique):
        spec = AdvSpec(technique=technique, seed=11)
        generate(spec, tmp_path / "a")
        generate(spec, tmp_path / "b")
        assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")

    def test_different_seeds_differ(self, tmp_path):
        generate(AdvSpec(technique="conditional", seed=1), tmp_path / "a")
        generate(AdvSpec(technique="conditional", seed=2), tmp_path / "b")
        assert tree_bytes(tmp_path / "a") != tree_bytes(tmp_path / "b")


class TestBatch:
    def test_batch_layout_and_manifest(self, tmp_path):
        manifest = generate_batch("encoding", 20, 0, tmp_path / "batch")
        rows = [json.loads(l) for l in manifest.read_text().splitlines()]
        assert len(rows) == 20
        dirs = {r["path"] for r in rows}
        assert len(dirs) == 20
        for row in rows:
            assert row["label"] == "malicious"
            assert row["technique"] == "encoding"
            assert row["stealth"] == STEALTH_RATINGS["encoding"]
            assert (tmp_path / "batch" / row["path"] / "SKILL.md").is_file()

    def test_empty_batch(self, tmp_path):
        manifest = generate_batch("encoding", 0, 0, tmp_path / "none")
        assert manifest.read_text() == ""

    def test_batch_rerun_identical(self, tmp_path):
        generate_batch("homoglyph", 3, 5, tmp_path / "r1")
        generate_batch("homoglyph", 3, 5, tmp_path / "r2")
        assert tree_bytes(tmp_path / "r1") == tree_bytes(tmp_path / "r2")


def test_unknown_technique_rejected():
    with pytest.raises(ValueError):
        AdvSpec(technique="steganography", seed=0)


def test_payload_targets_reserved_domains_only(tmp_path):
    # Inertness: every URL in generated scripts points at example.com/.org.
    import re

    url_re = re.compile(r"https?://([a-z0-9.\-]+)")
    for technique in TECHNIQUES:
        root = tmp_path / technique
        generate(AdvSpec(technique=technique, seed=0), root)
        for script in (root / "scripts").rglob("*.py"):
            for host in url_re.findall(script.read_text()):
                assert host.endswith(("example.com", "example.org")), (technique, host)
