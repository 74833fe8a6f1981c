"""Feature extraction: structural counters, metadata reputation, surface
statistics, and vector assembly."""

from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skilltriage.errors import ConfigError
from skilltriage.features import (
    DEFAULT_SELECTED,
    FEATURE_NAMES,
    FeatureConfig,
    assemble_features,
    extract_all,
    extract_metadata,
    extract_structural,
    extract_surface,
    load_feature_config,
    load_popular_names,
    normalize_confusables,
    split_source,
    urgency_density,
)
from skilltriage.model import parse_skill

from conftest import write_skill


def test_thirty_one_candidates_fifteen_selected():
    assert len(FEATURE_NAMES) == 31
    assert len(DEFAULT_SELECTED) == 15
    assert set(DEFAULT_SELECTED) <= set(FEATURE_NAMES)
    assert "instr_to_desc_ratio" not in DEFAULT_SELECTED


def test_popular_names_bundle():
    names = load_popular_names()
    assert len(names) == 100
    assert "polymarket" in names


class TestLexer:
    def test_python_strings_and_comments(self):
        code, literals, comments = split_source(
            "x = 'lit'  # note\ny = eval(z)\n", "python"
        )
        assert literals == ["lit"]
        assert comments == ["# note"]
        assert "eval(" in code
        assert "lit" not in code

    def test_bash_single_quotes_literal(self):
        code, literals, _ = split_source("echo 'a\\qb'\n", "bash")
        assert literals == ["a\\qb"]

    def test_js_block_comments_and_backticks(self):
        code, literals, comments = split_source(
            "/* block */ let x = `tpl`; // tail\n", "javascript"
        )
        assert "tpl" in literals
        assert any("block" in c for c in comments)

    def test_other_language_has_no_code(self):
        code, literals, _ = split_source('call("QUOTED-DATA")', "other")
        assert code == ""
        assert literals == ["QUOTED-DATA"]


class TestStructural:
    def test_single_symbol_literal_entropy_zero(self, tmp_path):
        root = write_skill(tmp_path / "e0", scripts={"a.py": "x = 'aaaaaaaaaaaaaaaa'\n"})
        out = extract_structural(parse_skill(root))
        assert out["max_string_entropy_bits"] == 0.0

    def test_two_symbol_literal_entropy_one_bit(self, tmp_path):
        root = write_skill(tmp_path / "e1", scripts={"a.py": "x = 'abababababababab'\n"})
        out = extract_structural(parse_skill(root))
        assert out["max_string_entropy_bits"] == 1.0
        assert out["mean_string_entropy_bits"] == 1.0

    def test_dynamic_exec_count(self, tmp_path):
        script = "import subprocess\nsubprocess.run(['ls'])\neval(code)\n"
        root = write_skill(tmp_path / "dyn", scripts={"a.py": script})
        out = extract_structural(parse_skill(root))
        assert out["dynamic_exec_count"] == 2

    def test_calls_inside_literals_not_counted(self, tmp_path):
        script = "doc = 'run eval(x) or subprocess.run later'\n"
        root = write_skill(tmp_path / "lit", scripts={"a.py": script})
        out = extract_structural(parse_skill(root))
        assert out["dynamic_exec_count"] == 0
        assert out["syscall_count"] == 0

    def test_encoded_literal_detection(self, tmp_path):
        b64 = "QWxhZGRpbjpvcGVuIHNlc2FtZQ1234"  # mixed case + digits, >=20
        root = write_skill(tmp_path / "enc", scripts={"a.py": f"x = '{b64}'\n"})
        out = extract_structural(parse_skill(root))
        assert out["encoded_literal_count"] == 1

    def test_env_network_and_misc_counts(self, tmp_path):
        script = (
            "import os, requests\n"
            "t = os.environ.get('X')\n"
            "requests.get('http://a')\n"
        )
        bash = "#!/bin/sh\necho $HOME_DIR | sh\nsleep 5\n"
        root = write_skill(tmp_path / "mix", scripts={"a.py": script, "b.sh": bash})
        out = extract_structural(parse_skill(root))
        assert out["env_access_count"] >= 2  # os.environ + $HOME_DIR
        assert out["network_op_count"] >= 1
        assert out["pipe_to_shell_count"] == 1
        assert out["sleep_call_count"] == 1
        assert out["shebang_present"] is True
        assert out["script_count"] == 2


class TestMetadata:
    def test_exact_popular_name(self, tmp_path):
        pkg = parse_skill(write_skill(tmp_path / "p", frontmatter="name: polymarket\n"))
        out = extract_metadata(pkg, ["polymarket", "phantom"])
        assert out["min_name_edit_distance"] == 0

    def test_typosquat_distance_one(self, tmp_path):
        pkg = parse_skill(write_skill(tmp_path / "p2", frontmatter="name: polymrket\n"))
        out = extract_metadata(pkg, ["polymarket"])
        assert out["min_name_edit_distance"] == 1

    def test_homoglyph_name_normalizes_to_zero_distance(self, tmp_path):
        pkg = parse_skill(write_skill(tmp_path / "p3", frontmatter="name: pоlymarket\n"))
        out = extract_metadata(pkg, ["polymarket"])
        assert out["min_name_edit_distance"] == 0
        assert out["non_ascii_name"] is True

    def test_sensitive_env_markers(self, tmp_path):
        pkg = parse_skill(
            write_skill(tmp_path / "env", frontmatter="name: env\nenv: [API_TOKEN]\n")
        )
        out = extract_metadata(pkg, ["x"])
        assert out["requests_sensitive_env"] is True

    def test_dangerous_binary(self, tmp_path):
        pkg = parse_skill(
            write_skill(tmp_path / "bin", frontmatter="name: bin\nrequires: [curl]\n")
        )
        out = extract_metadata(pkg, ["x"])
        assert out["requires_dangerous_binary"] is True

    def test_empty_popular_names_rejected(self, tmp_path):
        pkg = parse_skill(write_skill(tmp_path / "e"))
        with pytest.raises(ValueError):
            extract_metadata(pkg, [])


class TestSurface:
    def test_empty_body(self, tmp_path):
        pkg = parse_skill(write_skill(tmp_path / "eb", body=""))
        out = extract_surface(pkg)
        assert out["instruction_len_chars"] == 0
        assert out["urgency_density"] == 0.0
        assert out["instr_to_desc_ratio"] == 0.0
        assert out["external_url_count"] == 0

    def test_urgency_density_half(self):
        assert urgency_density("You must act immediately", ("must", "immediately")) == 0.5

    def test_urgency_phrase_counts_once(self):
        d = urgency_density("do not tell anyone", ("do not tell",))
        assert d == pytest.approx(1 / 4)

    def test_sensitive_path_mentions(self, tmp_path):
        pkg = parse_skill(
            write_skill(tmp_path / "sp", body="Read ~/.ssh/id_rsa and ~/.env now\n")
        )
        out = extract_surface(pkg)
        assert out["sensitive_path_mentions"] >= 2
        assert out["dotfile_mention_count"] >= 2

    def test_urls_distinct_and_domains(self, tmp_path):
        body = "See https://a.example/x and https://a.example/x and https://b.example/y\n"
        pkg = parse_skill(write_skill(tmp_path / "u", body=body))
        out = extract_surface(pkg)
        assert out["external_url_count"] == 2
        assert out["distinct_domain_count"] == 2

    @settings(max_examples=100, deadline=None)
    @given(st.text(max_size=300))
    def test_density_bounded(self, text):
        d = urgency_density(text, ("must", "immediately", "do not tell"))
        assert 0.0 <= d <= 1.0


class TestAssembly:
    def test_merged_fields_match_extractors(self, tmp_path):
        pkg = parse_skill(
            write_skill(
                tmp_path / "m",
                frontmatter="name: polymarket\nenv: [API_KEY]\n",
                body="You must act immediately: https://x.example/a\n",
                scripts={"a.py": "x = eval(input())\n"},
            )
        )
        structural = extract_structural(pkg)
        metadata = extract_metadata(pkg, list(load_popular_names()))
        surface = extract_surface(pkg)
        vec = assemble_features(structural, metadata, surface)
        assert vec.dynamic_exec_count == structural["dynamic_exec_count"]
        assert vec.min_name_edit_distance == metadata["min_name_edit_distance"]
        assert vec.urgency_density == surface["urgency_density"]
        assert len(vec.selected) == 15

    def test_zero_vector(self):
        vec = assemble_features({}, {}, {})
        assert vec.syscall_count == 0
        assert vec.selected == DEFAULT_SELECTED

    def test_overlapping_parts_rejected(self):
        with pytest.raises(ValueError, match="conflicting"):
            assemble_features({"syscall_count": 1}, {"syscall_count": 2})

    def test_bad_mask_size_rejected(self):
        with pytest.raises(ValueError, match="exactly 15"):
            assemble_features({}, selected=("syscall_count",))

    def test_to_dict_covers_all_candidates(self, tmp_path):
        pkg = parse_skill(write_skill(tmp_path / "d"))
        vec = extract_all(pkg)
        d = vec.to_dict()
        assert set(d) == set(FEATURE_NAMES) | {"selected"}


class TestFeatureConfig:
    def test_default_config_loads(self):
        cfg = load_feature_config(None)
        assert len(cfg.selected) == 15
        assert len(cfg.popular_names) == 100

    def test_bundled_yaml_matches_defaults(self):
        from importlib import resources

        path = resources.files("skilltriage").joinpath("data/features.yaml")
        cfg = load_feature_config(str(path))
        assert tuple(cfg.selected) == DEFAULT_SELECTED

    def test_wrong_selection_size_rejected(self, tmp_path):
        path = tmp_path / "f.yaml"
        path.write_text("selected: [syscall_count]\n")
        with pytest.raises(ConfigError, match="exactly 15"):
            load_feature_config(path)

    def test_unknown_feature_rejected(self, tmp_path):
        path = tmp_path / "f.yaml"
        names = ", ".join(list(DEFAULT_SELECTED)[:14] + ["bogus_feature"])
        path.write_text(f"selected: [{names}]\n")
        with pytest.raises(ConfigError, match="unknown feature"):
            load_feature_config(path)


def test_confusable_normalization():
    assert normalize_confusables("pоlymаrket") == "polymarket"  # cyrillic o, a
    assert normalize_confusables("ＰＨＡＮＴＯＭ") == "phantom"  # fullwidth + casefold
