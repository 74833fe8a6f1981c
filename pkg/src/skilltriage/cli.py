"""Command-line entry point: scan, bench, gen-adv, rules lint."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .adversarial import TECHNIQUES, generate_batch
from .bench import MODES, evaluate
from .errors import ConfigError, ParseError
from .features import load_feature_config, load_popular_names, FeatureConfig
from .gateway import Gateway, load_backends
from .model import enumerate_corpus, parse_skill
from .pipeline import PipelineContext, scan_path
from .report import canonical_json, render_markdown
from .rules import load_rules
from .ssd import DEFAULT_ESCALATION_THRESHOLD, SsdConfig
from .triage import TriageConfig, triage

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUN_ERROR = 1
EXIT_MALICIOUS = 2
EXIT_NEEDS_HUMAN = 3


def _build_context(args) -> PipelineContext:
    rules = load_rules(args.rules)
    triage_cfg = TriageConfig(tau=args.tau) if args.tau is not None else TriageConfig()
    feature_cfg = (
        load_feature_config(args.features)
        if args.features
        else FeatureConfig(popular_names=load_popular_names())
    )

    gateway = None
    ssd_cfg = None
    jurors: tuple[str, ...] = ()
    if args.backends:
        setup = load_backends(args.backends)
        gateway = Gateway(setup, max_in_flight=max(1, args.jobs))
        threshold = (
            args.escalation_threshold
            if args.escalation_threshold is not None
            else DEFAULT_ESCALATION_THRESHOLD
        )
        ssd_cfg = SsdConfig(backend=setup.layer2, escalation_threshold=threshold)
        jurors = setup.jury

    if getattr(args, "layer1_only", False):
        max_layer = 1
    elif getattr(args, "max_layer", None) is not None:
        max_layer = args.max_layer
    else:
        max_layer = 3 if args.backends else 1

    return PipelineContext(
        rules=rules,
        triage_cfg=triage_cfg,
        feature_cfg=feature_cfg,
        ssd_cfg=ssd_cfg,
        jurors=jurors,
        gateway=gateway,
        max_layer=max_layer,
    )


def _scan_targets(target: Path) -> list[Path]:
    if (target / "SKILL.md").is_file():
        return [target]
    return enumerate_corpus(target)


def cmd_scan(args) -> int:
    try:
        ctx = _build_context(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_RUN_ERROR

    target = Path(args.target)
    if not target.is_dir():
        print(f"target is not a directory: {target}", file=sys.stderr)
        return EXIT_RUN_ERROR
    targets = _scan_targets(target)
    if not targets:
        print(f"no skill packages found under {target}", file=sys.stderr)
        return EXIT_RUN_ERROR

    out_lines: list[str] = []
    md_docs: list[tuple[str, str]] = []
    worst = EXIT_OK
    error_count = 0
    verdict_count = 0

    if args.layer1_only:
        # Compact per-skill triage lines; never touches a model backend.
        for path in targets:
            try:
                pkg = parse_skill(path)
            except ParseError as exc:
                error_count += 1
                out_lines.append(canonical_json({"skill_id": path.name, "error": exc.kind}))
                continue
            verdict = triage(pkg, ctx.rules, ctx.triage_cfg, ctx.feature_cfg)
            verdict_count += 1
            out_lines.append(
                canonical_json(
                    verdict.to_dict(
                        include_features=args.emit_features,
                        include_timings=not args.no_timings,
                    )
                )
            )
            if verdict.escalated:
                worst = max(worst, EXIT_MALICIOUS)
    else:
        if args.jobs <= 1:
            reports = [scan_path(p, ctx) for p in targets]
        else:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=args.jobs) as pool:
                reports = list(pool.map(lambda p: scan_path(p, ctx), targets))
        for report in reports:
            if report.final_verdict == "ERROR":
                error_count += 1
            else:
                verdict_count += 1
            if report.final_verdict == "MALICIOUS":
                worst = max(worst, EXIT_MALICIOUS)
            elif report.final_verdict == "NEEDS_HUMAN" and worst != EXIT_MALICIOUS:
                worst = EXIT_NEEDS_HUMAN
            out_lines.append(
                report.to_json(
                    include_timings=not args.no_timings,
                    include_features=args.emit_features,
                )
            )
            if args.output in ("markdown", "both"):
                md_docs.append((report.skill_id, render_markdown(report)))

    payload = "".join(line + "\n" for line in out_lines)
    if args.output in ("json", "both"):
        if args.out and args.output == "json":
            Path(args.out).write_text(payload, encoding="utf-8")
        else:
            sys.stdout.write(payload)
    if args.output in ("markdown", "both"):
        if args.out:
            out_dir = Path(args.out)
            out_dir.mkdir(parents=True, exist_ok=True)
            for idx, (skill_id, doc) in enumerate(md_docs):
                (out_dir / f"{idx:05d}-{skill_id}.md").write_text(doc, encoding="utf-8")
        else:
            for _, doc in md_docs:
                sys.stdout.write(doc + "\n")

    if error_count and not verdict_count:
        return EXIT_RUN_ERROR
    return worst


def cmd_bench(args) -> int:
    try:
        ctx = _build_context(args)
        band = None
        if args.l2_band:
            lo, hi = (float(x) for x in args.l2_band.split(","))
            band = (lo, hi)
        metrics, ledger = evaluate(
            args.manifest, ctx, args.mode, jobs=args.jobs, l2_band=band
        )
    except (ConfigError, ValueError, OSError) as exc:
        print(f"bench error: {exc}", file=sys.stderr)
        return EXIT_RUN_ERROR
    print(json.dumps(metrics.to_dict(), indent=2, sort_keys=True))
    if args.ledger:
        fieldnames = [
            "path", "label", "final_verdict", "resolved_at_layer",
            "r", "R2", "cost_usd", "latency_ms", "error",
        ]
        with open(args.ledger, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=fieldnames, extrasaction="ignore")
            writer.writeheader()
            writer.writerows(ledger)
    return EXIT_OK


def cmd_gen_adv(args) -> int:
    try:
        manifest = generate_batch(args.technique, args.count, args.seed, args.out)
    except (ValueError, OSError) as exc:
        print(f"generation error: {exc}", file=sys.stderr)
        return EXIT_RUN_ERROR
    print(f"wrote {args.count} {args.technique} samples; manifest at {manifest}")
    return EXIT_OK


def cmd_rules(args) -> int:
    if args.rules_command != "lint":
        print("usage: skilltriage rules lint [PATH]", file=sys.stderr)
        return EXIT_RUN_ERROR
    try:
        ruleset = load_rules(args.path)
    except ConfigError as exc:
        print(f"rules lint failed: {exc}", file=sys.stderr)
        return EXIT_RUN_ERROR
    cats = sorted(ruleset.categories())
    print(f"{len(ruleset)} rules across {len(cats)} categories: {', '.join(cats)}")
    print(ruleset.content_hash)
    return EXIT_OK


def _add_pipeline_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--rules", help="rules YAML path (default: bundled library)")
    p.add_argument("--backends", help="backends YAML path (enables layers 2-3)")
    p.add_argument("--features", help="feature config YAML path")
    p.add_argument("--tau", type=float, help="layer-1 escalation threshold (default 0.3)")
    p.add_argument(
        "--escalation-threshold",
        type=float,
        help="layer-2 escalation threshold (default 0.4)",
    )
    p.add_argument("--jobs", type=int, default=1, help="parallel workers (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skilltriage",
        description="Layered static + LLM triage for AI agent skill packages",
    )
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command")

    scan = sub.add_parser("scan", help="scan one skill directory or a corpus root")
    scan.add_argument("target")
    _add_pipeline_args(scan)
    scan.add_argument(
        "--max-layer",
        type=int,
        choices=(1, 2, 3),
        help="deepest layer to run (default: 3 with --backends, else 1)",
    )
    scan.add_argument(
        "--layer1-only",
        action="store_true",
        help="static triage only; emits compact per-skill JSON lines",
    )
    scan.add_argument("--output", choices=("json", "markdown", "both"), default="json")
    scan.add_argument("--out", help="output file (json) or directory (markdown)")
    scan.add_argument("--emit-features", action="store_true", help="include the 31-feature vector")
    scan.add_argument(
        "--no-timings",
        action="store_true",
        help="zero timing fields for byte-reproducible ledgers",
    )

    bench = sub.add_parser("bench", help="evaluate against a labeled manifest")
    bench.add_argument("--manifest", required=True)
    bench.add_argument("--mode", choices=MODES, default="full")
    bench.add_argument("--ledger", help="write the per-example ledger CSV here")
    bench.add_argument("--l2-band", help="ledger filter: keep examples with R2 in LO,HI")
    _add_pipeline_args(bench)

    gen = sub.add_parser("gen-adv", help="generate adversarial sample packages")
    gen.add_argument("--technique", required=True, choices=TECHNIQUES)
    gen.add_argument("--count", type=int, default=20)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)

    rules = sub.add_parser("rules", help="rule library utilities")
    rules.add_argument("rules_command", choices=("lint",))
    rules.add_argument("path", nargs="?", default=None)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.command == "scan":
        return cmd_scan(args)
    if args.command == "bench":
        return cmd_bench(args)
    if args.command == "gen-adv":
        return cmd_gen_adv(args)
    if args.command == "rules":
        return cmd_rules(args)
    build_parser().print_help()
    return EXIT_RUN_ERROR


if __name__ == "__main__":
    sys.exit(main())
