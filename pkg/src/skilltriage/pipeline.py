"""End-to-end scan orchestration: parse, triage, semantic analysis, jury,
report. The layer cap stops the pipeline early; an escalation left
unresolved at the cap is reported as a detection."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .errors import GatewayError, ParseError
from .features import FeatureConfig, load_popular_names
from .gateway import Gateway
from .jury import run_jury
from .model import enumerate_corpus, parse_skill
from .prompts import template_hash
from .report import ScanReport, assemble_report
from .rules import RuleSet
from .ssd import SsdConfig, run_ssd
from .triage import TriageConfig, triage

logger = logging.getLogger(__name__)


@dataclass
class PipelineContext:
    rules: RuleSet
    triage_cfg: TriageConfig = field(default_factory=TriageConfig)
    feature_cfg: FeatureConfig | None = None
    ssd_cfg: SsdConfig | None = None
    jurors: tuple[str, ...] = ()
    gateway: Gateway | None = None
    max_layer: int = 3

    def __post_init__(self):
        if self.max_layer not in (1, 2, 3):
            raise ValueError("max_layer must be 1, 2, or 3")
        if self.feature_cfg is None:
            self.feature_cfg = FeatureConfig(popular_names=load_popular_names())
        if self.max_layer >= 2 and (self.gateway is None or self.ssd_cfg is None):
            raise ValueError("layers 2+ require a gateway and an ssd config")
        if self.max_layer >= 3 and len(self.jurors) != 3:
            raise ValueError("layer 3 requires exactly 3 jurors")


def scan_path(path: str | Path, ctx: PipelineContext) -> ScanReport:
    """Scan one skill directory through layers up to the configured cap."""
    path = Path(path)
    ledger_key = str(path)
    skill_id = path.name or str(path)

    def cost() -> float:
        return ctx.gateway.ledger.total_for(ledger_key) if ctx.gateway else 0.0

    def report(**kwargs) -> ScanReport:
        return assemble_report(
            skill_id,
            rules_hash=ctx.rules.content_hash,
            template_hash=template_hash(),
            total_cost_usd=cost(),
            **kwargs,
        )

    try:
        pkg = parse_skill(path)
    except ParseError as exc:
        logger.warning("unparseable package %s: %s", path, exc)
        return report(error={"kind": exc.kind, "detail": exc.detail, "layer": 1})

    layer1 = triage(pkg, ctx.rules, ctx.triage_cfg, ctx.feature_cfg)
    if not layer1.escalated or ctx.max_layer == 1:
        return report(layer1=layer1)

    try:
        layer2 = run_ssd(pkg, layer1, ctx.ssd_cfg, ctx.gateway, ledger_key=ledger_key)
    except GatewayError as exc:
        return report(
            layer1=layer1, error={"kind": exc.kind, "detail": exc.detail, "layer": 2}
        )
    if not layer2.escalated or ctx.max_layer == 2:
        return report(layer1=layer1, layer2=layer2)

    layer3 = run_jury(pkg, layer1, layer2, ctx.jurors, ctx.gateway, ledger_key=ledger_key)
    return report(layer1=layer1, layer2=layer2, layer3=layer3)


def scan_corpus(root: str | Path, ctx: PipelineContext, *, jobs: int = 1) -> list[ScanReport]:
    """Scan every skill under root. Reports come back in corpus
    enumeration order regardless of worker completion order."""
    paths = enumerate_corpus(root)
    if jobs <= 1:
        return [scan_path(p, ctx) for p in paths]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(scan_path, p, ctx) for p in paths]
        return [f.result() for f in futures]
