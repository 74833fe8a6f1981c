"""Benchmark harness: labeled-manifest evaluation, the cost model, and
corpus throughput summaries."""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .pipeline import PipelineContext, scan_path

logger = logging.getLogger(__name__)

MODES = ("layer1_only", "l1_l2", "full")
_MODE_LAYER = {"layer1_only": 1, "l1_l2": 2, "full": 3}

# Flag-for-review counts as a detection: a gatekeeper holds the skill
# either way. Switch with positive_verdicts if a stricter reading is
# wanted.
DEFAULT_POSITIVE_VERDICTS = ("MALICIOUS", "NEEDS_HUMAN")


@dataclass(frozen=True)
class LabeledExample:
    path: str
    label: str  # benign | malicious
    attack_types: tuple[str, ...] = ()
    stealth: int | None = None

    def __post_init__(self):
        if self.label not in ("benign", "malicious"):
            raise ValueError(f"label must be benign or malicious, got {self.label!r}")
        if self.stealth is not None and self.label != "malicious":
            raise ValueError("stealth ratings apply to malicious examples only")


@dataclass(frozen=True)
class Metrics:
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    f1: float
    accuracy: float
    fpr: float
    avg_cost_usd: float = 0.0
    avg_latency_ms: float = 0.0
    layer1_resolution_rate: float = 0.0
    degenerate: bool = False

    @classmethod
    def from_counts(
        cls,
        tp: int,
        fp: int,
        fn: int,
        tn: int,
        *,
        avg_cost_usd: float = 0.0,
        avg_latency_ms: float = 0.0,
        layer1_resolution_rate: float = 0.0,
    ) -> "Metrics":
        degenerate = False
        if tp + fp:
            precision = tp / (tp + fp)
        else:
            precision, degenerate = 0.0, True
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        total = tp + fp + fn + tn
        accuracy = (tp + tn) / total if total else 0.0
        fpr = fp / (fp + tn) if fp + tn else 0.0
        return cls(
            tp=tp,
            fp=fp,
            fn=fn,
            tn=tn,
            precision=precision,
            recall=recall,
            f1=f1,
            accuracy=accuracy,
            fpr=fpr,
            avg_cost_usd=avg_cost_usd,
            avg_latency_ms=avg_latency_ms,
            layer1_resolution_rate=layer1_resolution_rate,
            degenerate=degenerate,
        )

    def to_dict(self) -> dict:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "tn": self.tn,
            "precision": round(self.precision, 6),
            "recall": round(self.recall, 6),
            "f1": round(self.f1, 6),
            "accuracy": round(self.accuracy, 6),
            "fpr": round(self.fpr, 6),
            "avg_cost_usd": round(self.avg_cost_usd, 9),
            "avg_latency_ms": round(self.avg_latency_ms, 3),
            "layer1_resolution_rate": round(self.layer1_resolution_rate, 6),
            "degenerate": self.degenerate,
        }


def load_manifest(path: str | Path) -> list[LabeledExample]:
    """JSONL manifest: one {path, label, attack_types?, stealth?} per line."""
    examples = []
    for line_no, line in enumerate(Path(path).read_text("utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
        examples.append(
            LabeledExample(
                path=str(doc["path"]),
                label=str(doc["label"]),
                attack_types=tuple(doc.get("attack_types") or ()),
                stealth=doc.get("stealth"),
            )
        )
    return examples


def evaluate(
    manifest_path: str | Path,
    ctx: PipelineContext,
    mode: str = "full",
    *,
    jobs: int = 1,
    positive_verdicts: tuple[str, ...] = DEFAULT_POSITIVE_VERDICTS,
    l2_band: tuple[float, float] | None = None,
) -> tuple[Metrics, list[dict]]:
    """Run the pipeline over a labeled manifest and score it.

    Predictions are positive when the final verdict is in
    positive_verdicts (at the layer-1 cap this makes escalation the
    positive class). ERROR examples are excluded from the confusion
    matrix and reported in the ledger. ``l2_band`` optionally restricts
    the returned ledger to examples whose aggregate semantic score falls
    inside [lo, hi] (a study filter; metrics always cover everything).
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    ctx.max_layer = _MODE_LAYER[mode]
    examples = load_manifest(manifest_path)
    base = Path(manifest_path).parent

    def run_one(ex: LabeledExample) -> dict:
        target = Path(ex.path)
        if not target.is_absolute():
            target = base / target
        if not target.is_dir():
            return {"path": ex.path, "label": ex.label, "error": "missing_path"}
        report = scan_path(target, ctx)
        row = {
            "path": ex.path,
            "label": ex.label,
            "final_verdict": report.final_verdict,
            "resolved_at_layer": report.resolved_at_layer,
            "r": report.layer1.r if report.layer1 else None,
            "R2": report.layer2.R2 if report.layer2 else None,
            "cost_usd": report.total_cost_usd,
            "latency_ms": report.total_latency_ms,
        }
        if report.error:
            row["error"] = report.error.get("kind", "error")
        return row

    if jobs <= 1:
        ledger = [run_one(ex) for ex in examples]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            ledger = list(pool.map(run_one, examples))

    tp = fp = fn = tn = 0
    cost_sum = latency_sum = 0.0
    resolved_l1 = 0
    scored = 0
    for row in ledger:
        if "error" in row:
            continue
        scored += 1
        cost_sum += row["cost_usd"]
        latency_sum += row["latency_ms"]
        if row["resolved_at_layer"] == 1:
            resolved_l1 += 1
        predicted_positive = row["final_verdict"] in positive_verdicts
        actual_positive = row["label"] == "malicious"
        if predicted_positive and actual_positive:
            tp += 1
        elif predicted_positive:
            fp += 1
        elif actual_positive:
            fn += 1
        else:
            tn += 1

    metrics = Metrics.from_counts(
        tp,
        fp,
        fn,
        tn,
        avg_cost_usd=cost_sum / scored if scored else 0.0,
        avg_latency_ms=latency_sum / scored if scored else 0.0,
        layer1_resolution_rate=resolved_l1 / scored if scored else 0.0,
    )
    if l2_band is not None:
        lo, hi = l2_band
        ledger = [r for r in ledger if r.get("R2") is not None and lo <= r["R2"] <= hi]
    return metrics, ledger


def cost_model(layer1_rate: float, l2_cost: float) -> float:
    """Average per-skill cost when layer1_rate of the volume resolves at
    the free static layer and the rest costs l2_cost each."""
    if not 0.0 <= layer1_rate <= 1.0:
        raise ValueError("layer1_rate must be in [0, 1]")
    return (layer1_rate * 0.0) + ((1.0 - layer1_rate) * l2_cost)


def nearest_rank_percentile(values: list[float], pct: float) -> float:
    """Nearest-rank percentile: the ceil(pct*n)-th smallest value."""
    if not values:
        raise ValueError("need at least one value")
    ordered = sorted(values)
    rank = max(1, math.ceil(pct * len(ordered)))
    return ordered[rank - 1]


def throughput_report(ledger: list[dict]) -> dict:
    """Latency/flag/error summary over a corpus-run ledger.

    Each entry needs elapsed_ms plus escalated/error booleans.
    """
    if not ledger:
        raise ValueError("throughput report needs at least one ledger entry")
    times = [float(e["elapsed_ms"]) for e in ledger if not e.get("error")]
    if not times:
        times = [0.0]
    return {
        "avg_ms": sum(times) / len(times),
        "p95_ms": nearest_rank_percentile(times, 0.95),
        "flagged_rate": sum(1 for e in ledger if e.get("escalated")) / len(ledger),
        "error_rate": sum(1 for e in ledger if e.get("error")) / len(ledger),
    }
