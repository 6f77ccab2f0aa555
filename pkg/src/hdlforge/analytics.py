"""Corpus statistics, functional classification and stage-retention reports."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from statistics import fmean
from typing import Optional, Sequence, Union

from .errors import ClientUnavailable
from .lexical import comment_density, comment_regions, line_count
from .model import STAGE_ORDER, ModuleRecord, Stage, StageReport

log = logging.getLogger(__name__)

# upper edges; a value v lands in the first bucket with v < edge
LINE_EDGES = (25, 50, 100, 200, 500, 1000, 5000, float("inf"))
TOKEN_EDGES = (50, 100, 200, 500, 1000, 2000, 4096, 8192, float("inf"))
PORT_EDGES = (11, 21, 51, 101, float("inf"))
# right-closed density buckets over (0, 100]; the last one is open-ended
DENSITY_EDGES = (12.5, 25.0, 37.5, 50.0, 62.5, 75.0)
DENSITY_LABELS = ("0-12.5", "12.5-25", "25-37.5", "37.5-50", "50-62.5", "62.5-75", ">75")

STAGE_DESCRIPTIONS = {
    Stage.FILTER: "Drops netlists, testbenches and simulation files",
    Stage.DEDUP: "Removes textually identical files",
    Stage.SYNTAX: "Drops files with syntactic errors",
    Stage.SYNTHESIS: "Passes only synthesizable projects",
    Stage.DB_VALIDATION: "Ensures compatibility with the database schema",
}


def lower_median(values: Sequence[float]) -> float:
    """Order-statistic median; the lower middle for even counts."""
    if not values:
        return 0.0
    ordered = sorted(values)
    return ordered[(len(ordered) - 1) // 2]


def _bucket(value: float, edges: Sequence[float]) -> int:
    for i, edge in enumerate(edges):
        if value < edge:
            return i
    return len(edges) - 1


def _labels(edges: Sequence[float]) -> list[str]:
    labels, low = [], 0
    for edge in edges:
        if edge == float("inf"):
            labels.append(f">={low}")
        else:
            labels.append(f"{low}-{int(edge) - 1}")
            low = int(edge)
    return labels


def density_bucket(density: float) -> int:
    """Bucket index for a positive density; right-closed edges."""
    for i, edge in enumerate(DENSITY_EDGES):
        if density <= edge:
            return i
    return len(DENSITY_EDGES)


@dataclass
class MetricStats:
    mean: float
    median: float
    histogram: dict[str, int]

    @property
    def right_skewed(self) -> bool:
        return self.mean > self.median


@dataclass
class CorpusStats:
    module_count: int
    lines: MetricStats
    tokens: MetricStats
    ports: MetricStats
    commented_count: int
    uncommented_count: int
    density_mean: float
    density_median: float
    density_histogram: dict[str, int]
    class_histogram: dict[int, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        def metric(m: MetricStats) -> dict:
            return {
                "mean": m.mean,
                "median": m.median,
                "right_skewed": m.right_skewed,
                "histogram": m.histogram,
            }

        return {
            "module_count": self.module_count,
            "line_count": metric(self.lines),
            "token_count": metric(self.tokens),
            "port_count": metric(self.ports),
            "comments": {
                "commented": self.commented_count,
                "uncommented": self.uncommented_count,
                "density_mean": self.density_mean,
                "density_median": self.density_median,
                "density_histogram": self.density_histogram,
            },
            "classes": {str(k): v for k, v in sorted(self.class_histogram.items())},
        }


def _metric(values: list[float], edges: Sequence[float]) -> MetricStats:
    hist = dict.fromkeys(_labels(edges), 0)
    labels = list(hist)
    for v in values:
        hist[labels[_bucket(v, edges)]] += 1
    return MetricStats(fmean(values) if values else 0.0, lower_median(values), hist)


def compute_stats(records: Sequence[ModuleRecord], classifier=None) -> CorpusStats:
    lines = [line_count(r.verilog_code) for r in records]
    tokens = [r.token_count for r in records]
    ports = [len(r.ports) for r in records]
    densities = []
    for r in records:
        if comment_regions(r.verilog_code):
            densities.append(comment_density(r.verilog_code))
    dens_hist = dict.fromkeys(DENSITY_LABELS, 0)
    for d in densities:
        dens_hist[DENSITY_LABELS[density_bucket(d)]] += 1
    classes = dict.fromkeys(range(1, 14), 0)
    for r in records:
        classes[classify_module(r, classifier)] += 1
    return CorpusStats(
        module_count=len(records),
        lines=_metric(lines, LINE_EDGES),
        tokens=_metric(tokens, TOKEN_EDGES),
        ports=_metric(ports, PORT_EDGES),
        commented_count=len(densities),
        uncommented_count=len(records) - len(densities),
        density_mean=fmean(densities) if densities else 0.0,
        density_median=lower_median(densities),
        density_histogram=dens_hist,
        class_histogram=classes,
    )


# ---------------------------------------------------------------- classification

@dataclass(frozen=True)
class FunctionalClass:
    id: int
    name: str
    examples: str
    keywords: tuple[str, ...]


def _normalize_words(text: str) -> list[str]:
    text = re.sub(r"([a-z])([A-Z])", r"\1 \2", text)
    words = re.findall(r"[a-z0-9]+(?:[.\-][a-z0-9]+)*", text.lower().replace("_", " "))
    return [w[:-1] if len(w) > 3 and w.endswith("s") and not w.endswith("ss") else w for w in words]


@lru_cache(maxsize=4)
def load_classes(path: Optional[str] = None) -> tuple[FunctionalClass, ...]:
    if path is None:
        raw = resources.files("hdlforge.data").joinpath("classes.json").read_text(encoding="utf-8")
    else:
        raw = Path(path).read_text(encoding="utf-8")
    data = json.loads(raw)
    return tuple(
        FunctionalClass(c["id"], c["name"], c["examples"], tuple(c["keywords"]))
        for c in sorted(data["classes"], key=lambda c: c["id"])
    )


def rubric_text(classes: Sequence[FunctionalClass]) -> str:
    lines = ["Classify the following Verilog module into exactly one class. Reply with the class number."]
    lines += [f"{c.id}. {c.name}: {c.examples}" for c in classes]
    return "\n".join(lines)


def keyword_class(text: str, classes: Sequence[FunctionalClass]) -> int:
    """Best keyword-scoring class; ties and no-hit go to the lowest id."""
    haystack = " " + " ".join(_normalize_words(text)) + " "
    best_id, best_score = classes[0].id, 0
    for c in classes:
        score = 0
        for kw in c.keywords:
            phrase = " ".join(_normalize_words(kw))
            if phrase and f" {phrase} " in haystack:
                score += len(phrase.split())
        if score > best_score:
            best_id, best_score = c.id, score
    return best_id


def classify_module(record: ModuleRecord, classifier=None, classes: Optional[Sequence[FunctionalClass]] = None) -> int:
    classes = classes or load_classes()
    if classifier is not None and getattr(classifier, "kind", "fallback") != "fallback":
        try:
            return classifier.classify(record.verilog_code, rubric_text(classes))
        except ClientUnavailable as exc:
            log.warning("classification fell back to keywords for %s: %s", record.module_name, exc)
    return keyword_class(f"{record.module_name} {record.description}", classes)


# ---------------------------------------------------------------- reports

def format_retention(report: StageReport) -> str:
    value = report.retention
    return "n/a" if value is None else f"{value:.2f}%"


def _reason_key(reason: str) -> str:
    key = reason.split(":", 1)[0].strip()
    return "duplicate" if key.startswith("duplicate of") else key


def common_reasons(report: StageReport, top: int = 3) -> list[str]:
    counts: dict[str, int] = {}
    for _, reason in report.rejections:
        key = _reason_key(reason)
        counts[key] = counts.get(key, 0) + 1
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [k for k, _ in ranked[:top]]


def _mb(n: int) -> str:
    return f"{n / 1_000_000:.3f}"


def table1_text(reports: Sequence[StageReport]) -> str:
    header = ("Stage", "Description", "Input (MB)", "Output (MB)", "% Retained", "Common Rejection Reasons")
    rows = [
        (
            r.stage.value,
            STAGE_DESCRIPTIONS[r.stage],
            _mb(r.input_bytes),
            _mb(r.output_bytes),
            format_retention(r),
            ", ".join(common_reasons(r)) or "-",
        )
        for r in reports
    ]
    widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)]
    out = io.StringIO()
    for row in [header] + rows:
        out.write(" | ".join(str(x).ljust(w) for x, w in zip(row, widths)).rstrip() + "\n")
    return out.getvalue()


def render_report(
    stats: Optional[CorpusStats],
    reports: Sequence[StageReport],
    out_dir: Optional[Union[str, os.PathLike]] = None,
) -> dict:
    """JSON-ready report; with ``out_dir`` also writes report.json, table1.txt and hist_*.csv."""
    ordered = sorted(reports, key=lambda r: STAGE_ORDER.index(r.stage))
    doc = {
        "stages": [
            {
                "stage": r.stage.value,
                "description": STAGE_DESCRIPTIONS[r.stage],
                "input_count": r.input_count,
                "output_count": r.output_count,
                "input_bytes": r.input_bytes,
                "output_bytes": r.output_bytes,
                "input_mb": r.input_bytes / 1_000_000,
                "output_mb": r.output_bytes / 1_000_000,
                "retained": format_retention(r),
                "retention": r.retention,
                "common_rejection_reasons": common_reasons(r),
            }
            for r in ordered
        ],
        "stats": stats.to_dict() if stats else None,
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        (out / "table1.txt").write_text(table1_text(ordered), encoding="utf-8")
        if stats:
            hists = {
                "lines": stats.lines.histogram,
                "tokens": stats.tokens.histogram,
                "ports": stats.ports.histogram,
                "density": stats.density_histogram,
                "classes": {str(k): v for k, v in stats.class_histogram.items()},
            }
            for name, hist in hists.items():
                with open(out / f"hist_{name}.csv", "w", newline="", encoding="utf-8") as fh:
                    writer = csv.writer(fh, lineterminator="\n")
                    writer.writerow(["bucket", "count"])
                    writer.writerows(hist.items())
    return doc

