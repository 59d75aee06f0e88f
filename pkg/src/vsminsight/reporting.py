"""Report types, table renderers, and figure output for evaluation runs.

Ratings live on [0, 1] inside the pipeline and are scaled by 100 for every
reported number; renderers format those with two decimals. Tables are plain
monospace text so they survive terminals and logs unchanged.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence


@dataclass(frozen=True)
class EvalReport:
    """Aggregate of one evaluation: runs x triples judged ratings."""

    label: str
    runs: int
    triples: int
    mean_rating_x100: float
    sd_across_runs_x100: float
    sample_token_avg: float
    per_run_means_x100: tuple
    per_triple_means_x100: tuple
    error_count: int

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "runs": self.runs,
            "triples": self.triples,
            "mean_rating_x100": self.mean_rating_x100,
            "sd_across_runs_x100": self.sd_across_runs_x100,
            "sample_token_avg": self.sample_token_avg,
            "per_run_means_x100": list(self.per_run_means_x100),
            "per_triple_means_x100": list(self.per_triple_means_x100),
            "error_count": self.error_count,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EvalReport":
        return cls(label=data["label"], runs=data["runs"], triples=data["triples"],
                   mean_rating_x100=data["mean_rating_x100"],
                   sd_across_runs_x100=data["sd_across_runs_x100"],
                   sample_token_avg=data["sample_token_avg"],
                   per_run_means_x100=tuple(data["per_run_means_x100"]),
                   per_triple_means_x100=tuple(data["per_triple_means_x100"]),
                   error_count=data["error_count"])


@dataclass(frozen=True)
class EvaluatorRow:
    """One evaluator's agreement with the consensus target, scaled x100."""

    name: str
    mean_rating_x100: float
    mae_x100: float
    pearson_x100: float

    def to_dict(self) -> dict:
        return {"name": self.name, "mean_rating_x100": self.mean_rating_x100,
                "mae_x100": self.mae_x100, "pearson_x100": self.pearson_x100}


@dataclass(frozen=True)
class JudgeValidationReport:
    samples: int
    runs: int
    baseline: EvaluatorRow
    candidates: tuple

    def to_dict(self) -> dict:
        return {"samples": self.samples, "runs": self.runs,
                "baseline": self.baseline.to_dict(),
                "candidates": [row.to_dict() for row in self.candidates]}


# --- text tables -----------------------------------------------------------


def _table(headers: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(str(h)), *(len(str(r[i])) for r in rows)) if rows else len(str(h))
              for i, h in enumerate(headers)]
    def line(cells):
        return "  ".join(str(c).ljust(w) for c, w in zip(cells, widths)).rstrip()
    out = [line(headers), line(["-" * w for w in widths])]
    out += [line(r) for r in rows]
    return "\n".join(out)


def render_judge_table(report: JudgeValidationReport) -> str:
    """Evaluator agreement table: Mean Rating / MAE (down) / Pearson r (up)."""
    rows = [(row.name, f"{row.mean_rating_x100:.2f}", f"{row.mae_x100:.2f}",
             f"{row.pearson_x100:.2f}")
            for row in (report.baseline, *report.candidates)]
    return _table(("Evaluator", "Mean Rating", "MAE ↓", "Pearson r ↑"), rows)


def render_eval_table(reports: Sequence[EvalReport]) -> str:
    """Per-configuration summary: AVG ± SD rating row plus token averages."""
    headers = ["Model"] + [r.label for r in reports]
    rating_row = ["AVG ± SD Rating"] + [
        f"{r.mean_rating_x100:.2f} ± {r.sd_across_runs_x100:.2f}" for r in reports]
    token_row = ["Sample Token AVG"] + [f"{r.sample_token_avg:,.0f}" for r in reports]
    return _table(headers, [rating_row, token_row])


# --- figures ----------------------------------------------------------------


def _plt():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def render_eval_figures(report: EvalReport, out_dir) -> list:
    """Bar charts of per-run and per-triple mean ratings, written as PNGs."""
    plt = _plt()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []

    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar([str(i) for i in range(1, report.runs + 1)],
           report.per_run_means_x100, color="#2a7de1")
    ax.set_xlabel("run")
    ax.set_ylabel("mean rating (x100)")
    ax.set_ylim(0, 105)
    ax.set_title(f"{report.label}: rating by run")
    path = out_dir / "ratings_by_run.png"
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    paths.append(path)

    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.bar([str(i) for i in range(report.triples)],
           report.per_triple_means_x100, color="#3fa45b")
    ax.set_xlabel("triple")
    ax.set_ylabel("mean rating (x100)")
    ax.set_ylim(0, 105)
    ax.set_title(f"{report.label}: rating by triple")
    path = out_dir / "ratings_by_triple.png"
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    paths.append(path)
    return paths


def render_judge_figures(report: JudgeValidationReport, out_dir) -> list:
    """Grouped agreement bars (MAE, Pearson) per evaluator, one PNG."""
    plt = _plt()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = [report.baseline, *report.candidates]
    names = [row.name for row in rows]
    positions = range(len(rows))
    width = 0.38

    fig, ax = plt.subplots(figsize=(1.6 * len(rows) + 3, 3.5))
    ax.bar([p - width / 2 for p in positions], [row.mae_x100 for row in rows],
           width, label="MAE ↓", color="#d1495b")
    ax.bar([p + width / 2 for p in positions], [row.pearson_x100 for row in rows],
           width, label="Pearson r ↑", color="#3fa45b")
    ax.set_xticks(list(positions))
    ax.set_xticklabels(names, rotation=15, ha="right")
    ax.set_ylabel("x100")
    ax.legend()
    ax.set_title("judge agreement with consensus")
    path = out_dir / "judge_agreement.png"
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return [path]


# --- file bundles --------------------------------------------------------------


def _write_json(path: Path, payload: dict):
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
                    "utf-8")


def write_report_files(report: EvalReport, out_dir, figures: bool = True) -> dict:
    """report.json + report.csv + report.txt (+ PNG figures) under out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {}

    paths["json"] = out_dir / "report.json"
    _write_json(paths["json"], report.to_dict())

    paths["csv"] = out_dir / "report.csv"
    with paths["csv"].open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["series", "key", "value"])
        writer.writerow(["summary", "label", report.label])
        writer.writerow(["summary", "runs", report.runs])
        writer.writerow(["summary", "triples", report.triples])
        writer.writerow(["summary", "mean_rating_x100", report.mean_rating_x100])
        writer.writerow(["summary", "sd_across_runs_x100", report.sd_across_runs_x100])
        writer.writerow(["summary", "sample_token_avg", report.sample_token_avg])
        writer.writerow(["summary", "error_count", report.error_count])
        for run, value in enumerate(report.per_run_means_x100, start=1):
            writer.writerow(["run_mean_x100", run, value])
        for triple, value in enumerate(report.per_triple_means_x100):
            writer.writerow(["triple_mean_x100", triple, value])

    paths["txt"] = out_dir / "report.txt"
    paths["txt"].write_text(render_eval_table([report]) + "\n", "utf-8")

    paths["figures"] = render_eval_figures(report, out_dir) if figures else []
    return paths


def write_validation_files(report: JudgeValidationReport, out_dir,
                           figures: bool = True) -> dict:
    """validation.json + validation.csv + validation.txt (+ PNG) under out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {}

    paths["json"] = out_dir / "validation.json"
    _write_json(paths["json"], report.to_dict())

    paths["csv"] = out_dir / "validation.csv"
    with paths["csv"].open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["evaluator", "mean_rating_x100", "mae_x100", "pearson_x100"])
        for row in (report.baseline, *report.candidates):
            writer.writerow([row.name, row.mean_rating_x100, row.mae_x100,
                             row.pearson_x100])

    paths["txt"] = out_dir / "validation.txt"
    paths["txt"].write_text(render_judge_table(report) + "\n", "utf-8")

    paths["figures"] = render_judge_figures(report, out_dir) if figures else []
    return paths
