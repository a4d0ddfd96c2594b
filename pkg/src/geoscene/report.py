"""Evaluation report output: JSON, delimited tables, and rendered figures."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")  # headless rendering, no display server
import matplotlib.pyplot as plt

from .errors import SinkIOError
from .evalharness import FACETS, EvalReport


@dataclass(frozen=True)
class ReportPaths:
    json_path: str
    metrics_csv_path: str
    categories_csv_path: str
    accuracy_figure_path: str
    category_figure_path: str

    def all(self) -> tuple[str, ...]:
        return (
            self.json_path,
            self.metrics_csv_path,
            self.categories_csv_path,
            self.accuracy_figure_path,
            self.category_figure_path,
        )


def format_report(report: EvalReport) -> str:
    """Plain-text table for terminals and logs."""
    lines = [
        f"items: {report.items}",
        f"parse rate: {report.parse_rate:.1f}%",
        "",
        "facet accuracies",
    ]
    for facet in FACETS:
        lines.append(f"  {facet:<12} {report.accuracies[facet]:6.1f}%")
    lines += [
        "",
        "errors",
        f"  omitted entities      {report.omitted_entities}",
        f"  hallucinated entities {report.hallucinated_entities}",
        f"  omitted properties    {report.omitted_properties}",
        f"  hallucinated props    {report.hallucinated_properties}",
    ]
    if report.categories:
        lines += ["", "per-category perfect ratio"]
        for name in sorted(report.categories):
            stat = report.categories[name]
            lines.append(
                f"  {name:<16} {stat.perfect:>4}/{stat.total:<4} {stat.perfect_ratio:6.1f}%"
            )
    return "\n".join(lines)


def _render_accuracy_figure(report: EvalReport, path: Path):
    figure, axis = plt.subplots(figsize=(6, 4))
    values = [report.accuracies[f] for f in FACETS]
    axis.bar(range(len(FACETS)), values, color="#3b688c")
    axis.set_xticks(range(len(FACETS)))
    axis.set_xticklabels(FACETS, rotation=20)
    axis.set_ylim(0, 105)
    axis.set_ylabel("accuracy [%]")
    axis.set_title("facet accuracies")
    for x, value in enumerate(values):
        axis.text(x, value + 1, f"{value:.1f}", ha="center", fontsize=8)
    figure.tight_layout()
    figure.savefig(path)
    plt.close(figure)


def _render_category_figure(report: EvalReport, path: Path):
    names = sorted(report.categories)
    figure, axis = plt.subplots(figsize=(6, max(2.5, 0.4 * len(names) + 1)))
    if names:
        ratios = [report.categories[n].perfect_ratio for n in names]
        positions = range(len(names))
        axis.barh(positions, ratios, color="#6c8c3b")
        axis.set_yticks(positions)
        axis.set_yticklabels(names, fontsize=8)
        axis.invert_yaxis()
    axis.set_xlim(0, 105)
    axis.set_xlabel("perfect ratio [%]")
    axis.set_title("per-category perfect queries")
    figure.tight_layout()
    figure.savefig(path)
    plt.close(figure)


def write_report(
    report: EvalReport, out_dir: str | Path, basename: str = "eval_report"
) -> ReportPaths:
    """Write the report as JSON + two CSV tables + two PNG figures."""
    out = Path(out_dir)
    paths = ReportPaths(
        json_path=str(out / f"{basename}.json"),
        metrics_csv_path=str(out / f"{basename}_metrics.csv"),
        categories_csv_path=str(out / f"{basename}_categories.csv"),
        accuracy_figure_path=str(out / f"{basename}_accuracies.png"),
        category_figure_path=str(out / f"{basename}_categories.png"),
    )
    try:
        out.mkdir(parents=True, exist_ok=True)
        with open(paths.json_path, "w", encoding="utf-8") as handle:
            json.dump(report.to_dict(), handle, ensure_ascii=False, indent=2, sort_keys=True)
            handle.write("\n")

        with open(paths.metrics_csv_path, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["metric", "value"])
            writer.writerow(["items", report.items])
            writer.writerow(["parse_rate", f"{report.parse_rate:.4f}"])
            for facet in FACETS:
                writer.writerow([f"accuracy_{facet}", f"{report.accuracies[facet]:.4f}"])
            writer.writerow(["omitted_entities", report.omitted_entities])
            writer.writerow(["hallucinated_entities", report.hallucinated_entities])
            writer.writerow(["omitted_properties", report.omitted_properties])
            writer.writerow(["hallucinated_properties", report.hallucinated_properties])

        with open(paths.categories_csv_path, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["category", "total", "perfect", "perfect_ratio"])
            for name in sorted(report.categories):
                stat = report.categories[name]
                writer.writerow(
                    [name, stat.total, stat.perfect, f"{stat.perfect_ratio:.4f}"]
                )

        _render_accuracy_figure(report, Path(paths.accuracy_figure_path))
        _render_category_figure(report, Path(paths.category_figure_path))
    except OSError as exc:
        raise SinkIOError(f"cannot write report under {out}: {exc}") from exc
    return paths
