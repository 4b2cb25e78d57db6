"""Matplotlib renderings of balance, QA and plan results.

Everything draws through the Agg backend and writes PNG files, so the
functions work in headless environments and alongside the delimited
outputs the CLI produces.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evalharness import PLAN_LEVELS, AccuracyReport, PlanAccuracy, recomputed_lbr
from .linebalance import BalanceReport

logger = logging.getLogger(__name__)

_BAR_COLOR = "#4878a8"
_LIMIT_COLOR = "#b2453c"


def _save(fig, path: str | Path) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=120, bbox_inches="tight")
    plt.close(fig)
    logger.info("wrote figure %s", out)
    return out


def station_load_figure(report: BalanceReport, path: str | Path) -> Path:
    """Bar chart of per-station loads with the cycle-time limit marked."""

    stations = list(range(1, report.stations + 1))
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    ax.bar(stations, report.loads, color=_BAR_COLOR)
    if report.ct_limit is not None:
        ax.axhline(
            report.ct_limit,
            color=_LIMIT_COLOR,
            linestyle="--",
            label=f"limit {report.ct_limit:g} s",
        )
        ax.legend(loc="lower right")
    for station, load in zip(stations, report.loads):
        ax.annotate(
            f"{load:g}",
            (station, load),
            ha="center",
            va="bottom",
            fontsize=8,
        )
    ax.set_xticks(stations)
    ax.set_xlabel("workstation")
    ax.set_ylabel("load (s)")
    ax.set_title(
        f"{report.method}: CT {report.ct:g} s, "
        f"balance rate {recomputed_lbr(report):.2f}%"
    )
    return _save(fig, path)


def qa_accuracy_figure(report: AccuracyReport, path: str | Path) -> Path:
    """Per-question-type accuracy bars plus the overall rate."""

    types = sorted(report.per_type)
    values = [
        report.per_type[t][0] / report.per_type[t][1] if report.per_type[t][1] else 0.0
        for t in types
    ]
    labels = [t.replace("_", "\n") for t in types] + ["overall"]
    values.append(report.accuracy)
    fig, ax = plt.subplots(figsize=(7.2, 3.6))
    colors = [_BAR_COLOR] * len(types) + ["#588a5c"]
    ax.bar(range(len(values)), values, color=colors)
    for index, value in enumerate(values):
        ax.annotate(
            f"{value:.2f}", (index, value), ha="center", va="bottom", fontsize=8
        )
    ax.set_xticks(range(len(values)))
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_ylim(0.0, 1.1)
    ax.set_ylabel("accuracy")
    ax.set_title(f"question accuracy over {report.total} questions")
    return _save(fig, path)


def plan_accuracy_figure(
    accuracy: PlanAccuracy | Mapping[str, float], path: str | Path
) -> Path:
    """Bars for the four plan comparison levels."""

    if isinstance(accuracy, PlanAccuracy):
        levels = {name: accuracy.level(name) for name in PLAN_LEVELS}
    else:
        levels = {name: float(accuracy[name]) for name in PLAN_LEVELS}
    fig, ax = plt.subplots(figsize=(5.6, 3.6))
    ax.bar(range(len(PLAN_LEVELS)), [levels[n] for n in PLAN_LEVELS], color=_BAR_COLOR)
    for index, name in enumerate(PLAN_LEVELS):
        ax.annotate(
            f"{levels[name]:.2f}", (index, levels[name]), ha="center", va="bottom"
        )
    ax.set_xticks(range(len(PLAN_LEVELS)))
    ax.set_xticklabels([name.capitalize() for name in PLAN_LEVELS])
    ax.set_ylim(0.0, 1.1)
    ax.set_ylabel("accuracy")
    ax.set_title("plan accuracy by comparison level")
    return _save(fig, path)


def method_comparison_figure(
    reports: list[BalanceReport], path: str | Path
) -> Path:
    """Cycle time per method, annotated with the recomputed balance rate."""

    if not reports:
        raise ValueError("no reports to draw")
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    positions = range(len(reports))
    cts = [report.ct for report in reports]
    ax.bar(positions, cts, color=_BAR_COLOR)
    limit = next((r.ct_limit for r in reports if r.ct_limit is not None), None)
    if limit is not None:
        ax.axhline(
            limit, color=_LIMIT_COLOR, linestyle="--", label=f"limit {limit:g} s"
        )
        ax.legend(loc="lower right")
    for index, report in enumerate(reports):
        ax.annotate(
            f"{report.ct:g}\n{recomputed_lbr(report):.1f}%",
            (index, report.ct),
            ha="center",
            va="bottom",
            fontsize=8,
        )
    ax.set_xticks(list(positions))
    ax.set_xticklabels([report.method for report in reports], fontsize=9)
    ax.set_ylabel("cycle time (s)")
    ax.set_title("cycle time by method")
    return _save(fig, path)
