"""Scoring utilities: QA accuracy, plan accuracy, and balance summaries.

The harness never trusts derived numbers it can recompute: load-balance
rates are recalculated from the station loads, and each report must pass
the identity ``lbr/100 * stations * ct == sum(loads)`` before it is
tabulated.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .kgraph import KnowledgeGraph
from .linebalance import BalanceReport
from .retrieval import QUESTION_TYPES, UnsupportedTemplateError, scripted_answer

logger = logging.getLogger(__name__)

HOP_KINDS = ("single", "multi")
IDENTITY_RTOL = 1e-9


class EvalError(ValueError):
    """Inputs to the harness are inconsistent or unusable."""


# ---------------------------------------------------------------------------
# Question corpus


@dataclass(frozen=True)
class QAItem:
    """One benchmark question with its reference answer."""

    id: str
    type: str
    hops: str
    question: str
    gold: str

    def validate(self) -> None:
        if not self.id:
            raise EvalError("question item has an empty id")
        if self.type not in QUESTION_TYPES:
            raise EvalError(f"{self.id}: unknown question type {self.type!r}")
        if self.hops not in HOP_KINDS:
            raise EvalError(f"{self.id}: hops must be one of {HOP_KINDS}")
        if not self.question.strip():
            raise EvalError(f"{self.id}: empty question")
        if not self.gold.strip():
            raise EvalError(f"{self.id}: empty gold answer")


@dataclass(frozen=True)
class QAResult:
    item: QAItem
    predicted: str
    correct: bool
    provenance: tuple[str, ...] = ()
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.item.id,
            "type": self.item.type,
            "hops": self.item.hops,
            "question": self.item.question,
            "gold": self.item.gold,
            "predicted": self.predicted,
            "correct": self.correct,
            "provenance": list(self.provenance),
            "error": self.error,
        }


def load_qa_corpus(path: str | Path) -> list[QAItem]:
    """Read a JSONL corpus; every line needs id/type/hops/question/gold."""

    items: list[QAItem] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise EvalError(f"{path}:{line_no}: invalid JSON ({exc})") from None
            missing = [
                key
                for key in ("id", "type", "hops", "question", "gold")
                if key not in raw
            ]
            if missing:
                raise EvalError(
                    f"{path}:{line_no}: missing fields {', '.join(missing)}"
                )
            item = QAItem(
                id=str(raw["id"]),
                type=str(raw["type"]),
                hops=str(raw["hops"]),
                question=str(raw["question"]),
                gold=str(raw["gold"]),
            )
            item.validate()
            if item.id in seen:
                raise EvalError(f"{path}:{line_no}: duplicate question id {item.id!r}")
            seen.add(item.id)
            items.append(item)
    if not items:
        raise EvalError(f"{path}: corpus is empty")
    return items


# ---------------------------------------------------------------------------
# Judging


def normalize_answer(text: str) -> str:
    """Casefold and collapse runs of whitespace for comparison."""

    return re.sub(r"\s+", " ", text).strip().casefold()


def judge(predicted: str, gold: str) -> bool:
    return normalize_answer(predicted) == normalize_answer(gold)


def run_scripted_qa(items: Sequence[QAItem], g: KnowledgeGraph) -> list[QAResult]:
    """Answer every question with the template pipeline and judge it.

    Questions outside the supported templates count as incorrect rather
    than aborting the run.
    """

    results: list[QAResult] = []
    for item in items:
        try:
            answer = scripted_answer(item.question, g)
        except UnsupportedTemplateError as exc:
            logger.debug("%s: unsupported template (%s)", item.id, exc)
            results.append(
                QAResult(item=item, predicted="", correct=False, error=str(exc))
            )
            continue
        results.append(
            QAResult(
                item=item,
                predicted=answer.text,
                correct=judge(answer.text, item.gold),
                provenance=tuple(answer.provenance),
            )
        )
    return results


def load_qa_results(
    path: str | Path, items: Sequence[QAItem]
) -> list[QAResult]:
    """Ingest externally produced answers, JSONL with id/predicted.

    A line may carry its own ``correct`` verdict (pre-judged); otherwise
    the normalized exact match decides.
    """

    by_id = {item.id: item for item in items}
    results: list[QAResult] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise EvalError(f"{path}:{line_no}: invalid JSON ({exc})") from None
            qid = str(raw.get("id", ""))
            if qid not in by_id:
                raise EvalError(f"{path}:{line_no}: unknown question id {qid!r}")
            if qid in seen:
                raise EvalError(f"{path}:{line_no}: duplicate answer for {qid!r}")
            if "predicted" not in raw:
                raise EvalError(f"{path}:{line_no}: missing predicted answer")
            seen.add(qid)
            item = by_id[qid]
            predicted = str(raw["predicted"])
            if "correct" in raw:
                correct = bool(raw["correct"])
            else:
                correct = judge(predicted, item.gold)
            results.append(QAResult(item=item, predicted=predicted, correct=correct))
    missing = sorted(set(by_id) - seen)
    if missing:
        raise EvalError(f"{path}: no answers for {len(missing)} questions: {missing[:5]}")
    return results


# ---------------------------------------------------------------------------
# QA accuracy


@dataclass
class AccuracyReport:
    """Per-type and per-hop tallies with the combined headline score."""

    total: int
    correct: int
    per_type: dict[str, tuple[int, int]]
    single: tuple[int, int]
    multi: tuple[int, int]

    @property
    def accuracy(self) -> float:
        return self.correct / self.total if self.total else 0.0

    @property
    def sha(self) -> float:
        done, total = self.single
        if total == 0:
            raise EvalError("no single-hop questions: single-hop accuracy undefined")
        return done / total

    @property
    def mha(self) -> float:
        done, total = self.multi
        if total == 0:
            raise EvalError("no multi-hop questions: multi-hop accuracy undefined")
        return done / total

    @property
    def ptwa(self) -> float:
        """Process-type weighted accuracy: equal-weight mix of the two hops."""

        return 0.5 * self.sha + 0.5 * self.mha

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "correct": self.correct,
            "accuracy": self.accuracy,
            "per_type": {
                k: {"correct": c, "total": t, "accuracy": c / t if t else 0.0}
                for k, (c, t) in sorted(self.per_type.items())
            },
            "single_hop": {"correct": self.single[0], "total": self.single[1]},
            "multi_hop": {"correct": self.multi[0], "total": self.multi[1]},
            "sha": self.sha if self.single[1] else None,
            "mha": self.mha if self.multi[1] else None,
            "ptwa": self.ptwa if self.single[1] and self.multi[1] else None,
        }


def qa_accuracy(results: Sequence[QAResult]) -> AccuracyReport:
    if not results:
        raise EvalError("no results to score")
    per_type: dict[str, list[int]] = {}
    single = [0, 0]
    multi = [0, 0]
    correct = 0
    for result in results:
        tally = per_type.setdefault(result.item.type, [0, 0])
        tally[1] += 1
        bucket = single if result.item.hops == "single" else multi
        bucket[1] += 1
        if result.correct:
            tally[0] += 1
            bucket[0] += 1
            correct += 1
    return AccuracyReport(
        total=len(results),
        correct=correct,
        per_type={k: (v[0], v[1]) for k, v in per_type.items()},
        single=(single[0], single[1]),
        multi=(multi[0], multi[1]),
    )


def aggregate_reported(rows: Sequence[tuple[str, str, int, float]]) -> dict:
    """Combine per-type tallies of (type, hops, question_count, accuracy).

    Each hop class is averaged with question-count weights; the headline
    score is the equal-weight mix of the two classes. Use this to roll up
    results that arrive pre-aggregated per question type.
    """

    single = [0.0, 0]
    multi = [0.0, 0]
    for qtype, hops, count, accuracy in rows:
        if qtype not in QUESTION_TYPES:
            raise EvalError(f"unknown question type {qtype!r}")
        if hops not in HOP_KINDS:
            raise EvalError(f"hops must be one of {HOP_KINDS}, got {hops!r}")
        if count <= 0:
            raise EvalError(f"{qtype}: question count must be positive")
        if not 0.0 <= accuracy <= 1.0:
            raise EvalError(f"{qtype}: accuracy {accuracy!r} outside [0, 1]")
        bucket = single if hops == "single" else multi
        bucket[0] += count * accuracy
        bucket[1] += count
    if single[1] == 0:
        raise EvalError("no single-hop tallies: single-hop accuracy undefined")
    if multi[1] == 0:
        raise EvalError("no multi-hop tallies: multi-hop accuracy undefined")
    sha = single[0] / single[1]
    mha = multi[0] / multi[1]
    return {"sha": sha, "mha": mha, "ptwa": 0.5 * sha + 0.5 * mha}


def summarize_runs(reports: Sequence[AccuracyReport]) -> dict:
    """Per-run headline scores plus their arithmetic means."""

    if not reports:
        raise EvalError("no runs to summarize")
    rows = [
        {"sha": report.sha, "mha": report.mha, "ptwa": report.ptwa}
        for report in reports
    ]
    return {
        "runs": rows,
        "mean": {
            key: sum(row[key] for row in rows) / len(rows)
            for key in ("sha", "mha", "ptwa")
        },
    }


# ---------------------------------------------------------------------------
# Plan accuracy

PLAN_LEVELS = ("task", "subtask", "location", "object")
_RECORD_FIELDS = ("verb", "object", "station", "location", "labels")


def _check_records(records: Sequence[Mapping[str, Any]], who: str) -> None:
    for index, record in enumerate(records):
        missing = [key for key in _RECORD_FIELDS if key not in record]
        if missing:
            raise EvalError(
                f"{who} record {index}: missing fields {', '.join(missing)}"
            )


def _normalize_location(value: Any) -> str | None:
    if value is None:
        return None
    return normalize_answer(str(value))


@dataclass
class PlanAccuracy:
    """Hit counts for the four comparison levels of one plan."""

    task: float
    subtask: tuple[int, int]
    location: tuple[int, int]
    object: tuple[int, int]

    def level(self, name: str) -> float:
        if name == "task":
            return self.task
        done, total = getattr(self, name)
        return done / total if total else 1.0

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "subtask": {"correct": self.subtask[0], "total": self.subtask[1]},
            "location": {"correct": self.location[0], "total": self.location[1]},
            "object": {"correct": self.object[0], "total": self.object[1]},
            "levels": {name: self.level(name) for name in PLAN_LEVELS},
        }


def plan_accuracy(
    gold: Sequence[Mapping[str, Any]], predicted: Sequence[Mapping[str, Any]]
) -> PlanAccuracy:
    """Compare a predicted subtask sequence against the gold one.

    * subtask level: position-wise match of (verb, object, station),
      denominated by the gold length;
    * location/object levels: only positions the gold labels as carrying
      a Location or Object are scored, against the same position in the
      prediction;
    * task level: 1.0 only when every gold position (and the sequence
      length) matches on all of the above.
    """

    _check_records(gold, "gold")
    _check_records(predicted, "predicted")
    if not gold:
        raise EvalError("gold plan has no subtasks")

    subtask_hits = 0
    location_hits = [0, 0]
    object_hits = [0, 0]
    exact = len(predicted) == len(gold)
    for index, gold_record in enumerate(gold):
        pred = predicted[index] if index < len(predicted) else None
        triple_ok = pred is not None and (
            str(pred["verb"]) == str(gold_record["verb"])
            and pred["object"] == gold_record["object"]
            and int(pred["station"]) == int(gold_record["station"])
        )
        if triple_ok:
            subtask_hits += 1
        else:
            exact = False
        labels = set(gold_record["labels"])
        if "Location" in labels:
            location_hits[1] += 1
            if pred is not None and _normalize_location(
                pred["location"]
            ) == _normalize_location(gold_record["location"]):
                location_hits[0] += 1
            else:
                exact = False
        if "Object" in labels:
            object_hits[1] += 1
            if pred is not None and pred["object"] == gold_record["object"]:
                object_hits[0] += 1
            else:
                exact = False
    return PlanAccuracy(
        task=1.0 if exact else 0.0,
        subtask=(subtask_hits, len(gold)),
        location=(location_hits[0], location_hits[1]),
        object=(object_hits[0], object_hits[1]),
    )


def mean_plan_accuracy(
    pairs: Iterable[tuple[Sequence[Mapping[str, Any]], Sequence[Mapping[str, Any]]]]
) -> dict:
    """Score several (gold, predicted) pairs and average each level."""

    scores = [plan_accuracy(gold, predicted) for gold, predicted in pairs]
    if not scores:
        raise EvalError("no plan pairs to score")
    return {
        "plans": len(scores),
        "levels": {
            name: sum(score.level(name) for score in scores) / len(scores)
            for name in PLAN_LEVELS
        },
    }


def load_plan_records(path: str | Path) -> list[dict]:
    """Read subtask comparison records from a JSON file.

    Accepts either a bare list of records or an object with a
    ``records`` key (the shape written by the planner CLI).
    """

    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if isinstance(raw, dict):
        raw = raw.get("records")
    if not isinstance(raw, list):
        raise EvalError(f"{path}: expected a list of subtask records")
    _check_records(raw, str(path))
    return raw


# ---------------------------------------------------------------------------
# Balance report tables


def check_report_identity(report: BalanceReport) -> None:
    """Reject reports whose stored rates do not match their loads."""

    if not report.loads:
        raise EvalError("report has no station loads")
    total = sum(report.loads)
    ct = max(report.loads)
    scale = max(1.0, abs(total))
    if abs(report.ct - ct) > IDENTITY_RTOL * scale:
        raise EvalError(
            f"report ct {report.ct!r} does not match max station load {ct!r}"
        )
    implied = report.lbr / 100.0 * report.stations * report.ct
    if abs(implied - total) > IDENTITY_RTOL * scale:
        raise EvalError(
            f"report lbr {report.lbr!r} is inconsistent with its loads "
            f"(implies total {implied!r}, loads sum to {total!r})"
        )


def recomputed_lbr(report: BalanceReport) -> float:
    total = sum(report.loads)
    ct = max(report.loads)
    return total / (report.stations * ct) * 100.0


def balance_table(reports: Sequence[BalanceReport]) -> str:
    """Aligned text table over one instance: method rows, metric columns.

    All reports must describe the same instance (matching digests); the
    balance rate column is recomputed from the loads.
    """

    if not reports:
        raise EvalError("no reports to tabulate")
    digests = {report.instance_digest for report in reports}
    if len(digests) > 1:
        raise EvalError(
            "reports describe different instances: " + ", ".join(sorted(digests))
        )
    for report in reports:
        check_report_identity(report)

    headers = ("Method", "NITC", "NWU", "CT", "TCT", "LBR (%)")
    rows = []
    for report in reports:
        rows.append(
            (
                report.method,
                "-" if report.nitc is None else str(report.nitc),
                str(report.nwu),
                f"{report.ct:g}",
                "-" if report.tct is None else str(report.tct),
                f"{recomputed_lbr(report):.2f}",
            )
        )
    widths = [
        max(len(headers[col]), *(len(row[col]) for row in rows))
        for col in range(len(headers))
    ]
    lines = [
        "  ".join(headers[col].ljust(widths[col]) for col in range(len(headers))),
        "  ".join("-" * widths[col] for col in range(len(headers))),
    ]
    for row in rows:
        lines.append("  ".join(row[col].ljust(widths[col]) for col in range(len(headers))))
    return "\n".join(lines)
