"""Command-line front end.

Subcommands::

    asmplan kb ingest     build or extend a knowledge-graph file from documents
    asmplan kb query      answer an assembly question against a graph
    asmplan balance       solve a line-balancing instance from a task CSV
    asmplan plan          plan a product's assembly end to end
    asmplan eval qa       score question answering against a question corpus
    asmplan eval plan     score a produced subtask sequence against gold
    asmplan eval balance  run several solvers on one instance and tabulate

Exit codes: 0 success, 1 usage or configuration problem, 2 unreadable or
invalid input, 3 no feasible plan or failed planning, 4 endpoint
transport failure. Report-producing commands render PNG figures next to
their delimited output (or wherever ``--figure`` points).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from . import __version__
from .backend import ConfigError, EndpointConfig, FewShotConfig, TransportError
from .evalharness import (
    EvalError,
    balance_table,
    load_plan_records,
    load_qa_corpus,
    load_qa_results,
    plan_accuracy,
    qa_accuracy,
    run_scripted_qa,
)
from .kgraph import (
    DocumentError,
    GraphError,
    empty_graph,
    ingest_document,
    load_document,
    load_graph,
    save_graph,
)
from .linebalance import (
    BalanceError,
    evaluate,
    greedy_rpw,
    instance_from_csv,
    solve_baseline,
    solve_oracle,
    solve_reflective,
)
from .orchestrator import (
    REASONER_EXEMPLARS,
    HttpReasoner,
    InfeasiblePlanError,
    PlanningError,
    plan as run_planner,
    render_plan,
    write_trace,
)
from .retrieval import (
    HttpSynthesizer,
    Query,
    ScriptedSynthesizer,
    UnsupportedTemplateError,
    two_layer_retrieve,
)
from .scenegraph import SceneError, load_scene

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_INFEASIBLE = 3
EXIT_TRANSPORT = 4

SOLVER_NAMES = ("oracle", "greedy", "anneal", "reflect")


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with code 1."""

    def error(self, message: str):  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _json_dumps(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False)


def _emit(args: argparse.Namespace, payload, text: str) -> None:
    if getattr(args, "format", "text") == "json":
        print(_json_dumps(payload))
    else:
        print(text)


def _figure_target(args: argparse.Namespace) -> Path | None:
    figure = getattr(args, "figure", None)
    if figure:
        return Path(figure)
    out = getattr(args, "out", None)
    if out:
        return Path(out).with_suffix(".png")
    return None


def _load_graph_file(path: str):
    try:
        return load_graph(path)
    except FileNotFoundError:
        raise GraphError(f"graph file not found: {path}") from None


# ---------------------------------------------------------------------------
# kb


def _cmd_kb_ingest(args: argparse.Namespace) -> int:
    store = Path(args.graph)
    graph = load_graph(store) if store.exists() else empty_graph()
    for doc_path in args.documents:
        try:
            doc = load_document(doc_path)
        except FileNotFoundError:
            raise DocumentError(f"document not found: {doc_path}") from None
        graph = ingest_document(graph, doc)
        logger.info("ingested %s (%d steps)", doc.product_id, len(doc.steps))
    save_graph(graph, store)
    payload = {
        "graph": str(store),
        "entities": len(graph.entities),
        "relations": len(graph.relations),
        "documents": len(args.documents),
    }
    _emit(
        args,
        payload,
        f"ingested {len(args.documents)} documents -> {store} "
        f"({len(graph.entities)} entities, {len(graph.relations)} relations)",
    )
    return EXIT_OK


def _cmd_kb_query(args: argparse.Namespace) -> int:
    graph = _load_graph_file(args.graph)
    candidates, _, context = two_layer_retrieve(
        Query(text=args.question, k=args.k), graph
    )
    if not candidates.candidates:
        _emit(
            args,
            {
                "question": args.question,
                "candidates": [],
                "context": [],
                "answer": None,
                "provenance": [],
            },
            "no candidates",
        )
        return EXIT_OK

    if args.http:
        synth = HttpSynthesizer(EndpointConfig.from_env())
    else:
        synth = ScriptedSynthesizer()
    try:
        result = synth.synthesize(args.question, graph, context)
        answer_text: str | None = result.text
        provenance = list(result.provenance)
        answer_lines = [result.text]
    except UnsupportedTemplateError as exc:
        logger.debug("no template answer: %s", exc)
        answer_text = None
        provenance = []
        answer_lines = ["no direct answer for this question shape; see context"]

    lines = ["candidates:"]
    lines.extend(
        f"  {cand.entity_id}  {cand.score:.4f}" for cand in candidates.candidates
    )
    lines.append("context:")
    lines.extend(f"  {block.text}" for block in context.blocks)
    lines.append("answer:")
    lines.extend(answer_lines)
    payload = {
        "question": args.question,
        "candidates": [
            {"id": cand.entity_id, "score": cand.score}
            for cand in candidates.candidates
        ],
        "context": [block.text for block in context.blocks],
        "answer": answer_text,
        "provenance": provenance,
    }
    _emit(args, payload, "\n".join(lines))
    return EXIT_OK


# ---------------------------------------------------------------------------
# balance


def _run_solver(name: str, inst, args: argparse.Namespace):
    if name == "oracle":
        return solve_oracle(inst)
    if name == "greedy":
        assignment = greedy_rpw(inst)
        report = evaluate(inst, assignment, method="greedy")
        if report.feasible:
            report = replace(report, nitc=1)
        return assignment, report
    if name == "anneal":
        if args.seed is None:
            raise ConfigError("--seed is required with the anneal solver")
        return solve_baseline(inst, seed=args.seed, budget=args.budget)
    assignment, report, _ = solve_reflective(inst, max_rounds=args.rounds)
    return assignment, report


def _load_instance(args: argparse.Namespace):
    try:
        return instance_from_csv(
            args.instance, stations=args.stations, ct_limit=args.ct_limit
        )
    except FileNotFoundError:
        raise BalanceError(f"instance file not found: {args.instance}") from None


def _cmd_balance(args: argparse.Namespace) -> int:
    inst = _load_instance(args)
    assignment, report = _run_solver(args.solver, inst, args)

    if args.out:
        Path(args.out).write_text(_json_dumps(report.to_dict()) + "\n", encoding="utf-8")
    figure = _figure_target(args)
    if figure is not None:
        from .figures import station_load_figure

        station_load_figure(report, figure)

    stations_text = "; ".join(
        f"station {station}: {', '.join(tasks)}"
        for station, tasks in sorted(assignment.order.items())
    )
    text = balance_table([report]) + f"\nassignment: {stations_text}"
    if not report.feasible:
        text += "\ninfeasible: " + "; ".join(v.detail for v in report.violations)
    _emit(args, report.to_dict(), text)
    return EXIT_OK if report.feasible else EXIT_INFEASIBLE


# ---------------------------------------------------------------------------
# plan


def _cmd_plan(args: argparse.Namespace) -> int:
    graph = _load_graph_file(args.graph)
    try:
        scene = load_scene(args.scene)
    except FileNotFoundError:
        raise SceneError(f"scene file not found: {args.scene}") from None
    reasoner = None
    if args.backend == "http":
        few_shot = (
            FewShotConfig(exemplars=REASONER_EXEMPLARS[: args.shots])
            if args.shots
            else None
        )
        reasoner = HttpReasoner(EndpointConfig.from_env(), few_shot=few_shot)
    try:
        result = run_planner(
            args.instruction,
            graph,
            scene,
            stations=args.stations,
            ct_limit=args.ct_limit,
            reasoner=reasoner,
            max_rounds=args.rounds,
        )
    except InfeasiblePlanError as exc:
        if args.trace:
            write_trace(exc.trace, args.trace)
        raise

    if args.trace:
        write_trace(result.trace, args.trace)
    if args.out:
        Path(args.out).write_text(_json_dumps(result.to_dict()) + "\n", encoding="utf-8")
    if args.records:
        Path(args.records).write_text(
            _json_dumps({"product_id": result.product_id, "records": result.to_records()})
            + "\n",
            encoding="utf-8",
        )
    figure = _figure_target(args)
    if figure is not None:
        from .figures import station_load_figure

        station_load_figure(result.report, figure)
    _emit(args, result.to_dict(), render_plan(result))
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval


def _write_delimited(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _read_eval_file(loader, path: str, *extra):
    try:
        return loader(path, *extra)
    except FileNotFoundError:
        raise EvalError(f"file not found: {path}") from None


def _cmd_eval_qa(args: argparse.Namespace) -> int:
    graph = _load_graph_file(args.graph)
    items = _read_eval_file(load_qa_corpus, args.questions)
    if args.answers:
        results = _read_eval_file(load_qa_results, args.answers, items)
    else:
        results = run_scripted_qa(items, graph)
    report = qa_accuracy(results)

    if args.out:
        rows = [
            (qtype, c, t, f"{c / t:.4f}" if t else "")
            for qtype, (c, t) in sorted(report.per_type.items())
        ]
        rows.append(("single_hop", report.single[0], report.single[1], f"{report.sha:.4f}"))
        rows.append(("multi_hop", report.multi[0], report.multi[1], f"{report.mha:.4f}"))
        rows.append(("overall", report.correct, report.total, f"{report.accuracy:.4f}"))
        _write_delimited(Path(args.out), ("group", "correct", "total", "accuracy"), rows)
    figure = _figure_target(args)
    if figure is not None:
        from .figures import qa_accuracy_figure

        qa_accuracy_figure(report, figure)

    lines = [
        f"{qtype}: {c}/{t} = {c / t:.4f}"
        for qtype, (c, t) in sorted(report.per_type.items())
    ]
    lines.append(
        f"single-hop {report.sha:.4f}, multi-hop {report.mha:.4f}, "
        f"combined {report.ptwa:.4f}"
    )
    wrong = [r for r in results if not r.correct]
    if wrong and args.show_misses:
        lines.append("misses:")
        lines.extend(
            f"  {r.item.id}: predicted {r.predicted!r}, expected {r.item.gold!r}"
            for r in wrong
        )
    _emit(args, report.to_dict(), "\n".join(lines))
    return EXIT_OK


def _cmd_eval_plan(args: argparse.Namespace) -> int:
    gold = _read_eval_file(load_plan_records, args.gold)
    produced = _read_eval_file(load_plan_records, args.produced)
    score = plan_accuracy(gold, produced)

    if args.out:
        rows = [(name, f"{score.level(name):.4f}") for name in ("task", "subtask", "location", "object")]
        _write_delimited(Path(args.out), ("level", "accuracy"), rows)
    figure = _figure_target(args)
    if figure is not None:
        from .figures import plan_accuracy_figure

        plan_accuracy_figure(score, figure)

    text = "\n".join(
        f"{name}: {score.level(name):.4f}"
        for name in ("task", "subtask", "location", "object")
    )
    _emit(args, score.to_dict(), text)
    return EXIT_OK


def _cmd_eval_balance(args: argparse.Namespace) -> int:
    names = [name.strip() for name in args.solvers.split(",") if name.strip()]
    if not names:
        raise ConfigError("--solvers needs at least one solver name")
    unknown = [name for name in names if name not in SOLVER_NAMES]
    if unknown:
        raise ConfigError(
            f"unknown solvers: {', '.join(unknown)} "
            f"(choose from {', '.join(SOLVER_NAMES)})"
        )
    inst = _load_instance(args)
    reports = [_run_solver(name, inst, args)[1] for name in names]
    table = balance_table(reports)

    if args.out:
        rows = [
            (
                r.method,
                "" if r.nitc is None else r.nitc,
                r.nwu,
                f"{r.ct:g}",
                "" if r.tct is None else r.tct,
                f"{sum(r.loads) / (r.stations * max(r.loads)) * 100.0:.2f}",
            )
            for r in reports
        ]
        _write_delimited(
            Path(args.out), ("method", "nitc", "nwu", "ct", "tct", "lbr"), rows
        )
    figure = _figure_target(args)
    if figure is not None:
        from .figures import method_comparison_figure

        method_comparison_figure(reports, figure)

    _emit(args, [r.to_dict() for r in reports], table)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="asmplan", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"asmplan {__version__}")
    parser.add_argument(
        "-v", "--verbose", action="store_true", help="enable debug logging"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_format(p: argparse.ArgumentParser) -> None:
        p.add_argument(
            "--format", choices=("text", "json"), default="text",
            help="output format (default: text)",
        )

    def add_solver_knobs(p: argparse.ArgumentParser) -> None:
        p.add_argument("--instance", required=True, help="task table CSV")
        p.add_argument("--stations", type=int, required=True)
        p.add_argument("--ct-limit", type=float, default=None)
        p.add_argument("--seed", type=int, help="random seed (anneal only)")
        p.add_argument("--budget", type=int, default=1000)
        p.add_argument("--rounds", type=int, default=20)

    kb = sub.add_parser("kb", help="knowledge-graph commands")
    kb_sub = kb.add_subparsers(dest="kb_command", required=True)

    ingest = kb_sub.add_parser("ingest", help="ingest process documents")
    ingest.add_argument("documents", nargs="+", metavar="DOC")
    ingest.add_argument(
        "--graph", required=True,
        help="graph file to build or extend (read if present, written back)",
    )
    add_format(ingest)
    ingest.set_defaults(func=_cmd_kb_ingest)

    query = kb_sub.add_parser("query", help="answer a question")
    query.add_argument("question")
    query.add_argument("--graph", required=True)
    query.add_argument("--k", type=int, default=5, help="retrieval depth")
    query.add_argument(
        "--http", action="store_true",
        help="synthesize the answer via the configured endpoint",
    )
    add_format(query)
    query.set_defaults(func=_cmd_kb_query)

    balance = sub.add_parser("balance", help="solve a line-balancing instance")
    add_solver_knobs(balance)
    balance.add_argument("--solver", choices=SOLVER_NAMES, default="reflect")
    balance.add_argument("--out", help="write the report JSON here")
    balance.add_argument("--figure", help="write a station-load chart here")
    add_format(balance)
    balance.set_defaults(func=_cmd_balance)

    planp = sub.add_parser("plan", help="plan a product's assembly")
    planp.add_argument("instruction", help="what to assemble, in plain words")
    planp.add_argument("--graph", required=True)
    planp.add_argument("--scene", required=True)
    planp.add_argument(
        "--backend", choices=("scripted", "http"), default="scripted",
        help="decision policy for the planning loop",
    )
    planp.add_argument(
        "--shots", type=int, choices=(0, 1, 2), default=0,
        help="exemplar exchanges added to the http backend's prompt",
    )
    planp.add_argument("--stations", type=int, default=None)
    planp.add_argument("--ct-limit", type=float, default=None)
    planp.add_argument("--rounds", type=int, default=20)
    planp.add_argument("--out", help="write the full plan JSON here")
    planp.add_argument("--records", help="write flat comparison records here")
    planp.add_argument("--trace", help="write the decision trace (JSONL) here")
    planp.add_argument("--figure", help="write a station-load chart here")
    add_format(planp)
    planp.set_defaults(func=_cmd_plan)

    evalp = sub.add_parser("eval", help="scoring commands")
    eval_sub = evalp.add_subparsers(dest="eval_command", required=True)

    eqa = eval_sub.add_parser("qa", help="score question answering")
    eqa.add_argument("--graph", required=True)
    eqa.add_argument("--questions", required=True, help="question corpus JSONL")
    eqa.add_argument("--answers", help="JSONL answers to judge instead of running")
    eqa.add_argument("--out", help="write per-type accuracy CSV here")
    eqa.add_argument("--figure", help="write an accuracy chart here")
    eqa.add_argument("--show-misses", action="store_true")
    add_format(eqa)
    eqa.set_defaults(func=_cmd_eval_qa)

    epl = eval_sub.add_parser("plan", help="score a plan against gold records")
    epl.add_argument("--gold", required=True)
    epl.add_argument("--produced", required=True)
    epl.add_argument("--out", help="write per-level accuracy CSV here")
    epl.add_argument("--figure", help="write a level chart here")
    add_format(epl)
    epl.set_defaults(func=_cmd_eval_plan)

    ebl = eval_sub.add_parser(
        "balance", help="run several solvers on one instance and tabulate"
    )
    add_solver_knobs(ebl)
    ebl.add_argument(
        "--solvers", required=True,
        help=f"comma-separated solver names from: {', '.join(SOLVER_NAMES)}",
    )
    ebl.add_argument("--out", help="write the table as CSV here")
    ebl.add_argument("--figure", help="write a method comparison chart here")
    add_format(ebl)
    ebl.set_defaults(func=_cmd_eval_balance)

    return parser


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"asmplan: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (
        DocumentError,
        GraphError,
        SceneError,
        BalanceError,
        EvalError,
        UnsupportedTemplateError,
        json.JSONDecodeError,
    ) as exc:
        print(f"asmplan: invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InfeasiblePlanError as exc:
        print(f"asmplan: {exc.verdict}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except PlanningError as exc:
        print(f"asmplan: planning failed: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except TransportError as exc:
        print(f"asmplan: transport failure: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
