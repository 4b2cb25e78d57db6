"""Reason-act planner that turns a product request into a workstation plan.

The planner loops over a small decision policy: each round it asks a
reasoner which agent to consult next (knowledge graph, line balancer,
scene graph, or final synthesis), executes that action, records a trace
entry, and updates its knowledge flags. Once every flag is set it expands
the balanced process chain into per-workstation subtasks with picking
locations resolved against the scene.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Protocol, Sequence

from .backend import (
    EndpointConfig,
    FewShotConfig,
    PlannerFlags,
    ReasonerDecision,
    build_messages,
    http_complete,
    CompletionRequest,
    scripted_decide,
)
from .kgraph import Entity, KnowledgeGraph, product_chain
from .linebalance import (
    Assignment,
    BalanceInstance,
    BalanceReport,
    ReflectiveMemory,
    chain_instance,
    evaluate,
    solve_reflective,
)
from .retrieval import resolve_product, step_requirements
from .scenegraph import SceneGraph, SceneNode, locate

logger = logging.getLogger(__name__)

MAX_ITERATIONS = 50
AGENT_TARGETS = ("knowledge_agent", "line_balance_agent", "scene_graph", "final")

LOCATION_LABEL = "Location"
OBJECT_LABEL = "Object"


class PlanningError(RuntimeError):
    """The planner cannot produce a plan for this request."""


class ReasonerError(PlanningError):
    """A remote reasoner returned decisions the planner cannot parse."""


class InfeasiblePlanError(PlanningError):
    """Balancing failed even after retries and workstation escalation."""

    def __init__(self, verdict: str, trace: Sequence["TraceRecord"] = ()):
        super().__init__(verdict)
        self.verdict = verdict
        self.trace = tuple(trace)


# ---------------------------------------------------------------------------
# Trace records


@dataclass(frozen=True)
class AgentAction:
    """A dispatched call: which agent was consulted and with what query."""

    target: str
    query: str

    def to_dict(self) -> dict:
        return {"target": self.target, "query": self.query}


@dataclass(frozen=True)
class TraceRecord:
    """One planner round: thought, action taken, and what came back."""

    t: int
    thought: str
    action: AgentAction
    observation: str

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "thought": self.thought,
            "action": self.action.to_dict(),
            "observation": self.observation,
        }


def write_trace(trace: Sequence[TraceRecord], path: str | Path) -> None:
    """Write one JSON object per planner round."""

    with open(path, "w", encoding="utf-8") as fh:
        for record in trace:
            fh.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# Reasoners


class Reasoner(Protocol):
    def decide(self, flags: PlannerFlags, product: str) -> ReasonerDecision: ...


class ScriptedReasoner:
    """Deterministic decision policy over the planner's knowledge flags."""

    def decide(self, flags: PlannerFlags, product: str) -> ReasonerDecision:
        return scripted_decide(flags, product)


_REASONER_SYSTEM_PROMPT = (
    "You are the decision policy of an assembly planner. Given what the "
    "planner already knows, reply with a JSON object with keys thought, "
    "target and query. target must be one of knowledge_agent, "
    "line_balance_agent, scene_graph or final. Reply with JSON only."
)

# Canned exchanges for few-shot prompting of an external reasoner: the
# opening move (nothing known yet) and the closing one (everything known).
REASONER_EXEMPLARS: tuple[tuple[str, str], ...] = (
    (
        "Planner state:\n"
        "product: gear pump\n"
        "process_known: False\n"
        "times_known: False\n"
        "balance_solved: False\n"
        "requirements_known: False\n"
        "locations_known: False",
        '{"thought": "The step sequence is unknown, so the knowledge agent '
        'must supply the procedure first.", "target": "knowledge_agent", '
        '"query": "gear pump assembly procedure"}',
    ),
    (
        "Planner state:\n"
        "product: gear pump\n"
        "process_known: True\n"
        "times_known: True\n"
        "balance_solved: True\n"
        "requirements_known: True\n"
        "locations_known: True",
        '{"thought": "Every fact the plan needs is in hand.", '
        '"target": "final", "query": "emit the plan"}',
    ),
)


class HttpReasoner:
    """Delegates the next-action choice to a chat-completion endpoint.

    A malformed reply is re-prompted once with the parse error attached;
    a second malformed reply raises :class:`ReasonerError`.
    """

    def __init__(self, config: EndpointConfig, few_shot: FewShotConfig | None = None):
        self.config = config
        self.few_shot = few_shot

    def decide(self, flags: PlannerFlags, product: str) -> ReasonerDecision:
        state_lines = [
            f"product: {product}",
            f"process_known: {flags.process_known}",
            f"times_known: {flags.times_known}",
            f"balance_solved: {flags.balance_solved}",
            f"requirements_known: {flags.requirements_known}",
            f"locations_known: {flags.locations_known}",
        ]
        user = "Planner state:\n" + "\n".join(state_lines)
        attempts: list[str] = []
        for _ in range(2):
            request = CompletionRequest(
                messages=build_messages(_REASONER_SYSTEM_PROMPT, user, self.few_shot)
            )
            content = http_complete(request, self.config).content
            attempts.append(content)
            try:
                return _parse_decision(content)
            except ValueError as exc:
                logger.warning("reasoner reply rejected: %s", exc)
                user = (
                    "Planner state:\n" + "\n".join(state_lines) + "\n\n"
                    f"Your previous reply could not be used ({exc}). "
                    "Reply again with a single JSON object with keys "
                    "thought, target and query."
                )
        raise ReasonerError(
            "reasoner returned unusable decisions twice; last replies: "
            + " | ".join(repr(a[:200]) for a in attempts)
        )


def _parse_decision(content: str) -> ReasonerDecision:
    try:
        raw = json.loads(content)
    except json.JSONDecodeError as exc:
        raise ValueError(f"not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ValueError("decision must be a JSON object")
    missing = [key for key in ("thought", "target", "query") if key not in raw]
    if missing:
        raise ValueError(f"decision is missing keys: {', '.join(missing)}")
    target = str(raw["target"])
    if target not in AGENT_TARGETS:
        raise ValueError(f"unknown target {target!r}")
    return ReasonerDecision(
        thought=str(raw["thought"]), target=target, query=str(raw["query"])
    )


# ---------------------------------------------------------------------------
# Subtasks


@dataclass(frozen=True)
class Subtask:
    """One atomic instruction at a workstation.

    ``source`` and ``target`` are containment chains of scene names
    (innermost first, up to the room); empty when the subtask happens
    in place. ``graph_refs``/``scene_refs`` point at the knowledge-graph
    entities and scene nodes the subtask was derived from.
    """

    index: int
    station: int
    verb: str
    object_ref: str | None
    object_name: str | None
    tool_ref: str | None
    tool_name: str | None
    source: tuple[str, ...]
    target: tuple[str, ...]
    duration_s: float | None
    labels: tuple[str, ...]
    step_ref: str | None
    graph_refs: tuple[str, ...]
    scene_refs: tuple[str, ...]

    def location(self) -> str | None:
        chain = self.source if self.source else self.target
        return " / ".join(chain) if chain else None

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "station": self.station,
            "verb": self.verb,
            "object_ref": self.object_ref,
            "object_name": self.object_name,
            "tool_ref": self.tool_ref,
            "tool_name": self.tool_name,
            "source": list(self.source),
            "target": list(self.target),
            "duration_s": self.duration_s,
            "labels": list(self.labels),
            "step_ref": self.step_ref,
            "graph_refs": list(self.graph_refs),
            "scene_refs": list(self.scene_refs),
        }


@dataclass
class AssemblyPlan:
    """Ordered subtasks for one product plus the balance report behind them."""

    product_id: str
    product_name: str
    stations: int
    station_names: tuple[str, ...]
    step_names: dict[str, str]
    subtasks: tuple[Subtask, ...]
    report: BalanceReport
    trace: tuple[TraceRecord, ...] = ()

    def __len__(self) -> int:
        return len(self.subtasks)

    def __iter__(self) -> Iterator[Subtask]:
        return iter(self.subtasks)

    def by_station(self) -> dict[int, tuple[Subtask, ...]]:
        grouped: dict[int, list[Subtask]] = {}
        for subtask in self.subtasks:
            grouped.setdefault(subtask.station, []).append(subtask)
        return {station: tuple(items) for station, items in sorted(grouped.items())}

    def to_records(self) -> list[dict]:
        """Flatten to comparison records: verb, object, station, location."""

        return [
            {
                "index": s.index,
                "verb": s.verb,
                "object": s.object_ref,
                "station": s.station,
                "location": s.location(),
                "labels": list(s.labels),
                "duration_s": s.duration_s,
            }
            for s in self.subtasks
        ]

    def to_dict(self) -> dict:
        return {
            "product_id": self.product_id,
            "product_name": self.product_name,
            "stations": self.stations,
            "station_names": list(self.station_names),
            "subtasks": [s.to_dict() for s in self.subtasks],
            "report": self.report.to_dict(),
        }


def label_subtasks(subtasks: Sequence[Subtask]) -> tuple[Subtask, ...]:
    """Attach evaluation labels.

    ``Location`` goes on every subtask with a resolved source or target;
    ``Object`` goes on every pick.
    """

    labelled: list[Subtask] = []
    for subtask in subtasks:
        labels: list[str] = []
        if subtask.source or subtask.target:
            labels.append(LOCATION_LABEL)
        if subtask.verb == "pick":
            labels.append(OBJECT_LABEL)
        labelled.append(replace(subtask, labels=tuple(labels)))
    return tuple(labelled)


_VERB_RULES = (
    ("press fit", "press_fit"),
    ("tighten", "tighten"),
    ("place", "place"),
    ("inspect", "inspect"),
)


def operation_verb(step_name: str) -> str:
    """Map a process-step name to the verb of its operation subtask."""

    lowered = step_name.casefold()
    for needle, verb in _VERB_RULES:
        if needle in lowered:
            return verb
    return "install"


def verify_provenance(
    plan_: AssemblyPlan, graph: KnowledgeGraph, scene: SceneGraph
) -> list[str]:
    """Check every provenance id resolves; return a list of problems."""

    problems: list[str] = []
    for subtask in plan_.subtasks:
        for ref in subtask.graph_refs:
            if ref not in graph.entities:
                problems.append(
                    f"subtask {subtask.index}: graph ref {ref!r} does not resolve"
                )
        for ref in subtask.scene_refs:
            if ref not in scene.nodes:
                problems.append(
                    f"subtask {subtask.index}: scene ref {ref!r} does not resolve"
                )
    return problems


# ---------------------------------------------------------------------------
# Planner state


@dataclass
class PlannerState:
    """Everything the planner has gathered so far."""

    request: str
    graph: KnowledgeGraph
    scene: SceneGraph
    stations: int
    ct_limit: float | None
    max_rounds: int = 20
    flags: PlannerFlags = field(default_factory=PlannerFlags)
    product: Entity | None = None
    chain: tuple[Entity, ...] = ()
    durations: dict[str, float] = field(default_factory=dict)
    requirements: dict[str, tuple[list[str], list[str], str | None]] = field(
        default_factory=dict
    )
    instance: BalanceInstance | None = None
    assignment: Assignment | None = None
    report: BalanceReport | None = None
    memory: ReflectiveMemory | None = None
    locations: dict[str, tuple[SceneNode, tuple[str, ...]]] = field(
        default_factory=dict
    )
    trace: list[TraceRecord] = field(default_factory=list)
    plan: AssemblyPlan | None = None

    @property
    def product_label(self) -> str:
        return self.product.name if self.product is not None else self.request

    def record(self, decision: ReasonerDecision, observation: str) -> None:
        self.trace.append(
            TraceRecord(
                t=len(self.trace) + 1,
                thought=decision.thought,
                action=AgentAction(target=decision.target, query=decision.query),
                observation=observation,
            )
        )


def _needed_refs(state: PlannerState) -> list[str]:
    """Catalog refs the plan must locate, in first-use order."""

    seen: dict[str, None] = {}
    for step in state.chain:
        parts, tools, _ = state.requirements[step.id]
        for ref in list(tools) + list(parts):
            seen.setdefault(ref, None)
    return list(seen)


def _chain_tool(state: PlannerState, step_id: str) -> str | None:
    """Tool of record for a step: the first of its sorted tool refs."""

    tools = state.requirements[step_id][1]
    return tools[0] if tools else None


def _build_instance(state: PlannerState, stations: int, with_tools: bool) -> BalanceInstance:
    steps = [
        (
            step.id,
            state.durations[step.id],
            _chain_tool(state, step.id) if with_tools else None,
        )
        for step in state.chain
    ]
    return chain_instance(steps, stations=stations, ct_limit=state.ct_limit)


# ---------------------------------------------------------------------------
# Conflict handling

_CONFLICT_RETRIES = 2


def _perturb(inst: BalanceInstance, assignment: Assignment) -> Assignment | None:
    """Shift the biggest task off the busiest station, ignoring the limit.

    Used to restart a stuck reflective search from fresh ground: the move
    only respects precedence, so the next search explores a different
    basin. Returns ``None`` when no task on the busiest station can move.
    """

    durations = {t.id: t.duration_s for t in inst.tasks}
    preds = {t.id: set(t.predecessors) for t in inst.tasks}
    succs = inst.successors()
    loads = [0.0] * inst.stations
    for task_id, station in assignment.station_of.items():
        loads[station - 1] += durations[task_id]
    busiest = max(range(1, inst.stations + 1), key=lambda s: (loads[s - 1], -s))
    members = sorted(
        (t for t, s in assignment.station_of.items() if s == busiest),
        key=lambda t: (-durations[t], t),
    )
    for task_id in members:
        lo = 1
        for pred in preds[task_id]:
            lo = max(lo, assignment.station_of[pred])
        hi = inst.stations
        for nxt in succs[task_id]:
            hi = min(hi, assignment.station_of[nxt])
        options = [s for s in range(lo, hi + 1) if s != busiest]
        if not options:
            continue
        dest = min(options, key=lambda s: (loads[s - 1], s))
        station_of = dict(assignment.station_of)
        station_of[task_id] = dest
        return Assignment.from_station_map(inst, station_of)
    return None


def handle_conflict(
    state: PlannerState,
    inst: BalanceInstance,
    assignment: Assignment,
    report: BalanceReport,
    memory: ReflectiveMemory,
) -> tuple[BalanceInstance, Assignment, BalanceReport, ReflectiveMemory, str]:
    """Resolve an infeasible balance or explain why none exists.

    First restarts the reflective search up to two times, seeding each
    retry with the previous failure's evidence (the busiest station's
    biggest movable task gets displaced). If the instance stays
    infeasible, workstations are added one at a time up to the scene's
    supply. When even the full supply fails, raises
    :class:`InfeasiblePlanError` with a load-bound verdict.
    """

    state.flags = replace(state.flags, balance_solved=False)
    notes: list[str] = []

    for retry in range(1, _CONFLICT_RETRIES + 1):
        worst = max(report.violations, key=lambda v: v.amount or 0.0, default=None)
        evidence = worst.detail if worst is not None else "no violation detail"
        seed = _perturb(inst, assignment)
        if seed is None:
            notes.append(f"retry {retry} skipped: no task can leave the busiest station")
            break
        notes.append(f"retry {retry} after conflict ({evidence})")
        assignment, report, memory = solve_reflective(
            inst, max_rounds=state.max_rounds, initial=seed
        )
        if report.feasible:
            return inst, assignment, report, memory, "; ".join(notes)

    supply = len(state.scene.workstations())
    stations = inst.stations
    while stations < supply:
        stations += 1
        notes.append(f"escalating to {stations} workstations")
        inst = _build_instance(state, stations, with_tools=inst.has_tools())
        assignment, report, memory = solve_reflective(inst, max_rounds=state.max_rounds)
        if report.feasible:
            state.stations = stations
            return inst, assignment, report, memory, "; ".join(notes)

    m_max = max(supply, inst.stations)
    total = inst.total_duration()
    longest = max(t.duration_s for t in inst.tasks)
    bound = max(total / m_max, longest)
    if state.ct_limit is not None and bound >= state.ct_limit:
        verdict = (
            f"no feasible plan: with at most {m_max} workstations every "
            f"assignment has a station load of at least {bound:g} s "
            f"(total work {total:g} s, longest step {longest:g} s), which "
            f"reaches the cycle-time limit {state.ct_limit:g} s"
        )
    else:
        verdict = (
            f"no feasible plan found after {_CONFLICT_RETRIES} retries "
            f"and escalation to {m_max} workstations"
        )
    raise InfeasiblePlanError(verdict, trace=state.trace)


# ---------------------------------------------------------------------------
# Action dispatch


def _station_chain(state: PlannerState, station: int) -> tuple[SceneNode, tuple[str, ...]]:
    """The workstation node for a station index and its containment names."""

    stations = state.scene.workstations()
    node = stations[station - 1]
    names = [node.name]
    current = state.scene.container_of(node.id)
    while current is not None:
        names.append(state.scene.nodes[current].name)
        current = state.scene.container_of(current)
    return node, tuple(names)


def _do_process_query(state: PlannerState) -> str:
    product = resolve_product(state.graph, state.request)
    if product is None:
        raise PlanningError(f"no product in the knowledge graph matches {state.request!r}")
    chain = product_chain(state.graph, product.id)
    if not chain:
        raise PlanningError(f"product {product.name!r} has no process steps")
    state.product = product
    state.chain = tuple(chain)
    state.flags = replace(state.flags, process_known=True)
    names = " -> ".join(step.name for step in chain)
    return f"procedure for {product.name}: {names}"


def _do_times_query(state: PlannerState) -> str:
    durations: dict[str, float] = {}
    for step in state.chain:
        value = step.attrs.get("time_seconds")
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise PlanningError(f"step {step.id!r} has no usable time_seconds")
        durations[step.id] = float(value)
    state.durations = durations
    state.flags = replace(state.flags, times_known=True)
    times = ", ".join(f"{durations[s.id]:g}" for s in state.chain)
    total = sum(durations.values())
    return f"step times (s): {times}; total {total:g}"


def _do_balance(state: PlannerState) -> str:
    inst = _build_instance(state, state.stations, with_tools=False)
    assignment, report, memory = solve_reflective(inst, max_rounds=state.max_rounds)
    note = ""
    if not report.feasible:
        inst, assignment, report, memory, note = handle_conflict(
            state, inst, assignment, report, memory
        )
    state.instance = inst
    state.assignment = assignment
    state.report = report
    state.memory = memory
    state.flags = replace(state.flags, balance_solved=True)
    loads = ", ".join(f"{load:g}" for load in report.loads)
    observation = (
        f"balanced {len(state.chain)} steps over {report.stations} workstations: "
        f"loads [{loads}], cycle time {report.ct:g} s, "
        f"feasible at round {report.nitc}"
    )
    if note:
        observation += f" ({note})"
    return observation


def _do_requirements_query(state: PlannerState) -> str:
    requirements: dict[str, tuple[list[str], list[str], str | None]] = {}
    part_count = 0
    tool_refs: dict[str, None] = {}
    for step in state.chain:
        parts, tools, reference = step_requirements(state.graph, step.id)
        requirements[step.id] = (parts, tools, reference)
        part_count += len(parts)
        for tool in tools:
            tool_refs.setdefault(tool, None)
    state.requirements = requirements
    state.flags = replace(state.flags, requirements_known=True)
    return (
        f"requirements for {len(state.chain)} steps: {part_count} part "
        f"references, {len(tool_refs)} distinct tools"
    )


def _do_locations_query(state: PlannerState) -> str:
    missing: list[str] = []
    located: dict[str, tuple[SceneNode, tuple[str, ...]]] = {}
    for ref in _needed_refs(state):
        chains = locate(state.scene, ref)
        if not chains:
            missing.append(ref)
            continue
        chain = chains[0]
        container_names = tuple(node.name for node in chain[1:])
        located[ref] = (chain[0], container_names)
    if missing:
        raise PlanningError(
            "scene has no instance for: " + ", ".join(sorted(missing))
        )
    state.locations = located
    state.flags = replace(state.flags, locations_known=True)
    shelves = {names[0] for _, names in located.values() if names}
    return f"located {len(located)} items across {len(shelves)} containers"


def _expand(state: PlannerState) -> list[Subtask]:
    """Unroll the balanced chain into pick/switch/operate subtasks.

    Workstations start with no tool mounted. A step whose tool differs
    from the one currently mounted at its workstation gets a tool pick
    and a ``switch_tool`` ahead of its part picks; the operation subtask
    carries the step duration.
    """

    assert state.assignment is not None
    subtasks: list[Subtask] = []
    mounted: dict[int, str] = {}

    def add(**kwargs) -> None:
        subtasks.append(Subtask(index=len(subtasks) + 1, labels=(), **kwargs))

    for step in state.chain:
        station = state.assignment.station_of[step.id]
        ws_node, ws_names = _station_chain(state, station)
        parts, _, _ = state.requirements[step.id]
        tool = _chain_tool(state, step.id)
        tool_name = state.graph.entities[tool].name if tool else None

        if tool is not None and mounted.get(station) != tool:
            instance, container_names = state.locations[tool]
            add(
                station=station,
                verb="pick",
                object_ref=tool,
                object_name=tool_name,
                tool_ref=tool,
                tool_name=tool_name,
                source=container_names,
                target=ws_names,
                duration_s=None,
                step_ref=step.id,
                graph_refs=(step.id, tool),
                scene_refs=(instance.id, ws_node.id),
            )
            add(
                station=station,
                verb="switch_tool",
                object_ref=tool,
                object_name=tool_name,
                tool_ref=tool,
                tool_name=tool_name,
                source=(),
                target=(),
                duration_s=None,
                step_ref=step.id,
                graph_refs=(step.id, tool),
                scene_refs=(ws_node.id,),
            )
            mounted[station] = tool

        for part in parts:
            instance, container_names = state.locations[part]
            add(
                station=station,
                verb="pick",
                object_ref=part,
                object_name=state.graph.entities[part].name,
                tool_ref=None,
                tool_name=None,
                source=container_names,
                target=ws_names,
                duration_s=None,
                step_ref=step.id,
                graph_refs=(step.id, part),
                scene_refs=(instance.id, ws_node.id),
            )

        verb = operation_verb(step.name)
        primary = parts[0] if parts else None
        add(
            station=station,
            verb=verb,
            object_ref=primary,
            object_name=state.graph.entities[primary].name if primary else None,
            tool_ref=tool,
            tool_name=tool_name,
            source=(),
            target=ws_names if verb == "place" else (),
            duration_s=state.durations[step.id],
            step_ref=step.id,
            graph_refs=(step.id, *parts),
            scene_refs=(ws_node.id,),
        )
    return subtasks


def _do_final(state: PlannerState) -> str:
    assert state.assignment is not None and state.report is not None
    assert state.product is not None
    final_instance = _build_instance(state, state.stations, with_tools=True)
    report = evaluate(
        final_instance, state.assignment, nitc=state.report.nitc, method="plan"
    )
    state.instance = final_instance
    state.report = report
    subtasks = label_subtasks(_expand(state))
    station_names = tuple(node.name for node in state.scene.workstations())[
        : state.stations
    ]
    state.plan = AssemblyPlan(
        product_id=state.product.id,
        product_name=state.product.name,
        stations=state.stations,
        station_names=station_names,
        step_names={step.id: step.name for step in state.chain},
        subtasks=subtasks,
        report=report,
    )
    tct = "-" if report.tct is None else f"{report.tct}"
    return (
        f"plan ready: {len(subtasks)} subtasks over {state.stations} "
        f"workstations, cycle time {report.ct:g} s, {tct} tool changes"
    )


def step(state: PlannerState, reasoner: Reasoner) -> bool:
    """Run one reason-act round; returns True once the plan is assembled."""

    decision = reasoner.decide(state.flags, state.product_label)
    if decision.target == "knowledge_agent":
        if not state.flags.process_known:
            observation = _do_process_query(state)
        elif not state.flags.times_known:
            observation = _do_times_query(state)
        elif not state.flags.requirements_known:
            observation = _do_requirements_query(state)
        else:
            observation = "knowledge agent had nothing left to answer"
    elif decision.target == "line_balance_agent":
        observation = _do_balance(state)
    elif decision.target == "scene_graph":
        observation = _do_locations_query(state)
    elif decision.target == "final":
        observation = _do_final(state)
    else:
        raise PlanningError(f"reasoner chose unknown target {decision.target!r}")
    state.record(decision, observation)
    return state.plan is not None


def plan(
    request: str,
    graph: KnowledgeGraph,
    scene: SceneGraph,
    *,
    stations: int | None = None,
    ct_limit: float | None = None,
    reasoner: Reasoner | None = None,
    max_rounds: int = 20,
) -> AssemblyPlan:
    """Plan the assembly of the requested product.

    ``stations`` defaults to the scene's workstation count. ``ct_limit``
    is the exclusive per-station load limit; ``None`` means unlimited.
    """

    supply = len(scene.workstations())
    if supply == 0:
        raise PlanningError("scene has no workstations")
    if stations is None:
        stations = supply
    if stations < 1:
        raise PlanningError("stations must be at least 1")
    if stations > supply:
        raise PlanningError(
            f"requested {stations} workstations but the scene has {supply}"
        )
    state = PlannerState(
        request=request,
        graph=graph,
        scene=scene,
        stations=stations,
        ct_limit=ct_limit,
        max_rounds=max_rounds,
    )
    chosen = reasoner if reasoner is not None else ScriptedReasoner()
    for _ in range(MAX_ITERATIONS):
        if step(state, chosen):
            assert state.plan is not None
            state.plan.trace = tuple(state.trace)
            return state.plan
    raise PlanningError(f"planner did not finish within {MAX_ITERATIONS} rounds")


# ---------------------------------------------------------------------------
# Rendering


def _subtask_line(plan_: AssemblyPlan, subtask: Subtask) -> str:
    if subtask.verb == "pick":
        return f"pick {subtask.object_name} from {' / '.join(subtask.source)}"
    if subtask.verb == "switch_tool":
        return f"switch tool to {subtask.tool_name}"
    verb_text = subtask.verb.replace("_", " ")
    suffix = f" ({subtask.duration_s:g} s)" if subtask.duration_s is not None else ""
    if subtask.object_name is None:
        # No object of its own: the step name already phrases the action.
        text = plan_.step_names.get(subtask.step_ref or "", verb_text)
        return f"{text}{suffix}"
    if subtask.verb == "place" and subtask.target:
        return f"{verb_text} {subtask.object_name} at {' / '.join(subtask.target)}{suffix}"
    return f"{verb_text} {subtask.object_name}{suffix}"


def render_plan(plan_: AssemblyPlan) -> str:
    """Human-readable plan: stations, their steps, and each subtask."""

    report = plan_.report
    lines = [
        f"Assembly plan for {plan_.product_name} — {plan_.stations} workstations, "
        f"cycle time {report.ct:g} s"
    ]
    step_station: dict[str, int] = {}
    step_order: list[str] = []
    for subtask in plan_.subtasks:
        if subtask.step_ref and subtask.step_ref not in step_station:
            step_station[subtask.step_ref] = subtask.station
            step_order.append(subtask.step_ref)
    for station, items in plan_.by_station().items():
        name = plan_.station_names[station - 1]
        load = report.loads[station - 1]
        lines.append(f"{name} (load {load:g} s):")
        for step_ref in (s for s in step_order if step_station[s] == station):
            lines.append(
                f"  At {name}, perform step: {plan_.step_names[step_ref]}"
            )
            for subtask in items:
                if subtask.step_ref == step_ref:
                    lines.append(f"    - {_subtask_line(plan_, subtask)}")
    return "\n".join(lines)
