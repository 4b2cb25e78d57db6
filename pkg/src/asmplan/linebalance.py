"""Assembly line balancing with a fixed number of workstations.

The problem: assign every task of a precedence DAG to one of ``m``
workstations so that no predecessor lands on a later station than its
successor (equal stations are fine when the within-station order respects
the precedence), minimizing the cycle time CT = the largest station load.
A cycle-time limit, when configured, is exclusive: a station load equal to
the limit already counts as a breach.

Three solvers are provided:

* :func:`solve_oracle` - exact branch and bound, intended for instances of
  at most 20 tasks; it proves the optimal CT.
* :func:`solve_baseline` - seeded simulated annealing over precedence-legal
  single-task moves and swaps, starting from the ranked-positional-weight
  greedy assignment.
* :func:`solve_reflective` - a propose/evaluate/reflect loop that starts
  from the same greedy assignment and repairs it with templated hints
  until feasible or out of rounds.

Reported metrics: per-station loads, CT, the load balancing rate
LBR = total duration / (m * CT) * 100, the number of used (non-empty)
workstations NWU, the tool change count TCT, and NITC, the iteration index
at which a limit-satisfying assignment was first seen.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .backend import BalanceSnapshot, Reflection, scripted_reflect

logger = logging.getLogger(__name__)

ORACLE_TASK_LIMIT = 20

CSV_HEADER = ["id", "duration_s", "predecessors", "tool"]


class BalanceError(ValueError):
    """Raised for malformed instances, assignments or solver misuse."""


@dataclass(frozen=True)
class BalanceTask:
    id: str
    duration_s: float
    predecessors: tuple[str, ...] = ()
    tool: str | None = None


@dataclass
class BalanceInstance:
    """A validated balancing problem.

    ``tasks`` keeps the caller's order (used as the tie-breaking base for
    deterministic topological ranks); ``stations`` is the fixed number of
    workstations; ``ct_limit`` is the exclusive cycle-time bound or None.
    """

    tasks: list[BalanceTask]
    stations: int
    ct_limit: float | None = None

    def __post_init__(self) -> None:
        if not self.tasks:
            raise BalanceError("instance needs at least one task")
        if self.stations < 1:
            raise BalanceError("station count must be at least 1")
        if self.ct_limit is not None and self.ct_limit <= 0:
            raise BalanceError("ct_limit must be positive when set")
        ids = [t.id for t in self.tasks]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise BalanceError(f"duplicate task ids: {dupes}")
        known = set(ids)
        for task in self.tasks:
            if task.duration_s <= 0:
                raise BalanceError(
                    f"task {task.id!r} has non-positive duration {task.duration_s}"
                )
            for pred in task.predecessors:
                if pred not in known:
                    raise BalanceError(
                        f"task {task.id!r} references unknown predecessor {pred!r}"
                    )
                if pred == task.id:
                    raise BalanceError(f"task {task.id!r} depends on itself")
        self._topo_rank()  # raises on cycles

    def task_map(self) -> dict[str, BalanceTask]:
        return {t.id: t for t in self.tasks}

    def total_duration(self) -> float:
        return sum(t.duration_s for t in self.tasks)

    def successors(self) -> dict[str, tuple[str, ...]]:
        succ: dict[str, list[str]] = {t.id: [] for t in self.tasks}
        for task in self.tasks:
            for pred in task.predecessors:
                succ[pred].append(task.id)
        return {k: tuple(sorted(v)) for k, v in succ.items()}

    def _topo_rank(self) -> dict[str, int]:
        indegree = {t.id: len(t.predecessors) for t in self.tasks}
        succ = self.successors()
        ready = sorted([tid for tid, deg in indegree.items() if deg == 0])
        rank: dict[str, int] = {}
        while ready:
            current = ready.pop(0)
            rank[current] = len(rank)
            for nxt in succ[current]:
                indegree[nxt] -= 1
                if indegree[nxt] == 0:
                    # insert keeping the ready list sorted by id
                    lo = 0
                    while lo < len(ready) and ready[lo] < nxt:
                        lo += 1
                    ready.insert(lo, nxt)
        if len(rank) != len(self.tasks):
            cyclic = sorted(set(indegree) - set(rank))
            raise BalanceError(f"precedence cycle involving: {cyclic}")
        return rank

    def topo_rank(self) -> dict[str, int]:
        return self._topo_rank()

    def lower_bound(self) -> float:
        """Pigeonhole bound on CT: total work split across all stations."""

        return math.ceil(self.total_duration() / self.stations)

    def digest(self) -> str:
        payload = json.dumps(
            sorted(
                (t.id, t.duration_s, sorted(t.predecessors), t.tool or "")
                for t in self.tasks
            )
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]

    def has_tools(self) -> bool:
        return any(t.tool for t in self.tasks)


def chain_instance(
    steps: Sequence[tuple[str, float, str | None]],
    stations: int,
    ct_limit: float | None = None,
) -> BalanceInstance:
    """Build an instance whose precedence is the given linear order."""

    tasks: list[BalanceTask] = []
    previous: str | None = None
    for task_id, duration, tool in steps:
        preds = (previous,) if previous is not None else ()
        tasks.append(
            BalanceTask(id=task_id, duration_s=duration, predecessors=preds, tool=tool)
        )
        previous = task_id
    return BalanceInstance(tasks=tasks, stations=stations, ct_limit=ct_limit)


def instance_from_csv(
    path: str | Path, stations: int, ct_limit: float | None = None
) -> BalanceInstance:
    """Load tasks from a CSV with header ``id,duration_s,predecessors,tool``.

    Predecessor lists are semicolon-separated; empty tool cells mean the
    task needs no tool.
    """

    tasks: list[BalanceTask] = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise BalanceError(f"{path}: empty instance file") from None
        if [h.strip() for h in header] != CSV_HEADER:
            raise BalanceError(
                f"{path}: expected header {','.join(CSV_HEADER)!r}, "
                f"got {','.join(header)!r}"
            )
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(CSV_HEADER):
                raise BalanceError(f"{path}:{line_no}: expected 4 fields, got {len(row)}")
            task_id = row[0].strip()
            try:
                duration = float(row[1])
            except ValueError:
                raise BalanceError(
                    f"{path}:{line_no}: duration_s {row[1]!r} is not a number"
                ) from None
            preds = tuple(p.strip() for p in row[2].split(";") if p.strip())
            tool = row[3].strip() or None
            tasks.append(
                BalanceTask(
                    id=task_id, duration_s=duration, predecessors=preds, tool=tool
                )
            )
    return BalanceInstance(tasks=tasks, stations=stations, ct_limit=ct_limit)


# ---------------------------------------------------------------------------
# Assignments and evaluation


@dataclass
class Assignment:
    """Tasks mapped to stations plus the execution order inside each station."""

    station_of: dict[str, int]
    order: dict[int, tuple[str, ...]]

    @classmethod
    def from_station_map(
        cls, inst: BalanceInstance, station_of: dict[str, int]
    ) -> "Assignment":
        """Build the within-station order from deterministic topological ranks."""

        rank = inst.topo_rank()
        order: dict[int, tuple[str, ...]] = {}
        for station in range(1, inst.stations + 1):
            members = sorted(
                (t for t, s in station_of.items() if s == station),
                key=lambda t: rank[t],
            )
            if members:
                order[station] = tuple(members)
        return cls(station_of=dict(station_of), order=order)

    def to_dict(self) -> dict:
        return {
            "stations": dict(sorted(self.station_of.items())),
            "order": {str(s): list(ids) for s, ids in sorted(self.order.items())},
        }


@dataclass(frozen=True)
class Violation:
    kind: str  # "precedence" or "ct_limit"
    detail: str
    station: int | None = None
    amount: float | None = None
    pair: tuple[str, str] | None = None


@dataclass
class BalanceReport:
    method: str
    stations: int
    loads: tuple[float, ...]
    ct: float
    lbr: float
    nwu: int
    tct: int | None
    nitc: int | None
    feasible: bool
    violations: tuple[Violation, ...]
    total_duration: float
    ct_limit: float | None
    instance_digest: str

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "stations": self.stations,
            "loads": list(self.loads),
            "ct": self.ct,
            "lbr": self.lbr,
            "nwu": self.nwu,
            "tct": self.tct,
            "nitc": self.nitc,
            "feasible": self.feasible,
            "violations": [
                {"kind": v.kind, "detail": v.detail} for v in self.violations
            ],
            "total_duration": self.total_duration,
            "ct_limit": self.ct_limit,
            "instance_digest": self.instance_digest,
        }


def _check_assignment_shape(inst: BalanceInstance, a: Assignment) -> None:
    task_ids = {t.id for t in inst.tasks}
    assigned = set(a.station_of)
    missing = sorted(task_ids - assigned)
    if missing:
        raise BalanceError(f"assignment is missing tasks: {missing}")
    extra = sorted(assigned - task_ids)
    if extra:
        raise BalanceError(f"assignment has unknown tasks: {extra}")
    for task_id, station in a.station_of.items():
        if not 1 <= station <= inst.stations:
            raise BalanceError(
                f"task {task_id!r} assigned to station {station}, "
                f"valid range is 1..{inst.stations}"
            )
    for station, ordered in a.order.items():
        members = {t for t, s in a.station_of.items() if s == station}
        if set(ordered) != members or len(ordered) != len(members):
            raise BalanceError(
                f"station {station} order {list(ordered)} does not list exactly "
                f"its assigned tasks"
            )
    unordered = sorted(set(a.station_of.values()) - set(a.order))
    if unordered:
        raise BalanceError(f"stations missing an execution order: {unordered}")


def precedence_violations(inst: BalanceInstance, a: Assignment) -> list[Violation]:
    """Check station monotonicity and within-station order for every edge."""

    violations: list[Violation] = []
    position: dict[str, int] = {}
    for ordered in a.order.values():
        for index, task_id in enumerate(ordered):
            position[task_id] = index
    for task in inst.tasks:
        for pred in task.predecessors:
            s_pred = a.station_of[pred]
            s_task = a.station_of[task.id]
            if s_pred > s_task:
                violations.append(
                    Violation(
                        kind="precedence",
                        detail=(
                            f"predecessor {pred!r} on station {s_pred} after "
                            f"task {task.id!r} on station {s_task}"
                        ),
                        pair=(pred, task.id),
                    )
                )
            elif s_pred == s_task and position.get(pred, 0) > position.get(task.id, 0):
                violations.append(
                    Violation(
                        kind="precedence",
                        detail=(
                            f"station {s_task} executes {task.id!r} before its "
                            f"predecessor {pred!r}"
                        ),
                        pair=(pred, task.id),
                    )
                )
    return violations


def tool_changes(inst: BalanceInstance, a: Assignment) -> int | None:
    """Count tool mounts: one per station whose first task needs a tool,
    plus one per consecutive pair of tasks requiring different tools.

    Returns None when no task in the instance declares a tool.
    """

    if not inst.has_tools():
        return None
    tools = {t.id: t.tool for t in inst.tasks}
    total = 0
    for station in sorted(a.order):
        ordered = a.order[station]
        if not ordered:
            continue
        if tools[ordered[0]]:
            total += 1
        for left, right in zip(ordered, ordered[1:]):
            if tools[left] and tools[right] and tools[left] != tools[right]:
                total += 1
    return total


def evaluate(
    inst: BalanceInstance,
    a: Assignment,
    *,
    nitc: int | None = None,
    method: str = "evaluate",
) -> BalanceReport:
    """Score an assignment: loads, CT, LBR, NWU, TCT and violations."""

    _check_assignment_shape(inst, a)
    durations = {t.id: t.duration_s for t in inst.tasks}
    loads = [0.0] * inst.stations
    for task_id, station in a.station_of.items():
        loads[station - 1] += durations[task_id]
    ct = max(loads)
    total = inst.total_duration()
    lbr = total / (inst.stations * ct) * 100.0
    nwu = sum(1 for load in loads if load > 0)

    violations = precedence_violations(inst, a)
    if inst.ct_limit is not None:
        for station, load in enumerate(loads, start=1):
            if load >= inst.ct_limit:
                violations.append(
                    Violation(
                        kind="ct_limit",
                        detail=(
                            f"station {station} load {load:g} s reaches the "
                            f"exclusive limit {inst.ct_limit:g} s"
                        ),
                        station=station,
                        amount=load - inst.ct_limit,
                    )
                )
    return BalanceReport(
        method=method,
        stations=inst.stations,
        loads=tuple(loads),
        ct=ct,
        lbr=lbr,
        nwu=nwu,
        tct=tool_changes(inst, a),
        nitc=nitc,
        feasible=not violations,
        violations=tuple(violations),
        total_duration=total,
        ct_limit=inst.ct_limit,
        instance_digest=inst.digest(),
    )


def _is_limit_feasible(inst: BalanceInstance, loads: Sequence[float]) -> bool:
    if inst.ct_limit is None:
        return True
    return max(loads) < inst.ct_limit


# ---------------------------------------------------------------------------
# Exact solver


def solve_oracle(inst: BalanceInstance) -> tuple[Assignment, BalanceReport]:
    """Prove the minimal cycle time by depth-first branch and bound.

    Tasks are placed one at a time in topological order onto a current
    station that only moves forward; every feasible assignment corresponds
    to such a construction, so the search is exhaustive. Nodes are pruned
    when max(done loads, ceil(remaining work / stations left)) cannot beat
    the incumbent. Branching is deterministic: the current (lowest)
    station is tried before opening the next one, and available tasks are
    tried in ascending id order, so ties resolve the same way every run.
    """

    n = len(inst.tasks)
    if n > ORACLE_TASK_LIMIT:
        raise BalanceError(
            f"oracle handles at most {ORACLE_TASK_LIMIT} tasks, got {n}; "
            f"use solve_baseline or solve_reflective instead"
        )
    m = inst.stations
    durations = {t.id: t.duration_s for t in inst.tasks}
    preds = {t.id: set(t.predecessors) for t in inst.tasks}
    total = inst.total_duration()

    # Greedy incumbent gives the search a strong initial upper bound.
    greedy = greedy_rpw(inst)
    greedy_loads = [0.0] * m
    for task_id, station in greedy.station_of.items():
        greedy_loads[station - 1] += durations[task_id]
    best_ct = max(greedy_loads)
    best_map = dict(greedy.station_of)

    station_of: dict[str, int] = {}
    completions = 0
    first_feasible: int | None = None
    ids_sorted = sorted(durations)

    def dfs(station: int, load: float, done_max: float, remaining: float) -> None:
        nonlocal best_ct, best_map, completions, first_feasible
        bound = max(done_max, load, math.ceil((remaining + load) / (m - station + 1)))
        if bound >= best_ct:
            return
        if len(station_of) == n:
            completions += 1
            ct = max(done_max, load)
            if first_feasible is None and (
                inst.ct_limit is None or ct < inst.ct_limit
            ):
                first_feasible = completions
            if ct < best_ct:
                best_ct = ct
                best_map = dict(station_of)
            return
        if station == m:
            # Everything left must share the last station; CT is decided.
            ct = max(done_max, load + remaining)
            if ct >= best_ct:
                return
            completions += 1
            if first_feasible is None and (
                inst.ct_limit is None or ct < inst.ct_limit
            ):
                first_feasible = completions
            best_ct = ct
            best_map = dict(station_of)
            for task_id in ids_sorted:
                if task_id not in station_of:
                    best_map[task_id] = m
            return
        available = [
            task_id
            for task_id in ids_sorted
            if task_id not in station_of and preds[task_id] <= station_of.keys()
        ]
        for task_id in available:
            duration = durations[task_id]
            if load + duration >= best_ct:
                continue
            station_of[task_id] = station
            dfs(station, load + duration, done_max, remaining - duration)
            del station_of[task_id]
        dfs(station + 1, 0.0, max(done_max, load), remaining)

    dfs(1, 0.0, 0.0, total)

    assignment = Assignment.from_station_map(inst, best_map)
    report = evaluate(inst, assignment, nitc=first_feasible, method="oracle")
    return assignment, report


# ---------------------------------------------------------------------------
# Greedy construction shared by the stochastic and reflective solvers


def positional_weights(inst: BalanceInstance) -> dict[str, float]:
    """Task duration plus the durations of all transitive successors."""

    succ = inst.successors()
    order = sorted(inst.topo_rank().items(), key=lambda kv: -kv[1])
    closure: dict[str, set[str]] = {t.id: set() for t in inst.tasks}
    for task_id, _ in order:
        for child in succ[task_id]:
            closure[task_id].add(child)
            closure[task_id] |= closure[child]
    durations = {t.id: t.duration_s for t in inst.tasks}
    return {
        task_id: durations[task_id] + sum(durations[c] for c in closure[task_id])
        for task_id in durations
    }


def greedy_rpw(inst: BalanceInstance) -> Assignment:
    """Ranked-positional-weight construction.

    Tasks are sequenced by descending positional weight (ids break ties;
    the sequence is automatically a topological order) and dealt into
    stations left to right: each station keeps absorbing the next task
    while that brings its load closer to the ideal share of the remaining
    work, then the line moves on. The last station takes the rest.
    """

    weights = positional_weights(inst)
    sequence = sorted(weights, key=lambda t: (-weights[t], t))
    durations = {t.id: t.duration_s for t in inst.tasks}
    station_of: dict[str, int] = {}
    remaining = inst.total_duration()
    index = 0
    for station in range(1, inst.stations):
        if index >= len(sequence):
            break
        stations_left = inst.stations - station + 1
        target = remaining / stations_left
        load = 0.0
        while index < len(sequence):
            duration = durations[sequence[index]]
            if load > 0 and abs(load + duration - target) > abs(load - target):
                break
            station_of[sequence[index]] = station
            load += duration
            remaining -= duration
            index += 1
    for task_id in sequence[index:]:
        station_of[task_id] = inst.stations
    return Assignment.from_station_map(inst, station_of)


# ---------------------------------------------------------------------------
# Simulated annealing baseline


def _legal_range(
    task_id: str,
    station_of: dict[str, int],
    preds: dict[str, set[str]],
    succs: dict[str, tuple[str, ...]],
    stations: int,
) -> tuple[int, int]:
    lo = 1
    for pred in preds[task_id]:
        lo = max(lo, station_of[pred])
    hi = stations
    for nxt in succs[task_id]:
        hi = min(hi, station_of[nxt])
    return lo, hi


def solve_baseline(
    inst: BalanceInstance, seed: int, budget: int = 1000
) -> tuple[Assignment, BalanceReport]:
    """Simulated annealing from the greedy start; deterministic per seed.

    The schedule is fixed: the temperature starts at the mean task
    duration, cools geometrically by 0.95 every 20 proposals, and the
    budget counts proposals. Proposals are precedence-legal single-task
    moves or station swaps. Iteration 1 is the greedy start itself; NITC
    records the first iteration whose assignment satisfied the limit.
    """

    if budget < 1:
        raise BalanceError("budget must be at least 1")
    rng = random.Random(seed)
    durations = {t.id: t.duration_s for t in inst.tasks}
    preds = {t.id: set(t.predecessors) for t in inst.tasks}
    succs = inst.successors()
    ids = sorted(durations)
    m = inst.stations

    station_of = dict(greedy_rpw(inst).station_of)

    def loads_of(mapping: dict[str, int]) -> list[float]:
        loads = [0.0] * m
        for task_id, station in mapping.items():
            loads[station - 1] += durations[task_id]
        return loads

    loads = loads_of(station_of)
    current_ct = max(loads)
    best_map = dict(station_of)
    best_ct = current_ct
    iteration = 1
    nitc = iteration if _is_limit_feasible(inst, loads) else None

    temperature = inst.total_duration() / len(inst.tasks)
    for proposal_index in range(budget):
        if proposal_index and proposal_index % 20 == 0:
            temperature *= 0.95
        iteration += 1
        candidate: dict[str, int] | None = None
        if rng.random() < 0.5:
            task_id = rng.choice(ids)
            lo, hi = _legal_range(task_id, station_of, preds, succs, m)
            options = [s for s in range(lo, hi + 1) if s != station_of[task_id]]
            if options:
                candidate = dict(station_of)
                candidate[task_id] = rng.choice(options)
        else:
            a, b = rng.choice(ids), rng.choice(ids)
            if station_of[a] != station_of[b]:
                candidate = dict(station_of)
                candidate[a], candidate[b] = station_of[b], station_of[a]
                lo_a, hi_a = _legal_range(a, candidate, preds, succs, m)
                lo_b, hi_b = _legal_range(b, candidate, preds, succs, m)
                if not (lo_a <= candidate[a] <= hi_a and lo_b <= candidate[b] <= hi_b):
                    candidate = None
        if candidate is None:
            continue
        new_loads = loads_of(candidate)
        new_ct = max(new_loads)
        delta = new_ct - current_ct
        if delta <= 0 or rng.random() < math.exp(-delta / max(temperature, 1e-9)):
            station_of = candidate
            current_ct = new_ct
            if nitc is None and _is_limit_feasible(inst, new_loads):
                nitc = iteration
            if new_ct < best_ct:
                best_ct = new_ct
                best_map = dict(candidate)

    assignment = Assignment.from_station_map(inst, best_map)
    return assignment, evaluate(inst, assignment, nitc=nitc, method="anneal")


# ---------------------------------------------------------------------------
# Reflective loop


@dataclass
class ReflectiveMemory:
    """Short-term memory holds the latest observation/evaluation pair;
    long-term memory accumulates every reflection hint, append-only."""

    short: tuple[str, str] | None = None
    long: list[Reflection] = field(default_factory=list)
    rounds: int = 0


def _snapshot(inst: BalanceInstance, report: BalanceReport, a: Assignment) -> BalanceSnapshot:
    return BalanceSnapshot(
        stations=inst.stations,
        ct_limit=inst.ct_limit,
        loads=report.loads,
        station_of=dict(a.station_of),
        durations={t.id: t.duration_s for t in inst.tasks},
        predecessors={t.id: tuple(t.predecessors) for t in inst.tasks},
    )


def _observation_text(report: BalanceReport) -> str:
    loads = ", ".join(f"{load:g}" for load in report.loads)
    return f"loads [{loads}] with CT {report.ct:g} s"


def _evaluator_text(report: BalanceReport) -> str:
    if report.feasible:
        return "feasible: no violations"
    return "; ".join(v.detail for v in report.violations)


def solve_reflective(
    inst: BalanceInstance,
    *,
    max_rounds: int = 20,
    reflect: Callable[[BalanceSnapshot], Reflection] = scripted_reflect,
    initial: Assignment | None = None,
) -> tuple[Assignment, BalanceReport, ReflectiveMemory]:
    """Propose, evaluate, reflect, repair until feasible or out of rounds.

    Round 1 proposes the greedy assignment (or the caller's ``initial``).
    Each round scores the proposal, stores the observation/evaluation pair
    in short-term memory and, when infeasible, appends a reflection to
    long-term memory and applies its move or swap. The loop stops at the
    first feasible assignment (NITC = that round), when the reflection
    carries no actionable hint (re-proposing the same assignment cannot
    improve), or after ``max_rounds``; the best attempt seen is returned
    when no feasible one was found.
    """

    if max_rounds < 1:
        raise BalanceError("max_rounds must be at least 1")
    memory = ReflectiveMemory()
    proposal = initial if initial is not None else greedy_rpw(inst)
    best: tuple[float, Assignment, BalanceReport] | None = None

    for round_index in range(1, max_rounds + 1):
        memory.rounds = round_index
        report = evaluate(inst, proposal, method="reflective")
        memory.short = (_observation_text(report), _evaluator_text(report))
        if report.feasible:
            report = replace(report, nitc=round_index)
            return proposal, report, memory
        if best is None or report.ct < best[0]:
            best = (report.ct, proposal, report)
        reflection = reflect(_snapshot(inst, report, proposal))
        memory.long.append(reflection)
        station_of = dict(proposal.station_of)
        if reflection.move is not None:
            task_id, target = reflection.move
            station_of[task_id] = target
        elif reflection.swap is not None:
            a, b = reflection.swap
            station_of[a], station_of[b] = station_of[b], station_of[a]
        else:
            logger.debug("round %d: no actionable hint, stopping", round_index)
            break
        proposal = Assignment.from_station_map(inst, station_of)

    assert best is not None
    _, best_assignment, best_report = best
    return best_assignment, best_report, memory


# ---------------------------------------------------------------------------
# Report serialization


def report_from_dict(raw: dict) -> BalanceReport:
    """Rebuild a report from its ``to_dict`` form, checking field presence."""

    required = (
        "method",
        "stations",
        "loads",
        "ct",
        "lbr",
        "nwu",
        "tct",
        "nitc",
        "feasible",
        "violations",
        "total_duration",
        "ct_limit",
        "instance_digest",
    )
    missing = [key for key in required if key not in raw]
    if missing:
        raise BalanceError(f"report is missing fields: {', '.join(missing)}")
    violations = tuple(
        Violation(kind=str(v["kind"]), detail=str(v["detail"]))
        for v in raw["violations"]
    )
    return BalanceReport(
        method=str(raw["method"]),
        stations=int(raw["stations"]),
        loads=tuple(float(x) for x in raw["loads"]),
        ct=float(raw["ct"]),
        lbr=float(raw["lbr"]),
        nwu=int(raw["nwu"]),
        tct=None if raw["tct"] is None else int(raw["tct"]),
        nitc=None if raw["nitc"] is None else int(raw["nitc"]),
        feasible=bool(raw["feasible"]),
        violations=violations,
        total_duration=float(raw["total_duration"]),
        ct_limit=None if raw["ct_limit"] is None else float(raw["ct_limit"]),
        instance_digest=str(raw["instance_digest"]),
    )
