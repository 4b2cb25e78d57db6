"""Independent reference implementations used to cross-check the library.

Everything here is deliberately written from the problem definition,
sharing no code with the package, so agreements are meaningful.
"""

from __future__ import annotations

import random

from asmplan.linebalance import Assignment, BalanceInstance, BalanceTask


def check_assignment(
    inst: BalanceInstance, a: Assignment, check_limit: bool = False
) -> list[str]:
    """Validate an assignment from first principles; returns problems.

    Structural and precedence checks always run; the strict load-limit
    check only when ``check_limit`` is set (solvers may legitimately
    return their best infeasible attempt).
    """

    problems: list[str] = []
    ids = [t.id for t in inst.tasks]
    durations = {t.id: t.duration_s for t in inst.tasks}
    preds = {t.id: tuple(t.predecessors) for t in inst.tasks}

    assigned = set(a.station_of)
    if assigned != set(ids):
        problems.append(f"assigned {sorted(assigned)} != tasks {sorted(ids)}")
        return problems
    for task_id, station in a.station_of.items():
        if not 1 <= station <= inst.stations:
            problems.append(f"{task_id} on out-of-range station {station}")

    position: dict[str, tuple[int, int]] = {}
    listed: list[str] = []
    for station, sequence in a.order.items():
        for slot, task_id in enumerate(sequence):
            if a.station_of.get(task_id) != station:
                problems.append(
                    f"{task_id} listed at station {station} but mapped to "
                    f"{a.station_of.get(task_id)}"
                )
            position[task_id] = (station, slot)
            listed.append(task_id)
    if sorted(listed) != sorted(ids):
        problems.append("order lists do not cover every task exactly once")

    for task_id in ids:
        for pred in preds[task_id]:
            if a.station_of[pred] > a.station_of[task_id]:
                problems.append(
                    f"{pred} (station {a.station_of[pred]}) must not follow "
                    f"{task_id} (station {a.station_of[task_id]})"
                )
            elif (
                a.station_of[pred] == a.station_of[task_id]
                and pred in position
                and task_id in position
                and position[pred][1] > position[task_id][1]
            ):
                problems.append(
                    f"{pred} ordered after {task_id} within station "
                    f"{a.station_of[task_id]}"
                )

    if check_limit and inst.ct_limit is not None:
        loads = [0.0] * inst.stations
        for task_id, station in a.station_of.items():
            loads[station - 1] += durations[task_id]
        for station, load in enumerate(loads, start=1):
            if load >= inst.ct_limit:
                problems.append(
                    f"station {station} load {load} breaches limit {inst.ct_limit}"
                )
    return problems


def optimal_ct_by_dp(inst: BalanceInstance) -> float:
    """Exact minimal cycle time via dynamic programming over downsets.

    A prefix of stations always completes a predecessor-closed task set,
    so f_k(S) = min over closed S' subset S of max(f_{k-1}(S'), work of
    S minus S'). Only practical for small instances (< ~15 tasks).
    """

    ids = sorted(t.id for t in inst.tasks)
    index = {task_id: i for i, task_id in enumerate(ids)}
    n = len(ids)
    durations = [0.0] * n
    pred_mask = [0] * n
    for task in inst.tasks:
        durations[index[task.id]] = task.duration_s
        for pred in task.predecessors:
            pred_mask[index[task.id]] |= 1 << index[pred]

    full = (1 << n) - 1
    closed = []
    for mask in range(full + 1):
        ok = True
        for i in range(n):
            if mask & (1 << i) and (pred_mask[i] & ~mask):
                ok = False
                break
        if ok:
            closed.append(mask)
    closed_set = set(closed)

    work = [0.0] * (full + 1)
    for mask in range(1, full + 1):
        low = mask & -mask
        work[mask] = work[mask ^ low] + durations[low.bit_length() - 1]

    INF = float("inf")
    f = {mask: (0.0 if mask == 0 else INF) for mask in closed}
    for _ in range(inst.stations):
        nxt = dict.fromkeys(closed, INF)
        for mask in closed:
            base = f[mask]
            if base == INF:
                continue
            # grow mask by any predecessor-closed group of new tasks
            rest = full ^ mask
            sub = rest
            while True:
                grown = mask | sub
                if grown in closed_set:
                    candidate = max(base, work[sub])
                    if candidate < nxt[grown]:
                        nxt[grown] = candidate
                if sub == 0:
                    break
                sub = (sub - 1) & rest
        f = nxt
    return f[full]


def random_dag_instance(
    rng: random.Random, max_tasks: int = 10, max_stations: int = 4
) -> BalanceInstance:
    """A small random precedence DAG with integer durations."""

    n = rng.randint(2, max_tasks)
    stations = rng.randint(2, max_stations)
    tasks = []
    for i in range(n):
        preds = tuple(
            f"t{j:02d}" for j in range(i) if rng.random() < 0.3
        )
        tasks.append(
            BalanceTask(
                id=f"t{i:02d}",
                duration_s=float(rng.randint(1, 99)),
                predecessors=preds,
                tool=None,
            )
        )
    ct_limit = None
    if rng.random() < 0.5:
        total = sum(t.duration_s for t in tasks)
        ct_limit = total / stations * rng.uniform(1.2, 2.0)
    return BalanceInstance(tasks=tasks, stations=stations, ct_limit=ct_limit)
