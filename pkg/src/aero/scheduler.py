"""Ready queue, readiness refresh, deadline accounting and update cleanup."""

from __future__ import annotations

import enum
import heapq
import math
from dataclasses import dataclass, field

from .dag import Dag, Task, TaskKind

INF = math.inf


class DeadlineVerdict(enum.Enum):
    MET = "met"
    MISSED = "missed"


@dataclass(frozen=True)
class DeadlinePolicy:
    margin_factor: float = 1.5
    update_tasks_have_deadline: bool = False

    def __post_init__(self):
        if self.margin_factor < 1:
            raise ValueError("margin_factor must be >= 1")

    def deadline(self, kind: TaskKind, exec_time: float, release: float) -> float:
        if kind is TaskKind.UPDATE and not self.update_tasks_have_deadline:
            return INF
        return release + self.margin_factor * exec_time


class ReadyQueue:
    """Min-heap on (absolute deadline, priority, task id) with lazy removal."""

    def __init__(self):
        self._heap: list[tuple[float, int, int]] = []
        self._live: dict[int, tuple[float, int, int]] = {}

    def push(self, tid: int, deadline: float, priority: int) -> tuple[float, int, int]:
        key = (deadline, priority, tid)
        self._live[tid] = key
        heapq.heappush(self._heap, key)
        return key

    def pop(self) -> int | None:
        while self._heap:
            key = heapq.heappop(self._heap)
            if self._live.get(key[2]) == key:
                del self._live[key[2]]
                return key[2]
        return None

    def remove(self, tid: int) -> bool:
        return self._live.pop(tid, None) is not None

    def keys(self) -> list[tuple[float, int, int]]:
        return sorted(self._live.values())

    def __contains__(self, tid) -> bool:
        return tid in self._live

    def __len__(self) -> int:
        return len(self._live)


@dataclass
class IterationState:
    iteration: int = 0
    completed: set[int] = field(default_factory=set)  # routine tasks, this iteration
    aux_done: set[int] = field(default_factory=set)  # helpers and update tasks
    carried: set[int] = field(default_factory=set)  # routine completions visible to update tasks
    enqueued: set[int] = field(default_factory=set)
    release_times: dict[int, float] = field(default_factory=dict)
    order: list[int] = field(default_factory=list)  # routine completion order, this iteration

    def is_done(self, dag: Dag, pred: int, for_task: int) -> bool:
        kind = dag.tasks[pred].kind
        if kind is TaskKind.VIRTUAL_START:
            return True
        if kind is TaskKind.ROUTINE:
            if pred in self.completed:
                return True
            return dag.tasks[for_task].kind is TaskKind.UPDATE and pred in self.carried
        return pred in self.aux_done

    def finished(self, dag: Dag) -> bool:
        return all(t in self.completed for t in dag.routine_ids())

    def next_iteration(self) -> None:
        self.iteration += 1
        for t in self.completed:
            self.enqueued.discard(t)
            self.release_times.pop(t, None)
        self.completed.clear()
        self.order.clear()


def _done(state: IterationState, dag: Dag, tid: int) -> bool:
    task = dag.tasks[tid]
    if task.kind is TaskKind.ROUTINE:
        return tid in state.completed
    return tid in state.aux_done


def refresh_ready(
    dag: Dag,
    state: IterationState,
    queue: ReadyQueue,
    policy: DeadlinePolicy,
    now: float,
    closed=frozenset(),
    extra_preds: dict[int, set[int]] | None = None,
    release_hint: dict[int, float] | None = None,
) -> list[tuple[int, tuple[float, int, int], float]]:
    """Enqueue every pending task whose predecessors are all complete.

    ``closed`` tasks are held back regardless of predecessors and
    ``extra_preds`` adds precedence that is not in ``dag`` itself.
    Returns ``(task, key, release)`` for each task enqueued.
    """
    extra_preds = extra_preds or {}
    release_hint = release_hint or {}
    released = []
    for tid in sorted(dag.tasks):
        task = dag.tasks[tid]
        if task.kind is TaskKind.VIRTUAL_START or task.placeholder:
            continue
        if tid in state.enqueued or tid in closed or _done(state, dag, tid):
            continue
        preds = dag.preds(tid)
        extra = extra_preds.get(tid, ())
        if all(state.is_done(dag, p, tid) for p in preds) and all(
            p not in dag or state.is_done(dag, p, tid) for p in extra
        ):
            release = release_hint.get(tid, now)
            key = queue.push(
                tid, policy.deadline(task.kind, task.profile.exec_time, release), task.profile.priority
            )
            state.enqueued.add(tid)
            state.release_times[tid] = release
            released.append((tid, key, release))
    return released


def pick_next(queue: ReadyQueue) -> int | None:
    return queue.pop()


def record_deadline(
    state: IterationState, policy: DeadlinePolicy, task: Task, completion: float
) -> DeadlineVerdict | None:
    """Routine tasks miss when completion - release > margin * exec_time."""
    if task.kind is not TaskKind.ROUTINE:
        return None
    elapsed = completion - state.release_times[task.id]
    limit = policy.margin_factor * task.profile.exec_time
    # relative slack absorbs float noise from summed waits
    return DeadlineVerdict.MISSED if elapsed > limit * (1 + 1e-12) else DeadlineVerdict.MET


def finalize_update(dag: Dag, blocked_edges) -> Dag:
    """Restore blocked entry edges and drop update, helper and virtual nodes."""
    out = dag.copy()
    for t in [t.id for t in out.tasks.values() if t.kind is not TaskKind.ROUTINE]:
        out.remove_task(t)
    for x, y in sorted(blocked_edges):
        if x in out and y in out:
            out.add_edge(x, y)
    return out
