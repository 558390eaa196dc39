"""Task graph model: routine, update and helper tasks with precedence edges.

Edge ``(a, b)`` means ``b`` depends on ``a``.  Routine task ids double as
bitmap positions on the wire, so they live in ``[0, n_max)``.  Auxiliary
tasks (virtual start, helpers, update tasks) use the reserved range
``[n_max, 3 * n_max)`` so they never collide with a routine slot.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from typing import Iterable

from .errors import (
    CapacityExceeded,
    CycleDetected,
    DuplicateId,
    MissingEndpoint,
    UnknownTask,
)

DEFAULT_N_MAX = 32


class TaskKind(enum.Enum):
    ROUTINE = "routine"
    UPDATE = "update"
    HELPER = "helper"
    VIRTUAL_START = "virtual_start"


class HelperRole(enum.Enum):
    URT = "urt"  # update receiving
    UDT = "udt"  # update decoding
    DPT = "dpt"  # dependency processing
    DUT = "dut"  # DAG updating


class UpdateOp(enum.IntEnum):
    MODIFY = 0b00
    INSERT = 0b01
    REMOVE = 0b10


@dataclass(frozen=True)
class TaskProfile:
    exec_time: float  # microseconds
    energy_cost: float  # microjoules
    priority: int = 0  # lower value runs first
    version: int = 0


@dataclass(frozen=True)
class Task:
    id: int
    kind: TaskKind = TaskKind.ROUTINE
    profile: TaskProfile = field(default_factory=lambda: TaskProfile(1.0, 1.0))
    role: HelperRole | None = None
    target: int | None = None  # routine task an update task acts on
    placeholder: bool = False  # inserted routine task not yet materialised

    def __post_init__(self):
        p = self.profile
        if p.exec_time < 0 or p.energy_cost < 0:
            raise ValueError(f"task {self.id}: negative cost")
        if self.kind is TaskKind.ROUTINE and (p.exec_time <= 0 or p.energy_cost <= 0):
            raise ValueError(f"routine task {self.id} needs positive time and energy")
        if self.kind is TaskKind.UPDATE and (p.exec_time <= 0 or p.energy_cost <= 0):
            raise ValueError(f"update task {self.id} needs positive time and energy")
        if self.kind is TaskKind.VIRTUAL_START and (p.exec_time or p.energy_cost):
            raise ValueError("virtual start must be zero-cost")

    @property
    def live_routine(self) -> bool:
        return self.kind is TaskKind.ROUTINE and not self.placeholder


def routine(tid: int, exec_time: float, energy: float, priority: int = 0, version: int = 0) -> Task:
    return Task(tid, TaskKind.ROUTINE, TaskProfile(exec_time, energy, priority, version))


@dataclass(frozen=True)
class UpdateMember:
    """One element of a mutually dependent update group."""

    task: int  # associated routine slot (new slot for INSERT)
    op: UpdateOp
    size: int = 0  # code bytes carried for this member
    profile: TaskProfile | None = None  # INSERT only


@dataclass(frozen=True)
class UpdateGroup:
    members: tuple[UpdateMember, ...]

    def __post_init__(self):
        if not self.members:
            raise ValueError("update group must not be empty")
        targets = [m.task for m in self.members]
        if len(set(targets)) != len(targets):
            raise ValueError("two members target the same routine task")

    def __iter__(self):
        return iter(self.members)

    def __len__(self):
        return len(self.members)

    @property
    def targets(self) -> frozenset[int]:
        return frozenset(m.task for m in self.members)

    def member(self, task: int) -> UpdateMember:
        for m in self.members:
            if m.task == task:
                return m
        raise KeyError(task)


@dataclass(frozen=True)
class AffectedBlock:
    nodes: frozenset[int]
    blocked_edges: frozenset[tuple[int, int]]


class Dag:
    """Mutable DAG; every mutation keeps the graph acyclic."""

    def __init__(self, n_max: int = DEFAULT_N_MAX):
        if n_max < 1:
            raise ValueError("n_max must be positive")
        self.n_max = n_max
        self.tasks: dict[int, Task] = {}
        self._succ: dict[int, set[int]] = {}
        self._pred: dict[int, set[int]] = {}

    # -- construction -------------------------------------------------
    def add_task(self, task: Task) -> "Dag":
        if task.id in self.tasks:
            raise DuplicateId(f"task {task.id} already present")
        routine_slot = task.kind is TaskKind.ROUTINE
        lo, hi = (0, self.n_max) if routine_slot else (self.n_max, 3 * self.n_max)
        if not lo <= task.id < hi:
            raise CapacityExceeded(f"task id {task.id} outside [{lo}, {hi})")
        self.tasks[task.id] = task
        self._succ[task.id] = set()
        self._pred[task.id] = set()
        return self

    def add_edge(self, src: int, dst: int) -> "Dag":
        if src not in self.tasks or dst not in self.tasks:
            raise MissingEndpoint(f"edge ({src}, {dst}) has a missing endpoint")
        if dst in self._succ[src]:
            return self
        if src == dst or self.has_path(dst, src):
            raise CycleDetected(f"edge ({src}, {dst}) closes a cycle")
        self._succ[src].add(dst)
        self._pred[dst].add(src)
        return self

    def remove_edge(self, src: int, dst: int) -> "Dag":
        self._succ.get(src, set()).discard(dst)
        self._pred.get(dst, set()).discard(src)
        return self

    def remove_task(self, tid: int) -> "Dag":
        if tid not in self.tasks:
            raise UnknownTask(tid)
        for s in self._succ.pop(tid):
            self._pred[s].discard(tid)
        for p in self._pred.pop(tid):
            self._succ[p].discard(tid)
        del self.tasks[tid]
        return self

    def replace_task(self, task: Task) -> "Dag":
        if task.id not in self.tasks:
            raise UnknownTask(task.id)
        self.tasks[task.id] = task
        return self

    # -- queries -------------------------------------------------------
    @property
    def edges(self) -> frozenset[tuple[int, int]]:
        return frozenset((u, v) for u, vs in self._succ.items() for v in vs)

    def preds(self, tid: int) -> set[int]:
        return self._pred[tid]

    def succs(self, tid: int) -> set[int]:
        return self._succ[tid]

    def __contains__(self, tid) -> bool:
        return tid in self.tasks

    def __len__(self) -> int:
        return len(self.tasks)

    def has_path(self, src: int, dst: int) -> bool:
        stack, seen = [src], {src}
        while stack:
            u = stack.pop()
            if u == dst:
                return True
            for v in self._succ[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return False

    def reachable(self, starts: Iterable[int], forward: bool = True) -> set[int]:
        adj = self._succ if forward else self._pred
        seen = set(starts)
        stack = list(seen)
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return seen

    def topological_order(self) -> list[int]:
        """Kahn's algorithm with smallest-id tiebreak; raises on a cycle."""
        import heapq

        indeg = {t: len(p) for t, p in self._pred.items()}
        heap = [t for t, d in indeg.items() if d == 0]
        heapq.heapify(heap)
        order = []
        while heap:
            u = heapq.heappop(heap)
            order.append(u)
            for v in self._succ[u]:
                indeg[v] -= 1
                if indeg[v] == 0:
                    heapq.heappush(heap, v)
        if len(order) != len(self.tasks):
            raise CycleDetected("graph contains a cycle")
        return order

    def routine_ids(self, include_placeholders: bool = False) -> list[int]:
        return sorted(
            t.id
            for t in self.tasks.values()
            if t.kind is TaskKind.ROUTINE and (include_placeholders or not t.placeholder)
        )

    def ids_of(self, kind: TaskKind) -> list[int]:
        return sorted(t.id for t in self.tasks.values() if t.kind is kind)

    def copy(self) -> "Dag":
        new = Dag(self.n_max)
        new.tasks = dict(self.tasks)
        new._succ = {k: set(v) for k, v in self._succ.items()}
        new._pred = {k: set(v) for k, v in self._pred.items()}
        return new

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dag):
            return NotImplemented
        return self.n_max == other.n_max and self.tasks == other.tasks and self.edges == other.edges

    def __repr__(self) -> str:
        return f"Dag(tasks={sorted(self.tasks)}, edges={sorted(self.edges)})"

    # -- serialisation ------------------------------------------------
    def to_dict(self) -> dict:
        tasks = []
        for tid in sorted(self.tasks):
            t = self.tasks[tid]
            entry = {
                "id": tid,
                "kind": t.kind.value,
                "exec_time_us": t.profile.exec_time,
                "energy_uj": t.profile.energy_cost,
                "priority": t.profile.priority,
                "version": t.profile.version,
            }
            if t.role is not None:
                entry["role"] = t.role.value
            if t.target is not None:
                entry["target"] = t.target
            if t.placeholder:
                entry["placeholder"] = True
            tasks.append(entry)
        return {"n_max": self.n_max, "tasks": tasks, "edges": [list(e) for e in sorted(self.edges)]}

    @classmethod
    def from_dict(cls, data: dict) -> "Dag":
        dag = cls(int(data.get("n_max", DEFAULT_N_MAX)))
        for entry in data["tasks"]:
            profile = TaskProfile(
                float(entry["exec_time_us"]),
                float(entry["energy_uj"]),
                int(entry.get("priority", 0)),
                int(entry.get("version", 0)),
            )
            role = entry.get("role")
            dag.add_task(
                Task(
                    int(entry["id"]),
                    TaskKind(entry.get("kind", "routine")),
                    profile,
                    HelperRole(role) if role else None,
                    entry.get("target"),
                    bool(entry.get("placeholder", False)),
                )
            )
        for src, dst in data.get("edges", []):
            dag.add_edge(int(src), int(dst))
        return dag

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "Dag":
        return cls.from_dict(json.loads(text))


def chain(profiles: list[tuple[float, float]], start: int = 1, n_max: int = DEFAULT_N_MAX) -> Dag:
    """Linear DAG t_start -> t_start+1 -> ... from (exec_us, energy_uj) pairs."""
    dag = Dag(n_max)
    for i, (e, w) in enumerate(profiles):
        dag.add_task(routine(start + i, e, w, priority=i))
    for i in range(len(profiles) - 1):
        dag.add_edge(start + i, start + i + 1)
    return dag


def sources(dag: Dag) -> set[int]:
    """Zero in-degree tasks, excluding the virtual start node."""
    return {
        tid
        for tid, t in dag.tasks.items()
        if not dag.preds(tid) and t.kind is not TaskKind.VIRTUAL_START
    }


def compute_affected_block(dag: Dag, group: UpdateGroup) -> AffectedBlock:
    """Smallest node set holding the group's existing tasks and every node
    lying on a directed path between two of them.

    A node is on such a path iff it is reachable from some member and some
    member is reachable from it.  INSERT members have no position yet and
    contribute nothing.
    """
    anchors = set()
    for m in group:
        if m.op is UpdateOp.INSERT:
            continue
        if m.task not in dag:
            raise UnknownTask(f"update target {m.task} not in DAG")
        anchors.add(m.task)
    if not anchors:
        return AffectedBlock(frozenset(), frozenset())
    nodes = dag.reachable(anchors, forward=True) & dag.reachable(anchors, forward=False)
    blocked = frozenset(e for e in dag.edges if e[1] in nodes)
    return AffectedBlock(frozenset(nodes), blocked)


def with_version(task: Task, version: int) -> Task:
    return replace(task, profile=replace(task.profile, version=version))
