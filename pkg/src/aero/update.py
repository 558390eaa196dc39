"""Update task chain and runtime DAG adjustment."""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

from .dag import (
    AffectedBlock,
    Dag,
    HelperRole,
    Task,
    TaskKind,
    TaskProfile,
    UpdateGroup,
    UpdateMember,
    UpdateOp,
    compute_affected_block,
    sources,
    with_version,
)
from .errors import BadUpdate, CycleDetected, RemoveWhileRunning, UnknownTask, UpdateInFlight
from .packet import UpdateBundle

HELPER_ORDER = (HelperRole.URT, HelperRole.UDT, HelperRole.DPT, HelperRole.DUT)


def virtual_start_id(n_max: int) -> int:
    return n_max


def helper_id(role: HelperRole, n_max: int) -> int:
    return n_max + 1 + HELPER_ORDER.index(role)


def update_task_id(task: int, n_max: int) -> int:
    return 2 * n_max + task


@dataclass(frozen=True)
class CostModel:
    """Per-byte costs for receiving, decoding and applying updates.

    Execution time follows from energy at ``active_power_uw``.
    """

    active_power_uw: float = 3000.0
    receive_uj_per_byte: float = 0.02
    decode_uj_per_byte: float = 0.1
    apply_uj_per_byte: float = 0.25
    helper_fixed_uj: float = 2.0
    update_fixed_uj: float = 2.0

    def _profile(self, energy: float, priority: int = 0) -> TaskProfile:
        return TaskProfile(energy / self.active_power_uw * 1e6, energy, priority)

    def helper_profiles(self, bundle: UpdateBundle) -> dict[HelperRole, TaskProfile]:
        n = bundle.total_size
        return {
            HelperRole.URT: self._profile(self.helper_fixed_uj + self.receive_uj_per_byte * n),
            HelperRole.UDT: self._profile(self.helper_fixed_uj + self.decode_uj_per_byte * n),
            HelperRole.DPT: self._profile(self.helper_fixed_uj),
            HelperRole.DUT: self._profile(self.helper_fixed_uj),
        }

    def update_profile(self, member: UpdateMember, priority: int = 0) -> TaskProfile:
        return self._profile(self.update_fixed_uj + self.apply_uj_per_byte * member.size, priority)

    def zero_helpers(self) -> "CostModel":
        return replace(self, receive_uj_per_byte=0.0, decode_uj_per_byte=0.0, helper_fixed_uj=0.0)


@dataclass(frozen=True)
class UpdateNotification:
    arrival_time: float
    bundle: UpdateBundle


class RuntimePosition(enum.Enum):
    INSIDE = "inside"
    OUTSIDE = "outside"


@dataclass(frozen=True)
class AdjustmentResult:
    dag: Dag
    block: AffectedBlock
    update_tasks: dict[int, int]  # routine slot -> update task id
    placeholders: frozenset[int]
    virtual_start: int
    position: RuntimePosition

    @property
    def inserted(self) -> list[int]:
        return sorted(set(self.update_tasks.values()) | self.placeholders)


def spawn_update_chain(dag: Dag, notif: UpdateNotification, costs: CostModel | None = None) -> Dag:
    """Add the urt -> udt -> dpt -> dut helper chain."""
    costs = costs or CostModel()
    if dag.ids_of(TaskKind.HELPER) or dag.ids_of(TaskKind.UPDATE):
        raise UpdateInFlight("an update is already being integrated")
    profiles = costs.helper_profiles(notif.bundle)
    out = dag.copy()
    prev = None
    for role in HELPER_ORDER:
        hid = helper_id(role, dag.n_max)
        out.add_task(Task(hid, TaskKind.HELPER, profiles[role], role=role))
        if prev is not None:
            out.add_edge(prev, hid)
        prev = hid
    return out


def classify_runtime_position(dag: Dag, block: AffectedBlock, current: int | None) -> RuntimePosition:
    if current is not None and current in block.nodes:
        return RuntimePosition.INSIDE
    return RuntimePosition.OUTSIDE


def adjust_dag(
    dag: Dag,
    group: UpdateGroup,
    current: int | None = None,
    costs: CostModel | None = None,
) -> AdjustmentResult:
    """Insert the virtual start, block entry into the affected block and
    wire each update task before or after its routine task."""
    costs = costs or CostModel()
    n = dag.n_max
    out = dag.copy()
    s = virtual_start_id(n)
    roots = sorted(v for v in sources(dag) if dag.tasks[v].kind is TaskKind.ROUTINE)
    out.add_task(Task(s, TaskKind.VIRTUAL_START, TaskProfile(0.0, 0.0)))
    for v in roots:
        out.add_edge(s, v)
    block = compute_affected_block(out, group)
    for x, y in block.blocked_edges:
        out.remove_edge(x, y)
    position = classify_runtime_position(out, block, current)
    updates, placeholders = {}, set()
    for m in group:
        uid = update_task_id(m.task, n)
        if m.op is UpdateOp.INSERT and m.task in dag:
            raise BadUpdate(f"insert target slot {m.task} already occupied")
        if m.op is not UpdateOp.INSERT and m.task not in dag:
            raise UnknownTask(f"update target {m.task} not in DAG")
        base = dag.tasks[m.task].profile.priority if m.task in dag else (m.profile.priority if m.profile else 0)
        out.add_task(Task(uid, TaskKind.UPDATE, costs.update_profile(m, base), target=m.task))
        updates[m.task] = uid
        if m.op is UpdateOp.INSERT:
            if m.profile is None:
                raise BadUpdate(f"insert of task {m.task} carries no profile")
            out.add_task(Task(m.task, TaskKind.ROUTINE, m.profile, placeholder=True))
            out.add_edge(uid, m.task)
            placeholders.add(m.task)
        elif position is RuntimePosition.INSIDE:
            out.add_edge(m.task, uid)  # defer until the old version finishes
        else:
            out.add_edge(uid, m.task)  # update before the task runs
    return AdjustmentResult(out, block, updates, frozenset(placeholders), s, position)


def apply_update_op(
    dag: Dag,
    member: UpdateMember,
    dep_edges=(),
    blocked_edges=(),
    running: int | None = None,
    doomed=frozenset(),
) -> Dag:
    """Apply one member's operation, adding its dependency edges first.

    Dependency bits become predecessor edges ``(p, member.task)``.  Edges
    whose source no longer exists, or is about to be removed by the same
    group (``doomed``), are skipped.  Cycle checks also see
    ``blocked_edges`` since they return at finalisation, but ignore doomed
    tasks; an edge that only closes a cycle through a doomed task is left
    for the caller to add once that task is gone.
    """
    out = dag.copy()
    t = member.task
    if member.op is UpdateOp.INSERT:
        if t in out and not out.tasks[t].placeholder:
            raise BadUpdate(f"slot {t} already holds a live task")
        if t not in out:
            out.add_task(Task(t, TaskKind.ROUTINE, member.profile))
        else:
            out.replace_task(replace(out.tasks[t], placeholder=False, profile=member.profile))
    elif t not in out:
        raise UnknownTask(f"update target {t} not in DAG")

    if dep_edges:
        check = out.copy()
        for x, y in blocked_edges:
            if x in check and y in check:
                check._succ[x].add(y)
                check._pred[y].add(x)
        for d in doomed:
            if d in check and d != t:
                check.remove_task(d)
        try:
            for p in sorted(dep_edges):
                if p == t:
                    raise CycleDetected(f"task {t} cannot depend on itself")
                if p not in out or p in doomed:
                    continue
                check.add_edge(p, t)
                if not out.has_path(t, p):
                    out.add_edge(p, t)
        except CycleDetected as exc:
            raise BadUpdate(str(exc)) from exc

    if member.op is UpdateOp.MODIFY:
        task = out.tasks[t]
        out.replace_task(with_version(task, task.profile.version + 1))
    elif member.op is UpdateOp.REMOVE:
        if running == t:
            raise RemoveWhileRunning(f"task {t} is executing")
        out.remove_task(t)
    return out
