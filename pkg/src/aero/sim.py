"""Discrete-event simulation of a task DAG under harvested energy, with
three ways of integrating an update: runtime-aware (``aero``), immediate
live patching (``live``) and deferral to the next iteration boundary
(``intermittent``).

Tasks are atomic: energy for a task is drawn in one piece when it starts
and the clock then advances by its execution time while harvesting
continues.  The live baseline is the one exception; its patch work
interrupts whatever is running.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .dag import Dag, HelperRole, Task, TaskKind, UpdateGroup, UpdateOp, compute_affected_block, with_version
from .energy import EnergyState, HarvestTrace, acquire_for_task, harvest
from .errors import BadUpdate, CycleDetected, SimulationError
from .scheduler import (
    DeadlinePolicy,
    DeadlineVerdict,
    IterationState,
    ReadyQueue,
    finalize_update,
    pick_next,
    record_deadline,
    refresh_ready,
)
from .update import (
    HELPER_ORDER,
    AdjustmentResult,
    CostModel,
    RuntimePosition,
    UpdateNotification,
    adjust_dag,
    apply_update_op,
    spawn_update_chain,
)


class Approach(str, enum.Enum):
    AERO = "aero"
    LIVE = "live"
    INTERMITTENT = "intermittent"


def offline_apply_oracle(dag: Dag, group: UpdateGroup, dep_edges=None) -> Dag:
    """Expected routine DAG after the group is applied, with no scheduling."""
    dep_edges = dep_edges or {}
    out = dag.copy()
    for m in group:
        if m.op is UpdateOp.INSERT:
            if m.task in out:
                raise BadUpdate(f"slot {m.task} already occupied")
            if m.profile is None:
                raise BadUpdate(f"insert of task {m.task} carries no profile")
            out.add_task(Task(m.task, TaskKind.ROUTINE, m.profile))
        elif m.task not in out or out.tasks[m.task].kind is not TaskKind.ROUTINE:
            raise BadUpdate(f"update target {m.task} not in DAG")
        elif m.op is UpdateOp.REMOVE:
            out.remove_task(m.task)
        else:
            out.replace_task(with_version(out.tasks[m.task], out.tasks[m.task].profile.version + 1))
    try:
        for t, preds in sorted(dep_edges.items()):
            for p in sorted(preds):
                if t in out and p in out:
                    out.add_edge(p, t)
                elif p == t:
                    raise CycleDetected("self dependency")
    except CycleDetected as exc:
        raise BadUpdate(str(exc)) from exc
    return out


@dataclass
class _Flight:
    notif: UpdateNotification
    snapshot: Dag  # routine DAG before integration
    adj: AdjustmentResult | None = None
    adj_iteration: int = -1
    extra_preds: dict[int, set[int]] = field(default_factory=dict)
    applied: list[int] = field(default_factory=list)
    staged: bool = False

    @property
    def group(self) -> UpdateGroup:
        return self.notif.bundle.group

    @property
    def inside(self) -> bool:
        return self.adj is not None and self.adj.position is RuntimePosition.INSIDE


@dataclass
class RunResult:
    approach: Approach
    dag: Dag
    energy: EnergyState
    initial_energy: float
    events: list[dict]
    arrivals: list[float]
    completion_times: list[float]
    error: bool
    misses: int
    instances: int
    aborted: bool
    iterations: int
    positions: list[str]

    @property
    def dmr(self) -> float:
        return self.misses / self.instances if self.instances else 0.0

    @property
    def completion_time(self) -> float | None:
        return self.completion_times[0] if self.completion_times else None


def mixed_version(execs) -> bool:
    """True when one iteration saw both pre- and post-update member code,
    or a member was patched while it was running."""
    seen: dict[int, set[bool]] = {}
    for iteration, _task, new_start, new_end in execs:
        seen.setdefault(iteration, set()).update((new_start, new_end))
    return any(len(flags) > 1 for flags in seen.values())


class Simulator:
    def __init__(
        self,
        dag: Dag,
        trace: HarvestTrace,
        capacity: float,
        approach: Approach | str = Approach.AERO,
        notifications=(),
        policy: DeadlinePolicy | None = None,
        costs: CostModel | None = None,
        horizon: float = 0.0,
        initial_energy: float | None = None,
        record_events: bool = True,
        max_steps: int = 1_000_000,
    ):
        self.approach = Approach(approach)
        self.dag = dag.copy()
        self.trace = trace
        self.policy = policy or DeadlinePolicy()
        self.costs = costs or CostModel()
        self.horizon = horizon
        start = capacity if initial_energy is None else initial_energy
        self.energy = EnergyState(start, capacity)
        self.initial_energy = start
        self.pending = sorted(notifications, key=lambda n: n.arrival_time)
        self.arrivals = [n.arrival_time for n in self.pending]
        self.record = record_events
        self.max_steps = max_steps

        self.now = 0.0
        self.state = IterationState()
        self.queue = ReadyQueue()
        self.between = True  # iteration boundary: routine releases held
        self.flight: _Flight | None = None
        self.release_hint: dict[int, float] = {}
        self.events: list[dict] = []
        self.member_new: dict[int, bool] = {}
        for n in self.pending:
            for m in n.bundle.group:
                self.member_new[m.task] = m.op is UpdateOp.INSERT
        self.execs: list[tuple[int, int, bool, bool]] = []
        self.completion_times: list[float] = []
        self.positions: list[str] = []
        self.misses = 0
        self.instances = 0
        self.aborted = False

    # -- plumbing ------------------------------------------------------
    def _log(self, event: str, task: int | None = None, before: float | None = None, **extra) -> None:
        if not self.record:
            return
        stored = self.energy.stored
        rec = {
            "time": self.now,
            "event": event,
            "task": task,
            "iteration": self.state.iteration,
            "energy_before": stored if before is None else before,
            "energy_after": stored,
            "deadline_verdict": None,
        }
        rec.update(extra)
        self.events.append(rec)

    def _advance(self, t: float) -> None:
        if t > self.energy.now:
            self.energy = harvest(self.energy, self.trace, t)
        self.now = max(self.now, t)

    def _acquire(self, cost: float) -> float:
        self._advance(self.now)
        self.energy, wait = acquire_for_task(self.energy, self.trace, cost)
        self.now = self.energy.now
        return wait

    def _flag(self, tid: int) -> bool | None:
        return self.member_new.get(tid)

    # -- main loop -----------------------------------------------------
    def run(self) -> RunResult:
        self._log("run_start", capacity=self.energy.capacity)
        steps = 0
        while True:
            self._admit()
            if self.now >= self.horizon and self.flight is None and not self.pending:
                break
            self._refresh()
            tid = pick_next(self.queue)
            if tid is None:
                if self.between:
                    self._open_iteration()
                    continue
                if not self._idle():
                    break
                continue
            self._execute(tid)
            if not self.between and self.dag.routine_ids() and self.state.finished(self.dag):
                self._close_iteration()
            steps += 1
            if steps > self.max_steps:
                raise SimulationError("step budget exhausted")
        self._log("run_end")
        return RunResult(
            self.approach,
            self.dag,
            self.energy,
            self.initial_energy,
            self.events,
            self.arrivals,
            self.completion_times,
            mixed_version(self.execs),
            self.misses,
            self.instances,
            self.aborted,
            self.state.iteration,
            self.positions,
        )

    def _idle(self) -> bool:
        future = [n.arrival_time for n in self.pending if n.arrival_time > self.now]
        if self.dag.routine_ids() and not self.state.finished(self.dag):
            if not future:
                raise SimulationError(f"no runnable task at t={self.now}")
        if not future:
            if self.now < self.horizon:
                self._log("idle", until=self.horizon)
                self._advance(self.horizon)
                return True
            return False
        self._log("idle", until=future[0])
        self._advance(future[0])
        return True

    def _open_iteration(self) -> None:
        f = self.flight
        if f is not None and f.staged:
            if self._patch(f.notif, staged=True):
                self.dag = finalize_update(self.dag, ())
                self._finish_flight()
                self._log("finalize", routine=self.dag.routine_ids())
        self.between = False
        self._log("iteration_start")

    def _close_iteration(self) -> None:
        if self.flight is not None and self.flight.adj is not None:
            self.state.carried |= self.state.completed
        self._log("iteration_end")
        self.state.next_iteration()
        self.between = True

    def _admit(self) -> None:
        while self.pending and self.pending[0].arrival_time <= self.now:
            if self.approach is Approach.LIVE:
                self._patch(self.pending.pop(0))
            elif self.flight is not None:
                return
            else:
                self._spawn(self.pending.pop(0))

    def _closed(self) -> set[int]:
        if self.between:
            return set(self.dag.routine_ids())
        f = self.flight
        if f is None or f.adj is None:
            return set()
        if f.inside and self.state.iteration == f.adj_iteration:
            return set(f.adj.placeholders)  # new tasks wait for the next iteration
        return set(f.adj.block.nodes)

    def _refresh(self) -> None:
        extra = self.flight.extra_preds if self.flight else None
        for tid, key, release in refresh_ready(
            self.dag, self.state, self.queue, self.policy, self.now, self._closed(), extra, self.release_hint
        ):
            self.release_hint.pop(tid, None)
            self._log("release", tid, key=list(key), release=release)

    def _dequeue(self, tid: int, reason: str) -> None:
        if self.queue.remove(tid):
            self.state.enqueued.discard(tid)
            self.state.release_times.pop(tid, None)
            self._log("dequeue", tid, reason=reason)

    def _revalidate_queue(self) -> None:
        """Drop queued tasks whose predecessors changed under them."""
        extra = self.flight.extra_preds if self.flight else {}
        for key in self.queue.keys():
            tid = key[2]
            if tid not in self.dag:
                self._dequeue(tid, "removed")
                continue
            preds = set(self.dag.preds(tid)) | {p for p in extra.get(tid, ()) if p in self.dag}
            if not all(self.state.is_done(self.dag, p, tid) for p in preds):
                self._dequeue(tid, "new dependency")

    def _effective_preds(self, tid: int) -> list[int]:
        extra = self.flight.extra_preds.get(tid, set()) if self.flight else set()
        preds = set(self.dag.preds(tid)) | {p for p in extra if p in self.dag}
        return sorted(p for p in preds if self.dag.tasks[p].kind is not TaskKind.VIRTUAL_START)

    # -- execution -----------------------------------------------------
    def _execute(self, tid: int) -> None:
        task = self.dag.tasks[tid]
        p = task.profile
        flag_start = self._flag(tid) if task.kind is TaskKind.ROUTINE else None
        self._log("dispatch", tid, kind=task.kind.value, preds=self._effective_preds(tid),
                  version=p.version)
        if self.approach is Approach.LIVE:
            self._live_interrupt_during_wait(tid, p.energy_cost)
        before = self.energy.stored
        wait = self._acquire(p.energy_cost)
        self._log("start", tid, before=before, wait=wait)
        finish = self.now + p.exec_time
        if self.approach is Approach.LIVE:
            while self.pending and self.pending[0].arrival_time < finish:
                a = self.pending[0].arrival_time
                self._advance(a)
                self._log("interrupt", tid, phase="exec")
                self._patch(self.pending.pop(0), running=tid)
                finish = self.now + (finish - a)
        self._advance(finish)
        self._complete(task, flag_start)

    def _live_interrupt_during_wait(self, tid: int, cost: float) -> None:
        while self.pending:
            _, wait = acquire_for_task(self.energy, self.trace, cost)
            a = self.pending[0].arrival_time
            if a >= self.now + wait:
                return
            self._advance(a)
            self._log("interrupt", tid, phase="wait")
            self._patch(self.pending.pop(0), running=tid)

    def _complete(self, task: Task, flag_start: bool | None) -> None:
        tid = task.id
        if task.kind is TaskKind.ROUTINE:
            verdict = record_deadline(self.state, self.policy, task, self.now)
            self.instances += 1
            self.misses += verdict is DeadlineVerdict.MISSED
            if tid in self.dag:
                self.state.completed.add(tid)
                self.state.order.append(tid)
            flag_end = self._flag(tid)
            if flag_start is not None or flag_end is not None:
                self.execs.append((self.state.iteration, tid, bool(flag_start), bool(flag_end)))
            self._log("complete", tid, kind="routine", deadline_verdict=verdict.value,
                      release=self.state.release_times.get(tid), exec_time=task.profile.exec_time,
                      version=task.profile.version, member_new=flag_end)
            return
        self.state.aux_done.add(tid)
        self._log("complete", tid, kind=task.kind.value)
        if task.kind is TaskKind.HELPER:
            self._on_helper(task.role)
        elif task.kind is TaskKind.UPDATE:
            self._on_update(task)

    # -- runtime-aware integration -------------------------------------
    def _spawn(self, notif: UpdateNotification) -> None:
        snapshot = self.dag.copy()
        self.dag = spawn_update_chain(self.dag, notif, self.costs)
        self.flight = _Flight(notif, snapshot)
        urt = min(self.dag.ids_of(TaskKind.HELPER))
        self.release_hint[urt] = notif.arrival_time
        self._log("spawn", arrival=notif.arrival_time, bytes=notif.bundle.total_size)

    def _runtime_position(self, block) -> int | None:
        if self.between:
            return None
        inside = [t for t in self.state.order if t in block.nodes]
        if inside:
            return inside[-1]
        return self.state.order[-1] if self.state.order else None

    def _on_helper(self, role: HelperRole) -> None:
        f = self.flight
        if role is HelperRole.DPT:
            block = compute_affected_block(f.snapshot, f.group)
            self._log("block", nodes=sorted(block.nodes))
        if role is not HelperRole.DUT:
            return
        try:
            offline_apply_oracle(f.snapshot, f.group, f.notif.bundle.dep_edges)
        except BadUpdate as exc:
            self._abort(str(exc))
            return
        if self.approach is Approach.INTERMITTENT:
            f.staged = True  # applied as a whole at the next iteration boundary
            self._log("staged")
            return
        adj = adjust_dag(self.dag, f.group, self._runtime_position(compute_affected_block(f.snapshot, f.group)), self.costs)
        self.dag = adj.dag
        f.adj = adj
        f.adj_iteration = self.state.iteration
        self.state.carried = set()
        for x, y in adj.block.blocked_edges:
            if self.dag.tasks[x].kind is TaskKind.ROUTINE:
                f.extra_preds.setdefault(y, set()).add(x)
        self.positions.append(adj.position.value)
        if not f.inside:
            for t in sorted(adj.block.nodes):
                if t not in self.state.completed:
                    self._dequeue(t, "entry blocked")
        self._log("adjust", position=adj.position.value, block=sorted(adj.block.nodes),
                  blocked_edges=sorted(map(list, adj.block.blocked_edges)))

    def _on_update(self, task: Task) -> None:
        f = self.flight
        member = f.group.member(task.target)
        deps = f.notif.bundle.dep_edges.get(member.task, frozenset())
        try:
            doomed = self._doomed(f.group, f.applied)
            self.dag = apply_update_op(self.dag, member, deps, f.adj.block.blocked_edges, doomed=doomed)
        except BadUpdate as exc:
            self._abort(str(exc))
            return
        self.member_new[member.task] = True
        if member.op is UpdateOp.REMOVE:
            self.state.completed.discard(member.task)
            self._dequeue(member.task, "removed")
        f.applied.append(member.task)
        self._link_deps(f.notif.bundle, f.applied)
        self._log_apply(member, deps)
        self._revalidate_queue()
        if all(u in self.state.aux_done for u in f.adj.update_tasks.values()):
            self.dag = finalize_update(self.dag, f.adj.block.blocked_edges)
            self._finish_flight()
            self._log("finalize", routine=self.dag.routine_ids())

    def _finish_flight(self) -> None:
        f = self.flight
        aux = set(self.state.aux_done)
        self.state.aux_done.clear()
        self.state.enqueued -= aux
        for t in aux:
            self.state.release_times.pop(t, None)
        self.state.carried = set()
        self.completion_times.append(self.now - f.notif.arrival_time)
        self.flight = None

    def _abort(self, reason: str) -> None:
        f = self.flight
        for key in self.queue.keys():
            if key[2] not in f.snapshot:
                self._dequeue(key[2], "abort")
        self.dag = f.snapshot.copy()
        for m in f.group:
            self.member_new[m.task] = m.op is UpdateOp.INSERT
        self.state.aux_done.clear()
        self.state.enqueued = {t for t in self.state.enqueued if t in self.dag}
        self.state.carried = set()
        self.aborted = True
        self.flight = None
        self._log("abort", reason=reason)
        self._revalidate_queue()

    def _log_apply(self, member, deps) -> None:
        t = member.task
        if deps:
            edges = [[p, t] for p in sorted(deps) if p in self.dag and t in self.dag and t in self.dag.succs(p)]
            self._log("add_edges", t, edges=edges)
        version = self.dag.tasks[t].profile.version if t in self.dag else None
        self._log("apply", t, op=member.op.name, deps=sorted(deps), version=version)

    @staticmethod
    def _doomed(group: UpdateGroup, applied) -> frozenset[int]:
        return frozenset(m.task for m in group if m.op is UpdateOp.REMOVE and m.task not in applied)

    def _link_deps(self, bundle, applied) -> None:
        """Add dependency edges whose source only appeared after its
        target was applied (an inserted predecessor)."""
        for t in applied:
            for p in sorted(bundle.dep_edges.get(t, ())):
                if t in self.dag and p in self.dag and not self.dag.has_path(t, p):
                    self.dag.add_edge(p, t)

    # -- baselines -----------------------------------------------------
    def _patch(self, notif: UpdateNotification, running: int | None = None, staged: bool = False) -> bool:
        """Run the update as one uninterrupted burst and apply it.

        A ``staged`` bundle was already received and decoded by helper
        tasks, so only the member operations remain.
        """
        bundle = notif.bundle
        snapshot = self.dag.copy()
        self._log("patch_begin", arrival=notif.arrival_time, bytes=bundle.total_size, running=running)
        helpers = self.costs.helper_profiles(bundle)
        items = [] if staged else [(r.value, helpers[r], None) for r in HELPER_ORDER]
        items += [(f"u{m.task}", self.costs.update_profile(m), m) for m in bundle.group]
        applied: list[int] = []
        try:
            for label, prof, member in items:
                before = self.energy.stored
                self._acquire(prof.energy_cost)
                self._log("patch", label=label, before=before)
                self._advance(self.now + prof.exec_time)
                if member is None:
                    continue
                deps = bundle.dep_edges.get(member.task, frozenset())
                doomed = self._doomed(bundle.group, applied)
                self.dag = apply_update_op(self.dag, member, deps, doomed=doomed)
                self.member_new[member.task] = True
                if member.op is UpdateOp.REMOVE:
                    self.state.completed.discard(member.task)
                    self._dequeue(member.task, "removed")
                applied.append(member.task)
                self._link_deps(bundle, applied)
                self._log_apply(member, deps)
        except (BadUpdate, CycleDetected) as exc:
            if staged:
                self._abort(str(exc))
                return False
            self.dag = snapshot
            for m in bundle.group:
                self.member_new[m.task] = m.op is UpdateOp.INSERT
            self.aborted = True
            self._log("abort", reason=str(exc))
            self._revalidate_queue()
            return False
        self._revalidate_queue()
        if not staged:
            self.completion_times.append(self.now - notif.arrival_time)
        self._log("patch_end")
        return True
