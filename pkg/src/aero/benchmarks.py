"""Benchmark DAG families, update scenario presets and the experiment runner."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from statistics import fmean

from .dag import Dag, TaskProfile, UpdateGroup, UpdateMember, UpdateOp, routine
from .energy import HarvestTrace, bundled_trace, capacity_from_capacitor
from .errors import ConfigError
from .packet import UpdateBundle, assemble_bundle, pack_insert_descriptor, packetize
from .scheduler import DeadlinePolicy
from .sim import Approach, RunResult, Simulator
from .update import CostModel, UpdateNotification

ACTIVE_POWER_UW = 3000.0
SCENARIO_DIR = Path(__file__).parent / "scenarios"
SCHEMA_VERSION = 1

# (task id, label, share of the capacitor budget); the largest share is 1.0
_SHAPES = {
    "B1": dict(
        cap_mf=0.02,
        kind="linear",
        tasks=[(1, "sort1", 0.7), (2, "sort2", 1.0), (3, "sort3", 0.8), (4, "sort4", 0.6)],
        edges=[(1, 2), (2, 3), (3, 4)],
    ),
    "B2": dict(
        cap_mf=0.2,
        kind="parallel",
        tasks=[
            (1, "sw_keyexp", 0.5),
            (2, "sw_encrypt", 1.0),
            (3, "hw_keyexp", 0.3),
            (4, "hw_encrypt_dma", 0.6),
            (5, "sink", 0.4),
        ],
        edges=[(1, 2), (2, 5), (3, 4), (4, 5)],
    ),
    "B3": dict(
        cap_mf=10.0,
        kind="linear",
        tasks=[
            (1, "conv1", 0.8),
            (2, "pool1", 0.3),
            (3, "conv2", 1.0),
            (4, "pool2", 0.3),
            (5, "fc1", 0.9),
            (6, "fc2", 0.9),
            (7, "output", 0.7),
        ],
        edges=[(i, i + 1) for i in range(1, 7)],
    ),
    "B4": dict(
        cap_mf=1.0,
        kind="fork-join",
        tasks=[
            (1, "ppg_uart", 0.4),
            (2, "bandpass", 0.6),
            (3, "motion", 0.5),
            (4, "peak", 0.7),
            (5, "hr_model", 1.0),
        ],
        edges=[(1, 2), (1, 3), (1, 4), (2, 5), (3, 5), (4, 5)],
    ),
}


@dataclass(frozen=True)
class Benchmark:
    name: str
    dag: Dag
    cap_mf: float
    kind: str
    labels: dict[int, str] = field(default_factory=dict)

    @property
    def capacity(self) -> float:
        return capacity_from_capacitor(self.cap_mf)


def benchmark(name: str) -> Benchmark:
    try:
        spec = _SHAPES[name]
    except KeyError:
        raise ConfigError(f"unknown benchmark {name!r}; choose from {sorted(_SHAPES)}") from None
    cap = capacity_from_capacitor(spec["cap_mf"])
    order = {tid: i for i, (tid, _, _) in enumerate(spec["tasks"])}
    dag = Dag()
    for tid, _label, share in spec["tasks"]:
        energy = share * cap
        dag.add_task(routine(tid, energy / ACTIVE_POWER_UW * 1e6, energy, order[tid]))
    for a, b in spec["edges"]:
        dag.add_edge(a, b)
    return Benchmark(name, dag, spec["cap_mf"], spec["kind"], {t: lbl for t, lbl, _ in spec["tasks"]})


@dataclass(frozen=True)
class MemberSpec:
    task: int
    op: UpdateOp
    deps: frozenset[int] | None = None
    share: float = 0.0  # energy share for INSERT, relative to capacity
    priority: int = 0


@dataclass(frozen=True)
class Scenario:
    id: int
    name: str
    benchmark: str
    members: tuple[MemberSpec, ...]
    payload_bytes: int
    arrival: str = "uniform"

    def bench(self) -> Benchmark:
        return benchmark(self.benchmark)

    def member_sizes(self) -> dict[int, int]:
        """Split the payload evenly over members carrying code; the
        remainder goes to the lowest ids."""
        carriers = [m.task for m in self.members if m.op is not UpdateOp.REMOVE]
        base, extra = divmod(self.payload_bytes, len(carriers)) if carriers else (0, 0)
        return {t: base + (i < extra) for i, t in enumerate(carriers)}

    def packets(self, cap: float | None = None):
        cap = self.bench().capacity if cap is None else cap
        sizes = self.member_sizes()
        rng = random.Random(f"payload:{self.id}")
        members, codes, deps = [], {}, {}
        for m in self.members:
            n = sizes.get(m.task, 0)
            profile = None
            code = b""
            if m.op is UpdateOp.INSERT:
                energy = m.share * cap
                profile = TaskProfile(round(energy / ACTIVE_POWER_UW * 1e6), round(energy, 3), m.priority)
                code = pack_insert_descriptor(profile)
            code += rng.randbytes(max(0, n - len(code)))
            codes[m.task] = code
            members.append(UpdateMember(m.task, m.op, len(code), profile))
            if m.deps is not None:
                deps[m.task] = m.deps
        return packetize(UpdateGroup(tuple(members)), codes, deps)

    def bundle(self) -> UpdateBundle:
        return assemble_bundle(self.packets())

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "id": self.id,
            "name": self.name,
            "benchmark": self.benchmark,
            "arrival": self.arrival,
            "payload_bytes": self.payload_bytes,
            "members": [
                {
                    "task": m.task,
                    "op": m.op.name.lower(),
                    **({"deps": sorted(m.deps)} if m.deps is not None else {}),
                    **({"share": m.share, "priority": m.priority} if m.op is UpdateOp.INSERT else {}),
                }
                for m in self.members
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        try:
            members = tuple(
                MemberSpec(
                    int(m["task"]),
                    UpdateOp[m["op"].upper()],
                    frozenset(m["deps"]) if "deps" in m else None,
                    float(m.get("share", 0.0)),
                    int(m.get("priority", 0)),
                )
                for m in data["members"]
            )
            sc = cls(
                int(data["id"]),
                data.get("name", f"scenario{data['id']}"),
                data["benchmark"],
                members,
                int(data["payload_bytes"]),
                data.get("arrival", "uniform"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed scenario: {exc!r}") from exc
        if sc.arrival != "uniform":
            raise ConfigError(f"unsupported arrival law {sc.arrival!r}")
        benchmark(sc.benchmark)
        return sc

    @classmethod
    def load(cls, path) -> "Scenario":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{path}: {exc}") from exc


def _m(task, op, deps=None, share=0.0, priority=0):
    return MemberSpec(task, op, None if deps is None else frozenset(deps), share, priority)


PRESETS = {
    1: Scenario(1, "second_sort", "B1", (_m(2, UpdateOp.MODIFY),), 280),
    2: Scenario(2, "hw_aes_fix", "B2", (_m(3, UpdateOp.MODIFY), _m(4, UpdateOp.MODIFY)), 130),
    3: Scenario(3, "aes_mode_change", "B2",
                (_m(2, UpdateOp.MODIFY), _m(4, UpdateOp.MODIFY), _m(5, UpdateOp.MODIFY)), 162),
    4: Scenario(4, "classifier_head", "B3", (_m(6, UpdateOp.MODIFY), _m(7, UpdateOp.MODIFY)), 292),
    5: Scenario(5, "motion_filter", "B4",
                (_m(3, UpdateOp.MODIFY, deps={6}), _m(6, UpdateOp.INSERT, deps={1}, share=0.3, priority=1)), 702),
    6: Scenario(6, "hr_model_uart", "B4", (_m(1, UpdateOp.MODIFY), _m(5, UpdateOp.MODIFY)), 6246),
}


def scenario(ident) -> Scenario:
    """Preset by number, or a scenario JSON file path."""
    if isinstance(ident, Scenario):
        return ident
    try:
        key = int(ident)
    except (TypeError, ValueError):
        return Scenario.load(ident)
    path = SCENARIO_DIR / f"scenario{key}.json"
    if path.exists():
        return Scenario.load(path)
    if key not in PRESETS:
        raise ConfigError(f"no scenario {ident!r}; presets are 1..6")
    return PRESETS[key]


def default_horizon(dag: Dag, trace: HarvestTrace, iterations: int = 8) -> float:
    """Roughly ``iterations`` nominal DAG iterations, in microseconds."""
    tasks = [t.profile for t in dag.tasks.values()]
    busy = sum(p.exec_time for p in tasks)
    energy = sum(p.energy_cost for p in tasks)
    starved = energy / trace.mean_power() * 1e6 if trace.mean_power() > 0 else busy
    return iterations * max(busy, starved)


@dataclass(frozen=True)
class RunRecord:
    scenario: int
    approach: str
    seed: int
    arrival: float
    error: bool
    completion_time: float | None
    dmr: float
    misses: int
    instances: int
    aborted: bool
    iterations: int
    position: str


@dataclass
class Metrics:
    scenario: int
    approach: str
    runs: list[RunRecord]

    @property
    def error_rate(self) -> float:
        return sum(r.error for r in self.runs) / len(self.runs)

    @property
    def completion_time(self) -> float:
        done = [r.completion_time for r in self.runs if r.completion_time is not None]
        return fmean(done) if done else float("nan")

    @property
    def dmr(self) -> float:
        return fmean(r.dmr for r in self.runs)

    def summary(self) -> dict:
        return {
            "scenario": self.scenario,
            "approach": self.approach,
            "runs": len(self.runs),
            "error_rate": self.error_rate,
            "completion_time_us": self.completion_time,
            "dmr": self.dmr,
        }


def simulate(
    scen: Scenario,
    approach,
    trace: HarvestTrace,
    seed: int,
    horizon: float | None = None,
    costs: CostModel | None = None,
    policy: DeadlinePolicy | None = None,
    record_events: bool = True,
) -> RunResult:
    bench = scen.bench()
    horizon = default_horizon(bench.dag, trace) if horizon is None else horizon
    rng = random.Random(f"{scen.id}:{seed}")
    arrival = rng.uniform(0.0, horizon)
    sim = Simulator(
        bench.dag,
        trace,
        bench.capacity,
        approach,
        [UpdateNotification(arrival, scen.bundle())],
        policy=policy,
        costs=costs,
        horizon=horizon,
        record_events=record_events,
    )
    return sim.run()


def run_experiment(
    scen,
    approach,
    trace: HarvestTrace | None = None,
    seed: int = 0,
    runs: int = 100,
    horizon: float | None = None,
    costs: CostModel | None = None,
    policy: DeadlinePolicy | None = None,
) -> Metrics:
    """Run ``runs`` seeds starting at ``seed`` and aggregate."""
    if runs < 1:
        raise ConfigError("runs must be >= 1")
    scen = scenario(scen)
    approach = Approach(approach)
    trace = trace or bundled_trace()
    records = []
    for s in range(seed, seed + runs):
        res = simulate(scen, approach, trace, s, horizon, costs, policy, record_events=False)
        records.append(run_record(scen, approach, s, res))
    return Metrics(scen.id, approach.value, records)


def run_record(scen: Scenario, approach: Approach, seed: int, res: RunResult) -> RunRecord:
    return RunRecord(
        scen.id,
        approach.value,
        seed,
        res.arrivals[0] if res.arrivals else float("nan"),
        res.error,
        res.completion_time,
        res.dmr,
        res.misses,
        res.instances,
        res.aborted,
        res.iterations,
        res.positions[0] if res.positions else "",
    )
