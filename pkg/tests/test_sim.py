import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aero.benchmarks import default_horizon, scenario, simulate
from aero.dag import Dag, TaskProfile, UpdateGroup, UpdateMember, UpdateOp, chain
from aero.energy import HarvestTrace, bundled_trace
from aero.errors import SimulationError
from aero.packet import UpdateBundle
from aero.sim import Approach, Simulator, mixed_version, offline_apply_oracle
from aero.update import CostModel, UpdateNotification

from oracles import (
    check_energy,
    check_predecessors,
    check_queue_order,
    conservation_error,
    random_dag,
    random_group,
)

POWER = 3000.0  # equals active power: no energy waits with a large capacitor
ZERO_HELPERS = CostModel().zero_helpers()


def chain3():
    # each task runs 100 us on 0.3 uJ; one iteration takes 300 us
    return chain([(100.0, 0.3)] * 3)


def bundle(*members, deps=None):
    g = UpdateGroup(tuple(members))
    return UpdateBundle(g, deps or {}, sum(m.size for m in g))


def mod(t, size=10):
    return UpdateMember(t, UpdateOp.MODIFY, size)


def run(approach, b, arrival, dag=None, costs=None, horizon=20000.0, power=POWER, capacity=100.0):
    sim = Simulator(
        chain3() if dag is None else dag,
        HarvestTrace.constant(power),
        capacity,
        approach,
        [UpdateNotification(arrival, b)],
        costs=costs,
        horizon=horizon,
    )
    return sim.run()


def member_flags(events):
    """(iteration, task, new_code) for member completions, from the log only."""
    return [
        (e["iteration"], e["task"], e["member_new"])
        for e in events
        if e["event"] == "complete" and e.get("kind") == "routine" and e.get("member_new") is not None
    ]


def log_says_mixed(events, members):
    by_iter = {}
    running = {}
    for e in events:
        if e["event"] == "start" and e["task"] in members:
            running[e["task"]] = e
        if e["event"] == "interrupt" and e["task"] in members:
            by_iter.setdefault(e["iteration"], set()).update({False, True})
    for it, _t, new in member_flags(events):
        by_iter.setdefault(it, set()).add(new)
    return any(len(v) > 1 for v in by_iter.values())


def test_live_error_when_members_straddle_update():
    res = run("live", bundle(mod(1), mod(3)), arrival=150.0)
    assert res.error
    assert log_says_mixed(res.events, {1, 3})
    flags = [f for f in member_flags(res.events) if f[0] == 0]
    assert (0, 1, False) in flags and (0, 3, True) in flags


def test_live_single_member_already_done_is_safe():
    res = run("live", bundle(mod(1)), arrival=250.0)
    assert not res.error
    assert not log_says_mixed(res.events, {1})


def test_live_interrupting_member_itself_is_an_error():
    res = run("live", bundle(mod(2)), arrival=150.0)
    assert res.error
    assert any(e["event"] == "interrupt" and e["task"] == 2 for e in res.events)


def test_live_before_any_member_is_safe():
    res = run("live", bundle(mod(2), mod(3)), arrival=20.0)
    assert not res.error


def test_aero_outside_updates_before_block():
    res = run("aero", bundle(mod(2), mod(3)), arrival=50.0, costs=ZERO_HELPERS)
    assert res.positions == ["outside"] and not res.error
    ev = res.events
    first_apply = next(i for i, e in enumerate(ev) if e["event"] == "apply")
    t2_start = next(i for i, e in enumerate(ev) if e["event"] == "start" and e["task"] == 2)
    assert first_apply < t2_start
    assert all(new for it, _t, new in member_flags(ev))


def test_aero_inside_defers_to_iteration_end():
    res = run("aero", bundle(mod(2), mod(3)), arrival=150.0, costs=ZERO_HELPERS)
    assert res.positions == ["inside"] and not res.error
    ev = res.events
    end0 = next(i for i, e in enumerate(ev) if e["event"] == "iteration_end" and e["iteration"] == 0)
    applies = [i for i, e in enumerate(ev) if e["event"] == "apply"]
    assert applies and min(applies) > end0
    assert [(t, new) for it, t, new in member_flags(ev) if it == 0] == [(2, False), (3, False)]


def test_aero_faster_than_intermittent_outside():
    b = bundle(mod(2), mod(3))
    aero = run("aero", b, arrival=50.0, costs=ZERO_HELPERS)
    inter = run("intermittent", b, arrival=50.0, costs=ZERO_HELPERS)
    assert aero.completion_time < inter.completion_time


def test_intermittent_completion_lower_bound():
    costs = CostModel()
    b = bundle(mod(2), mod(3))
    res = run("intermittent", b, arrival=150.0, costs=costs)
    apply_time = sum(costs.update_profile(m).exec_time for m in b.group)
    assert res.completion_time >= (300.0 - 150.0) + apply_time
    assert not res.error


def test_intermittent_at_boundary_is_immediate():
    costs = CostModel()
    b = bundle(mod(2), mod(3))
    res = run("intermittent", b, arrival=300.0, costs=costs)
    work = sum(p.exec_time for p in costs.helper_profiles(b).values())
    work += sum(costs.update_profile(m).exec_time for m in b.group)
    assert res.completion_time == pytest.approx(work)


def test_deps_logged_before_version_bump():
    b = bundle(mod(3), deps={3: frozenset({1})})
    dag = chain3()
    dag.remove_edge(2, 3)
    dag.add_edge(2, 3)
    res = run("aero", b, arrival=10.0, dag=dag, costs=ZERO_HELPERS)
    kinds = [e["event"] for e in res.events if e["event"] in ("add_edges", "apply")]
    assert kinds == ["add_edges", "apply"]
    assert (1, 3) in res.dag.edges and res.dag.tasks[3].profile.version == 1


def test_bad_update_rolls_back():
    b = bundle(mod(1), deps={1: frozenset({3})})
    res = run("aero", b, arrival=10.0)
    assert res.aborted and res.dag == chain3() and not res.completion_times
    assert any(e["event"] == "abort" for e in res.events)


def test_insert_runs_new_task():
    prof = TaskProfile(100.0, 0.3, 1)
    ins = UpdateMember(7, UpdateOp.INSERT, 20, prof)
    res = run("aero", bundle(ins, deps={7: frozenset({1})}), arrival=400.0)
    assert 7 in res.dag and (1, 7) in res.dag.edges
    assert any(e["event"] == "complete" and e["task"] == 7 for e in res.events)


def test_remove_member():
    res = run("aero", bundle(UpdateMember(3, UpdateOp.REMOVE)), arrival=120.0)
    assert 3 not in res.dag and not res.error
    assert res.dag == offline_apply_oracle(chain3(), bundle(UpdateMember(3, UpdateOp.REMOVE)).group)


def test_live_remove_of_running_task_lets_it_finish():
    res = run("live", bundle(UpdateMember(2, UpdateOp.REMOVE)), arrival=150.0)
    assert 2 not in res.dag
    assert any(e["event"] == "complete" and e["task"] == 2 and e["time"] > 150 for e in res.events)


def test_second_notification_waits():
    b = bundle(mod(2))
    sim = Simulator(
        chain3(),
        HarvestTrace.constant(POWER),
        100.0,
        "aero",
        [UpdateNotification(10.0, b), UpdateNotification(20.0, bundle(mod(3)))],
        horizon=5000.0,
    )
    res = sim.run()
    assert len(res.completion_times) == 2
    spawns = [e["time"] for e in res.events if e["event"] == "spawn"]
    finals = [e["time"] for e in res.events if e["event"] == "finalize"]
    assert spawns[1] >= finals[0]


def test_empty_dag():
    res = Simulator(Dag(), HarvestTrace.constant(10), 10.0, "aero", horizon=500.0).run()
    assert res.instances == 0 and res.energy.now == pytest.approx(500.0)


def test_empty_dag_gains_inserted_task():
    ins = UpdateMember(1, UpdateOp.INSERT, 5, TaskProfile(50.0, 0.15))
    res = run("aero", bundle(ins), arrival=0.0, dag=Dag())
    assert sorted(res.dag.tasks) == [1] and res.instances > 0


def test_starvation_raises():
    trace = HarvestTrace((0.0, 0.0001), (POWER, 0.0))
    sim = Simulator(chain3(), trace, 0.5, "aero", horizon=1e6, initial_energy=0.0)
    with pytest.raises(Exception):
        sim.run()


def test_mixed_version_definition():
    assert not mixed_version([(0, 1, False, False), (0, 2, False, False), (1, 1, True, True)])
    assert mixed_version([(0, 1, False, False), (0, 2, True, True)])
    assert mixed_version([(3, 2, False, True)])


def test_same_seed_same_log():
    tr = bundled_trace()
    a = simulate(scenario(5), "aero", tr, 9)
    b = simulate(scenario(5), "aero", tr, 9)
    assert json.dumps(a.events, sort_keys=True) == json.dumps(b.events, sort_keys=True)


@pytest.mark.parametrize("approach", list(Approach))
def test_log_invariants_on_presets(approach):
    tr = bundled_trace()
    for sc in range(1, 7):
        for seed in range(3):
            res = simulate(scenario(sc), approach, tr, seed)
            assert not check_queue_order(res.events)
            assert not check_predecessors(res.events)
            assert not check_energy(res.events, res.energy.capacity)
            assert conservation_error(res) < 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_random_updates_match_oracle(seed):
    rng = random.Random(seed)
    dag = random_dag(rng, rng.randint(1, 8))
    g, deps = random_group(rng, dag, rng.randint(1, 3))
    b = UpdateBundle(g, deps, sum(m.size for m in g))
    trace = HarvestTrace.constant(rng.uniform(300, 4000))
    horizon = default_horizon(dag, trace, 4)
    res = Simulator(dag, trace, 100.0, "aero", [UpdateNotification(rng.uniform(0, horizon), b)], horizon=horizon).run()
    try:
        expected = offline_apply_oracle(dag, g, deps)
    except Exception:
        assert res.aborted and res.dag == dag
    else:
        assert res.dag == expected
    assert not res.error
    assert not check_predecessors(res.events)
    assert not check_queue_order(res.events)
