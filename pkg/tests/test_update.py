import pytest

from aero.dag import Dag, TaskKind, TaskProfile, UpdateGroup, UpdateMember, UpdateOp, chain, compute_affected_block, routine
from aero.errors import BadUpdate, RemoveWhileRunning, UpdateInFlight
from aero.packet import UpdateBundle
from aero.scheduler import finalize_update
from aero.sim import offline_apply_oracle
from aero.update import (
    HELPER_ORDER,
    CostModel,
    RuntimePosition,
    UpdateNotification,
    adjust_dag,
    apply_update_op,
    classify_runtime_position,
    helper_id,
    spawn_update_chain,
    update_task_id,
    virtual_start_id,
)

N = 32


def modify(*ts):
    return UpdateGroup(tuple(UpdateMember(t, UpdateOp.MODIFY, 10) for t in ts))


def chain4():
    return chain([(100, 5)] * 4)


def fig5_like():
    dag = Dag()
    for t in range(1, 10):
        dag.add_task(routine(t, 100, 5, t))
    for e in [(1, 2), (2, 4), (3, 4), (4, 5), (4, 6), (5, 8), (6, 8), (7, 8), (3, 7)]:
        dag.add_edge(*e)
    return dag


def notif(group, size=40):
    return UpdateNotification(0.0, UpdateBundle(group, {}, size))


def test_spawn_adds_helper_chain():
    dag = spawn_update_chain(chain4(), notif(modify(2)))
    helpers = dag.ids_of(TaskKind.HELPER)
    assert len(helpers) == 4
    assert len([e for e in dag.edges if e[0] in helpers and e[1] in helpers]) == 3
    with pytest.raises(UpdateInFlight):
        spawn_update_chain(dag, notif(modify(3)))


def test_zero_cost_helpers():
    profiles = CostModel().zero_helpers().helper_profiles(UpdateBundle(modify(2), {}, 500))
    assert all(p.exec_time == 0 and p.energy_cost == 0 for p in profiles.values())


def test_adjust_outside_block():
    res = adjust_dag(chain4(), modify(2, 4), current=1)
    u2, u4, s = update_task_id(2, N), update_task_id(4, N), virtual_start_id(N)
    assert res.position is RuntimePosition.OUTSIDE
    assert {(u2, 2), (u4, 4), (s, 1)} <= res.dag.edges
    assert (1, 2) in res.block.blocked_edges and (1, 2) not in res.dag.edges


def test_adjust_inside_block():
    res = adjust_dag(chain4(), modify(2, 4), current=3)
    u2, u4 = update_task_id(2, N), update_task_id(4, N)
    assert res.position is RuntimePosition.INSIDE
    assert {(2, u2), (4, u4)} <= res.dag.edges
    assert (u2, 2) not in res.dag.edges


def test_adjust_insert_always_precedes():
    g = UpdateGroup((UpdateMember(9, UpdateOp.INSERT, 12, TaskProfile(50, 2)),))
    for current in (None, 2):
        res = adjust_dag(chain4(), g, current)
        u9 = update_task_id(9, N)
        assert (u9, 9) in res.dag.edges and res.dag.tasks[9].placeholder
        assert res.placeholders == {9}


def test_deferral_paths():
    dag = fig5_like()
    g = modify(4, 8)
    for current, inside in [(5, True), (1, False), (None, False)]:
        res = adjust_dag(dag, g, current)
        for t in (4, 8):
            u = update_task_id(t, N)
            assert res.dag.has_path(t, u) if inside else res.dag.has_path(u, t)


def test_classify_position():
    dag = fig5_like()
    block = compute_affected_block(dag, modify(4, 8))
    assert classify_runtime_position(dag, block, None) is RuntimePosition.OUTSIDE
    assert classify_runtime_position(dag, block, 4) is RuntimePosition.INSIDE
    assert classify_runtime_position(dag, block, 5) is RuntimePosition.INSIDE
    assert classify_runtime_position(dag, block, 7) is RuntimePosition.OUTSIDE


def test_apply_modify_bumps_version_only():
    dag = chain4()
    out = apply_update_op(dag, UpdateMember(2, UpdateOp.MODIFY))
    assert out.tasks[2].profile.version == 1 and out.edges == dag.edges


def test_apply_remove():
    dag = fig5_like()
    out = apply_update_op(dag, UpdateMember(8, UpdateOp.REMOVE))
    assert 8 not in out and not any(8 in e for e in out.edges)
    with pytest.raises(RemoveWhileRunning):
        apply_update_op(dag, UpdateMember(8, UpdateOp.REMOVE), running=8)


def test_apply_insert_with_deps():
    dag = fig5_like()
    out = apply_update_op(dag, UpdateMember(10, UpdateOp.INSERT, 0, TaskProfile(10, 1)), {3})
    assert (3, 10) in out.edges


def test_apply_rejects_cycle_through_blocked_edge():
    # (1, 2) is blocked during the update; 2 -> 1 would close a cycle once it returns
    dag = chain4()
    dag.remove_edge(1, 2)
    with pytest.raises(BadUpdate):
        apply_update_op(dag, UpdateMember(1, UpdateOp.MODIFY), {2}, blocked_edges={(1, 2)})


def test_apply_skips_doomed_sources():
    dag = chain4()
    out = apply_update_op(dag, UpdateMember(2, UpdateOp.MODIFY), {4}, doomed={4})
    assert (4, 2) not in out.edges


def test_deps_exist_before_version_bump_in_single_apply():
    dag = chain([(10, 1)] * 3)
    out = apply_update_op(dag, UpdateMember(3, UpdateOp.MODIFY), {1})
    assert (1, 3) in out.edges and out.tasks[3].profile.version == 1


def test_finalize_matches_offline_oracle_for_modify():
    dag = fig5_like()
    g = modify(4, 8)
    res = adjust_dag(dag, g, None)
    cur = res.dag
    for m in g:
        cur = apply_update_op(cur, m, (), res.block.blocked_edges)
    final = finalize_update(cur, res.block.blocked_edges)
    assert final == offline_apply_oracle(dag, g)
    assert {t.kind for t in final.tasks.values()} == {TaskKind.ROUTINE}
    assert final.edges == dag.edges


def test_finalize_after_remove_and_insert():
    dag = fig5_like()
    g = UpdateGroup((UpdateMember(8, UpdateOp.REMOVE), UpdateMember(10, UpdateOp.INSERT, 4, TaskProfile(10, 1))))
    deps = {10: frozenset({3})}
    res = adjust_dag(dag, g, None)
    cur = res.dag
    for m in g:
        cur = apply_update_op(cur, m, deps.get(m.task, ()), res.block.blocked_edges)
    final = finalize_update(cur, res.block.blocked_edges)
    assert final == offline_apply_oracle(dag, g, deps)
    assert 8 not in final and (3, 10) in final.edges


def test_bad_update_rejected_by_oracle():
    with pytest.raises(BadUpdate):
        offline_apply_oracle(chain4(), modify(1), {1: frozenset({3})})
    with pytest.raises(BadUpdate):
        offline_apply_oracle(chain4(), modify(7))


def test_helper_ids_are_distinct():
    ids = {virtual_start_id(N)} | {helper_id(r, N) for r in HELPER_ORDER}
    ids |= {update_task_id(t, N) for t in range(N)}
    assert len(ids) == 1 + 4 + N and min(ids) >= N and max(ids) < 3 * N
