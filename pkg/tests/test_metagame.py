import itertools

import numpy as np
import pytest
import hypothesis.strategies as st
from hypothesis import given

from resync.attack import ScriptedAttacker
from resync.defense import EXPLOIT, EXPLORE, DefenderState, EpochRecord, ResyncDefender, make_resync_team
from resync.env import BanditInstance, simulate
from resync.metagame import (
    TRANSITIONS,
    ConformanceError,
    MetaAction as A,
    MetaState as S,
    abstract_run,
    attacked_epochs,
    check_conformance,
    epoch_action,
    epoch_state,
    meta_step,
    rollout,
    verify_bound,
)


def test_transition_table():
    assert TRANSITIONS.tolist() == [[2, 0, 1], [0, 0, 0], [2, 0, 1]]
    assert meta_step(S.EXPLORE, A.N) is S.EXPLOIT
    assert meta_step(S.EXPLOIT, A.C_PRIME) is S.DESYNC
    assert all(meta_step(S.DESYNC, a) is S.EXPLORE for a in A)
    assert str(A.C_PRIME) == "C'"


def test_rollout_examples():
    assert rollout(S.EXPLOIT, [A.N] * 5) == [S.EXPLOIT] * 5
    assert rollout(S.EXPLORE, [A.N, A.N]) == [S.EXPLORE, S.EXPLOIT]
    assert rollout(S.EXPLOIT, [A.C_PRIME, A.N, A.N, A.N]) == [S.EXPLOIT, S.DESYNC, S.EXPLORE, S.EXPLOIT]


def test_one_attack_costs_at_most_three_bad_epochs():
    states = rollout(S.EXPLOIT, [A.N, A.C_PRIME, A.N, A.N, A.N])
    assert sum(s != S.EXPLOIT for s in states) == 2 <= 1 + 3


def test_bound_holds_from_reachable_starts():
    for h in range(1, 11):
        rep = verify_bound(h, starts=(S.EXPLORE, S.EXPLOIT))
        assert rep.ok and rep.sequences == 2 * 3 ** h


def test_desync_start_has_exactly_one_counterexample():
    for h in range(2, 10):
        rep = verify_bound(h)
        assert rep.violations == 1 and rep.worst_excess == 1
        start, actions, states = rep.counterexample
        assert start is S.DESYNC and actions == [A.N] * h
        assert states[:2] == [S.DESYNC, S.EXPLORE]
    assert not verify_bound(12).ok
    assert verify_bound(1).ok


def test_budget_limits_enumeration():
    rep = verify_bound(4, budget=0)
    assert rep.sequences == 3
    assert verify_bound(4, budget=1).sequences == 3 * (1 + 4 * 2)


def bad_count(start, actions):
    return sum(s != S.EXPLOIT for s in rollout(start, actions))


@given(st.lists(st.sampled_from(list(A)), min_size=1, max_size=14), st.sampled_from(list(S)))
def test_tight_bound_from_any_start(actions, start):
    cprime = sum(a == A.C_PRIME for a in actions)
    c = sum(a == A.C for a in actions)
    # every bad epoch is charged to the start or to an attack
    assert bad_count(start, actions) <= 2 + 2 * cprime + c


def test_tight_bound_is_attained():
    for k in range(4):
        acts = [A.N] + [A.C_PRIME, A.N, A.N] * k + [A.N]
        assert bad_count(S.DESYNC, acts) == 2 + 2 * k


def test_verify_bound_matches_brute_force():
    h = 6
    worst = max(bad_count(s, a) - 1 - 3 * sum(x != A.N for x in a)
                for s in S for a in itertools.product(A, repeat=h))
    assert verify_bound(h).worst_excess == worst


def test_epoch_state_and_action():
    assert epoch_state([EXPLORE, EXPLORE]) is S.EXPLORE
    assert epoch_state([EXPLOIT, EXPLORE]) is S.DESYNC
    assert epoch_action([True, True], True, [True, True]) is A.C
    assert epoch_action([True, False], True, [True, True]) is A.C_PRIME
    assert epoch_action([False, False], True, [True, True]) is A.N
    # warm-up epochs are classified by effect
    assert epoch_action([True, True], False, [False, True]) is A.C
    assert epoch_action([True, True], False, [True, True]) is A.N


def test_abstract_run_flags_mismatch():
    hist = [[EpochRecord(0, EXPLOIT, False, True), EpochRecord(1, EXPLORE, False, True)]]
    run = abstract_run(hist, [False, False])
    assert not run.ok and run.mismatches[0][:2] == (0, S.EXPLOIT)
    with pytest.raises(ConformanceError):
        check_conformance(hist, [False, False])


def separated_instance(seed, N, K, M=0, T=10 ** 6):
    means = np.random.default_rng(seed).permutation(np.linspace(0.05, 0.95, K))
    return BanditInstance(tuple(means), N, M, T, distribution="gaussian", sigma=0.01)


def test_unattacked_run_explores_then_exploits():
    N, K, t0 = 3, 6, 60
    inst = separated_instance(0, N, K)
    team = make_resync_team(N, K, t0)
    tb = team[0].tb
    tr = simulate(inst, team, np.random.default_rng(1), rounds=12 * tb)
    run = check_conformance([d.history for d in team], attacked_epochs(tr, tb))
    assert run.states[0] is S.EXPLORE and run.states[-1] is S.EXPLOIT
    assert S.DESYNC not in run.states


def test_split_restart_goes_through_desync():
    N, K, t0 = 2, 5, 10
    inst = BanditInstance((0.9, 0.8, 0.3, 0.2, 0.1), N, 1, 10 ** 4)
    team = [ResyncDefender(j, N, K, t0, DefenderState(j, N, K, phase=EXPLOIT, restart=False,
                                                      opt=[1, 2]))
            for j in range(1, N + 1)]
    tb = team[0].tb
    # collide with defender 1 only, during its Opt[1] visit
    script = {t: team[0].resync_exploit_step(t) for t in range(tb - N, tb)}
    tr = simulate(inst, team + [ScriptedAttacker(script)], np.random.default_rng(0), rounds=3 * tb)
    run = check_conformance([d.history for d in team], attacked_epochs(tr, tb))
    assert run.states == [S.EXPLOIT, S.DESYNC, S.EXPLORE]
    assert run.actions[0] is A.C_PRIME


def test_attacked_epochs_padding():
    class Tr:
        def attacked_rounds(self):
            return np.array([0, 0, 0, 1, 0])
    assert attacked_epochs(Tr(), 2).tolist() == [False, True, False]
