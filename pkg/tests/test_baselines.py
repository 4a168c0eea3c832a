import math
from fractions import Fraction

import numpy as np
import pytest
import hypothesis.strategies as st
from hypothesis import given, settings

from resync.baselines import (
    McDefender,
    SicMmabDefender,
    comm_length,
    comm_slot,
    confidence_radius,
    mc_t0,
    quantize,
    send_pulls,
    top_arms,
)
from resync.env import BanditInstance, RoundFeedback, resolve_round, simulate


def test_send_example():
    assert send_pulls(7, 2, 5, 2) == [7, 2, 7]


def test_send_rejects_oversized_statistic():
    with pytest.raises(ValueError):
        send_pulls(1, 2, 8, 2)


@given(st.integers(1, 12).flatmap(lambda p: st.tuples(st.just(p), st.integers(0, 2 ** (p + 1) - 1))))
def test_send_receive_round_trip(case):
    p, stat = case
    inst = BanditInstance((0.2, 0.8), 2)
    got = 0
    for b, arm in enumerate(send_pulls(2, 1, stat, p)):
        fb = resolve_round([arm, 2], inst, [1.0, 1.0])[1]
        got |= fb.eta << b
    assert got == stat


@given(st.integers(1, 12), st.floats(0, 1))
def test_quantize_in_range(p, mean):
    q = quantize(mean * 2 ** p, p)
    assert 0 <= q <= 2 ** (p + 1) - 1
    assert abs(Fraction(q, 2 ** (p + 1) - 1) - Fraction(mean)) <= Fraction(1, 2 * (2 ** (p + 1) - 1)) + Fraction(1, 10 ** 9)


@given(st.integers(2, 5), st.integers(1, 6), st.integers(1, 4))
def test_comm_schedule_is_a_bijection(n, k, p):
    seen = {comm_slot(c, n, k, p) for c in range(comm_length(n, k, p))}
    expected = {(i, l, q, b) for i in range(1, n + 1) for l in range(1, n + 1) if l != i
                for q in range(k) for b in range(p + 1)}
    assert seen == expected
    # sender-major order, bits of one statistic in consecutive rounds
    assert comm_slot(0, n, k, p) == (1, 2, 0, 0)


def test_top_arms_tie_break():
    assert top_arms([0.5, 0.9, 0.5, 0.1], 2) == [1, 2]


def test_mc_t0_formula():
    K, T, d = 10, 10 ** 5, 0.1
    assert mc_t0(K, T, d) == math.ceil(max(64 * K * math.log(4 * K * K * T) / d ** 2,
                                           K * K * math.log(4 * T) / 0.02))


def mc_team(N, K, t0, seed, **kw):
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(N)]
    return [McDefender(K, N, t0, r, **kw) for r in rngs]


@pytest.mark.parametrize("seed", range(5))
def test_mc_commits_to_distinct_top_arms(seed):
    rng = np.random.default_rng(seed)
    means = rng.permutation(np.r_[np.linspace(0.7, 0.95, 5), np.linspace(0.05, 0.3, 5)])
    inst = BanditInstance(tuple(means), 5, 0, 5000)
    team = mc_team(5, 10, 3000, seed)
    simulate(inst, team, np.random.default_rng(seed + 1))
    committed = [d.committed for d in team]
    assert None not in committed
    assert sorted(committed) == inst.top_arms


def test_mc_commitment_never_changes():
    inst = BanditInstance((0.9, 0.8, 0.2, 0.1), 2, 0, 3000)
    team = mc_team(2, 4, 500, 3)
    first = {}
    for t in range(inst.T):
        simulate(inst, team, np.random.default_rng(t), rounds=1, start=t)
        for j, d in enumerate(team):
            if d.committed is not None:
                first.setdefault(j, d.committed)
                assert d.act(t + 1) == first[j] and d.committed == first[j]


def test_mc_player_estimate_without_attackers():
    inst = BanditInstance(tuple(np.linspace(0.1, 0.9, 10)), 5, 0, 8000)
    team = mc_team(5, 10, 6000, 11, estimate_players=True)
    simulate(inst, team, np.random.default_rng(0))
    assert all(d.n_players == 5 for d in team)


def test_confidence_radius():
    assert confidence_radius(100, 50) == pytest.approx(3 * np.sqrt(np.log(100) / 100))


def sic_team(N, K, T, seed):
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(N)]
    return [SicMmabDefender(K, T, r) for r in rngs]


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_sicmmab_without_attackers_exploits_top_arms(seed):
    rng = np.random.default_rng(seed)
    means = rng.permutation([0.95, 0.9, 0.3, 0.1, 0.05])
    T = 30_000
    inst = BanditInstance(tuple(means), 2, 0, T)
    team = sic_team(2, 5, T, seed)
    tr = simulate(inst, team, rng)
    assert all(d.fault is None and not d.init_failed for d in team)
    assert sorted(d.rank for d in team) == [1, 2]
    assert all(d.phase == "exploitation" for d in team)
    assert sorted(d.exploit_arm for d in team) == inst.top_arms
    # regret stops growing once everybody exploits
    assert tr.cum_regret[-1] - tr.cum_regret[T // 2] == pytest.approx(0.0)


def test_sicmmab_players_share_identical_statistics():
    T = 20_000
    inst = BanditInstance((0.9, 0.5, 0.45, 0.4), 3, 0, T)
    team = sic_team(3, 4, T, 5)
    simulate(inst, team, np.random.default_rng(2))
    logs = [d.estimate_log for d in team]
    n = min(len(x) for x in logs)
    assert n >= 3
    for i in range(n):
        p0, est0 = logs[0][i]
        for other in logs[1:]:
            p, est = other[i]
            common = set(est0) & set(est)
            assert p == p0 and all(est[k] == est0[k] for k in common)


def test_sicmmab_flags_too_many_players():
    d = SicMmabDefender(3, 100, np.random.default_rng(0))
    d.phase, d.ext_rank, d.t_phase = "estimation", 1, 0
    for step in range(6):
        arm = d.act(d.fix_len + step)
        d.observe(d.fix_len + step, arm, RoundFeedback(0.0, 1))
    assert d.fault is not None and "players" in d.fault
