import math

import numpy as np
import pytest

from resync.attack import (
    BurstAttacker,
    GenieDefender,
    LowerBoundAttacker,
    McAttacker,
    SicMmabAttacker,
    SicMmabDesyncAttacker,
    SilentAttacker,
    UniformAttacker,
    make_burst_team,
    pinned_team,
)
from resync.baselines import McDefender, SicMmabDefender
from resync.defense import orthogonalization_rounds
from resync.env import BanditInstance, RoundFeedback, simulate


def test_silent():
    a = SilentAttacker()
    assert all(a.act(t) is None for t in range(100))


def test_lower_bound_zero_budget():
    a = LowerBoundAttacker(5, 0, np.random.default_rng(0))
    assert all(a.act(t) is None for t in range(50))


def test_lower_bound_pulls_budget_then_quiet():
    a = LowerBoundAttacker(5, 30, np.random.default_rng(0))
    acts = [a.act(t) for t in range(100)]
    assert acts[:30] == [a.arm] * 30 and acts[30:] == [None] * 70


def test_lower_bound_arm_is_uniform():
    K, N, n = 10, 4, 4000
    hits = sum(LowerBoundAttacker(K, 1, np.random.default_rng(s)).arm <= N for s in range(n))
    p = N / K
    assert abs(hits / n - p) < 4 * math.sqrt(p * (1 - p) / n)


def test_burst_schedule():
    t0 = 3000
    a = BurstAttacker(4, [(0, t0), (50_000, t0)])
    assert a.act(0) == 4 and a.act(t0 - 1) == 4 and a.act(t0) is None
    assert a.act(49_999) is None and a.act(50_000) == 4 and a.act(50_000 + t0) is None
    assert BurstAttacker(2, []).act(0) is None


def test_burst_team_distinct_arms():
    team = make_burst_team(4, 6, [(0, 10)], np.random.default_rng(1))
    assert len({a.arm for a in team}) == 4


def test_uniform_attacker_window():
    a = UniformAttacker(10, 5000, np.random.default_rng(0))
    assert all(1 <= a.act(t) <= 10 for t in range(5000))
    assert all(a.act(t) is None for t in range(5000, 6000))


def test_genie_team_pins_top_arms():
    inst = BanditInstance((0.1, 0.9, 0.5, 0.7), 2)
    assert [d.act(0) for d in pinned_team(inst)] == [2, 4]
    assert GenieDefender(3).act(10) == 3


def mc_game(seed, estimate_players, T=20_000, t0=3000):
    K, N = 10, 5
    ss = np.random.SeedSequence(seed).spawn(N + 2)
    rngs = [np.random.default_rng(s) for s in ss]
    means = np.linspace(0.95, 0.05, K)
    inst = BanditInstance(tuple(means), N, 1, T)
    team = [McDefender(K, N, t0, rngs[i], estimate_players) for i in range(N)]
    att = McAttacker(K, T, t0, rngs[N])
    tr = simulate(inst, team + [att], rngs[N + 1])
    return inst, team, att, tr


def test_mc_attack_budget_and_silence():
    inst, team, att, tr = mc_game(0, False)
    assert tr.pulls[-1] == att.budget == 3000 + math.ceil(10 * math.log(inst.T))
    assert all(att.act(t) is None for t in range(att.budget, att.budget + 100))


@pytest.mark.parametrize("seed", range(3))
def test_mc_attack_blocks_best_arm_and_forces_linear_regret(seed):
    inst, team, att, tr = mc_game(seed, True)
    assert att.target == 1                    # the true best arm
    assert all(d.n_players == inst.N + 1 for d in team)
    committed = [d.committed for d in team]
    assert None not in committed and att.target not in committed
    T = inst.T
    # after commitment regret grows by (mu_1 - mu_6) every round
    per_round = (tr.cum_regret[-1] - tr.cum_regret[T // 2]) / (T - 1 - T // 2)
    assert per_round == pytest.approx(inst.sorted_means[0] - inst.sorted_means[inst.N])


class PhaseLog:
    """Wraps a player and records its phase at each act."""

    def __init__(self, inner):
        self.inner = inner
        self.log = []

    def act(self, t):
        a = self.inner.act(t)
        self.log.append(self.inner.phase)
        return a

    def observe(self, t, arm, fb):
        self.inner.observe(t, arm, fb)


def sic_attack_game(seed, K=10, N=3, T=100_000):
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(N + 2)]
    means = rngs[-1].random(K)
    inst = BanditInstance(tuple(means), N, 1, T)
    team = [SicMmabDefender(K, T, rngs[i]) for i in range(N)]
    att = PhaseLog(SicMmabAttacker(K, T, rngs[N]))
    tr = simulate(inst, team + [att], rngs[N + 1], record_actions=True)
    return inst, team, att, tr


def test_sicmmab_attack_targets_top_rank_every_exploration_round():
    inst, team, att, tr = sic_attack_game(1)
    N = inst.N
    assert all(not d.init_failed for d in team)
    target = max(range(N), key=lambda j: team[j].rank)
    assert team[target].rank == N + 1
    explo = [t for t, ph in enumerate(att.log) if ph == "exploration"]
    assert explo
    assert all(tr.actions[t][N] == tr.actions[t][target] for t in explo)
    # the target's exploration samples are all zero
    assert team[target].exploit_arm == att.inner.target_arm
    assert tr.pulls[N] <= 21 * inst.K ** 2 * math.log(inst.T)


def test_desync_attack_cost_and_fault():
    K, N, T = 10, 3, 10 ** 5
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(8).spawn(N + 1)]
    inst = BanditInstance(tuple(rngs[-1].random(K)), N, 1, T)
    team = [SicMmabDefender(K, T, rngs[i]) for i in range(N)]
    att = SicMmabDesyncAttacker(K, T)
    start = orthogonalization_rounds(K, T)
    tr = simulate(inst, team + [att], rngs[-1], rounds=start + 3 * K)
    assert tr.pulls[N] == 2 * K <= att.budget
    victims = [d for d in team if d.fault]
    assert len(victims) >= 1
    assert all(d.n_players >= K + 1 for d in victims)
    assert all(att.act(t) is None for t in range(start + 2 * K, start + 4 * K))


def test_desync_attack_hops_forever_without_victims():
    K = 6
    att = SicMmabDesyncAttacker(K, 1000)
    arms = []
    for t in range(att.start, att.start + 10 * K):
        a = att.act(t)
        arms.append(a)
        att.observe(t, a, RoundFeedback(0.5, 0))
    assert arms == [(i % K) + 1 for i in range(10 * K)]
    assert all(att.act(t) is None for t in range(att.start))
