"""Round-based multi-player bandit game with collision feedback.

Players are indexed ``0..N+M-1``; the first ``N`` are defenders, the rest
attackers.  Arms are ``1..K``.  An action is an arm index or ``NO_PULL``
(``None``), and only attackers may stay quiet.

Every player object exposes two methods::

    act(t) -> int | None
    observe(t, arm, feedback) -> None

``t`` is the 0-based global round.  ``observe`` is only called for players
that pulled an arm.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

NO_PULL = None

_BLOCK = 2048


class InvalidActionError(ValueError):
    pass


class RoundFeedback(NamedTuple):
    """What a pulling player sees after a round.

    ``eta_d``/``eta_a`` are only populated under distinguishable sensing.
    """

    reward: float
    eta: int
    eta_d: Optional[int] = None
    eta_a: Optional[int] = None


@dataclass(frozen=True)
class BanditInstance:
    means: tuple
    n_defenders: int
    n_attackers: int = 0
    horizon: int = 1
    distribution: str = "bernoulli"
    sigma: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "means", tuple(float(m) for m in self.means))
        K = len(self.means)
        if K < 1:
            raise ValueError("need at least one arm")
        if any(not 0.0 <= m <= 1.0 for m in self.means):
            raise ValueError("means must lie in [0, 1]")
        if len(set(self.means)) != K:
            raise ValueError("means must be pairwise distinct")
        if not 1 <= self.n_defenders <= K:
            raise ValueError("need 1 <= N <= K")
        if self.n_attackers < 0 or self.horizon < 1:
            raise ValueError("bad attacker count or horizon")
        if self.distribution not in ("bernoulli", "gaussian"):
            raise ValueError(f"unknown distribution {self.distribution!r}")

    @property
    def K(self) -> int:
        return len(self.means)

    @property
    def N(self) -> int:
        return self.n_defenders

    @property
    def M(self) -> int:
        return self.n_attackers

    @property
    def T(self) -> int:
        return self.horizon

    @property
    def sorted_means(self) -> list:
        return sorted(self.means, reverse=True)

    @property
    def gap(self) -> float:
        """mu_(N) - mu_(N+1); ``inf`` when every arm is optimal."""
        s = self.sorted_means
        if self.N == self.K:
            return float("inf")
        return s[self.N - 1] - s[self.N]

    @property
    def min_gap(self) -> float:
        s = self.sorted_means
        if self.K == 1:
            return float("inf")
        return min(s[i] - s[i + 1] for i in range(self.K - 1))

    @property
    def top_arms(self) -> list:
        """The N optimal arms (1-based), ascending by arm index."""
        order = sorted(range(self.K), key=lambda k: -self.means[k])
        return sorted(k + 1 for k in order[: self.N])

    @property
    def optimal_reward(self) -> float:
        return sum(self.sorted_means[: self.N])


class RewardSampler:
    """Draws one reward per arm per round from a dedicated stream.

    Rewards are generated in blocks; consumption only depends on the number
    of rounds, never on what the players do.
    """

    def __init__(self, instance: BanditInstance, rng: np.random.Generator):
        self.instance = instance
        self.rng = rng
        self._means = np.asarray(instance.means)
        self._block: list = []
        self._pos = 0

    def _refill(self):
        K = self.instance.K
        if self.instance.distribution == "bernoulli":
            block = (self.rng.random((_BLOCK, K)) < self._means).astype(float)
        else:
            z = self.rng.standard_normal((_BLOCK, K))
            block = np.clip(self._means + self.instance.sigma * z, 0.0, 1.0)
        self._block = block.tolist()
        self._pos = 0

    def draw(self) -> list:
        if self._pos >= len(self._block):
            self._refill()
        row = self._block[self._pos]
        self._pos += 1
        return row


def resolve_round(
    actions: Sequence,
    instance: BanditInstance,
    draws: Sequence[float],
    distinguishable: bool = False,
) -> list:
    """Resolve collisions for one round.

    ``draws[k-1]`` is the shared realisation X_k(t) for arm k.  Returns one
    entry per player: a ``RoundFeedback`` or ``None`` for quiet players.
    """
    K = instance.K
    n_def = instance.n_defenders
    counts = [0] * (K + 1)
    dcounts = [0] * (K + 1)
    acounts = [0] * (K + 1)
    for j, a in enumerate(actions):
        if a is None:
            if j < n_def:
                raise InvalidActionError(f"defender {j} cannot stay quiet")
            continue
        if a.__class__ is not int and not isinstance(a, (int, np.integer)):
            raise InvalidActionError(f"player {j}: arm {a!r} is not an integer")
        if not 1 <= a <= K:
            raise InvalidActionError(f"player {j}: arm {a} outside [1, {K}]")
        counts[a] += 1
        if j < n_def:
            dcounts[a] += 1
        else:
            acounts[a] += 1

    out = []
    if distinguishable:
        # indicators count the *other* pullers of each class, which for a
        # defender is "> 1 defender" and ">= 1 attacker" on the arm
        for j, a in enumerate(actions):
            if a is None:
                out.append(None)
                continue
            eta = 1 if counts[a] > 1 else 0
            own_d = 1 if j < n_def else 0
            out.append(RoundFeedback(
                0.0 if eta else draws[a - 1],
                eta,
                1 if dcounts[a] - own_d >= 1 else 0,
                1 if acounts[a] - (1 - own_d) >= 1 else 0,
            ))
    else:
        for a in actions:
            if a is None:
                out.append(None)
                continue
            eta = 1 if counts[a] > 1 else 0
            out.append(RoundFeedback(0.0 if eta else draws[a - 1], eta))
    return out


def accrue_regret(actions: Sequence, feedbacks: Sequence, instance: BanditInstance) -> float:
    """Pseudo-regret of one round, from true means (never sampled rewards)."""
    got = 0.0
    means = instance.means
    for j in range(instance.n_defenders):
        if not feedbacks[j].eta:
            got += means[actions[j] - 1]
    return instance.optimal_reward - got


def accrue_attack_cost(actions: Sequence, n_defenders: int) -> int:
    """1 iff some defender and some attacker pulled the same arm."""
    attacked = {a for a in actions[n_defenders:] if a is not None}
    if not attacked:
        return 0
    for a in actions[:n_defenders]:
        if a in attacked:
            return 1
    return 0


@dataclass
class RunTrace:
    cum_regret: np.ndarray
    cum_attack_cost: np.ndarray
    pulls: np.ndarray
    actions: Optional[list] = None
    meta: dict = field(default_factory=dict)

    @property
    def n_rounds(self) -> int:
        return len(self.cum_regret)

    @property
    def final_regret(self) -> float:
        return float(self.cum_regret[-1]) if self.n_rounds else 0.0

    @property
    def attack_cost(self) -> int:
        return int(self.cum_attack_cost[-1]) if self.n_rounds else 0

    def attacked_rounds(self) -> np.ndarray:
        """Per-round 0/1 indicator of adversarial collisions."""
        return np.diff(self.cum_attack_cost, prepend=0)


def simulate(
    instance: BanditInstance,
    players: Sequence,
    rng: np.random.Generator,
    distinguishable: bool = False,
    rounds: Optional[int] = None,
    start: int = 0,
    record_actions: bool = False,
) -> RunTrace:
    """Play ``rounds`` rounds (default: the horizon) in lockstep.

    ``players`` lists the N defenders first, then the M attackers.
    """
    n_def = instance.n_defenders
    if len(players) != n_def + instance.n_attackers:
        raise ValueError(
            f"expected {n_def + instance.n_attackers} players, got {len(players)}"
        )
    T = instance.horizon if rounds is None else rounds
    sampler = RewardSampler(instance, rng)
    regret = np.empty(T)
    cost = np.empty(T, dtype=np.int64)
    pulls = np.zeros(len(players), dtype=np.int64)
    history = [] if record_actions else None
    total_r = 0.0
    total_c = 0
    opt = instance.optimal_reward
    means = instance.means
    attackers = players[n_def:]
    for i in range(T):
        t = start + i
        actions = [p.act(t) for p in players]
        fbs = resolve_round(actions, instance, sampler.draw(), distinguishable)
        got = 0.0
        for j in range(n_def):
            if not fbs[j].eta:
                got += means[actions[j] - 1]
        total_r += opt - got
        if attackers:
            total_c += accrue_attack_cost(actions, n_def)
        for j, p in enumerate(players):
            a = actions[j]
            if a is not None:
                pulls[j] += 1
                p.observe(t, a, fbs[j])
        regret[i] = total_r
        cost[i] = total_c
        if history is not None:
            history.append(actions)
    return RunTrace(regret, cost, pulls, history)
