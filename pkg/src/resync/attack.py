"""Attacker policies.

Attackers share the player contract of ``env`` but may return ``None``
(stay quiet).  They are given the horizon and the defenders' phase timing,
never the true means.
"""
from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .baselines import comm_length, comm_slot
from .defense import orthogonalization_rounds, wrap


class SilentAttacker:
    def act(self, t):
        return None

    def observe(self, t, arm, fb):
        pass


class ScriptedAttacker:
    """Pulls ``schedule[t]`` when present, otherwise stays quiet."""

    def __init__(self, schedule: dict):
        self.schedule = dict(schedule)

    def act(self, t):
        return self.schedule.get(t)

    def observe(self, t, arm, fb):
        pass


class BurstAttacker:
    """Pulls a fixed arm during each window ``[start, start + length)``."""

    def __init__(self, arm: int, windows):
        self.arm = arm
        self.windows = [(int(s), int(n)) for s, n in windows]

    def act(self, t):
        for s, n in self.windows:
            if s <= t < s + n:
                return self.arm
        return None

    def observe(self, t, arm, fb):
        pass


def make_burst_team(M: int, K: int, windows, rng: np.random.Generator) -> list:
    """M attackers on M distinct arms chosen jointly (centralized attack)."""
    if M > K:
        raise ValueError("burst attack needs M <= K distinct arms")
    arms = rng.choice(np.arange(1, K + 1), size=M, replace=False).tolist()
    return [BurstAttacker(a, windows) for a in arms]


class UniformAttacker:
    """Uniformly random arm for rounds ``t < until``, quiet afterwards."""

    def __init__(self, K: int, until: int, rng: np.random.Generator):
        self.until = until
        self._arms = rng.integers(1, K + 1, size=max(until, 0)).tolist()

    def act(self, t):
        return self._arms[t] if t < self.until else None

    def observe(self, t, arm, fb):
        pass


class LowerBoundAttacker:
    """Samples one arm uniformly and pulls it for the first ``budget`` rounds."""

    def __init__(self, K: int, budget: int, rng: np.random.Generator):
        self.budget = budget
        self.arm = int(rng.integers(1, K + 1))

    def act(self, t):
        return self.arm if t < self.budget else None

    def observe(self, t, arm, fb):
        pass


class GenieDefender:
    """Defender pinned to one arm; used with ``pinned_team`` as a lower-bound target."""

    def __init__(self, arm: int):
        self.arm = arm

    def act(self, t):
        return self.arm

    def observe(self, t, arm, fb):
        pass


def pinned_team(instance) -> list:
    return [GenieDefender(a) for a in instance.top_arms]


class McAttacker:
    """Explores like an MC defender, then sits on its empirically best arm.

    The squatting lasts ``ceil(K ln T)`` rounds, which covers the defenders'
    musical-chairs phase w.h.p., so nobody commits to that arm.
    """

    def __init__(self, K: int, T: int, t0: int, rng: np.random.Generator):
        self.K = K
        self.t0 = t0
        self.squat = orthogonalization_rounds(K, T)
        self.obs = [0] * K
        self.sums = [0.0] * K
        self.target: Optional[int] = None
        self._explore = rng.integers(1, K + 1, size=t0).tolist()

    @property
    def budget(self) -> int:
        return self.t0 + self.squat

    def act(self, t):
        if t < self.t0:
            return self._explore[t]
        if t >= self.t0 + self.squat:
            return None
        if self.target is None:
            est = [self.sums[k] / self.obs[k] if self.obs[k] else 0.0 for k in range(self.K)]
            self.target = max(range(self.K), key=lambda k: (est[k], -k)) + 1
        return self.target

    def observe(self, t, arm, fb):
        if t < self.t0 and not fb.eta:
            self.obs[arm - 1] += 1
            self.sums[arm - 1] += fb.reward


class SicMmabAttacker:
    """Single attacker steering the top-ranked SIC-MMAB defender to a random arm.

    It squats on arm 1 during fixation to take internal rank 1, runs the
    player-count estimation honestly, then in every phase collides with the
    target's exploration hops (zeroing its own statistics), jams all
    defender-to-defender messages (turning them into all-ones), and sends
    the target all-ones for the chosen arm and zero for the rest.  The
    target's estimates then become exactly ``1 - 1/I`` and ``1 - 2/I``.

    The attack stops after the communication phase in which the target's
    per-arm sample count reaches ``18 I^2 ln T``; at that point the gap
    ``1/I`` clears the acceptance test and the target commits.
    """

    def __init__(self, K: int, T: int, rng: np.random.Generator):
        self.K = K
        self.T = T
        self.fix_len = orthogonalization_rounds(K, T)
        self.target_arm = int(rng.integers(1, K + 1))
        self.n_players = 1
        self.phase = "fixation"
        self.p = 1
        self.t_phase = 0
        self.phase_len = 0
        self.target_pulls = 0
        self.finished_at: Optional[int] = None

    @property
    def stop_pulls(self) -> float:
        return 18 * self.n_players ** 2 * math.log(self.T)

    def budget(self) -> float:
        return 21 * self.K ** 2 * math.log(self.T)

    def _start_exploration(self):
        self.phase = "exploration"
        self.t_phase = 0
        self.phase_len = self.K * 2 ** self.p

    def act(self, t):
        K, I = self.K, self.n_players
        if self.phase == "fixation":
            if t < self.fix_len:
                return 1
            self.phase = "estimation"
            self.t_phase = 0
        if self.phase == "estimation":
            step = self.t_phase + 1
            return 1 if step <= 2 else wrap(step - 1, K)
        if self.phase == "exploration":
            return (I + self.t_phase) % K + 1
        if self.phase == "communication":
            sender, receiver, pos, bit = comm_slot(self.t_phase, I, K, self.p)
            if sender != 1:
                return receiver
            full = 2 ** (self.p + 1) - 1
            arm = pos + 1
            stat = full if receiver != I or arm == self.target_arm else 0
            return receiver if (stat >> bit) & 1 else 1
        return None

    def observe(self, t, arm, fb):
        if self.phase == "estimation":
            if fb.eta:
                self.n_players += 1
            self.t_phase += 1
            if self.t_phase == 2 * self.K:
                if self.n_players < 2 or self.n_players > self.K:
                    self.phase = "done"
                    self.finished_at = t + 1
                else:
                    self._start_exploration()
        elif self.phase == "exploration":
            self.t_phase += 1
            if self.t_phase == self.phase_len:
                self.phase = "communication"
                self.t_phase = 0
                self.phase_len = comm_length(self.n_players, self.K, self.p)
        elif self.phase == "communication":
            self.t_phase += 1
            if self.t_phase == self.phase_len:
                self.target_pulls += self.n_players * 2 ** self.p
                if self.target_pulls >= self.stop_pulls:
                    self.phase = "done"
                    self.finished_at = t + 1
                else:
                    self.p += 1
                    self._start_exploration()


class SicMmabDesyncAttacker:
    """Makes one SIC-MMAB defender count K+1 players.

    Quiet during fixation; then hops 1, 2, ... until it hits a defender on
    arm d at estimation step d, mirrors that defender's arm for d more rounds
    and follows its sweep for the remaining 2K - d rounds.
    """

    def __init__(self, K: int, T: int):
        self.K = K
        self.start = orthogonalization_rounds(K, T)
        self.found: Optional[int] = None
        self.end: Optional[int] = None

    @property
    def budget(self) -> int:
        return 3 * self.K + self.start

    def act(self, t):
        if t < self.start:
            return None
        step = t - self.start + 1
        if self.found is None:
            return wrap(step, self.K)
        d = self.found
        if step <= 2 * d:
            return d
        if step <= 2 * self.K:
            return wrap(step - d, self.K)
        return None

    def observe(self, t, arm, fb):
        if self.found is None and fb.eta:
            self.found = t - self.start + 1
