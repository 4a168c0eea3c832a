"""Musical Chairs (MC) and SIC-MMAB defenders, used as attack targets.

SIC-MMAB statistics are carried as exact fractions so that every player
applying the same messages ends up with bit-identical estimates.
"""
from __future__ import annotations

import math
from fractions import Fraction
from typing import Optional

import numpy as np

from .defense import orthogonalization_rounds, wrap


def mc_t0(K: int, T: int, min_gap: float) -> int:
    """Exploration length used by MC when attackers may be present."""
    return math.ceil(max(64 * K * math.log(4 * K * K * T) / min_gap ** 2,
                         K * K * math.log(4 * T) / 0.02))


def top_arms(estimates, n: int) -> list:
    """Indices (1-based) of the n largest estimates, lower index wins ties."""
    order = sorted(range(len(estimates)), key=lambda k: (-estimates[k], k))
    return sorted(k + 1 for k in order[:n])


class McDefender:
    """Uniform exploration for ``t0`` rounds, then musical chairs.

    With ``estimate_players`` the number of chairs is estimated from the
    collision rate as in the original algorithm; otherwise N is known.
    """

    EXPLORE, CHAIRS, COMMITTED = "explore", "musical_chairs", "committed"

    def __init__(self, K: int, N: int, t0: int, rng: np.random.Generator,
                 estimate_players: bool = False):
        self.K = K
        self.N = N
        self.t0 = t0
        self.rng = rng
        self.estimate_players = estimate_players
        self.phase = self.EXPLORE
        self.obs = [0] * K
        self.sums = [0.0] * K
        self.collisions = 0
        self.chairs: Optional[list] = None
        self.committed: Optional[int] = None
        self.n_players: Optional[int] = None
        self._explore = rng.integers(1, K + 1, size=t0).tolist()

    def _start_chairs(self):
        est = [self.sums[k] / self.obs[k] if self.obs[k] else 0.0 for k in range(self.K)]
        n = self.N
        if self.estimate_players:
            free = (self.t0 - self.collisions) / self.t0
            if free <= 0:
                n = self.K
            else:
                n = int(round(math.log(free) / math.log(1 - 1 / self.K))) + 1
            n = min(max(n, 1), self.K)
        self.n_players = n
        self.chairs = top_arms(est, n)
        self.phase = self.CHAIRS

    def act(self, t: int) -> int:
        if self.phase == self.COMMITTED:
            return self.committed
        if t < self.t0:
            return self._explore[t]
        if self.phase == self.EXPLORE:
            self._start_chairs()
        return self.chairs[int(self.rng.integers(len(self.chairs)))]

    def observe(self, t: int, arm: int, fb) -> None:
        if self.phase == self.EXPLORE:
            if fb.eta:
                self.collisions += 1
            else:
                self.obs[arm - 1] += 1
                self.sums[arm - 1] += fb.reward
        elif self.phase == self.CHAIRS and not fb.eta:
            self.committed = arm
            self.phase = self.COMMITTED


def send_pulls(receiver_arm: int, own_arm: int, stat: int, p: int) -> list:
    """Arms pulled to send ``stat`` in p+1 bits, low bit first."""
    if not 0 <= stat < 2 ** (p + 1):
        raise ValueError(f"statistic {stat} does not fit in {p + 1} bits")
    return [receiver_arm if (stat >> b) & 1 else own_arm for b in range(p + 1)]


def quantize(phase_sum: float, p: int) -> int:
    """Phase statistic: empirical mean over 2^p pulls on a (2^{p+1}-1) grid."""
    top = 2 ** (p + 1) - 1
    mean = phase_sum / 2 ** p
    return min(top, max(0, int(math.floor(top * mean + 0.5))))


def comm_slot(c: int, n_players: int, n_arms: int, p: int) -> tuple:
    """Decode communication round ``c`` into (sender, receiver, arm_pos, bit).

    Senders and receivers are internal ranks 1..n_players; pairs are
    ordered by sender, then receiver (skipping the sender), then arm, then bit.
    """
    bits = p + 1
    block = n_arms * bits
    pair, rem = divmod(c, block)
    sender = pair // (n_players - 1) + 1
    receiver = pair % (n_players - 1) + 1
    if receiver >= sender:
        receiver += 1
    return sender, receiver, rem // bits, rem % bits


def comm_length(n_players: int, n_arms: int, p: int) -> int:
    return n_players * (n_players - 1) * n_arms * (p + 1)


def confidence_radius(T: int, s: int) -> float:
    return 3.0 * math.sqrt(math.log(T) / (2 * s))


class SicMmabDefender:
    """SIC-MMAB with collision-sensing communication.

    Phases: musical-chairs fixation, Estimate_M (2K rounds), then alternating
    exploration (every active arm pulled 2^p times by sequential hopping)
    and communication (each ordered pair of active players exchanges a
    (p+1)-bit statistic per active arm).  Arms are accepted or rejected with
    the rule ``mu_i - b_s >= mu_j + b_s``; the highest internal ranks take
    accepted arms first.
    """

    def __init__(self, K: int, T: int, rng: np.random.Generator):
        self.K = K
        self.T = T
        self.rng = rng
        self.fix_len = orthogonalization_rounds(K, T)
        self.phase = "fixation"
        self.ext_rank = -1
        self.last = None
        self.n_players = 1
        self.rank = 1
        self.init_failed = False
        self.fault: Optional[str] = None
        self.p = 1
        self.active = list(range(1, K + 1))
        self.n_active = 1
        self.t_phase = 0
        self.phase_len = 0
        self.phase_sums: dict = {}
        self.own_stats: dict = {}
        self.received: dict = {}
        self.sums = {k: Fraction(0) for k in range(1, K + 1)}
        self.npulls = {k: 0 for k in range(1, K + 1)}
        self.exploit_arm: Optional[int] = None
        self.estimate_log: list = []
        self._fix_draws = rng.integers(1, K + 1, size=self.fix_len).tolist()

    # -- helpers -----------------------------------------------------------
    def estimates(self) -> dict:
        return {k: self.sums[k] / self.npulls[k] for k in self.active if self.npulls[k]}

    def _start_exploration(self):
        self.phase = "exploration"
        self.t_phase = 0
        self.phase_len = len(self.active) * 2 ** self.p
        self.phase_sums = {k: 0.0 for k in self.active}

    def _start_communication(self):
        self.own_stats = {k: quantize(self.phase_sums[k], self.p) for k in self.active}
        self.received = {}
        self.t_phase = 0
        self.phase_len = comm_length(self.n_active, len(self.active), self.p)
        self.phase = "communication"
        if self.phase_len == 0:
            self._finish_communication()

    def _set_fault(self, why: str):
        self.fault = why
        self.phase = "fault"

    def _finish_communication(self):
        p = self.p
        top = 2 ** (p + 1) - 1
        for pos, k in enumerate(self.active):
            total = self.own_stats[k]
            for sender in range(1, self.n_active + 1):
                if sender != self.rank:
                    total += self.received.get((sender, pos), 0)
            self.sums[k] += Fraction(2 ** p * total, top)
            self.npulls[k] += 2 ** p * self.n_active
        est = self.estimates()
        self.estimate_log.append((p, dict(est)))

        arms = list(self.active)
        n_arms, n_act = len(arms), self.n_active
        radius = confidence_radius(self.T, self.npulls[arms[0]])
        beats = {i: {j for j in arms if j != i and float(est[i] - est[j]) >= 2 * radius}
                 for i in arms}
        accept = sorted(k for k in arms if len(beats[k]) >= n_arms - n_act)
        beaten = {k: sum(1 for i in arms if k in beats[i]) for k in arms}
        reject = sorted(k for k in arms if k not in accept and beaten[k] >= n_act)
        if len(accept) > n_act:
            self._set_fault("accepted more arms than active players")
            return
        remaining = n_act - len(accept)
        if self.rank > remaining:
            self.exploit_arm = accept[self.rank - remaining - 1]
            self.phase = "exploitation"
            return
        self.n_active = remaining
        self.active = [k for k in arms if k not in accept and k not in reject]
        self.p += 1
        self._start_exploration()

    # -- protocol ----------------------------------------------------------
    def act(self, t: int) -> int:
        K = self.K
        if self.phase == "fixation":
            if t < self.fix_len:
                self.last = self._fix_draws[t] if self.ext_rank == -1 else self.ext_rank
                return self.last
            if self.ext_rank == -1:
                self.init_failed = True
                self.ext_rank = self.last
            self.phase = "estimation"
            self.t_phase = 0
        if self.phase == "estimation":
            step = self.t_phase + 1
            if step <= 2 * self.ext_rank:
                return self.ext_rank
            return wrap(step - self.ext_rank, K)
        if self.phase == "exploration":
            return self.active[(self.rank + self.t_phase) % len(self.active)]
        if self.phase == "communication":
            sender, receiver, pos, bit = comm_slot(self.t_phase, self.n_active,
                                                   len(self.active), self.p)
            own = self.active[self.rank - 1]
            if self.rank == sender:
                stat = self.own_stats[self.active[pos]]
                return self.active[receiver - 1] if (stat >> bit) & 1 else own
            return own
        if self.phase == "exploitation":
            return self.exploit_arm
        return self.ext_rank

    def observe(self, t: int, arm: int, fb) -> None:
        if self.phase == "fixation":
            if self.ext_rank == -1 and not fb.eta:
                self.ext_rank = arm
            return
        if self.phase == "estimation":
            if fb.eta:
                self.n_players += 1
                if self.t_phase + 1 <= 2 * self.ext_rank:
                    self.rank += 1
            self.t_phase += 1
            if self.t_phase == 2 * self.K:
                if self.n_players > self.K:
                    self._set_fault(f"estimated {self.n_players} players > {self.K} arms")
                    return
                self.n_active = self.n_players
                self._start_exploration()
            return
        if self.phase == "exploration":
            self.phase_sums[arm] += fb.reward
            self.t_phase += 1
            if self.t_phase == self.phase_len:
                self._start_communication()
            return
        if self.phase == "communication":
            sender, receiver, pos, bit = comm_slot(self.t_phase, self.n_active,
                                                   len(self.active), self.p)
            if receiver == self.rank and fb.eta:
                key = (sender, pos)
                self.received[key] = self.received.get(key, 0) | (1 << bit)
            self.t_phase += 1
            if self.t_phase == self.phase_len:
                self._finish_communication()
