"""RESYNC and RESYNC2 defenders.

Both are per-defender state machines driven by the global round ``t``.
All arm arithmetic is 1-based: a residue of 0 maps to arm ``K`` (or to
position ``N`` of the Opt list).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

EXPLORE = "explore"
EXPLOIT = "exploit"
INIT = "init"


class ProtocolError(RuntimeError):
    pass


class InsufficientDataError(ValueError):
    pass


def wrap(x: int, n: int) -> int:
    """x mod n mapped into 1..n."""
    r = x % n
    return n if r == 0 else r


def compute_t0(K: int, T: int, delta: float, override: Optional[int] = None,
               constant: int = 8) -> int:
    """Length of sequential hopping: ``constant*K*ceil(ln(2K^2T)/delta^2)``.

    RESYNC uses ``constant=8``, RESYNC2's exploration budget uses 16.
    """
    if override is not None:
        if override < 1:
            raise ValueError("T0 override must be positive")
        return int(override)
    if not delta > 0:
        raise ValueError(f"gap must be positive, got {delta}")
    if K < 1 or T < 1:
        raise ValueError("K and T must be >= 1")
    return constant * K * math.ceil(math.log(2 * K * K * T) / delta ** 2)


def build_opt(obs, sums, N: int) -> list:
    """N empirically best arms, returned ascending by arm index.

    Ties in the empirical mean go to the lower arm index.
    """
    if any(o <= 0 for o in obs):
        raise InsufficientDataError("every arm needs at least one observation")
    K = len(obs)
    if not 1 <= N <= K:
        raise ValueError("need 1 <= N <= K")
    est = [sums[k] / obs[k] for k in range(K)]
    best = sorted(range(K), key=lambda k: (-est[k], k))[:N]
    return sorted(k + 1 for k in best)


class EpochRecord(NamedTuple):
    index: int
    phase: str
    restart: bool       # Restart flag at epoch end
    sufficient: bool    # had T0/K observations per arm (exploiters: True)


@dataclass
class DefenderState:
    rank: int
    N: int
    K: int
    phase: str = EXPLORE
    restart: bool = True
    sufficient: bool = False
    obs: list = field(default_factory=list)
    sums: list = field(default_factory=list)
    opt: Optional[list] = None
    epoch: int = 0

    def __post_init__(self):
        if not self.obs:
            self.obs = [0] * self.K
        if not self.sums:
            self.sums = [0.0] * self.K
        if self.opt is not None:
            self.opt = sorted(self.opt)
            if len(set(self.opt)) != self.N:
                raise ValueError("Opt must hold N distinct arms")


class ResyncDefender:
    """RESYNC for non-distinguishable sensing.

    Epochs have length ``T_B = T0 + 2N^2 + N``.  An exploration epoch is
    sequential hopping (T0), sensing (N^2), intra-communication (N^2) and
    inter-communication (N); an exploitation epoch hops over Opt and listens
    for collisions during its last N rounds.
    """

    def __init__(self, rank: int, N: int, K: int, t0: int,
                 state: Optional[DefenderState] = None):
        if not 1 <= rank <= N <= K:
            raise ValueError("need 1 <= rank <= N <= K")
        self.rank = rank
        self.N = N
        self.K = K
        self.t0 = t0
        self.tb = t0 + 2 * N * N + N
        self.state = state if state is not None else DefenderState(rank, N, K)
        if self.state.phase == EXPLOIT and self.state.opt is None:
            raise ProtocolError("exploitation requires Opt")
        self.history: list = []
        self._pending = None
        self._epoch_open = False

    @property
    def phase(self) -> str:
        return self.state.phase

    def _begin_epoch(self, t):
        st = self.state
        st.epoch = t // self.tb
        st.restart = False
        if st.phase == EXPLORE:
            st.sufficient = False
        self._epoch_open = True

    def _end_epoch(self):
        st = self.state
        self.history.append(EpochRecord(
            st.epoch, st.phase, st.restart,
            st.sufficient if st.phase == EXPLORE else True))
        st.phase = EXPLORE if st.restart else EXPLOIT
        self._epoch_open = False

    def act(self, t: int) -> int:
        if self._pending is not None:
            raise ProtocolError(f"no feedback received for round {self._pending}")
        pos = t % self.tb
        if pos == 0 or not self._epoch_open:
            self._begin_epoch(t)
        self._pending = t
        if self.state.phase == EXPLORE:
            return self.resync_step(t, pos)
        return self.resync_exploit_step(t)

    def resync_step(self, t: int, pos: int) -> int:
        st = self.state
        N, t0 = self.N, self.t0
        if pos < t0:
            return wrap(t + self.rank, self.K)
        if pos == t0:
            thresh = t0 / self.K
            if all(o >= thresh for o in st.obs):
                st.sufficient = True
                st.opt = build_opt(st.obs, st.sums, N)
            else:
                st.restart = True
        r = pos - t0
        if r < N * N:
            sender = r // N + 1
            if not st.sufficient:
                return 1
            if sender == self.rank:
                return st.opt[0]
            return wrap(st.opt[0] + 1, self.K)
        r -= N * N
        if r < N * N:
            sender, target = r // N + 1, r % N + 1
            if sender == self.rank:
                return target if st.restart else self.rank
            return self.rank
        return st.opt[0] if st.sufficient else 1

    def resync_exploit_step(self, t: int) -> int:
        opt = self.state.opt
        if opt is None:
            raise ProtocolError("exploitation without Opt")
        return opt[wrap(t + self.rank, self.N) - 1]

    def observe(self, t: int, arm: int, fb) -> None:
        if self._pending != t:
            raise ProtocolError(f"unexpected feedback for round {t}")
        self._pending = None
        st = self.state
        N, t0 = self.N, self.t0
        pos = t % self.tb
        if st.phase == EXPLORE:
            if pos < t0:
                if fb.eta:
                    st.restart = True
                else:
                    st.obs[arm - 1] += 1
                    st.sums[arm - 1] += fb.reward
            else:
                r = pos - t0
                if r < N * N:
                    if fb.eta and st.sufficient and r // N + 1 == self.rank:
                        st.restart = True
                elif r < 2 * N * N:
                    if fb.eta and (r - N * N) // N + 1 != self.rank:
                        st.restart = True
        elif fb.eta and pos >= t0 + 2 * N * N:
            st.restart = True
        if pos == self.tb - 1:
            self._end_epoch()


def make_resync_team(N: int, K: int, t0: int) -> list:
    return [ResyncDefender(j, N, K, t0) for j in range(1, N + 1)]


class Orthogonalizer:
    """Musical-chairs style fixing: pull uniformly until a collision-free pull."""

    def __init__(self, K: int, rounds: int, rng: np.random.Generator):
        self.K = K
        self.rounds = rounds
        self.rng = rng
        self.rank = -1
        self.last = None
        self._draws = rng.integers(1, K + 1, size=rounds).tolist() if rounds else []
        self._i = 0

    def act(self) -> int:
        if self.rank == -1:
            self.last = self._draws[self._i]
        else:
            self.last = self.rank
        self._i += 1
        return self.last

    def observe(self, arm: int, fb) -> None:
        if self.rank == -1 and not fb.eta:
            self.rank = arm

    @property
    def fixed(self) -> bool:
        return self.rank != -1


def orthogonalization_rounds(K: int, T: int) -> int:
    return math.ceil(K * math.log(T)) if T > 1 else K


class DefenderEstimator:
    """Counts defender-caused collisions over 2K rounds to learn N and rank.

    Reads only ``eta_d``, so attacker pulls cannot change the outcome.
    """

    def __init__(self, external_rank: int, K: int):
        self.k = external_rank
        self.K = K
        self.n = 1
        self.j = 1
        self.step = 0

    def act(self) -> int:
        self.step += 1
        if self.step <= 2 * self.k:
            return self.k
        return wrap(self.step - self.k, self.K)

    def observe(self, fb) -> None:
        if fb.eta_d is None:
            raise ProtocolError("Estimate-Defenders needs distinguishable sensing")
        if fb.eta_d:
            self.n += 1
            if self.step <= 2 * self.k:
                self.j += 1

    @property
    def done(self) -> bool:
        return self.step >= 2 * self.K

    @property
    def result(self) -> tuple:
        return self.n, self.j


def estimate_defenders_offline(external_ranks, K: int) -> dict:
    """Closed-form outcome of Estimate-Defenders for orthogonal defenders.

    Independent of the round simulation: rank = 1 + #smaller external ranks.
    """
    ranks = sorted(external_ranks)
    return {k: (len(ranks), i + 1) for i, k in enumerate(ranks)}


class Resync2Defender:
    """RESYNC2 for distinguishable sensing.

    Initialization (orthogonalization, then Estimate-Defenders), exploration
    in epochs of 2K rounds until ``T0/(2K)`` successful epochs, then
    exploitation of Opt until the horizon.
    """

    def __init__(self, K: int, T: int, t0: int, rng: np.random.Generator):
        self.K = K
        self.T = T
        self.t0 = t0
        self.orth_len = orthogonalization_rounds(K, T)
        self.est_start = self.orth_len
        self.explore_start = self.orth_len + 2 * K
        self.needed = max(1, t0 // (2 * K))
        self.orth = Orthogonalizer(K, self.orth_len, rng)
        self.estimator: Optional[DefenderEstimator] = None
        self.phase = INIT
        self.N: Optional[int] = None
        self.rank: Optional[int] = None
        self.obs = [0] * K
        self.sums = [0.0] * K
        self.opt: Optional[list] = None
        self.restart = False
        self.successes = 0
        self.explore_epochs = 0
        self.explore_end: Optional[int] = None
        self.orth_failed = False

    def act(self, t: int) -> int:
        K = self.K
        if t < self.est_start:
            return self.orth.act()
        if t < self.explore_start:
            if self.estimator is None:
                if not self.orth.fixed:
                    self.orth_failed = True
                    self.orth.rank = self.orth.last
                self.estimator = DefenderEstimator(self.orth.rank, K)
            return self.estimator.act()
        if self.phase == INIT:
            self.N, self.rank = self.estimator.result
            if self.rank > K or self.N > K:
                raise ProtocolError(f"estimated N={self.N} exceeds K={K}")
            self.phase = EXPLORE
        if self.phase == EXPLORE:
            return self.resync2_exploration_step(t, (t - self.explore_start) % (2 * K))
        return self.opt[wrap(t + self.rank, self.N) - 1]

    def resync2_exploration_step(self, t: int, tau: int) -> int:
        if tau == 0:
            self.restart = False
        if tau >= self.K and self.restart:
            return 1
        return wrap(t + self.rank, self.K)

    def observe(self, t: int, arm: int, fb) -> None:
        if fb.eta_d is None:
            raise ProtocolError("RESYNC2 needs distinguishable sensing")
        if t < self.est_start:
            self.orth.observe(arm, fb)
            return
        if t < self.explore_start:
            self.estimator.observe(fb)
            return
        if self.phase != EXPLORE:
            return
        K = self.K
        tau = (t - self.explore_start) % (2 * K)
        if tau < K:
            if fb.eta:
                self.restart = True
            else:
                self.obs[arm - 1] += 1
                self.sums[arm - 1] += fb.reward
        elif not self.restart and fb.eta_d:
            self.restart = True
        if tau == 2 * K - 1:
            self.explore_epochs += 1
            if not self.restart:
                self.successes += 1
                if self.successes >= self.needed:
                    self.opt = build_opt(self.obs, self.sums, self.N)
                    self.phase = EXPLOIT
                    self.explore_end = t + 1


def make_resync2_team(N: int, K: int, T: int, t0: int, rngs) -> list:
    return [Resync2Defender(K, T, t0, rngs[i]) for i in range(N)]
