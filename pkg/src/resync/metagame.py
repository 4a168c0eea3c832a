"""Epoch-level meta-game: three states, three attacker actions, one table.

States describe an epoch (all defenders exploring, mixed, all exploiting);
actions describe what the attackers did to it (nothing, made everybody
restart, made a proper subset restart).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Optional, Sequence

import numpy as np

from .defense import EXPLOIT, EXPLORE


class MetaState(IntEnum):
    EXPLORE = 0
    DESYNC = 1
    EXPLOIT = 2


class MetaAction(IntEnum):
    N = 0
    C = 1
    C_PRIME = 2

    def __str__(self):
        return "C'" if self is MetaAction.C_PRIME else self.name


class ConformanceError(AssertionError):
    pass


# Rows: state, columns: action.  A mixed epoch always resolves to
# exploration whatever the attackers do, so DESYNC maps to EXPLORE for
# all three actions.
TRANSITIONS = np.array([
    [MetaState.EXPLOIT, MetaState.EXPLORE, MetaState.DESYNC],
    [MetaState.EXPLORE, MetaState.EXPLORE, MetaState.EXPLORE],
    [MetaState.EXPLOIT, MetaState.EXPLORE, MetaState.DESYNC],
], dtype=np.int8)


def meta_step(s: MetaState, a: MetaAction) -> MetaState:
    return MetaState(int(TRANSITIONS[int(s), int(a)]))


def rollout(start: MetaState, actions: Sequence[MetaAction]) -> list:
    """States S_1..S_H visited when playing ``actions`` from ``start``.

    S_1 is the start state and S_{i+1} = meta_step(S_i, A_i), so the last
    action does not influence the returned states.
    """
    states = [MetaState(start)]
    for a in actions[:-1]:
        states.append(meta_step(states[-1], a))
    return states


@dataclass
class BoundReport:
    horizon: int
    budget: int
    starts: tuple
    sequences: int
    violations: int
    worst_excess: int
    counterexample: Optional[tuple] = None   # (start, actions, states)
    violations_by_start: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.violations == 0

    def summary(self) -> str:
        head = (f"horizon={self.horizon} budget={self.budget} sequences={self.sequences} "
                f"violations={self.violations}")
        if self.ok:
            return head + " PASS"
        start, actions, states = self.counterexample
        return (head + " FAIL\n  counterexample: start=" + start.name
                + " actions=" + ",".join(str(a) for a in actions)
                + " states=" + ",".join(s.name for s in states))


def verify_bound(horizon: int, budget: Optional[int] = None,
                 starts: Sequence[MetaState] = tuple(MetaState)) -> BoundReport:
    """Check ``#non-EXPLOIT states <= 1 + 3 * #attack actions`` exhaustively.

    Every action sequence A_1..A_H is played from every start state; the
    states counted are S_1..S_H (start included) and the attack actions
    counted are all of A_1..A_H.  Sequences with more than ``budget`` attack
    actions are skipped.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if budget is None:
        budget = horizon
    n = 3 ** horizon
    # digit i of the sequence index is action A_{i+1}
    seq = np.arange(n, dtype=np.int64)
    acts = np.empty((n, horizon), dtype=np.int8)
    for i in range(horizon):
        acts[:, i] = seq % 3
        seq //= 3
    n_attack = (acts != MetaAction.N).sum(axis=1)
    keep = n_attack <= budget

    total = 0
    violations = 0
    worst = None
    example = None
    by_start = {}
    for start in starts:
        state = np.full(n, int(start), dtype=np.int8)
        bad = (state != MetaState.EXPLOIT).astype(np.int64)
        for i in range(horizon - 1):
            state = TRANSITIONS[state, acts[:, i]]
            bad += state != MetaState.EXPLOIT
        excess = np.where(keep, bad - (1 + 3 * n_attack), np.iinfo(np.int64).min)
        hit = np.flatnonzero(excess > 0)
        by_start[MetaState(start)] = int(hit.size)
        violations += int(hit.size)
        total += int(keep.sum())
        m = int(excess.max())
        if worst is None or m > worst:
            worst = m
        if hit.size and example is None:
            a = [MetaAction(int(x)) for x in acts[hit[0]]]
            example = (MetaState(start), a, rollout(MetaState(start), a))
    return BoundReport(horizon, budget, tuple(MetaState(s) for s in starts), total,
                       violations, worst, example, by_start)


def epoch_state(phases: Sequence[str]) -> MetaState:
    if all(p == EXPLORE for p in phases):
        return MetaState.EXPLORE
    if all(p == EXPLOIT for p in phases):
        return MetaState.EXPLOIT
    return MetaState.DESYNC


def epoch_action(restarts: Sequence[bool], attacked: bool, sufficient: Sequence[bool]) -> MetaAction:
    """Meta action played in one epoch.

    An epoch without adversarial collisions is ``N`` once every defender has
    enough observations; the warm-up epochs before that are classified by
    their effect like attacked epochs.
    """
    if not attacked and all(sufficient):
        return MetaAction.N
    if all(restarts):
        return MetaAction.C
    if not any(restarts):
        return MetaAction.N
    return MetaAction.C_PRIME


@dataclass
class AbstractRun:
    states: list
    actions: list
    mismatches: list     # (epoch, state, action, predicted, observed)

    @property
    def ok(self) -> bool:
        return not self.mismatches


def attacked_epochs(trace, tb: int) -> np.ndarray:
    """Per-epoch flag: did any round of the epoch see an adversarial collision."""
    hits = trace.attacked_rounds()
    n_ep = -(-len(hits) // tb)
    padded = np.zeros(n_ep * tb, dtype=hits.dtype)
    padded[: len(hits)] = hits
    return padded.reshape(n_ep, tb).any(axis=1)


def abstract_run(histories: Sequence[Sequence], attacked: Sequence[bool]) -> AbstractRun:
    """Map per-defender epoch records to meta states/actions and replay them.

    ``histories[j]`` is defender j's list of completed ``EpochRecord``s;
    ``attacked[e]`` flags adversarial collisions in epoch e.  Each recorded
    transition is checked against ``meta_step``.
    """
    n_ep = min(len(h) for h in histories)
    states, actions, mismatches = [], [], []
    for e in range(n_ep):
        recs = [h[e] for h in histories]
        states.append(epoch_state([r.phase for r in recs]))
        actions.append(epoch_action([r.restart for r in recs], bool(attacked[e]),
                                    [r.sufficient for r in recs]))
    for e in range(n_ep - 1):
        predicted = meta_step(states[e], actions[e])
        if predicted != states[e + 1]:
            mismatches.append((e, states[e], actions[e], predicted, states[e + 1]))
    return AbstractRun(states, actions, mismatches)


def check_conformance(histories, attacked) -> AbstractRun:
    run = abstract_run(histories, attacked)
    if run.mismatches:
        e, s, a, pred, obs = run.mismatches[0]
        raise ConformanceError(
            f"{len(run.mismatches)} mismatches; first at epoch {e}: "
            f"{s.name} --{a}--> expected {pred.name}, simulator gave {obs.name}")
    return run
