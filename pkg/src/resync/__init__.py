"""Multi-player bandits with adversarial collisions: environment, defenders, attacks."""
from .env import BanditInstance, RoundFeedback, RunTrace, resolve_round, simulate
from .defense import ResyncDefender, Resync2Defender, compute_t0, build_opt

__all__ = [
    "BanditInstance", "RoundFeedback", "RunTrace", "resolve_round", "simulate",
    "ResyncDefender", "Resync2Defender", "compute_t0", "build_opt",
]
