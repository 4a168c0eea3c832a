"""Experiment configuration, batch execution, aggregation and output files."""
from __future__ import annotations

import csv
import dataclasses
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional
from xml.sax.saxutils import escape

import numpy as np

from . import attack, baselines, defense
from .env import BanditInstance, InvalidActionError, RunTrace, simulate
from .metagame import AbstractRun, abstract_run, attacked_epochs

ALGOS = ("resync", "resync2", "mc", "sicmmab", "genie")
ATTACKERS = ("silent", "burst", "uniform", "mc", "sicmmab", "desync", "lowerbound")
MAX_REJECTIONS = 10_000


class ConfigError(ValueError):
    pass


class InfeasibleConfigError(ConfigError):
    pass


@dataclass
class ExperimentConfig:
    K: int = 10
    N: int = 5
    M: int = 0
    T: int = 100_000
    delta_floor: float = 0.05
    algo: str = "resync"
    attacker: str = "silent"
    t0: Optional[int] = None
    sensing: Optional[str] = None       # "nd" or "d"; default follows algo
    seed: int = 0
    runs: int = 20
    stride: int = 100
    burst_starts: tuple = (0, 50_000)
    burst_length: Optional[int] = None  # defaults to T0
    uniform_rounds: int = 5000
    budget: int = 10_000                # lower-bound attacker's C
    estimate_players: bool = False      # MC estimates the player count
    means: Optional[tuple] = None       # fixed instance instead of sampling
    distribution: str = "bernoulli"

    def __post_init__(self):
        if self.sensing is None:
            self.sensing = "d" if self.algo == "resync2" else "nd"
        self.burst_starts = tuple(int(s) for s in self.burst_starts)
        if self.means is not None:
            self.means = tuple(float(m) for m in self.means)

    @property
    def distinguishable(self) -> bool:
        return self.sensing == "d"

    def validate(self) -> "ExperimentConfig":
        if self.algo not in ALGOS:
            raise ConfigError(f"unknown algo {self.algo!r}; choose from {', '.join(ALGOS)}")
        if self.attacker not in ATTACKERS:
            raise ConfigError(f"unknown attacker {self.attacker!r}; choose from {', '.join(ATTACKERS)}")
        if self.sensing not in ("nd", "d"):
            raise ConfigError("sensing must be 'nd' or 'd'")
        if self.algo == "resync" and self.sensing != "nd":
            raise ConfigError("resync runs under non-distinguishable sensing (sensing = nd)")
        if self.algo == "resync2" and self.sensing != "d":
            raise ConfigError("resync2 needs distinguishable sensing (sensing = d)")
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if not 0 <= self.delta_floor < 1:
            raise ConfigError("delta_floor must lie in [0, 1)")
        if not 1 <= self.N <= self.K:
            raise ConfigError("need 1 <= N <= K")
        if self.M < 0 or self.T < 1 or self.stride < 1:
            raise ConfigError("need M >= 0, T >= 1, stride >= 1")
        if self.attacker != "silent" and self.M == 0:
            raise ConfigError(f"attacker {self.attacker!r} needs M >= 1")
        if self.attacker in ("sicmmab", "desync") and self.M != 1:
            raise ConfigError(f"attacker {self.attacker!r} is a single centralized attacker (M = 1)")
        if self.attacker == "burst" and self.M > self.K:
            raise ConfigError("burst attack needs M <= K")
        if self.t0 is not None and self.t0 < 1:
            raise ConfigError("t0 must be positive")
        if self.means is not None and len(self.means) != self.K:
            raise ConfigError("means must have K entries")
        return self


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}


def _parse_value(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    raw = raw.strip()
    if "Optional" in kind and raw.lower() in ("", "none"):
        return None
    if "bool" in kind:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if "tuple" in kind:
        return tuple(float(x) if key == "means" else int(float(x))
                     for x in raw.replace(",", " ").split())
    if "int" in kind:
        return int(float(raw))
    if "float" in kind:
        return float(raw)
    return raw


def parse_config_text(text: str) -> dict:
    """``key = value`` lines; ``#`` starts a comment; list values are space/comma separated."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            out[key] = _parse_value(key, raw)
        except ValueError as e:
            raise ConfigError(f"line {lineno}: bad value for {key}: {e}") from None
    return out


def load_config(path: Optional[str] = None, **overrides) -> ExperimentConfig:
    values = {}
    if path is not None:
        with open(path) as fh:
            values.update(parse_config_text(fh.read()))
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values).validate()


def sample_instance(config: ExperimentConfig, rng: np.random.Generator) -> BanditInstance:
    """Uniform means on [0, 1], redrawn as a whole until the gap clears the floor."""
    K, N = config.K, config.N
    if config.means is not None:
        return BanditInstance(config.means, N, config.M, config.T, config.distribution)
    for _ in range(MAX_REJECTIONS):
        mu = rng.random(K)
        if len(set(mu.tolist())) != K:
            continue
        s = np.sort(mu)[::-1]
        if N == K or s[N - 1] - s[N] >= config.delta_floor:
            return BanditInstance(tuple(mu.tolist()), N, config.M, config.T, config.distribution)
    raise InfeasibleConfigError(
        f"no instance with gap >= {config.delta_floor} after {MAX_REJECTIONS} draws (K={K}, N={N})")


def run_seeds(seed: int, run: int, n_players: int) -> dict:
    """Independent streams for one run.

    Run ``r`` of master seed ``s`` uses ``SeedSequence([s, r])``; its spawned
    children are, in order: instance, rewards, shared attacker choices, then
    one stream per player (defenders first).  Adding runs never changes the
    streams of existing runs.
    """
    ss = np.random.SeedSequence([seed, run])
    kids = [np.random.default_rng(c) for c in ss.spawn(3 + n_players)]
    return {"instance": kids[0], "env": kids[1], "team": kids[2], "players": kids[3:]}


def resolve_t0(config: ExperimentConfig, instance: BanditInstance) -> Optional[int]:
    if config.t0 is not None:
        return config.t0
    # with N == K (or K == 1) the gap is infinite; any positive value works
    gap = min(instance.gap, 1.0)
    if config.algo == "resync":
        return defense.compute_t0(config.K, config.T, gap)
    if config.algo == "resync2":
        return defense.compute_t0(config.K, config.T, gap, constant=16)
    if config.algo == "mc":
        return baselines.mc_t0(config.K, config.T, min(instance.min_gap, 1.0))
    return None


def build_defenders(config, instance, t0, rngs) -> list:
    K, N, T = config.K, config.N, config.T
    if config.algo == "resync":
        return defense.make_resync_team(N, K, t0)
    if config.algo == "resync2":
        return defense.make_resync2_team(N, K, T, t0, rngs)
    if config.algo == "mc":
        return [baselines.McDefender(K, N, t0, rngs[i], config.estimate_players) for i in range(N)]
    if config.algo == "sicmmab":
        return [baselines.SicMmabDefender(K, T, rngs[i]) for i in range(N)]
    return attack.pinned_team(instance)


def build_attackers(config, t0, team_rng, rngs) -> list:
    K, M, T = config.K, config.M, config.T
    kind = config.attacker
    if kind == "silent":
        return [attack.SilentAttacker() for _ in range(M)]
    if kind == "burst":
        length = config.burst_length if config.burst_length is not None else t0
        if length is None:
            raise ConfigError("burst attack needs burst_length when the defender has no T0")
        return attack.make_burst_team(M, K, [(s, length) for s in config.burst_starts], team_rng)
    if kind == "uniform":
        return [attack.UniformAttacker(K, config.uniform_rounds, rngs[i]) for i in range(M)]
    if kind == "mc":
        if t0 is None:
            raise ConfigError("mc attack needs T0 (set t0)")
        return [attack.McAttacker(K, T, t0, rngs[i]) for i in range(M)]
    if kind == "sicmmab":
        return [attack.SicMmabAttacker(K, T, rngs[0])]
    if kind == "desync":
        return [attack.SicMmabDesyncAttacker(K, T)]
    return [attack.LowerBoundAttacker(K, config.budget, rngs[i]) for i in range(M)]


@dataclass
class RunResult:
    index: int
    instance: BanditInstance
    t0: Optional[int]
    trace: Optional[RunTrace]
    faults: list = field(default_factory=list)
    conformance: Optional[AbstractRun] = None
    players: Optional[list] = None

    @property
    def ok(self) -> bool:
        return self.trace is not None


def _player_faults(players) -> list:
    out = []
    for j, p in enumerate(players):
        if getattr(p, "fault", None):
            out.append(f"player {j}: {p.fault}")
        if getattr(p, "orth_failed", False) or getattr(p, "init_failed", False):
            out.append(f"player {j}: initialization did not fix an arm")
    return out


def run_single(config: ExperimentConfig, run: int, keep_players: bool = False,
               record_actions: bool = False) -> RunResult:
    n_players = config.N + config.M
    streams = run_seeds(config.seed, run, n_players)
    instance = sample_instance(config, streams["instance"])
    t0 = resolve_t0(config, instance)
    prngs = streams["players"]
    defenders = build_defenders(config, instance, t0, prngs[: config.N])
    attackers = build_attackers(config, t0, streams["team"], prngs[config.N:])
    players = defenders + attackers
    result = RunResult(run, instance, t0, None, players=players if keep_players else None)
    try:
        result.trace = simulate(instance, players, streams["env"], config.distinguishable,
                                record_actions=record_actions)
    except (defense.ProtocolError, defense.InsufficientDataError, InvalidActionError) as e:
        result.faults.append(f"{type(e).__name__}: {e}")
        return result
    result.faults.extend(_player_faults(players))
    if config.algo == "resync":
        tb = defenders[0].tb
        result.conformance = abstract_run([d.history for d in defenders],
                                          attacked_epochs(result.trace, tb))
    return result


def _run_single_args(args):
    return run_single(*args)


@dataclass
class AggregateTrace:
    mean: np.ndarray
    std: np.ndarray
    attack_costs: list
    n_runs: int

    @property
    def final_mean(self) -> float:
        return float(self.mean[-1]) if len(self.mean) else 0.0


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    runs: list
    aggregate: AggregateTrace

    @property
    def faults(self) -> dict:
        return {r.index: r.faults for r in self.runs if r.faults}

    @property
    def mismatches(self) -> int:
        return sum(len(r.conformance.mismatches) for r in self.runs if r.conformance is not None)


def aggregate(runs) -> AggregateTrace:
    traces = [r.trace for r in runs if r.ok]
    if not traces:
        return AggregateTrace(np.zeros(0), np.zeros(0), [], 0)
    mat = np.vstack([t.cum_regret for t in traces])
    return AggregateTrace(mat.mean(axis=0), mat.std(axis=0),
                          [t.attack_cost for t in traces], len(traces))


def run_experiment(config: ExperimentConfig, workers: int = 1,
                   keep_players: bool = False) -> ExperimentResult:
    config.validate()
    jobs = [(config, r, keep_players) for r in range(config.runs)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            runs = list(ex.map(_run_single_args, jobs))
    else:
        runs = [_run_single_args(j) for j in jobs]
    runs.sort(key=lambda r: r.index)
    return ExperimentResult(config, runs, aggregate(runs))


# -- output ------------------------------------------------------------------

CSV_HEADER = ("run", "t", "cum_regret", "cum_attack_cost")


def _open_for_write(path):
    try:
        return open(path, "w", newline="")
    except OSError as e:
        raise OSError(f"cannot write {path}: {e.strerror or e}") from e


def emit_csv(runs, path, stride: int = 100) -> int:
    """One row per run per logged round ``t = stride, 2*stride, ...`` (1-based).

    Returns the number of data rows written.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    rows = 0
    with _open_for_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in runs:
            if r.trace is None:
                continue
            reg, cost = r.trace.cum_regret, r.trace.cum_attack_cost
            for t in range(stride, len(reg) + 1, stride):
                w.writerow((r.index, t, repr(float(reg[t - 1])), int(cost[t - 1])))
                rows += 1
    return rows


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def emit_svg(series: dict, path, title: str = "", stride: int = 100,
             width: int = 640, height: int = 400) -> None:
    """Line chart of mean cumulative regret with a mean +- std band per series."""
    pad_l, pad_r, pad_t, pad_b = 70, 20, 30, 45
    pw, ph = width - pad_l - pad_r, height - pad_t - pad_b
    pts = {}
    tmax, ymax = 1, 0.0
    for label, agg in series.items():
        n = len(agg.mean)
        if n == 0:
            continue
        idx = np.unique(np.r_[np.arange(stride - 1, n, stride), n - 1])
        t = idx + 1
        lo = agg.mean[idx] - agg.std[idx]
        hi = agg.mean[idx] + agg.std[idx]
        pts[label] = (t, agg.mean[idx], lo, hi)
        tmax = max(tmax, int(t[-1]))
        ymax = max(ymax, float(hi.max()))
    ymax = ymax if ymax > 0 else 1.0

    def sx(t):
        return pad_l + pw * t / tmax

    def sy(y):
        return pad_t + ph * (1 - y / ymax)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2:.1f}" y="18" text-anchor="middle">{escape(title)}</text>',
           f'<line x1="{pad_l}" y1="{pad_t + ph}" x2="{pad_l + pw}" y2="{pad_t + ph}" stroke="black"/>',
           f'<line x1="{pad_l}" y1="{pad_t}" x2="{pad_l}" y2="{pad_t + ph}" stroke="black"/>']
    for i in range(5):
        tv, yv = tmax * i / 4, ymax * i / 4
        out.append(f'<text x="{sx(tv):.1f}" y="{pad_t + ph + 16}" text-anchor="middle">{tv:.0f}</text>')
        out.append(f'<text x="{pad_l - 6}" y="{sy(yv) + 4:.1f}" text-anchor="end">{yv:.0f}</text>')
    out.append(f'<text x="{pad_l + pw / 2:.1f}" y="{height - 8}" text-anchor="middle">round t</text>')
    out.append(f'<text x="16" y="{pad_t + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {pad_t + ph / 2:.1f})">cumulative regret</text>')
    for i, (label, (t, m, lo, hi)) in enumerate(pts.items()):
        c = _COLORS[i % len(_COLORS)]
        band = [f"{sx(a):.1f},{sy(b):.1f}" for a, b in zip(t, hi)]
        band += [f"{sx(a):.1f},{sy(max(b, 0.0)):.1f}" for a, b in zip(t[::-1], lo[::-1])]
        out.append(f'<polygon points="{" ".join(band)}" fill="{c}" fill-opacity="0.2" stroke="none"/>')
        line = " ".join(f"{sx(a):.1f},{sy(b):.1f}" for a, b in zip(t, m))
        out.append(f'<polyline points="{line}" fill="none" stroke="{c}" stroke-width="1.5"/>')
        ly = pad_t + 14 + 16 * i
        out.append(f'<line x1="{pad_l + 10}" y1="{ly - 4}" x2="{pad_l + 30}" y2="{ly - 4}" '
                   f'stroke="{c}" stroke-width="2"/>')
        out.append(f'<text x="{pad_l + 36}" y="{ly}">{escape(str(label))}</text>')
    out.append("</svg>")
    with _open_for_write(path) as fh:
        fh.write("\n".join(out) + "\n")


# -- figure reproductions ----------------------------------------------------

FIGURES = {
    "fig3": dict(algos=("resync", "mc", "sicmmab"), M=0, attacker="silent", t0=3000,
                 title="No attackers (K=10, N=5)"),
    "fig4": dict(algos=("resync", "mc", "sicmmab"), M=2, attacker="burst", t0=3000,
                 title="Two burst attackers (K=10, N=5)"),
    "fig5": dict(algos=("resync2",), M=0, attacker="silent", t0=5000,
                 title="No attackers, distinguishable sensing (K=10, N=5)"),
    "fig6": dict(algos=("resync2",), M=4, attacker="uniform", t0=5000,
                 title="Four uniform attackers for 5000 rounds (K=10, N=5)"),
}

OMITTED_NOTE = "CDJ comparison curve omitted: that algorithm is not implemented here"


def figure_configs(name: str, runs: int = 20, seed: int = 0, T: int = 100_000) -> dict:
    if name not in FIGURES:
        raise ConfigError(f"unknown figure {name!r}; choose from {', '.join(FIGURES)}")
    f = FIGURES[name]
    out = {}
    for algo in f["algos"]:
        t0 = f["t0"] if algo in ("resync", "resync2", "mc") else None
        burst_length = f["t0"] if f["attacker"] == "burst" else None
        out[algo] = ExperimentConfig(K=10, N=5, M=f["M"], T=T, algo=algo, attacker=f["attacker"],
                                     t0=t0, seed=seed, runs=runs, burst_length=burst_length
                                     ).validate()
    return out


def repro(name: str, out_dir: str = ".", runs: int = 20, seed: int = 0, T: int = 100_000,
          workers: int = 1, stride: int = 100) -> dict:
    """Run one figure's experiments and write CSV per algorithm, one SVG, one JSON summary."""
    os.makedirs(out_dir, exist_ok=True)
    configs = figure_configs(name, runs, seed, T)
    results = {algo: run_experiment(cfg, workers) for algo, cfg in configs.items()}
    for algo, res in results.items():
        emit_csv(res.runs, os.path.join(out_dir, f"{name}_{algo}.csv"), stride)
    emit_svg({algo: res.aggregate for algo, res in results.items()},
             os.path.join(out_dir, f"{name}.svg"), FIGURES[name]["title"], stride)
    meta = {
        "figure": name,
        "runs": runs,
        "seed": seed,
        "horizon": T,
        "algorithms": {
            algo: {
                "final_regret_mean": res.aggregate.final_mean,
                "final_regret_std": float(res.aggregate.std[-1]) if res.aggregate.n_runs else None,
                "attack_cost_mean": float(np.mean(res.aggregate.attack_costs)) if res.aggregate.n_runs else None,
                "faulted_runs": len(res.faults),
                "conformance_mismatches": res.mismatches,
            }
            for algo, res in results.items()
        },
    }
    if name in ("fig5", "fig6"):
        meta["note"] = OMITTED_NOTE
    with _open_for_write(os.path.join(out_dir, f"{name}.json")) as fh:
        json.dump(meta, fh, indent=2)
    return results


def config_summary(config: ExperimentConfig) -> str:
    return " ".join(f"{k}={v}" for k, v in dataclasses.asdict(config).items() if v is not None)
