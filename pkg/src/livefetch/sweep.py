"""Monte-Carlo experiment harness: parameter sweeps over random scenarios.

A sweep varies one system parameter, draws a fresh population of random
scenarios for every sweep point from per-scenario seeded substreams (so
that points share scenario shapes and episode noise — paired comparisons),
and reports per-policy mean energies and prefetching gains.  The gain of a
policy is the ratio of the closed-form no-prefetch energy to the policy's
mean energy, averaged over scenarios, and is also reported in decibels.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, fields, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .model import Channel, FastGamma, Scenario, SlowFading, sample_gain, to_db
from .slow import (
    expected_fetch_energy_slow,
    no_prefetch_energy_slow,
    optimal_prefetch_slow,
    prefetch_gain_slow,
)
from .demand import build_xi_table
from .prefetch import (
    PrefetchPolicy,
    build_prefix_tables,
    no_prefetch_energy_fast,
    run_prefetch_batch,
)

__all__ = [
    "ConfigError",
    "SweepConfig",
    "SweepRow",
    "CSV_HEADER",
    "generate_scenario",
    "run_sweep",
    "gain_vs_shape",
    "emit_csv",
    "load_rows",
]

CSV_HEADER = ("param", "param_value", "policy", "mean_energy", "mean_energy_db",
              "stderr", "gain", "gain_db", "trials")

SWEEP_PARAMS = ("gamma", "L", "N", "Np", "k")

SLOW_POLICIES = ("slow-opt", "no-prefetch")
FAST_POLICIES = ("no-prefetch", "aggressive", "conservative", "noncausal")

_FAST_POLICY_MAP = {
    "no-prefetch": PrefetchPolicy.NO_PREFETCH,
    "aggressive": PrefetchPolicy.AGGRESSIVE,
    "conservative": PrefetchPolicy.CONSERVATIVE,
    "noncausal": PrefetchPolicy.NONCAUSAL_ORACLE,
}

# Seed-stream tags: scenario shapes, episode gains, task realizations.
_TAG_SCENARIO = 11
_TAG_GAINS = 22
_TAG_TASKS = 33


class ConfigError(ValueError):
    """Invalid sweep configuration or config file."""


@dataclass(frozen=True)
class SweepConfig:
    """Declarative description of one sweep.

    ``param`` selects the swept quantity (total data ``gamma``, task count
    ``L``, deadline ``N``, prefetch window ``Np`` or the fast-fading shape
    ``k``); all other fields hold the fixed baseline.
    """

    param: str
    values: tuple
    policies: tuple
    fading: str = "slow"
    m: int = 2
    k: int = 2
    slow_g: float = 1.0
    gamma_total: float = 20.0
    L: int = 4
    N: int = 5
    N_P: int = 4
    lam: float = 1.0
    trials: int = 10_000
    scenarios: int = 100
    seed: int = 0
    uniform: bool = False

    def __post_init__(self):
        if self.param not in SWEEP_PARAMS:
            raise ConfigError(f"param must be one of {SWEEP_PARAMS}, got {self.param!r}")
        if self.fading not in ("slow", "fast"):
            raise ConfigError(f"fading must be 'slow' or 'fast', got {self.fading!r}")
        if not self.values:
            raise ConfigError("values must be nonempty")
        values = tuple(float(v) for v in self.values)
        if self.param in ("L", "N", "Np", "k"):
            if any(v != int(v) or v < 1 for v in values):
                raise ConfigError(f"{self.param} values must be positive integers")
        if self.param == "k" and (self.fading != "fast" or any(v < 2 for v in values)):
            raise ConfigError("a k sweep requires fast fading and k >= 2")
        if self.param == "gamma" and any(v <= 0 for v in values):
            raise ConfigError("gamma values must be strictly positive")
        object.__setattr__(self, "values", values)
        policies = tuple(self.policies)
        allowed = SLOW_POLICIES if self.fading == "slow" else FAST_POLICIES
        unknown = [p for p in policies if p not in allowed]
        if not policies or unknown:
            raise ConfigError(
                f"policies for {self.fading} fading must be a nonempty subset of "
                f"{allowed}, got {policies!r}")
        object.__setattr__(self, "policies", policies)
        if not isinstance(self.m, int) or not 2 <= self.m <= 5:
            raise ConfigError(f"m must be an integer in [2, 5], got {self.m!r}")
        if not isinstance(self.k, int) or self.k < 2:
            raise ConfigError(f"k must be an integer >= 2, got {self.k!r}")
        if self.slow_g <= 0 or self.gamma_total <= 0 or self.lam <= 0:
            raise ConfigError("slow_g, gamma_total and lam must be strictly positive")
        if self.trials < 1 or self.scenarios < 1:
            raise ConfigError("trials and scenarios must be at least 1")
        for value in values:
            self._dims(value)  # raises ConfigError on inconsistent geometry

    def _dims(self, value: float) -> dict:
        dims = {"L": self.L, "N": self.N, "N_P": self.N_P,
                "gamma_total": self.gamma_total, "k": self.k}
        key = {"gamma": "gamma_total", "Np": "N_P"}.get(self.param, self.param)
        dims[key] = value if key == "gamma_total" else int(value)
        if not 1 <= dims["N_P"] <= dims["N"]:
            raise ConfigError(
                f"sweep point {self.param}={value} breaks 1 <= N_P <= N "
                f"(N_P={dims['N_P']}, N={dims['N']})")
        if dims["N"] == dims["N_P"] and set(self.policies) != {"slow-opt"}:
            raise ConfigError(
                f"sweep point {self.param}={value} leaves no demand phase; "
                "only the slow-opt policy is defined there")
        if dims["L"] < 1:
            raise ConfigError(f"sweep point L={dims['L']} is invalid")
        return dims


@dataclass(frozen=True)
class SweepRow:
    """One aggregated line of a sweep: a (sweep point, policy) pair."""

    param: str
    param_value: float
    policy: str
    mean_energy: float
    mean_energy_db: float
    stderr: float
    gain: float
    gain_db: float
    trials: int


def generate_scenario(rng: np.random.Generator, L: int, gamma_total: float,
                      m: int, N: int, N_P: int, lam: float = 1.0,
                      uniform: bool = False) -> Scenario:
    """Draw a random scenario: normalized uniform probabilities and sizes.

    Task probabilities are i.i.d. uniforms normalized to sum to one, data
    sizes i.i.d. uniforms scaled to sum to ``gamma_total``; ``uniform=True``
    forces the equal-task special case instead.
    """
    if uniform:
        p = np.full(L, 1.0 / L)
        gamma = np.full(L, gamma_total / L)
    else:
        p = _positive_uniforms(rng, L)
        p = p / p.sum()
        gamma = _positive_uniforms(rng, L)
        gamma = gamma * (gamma_total / gamma.sum())
    return Scenario(m=m, N=N, N_P=N_P, p=p, gamma=gamma, lam=lam)


def _positive_uniforms(rng: np.random.Generator, n: int) -> np.ndarray:
    draw = rng.random(n)
    while np.any(draw <= 1e-9):  # pragma: no cover - vanishing probability
        draw = rng.random(n)
    return draw


def _aggregate(cfg: SweepConfig, value: float, policy: str,
               energies: Sequence[float], gains: Sequence[float],
               episodes: int) -> SweepRow:
    energies = np.asarray(energies, dtype=float)
    gains = np.asarray(gains, dtype=float)
    mean_energy = float(energies.mean())
    stderr = float(energies.std(ddof=1) / np.sqrt(energies.size)) if energies.size > 1 else 0.0
    gain = float(gains.mean())
    return SweepRow(param=cfg.param, param_value=float(value), policy=policy,
                    mean_energy=mean_energy, mean_energy_db=to_db(mean_energy),
                    stderr=stderr, gain=gain, gain_db=to_db(gain),
                    trials=episodes)


def _scenario_rng(cfg: SweepConfig, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((cfg.seed, _TAG_SCENARIO, index)))


def run_sweep(cfg: SweepConfig) -> list:
    """Execute a sweep and return one row per (sweep point, policy).

    Scenario substreams are keyed by the scenario index alone, so every
    sweep point sees the same family of random shapes; fast-fading episodes
    likewise share gain and task-realization draws across points and
    policies (paired sampling).  Slow-fading rows are fully closed-form
    (zero episodes); fast-fading rows run ``cfg.trials`` episodes per
    scenario.  Rows come back sorted by (sweep value, policy name).
    """
    rows = []
    for value in cfg.values:
        dims = cfg._dims(value)
        per_policy_energy = {pol: [] for pol in cfg.policies}
        per_policy_gain = {pol: [] for pol in cfg.policies}
        for index in range(cfg.scenarios):
            s = generate_scenario(_scenario_rng(cfg, index), L=dims["L"],
                                  gamma_total=dims["gamma_total"], m=cfg.m,
                                  N=dims["N"], N_P=dims["N_P"], lam=cfg.lam,
                                  uniform=cfg.uniform)
            if cfg.fading == "slow":
                _accumulate_slow(cfg, s, per_policy_energy, per_policy_gain)
            else:
                _accumulate_fast(cfg, s, dims, index,
                                 per_policy_energy, per_policy_gain)
        episodes = 0 if cfg.fading == "slow" else cfg.trials
        for policy in cfg.policies:
            rows.append(_aggregate(cfg, value, policy,
                                   per_policy_energy[policy],
                                   per_policy_gain[policy], episodes))
    rows.sort(key=lambda row: (row.param_value, row.policy))
    return rows


def _accumulate_slow(cfg: SweepConfig, s: Scenario, energies: dict, gains: dict):
    g = cfg.slow_g
    if s.N > s.N_P:
        base = no_prefetch_energy_slow(s, g)
    for policy in cfg.policies:
        if policy == "slow-opt":
            plan = optimal_prefetch_slow(s)
            energy = expected_fetch_energy_slow(s, g, plan)
        else:
            energy = base
        energies[policy].append(energy)
        gains[policy].append(base / energy if s.N > s.N_P else 1.0)


def _accumulate_fast(cfg: SweepConfig, s: Scenario, dims: dict, index: int,
                     energies: dict, gains: dict):
    channel = FastGamma(dims["k"])
    xi = build_xi_table(channel, s.m, s.N - s.N_P)
    prefix_tables = build_prefix_tables(s, channel, xi)
    base = no_prefetch_energy_fast(s, xi)
    gain_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, _TAG_GAINS, index)))
    task_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, _TAG_TASKS, index)))
    gains_draw = sample_gain(channel, gain_rng, (cfg.trials, s.N))
    realized = task_rng.choice(s.L, size=cfg.trials, p=s.p)
    for policy in cfg.policies:
        batch = run_prefetch_batch(s, channel, _FAST_POLICY_MAP[policy],
                                   gains_draw, realized, xi=xi,
                                   prefix_tables=prefix_tables)
        energy = float(batch.total_energy.mean())
        energies[policy].append(energy)
        gains[policy].append(base / energy)


def gain_vs_shape(cfg: SweepConfig) -> list:
    """Prefetching gain versus the fast-fading shape parameter.

    For each ``k`` the optimal (noncausal) policy is simulated per scenario
    and its gain reported under the ``fast-optimal`` label; a slow-fading
    reference line at the same scenarios (``slow-opt``, constant across
    ``k``) is emitted alongside.  Episodes are paired across ``k`` by
    common random numbers: a unit-mean Gamma(k) gain is the mean of ``k``
    unit exponentials, so one exponential draw per (episode, slot) feeds
    every sweep point through nested partial sums, making the gain curve
    smooth in ``k``.
    """
    if cfg.param != "k" or cfg.fading != "fast":
        raise ConfigError("gain_vs_shape requires a fast-fading k sweep")
    k_values = [int(v) for v in cfg.values]
    k_max = max(k_values)
    rows = []
    slow_e, slow_g_ratio = [], []
    fast_e = {k: [] for k in k_values}
    fast_g = {k: [] for k in k_values}
    for index in range(cfg.scenarios):
        s = generate_scenario(_scenario_rng(cfg, index), L=cfg.L,
                              gamma_total=cfg.gamma_total, m=cfg.m,
                              N=cfg.N, N_P=cfg.N_P, lam=cfg.lam,
                              uniform=cfg.uniform)
        plan = optimal_prefetch_slow(s)
        slow_e.append(expected_fetch_energy_slow(s, cfg.slow_g, plan))
        slow_g_ratio.append(prefetch_gain_slow(s, cfg.slow_g))
        gain_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, _TAG_GAINS, index)))
        task_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, _TAG_TASKS, index)))
        partial_sums = np.cumsum(gain_rng.exponential(size=(cfg.trials, s.N, k_max)),
                                 axis=2)
        realized = task_rng.choice(s.L, size=cfg.trials, p=s.p)
        for k in k_values:
            channel = FastGamma(k)
            xi = build_xi_table(channel, s.m, s.N - s.N_P)
            prefix_tables = build_prefix_tables(s, channel, xi)
            gains_draw = partial_sums[:, :, k - 1] / k
            batch = run_prefetch_batch(s, channel,
                                       PrefetchPolicy.NONCAUSAL_ORACLE,
                                       gains_draw, realized, xi=xi,
                                       prefix_tables=prefix_tables)
            energy = float(batch.total_energy.mean())
            fast_e[k].append(energy)
            fast_g[k].append(no_prefetch_energy_fast(s, xi) / energy)
    for value in cfg.values:
        k = int(value)
        rows.append(_aggregate(cfg, value, "fast-optimal", fast_e[k], fast_g[k],
                               cfg.trials))
        rows.append(_aggregate(cfg, value, "slow-opt", slow_e, slow_g_ratio, 0))
    rows.sort(key=lambda row: (row.param_value, row.policy))
    return rows


def emit_csv(rows: Iterable[SweepRow], dest) -> None:
    """Write rows to a path or text file object using round-trip floats."""
    own = isinstance(dest, (str, bytes)) or hasattr(dest, "__fspath__")
    handle = open(dest, "w", newline="", encoding="utf-8") if own else dest
    try:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in rows:
            writer.writerow([
                row.param, repr(float(row.param_value)), row.policy,
                repr(float(row.mean_energy)), repr(float(row.mean_energy_db)),
                repr(float(row.stderr)), repr(float(row.gain)),
                repr(float(row.gain_db)), int(row.trials),
            ])
    finally:
        if own:
            handle.close()


def load_rows(src) -> list:
    """Parse a CSV produced by :func:`emit_csv` back into rows (exactly)."""
    own = isinstance(src, (str, bytes)) or hasattr(src, "__fspath__")
    handle = open(src, "r", newline="") if own else src
    try:
        reader = csv.reader(handle)
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise ConfigError(f"unexpected CSV header: {header!r}")
        rows = []
        for record in reader:
            if not record:
                continue
            rows.append(SweepRow(
                param=record[0], param_value=float(record[1]), policy=record[2],
                mean_energy=float(record[3]), mean_energy_db=float(record[4]),
                stderr=float(record[5]), gain=float(record[6]),
                gain_db=float(record[7]), trials=int(record[8])))
        return rows
    finally:
        if own:
            handle.close()
