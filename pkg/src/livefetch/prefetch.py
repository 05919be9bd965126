"""Threshold-based live prefetching under fast fading.

During the ``N_P`` prefetch slots the device observes the current gain and
decides how many bits of each candidate task to push.  The optimal causal
policy is a soft water-filling: task ``l`` receives

    s_n(l) = [rho_n(l) - eta_n * p(l)**(-1/(m-1))]+

where ``rho_n`` are the residual bits and the threshold ``eta_n`` depends on
the gain, the slot and a second family of backward coefficients ``zeta``
(one table per candidate target set ``S``).  The closed-form threshold
expressions assume every member of ``S`` is interior (strictly positive
decision); the episode runners therefore work from the stage-optimal *slot
total* and recover the threshold with an active-prefix solve, which
coincides with the closed forms whenever all members are active and handles
the early slots in which low-priority members are still clamped at zero.

The exact final-slot threshold is only computable noncausally ahead of
time; two causal estimators (an optimistic and a pessimistic one) bracket
typical behaviour and feed a set-growth heuristic executed every slot.
Episode simulation comes in two equivalent flavours: a readable scalar
runner built from the public per-slot operations, and a vectorized batch
runner used by the Monte-Carlo harness.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .model import (
    POSITIVE_BITS_EPS,
    Channel,
    Scenario,
    SlowFading,
    expect_over_gain,
    sample_gain,
)
from .demand import DemandTrace, XiTable, build_xi_table, simulate_demand_episode
from .slow import priorities, priority_order

__all__ = [
    "PrefetchPolicy",
    "ZetaTable",
    "EpisodeState",
    "EpisodeTrace",
    "BatchResult",
    "build_zeta_table",
    "build_prefix_tables",
    "threshold_eta",
    "decision_vector",
    "noncausal_final_threshold",
    "alpha_from_final_threshold",
    "estimate_threshold",
    "approximate_task_set",
    "select_noncausal_set",
    "expected_total_energy_fast",
    "no_prefetch_energy_fast",
    "best_prefix_set",
    "run_prefetch_episode",
    "run_prefetch_batch",
]


class PrefetchPolicy(enum.Enum):
    """Prefetch-phase behaviours available to the episode runners."""

    AGGRESSIVE = "aggressive"          #: causal, optimistic final-threshold estimate
    CONSERVATIVE = "conservative"      #: causal, pessimistic final-threshold estimate
    NONCAUSAL_ORACLE = "noncausal"     #: sees all prefetch-phase gains upfront
    NO_PREFETCH = "no-prefetch"        #: skips the prefetch phase entirely


@dataclass(frozen=True)
class ZetaTable:
    """Backward coefficients of the prefetch phase for one target set.

    ``value(j)`` is the coefficient with ``j`` slots remaining before the
    deadline, tabulated for ``j = N-N_P+1 .. N`` (the prefetch phase);
    ``u(j)`` caches ``(1/value(j))**(1/(m-1))``.  The boundary entry couples
    into the demand table through the set's inverse-probability mass
    ``A = sum_S p**(-1/(m-1))``.
    """

    task_set: tuple
    channel: Channel
    m: int
    first_index: int
    zeta: tuple
    inv_root: tuple
    inv_prob_mass: float
    xi: XiTable

    @property
    def last_index(self) -> int:
        return self.first_index + len(self.zeta) - 1

    def value(self, slots_to_deadline: int) -> float:
        if not self.first_index <= slots_to_deadline <= self.last_index:
            raise ValueError(
                f"zeta index {slots_to_deadline} outside [{self.first_index}, {self.last_index}]")
        return self.zeta[slots_to_deadline - self.first_index]

    def u(self, slots_to_deadline: int) -> float:
        if not self.first_index <= slots_to_deadline <= self.last_index:
            raise ValueError(
                f"zeta index {slots_to_deadline} outside [{self.first_index}, {self.last_index}]")
        return self.inv_root[slots_to_deadline - self.first_index]


def build_zeta_table(s: Scenario, channel: Channel, task_set: Iterable[int],
                     xi: XiTable) -> ZetaTable:
    """Tabulate the prefetch coefficients for a candidate target set.

    The recursion runs upward in slots-to-deadline ``j``; the boundary entry
    (``j = N - N_P + 1``, the final prefetch slot) couples into the demand
    coefficients through the set's inverse-probability mass,

        zeta = E[ (g**(1/(m-1)) + u_xi * A)**-(m-1) ],
        u_xi = (1/xi[N-N_P])**(1/(m-1)),  A = sum_S p**(-1/(m-1)),

    and deeper entries reuse the demand-style recursion with the previous
    zeta in place of xi.
    """
    members = tuple(sorted({int(i) for i in task_set}))
    if not members:
        raise ValueError("task_set must be nonempty")
    if members[0] < 0 or members[-1] >= s.L:
        raise IndexError(f"task indices {members} out of range for L={s.L}")
    if s.N == s.N_P:
        raise ValueError("zeta coefficients require a demand phase (N > N_P)")
    d = s.N - s.N_P
    if xi.horizon < d or xi.m != s.m or xi.channel != channel:
        raise ValueError("xi table does not match the scenario/channel")
    root = 1.0 / (s.m - 1)
    mass = float(np.sum(s.p[list(members)] ** (-root)))
    u_prev = xi.inv_root[d] * mass
    zeta = []
    inv_root = []
    for _ in range(d + 1, s.N + 1):
        value = expect_over_gain(
            lambda x: (x ** root + u_prev) ** (-(s.m - 1)), channel)
        zeta.append(value)
        inv_root.append((1.0 / value) ** root)
        u_prev = inv_root[-1]
    return ZetaTable(task_set=members, channel=channel, m=s.m, first_index=d + 1,
                     zeta=tuple(zeta), inv_root=tuple(inv_root),
                     inv_prob_mass=mass, xi=xi)


def build_prefix_tables(s: Scenario, channel: Channel, xi: XiTable) -> list:
    """Zeta tables for every priority-ordered prefix (sizes 1..L)."""
    order = priority_order(s)
    return [build_zeta_table(s, channel, order[:k], xi) for k in range(1, s.L + 1)]


@dataclass
class EpisodeState:
    """Mutable per-episode bookkeeping carried across prefetch slots.

    ``slot`` is 1-based; ``rho`` holds the residual bits per task;
    ``approx_set`` is the causal estimators' working set (the tasks that
    received strictly positive bits in the previous slot); and
    ``threshold_history`` collects the realized thresholds.
    """

    slot: int
    rho: np.ndarray
    approx_set: frozenset = frozenset()
    threshold_history: list = field(default_factory=list)


def _check_state(state: EpisodeState, s: Scenario):
    if not 1 <= state.slot <= s.N_P:
        raise ValueError(f"slot {state.slot} outside the prefetch phase 1..{s.N_P}")
    if state.rho.shape != s.gamma.shape:
        raise ValueError("state.rho must have one entry per candidate task")
    if np.any(state.rho < -POSITIVE_BITS_EPS):
        raise ValueError("residual bits must be nonnegative")


def _members_array(s: Scenario, task_set) -> np.ndarray:
    members = sorted({int(i) for i in task_set})
    if not members:
        raise ValueError("task_set must be nonempty")
    if members[0] < 0 or members[-1] >= s.L:
        raise IndexError(f"task indices {members} out of range for L={s.L}")
    return np.array(members, dtype=int)


def threshold_eta(state: EpisodeState, g: float, s: Scenario, task_set,
                  zeta: ZetaTable, xi: XiTable) -> float:
    """Closed-form prefetch threshold at the current slot, given the set.

    Before the final prefetch slot the continuation runs through the zeta
    coefficient at ``N - n`` slots-to-deadline; at the final prefetch slot
    (``n == N_P``) it couples directly into the demand table:

        n < N_P:  eta = sum_S rho * u_z / ((g**(1/(m-1)) + u_z) * A)
        n == N_P: eta = sum_S rho * u_xi / (g**(1/(m-1)) + u_xi * A).

    Exact while every member of the set is interior (strictly positive
    decision); the episode runners switch to an active-prefix solve when
    that fails.
    """
    _check_state(state, s)
    if not (np.isfinite(g) and g > 0.0):
        raise ValueError(f"channel gain must be strictly positive, got {g!r}")
    idx = _members_array(s, task_set)
    root = 1.0 / (s.m - 1)
    mass = float(np.sum(s.p[idx] ** (-root)))
    residual = float(np.sum(state.rho[idx]))
    u_g = g ** root
    if state.slot < s.N_P:
        u_z = zeta.u(s.N - state.slot)
        return residual * u_z / ((u_g + u_z) * mass)
    u_xi = xi.inv_root[s.N - s.N_P]
    return residual * u_xi / (u_g + u_xi * mass)


def decision_vector(state: EpisodeState, eta: float, s: Scenario) -> np.ndarray:
    """Per-task bits to prefetch this slot under threshold ``eta``.

    Applies ``[rho - eta * p**(-1/(m-1))]+`` to *every* task; tasks whose
    priority falls below the threshold get zero on their own.  Decisions
    never exceed the residual.
    """
    _check_state(state, s)
    if eta < 0.0 or not np.isfinite(eta):
        raise ValueError(f"threshold must be nonnegative and finite, got {eta!r}")
    w = s.p ** (-1.0 / (s.m - 1))
    return np.clip(state.rho - eta * w, 0.0, np.maximum(state.rho, 0.0))


def _solve_slot_threshold(rho: np.ndarray, w: np.ndarray, total: float) -> float:
    """Threshold ``eta`` with ``sum([rho - eta*w]+) == total`` (members only).

    Piecewise-linear water-filling: scan prefixes in descending ``rho/w``
    until the implied threshold clears the next member's ratio.  Requires
    ``0 <= total <= sum(rho)``; the result is nonnegative.
    """
    ratios = rho / w
    order = np.argsort(-ratios)
    cum_rho = np.cumsum(rho[order])
    cum_w = np.cumsum(w[order])
    sorted_ratios = ratios[order]
    for j in range(order.size):
        eta = (cum_rho[j] - total) / cum_w[j]
        if j + 1 == order.size or eta >= sorted_ratios[j + 1]:
            return max(eta, 0.0)
    return 0.0  # pragma: no cover - loop always returns


def _solve_final_threshold(rho: np.ndarray, w: np.ndarray, c0: float) -> float:
    """Threshold ``eta`` with ``sum([rho - eta*w]+) == eta * c0``.

    The final prefetch slot's stage problem is exactly separable, so its
    box-constrained optimum is this piecewise-linear fixed point with
    ``c0 = (g * xi_d)**(1/(m-1))``; when every member stays active it equals
    the closed-form threshold.
    """
    ratios = rho / w
    order = np.argsort(-ratios)
    cum_rho = np.cumsum(rho[order])
    cum_w = np.cumsum(w[order])
    sorted_ratios = ratios[order]
    for j in range(order.size):
        eta = cum_rho[j] / (cum_w[j] + c0)
        if j + 1 == order.size or eta >= sorted_ratios[j + 1]:
            return eta
    return 0.0  # pragma: no cover - loop always returns


def noncausal_final_threshold(state: EpisodeState, future_gains, s: Scenario,
                              task_set, zeta: ZetaTable, xi: XiTable) -> float:
    """Final-slot threshold computed with the remaining gains revealed.

    Given the gains of slots ``n..N_P``, the threshold the policy will end
    up applying in slot ``N_P`` is a cascade: the exact final-slot formula
    evaluated at the current residuals, damped once per intermediate slot by
    the fraction of the target-set residual that survives it,

        eta_NP = sum_S rho_n * u_xi / (u_g(N_P) + u_xi * A)
                 * prod_{k=n}^{N_P-1} u_z(N-k) / (u_g(k) + u_z(N-k)).

    At ``n == N_P`` the product is empty and this is the exact threshold.
    """
    _check_state(state, s)
    gains = np.asarray(future_gains, dtype=float)
    expected = s.N_P - state.slot + 1
    if gains.ndim != 1 or gains.size != expected:
        raise ValueError(f"need gains for slots {state.slot}..{s.N_P} ({expected} values)")
    if np.any(gains <= 0.0):
        raise ValueError("all gains must be strictly positive")
    idx = _members_array(s, task_set)
    root = 1.0 / (s.m - 1)
    mass = float(np.sum(s.p[idx] ** (-root)))
    residual = float(np.sum(state.rho[idx]))
    u_xi = xi.inv_root[s.N - s.N_P]
    value = residual * u_xi / (gains[-1] ** root + u_xi * mass)
    for offset, k in enumerate(range(state.slot, s.N_P)):
        u_z = zeta.u(s.N - k)
        value *= u_z / (gains[offset] ** root + u_z)
    return value


def alpha_from_final_threshold(s: Scenario, eta_final: float) -> np.ndarray:
    """Total bits each task ends up prefetching over the whole phase.

    The slot thresholds telescope, so only the final one matters:
    ``alpha = [gamma - eta_final * p**(-1/(m-1))]+``.
    """
    if eta_final < 0.0 or not np.isfinite(eta_final):
        raise ValueError(f"threshold must be nonnegative and finite, got {eta_final!r}")
    w = s.p ** (-1.0 / (s.m - 1))
    return np.maximum(s.gamma - eta_final * w, 0.0)


def estimate_threshold(state: EpisodeState, g: float, s: Scenario, task_set,
                       zeta: ZetaTable, xi: XiTable,
                       kind: PrefetchPolicy) -> float:
    """Causal estimate of the final-slot threshold from the current slot.

    The aggressive variant assumes the future damping factors cancel against
    the mass normalization (they do exactly under a mean-gain substitution),
    the conservative variant assumes future slots contribute nothing:

        aggressive:   sum_S rho * u_xi / (u_g + u_z(N-n))
        conservative: sum_S rho * u_z(N-n) / ((u_g + u_z(N-n)) * A).

    Both reduce to the exact threshold at ``n == N_P``.
    """
    _check_state(state, s)
    if kind not in (PrefetchPolicy.AGGRESSIVE, PrefetchPolicy.CONSERVATIVE):
        raise ValueError(f"estimator kind must be aggressive or conservative, got {kind!r}")
    if not (np.isfinite(g) and g > 0.0):
        raise ValueError(f"channel gain must be strictly positive, got {g!r}")
    if state.slot == s.N_P:
        return threshold_eta(state, g, s, task_set, zeta, xi)
    idx = _members_array(s, task_set)
    root = 1.0 / (s.m - 1)
    mass = float(np.sum(s.p[idx] ** (-root)))
    residual = float(np.sum(state.rho[idx]))
    u_g = g ** root
    u_z = zeta.u(s.N - state.slot)
    if kind is PrefetchPolicy.AGGRESSIVE:
        return residual * xi.inv_root[s.N - s.N_P] / (u_g + u_z)
    return residual * u_z / ((u_g + u_z) * mass)


def approximate_task_set(state: EpisodeState, g: float, kind: PrefetchPolicy,
                         s: Scenario, channel: Channel, xi: XiTable,
                         prefix_tables: Optional[Sequence[ZetaTable]] = None) -> frozenset:
    """Causal working-set estimate for the current slot.

    Starts from the tasks that got positive bits in the previous slot
    (``state.approx_set``, empty in slot 1, recanonicalized to a
    priority-ordered prefix of the same size) and grows the prefix while the
    estimated final threshold admits more tasks than the prefix holds: for
    each size the estimated ``eta`` implies phase totals
    ``[gamma - eta * p**(-1/(m-1))]+`` whose positive count must match the
    prefix size.  Never shrinks within a slot; shrinking happens across
    slots through the positive-decision reinitialization.
    """
    _check_state(state, s)
    if prefix_tables is None:
        prefix_tables = build_prefix_tables(s, channel, xi)
    order = priority_order(s)
    w = s.p ** (-1.0 / (s.m - 1))
    k = len(state.approx_set)
    while k < s.L:
        if k == 0:
            eta_hat = 0.0
        else:
            eta_hat = estimate_threshold(state, g, s, order[:k],
                                         prefix_tables[k - 1], xi, kind)
        alpha = s.gamma - eta_hat * w
        if int(np.count_nonzero(alpha > POSITIVE_BITS_EPS)) == k:
            break
        k += 1
    return frozenset(order[:k])


def _prefix_energy_predictions(s: Scenario, gains: np.ndarray,
                               prefix_tables, xi: XiTable) -> np.ndarray:
    """``(episodes, L)`` predicted stage energies of locked priority prefixes.

    Each prefix is executed deterministically against the revealed
    prefetch-phase gains (``gains`` has shape ``(episodes, N_P)``) with the
    stage-total water-filling used by the episode runners, and scored by the
    realized prefetch energy plus the expected demand energy of the final
    residuals.  Shared by the scalar and batch noncausal selections so both
    pick identical sets.
    """
    episodes = gains.shape[0]
    d = s.N - s.N_P
    root = 1.0 / (s.m - 1)
    order = np.array(priority_order(s))
    gam = s.gamma[order]
    prob = s.p[order]
    w = prob ** (-root)
    u_xi = xi.inv_root[d]
    u_gain = gains ** root
    column = np.arange(s.L)
    predicted = np.empty((episodes, s.L))
    for k in range(1, s.L + 1):
        member = np.broadcast_to(column < k, (episodes, s.L))
        rho = np.tile(gam, (episodes, 1))
        energy = np.zeros(episodes)
        for n in range(1, s.N_P + 1):
            u_g = u_gain[:, n - 1]
            if n == s.N_P:
                eta = _solve_final_threshold_batch(rho, w, member, u_g / u_xi)
            else:
                residual = rho[:, :k].sum(axis=1)
                u_c = prefix_tables[k - 1].u(s.N - n)
                total = residual * u_g / (u_g + u_c)
                eta = _solve_slot_threshold_batch(rho, w, member, total)
            bits = np.where(member,
                            np.maximum(rho - eta[:, None] * w[None, :], 0.0),
                            0.0)
            energy += s.lam * bits.sum(axis=1) ** s.m / gains[:, n - 1]
            rho = rho - bits
        energy += s.lam * xi.xi[d] * (prob[None, :] * rho ** s.m).sum(axis=1)
        predicted[:, k - 1] = energy
    return predicted


def select_noncausal_set(s: Scenario, prefetch_gains, prefix_tables, xi: XiTable) -> int:
    """Size of the target prefix chosen with all prefetch gains revealed.

    Searches the priority-ordered prefixes: each candidate set is executed
    deterministically against the revealed gains and scored by realized
    prefetch energy plus the expected demand energy of its residuals; the
    smallest best-scoring size wins.
    """
    gains = np.asarray(prefetch_gains, dtype=float)
    if gains.ndim != 1 or gains.size != s.N_P:
        raise ValueError(f"need the {s.N_P} prefetch-phase gains")
    if np.any(gains <= 0.0):
        raise ValueError("all gains must be strictly positive")
    predicted = _prefix_energy_predictions(s, gains[None, :], prefix_tables, xi)
    return int(np.argmin(predicted[0])) + 1


def expected_total_energy_fast(s: Scenario, task_set,
                               zeta: Optional[ZetaTable] = None,
                               xi: Optional[XiTable] = None) -> float:
    """Expected stage energy of the threshold policy locked to a target set.

        lam * (sum_S gamma)**m * zeta_N(S)
            + lam * xi[N-N_P] * sum_{l not in S} p(l) * gamma(l)**m.

    Tasks outside the set are fetched purely on demand.  With an empty set
    this is the pure no-prefetch energy (pass ``xi`` explicitly then).
    """
    members = sorted({int(i) for i in task_set})
    if members and (members[0] < 0 or members[-1] >= s.L):
        raise IndexError(f"task indices {members} out of range for L={s.L}")
    if members:
        if zeta is None:
            raise ValueError("a zeta table for the target set is required")
        if tuple(members) != zeta.task_set:
            raise ValueError("zeta table was built for a different target set")
        xi = zeta.xi
    if xi is None:
        raise ValueError("an xi table is required when the target set is empty")
    d = s.N - s.N_P
    outside = np.setdiff1d(np.arange(s.L), np.array(members, dtype=int))
    demand = float(np.sum(s.p[outside] * s.gamma[outside] ** s.m)) if outside.size else 0.0
    energy = s.lam * xi.xi[d] * demand
    if members:
        prefetched = float(np.sum(s.gamma[members]))
        energy += s.lam * prefetched ** s.m * zeta.value(s.N)
    return energy


def no_prefetch_energy_fast(s: Scenario, xi: XiTable) -> float:
    """Expected stage energy when all fetching waits for the demand phase."""
    return expected_total_energy_fast(s, (), xi=xi)


def best_prefix_set(s: Scenario, channel: Channel, xi: XiTable,
                    exhaustive: bool = False) -> tuple:
    """Minimize the locked-set energy *formula* over candidate target sets.

    Searches the priority-ordered prefixes (plus the empty set); with
    ``exhaustive=True`` every subset is scanned instead (debugging aid,
    L <= 10).  Returns ``(task_set, energy, zeta_or_none)``.

    The formula assumes every member stays active in every prefetch slot,
    so for sets the execution would clamp it is an unattainably low bound
    and the argmin can overshoot the realizable best set.  Use the episode
    runners (or :func:`select_noncausal_set` per gain draw) when the
    realizable energy is the quantity of interest.
    """
    best = (frozenset(), no_prefetch_energy_fast(s, xi), None)
    if exhaustive:
        if s.L > 10:
            raise ValueError("exhaustive subset search is limited to L <= 10")
        candidates = [tuple(i for i in range(s.L) if mask >> i & 1)
                      for mask in range(1, 1 << s.L)]
    else:
        order = priority_order(s)
        candidates = [tuple(order[:k]) for k in range(1, s.L + 1)]
    for members in candidates:
        zeta = build_zeta_table(s, channel, members, xi)
        energy = expected_total_energy_fast(s, members, zeta)
        if energy < best[1]:
            best = (frozenset(members), energy, zeta)
    return best


@dataclass(frozen=True)
class EpisodeTrace:
    """Full record of one simulated stage."""

    policy: PrefetchPolicy
    gains: np.ndarray             #: all N realized gains
    realized: int                 #: task that turned out to run
    decisions: np.ndarray         #: (N_P, L) prefetched bits per slot and task
    thresholds: np.ndarray        #: (N_P,) realized thresholds (0 for no-prefetch)
    task_sets: tuple              #: per-slot working sets
    prefetch_energy: float
    demand: DemandTrace

    @property
    def total_energy(self) -> float:
        return self.prefetch_energy + self.demand.total_energy

    @property
    def alpha(self) -> np.ndarray:
        """Total bits prefetched per task over the phase."""
        return self.decisions.sum(axis=0)


def _slot_decision(state: EpisodeState, g: float, s: Scenario, members: np.ndarray,
                   zeta: ZetaTable, xi: XiTable, w: np.ndarray) -> tuple:
    """One prefetch-slot step restricted to ``members``: (bits, eta).

    Before the final prefetch slot the continuation depends on the members'
    residual total only, so the slot sends the stage-optimal total
    ``R * u_g / (u_g + u_c)`` and splits it at the water-filling threshold.
    At the final slot the continuation is exactly separable per task and the
    consistent clamped threshold is solved directly.  Both coincide with the
    closed-form ``threshold_eta`` decision whenever every member is active.
    """
    root = 1.0 / (s.m - 1)
    u_g = g ** root
    if state.slot < s.N_P:
        u_c = zeta.u(s.N - state.slot)
        residual = float(np.sum(state.rho[members]))
        total = residual * u_g / (u_g + u_c)
        eta = _solve_slot_threshold(state.rho[members], w[members], total)
    else:
        c0 = u_g / xi.inv_root[s.N - s.N_P]
        eta = _solve_final_threshold(state.rho[members], w[members], c0)
    bits = np.zeros(s.L)
    bits[members] = np.maximum(state.rho[members] - eta * w[members], 0.0)
    return bits, eta


def run_prefetch_episode(s: Scenario, channel: Channel, policy: PrefetchPolicy,
                         rng: Optional[np.random.Generator] = None, *,
                         gains: Optional[np.ndarray] = None,
                         realized: Optional[int] = None,
                         xi: Optional[XiTable] = None,
                         prefix_tables: Optional[Sequence[ZetaTable]] = None,
                         forced_set: Optional[Iterable[int]] = None) -> EpisodeTrace:
    """Simulate one full stage (prefetch phase, realization, demand phase).

    Gains and the realized task are drawn from ``rng`` unless supplied,
    which allows paired comparisons across policies.  The noncausal oracle
    locks its target set once from the revealed prefetch gains; the causal
    estimators rebuild their working set every slot.  ``forced_set`` locks
    an arbitrary target set instead (skipping any selection) — useful for
    validating the locked-set energy formula.  The demand phase always runs
    the xi-policy.
    """
    if s.N == s.N_P:
        raise ValueError("fast-fading episodes require a demand phase (N > N_P)")
    if gains is None or realized is None:
        if rng is None:
            raise ValueError("rng is required when gains/realized are not supplied")
    if gains is None:
        gains = sample_gain(channel, rng, s.N)
    gains = np.asarray(gains, dtype=float)
    if gains.shape != (s.N,):
        raise ValueError(f"gains must have shape ({s.N},)")
    if realized is None:
        realized = int(rng.choice(s.L, p=s.p))
    if not 0 <= realized < s.L:
        raise IndexError(f"realized task {realized} out of range for L={s.L}")
    d = s.N - s.N_P
    if xi is None:
        xi = build_xi_table(channel, s.m, d)
    need_prefixes = (policy in (PrefetchPolicy.AGGRESSIVE, PrefetchPolicy.CONSERVATIVE)
                     or (policy is PrefetchPolicy.NONCAUSAL_ORACLE and forced_set is None))
    if prefix_tables is None and need_prefixes:
        prefix_tables = build_prefix_tables(s, channel, xi)

    w = s.p ** (-1.0 / (s.m - 1))
    decisions = np.zeros((s.N_P, s.L))
    thresholds = np.zeros(s.N_P)
    task_sets = []
    prefetch_energy = 0.0
    state = EpisodeState(slot=1, rho=s.gamma.copy())

    if forced_set is not None:
        locked = frozenset(int(i) for i in forced_set)
        locked_zeta = build_zeta_table(s, channel, locked, xi) if locked else None
    elif policy is PrefetchPolicy.NONCAUSAL_ORACLE:
        k_sel = select_noncausal_set(s, gains[:s.N_P], prefix_tables, xi)
        locked = frozenset(priority_order(s)[:k_sel])
        locked_zeta = prefix_tables[k_sel - 1]
    else:
        locked = None
        locked_zeta = None

    if policy is not PrefetchPolicy.NO_PREFETCH:
        for n in range(1, s.N_P + 1):
            state.slot = n
            g = float(gains[n - 1])
            if locked is not None:
                working, zeta = locked, locked_zeta
            else:
                working = approximate_task_set(state, g, policy, s, channel, xi,
                                               prefix_tables)
                zeta = prefix_tables[len(working) - 1]
            if working:
                members = np.array(sorted(working), dtype=int)
                bits, eta = _slot_decision(state, g, s, members, zeta, xi, w)
            else:
                bits, eta = np.zeros(s.L), 0.0
            decisions[n - 1] = bits
            thresholds[n - 1] = eta
            task_sets.append(working)
            prefetch_energy += s.lam * float(bits.sum()) ** s.m / g
            state.rho = state.rho - bits
            state.approx_set = frozenset(
                int(i) for i in np.flatnonzero(bits > POSITIVE_BITS_EPS))
            state.threshold_history.append(eta)
    else:
        task_sets = [frozenset()] * s.N_P

    beta = float(state.rho[realized])
    demand = simulate_demand_episode(beta, gains[s.N_P:], xi, lam=s.lam)
    return EpisodeTrace(policy=policy, gains=gains, realized=realized,
                        decisions=decisions, thresholds=thresholds,
                        task_sets=tuple(task_sets),
                        prefetch_energy=prefetch_energy, demand=demand)


@dataclass(frozen=True)
class BatchResult:
    """Vectorized episode statistics (one entry per episode)."""

    policy: PrefetchPolicy
    prefetch_energy: np.ndarray
    demand_energy: np.ndarray
    realized: np.ndarray
    set_size: np.ndarray            #: final working-set size (0 for no-prefetch)
    beta: np.ndarray                #: residual bits of the realized task
    final_rho: np.ndarray           #: (E, L) residual bits per task, original order
    thresholds: Optional[np.ndarray] = None   #: (E, N_P) if requested
    decisions: Optional[np.ndarray] = None    #: (E, N_P, L) if requested

    @property
    def total_energy(self) -> np.ndarray:
        return self.prefetch_energy + self.demand_energy


def _sorted_member_cumulants(rho: np.ndarray, w_row: np.ndarray,
                             member: np.ndarray) -> tuple:
    """Per-episode cumulative sums in descending ``rho/w`` member order."""
    masked_rho = np.where(member, rho, 0.0)
    masked_w = np.where(member, w_row[None, :], 0.0)
    ratios = np.where(member, rho / w_row[None, :], -np.inf)
    order = np.argsort(-ratios, axis=1)
    cum_rho = np.cumsum(np.take_along_axis(masked_rho, order, axis=1), axis=1)
    cum_w = np.cumsum(np.take_along_axis(masked_w, order, axis=1), axis=1)
    ratio_sorted = np.take_along_axis(ratios, order, axis=1)
    next_ratio = np.concatenate(
        [ratio_sorted[:, 1:], np.full((rho.shape[0], 1), -np.inf)], axis=1)
    return cum_rho, cum_w, next_ratio


def _solve_slot_threshold_batch(rho: np.ndarray, w_row: np.ndarray,
                                member: np.ndarray, total: np.ndarray) -> np.ndarray:
    """Vectorized water-filling thresholds; non-members are masked out."""
    cum_rho, cum_w, next_ratio = _sorted_member_cumulants(rho, w_row, member)
    with np.errstate(divide="ignore", invalid="ignore"):
        candidates = (cum_rho - total[:, None]) / cum_w
    first = np.argmax(candidates >= next_ratio, axis=1)
    eta = candidates[np.arange(rho.shape[0]), first]
    return np.maximum(eta, 0.0)


def _solve_final_threshold_batch(rho: np.ndarray, w_row: np.ndarray,
                                 member: np.ndarray, c0: np.ndarray) -> np.ndarray:
    """Vectorized final-slot thresholds (``sum([rho-eta*w]+) == eta*c0``)."""
    cum_rho, cum_w, next_ratio = _sorted_member_cumulants(rho, w_row, member)
    candidates = cum_rho / (cum_w + c0[:, None])
    first = np.argmax(candidates >= next_ratio, axis=1)
    eta = candidates[np.arange(rho.shape[0]), first]
    return np.maximum(eta, 0.0)


def run_prefetch_batch(s: Scenario, channel: Channel, policy: PrefetchPolicy,
                       gains: np.ndarray, realized: np.ndarray, *,
                       xi: Optional[XiTable] = None,
                       prefix_tables: Optional[Sequence[ZetaTable]] = None,
                       forced_prefix: Optional[int] = None,
                       keep_thresholds: bool = False,
                       keep_decisions: bool = False) -> BatchResult:
    """Vectorized equivalent of :func:`run_prefetch_episode`.

    ``gains`` has shape ``(episodes, N)`` and ``realized`` holds the task
    index per episode; sharing them across policies yields paired samples.
    ``forced_prefix`` locks the target set to the priority prefix of that
    size for every episode.  Matches the scalar runner slot for slot, up to
    float summation order.
    """
    if s.N == s.N_P:
        raise ValueError("fast-fading episodes require a demand phase (N > N_P)")
    gains = np.asarray(gains, dtype=float)
    realized = np.asarray(realized, dtype=int)
    if gains.ndim != 2 or gains.shape[1] != s.N:
        raise ValueError(f"gains must have shape (episodes, {s.N})")
    if realized.shape != (gains.shape[0],):
        raise ValueError("realized must hold one task index per episode")
    if np.any(gains <= 0.0):
        raise ValueError("all gains must be strictly positive")
    if np.any((realized < 0) | (realized >= s.L)):
        raise IndexError("realized task index out of range")
    if forced_prefix is not None and not 1 <= forced_prefix <= s.L:
        raise ValueError(f"forced_prefix must lie in 1..{s.L}")
    d = s.N - s.N_P
    if xi is None:
        xi = build_xi_table(channel, s.m, d)
    if prefix_tables is None and policy is not PrefetchPolicy.NO_PREFETCH:
        prefix_tables = build_prefix_tables(s, channel, xi)

    episodes = gains.shape[0]
    root = 1.0 / (s.m - 1)
    order = np.array(priority_order(s))
    inv_order = np.argsort(order)
    gam = s.gamma[order]
    prob = s.p[order]
    w = prob ** (-root)
    mass = np.cumsum(w)                      # mass[k-1] = A for prefix of size k
    u_xi = xi.inv_root[d]
    sizes = np.arange(1, s.L + 1)

    # u_zeta[k-1, n-1] = u of the size-k prefix table at N-n slots to deadline
    u_zeta = np.zeros((s.L, max(s.N_P - 1, 1)))
    if policy is not PrefetchPolicy.NO_PREFETCH and s.N_P > 1:
        for k in sizes:
            table = prefix_tables[k - 1]
            u_zeta[k - 1] = [table.u(s.N - n) for n in range(1, s.N_P)]

    rho = np.tile(gam, (episodes, 1))
    prefetch_energy = np.zeros(episodes)
    set_size = np.zeros(episodes, dtype=int)
    thresholds = np.zeros((episodes, s.N_P)) if keep_thresholds else None
    decisions = np.zeros((episodes, s.N_P, s.L)) if keep_decisions else None

    if policy is not PrefetchPolicy.NO_PREFETCH:
        u_gain = gains[:, :s.N_P] ** root

        if forced_prefix is not None:
            k_locked = np.full(episodes, forced_prefix, dtype=int)
            set_size[:] = k_locked
        elif policy is PrefetchPolicy.NONCAUSAL_ORACLE:
            predicted = _prefix_energy_predictions(s, gains[:, :s.N_P],
                                                   prefix_tables, xi)
            k_locked = np.argmin(predicted, axis=1) + 1
            set_size[:] = k_locked
        else:
            k_locked = None

        prev_positive = np.zeros(episodes, dtype=int)
        column = np.arange(s.L)
        for n in range(1, s.N_P + 1):
            u_g = u_gain[:, n - 1]
            prefix_rho = np.concatenate(
                [np.zeros((episodes, 1)), np.cumsum(rho, axis=1)], axis=1)
            if k_locked is not None:
                k_sel = k_locked
            else:
                eta_hat = np.empty((episodes, s.L))
                for k in sizes:
                    residual = prefix_rho[:, k]
                    if n == s.N_P:
                        eta_hat[:, k - 1] = residual * u_xi / (u_g + u_xi * mass[k - 1])
                    elif policy is PrefetchPolicy.AGGRESSIVE:
                        u_z = u_zeta[k - 1, n - 1]
                        eta_hat[:, k - 1] = residual * u_xi / (u_g + u_z)
                    else:
                        u_z = u_zeta[k - 1, n - 1]
                        eta_hat[:, k - 1] = residual * u_z / ((u_g + u_z) * mass[k - 1])
                counts = np.count_nonzero(
                    gam[None, None, :] - eta_hat[:, :, None] * w[None, None, :]
                    > POSITIVE_BITS_EPS, axis=2)
                match = (counts == sizes[None, :]) & (sizes[None, :] >= prev_positive[:, None])
                first = np.argmax(match, axis=1)
                found = match[np.arange(episodes), first]
                k_sel = np.where(found, first + 1, s.L)
                set_size[:] = k_sel

            member = column[None, :] < k_sel[:, None]
            if n == s.N_P:
                eta = _solve_final_threshold_batch(rho, w, member, u_g / u_xi)
            else:
                residual = prefix_rho[np.arange(episodes), k_sel]
                u_c = u_zeta[k_sel - 1, n - 1]
                total = residual * u_g / (u_g + u_c)
                eta = _solve_slot_threshold_batch(rho, w, member, total)
            bits = np.where(member, np.maximum(rho - eta[:, None] * w[None, :], 0.0), 0.0)
            prefetch_energy += s.lam * bits.sum(axis=1) ** s.m / gains[:, n - 1]
            rho = rho - bits
            prev_positive = np.count_nonzero(bits > POSITIVE_BITS_EPS, axis=1)
            if keep_thresholds:
                thresholds[:, n - 1] = eta
            if keep_decisions:
                decisions[:, n - 1, :] = bits[:, inv_order]

    # Demand phase: xi-policy on the realized task's residual.
    realized_sorted = inv_order[realized]
    beta = rho[np.arange(episodes), realized_sorted].copy()
    demand_energy = np.zeros(episodes)
    residual = beta.copy()
    for slot in range(d):
        remaining = d - slot
        g = gains[:, s.N_P + slot]
        if remaining == 1:
            bits = residual.copy()
        else:
            u_g = g ** root
            bits = residual * u_g / (u_g + xi.inv_root[remaining - 1])
        demand_energy += s.lam * bits ** s.m / g
        residual -= bits

    return BatchResult(policy=policy, prefetch_energy=prefetch_energy,
                       demand_energy=demand_energy, realized=realized,
                       set_size=set_size, beta=beta,
                       final_rho=rho[:, inv_order],
                       thresholds=thresholds, decisions=decisions)
