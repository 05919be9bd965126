"""Causal demand-phase fetching under fast fading.

Once the next task is revealed, its residual ``beta`` bits must be fetched
within the remaining slots while the gain varies i.i.d. from slot to slot.
Dynamic programming gives an optimal policy that is linear in the residual:
with ``j`` slots to go and gain ``g``, send

    beta * g**(1/(m-1)) / (g**(1/(m-1)) + (1/xi[j-1])**(1/(m-1)))

where the coefficients ``xi[j]`` obey a backward recursion in the number of
remaining slots and also give the optimal expected energy in closed form,
``lam * xi[j] * beta**m``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .model import (
    Channel,
    FastGamma,
    SlowFading,
    expect_over_gain,
    mean_gain,
    mean_inverse_gain,
)

__all__ = [
    "XiTable",
    "DemandTrace",
    "build_xi_table",
    "demand_bits",
    "expected_demand_energy",
    "demand_energy_bounds",
    "simulate_demand_episode",
]


@dataclass(frozen=True)
class XiTable:
    """Backward coefficients of the optimal causal demand scheduler.

    ``xi[j]`` is the energy coefficient with ``j`` slots remaining
    (``xi[0]`` is an infinite sentinel: no slots left).  ``inv_root[j]``
    caches ``(1/xi[j])**(1/(m-1))`` with the sentinel mapped to exactly 0,
    which is the only way ``xi[0]`` enters the recursion.
    """

    channel: Channel
    m: int
    xi: tuple
    inv_root: tuple

    @property
    def horizon(self) -> int:
        return len(self.xi) - 1


@lru_cache(maxsize=None)
def _xi_cached(channel: Channel, m: int, horizon: int) -> XiTable:
    root = 1.0 / (m - 1)
    xi = [float("inf")]
    inv_root = [0.0]
    for _ in range(horizon):
        u_prev = inv_root[-1]
        value = expect_over_gain(
            lambda x: (x ** root + u_prev) ** (-(m - 1)), channel)
        xi.append(value)
        inv_root.append((1.0 / value) ** root)
    return XiTable(channel=channel, m=m, xi=tuple(xi), inv_root=tuple(inv_root))


def build_xi_table(channel: Channel, m: int, horizon: int) -> XiTable:
    """Tabulate the demand coefficients for horizons ``0..horizon``.

    The recursion starts from ``xi[1] = E[1/g]`` (a single slot must flush
    everything) and proceeds as

        xi[j] = E[ (g**(1/(m-1)) + (1/xi[j-1])**(1/(m-1)))**-(m-1) ].

    For a constant gain it collapses to ``xi[j] = 1 / (g * j**(m-1))``,
    i.e. equal splitting over the remaining slots.
    """
    if not isinstance(m, (int, np.integer)) or not 2 <= m <= 5:
        raise ValueError(f"monomial order m must be an integer in [2, 5], got {m!r}")
    if not isinstance(horizon, (int, np.integer)) or horizon < 0:
        raise ValueError(f"horizon must be a nonnegative integer, got {horizon!r}")
    return _xi_cached(channel, int(m), int(horizon))


def demand_bits(rho: float, g: float, slots_remaining: int, table: XiTable) -> float:
    """Bits to send now, given residual ``rho``, gain ``g`` and slots left.

    The final slot (``slots_remaining == 1``) flushes the whole residual.
    Earlier slots send a fraction that grows with the current gain and
    shrinks with the quality of the remaining opportunities.
    """
    if rho < 0.0 or not np.isfinite(rho):
        raise ValueError(f"residual bits must be nonnegative, got {rho!r}")
    if not (np.isfinite(g) and g > 0.0):
        raise ValueError(f"channel gain must be strictly positive, got {g!r}")
    if not 1 <= slots_remaining <= table.horizon:
        raise ValueError(
            f"slots_remaining={slots_remaining} outside the table horizon {table.horizon}")
    if slots_remaining == 1:
        return float(rho)
    root = 1.0 / (table.m - 1)
    u_g = g ** root
    return float(rho) * u_g / (u_g + table.inv_root[slots_remaining - 1])


def expected_demand_energy(beta: float, table: XiTable, duration: int,
                           lam: float = 1.0) -> float:
    """Optimal expected demand energy ``lam * xi[duration] * beta**m``."""
    if beta < 0.0 or not np.isfinite(beta):
        raise ValueError(f"beta must be nonnegative, got {beta!r}")
    if duration == 0:
        if beta > 0.0:
            raise ValueError("positive residual with zero demand slots is infeasible")
        return 0.0
    if not 1 <= duration <= table.horizon:
        raise ValueError(f"duration={duration} outside the table horizon {table.horizon}")
    return lam * table.xi[duration] * beta ** table.m


def demand_energy_bounds(beta: float, channel: Channel, m: int, duration: int,
                         lam: float = 1.0) -> tuple:
    """Closed-form sandwich for the optimal expected demand energy.

    Jensen arguments in the two directions give

        lam * beta**m / (E[g] * duration**(m-1))
            <= E*  <= lam * E[1/g] * beta**m / duration**(m-1),

    with the upper bound tight at ``duration == 1``.
    """
    if beta < 0.0 or not np.isfinite(beta):
        raise ValueError(f"beta must be nonnegative, got {beta!r}")
    if not isinstance(duration, (int, np.integer)) or duration < 1:
        raise ValueError(f"duration must be a positive integer, got {duration!r}")
    scale = lam * beta ** m / duration ** (m - 1)
    return (scale / mean_gain(channel), scale * mean_inverse_gain(channel))


@dataclass(frozen=True)
class DemandTrace:
    """Realized demand phase: per-slot bits, per-slot energies."""

    bits: np.ndarray
    energy: np.ndarray

    @property
    def total_energy(self) -> float:
        return float(self.energy.sum())


def simulate_demand_episode(beta: float, gains: np.ndarray, table: XiTable,
                            lam: float = 1.0) -> DemandTrace:
    """Run the xi-policy on one realized gain sequence.

    ``gains`` holds the demand-phase gains in slot order; its length is the
    phase duration.  All residual bits are cleared by construction (the last
    slot flushes), so the per-slot bits sum to ``beta`` exactly.
    """
    gains = np.asarray(gains, dtype=float)
    if gains.ndim != 1 or gains.size < 1:
        raise ValueError("gains must be a 1-d array with at least one slot")
    if np.any(gains <= 0.0):
        raise ValueError("all gains must be strictly positive")
    duration = gains.size
    if duration > table.horizon:
        raise ValueError(f"duration={duration} outside the table horizon {table.horizon}")
    bits = np.empty(duration)
    energy = np.empty(duration)
    rho = float(beta)
    for slot in range(duration):
        remaining = duration - slot
        b = demand_bits(rho, float(gains[slot]), remaining, table)
        bits[slot] = b
        energy[slot] = lam * b ** table.m / gains[slot]
        rho -= b
    return DemandTrace(bits=bits, energy=energy)
