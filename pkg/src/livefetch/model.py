"""Core system model: fetching scenarios, fading channels and the energy law.

A *scenario* describes one stage of a live-prefetching system: while the
current task is still computing, the device may prefetch input bits for the
``L`` candidate next tasks over ``N_P`` slots; once the next task is revealed,
the remaining bits must be fetched within the ``N - N_P`` slots left before
the deadline.  Transmitting ``b`` bits in a slot with channel power gain ``g``
costs ``lam * b**m / g`` energy units, where ``m`` is the monomial order of
the power-rate model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy import integrate

__all__ = [
    "Scenario",
    "FetchSplit",
    "SlowFading",
    "FastGamma",
    "Channel",
    "QuadratureError",
    "transmit_energy",
    "sample_gain",
    "mean_gain",
    "mean_inverse_gain",
    "expect_over_gain",
    "to_db",
]

#: Probabilities may be off unity by at most this much.
PROB_TOL = 1e-9

#: Bit amounts below this threshold count as zero when classifying task sets.
POSITIVE_BITS_EPS = 1e-12

#: Absolute tolerance demanded from the gain-expectation quadrature.
QUAD_ABS_TOL = 1e-8


class QuadratureError(ArithmeticError):
    """Gain-expectation quadrature failed to reach the required tolerance.

    Carries the estimated ``residual`` (absolute error bound reported by the
    integrator, or ``nan`` if the value itself was non-finite).
    """

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class Scenario:
    """Parameters of one fetching stage.

    Parameters
    ----------
    m : int
        Monomial order of the energy law, integer in [2, 5].
    N : int
        Total slots between consecutive task arrivals.
    N_P : int
        Prefetching slots (1 <= N_P <= N); the last ``N - N_P`` slots form
        the demand phase.
    p : array_like
        Probability ``p[l]`` that candidate task ``l`` (0-based) runs next.
        Strictly positive, sums to one.
    gamma : array_like
        Input data size of each candidate task, strictly positive.
    lam : float
        Energy coefficient of the power-rate model.
    """

    m: int
    N: int
    N_P: int
    p: np.ndarray
    gamma: np.ndarray
    lam: float = 1.0

    def __post_init__(self):
        if not isinstance(self.m, (int, np.integer)) or not 2 <= self.m <= 5:
            raise ValueError(f"monomial order m must be an integer in [2, 5], got {self.m!r}")
        if not isinstance(self.N, (int, np.integer)) or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N!r}")
        if not isinstance(self.N_P, (int, np.integer)) or not 1 <= self.N_P <= self.N:
            raise ValueError(f"N_P must satisfy 1 <= N_P <= N, got N_P={self.N_P!r}, N={self.N!r}")
        p = _readonly(self.p)
        gamma = _readonly(self.gamma)
        if p.ndim != 1 or gamma.shape != p.shape or p.size == 0:
            raise ValueError("p and gamma must be 1-d arrays of equal, nonzero length")
        if np.any(p <= 0.0):
            raise ValueError("all task probabilities must be strictly positive")
        if abs(float(p.sum()) - 1.0) > PROB_TOL:
            raise ValueError(f"task probabilities must sum to 1, got {float(p.sum())!r}")
        if np.any(gamma <= 0.0) or not np.all(np.isfinite(gamma)):
            raise ValueError("all task data sizes must be strictly positive and finite")
        if not (np.isfinite(self.lam) and self.lam > 0.0):
            raise ValueError(f"lam must be strictly positive, got {self.lam!r}")
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "N_P", int(self.N_P))
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "lam", float(self.lam))

    @property
    def L(self) -> int:
        """Number of candidate tasks."""
        return self.p.size

    @property
    def gamma_total(self) -> float:
        """Total data size across candidates."""
        return float(self.gamma.sum())

    @property
    def demand_slots(self) -> int:
        """Slots available after the next task is revealed."""
        return self.N - self.N_P


@dataclass(frozen=True, eq=False)
class FetchSplit:
    """Per-task split of the input data into prefetched and demanded parts."""

    alpha: np.ndarray  #: bits fetched before the task is known
    beta: np.ndarray   #: bits left for the demand phase

    @classmethod
    def from_alpha(cls, s: Scenario, alpha: np.ndarray) -> "FetchSplit":
        alpha = np.asarray(alpha, dtype=float)
        if alpha.shape != s.gamma.shape:
            raise ValueError("alpha must have one entry per candidate task")
        if np.any(alpha < -POSITIVE_BITS_EPS) or np.any(alpha > s.gamma + POSITIVE_BITS_EPS):
            raise ValueError("prefetched bits must lie in [0, gamma] for every task")
        alpha = np.clip(alpha, 0.0, s.gamma)
        return cls(alpha=_readonly(alpha), beta=_readonly(s.gamma - alpha))


@dataclass(frozen=True)
class SlowFading:
    """Block-fading channel whose gain is constant over the whole stage."""

    g: float

    def __post_init__(self):
        if not (np.isfinite(self.g) and self.g > 0.0):
            raise ValueError(f"slow-fading gain must be strictly positive, got {self.g!r}")


@dataclass(frozen=True)
class FastGamma:
    """I.i.d. per-slot gain with a unit-mean Gamma distribution.

    The gain density is ``k**k * x**(k-1) * exp(-k*x) / (k-1)!`` for shape
    ``k`` (an integer >= 2 so that ``E[1/g] = k/(k-1)`` is finite).  Larger
    ``k`` concentrates the gain around its mean of one.
    """

    k: int

    def __post_init__(self):
        if not isinstance(self.k, (int, np.integer)) or self.k < 2:
            raise ValueError(f"shape parameter k must be an integer >= 2, got {self.k!r}")
        object.__setattr__(self, "k", int(self.k))

    def pdf(self, x: float) -> float:
        """Density of the gain at ``x > 0``."""
        k = self.k
        if x <= 0.0:
            return 0.0
        return math.exp(k * math.log(k) + (k - 1) * math.log(x) - k * x - math.lgamma(k))


Channel = Union[SlowFading, FastGamma]


def transmit_energy(b: float, g: float, s: Scenario) -> float:
    """Energy to push ``b`` bits through one slot with gain ``g``.

    Monomial law ``lam * b**m / g``: strictly convex and increasing in the
    bit load, inversely proportional to the channel gain.
    """
    if not (np.isfinite(b) and b >= 0.0):
        raise ValueError(f"bit load must be finite and nonnegative, got {b!r}")
    if not (np.isfinite(g) and g > 0.0):
        raise ValueError(f"channel gain must be strictly positive, got {g!r}")
    return s.lam * b ** s.m / g


def sample_gain(channel: Channel, rng: np.random.Generator, size=None):
    """Draw channel gains: the constant ``g`` or i.i.d. Gamma(k, 1/k) variates."""
    if isinstance(channel, SlowFading):
        if size is None:
            return channel.g
        return np.full(size, channel.g)
    if isinstance(channel, FastGamma):
        return rng.gamma(shape=channel.k, scale=1.0 / channel.k, size=size)
    raise TypeError(f"unknown channel model: {channel!r}")


def mean_gain(channel: Channel) -> float:
    """``E[g]``: the constant gain, or exactly one for the Gamma model."""
    if isinstance(channel, SlowFading):
        return channel.g
    if isinstance(channel, FastGamma):
        return 1.0
    raise TypeError(f"unknown channel model: {channel!r}")


def mean_inverse_gain(channel: Channel) -> float:
    """``E[1/g]``: ``1/g`` for slow fading, ``k/(k-1)`` for the Gamma model."""
    if isinstance(channel, SlowFading):
        return 1.0 / channel.g
    if isinstance(channel, FastGamma):
        return channel.k / (channel.k - 1.0)
    raise TypeError(f"unknown channel model: {channel!r}")


def expect_over_gain(f: Callable[[float], float], channel: Channel) -> float:
    """Expectation ``E[f(g)]`` under the channel's gain distribution.

    Slow fading evaluates ``f`` at the constant gain.  For the Gamma model
    the integral is computed by adaptive quadrature on (0, inf); a
    :class:`QuadratureError` is raised if the reported absolute error
    exceeds ``QUAD_ABS_TOL`` or the value is non-finite.
    """
    if isinstance(channel, SlowFading):
        return float(f(channel.g))
    if not isinstance(channel, FastGamma):
        raise TypeError(f"unknown channel model: {channel!r}")

    def integrand(x: float) -> float:
        return f(x) * channel.pdf(x)

    value, abserr = integrate.quad(integrand, 0.0, np.inf,
                                   epsabs=1e-10, epsrel=1e-10, limit=200)
    if not np.isfinite(value):
        raise QuadratureError(
            f"gain expectation diverged (value={value!r})", residual=float("nan"))
    if abserr > QUAD_ABS_TOL:
        raise QuadratureError(
            f"gain expectation residual {abserr:.3e} exceeds {QUAD_ABS_TOL:.1e}",
            residual=abserr)
    return float(value)


def to_db(energy_ratio: float) -> float:
    """Express a positive energy ratio in decibels (``10*log10``)."""
    if not (np.isfinite(energy_ratio) and energy_ratio > 0.0):
        raise ValueError(f"ratio must be strictly positive, got {energy_ratio!r}")
    return 10.0 * math.log10(energy_ratio)
