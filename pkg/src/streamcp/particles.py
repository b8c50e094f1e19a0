"""Particle and weight bookkeeping: ESS, systematic resampling, replication.

Weights are carried in log space throughout; anything that needs linear
weights exponentiates after subtracting the max.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ChangepointConfiguration",
    "WeightedParticleSet",
    "DegenerateWeightsError",
    "InvalidConfigurationError",
    "ess",
    "log_ess",
    "systematic_resample",
    "systematic_resample_indices",
    "replicate_to",
    "pad_new_particles",
]


class DegenerateWeightsError(ValueError):
    """All particle weights are zero (or -inf in log space)."""


class InvalidConfigurationError(ValueError):
    """A changepoint configuration violates its ordering/support invariants."""


@dataclass(frozen=True)
class ChangepointConfiguration:
    """One particle: ordered changepoint times, optionally with per-segment parameters.

    ``taus`` are strictly increasing times; ``thetas``, when present, holds one
    parameter per segment (length k+1).  Instances are immutable and hashable so
    duplicate detection in the replication step is exact tuple equality:
    duplicates only ever arise from copying, never from coincidental float
    equality.
    """

    taus: tuple[float, ...] = ()
    thetas: tuple[float, ...] | None = None

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.taus, self.taus[1:])):
            raise InvalidConfigurationError(f"changepoints not strictly increasing: {self.taus}")
        if self.thetas is not None and len(self.thetas) != len(self.taus) + 1:
            raise InvalidConfigurationError(
                f"expected {len(self.taus) + 1} segment parameters, got {len(self.thetas)}"
            )

    @property
    def k(self) -> int:
        return len(self.taus)

    @property
    def last_tau(self) -> float:
        """Most recent changepoint; 0.0 by convention when there are none."""
        return self.taus[-1] if self.taus else 0.0


@dataclass
class WeightedParticleSet:
    """Flat list of particles with unnormalized log importance weights."""

    particles: list[ChangepointConfiguration]
    log_weights: np.ndarray

    def __post_init__(self):
        self.log_weights = np.asarray(self.log_weights, dtype=float)
        if len(self.particles) != self.log_weights.shape[0]:
            raise ValueError("particle/weight length mismatch")

    def __len__(self) -> int:
        return len(self.particles)

    def weights(self) -> np.ndarray:
        """Linear weights rescaled so the max is 1 (safe to exponentiate)."""
        m = np.max(self.log_weights)
        if not np.isfinite(m):
            raise DegenerateWeightsError("all log-weights are -inf")
        return np.exp(self.log_weights - m)

    def normalized_weights(self) -> np.ndarray:
        w = self.weights()
        return w / w.sum()

    def ess(self) -> float:
        return ess(self.weights())

    def unique_view(self) -> tuple[list[ChangepointConfiguration], np.ndarray, np.ndarray]:
        """Deduplicated view: unique particles, combined weights w-bar, multiplicities.

        Uniques are ordered by first occurrence.  The view represents the same
        empirical measure as the flat set: w-bar(i) = w(i) * m0(i).
        """
        index: dict[ChangepointConfiguration, int] = {}
        uniques: list[ChangepointConfiguration] = []
        wbar: list[float] = []
        mult: list[int] = []
        w = self.weights()
        for p, wi in zip(self.particles, w):
            j = index.get(p)
            if j is None:
                index[p] = len(uniques)
                uniques.append(p)
                wbar.append(wi)
                mult.append(1)
            else:
                wbar[j] += wi
                mult[j] += 1
        return uniques, np.asarray(wbar), np.asarray(mult, dtype=int)


def ess(weights) -> float:
    """Effective sample size (sum w)^2 / sum w^2 of nonnegative weights."""
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise ValueError("negative weight")
    s = w.sum()
    if s <= 0:
        raise DegenerateWeightsError("all weights are zero")
    return float(s * s / np.sum(w * w))


def log_ess(log_weights) -> float:
    """ESS computed from unnormalized log weights."""
    lw = np.asarray(log_weights, dtype=float)
    m = np.max(lw)
    if not np.isfinite(m):
        raise DegenerateWeightsError("all log-weights are -inf")
    return ess(np.exp(lw - m))


def systematic_resample_indices(
    weights, count: int, rng: np.random.Generator, u: float | None = None
) -> np.ndarray:
    """Ancestor indices for systematic resampling.

    One uniform draw u in [0, 1/count) is compared against the normalized
    cumulative weights at the grid points u + i/count.  ``u`` can be forced
    for testing.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    w = np.asarray(weights, dtype=float)
    s = w.sum()
    if s <= 0 or np.any(w < 0):
        raise DegenerateWeightsError("invalid weights for resampling")
    if u is None:
        u = rng.uniform(0.0, 1.0 / count)
    grid = u + np.arange(count) / count
    cum = np.cumsum(w / s)
    cum[-1] = 1.0  # guard against roundoff excluding the last particle
    idx = np.searchsorted(cum, grid, side="right")
    return np.minimum(idx, len(w) - 1)


def systematic_resample(
    particle_set: WeightedParticleSet,
    count: int,
    rng: np.random.Generator,
    u: float | None = None,
) -> WeightedParticleSet:
    """Systematic resampling to ``count`` equally weighted particles."""
    idx = systematic_resample_indices(particle_set.weights(), count, rng, u=u)
    particles = [particle_set.particles[i] for i in idx]
    return WeightedParticleSet(particles, np.zeros(count))


def replicate_to(particle_set: WeightedParticleSet, target: int) -> WeightedParticleSet:
    """Grow a particle set to ``target`` flat particles by greedy replication.

    Works on the deduplicated view.  At each step the particle whose extra copy
    most decreases the sum of squared weights (delta_i = wbar_i^2 /
    ((m_i + 1) m_i)) is replicated; the number of copies added is the largest
    batch for which it remains the best choice.  Each unique particle i ends
    with m_i copies, each of weight wbar_i / m_i, so the total weight and every
    weighted estimate are unchanged while the sum of squared weights never
    increases.
    """
    n = len(particle_set)
    if target < n:
        raise ValueError(f"cannot shrink set from {n} to {target}; use resampling")
    if target == n:
        return particle_set

    uniques, wbar_lin, mult = particle_set.unique_view()
    # carry the log-scale offset so output log-weights match the input scale
    offset = float(np.max(particle_set.log_weights))
    n_unique = len(uniques)
    m = mult.astype(int).copy()
    wbar2 = wbar_lin**2

    def delta(i):
        return wbar2[i] / ((m[i] + 1) * m[i])

    deltas = np.array([delta(i) for i in range(n_unique)])
    total = int(m.sum())
    i_star = int(np.argmax(deltas))  # argmax ties: lowest index (np.argmax default)
    while total < target:
        if n_unique == 1:
            x = target - total
        else:
            others = np.delete(np.arange(n_unique), i_star)
            i_next = int(others[np.argmax(deltas[others])])
            d_next = deltas[i_next]
            if d_next <= 0:
                x = target - total
            else:
                # largest x with wbar^2/((m+x+1)(m+x)) < delta_next
                x = int(math.ceil(math.sqrt(wbar2[i_star] / d_next + 0.25) - 0.5 - m[i_star]))
                x = max(x, 1)
                x = min(target - total, x)
        m[i_star] += x
        total += x
        deltas[i_star] = delta(i_star)
        if n_unique > 1:
            i_star = i_next

    particles: list[ChangepointConfiguration] = []
    log_w: list[float] = []
    for i in range(n_unique):
        lw = math.log(wbar_lin[i] / m[i]) + offset if wbar_lin[i] > 0 else -math.inf
        particles.extend([uniques[i]] * m[i])
        log_w.extend([lw] * m[i])
    return WeightedParticleSet(particles, np.array(log_w))


def pad_new_particles(new: list, target: int) -> list:
    """Extend a list to ``target`` items by index-modulo copying."""
    if not new:
        raise ValueError("cannot pad an empty particle list")
    if target < len(new):
        raise ValueError("target smaller than list; nothing to pad")
    return [new[i % len(new)] for i in range(target)]
