"""Segment models for point-process changepoint inference.

Conjugate path: Poisson likelihood with independent gamma priors per segment,
so segment intensities integrate out to a closed-form log evidence.  Also
provides the chained-gamma prior used to reweight conjugate output onto a
non-conjugate dependent-intensity model.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .particles import ChangepointConfiguration, InvalidConfigurationError

__all__ = [
    "EventWindow",
    "PoissonGammaModel",
    "ChainedGammaPrior",
    "cp_prior_log_density",
    "gamma_segment_log_evidence",
    "sample_segment_intensity",
    "chained_gamma_reweight",
]


@dataclass(frozen=True)
class EventWindow:
    """Sorted event times inside a half-open interval (start, end]."""

    events: np.ndarray
    start: float
    end: float

    def __post_init__(self):
        ev = np.asarray(self.events, dtype=float)
        object.__setattr__(self, "events", ev)
        if self.end <= self.start:
            raise ValueError("window end must exceed start")
        if ev.size:
            if np.any(np.diff(ev) < 0):
                raise ValueError("events must be sorted ascending")
            if ev[0] <= self.start or ev[-1] > self.end:
                raise ValueError("events must lie in (start, end]")

    def count(self, a: float, b: float) -> int:
        """Number of events in (a, b]."""
        lo, hi = np.searchsorted(self.events, [a, b], side="right")
        return int(hi - lo)

    def counts(self, boundaries) -> np.ndarray:
        """Event counts per segment for boundaries b0 < b1 < ... (segments (b_i, b_{i+1}])."""
        pos = np.searchsorted(self.events, np.asarray(boundaries, dtype=float), side="right")
        return np.diff(pos)

    def restrict(self, a: float, b: float) -> "EventWindow":
        lo, hi = np.searchsorted(self.events, [a, b], side="right")
        return EventWindow(self.events[lo:hi], a, b)


def cp_prior_log_density(k: int, taus, interval: tuple[float, float], nu: float) -> float:
    """Log prior density of k ordered changepoints on (a, b] under a rate-nu Poisson process."""
    a, b = interval
    taus = tuple(taus)
    if len(taus) != k:
        raise InvalidConfigurationError("k does not match number of changepoints")
    if any(t2 <= t1 for t1, t2 in zip(taus, taus[1:])):
        raise InvalidConfigurationError("changepoints must be strictly increasing")
    if taus and (taus[0] <= a or taus[-1] >= b):
        raise InvalidConfigurationError("changepoints must lie strictly inside the interval")
    return k * math.log(nu) - nu * (b - a)


def gamma_segment_log_evidence(r: int, delta: float, alpha: float, beta: float) -> float:
    """Log marginal likelihood of r Poisson events over duration delta, gamma(alpha, beta) prior."""
    if delta <= 0:
        raise ValueError("segment duration must be positive")
    if r < 0:
        raise ValueError("event count must be nonnegative")
    return (
        alpha * math.log(beta)
        - gammaln(alpha)
        + gammaln(alpha + r)
        - (alpha + r) * math.log(beta + delta)
    )


def sample_segment_intensity(
    r: int, delta: float, alpha: float, beta: float, rng: np.random.Generator
) -> float:
    """Draw a segment intensity from its gamma(alpha + r, beta + delta) posterior."""
    if delta <= 0:
        raise ValueError("segment duration must be positive")
    return rng.gamma(shape=alpha + r, scale=1.0 / (beta + delta))


@dataclass(frozen=True)
class PoissonGammaModel:
    """Piecewise-constant Poisson intensity with conjugate gamma segment priors.

    ``prior_only`` short-circuits the likelihood to a constant, leaving the
    changepoint prior as the target (used for prior-recovery checks).
    """

    nu: float
    alpha: float
    beta: float
    prior_only: bool = False

    def __post_init__(self):
        if min(self.nu, self.alpha, self.beta) <= 0:
            raise ValueError("nu, alpha, beta must all be positive")

    conjugate = True

    def segment_log_evidence(self, r: int, delta: float) -> float:
        if self.prior_only:
            return 0.0
        return gamma_segment_log_evidence(r, delta, self.alpha, self.beta)

    def log_gamma(
        self,
        config: ChangepointConfiguration,
        window: EventWindow,
        cp_interval: tuple[float, float] | None = None,
    ) -> float:
        """Unnormalized log posterior density of a configuration.

        ``cp_interval`` is the interval the changepoint prior lives on; data
        segments span the window, i.e. the first segment starts at the window
        start (which may precede the changepoint interval in window-local
        targets).  Defaults to the window bounds.
        """
        if cp_interval is None:
            cp_interval = (window.start, window.end)
        out = cp_prior_log_density(config.k, config.taus, cp_interval, self.nu)
        boundaries = [window.start, *config.taus, window.end]
        rs = window.counts(boundaries)
        for r, (lo, hi) in zip(rs, zip(boundaries, boundaries[1:])):
            out += self.segment_log_evidence(int(r), hi - lo)
        return out

    def intensity_at_end(
        self, config: ChangepointConfiguration, window: EventWindow
    ) -> tuple[float, float, float]:
        """(shape, rate, mean) of the posterior for the last segment intensity."""
        tau = config.last_tau if config.taus else window.start
        r = window.count(tau, window.end)
        shape = self.alpha + r
        rate = self.beta + (window.end - tau)
        return shape, rate, shape / rate

    def sample_intensities(
        self, config: ChangepointConfiguration, window: EventWindow, rng: np.random.Generator
    ) -> np.ndarray:
        """One joint draw of all segment intensities from their independent posteriors."""
        boundaries = [window.start, *config.taus, window.end]
        rs = window.counts(boundaries)
        deltas = np.diff(boundaries)
        return rng.gamma(shape=self.alpha + rs, scale=1.0 / (self.beta + deltas))


@dataclass(frozen=True)
class ChainedGammaPrior:
    """Dependent segment-intensity prior: lambda_0 ~ Gamma(alpha, beta),
    lambda_i | lambda_{i-1} ~ Gamma(lambda_{i-1}^2/chi, lambda_{i-1}/chi)."""

    alpha: float
    beta: float
    chi: float

    def __post_init__(self):
        if min(self.alpha, self.beta, self.chi) <= 0:
            raise ValueError("alpha, beta, chi must all be positive")

    def log_density(self, intensities) -> float:
        lam = np.asarray(intensities, dtype=float)
        if np.any(lam <= 0):
            raise ValueError("intensities must be positive")
        out = _gamma_logpdf(lam[0], self.alpha, self.beta)
        for prev, cur in zip(lam[:-1], lam[1:]):
            out += _gamma_logpdf(cur, prev * prev / self.chi, prev / self.chi)
        return out


def _gamma_logpdf(x: float, shape: float, rate: float) -> float:
    return shape * math.log(rate) - gammaln(shape) + (shape - 1.0) * math.log(x) - rate * x


def independent_gamma_log_density(intensities, alpha: float, beta: float) -> float:
    """Log density of independent gamma(alpha, beta) variates."""
    lam = np.asarray(intensities, dtype=float)
    if np.any(lam <= 0):
        raise ValueError("intensities must be positive")
    return float(sum(_gamma_logpdf(x, alpha, beta) for x in lam))


def chained_gamma_reweight(
    intensities,
    log_weight: float,
    conjugate: tuple[float, float],
    chain: ChainedGammaPrior,
) -> float:
    """Reweight a conjugate-posterior intensity draw onto the chained-gamma prior.

    Returns the log weight multiplied (in log space) by the ratio of the
    chained prior density to the product-of-independent-gammas prior density.
    """
    alpha, beta = conjugate
    return (
        log_weight
        + chain.log_density(intensities)
        - independent_gamma_log_density(intensities, alpha, beta)
    )
