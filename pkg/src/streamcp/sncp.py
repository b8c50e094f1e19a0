"""Shot-noise Cox process segment model.

Changepoints are shots: the intensity jumps up at each shot time and decays
exponentially (rate kappa) between shots.  Post-shot levels lambda_i must
exceed the pre-shot level lambda_i^-; all evaluations return -inf when that
constraint fails so invalid particles die through their weights.

Window-local targets pin the first level at a reference time ``t_ref`` that
may differ from the data-window start, so every evaluation takes the reference
explicitly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammainc, gammaincc, gammainccinv, gammaincinv, gammaln

from .models import EventWindow, cp_prior_log_density
from .particles import ChangepointConfiguration, InvalidConfigurationError

__all__ = [
    "ShotNoiseCoxModel",
    "sncp_log_likelihood",
    "sncp_prior_log_density",
    "truncated_gamma_sample",
    "truncated_gamma_logpdf",
    "merge_delta",
    "cumulative_intensity_merge",
]


def _levels_and_refs(config: ChangepointConfiguration, t_ref: float):
    """Per-segment (level, reference time) pairs; level i applies on (b_i, b_{i+1}]."""
    if config.thetas is None:
        raise InvalidConfigurationError("shot-noise configuration needs intensity levels")
    lams = np.asarray(config.thetas, dtype=float)
    refs = np.array([t_ref, *config.taus])
    return lams, refs


def _pre_shot_levels(lams: np.ndarray, refs: np.ndarray, taus, kappa: float) -> np.ndarray:
    """lambda_i^- for i = 1..k: level just before each shot."""
    taus = np.asarray(taus, dtype=float)
    return lams[:-1] * np.exp(-kappa * (taus - refs[:-1]))


def shot_constraint_ok(config: ChangepointConfiguration, kappa: float, t_ref: float) -> bool:
    lams, refs = _levels_and_refs(config, t_ref)
    if np.any(lams <= 0):
        return False
    if config.k == 0:
        return True
    pre = _pre_shot_levels(lams, refs, config.taus, kappa)
    return bool(np.all(lams[1:] > pre))


def sncp_log_likelihood(
    config: ChangepointConfiguration,
    window: EventWindow,
    kappa: float,
    t_ref: float | None = None,
) -> float:
    """Log likelihood of the events under the decaying-intensity sample path.

    Returns -inf when the shot constraint is violated.
    """
    if t_ref is None:
        t_ref = window.start
    if not shot_constraint_ok(config, kappa, t_ref):
        return -math.inf
    lams, refs = _levels_and_refs(config, t_ref)
    boundaries = np.array([window.start, *config.taus, window.end])
    # compensator: integral of lambda(t) per segment, (lambda(start+) - lambda(end))/kappa
    lam_lo = lams * np.exp(-kappa * (boundaries[:-1] - refs))
    lam_hi = lams * np.exp(-kappa * (boundaries[1:] - refs))
    out = -float(np.sum(lam_lo - lam_hi)) / kappa
    if window.events.size:
        seg = np.searchsorted(boundaries[1:-1], window.events, side="left")
        out += float(np.sum(np.log(lams[seg]) - kappa * (window.events - refs[seg])))
    return out


def sncp_prior_log_density(
    config: ChangepointConfiguration,
    alpha: float,
    kappa: float,
    t_ref: float,
) -> float:
    """Log prior of intensity levels: independent Exp(alpha) shot sizes."""
    lams, refs = _levels_and_refs(config, t_ref)
    if np.any(lams <= 0):
        return -math.inf
    out = (config.k + 1) * math.log(alpha) - alpha * lams[0]
    if config.k:
        pre = _pre_shot_levels(lams, refs, config.taus, kappa)
        shots = lams[1:] - pre
        if np.any(shots <= 0):
            return -math.inf
        out -= alpha * float(np.sum(shots))
    return out


def truncated_gamma_logpdf(x: float, shape: float, rate: float, lo: float, hi: float) -> float:
    """Log density of a gamma(shape, rate) variate truncated to (lo, hi)."""
    if not (lo < x < hi) and not (lo < x and math.isinf(hi)):
        return -math.inf
    log_kernel = shape * math.log(rate) - gammaln(shape) + (shape - 1.0) * math.log(x) - rate * x
    mass = _truncated_mass(shape, rate, lo, hi)
    return log_kernel - math.log(mass)


def _truncated_mass(shape: float, rate: float, lo: float, hi: float) -> float:
    lower = gammainc(shape, rate * lo) if lo > 0 else 0.0
    upper = gammainc(shape, rate * hi) if math.isfinite(hi) else 1.0
    mass = upper - lower
    # deep upper tail: difference of complements is better conditioned
    if mass < 1e-12:
        cu = gammaincc(shape, rate * lo) if lo > 0 else 1.0
        cl = gammaincc(shape, rate * hi) if math.isfinite(hi) else 0.0
        mass = max(mass, cu - cl)
    return max(mass, 1e-300)


def truncated_gamma_sample(
    shape: float, rate: float, lo: float, hi: float, rng: np.random.Generator
) -> float:
    """Draw from gamma(shape, rate) truncated to (lo, hi).

    Inverse CDF in whichever tail keeps the interval mass resolvable in
    doubles: the lower regularized incomplete gamma when the interval sits in
    the lower half, its complement when it sits in the upper tail.  A
    rejection sampler covers the residual underflow cases.
    """
    if hi <= lo:
        raise InvalidConfigurationError("empty truncation interval")

    def _clamp(x: float) -> float:
        x = max(x, float(np.nextafter(lo, np.inf)))
        if math.isfinite(hi):
            x = min(x, float(np.nextafter(hi, -np.inf)))
        return x

    p_lo = gammainc(shape, rate * lo) if lo > 0 else 0.0
    p_hi = gammainc(shape, rate * hi) if math.isfinite(hi) else 1.0
    if p_hi <= 0.5:
        # lower tail: p values keep full resolution near zero
        if p_hi > p_lo:
            u = rng.uniform(p_lo, p_hi)
            return _clamp(float(gammaincinv(shape, u)) / rate)
    else:
        # upper tail: work with complements to avoid cancellation near one
        q_lo = gammaincc(shape, rate * lo) if lo > 0 else 1.0
        q_hi = gammaincc(shape, rate * hi) if math.isfinite(hi) else 0.0
        if q_lo > q_hi:
            u = rng.uniform(q_hi, q_lo)
            return _clamp(float(gammainccinv(shape, u)) / rate)
    return _rejection_sample(shape, rate, lo, hi, rng)


def _rejection_sample(shape, rate, lo, hi, rng, max_tries: int = 100_000) -> float:
    mode = (shape - 1.0) / rate if shape > 1 else 0.0
    if lo > 0 and lo >= mode:
        # density is decreasing on (lo, hi): shifted exponential envelope using
        # log x <= log lo + (x - lo)/lo
        env_rate = rate - (shape - 1.0) / lo if shape > 1 else rate
        for _ in range(max_tries):
            x = lo + rng.exponential(1.0 / env_rate)
            if x >= hi:
                continue
            log_acc = (shape - 1.0) * (math.log(x) - math.log(lo) - (x - lo) / lo)
            if math.log(rng.uniform()) < log_acc:
                return x
    else:
        for _ in range(max_tries):
            x = rng.gamma(shape=shape, scale=1.0 / rate)
            if lo < x < hi:
                return x
    raise RuntimeError("truncated gamma rejection sampler failed to accept")


def merge_delta(
    lam_old_last: float,
    gap_from_old_tau: float,
    lam_new_first: float,
    gap_from_boundary: float,
    kappa: float,
) -> float:
    """Intensity offset applied to new-window levels when stitching two chains.

    Difference, just before the first new shot, between the decayed old chain
    and the decayed new-window intercept.
    """
    return lam_old_last * math.exp(-kappa * gap_from_old_tau) - lam_new_first * math.exp(
        -kappa * gap_from_boundary
    )


def cumulative_intensity_merge(
    lam_old_last: float,
    lam_new_first: float,
    tau_old: float,
    boundary: float,
    tau_new: float,
    kappa: float,
) -> float:
    """Alternative merged level preserving the cumulative intensity on (tau_old, tau_new].

    Documented but unused in the pipeline: it can propose levels violating the
    shot constraint, so the shot-space identity map is used instead.
    """
    num = lam_old_last * (1.0 - math.exp(-kappa * (boundary - tau_old))) + lam_new_first * (
        1.0 - math.exp(-kappa * (tau_new - boundary))
    )
    return num / (1.0 - math.exp(-kappa * (tau_new - tau_old)))


@dataclass(frozen=True)
class ShotNoiseCoxModel:
    """Shot-noise Cox segment model: shot rate nu, decay kappa, Exp(alpha) shot sizes."""

    nu: float
    kappa: float
    alpha: float

    def __post_init__(self):
        if min(self.nu, self.kappa, self.alpha) <= 0:
            raise ValueError("nu, kappa, alpha must all be positive")

    conjugate = False

    def log_gamma(
        self,
        config: ChangepointConfiguration,
        window: EventWindow,
        cp_interval: tuple[float, float] | None = None,
        t_ref: float | None = None,
    ) -> float:
        """Unnormalized joint log density of (changepoints, levels, data)."""
        if cp_interval is None:
            cp_interval = (window.start, window.end)
        if t_ref is None:
            t_ref = cp_interval[0]
        try:
            out = cp_prior_log_density(config.k, config.taus, cp_interval, self.nu)
        except InvalidConfigurationError:
            return -math.inf
        out += sncp_prior_log_density(config, self.alpha, self.kappa, t_ref)
        if not math.isfinite(out):
            return -math.inf
        return out + sncp_log_likelihood(config, window, self.kappa, t_ref)

    def conditional_params(
        self,
        i: int,
        config: ChangepointConfiguration,
        window: EventWindow,
        t_ref: float | None = None,
    ) -> tuple[float, float, float, float]:
        """(shape, rate, lower, upper) of the full conditional of level i.

        The conditional is a truncated gamma: shape r_i + 1 from the events in
        segment i, rate combining the prior shot terms and the likelihood
        compensator, truncated below by the pre-shot level and above by the
        constraint on the next shot (+inf for the last segment).
        """
        if t_ref is None:
            t_ref = window.start
        lams, refs = _levels_and_refs(config, t_ref)
        k = config.k
        if not 0 <= i <= k:
            raise IndexError("segment index out of range")
        boundaries = [window.start, *config.taus, window.end]
        ref = refs[i]
        seg_lo, seg_hi = boundaries[i], boundaries[i + 1]
        r = window.count(seg_lo, seg_hi)
        kap = self.kappa
        z_lik = (math.exp(-kap * (seg_lo - ref)) - math.exp(-kap * (seg_hi - ref))) / kap
        if i < k:
            z_prior = self.alpha * (1.0 - math.exp(-kap * (seg_hi - ref)))
        else:
            z_prior = self.alpha
        rate = z_prior + z_lik
        lo = lams[i - 1] * math.exp(-kap * (config.taus[i - 1] - refs[i - 1])) if i >= 1 else 0.0
        hi = lams[i + 1] * math.exp(kap * (seg_hi - ref)) if i < k else math.inf
        if hi <= lo:
            raise InvalidConfigurationError("empty truncation interval for level conditional")
        return r + 1.0, rate, lo, hi

    def gibbs_level(
        self,
        i: int,
        config: ChangepointConfiguration,
        window: EventWindow,
        rng: np.random.Generator,
        t_ref: float | None = None,
    ) -> ChangepointConfiguration:
        """Resample level i from its full conditional (Gibbs move)."""
        shape, rate, lo, hi = self.conditional_params(i, config, window, t_ref=t_ref)
        new = truncated_gamma_sample(shape, rate, lo, hi, rng)
        thetas = list(config.thetas)
        thetas[i] = new
        return ChangepointConfiguration(config.taus, tuple(thetas))

    def intensity_at(
        self, config: ChangepointConfiguration, t: float, t_ref: float
    ) -> float:
        lams, refs = _levels_and_refs(config, t_ref)
        i = int(np.searchsorted(np.asarray(config.taus), t, side="left"))
        return float(lams[i] * math.exp(-self.kappa * (t - refs[i])))
