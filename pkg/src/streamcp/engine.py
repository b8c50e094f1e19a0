"""Sequential update loop for window-local changepoint SMC.

Each update estimates the most recent changepoint time t*, samples window
proposals by RJMCMC conditioned on data since t*, pairs them with the existing
particles under a uniform label permutation, applies the incremental
importance-weight correction, and resamples (with an optional restricted move
sweep) when the effective sample size drops below threshold.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp

from .models import EventWindow, PoissonGammaModel
from .particles import (
    ChangepointConfiguration,
    InvalidConfigurationError,
    WeightedParticleSet,
    log_ess,
    pad_new_particles,
    replicate_to,
    systematic_resample_indices,
)
from .rjmcmc import ConjugateChain, RjmcmcSettings, SncpChain
from .sncp import ShotNoiseCoxModel, merge_delta, truncated_gamma_logpdf

__all__ = ["SmcSettings", "UpdateWindow", "SmcState", "SmcEngine", "compute_t_star", "weighted_quantile"]


@dataclass(frozen=True)
class UpdateWindow:
    """One update step: (t_prev, t_now] with conditioning data from (t_star, t_now]."""

    t_prev: float
    t_now: float
    t_star: float
    data: EventWindow

    def __post_init__(self):
        if not self.t_star <= self.t_prev < self.t_now:
            raise ValueError("need t_star <= t_prev < t_now")


@dataclass
class SmcSettings:
    n_particles: int
    ess_threshold_frac: float = 1.0 / 3.0
    rjmcmc: RjmcmcSettings = field(default_factory=RjmcmcSettings)
    move_after_resample: bool = True
    move_sweeps: int = 1
    t_star_rule: str = "posterior_mean"  # "t_prev" reproduces the rejected alternative
    # window proposals come from this many independent chains; more chains
    # reduce the correlated-proposal error that a single chain leaves across
    # the whole particle set
    n_proposal_chains: int = 1


@dataclass
class SmcState:
    particle_set: WeightedParticleSet
    t_now: float
    history: list[dict] = field(default_factory=list)
    log_normalizer: float = 0.0


def compute_t_star(particle_set: WeightedParticleSet) -> float:
    """Weighted posterior-mean of the most recent changepoint (0 for k=0 particles)."""
    w = particle_set.normalized_weights()
    last = np.array([p.last_tau for p in particle_set.particles])
    return float(np.dot(w, last))


def weighted_quantile(values, weights, qs):
    """Quantiles of a weighted sample via the weighted empirical CDF."""
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    order = np.argsort(values)
    v, w = values[order], weights[order]
    cum = np.cumsum(w)
    cum /= cum[-1]
    idx = np.searchsorted(cum, np.asarray(qs, dtype=float), side="left")
    return v[np.minimum(idx, len(v) - 1)]


def combine_conjugate(
    old: ChangepointConfiguration, new: ChangepointConfiguration
) -> ChangepointConfiguration:
    """Concatenate an existing configuration with a window configuration."""
    return ChangepointConfiguration(old.taus + new.taus)


def combine_nonconjugate(
    old: ChangepointConfiguration,
    new: ChangepointConfiguration,
    t_prev: float,
    kappa: float,
) -> tuple[ChangepointConfiguration, float]:
    """Stitch shot-noise chains: shot-space identity merge with intensity shift.

    The old chain's final shot size is preserved; the window intercept becomes
    the retained auxiliary u.  New levels are shifted by the mismatch, just
    before the first new shot, between the decayed old chain and the decayed
    window intercept.  Returns (merged config, u); the merged config may
    violate the shot constraint, which surfaces as -inf weight downstream.
    """
    u = new.thetas[0]
    if new.k == 0:
        return old, u
    tau1 = new.taus[0]
    delta = merge_delta(old.thetas[-1], tau1 - old.last_tau, u, tau1 - t_prev, kappa)
    lams = old.thetas + tuple(lam + delta for lam in new.thetas[1:])
    taus = old.taus + new.taus
    if any(lam <= 0 for lam in lams):
        # keep the particle but flag it invalid via an unsatisfiable level
        return ChangepointConfiguration(taus, tuple(max(lam, 1e-300) for lam in lams)), u
    return ChangepointConfiguration(taus, lams), u


class SmcEngine:
    """Single-stream SMC over a growing horizon.

    Owns the full event record and an RNG; all randomness flows through the
    passed generator so runs are reproducible from a seed.
    """

    def __init__(self, model, settings: SmcSettings, events, rng: np.random.Generator):
        self.model = model
        self.settings = settings
        self.events = np.sort(np.asarray(events, dtype=float))
        self.rng = rng
        self.state: SmcState | None = None
        self._r_last: np.ndarray | None = None  # event count of each particle's last segment

    # -- helpers -----------------------------------------------------------
    def _count(self, a, b):
        lo, hi = np.searchsorted(self.events, [a, b], side="right")
        return hi - lo

    def _window(self, a: float, b: float) -> EventWindow:
        lo, hi = np.searchsorted(self.events, [a, b], side="right")
        return EventWindow(self.events[lo:hi], a, b)

    def _evidence_vec(self, r, delta):
        m = self.model
        if m.prior_only:
            return np.zeros(np.broadcast_shapes(np.shape(r), np.shape(delta)))
        r = np.asarray(r, dtype=float)
        delta = np.asarray(delta, dtype=float)
        return (
            m.alpha * math.log(m.beta)
            - gammaln(m.alpha)
            + gammaln(m.alpha + r)
            - (m.alpha + r) * np.log(m.beta + delta)
        )

    def _sample_window(self, interval, window, count, t_ref):
        """Window-posterior draws split across independent chains."""
        c = max(1, int(self.settings.n_proposal_chains))
        sizes = [count // c + (1 if i < count % c else 0) for i in range(c)]
        draws = []
        evals = 0
        for size in sizes:
            if size == 0:
                continue
            if self.model.conjugate:
                chain = ConjugateChain(
                    self.model, interval, window, self.settings.rjmcmc, self.rng
                )
            else:
                chain = SncpChain(
                    self.model, interval, window, self.settings.rjmcmc, self.rng, t_ref=t_ref
                )
            draws.extend(chain.sample(size))
            evals += chain.eval_count
        return draws, evals

    # -- initialization ------------------------------------------------------
    def initialize(self, t1: float, count: int | None = None):
        n = count or self.settings.n_particles
        window = self._window(0.0, t1)
        particles, evals = self._sample_window((0.0, t1), window, n, 0.0)
        pset = WeightedParticleSet(particles, np.zeros(n))
        self.state = SmcState(pset, t1)
        if self.model.conjugate:
            self._r_last = np.array([self._count(p.last_tau, t1) for p in particles])
        self._record_diagnostics(
            t_star=0.0,
            resampled=False,
            unique_pre=len(set(particles)),
            window_k=np.array([p.k for p in particles]),
            inc_logw=np.zeros(n),
            n_window_events=window.events.size,
            eval_count=evals,
        )
        return self.state

    # -- one update ----------------------------------------------------------
    def update(self, t_now: float, n_window_draws: int | None = None):
        state = self.state
        if state is None:
            raise RuntimeError("initialize() must be called before update()")
        t_prev = state.t_now
        if t_now <= t_prev:
            raise ValueError("update times must be strictly increasing")
        pset = state.particle_set
        n_old = len(pset)
        m = n_window_draws or n_old

        if self.settings.t_star_rule == "t_prev":
            t_star = t_prev
        else:
            t_star = min(compute_t_star(pset), t_prev)
        window = self._window(t_star, t_now)

        # window-local proposals
        proposals, evals = self._sample_window((t_prev, t_now), window, m, t_prev)
        window_k = np.array([p.k for p in proposals])

        # reconcile unequal counts, then pair under a uniform permutation
        if m > n_old:
            pset = replicate_to(pset, m)
            if self.model.conjugate:
                self._r_last = np.array([self._count(p.last_tau, t_prev) for p in pset.particles])
        elif m < n_old:
            proposals = pad_new_particles(proposals, n_old)
        n = max(n_old, m)
        sigma = self.rng.permutation(n)
        proposals = [proposals[j] for j in sigma]

        if self.model.conjugate:
            combined, inc = self._combine_weight_conjugate(pset, proposals, t_prev, t_now, t_star)
        else:
            combined, inc = self._combine_weight_sncp(
                pset, proposals, t_prev, t_now, t_star, window
            )

        log_w_prev = pset.log_weights
        log_w = log_w_prev + inc
        state.log_normalizer += float(logsumexp(log_w) - logsumexp(log_w_prev))
        pset = WeightedParticleSet(combined, log_w)
        state.particle_set = pset
        state.t_now = t_now

        ess_now = log_ess(log_w)
        unique_pre = len(set(combined))
        resampled = ess_now < self.settings.ess_threshold_frac * n
        if resampled:
            idx = systematic_resample_indices(pset.weights(), n, self.rng)
            particles = [pset.particles[i] for i in idx]
            if self._r_last is not None:
                self._r_last = self._r_last[idx]
            pset = WeightedParticleSet(particles, np.zeros(n))
            state.particle_set = pset
            if self.settings.move_after_resample and self.model.conjugate:
                self._move_step(t_star, t_now)
        self._record_diagnostics(
            t_star=t_star,
            resampled=resampled,
            unique_pre=unique_pre,
            window_k=window_k,
            inc_logw=inc,
            n_window_events=window.events.size,
            eval_count=evals,
            ess=ess_now,
        )
        return state

    def run(self, update_times) -> SmcState:
        times = list(update_times)
        self.initialize(times[0])
        for t in times[1:]:
            self.update(t)
        return self.state

    # -- weighting -------------------------------------------------------------
    def _combine_weight_conjugate(self, pset, proposals, t_prev, t_now, t_star):
        old = pset.particles
        tau_k = np.array([p.last_tau for p in old])
        r_last = self._r_last
        new_k = np.array([p.k for p in proposals])
        b_c = np.array([p.taus[0] if p.k else t_now for p in proposals])
        r_mid = np.searchsorted(self.events, b_c, side="right") - np.searchsorted(
            self.events, t_prev, side="right"
        )
        r_w = np.searchsorted(self.events, b_c, side="right") - np.searchsorted(
            self.events, t_star, side="right"
        )
        r_c = r_last + r_mid
        inc = (
            self._evidence_vec(r_c, b_c - tau_k)
            - self._evidence_vec(r_last, t_prev - tau_k)
            - self._evidence_vec(r_w, b_c - t_star)
        )
        combined = [combine_conjugate(o, p) for o, p in zip(old, proposals)]
        # roll the last-segment cache forward: k=0 proposals extend the old last
        # segment to t_now (already counted in r_c); otherwise count from the
        # newest changepoint
        last_new = np.array([p.last_tau for p in proposals])
        r_from_new = np.searchsorted(self.events, t_now, side="right") - np.searchsorted(
            self.events, last_new, side="right"
        )
        self._r_last = np.where(new_k > 0, r_from_new, r_c).astype(int)
        return combined, inc

    def _combine_weight_sncp(self, pset, proposals, t_prev, t_now, t_star, window):
        model: ShotNoiseCoxModel = self.model
        full = self._window(0.0, t_now)
        old_full = self._window(0.0, t_prev)
        combined = []
        inc = np.empty(len(pset))
        for i, (o, p) in enumerate(zip(pset.particles, proposals)):
            merged, u = combine_nonconjugate(o, p, t_prev, model.kappa)
            combined.append(merged)
            num = model.log_gamma(merged, full, cp_interval=(0.0, t_now), t_ref=0.0)
            if not math.isfinite(num):
                inc[i] = -math.inf
                continue
            try:
                shape, rate, lo, hi = model.conditional_params(0, p, window, t_ref=t_prev)
                log_pi_u = truncated_gamma_logpdf(u, shape, rate, lo, hi)
            except (InvalidConfigurationError, ValueError):
                inc[i] = -math.inf
                continue
            den_old = model.log_gamma(o, old_full, cp_interval=(0.0, t_prev), t_ref=0.0)
            den_new = model.log_gamma(p, window, cp_interval=(t_prev, t_now), t_ref=t_prev)
            inc[i] = num + log_pi_u - den_old - den_new  # |J_s| = 1 for the identity map
        return combined, inc

    # -- post-resampling move ---------------------------------------------------
    def _move_step(self, t_star: float, t_now: float):
        """One restricted RJMCMC sweep per particle targeting the full posterior,
        touching only changepoints in (t_star, t_now)."""
        pset = self.state.particle_set
        full = self._window(0.0, t_now)
        moved = []
        for p in pset.particles:
            frozen = tuple(t for t in p.taus if t <= t_star)
            movable = tuple(t for t in p.taus if t > t_star)
            chain = ConjugateChain(
                self.model,
                (t_star, t_now),
                full,
                self.settings.rjmcmc,
                self.rng,
                init_taus=movable,
                frozen_taus=frozen,
            )
            for _ in range(self.settings.move_sweeps):
                chain.sweep()
            moved.append(chain.config())
        self.state.particle_set = WeightedParticleSet(moved, pset.log_weights.copy())
        self._r_last = np.array([self._count(p.last_tau, t_now) for p in moved])

    # -- diagnostics -----------------------------------------------------------
    def _record_diagnostics(
        self,
        t_star,
        resampled,
        unique_pre,
        window_k,
        inc_logw,
        n_window_events,
        eval_count,
        ess=None,
    ):
        state = self.state
        pset = state.particle_set
        w = pset.normalized_weights()
        mean, q05, q95 = self._intensity_summary(pset, w, state.t_now)
        ks = np.array([p.k for p in pset.particles])
        finite = np.isfinite(inc_logw)
        k_counts = np.bincount(window_k) if window_k.size else np.array([0])
        state.history.append(
            {
                "n": len(state.history) + 1,
                "t": state.t_now,
                "t_star": t_star,
                "ess": float(ess if ess is not None else pset.ess()),
                "resampled": bool(resampled),
                "unique_pre": int(unique_pre),
                "unique_post": len(set(pset.particles)),
                "mean_k": float(np.dot(w, ks)),
                "intensity_mean": mean,
                "intensity_q05": q05,
                "intensity_q95": q95,
                "window_k_counts": k_counts,
                "inc_logw_var": float(np.var(inc_logw[finite])) if finite.any() else 0.0,
                "n_window_events": int(n_window_events),
                "eval_count": int(eval_count),
                "n_particles": len(pset),
            }
        )

    def _intensity_summary(self, pset, w, t_now):
        if self.model.conjugate:
            if self.model.prior_only:
                return float("nan"), float("nan"), float("nan")
            taus = np.array([p.last_tau for p in pset.particles])
            r = self._r_last
            shape = self.model.alpha + r
            rate = self.model.beta + (t_now - taus)
            mean = float(np.dot(w, shape / rate))
            draws = self.rng.gamma(shape=shape, scale=1.0 / rate)
            q05, q95 = weighted_quantile(draws, w, [0.05, 0.95])
        else:
            vals = np.array(
                [self.model.intensity_at(p, t_now, 0.0) for p in pset.particles]
            )
            mean = float(np.dot(w, vals))
            q05, q95 = weighted_quantile(vals, w, [0.05, 0.95])
        return mean, float(q05), float(q95)
