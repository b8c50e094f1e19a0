"""Reversible-jump MCMC over changepoint configurations on an interval.

Two kernels: a conjugate chain working on marginalized changepoint posteriors
with cached per-segment evidences (O(1) moves), and a shot-noise chain over
joint (changepoints, levels) states.  Both condition on a data window that may
start earlier than the interval the changepoints live on.
"""
from __future__ import annotations

import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field

import numpy as np

from .models import EventWindow, PoissonGammaModel
from .particles import ChangepointConfiguration, InvalidConfigurationError
from .sncp import (
    ShotNoiseCoxModel,
    truncated_gamma_logpdf,
    truncated_gamma_sample,
)

__all__ = [
    "RjmcmcSettings",
    "BirthProposal",
    "UniformBirth",
    "ConjugateChain",
    "SncpChain",
    "sample_window_posterior",
]


@dataclass(frozen=True)
class RjmcmcSettings:
    """Sweep counts and move mixture for a sampler run.

    ``move_probabilities`` is (birth, death, shift, height); height moves are
    Gibbs level updates and only apply to non-conjugate chains (a no-op
    otherwise, which keeps the mixture constants state-independent).
    """

    iterations: int = 2000
    burn_in: int = 500
    move_probabilities: tuple[float, float, float, float] = (0.35, 0.35, 0.2, 0.1)
    data_driven_birth: bool = False
    birth_bin_width: float | None = None
    birth_smoothing: float = 1.0

    def __post_init__(self):
        p = self.move_probabilities
        if len(p) != 4 or any(x < 0 for x in p) or abs(sum(p) - 1.0) > 1e-9:
            raise ValueError("move probabilities must be nonnegative and sum to 1")
        if not self.iterations > self.burn_in >= 0:
            raise ValueError("need iterations > burn_in >= 0")


class UniformBirth:
    """Uniform birth-location proposal on (a, b)."""

    def __init__(self, a: float, b: float):
        self.a, self.b = a, b
        self._logpdf = -math.log(b - a)

    def sample(self, rng: np.random.Generator) -> float:
        return rng.uniform(self.a, self.b)

    def logpdf(self, t: float) -> float:
        return self._logpdf if self.a < t < self.b else -math.inf


class BirthProposal:
    """Data-driven birth location: piecewise-constant density over bins of
    (a, b), proportional to bin event count + smoothing."""

    def __init__(self, a: float, b: float, events, bin_width: float, smoothing: float = 1.0):
        if bin_width <= 0 or smoothing <= 0:
            raise ValueError("bin_width and smoothing must be positive")
        self.a, self.b = a, b
        n_bins = max(1, int(math.ceil((b - a) / bin_width)))
        self.edges = np.linspace(a, b, n_bins + 1)
        ev = np.asarray(events, dtype=float)
        ev = ev[(ev > a) & (ev <= b)]
        counts = np.histogram(ev, bins=self.edges)[0] + smoothing
        widths = np.diff(self.edges)
        self.probs = counts / counts.sum()
        self.log_dens = np.log(self.probs / widths)

    def sample(self, rng: np.random.Generator) -> float:
        j = rng.choice(len(self.probs), p=self.probs)
        return rng.uniform(self.edges[j], self.edges[j + 1])

    def logpdf(self, t: float) -> float:
        if not self.a < t < self.b:
            return -math.inf
        j = min(int(np.searchsorted(self.edges, t, side="right")) - 1, len(self.probs) - 1)
        return float(self.log_dens[j])


def _make_birth_proposal(settings: RjmcmcSettings, a: float, b: float, window: EventWindow):
    if settings.data_driven_birth:
        width = settings.birth_bin_width or (b - a) / 20.0
        return BirthProposal(a, b, window.events, width, settings.birth_smoothing)
    return UniformBirth(a, b)


class ConjugateChain:
    """RJMCMC kernel for marginalized (conjugate) changepoint posteriors.

    Changepoints live in ``cp_interval`` = (a, b); data segments span the full
    window, whose start may precede a.  ``frozen_taus`` fixes an immutable
    prefix of earlier changepoints (used by the post-resampling move step to
    restrict the kernel to recent times while targeting the full posterior).
    """

    def __init__(
        self,
        model: PoissonGammaModel,
        cp_interval: tuple[float, float],
        window: EventWindow,
        settings: RjmcmcSettings,
        rng: np.random.Generator,
        init_taus=(),
        frozen_taus=(),
    ):
        self.model = model
        self.a, self.b = cp_interval
        if self.b <= self.a:
            raise ValueError("zero-length changepoint interval")
        self.window = window
        self.settings = settings
        self.rng = rng
        self.frozen = list(frozen_taus)
        if any(t >= self.a for t in self.frozen):
            raise InvalidConfigurationError("frozen changepoints must precede the interval")
        self.taus = [t for t in init_taus if t > self.a]
        if sorted(self.taus) != self.taus:
            raise InvalidConfigurationError("initial changepoints must be sorted")
        self.birth = _make_birth_proposal(settings, self.a, self.b, window)
        self.eval_count = 0
        self._rebuild_cache()

    # -- segment cache ---------------------------------------------------
    def _boundaries(self) -> list[float]:
        return [self.window.start, *self.frozen, *self.taus, self.window.end]

    def _rebuild_cache(self):
        bounds = self._boundaries()
        self.seg_r = [self.window.count(lo, hi) for lo, hi in zip(bounds, bounds[1:])]
        self.seg_ev = [
            self._evidence(r, hi - lo) for r, (lo, hi) in zip(self.seg_r, zip(bounds, bounds[1:]))
        ]
        self.log_target = self._prior_log() + sum(self.seg_ev)

    def _evidence(self, r: int, delta: float) -> float:
        self.eval_count += 1
        return self.model.segment_log_evidence(r, delta)

    def _prior_log(self) -> float:
        k = len(self.frozen) + len(self.taus)
        return k * math.log(self.model.nu) - self.model.nu * (self.window.end - self.a)

    @property
    def k_movable(self) -> int:
        return len(self.taus)

    def config(self) -> ChangepointConfiguration:
        return ChangepointConfiguration(tuple(self.frozen) + tuple(self.taus))

    # -- moves -------------------------------------------------------------
    def _seg_index(self, tau: float) -> int:
        """Index of the data segment containing time tau."""
        return bisect_left(self.frozen + self.taus, tau)

    def birth_move(self) -> bool:
        tau = self.birth.sample(self.rng)
        if not self.a < tau < self.b or tau in self.taus:
            return False
        j = self._seg_index(tau)
        bounds = self._boundaries()
        lo, hi = bounds[j], bounds[j + 1]
        r_left = self.window.count(lo, tau)
        r_right = self.seg_r[j] - r_left
        ev_left = self._evidence(r_left, tau - lo)
        ev_right = self._evidence(r_right, hi - tau)
        d_target = math.log(self.model.nu) + ev_left + ev_right - self.seg_ev[j]
        p_b, p_d = self.settings.move_probabilities[:2]
        log_acc = (
            d_target
            + math.log(p_d)
            - math.log(self.k_movable + 1)
            - math.log(p_b)
            - self.birth.logpdf(tau)
        )
        if math.log(self.rng.uniform()) < log_acc:
            self.taus.insert(j - len(self.frozen), tau)
            self.seg_r[j : j + 1] = [r_left, r_right]
            self.seg_ev[j : j + 1] = [ev_left, ev_right]
            self.log_target += d_target
            return True
        return False

    def death_move(self) -> bool:
        if self.k_movable == 0:
            return False
        jm = int(self.rng.integers(self.k_movable))
        j = jm + len(self.frozen)  # segment index left of the removed changepoint
        tau = self.taus[jm]
        bounds = self._boundaries()
        lo, hi = bounds[j], bounds[j + 2]
        r = self.seg_r[j] + self.seg_r[j + 1]
        ev = self._evidence(r, hi - lo)
        d_target = -math.log(self.model.nu) + ev - self.seg_ev[j] - self.seg_ev[j + 1]
        p_b, p_d = self.settings.move_probabilities[:2]
        log_acc = (
            d_target
            + math.log(p_b)
            + self.birth.logpdf(tau)
            - math.log(p_d)
            + math.log(self.k_movable)
        )
        if math.log(self.rng.uniform()) < log_acc:
            del self.taus[jm]
            self.seg_r[j : j + 2] = [r]
            self.seg_ev[j : j + 2] = [ev]
            self.log_target += d_target
            return True
        return False

    def shift_move(self) -> bool:
        if self.k_movable == 0:
            return False
        jm = int(self.rng.integers(self.k_movable))
        j = jm + len(self.frozen)
        left = self.taus[jm - 1] if jm >= 1 else self.a
        right = self.taus[jm + 1] if jm + 1 < self.k_movable else self.b
        tau_new = self.rng.uniform(left, right)
        bounds = self._boundaries()
        seg_lo, seg_hi = bounds[j], bounds[j + 2]
        r_left = self.window.count(seg_lo, tau_new)
        r_right = self.seg_r[j] + self.seg_r[j + 1] - r_left
        ev_left = self._evidence(r_left, tau_new - seg_lo)
        ev_right = self._evidence(r_right, seg_hi - tau_new)
        d_target = ev_left + ev_right - self.seg_ev[j] - self.seg_ev[j + 1]
        if math.log(self.rng.uniform()) < d_target:
            self.taus[jm] = tau_new
            self.seg_r[j : j + 2] = [r_left, r_right]
            self.seg_ev[j : j + 2] = [ev_left, ev_right]
            self.log_target += d_target
            return True
        return False

    def sweep(self):
        p = self.settings.move_probabilities
        u = self.rng.uniform()
        if u < p[0]:
            self.birth_move()
        elif u < p[0] + p[1]:
            self.death_move()
        elif u < p[0] + p[1] + p[2]:
            self.shift_move()
        # height move: no-op for conjugate targets

    def sample(self, count: int, keep_log_target: bool = False):
        """Run the chain and return ``count`` evenly thinned post-burn-in draws."""
        s = self.settings
        total = max(s.iterations, s.burn_in + count)
        for _ in range(s.burn_in):
            self.sweep()
        kept = total - s.burn_in
        pick = set((np.floor((np.arange(1, count + 1) * kept) / count) - 1).astype(int))
        draws = []
        for i in range(kept):
            self.sweep()
            if i in pick:
                cfg = self.config()
                draws.append((cfg, self.log_target) if keep_log_target else cfg)
        # duplicate-pick indices collapse in the set; top up from the end state
        while len(draws) < count:
            cfg = self.config()
            draws.append((cfg, self.log_target) if keep_log_target else cfg)
        return draws


class SncpChain:
    """RJMCMC kernel for the joint (shots, levels) shot-noise Cox posterior.

    The first level is pinned at ``t_ref`` (the interval start for full-history
    chains, the previous update time for window-local chains).  Target density
    is recomputed over the window per proposal; window data are small by
    construction so this stays cheap.
    """

    def __init__(
        self,
        model: ShotNoiseCoxModel,
        cp_interval: tuple[float, float],
        window: EventWindow,
        settings: RjmcmcSettings,
        rng: np.random.Generator,
        t_ref: float | None = None,
        init: ChangepointConfiguration | None = None,
    ):
        self.model = model
        self.a, self.b = cp_interval
        if self.b <= self.a:
            raise ValueError("zero-length changepoint interval")
        self.window = window
        self.settings = settings
        self.rng = rng
        self.t_ref = self.a if t_ref is None else t_ref
        self.birth = _make_birth_proposal(settings, self.a, self.b, window)
        if init is None:
            init = ChangepointConfiguration((), (rng.exponential(1.0 / model.alpha),))
        self.state = init
        self.eval_count = 0
        self.log_target = self._log_gamma(init)

    def _log_gamma(self, config: ChangepointConfiguration) -> float:
        self.eval_count += 1
        return self.model.log_gamma(
            config, self.window, cp_interval=(self.a, self.b), t_ref=self.t_ref
        )

    @property
    def k(self) -> int:
        return self.state.k

    def _accept(self, proposal: ChangepointConfiguration, log_hastings: float) -> bool:
        log_gamma_new = self._log_gamma(proposal)
        if not math.isfinite(log_gamma_new):
            return False
        log_acc = log_gamma_new - self.log_target + log_hastings
        if math.log(self.rng.uniform()) < log_acc:
            self.state = proposal
            self.log_target = log_gamma_new
            return True
        return False

    def birth_move(self) -> bool:
        tau = self.birth.sample(self.rng)
        if not self.a < tau < self.b or tau in self.state.taus:
            return False
        j = bisect_left(self.state.taus, tau)  # segment being split
        taus = list(self.state.taus)
        lams = list(self.state.thetas)
        taus.insert(j, tau)
        lams.insert(j + 1, 1.0)  # placeholder; conditional ignores the slot itself
        trial = ChangepointConfiguration(tuple(taus), tuple(lams))
        try:
            shape, rate, lo, hi = self.model.conditional_params(
                j + 1, trial, self.window, t_ref=self.t_ref
            )
        except InvalidConfigurationError:
            return False
        lam_new = truncated_gamma_sample(shape, rate, lo, hi, self.rng)
        lams[j + 1] = lam_new
        proposal = ChangepointConfiguration(tuple(taus), tuple(lams))
        p_b, p_d = self.settings.move_probabilities[:2]
        log_h = (
            math.log(p_d)
            - math.log(self.k + 1)
            - math.log(p_b)
            - self.birth.logpdf(tau)
            - truncated_gamma_logpdf(lam_new, shape, rate, lo, hi)
        )
        return self._accept(proposal, log_h)

    def death_move(self) -> bool:
        if self.k == 0:
            return False
        j = int(self.rng.integers(self.k))
        tau = self.state.taus[j]
        lam = self.state.thetas[j + 1]
        try:
            shape, rate, lo, hi = self.model.conditional_params(
                j + 1, self.state, self.window, t_ref=self.t_ref
            )
        except InvalidConfigurationError:
            return False
        taus = list(self.state.taus)
        lams = list(self.state.thetas)
        del taus[j]
        del lams[j + 1]
        proposal = ChangepointConfiguration(tuple(taus), tuple(lams))
        p_b, p_d = self.settings.move_probabilities[:2]
        log_h = (
            math.log(p_b)
            + self.birth.logpdf(tau)
            + truncated_gamma_logpdf(lam, shape, rate, lo, hi)
            - math.log(p_d)
            + math.log(self.k)
        )
        return self._accept(proposal, log_h)

    def shift_move(self) -> bool:
        if self.k == 0:
            return False
        j = int(self.rng.integers(self.k))
        left = self.state.taus[j - 1] if j >= 1 else self.a
        right = self.state.taus[j + 1] if j + 1 < self.k else self.b
        tau_new = self.rng.uniform(left, right)
        taus = list(self.state.taus)
        taus[j] = tau_new
        proposal = ChangepointConfiguration(tuple(taus), self.state.thetas)
        return self._accept(proposal, 0.0)

    def height_move(self) -> bool:
        i = int(self.rng.integers(self.k + 1))
        try:
            new = self.model.gibbs_level(i, self.state, self.window, self.rng, t_ref=self.t_ref)
        except InvalidConfigurationError:
            return False
        self.state = new
        self.log_target = self._log_gamma(new)
        return True

    def sweep(self):
        p = self.settings.move_probabilities
        u = self.rng.uniform()
        if u < p[0]:
            self.birth_move()
        elif u < p[0] + p[1]:
            self.death_move()
        elif u < p[0] + p[1] + p[2]:
            self.shift_move()
        else:
            self.height_move()

    def sample(self, count: int) -> list[ChangepointConfiguration]:
        s = self.settings
        total = max(s.iterations, s.burn_in + count)
        for _ in range(s.burn_in):
            self.sweep()
        kept = total - s.burn_in
        pick = set((np.floor((np.arange(1, count + 1) * kept) / count) - 1).astype(int))
        draws: list[ChangepointConfiguration] = []
        for i in range(kept):
            self.sweep()
            if i in pick:
                draws.append(self.state)
        while len(draws) < count:
            draws.append(self.state)
        return draws


def sample_window_posterior(
    model,
    interval: tuple[float, float],
    data_window: EventWindow,
    settings: RjmcmcSettings,
    count: int,
    rng: np.random.Generator,
    t_ref: float | None = None,
) -> list[ChangepointConfiguration]:
    """Draw ``count`` configurations from the window-local posterior of changepoints
    on ``interval``, conditioning on ``data_window`` (which may start earlier)."""
    if model.conjugate:
        chain = ConjugateChain(model, interval, data_window, settings, rng)
    else:
        chain = SncpChain(model, interval, data_window, settings, rng, t_ref=t_ref)
    return chain.sample(count)
