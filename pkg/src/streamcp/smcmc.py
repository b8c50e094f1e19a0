"""Sequential MCMC benchmark: full-history RJMCMC at every update time.

At each update the chain targets the posterior over the whole record so far,
warm-started from the highest-density sample of the previous update.  Slow but
reliable; exists to provide reference curves for the SMC engine.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .models import ChainedGammaPrior, EventWindow, independent_gamma_log_density
from .rjmcmc import ConjugateChain, RjmcmcSettings, SncpChain

__all__ = ["SmcmcSettings", "smcmc_run"]


@dataclass
class SmcmcSettings:
    iterations: int = 100_000
    burn_in: int = 5_000
    keep: int = 2_000
    n_batches: int = 32
    rjmcmc: RjmcmcSettings = field(default_factory=RjmcmcSettings)


def _batch_se(values: np.ndarray, n_batches: int) -> float:
    """Batch-means standard error for an autocorrelated sample."""
    n = len(values) // n_batches
    if n < 1:
        return float(np.std(values) / math.sqrt(max(len(values), 1)))
    means = values[: n * n_batches].reshape(n_batches, n).mean(axis=1)
    return float(np.std(means, ddof=1) / math.sqrt(n_batches))


def smcmc_run(
    model,
    events,
    update_times,
    settings: SmcmcSettings,
    rng: np.random.Generator,
    chained_prior: ChainedGammaPrior | None = None,
) -> list[dict]:
    """Per-update posterior summaries from full-history RJMCMC.

    Returns one record per update time with the posterior mean of k and of the
    intensity at the update time, a batch-means standard error for the latter,
    and 5%/95% quantiles of sampled end intensities.  With ``chained_prior``
    set (conjugate models only), each kept sample is augmented with an
    intensity draw and reweighted onto the chained-gamma prior.
    """
    events = np.sort(np.asarray(events, dtype=float))
    s = settings
    map_state = None
    history: list[dict] = []
    for n_update, t_n in enumerate(update_times, start=1):
        window = EventWindow(events[(events > 0) & (events <= t_n)], 0.0, t_n)
        if model.conjugate:
            init = tuple(map_state.taus) if map_state is not None else ()
            chain = ConjugateChain(model, (0.0, t_n), window, s.rjmcmc, rng, init_taus=init)
        else:
            chain = SncpChain(model, (0.0, t_n), window, s.rjmcmc, rng, t_ref=0.0, init=map_state)
        for _ in range(s.burn_in):
            chain.sweep()
        thin = max(1, (s.iterations - s.burn_in) // s.keep)
        kept_cfg = []
        best_cfg, best_lp = None, -math.inf
        for i in range(s.iterations - s.burn_in):
            chain.sweep()
            if chain.log_target > best_lp:
                best_lp = chain.log_target
                best_cfg = chain.config() if model.conjugate else chain.state
            if (i + 1) % thin == 0:
                kept_cfg.append(chain.config() if model.conjugate else chain.state)
        map_state = best_cfg

        ks = np.array([c.k for c in kept_cfg], dtype=float)
        if model.conjugate:
            taus = np.array([c.last_tau for c in kept_cfg])
            r = np.searchsorted(events, t_n, side="right") - np.searchsorted(
                events, taus, side="right"
            )
            shape = model.alpha + r
            rate = model.beta + (t_n - taus)
            lam = shape / rate
            draws = rng.gamma(shape=shape, scale=1.0 / rate)
        else:
            lam = np.array([model.intensity_at(c, t_n, 0.0) for c in kept_cfg])
            draws = lam
        rec = {
            "n": n_update,
            "t": float(t_n),
            "mean_k": float(ks.mean()),
            "intensity_mean": float(lam.mean()),
            "intensity_se": _batch_se(lam, s.n_batches),
            "intensity_q05": float(np.quantile(draws, 0.05)),
            "intensity_q95": float(np.quantile(draws, 0.95)),
            "n_samples": len(kept_cfg),
        }
        if chained_prior is not None and model.conjugate:
            rec.update(_chained_summary(model, kept_cfg, window, chained_prior, rng))
        history.append(rec)
    return history


def _chained_summary(model, configs, window, chained_prior, rng):
    """Importance-reweight sampled intensities onto the chained-gamma prior."""
    log_w = np.empty(len(configs))
    lam_end = np.empty(len(configs))
    for i, cfg in enumerate(configs):
        lams = model.sample_intensities(cfg, window, rng)
        log_w[i] = chained_prior.log_density(lams) - independent_gamma_log_density(
            lams, model.alpha, model.beta
        )
        lam_end[i] = lams[-1]
    w = np.exp(log_w - log_w.max())
    w /= w.sum()
    return {
        "intensity_mean_chained": float(np.dot(w, lam_end)),
        "chained_ess": float(1.0 / np.sum(w**2)),
    }
