"""Synthetic event-stream generators with recorded ground truth."""
from __future__ import annotations

import numpy as np

__all__ = ["simulate_piecewise_poisson", "simulate_sncp"]


def simulate_piecewise_poisson(
    changepoints,
    rates,
    horizon: float,
    rng: np.random.Generator,
    method: str = "inversion",
) -> tuple[np.ndarray, dict]:
    """Events from a piecewise-constant-rate Poisson process on (0, horizon].

    ``method`` selects between exponential-gap simulation per segment
    ("inversion") and global thinning against the maximum rate ("thinning");
    the two are distributionally identical and cross-checked in tests.
    """
    changepoints = list(changepoints)
    rates = list(rates)
    if len(rates) != len(changepoints) + 1:
        raise ValueError("need one rate per segment (len(changepoints) + 1)")
    if any(r < 0 for r in rates):
        raise ValueError("rates must be nonnegative")
    bounds = [0.0, *changepoints, horizon]
    if sorted(bounds) != bounds:
        raise ValueError("changepoints must be increasing and inside (0, horizon)")

    if method == "inversion":
        events = []
        for lo, hi, rate in zip(bounds, bounds[1:], rates):
            if rate == 0:
                continue
            t = lo
            while True:
                t += rng.exponential(1.0 / rate)
                if t > hi:
                    break
                events.append(t)
        events = np.array(events)
    elif method == "thinning":
        lam_max = max(rates)
        n = rng.poisson(lam_max * horizon)
        cand = np.sort(rng.uniform(0.0, horizon, size=n))
        seg = np.searchsorted(np.asarray(changepoints), cand, side="left")
        keep = rng.uniform(size=n) < np.asarray(rates)[seg] / lam_max
        events = cand[keep]
    else:
        raise ValueError(f"unknown method {method!r}")
    truth = {"changepoints": list(changepoints), "rates": list(rates)}
    return events, truth


def simulate_sncp(
    nu: float,
    kappa: float,
    alpha: float,
    horizon: float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, dict]:
    """Events from a shot-noise Cox process on (0, horizon].

    Shots arrive at rate nu; each adds an Exp(alpha) jump to the exponentially
    decaying intensity.  Events are generated by thinning per inter-shot
    segment, where the post-shot level bounds the intensity.
    """
    n_shots = rng.poisson(nu * horizon)
    shot_times = np.sort(rng.uniform(0.0, horizon, size=n_shots))
    lam0 = rng.exponential(1.0 / alpha)
    levels = [lam0]
    prev_t, prev_lam = 0.0, lam0
    for t in shot_times:
        pre = prev_lam * np.exp(-kappa * (t - prev_t))
        lam = pre + rng.exponential(1.0 / alpha)
        levels.append(lam)
        prev_t, prev_lam = t, lam
    levels = np.asarray(levels)

    bounds = [0.0, *shot_times, horizon]
    refs = [0.0, *shot_times]
    events = []
    for lam, ref, lo, hi in zip(levels, refs, bounds, bounds[1:]):
        n = rng.poisson(lam * (hi - lo))
        cand = np.sort(rng.uniform(lo, hi, size=n))
        keep = rng.uniform(size=n) < np.exp(-kappa * (cand - ref))
        events.extend(cand[keep])
    truth = {"shot_times": list(shot_times), "levels": list(levels), "lam0": float(lam0)}
    return np.array(events), truth
