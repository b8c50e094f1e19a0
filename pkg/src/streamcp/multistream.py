"""Many independent SMC streams under a shared per-update particle budget.

At each update, streams are scored by the apparent complexity of their latest
window proposals; the global budget is split proportionally (with per-stream
floors) and each stream samples its allocated number of window proposals,
reconciling unequal particle counts by replication or modulo padding.  The
scoring rule is pluggable; the default combines the entropy of the proposed
new-changepoint counts with the variance of the incremental log weights.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .engine import SmcEngine, SmcSettings

__all__ = ["StreamBudget", "allocate", "complexity_score", "run_parallel"]


@dataclass(frozen=True)
class StreamBudget:
    """Global particle budget per update with a per-stream minimum."""

    total: int
    floor: int

    def __post_init__(self):
        if self.total < 1 or self.floor < 1:
            raise ValueError("budget and floor must be positive")


def allocate(scores, budget: StreamBudget) -> np.ndarray:
    """Split the budget across streams proportionally to their scores.

    Every stream gets at least the floor; the remainder is shared in
    proportion to the scores using largest-remainder rounding so the
    allocations always sum exactly to the total.
    """
    scores = np.asarray(scores, dtype=float)
    if np.any(scores < 0):
        raise ValueError("scores must be nonnegative")
    m = len(scores)
    if budget.floor * m > budget.total:
        raise ValueError("infeasible budget: floor * streams exceeds total")
    spare = budget.total - budget.floor * m
    total_score = scores.sum()
    shares = scores / total_score if total_score > 0 else np.full(m, 1.0 / m)
    ideal = spare * shares
    base = np.floor(ideal).astype(int)
    remainder = spare - base.sum()
    # largest fractional parts win the leftover units; ties -> lower index
    order = np.lexsort((np.arange(m), -(ideal - base)))
    base[order[:remainder]] += 1
    return budget.floor + base


def complexity_score(diagnostics: dict) -> float:
    """Default stream score: mean number of newly proposed changepoints plus
    the entropy of their count distribution plus the variance of the
    incremental log weights.  Zero when every proposal had no new changepoints
    and all weights matched.  The mean term matters: at a clear-cut change all
    proposals agree on one new changepoint, so entropy and weight variance
    collapse exactly when the stream most needs particles."""
    counts = np.asarray(diagnostics["window_k_counts"], dtype=float)
    total = counts.sum()
    entropy = mean_k = 0.0
    if total > 0:
        p = counts / total
        mean_k = float(np.dot(p, np.arange(len(p))))
        nz = p[p > 0]
        entropy = float(-np.sum(nz * np.log(nz)))
    return mean_k + entropy + float(diagnostics.get("inc_logw_var", 0.0))


def run_parallel(
    models,
    event_streams,
    update_times,
    budget: StreamBudget,
    settings: SmcSettings,
    seed: int,
    score_fn: Callable[[dict], float] = complexity_score,
) -> tuple[list[SmcEngine], list[dict]]:
    """Run one SMC stream per (model, events) pair under the shared budget.

    Per-stream RNGs are spawned from the master seed by stream index so each
    stream's results depend only on its own seed and allocation sequence.
    Returns the engines (with their states/histories) and a flat allocation
    log with one record per stream per update.
    """
    times = list(update_times)
    m = len(event_streams)
    if len(models) != m:
        raise ValueError("need one model per stream")
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(m)]
    engines = [
        SmcEngine(model, settings, events, rng)
        for model, events, rng in zip(models, event_streams, rngs)
    ]

    log: list[dict] = []
    # first update: no diagnostics yet, so allocate evenly
    alloc = allocate(np.zeros(m), budget)
    for j, eng in enumerate(engines):
        eng.initialize(times[0], count=int(alloc[j]))
        log.append(_log_row(0, j, 0.0, alloc[j], eng))

    for n, t in enumerate(times[1:], start=1):
        scores = np.array([score_fn(eng.state.history[-1]) for eng in engines])
        alloc = allocate(scores, budget)
        for j, eng in enumerate(engines):
            eng.update(t, n_window_draws=int(alloc[j]))
            log.append(_log_row(n, j, scores[j], alloc[j], eng))
    return engines, log


def _log_row(update: int, stream: int, score: float, allocation: int, eng: SmcEngine) -> dict:
    d = eng.state.history[-1]
    return {
        "update": update,
        "stream": stream,
        "score": float(score),
        "allocation": int(allocation),
        "ess": d["ess"],
        "resampled": d["resampled"],
    }
