"""Event-file and configuration parsing plus CSV result emission.

All CSVs have a fixed header and 17-significant-digit decimal floats so that
identical runs produce byte-identical output.
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

__all__ = [
    "EventFileError",
    "load_events",
    "save_events",
    "load_config",
    "emit_results",
    "emit_allocations",
]


class EventFileError(ValueError):
    """An event file could not be parsed."""


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def load_events(path, strict: bool = False) -> np.ndarray:
    """Read newline-delimited decimal event times.

    Unsorted files are sorted unless ``strict`` is set, in which case they are
    rejected.  Blank lines are ignored; an empty file is an empty stream.
    """
    events = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            try:
                events.append(float(text))
            except ValueError:
                raise EventFileError(f"{path}: unparseable event time at line {lineno}: {text!r}")
    arr = np.asarray(events, dtype=float)
    if arr.size and np.any(np.diff(arr) < 0):
        if strict:
            raise EventFileError(f"{path}: event times are not sorted (strict mode)")
        arr = np.sort(arr)
    return arr


def save_events(path, events):
    with open(path, "w") as fh:
        for t in np.asarray(events, dtype=float):
            fh.write(_fmt(t) + "\n")


def load_config(path) -> dict[str, str]:
    """Parse a plain key=value config file; later keys override earlier ones."""
    out: dict[str, str] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            if "=" not in text:
                raise EventFileError(f"{path}: expected key=value at line {lineno}: {text!r}")
            key, _, value = text.partition("=")
            out[key.strip()] = value.strip()
    return out


def _write_csv(path: Path, header: list[str], rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])


def emit_results(history: list[dict], out_dir) -> list[Path]:
    """Write the per-update diagnostic CSVs for one stream run."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    path = out / "intensity.csv"
    _write_csv(
        path,
        ["update_time", "mean_intensity", "q05", "q95"],
        [(d["t"], d["intensity_mean"], d["intensity_q05"], d["intensity_q95"]) for d in history],
    )
    written.append(path)

    path = out / "ess.csv"
    _write_csv(
        path,
        ["update_time", "ess", "resampled"],
        [(d["t"], d["ess"], d["resampled"]) for d in history],
    )
    written.append(path)

    path = out / "unique_particles.csv"
    _write_csv(
        path,
        ["update_time", "unique_pre", "unique_post"],
        [(d["t"], d["unique_pre"], d["unique_post"]) for d in history],
    )
    written.append(path)
    return written


def emit_allocations(log: list[dict], out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "allocations.csv"
    _write_csv(
        path,
        ["update", "stream", "score", "allocation", "ess", "resampled"],
        [
            (r["update"], r["stream"], r["score"], r["allocation"], r["ess"], r["resampled"])
            for r in log
        ],
    )
    return path


def emit_compare(smc_history: list[dict], smcmc_history: list[dict], out_dir) -> Path:
    """Side-by-side intensity curves from the SMC engine and the SMCMC baseline."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "compare.csv"
    rows = []
    for s, b in zip(smc_history, smcmc_history):
        band = 3.0 * b["intensity_se"]
        rows.append(
            (
                s["t"],
                s["intensity_mean"],
                b["intensity_mean"],
                b["intensity_se"],
                abs(s["intensity_mean"] - b["intensity_mean"]) <= band,
            )
        )
    _write_csv(
        path, ["update_time", "smc_mean", "smcmc_mean", "smcmc_se", "within_3se"], rows
    )
    return path
