"""Command-line interface.

Subcommands: ``simulate`` (synthetic streams), ``run`` (single-stream SMC),
``smcmc`` (full-history baseline), ``multi`` (budgeted parallel streams) and
``compare`` (SMC vs SMCMC curves).  Options can come from a key=value config
file (--config); explicit flags override the file.

Exit codes: 0 success, 1 bad input, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .engine import SmcEngine, SmcSettings
from .io import (
    EventFileError,
    emit_allocations,
    emit_compare,
    emit_results,
    load_config,
    load_events,
    save_events,
)
from .models import PoissonGammaModel
from .multistream import StreamBudget, run_parallel
from .rjmcmc import RjmcmcSettings
from .simulate import simulate_piecewise_poisson, simulate_sncp
from .smcmc import SmcmcSettings, smcmc_run
from .sncp import ShotNoiseCoxModel


class CliError(ValueError):
    """Bad command-line input."""


def _add_model_args(p: argparse.ArgumentParser):
    p.add_argument("--model", choices=["conjugate", "sncp"], default=None)
    p.add_argument("--nu", type=float, default=None, help="changepoint/shot rate")
    p.add_argument("--alpha", type=float, default=None, help="gamma shape (conjugate) or exponential rate (sncp)")
    p.add_argument("--beta", type=float, default=None, help="gamma rate (conjugate)")
    p.add_argument("--kappa", type=float, default=None, help="decay rate (sncp)")
    p.add_argument("--prior-only", action="store_true", help="force the likelihood constant")


def _add_grid_args(p: argparse.ArgumentParser):
    p.add_argument("--updates", type=int, default=None, help="number of update intervals")
    p.add_argument("--horizon", type=float, default=None, help="final observation time")
    p.add_argument("--update-times", default=None, help="comma-separated explicit update times")


def _add_rjmcmc_args(p: argparse.ArgumentParser):
    p.add_argument("--sweeps", type=int, default=None, help="RJMCMC sweeps per window")
    p.add_argument("--burn-in", type=int, default=None)
    p.add_argument("--data-driven-birth", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="streamcp")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic event stream")
    p.add_argument("--kind", choices=["piecewise-poisson", "shot-noise-cox"], required=True)
    p.add_argument("--rates", default=None, help="comma-separated segment rates")
    p.add_argument("--changepoints", default=None, help="comma-separated changepoint times")
    p.add_argument("--nu", type=float, default=None)
    p.add_argument("--kappa", type=float, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--horizon", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="event file to write")
    p.add_argument("--truth", default=None, help="optional ground-truth file to write")

    for name in ("run", "smcmc", "compare"):
        p = sub.add_parser(name)
        p.add_argument("--events", required=True)
        p.add_argument("--config", default=None)
        _add_model_args(p)
        _add_grid_args(p)
        _add_rjmcmc_args(p)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out-dir", default=None)
        p.add_argument("--no-plots", action="store_true")
        if name in ("run", "compare"):
            p.add_argument("--particles", type=int, default=None)
            p.add_argument("--ess-threshold", type=float, default=None, help="resampling threshold as a fraction of N")
            p.add_argument("--t-star-rule", choices=["posterior_mean", "t_prev"], default=None)
            p.add_argument("--no-move", action="store_true", help="skip the post-resampling move sweep")
            p.add_argument("--proposal-chains", type=int, default=None, help="independent chains for window proposals")
        if name in ("smcmc", "compare"):
            p.add_argument("--iterations", type=int, default=None, help="SMCMC iterations per update")

    p = sub.add_parser("multi", help="budgeted parallel streams")
    p.add_argument("--events-dir", required=True, help="directory of per-stream event files")
    p.add_argument("--config", default=None)
    _add_model_args(p)
    _add_grid_args(p)
    _add_rjmcmc_args(p)
    p.add_argument("--budget", type=int, default=None, help="total particles per update")
    p.add_argument("--floor", type=int, default=None, help="per-stream minimum")
    p.add_argument("--ess-threshold", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--no-plots", action="store_true")
    return parser


def _merged(args: argparse.Namespace) -> dict:
    """Flag values override config-file values; both override nothing."""
    merged = {}
    config_path = getattr(args, "config", None)
    if config_path:
        merged.update(load_config(config_path))
    for key, value in vars(args).items():
        if value is not None and value is not False:
            merged[key] = value
        elif key not in merged:
            merged[key] = value
    return merged


def _get(opts, key, cast, default=None, required=False):
    value = opts.get(key)
    if value is None or value is False:
        if required and default is None:
            raise CliError(f"missing required option --{key.replace('_', '-')}")
        return default
    if cast is bool:
        return value in (True, "1", "true", "yes")
    return cast(value)


def _floats(text) -> list[float]:
    return [float(x) for x in str(text).split(",") if x.strip()]


def _model(opts):
    kind = _get(opts, "model", str, default="conjugate")
    if kind == "conjugate":
        return PoissonGammaModel(
            nu=_get(opts, "nu", float, required=True),
            alpha=_get(opts, "alpha", float, required=True),
            beta=_get(opts, "beta", float, required=True),
            prior_only=_get(opts, "prior_only", bool, default=False),
        )
    return ShotNoiseCoxModel(
        nu=_get(opts, "nu", float, required=True),
        kappa=_get(opts, "kappa", float, required=True),
        alpha=_get(opts, "alpha", float, required=True),
    )


def _update_times(opts) -> list[float]:
    explicit = opts.get("update_times")
    if explicit:
        times = _floats(explicit)
        if sorted(times) != times or len(set(times)) != len(times):
            raise CliError("update times must be strictly increasing")
        return times
    updates = _get(opts, "updates", int, required=True)
    horizon = _get(opts, "horizon", float, required=True)
    return list(np.linspace(horizon / updates, horizon, updates))


def _rjmcmc(opts, model) -> RjmcmcSettings:
    sweeps = _get(opts, "sweeps", int, default=2000)
    return RjmcmcSettings(
        iterations=sweeps,
        burn_in=_get(opts, "burn_in", int, default=min(500, sweeps // 4)),
        data_driven_birth=_get(opts, "data_driven_birth", bool, default=not model.conjugate),
    )


def _smc_settings(opts, model) -> SmcSettings:
    return SmcSettings(
        n_particles=_get(opts, "particles", int, default=1000),
        ess_threshold_frac=_get(opts, "ess_threshold", float, default=1.0 / 3.0),
        rjmcmc=_rjmcmc(opts, model),
        move_after_resample=not _get(opts, "no_move", bool, default=False),
        t_star_rule=_get(opts, "t_star_rule", str, default="posterior_mean"),
        n_proposal_chains=_get(opts, "proposal_chains", int, default=1),
    )


def _out_dir(opts) -> Path:
    out = Path(_get(opts, "out_dir", str, default="out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    rng = np.random.default_rng(args.seed)
    if args.kind == "piecewise-poisson":
        if args.rates is None:
            raise CliError("piecewise-poisson needs --rates")
        cps = _floats(args.changepoints) if args.changepoints else []
        events, truth = simulate_piecewise_poisson(cps, _floats(args.rates), args.horizon, rng)
    else:
        for name in ("nu", "kappa", "alpha"):
            if getattr(args, name) is None:
                raise CliError(f"shot-noise-cox needs --{name}")
        events, truth = simulate_sncp(args.nu, args.kappa, args.alpha, args.horizon, rng)
    save_events(args.out, events)
    if args.truth:
        with open(args.truth, "w") as fh:
            for key, value in truth.items():
                if isinstance(value, (list, tuple, np.ndarray)):
                    value = ",".join(repr(float(v)) for v in value)
                fh.write(f"{key}={value}\n")
    print(f"wrote {len(events)} events to {args.out}")
    return 0


def cmd_run(args) -> int:
    opts = _merged(args)
    model = _model(opts)
    events = load_events(opts["events"])
    times = _update_times(opts)
    settings = _smc_settings(opts, model)
    rng = np.random.default_rng(_get(opts, "seed", int, default=0))
    engine = SmcEngine(model, settings, events, rng)
    state = engine.run(times)
    out = _out_dir(opts)
    emit_results(state.history, out)
    if not _get(opts, "no_plots", bool, default=False):
        from .report import render_run_figures

        render_run_figures(state.history, out)
    print(f"run complete: {len(times)} updates, output in {out}")
    return 0


def cmd_smcmc(args) -> int:
    opts = _merged(args)
    model = _model(opts)
    events = load_events(opts["events"])
    times = _update_times(opts)
    iterations = _get(opts, "iterations", int, default=100_000)
    settings = SmcmcSettings(
        iterations=iterations,
        burn_in=min(5_000, iterations // 5),
        keep=min(2_000, iterations // 2),
        rjmcmc=_rjmcmc(opts, model),
    )
    rng = np.random.default_rng(_get(opts, "seed", int, default=0))
    history = smcmc_run(model, events, times, settings, rng)
    out = _out_dir(opts)
    # same record shape as the engine for curve comparison
    for d in history:
        d.setdefault("ess", float(d["n_samples"]))
        d.setdefault("resampled", False)
        d.setdefault("unique_pre", d["n_samples"])
        d.setdefault("unique_post", d["n_samples"])
    emit_results(history, out)
    if not _get(opts, "no_plots", bool, default=False):
        from .report import render_run_figures

        render_run_figures(history, out)
    print(f"smcmc complete: {len(times)} updates, output in {out}")
    return 0


def cmd_compare(args) -> int:
    opts = _merged(args)
    model = _model(opts)
    events = load_events(opts["events"])
    times = _update_times(opts)
    rng = np.random.default_rng(_get(opts, "seed", int, default=0))
    engine = SmcEngine(model, _smc_settings(opts, model), events, rng)
    state = engine.run(times)
    iterations = _get(opts, "iterations", int, default=100_000)
    baseline = smcmc_run(
        model,
        events,
        times,
        SmcmcSettings(
            iterations=iterations,
            burn_in=min(5_000, iterations // 5),
            keep=min(2_000, iterations // 2),
            rjmcmc=_rjmcmc(opts, model),
        ),
        np.random.default_rng(_get(opts, "seed", int, default=0) + 1),
    )
    out = _out_dir(opts)
    emit_compare(state.history, baseline, out)
    if not _get(opts, "no_plots", bool, default=False):
        from .report import render_compare_figure

        render_compare_figure(state.history, baseline, out)
    n_within = sum(
        abs(s["intensity_mean"] - b["intensity_mean"]) <= 3 * b["intensity_se"]
        for s, b in zip(state.history, baseline)
    )
    print(f"compare complete: {n_within}/{len(times)} updates within the 3-s.e. band")
    return 0


def cmd_multi(args) -> int:
    opts = _merged(args)
    model = _model(opts)
    stream_dir = Path(opts["events_dir"])
    files = sorted(stream_dir.glob("*.txt")) or sorted(stream_dir.glob("*.csv"))
    if not files:
        raise CliError(f"no event files (*.txt) found in {stream_dir}")
    streams = [load_events(f) for f in files]
    times = _update_times(opts)
    budget = StreamBudget(
        total=_get(opts, "budget", int, required=True),
        floor=_get(opts, "floor", int, default=100),
    )
    settings = SmcSettings(
        n_particles=budget.floor,
        ess_threshold_frac=_get(opts, "ess_threshold", float, default=1.0 / 3.0),
        rjmcmc=_rjmcmc(opts, model),
    )
    seed = _get(opts, "seed", int, default=0)
    engines, log = run_parallel([model] * len(streams), streams, times, budget, settings, seed)
    out = _out_dir(opts)
    emit_allocations(log, out)
    for j, eng in enumerate(engines):
        emit_results(eng.state.history, out / f"stream_{j:03d}")
    if not _get(opts, "no_plots", bool, default=False):
        from .report import render_allocation_figures

        render_allocation_figures(log, out)
    print(f"multi complete: {len(streams)} streams, {len(times)} updates, output in {out}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "simulate": cmd_simulate,
        "run": cmd_run,
        "smcmc": cmd_smcmc,
        "compare": cmd_compare,
        "multi": cmd_multi,
    }
    try:
        return handlers[args.command](args)
    except (CliError, EventFileError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - runtime failures exit 2
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
