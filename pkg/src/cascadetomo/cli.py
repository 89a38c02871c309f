"""Command-line entry points.

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 missing projection
settings, 5 fit did not converge.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from .analysis import Irf, fit_tau_r, negativity_vs_window
from .config import Config, ConfigError, load_config
from .errors import ConfigurationError, EmptyWindowError, MissingSettingsError
from .formats import (
    FormatError,
    SeriesRow,
    atomic_write,
    format_csv,
    format_series,
    read_events,
    write_events,
)
from .simulator import RunConfig, histogram_2d, histogram_dt, run_experiment
from .tomography import default_settings, reconstruct_time_series

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_MISSING = 4
EXIT_FIT = 5


class CliError(Exception):
    def __init__(self, code: int, message: str):
        self.code = code
        super().__init__(message)


def _load(config_path) -> Config:
    return Config() if config_path is None else load_config(config_path)


def _events_and_config(events_path, config_path=None):
    try:
        ev = read_events(events_path)
    except (OSError, FormatError, ConfigError) as exc:
        raise CliError(EXIT_DATA, f"{events_path}: {exc}") from None
    config = ev.config if config_path is None else load_config(config_path)
    return ev, config


def _require_all_settings(ev):
    required = {s.setting_id: s for s in default_settings()}
    declared = {s.setting_id: s for s in ev.settings}
    missing = [sid for sid, s in required.items()
               if sid not in declared or not np.allclose(declared[sid].projector, s.projector)]
    if missing:
        raise MissingSettingsError(missing)


def _check_known_ids(ev):
    known = {s.setting_id for s in ev.settings}
    seen = set(np.unique(ev.events["setting_id"]).tolist())
    if seen - known:
        raise CliError(EXIT_DATA, f"events reference unknown setting ids {sorted(seen - known)}")


def _delay_histogram(ev, config: Config, bin_ps=None):
    a = config.analysis
    return histogram_dt(ev.events, bin_ps or a.bin_ps, a.dt_max_ps, a.dt_min_ps, settings=ev.settings)


def cmd_simulate(config_path, out_path, seed=None, workers=None) -> int:
    config = _load(config_path)
    if seed is not None:
        if not 0 <= seed < 2**64:
            raise ConfigError("run", "seed", "must be a 64-bit unsigned integer")
        config = replace(config, run=replace(config.run, seed=seed))
    run = RunConfig(config.cascade, default_settings(), config.run.pulses_per_setting,
                    config.run.seed, config.run.repetition_mhz)
    result = run_experiment(run, workers=workers or config.run.workers)
    write_events(out_path, result.events, config, run.settings, result.complete)
    print(f"wrote {result.events.size} events to {out_path}")
    return EXIT_OK


def cmd_histogram(events_path, out_dir, bin_ps=None, mode="dt", config_path=None) -> int:
    ev, config = _events_and_config(events_path, config_path)
    _check_known_ids(ev)
    bin_ps = bin_ps or config.analysis.bin_ps
    os.makedirs(out_dir, exist_ok=True)
    if mode == "dt":
        hist = _delay_histogram(ev, config, bin_ps)
        for k, s in enumerate(hist.settings):
            rows = [(hist.edges[b], int(c)) for b, c in enumerate(hist.counts[k]) if c]
            atomic_write(os.path.join(out_dir, f"setting_{s.setting_id:02d}_{s.label}_dt.csv"),
                         format_csv(("dt_bin_ps", "count"), rows, config,
                                    [f"setting {s.setting_id} {s.label}; bin_ps {bin_ps!r}"]))
    elif mode == "2d":
        for s in ev.settings:
            sel = ev.events[ev.events["setting_id"] == s.setting_id]
            counts, edges = histogram_2d(sel, bin_ps, config.analysis.dt_max_ps)
            i, j = np.nonzero(counts)
            rows = [(edges[a], edges[b], int(counts[a, b])) for a, b in zip(i, j)]
            atomic_write(os.path.join(out_dir, f"setting_{s.setting_id:02d}_{s.label}_2d.csv"),
                         format_csv(("t1_bin_ps", "t2_bin_ps", "count"), rows, config,
                                    [f"setting {s.setting_id} {s.label}; bin_ps {bin_ps!r}"]))
    else:
        raise CliError(EXIT_CONFIG, f"unknown histogram mode {mode!r}")
    print(f"wrote {len(ev.settings)} histograms to {out_dir}")
    return EXIT_OK


def cmd_tomograph(events_path, out_path, window_ps=None, step_ps=None, method="mle",
                  config_path=None, n_resamples=None) -> int:
    ev, config = _events_and_config(events_path, config_path)
    _check_known_ids(ev)
    _require_all_settings(ev)
    a = config.analysis
    window_ps = window_ps or a.window_ps
    step_ps = step_ps or a.step_ps
    n_resamples = a.n_resamples if n_resamples is None else n_resamples
    hist = _delay_histogram(ev, config)
    series = reconstruct_time_series(hist, window_ps, step_ps, method=method, start=0.0,
                                     n_resamples=n_resamples, rng=config.run.seed)
    rows, errors = [], []
    for w in series:
        if w.result is None:
            errors.append((w.t_start, w.t_end, w.error))
            continue
        sigma = w.sigma.negativity_sigma if w.sigma is not None else float("nan")
        rows.append(SeriesRow(w.t_start, w.t_end, w.result.rho, w.result.negativity, sigma,
                              w.result.low_stats))
    atomic_write(out_path, format_series(rows, config, method, errors))
    print(f"wrote {len(rows)} windows to {out_path} ({len(errors)} empty)")
    return EXIT_OK


def sweep_grid(dtmin: float, dtmax: float, steps: int, bin_ps: float) -> np.ndarray:
    """Window widths snapped to whole bins, duplicates removed."""
    grid = np.linspace(dtmin, dtmax, steps)
    snapped = np.maximum(np.round(grid / bin_ps), 1) * bin_ps
    return np.unique(snapped)


def cmd_negativity_sweep(events_path, out_path, dtmin=None, dtmax=None, steps=None,
                         config_path=None, n_resamples=None, weighting="uniform") -> int:
    ev, config = _events_and_config(events_path, config_path)
    _check_known_ids(ev)
    _require_all_settings(ev)
    a = config.analysis
    dtmin = dtmin or a.bin_ps
    dtmax = dtmax or 3 * config.cascade.precession_ps
    steps = steps or int(round((dtmax - dtmin) / a.bin_ps)) + 1
    n_resamples = a.n_resamples if n_resamples is None else n_resamples
    hist = _delay_histogram(ev, config)
    curve = negativity_vs_window(hist, sweep_grid(dtmin, dtmax, steps, a.bin_ps), config.cascade,
                                 Irf(config.cascade.irf_fwhm_ps), weighting=weighting,
                                 n_resamples=n_resamples, rng=config.run.seed)
    rows = zip(curve.delta_t, curve.n_data, curve.n_sigma, curve.n_ideal, curve.n_irf_model,
               curve.low_stats)
    atomic_write(out_path, format_csv(
        ("delta_t_ps", "n_data", "n_sigma", "n_ideal", "n_irf_model", "low_stats"), rows, config,
        [f"window start 0 ps; weighting {weighting}; precession_ps {config.cascade.precession_ps!r}"]))
    print(f"wrote {curve.delta_t.size} window widths to {out_path}")
    return EXIT_OK


def cmd_fit(events_path, out_prefix, config_path=None) -> int:
    ev, config = _events_and_config(events_path, config_path)
    _check_known_ids(ev)
    _require_all_settings(ev)
    hist = _delay_histogram(ev, config)
    params = config.cascade
    try:
        fit = fit_tau_r(hist, params, Irf(params.irf_fwhm_ps))
    except EmptyWindowError as exc:
        raise CliError(EXIT_DATA, str(exc)) from None
    lines = [
        f"tau_R_ps = {fit.tau_r_ps:.3f} +/- {fit.tau_r_sigma_ps:.3f}",
        f"T_P_ps = {fit.precession_ps!r} (fixed, not fitted)",
        f"irf_fwhm_ps = {params.irf_fwhm_ps!r} (fixed, not fitted)",
        f"scale = {fit.scale!r}",
        f"chi2_per_dof = {fit.chi2_per_dof:.4f}",
        f"deviance = {fit.deviance:.3f}",
        f"converged = {str(fit.converged).lower()}",
    ]
    lines += [f"curve {s.setting_id:02d} {s.label} chi2_per_dof = {c:.4f}"
              for s, c in zip(hist.settings, fit.curve_chi2)]
    report = "\n".join(lines) + "\n"
    atomic_write(out_prefix + "_report.txt", report)
    rows = []
    for k, s in enumerate(hist.settings):
        for b in range(hist.counts.shape[1]):
            rows.append((s.setting_id, s.label, hist.edges[b], int(hist.counts[k, b]),
                         fit.model[k, b], fit.residuals[k, b]))
    atomic_write(out_prefix + "_curves.csv", format_csv(
        ("setting_id", "label", "dt_bin_ps", "count", "model", "residual"), rows, config,
        [f"tau_r_ps {fit.tau_r_ps!r}; precession_ps {params.precession_ps!r} fixed"]))
    sys.stdout.write(report)
    if not fit.converged:
        raise CliError(EXIT_FIT, "lifetime fit did not converge; best iterate reported")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cascadetomo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic event file")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)

    p = sub.add_parser("histogram", help="bin events per setting")
    p.add_argument("events")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--bin-ps", type=float)
    p.add_argument("--mode", choices=("2d", "dt"), default="dt")
    p.add_argument("--config")

    p = sub.add_parser("tomograph", help="reconstruct density matrices on sliding windows")
    p.add_argument("events")
    p.add_argument("--out", required=True)
    p.add_argument("--window-ps", type=float)
    p.add_argument("--step-ps", type=float)
    p.add_argument("--method", choices=("mle", "linear"), default="mle")
    p.add_argument("--n-resamples", type=int, help="bootstrap size; 0 skips the bootstrap")
    p.add_argument("--config")

    p = sub.add_parser("negativity-sweep", help="negativity against window width")
    p.add_argument("events")
    p.add_argument("--out", required=True)
    p.add_argument("--dtmin", type=float)
    p.add_argument("--dtmax", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--n-resamples", type=int, help="bootstrap size; 0 skips the bootstrap")
    p.add_argument("--weighting", choices=("uniform", "counts"), default="uniform")
    p.add_argument("--config")

    p = sub.add_parser("fit", help="fit the exciton lifetime to all 16 curves")
    p.add_argument("events")
    p.add_argument("--out", required=True, help="output prefix")
    p.add_argument("--config")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return cmd_simulate(args.config, args.out, args.seed, args.workers)
        if args.command == "histogram":
            return cmd_histogram(args.events, args.out, args.bin_ps, args.mode, args.config)
        if args.command == "tomograph":
            return cmd_tomograph(args.events, args.out, args.window_ps, args.step_ps, args.method,
                                 args.config, args.n_resamples)
        if args.command == "negativity-sweep":
            return cmd_negativity_sweep(args.events, args.out, args.dtmin, args.dtmax, args.steps,
                                        args.config, args.n_resamples, args.weighting)
        if args.command == "fit":
            return cmd_fit(args.events, args.out, args.config)
    except ConfigurationError as exc:
        # covers ConfigError and bad resample counts
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingSettingsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
