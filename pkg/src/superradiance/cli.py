"""Batch command-line front end.

Usage::

    superradiance <command> --config RUN.json --out DIR [--workers N] [--seed INT]

Commands: ``angular-scan``, ``time-scan``, ``spectral-scan``, ``randomwalk``,
``sample-cloud``. Every table is comma separated, starts with ``#`` metadata
lines holding the resolved config and master seed, then a column-name row.
Any output table can be passed back as ``--config`` to rerun it.

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 partial result
(rejected configurations at or above the threshold).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .cloud import CloudTooDenseError, sample_cloud, save_configuration
from .config import ConfigError, RunConfig, load, serialize
from .ensemble import EnsembleError, derive_seed, overlay, pooled_decay_rate, run_ensemble, run_ensemble_multi
from .excitation import Pulse
from .fluorescence import UNRELIABLE_RATIO
from .randomwalk import RandomWalkModel, decay_rate_analytic, decay_rate_forward, in_coherent_zone

logger = logging.getLogger("superradiance")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_PARTIAL = 0, 2, 3, 4
WORKERS_ENV = "SUPERRADIANCE_WORKERS"

ANGULAR_COLUMNS = ("theta_rad", "channel", "t_or_window", "value", "stderr")
TIME_COLUMNS = ("t", "theta_rad", "channel", "gamma", "stderr_flag")
SPECTRAL_COLUMNS = ("detuning_gamma", "gamma", "stderr_flag")
OVERLAY_COLUMNS = ("theta_rad", "gamma_microscopic", "gamma_analytic", "relative_deviation", "sideward")


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def window_label(window) -> str:
    return f"{_fmt(window[0])}:{_fmt(window[1])}"


def write_table(path: Path, command: str, config: RunConfig, columns, rows, extra=None) -> Path:
    """Write ``rows`` under ``#`` metadata lines; no wall-clock data, so reruns are bit-exact."""
    meta = {"code_version": __version__, "numpy": np.__version__, "scipy": scipy.__version__}
    meta.update(extra or {})
    with open(path, "w", newline="") as fh:
        fh.write(f"# superradiance {command}\n")
        fh.write(f"# master_seed: {config.master_seed}\n")
        fh.write(f"# config: {serialize(config)}\n")
        fh.write(f"# provenance: {json.dumps(meta, sort_keys=True)}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])
    return path


def read_table(path) -> tuple[dict, list[dict]]:
    """Return (metadata, rows) of a table written by :func:`write_table`."""
    meta, body = {}, []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition(": ")
                meta[key] = value
            else:
                body.append(line)
    return meta, list(csv.DictReader(body))


def _run_info(result) -> dict:
    info = {"n_configs_used": result.n_configs, "n_rejected": result.n_rejected,
            "rejected_seeds": list(result.rejected_seeds)}
    if "incoherent_model" in result.provenance:
        info["incoherent_model"] = result.provenance["incoherent_model"]
    return info


def _ensemble_exit(results) -> int:
    return EXIT_PARTIAL if any(r.flagged for r in results) else EXIT_OK


def cmd_angular_scan(config: RunConfig, out: Path, workers: int = 1) -> int:
    """Intensity-vs-angle snapshots and windowed decay rate versus angle."""
    spec = config.ensemble_spec()
    result = run_ensemble(spec, workers)
    snapshots, rates = [], []
    for c, channel in _channels(config):
        for t in config.snapshot_times:
            series_idx = int(np.flatnonzero(np.isclose(result.times, t, rtol=0, atol=1e-12))[0])
            for i, theta in enumerate(spec.thetas):
                snapshots.append((theta, channel, t, result.mean[c, i, series_idx], result.stderr[c, i, series_idx]))
        for window in spec.windows:
            curve = result.decay_curve(channel, window)
            for theta, g, s in zip(curve.abscissa, curve.gamma, curve.stderr):
                rates.append((theta, channel, window_label(window), g, s))
    info = _run_info(result)
    write_table(out / "intensity_vs_theta.csv", "angular-scan", config, ANGULAR_COLUMNS, snapshots, info)
    write_table(out / "gamma_vs_theta.csv", "angular-scan", config, ANGULAR_COLUMNS, rates, info)
    return _ensemble_exit([result])


def _channels(config):
    index = {"parallel": 0, "perpendicular": 1, "total": 2}
    return [(index[p], p) for p in config.polarizations]


def _flag(m1, s1, m2, s2) -> int:
    with np.errstate(divide="ignore", invalid="ignore"):
        bad = not (m1 > 0 and m2 > 0) or s1 / m1 > UNRELIABLE_RATIO or s2 / m2 > UNRELIABLE_RATIO
    return int(bad)


def cmd_time_scan(config: RunConfig, out: Path, workers: int = 1) -> int:
    """Current decay rate between consecutive grid times, per direction and channel.

    Each row reports ``ln(<I(t_k)> / <I(t_k+1)>) / (t_k+1 - t_k)`` at ``t = t_k``.
    """
    spec = config.ensemble_spec()
    result = run_ensemble(spec, workers)
    times = result.times
    rows = []
    for c, channel in _channels(config):
        for i, theta in enumerate(spec.thetas):
            m, s = result.mean[c, i], result.stderr[c, i]
            with np.errstate(divide="ignore", invalid="ignore"):
                gamma = np.log(m[:-1] / m[1:]) / np.diff(times)
            for k in range(len(times) - 1):
                rows.append((times[k], theta, channel, gamma[k], _flag(m[k], s[k], m[k + 1], s[k + 1])))
    write_table(out / "gamma_vs_time.csv", "time-scan", config, TIME_COLUMNS, rows, _run_info(result))
    return _ensemble_exit([result])


def cmd_spectral_scan(config: RunConfig, out: Path, workers: int = 1) -> int:
    """Direction-averaged total decay rate versus carrier detuning, first window.

    Intensities are averaged over every configured direction before the log
    ratio; the flag marks relative standard errors above 0.5.
    """
    if not config.detunings:
        raise ConfigError("spectral-scan needs a non-empty 'detunings' list")
    spec = replace(config.ensemble_spec(), keep_samples=True)
    pulses = [Pulse(config.pulse.duration, d) for d in config.detunings]
    results = run_ensemble_multi(spec, pulses, workers)
    rows = []
    for detuning, result in zip(config.detunings, results):
        gamma, _, reliable = pooled_decay_rate(result, spec.windows[0])
        rows.append((detuning, gamma, int(not reliable)))
    info = {"window": list(spec.windows[0]), **_run_info(results[0])}
    write_table(out / "gamma_vs_detuning.csv", "spectral-scan", config, SPECTRAL_COLUMNS, rows, info)
    return _ensemble_exit(results)


def _load_gamma_table(path, config: RunConfig, window):
    meta, rows = read_table(path)
    if "config" not in meta:
        raise ConfigError(f"{path}: not an angular-scan table (no config header)")
    source = json.loads(meta["config"])
    if source["geometry"] != config.geometry.to_dict():
        raise ConfigError(f"{path}: ensemble geometry differs from the random-walk geometry")
    label = window_label(window)
    picked = [r for r in rows if r["channel"] == "total" and r["t_or_window"] == label]
    if not picked:
        raise ConfigError(f"{path}: no total-channel decay rates for window {label}")
    thetas = np.array([float(r["theta_rad"]) for r in picked])
    gammas = np.array([float(r["value"]) for r in picked])
    return thetas, gammas


def cmd_randomwalk(config: RunConfig, out: Path, workers: int = 1) -> int:
    """Closed-form sideward decay rate and, optionally, an overlay on a microscopic scan."""
    model = RandomWalkModel(config.geometry)
    thetas = np.asarray(config.thetas)
    keep = ~in_coherent_zone(model, thetas, config.guard_factor)
    if config.theta_range is not None:
        keep &= (thetas > config.theta_range[0]) & (thetas < config.theta_range[1])
    if not np.any(keep):
        raise ConfigError("every theta lies inside the forward/backward coherent zones")
    analytic = decay_rate_analytic(model, thetas[keep], guard_factor=None)
    rows = [(th, "total", "t->0", g, 0.0) for th, g in zip(thetas[keep], np.atleast_1d(analytic))]
    info = {"b0z": model.b0z, "forward_rate": decay_rate_forward(model)}
    write_table(out / "gamma_analytic.csv", "randomwalk", config, ANGULAR_COLUMNS, rows, info)
    if config.ensemble_result is None:
        return EXIT_OK

    window = config.windows[0]
    th_micro, g_micro = _load_gamma_table(config.ensemble_result, config, window)
    try:
        table = overlay(th_micro, g_micro, model, window, config.guard_factor, config.theta_range)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    worst = table.max_deviation
    within = worst <= config.max_deviation
    rows = [(th, gm, ga, dev, side) for (th, gm, ga, dev), side in zip(table.rows(), table.sideward)]
    info = {"window": list(window), "max_deviation": worst, "bound": config.max_deviation,
            "within_bound": bool(within)}
    write_table(out / "overlay.csv", "randomwalk", config, OVERLAY_COLUMNS, rows, info)
    print(f"max sideward deviation {worst:.4f} (bound {config.max_deviation:g}): "
          f"{'within' if within else 'EXCEEDS'} bound")
    return EXIT_OK


def cmd_sample_cloud(config: RunConfig, out: Path, workers: int = 1) -> int:
    """Write the first ``n_configs`` atom configurations of the ensemble, one file each."""
    spec = config.ensemble_spec()
    header = ["superradiance sample-cloud", f"master_seed: {config.master_seed}",
              f"config: {serialize(config)}"]
    for i in range(spec.n_configs):
        cfg = sample_cloud(spec.geometry, spec.atom_number, derive_seed(spec.master_seed, i))
        save_configuration(cfg, out / f"cloud_{i:05d}.csv", metadata=header + [f"index: {i}"])
    return EXIT_OK


COMMANDS = {
    "angular-scan": cmd_angular_scan,
    "time-scan": cmd_time_scan,
    "spectral-scan": cmd_spectral_scan,
    "randomwalk": cmd_randomwalk,
    "sample-cloud": cmd_sample_cloud,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="superradiance", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__.splitlines()[0])
        p.add_argument("--config", required=True, type=Path, help="JSON run config or a previous output table")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory (default: .)")
        p.add_argument("--workers", type=int, default=None,
                       help=f"worker processes (default: ${WORKERS_ENV} or 1); never changes results")
        p.add_argument("--seed", type=int, default=None, help="override the master seed")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _workers(arg) -> int:
    if arg is not None:
        return max(1, arg)
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load(args.config)
        if args.seed is not None:
            config = config.with_seed(args.seed)
        args.out.mkdir(parents=True, exist_ok=True)
        code = COMMANDS[args.command](config, args.out, _workers(args.workers))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EnsembleError, CloudTooDenseError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    if code == EXIT_PARTIAL:
        print("warning: rejected configurations reached the flagging threshold", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
