"""Run configuration documents (JSON) for the command-line front end.

A config is a JSON object; unknown keys are rejected. Grids may be given
either explicitly (lists) or as small generator objects, which are resolved
to explicit lists on parsing, so ``parse(serialize(parse(doc)))`` equals
``parse(doc)``.

Output tables written by the CLI carry the resolved config on a
``# config: {...}`` header line and can themselves be passed as ``--config``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .cloud import CloudGeometry
from .ensemble import Drive, EnsembleSpec
from .excitation import Pulse
from .fluorescence import POLARIZATIONS, hybrid_time_grid
from .randomwalk import DEFAULT_GUARD_FACTOR


class ConfigError(ValueError):
    pass


_TOP_KEYS = {
    "geometry", "n_atoms", "n_configs", "master_seed", "pulse", "drive", "thetas", "phis",
    "polarizations", "times", "windows", "snapshot_times", "detunings", "ensemble_result",
    "max_deviation", "guard_factor", "theta_range", "tol",
}


def default_theta_grid(n: int = 61) -> list[float]:
    """Polar angles on [0, pi], densified near 0 and pi (cosine spacing)."""
    s = np.linspace(0.0, 1.0, n)
    grid = 0.5 * np.pi * (1 - np.cos(np.pi * s))
    grid[0], grid[-1] = 0.0, np.pi
    return [float(x) for x in grid]


def _check_keys(obj, allowed, where):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = set(obj) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(unknown)}")


def _floats(value, where) -> list[float]:
    try:
        return [float(x) for x in value]
    except (TypeError, ValueError):
        raise ConfigError(f"{where} must be a list of numbers") from None


@dataclass(frozen=True)
class RunConfig:
    geometry: CloudGeometry
    n_atoms: int | None = None
    n_configs: int = 100
    master_seed: int = 0
    pulse: Pulse = Pulse(0.1)
    drive: Drive = Drive()
    thetas: tuple = tuple(default_theta_grid())
    phis: tuple = (0.0,)
    polarizations: tuple = POLARIZATIONS
    times: tuple = tuple(hybrid_time_grid())
    windows: tuple = ((0.0, 0.01), (0.0, 0.1))
    snapshot_times: tuple = (1.0,)
    detunings: tuple = ()
    ensemble_result: str | None = None
    max_deviation: float = 0.15
    guard_factor: float = DEFAULT_GUARD_FACTOR
    theta_range: tuple | None = None
    tol: float = 1e-8

    def ensemble_spec(self) -> EnsembleSpec:
        times = tuple(sorted(set(self.times) | set(self.snapshot_times)))
        return EnsembleSpec(
            geometry=self.geometry,
            n_configs=self.n_configs,
            master_seed=self.master_seed,
            pulse=self.pulse,
            drive=self.drive,
            thetas=self.thetas,
            phis=self.phis,
            polarizations=self.polarizations,
            times=times,
            windows=self.windows,
            n_atoms=self.n_atoms,
            tol=self.tol,
        )

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, master_seed=int(seed))

    def to_dict(self) -> dict:
        return {
            "geometry": self.geometry.to_dict(),
            "n_atoms": self.n_atoms,
            "n_configs": self.n_configs,
            "master_seed": self.master_seed,
            "pulse": self.pulse.to_dict(),
            "drive": self.drive.to_dict(),
            "thetas": list(self.thetas),
            "phis": list(self.phis),
            "polarizations": list(self.polarizations),
            "times": list(self.times),
            "windows": [list(w) for w in self.windows],
            "snapshot_times": list(self.snapshot_times),
            "detunings": list(self.detunings),
            "ensemble_result": self.ensemble_result,
            "max_deviation": self.max_deviation,
            "guard_factor": self.guard_factor,
            "theta_range": None if self.theta_range is None else list(self.theta_range),
            "tol": self.tol,
        }


def serialize(config: RunConfig) -> str:
    return json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))


def parse(doc) -> RunConfig:
    """Validate and resolve a config document (dict or JSON text)."""
    if isinstance(doc, str):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
    _check_keys(doc, _TOP_KEYS, "config")
    if "geometry" not in doc:
        raise ConfigError("config needs a 'geometry' section")
    kw = {}
    try:
        geo = doc["geometry"]
        _check_keys(geo, {"n0", "R", "L", "exclusion_radius"}, "geometry")
        kw["geometry"] = CloudGeometry(float(geo["n0"]), float(geo["R"]), float(geo["L"]),
                                       None if geo.get("exclusion_radius") is None else float(geo["exclusion_radius"]))
        if doc.get("n_atoms") is not None:
            kw["n_atoms"] = int(doc["n_atoms"])
        for key in ("n_configs", "master_seed"):
            if key in doc:
                kw[key] = int(doc[key])
        if "pulse" in doc:
            _check_keys(doc["pulse"], {"duration", "detuning"}, "pulse")
            kw["pulse"] = Pulse(float(doc["pulse"]["duration"]), float(doc["pulse"].get("detuning", 0.0)))
        if "drive" in doc:
            d = doc["drive"]
            _check_keys(d, {"kind", "k_dir", "polarization"}, "drive")
            args = {"kind": d.get("kind", "coherent")}
            if "k_dir" in d:
                args["k_dir"] = _floats(d["k_dir"], "drive.k_dir")
            if "polarization" in d:
                args["polarization"] = [complex(*map(float, c)) if isinstance(c, (list, tuple)) else complex(c)
                                        for c in d["polarization"]]
            kw["drive"] = Drive(**args)
        if "thetas" in doc:
            th = doc["thetas"]
            if isinstance(th, dict):
                _check_keys(th, {"n"}, "thetas")
                kw["thetas"] = tuple(default_theta_grid(int(th.get("n", 61))))
            else:
                kw["thetas"] = tuple(_floats(th, "thetas"))
        if "phis" in doc:
            kw["phis"] = tuple(_floats(doc["phis"], "phis"))
        if "polarizations" in doc:
            pols = tuple(doc["polarizations"])
            for p in pols:
                if p not in POLARIZATIONS:
                    raise ConfigError(f"unknown polarization {p!r}; expected one of {POLARIZATIONS}")
            kw["polarizations"] = pols
        if "times" in doc:
            t = doc["times"]
            if isinstance(t, dict):
                _check_keys(t, {"t_max", "n_geometric", "n_linear", "t_first"}, "times")
                kw["times"] = tuple(float(x) for x in hybrid_time_grid(**{k: v for k, v in t.items()}))
            else:
                kw["times"] = tuple(_floats(t, "times"))
        if "windows" in doc:
            kw["windows"] = tuple((float(a), float(b)) for a, b in doc["windows"])
        for key in ("snapshot_times", "detunings"):
            if key in doc:
                kw[key] = tuple(_floats(doc[key], key))
        if doc.get("ensemble_result") is not None:
            kw["ensemble_result"] = str(doc["ensemble_result"])
        for key in ("max_deviation", "guard_factor", "tol"):
            if key in doc:
                kw[key] = float(doc[key])
        if doc.get("theta_range") is not None:
            lo, hi = _floats(doc["theta_range"], "theta_range")
            kw["theta_range"] = (lo, hi)
        config = RunConfig(**kw)
        config.ensemble_spec()  # full validation of the derived run
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return config


def load(path) -> RunConfig:
    """Read a JSON config, or the ``# config:`` header of a CLI output table."""
    text = Path(path).read_text()
    if text.lstrip().startswith("#"):
        for line in text.splitlines():
            if line.startswith("# config: "):
                return parse(line[len("# config: "):])
            if not line.startswith("#"):
                break
        raise ConfigError(f"{path}: no '# config:' header line")
    return parse(text)
