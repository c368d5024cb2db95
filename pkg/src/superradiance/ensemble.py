"""Configuration-averaged fluorescence with reproducible seeding.

Each configuration ``i`` is drawn with the seed ``derive_seed(master_seed, i)``
(first 8 bytes of BLAKE2b over ``"<master_seed>:<i>"``, shifted to 63 bits),
so any single configuration can be rebuilt in isolation. Configurations are
evaluated in fixed-size chunks, by worker processes if requested, and reduced
strictly in configuration order: the result is bit-identical for any worker
count.
"""
from __future__ import annotations

import hashlib
import logging
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy
from threadpoolctl import threadpool_limits

from . import __version__
from .cloud import CloudGeometry, expected_atom_number, sample_cloud
from .coupling import CoincidentAtomsError, build_hamiltonian
from .excitation import (
    DEFAULT_K_DIR,
    DEFAULT_POLARIZATION,
    Pulse,
    coherent_excitation,
    drive_helicity,
)
from .fluorescence import (
    PARALLEL,
    PERPENDICULAR,
    POLARIZATIONS,
    TOTAL,
    DecayRateCurve,
    FluorescenceSeries,
    UNRELIABLE_RATIO,
    channel_intensities,
    hybrid_time_grid,
)
from .randomwalk import DEFAULT_GUARD_FACTOR, RandomWalkModel, decay_rate_analytic, in_coherent_zone
from .spectral import DEFAULT_TOL, DefectiveSpectrumError, decompose

logger = logging.getLogger(__name__)

CHUNK_SIZE = 16
REJECTION_LIMIT = 0.05
_CHANNEL_INDEX = {PARALLEL: 0, PERPENDICULAR: 1, TOTAL: 2}
# Incoherent drive: per-atom phases and dipole orientations both randomised.
INCOHERENT_MODEL = "sum over (atom, Cartesian orientation) unit excitations"


class EnsembleError(RuntimeError):
    pass


def derive_seed(master_seed: int, index: int) -> int:
    digest = hashlib.blake2b(f"{master_seed}:{index}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little") >> 1


@dataclass(frozen=True)
class Drive:
    """Coherent plane wave (``k_dir``, ``polarization``) or incoherent per-atom drive."""

    kind: str = "coherent"
    k_dir: tuple = tuple(DEFAULT_K_DIR)
    polarization: tuple = tuple(DEFAULT_POLARIZATION)

    def __post_init__(self):
        if self.kind not in ("coherent", "incoherent"):
            raise ValueError(f"unknown drive kind {self.kind!r}")
        object.__setattr__(self, "k_dir", tuple(float(x) for x in self.k_dir))
        object.__setattr__(self, "polarization", tuple(complex(x) for x in self.polarization))
        if self.kind == "coherent":
            drive_helicity(self.k_dir, self.polarization)  # validates the geometry

    @property
    def helicity(self) -> int:
        if self.kind == "incoherent":
            return 1
        return drive_helicity(self.k_dir, self.polarization)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "k_dir": list(self.k_dir),
            "polarization": [[u.real, u.imag] for u in self.polarization],
        }


@dataclass(frozen=True)
class EnsembleSpec:
    geometry: CloudGeometry
    n_configs: int
    master_seed: int = 0
    pulse: Pulse = Pulse(0.1)
    drive: Drive = Drive()
    thetas: tuple = (0.0,)
    phis: tuple = (0.0,)
    polarizations: tuple = (TOTAL,)
    times: tuple = tuple(hybrid_time_grid())
    windows: tuple = ((0.0, 0.01),)
    n_atoms: int | None = None
    tol: float = DEFAULT_TOL
    keep_samples: bool = False

    def __post_init__(self):
        if self.n_configs < 1:
            raise ValueError("n_configs must be >= 1")
        if self.n_atoms is not None and self.n_atoms < 0:
            raise ValueError("n_atoms must be non-negative")
        for pol in self.polarizations:
            if pol not in POLARIZATIONS:
                raise ValueError(f"unknown polarization {pol!r}")
        for th in self.thetas:
            if not 0 <= th <= np.pi:
                raise ValueError(f"theta {th} outside [0, pi]")
        object.__setattr__(self, "thetas", tuple(float(t) for t in self.thetas))
        object.__setattr__(self, "phis", tuple(float(p) for p in self.phis))
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))
        object.__setattr__(self, "windows", tuple((float(a), float(b)) for a, b in self.windows))
        for t1, t2 in self.windows:
            if not t2 > t1 >= 0:
                raise ValueError(f"invalid window {(t1, t2)}")
        if any(t < 0 for t in self.times):
            raise ValueError("times must be >= 0 (after the pulse)")

    @property
    def atom_number(self) -> int:
        return expected_atom_number(self.geometry) if self.n_atoms is None else self.n_atoms

    def resolved_times(self) -> np.ndarray:
        extra = [t for w in self.windows for t in w]
        return np.unique(np.round(np.concatenate([self.times, extra]), 12))

    def to_dict(self) -> dict:
        return {
            "geometry": self.geometry.to_dict(),
            "n_atoms": self.atom_number,
            "n_configs": self.n_configs,
            "master_seed": self.master_seed,
            "pulse": self.pulse.to_dict(),
            "drive": self.drive.to_dict(),
            "thetas": list(self.thetas),
            "phis": list(self.phis),
            "polarizations": list(self.polarizations),
            "times": list(self.times),
            "windows": [list(w) for w in self.windows],
            "tol": self.tol,
        }


@dataclass
class EnsembleResult:
    spec: EnsembleSpec
    pulse: Pulse
    times: np.ndarray
    mean: np.ndarray          # (3 channels, n_theta, n_t): parallel, perpendicular, total
    stderr: np.ndarray
    gamma: dict               # window -> (3, n_theta)
    gamma_stderr: dict
    n_configs: int
    n_rejected: int
    rejected_seeds: list
    provenance: dict = field(default_factory=dict)
    samples: np.ndarray | None = None

    @property
    def thetas(self) -> np.ndarray:
        return np.asarray(self.spec.thetas)

    @property
    def flagged(self) -> bool:
        return self.n_rejected / max(1, self.n_configs + self.n_rejected) >= REJECTION_LIMIT

    def series(self, polarization: str, theta_index: int = 0) -> FluorescenceSeries:
        c = _CHANNEL_INDEX[polarization]
        return FluorescenceSeries(self.times, self.mean[c, theta_index], self.stderr[c, theta_index],
                                  self.n_configs, self.n_rejected)

    def decay_curve(self, polarization: str, window) -> DecayRateCurve:
        window = (float(window[0]), float(window[1]))
        if window not in self.gamma:
            raise KeyError(f"window {window} was not part of the ensemble spec")
        c = _CHANNEL_INDEX[polarization]
        i1, i2 = (_time_index(self.times, t) for t in window)
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = np.maximum(self.stderr[c, :, i1] / self.mean[c, :, i1],
                             self.stderr[c, :, i2] / self.mean[c, :, i2])
        return DecayRateCurve(self.thetas, self.gamma[window][c], window,
                              stderr=self.gamma_stderr[window][c], reliable=rel <= UNRELIABLE_RATIO,
                              label=polarization)


def _time_index(times, t) -> int:
    idx = np.flatnonzero(np.isclose(times, t, rtol=0, atol=1e-12))
    if idx.size == 0:
        raise KeyError(f"time {t} not on the grid")
    return int(idx[0])


def evaluate_configuration(spec: EnsembleSpec, index: int, pulses) -> tuple[int, np.ndarray | None]:
    """Sample, build, decompose and evaluate configuration ``index``.

    Returns ``(seed, intensities)`` with intensities of shape
    ``(len(pulses), 2, n_theta, n_t)``, or ``(seed, None)`` if rejected.
    """
    seed = derive_seed(spec.master_seed, index)
    config = sample_cloud(spec.geometry, spec.atom_number, seed)
    try:
        decomp = decompose(build_hamiltonian(config), tol=spec.tol, seed=seed)
    except (DefectiveSpectrumError, CoincidentAtomsError) as exc:
        logger.warning("rejected configuration %d (seed %d): %s", index, seed, exc)
        return seed, None
    if spec.drive.kind == "incoherent":
        drive = "incoherent"
    else:
        drive = coherent_excitation(config, spec.drive.k_dir, spec.drive.polarization)
    values = channel_intensities(config, decomp, pulses, drive, spec.thetas, spec.phis,
                                 spec.resolved_times(), spec.drive.helicity)
    return seed, values


def _evaluate_chunk(spec, pulses, indices):
    with threadpool_limits(limits=1):
        return [evaluate_configuration(spec, i, pulses) for i in indices]


def run_ensemble_multi(spec: EnsembleSpec, pulses, workers: int = 1) -> list[EnsembleResult]:
    """Like :func:`run_ensemble` but evaluates several pulses on the same
    configurations (one eigendecomposition each). Returns one result per pulse."""
    pulses = list(pulses)
    start = time.perf_counter()
    times = spec.resolved_times()
    chunks = [range(a, min(a + CHUNK_SIZE, spec.n_configs)) for a in range(0, spec.n_configs, CHUNK_SIZE)]
    shape = (len(pulses), 3, len(spec.thetas), len(times))
    s1, s2 = np.zeros(shape), np.zeros(shape)
    idx = [(_time_index(times, a), _time_index(times, b)) for a, b in spec.windows]
    cross = np.zeros((len(spec.windows),) + shape[:3])
    n_ok, rejected, samples = 0, [], []

    def consume(batch):
        nonlocal n_ok, s1, s2
        for seed, values in batch:
            if values is None:
                rejected.append(seed)
                continue
            y = np.concatenate([values, values[:, :1] + values[:, 1:2]], axis=1)
            s1 += y
            s2 += y * y
            for w, (i1, i2) in enumerate(idx):
                cross[w] += y[..., i1] * y[..., i2]
            if spec.keep_samples:
                samples.append(y)
            n_ok += 1

    if workers <= 1:
        for chunk in chunks:
            consume(_evaluate_chunk(spec, pulses, chunk))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for batch in pool.map(_evaluate_chunk, [spec] * len(chunks), [pulses] * len(chunks), chunks):
                consume(batch)

    for seed in rejected:
        logger.warning("configuration with seed %d excluded from the average", seed)
    if n_ok == 0:
        raise EnsembleError(f"all {spec.n_configs} configurations were rejected")

    mean = s1 / n_ok
    var = np.maximum(s2 / n_ok - mean**2, 0.0) * (n_ok / (n_ok - 1) if n_ok > 1 else 0.0)
    stderr = np.sqrt(var / n_ok)
    wall = time.perf_counter() - start
    results = []
    for p, pulse in enumerate(pulses):
        gamma, gamma_err = {}, {}
        for w, ((t1, t2), (i1, i2)) in enumerate(zip(spec.windows, idx)):
            m1, m2 = mean[p, ..., i1], mean[p, ..., i2]
            with np.errstate(divide="ignore", invalid="ignore"):
                gamma[(t1, t2)] = np.log(m1 / m2) / (t2 - t1)
                cov = cross[w, p] / n_ok - m1 * m2
                v = var[p, ..., i1] / m1**2 + var[p, ..., i2] / m2**2
                if n_ok > 1:
                    v = v - 2 * cov * n_ok / (n_ok - 1) / (m1 * m2)
                gamma_err[(t1, t2)] = np.sqrt(np.maximum(v, 0.0) / n_ok) / (t2 - t1)
        pspec = replace(spec, pulse=pulse)
        results.append(EnsembleResult(
            spec=pspec,
            pulse=pulse,
            times=times,
            mean=mean[p],
            stderr=stderr[p],
            gamma=gamma,
            gamma_stderr=gamma_err,
            n_configs=n_ok,
            n_rejected=len(rejected),
            rejected_seeds=list(rejected),
            provenance={
                "spec": pspec.to_dict(),
                "code_version": __version__,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "python": platform.python_version(),
                "wall_clock_s": wall,
                **({"incoherent_model": INCOHERENT_MODEL} if spec.drive.kind == "incoherent" else {}),
            },
            samples=np.stack([s[p] for s in samples]) if spec.keep_samples else None,
        ))
    return results


def run_ensemble(spec: EnsembleSpec, workers: int = 1) -> EnsembleResult:
    """Average the fluorescence of ``spec.n_configs`` random configurations.

    ``workers`` is a process-count hint; the output does not depend on it.
    Rejected (near-defective) configurations are logged with their seeds and
    counted in ``n_rejected``; an error is raised only if every one fails.
    """
    return run_ensemble_multi(spec, [spec.pulse], workers)[0]


def pooled_decay_rate(result: EnsembleResult, window, polarization: str = TOTAL) -> tuple[float, float, bool]:
    """Decay rate of the intensity averaged over every direction of the run.

    Needs ``keep_samples``. Returns ``(gamma, stderr, reliable)``; the standard
    error propagates the per-configuration covariance of the two endpoints.
    """
    if result.samples is None:
        raise ValueError("pooled_decay_rate needs a run with keep_samples=True")
    t1, t2 = float(window[0]), float(window[1])
    i1, i2 = _time_index(result.times, t1), _time_index(result.times, t2)
    pooled = result.samples[:, _CHANNEL_INDEX[polarization]].mean(axis=1)    # (n_configs, n_t)
    y = pooled[:, [i1, i2]]
    n = len(y)
    m = y.mean(axis=0)
    cov = np.cov(y.T) / n if n > 1 else np.zeros((2, 2))
    with np.errstate(divide="ignore", invalid="ignore"):
        gamma = float(np.log(m[0] / m[1]) / (t2 - t1))
        var = cov[0, 0] / m[0] ** 2 + cov[1, 1] / m[1] ** 2 - 2 * cov[0, 1] / (m[0] * m[1])
        rel = np.sqrt(np.diag(cov)) / m
    reliable = bool(np.all(m > 0) and np.all(rel <= UNRELIABLE_RATIO))
    return gamma, float(np.sqrt(max(var, 0.0)) / (t2 - t1)), reliable


@dataclass
class OverlayTable:
    thetas: np.ndarray
    gamma_microscopic: np.ndarray
    gamma_analytic: np.ndarray
    deviation: np.ndarray
    sideward: np.ndarray
    window: tuple

    @property
    def max_deviation(self) -> float:
        return float(np.max(np.abs(self.deviation[self.sideward])))

    def rows(self):
        return list(zip(self.thetas, self.gamma_microscopic, self.gamma_analytic, self.deviation))


def overlay(thetas, gamma_micro, model: RandomWalkModel, window, guard_factor=DEFAULT_GUARD_FACTOR,
            theta_range=None) -> OverlayTable:
    thetas = np.asarray(thetas, dtype=float)
    sideward = ~in_coherent_zone(model, thetas, guard_factor)
    if theta_range is not None:
        sideward &= (thetas > theta_range[0]) & (thetas < theta_range[1])
    if not np.any(sideward):
        raise ValueError("no angles outside the forward/backward coherent zones")
    analytic = decay_rate_analytic(model, thetas, guard_factor=None)
    gamma_micro = np.asarray(gamma_micro, dtype=float)
    return OverlayTable(thetas, gamma_micro, np.asarray(analytic), (gamma_micro - analytic) / analytic,
                        sideward, tuple(window))


def compare_to_randomwalk(result: EnsembleResult, model: RandomWalkModel, window, polarization: str = TOTAL,
                          guard_factor: float = DEFAULT_GUARD_FACTOR, theta_range=None) -> OverlayTable:
    """Microscopic versus single-scattering decay rate for each ensemble angle.

    ``max_deviation`` summarises the relative deviation over the sideward
    angles (outside the coherent zones, and inside ``theta_range`` if given).
    """
    if result.spec.geometry != model.geometry:
        raise ValueError("ensemble geometry and random-walk model geometry differ")
    curve = result.decay_curve(polarization, window)
    return overlay(curve.abscissa, curve.gamma, model, window, guard_factor, theta_range)
