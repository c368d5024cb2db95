"""Time-, angle- and polarization-resolved fluorescence after the pulse.

With the mode decomposition ``M = V diag(lam) V.T`` the detected amplitude is

    A(t) = int dw/2pi exp(-i w t) E(w) D (w - M)^-1 Lambda
         = -i sum_n c_n E(lam_n) exp(-i lam_n t),    t >= 0,

where ``c_n = (D . v_n)(v_n . Lambda)``; the contour is closed in the lower
half-plane, where the only singularities are the collective poles ``lam_n``
(the rectangular-pulse spectrum ``E`` is entire). Intensities are ``|A|^2``
in arbitrary units.

Polarization channels follow the helicity of the drive: ``"parallel"``
(H||H) detects the drive's helicity about the detection direction,
``"perpendicular"`` (H_|_H) the opposite one, ``"total"`` their sum. With the
default drive (+z, left-handed circular) H||H is ``h_+`` and the single-atom
H||H signal vanishes in exact backscattering.

The current decay rate is ``Gamma = -d ln<I> / dt`` evaluated as the log
ratio of ensemble-mean intensities over a window, in units of gamma; Gamma > 1
is superradiant and Gamma < 0 means the intensity grows.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .excitation import ExcitationVector, helicity_vectors, pulse_spectrum, spherical_unit_vectors

PARALLEL = "parallel"
PERPENDICULAR = "perpendicular"
TOTAL = "total"
POLARIZATIONS = (PARALLEL, PERPENDICULAR, TOTAL)

UNRELIABLE_RATIO = 0.5


class UnreliableRateWarning(UserWarning):
    """Relative standard error above 0.5 at a window endpoint."""


@dataclass(frozen=True)
class DetectionChannel:
    theta: float
    phi: float = 0.0
    polarization: str = TOTAL

    def __post_init__(self):
        if not (0 <= self.theta <= np.pi):
            raise ValueError(f"theta must lie in [0, pi], got {self.theta}")
        if self.polarization not in POLARIZATIONS:
            raise ValueError(f"unknown polarization channel {self.polarization!r}")


@dataclass
class FluorescenceSeries:
    times: np.ndarray
    mean_intensity: np.ndarray
    stderr: np.ndarray
    n_configs: int
    n_rejected: int = 0

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.mean_intensity = np.asarray(self.mean_intensity, dtype=float)
        self.stderr = np.asarray(self.stderr, dtype=float)
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if np.any(self.stderr < 0):
            raise ValueError("stderr must be non-negative")

    def at(self, t: float) -> tuple[float, float]:
        idx = np.flatnonzero(np.isclose(self.times, t, rtol=0, atol=1e-12))
        if idx.size == 0:
            raise KeyError(f"time {t} not on the series grid")
        return float(self.mean_intensity[idx[0]]), float(self.stderr[idx[0]])


@dataclass
class DecayRateCurve:
    abscissa: np.ndarray
    gamma: np.ndarray
    interval: tuple[float, float]
    stderr: np.ndarray | None = None
    reliable: np.ndarray | None = None
    label: str = ""

    def __post_init__(self):
        self.abscissa = np.asarray(self.abscissa, dtype=float)
        self.gamma = np.asarray(self.gamma, dtype=float)
        t1, t2 = self.interval
        if not (t2 > t1 >= 0):
            raise ValueError(f"window must satisfy t2 > t1 >= 0, got {self.interval}")
        if self.reliable is None:
            self.reliable = np.ones(self.gamma.shape, dtype=bool)


def hybrid_time_grid(t_max: float = 5.0, n_geometric: int = 20, n_linear: int = 50,
                     t_first: float = 1e-3, extra=()) -> np.ndarray:
    """Times ``0``, a geometric run from ``t_first`` to ``t_max/n_linear`` and a
    linear run up to ``t_max``, merged with ``extra`` points."""
    step = t_max / n_linear
    geo = np.geomspace(t_first, step, n_geometric) if n_geometric > 0 and t_first < step else []
    lin = np.linspace(step, t_max, n_linear)
    grid = np.concatenate([[0.0], geo, lin, np.asarray(extra, dtype=float)])
    return np.unique(np.round(grid, 12))


def detection_vector(config, channel: DetectionChannel, helicity: int = 1) -> np.ndarray:
    """Row vector ``D[(j, mu)] = conj(u'_mu) exp(-i k' . r_j)`` for a definite channel.

    ``helicity`` is the drive helicity (+1 for the default drive); H||H
    detects ``h_{helicity}``, H_|_H ``h_{-helicity}``.
    """
    if channel.polarization == TOTAL:
        raise ValueError("the total channel is the sum of the two helicity intensities")
    k_hat, _, _ = spherical_unit_vectors(channel.theta, channel.phi)
    h_plus, h_minus = helicity_vectors(channel.theta, channel.phi)
    same = h_plus if helicity > 0 else h_minus
    other = h_minus if helicity > 0 else h_plus
    u_det = same if channel.polarization == PARALLEL else other
    phase = np.exp(-1j * (np.asarray(config.positions) @ k_hat))
    return (phase[:, None] * u_det.conj()[None, :]).ravel()


def mode_coefficients(decomp, excitation, detection) -> np.ndarray:
    """``c_n = (D . v_n)(v_n . Lambda)`` so that ``D R(w) Lambda = sum_n c_n / (w - lam_n)``."""
    lam_vec = getattr(excitation, "amplitudes", excitation)
    v = decomp.modes
    return (np.asarray(detection) @ v) * (v.T @ lam_vec)


def amplitude_timeseries(coeffs, eigenvalues, pulse, times) -> np.ndarray:
    """Detected amplitude ``-i sum_n c_n E(lam_n) exp(-i lam_n t)`` at each time."""
    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise ValueError("amplitudes are defined only after the pulse (t >= 0)")
    weights = np.asarray(coeffs) * pulse_spectrum(pulse, np.asarray(eigenvalues))
    return -1j * (np.exp(-1j * np.outer(times, eigenvalues)) @ weights)


def _as_members(drive):
    if isinstance(drive, ExcitationVector):
        return [drive]
    if isinstance(drive, np.ndarray) and drive.ndim == 1:
        return [drive]
    return list(drive)


def intensity_timeseries(config, decomp, pulse, drive, channel: DetectionChannel, times,
                         helicity: int = 1) -> np.ndarray:
    """Per-configuration intensity ``I(t)`` for one detection channel.

    ``drive`` is a single excitation vector or a list of incoherent members
    whose intensities are summed. The total channel sums both helicities.
    """
    pols = (PARALLEL, PERPENDICULAR) if channel.polarization == TOTAL else (channel.polarization,)
    out = np.zeros(len(np.atleast_1d(times)))
    for pol in pols:
        det = detection_vector(config, DetectionChannel(channel.theta, channel.phi, pol), helicity)
        for member in _as_members(drive):
            coeffs = mode_coefficients(decomp, member, det)
            out += np.abs(amplitude_timeseries(coeffs, decomp.eigenvalues, pulse, times)) ** 2
    return out


def channel_intensities(config, decomp, pulses, drive, thetas, phis, times, helicity: int = 1) -> np.ndarray:
    """Vectorised intensities for a grid of directions and several pulses.

    Returns an array of shape ``(len(pulses), 2, len(thetas), len(times))``
    holding the H||H and H_|_H intensities, averaged over the azimuths
    ``phis``. ``drive`` is ``"incoherent"`` or one excitation vector.
    """
    thetas = np.asarray(thetas, dtype=float)
    phis = np.atleast_1d(np.asarray(phis, dtype=float))
    times = np.asarray(times, dtype=float)
    th, ph = np.meshgrid(thetas, phis, indexing="ij")
    k_hat, _, _ = spherical_unit_vectors(th, ph)
    h_plus, h_minus = helicity_vectors(th, ph)
    if helicity < 0:
        h_plus, h_minus = h_minus, h_plus
    n_dir = th.size
    phase = np.exp(-1j * (k_hat.reshape(n_dir, 3) @ np.asarray(config.positions).T))
    dets = np.concatenate([
        (phase[:, :, None] * h_plus.reshape(n_dir, 1, 3).conj()).reshape(n_dir, -1),
        (phase[:, :, None] * h_minus.reshape(n_dir, 1, 3).conj()).reshape(n_dir, -1),
    ])
    v = decomp.modes
    lam = decomp.eigenvalues
    proj = dets @ v                                    # (2 n_dir, 3N)
    evolution = np.exp(-1j * np.outer(lam, times))     # (3N, n_t)
    out = np.empty((len(pulses), 2 * n_dir, len(times)))
    if isinstance(drive, str):
        if drive != "incoherent":
            raise ValueError(f"unknown drive {drive!r}")
        vt = v.T
        for p, pulse in enumerate(pulses):
            spec = pulse_spectrum(pulse, lam)[:, None] * evolution   # (3N, n_t)
            for i in range(len(times)):
                amp = (proj * spec[:, i]) @ vt
                out[p, :, i] = np.einsum("ij,ij->i", amp.real, amp.real) + np.einsum(
                    "ij,ij->i", amp.imag, amp.imag)
    else:
        q = v.T @ getattr(drive, "amplitudes", drive)
        for p, pulse in enumerate(pulses):
            amp = proj @ ((q * pulse_spectrum(pulse, lam))[:, None] * evolution)
            out[p] = amp.real**2 + amp.imag**2
    out = out.reshape(len(pulses), 2, len(thetas), len(phis), len(times))
    return out.mean(axis=3)


def decay_rate(series: FluorescenceSeries, t1: float, t2: float) -> float:
    """Windowed current decay rate ``ln(<I(t1)> / <I(t2)>) / (t2 - t1)``.

    Emits :class:`UnreliableRateWarning` when the relative standard error
    exceeds 0.5 at either endpoint.
    """
    if not t2 > t1:
        raise ValueError("decay-rate window needs t2 > t1")
    i1, e1 = series.at(t1)
    i2, e2 = series.at(t2)
    if i1 <= 0 or i2 <= 0:
        raise ValueError("decay rate undefined for non-positive intensity")
    if e1 / i1 > UNRELIABLE_RATIO or e2 / i2 > UNRELIABLE_RATIO:
        warnings.warn(
            f"decay rate over ({t1}, {t2}) statistically unreliable", UnreliableRateWarning, stacklevel=2
        )
    return float(np.log(i1 / i2) / (t2 - t1))


def angular_scan(spec, polarization: str, thetas, window, workers: int = 1) -> DecayRateCurve:
    """Decay rate versus polar angle from ensemble-mean intensities.

    Intensities are averaged over configurations first and the log ratio is
    taken afterwards.
    """
    from dataclasses import replace

    from .ensemble import run_ensemble

    t1, t2 = window
    spec = replace(
        spec,
        thetas=tuple(float(t) for t in thetas),
        polarizations=(polarization,),
        windows=tuple(dict.fromkeys(tuple(spec.windows) + ((t1, t2),))),
    )
    result = run_ensemble(spec, workers)
    return result.decay_curve(polarization, (t1, t2))
