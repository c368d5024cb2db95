"""Driving pulses and excitation vectors.

A pulse is rectangular on ``t in [-duration, 0]`` with carrier detuning
``detuning`` from the atomic resonance, so ``t = 0`` is the end of the pulse.
Its spectrum (unit amplitude, frequencies measured from resonance) is

    E(w) = (1 - exp(-i (w - detuning) duration)) / (i (w - detuning)),

an entire function of ``w``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_K_DIR = np.array([0.0, 0.0, 1.0])
# Left-handed circular polarization for propagation along +z.
DEFAULT_POLARIZATION = np.array([1.0, 1.0j, 0.0]) / np.sqrt(2)


@dataclass(frozen=True)
class Pulse:
    duration: float
    detuning: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.duration) and self.duration > 0):
            raise ValueError(f"pulse duration must be positive, got {self.duration!r}")
        if not np.isfinite(self.detuning):
            raise ValueError("pulse detuning must be finite")

    def to_dict(self) -> dict:
        return {"duration": self.duration, "detuning": self.detuning}


def pulse_spectrum(pulse: Pulse, omega):
    """Fourier amplitude of the rectangular pulse at (complex) ``omega``.

    The removable singularity at ``omega == detuning`` evaluates to the pulse
    duration.
    """
    x = np.asarray(omega, dtype=complex) - pulse.detuning
    tau = pulse.duration
    small = np.abs(x * tau) < 1e-6
    safe = np.where(small, 1.0, x)
    with np.errstate(over="ignore", invalid="ignore"):
        general = -np.expm1(-1j * safe * tau) / (1j * safe)
    series = tau * (1 - 0.5j * x * tau - (x * tau) ** 2 / 6)
    out = np.where(small, series, general)
    return out if out.ndim else complex(out)


@dataclass(frozen=True)
class ExcitationVector:
    """Amplitudes of the 3N atomic excited states (atom-major, Cartesian).

    ``mode`` is ``"coherent"`` or ``"incoherent"``; incoherent members carry
    ``member = (atom_index, orientation_index)``.
    """

    amplitudes: np.ndarray
    mode: str = "coherent"
    member: tuple[int, int] | None = None

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if not np.all(np.isfinite(amps)):
            raise ValueError("excitation amplitudes must be finite")
        if self.mode not in ("coherent", "incoherent"):
            raise ValueError(f"unknown excitation mode {self.mode!r}")
        object.__setattr__(self, "amplitudes", amps)


def _check_drive(k_dir, polarization):
    k = np.asarray(k_dir, dtype=float)
    u = np.asarray(polarization, dtype=complex)
    if k.shape != (3,) or u.shape != (3,):
        raise ValueError("k_dir and polarization must be 3-vectors")
    if abs(np.linalg.norm(k) - 1) > 1e-9:
        raise ValueError("k_dir must be a unit vector")
    if abs(np.vdot(u, u).real - 1) > 1e-9:
        raise ValueError("polarization must be normalised (u* . u = 1)")
    if abs(k @ u) > 1e-9:
        raise ValueError("polarization is not transverse to k_dir")
    return k, u


def coherent_excitation(config, k_dir=DEFAULT_K_DIR, polarization=DEFAULT_POLARIZATION) -> ExcitationVector:
    """Plane-wave drive: amplitude ``(j, mu) = u_mu exp(i k_dir . r_j)``."""
    k, u = _check_drive(k_dir, polarization)
    phases = np.exp(1j * (np.asarray(config.positions) @ k))
    return ExcitationVector((phases[:, None] * u[None, :]).ravel(), "coherent")


def incoherent_excitation_set(config) -> list[ExcitationVector]:
    """One unit excitation per (atom, Cartesian orientation).

    Intensities of the members are to be summed; this is the phase- and
    orientation-averaged limit of independently driven atoms.
    """
    n = config.n_atoms
    eye = np.eye(3 * n, dtype=complex)
    return [
        ExcitationVector(eye[3 * j + mu], "incoherent", (j, mu))
        for j in range(n)
        for mu in range(3)
    ]


def random_phase_excitation(config, rng) -> ExcitationVector:
    """One random-phase, random-orientation drive of the individual atoms.

    Each atom gets ``sqrt(3) exp(i phi_j) n_j`` with uniform phase and a
    uniformly random real unit vector ``n_j``. The ``sqrt(3)`` makes the mean
    intensity over draws equal the incoherent member sum.
    """
    n = config.n_atoms
    phases = np.exp(2j * np.pi * rng.random(n))
    dirs = rng.standard_normal((n, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    amps = np.sqrt(3) * phases[:, None] * dirs
    return ExcitationVector(amps.ravel(), "coherent")


def spherical_unit_vectors(theta, phi):
    """Return ``(k_hat, e_theta, e_phi)`` arrays of shape ``(..., 3)``."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    st, ct, sp, cp = np.sin(theta), np.cos(theta), np.sin(phi), np.cos(phi)
    k_hat = np.stack(np.broadcast_arrays(st * cp, st * sp, ct), axis=-1)
    e_theta = np.stack(np.broadcast_arrays(ct * cp, ct * sp, -st), axis=-1)
    e_phi = np.stack(np.broadcast_arrays(-sp, cp, np.zeros_like(st * sp)), axis=-1)
    return k_hat, e_theta, e_phi


def helicity_vectors(theta, phi):
    """Helicity unit vectors ``h_pm = (e_theta +- i e_phi) / sqrt(2)`` for direction (theta, phi)."""
    _, e_theta, e_phi = spherical_unit_vectors(theta, phi)
    return (e_theta + 1j * e_phi) / np.sqrt(2), (e_theta - 1j * e_phi) / np.sqrt(2)


def drive_helicity(k_dir=DEFAULT_K_DIR, polarization=DEFAULT_POLARIZATION) -> int:
    """+1 if the drive is closer to ``h_+`` about its own propagation axis, else -1."""
    k, u = _check_drive(k_dir, polarization)
    theta = np.arccos(np.clip(k[2], -1, 1))
    phi = np.arctan2(k[1], k[0])
    h_plus, h_minus = helicity_vectors(theta, phi)
    return 1 if abs(np.vdot(h_plus, u)) >= abs(np.vdot(h_minus, u)) else -1
