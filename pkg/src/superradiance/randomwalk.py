"""Single-scattering random-walk model of the early fluorescence decay.

Light enters along +z, is scattered once by an atom at ``r`` and leaves
toward the detector. Propagation through the cloud multiplies the field by

    chi = exp(-i b / 2 * (1/2) / (w + i/2)),

with ``b`` the resonant optical depth of the path, ``b = 6 pi * int n ds`` in
reduced-wavelength units. Averaging the short-time slope over the scatterers
gives

    Gamma(theta) = 1 + <b_in + b_out> / 2
                 = 1 + b0z/8 * (1 + R / sqrt(R^2 cos^2 theta + L^2 sin^2 theta)),

and for the coherent forward beam ``Gamma = 1 + b0z / 8``, where
``b0z = sqrt(2 pi) sigma0 n0 L`` is the peak optical depth along z.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, erfcx

from .cloud import CloudGeometry
from .excitation import DEFAULT_POLARIZATION, pulse_spectrum, spherical_unit_vectors

SIGMA0 = 6 * np.pi
DEFAULT_GUARD_FACTOR = 3.0
VALIDITY_LIMIT = 1.0


class CoherentZoneWarning(UserWarning):
    """Angle lies in the forward/backward coherent zone where the model fails."""


class SingleScatteringValidityWarning(UserWarning):
    """Pulse and optical depth outside the single-scattering regime."""


@dataclass(frozen=True)
class RandomWalkModel:
    geometry: CloudGeometry

    @property
    def sigma0(self) -> float:
        return SIGMA0

    @property
    def b0z(self) -> float:
        g = self.geometry
        return float(np.sqrt(2 * np.pi) * SIGMA0 * g.n0 * g.L)


def optical_depth_ray(model: RandomWalkModel, point, direction) -> np.ndarray:
    """Optical depth along the half-line ``point + s * direction``, ``s >= 0``.

    Closed form: the Gaussian density restricted to the ray is a shifted 1-D
    Gaussian in ``s``, integrated with the complementary error function.
    ``point`` may carry leading batch axes.
    """
    g = model.geometry
    p = np.asarray(point, dtype=float)
    d = np.asarray(direction, dtype=float)
    if abs(np.linalg.norm(d) - 1) > 1e-9:
        raise ValueError("direction must be a unit vector")
    inv = 1.0 / np.array([g.R, g.R, g.L]) ** 2
    a = np.sum(d * d * inv)
    b = np.sum(p * d * inv, axis=-1)
    c = np.sum(p * p * inv, axis=-1)
    q = b / np.sqrt(2 * a)
    with np.errstate(over="ignore", under="ignore"):
        tail = np.where(
            q >= 0,
            np.exp(-c / 2) * erfcx(np.maximum(q, 0)),
            np.exp(-(c - b * b / a) / 2) * erfc(np.minimum(q, 0)),
        )
    return SIGMA0 * g.n0 * np.sqrt(np.pi / (2 * a)) * tail


def incoming_depth(model: RandomWalkModel, points) -> np.ndarray:
    """Depth accumulated by the +z drive from -infinity up to each point."""
    return optical_depth_ray(model, points, np.array([0.0, 0.0, -1.0]))


def outgoing_depth(model: RandomWalkModel, points, theta, phi=0.0) -> np.ndarray:
    k_hat, _, _ = spherical_unit_vectors(theta, phi)
    return optical_depth_ray(model, points, k_hat)


def _shape_factor(model, theta):
    g = model.geometry
    c, s = np.cos(theta), np.sin(theta)
    return g.R / np.sqrt(g.R**2 * c * c + g.L**2 * s * s)


def mean_total_depth(model: RandomWalkModel, theta) -> np.ndarray:
    """Density-weighted mean of incoming plus outgoing optical depth."""
    return model.b0z / 4 * (1 + _shape_factor(model, np.asarray(theta, dtype=float)))


def mean_total_depth_sampled(model: RandomWalkModel, theta: float, n_samples: int = 100_000,
                             seed: int = 0) -> tuple[float, float]:
    """Monte Carlo estimate (mean, standard error) of :func:`mean_total_depth`
    from atoms drawn from the cloud density and explicit ray integrals."""
    rng = np.random.default_rng(seed)
    pts = rng.standard_normal((n_samples, 3)) * model.geometry.widths
    total = incoming_depth(model, pts) + outgoing_depth(model, pts, theta)
    return float(total.mean()), float(total.std(ddof=1) / np.sqrt(n_samples))


def coherent_zone_halfwidth(model: RandomWalkModel, factor: float = DEFAULT_GUARD_FACTOR) -> float:
    """``factor`` times the main diffraction-lobe half-width ``1 / (k R)``."""
    return factor / model.geometry.R


def in_coherent_zone(model: RandomWalkModel, theta, factor: float = DEFAULT_GUARD_FACTOR):
    theta = np.asarray(theta, dtype=float)
    w = coherent_zone_halfwidth(model, factor)
    return (theta < w) | (theta > np.pi - w)


def decay_rate_analytic(model: RandomWalkModel, theta, guard_factor: float | None = DEFAULT_GUARD_FACTOR):
    """Early-time sideward decay rate ``1 + mean_total_depth / 2`` (units of gamma).

    Warns with :class:`CoherentZoneWarning` for angles inside the forward or
    backward coherent zones; pass ``guard_factor=None`` to silence the guard.
    """
    theta = np.asarray(theta, dtype=float)
    if guard_factor is not None and np.any(in_coherent_zone(model, theta, guard_factor)):
        warnings.warn("decay_rate_analytic evaluated inside a coherent zone", CoherentZoneWarning, stacklevel=2)
    rate = 1 + mean_total_depth(model, theta) / 2
    return rate if rate.ndim else float(rate)


def decay_rate_forward(model: RandomWalkModel) -> float:
    """Forward (coherent) early-time decay rate ``1 + b0z / 8``."""
    return 1 + model.b0z / 8


def validity_parameter(model: RandomWalkModel, pulse, theta) -> float:
    """Size of the multiple-scattering correction; single scattering needs it <~ 1.

    Short pulses (duration <= 1/gamma): ``mean depth * duration``. Long
    pulses: ``mean depth / |detuning|`` (infinite on resonance).
    """
    depth = float(mean_total_depth(model, theta))
    if pulse.duration <= 1.0:
        return depth * pulse.duration
    if pulse.detuning == 0:
        return np.inf
    return depth / abs(pulse.detuning)


def _cloud_nodes(geometry: CloudGeometry, n_quad: int):
    # Probabilists' Gauss-Hermite: weight exp(-x^2/2), normalised to a density.
    x, w = np.polynomial.hermite_e.hermegauss(n_quad)
    w = w / np.sqrt(2 * np.pi)
    gx, gy, gz = np.meshgrid(x * geometry.R, x * geometry.R, x * geometry.L, indexing="ij")
    weights = (w[:, None, None] * w[None, :, None] * w[None, None, :]).ravel()
    points = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=-1)
    return points, weights


def scattered_amplitude(depth, pulse, times, radius: float = 1.0, n_circle: int = 96) -> np.ndarray:
    """Single-scattering field amplitude for total path depth ``depth``.

    Evaluates ``int dw/2pi exp(-i w t) E(w) exp(-i depth/4 / (w + i/2)) / (w + i/2)``
    as ``-i`` times the residue at the essential singularity ``w = -i/2``,
    computed by the trapezoid rule on a circle around it. Shape
    ``(len(depth), len(times))``.
    """
    depth = np.atleast_1d(np.asarray(depth, dtype=float))
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(times < 0):
        raise ValueError("single-scattering intensity is defined for t >= 0")
    u = radius * np.exp(2j * np.pi * (np.arange(n_circle) + 0.5) / n_circle)
    omega = -0.5j + u
    spec = pulse_spectrum(pulse, omega)
    prop = np.exp(-0.25j * depth[:, None] / u[None, :])                    # (P, C)
    drive = spec[:, None] * np.exp(-1j * np.outer(omega, times))          # (C, T)
    return -1j * (prop @ drive) / n_circle


def single_scatter_intensity(model: RandomWalkModel, pulse, theta: float, times, n_quad: int = 32,
                             n_circle: int = 96, polarization=DEFAULT_POLARIZATION,
                             check_validity: bool = True, validity_limit: float = VALIDITY_LIMIT) -> np.ndarray:
    """Total (polarization-summed) singly scattered intensity after the pulse.

    Cloud average with Gauss-Hermite nodes matched to the Gaussian density;
    the result is in arbitrary units, proportional to the atom number. Warns
    with :class:`SingleScatteringValidityWarning` when
    :func:`validity_parameter` exceeds ``validity_limit``.
    """
    if check_validity:
        param = validity_parameter(model, pulse, theta)
        if param > validity_limit:
            warnings.warn(
                f"single-scattering validity parameter {param:.3g} exceeds {validity_limit}",
                SingleScatteringValidityWarning,
                stacklevel=2,
            )
    points, weights = _cloud_nodes(model.geometry, n_quad)
    depth = incoming_depth(model, points) + outgoing_depth(model, points, theta)
    k_hat, _, _ = spherical_unit_vectors(theta, 0.0)
    pattern = 1 - abs(k_hat @ np.asarray(polarization)) ** 2
    out = np.zeros(len(np.atleast_1d(times)))
    for start in range(0, len(depth), 8192):
        amp = scattered_amplitude(depth[start:start + 8192], pulse, times, n_circle=n_circle)
        out += weights[start:start + 8192] @ (amp.real**2 + amp.imag**2)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("single-scattering quadrature did not converge")
    return pattern * out


def single_scatter_decay_rate(model: RandomWalkModel, pulse, theta: float, dt: float = 1e-4, **kw) -> float:
    """Early-time slope ``-d ln I / dt`` of :func:`single_scatter_intensity` (forward difference)."""
    i0, i1 = single_scatter_intensity(model, pulse, theta, [0.0, dt], **kw)
    return float(np.log(i0 / i1) / dt)
