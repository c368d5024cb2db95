"""Random atomic configurations drawn from an axially symmetric Gaussian cloud.

Lengths are in units of the reduced wavelength (lambda / 2 pi). The mean
density is

    n(r) = n0 * exp(-z**2 / (2 L**2) - (x**2 + y**2) / (2 R**2))

so each coordinate of an atom is an independent normal draw with standard
deviation R (transverse) or L (longitudinal).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

# Hard cap on n0 * d**3 for the exclusion radius d; beyond this rejection
# sampling stops being a small perturbation of the Gaussian law.
MAX_EXCLUSION_FILLING = 0.05
MAX_REDRAWS_PER_ATOM = 10_000


class CloudTooDenseError(RuntimeError):
    """Rejection sampling could not place an atom outside the exclusion radius."""


@dataclass(frozen=True)
class CloudGeometry:
    n0: float
    R: float
    L: float
    exclusion_radius: float | None = None

    def __post_init__(self):
        for name in ("n0", "R", "L"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")
        d = self.exclusion_radius
        if d is not None:
            if not (np.isfinite(d) and d >= 0):
                raise ValueError(f"exclusion_radius must be >= 0, got {d!r}")
            if self.n0 * d**3 > MAX_EXCLUSION_FILLING:
                raise ValueError(
                    f"exclusion_radius {d} too large for density {self.n0}: "
                    f"n0*d^3 = {self.n0 * d**3:.3g} > {MAX_EXCLUSION_FILLING}"
                )

    @property
    def widths(self) -> np.ndarray:
        return np.array([self.R, self.R, self.L])

    def density(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return self.n0 * np.exp(
            -0.5 * (p[..., 0] ** 2 + p[..., 1] ** 2) / self.R**2 - 0.5 * p[..., 2] ** 2 / self.L**2
        )

    def to_dict(self) -> dict:
        return {"n0": self.n0, "R": self.R, "L": self.L, "exclusion_radius": self.exclusion_radius}


@dataclass(frozen=True)
class AtomConfiguration:
    positions: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(pos)):
            raise ValueError("atom positions must be finite")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def n_atoms(self) -> int:
        return self.positions.shape[0]

    def __len__(self):
        return self.n_atoms

    def min_separation(self) -> float:
        if self.n_atoms < 2:
            return np.inf
        diff = self.positions[:, None, :] - self.positions[None, :, :]
        dist = np.sqrt(np.sum(diff**2, axis=-1))
        return float(np.min(dist[np.triu_indices(self.n_atoms, k=1)]))


def expected_atom_number(geometry: CloudGeometry) -> int:
    """Mean atom number of the cloud, ``round(n0 (2 pi)^(3/2) R^2 L)``.

    A result of zero is allowed but triggers a ``RuntimeWarning``.
    """
    n = int(round(geometry.n0 * (2 * np.pi) ** 1.5 * geometry.R**2 * geometry.L))
    if n == 0:
        warnings.warn("cloud geometry holds no atoms on average", RuntimeWarning, stacklevel=2)
    return n


def sample_cloud(geometry: CloudGeometry, n_atoms: int, seed: int) -> AtomConfiguration:
    """Draw ``n_atoms`` i.i.d. positions from the Gaussian density.

    The output depends only on ``(geometry, n_atoms, seed)``. With an
    exclusion radius, atoms are placed one at a time and each candidate that
    falls closer than the radius to an already placed atom is redrawn.
    """
    if n_atoms < 0:
        raise ValueError("n_atoms must be non-negative")
    rng = np.random.default_rng(seed)
    widths = geometry.widths
    d = geometry.exclusion_radius
    if not d:
        return AtomConfiguration(rng.standard_normal((n_atoms, 3)) * widths, seed)

    positions = np.empty((n_atoms, 3))
    for j in range(n_atoms):
        for _ in range(MAX_REDRAWS_PER_ATOM):
            candidate = rng.standard_normal(3) * widths
            if j == 0 or np.min(np.sum((positions[:j] - candidate) ** 2, axis=1)) >= d * d:
                positions[j] = candidate
                break
        else:
            raise CloudTooDenseError(
                f"could not place atom {j} of {n_atoms} outside exclusion radius {d} "
                f"after {MAX_REDRAWS_PER_ATOM} draws (seed {seed}); geometry too dense"
            )
    return AtomConfiguration(positions, seed)


def save_configuration(config: AtomConfiguration, path, metadata=()) -> None:
    """Write one atom per row (x, y, z) with the seed in a comment header.

    ``metadata`` lines are prepended to the header as further comments.
    """
    header = "\n".join([*metadata, f"seed: {config.seed}", "x,y,z"])
    np.savetxt(Path(path), config.positions, delimiter=",", header=header, fmt="%.17g")


def load_configuration(path) -> AtomConfiguration:
    seed = None
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            text = line[1:].strip()
            if text.startswith("seed:"):
                value = text.split(":", 1)[1].strip()
                seed = None if value == "None" else int(value)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)  # empty configuration
        positions = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    return AtomConfiguration(positions.reshape(-1, 3), seed)
