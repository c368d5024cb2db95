"""Dipole-dipole coupling matrix of the single-excitation sector.

Units: lengths in reduced wavelengths, so the resonant wave number is 1, and
frequencies in units of the free-atom linewidth gamma. Each atom carries three
Cartesian excited states; atom ``j`` occupies rows/columns ``3j, 3j+1, 3j+2``
for the x, y, z dipole components.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Reduced-dipole constant d^2/hbar in units gamma * lambdabar^3. This choice makes
# the imaginary part of the pair kernel tend to -gamma/2 at contact, i.e. it
# matches the single-atom width and the cross-section 6 pi lambdabar^2.
DIPOLE_CONSTANT = 0.75

SELF_ENERGY = -0.5j

# Cartesian (x, y, z) -> spherical |J=1, m=-1, 0, +1> basis.
SPHERICAL_BASIS = np.array(
    [
        [1 / np.sqrt(2), -1j / np.sqrt(2), 0],
        [0, 0, 1],
        [-1 / np.sqrt(2), -1j / np.sqrt(2), 0],
    ]
)


class CoincidentAtomsError(ValueError):
    pass


def pair_kernels(r_vecs) -> np.ndarray:
    """Vectorised :func:`pair_kernel` over the leading axes of ``r_vecs``."""
    r_vecs = np.asarray(r_vecs, dtype=float)
    r = np.sqrt(np.sum(r_vecs**2, axis=-1))
    if np.any(r == 0):
        raise CoincidentAtomsError("coincident atoms: pair separation is zero")
    rhat = r_vecs / r[..., None]
    r_ = r[..., None, None]
    near = 1 - 1j * r_ - r_**2
    far = 3 - 3j * r_ - r_**2
    proj = rhat[..., :, None] * rhat[..., None, :]
    eye = np.eye(3)
    return DIPOLE_CONSTANT / r_**3 * (eye * near - proj * far) * np.exp(1j * r_)


def pair_kernel(r_vec) -> np.ndarray:
    """3x3 exchange block between two atoms separated by ``r_vec``.

    G_{mu nu} = C / r^3 * [delta_{mu nu} (1 - i r - r^2)
                           - r_mu r_nu / r^2 (3 - 3 i r - r^2)] * exp(i r)

    with ``C = DIPOLE_CONSTANT``. Even in ``r_vec``.
    """
    r_vec = np.asarray(r_vec, dtype=float)
    if r_vec.shape != (3,):
        raise ValueError("r_vec must be a 3-vector")
    return pair_kernels(r_vec)


@dataclass(frozen=True)
class EffectiveHamiltonian:
    matrix: np.ndarray
    n_atoms: int
    seed: int | None = None

    @property
    def dim(self) -> int:
        return 3 * self.n_atoms


def build_hamiltonian(config, check: bool = True) -> EffectiveHamiltonian:
    """Assemble the dense 3N x 3N effective Hamiltonian of a configuration.

    Off-diagonal 3x3 blocks are ``pair_kernel(r_j - r_l)``; diagonal blocks are
    ``-i/2`` times the identity. The result is complex symmetric.
    """
    pos = np.asarray(config.positions, dtype=float)
    n = pos.shape[0]
    blocks = np.zeros((n, n, 3, 3), dtype=complex)
    if n > 1:
        iu, ju = np.triu_indices(n, k=1)
        try:
            kern = pair_kernels(pos[iu] - pos[ju])
        except CoincidentAtomsError as exc:
            raise CoincidentAtomsError(f"{exc} (seed {getattr(config, 'seed', None)})") from None
        blocks[iu, ju] = kern
        blocks[ju, iu] = kern
    idx = np.arange(n)
    blocks[idx, idx] = SELF_ENERGY * np.eye(3)
    matrix = blocks.transpose(0, 2, 1, 3).reshape(3 * n, 3 * n)
    if check:
        scale = max(1.0, np.max(np.abs(matrix), initial=0.0))
        asym = np.max(np.abs(matrix - matrix.T), initial=0.0)
        if asym > 1e-12 * scale:
            raise AssertionError(f"effective Hamiltonian not complex symmetric ({asym:.3g})")
    matrix.setflags(write=False)
    return EffectiveHamiltonian(matrix, n, getattr(config, "seed", None))


def to_spherical_basis(matrix) -> np.ndarray:
    """Rotate every atom's 3x3 blocks to the |J=1, m> basis (similarity transform)."""
    n = matrix.shape[0] // 3
    u = np.kron(np.eye(n), SPHERICAL_BASIS)
    return u @ matrix @ u.conj().T


def save_matrix(hamiltonian: EffectiveHamiltonian, path) -> None:
    """Debug dump: ``.npz`` with ``matrix`` (3N x 3N complex128, atom-major
    Cartesian ordering), ``n_atoms`` and ``seed`` (-1 when unknown)."""
    seed = -1 if hamiltonian.seed is None else hamiltonian.seed
    np.savez(path, matrix=hamiltonian.matrix, n_atoms=hamiltonian.n_atoms, seed=seed)
