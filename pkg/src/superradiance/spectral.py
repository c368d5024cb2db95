"""Eigendecomposition of the complex-symmetric effective Hamiltonian.

For a complex symmetric matrix ``M = M.T`` with a complete eigenbasis, the
right eigenvectors can be normalised so that ``V.T @ V = I``. Then

    M = V diag(lam) V.T,      (w - M)^-1 = V diag(1 / (w - lam)) V.T

and the resolvent needs no left eigenvectors.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8
POLE_TOL = 1e-12


class DefectiveSpectrumError(np.linalg.LinAlgError):
    """The eigenbasis is (numerically) defective; carries the configuration seed."""

    def __init__(self, message, seed=None):
        super().__init__(message)
        self.seed = seed


class PoleProximityError(ValueError):
    pass


@dataclass(frozen=True)
class SpectralDecomposition:
    eigenvalues: np.ndarray
    modes: np.ndarray
    residual: float
    biorthogonality: float
    seed: int | None = None

    @property
    def decay_rates(self) -> np.ndarray:
        """Collective mode widths ``-2 Im(lam)`` in units of gamma."""
        return -2 * self.eigenvalues.imag

    @property
    def shifts(self) -> np.ndarray:
        return self.eigenvalues.real


def _bilinear_orthonormalize(vecs: np.ndarray) -> np.ndarray:
    # Modified Gram-Schmidt with the bilinear form <a, b> = a.T @ b.
    out = vecs.copy()
    for i in range(out.shape[1]):
        for j in range(i):
            out[:, i] -= (out[:, j] @ out[:, i]) * out[:, j]
        norm2 = out[:, i] @ out[:, i]
        out[:, i] /= np.sqrt(norm2)
    return out


def _clusters(eigenvalues: np.ndarray, tol: float):
    """Groups of indices whose eigenvalues coincide to within ``tol``."""
    n = len(eigenvalues)
    order = np.argsort(eigenvalues.real, kind="stable")
    groups, used = [], np.zeros(n, dtype=bool)
    for a in range(n):
        i = order[a]
        if used[i]:
            continue
        close = np.flatnonzero((np.abs(eigenvalues - eigenvalues[i]) <= tol) & ~used)
        used[close] = True
        groups.append(close)
    return groups


def decompose(hamiltonian, tol: float = DEFAULT_TOL, seed=None) -> SpectralDecomposition:
    """Diagonalize ``hamiltonian`` (an EffectiveHamiltonian or a bare matrix).

    Eigenvalues are ordered by decay rate ``-2 Im(lam)``, largest first, with
    ties broken by ``Re(lam)``. Raises :class:`DefectiveSpectrumError` when the
    normalised eigenbasis fails the biorthogonality, residual or
    reconstruction checks; the latter two are relative to ``max(1, max|M_ij|)``.
    """
    matrix = getattr(hamiltonian, "matrix", hamiltonian)
    if seed is None:
        seed = getattr(hamiltonian, "seed", None)
    matrix = np.asarray(matrix, dtype=complex)
    n = matrix.shape[0]
    if n == 0:
        return SpectralDecomposition(np.zeros(0, complex), np.zeros((0, 0), complex), 0.0, 0.0, seed)

    lam, vecs = scipy.linalg.eig(matrix, check_finite=False)
    scale = max(1.0, float(np.max(np.abs(matrix))))

    for group in _clusters(lam, 1e-9 * scale):
        if len(group) > 1:
            # Degenerate eigenspace: any basis is valid, make it V.T-orthonormal.
            lam[group] = np.mean(lam[group])
            vecs[:, group] = _bilinear_orthonormalize(vecs[:, group])
        else:
            k = group[0]
            vecs[:, k] /= np.sqrt(vecs[:, k] @ vecs[:, k])

    order = np.lexsort((lam.real, lam.imag))
    lam = lam[order]
    vecs = vecs[:, order]

    with np.errstate(all="ignore"):
        # Symmetric (Loewdin) correction V <- V (V.T V)^(-1/2), to second order.
        # Near-degenerate pairs (e.g. the transverse modes of a close atom
        # pair) leave off-diagonal Gram errors ~ eps |M| / gap; removing them
        # mixes modes by the same amount, so residuals stay ~ eps |M|.
        err = vecs.T @ vecs - np.eye(n)
        if np.all(np.isfinite(err)) and np.max(np.abs(err)) < 1e-2:
            vecs = vecs @ (np.eye(n) - 0.5 * err + 0.375 * (err @ err))
        gram = vecs.T @ vecs
        bio = float(np.max(np.abs(gram - np.eye(n))))
        res_vec = matrix @ vecs - vecs * lam
        residual = float(
            np.max(np.linalg.norm(res_vec, axis=0) / np.linalg.norm(vecs, axis=0)) / scale
        )
        # Near-defective bases pass the two checks above with huge, almost
        # parallel columns; the reconstruction V diag(lam) V.T exposes them.
        rebuilt = float(np.max(np.abs((vecs * lam) @ vecs.T - matrix))) / scale
    checks = (bio, residual, rebuilt)
    if not all(np.isfinite(checks)) or max(checks) > tol:
        raise DefectiveSpectrumError(
            f"near-defective spectrum (seed {seed}): biorthogonality error {bio:.3g}, "
            f"residual {residual:.3g}, reconstruction error {rebuilt:.3g}, tolerance {tol:g}",
            seed=seed,
        )
    lam.setflags(write=False)
    vecs.setflags(write=False)
    return SpectralDecomposition(lam, vecs, residual, bio, seed)


def reconstruction_error(decomp: SpectralDecomposition, matrix) -> float:
    """``max|V diag(lam) V.T - M| / max|M|``."""
    v = decomp.modes
    rebuilt = (v * decomp.eigenvalues) @ v.T
    return float(np.max(np.abs(rebuilt - matrix)) / np.max(np.abs(matrix)))


def resolvent_apply(decomp: SpectralDecomposition, omega: complex, v) -> np.ndarray:
    """Return ``(omega - M)^-1 v`` through the mode expansion."""
    denom = omega - decomp.eigenvalues
    if np.min(np.abs(denom), initial=np.inf) < POLE_TOL:
        raise PoleProximityError(f"omega={omega} lies on a pole of the resolvent")
    v = np.asarray(v)
    proj = decomp.modes.T @ v
    if proj.ndim > 1:
        return decomp.modes @ (proj / denom[:, None])
    return decomp.modes @ (proj / denom)


def save_eigenvalues(decomp: SpectralDecomposition, path) -> None:
    """Tabular export: one mode per row, columns ``re_lambda, im_lambda``."""
    table = np.column_stack([decomp.eigenvalues.real, decomp.eigenvalues.imag])
    np.savetxt(path, table, delimiter=",", header="re_lambda,im_lambda", fmt="%.17g")
