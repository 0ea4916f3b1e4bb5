"""Dense eigendecomposition with biorthogonal left/right eigenvectors.

The right eigenvectors are the unit-norm columns of ``V``; the left
eigenvectors are the rows of ``V^{-1}``, so ``U @ V == I`` up to inversion
error. Eigenvalues are ordered by real part, then imaginary part.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateSpectrum,
    IllConditionedBasis,
    InvalidMatrix,
    PairingError,
)

ULP = np.finfo(float).eps

REAL_TOL_FACTOR = 1e-9
PAIR_TOL_FACTOR = 1e-8
DEGENERACY_TOL_FACTOR = 1e-10


def as_real_square(M) -> np.ndarray:
    """Validate and return ``M`` as a float64 array of shape (n, n), n >= 2."""
    A = np.asarray(M)
    if np.iscomplexobj(A):
        if np.any(A.imag != 0):
            raise InvalidMatrix("matrix has non-zero imaginary parts")
        A = A.real
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidMatrix(f"expected a square matrix, got shape {A.shape}")
    if A.shape[0] < 2:
        raise InvalidMatrix("dimension must be at least 2")
    if not np.all(np.isfinite(A)):
        raise InvalidMatrix("matrix has non-finite entries")
    return A


def spectral_norm(M) -> float:
    return float(np.linalg.norm(M, 2))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def sort_order(eigenvalues: np.ndarray) -> np.ndarray:
    return np.lexsort((eigenvalues.imag, eigenvalues.real))


def conjugate_pairing(eigenvalues, real_tol: float, pair_tol: float) -> np.ndarray:
    """Greedy nearest-conjugate involution.

    ``partner[i] == i`` marks a real eigenvalue (``|Im| <= real_tol``).
    Candidates are visited in (Re, Im) order, so the result is deterministic.
    """
    lam = np.asarray(eigenvalues, dtype=complex)
    n = lam.size
    partner = np.full(n, -1, dtype=int)
    is_real = np.abs(lam.imag) <= real_tol
    partner[is_real] = np.flatnonzero(is_real)
    for i in sort_order(lam):
        if partner[i] >= 0:
            continue
        free = np.flatnonzero((partner < 0) & (np.arange(n) != i))
        if free.size == 0:
            raise PairingError(f"eigenvalue {lam[i]} has no conjugate partner")
        dist = np.abs(lam[free] - np.conj(lam[i]))
        k = int(np.argmin(dist))
        if dist[k] > pair_tol:
            raise PairingError(
                f"eigenvalue {lam[i]}: nearest conjugate candidate is {dist[k]:.3e} away "
                f"(tolerance {pair_tol:.3e})"
            )
        j = int(free[k])
        partner[i] = j
        partner[j] = i
    return partner


def min_gap(eigenvalues) -> float:
    lam = np.asarray(eigenvalues, dtype=complex)
    if lam.size < 2:
        return np.inf
    d = np.abs(lam[:, None] - lam[None, :])
    np.fill_diagonal(d, np.inf)
    return float(d.min())


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Eigenvalues with biorthogonal right/left eigenvectors of a real matrix.

    Attributes
    ----------
    eigenvalues : (n,) complex
    right : (n, n) complex
        Column ``i`` is the unit-norm right eigenvector ``v_i``.
    left : (n, n) complex
        Row ``i`` is the left eigenvector ``u_i^*`` (row ``i`` of ``right^{-1}``).
    partner : (n,) int
        Conjugate-pair involution; ``partner[i] == i`` for real eigenvalues.
    """

    eigenvalues: np.ndarray
    right: np.ndarray
    left: np.ndarray
    partner: np.ndarray
    real_tol: float
    pair_tol: float
    degeneracy_tol: float
    norm: float

    @property
    def n(self) -> int:
        return self.eigenvalues.size

    @property
    def is_real(self) -> np.ndarray:
        return self.partner == np.arange(self.n)

    @property
    def condition_numbers(self) -> np.ndarray:
        """kappa_i = ||u_i||_2 (equal to ||u_i|| ||v_i|| / |u_i^* v_i| here)."""
        return np.linalg.norm(self.left, axis=1)

    @property
    def left_columns(self) -> np.ndarray:
        """Left eigenvectors ``u_i`` as columns (conjugate transpose of ``left``)."""
        return self.left.conj().T

    def biorthogonality_residual(self) -> float:
        return float(np.max(np.abs(self.left @ self.right - np.eye(self.n))))

    def residuals(self, M) -> np.ndarray:
        M = np.asarray(M, dtype=float)
        R = M @ self.right - self.right * self.eigenvalues[None, :]
        return np.linalg.norm(R, axis=0)

    def gaps(self) -> np.ndarray:
        """Matrix of ``lambda_i - lambda_j``."""
        lam = self.eigenvalues
        return lam[:, None] - lam[None, :]

    def inverse_gaps(self) -> np.ndarray:
        """``1 / (lambda_i - lambda_j)`` off the diagonal, zero on it."""
        d = self.gaps()
        np.fill_diagonal(d, 1.0)
        w = 1.0 / d
        np.fill_diagonal(w, 0.0)
        return w


def _fix_phase(V: np.ndarray) -> np.ndarray:
    # First component within 1e-8 of the column maximum is made real positive;
    # picking the first near-maximal entry keeps the gauge stable when several
    # components have equal modulus (Fourier vectors).
    mags = np.abs(V)
    cols = np.arange(V.shape[1])
    near_max = mags >= (1.0 - 1e-8) * mags.max(axis=0, keepdims=True)
    idx = np.argmax(near_max, axis=0)
    pivot = V[idx, cols]
    return V * (np.abs(pivot) / pivot)[None, :]


def decompose(
    M,
    real_tol: float | None = None,
    *,
    pair_tol: float | None = None,
    degeneracy_tol: float | None = None,
) -> EigenSystem:
    """Biorthogonal eigendecomposition of a real square matrix.

    Tolerances default to multiples of ``||M||_2``: real classification
    ``1e-9``, conjugate pairing ``1e-8``, degeneracy ``1e-10``.

    Raises
    ------
    DegenerateSpectrum
        If the minimum eigenvalue gap is at or below ``degeneracy_tol``.
    IllConditionedBasis
        If ``cond(V) > 1/sqrt(ulp)``.
    """
    A = as_real_square(M)
    norm = spectral_norm(A)
    scale = norm if norm > 0 else 1.0
    real_tol = REAL_TOL_FACTOR * scale if real_tol is None else float(real_tol)
    pair_tol = PAIR_TOL_FACTOR * scale if pair_tol is None else float(pair_tol)
    degeneracy_tol = DEGENERACY_TOL_FACTOR * scale if degeneracy_tol is None else float(degeneracy_tol)

    lam, V = np.linalg.eig(A)
    order = sort_order(lam)
    lam = lam.astype(complex)[order]
    V = V.astype(complex)[:, order]

    gap = min_gap(lam)
    if gap <= degeneracy_tol:
        raise DegenerateSpectrum(
            f"minimum eigenvalue gap {gap:.3e} <= degeneracy tolerance {degeneracy_tol:.3e}",
            gap=gap,
        )

    V = V / np.linalg.norm(V, axis=0, keepdims=True)
    V = _fix_phase(V)
    cond = float(np.linalg.cond(V))
    if not np.isfinite(cond) or cond > 1.0 / np.sqrt(ULP):
        raise IllConditionedBasis(f"eigenvector matrix condition number {cond:.3e}", condition=cond)
    U = np.linalg.inv(V)

    partner = conjugate_pairing(lam, real_tol, pair_tol)
    return EigenSystem(
        eigenvalues=_frozen(lam),
        right=_frozen(V),
        left=_frozen(U),
        partner=_frozen(partner),
        real_tol=real_tol,
        pair_tol=pair_tol,
        degeneracy_tol=degeneracy_tol,
        norm=norm,
    )


def conjugate_partner(sys: EigenSystem, i: int) -> int | None:
    """Index of the complex conjugate of ``lambda_i``, or None if it is real."""
    if not 0 <= i < sys.n:
        raise IndexError(f"eigenvalue index {i} out of range for n={sys.n}")
    j = int(sys.partner[i])
    return None if j == i else j


def eigenvalues_sorted(M) -> np.ndarray:
    """Eigenvalues only, in the same (Re, Im) order as ``decompose``."""
    lam = np.linalg.eigvals(as_real_square(M)).astype(complex)
    return lam[sort_order(lam)]


# -- matrix file format ----------------------------------------------------

def load_matrix(path) -> np.ndarray:
    """Read ``{"n": int, "rows": [[...], ...]}`` JSON."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    try:
        n = int(doc["n"])
        rows = doc["rows"]
    except (KeyError, TypeError) as exc:
        raise InvalidMatrix(f"{path}: expected keys 'n' and 'rows'") from exc
    A = np.array(rows, dtype=float)
    if A.shape != (n, n):
        raise InvalidMatrix(f"{path}: 'rows' has shape {A.shape}, expected ({n}, {n})")
    return as_real_square(A)


def save_matrix(path, M) -> None:
    A = as_real_square(M)
    doc = {"n": int(A.shape[0]), "rows": A.tolist()}
    Path(path).write_text(json.dumps(doc) + "\n", encoding="utf-8")
