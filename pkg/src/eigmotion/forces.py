"""Eigenvalue velocities, eigenvector derivatives and accelerations.

Everything is expressed through the coupling matrix ``c_ij = u_i^* Mdot v_j``:

    velocity      lambda_i'  = c_ii
    acceleration  lambda_i'' = u_i^* Mddot v_i + 2 sum_{j != i} c_ij c_ji / (lambda_i - lambda_j)

and the acceleration splits into an inertial term, the pull of the complex
conjugate partner, and the sum over all remaining eigenvalues.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch
from .spectral import EigenSystem

COLLISION_TOL_FACTOR = 1e-8
CENTRAL_REL_TOL = 1e-10


def _check_dim(sys: EigenSystem, A, name: str) -> np.ndarray:
    A = np.asarray(A)
    if A.shape != (sys.n, sys.n):
        raise DimensionMismatch(f"{name} has shape {A.shape}, eigensystem has n={sys.n}")
    return A


def couplings(sys: EigenSystem, Mdot) -> np.ndarray:
    """Matrix ``c`` with ``c[i, j] = u_i^* Mdot v_j``."""
    Mdot = _check_dim(sys, Mdot, "Mdot")
    return sys.left @ Mdot @ sys.right


def velocity(sys: EigenSystem, Mdot) -> np.ndarray:
    return np.diagonal(couplings(sys, Mdot)).copy()


def eigvec_derivatives(sys: EigenSystem, Mdot):
    """Derivatives of right (columns) and left (rows) eigenvectors, zero gauge.

    ``v_i' = sum_{j != i} c_ji / (lambda_i - lambda_j) v_j`` and
    ``u_i^*' = sum_{j != i} c_ij / (lambda_i - lambda_j) u_j^*``, so that
    ``u_i^* v_i' = 0`` and ``(U V)' = 0``.
    """
    C = couplings(sys, Mdot)
    CW = C * sys.inverse_gaps()
    Vdot = sys.right @ (-CW)
    Udot = CW @ sys.left
    return Vdot, Udot


def _interaction_terms(sys: EigenSystem, C: np.ndarray) -> np.ndarray:
    """``T[i, j] = 2 c_ij c_ji / (lambda_i - lambda_j)``, zero on the diagonal."""
    return 2.0 * C * C.T * sys.inverse_gaps()


def acceleration(sys: EigenSystem, Mdot, Mddot) -> np.ndarray:
    C = couplings(sys, Mdot)
    Mddot = _check_dim(sys, Mddot, "Mddot")
    inertial = np.einsum("ij,ji->i", sys.left @ Mddot, sys.right)
    return inertial + _interaction_terms(sys, C).sum(axis=1)


def pair_direction(lam_i: complex, lam_j: complex) -> complex:
    """Unit vector ``(conj(lam_i) - conj(lam_j)) / |lam_i - lam_j|``."""
    d = complex(lam_i) - complex(lam_j)
    return np.conj(d) / abs(d)


@dataclass(frozen=True, eq=False)
class ForceReport:
    """Per-eigenvalue split ``total = inertial + cc + other``.

    ``cc`` is the full ``j = conjugate(i)`` term of the interaction sum,
    ``-i |c_{i,conj i}|^2 / Im(lambda_i)``; it is exactly zero for real
    eigenvalues. ``singular`` lists, per eigenvalue, the indices ``j`` whose
    distance falls below the collision tolerance (terms are still evaluated).
    """

    eigenvalues: np.ndarray
    partner: np.ndarray
    velocity: np.ndarray
    inertial: np.ndarray
    cc: np.ndarray
    other: np.ndarray
    total: np.ndarray
    singular: tuple = field(default_factory=tuple)

    @property
    def n(self) -> int:
        return self.eigenvalues.size

    def directions(self, pairs) -> dict:
        """Unit vectors ``r_ij`` for the requested index pairs."""
        lam = self.eigenvalues
        return {(i, j): pair_direction(lam[i], lam[j]) for i, j in pairs}

    def to_records(self) -> list[dict]:
        recs = []
        for i in range(self.n):
            rec = {"index": i}
            for key, arr in (
                ("lambda", self.eigenvalues),
                ("velocity", self.velocity),
                ("inertial", self.inertial),
                ("cc", self.cc),
                ("other", self.other),
                ("total", self.total),
            ):
                rec[f"{key}_re"] = float(arr[i].real)
                rec[f"{key}_im"] = float(arr[i].imag)
            rec["singular_pairs"] = [int(j) for j in self.singular[i]]
            recs.append(rec)
        return recs


def force_decomposition(
    sys: EigenSystem, Mdot, Mddot=None, collision_tol: float | None = None
) -> ForceReport:
    """Velocity and three-way acceleration split for every eigenvalue.

    ``Mddot`` defaults to zero (linear pencils).
    """
    n = sys.n
    C = couplings(sys, Mdot)
    if Mddot is None:
        inertial = np.zeros(n, dtype=complex)
    else:
        Mddot = _check_dim(sys, Mddot, "Mddot")
        inertial = np.einsum("ij,ji->i", sys.left @ Mddot, sys.right)
    terms = _interaction_terms(sys, C)
    idx = np.arange(n)
    partner = np.asarray(sys.partner)
    nonreal = partner != idx
    # c_{i,conj i} is taken from the solver's own vectors for the partner.
    cc = np.where(nonreal, terms[idx, partner], 0.0)
    mask = np.ones((n, n), dtype=bool)
    mask[idx, idx] = False
    mask[idx, partner] = False
    other = np.where(mask, terms, 0.0).sum(axis=1)

    tol = COLLISION_TOL_FACTOR * (sys.norm if sys.norm > 0 else 1.0) if collision_tol is None else collision_tol
    dist = np.abs(sys.gaps())
    np.fill_diagonal(dist, np.inf)
    singular = tuple(tuple(int(j) for j in np.flatnonzero(dist[i] < tol)) for i in range(n))

    vel = np.diagonal(C).copy()
    return ForceReport(
        eigenvalues=np.asarray(sys.eigenvalues),
        partner=partner,
        velocity=vel,
        inertial=inertial,
        cc=cc.astype(complex),
        other=other,
        total=inertial + cc + other,
        singular=singular,
    )


class Interaction(enum.Enum):
    CENTRAL_ATTRACTIVE = "central-attractive"
    CENTRAL_REPULSIVE = "central-repulsive"
    NON_CENTRAL = "non-central"
    NONE = "none"


def interaction_strength(sys: EigenSystem, Mdot, i: int, j: int) -> complex:
    """``f`` such that the pair force ``c_ij c_ji / (lambda_i - lambda_j)``
    equals ``f (lambda_i - lambda_j)``.

    A real ``f`` means the force acts along the line joining the two
    eigenvalues; this is the only reading under which a conjugate pair
    (``c c`` real positive, separation purely imaginary) is central.
    """
    if i == j:
        raise ValueError("interaction needs two distinct eigenvalues")
    C = couplings(sys, Mdot)
    d = sys.eigenvalues[i] - sys.eigenvalues[j]
    return complex(C[i, j] * C[j, i] / (d * d))


def classify_interaction(sys: EigenSystem, Mdot, i: int, j: int, rel_tol: float = CENTRAL_REL_TOL) -> Interaction:
    """Central (real ``f``) forces attract when ``f < 0`` and repel when ``f > 0``."""
    f = interaction_strength(sys, Mdot, i, j)
    if f == 0:
        return Interaction.NONE
    if abs(f.imag) > rel_tol * abs(f):
        return Interaction.NON_CENTRAL
    return Interaction.CENTRAL_ATTRACTIVE if f.real < 0 else Interaction.CENTRAL_REPULSIVE
