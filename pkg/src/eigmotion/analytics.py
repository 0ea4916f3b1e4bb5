"""Closed-form statistics of eigenvalue motion under random perturbations.

For a pencil ``M + t P`` with random ``P`` the velocity is ``c_ii`` and the
acceleration is ``2 sum_j c_ij c_ji / (lambda_i - lambda_j)``. This module
gives their expectations and variances in terms of the eigenvectors of
``M``, the special forms for normal and circulant ``M``, the Hatano-Nelson
force field, and Monte-Carlo estimators to check all of them.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateSpectrum,
    InvalidParams,
    MatrixClassMismatch,
    NotCirculant,
    RealEigenvalue,
)
from .paths import hatano_nelson, rng
from .spectral import EigenSystem, as_real_square, conjugate_pairing
from .stochastic import ImpulseDistribution

NORMAL_TOL = 1e-8
CIRCULANT_TOL = 1e-12


def _outside_pair_mask(sys: EigenSystem) -> np.ndarray:
    """``mask[i, j]`` is True when ``j`` is neither ``i`` nor its conjugate."""
    n = sys.n
    idx = np.arange(n)
    mask = np.ones((n, n), dtype=bool)
    mask[idx, idx] = False
    mask[idx, np.asarray(sys.partner)] = False
    return mask


def is_normal(sys: EigenSystem, tol: float = NORMAL_TOL) -> bool:
    return bool(np.all(np.abs(sys.condition_numbers - 1.0) <= tol))


def is_circulant(M, tol: float = CIRCULANT_TOL) -> bool:
    """Entry (i, j) depends only on (j - i) mod n."""
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    first = M[0]
    idx = np.arange(n)
    expected = first[(idx[None, :] - idx[:, None]) % n]
    scale = max(1.0, float(np.max(np.abs(M))))
    return bool(np.max(np.abs(M - expected)) <= tol * scale)


def _check_class(sys: EigenSystem, matrix_class: str, M=None) -> None:
    if matrix_class == "general":
        return
    if matrix_class == "normal":
        if not is_normal(sys):
            worst = float(np.max(np.abs(sys.condition_numbers - 1.0)))
            raise MatrixClassMismatch(f"declared normal but max |kappa_i - 1| = {worst:.3e}")
        return
    if matrix_class == "circulant":
        if M is None:
            raise MatrixClassMismatch("circulant class needs the matrix itself to verify")
        if not is_circulant(M):
            raise MatrixClassMismatch("declared circulant but the matrix is not")
        return
    raise InvalidParams(f"unknown matrix class {matrix_class!r}")


# -- first variation -------------------------------------------------------

def first_variation_variance(
    sys: EigenSystem,
    perturbation: str = "dense",
    E_p2: float = 1.0,
    matrix_class: str = "general",
    M=None,
) -> np.ndarray:
    """``E|lambda_i'|^2`` for iid zero-mean perturbations.

    dense:    ``E[p^2] ||u_i||^2``
    diagonal: ``E[p^2] sum_a |u_i^a|^2 |v_i^a|^2`` (``E[p^2]/n`` for circulant M)

    A declared ``matrix_class`` ("normal" or "circulant") is verified and a
    MatrixClassMismatch is raised if the data disagrees.
    """
    _check_class(sys, matrix_class, M)
    if perturbation == "dense":
        return E_p2 * sys.condition_numbers**2
    if perturbation == "diagonal":
        w = np.abs(sys.left) ** 2 * np.abs(sys.right.T) ** 2
        return E_p2 * w.sum(axis=1)
    raise InvalidParams(f"perturbation must be 'dense' or 'diagonal', got {perturbation!r}")


# -- second variation ------------------------------------------------------

def expected_other_force(sys: EigenSystem, E_p2: float = 1.0) -> np.ndarray:
    """``E sum_{j not in {i, conj i}} c_ij c_ji / (lambda_i - lambda_j)`` for dense iid P.

    Equals ``E[p^2] sum_j (v_i^T v_j)(u_i^* conj(u_j)) / (lambda_i - lambda_j)``;
    the acceleration carries twice this sum.
    """
    L, R = sys.left, sys.right
    G = (L @ L.T) * (R.T @ R)
    terms = np.where(_outside_pair_mask(sys), G * sys.inverse_gaps(), 0.0)
    return E_p2 * terms.sum(axis=1)


@dataclass(frozen=True, eq=False)
class VarianceBreakdown:
    """Variance of the other-eigenvalue sum ``S_i``, per eigenvalue.

    ``type1`` is ``|E S_i|^2`` and cancels against the squared mean; the
    remaining pairings give ``type2`` and ``type3``. ``fourth_moment_sum`` is
    the all-indices-equal sum; it enters with the fourth cumulant
    ``E[p^4] - 3 E[p^2]^2`` because the three pairings already count the
    Gaussian part of the fourth moment, so ``type4`` is that product.
    """

    type1: np.ndarray
    type2: np.ndarray
    type3: np.ndarray
    type4: np.ndarray
    fourth_moment_sum: np.ndarray
    E_p2: float
    E_p4: float

    @property
    def total(self) -> np.ndarray:
        return self.type2 + self.type3 + self.type4


def other_force_variance(sys: EigenSystem, E_p2: float = 1.0, E_p4: float | None = None) -> VarianceBreakdown:
    """``E|S_i - E S_i|^2`` for dense iid P; ``E_p4`` defaults to the Gaussian ``3 E[p^2]^2``."""
    if E_p4 is None:
        E_p4 = 3.0 * E_p2**2
    n = sys.n
    L, R = sys.left, sys.right
    W = np.where(_outside_pair_mask(sys), sys.inverse_gaps(), 0.0)  # a_ij
    uu = L @ L.conj().T  # uu[j, l] = u_j^* u_l
    vv = R.conj().T @ R  # vv[l, j] = v_l^* v_j
    kappa2 = sys.condition_numbers**2

    t1 = np.empty(n)
    t2 = np.empty(n)
    t3 = np.empty(n)
    t4 = np.empty(n)
    mean = ((L @ L.T) * (R.T @ R) * W).sum(axis=1)
    for i in range(n):
        a = W[i]
        # type 2: ||u_i||^2 sum_{j,l} (v_l^* v_j)(u_j^* u_l) a_j conj(a_l)
        t2[i] = kappa2[i] * float(np.real(np.einsum("j,lj,jl,l->", a, vv, uu, a.conj())))
        # type 3: |sum_l (u_l^* u_i)(v_i^* v_l) a_l|^2
        x = np.sum(uu[:, i] * vv[i, :] * a)
        t3[i] = abs(x) ** 2
        t1[i] = abs(mean[i]) ** 2
        # all-equal: sum_{a,b} |u_i^a|^2 |v_i^b|^2 |sum_j conj(u_j^a) v_j^b a_j|^2
        K = (L.T * a[None, :]) @ R.T  # K[a, b] = sum_j conj(u_j^a) v_j^b a_j
        wa = np.abs(L[i]) ** 2
        wb = np.abs(R[:, i]) ** 2
        t4[i] = float(wa @ (np.abs(K) ** 2) @ wb)
    return VarianceBreakdown(
        type1=E_p2**2 * t1,
        type2=E_p2**2 * t2,
        type3=E_p2**2 * t3,
        type4=(E_p4 - 3.0 * E_p2**2) * t4,
        fourth_moment_sum=t4,
        E_p2=float(E_p2),
        E_p4=float(E_p4),
    )


def normal_variance_bound(sys: EigenSystem, E_p2: float = 1.0, E_p4: float | None = None) -> np.ndarray:
    """``E[p^2]^2 sum_l 1/|lambda_i - lambda_l|^2 + E[p^4] |sum_l 1/(lambda_i - lambda_l)|^2``."""
    if E_p4 is None:
        E_p4 = 3.0 * E_p2**2
    W = np.where(_outside_pair_mask(sys), sys.inverse_gaps(), 0.0)
    return E_p2**2 * np.sum(np.abs(W) ** 2, axis=1) + E_p4 * np.abs(W.sum(axis=1)) ** 2


# -- circulant matrices ----------------------------------------------------

def circulant_eigenvalues(M) -> np.ndarray:
    """``lambda_k = sum_m M[0, m] w_k^m`` with ``w_k = exp(2 pi i k / n)``, k = 0..n-1."""
    M = as_real_square(M)
    if not is_circulant(M):
        raise NotCirculant("matrix entries are not a function of (j - i) mod n")
    n = M.shape[0]
    # sum_m r_m exp(+2 pi i k m / n) = n * ifft(r)
    return n * np.fft.ifft(M[0])


def power_spectrum(p) -> np.ndarray:
    """``S[m] = |sum_a p_a exp(-2 pi i m a / n)|^2 / n^2``."""
    p = np.asarray(p, dtype=float)
    return np.abs(np.fft.fft(p)) ** 2 / p.size**2


@dataclass(frozen=True, eq=False)
class CirculantForces:
    """Forces on the Fourier-indexed eigenvalues of a circulant matrix under diag(p)."""

    eigenvalues: np.ndarray
    velocity: np.ndarray
    cc: np.ndarray
    other: np.ndarray
    spectrum: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.cc + self.other


def circulant_forces(M, p) -> CirculantForces:
    """Velocity and acceleration of each ``lambda_k`` for ``M + t diag(p)``.

    ``lambda_k' = mean(p)`` and ``lambda_k'' = 2 sum_{j != k} S[j - k] / (lambda_k - lambda_j)``
    with ``S`` the power spectrum of ``p``. The conjugate of ``lambda_k`` is
    ``lambda_{n-k}``, so its term uses ``S[2k]``.
    """
    lam = circulant_eigenvalues(M)
    p = np.asarray(p, dtype=float)
    n = lam.size
    if p.shape != (n,):
        raise InvalidParams(f"p must have length {n}")
    S = power_spectrum(p)
    k = np.arange(n)
    D = lam[:, None] - lam[None, :]
    np.fill_diagonal(D, 1.0)
    off = ~np.eye(n, dtype=bool)
    scale = max(1.0, float(np.max(np.abs(lam))))
    if np.any(np.abs(D[off]) <= 1e-10 * scale):
        raise DegenerateSpectrum("circulant spectrum has a repeated eigenvalue")
    terms = 2.0 * S[(k[None, :] - k[:, None]) % n] / D
    terms[~off] = 0.0
    conj = (n - k) % n
    cc = np.where(conj != k, terms[k, conj], 0.0).astype(complex)
    mask = off.copy()
    mask[k, conj] = False
    other = np.where(mask, terms, 0.0).sum(axis=1)
    return CirculantForces(
        eigenvalues=lam,
        velocity=np.full(n, p.mean(), dtype=complex),
        cc=cc,
        other=other,
        spectrum=S,
    )


def white_noise_intensity(E_p2: float, n: int) -> float:
    """Expected power-spectrum level ``E S[m] = E[p^2] / n`` for iid diagonal entries."""
    return E_p2 / n


@dataclass(frozen=True, eq=False)
class ForceField:
    cc: np.ndarray
    other: np.ndarray
    is_real: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.cc + self.other


def white_noise_force_field(spectrum, kappa2: float, partner=None) -> ForceField:
    """``kappa^2 (-i / Im(lambda_k) + sum_{j not in {k, conj k}} 2 / (lambda_k - lambda_j))``.

    ``spectrum`` is an EigenSystem or an array of eigenvalues; for a bare
    array the conjugate pairing is rebuilt with the default tolerances.
    The conjugate term is zero (and ``is_real`` set) for real eigenvalues.
    """
    if isinstance(spectrum, EigenSystem):
        lam = np.asarray(spectrum.eigenvalues)
        partner = np.asarray(spectrum.partner)
    else:
        lam = np.asarray(spectrum, dtype=complex)
        if partner is None:
            scale = max(1.0, float(np.max(np.abs(lam))))
            partner = conjugate_pairing(lam, 1e-9 * scale, 1e-8 * scale)
        partner = np.asarray(partner)
    n = lam.size
    idx = np.arange(n)
    is_real = partner == idx
    D = lam[:, None] - lam[None, :]
    np.fill_diagonal(D, 1.0)
    inv = 1.0 / D
    mask = np.ones((n, n), dtype=bool)
    mask[idx, idx] = False
    mask[idx, partner] = False
    other = kappa2 * 2.0 * np.where(mask, inv, 0.0).sum(axis=1)
    with np.errstate(divide="ignore"):
        cc = np.where(is_real, 0.0, -1j * kappa2 / np.where(is_real, 1.0, lam.imag))
    return ForceField(cc=cc.astype(complex), other=other, is_real=is_real)


def pair_force_components(lam_k: complex, lam_j: complex):
    """Real and imaginary parts of ``1/(lambda_k - lambda_j) + 1/(lambda_k - conj(lambda_j))``.

    With ``x = Re(lambda_k - lambda_j)``, ``y = Im(lambda_j) - Im(lambda_k)`` and
    ``b = Im(lambda_k)``: the real part is ``x (1/(x^2+y^2) + 1/(x^2+(y+2b)^2))``
    and the imaginary part ``y/(x^2+y^2) - (y+2b)/(x^2+(y+2b)^2)``.
    """
    lam_k, lam_j = complex(lam_k), complex(lam_j)
    x = lam_k.real - lam_j.real
    y = lam_j.imag - lam_k.imag
    b = lam_k.imag
    r1 = x * x + y * y
    y2 = y + 2 * b
    r2 = x * x + y2 * y2
    if r1 == 0 or r2 == 0:
        raise ZeroDivisionError("lambda_k coincides with lambda_j or its conjugate")
    return x * (1 / r1 + 1 / r2), y / r1 - y2 / r2


# -- Hatano-Nelson ---------------------------------------------------------

def hn_small_g_force(n: int, g: float, k: int, kappa2: float = 1.0) -> complex:
    """First-order small-``g`` expansion of the white-noise force on ``lambda_k``.

    With ``c = cos(2 pi j/n)``, ``s = sin(2 pi j/n)``:
    ``kappa^2 (-i/(2 g s_k) + sum_{j not in {k, n-k}} [1/(c_k - c_j) - i g (s_k - s_j)/(c_k - c_j)^2])``.
    Summing the pair ``j, n-j`` gives ``2/(c_k - c_j) - 2 i g s_k/(c_k - c_j)^2``; real
    eigenvalues (j = 0, n/2) contribute once.
    """
    if n < 3:
        raise InvalidParams("n must be at least 3")
    k = int(k) % n
    conj = (n - k) % n
    theta = 2 * np.pi * np.arange(n) / n
    c, s = np.cos(theta), np.sin(theta)
    if conj == k or g == 0 or abs(s[k]) < 1e-15:
        raise RealEigenvalue(f"lambda_{k} is real; the conjugate term is undefined")
    j = np.array([m for m in range(n) if m not in (k, conj)])
    dc = c[k] - c[j]
    total = np.sum(1.0 / dc - 1j * g * (s[k] - s[j]) / dc**2)
    return complex(kappa2 * (-1j / (2 * g * s[k]) + total))


def hn_exact_force(n: int, g: float, k: int, kappa2: float = 1.0) -> complex:
    """White-noise force on ``lambda_k`` from the closed-form Hatano-Nelson spectrum."""
    k = int(k) % n
    conj = (n - k) % n
    if conj == k or g == 0:
        raise RealEigenvalue(f"lambda_{k} is real; the conjugate term is undefined")
    theta = 2 * np.pi * np.arange(n) / n
    lam = 2 * (math.cosh(g) * np.cos(theta) + 1j * math.sinh(g) * np.sin(theta))
    j = np.array([m for m in range(n) if m not in (k, conj)])
    return complex(kappa2 * (-1j / lam[k].imag + np.sum(2.0 / (lam[k] - lam[j]))))


def commutator_with_transpose(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    return A @ A.T - A.T @ A


def hn_non_normality(n: int, g: float, t: float, sigma: float = 1.0, p=None):
    """Commutator ``[H(t), H(t)^T]`` for ``H(t) = H + t diag(p)`` and the expected Frobenius ratio.

    The commutator equals ``-2 t sinh(g)`` times the symmetric pattern with
    ``p_i - p_{i+1}`` on the first off-diagonals and ``p_n - p_1`` in the
    corners. For iid ``p`` with variance ``sigma^2``,
    ``E ||[H(t), H(t)^T]||_F^2 = 16 n sigma^2 t^2 sinh(g)^2``, and with
    ``||H||_F^2 = 2 n cosh(2g)`` the ratio ``||[.,.]||_F / ||H||_F^2`` has mean
    ``2 sigma t |sinh g| / (sqrt(n) cosh 2g)`` to leading order in 1/n.

    ``p`` defaults to zeros (commutator 0); pass a draw to get a realization.
    """
    if n < 3:
        raise InvalidParams("n must be at least 3")
    if t < 0 or sigma <= 0:
        raise InvalidParams("need t >= 0 and sigma > 0")
    H = hatano_nelson(n, g)
    p = np.zeros(n) if p is None else np.asarray(p, dtype=float)
    C = commutator_with_transpose(H + t * np.diag(p))
    expectation = 2 * sigma * t * abs(math.sinh(g)) / (math.sqrt(n) * math.cosh(2 * g))
    return C, expectation


def hn_commutator_pattern(p) -> np.ndarray:
    """Symmetric matrix with ``p_i - p_{i+1}`` beside the diagonal and ``p_n - p_1`` in the corners."""
    p = np.asarray(p, dtype=float)
    n = p.size
    X = np.zeros((n, n))
    i = np.arange(n - 1)
    X[i, i + 1] = X[i + 1, i] = p[:-1] - p[1:]
    X[0, n - 1] = X[n - 1, 0] = p[-1] - p[0]
    return X


# -- Monte Carlo -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MonteCarloEstimate:
    """Sample mean with its complex standard error ``sqrt(E|X - EX|^2 / N)``."""

    mean: np.ndarray
    variance: np.ndarray
    samples: int

    @property
    def stderr(self) -> np.ndarray:
        return np.sqrt(self.variance / self.samples)

    def within(self, expected, n_se: float = 3.0) -> np.ndarray:
        return np.abs(self.mean - expected) <= n_se * self.stderr


def _chunks(samples: int, chunk: int):
    starts = range(0, samples, chunk)
    return [(k, min(chunk, samples - s)) for k, s in enumerate(starts)]


def _run_chunks(fn, samples: int, chunk: int, seed, threads: int = 1):
    """Evaluate ``fn(gen, count)`` per chunk; chunk k uses stream ``(seed, k)``.

    Results come back in chunk order, so the outcome does not depend on the
    number of threads.
    """
    jobs = _chunks(samples, chunk)

    def work(job):
        k, count = job
        return fn(rng([seed, k]), count)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, jobs))
    else:
        parts = [work(j) for j in jobs]
    return np.concatenate(parts, axis=0)


def _estimate(X: np.ndarray) -> MonteCarloEstimate:
    mean = X.mean(axis=0)
    var = np.mean(np.abs(X - mean) ** 2, axis=0)
    return MonteCarloEstimate(mean=mean, variance=var, samples=X.shape[0])


def _draw_batch(impulse: ImpulseDistribution, n: int, gen, count: int) -> np.ndarray:
    if impulse.name == "dense":
        return gen.standard_normal((count, n, n))
    p = gen.standard_normal((count, n))
    if impulse.name == "unit-diag":
        p /= np.linalg.norm(p, axis=1, keepdims=True)
    P = np.zeros((count, n, n))
    i = np.arange(n)
    P[:, i, i] = p
    return P


def sample_couplings(sys: EigenSystem, P: np.ndarray) -> np.ndarray:
    """``C[b] = U P[b] V`` for a stack of perturbations."""
    return sys.left @ P @ sys.right


def sample_forces(sys: EigenSystem, P: np.ndarray):
    """Per-draw velocity, conjugate term and other-eigenvalue term (``Mddot = 0``)."""
    C = sample_couplings(sys, P)
    n = sys.n
    idx = np.arange(n)
    partner = np.asarray(sys.partner)
    T = 2.0 * C * np.swapaxes(C, 1, 2) * sys.inverse_gaps()
    cc = np.where(partner != idx, T[:, idx, partner], 0.0)
    other = np.where(_outside_pair_mask(sys), T, 0.0).sum(axis=2)
    return C[:, idx, idx], cc, other


def _batch_size(n: int, chunk: int | None) -> int:
    if chunk is not None:
        return chunk
    return max(64, 400_000 // (n * n))


def mc_velocity(sys, impulse="dense", samples=100_000, seed=0, threads=1, chunk=None) -> MonteCarloEstimate:
    """Monte-Carlo mean and variance of ``lambda_i'``."""
    impulse = ImpulseDistribution(impulse) if isinstance(impulse, str) else impulse

    def fn(gen, count):
        return np.diagonal(sample_couplings(sys, _draw_batch(impulse, sys.n, gen, count)), axis1=1, axis2=2)

    return _estimate(_run_chunks(fn, samples, _batch_size(sys.n, chunk), seed, threads))


def mc_acceleration(sys, impulse="dense", samples=100_000, seed=0, threads=1, chunk=None):
    """Monte-Carlo estimates of ``(total, cc, other)`` accelerations for ``Mdot = P``."""
    impulse = ImpulseDistribution(impulse) if isinstance(impulse, str) else impulse
    n = sys.n

    def fn(gen, count):
        _, cc, other = sample_forces(sys, _draw_batch(impulse, n, gen, count))
        return np.concatenate([cc, other], axis=1)

    X = _run_chunks(fn, samples, _batch_size(n, chunk), seed, threads)
    cc, other = X[:, :n], X[:, n:]
    return _estimate(cc + other), _estimate(cc), _estimate(other)


def mc_other_sum(sys, impulse="dense", samples=200_000, seed=0, threads=1, chunk=None) -> MonteCarloEstimate:
    """Monte-Carlo statistics of ``S_i = sum_{j not in {i, conj i}} c_ij c_ji / (lambda_i - lambda_j)``."""
    impulse = ImpulseDistribution(impulse) if isinstance(impulse, str) else impulse

    def fn(gen, count):
        _, _, other = sample_forces(sys, _draw_batch(impulse, sys.n, gen, count))
        return other / 2.0

    return _estimate(_run_chunks(fn, samples, _batch_size(sys.n, chunk), seed, threads))


def mc_hn_frobenius_ratio(n, g, t, sigma=1.0, samples=10_000, seed=0, threads=1, chunk=256) -> MonteCarloEstimate:
    """Monte-Carlo ``||[H(t), H(t)^T]||_F / ||H||_F^2`` with ``p ~ N(0, sigma^2)`` iid."""
    H = hatano_nelson(n, g)
    denom = np.linalg.norm(H, "fro") ** 2
    i = np.arange(n)

    def fn(gen, count):
        A = np.broadcast_to(H, (count, n, n)).copy()
        A[:, i, i] += t * sigma * gen.standard_normal((count, n))
        At = np.swapaxes(A, 1, 2)
        C = A @ At - At @ A
        return np.linalg.norm(C, axis=(1, 2)) / denom

    return _estimate(_run_chunks(fn, samples, chunk, seed, threads))
