"""Matrix families and smooth paths ``t -> (M(t), M'(t), M''(t))``.

Random generators all draw from a counter-based Philox stream keyed by an
explicit seed, so the same seed reproduces the same matrix bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, InvalidDimension, OutOfDomain
from .spectral import as_real_square, load_matrix, spectral_norm


def rng(seed) -> np.random.Generator:
    """Philox generator; ``seed`` may be an int or a sequence of ints."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def _check_n(n: int, minimum: int = 2) -> int:
    if int(n) != n or n < minimum:
        raise InvalidDimension(f"dimension must be an integer >= {minimum}, got {n}")
    return int(n)


def normalize_2norm(M, target: float = 1.0) -> np.ndarray:
    """Rescale so the largest singular value equals ``target``."""
    M = np.asarray(M, dtype=float)
    s = spectral_norm(M)
    if s == 0:
        return M.copy()
    return M * (target / s)


# -- named matrices --------------------------------------------------------

def hatano_nelson(n: int, g: float) -> np.ndarray:
    """Periodic hopping matrix: ``e^g`` above the diagonal, ``e^-g`` below.

    Corners wrap around: entry (1, n) is ``e^-g`` and (n, 1) is ``e^g``, so
    the matrix is circulant.
    """
    n = _check_n(n, 3)
    H = np.zeros((n, n))
    idx = np.arange(n)
    H[idx, (idx + 1) % n] = math.exp(g)
    H[idx, (idx - 1) % n] = math.exp(-g)
    return H


def hatano_nelson_eigenpairs(n: int, g: float):
    """Closed-form eigenvalues and unit Fourier eigenvectors, k = 0..n-1.

    ``lambda_k = 2 (cosh g cos(2 pi k/n) + i sinh g sin(2 pi k/n))`` and
    column k of the returned matrix is ``n^{-1/2} (1, w_k, ..., w_k^{n-1})``.
    """
    n = _check_n(n, 3)
    theta = 2 * np.pi * np.arange(n) / n
    lam = 2 * (math.cosh(g) * np.cos(theta) + 1j * math.sinh(g) * np.sin(theta))
    V = np.exp(1j * np.outer(np.arange(n), theta)) / math.sqrt(n)
    return lam, V


def ginibre(n: int, seed) -> np.ndarray:
    n = _check_n(n)
    return rng(seed).standard_normal((n, n))


def random_orthogonal(n: int, seed) -> np.ndarray:
    """Haar orthogonal matrix: QR of a Ginibre draw with column signs fixed by diag(R)."""
    n = _check_n(n)
    Q, R = np.linalg.qr(rng(seed).standard_normal((n, n)))
    d = np.sign(np.diag(R))
    d[d == 0] = 1.0
    return Q * d[None, :]


def antisymmetric_tridiagonal(n: int) -> np.ndarray:
    """+1 on the superdiagonal, -1 on the subdiagonal, no corners."""
    n = _check_n(n)
    return np.diag(np.ones(n - 1), 1) - np.diag(np.ones(n - 1), -1)


def diagonal_gaussian_impulse(n: int, seed) -> np.ndarray:
    """Diagonal of standard normals rescaled to unit 2-norm (max |entry| = 1)."""
    n = _check_n(n)
    p = rng(seed).standard_normal(n)
    return np.diag(p / np.max(np.abs(p)))


def plus_minus_one(n: int, seed, norm: float | None = None) -> np.ndarray:
    """Equiprobable +-1 entries, optionally rescaled to the given 2-norm."""
    n = _check_n(n)
    A = np.where(rng(seed).random((n, n)) < 0.5, -1.0, 1.0)
    return A if norm is None else normalize_2norm(A, norm)


GENERATORS = ("hn", "ginibre", "orthogonal", "antisym", "pm1", "diag-gauss")


def parse_generator(spec: str):
    """Split ``"name:key=value,..."`` into the name and a float-valued dict."""
    name, _, rest = spec.partition(":")
    params = {}
    if rest:
        for item in rest.split(","):
            key, eq, value = item.partition("=")
            if not eq:
                raise ConfigError(f"bad generator parameter {item!r} in {spec!r}")
            try:
                params[key.strip()] = float(value)
            except ValueError as exc:
                raise ConfigError(f"non-numeric value in {spec!r}") from exc
    return name.strip(), params


def make_matrix(spec: str, n: int, seed=0, g: float = 0.2) -> np.ndarray:
    """Build a matrix from a generator name (see ``GENERATORS``) or a JSON file path.

    ``hn`` reads ``g`` from the spec (``hn:g=-0.4``), falling back to ``g``.
    """
    name, params = parse_generator(spec)
    if name == "hn":
        return hatano_nelson(n, params.get("g", g))
    if name == "ginibre":
        return ginibre(n, seed)
    if name == "orthogonal":
        return random_orthogonal(n, seed)
    if name == "antisym":
        return antisymmetric_tridiagonal(n)
    if name == "pm1":
        return plus_minus_one(n, seed, params.get("norm"))
    if name == "diag-gauss":
        return diagonal_gaussian_impulse(n, seed)
    if Path(spec).is_file():
        return load_matrix(spec)
    raise ConfigError(f"unknown matrix generator {spec!r}; expected one of {GENERATORS} or a file")


# -- paths -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class InterpolationPencil:
    """``M(t) = (1 - t) M1 + t M2`` on [0, 1]."""

    M1: np.ndarray
    M2: np.ndarray
    domain: tuple = (0.0, 1.0)

    def __post_init__(self):
        A, B = as_real_square(self.M1), as_real_square(self.M2)
        if A.shape != B.shape:
            raise InvalidDimension(f"endpoint shapes differ: {A.shape} vs {B.shape}")
        object.__setattr__(self, "M1", A)
        object.__setattr__(self, "M2", B)

    @property
    def n(self) -> int:
        return self.M1.shape[0]

    def evaluate(self, t: float):
        D = self.M2 - self.M1
        return self.M1 + t * D, D, np.zeros_like(D)


@dataclass(frozen=True, eq=False)
class PerturbationPencil:
    """``M(t) = M + t P``."""

    M: np.ndarray
    P: np.ndarray
    domain: tuple = (-math.inf, math.inf)

    def __post_init__(self):
        A, B = as_real_square(self.M), as_real_square(self.P)
        if A.shape != B.shape:
            raise InvalidDimension(f"base {A.shape} and perturbation {B.shape} differ")
        object.__setattr__(self, "M", A)
        object.__setattr__(self, "P", B)

    @property
    def n(self) -> int:
        return self.M.shape[0]

    def evaluate(self, t: float):
        return self.M + t * self.P, self.P, np.zeros_like(self.P)


@dataclass(frozen=True, eq=False)
class IdentityDrift:
    """``M(t) = M + t I``: every eigenvalue moves with unit velocity."""

    M: np.ndarray
    domain: tuple = field(default=(-math.inf, math.inf))

    def __post_init__(self):
        object.__setattr__(self, "M", as_real_square(self.M))

    @property
    def n(self) -> int:
        return self.M.shape[0]

    def evaluate(self, t: float):
        I = np.eye(self.n)
        return self.M + t * I, I, np.zeros_like(I)


def evaluate_path(path, t: float):
    """``(M, Mdot, Mddot)`` at ``t``; raises OutOfDomain outside ``path.domain``."""
    lo, hi = path.domain
    if not lo <= t <= hi:
        raise OutOfDomain(f"t={t} outside path domain [{lo}, {hi}]")
    return path.evaluate(t)
