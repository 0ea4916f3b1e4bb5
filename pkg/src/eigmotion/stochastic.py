"""Piecewise-linear random matrix process and its smoothed version.

On each grid interval ``[t_i, t_{i+1}]`` a random impulse ``P_i`` drives the
matrix. The smoothed process multiplies ``P_i`` by a window that is 1 on the
interval interior and falls to 0 at the grid points through bump-function
boundary layers of width ``epsilon``; its integral gives ``M_eps(t)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .errors import InvalidParams, InvalidWindow, NonMonotoneGrid, OutOfDomain
from .paths import rng
from .spectral import EigenSystem, as_real_square

# int_{-1}^{0} exp(1 - 1/(1 - u^2)) du: mass of one boundary layer per unit epsilon.
BUMP_MASS = 0.6034501612189381


def _bump(s):
    """``exp(1 - 1/(1 - s^2))`` for |s| < 1, zero otherwise."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1
    si = s[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - si * si))
    return out


def _bump_slope(s):
    """d/ds of ``_bump``."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1
    si = s[inside]
    q = 1.0 - si * si
    out[inside] = np.exp(1.0 - 1.0 / q) * (-2.0 * si / (q * q))
    return out


def _layer_integral(s: float) -> float:
    """``int_{-1}^{s} bump(u) du`` for s in [-1, 0]."""
    if s <= -1:
        return 0.0
    if s >= 0:
        return BUMP_MASS
    val, _ = quad(lambda u: float(_bump(u)), -1.0, s, epsabs=1e-14, epsrel=1e-13)
    return val


def bump_left(t, t_i: float, eps: float):
    """Rising layer on [t_i, t_i + eps]: 0 at t_i, 1 at t_i + eps, 0 outside."""
    t = np.asarray(t, dtype=float)
    s = (t - t_i - eps) / eps
    out = np.where((t >= t_i) & (t <= t_i + eps), _bump(s), 0.0)
    return out if out.ndim else float(out)


def bump_right(t, t_next: float, eps: float):
    """Falling layer on [t_next - eps, t_next]: 1 at t_next - eps, 0 at t_next."""
    t = np.asarray(t, dtype=float)
    s = (t - t_next + eps) / eps
    out = np.where((t >= t_next - eps) & (t <= t_next), _bump(s), 0.0)
    return out if out.ndim else float(out)


def bump_left_derivative(t, t_i: float, eps: float):
    t = np.asarray(t, dtype=float)
    s = (t - t_i - eps) / eps
    out = np.where((t >= t_i) & (t <= t_i + eps), _bump_slope(s) / eps, 0.0)
    return out if out.ndim else float(out)


def bump_right_derivative(t, t_next: float, eps: float):
    t = np.asarray(t, dtype=float)
    s = (t - t_next + eps) / eps
    out = np.where((t >= t_next - eps) & (t <= t_next), _bump_slope(s) / eps, 0.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True, eq=False)
class WindowSpec:
    """Strictly increasing time grid with boundary-layer width ``epsilon``."""

    grid: np.ndarray
    epsilon: float

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float).ravel()
        if grid.size < 2:
            raise NonMonotoneGrid("grid needs at least two points")
        if not np.all(np.isfinite(grid)) or np.any(np.diff(grid) <= 0):
            raise NonMonotoneGrid("grid must be finite and strictly increasing")
        eps = float(self.epsilon)
        if not eps > 0:
            raise InvalidWindow(f"epsilon must be positive, got {eps}")
        shortest = float(np.min(np.diff(grid)))
        if eps >= shortest / 2:
            raise InvalidWindow(f"epsilon={eps} must be below half the shortest interval ({shortest / 2})")
        grid.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "epsilon", eps)

    @classmethod
    def uniform(cls, start: float, stop: float, count: int, epsilon: float) -> "WindowSpec":
        return cls(np.linspace(start, stop, count), epsilon)

    @property
    def intervals(self) -> int:
        return self.grid.size - 1

    def bounds(self, i: int):
        if not 0 <= i < self.intervals:
            raise IndexError(f"interval {i} out of range (0..{self.intervals - 1})")
        return float(self.grid[i]), float(self.grid[i + 1])

    def interval_of(self, t: float) -> int:
        """Index i with ``t_i <= t < t_{i+1}``; the last grid point maps to the last interval."""
        if not self.grid[0] <= t <= self.grid[-1]:
            raise OutOfDomain(f"t={t} outside grid [{self.grid[0]}, {self.grid[-1]}]")
        i = int(np.searchsorted(self.grid, t, side="right")) - 1
        return min(i, self.intervals - 1)

    def mass(self, i: int) -> float:
        """``int W`` over interval i: length - 2 eps + 2 eps BUMP_MASS."""
        a, b = self.bounds(i)
        return (b - a) - 2 * self.epsilon + 2 * self.epsilon * BUMP_MASS

    def layer_edges(self) -> np.ndarray:
        """Grid points together with every plateau edge, sorted."""
        e = self.epsilon
        pts = [self.grid, self.grid[:-1] + e, self.grid[1:] - e]
        return np.unique(np.concatenate(pts))


def window(t, i: int, spec: WindowSpec):
    """``W_eps(t; t_i, t_{i+1})``."""
    a, b = spec.bounds(i)
    eps = spec.epsilon
    t = np.asarray(t, dtype=float)
    w = np.where((t > a + eps) & (t < b - eps), 1.0, 0.0)
    w = w + np.where(t <= a + eps, bump_left(t, a, eps), 0.0)
    w = w + np.where(t >= b - eps, bump_right(t, b, eps), 0.0)
    return w if w.ndim else float(w)


def window_derivative(t, i: int, spec: WindowSpec):
    a, b = spec.bounds(i)
    eps = spec.epsilon
    t = np.asarray(t, dtype=float)
    d = np.where(t <= a + eps, bump_left_derivative(t, a, eps), 0.0)
    d = d + np.where(t >= b - eps, bump_right_derivative(t, b, eps), 0.0)
    return d if d.ndim else float(d)


def window_integral(t: float, i: int, spec: WindowSpec) -> float:
    """``int_{t_i}^{t} W_eps(s; t_i, t_{i+1}) ds`` (clamped to the interval)."""
    a, b = spec.bounds(i)
    eps = spec.epsilon
    t = min(max(float(t), a), b)
    if t <= a + eps:
        return eps * _layer_integral((t - a - eps) / eps)
    total = eps * BUMP_MASS
    if t <= b - eps:
        return total + (t - a - eps)
    total += (b - a - 2 * eps)
    # falling layer is the mirror image of the rising one
    s = (t - b + eps) / eps
    return total + eps * (BUMP_MASS - _layer_integral(-s))


# -- impulse distributions -------------------------------------------------

@dataclass(frozen=True)
class ImpulseDistribution:
    """Law of the random impulse matrix drawn once per interval.

    ``dense``: iid standard normal entries. ``diag``: iid standard normal
    diagonal. ``unit-diag``: diagonal uniform on the unit sphere of R^n.
    """

    name: str

    KINDS = ("dense", "diag", "unit-diag")

    def __post_init__(self):
        if self.name not in self.KINDS:
            raise InvalidParams(f"unknown impulse distribution {self.name!r}; expected one of {self.KINDS}")

    @property
    def diagonal(self) -> bool:
        return self.name != "dense"

    def moments(self, n: int):
        """``(E[p^2], E[p^4])`` of a single nonzero entry."""
        if self.name == "unit-diag":
            return 1.0 / n, 3.0 / (n * (n + 2))
        return 1.0, 3.0

    def second_moment_matrix(self, n: int) -> np.ndarray:
        """``S[m, l] = E[p_ml^2]``."""
        p2, _ = self.moments(n)
        return p2 * (np.eye(n) if self.diagonal else np.ones((n, n)))

    def draw(self, n: int, gen: np.random.Generator) -> np.ndarray:
        if self.name == "dense":
            return gen.standard_normal((n, n))
        p = gen.standard_normal(n)
        if self.name == "unit-diag":
            p = p / np.linalg.norm(p)
        return np.diag(p)


@dataclass(eq=False)
class StochasticProcess:
    """Smoothed random process ``M_eps' = P_eps`` started from ``base``.

    The impulse of interval i is drawn from its own Philox stream keyed by
    ``(seed, i)`` on first use and cached, so evaluation order never changes
    the realization.
    """

    base: np.ndarray
    window: WindowSpec
    impulse: ImpulseDistribution
    seed: int
    _cache: dict = field(default_factory=dict, init=False, repr=False)
    _offsets: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        self.base = as_real_square(self.base)
        if isinstance(self.impulse, str):
            self.impulse = ImpulseDistribution(self.impulse)

    @property
    def n(self) -> int:
        return self.base.shape[0]

    @property
    def domain(self):
        return float(self.window.grid[0]), float(self.window.grid[-1])

    def impulse_at(self, i: int) -> np.ndarray:
        if i not in self._cache:
            self.window.bounds(i)
            P = self.impulse.draw(self.n, rng([self.seed, i]))
            P.setflags(write=False)
            self._cache[i] = P
        return self._cache[i]

    def smoothed_impulse(self, t: float) -> np.ndarray:
        i = self.window.interval_of(t)
        return self.impulse_at(i) * window(t, i, self.window)

    def smoothed_impulse_derivative(self, t: float) -> np.ndarray:
        i = self.window.interval_of(t)
        return self.impulse_at(i) * window_derivative(t, i, self.window)

    def _offset(self, i: int) -> np.ndarray:
        """``M_eps(t_i)``, accumulated from the window masses."""
        if i == 0:
            return self.base
        if i not in self._offsets:
            self._offsets[i] = self._offset(i - 1) + self.window.mass(i - 1) * self.impulse_at(i - 1)
        return self._offsets[i]

    def matrix(self, t: float) -> np.ndarray:
        """``M_eps(t)`` from the closed-form window integral."""
        i = self.window.interval_of(t)
        return self._offset(i) + window_integral(t, i, self.window) * self.impulse_at(i)

    def evaluate(self, t: float):
        """Path protocol: ``(M_eps, P_eps, P_eps')``."""
        return self.matrix(t), self.smoothed_impulse(t), self.smoothed_impulse_derivative(t)

    def discrete(self, t: float, wiener: bool = False) -> np.ndarray:
        """Unsmoothed process ``M(t_i + dt) = M(t_i) + dt P_i`` (``sqrt(dt)`` if ``wiener``)."""
        i = self.window.interval_of(t)
        grid = self.window.grid
        scale = np.sqrt if wiener else (lambda x: x)
        M = self.base.copy()
        for k in range(i):
            M = M + scale(grid[k + 1] - grid[k]) * self.impulse_at(k)
        return M + scale(t - grid[i]) * self.impulse_at(i)

    def discrete_path(self, wiener: bool = False) -> "DiscreteProcessPath":
        return DiscreteProcessPath(self, wiener)


@dataclass(eq=False)
class DiscreteProcessPath:
    """Piecewise-linear process viewed as a matrix path (``M'' = 0`` inside intervals)."""

    process: StochasticProcess
    wiener: bool = False

    @property
    def n(self) -> int:
        return self.process.n

    @property
    def domain(self):
        return self.process.domain

    def evaluate(self, t: float):
        proc = self.process
        i = proc.window.interval_of(t)
        P = proc.impulse_at(i)
        M = proc.discrete(t, self.wiener)
        if self.wiener:
            dt = t - proc.window.grid[i]
            Mdot = P / (2 * math.sqrt(dt)) if dt > 0 else np.full_like(P, np.inf)
            return M, Mdot, np.zeros_like(P)
        return M, P, np.zeros_like(P)


def integrate_process(proc: StochasticProcess, t_end: float, step_count: int, layer_steps: int = 20):
    """Integrate ``M' = P_eps(t)`` with classical RK4 and sample it.

    Returns ``(times, matrices)`` at ``step_count + 1`` evenly spaced times from
    the first grid point to ``t_end``. Between samples the step is split at
    grid points and plateau edges; every piece inside a boundary layer gets at
    least ``layer_steps`` RK4 steps.
    """
    t0, t1 = proc.domain
    if not t0 < t_end <= t1:
        raise OutOfDomain(f"t_end={t_end} must lie in ({t0}, {t1}]")
    if step_count < 1:
        raise InvalidParams("step_count must be at least 1")
    eps = proc.window.epsilon
    times = np.linspace(t0, t_end, step_count + 1)
    edges = proc.window.layer_edges()
    h_layer = eps / layer_steps

    def f(t):
        return proc.smoothed_impulse(t)

    M = proc.base.copy()
    out = [M.copy()]
    for a, b in zip(times[:-1], times[1:]):
        cuts = np.concatenate(([a], edges[(edges > a) & (edges < b)], [b]))
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            mid = 0.5 * (lo + hi)
            i = proc.window.interval_of(mid)
            ga, gb = proc.window.bounds(i)
            in_layer = mid < ga + eps or mid > gb - eps
            steps = max(1, math.ceil((hi - lo) / h_layer - 1e-9)) if in_layer else 1
            h = (hi - lo) / steps
            for k in range(steps):
                t = lo + k * h
                k1 = f(t)
                k2 = f(t + h / 2)
                k3 = k2  # the right-hand side does not depend on M
                k4 = f(t + h)
                M = M + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(M.copy())
    return times, out


# -- expectations ----------------------------------------------------------

def pair_second_moments(sys: EigenSystem, S) -> np.ndarray:
    """``G[i, j] = E[c_ij c_ji]`` for independent zero-mean entries with ``E[p_ml^2] = S[m, l]``.

    ``E[c_ij c_ji] = sum_{m,l} S_ml conj(u_i^m) conj(u_j^m) v_j^l v_i^l``.
    """
    S = np.asarray(S, dtype=float)
    L, R = sys.left, sys.right
    if np.count_nonzero(S - np.diag(np.diagonal(S))) == 0:
        d = np.diagonal(S)
        A = L * (d[None, :] * R.T)
        return A @ (L * R.T).T
    if np.ptp(S) == 0:
        return S.flat[0] * (L @ L.T) * (R.T @ R)
    return np.einsum("im,jm,ml,lj,li->ij", L, L, S, R, R, optimize=True)


@dataclass(frozen=True, eq=False)
class ExpectedForce:
    """Expected acceleration split; ``cc`` is 0 where ``is_real`` (no partner)."""

    cc: np.ndarray
    other: np.ndarray
    is_real: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.cc + self.other


def expected_velocity(sys: EigenSystem, impulse: ImpulseDistribution | None = None) -> np.ndarray:
    """Zero: the impulses have zero mean."""
    return np.zeros(sys.n, dtype=complex)


def expected_acceleration(sys: EigenSystem, second_moments) -> ExpectedForce:
    """Expected ``lambda''`` inside an interval, with eigenvectors of the current matrix.

    ``second_moments`` is either a scalar ``E[p^2]`` (dense iid impulses) or an
    n x n matrix of per-entry second moments. For dense iid impulses the
    conjugate term is ``-i E[p^2] ||u_i||^2 / Im(lambda_i)``.
    """
    n = sys.n
    S = np.asarray(second_moments, dtype=float)
    if S.ndim == 0:
        S = np.full((n, n), float(S))
    G = pair_second_moments(sys, S)
    terms = 2.0 * G * sys.inverse_gaps()
    idx = np.arange(n)
    partner = np.asarray(sys.partner)
    is_real = partner == idx
    cc = np.where(is_real, 0.0, terms[idx, partner]).astype(complex)
    mask = np.ones((n, n), dtype=bool)
    mask[idx, idx] = False
    mask[idx, partner] = False
    other = np.where(mask, terms, 0.0).sum(axis=1)
    return ExpectedForce(cc=cc, other=other, is_real=is_real)
