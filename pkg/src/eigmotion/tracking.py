"""Continuous eigenvalue tracks from per-sample decompositions.

Consecutive spectra are matched by a minimum-cost assignment. Events are
read off the conjugate-pair structure of the tracks: a pair that becomes two
real eigenvalues is a realization, two real eigenvalues that leave the axis
as a pair are a departure.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import (
    DegenerateSpectrum,
    IllConditionedBasis,
    InvalidParams,
    MatchingAmbiguous,
    PairingError,
)
from .forces import velocity
from .paths import evaluate_path, ginibre
from .spectral import decompose, eigenvalues_sorted, spectral_norm

TIE_TOL = 1e-12
RETRY_FRACTIONS = (0.01, 0.03, 0.1)
_RECOVERABLE = (DegenerateSpectrum, IllConditionedBasis, PairingError)


class EventKind(enum.Enum):
    REALIZATION = "realization"
    DEPARTURE = "departure"
    NEAR_DEGENERACY = "near-degeneracy"


@dataclass(frozen=True)
class Event:
    t_lo: float
    t_hi: float
    kind: EventKind
    tracks: tuple

    def to_dict(self) -> dict:
        return {"t_lo": self.t_lo, "t_hi": self.t_hi, "kind": self.kind.value, "tracks": list(self.tracks)}


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Matched eigenvalue tracks.

    ``positions[s, a]`` is track ``a`` at ``times[s]``. ``partners[s, a]`` is the
    track holding the conjugate of track ``a`` (``a`` itself when real).
    """

    times: np.ndarray
    positions: np.ndarray
    partners: np.ndarray
    events: tuple
    matching_cost: np.ndarray
    low_confidence: tuple = ()
    real_tol: float = 0.0
    pair_tol: float = 0.0
    t_start: float = 0.0
    t_end: float = 0.0

    @property
    def n(self) -> int:
        return self.positions.shape[1]

    @property
    def samples(self) -> int:
        return self.positions.shape[0]

    def is_real(self) -> np.ndarray:
        return self.partners == np.arange(self.n)[None, :]

    def real_counts(self) -> np.ndarray:
        return self.is_real().sum(axis=1)

    def events_of(self, kind: EventKind) -> list:
        return [e for e in self.events if e.kind is kind]


def _decompose_at(path, t: float, step: float, lo: float, hi: float):
    """Decompose ``M(t)``; on a degenerate sample retry at nearby times within 0.1 step."""
    try:
        M, Mdot, _ = evaluate_path(path, t)
        return t, decompose(M), Mdot, False
    except _RECOVERABLE as first:
        for frac in RETRY_FRACTIONS:
            for sign in (1.0, -1.0):
                tt = t + sign * frac * step
                if not lo <= tt <= hi:
                    continue
                try:
                    M, Mdot, _ = evaluate_path(path, tt)
                    return tt, decompose(M), Mdot, True
                except _RECOVERABLE:
                    continue
        raise first


def _is_mirror(a: complex, b: complex, tol: float) -> bool:
    return abs(a - np.conj(b)) <= tol


def _track_partners(perm: np.ndarray, new_partner: np.ndarray) -> np.ndarray:
    """Track-level conjugate partners implied by assigning column ``perm[a]`` to track ``a``."""
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.size)
    return inv[new_partner[perm]]


def _assign(
    pred: np.ndarray,
    new: np.ndarray,
    scale: float,
    pair_tol: float,
    t_lo: float,
    t_hi: float,
    prev_partners: np.ndarray | None = None,
    new_partner: np.ndarray | None = None,
):
    """Columns of ``new`` for each track; raises MatchingAmbiguous on a genuine tie.

    A tie is a swap of two tracks' targets that changes the total cost by less
    than ``TIE_TOL * scale``. Ties between conjugate predictions or targets are
    harmless (mirror-symmetric picture). Other ties are settled by keeping
    the previous conjugate pairing when one option preserves more pairs; a
    tie whose options give the same pairing only relabels tracks. Anything
    else raises.
    """
    cost = np.abs(pred[:, None] - new[None, :])
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(pred.size, dtype=int)
    perm[rows] = cols
    base = cost[np.arange(pred.size), perm]
    # cost change of swapping the targets of tracks a and b
    swap = cost[:, perm] + cost[:, perm].T - base[:, None] - base[None, :]
    np.fill_diagonal(swap, np.inf)
    tied = False
    for a, b in zip(*np.nonzero(swap < TIE_TOL * scale)):
        if a >= b:
            continue
        tied = True
        if _is_mirror(pred[a], pred[b], pair_tol) or _is_mirror(new[perm[a]], new[perm[b]], pair_tol):
            continue
        if prev_partners is not None and new_partner is not None:
            alt = perm.copy()
            alt[[a, b]] = alt[[b, a]]
            keep_p = _track_partners(perm, new_partner)
            alt_p = _track_partners(alt, new_partner)
            if np.array_equal(keep_p, alt_p):
                continue
            kept = int(np.sum(keep_p == prev_partners))
            alt_kept = int(np.sum(alt_p == prev_partners))
            if alt_kept > kept:
                perm = alt
                continue
            if kept > alt_kept:
                continue
        raise MatchingAmbiguous(
            f"tracks {a} and {b} have equal-cost assignments between t={t_lo} and t={t_hi}",
            t_lo=t_lo,
            t_hi=t_hi,
        )
    return perm, tied


def _pair_state(partners: np.ndarray, positions: np.ndarray):
    """Map ``frozenset({a, b}) -> track with positive imaginary part`` for every pair."""
    state = {}
    for a, b in enumerate(partners):
        if a < b:
            up = a if positions[a].imag > positions[b].imag else b
            state[frozenset((a, int(b)))] = up
    return state


def _events_between(state_lo, state_hi, t_lo, t_hi):
    events = []
    for pair, up in sorted(state_lo.items(), key=lambda kv: sorted(kv[0])):
        tracks = tuple(sorted(pair))
        if pair not in state_hi:
            events.append(Event(t_lo, t_hi, EventKind.REALIZATION, tracks))
        elif state_hi[pair] != up:
            # the pair crossed the axis within one step: it met and separated again
            events.append(Event(t_lo, t_hi, EventKind.REALIZATION, tracks))
            events.append(Event(t_lo, t_hi, EventKind.DEPARTURE, tracks))
    for pair in sorted(state_hi, key=sorted):
        if pair not in state_lo:
            events.append(Event(t_lo, t_hi, EventKind.DEPARTURE, tuple(sorted(pair))))
    return events


def track(path, t_start: float, t_end: float, sample_count: int, matching: str = "velocity") -> Trajectory:
    """Eigenvalue tracks of ``path`` at ``sample_count`` evenly spaced times.

    ``matching="velocity"`` predicts each track forward (analytic velocity on
    the first step, secant afterwards) before assigning; ``"modulus"`` uses the
    previous positions directly.
    """
    if sample_count < 2:
        raise InvalidParams("sample_count must be at least 2")
    if not t_end > t_start:
        raise InvalidParams("t_end must exceed t_start")
    if matching not in ("velocity", "modulus"):
        raise InvalidParams(f"unknown matching rule {matching!r}")
    grid = np.linspace(t_start, t_end, sample_count)
    step = grid[1] - grid[0]

    times, positions, partners, costs = [], [], [], []
    events, low_conf = [], []
    prev_state = None
    real_tol = pair_tol = 0.0
    for s, t_nom in enumerate(grid):
        t, sys, Mdot, retried = _decompose_at(path, t_nom, step, t_start, t_end)
        real_tol = max(real_tol, sys.real_tol)
        pair_tol = max(pair_tol, sys.pair_tol)
        lam = np.asarray(sys.eigenvalues)
        if retried:
            lo, hi = max(t_start, t_nom - 0.1 * step), min(t_end, t_nom + 0.1 * step)
            events.append(Event(float(lo), float(hi), EventKind.NEAR_DEGENERACY, ()))
            low_conf.append(s)
        if s == 0:
            perm = np.arange(sys.n)
            vel0 = velocity(sys, Mdot)
        else:
            dt = t - times[-1]
            if matching == "modulus":
                pred = positions[-1]
            elif s == 1:
                pred = positions[-1] + vel0 * dt
            else:
                pred = positions[-1] + (positions[-1] - positions[-2]) * (dt / (times[-1] - times[-2]))
            scale = max(1.0, sys.norm)
            perm, tied = _assign(
                pred, lam, scale, sys.pair_tol, times[-1], t, partners[-1], np.asarray(sys.partner)
            )
            if tied:
                low_conf.append(s)
        pos = lam[perm]
        part = _track_partners(perm, np.asarray(sys.partner))
        state = _pair_state(part, pos)
        if prev_state is not None:
            events.extend(_events_between(prev_state, state, float(times[-1]), float(t)))
            costs.append(float(np.sum(np.abs(pos - positions[-1]))))
        prev_state = state
        times.append(float(t))
        positions.append(pos)
        partners.append(part)
    return Trajectory(
        times=np.array(times),
        positions=np.array(positions),
        partners=np.array(partners),
        events=tuple(events),
        matching_cost=np.array(costs),
        low_confidence=tuple(sorted(set(low_conf))),
        real_tol=real_tol,
        pair_tol=pair_tol,
        t_start=float(t_start),
        t_end=float(t_end),
    )


# -- event refinement ------------------------------------------------------

def _state_at(path, t, pos_lo, pos_hi, part_lo, t_lo, t_hi, width):
    """Track positions and partners at ``t`` matched against a linear interpolation."""
    for shift in (0.0, 1e-3, -1e-3, 1e-2, -1e-2):
        tt = t + shift * width
        try:
            M, _, _ = evaluate_path(path, tt)
            sys = decompose(M)
            break
        except _RECOVERABLE:
            continue
    else:
        raise DegenerateSpectrum(f"no simple spectrum near t={t}")
    w = (tt - t_lo) / (t_hi - t_lo)
    pred = (1 - w) * pos_lo + w * pos_hi
    lam = np.asarray(sys.eigenvalues)
    new_partner = np.asarray(sys.partner)
    perm, _ = _assign(pred, lam, max(1.0, sys.norm), sys.pair_tol, t_lo, t_hi, part_lo, new_partner)
    return tt, lam[perm], _track_partners(perm, new_partner)


def _local_state(part, pos, tracks):
    a, b = tracks
    if part[a] == b:
        return ("pair", a if pos[a].imag > pos[b].imag else b)
    return ("split", bool(part[a] == a), bool(part[b] == b))


def collision_events(traj: Trajectory, path, width: float | None = None) -> list:
    """Refine realization/departure brackets by bisection on the path.

    Each bracket shrinks until its width is at most ``width`` (default
    ``(t_end - t_start) / 1e6``). Events reported in the same bracket (a pair
    that crossed the axis within one step) share the refined bracket.
    """
    if width is None:
        width = (traj.t_end - traj.t_start) / 1e6
    refined = []
    cache = {}
    for ev in traj.events:
        if ev.kind is EventKind.NEAR_DEGENERACY:
            refined.append(ev)
            continue
        key = (ev.t_lo, ev.t_hi, ev.tracks)
        if key not in cache:
            cache[key] = _bisect(traj, path, ev, width)
        lo, hi = cache[key]
        refined.append(Event(lo, hi, ev.kind, ev.tracks))
    return refined


def _bisect(traj, path, ev, width):
    s_lo = int(np.searchsorted(traj.times, ev.t_lo))
    s_hi = int(np.searchsorted(traj.times, ev.t_hi))
    lo, hi = traj.times[s_lo], traj.times[s_hi]
    pos_lo, pos_hi = traj.positions[s_lo], traj.positions[s_hi]
    part_lo = traj.partners[s_lo]
    start = _local_state(part_lo, pos_lo, ev.tracks)
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        t, pos, part = _state_at(path, mid, pos_lo, pos_hi, part_lo, lo, hi, hi - lo)
        if _local_state(part, pos, ev.tracks) == start:
            lo, pos_lo, part_lo = t, pos, part
        else:
            hi, pos_hi = t, pos
    return float(lo), float(hi)


# -- real-eigenvalue census ------------------------------------------------

def real_census(M, real_tol: float | None = None) -> int:
    """Number of eigenvalues with ``|Im| <= real_tol`` (default ``1e-9 ||M||_2``)."""
    lam = eigenvalues_sorted(M)
    if real_tol is None:
        real_tol = 1e-9 * max(spectral_norm(M), np.finfo(float).tiny)
    return int(np.count_nonzero(np.abs(lam.imag) <= real_tol))


@dataclass(frozen=True, eq=False)
class Census:
    counts: np.ndarray
    n: int

    @property
    def mean(self) -> float:
        return float(self.counts.mean())

    @property
    def stderr(self) -> float:
        return float(self.counts.std(ddof=1) / math.sqrt(self.counts.size))

    @property
    def reference(self) -> float:
        """Large-n expectation ``sqrt(2n/pi)`` for Ginibre matrices."""
        return math.sqrt(2 * self.n / math.pi)


def census_ensemble(n: int, samples: int, seed, generator=ginibre, threads: int = 1) -> Census:
    """Real-eigenvalue counts of ``samples`` draws; draw k uses seed ``(seed, k)``."""

    def one(k):
        return real_census(generator(n, [seed, k]))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            counts = list(pool.map(one, range(samples)))
    else:
        counts = [one(k) for k in range(samples)]
    return Census(counts=np.array(counts), n=n)
