from __future__ import annotations

import numpy as np
import pytest

from _support import axis_crossings_without_events
from eigmotion.errors import InvalidParams
from eigmotion.paths import (
    IdentityDrift,
    InterpolationPencil,
    PerturbationPencil,
    antisymmetric_tridiagonal,
    diagonal_gaussian_impulse,
    ginibre,
    hatano_nelson,
    normalize_2norm,
)
from eigmotion.tracking import EventKind, census_ensemble, collision_events, real_census, track


@pytest.fixture(scope="module")
def swap_path():
    return InterpolationPencil(normalize_2norm(hatano_nelson(16, -0.3)), normalize_2norm(hatano_nelson(16, 0.3)))


@pytest.fixture(scope="module")
def swap_traj(swap_path):
    return track(swap_path, 0.0, 1.0, 201)


def test_identity_drift_moves_horizontally():
    M = ginibre(6, 3)
    traj = track(IdentityDrift(M), 0.0, 2.0, 21)
    shift = traj.positions - traj.positions[0][None, :]
    assert np.allclose(shift, traj.times[:, None] - traj.times[0], atol=1e-10)
    assert [e for e in traj.events if e.kind is not EventKind.NEAR_DEGENERACY] == []


def test_argument_validation(swap_path):
    with pytest.raises(InvalidParams):
        track(swap_path, 0.0, 1.0, 1)
    with pytest.raises(InvalidParams):
        track(swap_path, 1.0, 1.0, 5)
    with pytest.raises(InvalidParams):
        track(swap_path, 0.0, 1.0, 5, matching="nearest")


def test_two_samples_are_enough(swap_path):
    traj = track(swap_path, 0.0, 1.0, 2)
    assert traj.samples == 2 and traj.positions.shape == (2, 16)


def test_conjugate_mirror_invariant(swap_traj):
    for s in range(swap_traj.samples):
        part = swap_traj.partners[s]
        pos = swap_traj.positions[s]
        assert np.array_equal(part[part], np.arange(16))
        assert np.allclose(pos[part], pos.conj(), atol=1e-9)


def test_swap_events_and_refinement(swap_path, swap_traj):
    real = swap_traj.events_of(EventKind.REALIZATION)
    dep = swap_traj.events_of(EventKind.DEPARTURE)
    assert len(real) == len(dep) == 7
    assert axis_crossings_without_events(swap_traj) == []
    refined = collision_events(swap_traj, swap_path, width=1e-6)
    for coarse, fine in zip(swap_traj.events, refined):
        assert fine.kind is coarse.kind and fine.tracks == coarse.tracks
        assert coarse.t_lo <= fine.t_lo <= fine.t_hi <= coarse.t_hi
        if fine.kind is not EventKind.NEAR_DEGENERACY:
            assert fine.t_hi - fine.t_lo <= 1e-6
    # the midpoint is a symmetric circulant with doubly degenerate eigenvalues
    assert any(e.kind is EventKind.NEAR_DEGENERACY and e.t_lo < 0.5 < e.t_hi for e in refined)
    for ev in refined:
        if ev.kind is EventKind.NEAR_DEGENERACY:
            continue
        if ev.kind is EventKind.REALIZATION:
            assert ev.t_hi <= 0.5 + 1e-6
        else:
            assert ev.t_lo >= 0.5 - 1e-6


def test_real_counts_follow_events(swap_traj):
    counts = swap_traj.real_counts()
    assert counts[0] == counts[-1]
    for s in range(1, swap_traj.samples):
        t_lo, t_hi = swap_traj.times[s - 1], swap_traj.times[s]
        evs = [e for e in swap_traj.events if e.t_lo == t_lo and e.t_hi == t_hi]
        delta = 2 * sum(e.kind is EventKind.REALIZATION for e in evs) - 2 * sum(e.kind is EventKind.DEPARTURE for e in evs)
        assert counts[s] - counts[s - 1] == delta


def test_conjugate_pair_funnels_into_axis():
    H = hatano_nelson(64, 0.2)
    path = PerturbationPencil(H, diagonal_gaussian_impulse(64, 7))
    traj = track(path, 0.0, 2.0, 201)
    real = traj.events_of(EventKind.REALIZATION)
    assert real
    for ev in real:
        a, b = ev.tracks
        s = int(np.searchsorted(traj.times, ev.t_lo))
        im = np.abs(traj.positions[s - 3 : s + 1, a].imag)
        assert np.all(np.diff(im) < 0), (ev, im)
        assert traj.partners[s, a] == b


def test_real_census_parity_and_examples():
    for k in range(30):
        n = 3 + k % 7
        assert real_census(ginibre(n, [9, k])) % 2 == n % 2
    assert real_census(antisymmetric_tridiagonal(8)) == 0
    assert real_census(np.diag(np.arange(1.0, 7.0))) == 6


def test_census_thread_independence():
    a = census_ensemble(10, 40, 3, threads=1)
    b = census_ensemble(10, 40, 3, threads=4)
    assert np.array_equal(a.counts, b.counts)
    assert np.all(a.counts % 2 == 0)
    assert abs(a.reference - np.sqrt(20 / np.pi)) < 1e-15
