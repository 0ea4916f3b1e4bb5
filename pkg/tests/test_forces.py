from __future__ import annotations

import numpy as np
import pytest

from _support import circulant_from_row, matched_eigenvalues
from eigmotion.errors import DimensionMismatch
from eigmotion.forces import (
    Interaction,
    acceleration,
    classify_interaction,
    couplings,
    eigvec_derivatives,
    force_decomposition,
    interaction_strength,
    pair_direction,
    velocity,
)
from eigmotion.paths import ginibre, hatano_nelson
from eigmotion.spectral import decompose


def test_identity_couplings_and_zero():
    sys = decompose(ginibre(6, 1))
    assert np.allclose(couplings(sys, np.eye(6)), np.eye(6), atol=1e-12)
    assert np.all(couplings(sys, np.zeros((6, 6))) == 0)
    assert np.allclose(velocity(sys, np.eye(6)), 1.0, atol=1e-12)


def test_dimension_mismatch():
    sys = decompose(ginibre(4, 1))
    with pytest.raises(DimensionMismatch):
        couplings(sys, np.eye(5))
    with pytest.raises(DimensionMismatch):
        acceleration(sys, np.eye(4), np.eye(3))


def test_velocity_matches_finite_difference():
    M, P = ginibre(8, 2), ginibre(8, 3)
    sys = decompose(M)
    h = 1e-5
    lam0 = np.asarray(sys.eigenvalues)
    fd = (matched_eigenvalues(M + h * P, lam0) - matched_eigenvalues(M - h * P, lam0)) / (2 * h)
    assert np.linalg.norm(fd - velocity(sys, P)) / np.linalg.norm(fd) < 1e-6


def test_eigvec_derivatives_trivial_cases():
    sys = decompose(ginibre(5, 4))
    for D in (np.zeros((5, 5)), np.eye(5)):
        Vd, Ud = eigvec_derivatives(sys, D)
        assert np.allclose(Vd, 0, atol=1e-12) and np.allclose(Ud, 0, atol=1e-12)


def test_eigvec_derivatives_finite_difference():
    M, P = ginibre(6, 5), ginibre(6, 6)
    sys = decompose(M)
    Vd, Ud = eigvec_derivatives(sys, P)
    h = 1e-5
    U0 = sys.left
    proj = []
    for s in (1, -1):
        sh = decompose(M + s * h * P)
        order = [int(np.argmin(np.abs(sh.eigenvalues - z))) for z in sys.eigenvalues]
        V = sh.right[:, order]
        # rescale so that u_i^* v_i = 1 (zero-gauge normalization)
        V = V / np.einsum("ij,ji->i", U0, V)[None, :]
        proj.append(U0 @ V)
    fd = (proj[0] - proj[1]) / (2 * h)
    an = U0 @ Vd
    off = ~np.eye(6, dtype=bool)
    assert np.max(np.abs(fd[off] - an[off])) / np.max(np.abs(an[off])) < 1e-5
    # left derivative keeps U V = I
    assert np.allclose(Ud @ sys.right + sys.left @ Vd, 0, atol=1e-10)


def test_acceleration_inertial_only():
    sys = decompose(ginibre(5, 7))
    A = ginibre(5, 8)
    expected = np.einsum("ij,ji->i", sys.left @ A, sys.right)
    assert np.allclose(acceleration(sys, np.zeros((5, 5)), A), expected)


def test_acceleration_finite_difference():
    M, P = ginibre(8, 9), ginibre(8, 10)
    sys = decompose(M)
    h = 1e-4
    lam0 = np.asarray(sys.eigenvalues)
    fd = (matched_eigenvalues(M + h * P, lam0) - 2 * lam0 + matched_eigenvalues(M - h * P, lam0)) / h**2
    an = acceleration(sys, P, np.zeros_like(P))
    assert np.linalg.norm(fd - an) / np.linalg.norm(an) < 1e-4


def test_symmetric_case_repulsion():
    A = ginibre(6, 11)
    M, D = A + A.T, ginibre(6, 12)
    D = D + D.T
    sys = decompose(M)
    acc = acceleration(sys, D, np.zeros_like(D))
    assert np.allclose(acc.imag, 0, atol=1e-10)
    C = couplings(sys, D)
    lam = sys.eigenvalues.real
    for i in range(6):
        for j in range(6):
            if i != j:
                term = (C[i, j] * C[j, i] / (lam[i] - lam[j])).real
                assert term * (lam[i] - lam[j]) >= -1e-12


def test_decomposition_closure_and_attraction():
    for k in range(20):
        n = 4 + 3 * k
        M, Md, Mdd = ginibre(n, [20, k, 0]), ginibre(n, [20, k, 1]), ginibre(n, [20, k, 2])
        sys = decompose(M)
        rep = force_decomposition(sys, Md, Mdd)
        acc = acceleration(sys, Md, Mdd)
        assert np.all(np.abs(rep.inertial + rep.cc + rep.other - acc) <= 1e-12 * (np.abs(acc) + 1) * n)
        nonreal = ~sys.is_real
        assert np.all(np.abs(rep.cc[nonreal].real) <= 1e-12 * np.abs(rep.cc[nonreal]))
        assert np.all(rep.cc[nonreal].imag * sys.eigenvalues[nonreal].imag < 0)
        assert np.all(rep.cc[~nonreal] == 0)
        # closed form of the conjugate pull
        C = couplings(sys, Md)
        idx = np.flatnonzero(nonreal)
        p = np.asarray(sys.partner)
        closed = -1j * np.abs(C[p[idx], idx]) ** 2 / sys.eigenvalues[idx].imag
        assert np.allclose(rep.cc[idx], closed, rtol=1e-10)


def test_conjugate_antisymmetry():
    M, Md, Mdd = ginibre(10, 30), ginibre(10, 31), ginibre(10, 32)
    sys = decompose(M)
    rep = force_decomposition(sys, Md, Mdd)
    p = np.asarray(sys.partner)
    for arr in (rep.velocity, rep.inertial, rep.cc, rep.other, rep.total):
        assert np.allclose(arr[p], np.conj(arr), rtol=1e-10, atol=1e-12 * np.max(np.abs(arr)))


def test_identity_drift_exerts_no_conjugate_force():
    sys = decompose(ginibre(7, 40))
    rep = force_decomposition(sys, np.eye(7))
    assert np.allclose(rep.cc, 0, atol=1e-12)
    assert np.allclose(rep.velocity, 1, atol=1e-12)


def test_cc_is_extracted_term():
    M, Md = ginibre(8, 41), ginibre(8, 42)
    sys = decompose(M)
    rep = force_decomposition(sys, Md)
    C = couplings(sys, Md)
    lam = np.asarray(sys.eigenvalues)
    for i in np.flatnonzero(~sys.is_real):
        j = int(sys.partner[i])
        term = 2 * C[i, j] * C[j, i] / (lam[i] - lam[j])
        assert abs(term - rep.cc[i]) < 1e-12 * max(1, abs(term))


def test_records_and_directions():
    sys = decompose(ginibre(4, 43))
    rep = force_decomposition(sys, ginibre(4, 44))
    recs = rep.to_records()
    assert len(recs) == 4 and recs[2]["index"] == 2
    assert recs[1]["total_re"] == rep.total[1].real
    d = rep.directions([(0, 1)])[(0, 1)]
    assert abs(abs(d) - 1) < 1e-14
    assert pair_direction(1 + 0j, 0j) == 1


def test_collision_flags():
    M = np.diag([0.0, 1e-10, 1.0, 2.0])
    sys = decompose(M, degeneracy_tol=1e-12)
    rep = force_decomposition(sys, ginibre(4, 45))
    assert rep.singular[0] == (1,) and rep.singular[1] == (0,)
    assert rep.singular[2] == ()


def test_classification():
    # two real eigenvalues, real Mdot: real f
    sys = decompose(np.diag([1.0, 2.0, 4.0]))
    Md = ginibre(3, 50)
    assert classify_interaction(sys, Md, 0, 1) in (Interaction.CENTRAL_ATTRACTIVE, Interaction.CENTRAL_REPULSIVE)
    # conjugate pair attracts
    M = ginibre(8, 51)
    sys = decompose(M)
    i = int(np.flatnonzero(~sys.is_real)[0])
    assert classify_interaction(sys, ginibre(8, 52), i, int(sys.partner[i])) is Interaction.CENTRAL_ATTRACTIVE
    # generic complex pair is not central
    js = [j for j in range(8) if j not in (i, int(sys.partner[i]))]
    kinds = {classify_interaction(sys, ginibre(8, 52), i, j) for j in js}
    assert Interaction.NON_CENTRAL in kinds
    assert classify_interaction(sys, np.zeros((8, 8)), 0, 1) is Interaction.NONE
    with pytest.raises(ValueError):
        interaction_strength(sys, np.eye(8), 2, 2)


def test_circulant_equal_imaginary_parts_repel():
    H = hatano_nelson(8, 0.3)
    sys = decompose(H)
    lam = np.asarray(sys.eigenvalues)
    p = np.random.default_rng(0).standard_normal(8)
    # lambda_1 and lambda_3 share Im = 2 sinh(g) sin(pi/4)
    a = int(np.argmin(np.abs(lam - lam.real.max() * np.cos(np.pi / 4) - 1j * np.max(lam.imag) * np.sin(np.pi / 4))))
    b = int(np.argmin(np.abs(lam + np.conj(lam[a]))))
    assert abs(lam[a].imag - lam[b].imag) < 1e-12 and abs(lam[a].real - lam[b].real) > 1
    assert classify_interaction(sys, np.diag(p), a, b) is Interaction.CENTRAL_REPULSIVE


def test_circulant_velocity_is_mean():
    r = np.random.default_rng(1).standard_normal(9)
    sys = decompose(circulant_from_row(r))
    p = np.random.default_rng(2).standard_normal(9)
    assert np.allclose(velocity(sys, np.diag(p)), p.mean(), atol=1e-12)
    assert np.allclose(velocity(sys, np.diag(p - p.mean())), 0, atol=1e-12)
