from __future__ import annotations

import math

import numpy as np
import pytest

from _support import circulant_from_row
from eigmotion.analytics import (
    circulant_eigenvalues,
    circulant_forces,
    commutator_with_transpose,
    expected_other_force,
    first_variation_variance,
    hn_commutator_pattern,
    hn_exact_force,
    hn_non_normality,
    hn_small_g_force,
    is_circulant,
    is_normal,
    mc_hn_frobenius_ratio,
    mc_other_sum,
    mc_velocity,
    normal_variance_bound,
    other_force_variance,
    pair_force_components,
    power_spectrum,
    white_noise_force_field,
    white_noise_intensity,
)
from eigmotion.errors import InvalidParams, MatrixClassMismatch, NotCirculant, RealEigenvalue
from eigmotion.forces import force_decomposition
from eigmotion.paths import ginibre, hatano_nelson, hatano_nelson_eigenpairs, random_orthogonal
from eigmotion.spectral import decompose


def test_first_variation_table():
    q = decompose(random_orthogonal(8, 1))
    assert np.allclose(first_variation_variance(q, "dense", 1.0, "normal"), 1.0)
    g = decompose(ginibre(6, 2))
    assert np.allclose(first_variation_variance(g, "dense", 2.0), 2.0 * g.condition_numbers**2)
    H = hatano_nelson(8, 0.4)
    h = decompose(H)
    assert np.allclose(first_variation_variance(h, "diagonal", 1.0, "circulant", H), 1 / 8)
    with pytest.raises(MatrixClassMismatch):
        first_variation_variance(g, "dense", 1.0, "normal")
    with pytest.raises(MatrixClassMismatch):
        first_variation_variance(g, "dense", 1.0, "circulant", ginibre(6, 2))
    with pytest.raises(InvalidParams):
        first_variation_variance(g, "banded")


def test_class_detection():
    assert is_normal(decompose(random_orthogonal(6, 3)))
    assert not is_normal(decompose(ginibre(6, 3)))
    assert is_circulant(hatano_nelson(5, 0.2)) and not is_circulant(ginibre(5, 1))


@pytest.mark.slow
def test_first_variation_monte_carlo():
    sys = decompose(ginibre(6, 2))
    est = mc_velocity(sys, "dense", samples=100_000, seed=2)
    assert np.all(np.abs(est.variance / first_variation_variance(sys, "dense") - 1) < 0.03)
    est = mc_velocity(sys, "diag", samples=100_000, seed=3)
    assert np.all(np.abs(est.variance / first_variation_variance(sys, "diagonal") - 1) < 0.03)


def test_expected_other_force_normal_and_zero():
    q = decompose(random_orthogonal(12, 4))
    assert np.max(np.abs(expected_other_force(q))) < 1e-12
    g = decompose(ginibre(5, 5))
    assert np.all(expected_other_force(g, 0.0) == 0)


@pytest.mark.slow
def test_expected_other_force_monte_carlo():
    sys = decompose(ginibre(4, 7))
    est = mc_other_sum(sys, "dense", samples=100_000, seed=7)
    assert np.all(est.within(expected_other_force(sys), 3.0))


def test_variance_empty_sums_and_normal_shape():
    two = decompose(np.array([[0.0, 1.0], [-2.0, 0.0]]))
    vb = other_force_variance(two)
    assert np.all(vb.total == 0)
    q = decompose(random_orthogonal(10, 6))
    vb = other_force_variance(q)
    lam = np.asarray(q.eigenvalues)
    p = np.asarray(q.partner)
    for i in range(10):
        others = [l for l in range(10) if l not in (i, p[i])]
        s = sum(1 / abs(lam[i] - lam[l]) ** 2 for l in others)
        assert abs(vb.type2[i] - s) < 1e-10 * s
        assert vb.type3[i] < 1e-20
    assert np.all(vb.total <= normal_variance_bound(q))
    assert np.allclose(vb.type4, 0) and vb.E_p4 == 3.0


def test_variance_fourth_moment_enters_as_cumulant():
    sys = decompose(ginibre(5, 8))
    gauss = other_force_variance(sys, 1.0, 3.0)
    pm1 = other_force_variance(sys, 1.0, 1.0)
    assert np.allclose(pm1.total - gauss.total, -2.0 * gauss.fourth_moment_sum)


@pytest.mark.slow
def test_variance_monte_carlo_second_matrix():
    sys = decompose(ginibre(5, 21))
    est = mc_other_sum(sys, "dense", samples=200_000, seed=21)
    assert np.all(np.abs(est.variance / other_force_variance(sys).total - 1) < 0.05)


def test_circulant_eigenvalues_and_errors():
    H = hatano_nelson(12, 0.3)
    lam, _ = hatano_nelson_eigenpairs(12, 0.3)
    assert np.allclose(circulant_eigenvalues(H), lam, atol=1e-13)
    with pytest.raises(NotCirculant):
        circulant_eigenvalues(ginibre(4, 1))


def test_circulant_forces_constant_and_generic():
    H = hatano_nelson(8, 0.3)
    cf = circulant_forces(H, np.full(8, 0.7))
    assert np.allclose(cf.velocity, 0.7)
    assert np.allclose(cf.spectrum[1:], 0, atol=1e-30)
    assert np.allclose(cf.total, 0)
    M = circulant_from_row(np.random.default_rng(3).standard_normal(10))
    p = np.random.default_rng(4).standard_normal(10)
    cf = circulant_forces(M, p)
    sys = decompose(M)
    rep = force_decomposition(sys, np.diag(p))
    order = [int(np.argmin(np.abs(sys.eigenvalues - z))) for z in cf.eigenvalues]
    assert np.allclose(rep.total[order], cf.total, atol=1e-10)
    assert np.allclose(rep.other[order], cf.other, atol=1e-10)
    with pytest.raises(InvalidParams):
        circulant_forces(M, p[:3])


def test_white_noise_power_level():
    # averaged over draws the spectrum is flat at E[p^2]/n
    n = 16
    gen = np.random.default_rng(5)
    S = np.mean([power_spectrum(gen.standard_normal(n)) for _ in range(20_000)], axis=0)
    assert np.allclose(S, white_noise_intensity(1.0, n), rtol=0.05)


def test_white_noise_field_properties():
    lam, _ = hatano_nelson_eigenpairs(16, 0.3)
    f = white_noise_force_field(lam, 0.5)
    nr = ~f.is_real
    assert np.all(f.cc[nr].imag * lam[nr].imag < 0)
    assert np.all(f.cc[~nr] == 0)
    z = white_noise_force_field(lam, 0.0)
    assert np.all(z.total == 0)
    sys = decompose(hatano_nelson(16, 0.3))
    g = white_noise_force_field(sys, 0.5)
    order = [int(np.argmin(np.abs(np.asarray(sys.eigenvalues) - z))) for z in lam]
    assert np.allclose(g.total[order], f.total)
    for k in range(16):
        if not f.is_real[k]:
            assert abs(f.total[k] - hn_exact_force(16, 0.3, k, 0.5)) < 1e-12


def test_pair_force_components():
    re, im = pair_force_components(1.0 + 0.5j, 0.2 + 0.3j)
    d1, d2 = (1.0 + 0.5j) - (0.2 + 0.3j), (1.0 + 0.5j) - (0.2 - 0.3j)
    z = 1 / d1 + 1 / d2
    assert abs(re - z.real) < 1e-14 and abs(im - z.imag) < 1e-14
    assert re > 0
    assert pair_force_components(0.5, 0.1 + 0.4j)[1] == 0
    re, im = pair_force_components(2.0 + 0.01j, 0.0 + 0.5j)
    assert im * 0.01 < 0
    with pytest.raises(ZeroDivisionError):
        pair_force_components(0.3j, 0.3j)


def test_hn_small_g_expansion():
    for n in (16, 64):
        k = n // 4
        assert abs(hn_small_g_force(n, 0.1, k).real) < 1e-12
        for j in range(1, n):
            if j in (n // 2,):
                continue
            f = hn_small_g_force(n, 0.05, j)
            s = math.sin(2 * math.pi * j / n)
            assert f.imag * s < 0
    with pytest.raises(RealEigenvalue):
        hn_small_g_force(16, 0.1, 0)
    with pytest.raises(RealEigenvalue):
        hn_exact_force(16, 0.1, 8)


def test_hn_small_g_rate_at_n64():
    # the expansion variable is g n / pi, so the constant in front of g^2 grows with n
    errs = []
    for g in (0.01, 0.005, 0.0025):
        e = hn_exact_force(64, g, 5)
        errs.append(abs(hn_small_g_force(64, g, 5) - e) / abs(e))
    assert errs[0] / errs[1] > 3.8 and errs[1] / errs[2] > 3.8


def test_hn_commutator():
    n, g, t = 9, 0.3, 0.7
    p = np.random.default_rng(6).standard_normal(n)
    C, _ = hn_non_normality(n, g, t, 1.0, p)
    assert np.allclose(C, -2 * t * math.sinh(g) * hn_commutator_pattern(p), atol=1e-12)
    C0, _ = hn_non_normality(n, 0.0, t, 1.0, p)
    assert np.allclose(C0, 0)
    Cc, _ = hn_non_normality(n, g, t, 1.0, np.full(n, 2.0))
    assert np.allclose(Cc, 0)
    A = ginibre(4, 1)
    assert np.allclose(commutator_with_transpose(A), A @ A.T - A.T @ A)
    with pytest.raises(InvalidParams):
        hn_non_normality(n, g, -1.0)


def test_hn_frobenius_identities():
    for n, g in ((8, 0.1), (64, 0.2), (33, -0.7)):
        fro2 = np.linalg.norm(hatano_nelson(n, g), "fro") ** 2
        assert abs(fro2 - 2 * n * math.cosh(2 * g)) < 1e-12 * fro2


@pytest.mark.slow
def test_hn_frobenius_ratio_leading_order():
    est = mc_hn_frobenius_ratio(64, 0.2, 1.0, 1.0, samples=10_000, seed=8)
    _, expectation = hn_non_normality(64, 0.2, 1.0, 1.0)
    assert abs(est.mean - expectation) < 0.02 * expectation
    # thread count does not change the estimate
    est2 = mc_hn_frobenius_ratio(64, 0.2, 1.0, 1.0, samples=2_000, seed=8, threads=1)
    est3 = mc_hn_frobenius_ratio(64, 0.2, 1.0, 1.0, samples=2_000, seed=8, threads=3)
    assert est2.mean == est3.mean
