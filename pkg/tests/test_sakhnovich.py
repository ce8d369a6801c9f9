import math

import numpy as np
import pytest

from kreinlab import coeffs, krein
from kreinlab import sakhnovich as sk
from kreinlab.sakhnovich import (MatrixSegment, SakhnovichSystem, fro, hermitian_psd_check,
                                 lagrange_bilinear, log_norm_bound_check, pi_l2, pi_via_integral,
                                 propagate_matrix, propagate_pair)


def test_validation():
    with pytest.raises(ValueError):
        SakhnovichSystem(np.array([1.0, 0.0]))
    bad = MatrixSegment(0, 1, np.array([[1.0]]), np.array([[0.0]]))
    with pytest.raises(ValueError):
        SakhnovichSystem(np.ones(1), (bad,))


def test_free_diagonal_closed_form():
    d = np.array([0.5, 1.5])
    tr = propagate_matrix(SakhnovichSystem(d), 1j, 4.0, checkpoints=[1, 2, 3])
    for s in tr.states:
        assert np.allclose(s.true_P1(), np.diag(np.exp(-d * s.r)), atol=1e-14)
        assert np.allclose(s.true_P2(), np.eye(2), atol=1e-15)


def test_scalar_embedding_random_and_smooth():
    prof = coeffs.random_step_profile(np.random.default_rng(1), 25)
    lam = 0.7 + 0.5j
    cps = np.linspace(0, prof.support_end, 7)[1:-1]
    kt = krein.propagate(prof, lam, prof.support_end + 1, checkpoints=cps)
    mt = propagate_matrix(SakhnovichSystem.from_krein(prof), lam, prof.support_end + 1, checkpoints=cps)
    for a, b in zip(kt.states, mt.states):
        assert abs(a.true_p() - b.true_P1()[0, 0]) <= 1e-9
        assert abs(a.true_p_star() - b.true_P2()[0, 0]) <= 1e-9
    smooth = coeffs.smooth_profile(lambda r: 0.5 * math.cos(r) + 0.3j, (0.0, 6.0), 1.0)
    kt = krein.propagate(smooth, lam, 6.0)
    mt = propagate_matrix(SakhnovichSystem.from_krein(smooth), lam, 6.0)
    assert abs(kt.final.true_p_star() - mt.final.true_P2()[0, 0]) <= 1e-9


def test_gram_identity_constant_random_m2():
    sys_ = sk.random_system(np.random.default_rng(7), m=2, n_segments=1, max_len=2.0)
    tr = propagate_matrix(sys_, 0.5 + 1j, 3.0, checkpoints=np.linspace(0, 3, 7)[1:-1])
    assert sk.gram_identity_residual(tr) <= 1e-7
    # halved tolerances change nothing on constant stretches (exact exponentials)
    tr2 = propagate_matrix(sys_, 0.5 + 1j, 3.0, rtol=5e-11, atol=5e-15)
    assert np.allclose(tr.final.true_P2(), tr2.final.true_P2(), rtol=1e-12)


def test_psd_law_random_systems():
    rng = np.random.default_rng(3)
    for _ in range(10):
        sys_ = sk.random_system(rng, m=3, n_segments=8)
        lam = complex(rng.uniform(-2, 2), rng.uniform(0.05, 2))
        tr = propagate_matrix(sys_, lam, sys_.segments[-1].end, checkpoints=np.linspace(0.1, 2, 5))
        rep = hermitian_psd_check(tr)
        assert rep.hermitian_defect <= 1e-10
        assert rep.min_eig_scaled >= -1e-8
        assert rep.identity_residual <= 1e-7


def test_skew_part_does_not_spoil_identity():
    rng = np.random.default_rng(9)
    base = sk.random_system(rng, m=2, n_segments=6, scale=0.0)
    segs = []
    for s in base.segments:
        B = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        A2 = rng.normal(size=(2, 2))
        segs.append(MatrixSegment(s.start, s.length, 3 * (B - B.conj().T), A2))
    with_skew = SakhnovichSystem(base.d, tuple(segs))
    without = SakhnovichSystem(base.d, tuple(MatrixSegment(s.start, s.length, 0 * s.A1, s.A2) for s in segs))
    end = segs[-1].end
    a = propagate_matrix(with_skew, 1j, end)
    b = propagate_matrix(without, 1j, end)
    assert not np.allclose(a.final.true_P2(), b.final.true_P2())
    assert sk.gram_identity_residual(a) <= 1e-7


def test_bilinear_identity_and_symmetry():
    sys_ = sk.random_system(np.random.default_rng(4), m=2, n_segments=10)
    end = sys_.segments[-1].end
    cps = np.linspace(0, end, 6)[1:-1]
    pair = propagate_pair(sys_, 1j, 2j, end, checkpoints=cps)
    assert lagrange_bilinear(pair) <= 1e-7
    swap = propagate_pair(sys_, 2j, 1j, end, checkpoints=cps)
    for a, b in zip(pair.states, swap.states):
        # the (lam, lam0) residual matrix is the conjugate transpose of the (lam0, lam) one
        def resid(s):
            m = s.m
            lhs = s.P2_0().conj().T @ s.P2() - s.P1_0().conj().T @ s.P1()
            return lhs - 1j * (s.lam0.conjugate() - s.lam) * s.cross_true()
        assert fro(resid(a) - resid(b).conj().T) <= 1e-10
    assert np.allclose(pair.states[0].cross, 0) and lagrange_bilinear(
        propagate_pair(sys_, 1j, 2j, 0.0)) == 0


def test_bilinear_reduces_to_gram_identity():
    sys_ = sk.random_system(np.random.default_rng(5), m=2, n_segments=5)
    end = sys_.segments[-1].end
    pair = propagate_pair(sys_, 0.3 + 0.7j, 0.3 + 0.7j, end, checkpoints=[0.5, 1.0])
    mt = propagate_matrix(sys_, 0.3 + 0.7j, end, checkpoints=[0.5, 1.0])
    assert lagrange_bilinear(pair) == pytest.approx(sk.gram_identity_residual(mt), abs=1e-16)


def test_pair_alignment_check():
    sys_ = sk.random_system(np.random.default_rng(5), m=2, n_segments=3)
    a = propagate_pair(sys_, 1j, 2j, 1.0, checkpoints=[0.5])
    b = propagate_pair(sys_, 1j, 2j, 1.0, checkpoints=[0.4])
    sk.check_pair_alignment(a, a)
    with pytest.raises(ValueError):
        sk.check_pair_alignment(a, b)


def test_log_norm_bound():
    sys_ = SakhnovichSystem(np.array([1.0, 2.0]))
    tr = propagate_matrix(sys_, 0.5j, 5.0, checkpoints=np.linspace(0, 5, 51)[1:-1])
    assert log_norm_bound_check(tr) >= 0
    smooth = sk.SakhnovichSystem(np.array([1.0, 2.0]), (), None,
                                 lambda r: np.array([[math.cos(r), 0.5], [0.2, 1 / (1 + r)]]), (0.0, 8.0))
    cps = np.linspace(0, 8, 161)[1:-1]
    m1 = log_norm_bound_check(propagate_matrix(smooth, 1j, 8.0, checkpoints=cps))
    m2 = log_norm_bound_check(propagate_matrix(smooth.scaled_a2(2.0), 1j, 8.0, checkpoints=cps))
    assert m1 >= -1e-6 and m2 >= -1e-6
    with pytest.raises(ValueError):
        log_norm_bound_check(propagate_matrix(sys_, 1.0, 1.0))


def test_log_norm_bound_on_thm62_embedding():
    from kreinlab.spectral import thm62_build_and_run
    prof = thm62_build_and_run(40, 1j).profile()
    sys_ = SakhnovichSystem.from_krein(prof)
    cps = sorted({x for s in prof.segments for x in (s.start, s.start + 0.5 * s.length, s.end)})
    tr = propagate_matrix(sys_, 1j, prof.support_end, checkpoints=cps)
    assert log_norm_bound_check(tr) >= -1e-6


def l2_system(s):
    return SakhnovichSystem.from_krein(coeffs.smooth_profile(lambda r: (1 + r) ** -s, (0, math.inf), 1.0))


def test_pi_via_integral_equal_lambdas_matches_p2():
    sys_ = l2_system(2.0)
    pair = propagate_pair(sys_, 1j, 1j, 200.0)
    est = pi_via_integral(pair)
    P2 = pair.final.P2()
    # Pi^*(lam0) V = 2 Im lam0 gram
    assert fro(P2.conj().T @ est.value - 2 * pair.final.cross_true()) <= 1e-12
    assert fro(est.value - P2) <= 1e-6


def test_pi_via_integral_vs_pi_l2():
    sys_ = l2_system(2.0)
    pair = propagate_pair(sys_, 1j, 0.5 + 1j, 200.0)
    a = pi_via_integral(pair)
    b = pi_l2(sys_, 0.5 + 1j, 200.0)
    assert fro(a.value - b.value) <= 1e-6


def test_pi_free_system_is_identity():
    sys_ = SakhnovichSystem(np.array([1.0, 2.0]))
    pair = propagate_pair(sys_, 1j, 0.5 + 2j, 40.0)
    assert fro(pi_via_integral(pair).value - np.eye(2)) <= 1e-12
    est = pi_l2(sys_, 1j, 10.0)
    assert np.array_equal(est.value, np.eye(2)) and est.tail_bound == 0


def test_pi_via_integral_errors():
    sys_ = l2_system(2.0)
    pair = propagate_pair(sys_, 1j, 2j, 5.0)
    with pytest.raises(np.linalg.LinAlgError):
        pi_via_integral(pair, pi_lam0=np.zeros((1, 1)))
    with pytest.raises(krein.PropagationError):
        pi_via_integral(pair, tol=1e-12)


def test_pi_l2_compact_support_exact():
    prof = coeffs.smooth_profile(lambda r: 1.0 / (1 + r), (0.0, 10.0), 1.0)
    sys_ = SakhnovichSystem.from_krein(prof)
    est = pi_l2(sys_, 1j, 15.0)
    direct = krein.propagate(prof, 1j, 15.0).final.true_p_star()
    assert est.tail_bound == 0
    assert abs(est.value[0, 0] - direct) <= 1e-9


def test_pi_l2_within_tail_bound():
    sys_ = l2_system(0.75)
    est = pi_l2(sys_, 1j, 200.0)
    direct = propagate_matrix(sys_, 1j, 200.0).final.true_P2()
    assert fro(est.value - direct) <= max(est.tail_bound, 1e-8)
    with pytest.raises(krein.PropagationError):
        pi_l2(sys_, 1j, 200.0, tol=1e-6)


def test_matrix_renormalization():
    A2 = np.array([[3.0, 0.0], [0.0, 3.0]])
    seg = MatrixSegment(0.0, 100.0, np.zeros((2, 2)), A2)
    sys_ = SakhnovichSystem(np.array([1.0, 1.0]), (seg,))
    tr = propagate_matrix(sys_, 1j, 100.0, checkpoints=[50])
    assert tr.final.log_scale > 100
    assert sk.gram_identity_residual(tr) <= 1e-10
