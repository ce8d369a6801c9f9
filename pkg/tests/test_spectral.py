import math

import numpy as np
import pytest

from kreinlab import coeffs, krein, spectral
from kreinlab.spectral import (SpectralReport, classify, density_at, hardy_integral, limit_diagnostics,
                               phase_drift_model, skk_integral, verify_isometry)


@pytest.fixture(scope="module")
def thm62_small():
    return spectral.thm62_build_and_run(2000, 1j)


def test_density_zero_profile():
    for r in (0.5, 3.0, 40.0):
        rep = density_at(coeffs.zero_profile(), r, np.linspace(-10, 10, 41))
        assert np.max(np.abs(rep.density - 1 / (2 * math.pi))) <= 1e-15


def test_density_frozen_past_support():
    prof = coeffs.random_step_profile(np.random.default_rng(1), 20)
    grid = np.linspace(-5, 5, 31)
    a = density_at(prof, prof.support_end + 0.5, grid).density
    b = density_at(prof, prof.support_end + 7.0, grid).density
    assert np.allclose(a, b, rtol=1e-12)
    assert np.all(a > 0) and np.all(np.isfinite(a))


def test_density_thm61_boundary_differences_shrink():
    prof = coeffs.thm61_profile(14, "fixed", 2.0)
    grid = np.linspace(-3, 3, 13)
    dens = [density_at(prof, n, grid).density for n in range(3, 15)]
    diffs = np.array([np.max(np.abs(b - a)) for a, b in zip(dens, dens[1:])])
    # early pulses are too wide for a clean trend; from n = 8 on it is monotone
    assert np.all(np.diff(diffs[5:]) < 0)
    slope = np.polyfit(np.arange(diffs.size), np.log(diffs), 1)[0]
    assert slope < -0.5 * math.log(2) / 2


def test_skk_closed_forms():
    lam = np.linspace(-2000, 2000, 400_001)
    rep = SpectralReport(lam, np.full(lam.shape, 1 / (2 * math.pi)), 1.0)
    val = skk_integral(rep)
    assert val + rep.skk_remainder == pytest.approx(math.pi * math.log(2 * math.pi), rel=1e-6)
    rep = SpectralReport(lam, np.ones(lam.shape), 1.0)
    assert skk_integral(rep) == 0
    with pytest.raises(krein.PropagationError):
        skk_integral(SpectralReport(lam[:3], np.array([1.0, 0.0, 1.0]), 1.0))


def test_skk_thm62_stable_under_r_doubling(thm62_small):
    prof = thm62_small.profile()
    # density oscillates in lambda on a scale ~ 1/r_n; 201 points alias badly
    grid = np.linspace(-5, 5, 2001)
    r = thm62_small.final_state.r
    a = skk_integral(density_at(prof, r / 2, grid))
    b = skk_integral(density_at(prof, r, grid))
    assert math.isfinite(b) and abs(a - b) <= 0.02 * abs(b)


def test_hardy_zero_profile():
    assert hardy_integral(coeffs.zero_profile(), 1j, 30.0).value == pytest.approx(0.5, abs=1e-15)
    h = hardy_integral(coeffs.zero_profile(), 0.7 + 0.25j, 200.0)
    assert h.value == pytest.approx(1 / 0.5, rel=1e-12)
    # increment over [R/10, R] for the free solution
    assert h.last_decade_increment == pytest.approx(math.exp(-0.5 * 20) / 0.5, rel=1e-9)


def test_hardy_matches_pi_for_thm62(thm62_small):
    run = thm62_small
    h = hardy_integral(run.profile(), run.lam0, run.final_state.r)
    pi2 = abs(run.final_state.true_p_star()) ** 2
    assert abs(pi2 - 2 * h.value) <= 0.02 * pi2
    assert h.last_decade_increment >= 0


def test_hardy_monotone():
    prof = coeffs.random_step_profile(np.random.default_rng(3), 30)
    vals = [hardy_integral(prof, 0.2 + 0.9j, r).value for r in (1.0, 2.0, 3.0, 5.0)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_classify_rules():
    n = np.arange(1, 201)
    assert classify(np.ones(200), np.zeros(200))[0] == spectral.CONVERGES
    assert classify(np.ones(200), np.log(np.log(n + 2)))[0] == spectral.PHASE_DRIFTS
    assert classify(1 + 0.3 * (n % 2), np.zeros(200))[0] == spectral.OSCILLATES
    assert classify(np.exp(0.05 * n), np.zeros(200))[0] == spectral.DIVERGES


def test_limit_diagnostics_l2_profile_converges():
    prof = coeffs.smooth_profile(lambda r: 1 / (1 + r), (0.0, 10.0), 1.0)
    diag = limit_diagnostics(prof, 1j, np.linspace(11, 60, 50))
    assert diag.classification == spectral.CONVERGES
    with pytest.raises(ValueError):
        limit_diagnostics(prof, 1.0, [1.0])


def test_limit_diagnostics_thm61_oscillates():
    prof = coeffs.thm61_profile(20, "fixed", 2.0)
    rs = sorted(k + f * 2.0 ** -k for k in range(1, 21) for f in (0, 0.5, 1))
    diag = limit_diagnostics(prof, 1j, rs)
    assert diag.classification == spectral.OSCILLATES
    tail = diag.modulus[-30:]
    assert tail.max() / tail.min() == pytest.approx(math.cosh(1), rel=1e-3)


def test_phase_unwrap_continuity(thm62_small):
    assert np.max(np.abs(np.diff(thm62_small.diagnostics.phase))) < math.pi


def test_phase_drift_model():
    assert phase_drift_model(3, 3) == pytest.approx(1 / (3 * math.log(3)), rel=1e-15)
    assert phase_drift_model(3, 3) == pytest.approx(0.30341, abs=5e-6)
    direct = math.fsum(1 / (n * math.log(n)) for n in range(3, 100_001))
    assert phase_drift_model(3, 100_000) == pytest.approx(direct, rel=1e-15)
    for M in (10, 500, 77_777):
        total = phase_drift_model(3, 100_000)
        parts = phase_drift_model(3, M) + phase_drift_model(M + 1, 100_000)
        assert abs(total - parts) <= 1e-15 * total
    with pytest.raises(ValueError):
        phase_drift_model(2, 10)


def test_drift_threshold():
    n = spectral.drift_threshold_n(2.0)
    assert phase_drift_model(3, int(n)) >= 2.0 > phase_drift_model(3, int(n) - 1)
    assert spectral.drift_threshold_n(2 * math.pi) > 1e200


def test_thm62_run_structure(thm62_small):
    run = thm62_small
    run.schedule.check()
    assert run.ratio_error_C <= spectral.RATIO_BUDGET
    assert np.all(np.diff(run.energy) >= 0)
    assert np.all(np.diff(run.schedule.r) > 0)
    d = run.diagnostics
    i = np.searchsorted(d.n, 1000)
    assert np.max(np.abs(d.p[i:]) / d.modulus[i:]) <= 1e-3


def test_thm62_budget_violation():
    with pytest.raises(krein.PropagationError):
        spectral.thm62_build_and_run(50, 1j, delta_policy=lambda n: 10.0, gap_min=0.01, ratio_budget=1.0)


def test_cesaro_zero_and_compact():
    assert spectral.cesaro_pi(coeffs.zero_profile(), 1j, 17.0) == pytest.approx(1.0, abs=1e-15)
    prof = coeffs.random_step_profile(np.random.default_rng(6), 10, max_len=0.1)
    frozen = krein.propagate(prof, 0.5j, prof.support_end).final.true_p_star()
    ces = spectral.cesaro_series(prof, 0.5j, [10.0, 100.0, 10_000.0])
    errs = np.abs(ces - frozen)
    assert errs[0] > errs[1] > errs[2] and errs[2] <= 1e-3 * abs(frozen)


def test_cesaro_segment_integral_vs_quadrature():
    from scipy.integrate import quad
    prof = coeffs.step_profile([0.0, 0.7], [0.5, 0.6], [1.2 - 0.4j, -0.8j])
    lam = 0.4 + 0.3j

    def ps(r):
        return krein.propagate(prof, lam, r).final.true_p_star()
    want = (quad(lambda r: ps(r).real, 0, 1.5, points=[0.5, 0.7, 1.3], epsabs=1e-13)[0]
            + 1j * quad(lambda r: ps(r).imag, 0, 1.5, points=[0.5, 0.7, 1.3], epsabs=1e-13)[0])
    got = spectral.cesaro_pi(prof, lam, 1.5) * 1.5
    assert abs(got - want) <= 1e-10


def test_cesaro_smooth_matches_quadrature():
    prof = coeffs.smooth_profile(lambda r: 0.6 * math.sin(r), (0.0, 3.0), 1.0)
    lam = 1j
    rs = np.linspace(0.1, 3.0, 60)
    vals = [krein.propagate(prof, lam, r).final.true_p_star() for r in rs]
    approx = np.trapezoid(np.array([1] + vals), np.concatenate([[0], rs])) / 3.0
    assert abs(spectral.cesaro_pi(prof, lam, 3.0) - approx) <= 1e-3


def test_cauchy_window():
    assert spectral.cauchy_window(np.ones(10) * (2 + 1j))
    assert not spectral.cauchy_window(np.exp(1j * np.linspace(0, 3, 10)))


def test_isometry_fourier_cases():
    box = lambda r: np.where((r >= 0) & (r <= 1), 1.0, 0.0)
    res = verify_isometry(coeffs.zero_profile(), box, n_lambda=20001)
    assert res.defect <= 0.01
    assert res.norm_sq_f == pytest.approx(1.0, rel=1e-14)
    bump = lambda r: np.exp(-((r - 0.5) / 0.12) ** 2)
    assert verify_isometry(coeffs.zero_profile(), bump, n_lambda=20001).defect <= 1e-3


def test_isometry_general_compact_profile():
    prof = coeffs.random_step_profile(np.random.default_rng(2), 8, max_abs=1.0, max_len=0.1)
    bump = lambda r: np.exp(-((r - 0.5) / 0.12) ** 2)
    res = verify_isometry(prof, bump, n_lambda=20001)
    assert res.defect <= 0.05


def test_phase_witness_reports_shortfall(thm62_small):
    w = spectral.phase_witness(thm62_small.diagnostics)
    assert not w.applicable and not w.passed
    assert w.required_n > 1e200
    assert w.distances.shape == (8,)
