import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kreinlab import coeffs, opuc, spectral
from kreinlab.opuc import (PolyPair, discrete_diagnostics, discrete_energy_check, evaluate_polys,
                           szego_step, unit_circle_balance)


def coefficient_oracle(a, z):
    """Build phi_n as coefficient vectors and evaluate with polyval; phi*_n is the reversed conjugate."""
    phi = np.array([1.0 + 0j])
    out = []
    for n, an in enumerate(a):
        star = np.conj(phi[::-1])
        shifted = np.concatenate([[0], phi])
        rho = math.sqrt(1 - abs(an) ** 2)
        phi = (shifted - np.conj(an) * np.concatenate([star, [0]])) / rho
        out.append(phi)
    vals = []
    for p in out:
        vals.append((np.polynomial.polynomial.polyval(z, p),
                     np.polynomial.polynomial.polyval(z, np.conj(p[::-1]))))
    return vals


def test_zero_sequence_gives_monomials():
    z = 0.3 - 0.4j
    for p in evaluate_polys(opuc.zero_seq(), z, 30):
        assert abs(p.true_phi() - z ** p.n) <= 1e-15
        assert p.true_phi_star() == 1


def test_first_step_hand_values():
    for a0 in (0.3, -0.8, 0.0):
        p = szego_step(PolyPair.initial(0.0), a0)
        rho = math.sqrt(1 - a0 * a0)
        assert p.phi == pytest.approx(-a0 / rho, abs=1e-15)
        assert p.phi_star == pytest.approx(1 / rho, abs=1e-15)


@given(a0=st.complex_numbers(max_magnitude=0.95), z=st.complex_numbers(max_magnitude=1.0))
@settings(max_examples=60, deadline=None)
def test_first_step_energy(a0, z):
    p = szego_step(PolyPair.initial(z), a0)
    lhs = abs(p.phi_star) ** 2 - abs(p.phi) ** 2
    assert lhs == pytest.approx(1 - abs(z) ** 2, abs=1e-12 / (1 - abs(a0) ** 2))


def test_matches_coefficient_oracle():
    rng = np.random.default_rng(11)
    for _ in range(20):
        n = int(rng.integers(1, 6))
        a = rng.uniform(0, 0.9, n) * np.exp(2j * math.pi * rng.uniform(size=n))
        z = complex(*rng.uniform(-0.7, 0.7, 2))
        pairs = evaluate_polys(opuc.explicit_seq(a), z, n)[1:]
        for p, (phi, star) in zip(pairs, coefficient_oracle(a, z)):
            assert abs(p.true_phi() - phi) <= 1e-13
            assert abs(p.true_phi_star() - star) <= 1e-13


def test_running_sum_geometric():
    pairs = evaluate_polys(opuc.zero_seq(), 0.5, 200)
    assert pairs[-1].true_sum() == pytest.approx(4 / 3, rel=1e-15)
    for p in pairs[1:50]:
        assert p.true_sum() == pytest.approx((1 - 0.25 ** p.n) / 0.75, rel=1e-14)


def test_summable_sequence_is_cauchy():
    seq = opuc.power_seq(2.0)
    z = 0.5j
    pairs = evaluate_polys(seq, z, 4096)
    gaps = [abs(pairs[2 * N].true_phi_star() - pairs[N].true_phi_star()) for N in (64, 256, 1024, 2048)]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))


def test_divergent_sequence_sum_unbounded():
    seq = opuc.power_seq(0.5)
    sums = [evaluate_polys(seq, 0.5, N)[-1].true_sum() for N in (100, 1000, 10_000)]
    assert sums[0] < sums[1] < sums[2]
    assert sums[2] > 10 * sums[0]


def test_energy_identity_random_and_long():
    rng = np.random.default_rng(5)
    a = 0.9 * rng.uniform(size=200) * np.exp(2j * math.pi * rng.uniform(size=200))
    assert discrete_energy_check(evaluate_polys(opuc.explicit_seq(a), 0.7, 200)) <= 1e-10
    pairs = evaluate_polys(opuc.power_seq(0.5), 0.9, 10_000)
    assert discrete_energy_check(pairs) <= 1e-10
    # constant |a_n| = 0.99 grows past the renormalization threshold
    pairs = evaluate_polys(opuc.explicit_seq([0.99j] * 10_000), 0.9, 10_000)
    assert pairs[-1].log_scale > 1000
    assert discrete_energy_check(pairs) <= 1e-10


def test_zero_sequence_energy_closed_form():
    z = 0.6
    for p in evaluate_polys(opuc.zero_seq(), z, 40):
        assert (1 - z * z) * p.true_sum() == pytest.approx(1 - z ** (2 * p.n), abs=1e-15)


def test_unit_circle_balance():
    rng = np.random.default_rng(8)
    a = 0.5 * rng.uniform(size=10_000) * np.exp(2j * math.pi * rng.uniform(size=10_000))
    pairs = evaluate_polys(opuc.explicit_seq(a), cmath.exp(0.9j), 10_000)
    assert unit_circle_balance(pairs) <= 1e-10


def test_phi_star_bounded_below_inside_disk():
    for seq in (opuc.power_seq(0.5), opuc.unit_phase_drift_seq(), opuc.geometric_seq()):
        for p in evaluate_polys(seq, 0.8j, 3000):
            assert abs(p.true_phi_star()) >= 1 - 1e-12


def test_sequence_validation_and_classes():
    with pytest.raises(ValueError):
        opuc.explicit_seq([1.0])(0)
    with pytest.raises(ValueError):
        evaluate_polys(opuc.zero_seq(), 1.5, 3)
    assert opuc.power_seq(0.5).l2_class == opuc.DIVERGENT
    assert opuc.power_seq(0.6).l2_class == opuc.SUMMABLE
    assert opuc.unit_phase_drift_seq().l2_class == opuc.DIVERGENT


def test_discrete_diagnostics_classes():
    assert discrete_diagnostics(opuc.zero_seq(), 0.5j, 500).classification == spectral.CONVERGES
    d = discrete_diagnostics(opuc.geometric_seq(), 0.5j, 500)
    assert d.classification == spectral.CONVERGES and d.stats["energy_residual"] <= 1e-12
    assert discrete_diagnostics(opuc.power_seq(0.5), 0.5, 2000).classification == spectral.DIVERGES


def test_analogy_table_zero_case():
    rows = opuc.analogy_table(coeffs.zero_profile(), opuc.zero_seq(), checkpoint_rs=np.linspace(1, 20, 40))
    assert [r.side for r in rows] == ["continuous", "discrete"]
    for r in rows:
        assert r.classification == spectral.CONVERGES
        assert r.limit == pytest.approx(1.0, abs=1e-14)
        assert r.energy_residual <= 1e-12


def test_analogy_table_summable_pair():
    prof = coeffs.random_step_profile(np.random.default_rng(4), 12)
    rows = opuc.analogy_table(prof, opuc.geometric_seq(),
                              checkpoint_rs=np.linspace(prof.support_end + 1, prof.support_end + 20, 40))
    assert all(r.classification == spectral.CONVERGES for r in rows)
