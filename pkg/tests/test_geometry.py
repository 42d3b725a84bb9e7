import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest

from nscascade.geometry import (
    NASH_RADIUS,
    DomainError,
    InfeasibleNormalizationError,
    distance_matrix,
    line_distance_exact,
    mikado_family,
    mikado_line_distance,
    mikado_profile,
    nash_decompose,
    nash_directions,
    sym_to_matrix,
)
from nscascade.verify import random_symmetric_in_ball


def test_first_direction_and_response_entries():
    ns = nash_directions()
    assert ns.theta[0] == (Fraction(4, 5), 0, Fraction(3, 5))
    assert ns.b[0][0] == Fraction(1, 2)
    assert ns.b[0][2] == Fraction(25, 24)


def test_directions_are_rational_unit_vectors():
    for t in nash_directions().theta:
        assert sum(x * x for x in t) == 1
        assert all((5 * Fraction(x)).denominator == 1 for x in t)


def test_outer_sum_is_twice_identity_exactly():
    s = nash_directions().outer_sum()
    assert s == (2, 0, 0, 2, 0, 2)
    assert all(isinstance(x, (int, Fraction)) for x in s)


def test_response_row_sums():
    for row in nash_directions().b:
        assert sum(abs(x) for x in row) == Fraction(25, 8)


def test_eta_orthogonal_to_theta():
    ns = nash_directions()
    assert np.allclose(np.sum(ns.theta_array * ns.eta_array, axis=1), 0)


def test_identity_gives_one_half():
    assert np.allclose(nash_decompose(np.eye(3)), 0.5, atol=0, rtol=0)


def test_elementary_perturbation():
    M = np.eye(3)
    M[0, 0] += 1 / 7
    g = nash_decompose(M)
    assert g[0] == pytest.approx(0.5 + 1 / 14, abs=1e-15)


def test_reconstruction_random():
    rng = np.random.default_rng(7)
    M = random_symmetric_in_ball(1000, rng)
    g = nash_decompose(M)
    th = nash_directions().theta_array
    rec = np.einsum("sj,ja,jb->sab", g, th, th)
    assert np.max(np.abs(rec - M)) <= 1e-12
    assert g.min() >= 1 / 25 - 1e-12
    assert g.max() <= 1


def test_sym6_input_accepted():
    M = np.eye(3) + 0.05 * np.array([[1, 0.2, 0], [0.2, -1, 0.3], [0, 0.3, 0.5]])
    from nscascade.geometry import matrix_to_sym

    assert np.allclose(nash_decompose(matrix_to_sym(M)), nash_decompose(M))
    assert np.allclose(sym_to_matrix(matrix_to_sym(M)), M)


def test_outside_ball_rejected():
    M = np.eye(3)
    M[1, 2] = M[2, 1] = 0.2
    with pytest.raises(DomainError, match="1/7"):
        nash_decompose(M)


def test_ball_boundary_admitted():
    M = np.eye(3)
    M[0, 1] = M[1, 0] = float(NASH_RADIUS)
    assert np.all(nash_decompose(M) >= 1 / 25)


def test_distance_examples():
    assert mikado_line_distance(1, 4) == pytest.approx(78 / 25, abs=1e-12)
    closed = 8 * (49 - 15 * math.pi) / (5 * math.sqrt(481))
    assert mikado_line_distance(3, 4) == pytest.approx(closed, abs=1e-12)
    assert mikado_line_distance(5, 5) == 0
    assert line_distance_exact(3, 4) == (Fraction(392, 5), -24, 481)


def test_distance_matrix_symmetric_and_separated():
    D = distance_matrix()
    assert np.allclose(D, D.T)
    off = D[np.triu_indices(6, 1)]
    assert off.min() > (201 / 100) / 15
    assert off.min() == pytest.approx(mikado_line_distance(3, 4))


def test_distance_from_wider_lattice_scan():
    # brute force over the symmetric shift set {-4..4}^3
    fam = mikado_family()
    th5 = fam.theta * 5
    for a in range(6):
        for b in range(a + 1, 6):
            c = np.cross(th5[a], th5[b])
            c = c / np.linalg.norm(c)
            d = np.mod(fam.positions[a] - fam.positions[b], 2 * math.pi)
            best = min(
                abs((d - 2 * math.pi * (np.array(m) - 4)) @ c)
                for m in np.ndindex(9, 9, 9)
            )
            assert best == pytest.approx(mikado_line_distance(a + 1, b + 1), abs=1e-12)


def test_profile_values_on_line_and_outside():
    prof = mikado_profile(3)
    x = prof.position + 2.3 * prof.theta
    assert prof(x[None])[0] == 1.0
    far = prof.position + 1.01 * prof.delta0 * prof.eta
    assert prof(far[None])[0] == 0.0
    rng = np.random.default_rng(0)
    vals = prof(rng.uniform(0, 2 * math.pi, (5000, 3)))
    assert vals.min() >= 0 and vals.max() <= 1


def test_profile_invariant_along_line():
    rng = np.random.default_rng(1)
    for j in range(1, 7):
        prof = mikado_profile(j)
        # points near the tube so the ramp is sampled
        x = prof.position + rng.normal(scale=prof.delta0, size=(400, 3))
        shift = x + rng.uniform(-7, 7, size=(400, 1)) * prof.theta
        # the ramp slope is ~1/(s delta0) ~ 4e3, which amplifies round-off in r
        assert np.max(np.abs(prof(x) - prof(shift))) <= 1e-9


def test_profile_normalization_independent_quadrature():
    prof = mikado_profile(1, eps0=0.5)
    mpmath.mp.dps = 30
    R = (1 - prof.plateau) * prof.delta0

    def chi2r(r):
        return float(prof.radial(float(r))) ** 2 * r

    ramp = mpmath.quad(chi2r, mpmath.linspace(R, prof.delta0, 9))
    cross = math.pi * R**2 + 2 * math.pi * float(ramp)
    total = prof.line_length * cross
    expected = (10 * math.pi**2 - 0.5) / 225
    assert total == pytest.approx(expected, abs=1e-6)
    assert prof.l2_squared() == pytest.approx(expected, abs=1e-12)


def test_hankel_against_direct_integral():
    prof = mikado_profile(2)
    R = (1 - prof.plateau) * prof.delta0
    for k in (0.0, 3.0, 40.0):
        def f(r):
            return float(prof.radial(float(r))) * float(mpmath.besselj(0, k * r)) * r

        direct = 2 * math.pi * float(mpmath.quad(f, [0, R] + list(mpmath.linspace(R, prof.delta0, 5))[1:]))
        assert float(prof.hankel(k)) == pytest.approx(direct, rel=1e-10)


def test_fourier_coefficient_zero_mode_is_mean():
    prof = mikado_profile(4)
    c0 = prof.fourier_coefficient(np.zeros(3))
    mean = prof.line_length * float(prof.hankel(0.0)) / (2 * math.pi) ** 3
    assert c0 == pytest.approx(mean)
    # wavevectors with a component along the line carry nothing
    assert prof.fourier_coefficient(5 * prof.theta) == 0


def test_infeasible_normalization():
    with pytest.raises(InfeasibleNormalizationError):
        mikado_profile(1, eps0=90.0)


def test_bad_index():
    with pytest.raises(ValueError):
        mikado_profile(7)
