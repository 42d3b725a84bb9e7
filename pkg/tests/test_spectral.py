import math

import numpy as np
import pytest

from nscascade import spectral as sp
from nscascade.verify import random_zero_mean_field


def _sin_field(n, amp=1.0):
    """``amp * e1 sin(x2)`` placed directly in coefficient space."""
    u = sp.PeriodicField.zeros(n, 3)
    u.coef[0, 1, 0, 0] = -0.5j * amp
    u.coef[0, -1, 0, 0] = 0.5j * amp
    return u


@pytest.fixture(scope="module")
def rng():
    return np.random.default_rng(123)


def test_round_trip(rng):
    x = rng.standard_normal((3, 32, 32, 32))
    back = sp.PeriodicField.from_physical(x).physical()
    assert np.max(np.abs(back - x)) <= 1e-12 * np.max(np.abs(x))


def test_reality_condition(rng):
    x = rng.standard_normal((32, 32, 32))
    full = np.fft.fftn(x) / 32**3
    u = sp.PeriodicField.from_physical(x)
    assert np.allclose(u.coef[0], full[:, :, :17], atol=1e-15)
    # conjugate symmetry of the full spectrum is what the half layout relies on
    assert np.allclose(full[1, 2, 3], np.conj(full[-1, -2, -3]))


def test_parseval(rng):
    x = rng.standard_normal((3, 32, 32, 32))
    u = sp.PeriodicField.from_physical(x)
    direct = math.sqrt(np.mean(np.sum(x**2, axis=0)))
    assert sp.l2_norm(u) == pytest.approx(direct, rel=1e-12)


def test_partition_of_unity():
    n = 64
    g = sp.get_grid(n)
    r = np.unique(g.kmag[(g.kmag >= 1) & (g.kmag <= n // 2)])
    total = sp.lp_low_symbol(r) + sum(sp.lp_shell_symbol(r / N) for N in sp.lp_shells(n))
    assert np.max(np.abs(total - 1)) <= 1e-12
    assert sp.lp_shell_symbol(1.0) == 1.0
    assert sp.lp_shell_symbol(2 / 3) == 0 and sp.lp_shell_symbol(1.5) == 0
    assert sp.lp_low_symbol(0.75) == 0


def test_lp_projection_examples():
    u = _sin_field(16)
    assert np.allclose(sp.lp_project(u, 1).coef, u.coef, atol=1e-15)
    assert np.max(np.abs(sp.lp_project(u, 4).coef)) == 0
    with pytest.raises(ValueError):
        sp.lp_project(u, 64)


def test_lp_reassembly(rng):
    u = random_zero_mean_field(32, 3, rng)
    parts = sp.lp_project(u, "low")
    for N in sp.lp_shells(32):
        parts = parts + sp.lp_project(u, N)
    assert np.max(np.abs(parts.coef - u.coef)) <= 1e-12 * np.max(np.abs(u.coef))


def test_besov_single_shell():
    for m in (1.0, 3.5):
        u = _sin_field(16, m)
        assert sp.besov_norm(u, -1, math.inf, 1) == pytest.approx(m, rel=1e-12)


def test_besov_rejects_mean():
    u = _sin_field(16)
    u.coef[0, 0, 0, 0] = 1.0
    with pytest.raises(sp.PreconditionError):
        sp.besov_norm(u, -1, math.inf, 1)


def test_besov_q_monotone(rng):
    u = random_zero_mean_field(32, 3, rng)
    vals = [sp.besov_norm(u, -1, math.inf, q) for q in (1, 2, math.inf)]
    assert vals[0] >= vals[1] >= vals[2]
    vals2 = [sp.besov_norm(u, 0.5, 2, q) for q in (1, 2, math.inf)]
    assert vals2[0] >= vals2[1] >= vals2[2]


def test_leray_examples():
    n = 16
    g = sp.get_grid(n)
    X, Y, Z = g.points()
    q = sp.PeriodicField.from_physical(np.sin(X + 2 * Y) * np.cos(Z))
    assert np.max(np.abs(sp.leray_project(sp.gradient(q)).coef)) <= 1e-15
    u = sp.PeriodicField.zeros(n, 3)
    u.coef[0, 1, 1, 0] = 1.0
    p = sp.leray_project(u)
    assert np.allclose(p.coef[:, 1, 1, 0], [0.5, -0.5, 0.0])


def test_leray_idempotent_and_divergence_free(rng):
    u = sp.PeriodicField.from_physical(rng.standard_normal((3, 32, 32, 32)))
    p = sp.leray_project(u)
    pp = sp.leray_project(p)
    assert np.max(np.abs(pp.coef - p.coef)) <= 1e-14 * np.max(np.abs(p.coef))
    g = p.grid
    div = sum(g.kd[i] * p.coef[i] for i in range(3))
    assert np.max(np.abs(div)) <= 1e-15


def test_heat_examples(rng):
    n = 16
    X, Y, Z = sp.get_grid(n).points()
    u = sp.PeriodicField.from_physical(np.sin(2 * Y + Z))
    out = sp.heat_propagate(u, 0.3).physical()[0]
    assert np.max(np.abs(out - math.exp(-5 * 0.3) * np.sin(2 * Y + Z))) <= 1e-14
    v = random_zero_mean_field(16, 3, rng)
    assert np.array_equal(sp.heat_propagate(v, 0.0).coef, v.coef)
    a = sp.heat_propagate(sp.heat_propagate(v, 0.1), 0.2)
    b = sp.heat_propagate(v, 0.3)
    assert np.max(np.abs(a.coef - b.coef)) <= 1e-14 * np.max(np.abs(v.coef))
    with pytest.raises(ValueError):
        sp.heat_propagate(v, -1.0)


def test_anti_divergence_single_mode():
    n = 16
    g = sp.get_grid(n)
    X, Y, Z = g.points()
    V = np.zeros((3, n, n, n))
    V[0] = np.cos(Z)
    V = sp.PeriodicField.from_physical(V)
    back = sp.tensor_divergence(sp.anti_divergence(V))
    assert sp.sup_norm(back - V) <= 1e-12


def test_anti_divergence_random(rng):
    for _ in range(3):
        V = random_zero_mean_field(32, 3, rng)
        back = sp.tensor_divergence(sp.anti_divergence(V))
        assert sp.sup_norm(back - V) <= 1e-10 * sp.sup_norm(V)


def test_anti_divergence_rejects_constant():
    V = sp.PeriodicField.zeros(16, 3)
    V.coef[0, 0, 0, 0] = 1.0
    with pytest.raises(sp.PreconditionError):
        sp.anti_divergence(V)


def test_mollify_examples(rng):
    c = sp.PeriodicField.zeros(16)
    c.coef[0, 0, 0, 0] = 2.0
    assert np.array_equal(sp.mollify(c, 0.3).coef, c.coef)
    ell = 0.5
    u = sp.PeriodicField.zeros(16)
    u.coef[0, 2, 0, 0] = 1.0
    assert sp.mollify(u, ell).coef[0, 2, 0, 0] == pytest.approx(math.exp(-0.5))
    for _ in range(5):
        f = random_zero_mean_field(32, 1, rng, band=6)
        grad = sp.sup_norm(sp.gradient(f))
        assert sp.sup_norm(sp.mollify(f, 0.05) - f) <= 0.05 * grad


def test_sup_norm_refinement_catches_off_grid_peak():
    n = 16
    u = sp.PeriodicField.zeros(n)
    # cos(7 x + pi/16) peaks halfway between grid points
    ph = math.pi / 16
    u.coef[0, 7, 0, 0] = 0.5 * np.exp(1j * ph)
    u.coef[0, -7, 0, 0] = 0.5 * np.exp(-1j * ph)
    plain = float(np.max(np.abs(u.physical())))
    assert plain < 0.99
    assert sp.sup_norm(u, refine=2) > plain
    assert sp.sup_norm(u, refine=8) == pytest.approx(1.0, abs=2e-3)


def test_resample_exact_padding(rng):
    u = random_zero_mean_field(16, 2, rng, band=5)
    up = sp.resample(u, 32)
    back = sp.resample(up, 16)
    assert np.allclose(back.coef, u.coef, atol=1e-15)
    X, Y, Z = sp.get_grid(32).points()
    assert up.physical().shape == (2, 32, 32, 32)


def test_snapshot_round_trip(tmp_path, rng):
    u = random_zero_mean_field(16, 3, rng)
    path = tmp_path / "u.bin"
    sp.save_snapshot(path, u, 0.25)
    raw = path.read_bytes()
    assert raw[:8] == b"NSCFIELD" and len(raw) == 64 + u.coef.size * 16
    v, t = sp.load_snapshot(path)
    assert t == 0.25
    assert np.array_equal(v.coef, u.coef)
    path.write_bytes(raw[:100])
    with pytest.raises(ValueError):
        sp.load_snapshot(path)


def test_advection_of_shear_vanishes():
    n = 16
    X, Y, Z = sp.get_grid(n).points()
    v = np.zeros((3, n, n, n))
    v[0] = np.sin(2 * Y + Z)
    nl, speed = sp.advection(sp.PeriodicField.from_physical(v))
    assert np.max(np.abs(nl.coef)) <= 1e-14
    assert speed == pytest.approx(1.0, abs=1e-2)
