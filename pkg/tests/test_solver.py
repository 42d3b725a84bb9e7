import csv
import math

import numpy as np
import pytest

from nscascade import spectral as sp
from nscascade.construction import PrincipalFlow, assemble_u0, build_scales, TargetSpec
from nscascade.solver import (
    BlowUpError,
    CascadeSeries,
    SolverState,
    error_and_perturbation,
    evolve,
    integrate,
    sample_times,
    shear_field,
    shell_amplitudes,
    step,
)


def _two_mode(n):
    """Taylor-Green cell plus an oblique shear, projected divergence-free."""
    X, Y, Z = sp.get_grid(n).points()
    v = np.stack([
        np.sin(X) * np.cos(Y) * np.cos(Z),
        -np.cos(X) * np.sin(Y) * np.cos(Z),
        0 * X,
    ])
    v[1] += 0.5 * np.sin(2 * X + Z)
    return sp.leray_project(sp.PeriodicField.from_physical(v))


def _div_max(u):
    g = u.grid
    return float(np.max(np.abs(sum(g.kd[i] * u.coef[i] for i in range(3)))))


def test_shear_is_exact_solution():
    n = 32
    theta, eta = np.array([0.0, 2.0, -1.0]), np.array([1, 1, 2])
    state = SolverState(0.0, shear_field(n, theta, eta), dt_max=0.05)
    for t in (0.1, 1.0):
        state, _ = integrate(state, t)
        assert sp.sup_norm(state.u - shear_field(n, theta, eta, t)) <= 1e-10


def test_nonlinearity_off_matches_heat_flow():
    rng = np.random.default_rng(3)
    from nscascade.verify import random_zero_mean_field

    u0 = sp.leray_project(random_zero_mean_field(32, 3, rng, band=8))
    state = SolverState(0.0, u0, dt_max=0.013, nonlinear=False)
    state, _ = integrate(state, 0.1)
    ref = sp.heat_propagate(u0, 0.1)
    assert sp.sup_norm(state.u - ref) <= 1e-10 * sp.sup_norm(u0)
    # single step: exact per-mode factor
    one, h = step(SolverState(0.0, u0, dt_max=0.01, nonlinear=False), 0.01)
    mask = np.abs(u0.coef) > 1e-12
    ratio = one.u.coef[mask] / u0.coef[mask]
    k2 = np.broadcast_to(u0.grid.k2, u0.coef.shape)[mask]
    assert np.max(np.abs(ratio - np.exp(-k2 * h))) <= 1e-12


def test_time_step_convergence_order():
    u0 = _two_mode(32)
    res = []
    for dt in (0.04, 0.02, 0.01):
        st = SolverState(0.0, u0, dt_max=dt, cfl=10.0)
        st, _ = integrate(st, 0.2)
        res.append(st.u)
    e1 = sp.sup_norm(res[0] - res[1])
    e2 = sp.sup_norm(res[1] - res[2])
    assert math.log2(e1 / e2) >= 3


def test_grid_self_convergence():
    amps = []
    for n in (64, 128):
        st = SolverState(0.0, _two_mode(n), dt_max=0.02)
        st, _ = integrate(st, 0.1)
        amps.append(np.array(shell_amplitudes(st.u, [1, 2, 4])))
    assert np.max(np.abs(amps[0] - amps[1]) / amps[1]) <= 1e-6


def test_divergence_free_and_energy_decay():
    st = SolverState(0.0, _two_mode(32), dt_max=0.02)
    e_prev = sp.l2_norm(st.u)
    for _ in range(5):
        st, _ = step(st, 0.02)
        assert _div_max(st.u) <= 1e-14
        e = sp.l2_norm(st.u)
        assert e <= e_prev * (1 + 1e-8)
        e_prev = e


def test_cfl_violation_halves_step():
    st = SolverState(0.0, _two_mode(32) * 50.0, cfl=0.5)
    dx = 2 * math.pi / 32
    new, h = step(st, 1.0)
    assert h * new.last_speed <= 0.5 * dx
    assert h < 1.0


def test_blowup_detection_keeps_last_state():
    u = _two_mode(16)
    u.coef[0, 1, 0, 0] = np.nan
    st = SolverState(0.0, u, dt_max=0.01)
    with pytest.raises(BlowUpError) as info:
        step(st, 0.01)
    assert info.value.state is st


def test_zero_data_gives_zero_series():
    s = build_scales(TargetSpec((2, 0, 0), (0, 1, 0)), A=9, kstar=1, n=16)
    series = evolve(sp.PeriodicField.zeros(16, 3), s, 0.5, per_decade=2)
    assert all(a == 0 for row in series.shell_amp for a in row)
    assert all(r["energy"] == 0 for r in series.records)


def test_sample_times_forced_points():
    s = build_scales(TargetSpec((16, 0, 0), (0, 0, 1)), A=9, kstar=2, n=64)
    ts = sample_times(s, 8.0, 16)
    assert ts == sorted(set(ts)) and ts[0] == 0.0 and ts[-1] == pytest.approx(8.0)
    for forced in [1 / 16**2, 1 / 9, 1.0, 0.5, 2.0]:
        assert forced in ts


def test_error_field_and_perturbation_at_start(desk_table):
    flow = PrincipalFlow(desk_table)
    u0, _ = assemble_u0(desk_table)
    ep = error_and_perturbation(u0, 0.0, desk_table.scales, flow)
    assert ep["w_sup"] == 0.0
    assert len(ep["E"]) == 3 and all(math.isfinite(x) for x in ep["E"])


def test_series_csv(tmp_path):
    s = CascadeSeries(shells=[1, 4])
    s.add(0.0, [0.5, 2.0], {"energy": 1.0})
    s.add(0.1, [0.7, 1.0], {"energy": 0.9})
    s.write_csv(tmp_path / "c.csv")
    rows = list(csv.reader(open(tmp_path / "c.csv")))
    assert rows[0] == ["t", "k", "shell_amp", "energy"]
    assert len(rows) == 5
    assert s.activation_times() == [0.1, 0.0]
