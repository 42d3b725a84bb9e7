"""Dealiased pseudospectral Navier-Stokes integrator (unit viscosity) and cascade diagnostics.

Time stepping is the integrating-factor (Lawson) form of the classical
fourth-order Runge-Kutta scheme: the viscous factor ``exp(-|xi|^2 h)`` is
applied exactly and only ever with ``h >= 0``.
"""
from __future__ import annotations

import csv
import itertools
import json
import logging
import math
import time as _time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import spectral as sp
from .construction import CoefficientTable, PrincipalFlow, ScaleTable
from .spectral import PeriodicField

log = logging.getLogger(__name__)

__all__ = [
    "BlowUpError",
    "SolverState",
    "CascadeSeries",
    "step",
    "integrate",
    "evolve",
    "run",
    "sample_times",
    "shell_amplitudes",
    "error_and_perturbation",
    "shear_field",
]

BLOWUP_GROWTH = 1e6


class BlowUpError(RuntimeError):
    """Non-finite coefficients or runaway growth; carries the last valid state."""

    def __init__(self, msg: str, state: "SolverState"):
        super().__init__(msg)
        self.state = state


@dataclass
class SolverState:
    """Time, velocity and step-size policy of one integration."""

    t: float
    u: PeriodicField
    cfl: float = 0.5
    dt_max: float = math.inf
    nonlinear: bool = True
    speed0: float | None = None
    last_speed: float | None = None  # grid speed at the start of the last step

    @property
    def n(self) -> int:
        return self.u.n


_FACTOR_CACHE: dict = {}


def _viscous_factor(n: int, h: float) -> np.ndarray:
    key = (n, h)
    f = _FACTOR_CACHE.get(key)
    if f is None:
        if len(_FACTOR_CACHE) > 8:
            _FACTOR_CACHE.clear()
        f = np.exp(-sp.get_grid(n).k2 * h)
        _FACTOR_CACHE[key] = f
    return f


def _rhs(u: PeriodicField, nonlinear: bool):
    """Nonlinear part ``-P div(u (x) u)`` and the grid speed maximum."""
    if not nonlinear:
        phys = u.physical()
        speed = float(np.sqrt(np.max(np.sum(phys**2, axis=0))))
        return np.zeros_like(u.coef), speed
    adv, speed = sp.advection(u)
    adv.coef *= -1.0
    return adv.coef, speed


def step(state: SolverState, dt: float, max_halvings: int = 40):
    """Advance one Lawson-RK4 step; returns ``(new_state, dt_used)``.

    A step whose ``dt`` exceeds ``cfl * (2 pi / n) / max|u|`` is rejected
    and ``dt`` halved until it complies.
    """
    u = state.u
    n = u.n
    a, speed = _rhs(u, state.nonlinear)
    if state.speed0 is None:
        state.speed0 = speed
    dx = 2 * math.pi / n
    h = min(dt, state.dt_max)
    limit = state.cfl * dx / speed if speed > 0 else math.inf
    halvings = 0
    while h > limit:
        h *= 0.5
        halvings += 1
        if halvings > max_halvings:
            raise BlowUpError(f"time step underflow at t={state.t:.6g}", state)
    E1 = _viscous_factor(n, h)
    E2 = _viscous_factor(n, 0.5 * h)
    c0 = u.coef
    acc = E1 * (c0 + (h / 6.0) * a)
    tmp = E2 * (c0 + (0.5 * h) * a)
    del a
    b, _ = _rhs(PeriodicField(tmp), state.nonlinear)
    acc += (h / 3.0) * (E2 * b)
    np.multiply(E2, c0, out=tmp)
    tmp += (0.5 * h) * b
    del b
    c, _ = _rhs(PeriodicField(tmp), state.nonlinear)
    acc += (h / 3.0) * (E2 * c)
    np.multiply(E1, c0, out=tmp)
    tmp += h * (E2 * c)
    del c
    d, _ = _rhs(PeriodicField(tmp), state.nonlinear)
    del tmp
    acc += (h / 6.0) * d
    del d
    new = PeriodicField(sp.leray_project(PeriodicField(acc)).coef * sp.get_grid(n).dealias_mask())
    if not np.all(np.isfinite(new.coef)):
        raise BlowUpError(f"non-finite coefficients at t={state.t + h:.6g}", state)
    if state.speed0 and speed > BLOWUP_GROWTH * state.speed0:
        raise BlowUpError(f"speed grew by more than {BLOWUP_GROWTH:g}x at t={state.t:.6g}", state)
    out = SolverState(state.t + h, new, state.cfl, state.dt_max, state.nonlinear, state.speed0, speed)
    return out, h


def integrate(state: SolverState, t_target: float, remesh=None, deadline: float | None = None):
    """Step until ``t_target`` (hit exactly).  ``remesh`` maps a state to a state."""
    steps = 0
    while state.t < t_target * (1 - 1e-14):
        dx = 2 * math.pi / state.n
        guess = state.dt_max
        speed = state.last_speed
        if speed:
            # leave head-room for growth within the step
            guess = min(guess, 0.9 * state.cfl * dx / speed)
        dt = min(guess, t_target - state.t)
        state, _ = step(state, dt)
        steps += 1
        if remesh is not None and steps % 10 == 0:
            state = remesh(state)
        if deadline is not None and _time.monotonic() > deadline:
            raise TimeoutError(f"wall-clock budget exhausted at t={state.t:.6g}")
    if abs(state.t - t_target) <= 1e-12 * max(1.0, t_target):
        state.t = t_target
    return state, steps


# --------------------------------------------------------------------------
# diagnostics


def shear_field(n: int, theta, eta, t: float = 0.0) -> PeriodicField:
    """``theta sin(x . eta) exp(-|eta|^2 t)`` sampled exactly in Fourier space."""
    eta = np.asarray(eta, dtype=int)
    theta = np.asarray(theta, dtype=float)
    amp = math.exp(-float(eta @ eta) * t)
    coef = np.zeros((3, n, n, n // 2 + 1), dtype=np.complex128)
    for sign, val in ((1, -0.5j), (-1, 0.5j)):
        z = sign * eta
        if z[2] < 0:
            continue
        for a in range(3):
            coef[a, z[0] % n, z[1] % n, z[2]] += val * theta[a] * amp
    return PeriodicField(coef)


def shell_amplitudes(u: PeriodicField, centers) -> list:
    """Sup norms of ``u`` restricted to the annuli ``(N/sqrt2, sqrt2 N]``."""
    kmag = u.grid.kmag
    out = []
    for N in centers:
        mask = (kmag > N / math.sqrt(2)) & (kmag <= N * math.sqrt(2))
        if not mask.any():
            out.append(0.0)
            continue
        out.append(sp.sup_norm(PeriodicField(u.coef * mask)))
    return out


def _multi_indices(order: int):
    return list(itertools.combinations_with_replacement(range(3), order))


def _derivative_sups(f: PeriodicField, n_max: int) -> list:
    """``max_alpha sup_x |d^alpha f(x)|`` for each order up to ``n_max``."""
    kd = f.grid.kd
    out = []
    for order in range(n_max + 1):
        best = 0.0
        for alpha in _multi_indices(order):
            sym = np.ones(1, dtype=np.complex128)
            for a in alpha:
                sym = sym * (1j * kd[a])
            best = max(best, sp.sup_norm(PeriodicField(f.coef * sym)))
        out.append(best)
    return out


def error_and_perturbation(u: PeriodicField, t: float, scales: ScaleTable, flow=None, n_max: int = 2):
    """Error field against the target shear and the weighted perturbation norms.

    Returns ``{"E": [||grad^n E||], "w": [t^((1+n)/2) ||grad^n w||], "v_max": ...}``
    where ``E = u - theta_* sin(x . eta_*) e^{-|eta_*|^2 t}`` and ``w = u - v(t)``
    evaluated on the construction grid.
    """
    target = scales.target
    E = u - shear_field(u.n, target.theta, target.eta, t)
    out = {"E": _derivative_sups(E, n_max)}
    del E
    if flow is not None:
        un = sp.resample(u, scales.n) if u.n != scales.n else u
        v = flow.velocity(t)
        w = un - v
        del v
        wn = _derivative_sups(w, n_max)
        out["w_sup"] = wn[0]
        out["w"] = [t ** ((1 + k) / 2) * x for k, x in enumerate(wn)]
        out["v_max"] = max(sp.sup_norm(flow.component(k, t)) for k in range(scales.kstar + 1))
    return out


def sample_times(scales: ScaleTable, t_end: float, per_decade: int = 16, extra=()) -> list:
    """Geometric grid from ``N_k*^-2 / 100`` to ``t_end`` plus forced samples."""
    t0 = 1.0 / (100.0 * scales.N[scales.kstar] ** 2)
    decades = math.log10(t_end / t0)
    m = max(1, int(math.ceil(decades * per_decade)))
    ts = set(float(x) for x in t0 * 10 ** (np.arange(m + 1) * decades / m))
    ts.add(0.0)
    for N in scales.N:
        ts.add(1.0 / N**2)
    e2 = scales.eta_norm**2
    ts.update([0.5 / e2, 1.0 / e2, 2.0 / e2])
    ts.update(float(x) for x in extra)
    return sorted(t for t in ts if 0.0 <= t <= t_end * (1 + 1e-12))


@dataclass
class CascadeSeries:
    """Sampled diagnostics of one run."""

    times: list = field(default_factory=list)
    shells: list = field(default_factory=list)  # centres N_k
    shell_amp: list = field(default_factory=list)  # per sample, per k
    records: list = field(default_factory=list)  # per-sample scalar columns
    status: str = "ok"
    message: str = ""

    def add(self, t: float, amps: list, record: dict) -> None:
        self.times.append(float(t))
        self.shell_amp.append([float(a) for a in amps])
        self.records.append(record)

    def activation_times(self) -> list:
        amp = np.array(self.shell_amp)
        if amp.size == 0:
            return []
        return [self.times[int(np.argmax(amp[:, k]))] for k in range(amp.shape[1])]

    def peak_amplitudes(self) -> list:
        amp = np.array(self.shell_amp)
        return amp.max(axis=0).tolist() if amp.size else []

    def columns(self) -> list:
        keys = []
        for r in self.records:
            for k in r:
                if k not in keys:
                    keys.append(k)
        return keys

    def write_csv(self, path) -> None:
        cols = self.columns()
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["t", "k", "shell_amp"] + cols)
            for t, amps, rec in zip(self.times, self.shell_amp, self.records):
                for k, a in enumerate(amps):
                    wr.writerow([_fmt(t), k, _fmt(a)] + [_fmt(rec.get(c, "")) for c in cols])

    def summary(self) -> dict:
        return {
            "status": self.status,
            "message": self.message,
            "shell_centers": list(self.shells),
            "activation_times": self.activation_times(),
            "peak_amplitudes": self.peak_amplitudes(),
            "samples": len(self.times),
            "t_last": self.times[-1] if self.times else None,
        }


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return x


def _make_remesher(min_grid: int, tol: float, keep_band: int):
    def remesh(state: SolverState) -> SolverState:
        u = state.u
        while u.n // 2 >= min_grid and (u.n // 2) // 3 >= keep_band:
            m = u.n // 2
            if sp.tail_fraction(u, m // 3) > tol:
                break
            u = sp.resample(u, m)
            u = PeriodicField(u.coef * u.grid.dealias_mask())
            log.info("remeshed to n=%d at t=%.6g", m, state.t)
        if u is state.u:
            return state
        return SolverState(state.t, u, state.cfl, state.dt_max, state.nonlinear, state.speed0, state.last_speed)

    return remesh


def evolve(
    u0: PeriodicField,
    scales: ScaleTable,
    t_end: float,
    flow: PrincipalFlow | None = None,
    cfl: float = 0.5,
    dt_max: float = 1e-2,
    per_decade: int = 16,
    n_max: int = 2,
    remesh_tol: float = 1e-26,
    min_grid: int = 16,
    max_wall: float = 0.0,
    snapshot_times=(),
    snapshot_dir=None,
    nonlinear: bool = True,
) -> CascadeSeries:
    """Integrate from ``u0`` and sample the cascade diagnostics."""
    series = CascadeSeries(shells=list(scales.N))
    times = sample_times(scales, t_end, per_decade, snapshot_times)
    snaps = set(float(x) for x in snapshot_times)
    keep = int(max(np.max(np.abs(scales.target.eta)), 1))
    remesh = _make_remesher(min_grid, remesh_tol, keep)
    state = SolverState(0.0, u0, cfl, dt_max, nonlinear)
    deadline = _time.monotonic() + max_wall if max_wall > 0 else None
    total_steps = 0
    for ts in times:
        try:
            if ts > state.t:
                state, nsteps = integrate(state, ts, remesh, deadline)
                total_steps += nsteps
        except BlowUpError as exc:
            series.status, series.message = "blowup", str(exc)
            break
        except TimeoutError as exc:
            series.status, series.message = "wall_budget_exceeded", str(exc)
            break
        state = remesh(state)
        u = state.u
        amps = shell_amplitudes(u, scales.N)
        rec = {
            "grid": u.n,
            "steps": total_steps,
            "energy": 0.5 * sp.l2_norm(u) ** 2,
            "enstrophy": float(np.sum(u.grid.parseval_weight * u.grid.k2 * np.abs(u.coef) ** 2)),
        }
        if np.any(u.coef):
            rec["besov_inf_inf"] = sp.besov_norm(u, -1, math.inf, math.inf)
            rec["besov_inf_1"] = sp.besov_norm(u, -1, math.inf, 1)
        else:
            rec["besov_inf_inf"] = rec["besov_inf_1"] = 0.0
        ep = error_and_perturbation(u, ts, scales, flow, n_max)
        for k, x in enumerate(ep["E"]):
            rec[f"E_grad{k}"] = x
        if "w" in ep:
            for k, x in enumerate(ep["w"]):
                rec[f"w_weighted{k}"] = x
            rec["w_sup"] = ep["w_sup"]
            rec["v_max"] = ep["v_max"]
            rec["w_ratio"] = ep["w_sup"] / ep["v_max"] if ep["v_max"] > 0 else 0.0
        series.add(ts, amps, rec)
        if snapshot_dir is not None and ts in snaps:
            sp.save_snapshot(Path(snapshot_dir) / f"u_t{ts:.6e}.bin", u, ts)
    return series


def run(cfg, table: CoefficientTable | None = None, output=None) -> tuple:
    """Build the construction from ``cfg``, evolve ``u^0`` and write artifacts.

    Returns ``(series, summary)``.  Outputs are deterministic for a fixed
    configuration and thread count (no wall-clock values are written).
    """
    from .construction import assemble_u0, build_coefficients

    scales = cfg.validate()
    if table is None:
        table = build_coefficients(scales)
    flow = PrincipalFlow(table)
    u0, norm_report = assemble_u0(table)
    out = Path(output or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    snap_dir = out / "snapshots" if cfg.snapshot_times else None
    if snap_dir is not None:
        snap_dir.mkdir(exist_ok=True)
    series = evolve(
        u0,
        scales,
        cfg.t_end(scales),
        flow,
        cfl=cfg.cfl,
        dt_max=cfg.dt_max,
        per_decade=cfg.samples_per_decade,
        n_max=cfg.n_max,
        remesh_tol=cfg.remesh_tol,
        min_grid=cfg.min_grid,
        max_wall=cfg.max_wall,
        snapshot_times=cfg.snapshot_times,
        snapshot_dir=snap_dir,
    )
    summary = series.summary()
    summary["checks"] = cascade_checks(series, scales)
    summary["u0_norms"] = norm_report
    summary["scales"] = scales.to_dict()
    summary["coefficients"] = table.report()
    series.write_csv(out / "cascade.csv")
    write_json(out / "summary.json", summary)
    return series, summary


def cascade_checks(series: CascadeSeries, scales: ScaleTable) -> dict:
    """Measured cascade properties used by the acceptance criteria."""
    if not series.times:
        return {}
    t = np.array(series.times)
    amp = np.array(series.shell_amp)
    ks = scales.kstar
    act = series.activation_times()
    e2 = scales.eta_norm**2
    out = {
        "activation_ordered": all(act[k + 1] < act[k] for k in range(ks)),
        "top_shell_max_at_zero": bool(amp[0, ks] >= amp[:, ks].max()),
    }
    late = t >= 1.0 / scales.N[ks] ** 2
    if late.sum() >= 2:
        tail = amp[late, ks]
        out["top_shell_decays"] = bool(np.all(np.diff(tail) <= 1e-12 * tail[0]) and tail[-1] < tail[0])
    k0 = int(np.argmax(amp[:, 0]))
    peak0 = float(amp[k0, 0])
    ref = scales.theta_norm * math.exp(-1.0)
    out["shell0_peak_time"] = float(t[k0])
    out["shell0_peak"] = peak0
    out["shell0_peak_reference"] = ref
    out["shell0_peak_in_window"] = bool(0.25 / e2 <= t[k0] <= 4.0 / e2)
    out["shell0_peak_within_factor4"] = bool(ref / 4 <= peak0 <= 4 * ref)
    recs = series.records
    if recs and "w_ratio" in recs[0]:
        horizon = 2.0 / scales.N[0] ** 2
        ratios = [r["w_ratio"] for ti, r in zip(t, recs) if 0 < ti <= horizon * (1 + 1e-12)]
        out["w_zero_at_start"] = recs[0]["w_sup"] if t[0] == 0 else None
        out["w_ratio_max"] = max(ratios) if ratios else None
    return out


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x
