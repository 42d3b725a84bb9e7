"""Scale ladders, coefficient induction and the principal flow.

The principal flow is a finite sum ``v = sum_k v_k`` of Leray-projected
Laplacians of vector potentials ``psi_k``.  Every ``psi_k`` is stored once,
at ``t = 0``; its time dependence is a closed-form product of exponentials.

Fields are band-limited to the dealias band ``max_i |xi_i| <= n // 3`` of the
construction grid, so every product needed by the force residual is exact
under the two-thirds rule.  A Mikado profile ``phi_j(M x)`` is represented
by its Fourier series truncated to that band.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import spectral as sp
from .geometry import (
    SYM_INDEX,
    DomainError,
    MikadoFamily,
    MikadoProfile,
    mikado_family,
    nash_directions,
)
from .spectral import PeriodicField

log = logging.getLogger(__name__)

__all__ = [
    "ConfigError",
    "DegenerateInductionError",
    "ResolutionError",
    "TargetSpec",
    "ScaleTable",
    "CoefficientTable",
    "PrincipalFlow",
    "build_scales",
    "choose_kstar",
    "compute_B",
    "mikado_wave_spectrum",
    "modified_sym_gradient",
    "sym_gradient_identity_residual",
    "build_coefficients",
    "assemble_v",
    "assemble_u0",
    "verify_key_cancellation",
    "coefficient_identity_residual",
    "force_residual",
    "time_factor",
]

_ID6 = np.array([1.0, 0.0, 0.0, 1.0, 0.0, 1.0])


class ConfigError(ValueError):
    """A parameter violates one of the construction's admissibility windows."""


class ResolutionError(ConfigError):
    """The grid cannot represent the requested frequencies."""


class DegenerateInductionError(RuntimeError):
    """The induction met an identically vanishing symmetric gradient."""


# --------------------------------------------------------------------------
# scales


@dataclass(frozen=True)
class TargetSpec:
    """Target shear ``theta_star sin(x . eta_star)`` of the final state."""

    theta_star: tuple
    eta_star: tuple
    eps_star: float = 0.1
    n_max: int = 2

    def __post_init__(self):
        th = np.asarray(self.theta_star, dtype=float)
        et = np.asarray(self.eta_star)
        if th.shape != (3,) or et.shape != (3,):
            raise ConfigError("theta_star and eta_star must be 3-vectors")
        if np.any(et != np.round(et)):
            raise ConfigError(f"eta_star={tuple(et)} must be an integer vector")
        if not np.any(th) or not np.any(et):
            raise ConfigError("theta_star and eta_star must both be non-zero")
        if abs(float(th @ et)) > 1e-12 * np.linalg.norm(th) * np.linalg.norm(et):
            raise ConfigError(
                f"theta_star . eta_star = {float(th @ et):g} violates theta_star . eta_star = 0"
            )

    @property
    def theta(self) -> np.ndarray:
        return np.asarray(self.theta_star, dtype=float)

    @property
    def eta(self) -> np.ndarray:
        return np.asarray(self.eta_star, dtype=int)


def choose_kstar(theta_star, eta_star, growth: float = 1.01) -> int:
    """Smallest ``k >= 1`` with ``(|theta|/|eta|)^(2^-k) <= growth``."""
    ratio = float(np.linalg.norm(theta_star)) / float(np.linalg.norm(eta_star))
    if ratio < 1:
        raise ConfigError(f"|theta_star|/|eta_star| = {ratio:g} violates |theta_star|/|eta_star| >= 1")
    k = 1
    while ratio ** (2.0**-k) > growth:
        k += 1
    return k


def _ceil_guarded(x: float) -> int:
    # pull exact powers such as 2*16**0.5 back below their integer
    return int(math.ceil(x * (1 - 1e-12)))


@dataclass(frozen=True)
class ScaleTable:
    """Frequency, localization, mollification and amplitude ladders.

    ``N[k]`` and ``C[k]`` are indexed ``0..kstar``; ``M[k]`` and ``ell[k]`` use
    the same indices with ``M[0] = 0`` and ``ell[k] = 0`` where no
    mollification is applied (``k = 0`` and ``k = kstar``).
    """

    target: TargetSpec
    b: float
    gamma: float
    A: float
    kstar: int
    eps0: float
    n: int
    N: tuple
    M: tuple
    ell: tuple
    C: tuple

    @property
    def eta_norm(self) -> float:
        return float(np.linalg.norm(self.target.eta))

    @property
    def theta_norm(self) -> float:
        return float(np.linalg.norm(self.target.theta))

    @property
    def ratio(self) -> float:
        return self.theta_norm / self.eta_norm

    @property
    def band(self) -> int:
        """Dealias band of the construction grid."""
        return self.n // 3

    @property
    def c_star(self) -> float:
        et = self.target.eta / self.eta_norm
        th = self.target.theta / self.theta_norm
        return float(np.max(np.abs(0.5 * (np.outer(et, th) + np.outer(th, et)))))

    def decay_rate(self, k: int) -> float:
        """Heat decay rate of the k-th potential."""
        return self.eta_norm**2 if k == 0 else float(self.N[k]) ** 2

    def to_dict(self) -> dict:
        return {
            "theta_star": [float(x) for x in self.target.theta],
            "eta_star": [int(x) for x in self.target.eta],
            "b": self.b,
            "gamma": self.gamma,
            "A": self.A,
            "k_star": self.kstar,
            "epsilon0": self.eps0,
            "n": self.n,
            "N": [int(x) for x in self.N],
            "M": [int(x) for x in self.M],
            "ell": [float(x) for x in self.ell],
            "C": [float(x) for x in self.C],
            "c_star": self.c_star,
        }


def gamma_window(b: float):
    return (b + 1) / (2 * b), (5 - b) / 4


def build_scales(
    target: TargetSpec,
    b: float = 1.5,
    gamma: float = 0.85,
    A: float = 16.0,
    kstar="auto",
    eps0: float = 0.5,
    n: int | None = None,
) -> ScaleTable:
    """Populate the ladders and check every admissibility window.

    ``n`` defaults to the smallest multiple of 8 with ``n >= 4 N[kstar]``.
    ``kstar = 0`` gives the pure-shear family.
    """
    if not 1 < b < 2:
        raise ConfigError(f"b={b} violates 1 < b < 2")
    lo, hi = gamma_window(b)
    if not lo < gamma < hi:
        raise ConfigError(
            f"gamma={gamma} violates (b+1)/(2b) < gamma < (5-b)/4, i.e. {lo:.6g} < gamma < {hi:.6g}"
        )
    if not A > 1:
        raise ConfigError(f"A={A} violates A > 1")
    if not 0 < eps0 < 1:
        raise ConfigError(f"epsilon0={eps0} violates 0 < epsilon0 < 1")
    if kstar == "auto":
        kstar = choose_kstar(target.theta, target.eta)
    kstar = int(kstar)
    if kstar < 0:
        raise ConfigError(f"k_star={kstar} violates k_star >= 0")

    eta = float(np.linalg.norm(target.eta))
    ratio = float(np.linalg.norm(target.theta)) / eta
    N = tuple(_ceil_guarded(eta * A ** (b**k - 1)) for k in range(kstar + 1))
    M = (0,) + tuple(_ceil_guarded(eta * A ** (gamma * b**k - 1)) for k in range(1, kstar + 1))
    ell = tuple(
        N[k] ** -0.75 * N[k + 1] ** -0.25 if 1 <= k <= kstar - 1 else 0.0 for k in range(kstar + 1)
    )
    C = tuple(N[k] * ratio ** (2.0**-k) for k in range(kstar + 1))
    for k in range(1, kstar + 1):
        if not M[k] < N[k]:
            raise ConfigError(f"M_{k}={M[k]} violates M_k < N_k (N_{k}={N[k]}); increase A")
    if n is None:
        n = 8 * math.ceil(4 * N[kstar] / 8)
    n = int(n)
    if n < 4 * N[kstar]:
        raise ResolutionError(
            f"grid n={n} violates n >= 4 N_k* = {4 * N[kstar]} (N_{kstar}={N[kstar]})"
        )
    if n % 2:
        raise ConfigError(f"grid n={n} must be even")
    if np.max(np.abs(target.eta)) > n // 3:
        raise ResolutionError(f"eta_star does not fit the dealias band n/3 of an n={n} grid")
    return ScaleTable(target, float(b), float(gamma), float(A), kstar, float(eps0), n, N, M, ell, C)


# --------------------------------------------------------------------------
# building blocks


def _place_modes(n: int, zeta: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Scatter-add mode values at integer wavevectors into half-spectrum layout.

    Only ``zeta_z >= 0`` entries are written; callers supply a conjugate-
    symmetric mode set, so the dropped half is implied.
    """
    out = np.zeros((n, n, n // 2 + 1), dtype=np.complex128)
    keep = zeta[:, 2] >= 0
    z = zeta[keep]
    np.add.at(out, (z[:, 0] % n, z[:, 1] % n, z[:, 2]), values[keep])
    return out


def mikado_wave_spectrum(profile: MikadoProfile, M: int, N: int, n: int, band: int) -> np.ndarray:
    """Coefficients of ``phi_j(M x) sin(N eta_j . x)`` truncated to ``band``.

    Returns an ``(n, n, n//2+1)`` complex array.
    """
    eta = np.rint(profile.eta).astype(int)
    xi = profile.lattice_modes((band + N) / M)
    if xi.size == 0:
        return np.zeros((n, n, n // 2 + 1), dtype=np.complex128)
    c = profile.fourier_coefficient(xi)
    zeta_p = M * xi + N * eta
    zeta_m = M * xi - N * eta
    zeta = np.concatenate([zeta_p, zeta_m])
    vals = np.concatenate([-0.5j * c, 0.5j * c])
    inside = np.max(np.abs(zeta), axis=1) <= band
    return _place_modes(n, zeta[inside], vals[inside])


def compute_B(j: int, k: int, scales: ScaleTable, family: MikadoFamily | None = None) -> float:
    """Mean square of the band-limited ``Psi_{j,k}(., 0)`` via Parseval."""
    if k < 1:
        raise ValueError("B_{j,k} is defined for k >= 1")
    family = family or mikado_family(eps0=scales.eps0)
    c = mikado_wave_spectrum(family[j], scales.M[k], scales.N[k], scales.n, scales.band)
    return sp.l2_norm(PeriodicField(c)) ** 2


def _sym_gradient_component(f: PeriodicField, c: int, div=None) -> np.ndarray:
    kd = f.grid.kd
    i, j = SYM_INDEX[c]
    out = 0.5j * (kd[j] * f.coef[i] + kd[i] * f.coef[j])
    if i == j:
        if div is None:
            div = 1j * (kd[0] * f.coef[0] + kd[1] * f.coef[1] + kd[2] * f.coef[2])
        out -= div
    return out


def modified_sym_gradient(f: PeriodicField) -> PeriodicField:
    """``sym grad f - (div f) Id`` as a six-component tensor field."""
    if f.ncomp != 3:
        raise ValueError("modified_sym_gradient expects a vector field")
    kd = f.grid.kd
    div = 1j * (kd[0] * f.coef[0] + kd[1] * f.coef[1] + kd[2] * f.coef[2])
    return PeriodicField(np.stack([_sym_gradient_component(f, c, div) for c in range(6)]))


def _sym_gradient_physical(f: PeriodicField, with_norm: bool = False):
    """Grid values of ``D f`` and optionally its refined entry-wise sup norm."""
    n = f.n
    kd = f.grid.kd
    div = 1j * (kd[0] * f.coef[0] + kd[1] * f.coef[1] + kd[2] * f.coef[2])
    out = np.empty((6, n, n, n))
    norm = 0.0
    for c in range(6):
        comp = PeriodicField(_sym_gradient_component(f, c, div)[None])
        if with_norm:
            norm = max(norm, sp.sup_norm(comp))
        out[c] = comp.physical()[0]
    return (out, norm) if with_norm else out


def sym_gradient_identity_residual(f: PeriodicField) -> float:
    """``||div D f - 1/2 P Lap f||_inf``."""
    lhs = sp.tensor_divergence(modified_sym_gradient(f))
    rhs = sp.leray_project(sp.laplacian(f)) * 0.5
    return sp.sup_norm(lhs - rhs)


def _sym_outer(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return np.array([v[i] * v[j] for i, j in SYM_INDEX])


# --------------------------------------------------------------------------
# coefficient induction


@dataclass
class CoefficientTable:
    """Outputs of the coefficient induction.

    Attributes
    ----------
    psi0 : list of PeriodicField
        Potentials at ``t = 0``, each stored on the smallest even grid that
        holds the dealias band.
    Dnorm : list of float
        ``||D psi_k^0||_inf`` (max of the refined sup and the grid max).
    p : list of float
        Isotropic constants, index ``k``; ``p[0]`` is unused.
    B : ndarray, shape ``(kstar + 1, 6)``
        Mean squares of the band-limited oscillatory profiles; row 0 unused.
    """

    scales: ScaleTable
    family: MikadoFamily
    psi0: list
    Dnorm: list
    p: list
    B: np.ndarray
    a_range: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    _dcache: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.scales.n

    @property
    def kstar(self) -> int:
        return self.scales.kstar

    def psi(self, k: int) -> PeriodicField:
        """``psi_k^0`` on the construction grid."""
        return sp.resample(self.psi0[k], self.n)

    def D_physical(self, k: int) -> np.ndarray:
        """Grid values of ``D psi_k^0``, shape ``(6, n, n, n)``."""
        return _d_physical(self, k)

    def gamma_squared(self, j: int, k: int, D: np.ndarray | None = None) -> np.ndarray:
        """Grid values of ``Gamma_j(Id - D psi_{k-1}^0 / (7 ||D psi_{k-1}^0||))^2``."""
        if D is None:
            D = self.D_physical(k - 1)
        row = nash_directions().response_matrix[j - 1]
        scale = -1.0 / (7.0 * self.Dnorm[k - 1])
        out = np.full(D.shape[1:], 0.5)
        tmp = np.empty_like(out)
        for c in range(6):
            if row[c] != 0:
                np.multiply(D[c], row[c] * scale, out=tmp)
                out += tmp
        return out

    def coefficient_field(self, j: int, k: int, D: np.ndarray | None = None) -> np.ndarray:
        """Grid values of ``a_{j,k}`` (constant array for ``k = 0``)."""
        if k == 0:
            val = -(self.scales.N[0] / self.scales.eta_norm) * (j == 1)
            return np.full((self.n,) * 3, float(val))
        a = self.gamma_squared(j, k, D)
        np.sqrt(a, out=a)
        a *= np.sqrt(self.p[k] / self.B[k, j - 1])
        return a

    def wave_physical(self, j: int, k: int) -> np.ndarray:
        """Grid values of the band-limited ``Psi_{j,k}(., 0)``."""
        s = self.scales
        c = mikado_wave_spectrum(self.family[j], s.M[k], s.N[k], s.n, s.band)
        return PeriodicField(c).physical()[0]

    def report(self) -> dict:
        s = self.scales
        out = {
            "Dpsi_norm": list(self.Dnorm),
            "N_Dpsi_norm": [s.N[k] * self.Dnorm[k] for k in range(s.kstar + 1)],
            "p": list(self.p),
            "B": self.B[1:].tolist(),
            "B_reference": 1.0 / (360.0 * math.pi),
            "a_range": self.a_range,
            "warnings": list(self.warnings),
        }
        return out


def _d_physical(table: CoefficientTable, k: int) -> np.ndarray:
    # keep only the most recent stage; one tensor field is large at n = 256
    cache = table._dcache
    if k not in cache:
        cache.clear()
        cache[k] = _sym_gradient_physical(table.psi(k))
    return cache[k]


def _psi_zero(scales: ScaleTable) -> PeriodicField:
    """``psi_0^0 = -sin(x . eta_*) theta_hat / (N_0 |eta_*|)``."""
    n = scales.n
    eta = scales.target.eta
    th = scales.target.theta / scales.theta_norm
    amp = -1.0 / (scales.N[0] * scales.eta_norm)
    zeta = np.array([eta, -eta])
    coef = np.empty((3, n, n, n // 2 + 1), dtype=np.complex128)
    for a in range(3):
        coef[a] = _place_modes(n, zeta, np.array([-0.5j, 0.5j]) * amp * th[a])
    return PeriodicField(coef)


def _compact_size(band: int) -> int:
    return 2 * band + 2


def _grid_max(D: np.ndarray) -> float:
    return float(np.max(np.abs(D)))


def build_coefficients(
    scales: ScaleTable,
    family: MikadoFamily | None = None,
    a_window=(1.0, 32000.0),
    strict_domain: bool = True,
) -> CoefficientTable:
    """Run the coefficient induction for ``k = 1..kstar``.

    Each stage evaluates ``D psi_{k-1}^0`` on the grid, the six ``Gamma_j``
    fields, the coefficients ``a_{j,k}`` and then ``psi_k^0``.  Window bounds
    (``a_{j,k}`` range, ``N_k ||D psi_k^0||``) only warn; the decomposition
    domain is a hard requirement.
    """
    family = family or mikado_family(eps0=scales.eps0)
    n, band, kstar = scales.n, scales.band, scales.kstar
    m = _compact_size(band)
    psi = _psi_zero(scales)
    table = CoefficientTable(
        scales=scales,
        family=family,
        psi0=[sp.resample(psi, m)],
        Dnorm=[],
        p=[0.0],
        B=np.zeros((kstar + 1, 6)),
    )
    theta = family.theta
    for k in range(0, kstar + 1):
        D, Dn = _sym_gradient_physical(psi, with_norm=True)
        Dn = max(Dn, _grid_max(D))
        table.Dnorm.append(Dn)
        lo = scales.c_star ** (2.0**-k)
        hi = 31669.0 ** (1 - 2.0**-k)
        val = scales.N[k] * Dn
        if not lo <= val <= hi * (1 + 1e-12):
            table.warnings.append(
                f"N_{k} ||D psi_{k}|| = {val:.6g} outside [{lo:.6g}, {hi:.6g}]"
            )
        if k == kstar:
            break
        kk = k + 1
        if Dn == 0:
            raise DegenerateInductionError(f"D psi_{k}^0 vanishes identically; cannot build a_j,{kk}")
        worst = _grid_max(D) / (7 * Dn)
        if strict_domain and worst > (1 / 7) * (1 + 1e-12):
            raise DomainError(
                f"stage k={kk}: ||Id - M||_max = {worst:.6g} exceeds 1/7; try a larger A"
            )
        pk = 28.0 * scales.N[k] * Dn
        table.p.append(pk)
        acc = np.zeros((3, n, n, n))
        amin, amax = math.inf, -math.inf
        for j in range(1, 7):
            c = mikado_wave_spectrum(family[j], scales.M[kk], scales.N[kk], n, band)
            Bjk = sp.l2_norm(PeriodicField(c)) ** 2
            table.B[kk, j - 1] = Bjk
            wave = PeriodicField(c).physical()[0]
            del c
            a = table.coefficient_field(j, kk, D)
            amin, amax = min(amin, float(a.min())), max(amax, float(a.max()))
            a *= wave
            del wave
            for d in range(3):
                if theta[j - 1, d] != 0:
                    acc[d] += theta[j - 1, d] * a
            del a
        table.a_range.append([amin, amax])
        if amin < a_window[0] or amax > a_window[1]:
            table.warnings.append(
                f"a_j,{kk} range [{amin:.6g}, {amax:.6g}] outside [{a_window[0]:g}, {a_window[1]:g}]"
            )
        del D
        psi = sp.band_project(PeriodicField.from_physical(acc), band)
        del acc
        if 1 <= kk <= kstar - 1:
            psi = sp.mollify(psi, scales.ell[kk])
        psi = psi * (1.0 / scales.N[kk] ** 2)
        table.psi0.append(sp.resample(psi, m))
    for w in table.warnings:
        log.warning(w)
    return table


def coefficient_identity_residual(table: CoefficientTable, k: int) -> dict:
    """Pointwise residual of ``sum_j B a^2 theta theta + 4 N_{k-1} D psi_{k-1} - p_k Id``.

    Returns the max-entry residual relative to ``4 N_{k-1} ||D psi_{k-1}||``,
    together with ``p_k`` re-extracted as the mean of one third of the trace.
    """
    if not 1 <= k <= table.kstar:
        raise ValueError(f"k must be in 1..{table.kstar}")
    s = table.scales
    D = table.D_physical(k - 1)
    theta = table.family.theta
    weighted = []
    for j in range(1, 7):
        a = table.coefficient_field(j, k, D)
        a *= a
        a *= table.B[k, j - 1]
        weighted.append(a)
    worst = 0.0
    trace_mean = 0.0
    for c, (i, l) in enumerate(SYM_INDEX):
        lhs = D[c] * (4.0 * s.N[k - 1])
        for j in range(6):
            w = theta[j, i] * theta[j, l]
            if w != 0:
                lhs += w * weighted[j]
        if i == l:
            trace_mean += float(lhs.mean()) / 3.0
            lhs -= table.p[k]
        worst = max(worst, float(np.max(np.abs(lhs))))
    scale = 4.0 * s.N[k - 1] * table.Dnorm[k - 1]
    return {
        "k": k,
        "residual": worst / scale,
        "p": table.p[k],
        "p_extracted": trace_mean,
    }


# --------------------------------------------------------------------------
# principal flow


def time_factor(scales: ScaleTable, k: int, t: float):
    """Amplitude ``s_k(t)`` with ``v_k = s_k(t) P Lap psi_k^0`` and its derivative."""
    C = scales.C[k]
    lam = scales.decay_rate(k)
    decay = math.exp(-lam * t)
    if k == scales.kstar:
        return C * decay, -lam * C * decay
    mu = 2.0 * scales.N[k + 1] ** 2
    act = -math.expm1(-mu * t)
    s = C * act * decay
    ds = C * (mu * math.exp(-mu * t) * decay - lam * act * decay)
    return s, ds


def _plap(psi: PeriodicField) -> PeriodicField:
    """``P Lap psi`` computed in place on a private copy."""
    g = psi.grid
    c = psi.coef * (-g.k2)
    kd = g.kd
    proj = kd[0] * c[0]
    proj += kd[1] * c[1]
    proj += kd[2] * c[2]
    proj *= g.kd2_inv
    for a in range(3):
        c[a] -= kd[a] * proj
    return PeriodicField(c)


class PrincipalFlow:
    """Evaluator of ``v(., t)``, its components and the force residual."""

    def __init__(self, table: CoefficientTable):
        self.table = table
        self.scales = table.scales

    @property
    def n(self) -> int:
        return self.scales.n

    def component(self, k: int, t: float) -> PeriodicField:
        if t < 0:
            raise ValueError(f"time must be non-negative, got {t}")
        s, _ = time_factor(self.scales, k, t)
        return _plap(self.table.psi(k)) * s

    def velocity(self, t: float, k="all") -> PeriodicField:
        if t < 0:
            raise ValueError(f"time must be non-negative, got {t}")
        if k != "all":
            return self.component(int(k), t)
        out = PeriodicField.zeros(self.n, 3)
        for kk in range(self.scales.kstar + 1):
            s, _ = time_factor(self.scales, kk, t)
            if s != 0:
                pl = _plap(self.table.psi(kk)).coef
                pl *= s
                out.coef += pl
                del pl
        return out

    def heat_residual(self, t: float) -> PeriodicField:
        """``d_t v - Lap v`` from the analytic time factors."""
        out = PeriodicField.zeros(self.n, 3)
        k2 = sp.get_grid(self.n).k2
        for kk in range(self.scales.kstar + 1):
            s, ds = time_factor(self.scales, kk, t)
            pl = _plap(self.table.psi(kk)).coef
            pl *= ds + k2 * s
            out.coef += pl
            del pl
        return out

    def principal_part(self, k: int, t: float) -> PeriodicField:
        """``v_k^p = -C_k sum_j a_{j,k} Psi_{j,k} theta_j`` (``theta_j -> theta_hat`` at ``k = 0``)."""
        s = self.scales
        tab = self.table
        decay = math.exp(-s.decay_rate(k) * t)
        if k == 0:
            # a_{j,0} Psi_{j,0} collapses to the single target shear
            psi = tab.psi(0)
            return psi * (-s.C[0] * s.N[0] ** 2 * decay)
        D = tab.D_physical(k - 1)
        acc = np.zeros((3, self.n, self.n, self.n))
        for j in range(1, 7):
            prod = tab.coefficient_field(j, k, D) * tab.wave_physical(j, k)
            for d in range(3):
                acc[d] += tab.family.theta[j - 1, d] * prod
        return PeriodicField.from_physical(acc) * (-s.C[k] * decay)

    def split(self, k: int, t: float):
        """``(v_k^p, v_k^e)`` with ``v_k = v_k^p + v_k^e``."""
        vp = self.principal_part(k, t)
        return vp, self.component(k, t) - vp


def assemble_v(table: CoefficientTable, t: float, which="all") -> PeriodicField:
    return PrincipalFlow(table).velocity(t, which)


def assemble_u0(table: CoefficientTable, shell_window=None) -> tuple:
    """``u^0 = v(., 0)`` and its norm report.

    The report lists ``||P_N u0||_inf`` per dyadic shell, the critical Besov
    norm and the off-shell leakage, i.e. the largest shell amplitude outside
    ``(N_k*/2, 2 N_k*)`` relative to the largest amplitude overall.
    """
    s = table.scales
    u0 = assemble_v(table, 0.0)
    shells = sp.lp_shells(u0.n)
    amps = sp.shell_norms(u0, math.inf)
    Nk = s.N[s.kstar]
    lo, hi = shell_window or (Nk / 2, 2 * Nk)
    peak = max(amps) if amps else 0.0
    off = [a for N, a in zip(shells, amps) if not lo < N < hi]
    besov = sum(a / N for N, a in zip(shells, amps))
    report = {
        "besov_B-1_inf_1": besov,
        "besov_B-1_inf_inf": max(a / N for N, a in zip(shells, amps)),
        "besov_B-1_inf_2": math.sqrt(sum((a / N) ** 2 for N, a in zip(shells, amps))),
        "shells": shells,
        "shell_sup": amps,
        "peak_shell_sup": peak,
        "leakage": (max(off) / peak) if off and peak > 0 else 0.0,
        "mid_frequency_bound": 33000.0 * s.C[s.kstar],
        "mean": [float(x) for x in u0.mean()],
        "max_divergence_symbol": float(np.max(np.abs(sp.divergence(u0).coef))),
        "sup": sp.sup_norm(u0),
    }
    return u0, report


def verify_key_cancellation(table: CoefficientTable, k: int, t: float = 0.0) -> dict:
    """Compare ``P div R_{k+1}^low`` against ``-2 C_{k+1}^2 N_k P Lap psi_k^0`` at time ``t``.

    ``R^low`` is assembled from the grid values of ``a_{j,k+1}`` and ``B``.
    """
    s = table.scales
    if not 0 <= k < s.kstar:
        raise ValueError(f"key cancellation needs 0 <= k < k_star = {s.kstar}, got {k}")
    kk = k + 1
    n = s.n
    D = table.D_physical(k)
    theta = table.family.theta
    fac = s.C[kk] ** 2 * math.exp(-2.0 * s.N[kk] ** 2 * t)
    R = np.zeros((6, n, n, n))
    for j in range(6):
        w = _sym_outer(theta[j])
        a = table.coefficient_field(j + 1, kk, D)
        a *= a
        a *= fac * table.B[kk, j]
        for c in range(6):
            if w[c] != 0:
                R[c] += w[c] * a
        del a
    del D
    table._dcache.clear()
    kd = sp.get_grid(n).kd
    div = np.zeros((3,) + sp.get_grid(n).shape, dtype=np.complex128)
    for c, (i, l) in enumerate(SYM_INDEX):
        rc = PeriodicField.from_physical(R[c]).coef[0]
        div[i] += 1j * kd[l] * rc
        if i != l:
            div[l] += 1j * kd[i] * rc
    del R
    lhs = sp.leray_project(PeriodicField(div))
    del div
    rhs = _plap(table.psi(k)) * (-2.0 * s.C[kk] ** 2 * s.N[k] * math.exp(-2.0 * s.N[kk] ** 2 * t))
    ref = sp.sup_norm(rhs)
    lhs.coef -= rhs.coef
    # round-off fills the whole spectrum; compare on the construction grid
    res = sp.sup_norm(lhs, refine=1)
    return {"k": k, "t": t, "residual": res / ref if ref > 0 else res, "scale": ref}


def force_residual(flow: PrincipalFlow, t: float, alias_tol: float = 1e-10):
    """``g = d_t v - Lap v + P div(v (x) v)`` and its size relative to the nonlinearity."""
    v = flow.velocity(t)
    if sp.tail_fraction(v, v.n / 3) > alias_tol:
        raise ResolutionError("principal flow carries energy above the dealias cutoff")
    nl, _ = sp.advection(v)
    del v
    g = flow.heat_residual(t)
    g.coef += nl.coef
    gn = sp.sup_norm(g)
    nn = sp.sup_norm(nl)
    return g, {"t": t, "g_sup": gn, "nonlinear_sup": nn, "ratio": gn / nn if nn > 0 else gn}


def force_bound_profile(scales: ScaleTable, t: float, alpha: float, beta: float) -> float:
    """Shape ``A^-beta (N0^2 t)^(alpha/2+beta) exp(-N0^2 t) t^-(2+alpha)/2`` of the force bound."""
    x = scales.N[0] ** 2 * t
    return scales.A ** -beta * x ** (alpha / 2 + beta) * math.exp(-x) * t ** (-(2 + alpha) / 2)


def default_diagnostic_exponent(b: float, gamma: float) -> float:
    return min((b - 1) / 16, (gamma * b - 1) / 4)
