"""Rank-one (Nash) decomposition and Mikado flow geometry on the 3-torus.

All directions, positions and decomposition coefficients are exact
rationals.  Floating point only enters when a distance involves pi or a
square root, or when a field is sampled.

Symmetric 3x3 matrices are stored as 6-vectors in the order
``(11, 12, 13, 22, 23, 33)``; matrix norms are entry-wise maxima.
"""
from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import integrate, optimize, special

__all__ = [
    "SYM_INDEX",
    "NashSystem",
    "MikadoFamily",
    "MikadoProfile",
    "DomainError",
    "InfeasibleNormalizationError",
    "nash_directions",
    "nash_decompose",
    "mikado_family",
    "mikado_line_distance",
    "line_distance_exact",
    "distance_matrix",
    "mikado_profile",
    "sym_to_matrix",
    "matrix_to_sym",
    "REFERENCE_LINE_DISTANCES",
]

SYM_INDEX = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))

#: Radius of the ball around the identity on which the decomposition holds.
NASH_RADIUS = Fraction(1, 7)

_F = Fraction
_THETA = (
    (_F(4, 5), _F(0), _F(3, 5)),
    (_F(0), _F(-3, 5), _F(4, 5)),
    (_F(0), _F(4, 5), _F(3, 5)),
    (_F(3, 5), _F(0), _F(-4, 5)),
    (_F(3, 5), _F(4, 5), _F(0)),
    (_F(-4, 5), _F(3, 5), _F(0)),
)

_POSITIONS = (
    (_F(21, 100), _F(26, 25), _F(47, 50)),
    (_F(37, 50), _F(467, 100), _F(357, 100)),
    (_F(7, 5), _F(126, 25), _F(91, 100)),
    (_F(393, 100), _F(104, 25), _F(341, 100)),
    (_F(3, 4), _F(617, 100), _F(153, 25)),
    (_F(261, 100), _F(307, 50), _F(339, 100)),
)

#: Closed forms ``(r, s, q)`` of the pairwise line distances for the
#: hard-coded positions; the distance is ``(r + s*pi) / sqrt(q)``.
#: Pairs (2,4), (2,6) and (4,6) attain their minimum at lattice shifts with
#: negative components, so a scan over non-negative shifts overestimates them.
REFERENCE_LINE_DISTANCES = {
    (1, 2): (_F(-8487, 100), _F(28), _F(481)),
    (1, 3): (_F(1569, 100), _F(-4), _F(34)),
    (1, 4): (_F(78, 25), _F(0), _F(1)),
    (1, 5): (_F(-12257, 100), _F(40), _F(481)),
    (1, 6): (_F(-89, 5), _F(6), _F(41)),
    (2, 3): (_F(33, 50), _F(0), _F(1)),
    (2, 4): (_F(-256, 25), _F(4), _F(41)),
    (2, 5): (_F(4079, 100), _F(-12), _F(481)),
    (2, 6): (_F(-219, 20), _F(4), _F(34)),
    (3, 4): (_F(392, 5), _F(-24), _F(481)),
    (3, 5): (_F(297, 20), _F(-4), _F(41)),
    (3, 6): (_F(1559, 100), _F(-4), _F(481)),
    (4, 5): (_F(-531, 50), _F(4), _F(34)),
    (4, 6): (_F(783, 50), _F(-4), _F(481)),
    (5, 6): (_F(273, 100), _F(0), _F(1)),
}


class DomainError(ValueError):
    """A matrix argument lies outside the ball where the decomposition holds."""


class InfeasibleNormalizationError(ValueError):
    """No plateau fraction in (0, 1] attains the requested L2 normalization."""


def sym_to_matrix(s):
    """Expand ``(..., 6)`` symmetric storage to ``(..., 3, 3)``."""
    s = np.asarray(s)
    out = np.empty(s.shape[:-1] + (3, 3), dtype=s.dtype)
    for c, (i, j) in enumerate(SYM_INDEX):
        out[..., i, j] = s[..., c]
        out[..., j, i] = s[..., c]
    return out


def matrix_to_sym(m):
    m = np.asarray(m)
    return np.stack([m[..., i, j] for i, j in SYM_INDEX], axis=-1)


def _cross(a, b):
    return (
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    )


def _dot(a, b):
    return sum(x * y for x, y in zip(a, b))


@dataclass(frozen=True)
class NashSystem:
    """The six rational directions and the exact linear-response table.

    ``b[j][c]`` is the coefficient of the symmetric entry ``SYM_INDEX[c]``
    of the perturbation in ``Gamma_j(Id + eps)**2`` (0-based ``j``).
    """

    theta: tuple
    b: tuple
    eta_axis: tuple

    @property
    def theta_array(self) -> np.ndarray:
        return np.array([[float(x) for x in t] for t in self.theta])

    @property
    def eta_array(self) -> np.ndarray:
        return np.eye(3)[list(self.eta_axis)]

    @functools.cached_property
    def response_matrix(self) -> np.ndarray:
        """Float copy of ``b`` as a (6, 6) array mapping sym6 -> Gamma^2."""
        return np.array([[float(x) for x in row] for row in self.b])

    def outer_sum(self, weights=None):
        """Exact ``sum_j w_j theta_j (x) theta_j`` as sym6 Fractions."""
        if weights is None:
            weights = [Fraction(1)] * 6
        return tuple(
            sum(w * t[i] * t[j] for w, t in zip(weights, self.theta))
            for i, j in SYM_INDEX
        )


@functools.lru_cache(maxsize=None)
def nash_directions() -> NashSystem:
    """Return the six directions and the exact response table ``b_{jkl}``."""
    import sympy

    # column j holds sym6(theta_j theta_j^T); invert exactly
    cols = [[t[i] * t[j] for i, j in SYM_INDEX] for t in _THETA]
    T = sympy.Matrix(6, 6, lambda r, c: sympy.Rational(cols[c][r].numerator, cols[c][r].denominator))
    Tinv = T.inv()
    b = tuple(
        tuple(Fraction(int(Tinv[j, c].p), int(Tinv[j, c].q)) for c in range(6))
        for j in range(6)
    )
    eta_axis = tuple(next(a for a in range(3) if t[a] == 0) for t in _THETA)
    return NashSystem(theta=_THETA, b=b, eta_axis=eta_axis)


def nash_decompose(M, tol: float = 1e-12) -> np.ndarray:
    """Coefficients ``Gamma_j(M)**2`` with ``sum_j Gamma_j^2 theta_j theta_j^T = M``.

    Parameters
    ----------
    M : array_like
        Symmetric matrices, either ``(..., 3, 3)`` or sym6 ``(..., 6)``.
    tol : float
        Slack on the closed ball ``||M - Id||_max <= 1/7``.  The boundary is
        admitted because the induction evaluates the argument exactly at the
        point where its sup norm is attained.

    Returns
    -------
    ndarray of shape ``(..., 6)``
    """
    M = np.asarray(M, dtype=float)
    if M.shape[-2:] == (3, 3):
        M = matrix_to_sym(M)
    eps = M - np.array([1.0, 0, 0, 1.0, 0, 1.0])
    dev = float(np.max(np.abs(eps))) if eps.size else 0.0
    if dev > float(NASH_RADIUS) * (1 + tol):
        raise DomainError(
            f"||M - Id||_max = {dev:.6g} exceeds the admissible radius 1/7"
        )
    R = nash_directions().response_matrix
    return 0.5 + eps @ R.T


# --------------------------------------------------------------------------
# Mikado lines


def _line_integer_direction(theta):
    v = tuple(int(5 * x) for x in theta)
    g = math.gcd(*v)
    return tuple(x // g for x in v)


def line_distance_exact(j1: int, j2: int):
    """Exact pieces ``(r, s, q)`` of the distance between lines ``j1`` and ``j2``.

    The distance is ``|r + s*pi| / sqrt(q)``; ``j1 == j2`` gives zeros.
    Indices are 1-based.
    """
    if j1 == j2:
        return Fraction(0), Fraction(0), Fraction(1)
    t1 = _line_integer_direction(_THETA[j1 - 1])
    t2 = _line_integer_direction(_THETA[j2 - 1])
    c = _cross(t1, t2)
    g = math.gcd(*c)
    c = tuple(x // g for x in c)
    q = _dot(c, c)
    d = [a - b for a, b in zip(_POSITIONS[j1 - 1], _POSITIONS[j2 - 1])]
    # reduce each component into the fundamental cell, then scan m in {-2..2}^3
    m0 = [-round(float(x) / (2 * math.pi)) for x in d]
    r = _dot(d, c)
    best = None
    for dm in itertools.product(range(-2, 3), repeat=3):
        m = [a + b for a, b in zip(m0, dm)]
        s = 2 * _dot(m, c)
        val = abs(float(r) + float(s) * math.pi)
        if best is None or val < best[0]:
            best = (val, r, s)
    _, r, s = best
    if float(r) + float(s) * math.pi < 0:
        r, s = -r, -s
    return r, s, q


def mikado_line_distance(j1: int, j2: int) -> float:
    """Torus distance between the periodic Mikado lines ``j1`` and ``j2`` (1-based)."""
    r, s, q = line_distance_exact(j1, j2)
    return abs(float(r) + float(s) * math.pi) / math.sqrt(q)


def distance_matrix() -> np.ndarray:
    D = np.zeros((6, 6))
    for a in range(1, 7):
        for b in range(a + 1, 7):
            D[a - 1, b - 1] = D[b - 1, a - 1] = mikado_line_distance(a, b)
    return D


# --------------------------------------------------------------------------
# Profiles


def _smooth_step(tau):
    """C-infinity step: 0 for tau <= 0, 1 for tau >= 1."""
    tau = np.clip(np.asarray(tau, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        f0 = np.where(tau > 0, np.exp(-1.0 / np.where(tau > 0, tau, 1.0)), 0.0)
        f1 = np.where(tau < 1, np.exp(-1.0 / np.where(tau < 1, 1 - tau, 1.0)), 0.0)
    return f0 / (f0 + f1)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(400)


@dataclass(frozen=True)
class MikadoProfile:
    """Radial plateau profile around the periodic line of Mikado flow ``j``.

    ``chi(r) = 1`` for ``r <= (1 - s) * delta0`` and decreases smoothly to
    zero at ``r = delta0``.
    """

    j: int
    delta0: float
    eps0: float
    plateau: float  # transition fraction s
    theta: np.ndarray = field(repr=False)
    eta: np.ndarray = field(repr=False)
    position: np.ndarray = field(repr=False)

    @property
    def line_length(self) -> float:
        v = _line_integer_direction(_THETA[self.j - 1])
        return 2 * math.pi * math.sqrt(sum(x * x for x in v))

    def radial(self, r):
        r = np.asarray(r, dtype=float)
        tau = (self.delta0 - r) / (self.plateau * self.delta0)
        return _smooth_step(tau)

    def distance(self, x) -> np.ndarray:
        """Periodic distance from points ``x`` (shape ``(..., 3)``) to the line.

        The lattice ``2 pi Z^3`` projected orthogonally to the line is the
        rectangular lattice ``2pi Z x (2pi/L0) Z`` in the frame
        ``(eta, theta x eta)`` with ``L0 = |5 theta|``, so the nearest image is
        found coordinate-wise.
        """
        x = np.asarray(x, dtype=float)
        d = x - self.position
        u = np.cross(self.theta, self.eta)
        L0 = self.line_length / (2 * math.pi)
        p = d @ self.eta
        q = d @ u
        p = p - 2 * math.pi * np.round(p / (2 * math.pi))
        per = 2 * math.pi / L0
        q = q - per * np.round(q / per)
        return np.hypot(p, q)

    def __call__(self, x):
        return self.radial(self.distance(x))

    def cross_section_l2(self) -> float:
        """``2 pi int chi(r)^2 r dr`` over the cross-section."""
        return _cross_section_l2(self.delta0, self.plateau)

    def l2_squared(self) -> float:
        """Plain Lebesgue integral of ``phi^2`` over one period cell."""
        return self.line_length * self.cross_section_l2()

    def hankel(self, k):
        """2D Fourier transform ``2 pi int chi(r) J0(k r) r dr`` of the radial profile."""
        k = np.asarray(k, dtype=float)
        R = (1 - self.plateau) * self.delta0
        with np.errstate(invalid="ignore", divide="ignore"):
            plateau = np.where(k > 0, 2 * math.pi * R * special.j1(k * R) / np.where(k > 0, k, 1.0), math.pi * R**2)
        a, b = R, self.delta0
        r = 0.5 * (b - a) * _GL_NODES + 0.5 * (b + a)
        w = 0.5 * (b - a) * _GL_WEIGHTS
        chi = self.radial(r)
        ramp = 2 * math.pi * (special.j0(np.multiply.outer(k, r)) @ (w * chi * r))
        return plateau + ramp

    def fourier_coefficient(self, xi) -> np.ndarray:
        """Normalized Fourier coefficients of ``phi`` at integer ``xi`` (``(..., 3)``).

        Only wavevectors orthogonal to the line direction carry weight.
        """
        xi = np.asarray(xi, dtype=float)
        along = xi @ (5 * self.theta)
        kk = np.sqrt(np.sum(xi**2, axis=-1))
        coef = self.hankel(kk) * (self.line_length / (2 * math.pi) ** 3)
        coef = coef * np.exp(-1j * (xi @ self.position))
        return np.where(np.abs(along) < 0.5, coef, 0.0)

    def lattice_modes(self, kmax: float):
        """Integer wavevectors ``xi`` orthogonal to the line with ``|xi|_inf <= kmax``."""
        v = _line_integer_direction(_THETA[self.j - 1])
        e = [0, 0, 0]
        e[int(np.argmax(np.abs(self.eta)))] = 1
        w = _cross(v, e)
        g = math.gcd(*w)
        w = tuple(x // g for x in w)
        amax = int(math.floor(kmax))
        wmin = min(abs(x) for x in w if x != 0)
        bmax = int(math.floor(kmax / wmin))
        al, be = np.meshgrid(np.arange(-amax, amax + 1), np.arange(-bmax, bmax + 1), indexing="ij")
        xi = al[..., None] * np.array(e) + be[..., None] * np.array(w)
        xi = xi.reshape(-1, 3)
        keep = np.all(np.abs(xi) <= kmax, axis=1)
        return xi[keep]


@functools.lru_cache(maxsize=None)
def _cross_section_l2(delta0: float, s: float) -> float:
    R = (1 - s) * delta0

    # ramp written in the step variable tau = (delta0 - r) / (s delta0)
    def integrand(tau):
        return float(_smooth_step(tau)) ** 2 * (delta0 - s * delta0 * tau)

    ramp, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=0, epsrel=1e-12, limit=200)
    return math.pi * R**2 + 2 * math.pi * s * delta0 * ramp


def _solve_plateau(delta0: float, eps0: float) -> float:
    target = math.pi * delta0**2 - eps0 * delta0**2 / (10 * math.pi)

    def f(s):
        return _cross_section_l2(delta0, s) - target

    lo, hi = 1e-12, 1.0
    if f(hi) > 0 or f(lo) < 0:
        raise InfeasibleNormalizationError(
            f"eps0={eps0} cannot be attained by the plateau profile with delta0={delta0}"
        )
    return optimize.brentq(f, lo, hi, xtol=1e-16, rtol=1e-15, maxiter=200)


def mikado_profile(j: int, delta0: float = 1 / 15, eps0: float = 0.5) -> MikadoProfile:
    """Profile ``phi_j`` normalized so that ``int phi_j^2 = (10 pi^2 - eps0) delta0^2``."""
    if not 1 <= j <= 6:
        raise ValueError(f"Mikado index must be in 1..6, got {j}")
    ns = nash_directions()
    s = _solve_plateau(float(delta0), float(eps0))
    return MikadoProfile(
        j=j,
        delta0=float(delta0),
        eps0=float(eps0),
        plateau=s,
        theta=ns.theta_array[j - 1],
        eta=ns.eta_array[j - 1],
        position=np.array([float(x) for x in _POSITIONS[j - 1]]),
    )


@dataclass(frozen=True)
class MikadoFamily:
    """The six Mikado building blocks sharing one radius and normalization."""

    delta0: float
    eps0: float
    profiles: tuple

    @property
    def theta(self) -> np.ndarray:
        return nash_directions().theta_array

    @property
    def eta(self) -> np.ndarray:
        return nash_directions().eta_array

    @property
    def positions(self) -> np.ndarray:
        return np.array([[float(x) for x in p] for p in _POSITIONS])

    def __getitem__(self, j: int) -> MikadoProfile:
        return self.profiles[j - 1]


def mikado_family(delta0: float = 1 / 15, eps0: float = 0.5) -> MikadoFamily:
    return MikadoFamily(
        delta0=float(delta0),
        eps0=float(eps0),
        profiles=tuple(mikado_profile(j, delta0, eps0) for j in range(1, 7)),
    )


def positions_exact():
    return _POSITIONS
