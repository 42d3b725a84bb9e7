"""Fourier representation of periodic fields on the torus [0, 2pi)^3.

Coefficients follow the averaged convention ``u_hat(xi) = mean(u exp(-i xi.x))``
and are stored in the half-spectrum layout of a real FFT, with shape
``(ncomp, n, n, n // 2 + 1)``.  Scalars have one component, vectors three
and symmetric tensors six (order ``11, 12, 13, 22, 23, 33``).

Derivative symbols use the signed wavenumber with the Nyquist entry set to
zero, so that every first-order operator is consistent with its discrete
adjoint.  Magnitudes ``|xi|`` in radial symbols use the true wavenumber.
"""
from __future__ import annotations

import functools
import math
import struct
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .geometry import SYM_INDEX, _smooth_step

__all__ = [
    "Grid",
    "PeriodicField",
    "get_grid",
    "set_threads",
    "gradient",
    "divergence",
    "tensor_divergence",
    "laplacian",
    "leray_project",
    "heat_propagate",
    "mollify",
    "anti_divergence",
    "dealias",
    "advection",
    "band_project",
    "lp_low_symbol",
    "lp_shell_symbol",
    "lp_shells",
    "lp_project",
    "besov_norm",
    "l2_norm",
    "sup_norm",
    "resample",
    "tail_fraction",
    "shell_norms",
    "save_snapshot",
    "load_snapshot",
    "PreconditionError",
]

_WORKERS = 1


def set_threads(n: int) -> None:
    """Number of FFT worker threads used by every transform in this process."""
    global _WORKERS
    _WORKERS = max(1, int(n))


class PreconditionError(ValueError):
    """Raised when an operator's input violates a documented precondition."""


@dataclass(frozen=True, eq=False)
class Grid:
    """Wavenumber tables for an ``n^3`` grid in half-spectrum layout."""

    n: int

    @functools.cached_property
    def _freqs(self):
        n = self.n
        full = np.fft.fftfreq(n, 1.0 / n)
        half = np.arange(n // 2 + 1, dtype=float)
        return full, half

    @functools.cached_property
    def k(self):
        """True wavenumbers, broadcastable to the coefficient shape."""
        full, half = self._freqs
        return (full[:, None, None], full[None, :, None], half[None, None, :])

    @functools.cached_property
    def kd(self):
        """Derivative wavenumbers (Nyquist entries zeroed)."""
        full, half = self._freqs
        fd, hd = full.copy(), half.copy()
        if self.n % 2 == 0:
            fd[self.n // 2] = 0.0
            hd[-1] = 0.0
        return (fd[:, None, None], fd[None, :, None], hd[None, None, :])

    @functools.cached_property
    def k2(self) -> np.ndarray:
        kx, ky, kz = self.k
        return kx**2 + ky**2 + kz**2

    @functools.cached_property
    def kmag(self) -> np.ndarray:
        return np.sqrt(self.k2)

    @functools.cached_property
    def kd2(self) -> np.ndarray:
        kx, ky, kz = self.kd
        return kx**2 + ky**2 + kz**2

    @functools.cached_property
    def kd2_inv(self) -> np.ndarray:
        k2 = self.kd2
        with np.errstate(divide="ignore"):
            out = np.where(k2 > 0, 1.0 / np.where(k2 > 0, k2, 1.0), 0.0)
        return out

    @functools.cached_property
    def kinf(self) -> np.ndarray:
        kx, ky, kz = self.k
        return np.maximum(np.maximum(np.abs(kx), np.abs(ky)), np.abs(kz))

    @functools.cached_property
    def parseval_weight(self) -> np.ndarray:
        """Multiplicity of each half-spectrum column in the full spectrum."""
        w = np.full(self.n // 2 + 1, 2.0)
        w[0] = 1.0
        if self.n % 2 == 0:
            w[-1] = 1.0
        return w[None, None, :]

    @property
    def shape(self):
        return (self.n, self.n, self.n // 2 + 1)

    def points(self):
        x = 2 * np.pi * np.arange(self.n) / self.n
        return np.meshgrid(x, x, x, indexing="ij")

    def dealias_mask(self) -> np.ndarray:
        return self.kinf <= self.n / 3

    def band_mask(self, K: float) -> np.ndarray:
        return self.kinf <= K


@functools.lru_cache(maxsize=16)
def get_grid(n: int) -> Grid:
    return Grid(int(n))


class PeriodicField:
    """Scalar, vector or symmetric-tensor field held by Fourier coefficients.

    Parameters
    ----------
    coef : ndarray, complex, shape ``(ncomp, n, n, n//2+1)``
        Averaged Fourier coefficients in half-spectrum layout.
    """

    __slots__ = ("coef", "n")

    def __init__(self, coef: np.ndarray):
        coef = np.asarray(coef)
        if coef.ndim == 3:
            coef = coef[None]
        n = coef.shape[1]
        if coef.shape[1:] != (n, n, n // 2 + 1):
            raise ValueError(f"coefficient array has shape {coef.shape}")
        self.coef = coef.astype(np.complex128, copy=False)
        self.n = n

    @property
    def ncomp(self) -> int:
        return self.coef.shape[0]

    @property
    def grid(self) -> Grid:
        return get_grid(self.n)

    @classmethod
    def zeros(cls, n: int, ncomp: int = 1) -> "PeriodicField":
        return cls(np.zeros((ncomp, n, n, n // 2 + 1), dtype=np.complex128))

    @classmethod
    def from_physical(cls, values) -> "PeriodicField":
        v = np.asarray(values, dtype=float)
        if v.ndim == 3:
            v = v[None]
        n = v.shape[-1]
        # one component at a time keeps the transform workspace small
        c = np.empty((v.shape[0], n, n, n // 2 + 1), dtype=np.complex128)
        for i in range(v.shape[0]):
            c[i] = sfft.rfftn(v[i], workers=_WORKERS)
        c /= n**3
        return cls(c)

    def physical(self) -> np.ndarray:
        """Values on the ``n^3`` grid, shape ``(ncomp, n, n, n)``."""
        n = self.n
        out = np.empty((self.ncomp, n, n, n))
        for i in range(self.ncomp):
            out[i] = sfft.irfftn(self.coef[i], s=(n, n, n), workers=_WORKERS)
        out *= n**3
        return out

    def component(self, c: int) -> "PeriodicField":
        return PeriodicField(self.coef[c : c + 1])

    def mean(self) -> np.ndarray:
        return self.coef[:, 0, 0, 0].real.copy()

    def copy(self) -> "PeriodicField":
        return PeriodicField(self.coef.copy())

    def __add__(self, other):
        return PeriodicField(self.coef + other.coef)

    def __sub__(self, other):
        return PeriodicField(self.coef - other.coef)

    def __neg__(self):
        return PeriodicField(-self.coef)

    def __mul__(self, s):
        return PeriodicField(self.coef * s)

    __rmul__ = __mul__

    def __repr__(self):
        return f"PeriodicField(n={self.n}, ncomp={self.ncomp})"


# --------------------------------------------------------------------------
# differential operators


def gradient(u: PeriodicField) -> PeriodicField:
    """Gradient of each scalar component; output has ``3 * ncomp`` components."""
    kd = u.grid.kd
    out = np.empty((3 * u.ncomp,) + u.grid.shape, dtype=np.complex128)
    for c in range(u.ncomp):
        for a in range(3):
            out[3 * c + a] = 1j * kd[a] * u.coef[c]
    return PeriodicField(out)


def divergence(u: PeriodicField) -> PeriodicField:
    if u.ncomp != 3:
        raise ValueError("divergence expects a vector field")
    kd = u.grid.kd
    return PeriodicField(1j * (kd[0] * u.coef[0] + kd[1] * u.coef[1] + kd[2] * u.coef[2]))


def tensor_divergence(T: PeriodicField) -> PeriodicField:
    """Row divergence ``(div T)_i = d_j T_ij`` of a symmetric tensor field."""
    if T.ncomp != 6:
        raise ValueError("tensor_divergence expects 6 symmetric components")
    kd = T.grid.kd
    out = np.zeros((3,) + T.grid.shape, dtype=np.complex128)
    for c, (i, j) in enumerate(SYM_INDEX):
        out[i] += 1j * kd[j] * T.coef[c]
        if i != j:
            out[j] += 1j * kd[i] * T.coef[c]
    return PeriodicField(out)


def laplacian(u: PeriodicField) -> PeriodicField:
    return PeriodicField(-u.grid.k2 * u.coef)


def leray_project(u: PeriodicField) -> PeriodicField:
    """Remove the gradient part mode by mode; the zero mode is untouched."""
    if u.ncomp != 3:
        raise ValueError("leray_project expects a vector field")
    kd = u.grid.kd
    proj = (kd[0] * u.coef[0] + kd[1] * u.coef[1] + kd[2] * u.coef[2]) * u.grid.kd2_inv
    return PeriodicField(np.stack([u.coef[a] - kd[a] * proj for a in range(3)]))


def heat_propagate(u: PeriodicField, t: float) -> PeriodicField:
    if t < 0:
        raise ValueError(f"heat propagation time must be non-negative, got {t}")
    if t == 0:
        return u.copy()
    return PeriodicField(u.coef * np.exp(-u.grid.k2 * t))


def mollify(u: PeriodicField, ell: float) -> PeriodicField:
    """Gaussian mollifier at length scale ``ell`` (symbol ``exp(-|xi|^2 ell^2 / 2)``)."""
    if not ell > 0:
        raise ValueError(f"mollifier scale must be positive, got {ell}")
    return PeriodicField(u.coef * np.exp(-0.5 * u.grid.k2 * ell**2))


def anti_divergence(V: PeriodicField, tol: float = 1e-14) -> PeriodicField:
    """Symmetric tensor ``R V`` with ``div R V = V - mean(V)``.

    The symbol is
    ``R_ijk = -1/2 D^-2 d_ijk - 1/2 D^-1 delta_ij d_k + D^-1 delta_jk d_i + D^-1 delta_ik d_j``
    with ``D`` the Laplacian.
    """
    if V.ncomp != 3:
        raise ValueError("anti_divergence expects a vector field")
    scale = max(float(np.max(np.abs(V.coef))), 1e-300)
    if np.max(np.abs(V.coef[:, 0, 0, 0])) > tol * scale:
        raise PreconditionError("anti_divergence requires a zero-mean input")
    g = V.grid
    kd = g.kd
    inv = g.kd2_inv
    kv = kd[0] * V.coef[0] + kd[1] * V.coef[1] + kd[2] * V.coef[2]
    out = np.empty((6,) + g.shape, dtype=np.complex128)
    for c, (i, j) in enumerate(SYM_INDEX):
        # D^-1 = -inv, D^-2 = inv^2, d = i*xi
        val = 0.5j * kd[i] * kd[j] * kv * inv**2
        if i == j:
            val = val + 0.5j * kv * inv
        val = val - 1j * (kd[i] * V.coef[j] + kd[j] * V.coef[i]) * inv
        out[c] = val
    return PeriodicField(out)


def advection(u: PeriodicField):
    """``P div(u (x) u)`` with the two-thirds rule on input and output.

    Returns the field and the largest speed seen on the grid.
    """
    g = u.grid
    ud = np.where(g.dealias_mask(), u.coef, 0.0)
    phys = PeriodicField(ud).physical()
    del ud
    speed = float(np.sqrt(np.max(phys[0] ** 2 + phys[1] ** 2 + phys[2] ** 2)))
    kd = g.kd
    out = np.zeros((3,) + g.shape, dtype=np.complex128)
    n3 = float(u.n) ** 3
    for c, (i, j) in enumerate(SYM_INDEX):
        prod = sfft.rfftn(phys[i] * phys[j], workers=_WORKERS)
        prod /= n3
        out[i] += 1j * kd[j] * prod
        if i != j:
            out[j] += 1j * kd[i] * prod
        del prod
    del phys
    res = leray_project(PeriodicField(out))
    res.coef *= g.dealias_mask()
    return res, speed


def dealias(u: PeriodicField) -> PeriodicField:
    """Two-thirds rule: zero every mode with some ``|xi_i| > n/3``."""
    return PeriodicField(np.where(u.grid.dealias_mask(), u.coef, 0.0))


def band_project(u: PeriodicField, K: float) -> PeriodicField:
    """Keep modes with ``max_i |xi_i| <= K``."""
    return PeriodicField(np.where(u.grid.band_mask(K), u.coef, 0.0))


# --------------------------------------------------------------------------
# Littlewood-Paley


def _lp_step(r):
    # 1 on [0, 2/3], 0 on [3/4, inf)
    return _smooth_step((0.75 - np.asarray(r, dtype=float)) / (0.75 - 2.0 / 3.0))


def lp_low_symbol(r):
    """Low-frequency symbol, supported in ``[0, 3/4)``."""
    return _lp_step(r)


def lp_shell_symbol(r):
    """Shell symbol supported in ``(2/3, 3/2)`` with value 1 at ``r = 1``."""
    r = np.asarray(r, dtype=float)
    return _lp_step(r / 2) - _lp_step(r)


def lp_shells(n: int) -> list:
    """Dyadic shells whose support meets the lattice of an ``n^3`` grid.

    Corner modes reach ``|xi| = sqrt(3) n / 2``, so the list extends past the
    axis Nyquist until the shells cover every representable wavevector.
    """
    kmax = math.sqrt(3) * (n // 2)
    shells, N = [], 1
    while (2.0 / 3.0) * N < kmax:
        shells.append(N)
        N *= 2
    return shells


def lp_project(u: PeriodicField, N: int | str) -> PeriodicField:
    """Littlewood-Paley projection ``P_N``; ``N = 'low'`` selects the low part."""
    g = u.grid
    if N == "low":
        return PeriodicField(u.coef * lp_low_symbol(g.kmag))
    if N not in lp_shells(u.n):
        raise ValueError(f"shell N={N} is not a dyadic shell resolved by an n={u.n} grid")
    return PeriodicField(u.coef * lp_shell_symbol(g.kmag / N))


def l2_norm(u: PeriodicField) -> float:
    """Averaged L2 norm ``(mean |u|^2)^(1/2)`` via Parseval."""
    w = u.grid.parseval_weight
    return math.sqrt(float(np.sum(w * np.abs(u.coef) ** 2)))


def _effective_band(coef: np.ndarray, n: int, rtol: float = 1e-15) -> int:
    """Largest ``max_i |xi_i|`` carrying a coefficient above ``rtol`` of the peak."""
    mag = np.max(np.abs(coef), axis=0)
    peak = float(mag.max())
    if peak == 0:
        return 0
    g = get_grid(n)
    return int(np.max(g.kinf[mag > rtol * peak]))


def _resize_indices(n: int, m: int, K: int):
    ks = np.arange(-K, K + 1)
    return ks % n, ks % m, np.arange(K + 1)


def resample(u: PeriodicField, m: int) -> PeriodicField:
    """Same trigonometric polynomial on an ``m^3`` grid.

    Padding is exact.  Truncation keeps ``|xi_i| <= (min(n, m) - 1) // 2``
    and drops Nyquist modes.
    """
    n = u.n
    if m == n:
        return u.copy()
    K = (min(n, m) - 1) // 2
    src, dst, hz = _resize_indices(n, m, K)
    out = np.zeros((u.ncomp, m, m, m // 2 + 1), dtype=np.complex128)
    comps = range(u.ncomp)
    out[np.ix_(comps, dst, dst, hz)] = u.coef[np.ix_(comps, src, src, hz)]
    return PeriodicField(out)


def tail_fraction(u: PeriodicField, K: float) -> float:
    """Share of the L2 energy carried by modes with ``max_i |xi_i| > K``."""
    w = u.grid.parseval_weight
    e = w * np.sum(np.abs(u.coef) ** 2, axis=0)
    total = float(np.sum(e))
    if total == 0:
        return 0.0
    return float(np.sum(np.where(u.grid.kinf > K, e, 0.0))) / total


def sup_norm(u: PeriodicField, refine: int = 2) -> float:
    """Sup norm on a ``refine``-times oversampled evaluation grid.

    The evaluation grid is ``refine`` times the smallest even fast FFT size
    holding the field's band, capped at ``n``.  Coefficients below ``1e-15``
    of the peak (transform round-off) do not widen the band and are dropped.
    The fine grid is visited through ``refine**3`` phase-shifted inverse
    transforms, so memory stays at the base size.  Nyquist modes are dropped.  Vectors use the Euclidean magnitude;
    symmetric tensors use the entry-wise maximum.
    """
    n = u.n
    K = _effective_band(u.coef, n)
    K = min(K, (n - 1) // 2)
    m = sfft.next_fast_len(2 * K + 2, real=True)
    while m % 2:
        m = sfft.next_fast_len(m + 1, real=True)
    if m > n:
        m = n
    ix, jx, hz = _resize_indices(n, m, K)
    small = np.zeros((u.ncomp, m, m, m // 2 + 1), dtype=np.complex128)
    small[np.ix_(range(u.ncomp), jx, jx, hz)] = u.coef[np.ix_(range(u.ncomp), ix, ix, hz)]
    full = np.fft.fftfreq(m, 1.0 / m)
    full[m // 2] = 0.0
    half = np.arange(m // 2 + 1, dtype=float)
    half[-1] = 0.0
    small[:, m // 2] = 0.0
    small[:, :, m // 2] = 0.0
    small[..., -1] = 0.0
    small *= m**3
    best = 0.0
    work = np.empty_like(small[0])
    for shift in np.ndindex(refine, refine, refine):
        d = [2 * np.pi * s / (refine * m) for s in shift]
        px = np.exp(1j * full * d[0])[:, None, None]
        py = np.exp(1j * full * d[1])[None, :, None]
        pz = np.exp(1j * half * d[2])[None, None, :]
        acc = None
        for c in range(u.ncomp):
            np.multiply(small[c], px, out=work)
            work *= py
            work *= pz
            vals = sfft.irfftn(work, s=(m, m, m), workers=_WORKERS)
            if u.ncomp == 3:
                vals *= vals
                if acc is None:
                    acc = vals
                else:
                    acc += vals
            else:
                best = max(best, float(np.max(np.abs(vals))))
        if acc is not None:
            best = max(best, float(np.sqrt(np.max(acc))))
    return best


def besov_norm(u: PeriodicField, s: float, p, q, tol: float = 1e-12) -> float:
    """``l^q`` over dyadic shells of ``N^s ||P_N u||_{L^p}`` for zero-mean ``u``.

    ``p`` is 2 or ``inf``; ``q`` is a positive real or ``inf``.
    """
    scale = max(float(np.max(np.abs(u.coef))), 1e-300)
    if np.max(np.abs(u.coef[:, 0, 0, 0])) > tol * scale:
        raise PreconditionError("besov_norm requires a zero-mean field")
    vals = np.array(shell_norms(u, p)) * np.array([float(N) ** s for N in lp_shells(u.n)])
    if q == math.inf or q == "inf":
        return float(np.max(vals))
    return float(np.sum(vals**q) ** (1.0 / q))


def shell_norms(u: PeriodicField, p) -> list:
    """``||P_N u||_{L^p}`` for every shell in ``lp_shells(u.n)``."""
    norm = l2_norm if p == 2 else sup_norm
    if p not in (2, math.inf, "inf"):
        raise ValueError("only p = 2 and p = inf are supported")
    out = []
    kmag = u.grid.kmag
    for N in lp_shells(u.n):
        sym = lp_shell_symbol(kmag / N)
        if not np.any(sym):
            out.append(0.0)
            continue
        out.append(norm(PeriodicField(u.coef * sym)))
    return out


# --------------------------------------------------------------------------
# snapshots

_MAGIC = b"NSCFIELD"
_VERSION = 1
_HEADER = struct.Struct("<8sIIIId")  # magic, version, n, ncomp, reserved, time


def save_snapshot(path, u: PeriodicField, t: float = 0.0) -> None:
    """Write a 64-byte header followed by little-endian complex128 coefficients."""
    head = _HEADER.pack(_MAGIC, _VERSION, u.n, u.ncomp, 0, float(t))
    head = head + b"\0" * (64 - len(head))
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(np.ascontiguousarray(u.coef, dtype="<c16").tobytes())


def load_snapshot(path):
    """Read a snapshot; returns ``(field, time)``."""
    with open(path, "rb") as fh:
        head = fh.read(64)
        magic, version, n, ncomp, _, t = _HEADER.unpack(head[: _HEADER.size])
        if magic != _MAGIC or version != _VERSION:
            raise ValueError(f"{path}: not a field snapshot (magic {magic!r}, version {version})")
        data = np.frombuffer(fh.read(), dtype="<c16")
    shape = (ncomp, n, n, n // 2 + 1)
    if data.size != math.prod(shape):
        raise ValueError(f"{path}: truncated snapshot")
    return PeriodicField(data.reshape(shape).astype(np.complex128)), t
