"""Theta functions, Landau levels and zero modes.

Magnetic torus conventions
--------------------------
For an integer scale ``lam`` the enlarged lattice is generated by
``gamma1 = 4 pi lam i omega`` and ``gamma2 = 4 pi lam i omega^2``.  With flux
integer ``k2`` the field is ``B = k2 / (8 pi lam^2 Im omega)`` and the
magnetic translations are

    (T_g u)(z) = exp((i B / 2) Im(conj(g) z)) u(z + g),
    TT_{m gamma1 + n gamma2} = exp(i m n k2 pi) T_{m gamma1 + n gamma2}.

The annihilation operator is ``a = -2i d_z - (iB/2) conj(z)`` and its Floquet
version is ``a_k = a + conj(k)``.  Zero modes have the form

    psi_{0,k}(z) = exp(-B|z|^2/4) G(conj z) exp(-i Re(z conj k)),
    G(w) = exp(-B w^2/4 + q w) theta_{1/2,1/2}(w / (-4 pi lam i) - v0 | omega),

and requiring ``TT_{gamma1} psi = TT_{gamma2} psi = psi`` for ``k2 = 1``
fixes ``q = -Im k`` and
``v0 = -2 lam omega Im k + 2 lam Re(i omega^2 conj k) + 1/2``.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import comb, factorial
from typing import Callable, Mapping

import numpy as np
from numpy.polynomial import Polynomial

from .lattice import OMEGA, MoireLattice, TrigPolynomial

_THETA_TAIL = 45.0  # exp(-45) ~ 3e-20 relative tail


@dataclass(frozen=True)
class ThetaParams:
    """Characteristics and modulus of a Jacobi theta function."""

    a: float = 0.5
    b: float = 0.5
    tau: complex = complex(OMEGA)

    def __post_init__(self):
        if not complex(self.tau).imag > 0:
            raise ValueError("theta modulus must satisfy Im(tau) > 0")


def theta_ab(p: ThetaParams, z, deriv: int = 0):
    """``theta_{a,b}(z | tau) = sum_n exp(pi i (a+n)^2 tau + 2 pi i (n+a)(z+b))``.

    Parameters
    ----------
    p : ThetaParams
    z : complex or array
    deriv : int
        Order of the z-derivative to return.
    """
    z = np.asarray(z, dtype=complex)
    tau = complex(p.tau)
    im_tau = tau.imag
    if not im_tau > 0:
        raise ValueError("theta modulus must satisfy Im(tau) > 0")
    # Term magnitude ~ exp(-pi Im(tau) (n+a)^2 - 2 pi (n+a) Im z); centre and width.
    centers = -np.imag(z) / im_tau - p.a
    radius = int(np.ceil(np.sqrt(_THETA_TAIL / (np.pi * im_tau)))) + 2 + deriv
    lo = int(np.floor(centers.min(initial=0.0))) - radius
    hi = int(np.ceil(centers.max(initial=0.0))) + radius
    n = np.arange(lo, hi + 1).reshape((-1,) + (1,) * z.ndim)
    na = n + p.a
    terms = np.exp(1j * np.pi * na**2 * tau + 2j * np.pi * na * (z + p.b))
    if deriv:
        terms = terms * (2j * np.pi * na) ** deriv
    return terms.sum(axis=0)


def landau_level(n: int, B: float) -> float:
    """Relativistic Landau level ``sgn(n) sqrt(2|n|B)``."""
    if B <= 0:
        raise ValueError("B must be positive")
    return float(np.sign(n) * np.sqrt(2.0 * abs(n) * B))


@dataclass(frozen=True)
class MagneticTorus:
    """Enlarged torus with quantised flux and a quasi-momentum.

    Parameters
    ----------
    lambda_scale : int
        Integer enlargement of the moire lattice.
    bloch_k : complex
        Quasi-momentum.
    k2 : int
        Flux integer; ``B = k2 / (8 pi lam^2 Im omega)``.
    """

    lambda_scale: int
    bloch_k: complex = 0j
    k2: int = 1

    def __post_init__(self):
        if int(self.lambda_scale) != self.lambda_scale or self.lambda_scale == 0:
            raise ValueError("lambda_scale must be a nonzero integer")
        if int(self.k2) != self.k2 or self.k2 <= 0:
            raise ValueError("k2 must be a positive integer")

    @property
    def B(self) -> float:
        return self.k2 / (8.0 * np.pi * self.lambda_scale**2 * OMEGA.imag)

    @property
    def gamma1(self) -> complex:
        return complex(4j * np.pi * self.lambda_scale * OMEGA)

    @property
    def gamma2(self) -> complex:
        return complex(4j * np.pi * self.lambda_scale * OMEGA**2)

    def flux_integer(self) -> float:
        """``8 pi lam^2 B Im(omega)``; an integer by construction."""
        return 8.0 * np.pi * self.lambda_scale**2 * self.B * OMEGA.imag

    def translate(self, u: Callable, m: int, n: int) -> Callable:
        """Magnetic translation ``TT_{m gamma1 + n gamma2}`` applied to ``u``."""
        g = m * self.gamma1 + n * self.gamma2
        phase = np.exp(1j * m * n * self.k2 * np.pi)
        B = self.B

        def shifted(z):
            z = np.asarray(z, dtype=complex)
            return phase * np.exp(0.5j * B * np.imag(np.conj(g) * z)) * u(z + g)

        return shifted


def _require_unit_flux(t: MagneticTorus):
    if t.k2 != 1:
        raise ValueError("explicit zero modes are implemented for unit flux (k2 = 1)")


def _G_derivatives(t: MagneticTorus, w, order: int) -> list[np.ndarray]:
    """Derivatives ``G^{(j)}(w)`` for ``j = 0..order``."""
    lam, B, k = t.lambda_scale, t.B, complex(t.bloch_k)
    q = -k.imag
    v0 = -2 * lam * OMEGA * k.imag + 2 * lam * np.real(1j * OMEGA**2 * np.conj(k)) + 0.5
    c = -4j * np.pi * lam
    p = Polynomial([0.0, q, -B / 4.0])
    ep = np.exp(p(w))
    # (e^p)^{(m)} = e^p H_m with H_{m+1} = H_m' + p' H_m
    H = [Polynomial([1.0])]
    for _ in range(order):
        H.append(H[-1].deriv() + p.deriv() * H[-1])
    arg = w / c - v0
    tp = ThetaParams()
    th = [theta_ab(tp, arg, deriv=l) / c**l for l in range(order + 1)]
    out = []
    for j in range(order + 1):
        acc = np.zeros_like(ep)
        for l in range(j + 1):
            acc = acc + comb(j, l) * H[j - l](w) * th[l]
        out.append(ep * acc)
    return out


def psi_bloch(t: MagneticTorus, z, n: int = 0):
    """Landau Bloch function ``psi_{n,k}`` on the magnetic torus.

    ``psi_n = (a_k^*)^n psi_0 / sqrt(n! (2B)^n)`` so that
    ``a_k psi_n = sqrt(2 B n) psi_{n-1}``.  The overall constant of
    ``psi_0`` is 1.  Supported for ``0 <= n <= 8``.
    """
    _require_unit_flux(t)
    if not 0 <= n <= 8:
        raise ValueError("ladder index must be between 0 and 8")
    z = np.asarray(z, dtype=complex)
    B, k = t.B, complex(t.bloch_k)
    w = np.conj(z)
    G = _G_derivatives(t, w, n)
    # (-2i dzbar + iBz)^n G(conj z), the creation operator with Gaussian and
    # plane-wave factors conjugated away.
    F = np.zeros_like(G[0])
    for j in range(n + 1):
        F = F + comb(n, j) * (1j * B * z) ** (n - j) * (-2j) ** j * G[j]
    F = F / np.sqrt(factorial(n) * (2 * B) ** n)
    return np.exp(-B * np.abs(z) ** 2 / 4.0) * F * np.exp(-1j * np.real(z * np.conj(k)))


def psi0_bloch(t: MagneticTorus, z):
    """Zero mode ``psi_{0,k}`` of the Floquet annihilation operator."""
    return psi_bloch(t, z, 0)


def _fd_dz(f: Callable, z, h: float):
    """Fourth-order central difference for the Wirtinger derivative d/dz."""

    def d(direction):
        return (-f(z + 2 * h * direction) + 8 * f(z + h * direction) - 8 * f(z - h * direction) + f(z - 2 * h * direction)) / (
            12 * h
        )

    return 0.5 * (d(1.0) - 1j * d(1j))


def annihilation_residual(t: MagneticTorus, z, n: int = 0, h: float = 1e-3) -> float:
    """Relative residual of ``a_k psi_n = sqrt(2Bn) psi_{n-1}`` at sample points.

    The derivative is taken by fourth-order finite differences, so the
    result is an independent check of the closed form.
    """
    z = np.asarray(z, dtype=complex)
    B, k = t.B, complex(t.bloch_k)
    psi = lambda x: psi_bloch(t, x, n)  # noqa: E731
    lhs = -2j * _fd_dz(psi, z, h) - 0.5j * B * np.conj(z) * psi(z) + np.conj(k) * psi(z)
    rhs = np.sqrt(2 * B * n) * psi_bloch(t, z, n - 1) if n > 0 else 0.0
    return float(np.linalg.norm(lhs - rhs) / np.linalg.norm(psi(z)))


def translation_residual(t: MagneticTorus, z, n: int = 0) -> float:
    """Max relative deviation of ``TT_{gamma_j} psi_n`` from ``psi_n``, j = 1, 2."""
    z = np.asarray(z, dtype=complex)
    psi = lambda x: psi_bloch(t, x, n)  # noqa: E731
    ref = psi(z)
    res = 0.0
    for m, nn in ((1, 0), (0, 1)):
        res = max(res, float(np.max(np.abs(t.translate(psi, m, nn)(z) - ref) / np.abs(ref))))
    return res


# ---------------------------------------------------------------------------
# Periodic fields


def zero_mode_phase(A_fourier: Mapping[tuple[int, int], complex], variant: str = "dzbar") -> TrigPolynomial:
    """Corrector ``phi`` with ``2 D phi = A`` for ``D = D_zbar`` or ``D_z``.

    For ``variant="dzbar"`` the coefficients are ``A_q / q``; for
    ``variant="dz"`` they are ``A_q / conj(q)``.
    """
    A = TrigPolynomial(A_fourier)
    if (0, 0) in A.coeffs:
        raise ValueError("periodic potential must have zero mean")
    q = A.wavevectors()
    if np.any(np.abs(q) < 1e-14):
        raise ZeroDivisionError("vanishing Fourier symbol")
    if variant == "dzbar":
        denom = q
    elif variant == "dz":
        denom = np.conj(q)
    else:
        raise ValueError("variant must be 'dzbar' or 'dz'")
    return TrigPolynomial({m: c / d for (m, c), d in zip(A.coeffs.items(), denom)})


def periodic_zero_mode(A_fourier: Mapping[tuple[int, int], complex], z, variant: str = "dzbar"):
    """``exp(-phi(z))``, the periodic solution of ``(2 D + A) psi = 0``.

    ``D`` is ``D_zbar`` (default) or ``D_z``; ``A`` is the Fourier series
    given by ``A_fourier`` on integer dual coordinates.  For the chiral
    operator ``2 D_zbar - A`` pass the negated coefficients.
    """
    if not A_fourier:
        return np.ones(np.shape(z), dtype=complex)
    return np.exp(-zero_mode_phase(A_fourier, variant)(z))


class SpectralDerivatives:
    """FFT differentiation of samples on the ``m x m`` cell grid."""

    def __init__(self, m: int, lat: MoireLattice | None = None):
        lat = lat or MoireLattice()
        self.m = m
        freq = np.fft.fftfreq(m, 1.0 / m)
        m1, m2 = np.meshgrid(freq, freq, indexing="ij")
        q = lat.dual_vector(m1, m2)
        nyq = (np.abs(m1) == m // 2) | (np.abs(m2) == m // 2) if m % 2 == 0 else np.zeros_like(m1, bool)
        self._dz = np.where(nyq, 0, 0.5j * np.conj(q))
        self._dzbar = np.where(nyq, 0, 0.5j * q)

    def _apply(self, f, symbol):
        f = np.asarray(f)
        return np.fft.ifft2(np.fft.fft2(f, axes=(-2, -1)) * symbol, axes=(-2, -1))

    def dz(self, f):
        return self._apply(f, self._dz)

    def dzbar(self, f):
        return self._apply(f, self._dzbar)


def verify_zero_mode(psi, op: Callable, m: int | None = None, lat: MoireLattice | None = None) -> float:
    """Relative L2 residual ``||op(psi, D)|| / ||psi||`` on the cell grid.

    Parameters
    ----------
    psi : array, shape (..., m, m)
        Samples on the cell grid (row-major in ``(s1, s2)``).
    op : callable
        ``op(psi, D)`` returns the residual samples; ``D`` is a
        :class:`SpectralDerivatives` instance for the grid.
    """
    psi = np.asarray(psi)
    m = m or psi.shape[-1]
    D = SpectralDerivatives(m, lat)
    r = op(psi, D)
    norm = np.linalg.norm(psi)
    return float(np.linalg.norm(r) / norm) if norm > 0 else float(np.linalg.norm(r))
