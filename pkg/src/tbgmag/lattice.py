"""Moire lattice geometry and Fourier bookkeeping.

Conventions
-----------
The translation lattice is ``Gamma = zeta1 Z + zeta2 Z`` with
``zeta_j = 4 pi i omega^j`` and the dual lattice is
``Gamma* = eta1 Z + eta2 Z`` with ``eta1 = omega^2/sqrt(3)`` and
``eta2 = -omega/sqrt(3)``.  A plane wave with wavevector ``q`` in
``Gamma*`` is ``e_q(z) = exp(i Re(z conj(q)))``.  Wavevectors are stored as
integer pairs ``(m1, m2)`` meaning ``q = m1 eta1 + m2 eta2``.  In fractional
cell coordinates ``z = s1 zeta1 + s2 zeta2`` one has
``e_q(z) = exp(2 pi i (m1 s1 + m2 s2))``.

For such plane waves ``2 D_zbar e_q = q e_q`` and ``2 D_z e_q = conj(q) e_q``
with ``D = -i d``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Mapping

import numpy as np

OMEGA = np.exp(2j * np.pi / 3)
SQRT3 = np.sqrt(3.0)
CELL_AREA = 8.0 * SQRT3 * np.pi**2

# Integer coordinates of i, i*omega, i*omega^2 in the dual basis.
I_OMEGA_POWERS = ((-1, -1), (2, -1), (-1, 2))


@dataclass(frozen=True)
class CellPoint:
    """A point of the fundamental cell in fractional coordinates."""

    s1: float
    s2: float
    z: complex


@dataclass(frozen=True)
class MoireLattice:
    """Moire translation lattice and its dual.

    Parameters
    ----------
    l0 : float
        Carbon-carbon distance used by :func:`moire_scale`.  All other
        quantities are in moire units and do not depend on it.
    """

    l0: float = 1.0

    @property
    def omega(self) -> complex:
        return complex(OMEGA)

    @property
    def zeta1(self) -> complex:
        return complex(4j * np.pi * OMEGA)

    @property
    def zeta2(self) -> complex:
        return complex(4j * np.pi * OMEGA**2)

    @property
    def eta1(self) -> complex:
        return complex(OMEGA**2 / SQRT3)

    @property
    def eta2(self) -> complex:
        return complex(-OMEGA / SQRT3)

    @property
    def a(self) -> tuple[complex, complex, complex]:
        """One-third translations ``a_j = (4/3) pi i omega^j``, j = 0, 1, 2."""
        return tuple(complex(4j * np.pi * OMEGA**j / 3) for j in range(3))

    @property
    def cell_area(self) -> float:
        return float(abs((np.conj(self.zeta1) * self.zeta2).imag))

    def point(self, s1, s2):
        """Map fractional coordinates to the complex plane."""
        return np.asarray(s1) * self.zeta1 + np.asarray(s2) * self.zeta2

    def fractional(self, z):
        """Fractional coordinates ``(s1, s2)`` of ``z`` (inverse of :meth:`point`)."""
        z = np.asarray(z)
        s1 = np.real(z * np.conj(self.eta1)) / (2 * np.pi)
        s2 = np.real(z * np.conj(self.eta2)) / (2 * np.pi)
        return s1, s2

    def dual_vector(self, m1, m2):
        """Wavevector ``m1 eta1 + m2 eta2``."""
        return np.asarray(m1) * self.eta1 + np.asarray(m2) * self.eta2

    def dual_coordinates(self, k):
        """Real coordinates ``(x1, x2)`` with ``k = x1 eta1 + x2 eta2``."""
        k = np.asarray(k)
        x1 = np.real(k * np.conj(self.zeta1)) / (2 * np.pi)
        x2 = np.real(k * np.conj(self.zeta2)) / (2 * np.pi)
        return x1, x2

    def distance_to_dual_lattice(self, k: complex) -> float:
        """Euclidean distance from ``k`` to the nearest point of ``Gamma*``."""
        x1, x2 = self.dual_coordinates(k)
        f1, f2 = np.floor(x1), np.floor(x2)
        best = np.inf
        for d1 in (0, 1):
            for d2 in (0, 1):
                best = min(best, abs(k - self.dual_vector(f1 + d1, f2 + d2)))
        return float(best)

    def cell_grid(self, m: int) -> "CellGrid":
        return cell_grid(self, m)


def moire_scale(theta: float, l0: float = 1.0) -> float:
    """Moire length ``sqrt(3) l0 / (2 sin(|theta|/2))``.

    Raises
    ------
    ValueError
        If ``theta`` is zero or ``|theta| >= pi/6``, or ``l0 <= 0``.
    """
    if l0 <= 0:
        raise ValueError("l0 must be positive")
    if theta == 0 or not abs(theta) < np.pi / 6:
        raise ValueError("twist angle must satisfy 0 < |theta| < pi/6")
    return float(SQRT3 * l0 / (2.0 * np.sin(abs(theta) / 2.0)))


def dual_pairing(lat: MoireLattice, j: int, k: int) -> float:
    """Return ``Re(zeta_j conj(eta_k))`` for ``j, k`` in ``{1, 2}``."""
    zeta = {1: lat.zeta1, 2: lat.zeta2}
    eta = {1: lat.eta1, 2: lat.eta2}
    if j not in zeta or k not in eta:
        raise ValueError("indices must be 1 or 2")
    return float(np.real(zeta[j] * np.conj(eta[k])))


@dataclass(frozen=True)
class CellGrid:
    """Uniform ``m x m`` grid on the fundamental cell.

    Points are ordered row-major in ``(s1, s2)``; every point carries the
    weight ``cell_area / m**2``.
    """

    m: int
    s1: np.ndarray
    s2: np.ndarray
    z: np.ndarray
    weight: float

    def __len__(self) -> int:
        return self.z.size

    def __getitem__(self, idx: int) -> CellPoint:
        return CellPoint(float(self.s1[idx]), float(self.s2[idx]), complex(self.z[idx]))

    def __iter__(self) -> Iterator[CellPoint]:
        return (self[i] for i in range(len(self)))

    def average(self, values) -> float | complex:
        """Periodic trapezoid average of samples taken on this grid."""
        values = np.asarray(values)
        if values.shape[-1] != len(self):
            values = values.reshape(values.shape[:-2] + (-1,))
        return values.mean(axis=-1)


def cell_grid(lat: MoireLattice, m: int) -> CellGrid:
    """Uniform ``m x m`` quadrature grid on the fundamental cell."""
    if m < 2:
        raise ValueError("grid size must be at least 2")
    s = np.arange(m) / m
    s1, s2 = np.meshgrid(s, s, indexing="ij")
    s1, s2 = s1.ravel(), s2.ravel()
    return CellGrid(m, s1, s2, lat.point(s1, s2), lat.cell_area / m**2)


@dataclass(frozen=True)
class TrigPolynomial:
    """Finite Fourier series ``sum_q c_q e_q`` over ``Gamma*``.

    Parameters
    ----------
    coeffs : mapping
        ``(m1, m2) -> c`` with integer dual coordinates.
    """

    coeffs: Mapping[tuple[int, int], complex] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for key, c in self.coeffs.items():
            m = (int(key[0]), int(key[1]))
            if c != 0:
                clean[m] = clean.get(m, 0) + complex(c)
        object.__setattr__(self, "coeffs", dict(sorted(clean.items())))

    @property
    def modes(self) -> np.ndarray:
        return np.array(list(self.coeffs), dtype=int).reshape(-1, 2)

    @property
    def values(self) -> np.ndarray:
        return np.array(list(self.coeffs.values()), dtype=complex)

    def wavevectors(self) -> np.ndarray:
        m = self.modes
        return m[:, 0] * (OMEGA**2 / SQRT3) + m[:, 1] * (-OMEGA / SQRT3)

    def _phases(self, z):
        z = np.asarray(z, dtype=complex)
        q = self.wavevectors()
        return np.exp(1j * np.real(z[..., None] * np.conj(q)))

    def __call__(self, z):
        if not self.coeffs:
            return np.zeros(np.shape(z), dtype=complex)
        return self._phases(z) @ self.values

    def dz(self) -> "TrigPolynomial":
        q = self.wavevectors()
        return TrigPolynomial({m: c * 0.5j * np.conj(qq) for (m, c), qq in zip(self.coeffs.items(), q)})

    def dzbar(self) -> "TrigPolynomial":
        q = self.wavevectors()
        return TrigPolynomial({m: c * 0.5j * qq for (m, c), qq in zip(self.coeffs.items(), q)})

    def conj(self) -> "TrigPolynomial":
        """Pointwise complex conjugate ``conj(p(z))``."""
        return TrigPolynomial({(-a, -b): np.conj(c) for (a, b), c in self.coeffs.items()})

    def reflect(self) -> "TrigPolynomial":
        """``z -> p(-z)``."""
        return TrigPolynomial({(-a, -b): c for (a, b), c in self.coeffs.items()})

    def __add__(self, other: "TrigPolynomial") -> "TrigPolynomial":
        out = dict(self.coeffs)
        for m, c in other.coeffs.items():
            out[m] = out.get(m, 0) + c
        return TrigPolynomial(out)

    def __sub__(self, other: "TrigPolynomial") -> "TrigPolynomial":
        return self + other.scale(-1.0)

    def scale(self, s: complex) -> "TrigPolynomial":
        return TrigPolynomial({m: s * c for m, c in self.coeffs.items()})

    def __mul__(self, other: "TrigPolynomial") -> "TrigPolynomial":
        out: dict[tuple[int, int], complex] = {}
        for (a1, a2), c in self.coeffs.items():
            for (b1, b2), d in other.coeffs.items():
                key = (a1 + b1, a2 + b2)
                out[key] = out.get(key, 0) + c * d
        return TrigPolynomial(out)

    def mean(self) -> complex:
        """Cell average, i.e. the zero Fourier coefficient."""
        return self.coeffs.get((0, 0), 0j)

    def mean_abs2(self) -> float:
        """Cell average of ``|p|^2`` by Parseval."""
        return float(np.sum(np.abs(self.values) ** 2))

    def degree(self) -> int:
        if not self.coeffs:
            return 0
        return int(np.abs(self.modes).max())
