"""Tunneling potentials of the continuum model.

``U = sum_n beta_n f_n`` and ``V = sum_n gamma_n g_n`` with
``g_n = sum_k e_{n i omega^k}`` and ``f_n = sum_k omega^k e_{n i omega^k}``
for ``n`` in ``3Z + 1``.  Everything is represented exactly as a
:class:`~tbgmag.lattice.TrigPolynomial`, so Wirtinger derivatives and cell
averages are computed termwise without discretisation error.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Mapping

import numpy as np
from scipy.optimize import minimize

from .lattice import I_OMEGA_POWERS, OMEGA, MoireLattice, TrigPolynomial, cell_grid

BRANCH_GUARD = 1e-14


class BranchAmbiguityWarning(UserWarning):
    """``W`` is too close to zero for the square-root branch to be meaningful."""


@dataclass(frozen=True)
class FieldSample:
    """Value of a field together with its Wirtinger derivatives."""

    value: complex | np.ndarray
    dz: complex | np.ndarray
    dzbar: complex | np.ndarray


def _check_support(coeffs: Mapping[int, complex], name: str) -> dict[int, complex]:
    out = {}
    for n, c in coeffs.items():
        n = int(n)
        if n % 3 != 1:
            raise ValueError(f"{name} index {n} is not in 3Z+1")
        out[n] = complex(c)
    return out


@dataclass(frozen=True)
class TunnelingModel:
    """Tunneling coefficients and coupling strengths.

    Parameters
    ----------
    beta, gamma : mapping from int to complex
        Finitely supported coefficients of ``U`` and ``V``; keys must lie in
        ``3Z + 1``.
    alpha0, alpha1 : float
        AA'/BB' and AB'/BA' coupling strengths.
    """

    beta: Mapping[int, complex] = field(default_factory=lambda: {1: 1.0})
    gamma: Mapping[int, complex] = field(default_factory=lambda: {1: 1.0})
    alpha0: float = 1.0
    alpha1: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "beta", _check_support(self.beta, "beta"))
        object.__setattr__(self, "gamma", _check_support(self.gamma, "gamma"))
        if self.alpha0 < 0 or self.alpha1 < 0:
            raise ValueError("coupling strengths must be nonnegative")

    def __hash__(self):
        return hash((tuple(self.beta.items()), tuple(self.gamma.items()), self.alpha0, self.alpha1))

    @cached_property
    def U(self) -> TrigPolynomial:
        out: dict[tuple[int, int], complex] = {}
        for n, b in self.beta.items():
            for k, (p1, p2) in enumerate(I_OMEGA_POWERS):
                key = (n * p1, n * p2)
                out[key] = out.get(key, 0) + b * OMEGA**k
        return TrigPolynomial(out)

    @cached_property
    def V(self) -> TrigPolynomial:
        out: dict[tuple[int, int], complex] = {}
        for n, g in self.gamma.items():
            for p1, p2 in I_OMEGA_POWERS:
                key = (n * p1, n * p2)
                out[key] = out.get(key, 0) + g
        return TrigPolynomial(out)

    @cached_property
    def Uminus(self) -> TrigPolynomial:
        return self.U.reflect()

    def with_alphas(self, alpha0: float | None = None, alpha1: float | None = None) -> "TunnelingModel":
        return TunnelingModel(
            self.beta,
            self.gamma,
            self.alpha0 if alpha0 is None else alpha0,
            self.alpha1 if alpha1 is None else alpha1,
        )


def _sample(p: TrigPolynomial, z) -> FieldSample:
    return FieldSample(p(z), p.dz()(z), p.dzbar()(z))


def eval_V(model: TunnelingModel, z) -> FieldSample:
    """``V(z)`` with exact Wirtinger derivatives."""
    return _sample(model.V, z)


def eval_U(model: TunnelingModel, z) -> FieldSample:
    """``U(z)`` with exact Wirtinger derivatives."""
    return _sample(model.U, z)


def eval_Uminus(model: TunnelingModel, z) -> FieldSample:
    """``U_-(z) = U(-z)`` with exact Wirtinger derivatives."""
    return _sample(model.Uminus, z)


def eval_T(model: TunnelingModel, z) -> np.ndarray:
    """Interlayer matrix ``T(z)``; shape ``z.shape + (2, 2)``."""
    z = np.asarray(z, dtype=complex)
    v = model.V(z)
    u = model.U(z)
    um_bar = np.conj(model.Uminus(z))
    T = np.empty(z.shape + (2, 2), dtype=complex)
    T[..., 0, 0] = model.alpha0 * v
    T[..., 0, 1] = model.alpha1 * um_bar
    T[..., 1, 0] = model.alpha1 * u
    T[..., 1, 1] = model.alpha0 * v
    return T


def eval_script_V(model: TunnelingModel, z) -> np.ndarray:
    """Hermitian 4x4 potential ``[[0, T], [T*, 0]]``."""
    T = eval_T(model, z)
    out = np.zeros(T.shape[:-2] + (4, 4), dtype=complex)
    out[..., :2, 2:] = T
    out[..., 2:, :2] = np.conj(np.swapaxes(T, -1, -2))
    return out


def sup_norm_V(model: TunnelingModel, grid_m: int = 64, lat: MoireLattice | None = None) -> float:
    """``max_z ||script V(z)||`` by grid search followed by local refinement.

    The spectral norm of the block potential equals the largest singular
    value of ``T(z)``.
    """
    if grid_m < 32:
        raise ValueError("grid_m must be at least 32")
    if model.alpha0 == 0 and model.alpha1 == 0:
        return 0.0
    lat = lat or MoireLattice()
    g = cell_grid(lat, grid_m)

    def norm_at(z):
        return np.linalg.norm(eval_T(model, z), ord=2, axis=(-2, -1))

    vals = norm_at(g.z)
    best = int(np.argmax(vals))
    z0 = g.z[best]
    res = minimize(
        lambda x: -norm_at(complex(x[0], x[1])),
        np.array([z0.real, z0.imag]),
        method="Nelder-Mead",
        options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 2000},
    )
    return float(max(vals[best], -res.fun))


def cell_average(field_values: Callable | np.ndarray, grid_m: int = 64, lat: MoireLattice | None = None):
    """Periodic trapezoid average over the cell.

    ``field_values`` is either a callable of ``z`` or an array already
    sampled on the ``grid_m x grid_m`` cell grid.
    """
    if callable(field_values):
        lat = lat or MoireLattice()
        field_values = field_values(cell_grid(lat, grid_m).z)
    return np.asarray(field_values).reshape(-1).mean()


def _frak_parts(model: TunnelingModel) -> tuple[TrigPolynomial, TrigPolynomial]:
    u, um = model.U, model.Uminus
    P = um.conj() * um - u.conj() * u
    Q = um.conj().dzbar() - u.dz()
    return P, Q


def frak_U(model: TunnelingModel, eta) -> np.ndarray:
    """Pointwise correction density of the chiral trace expansion.

    ``(a1^2/8) [a1^2 (|U_-|^2 - |U|^2)^2 + 4 |dzbar conj(U_-) - dz U|^2]``.
    """
    a1 = model.alpha1
    P, Q = _frak_parts(model)
    p = np.real(P(eta))
    q = Q(eta)
    return a1**2 / 8.0 * (a1**2 * p**2 + 4.0 * np.abs(q) ** 2)


def ave_frak_U(model: TunnelingModel, grid_m: int = 64, lat: MoireLattice | None = None) -> float:
    """Cell average of :func:`frak_U` by trapezoid quadrature."""
    return float(cell_average(lambda z: frak_U(model, z), grid_m, lat))


def ave_frak_U_parseval(model: TunnelingModel) -> float:
    """Cell average of :func:`frak_U` from Fourier coefficients (exact)."""
    a1 = model.alpha1
    P, Q = _frak_parts(model)
    return a1**2 / 8.0 * (a1**2 * (P * P).mean().real + 4.0 * Q.mean_abs2())


def squeezing_condition(model: TunnelingModel, magnetic_B, z) -> np.ndarray:
    """Evaluate ``8i|W|B - 8i Im(dz W conj(W)^(1/2))`` with ``W = a1^2 U U_-``.

    Parameters
    ----------
    magnetic_B : float or callable
        Magnetic field, either constant or a function of ``z``.
    z : complex or array

    Notes
    -----
    The principal branch of the square root is used.  A
    :class:`BranchAmbiguityWarning` is emitted when ``|W| < 1e-14`` at any
    sample point.
    """
    z = np.asarray(z, dtype=complex)
    W = (model.U * model.Uminus).scale(model.alpha1**2)
    w = W(z)
    dw = W.dz()(z)
    b = magnetic_B(z) if callable(magnetic_B) else magnetic_B
    if np.any(np.abs(w) < BRANCH_GUARD):
        warnings.warn("|W| below branch guard; square root branch undefined", BranchAmbiguityWarning, stacklevel=2)
    return 8j * np.abs(w) * b - 8j * np.imag(dw * np.sqrt(np.conj(w)))


def magnetic_field_of(A: TrigPolynomial) -> TrigPolynomial:
    """Field ``B = 2 Im(dz A)`` of a periodic complex potential ``A = A1 + i A2``."""
    dA = A.dz()
    # 2 Im(g) = -i (g - conj g)
    return (dA - dA.conj()).scale(-1j)
