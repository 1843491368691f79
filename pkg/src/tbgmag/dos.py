"""Semiclassical density-of-states functionals in strong magnetic fields.

For a test function ``f`` each Landau band ``n`` contributes

* free model: ``(B/pi) f(lambda_n)``;
* chiral model: ``(B/pi) f(lambda_n) + (|n|/2pi) Ave(frakU) f''(lambda_n)``;
* anti-chiral model: ``(B/2pi) t_{n,0}(f) + (sqrt(B)/2pi) t_{n,1}(f)`` with
  ``t_{n,0} = Ave(f(lambda_n + c_n) + f(lambda_n - c_n))`` and
  ``t_{n,1} = Ave(s_n^2 [f'(lambda_n + c_n) + f'(lambda_n - c_n)])``,

where ``lambda_n = sgn(n) sqrt(2|n|B)``.  Cell averages over ``|V|`` use the
periodic trapezoid rule folded by the rotation symmetry of ``|V|``; the integrands are even in ``c_n`` and hence smooth
functions of ``|V|^2``, so the rule converges spectrally.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from math import inf, pi
from typing import Iterable, Sequence

import numpy as np

from .landau_special import landau_level
from .lattice import MoireLattice, cell_grid
from .potentials import TunnelingModel, ave_frak_U_parseval, sup_norm_V
from .testfunction import (  # noqa: F401  re-exported algebra
    Affine,
    Constant,
    Derivative,
    Gaussian,
    Logistic,
    Poly,
    Product,
    Scaled,
    SmoothStep,
    Softplus,
    Sum,
    TestFunction,
    fermi_dirac,
    free_energy_kernel,
    gaussian,
    plateau,
)

KINDS = ("free", "chiral", "antichiral")


class GapClosedError(ValueError):
    """A Landau gap is too small for the band window to exist."""


class SupportError(ValueError):
    """The test function reaches outside the valid band windows."""


@dataclass(frozen=True)
class DOSModel:
    """Model data consumed by the trace expansions.

    Parameters
    ----------
    kind : {"free", "chiral", "antichiral"}
    tunneling : TunnelingModel
        Only ``alpha1`` is used by the chiral model and only ``alpha0`` by
        the anti-chiral one.
    theta : float
        Twist angle entering the anti-chiral ``s_n`` and ``c_n``.
    delta : float
        Splitting exponent of the error scale.
    grid_m : int
        Cell quadrature grid for ``|V|`` moments and the sup-norm.
    antichiral_sign : {+1, -1}
        Sign of the ``sqrt(B)`` correction in the anti-chiral expansion.
    """

    kind: str = "free"
    tunneling: TunnelingModel = field(default_factory=TunnelingModel)
    theta: float = 0.0
    delta: float = 0.125
    grid_m: int = 64
    antichiral_sign: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.antichiral_sign not in (1, -1):
            raise ValueError("antichiral_sign must be +1 or -1")

    @classmethod
    def free(cls, **kw) -> "DOSModel":
        return cls("free", TunnelingModel(alpha0=0.0, alpha1=0.0), **kw)

    @classmethod
    def chiral(cls, alpha1: float = 1.0, tunneling: TunnelingModel | None = None, **kw) -> "DOSModel":
        base = tunneling or TunnelingModel()
        return cls("chiral", base.with_alphas(alpha0=0.0, alpha1=alpha1), **kw)

    @classmethod
    def antichiral(cls, alpha0: float = 1.0, theta: float = 0.0, tunneling: TunnelingModel | None = None, **kw) -> "DOSModel":
        base = tunneling or TunnelingModel()
        return cls("antichiral", base.with_alphas(alpha0=alpha0, alpha1=0.0), theta=theta, **kw)

    @cached_property
    def ave_frak_U(self) -> float:
        if self.kind != "chiral" or self.tunneling.alpha1 == 0:
            return 0.0
        return ave_frak_U_parseval(self.tunneling)

    @cached_property
    def potential_norm(self) -> float:
        """``||script V||_inf`` of the interaction used by this model."""
        if self.kind == "free":
            return 0.0
        t = self.tunneling
        if self.kind == "chiral":
            t = t.with_alphas(alpha0=0.0)
        else:
            t = t.with_alphas(alpha1=0.0)
        return sup_norm_V(t, max(self.grid_m, 32))

    @cached_property
    def _orbits(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell grid folded by the symmetries of ``|V|``.

        ``|V(omega z)| = |V(z)|`` always, and ``|V(-z)| = |V(z)|`` when the
        coefficients are real.  These maps permute the grid points, by
        ``(i, j) -> (-j, i - j)`` and ``(i, j) -> (-i, -j)`` mod ``m``; each
        orbit is represented by its smallest index and weighted by its size.
        """
        m = self.grid_m
        i, j = np.divmod(np.arange(m * m), m)
        images = []
        for _ in range(3):
            images.append((i % m) * m + j % m)
            i, j = -j, i - j
        if all(complex(g).imag == 0 for g in self.tunneling.gamma.values()):
            images += [(-(k // m) % m) * m + (-(k % m)) % m for k in images]
        rep = np.min(np.stack(images), axis=0)
        idx, counts = np.unique(rep, return_counts=True)
        z = cell_grid(MoireLattice(), m).z[idx]
        return np.abs(self.tunneling.V(z)), counts / float(m * m)

    @property
    def abs_V(self) -> np.ndarray:
        """``|V|`` at the orbit representatives of the cell grid."""
        return self._orbits[0]

    @property
    def cell_weights(self) -> np.ndarray:
        """Quadrature weights matching :attr:`abs_V`; they sum to 1."""
        return self._orbits[1]

    def shifts(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Cell samples of ``(c_n, s_n)`` for the anti-chiral model."""
        a0v = self.tunneling.alpha0 * self.abs_V
        if n == 0:
            return a0v, a0v
        return np.cos(self.theta / 2) * a0v, np.sin(self.theta / 2) * a0v


@dataclass(frozen=True)
class BandWindow:
    n: int
    lo: float
    hi: float

    @property
    def valid(self) -> bool:
        return self.lo < self.hi


@dataclass(frozen=True)
class BandTerm:
    n: int
    leading: float
    correction: float
    error_scale: float


@dataclass
class DOSExpansion:
    """Per-band expansion terms; ``error_scale`` is metadata only."""

    kind: str
    B: float
    bands: list[BandTerm]
    params: dict = field(default_factory=dict)

    @property
    def total(self) -> float:
        return float(sum(b.leading + b.correction for b in self.bands))

    @property
    def leading(self) -> float:
        return float(sum(b.leading for b in self.bands))

    @property
    def correction(self) -> float:
        return float(sum(b.correction for b in self.bands))


def band_window(n: int, B: float, model: DOSModel | float = 0.0) -> BandWindow:
    """Spectral window ``(lambda_{n-1} + ||V||, lambda_{n+1} - ||V||)`` of band ``n``.

    Raises
    ------
    GapClosedError
        If either neighbouring Landau gap is at most ``2 ||V||``, i.e. the
        band supports of adjacent levels may overlap.
    """
    v = model.potential_norm if isinstance(model, DOSModel) else float(model)
    lam_m, lam, lam_p = (landau_level(j, B) for j in (n - 1, n, n + 1))
    w = BandWindow(n, lam_m + v, lam_p - v)
    if min(lam - lam_m, lam_p - lam) <= 2 * v:
        raise GapClosedError(f"Landau gap around band {n} at B={B} is below 2||V|| = {2 * v}")
    return w


def _band_list(bands) -> list[int]:
    if isinstance(bands, (int, np.integer)):
        return list(range(-int(bands), int(bands) + 1))
    return [int(n) for n in bands]


def _check(f: TestFunction, bands: Sequence[int], B: float, model: DOSModel, strict: bool) -> None:
    if not strict:
        return
    for n in bands:
        band_window(n, B, model)
    sup = f.support
    if sup is None or not np.isfinite(sup[0]) or not np.isfinite(sup[1]):
        return
    v = model.potential_norm
    lo = landau_level(min(bands) - 1, B) + v
    hi = landau_level(max(bands) + 1, B) - v
    tol = 1e-12 * max(1.0, abs(lo), abs(hi))
    if sup[0] < lo - tol or sup[1] > hi + tol:
        raise SupportError(f"test function support {sup} leaves the band windows ({lo}, {hi})")


def error_scale(B: float, delta: float, smoothness: float) -> float:
    """``B^(4 delta - 1/2) + B^(1 - (K-1) delta)`` with ``f`` in ``C^(K+1)``."""
    K = smoothness - 1
    second = 0.0 if K == inf else B ** (1.0 - (K - 1) * delta)
    return float(B ** (4 * delta - 0.5) + second)


def _levels(bl: Sequence[int], B: float) -> tuple[np.ndarray, np.ndarray]:
    """``lambda_{n,B}`` and ``d lambda_{n,B} / dB`` for every band in ``bl``."""
    n = np.asarray(bl, dtype=float)
    unit = np.sign(n) * np.sqrt(2 * np.abs(n))
    return unit * np.sqrt(B), unit / (2 * np.sqrt(B))


def _moments(f: TestFunction, bl: Sequence[int], lam: np.ndarray, model: DOSModel, orders: Iterable[int]) -> dict:
    """Per-band ``Ave(f^(k)(lambda+c) + f^(k)(lambda-c))`` and the ``s^2``-weighted average.

    All bands are evaluated in one call per derivative order.
    """
    rows = [model.shifts(n) for n in bl]
    C = np.stack([r[0] for r in rows])
    S2 = np.stack([r[1] ** 2 for r in rows])
    X = np.concatenate([lam[:, None] + C, lam[:, None] - C])
    nb = len(bl)
    out = {}
    for k in orders:
        v = f.derivative(X, k)
        pair = (v[:nb] + v[nb:]) * model.cell_weights
        out[k] = (pair.sum(axis=1), (S2 * pair).sum(axis=1))
    return out


def _terms(f: TestFunction, bands, B: float, model: DOSModel, strict: bool, derivative: bool) -> DOSExpansion:
    if B <= 0:
        raise ValueError("B must be positive")
    bl = _band_list(bands)
    _check(f, bl, B, model, strict)
    es = error_scale(B, model.delta, f.smoothness)
    lam, lb = _levels(bl, B)
    absn = np.abs(np.asarray(bl, dtype=float))
    if model.kind in ("free", "chiral"):
        ave = model.ave_frak_U if model.kind == "chiral" else 0.0
        if derivative:
            lead = f.derivative(lam, 0) / pi + B / pi * f.derivative(lam, 1) * lb
            corr = absn / (2 * pi) * ave * f.derivative(lam, 3) * lb if ave else np.zeros_like(lam)
        else:
            lead = B / pi * f.derivative(lam, 0)
            corr = absn / (2 * pi) * ave * f.derivative(lam, 2) if ave else np.zeros_like(lam)
    else:
        sgn, rB = model.antichiral_sign, np.sqrt(B)
        if derivative:
            m = _moments(f, bl, lam, model, (0, 1, 2))
            t0, t1 = m[0][0], m[1][1]
            dt0, dt1 = m[1][0], m[2][1]
            lead = t0 / (2 * pi) + B / (2 * pi) * dt0 * lb
            corr = sgn * (t1 / (4 * pi * rB) + rB / (2 * pi) * dt1 * lb)
        else:
            m = _moments(f, bl, lam, model, (0, 1))
            lead = B / (2 * pi) * m[0][0]
            corr = sgn * rB / (2 * pi) * m[1][1]
    terms = [BandTerm(n, float(a), float(b), es) for n, a, b in zip(bl, lead, corr)]
    params = {"delta": model.delta, "theta": model.theta}
    if derivative:
        params["derivative"] = "B"
    return DOSExpansion(model.kind, B, terms, params)


def _trace(f, bands, B, model: DOSModel, strict: bool) -> DOSExpansion:
    return _terms(f, bands, B, model, strict, derivative=False)


def trace_free(f: TestFunction, bands, B: float, strict: bool = True) -> DOSExpansion:
    """Regularised trace of ``f`` for two decoupled magnetic Dirac sheets."""
    return _trace(f, bands, B, DOSModel.free(), strict)


def trace_chiral(f: TestFunction, bands, B: float, model: DOSModel | TunnelingModel, strict: bool = True) -> DOSExpansion:
    """Chiral-model trace expansion with the ``Ave(frakU) f''`` correction."""
    if isinstance(model, TunnelingModel):
        model = DOSModel.chiral(model.alpha1, model)
    if model.kind != "chiral":
        raise ValueError("trace_chiral needs a chiral model")
    return _trace(f, bands, B, model, strict)


def trace_antichiral(
    f: TestFunction, bands, B: float, theta: float | None = None, model: DOSModel | TunnelingModel | None = None, strict: bool = True
) -> DOSExpansion:
    """Anti-chiral trace expansion through the moments ``t_{n,0}``, ``t_{n,1}``."""
    if model is None or isinstance(model, TunnelingModel):
        t = model or TunnelingModel()
        model = DOSModel.antichiral(t.alpha0, theta or 0.0, t)
    elif theta is not None and theta != model.theta:
        model = DOSModel(model.kind, model.tunneling, theta, model.delta, model.grid_m, model.antichiral_sign)
    if model.kind != "antichiral":
        raise ValueError("trace_antichiral needs an anti-chiral model")
    return _trace(f, bands, B, model, strict)


def trace(f: TestFunction, bands, B: float, model: DOSModel, strict: bool = True) -> DOSExpansion:
    """Dispatch to the trace expansion of ``model.kind``."""
    return _trace(f, bands, B, model, strict)


def dtrace_dB(f: TestFunction, bands, B: float, model: DOSModel, strict: bool = True) -> DOSExpansion:
    """Analytic ``B``-derivative of the truncated expansion at fixed ``f``.

    Each retained term is differentiated through ``lambda_{n,B}`` with
    ``d lambda_n / dB = sgn(n) sqrt(2|n|) / (2 sqrt(B))``.
    """
    return _terms(f, bands, B, model, strict, derivative=True)


def band_plateau(n: int, B: float, model: DOSModel, order: int = 9) -> TestFunction:
    """Plateau equal to 1 on the spectral support of band ``n`` inside its window."""
    w = band_window(n, B, model)
    v = model.potential_norm
    lam = landau_level(n, B)
    inner_lo = lam - v - 0.5 * (lam - v - w.lo)
    inner_hi = lam + v + 0.5 * (w.hi - lam - v)
    return plateau(w.lo, inner_lo, inner_hi, w.hi, order)


def integrated_dos_per_band(model: DOSModel, n: int, B: float) -> float:
    """Number of states per unit area in band ``n`` (a multiple of ``B/2pi``)."""
    f = band_plateau(n, B, model)
    return trace(f, [n], B, model).total
