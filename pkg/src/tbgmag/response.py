"""Magnetic response observables built on the trace expansions.

All observables are traces of test functions assembled in the
:mod:`tbgmag.testfunction` algebra, so their ``B``-derivatives are exact
termwise derivatives of the truncated expansions.  The band cutoff
``eta_N`` is a smooth plateau in the scaled variable ``u = lambda/sqrt(2B)``
whose shoulders sit in the middle of the Landau gaps; it therefore moves
with ``B`` and its own ``B``-derivative is included in every ``B``-derivative.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from math import pi, sqrt
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit

from .dos import DOSModel, dtrace_dB, trace
from .landau_special import landau_level
from .testfunction import (
    Derivative,
    Poly,
    Product,
    TestFunction,
    fermi_dirac,
    free_energy_kernel,
    plateau,
)

CUTOFF_KINDS = ("one_sided", "symmetric")


def fermi(beta: float, x):
    """Fermi-Dirac occupation ``n_beta(x) = 1 / (exp(beta x) + 1)``."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    return expit(-beta * np.asarray(x, dtype=float))


def fbeta(beta: float, x):
    """``f_beta(x) = -log(exp(beta x) + 1) / beta``, stable for large ``|beta x|``."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    return -np.logaddexp(0.0, beta * np.asarray(x, dtype=float)) / beta


@dataclass(frozen=True)
class Cutoff:
    """Band cutoff ``eta_N``.

    Parameters
    ----------
    kind : {"one_sided", "symmetric"}
        Equal to 1 on ``[0, sqrt(2BN)]`` or on ``[-sqrt(2BN), sqrt(2BN)]``.
    N : int
        Index of the last retained Landau level.
    shoulder : float
        Width of each transition as a fraction of the gap it sits in; the
        transition is centred in the gap.
    order : int
        Continuity order of the smoothstep shoulders.
    """

    kind: str = "one_sided"
    N: int = 10
    shoulder: float = 0.5
    order: int = 9

    def __post_init__(self):
        if self.kind not in CUTOFF_KINDS:
            raise ValueError(f"unknown cutoff kind {self.kind!r}")
        if self.N < 1:
            raise ValueError("N must be at least 1")
        if not 0 < self.shoulder < 1:
            raise ValueError("shoulder must lie in (0, 1)")

    def scaled(self) -> TestFunction:
        """Profile ``h(u)`` with ``eta_N(lambda; B) = h(lambda / sqrt(2B))``."""
        top = sqrt(self.N)
        g = sqrt(self.N + 1) - top
        c = top + 0.5 * g
        w = 0.5 * self.shoulder * g
        if self.kind == "one_sided":
            lo, inner_lo = -0.5 - 0.5 * self.shoulder, -0.5 + 0.5 * self.shoulder
        else:
            lo, inner_lo = -c - w, -c + w
        return plateau(lo, inner_lo, c - w, c + w, self.order)

    def function(self, B: float) -> TestFunction:
        return self.scaled().affine(1.0 / sqrt(2 * B), 0.0)

    def dB(self, B: float) -> TestFunction:
        """``d eta_N / dB = -h'(u) u / (2B)`` as a test function of ``lambda``."""
        h = self.scaled()
        return (Product(Poly([0.0, 1.0]), Derivative(h, 1)) * (-0.5 / B)).affine(1.0 / sqrt(2 * B), 0.0)

    def bands(self) -> list[int]:
        return list(range(-self.N, self.N + 1))


@dataclass(frozen=True)
class ThermoParams:
    beta: float
    mu: float
    B: float
    N: int = 10

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.B <= 0:
            raise ValueError("B must be positive")
        if self.N < 1:
            raise ValueError("N must be at least 1")


@dataclass
class ResponseCurve:
    """Observable sampled along one sweep variable."""

    sweep: str
    points: np.ndarray
    values: np.ndarray
    model: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        d = np.diff(self.points)
        if len(d) and not (np.all(d > 0) or np.all(d < 0)):
            raise ValueError("sweep points must be strictly monotone")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("response values must be finite")


def _cut(tp: ThermoParams, kind: str) -> Cutoff:
    return Cutoff(kind, tp.N)


def _tr(g: TestFunction, tp: ThermoParams, model: DOSModel, cut: Cutoff, strict: bool) -> float:
    return trace(g, cut.bands(), tp.B, model, strict).total


def _dtr(g: TestFunction, tp: ThermoParams, model: DOSModel, cut: Cutoff, strict: bool) -> float:
    return dtrace_dB(g, cut.bands(), tp.B, model, strict).total


def sigma_xx(tp: ThermoParams, model: DOSModel, strict: bool = True) -> float:
    """Longitudinal conductivity ``-rho(n_beta'(lambda - mu) lambda eta_N^sym)``."""
    cut = _cut(tp, "symmetric")
    g = Product(Derivative(fermi_dirac(tp.beta, tp.mu), 1), Product(Poly([0.0, 1.0]), cut.function(tp.B)))
    return -_tr(g, tp, model, cut, strict)


def grand_potential(tp: ThermoParams, model: DOSModel, strict: bool = True, cutoff: str = "one_sided") -> float:
    """``Omega = rho(f_beta(mu - lambda) eta_N(lambda))``."""
    cut = _cut(tp, cutoff)
    g = Product(free_energy_kernel(tp.beta, tp.mu), cut.function(tp.B))
    return _tr(g, tp, model, cut, strict)


def magnetization(tp: ThermoParams, model: DOSModel, strict: bool = True, cutoff: str = "one_sided") -> float:
    """``M = -dOmega/dB`` including the motion of the cutoff shoulders."""
    cut = _cut(tp, cutoff)
    k = free_energy_kernel(tp.beta, tp.mu)
    g = Product(k, cut.function(tp.B))
    dg = Product(k, cut.dB(tp.B))
    return -(_dtr(g, tp, model, cut, strict) + _tr(dg, tp, model, cut, strict))


def susceptibility(
    tp: ThermoParams, model: DOSModel, strict: bool = True, cutoff: str = "one_sided", rel_step: float = 1e-3
) -> float:
    """``chi = dM/dB`` by a central difference with step ``rel_step * B``."""
    h = rel_step * tp.B
    up = magnetization(replace(tp, B=tp.B + h), model, strict, cutoff)
    dn = magnetization(replace(tp, B=tp.B - h), model, strict, cutoff)
    return (up - dn) / (2 * h)


def charge_density(tp: ThermoParams, model: DOSModel, strict: bool = True, cutoff: str = "one_sided") -> float:
    """``rho(eta_N n_beta(. - mu)) = -dOmega/dmu``."""
    cut = _cut(tp, cutoff)
    g = Product(fermi_dirac(tp.beta, tp.mu), cut.function(tp.B))
    return _tr(g, tp, model, cut, strict)


def _mu_bracket(B: float, N: int, model: DOSModel) -> tuple[float, float]:
    v = model.potential_norm
    return landau_level(-N - 1, B) + v, landau_level(N + 1, B) - v


def chemical_potential(
    rho_target: float,
    B: float,
    beta: float,
    model: DOSModel,
    N: int = 10,
    strict: bool = True,
    cutoff: str = "one_sided",
    xtol: float = 1e-12,
) -> float:
    """Invert ``mu -> charge_density`` by bracketed root finding.

    The bracket starts at the outer band windows and is widened by one
    Landau gap at a time (up to eight times) if the target sits on an edge
    plateau.

    Raises
    ------
    ValueError
        If ``rho_target`` is not attained inside the widened bracket.
    """
    lo, hi = _mu_bracket(B, N, model)
    step = landau_level(N + 1, B) - landau_level(N, B)

    def F(mu):
        return charge_density(ThermoParams(beta, mu, B, N), model, strict, cutoff) - rho_target

    flo, fhi = F(lo), F(hi)
    for _ in range(8):
        if flo <= 0 <= fhi:
            break
        if flo > 0:
            lo -= step
            flo = F(lo)
        if fhi < 0:
            hi += step
            fhi = F(hi)
    else:
        if not flo <= 0 <= fhi:
            raise ValueError(f"charge density {rho_target} not attained on [{lo}, {hi}]")
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    return brentq(F, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps)


def canonical_magnetization(
    rho_target: float, B: float, beta: float, model: DOSModel, N: int = 10, strict: bool = True, cutoff: str = "one_sided"
) -> float:
    """Magnetization at the chemical potential fixed by ``rho_target``."""
    mu = chemical_potential(rho_target, B, beta, model, N, strict, cutoff)
    return magnetization(ThermoParams(beta, mu, B, N), model, strict, cutoff)


def hall_streda(tp: ThermoParams, model: DOSModel, strict: bool = True, cutoff: str = "one_sided") -> float:
    """Streda Hall conductivity ``d/dB rho(eta_N n_beta(. - mu))``."""
    cut = _cut(tp, cutoff)
    n = fermi_dirac(tp.beta, tp.mu)
    g = Product(n, cut.function(tp.B))
    dg = Product(n, cut.dB(tp.B))
    return _dtr(g, tp, model, cut, strict) + _tr(dg, tp, model, cut, strict)


def _levels(tp: ThermoParams) -> np.ndarray:
    n = np.arange(-tp.N, tp.N + 1)
    return np.sign(n) * np.sqrt(2.0 * np.abs(n) * tp.B)


def hall_chiral_explicit(tp: ThermoParams, model: DOSModel) -> float:
    """Two-sum chiral Hall formula written with the Gibbs factor ``gamma``.

    Every product ``gamma^k n^m`` is evaluated as ``n(-x)^k n(x)^(m-k)`` so
    nothing is exponentiated on its own; the ``(1 + o(1))`` factor is dropped.
    """
    lam = _levels(tp)
    x = lam - tp.mu
    n = expit(-tp.beta * x)
    m = expit(tp.beta * x)  # gamma * n
    first = np.sum(n / pi * (1.0 - 0.5 * tp.beta * lam * m))
    ave = model.ave_frak_U if model.kind == "chiral" else 0.0
    gibbs = n**3 * m - 4.0 * n**2 * m**2 + n * m**3
    # lambda_n |lambda_n|^2 / sqrt(B) in unit levels is lambda_{n,B}^3 / B^2
    second = np.sum(-lam * np.abs(lam) ** 2 / tp.B**2 * tp.beta**3 * ave / (4 * pi) * gibbs)
    return float(first + second)


@dataclass(frozen=True)
class StaircaseValue:
    """High-temperature Hall sum with and without neutrality subtraction."""

    raw: float
    subtracted: float

    @property
    def raw_pi(self) -> float:
        return self.raw * pi

    @property
    def subtracted_pi(self) -> float:
        return self.subtracted * pi


def hall_staircase(tp: ThermoParams) -> StaircaseValue:
    """``sum_n n_beta(lambda_{n,B} - mu) / pi`` and its value relative to ``mu = 0``."""
    lam = _levels(tp)
    raw = float(np.sum(expit(-tp.beta * (lam - tp.mu))) / pi)
    zero = float(np.sum(expit(-tp.beta * lam)) / pi)
    return StaircaseValue(raw, raw - zero)


def hall_antichiral(tp: ThermoParams, model: DOSModel) -> float:
    """``sum_n [t_{n,0}(n_beta(. - mu)) - t_{n,1}(n_beta(. - mu)) / (2 sqrt(B))]``."""
    f = fermi_dirac(tp.beta, tp.mu)
    total = 0.0
    for n in range(-tp.N, tp.N + 1):
        lam = landau_level(n, tp.B)
        c, s = model.shifts(n) if model.kind == "antichiral" else (np.zeros(1), np.zeros(1))
        w = model.cell_weights if model.kind == "antichiral" else np.ones(1)
        t0 = np.sum(w * (f(lam + c) + f(lam - c)))
        t1 = np.sum(w * s * s * (f.derivative(lam + c, 1) + f.derivative(lam - c, 1)))
        total += t0 - t1 / (2 * sqrt(tp.B))
    return float(total)


def sweep(
    observable: Callable[[ThermoParams], float],
    base: ThermoParams,
    variable: str,
    points: Sequence[float],
    model_tag: str = "",
    threads: int = 1,
    params: dict | None = None,
) -> ResponseCurve:
    """Evaluate ``observable`` along ``mu``, ``B`` or ``invB``.

    Each sample is an independent pure evaluation, so the result does not
    depend on ``threads``.
    """
    if variable not in ("mu", "B", "invB"):
        raise ValueError(f"unknown sweep variable {variable!r}")
    pts = [float(p) for p in points]

    def at(p: float) -> float:
        if variable == "mu":
            tp = replace(base, mu=p)
        elif variable == "B":
            tp = replace(base, B=p)
        else:
            tp = replace(base, B=1.0 / p)
        return float(observable(tp))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            vals = list(pool.map(at, pts))
    else:
        vals = [at(p) for p in pts]
    meta = {"base": asdict(base)}
    meta.update(params or {})
    return ResponseCurve(variable, np.array(pts), np.array(vals), model_tag, meta)
