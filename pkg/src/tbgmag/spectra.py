"""Plane-wave spectral solvers.

Functions on the torus are expanded in ``e_q`` with ``q = m1 eta1 + m2 eta2``
and ``|m1|, |m2| <= N``.  In this basis ``2 D_zbar + k`` is diagonal with
entries ``q + k`` and multiplication by a trigonometric polynomial is a
banded convolution matrix.

Potentials couple only Fourier modes that differ by their support, so the
matrices split into independent blocks (connected components of the
coupling graph).  Every solver below works block by block; for the default
tunneling model without a field there are nine such blocks, each a copy of
the same problem at a shifted quasi-momentum.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import linear_sum_assignment
from scipy.sparse.csgraph import connected_components

from .lattice import OMEGA, MoireLattice, TrigPolynomial, cell_grid
from .potentials import TunnelingModel, magnetic_field_of, squeezing_condition

DUAL_TOL = 1e-8
# Magic parameters up to this modulus are converged at the default cutoffs.
RESOLVED_RADIUS = 2.5
_LAT = MoireLattice()


class SingularResolventError(ArithmeticError):
    """The Fourier symbol of ``2 D_zbar + k`` vanishes (``k`` in the dual lattice)."""


@dataclass(frozen=True)
class PlaneWaveBasis:
    """Fourier modes ``|m1|, |m2| <= N`` for a number of spinor components.

    Rows are ordered ``component``-major, then ``m1``, then ``m2``.
    """

    cutoff_N: int
    momentum_k: complex = 0j
    components: int = 2

    @property
    def side(self) -> int:
        return 2 * self.cutoff_N + 1

    @property
    def dim(self) -> int:
        return self.components * self.side**2

    def index(self, m1, m2, component=0):
        N, L = self.cutoff_N, self.side
        return component * L * L + (np.asarray(m1) + N) * L + (np.asarray(m2) + N)

    def mode(self, row):
        N, L = self.cutoff_N, self.side
        c, r = np.divmod(np.asarray(row), L * L)
        m1, m2 = np.divmod(r, L)
        return m1 - N, m2 - N, c

    def scalar_modes(self) -> tuple[np.ndarray, np.ndarray]:
        m = np.arange(-self.cutoff_N, self.cutoff_N + 1)
        m1, m2 = np.meshgrid(m, m, indexing="ij")
        return m1.ravel(), m2.ravel()

    def wavevectors(self) -> np.ndarray:
        m1, m2 = self.scalar_modes()
        return _LAT.dual_vector(m1, m2)


@dataclass
class SpectralResult:
    """Eigenvalues of a truncated spectral problem.

    ``convergence_gap`` is the change of the leading eigenvalues between
    cutoffs ``N - 4`` and ``N`` (``nan`` when the comparison was skipped).
    """

    eigenvalues: np.ndarray
    truncation_N: int
    convergence_gap: float
    meta: dict = field(default_factory=dict)


def convolution_matrix(poly: TrigPolynomial, N: int) -> sp.csr_matrix:
    """Matrix of multiplication by ``poly`` on the scalar basis of cutoff ``N``."""
    L = 2 * N + 1
    n = L * L
    if not poly.coeffs:
        return sp.csr_matrix((n, n), dtype=complex)
    m = np.arange(-N, N + 1)
    M1, M2 = np.meshgrid(m, m, indexing="ij")
    M1, M2 = M1.ravel(), M2.ravel()
    cols = np.arange(n)
    rows_all, cols_all, vals_all = [], [], []
    for (p1, p2), c in poly.coeffs.items():
        t1, t2 = M1 + p1, M2 + p2
        ok = (np.abs(t1) <= N) & (np.abs(t2) <= N)
        rows_all.append((t1[ok] + N) * L + t2[ok] + N)
        cols_all.append(cols[ok])
        vals_all.append(np.full(ok.sum(), c, dtype=complex))
    return sp.csr_matrix(
        (np.concatenate(vals_all), (np.concatenate(rows_all), np.concatenate(cols_all))), shape=(n, n)
    )


def check_momentum(k: complex) -> None:
    if _LAT.distance_to_dual_lattice(k) <= DUAL_TOL:
        raise SingularResolventError("k in dual lattice")


def _field(A_fourier) -> TrigPolynomial:
    if A_fourier is None:
        return TrigPolynomial({})
    if isinstance(A_fourier, TrigPolynomial):
        return A_fourier
    return TrigPolynomial(A_fourier)


def _blocks(*mats) -> list[np.ndarray]:
    """Row index sets of the connected components of the coupling graph."""
    pattern = abs(mats[0])
    for M in mats[1:]:
        pattern = pattern + abs(M)
    pattern = (pattern + pattern.T).tocsr()
    ncomp, labels = connected_components(pattern, directed=False)
    order = np.argsort(labels, kind="stable")
    bounds = np.flatnonzero(np.diff(labels[order])) + 1
    return [np.sort(b) for b in np.split(order, bounds)]


def _major_blocks(blocks: list[np.ndarray], dim: int) -> list[np.ndarray]:
    """Blocks that are not truncation-boundary fragments."""
    big = max(len(b) for b in blocks)
    return [b for b in blocks if len(b) >= 0.5 * big]


def _sort_bs(ev: np.ndarray) -> np.ndarray:
    ev = np.asarray(ev, dtype=complex)
    order = np.lexsort((np.round(ev.imag, 12), np.round(ev.real, 12), -np.round(np.abs(ev), 12)))
    return ev[order]


def multiset_distance(a, b, min_modulus: float = 0.0) -> float:
    """Distance between the eigenvalue multisets ``{|mu| >= min_modulus}``.

    When both sets have the same size the optimal one-to-one matching is
    used and the largest matched distance is returned.  Otherwise each point
    above the threshold is matched to the nearest point of the full other
    set (a symmetric Hausdorff distance).
    """
    a, b = np.asarray(a, dtype=complex), np.asarray(b, dtype=complex)
    sa, sb = a[np.abs(a) >= min_modulus], b[np.abs(b) >= min_modulus]
    if sa.size == 0 and sb.size == 0:
        return 0.0
    if sa.size == sb.size:
        d = np.abs(sa[:, None] - sb[None, :])
        i, j = linear_sum_assignment(d)
        return float(d[i, j].max())
    if a.size == 0 or b.size == 0:
        return float("inf")
    d1 = np.abs(sa[:, None] - b[None, :]).min(axis=1).max(initial=0.0)
    d2 = np.abs(sb[:, None] - a[None, :]).min(axis=1).max(initial=0.0)
    return float(max(d1, d2))


def birman_schwinger_operator(model: TunnelingModel, k: complex, A_fourier=None, N: int = 24):
    """Sparse pair ``(D, W)`` with ``T_k = D^{-1} W``.

    ``D = diag(2 D_zbar + k - A)`` on both components and
    ``W = [[0, U], [U_-, 0]]``.
    """
    check_momentum(k)
    basis = PlaneWaveBasis(N, k, 2)
    q = basis.wavevectors()
    A = _field(A_fourier)
    d = sp.diags(q + k) - convolution_matrix(A, N)
    D = sp.block_diag([d, d], format="csr")
    U = convolution_matrix(model.U, N)
    Um = convolution_matrix(model.Uminus, N)
    W = sp.bmat([[None, U], [Um, None]], format="csr")
    return D, W


def _bs_eigs(model, k, A_fourier, N) -> np.ndarray:
    D, W = birman_schwinger_operator(model, k, A_fourier, N)
    out = []
    for idx in _blocks(D, W):
        Db = D[idx][:, idx].toarray()
        Wb = W[idx][:, idx].toarray()
        if not np.any(Wb):
            out.append(np.zeros(len(idx), dtype=complex))
            continue
        out.append(la.eigvals(la.solve(Db, Wb)))
    return _sort_bs(np.concatenate(out))


def birman_schwinger_spectrum(
    model: TunnelingModel,
    k: complex,
    A_fourier=None,
    N: int = 24,
    convergence_check: bool = True,
    resolved_radius: float = RESOLVED_RADIUS,
) -> SpectralResult:
    """All eigenvalues of the truncated Birman-Schwinger operator ``T_k``.

    Magic parameters are reciprocals of the eigenvalues.

    Parameters
    ----------
    resolved_radius : float
        ``convergence_gap`` compares eigenvalues with ``|1/mu| <= resolved_radius``
        between cutoffs ``N - 4`` and ``N``.

    Raises
    ------
    SingularResolventError
        If ``k`` lies on the dual lattice.
    """
    if N < 8:
        raise ValueError("cutoff N must be at least 8")
    ev = _bs_eigs(model, k, A_fourier, N)
    gap = float("nan")
    if convergence_check:
        prev = _bs_eigs(model, k, A_fourier, N - 4)
        gap = multiset_distance(ev, prev, 1.0 / resolved_radius)
    return SpectralResult(ev, N, gap, {"k": complex(k), "problem": "birman_schwinger"})


@dataclass(frozen=True)
class MagicParameters:
    """Real and complex coupling values ``1/mu`` extracted from a BS spectrum."""

    real: np.ndarray
    real_multiplicity: np.ndarray
    complex: np.ndarray


def magic_parameters(result: SpectralResult, radius: float = 5.0, imag_tol: float = 1e-8, cluster_tol: float = 1e-6) -> MagicParameters:
    """Distinct magic parameters with ``|alpha| <= radius``.

    Eigenvalues with ``|Im| < imag_tol`` and positive reciprocal are real
    magic parameters; the remaining ones are returned as complex values.
    """
    ev = result.eigenvalues
    ev = ev[np.abs(ev) >= 1.0 / radius]
    alphas = 1.0 / ev
    is_real = np.abs(ev.imag) < imag_tol
    real = np.sort(alphas[is_real & (alphas.real > 0)].real)
    vals, mult = [], []
    for a in real:
        if vals and abs(a - vals[-1]) < cluster_tol:
            mult[-1] += 1
        else:
            vals.append(a)
            mult.append(1)
    cplx = alphas[~is_real]
    cplx_unique: list[complex] = []
    for a in cplx[np.lexsort((cplx.imag, cplx.real))]:
        if all(abs(a - b) >= cluster_tol for b in cplx_unique):
            cplx_unique.append(complex(a))
    return MagicParameters(np.array(vals), np.array(mult, dtype=int), np.array(cplx_unique))


# ---------------------------------------------------------------------------
# Floquet Hamiltonians


def chiral_operator(model: TunnelingModel, k: complex, A_fourier=None, N: int = 16) -> sp.csr_matrix:
    """``D_c(k) = [[2D_zbar + k - A, a1 U], [a1 U_-, 2D_zbar + k - A]]``."""
    basis = PlaneWaveBasis(N, k, 2)
    d = sp.diags(basis.wavevectors() + k) - convolution_matrix(_field(A_fourier), N)
    U = model.alpha1 * convolution_matrix(model.U, N)
    Um = model.alpha1 * convolution_matrix(model.Uminus, N)
    return sp.bmat([[d, U], [Um, d]], format="csr")


def antichiral_operator(model: TunnelingModel, k: complex, A_fourier=None, N: int = 16, theta: float = 0.0) -> sp.csr_matrix:
    """``D_ac(k)`` with diagonal ``a0 V``, ``a0 conj(V)`` and Dirac off-diagonals."""
    basis = PlaneWaveBasis(N, k, 2)
    q = basis.wavevectors()
    A = _field(A_fourier)
    ph = np.exp(0.5j * theta)
    d1 = ph * (sp.diags(q + k) - convolution_matrix(A, N))
    d2 = ph * (sp.diags(np.conj(q) + np.conj(k)) - convolution_matrix(A.conj(), N))
    V = model.alpha0 * convolution_matrix(model.V, N)
    Vb = model.alpha0 * convolution_matrix(model.V.conj(), N)
    return sp.bmat([[V, d1], [d2, Vb]], format="csr")


def floquet_hamiltonian(D: sp.spmatrix) -> sp.csr_matrix:
    """Self-adjoint block-off-diagonal Hamiltonian ``[[0, D*], [D, 0]]``."""
    return sp.bmat([[None, D.conj().T], [D, None]], format="csr")


def _operator(model, variant, theta, A_fourier, k, N):
    if variant == "chiral":
        return chiral_operator(model, k, A_fourier, N)
    if variant == "antichiral":
        return antichiral_operator(model, k, A_fourier, N, theta)
    raise ValueError("variant must be 'chiral' or 'antichiral'")


def _block_singular_values(D: sp.spmatrix) -> list[np.ndarray]:
    out = []
    for idx in _major_blocks(_blocks(D), D.shape[0]):
        out.append(np.sort(la.svdvals(D[idx][:, idx].toarray())))
    return out


def floquet_bands(
    model: TunnelingModel,
    variant: str = "chiral",
    theta: float = 0.0,
    A_fourier=None,
    k: complex = 0j,
    N: int = 12,
    count: int = 8,
) -> SpectralResult:
    """Eigenvalues of smallest modulus of the Floquet Hamiltonian.

    The Hamiltonian ``[[0, D*], [D, 0]]`` has spectrum ``{+-s}`` where ``s``
    runs over the singular values of ``D``; these are computed blockwise.
    Returned eigenvalues are sorted by value.
    """
    D = _operator(model, variant, theta, A_fourier, k, N)
    if count > 2 * D.shape[0]:
        raise ValueError("count exceeds basis dimension")
    s = []
    for idx in _blocks(D):
        s.append(la.svdvals(D[idx][:, idx].toarray()))
    s = np.sort(np.concatenate(s))
    ev = np.sort(np.concatenate([-s, s]))
    ev = ev[np.argsort(np.abs(ev), kind="stable")[:count]]
    return SpectralResult(np.sort(ev), N, float("nan"), {"k": complex(k), "variant": variant, "theta": theta})


@dataclass
class FlatBandReport:
    """Lowest two band moduli over a k-grid.

    ``fold`` is the number of copies of the reduced band structure inside
    one coupling block (1 without a field, more when the field couples the
    cosets that the tunneling potential keeps apart).
    """

    k_points: np.ndarray
    e0: np.ndarray
    e_second: np.ndarray
    fold: int

    @property
    def flatness_ratio(self) -> float:
        return float(self.e0.max() / self.e_second.min())


def brillouin_grid(n: int, shift: float = 0.5) -> np.ndarray:
    """``n x n`` grid ``((i + shift)/n) eta1 + ((j + shift)/n) eta2``.

    The default half-step shift keeps every point off the dual lattice.
    """
    s = (np.arange(n) + shift) / n
    s1, s2 = np.meshgrid(s, s, indexing="ij")
    return _LAT.dual_vector(s1.ravel(), s2.ravel())


def flat_band_scan(
    model: TunnelingModel,
    variant: str = "chiral",
    theta: float = 0.0,
    A_fourier=None,
    grid_n: int = 6,
    N: int = 16,
) -> FlatBandReport:
    """Scan ``E0(k)`` and the next band over a ``grid_n x grid_n`` k-grid."""
    ks = brillouin_grid(grid_n)
    e0, e1 = [], []
    fold = 1
    for k in ks:
        D = _operator(model, variant, theta, A_fourier, k, N)
        blocks = _major_blocks(_blocks(D), D.shape[0])
        fold = max(1, 9 // len(blocks)) if variant == "chiral" else 1
        svs = [np.sort(la.svdvals(D[idx][:, idx].toarray())) for idx in blocks]
        e0.append(min(s[0] for s in svs))
        e1.append(min(s[fold] for s in svs))
    return FlatBandReport(ks, np.array(e0), np.array(e1), fold)


def zero_protected_potential(A_fourier, n: int = 0) -> bool:
    """Whether a periodic potential satisfies the symmetry hypotheses for
    the anti-chiral zero-energy protection.

    The potential must be periodic under the translations
    ``(8 + 12 n)/3 pi i omega^l`` (Fourier modes with both integer
    coordinates divisible by 3) and satisfy ``conj(omega) A(omega z) = A(z)``.
    """
    A = _field(A_fourier)
    if int(n) != n or n < 0:
        raise ValueError("sublattice index must be a nonnegative integer")
    if any(m1 % 3 or m2 % 3 for m1, m2 in A.coeffs):
        return False
    # A(omega z) has coefficient c_q at wavevector conj(omega) q.
    rotated = {}
    for (m1, m2), c in A.coeffs.items():
        q = _LAT.dual_vector(m1, m2) * np.conj(OMEGA)
        x1, x2 = _LAT.dual_coordinates(q)
        rotated[(int(round(x1)), int(round(x2)))] = np.conj(OMEGA) * c
    R = TrigPolynomial(rotated)
    keys = set(R.coeffs) | set(A.coeffs)
    return all(abs(R.coeffs.get(m, 0) - A.coeffs.get(m, 0)) < 1e-12 for m in keys)


def smallest_singular_value(D: sp.spmatrix, count: int = 1) -> np.ndarray:
    """Smallest singular values of a sparse square matrix via sparse LU.

    Uses Lanczos on ``(D D*)^{-1}``; backward stability of the LU solve gives
    absolute accuracy of order ``eps ||D||``.
    """
    lu = spla.splu(sp.csc_matrix(D))
    n = D.shape[0]
    op = spla.LinearOperator((n, n), matvec=lambda x: lu.solve(lu.solve(x), trans="H"), dtype=complex)
    v0 = np.ones(n, dtype=complex) / np.sqrt(n)
    ev = spla.eigsh(op, k=count, which="LM", return_eigenvectors=False, tol=1e-12, v0=v0)
    return np.sort(1.0 / np.sqrt(np.abs(ev)))


def semiclassical_operator(model: TunnelingModel, theta: float, k: complex, A_fourier=None, N: int = 64) -> sp.csr_matrix:
    """``[[Df, a1 U], [a1 U_-, Df]]`` with ``Df = e^{i theta/2}(theta (2D_zbar + k) - A)``."""
    basis = PlaneWaveBasis(N, k, 2)
    A = _field(A_fourier)
    d = np.exp(0.5j * theta) * (theta * sp.diags(basis.wavevectors() + k) - convolution_matrix(A, N))
    U = model.alpha1 * convolution_matrix(model.U, N)
    Um = model.alpha1 * convolution_matrix(model.Uminus, N)
    return sp.bmat([[d, U], [Um, d]], format="csc")


def squeezing_cutoff(theta: float, A_fourier=None, factor: float = 2.4) -> int:
    """Plane-wave cutoff resolving the classically allowed region at angle ``theta``."""
    deg = _field(A_fourier).degree()
    return int(np.ceil(factor * (3 + deg) / theta))


@dataclass
class SqueezingReport:
    """Fit of ``log E0`` against ``1/theta``."""

    thetas: np.ndarray
    e0: np.ndarray
    cutoffs: np.ndarray
    slope: float
    intercept: float
    r_squared: float
    condition_satisfied: bool

    @property
    def flagged(self) -> bool:
        return not self.condition_satisfied


class SqueezingConditionWarning(UserWarning):
    """The squeezing condition vanishes on the whole sample grid."""


def squeezing_condition_holds(model: TunnelingModel, A_fourier=None, grid_m: int = 32, tol: float = 1e-10) -> bool:
    """Whether the squeezing condition is nonzero somewhere on a cell grid."""
    A = _field(A_fourier)
    Bfield = magnetic_field_of(A)
    z = cell_grid(_LAT, grid_m).z
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        val = squeezing_condition(model, lambda x: np.real(Bfield(x)), z)
    return bool(np.any(np.abs(val) > tol))


def squeezing_study(
    model: TunnelingModel,
    A_fourier=None,
    theta_list: Sequence[float] = (0.20, 0.16, 0.12, 0.10, 0.08),
    k: complex = 0.123 + 0.05j,
    N: int | None = None,
) -> SqueezingReport:
    """Smallest singular value of the semiclassical operator versus ``theta``.

    Parameters
    ----------
    N : int, optional
        Fixed plane-wave cutoff; by default chosen per angle by
        :func:`squeezing_cutoff`.
    """
    thetas = np.asarray(theta_list, dtype=float)
    if thetas.size < 5:
        raise ValueError("at least five angles are required")
    if np.any(thetas <= 0) or np.any(np.diff(thetas) >= 0):
        raise ValueError("angles must be positive and strictly decreasing")
    ok = squeezing_condition_holds(model, A_fourier)
    if not ok:
        warnings.warn("squeezing condition vanishes on the sample grid", SqueezingConditionWarning, stacklevel=2)
    e0, cutoffs = [], []
    for th in thetas:
        n = N or squeezing_cutoff(th, A_fourier)
        D = semiclassical_operator(model, th, k, A_fourier, n)
        e0.append(smallest_singular_value(D)[0])
        cutoffs.append(n)
    e0 = np.array(e0)
    x, y = 1.0 / thetas, np.log(e0)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    r2 = 1.0 - np.sum(resid**2) / np.sum((y - y.mean()) ** 2)
    return SqueezingReport(thetas, e0, np.array(cutoffs), float(slope), float(intercept), float(r2), ok)
