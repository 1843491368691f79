import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tbgmag.dos import DOSModel, trace
from tbgmag.landau_special import landau_level
from tbgmag.response import (
    Cutoff,
    ResponseCurve,
    ThermoParams,
    canonical_magnetization,
    charge_density,
    chemical_potential,
    fbeta,
    fermi,
    grand_potential,
    hall_antichiral,
    hall_chiral_explicit,
    hall_staircase,
    hall_streda,
    magnetization,
    sigma_xx,
    susceptibility,
    sweep,
)
from tbgmag.testfunction import fermi_dirac, gaussian

FREE = DOSModel.free()
CHIRAL = DOSModel.chiral(1.0)
SMALL_CHIRAL = DOSModel.chiral(0.6)
ANTI = DOSModel.antichiral(1.0, 0.3)
MODELS = {"free": FREE, "chiral": SMALL_CHIRAL, "antichiral": DOSModel.antichiral(0.6, 0.3)}


def local_maxima(x, y):
    return np.array([x[i] for i in range(1, len(y) - 1) if y[i] > y[i - 1] and y[i] >= y[i + 1]])


# --- Fermi functions ---------------------------------------------------------


def test_fermi_values():
    assert fermi(3.0, 0.0) == 0.5
    assert fermi(1.0, 800.0) == 0.0
    assert fermi(1.0, -800.0) == 1.0
    with pytest.raises(ValueError):
        fermi(0.0, 1.0)
    with pytest.raises(ValueError):
        fbeta(-1.0, 1.0)


def test_fbeta_asymptotics():
    # f_beta(x) = -log(e^{beta x} + 1)/beta: -> 0 as x -> -inf, ~ -x as x -> +inf
    assert fbeta(1.0, -50.0) == pytest.approx(-math.exp(-50.0), rel=1e-12)
    assert fbeta(1.0, 50.0) == pytest.approx(-50.0, rel=1e-15)
    assert np.isfinite(fbeta(2.0, np.array([-350.0, 350.0]))).all()


@settings(max_examples=50)
@given(st.floats(0.1, 100), st.floats(-7, 7))
def test_fbeta_derivative_identity(beta, y):
    x, h = y / beta, 1e-6 / beta
    fd = (fbeta(beta, x + h) - fbeta(beta, x - h)) / (2 * h)
    assert fd == pytest.approx(fermi(beta, x) - 1.0, abs=1e-8)


@settings(max_examples=50)
@given(st.floats(0.1, 100), st.floats(-700, 700))
def test_gibbs_product_bounded(beta, y):
    # gamma n^2 + n with gamma = e^{beta x}, written as n(-x) n(x) + n(x)
    x = y / beta
    n, m = fermi(beta, x), fermi(beta, -x)
    assert 0 <= m * n + n <= 1 + 1e-15


def test_fermi_converges_to_step():
    for lam, mu in ((1.0, 2.0), (3.0, 2.0)):
        assert fermi(500.0, lam - mu) == pytest.approx(1.0 - float(lam > mu), abs=1e-12)


# --- cutoff and parameters ---------------------------------------------------


@pytest.mark.parametrize("kind", ["one_sided", "symmetric"])
def test_cutoff_plateau(kind):
    B, N = 50, 4
    eta = Cutoff(kind, N).function(B)
    top = math.sqrt(2 * B * N)
    lo = -top if kind == "symmetric" else 0.0
    np.testing.assert_allclose(eta(np.linspace(lo, top, 21)), 1.0)
    assert eta(landau_level(N + 1, B)) == 0.0
    assert eta(landau_level(-N - 1, B)) == 0.0
    assert eta.smoothness >= 8


def test_cutoff_one_sided_excludes_negative_levels():
    eta = Cutoff("one_sided", 3).function(50)
    assert eta(landau_level(-1, 50)) == 0.0


def test_cutoff_dB_matches_finite_difference():
    c = Cutoff("symmetric", 5)
    x = np.linspace(-40, 40, 81)
    B, h = 30.0, 1e-4
    fd = (c.function(B + h)(x) - c.function(B - h)(x)) / (2 * h)
    np.testing.assert_allclose(c.dB(B)(x), fd, atol=1e-6)


@pytest.mark.parametrize("kw", [{"kind": "x"}, {"N": 0}, {"shoulder": 1.0}])
def test_cutoff_validation(kw):
    with pytest.raises(ValueError):
        Cutoff(**kw)


@pytest.mark.parametrize("kw", [{"beta": 0}, {"B": -1}, {"N": 0}])
def test_thermo_params_validation(kw):
    base = {"beta": 1.0, "mu": 0.0, "B": 30.0, "N": 3}
    base.update(kw)
    with pytest.raises(ValueError):
        ThermoParams(**base)


# --- SdH ---------------------------------------------------------------------


def test_sigma_xx_peaks_at_landau_levels():
    mus = np.linspace(0, 16, 801)
    vals = [sigma_xx(ThermoParams(5.0, m, 30), FREE) for m in mus]
    peaks = local_maxima(mus, vals)
    for n in (1, 2, 3):
        lam = landau_level(n, 30)
        assert np.min(np.abs(peaks - lam)) < 0.05


def test_sigma_xx_vanishes_in_gap():
    mu = 0.5 * (landau_level(1, 50) + landau_level(2, 50))
    assert abs(sigma_xx(ThermoParams(50.0, mu, 50), FREE)) < 1e-8


@pytest.mark.parametrize("mu", [2.0, 7.7, 12.0])
def test_sigma_xx_nonnegative(mu):
    assert sigma_xx(ThermoParams(1.5, mu, 30), FREE) >= 0


def test_chiral_free_peak_contrast():
    tp = ThermoParams(2.0, landau_level(1, 30), 30)
    diff = sigma_xx(tp, SMALL_CHIRAL, strict=False) - sigma_xx(tp, FREE)
    cut = Cutoff("symmetric", tp.N)
    from tbgmag.testfunction import Derivative, Poly, Product

    g = Product(Derivative(fermi_dirac(tp.beta, tp.mu), 1), Product(Poly([0.0, 1.0]), cut.function(tp.B)))
    corr = -trace(g, cut.bands(), tp.B, SMALL_CHIRAL, strict=False).correction
    assert diff == pytest.approx(corr, rel=1e-10)
    assert np.sign(diff) == np.sign(corr) != 0


# --- thermodynamics ----------------------------------------------------------


@pytest.mark.parametrize("name", list(MODELS))
def test_dOmega_dmu_is_minus_density(name):
    m = MODELS[name]
    tp = ThermoParams(2.0, 6.3, 30)
    h = 1e-5
    fd = (grand_potential(replace(tp, mu=tp.mu + h), m, strict=False) - grand_potential(replace(tp, mu=tp.mu - h), m, strict=False)) / (2 * h)
    assert fd + charge_density(tp, m, strict=False) == pytest.approx(0.0, abs=1e-8)


@pytest.mark.parametrize("name", list(MODELS))
@pytest.mark.parametrize("cutoff", ["one_sided", "symmetric"])
def test_magnetization_is_minus_dOmega_dB(name, cutoff):
    m = MODELS[name]
    tp = ThermoParams(2.0, 6.3, 30)
    h = 1e-3 * tp.B
    fd = (grand_potential(replace(tp, B=tp.B + h), m, False, cutoff) - grand_potential(replace(tp, B=tp.B - h), m, False, cutoff)) / (2 * h)
    assert magnetization(tp, m, False, cutoff) == pytest.approx(-fd, rel=1e-4)


def test_susceptibility_is_dM_dB():
    tp = ThermoParams(2.0, 6.3, 30)
    h = 1e-2
    fd = (magnetization(replace(tp, B=30 + h), FREE) - magnetization(replace(tp, B=30 - h), FREE)) / (2 * h)
    assert susceptibility(tp, FREE) == pytest.approx(fd, rel=1e-3)


def test_dhva_susceptibility_peaks_at_level_crossings():
    # M jumps up when lambda_{n,B} crosses mu, i.e. at B = mu^2 / (2n)
    Bs = np.linspace(3.0, 30.0, 271)
    chi = [susceptibility(ThermoParams(4.0, 5.0, B), FREE) for B in Bs]
    peaks = local_maxima(Bs, chi)
    for n in (1, 2, 3, 4):
        locus = 12.5 / n
        assert np.min(np.abs(peaks - locus) / locus) < 0.05


def test_charge_density_monotone():
    mus = np.linspace(-15, 15, 50)
    rho = [charge_density(ThermoParams(2.0, m, 30), FREE) for m in mus]
    assert np.all(np.diff(rho) > 0)


@pytest.mark.parametrize("name", list(MODELS))
def test_chemical_potential_round_trip(name):
    m = MODELS[name]
    mu0 = 6.1
    rho = charge_density(ThermoParams(2.0, mu0, 30), m, strict=False)
    assert chemical_potential(rho, 30, 2.0, m, strict=False) == pytest.approx(mu0, abs=1e-8)


def test_chemical_potential_out_of_range():
    with pytest.raises(ValueError):
        chemical_potential(1e6, 30, 2.0, FREE)


def test_density_jump_at_zero_temperature():
    B = 50
    lam = landau_level(1, B)
    below = charge_density(ThermoParams(200.0, lam - 1.0, B), FREE)
    above = charge_density(ThermoParams(200.0, lam + 1.0, B), FREE)
    assert above - below == pytest.approx(B / math.pi, rel=1e-3)


def test_canonical_equals_grand_canonical():
    tp = ThermoParams(2.0, 6.1, 30)
    rho = charge_density(tp, SMALL_CHIRAL, strict=False)
    assert canonical_magnetization(rho, 30, 2.0, SMALL_CHIRAL, strict=False) == pytest.approx(magnetization(tp, SMALL_CHIRAL, strict=False), rel=1e-8)


# --- Hall conductivity -------------------------------------------------------


def test_streda_plateau_value():
    mu = 0.5 * (landau_level(2, 50) + landau_level(3, 50))
    assert hall_streda(ThermoParams(50.0, mu, 50), FREE) * math.pi == pytest.approx(3.0, abs=1e-3)
    assert abs(hall_streda(ThermoParams(50.0, -30.0, 50), FREE)) < 1e-10


@pytest.mark.parametrize("name", list(MODELS))
def test_streda_finite_difference(name):
    m = MODELS[name]
    tp = ThermoParams(2.0, 6.3, 30)
    h = 1e-4 * tp.B
    rho = lambda B: charge_density(replace(tp, B=B), m, strict=False)
    fd = (rho(tp.B + h) - rho(tp.B - h)) / (2 * h)
    assert hall_streda(tp, m, strict=False) == pytest.approx(fd, rel=1e-6)


@pytest.mark.parametrize("mu", [-11.0, -3.0, 0.5, 8.0])
def test_explicit_chiral_reduces_without_tunneling(mu):
    tp = ThermoParams(2.0, mu, 40)
    m = DOSModel.chiral(0.0)
    assert hall_chiral_explicit(tp, m) == pytest.approx(hall_streda(tp, m, strict=False, cutoff="symmetric"), rel=1e-12)


def test_explicit_chiral_near_streda():
    # frozen from the overlay at beta = 2, B = 40: max deviation 0.0649 over mu in [-12, 12],
    # well inside the error scale 2.59 of the expansion
    dev = max(
        abs(hall_chiral_explicit(ThermoParams(2.0, mu, 40), CHIRAL) - hall_streda(ThermoParams(2.0, mu, 40), CHIRAL, strict=False, cutoff="symmetric"))
        for mu in np.linspace(-12, 12, 25)
    )
    assert dev < 0.07


@pytest.mark.parametrize("mu", [-9.0, 0.3, 9.0])
def test_explicit_chiral_correction_is_twice_chain_rule(mu):
    # the displayed second sum is twice the B-derivative of the f'' correction
    tp = ThermoParams(2.0, mu, 40)
    free = hall_streda(tp, DOSModel.chiral(0.0), strict=False, cutoff="symmetric")
    streda = hall_streda(tp, CHIRAL, strict=False, cutoff="symmetric")
    assert hall_chiral_explicit(tp, CHIRAL) - free == pytest.approx(2 * (streda - free), rel=1e-10, abs=1e-14)


def test_explicit_chiral_stable_at_large_beta():
    assert np.isfinite(hall_chiral_explicit(ThermoParams(700.0, 3.0, 40), CHIRAL))


def test_staircase_regression():
    s = hall_staircase(ThermoParams(200.0, 15.0, 50))
    assert s.subtracted_pi == pytest.approx(2.5, abs=1e-10)
    assert s.raw_pi - hall_staircase(ThermoParams(200.0, 0.0, 50)).raw_pi == pytest.approx(2.5, abs=1e-10)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_staircase_jumps(n):
    lam = math.sqrt(100 * n)
    lo = hall_staircase(ThermoParams(200.0, lam - 0.5, 50)).raw_pi
    hi = hall_staircase(ThermoParams(200.0, lam + 0.5, 50)).raw_pi
    assert hi - lo == pytest.approx(1.0, abs=1e-2)


def test_staircase_monotone():
    vals = [hall_staircase(ThermoParams(5.0, m, 50)).raw for m in np.linspace(0, 20, 41)]
    assert np.all(np.diff(vals) >= 0)


def test_antichiral_hall_without_tunneling():
    tp = ThermoParams(3.0, 4.0, 50)
    assert hall_antichiral(tp, DOSModel.antichiral(0.0)) == pytest.approx(2 * hall_staircase(tp).raw_pi, rel=1e-13)
    assert hall_antichiral(tp, FREE) == pytest.approx(2 * hall_staircase(tp).raw_pi, rel=1e-13)


def test_antichiral_hall_untwisted_leading_only():
    tp = ThermoParams(3.0, 21.0, 200)
    m = DOSModel.antichiral(1.0, 0.0)
    f = fermi_dirac(tp.beta, tp.mu)
    t0 = sum(np.sum(m.cell_weights * (f(landau_level(n, 200) + m.shifts(n)[0]) + f(landau_level(n, 200) - m.shifts(n)[0]))) for n in range(-10, 11) if n != 0)
    t0 += np.sum(m.cell_weights * (f(m.abs_V) + f(-m.abs_V)))
    s0 = m.shifts(0)[1]
    t1 = np.sum(m.cell_weights * s0**2 * (f.derivative(m.abs_V, 1) + f.derivative(-m.abs_V, 1)))
    assert hall_antichiral(tp, m) == pytest.approx(t0 - t1 / (2 * math.sqrt(200)), rel=1e-12)


def test_antichiral_hall_counts_in_gap():
    tp = ThermoParams(200.0, 24.0, 200)
    assert hall_antichiral(tp, ANTI) / 2 == pytest.approx(hall_staircase(tp).raw_pi, abs=1e-3)


# --- sweeps ------------------------------------------------------------------


def test_response_curve_validation():
    with pytest.raises(ValueError):
        ResponseCurve("mu", [0, 1, 1], [0, 0, 0], "free")
    with pytest.raises(ValueError):
        ResponseCurve("mu", [0, 1], [0, np.nan], "free")
    ResponseCurve("invB", [0.3, 0.2, 0.1], [1, 2, 3], "free")


def test_sweep_deterministic_across_threads():
    base = ThermoParams(2.0, 0.0, 30)
    pts = np.linspace(-5, 5, 12)
    obs = lambda tp: sigma_xx(tp, SMALL_CHIRAL, strict=False)
    a = sweep(obs, base, "mu", pts, "chiral", threads=1)
    b = sweep(obs, base, "mu", pts, "chiral", threads=4)
    assert a.values.tobytes() == b.values.tobytes()
    assert a.params["base"]["B"] == 30


def test_sweep_inverse_field():
    base = ThermoParams(2.0, 5.0, 30)
    c = sweep(lambda tp: tp.B, base, "invB", [0.1, 0.05], "free")
    np.testing.assert_allclose(c.values, [10.0, 20.0])
    with pytest.raises(ValueError):
        sweep(lambda tp: 0.0, base, "T", [1.0])


def test_gaussian_trace_shared_with_dos():
    # response traces use the same functional as the DOS module
    f = gaussian(landau_level(1, 30), 1.0)
    assert trace(f, [1], 30, FREE).total == pytest.approx(30 / math.pi * f(landau_level(1, 30)), rel=1e-12)
