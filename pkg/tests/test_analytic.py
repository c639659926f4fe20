import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from dpo_sim import analytic
from dpo_sim.params import DivergenceError, DpoParams

BASE = DpoParams(0.8, 0.2, 0.0)


@st.composite
def below_threshold(draw, max_r=1.5):
    kappa = draw(st.floats(0.1, 1.0))
    eps = draw(st.floats(0.0, 0.95)) * kappa / 2
    return DpoParams(kappa, eps, draw(st.floats(0.0, max_r)))


def moment_oracle(p):
    """Stationary point of the linear moment equations for (n, <a^2>, <a+^2>).

    dn/dt = -k n + e (m + m*) + k N,  dm/dt = -k m + e (2n + 1) + k M.
    """
    k, e, n_res, m_res = p.kappa, p.epsilon, p.n_res, p.m_res
    a = np.array([[-k, e, e], [2 * e, -k, 0.0], [2 * e, 0.0, -k]])
    b = -np.array([k * n_res, e + k * m_res, e + k * m_res])
    n, m, _ = np.linalg.solve(a, b)
    return n, m


def output_branch_corr(p, tau, sign):
    """Continuous part of the output quadrature correlation from the surrogate processes."""
    k, e, r = p.kappa, p.epsilon, p.r
    if sign > 0:
        return 2 * k * e * math.exp(2 * r) / (k - 2 * e) * math.exp(-0.5 * (k - 2 * e) * tau)
    return 2 * k * e * math.exp(-2 * r) / (k + 2 * e) * math.exp(-0.5 * (k + 2 * e) * tau)


def cavity_branch_corr(p, tau, sign):
    k, e = p.kappa, p.epsilon
    if sign > 0:
        d, lam = 2 * (k * (p.m_res + p.n_res) + e), k - 2 * e
    else:
        d, lam = 2 * (k * (p.m_res - p.n_res) + e), k + 2 * e
    return d / lam * math.exp(-0.5 * lam * tau)


def cosine_transform(fn, w):
    """``2 int_0^inf fn(t) cos(w t) dt`` by adaptive quadrature.

    The Fourier-weighted rule integrates cycle by cycle and breaks down when a
    cycle is far longer than the decay, so small ``w`` goes through the plain rule.
    """
    if abs(w) < 1e-3:
        return 2 * integrate.quad(lambda t: fn(t) * np.cos(w * t), 0, np.inf, limit=400, epsabs=1e-13)[0]
    return 2 * integrate.quad(fn, 0, np.inf, weight="cos", wvar=abs(w), limlst=200)[0]


# -- moments -----------------------------------------------------------------


def test_cavity_moments_reference_point():
    mom = analytic.cavity_moments_ss(BASE)
    assert mom.mean_photon == pytest.approx(1 / 6, abs=1e-15)
    n, m = moment_oracle(BASE)
    assert mom.anomalous == pytest.approx(m, abs=1e-14)
    assert m == pytest.approx(1 / 3, abs=1e-14)


def test_cavity_moments_without_pump_are_reservoir():
    p = DpoParams(0.8, 0.0, 0.75)
    mom = analytic.cavity_moments_ss(p)
    assert mom.mean_photon == pytest.approx(p.n_res, abs=1e-12)
    assert mom.anomalous == pytest.approx(p.m_res, abs=1e-12)


def test_output_moments_reference_point():
    mom = analytic.output_moments_ss(BASE)
    assert mom.mean_photon == pytest.approx(2 / 15, abs=1e-15)
    assert mom.anomalous == pytest.approx(4 / 15, abs=1e-15)
    assert analytic.output_moments_ss(DpoParams(0.8, 0.0, 0.75)).mean_photon == pytest.approx(0.676205, abs=1e-6)


@given(below_threshold())
def test_cavity_moments_match_linear_oracle(p):
    n, m = moment_oracle(p)
    mom = analytic.cavity_moments_ss(p)
    assert mom.mean_photon == pytest.approx(n, rel=1e-9, abs=1e-12)
    assert mom.anomalous == pytest.approx(m, rel=1e-9, abs=1e-12)


@given(below_threshold())
def test_output_moments_are_reflection_plus_transmission(p):
    # equal-time output moments: kappa times the cavity moment plus the reflected
    # reservoir, minus the kappa-weighted cross correlation with the reservoir
    n, m = moment_oracle(p)
    out = analytic.output_moments_ss(p)
    assert out.mean_photon == pytest.approx(p.kappa * n + p.n_res * (1 - p.kappa), rel=1e-9, abs=1e-12)
    assert out.anomalous == pytest.approx(p.kappa * m + p.m_res * (1 - p.kappa), rel=1e-9, abs=1e-12)


def test_moments_refuse_at_threshold():
    with pytest.raises(DivergenceError):
        analytic.cavity_moments_ss(DpoParams(0.8, 0.4))
    with pytest.raises(DivergenceError):
        analytic.output_moments_ss(DpoParams(0.8, 0.5))


# -- variances ---------------------------------------------------------------


def test_critical_variances():
    crit = DpoParams(0.8, 0.4, 0.0)
    assert analytic.quadrature_variances(crit, "cavity").var_minus == pytest.approx(0.5, abs=1e-12)
    out = analytic.quadrature_variances(crit, "output")
    assert out.var_minus == pytest.approx(0.6, abs=1e-12)
    assert out.divergent and out.var_plus == analytic.DIVERGENT


def test_output_variances_reference_point():
    v = analytic.quadrature_variances(BASE, "output")
    assert v.var_minus == pytest.approx(11 / 15, abs=1e-14)
    assert v.var_plus == pytest.approx(1.8, abs=1e-14)
    assert v.squeezed


@given(below_threshold(), st.sampled_from(["cavity", "output"]))
def test_variances_agree_with_moments(p, label):
    direct = analytic.quadrature_variances(p, label)
    via = analytic.variances_from_moments(analytic.moments(p, label))
    assert direct.var_plus == pytest.approx(via.var_plus, rel=1e-9)
    assert direct.var_minus == pytest.approx(via.var_minus, rel=1e-9, abs=1e-12)


@given(below_threshold())
def test_uncertainty_products(p):
    cav = analytic.quadrature_variances(p, "cavity")
    out = analytic.quadrature_variances(p, "output")
    assert cav.var_plus * cav.var_minus >= 1 - 1e-12
    # kappa <= 1 keeps the output product at or above the vacuum value
    assert out.var_plus * out.var_minus >= 1 - 1e-12


# -- correlations and spectra -----------------------------------------------


def test_two_time_correlation_values():
    assert analytic.two_time_quadrature_corr(BASE, 0.0, "plus") == pytest.approx(1.0)
    assert analytic.two_time_quadrature_corr(BASE, 0.0, "minus") == pytest.approx(1 / 3)
    assert analytic.two_time_quadrature_corr(BASE, 1e4, "plus") == pytest.approx(0.0, abs=1e-300)


@given(below_threshold(), st.floats(0.0, 20.0))
def test_two_time_correlation_matches_branch_processes(p, tau):
    for sign, s in (("plus", 1), ("minus", -1)):
        got = analytic.two_time_quadrature_corr(p, tau, sign)
        assert got == pytest.approx(cavity_branch_corr(p, tau, s), rel=1e-9, abs=1e-300)


def test_squeezing_spectrum_reference_values():
    assert analytic.squeezing_spectrum_out(BASE, [0.0]).values[0] == pytest.approx(1 / 9, abs=1e-14)
    flat = DpoParams(0.8, 0.0, 0.75)
    w = analytic.default_grid()
    assert np.allclose(analytic.squeezing_spectrum_out(flat, w).values, math.exp(-1.5), atol=1e-15)
    assert np.allclose(analytic.squeezing_spectrum_out(flat, w, "plus").values, math.exp(1.5), atol=1e-12)
    assert math.exp(-1.5) == pytest.approx(0.223130, abs=1e-6)


@pytest.mark.parametrize("r", [0.0, 0.5, 1.0])
def test_squeezing_spectrum_vanishes_at_critical_point(r):
    assert analytic.squeezing_spectrum_out(DpoParams(0.8, 0.4, r), [0.0]).values[0] == pytest.approx(0.0, abs=1e-12)


@given(below_threshold(max_r=1.0), st.floats(-2.0, 2.0))
def test_squeezing_spectrum_is_transform_of_output_correlation(p, w):
    for sign, s in (("plus", 1), ("minus", -1)):
        floor = math.exp(2 * s * p.r)
        oracle = floor + s * cosine_transform(lambda t: output_branch_corr(p, t, s), w)
        got = analytic.squeezing_spectrum_out(p, [w], sign).values[0]
        assert got == pytest.approx(max(oracle, 0.0), rel=1e-7, abs=1e-9)


def test_power_spectrum_reference_values():
    assert analytic.power_spectrum(BASE, [0.0], field_label="cavity").values[0] == pytest.approx(20 / 9, abs=1e-12)
    assert analytic.power_spectrum(BASE, [0.0]).values[0] == pytest.approx(16 / 9, abs=1e-12)
    assert analytic.power_spectrum(BASE, [0.0], variant="as-printed").values[0] == pytest.approx(20 / 9, abs=1e-12)


def test_figure5_cavity_value():
    p = DpoParams(0.8, 0.2, 0.5)
    assert p.n_res == pytest.approx(0.271540, abs=1e-6) and p.m_res == pytest.approx(0.587601, abs=1e-6)
    k, e, n, m = 0.8, 0.2, p.n_res, p.m_res
    by_hand = 2 * ((k * (n + m) + e) / (k - 2 * e) ** 2 + (k * (n - m) - e) / (k + 2 * e) ** 2)
    assert by_hand == pytest.approx(10.4625, abs=1e-4)
    assert analytic.power_spectrum(p, [0.0], field_label="cavity").values[0] == pytest.approx(by_hand, rel=1e-12)


@given(below_threshold(max_r=1.0), st.floats(-2.0, 2.0))
def test_power_spectra_are_transforms_of_branch_correlations(p, w):
    def cav(t):
        return 0.25 * (cavity_branch_corr(p, t, 1) - cavity_branch_corr(p, t, -1))

    def out(t):
        return 0.25 * (output_branch_corr(p, t, 1) - output_branch_corr(p, t, -1))

    assert analytic.power_spectrum(p, [w], field_label="cavity").values[0] == pytest.approx(
        cosine_transform(cav, w), rel=1e-7, abs=1e-9
    )
    assert analytic.power_spectrum(p, [w]).values[0] == pytest.approx(
        p.n_res + cosine_transform(out, w), rel=1e-7, abs=1e-9
    )


@given(below_threshold())
def test_power_correlations_match_branch_combination(p):
    t = np.linspace(0.0, 10.0, 7)
    cav = [0.25 * (cavity_branch_corr(p, x, 1) - cavity_branch_corr(p, x, -1)) for x in t]
    out = [0.25 * (output_branch_corr(p, x, 1) - output_branch_corr(p, x, -1)) for x in t]
    assert np.allclose(analytic.cavity_power_correlation(p, t), cav, rtol=1e-9, atol=1e-14)
    assert np.allclose(analytic.output_power_correlation(p, t), out, rtol=1e-9, atol=1e-14)


@given(below_threshold())
def test_sum_rules(p):
    cav = analytic.power_spectrum(p, [0.0], field_label="cavity")
    out = analytic.power_spectrum(p, [0.0])
    assert cav.normalized_integral() == pytest.approx(analytic.cavity_moments_ss(p).mean_photon, rel=1e-10, abs=1e-12)
    target = analytic.output_moments_ss(p).mean_photon - p.n_res
    assert out.normalized_integral() == pytest.approx(target, rel=1e-10, abs=1e-12)


def test_printed_variant_breaks_output_sum_rule():
    printed = analytic.power_spectrum(BASE, [0.0], variant="as-printed")
    target = analytic.output_moments_ss(BASE).mean_photon
    # the printed numerator flips the sign of the fast Lorentzian: excess 2 k e / (2 lambda_-)
    assert printed.normalized_integral() - target == pytest.approx(2 * 0.8 * 0.2 / (2 * 1.2), abs=1e-12)


@given(below_threshold(), st.floats(0.0, 5.0))
def test_spectra_even_in_omega(p, w):
    for curve in (analytic.squeezing_spectrum_out, analytic.power_spectrum):
        vals = curve(p, [w, -w]).values
        assert vals[0] == vals[1]


def test_power_spectrum_refuses_at_threshold():
    with pytest.raises(DivergenceError):
        analytic.power_spectrum(DpoParams(0.8, 0.4), [0.0])


def test_unknown_variant_rejected():
    with pytest.raises(ValueError):
        analytic.power_spectrum(BASE, [0.0], variant="other")


def test_default_grid():
    w = analytic.default_grid()
    assert len(w) == 801 and w[0] == -2.0 and w[-1] == 2.0
