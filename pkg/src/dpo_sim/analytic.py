"""Closed-form steady-state moments, variances, correlations and spectra.

Every spectrum here is a flat floor plus a sum of Lorentzians of the form
``weight / (width**2 + 4 omega**2)``. Keeping the terms lets the sum rules be
evaluated from the exact antiderivative instead of by quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .params import DivergenceError, DpoParams, Regime, classify_regime, require_below_threshold

FieldLabel = Literal["cavity", "output"]
Sign = Literal["plus", "minus"]
PowerVariant = Literal["derived-consistent", "as-printed"]

# explicit marker for quantities that diverge at the critical point
DIVERGENT = math.inf


@dataclass(frozen=True)
class SteadyMoments:
    mean_photon: float
    anomalous: float
    field_label: FieldLabel


@dataclass(frozen=True)
class QuadratureVariances:
    var_plus: float
    var_minus: float
    field_label: FieldLabel

    @property
    def divergent(self) -> bool:
        return self.var_plus == DIVERGENT

    @property
    def squeezed(self) -> bool:
        return self.var_minus < 1.0


@dataclass(frozen=True)
class SpectrumCurve:
    omegas: NDArray[np.float64]
    values: NDArray[np.float64]
    floor: float
    kind: str
    terms: tuple[tuple[float, float], ...] = ()
    meta: dict = field(default_factory=dict)

    def lorentzian_part(self) -> NDArray[np.float64]:
        return self.values - self.floor

    def normalized_integral(self) -> float:
        """``(1/2pi) * integral of (values - floor) d omega`` from the Lorentzian terms."""
        return sum(lorentzian_mass(w, a) for w, a in self.terms)


def lorentzian_mass(weight: float, width: float) -> float:
    # int dω / (a^2 + 4ω^2) = π / (2a); divided by 2π
    if width <= 0.0:
        raise DivergenceError("Lorentzian of zero width has no finite integral")
    return weight / (4.0 * width)


def _lorentzians(omegas: NDArray[np.float64], terms: Sequence[tuple[float, float]]) -> NDArray[np.float64]:
    out = np.zeros_like(omegas)
    for weight, width in terms:
        out += weight / (width * width + 4.0 * omegas * omegas)
    return out


def cavity_moments_ss(params: DpoParams) -> SteadyMoments:
    require_below_threshold(params, "cavity steady state")
    k, e = params.kappa, params.epsilon
    n, m = params.n_res, params.m_res
    denom = k * k - 4.0 * e * e
    mean_photon = (2.0 * e * e + k * (n * k + 2.0 * e * m)) / denom
    anomalous = k * (2.0 * e * n + e + k * m) / denom
    return SteadyMoments(mean_photon, anomalous, "cavity")


def output_moments_ss(params: DpoParams) -> SteadyMoments:
    require_below_threshold(params, "output steady state")
    k, e = params.kappa, params.epsilon
    n, m = params.n_res, params.m_res
    denom = k * k - 4.0 * e * e
    mean_photon = n + 2.0 * k * e * e / denom + 2.0 * e * k * (2.0 * n * e + k * m) / denom
    anomalous = m + k * k * e / denom + 2.0 * k * e * (k * n + 2.0 * e * m) / denom
    return SteadyMoments(mean_photon, anomalous, "output")


def moments(params: DpoParams, field_label: FieldLabel) -> SteadyMoments:
    if field_label == "cavity":
        return cavity_moments_ss(params)
    if field_label == "output":
        return output_moments_ss(params)
    raise ValueError(f"unknown field label {field_label!r}")


def quadrature_variances(params: DpoParams, field_label: FieldLabel) -> QuadratureVariances:
    """Plus/minus quadrature variances; vacuum level is 1.

    At the critical point the plus variance is reported as ``DIVERGENT`` while
    the minus variance takes its finite limit.
    """
    regime = classify_regime(params)
    if regime is Regime.ABOVE:
        raise DivergenceError("no steady-state variances above threshold")
    k, e, r = params.kappa, params.epsilon, params.r
    grow, shrink = math.exp(2.0 * r), math.exp(-2.0 * r)
    if field_label == "cavity":
        var_minus = shrink * k / (k + 2.0 * e)
        var_plus = DIVERGENT if regime is Regime.CRITICAL else grow * k / (k - 2.0 * e)
    elif field_label == "output":
        var_minus = shrink * (1.0 - 2.0 * e * k / (k + 2.0 * e))
        var_plus = DIVERGENT if regime is Regime.CRITICAL else grow * (1.0 + 2.0 * e * k / (k - 2.0 * e))
    else:
        raise ValueError(f"unknown field label {field_label!r}")
    return QuadratureVariances(var_plus, var_minus, field_label)


def variances_from_moments(mom: SteadyMoments) -> QuadratureVariances:
    return QuadratureVariances(
        1.0 + 2.0 * mom.mean_photon + 2.0 * mom.anomalous,
        1.0 + 2.0 * mom.mean_photon - 2.0 * mom.anomalous,
        mom.field_label,
    )


def two_time_quadrature_corr(params: DpoParams, tau: ArrayLike, sign: Sign) -> NDArray[np.float64] | float:
    """Normally ordered ``<alpha_pm(t + tau) alpha_pm(t)>`` in the steady state."""
    tau_arr = np.asarray(tau, dtype=float)
    if np.any(tau_arr < 0.0):
        raise ValueError("tau must be >= 0")
    k, e = params.kappa, params.epsilon
    if sign == "plus":
        require_below_threshold(params, "plus-quadrature correlation")
        amp = 2.0 * (k * (params.m_res + params.n_res) + e) / (k - 2.0 * e)
        rate = params.lambda_plus
    elif sign == "minus":
        if classify_regime(params) is Regime.ABOVE:
            raise DivergenceError("no steady state above threshold")
        m_minus_n = math.sinh(params.r) * math.exp(-params.r)
        amp = 2.0 * (k * m_minus_n + e) / (k + 2.0 * e)
        rate = params.lambda_minus
    else:
        raise ValueError(f"sign must be 'plus' or 'minus', got {sign!r}")
    out = amp * np.exp(-0.5 * rate * tau_arr)
    return float(out) if out.ndim == 0 else out


def squeezing_terms(params: DpoParams, sign: Sign) -> tuple[float, tuple[tuple[float, float], ...]]:
    k, e, r = params.kappa, params.epsilon, params.r
    if sign == "plus":
        floor = math.exp(2.0 * r)
        return floor, ((floor * 8.0 * e * k, params.lambda_plus),)
    if sign == "minus":
        floor = math.exp(-2.0 * r)
        return floor, ((-floor * 8.0 * e * k, params.lambda_minus),)
    raise ValueError(f"sign must be 'plus' or 'minus', got {sign!r}")


def squeezing_spectrum_out(params: DpoParams, omegas: ArrayLike, sign: Sign = "minus") -> SpectrumCurve:
    """Output squeezing spectrum ``e^{+-2r}[1 +- 8 eps kappa / ((kappa -+ 2 eps)^2 + 4 w^2)]``."""
    regime = classify_regime(params)
    if regime is Regime.ABOVE:
        raise DivergenceError("squeezing spectrum undefined above threshold")
    w = np.asarray(omegas, dtype=float)
    floor, terms = squeezing_terms(params, sign)
    weight, width = terms[0]
    values = np.full_like(w, floor)
    if width == 0.0:
        # critical plus branch: finite off zero frequency, divergent at omega = 0
        nonzero = w != 0.0
        values[nonzero] += weight / (4.0 * w[nonzero] ** 2)
        values[~nonzero] = DIVERGENT
    else:
        values += _lorentzians(w, terms)
    if sign == "minus":
        # the exact zero at criticality can round to -1e-17
        values = np.maximum(values, 0.0)
    return SpectrumCurve(w, values, floor, f"squeezing-{sign}", terms, {"params": params.as_dict()})


def cavity_power_terms(params: DpoParams) -> tuple[tuple[float, float], ...]:
    k, e, n, m = params.kappa, params.epsilon, params.n_res, params.m_res
    return (
        (2.0 * (k * (n + m) + e), params.lambda_plus),
        (2.0 * (k * (n - m) - e), params.lambda_minus),
    )


def output_power_terms(params: DpoParams, variant: PowerVariant) -> tuple[tuple[float, float], ...]:
    k, e, n, m = params.kappa, params.epsilon, params.n_res, params.m_res
    if variant == "derived-consistent":
        second = 2.0 * m - 2.0 * n - 1.0
    elif variant == "as-printed":
        second = 1.0 - 2.0 * n + 2.0 * m
    else:
        raise ValueError(f"unknown power-spectrum variant {variant!r}")
    return (
        (2.0 * k * e * (1.0 + 2.0 * n + 2.0 * m), params.lambda_plus),
        (2.0 * k * e * second, params.lambda_minus),
    )


def power_spectrum(
    params: DpoParams,
    omegas: ArrayLike,
    field_label: FieldLabel = "output",
    variant: PowerVariant = "derived-consistent",
) -> SpectrumCurve:
    """Power spectrum of the cavity or output field.

    ``variant`` only affects the output field. ``"as-printed"`` keeps the
    published second numerator ``1 - 2N + 2M``; ``"derived-consistent"`` uses
    ``2M - 2N - 1``, which is what the term-by-term Fourier transform of the
    output correlation function gives and which satisfies the output sum rule.
    """
    require_below_threshold(params, "power spectrum")
    w = np.asarray(omegas, dtype=float)
    if field_label == "cavity":
        terms = cavity_power_terms(params)
        floor = 0.0
        meta = {"params": params.as_dict()}
    elif field_label == "output":
        terms = output_power_terms(params, variant)
        floor = params.n_res
        meta = {"params": params.as_dict(), "variant": variant}
    else:
        raise ValueError(f"unknown field label {field_label!r}")
    values = floor + _lorentzians(w, terms)
    return SpectrumCurve(w, values, floor, f"power-{field_label}", terms, meta)


def output_power_correlation(params: DpoParams, tau: ArrayLike) -> NDArray[np.float64]:
    """Continuous (tau > 0) part of ``<alpha_out*(t) alpha_out(t + tau)>``."""
    require_below_threshold(params)
    cav = cavity_moments_ss(params)
    n, m = params.n_res, params.m_res
    t = np.asarray(tau, dtype=float)
    k = params.kappa
    slow = 0.5 * k * (cav.mean_photon + cav.anomalous - (m + n))
    fast = 0.5 * k * (cav.mean_photon - cav.anomalous - (n - m))
    return slow * np.exp(-0.5 * params.lambda_plus * t) + fast * np.exp(-0.5 * params.lambda_minus * t)


def cavity_power_correlation(params: DpoParams, tau: ArrayLike) -> NDArray[np.float64]:
    require_below_threshold(params)
    cav = cavity_moments_ss(params)
    t = np.asarray(tau, dtype=float)
    slow = 0.5 * (cav.mean_photon + cav.anomalous)
    fast = 0.5 * (cav.mean_photon - cav.anomalous)
    return slow * np.exp(-0.5 * params.lambda_plus * t) + fast * np.exp(-0.5 * params.lambda_minus * t)


def lorentzian_half_width(width: float) -> float:
    """Half width at half maximum (in omega) of ``1 / (width^2 + 4 omega^2)``."""
    return 0.5 * width


def default_grid(lo: float = -2.0, hi: float = 2.0, count: int = 801) -> NDArray[np.float64]:
    return np.linspace(lo, hi, count)
