import math
import warnings

import pytest
from hypothesis import given
from hypothesis import strategies as st

from dpo_sim.params import (
    DpoParams,
    PlottedRegimeWarning,
    Regime,
    branch_diffusions,
    classify_regime,
    derive,
    require_below_threshold,
    DivergenceError,
)

kappas = st.floats(0.05, 1.0)
squeeze = st.floats(0.0, 2.0)


def test_reservoir_moments_vanish_without_squeezing():
    res, rates = derive(DpoParams(0.8, 0.2, 0.0))
    assert res.n_res == 0.0 and res.m_res == 0.0
    assert rates.lambda_plus == pytest.approx(0.4, abs=1e-15)
    assert rates.lambda_minus == pytest.approx(1.2, abs=1e-15)
    assert not rates.critical


def test_reservoir_moments_at_r_075():
    p = DpoParams(0.8, 0.2, 0.75)
    assert p.n_res == pytest.approx(0.676205, abs=1e-6)
    assert p.m_res == pytest.approx(1.064640, abs=1e-6)


def test_critical_point_sets_flag_and_zero_rate():
    _, rates = derive(DpoParams(0.8, 0.4, 0.0))
    assert rates.critical
    assert rates.lambda_plus == 0.0


@pytest.mark.parametrize(
    "eps, regime", [(0.2, Regime.BELOW), (0.4, Regime.CRITICAL), (0.5, Regime.ABOVE)]
)
def test_regime_classification(eps, regime):
    assert classify_regime(DpoParams(0.8, eps)) is regime


def test_near_critical_tolerance():
    assert DpoParams(0.8, 0.4 * (1 + 1e-14)).regime is Regime.CRITICAL
    assert DpoParams(0.8, 0.399).regime is Regime.BELOW


@pytest.mark.parametrize("bad", [dict(kappa=0.0, epsilon=0.1), dict(kappa=0.8, epsilon=-0.1),
                                 dict(kappa=0.8, epsilon=0.1, r=-1.0), dict(kappa=math.nan, epsilon=0.1)])
def test_invalid_parameters_rejected(bad):
    with pytest.raises(ValueError):
        DpoParams(**bad)


def test_large_kappa_warns():
    with pytest.warns(PlottedRegimeWarning):
        DpoParams(1.5, 0.1)


def test_require_below_threshold():
    require_below_threshold(DpoParams(0.8, 0.1))
    with pytest.raises(DivergenceError):
        require_below_threshold(DpoParams(0.8, 0.4))


@given(kappas, st.floats(0.0, 1.0), squeeze)
def test_identity_m2_equals_n_n_plus_1(kappa, frac, r):
    p = DpoParams(kappa, frac * kappa, r)
    assert p.m_res**2 == pytest.approx(p.n_res * (p.n_res + 1), rel=1e-12, abs=1e-15)


@given(kappas, st.floats(0.0, 2.0), squeeze)
def test_branch_diffusions_nonnegative(kappa, frac, r):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        d = branch_diffusions(DpoParams(kappa, frac * kappa, r))
    assert all(v >= 0.0 for v in d.values())
    # the minus reservoir part kappa(M - N) = kappa sinh r e^{-r} is never negative
    assert d["R_minus"] == pytest.approx(2 * kappa * math.sinh(r) * math.exp(-r), rel=1e-9, abs=1e-15)


@given(kappas, st.floats(0.0, 1.0), squeeze)
def test_replace_roundtrip(kappa, frac, r):
    p = DpoParams(kappa, frac * kappa / 2, r)
    assert p.replace() == p
    assert DpoParams(**p.as_dict()) == p
