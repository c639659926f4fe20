"""Physical parameters of the degenerate parametric oscillator and derived rates."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum


class Regime(str, Enum):
    BELOW = "below-threshold"
    CRITICAL = "critical"
    ABOVE = "above-threshold"


class DivergenceError(ValueError):
    """Raised when a steady-state quantity is requested at or above threshold."""


class PlottedRegimeWarning(UserWarning):
    """kappa > 1: outside the regime where the output uncertainty product is guaranteed."""


CRITICAL_RTOL = 1e-12


@dataclass(frozen=True)
class DpoParams:
    """Cavity damping ``kappa``, pump amplitude ``epsilon`` and reservoir squeeze ``r``."""

    kappa: float
    epsilon: float
    r: float = 0.0

    def __post_init__(self) -> None:
        for name in ("kappa", "epsilon", "r"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        if self.kappa <= 0.0:
            raise ValueError(f"kappa must be > 0, got {self.kappa}")
        if self.epsilon < 0.0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.r < 0.0:
            raise ValueError(f"r must be >= 0, got {self.r}")
        if self.kappa > 1.0:
            warnings.warn(
                f"kappa={self.kappa} > 1: output uncertainty product is not guaranteed >= 1",
                PlottedRegimeWarning,
                stacklevel=3,
            )

    def replace(self, **changes: float) -> "DpoParams":
        fields = {"kappa": self.kappa, "epsilon": self.epsilon, "r": self.r}
        fields.update(changes)
        return DpoParams(**fields)

    @property
    def regime(self) -> Regime:
        return classify_regime(self)

    @property
    def n_res(self) -> float:
        return math.sinh(self.r) ** 2

    @property
    def m_res(self) -> float:
        return math.sinh(self.r) * math.cosh(self.r)

    @property
    def lambda_plus(self) -> float:
        if self.is_critical:
            return 0.0
        return self.kappa - 2.0 * self.epsilon

    @property
    def lambda_minus(self) -> float:
        return self.kappa + 2.0 * self.epsilon

    @property
    def is_critical(self) -> bool:
        return abs(self.kappa - 2.0 * self.epsilon) <= CRITICAL_RTOL * max(self.kappa, 1.0)

    def as_dict(self) -> dict[str, float]:
        return {"kappa": self.kappa, "epsilon": self.epsilon, "r": self.r}


@dataclass(frozen=True)
class ReservoirMoments:
    n_res: float
    m_res: float


@dataclass(frozen=True)
class DecayRates:
    lambda_plus: float
    lambda_minus: float
    critical: bool = False


def derive(params: DpoParams) -> tuple[ReservoirMoments, DecayRates]:
    """Reservoir moments ``N = sinh^2 r``, ``M = sinh r cosh r`` and decay rates ``kappa -/+ 2 epsilon``."""
    reservoir = ReservoirMoments(n_res=params.n_res, m_res=params.m_res)
    rates = DecayRates(
        lambda_plus=params.lambda_plus,
        lambda_minus=params.lambda_minus,
        critical=params.is_critical,
    )
    return reservoir, rates


def classify_regime(params: DpoParams) -> Regime:
    if params.is_critical:
        return Regime.CRITICAL
    if params.kappa > 2.0 * params.epsilon:
        return Regime.BELOW
    return Regime.ABOVE


def require_below_threshold(params: DpoParams, what: str = "steady state") -> None:
    regime = classify_regime(params)
    if regime is not Regime.BELOW:
        raise DivergenceError(
            f"{what} diverges for {regime.value} parameters "
            f"(kappa={params.kappa}, epsilon={params.epsilon}); need kappa > 2*epsilon"
        )


def branch_diffusions(params: DpoParams) -> dict[str, float]:
    """Per-step diffusion constants of the four independent noise streams.

    ``C`` streams carry the parametric (cavity) noise and ``R`` streams the
    reservoir noise; the totals per quadrature branch are ``2[kappa(M +/- N) + epsilon]``.
    """
    n, m = params.n_res, params.m_res
    # m - n = sinh(r) exp(-r) exactly; avoids cancellation at large r
    m_minus_n = math.sinh(params.r) * math.exp(-params.r)
    return {
        "C_plus": 2.0 * params.epsilon,
        "C_minus": 2.0 * params.epsilon,
        "R_plus": 2.0 * params.kappa * (m + n),
        "R_minus": 2.0 * params.kappa * m_minus_n,
    }
