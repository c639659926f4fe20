"""Photon-number distribution of a zero-mean Gaussian single-mode field.

The field is described by its antinormally ordered characteristic function
``exp[-|z|^2 a + (b/2)(z^2 + z*^2)]`` with ``a = 1 + n`` and ``b = <alpha^2>``.
Two independent routes to ``P(n)`` are provided: a closed-form sum evaluated
in log space, and a Taylor-coefficient recursion in extended precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath
import numpy as np
from numpy.typing import NDArray
from scipy.special import gammaln, logsumexp

from .analytic import SteadyMoments

ORACLE_MAX_N = 30
MEAN_TAIL_REL = 1e-9
DEFAULT_TAIL = 1e-10
MAX_N_CAP = 400


class UnphysicalStateError(ValueError):
    pass


@dataclass(frozen=True)
class GaussianFieldState:
    """Zero-mean Gaussian state; ``a = 1 + n``, ``b = <alpha^2>``, ``u, v = a, b / (a^2 - b^2)``.

    ``nbar`` is kept separately so that ``a - 1`` is never formed in floating
    point (it loses all relative precision for nearly empty states).
    """

    a_param: float
    b_param: float
    u_param: float
    v_param: float
    nbar: float

    @property
    def mean_photon(self) -> float:
        return self.nbar

    @property
    def excess(self) -> float:
        """``n^2 + n - b^2 >= 0``; zero for a pure squeezed vacuum."""
        return self.nbar * self.nbar + self.nbar - self.b_param**2

    @property
    def det(self) -> float:
        return 1.0 + self.nbar + self.excess


@dataclass(frozen=True)
class PhotonDistribution:
    probs: NDArray[np.float64]
    n_max: int
    tail_bound: float

    @property
    def mean(self) -> float:
        n = np.arange(self.n_max + 1)
        return float(np.dot(n, self.probs))

    @property
    def second_moment(self) -> float:
        n = np.arange(self.n_max + 1)
        return float(np.dot(n * n, self.probs))

    def odd_mass(self) -> float:
        return float(self.probs[1::2].sum())


def gaussian_state(moments: SteadyMoments) -> GaussianFieldState:
    nbar = moments.mean_photon
    a = 1.0 + nbar
    b = moments.anomalous
    det = 1.0 + nbar + (nbar * nbar + nbar - b * b)
    if nbar < 0.0 or det <= 0.0:
        raise UnphysicalStateError(
            f"moments (n={moments.mean_photon}, <alpha^2>={b}) give a non-normalizable "
            f"Q-function: (1 + n)^2 - b^2 = {det}"
        )
    return GaussianFieldState(a, b, a / det, b / det, nbar)


def _log_terms(n: int, state: GaussianFieldState) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Log-magnitudes and signs of the summands of P(n)."""
    nbar, b = state.mean_photon, state.b_param
    c = state.excess
    # c = 0 exactly for a pure squeezed vacuum; kill the round-off residue
    if abs(c) <= 1e-13 * (nbar * nbar + nbar + b * b):
        c = 0.0
    i = np.arange(n % 2, n + 1, 2)
    half = (n - i) // 2
    log_c = math.log(abs(c)) if c != 0.0 else -np.inf
    log_b = math.log(abs(b)) if b != 0.0 else -np.inf
    with np.errstate(invalid="ignore"):
        pow_c = np.where(i == 0, 0.0, i * log_c)
        pow_b = np.where(i == n, 0.0, (n - i) * log_b)
    logs = pow_c + pow_b - (n - i) * math.log(2.0) - gammaln(i + 1) - 2.0 * gammaln(half + 1)
    sign_c = 1.0 if c >= 0.0 else -1.0
    sign_b = 1.0 if b >= 0.0 else -1.0
    signs = np.where(i % 2 == 0, 1.0, sign_c) * np.where((n - i) % 2 == 0, 1.0, sign_b)
    return logs, signs


def photon_probability(state: GaussianFieldState, n: int) -> float:
    logs, signs = _log_terms(n, state)
    if np.all(np.isneginf(logs)):
        return 0.0
    log_sum, sign = logsumexp(logs, b=signs, return_sign=True)
    if sign < 0 and np.exp(log_sum) > 1e-300:
        raise AssertionError(f"negative P({n}) for a state declared valid: {state}")
    log_p = gammaln(n + 1) - (n + 0.5) * math.log(state.det) + log_sum
    return float(np.exp(log_p)) if sign > 0 else 0.0


def photon_number_distribution(state: GaussianFieldState, n_max: int | None = None) -> PhotonDistribution:
    """``P(0..n_max)``; with ``n_max=None`` the cutoff is chosen so the tail is below 1e-10."""
    if n_max is not None:
        if n_max < 0:
            raise ValueError("n_max must be >= 0")
        probs = np.array([photon_probability(state, n) for n in range(n_max + 1)])
        return _finish(probs)
    return _finish(np.array(_adaptive_probs(state)))


def _adaptive_probs(state: GaussianFieldState) -> list[float]:
    probs = [photon_probability(state, 0)]
    for n in range(1, MAX_N_CAP + 1):
        probs.append(photon_probability(state, n))
        if n < 3 or 1.0 - math.fsum(probs) >= DEFAULT_TAIL:
            continue
        mass, mean_tail = geometric_tail(probs, with_mean=True)
        # the mean must be resolved too: a tiny mass tail can still be a sizeable
        # fraction of a tiny mean photon number
        mean = math.fsum(k * pk for k, pk in enumerate(probs))
        if mass < DEFAULT_TAIL and mean_tail <= MEAN_TAIL_REL * mean:
            break
    return probs


def geometric_tail(probs: list[float], with_mean: bool = False):
    """Bound on the mass beyond the last entry from the per-parity ratio P(n)/P(n-2).

    With ``with_mean`` also returns the matching bound on ``sum_{k > n} k P(k)``.
    """
    n = len(probs) - 1
    tail = tail_mean = 0.0
    for last in (n, n - 1):
        prev = probs[last - 2] if last >= 2 else 0.0
        if probs[last] == 0.0:
            continue
        if prev == 0.0:
            return (math.inf, math.inf) if with_mean else math.inf
        ratio = probs[last] / prev
        if ratio >= 1.0:
            return (math.inf, math.inf) if with_mean else math.inf
        tail += probs[last] * ratio / (1.0 - ratio)
        # sum_{j>=1} (last + 2j) ratio^j
        tail_mean += probs[last] * (last * ratio / (1.0 - ratio) + 2.0 * ratio / (1.0 - ratio) ** 2)
    return (tail, tail_mean) if with_mean else tail


def _finish(probs: NDArray[np.float64]) -> PhotonDistribution:
    total = math.fsum(probs.tolist())
    return PhotonDistribution(probs=probs, n_max=len(probs) - 1, tail_bound=1.0 - total)


def pnd_oracle(state: GaussianFieldState, n_max: int, dps: int = 50) -> PhotonDistribution:
    """Brute-force ``P(n)`` from the diagonal Taylor coefficients of the Q-function kernel.

    ``g(x, y) = exp[(1 - u) x y + (v/2)(x^2 + y^2)]`` is expanded with the
    exponential recursion ``x dg/dx = (x df/dx) g``, i.e.
    ``p g[p, q] = (1 - u) g[p-1, q-1] + v g[p-2, q]``, in ``dps``-digit
    arithmetic. ``P(n) = sqrt(u^2 - v^2) n! g[n, n]``.
    """
    if n_max > ORACLE_MAX_N:
        raise ValueError(f"oracle is limited to n_max <= {ORACLE_MAX_N}, got {n_max}")
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    with mpmath.workdps(dps):
        a = 1 + mpmath.mpf(state.nbar)
        b = mpmath.mpf(state.b_param)
        det = a * a - b * b
        u, v = a / det, b / det
        c = 1 - u
        size = n_max + 1
        g = [[mpmath.mpf(0)] * size for _ in range(size)]
        g[0][0] = mpmath.mpf(1)
        for q in range(2, size):
            g[0][q] = v * g[0][q - 2] / q
        for p in range(1, size):
            for q in range(size):
                acc = mpmath.mpf(0)
                if q >= 1:
                    acc += c * g[p - 1][q - 1]
                if p >= 2:
                    acc += v * g[p - 2][q]
                g[p][q] = acc / p
        norm = mpmath.sqrt(u * u - v * v)
        probs = [norm * mpmath.factorial(n) * g[n][n] for n in range(size)]
        total = mpmath.fsum(probs)
        values = np.array([float(p) for p in probs])
        return PhotonDistribution(values, n_max, float(1 - total))


def gaussian_number_moments(moments: SteadyMoments) -> tuple[float, float]:
    """``<n>`` and ``<n^2>`` of a zero-mean Gaussian state; ``<a+a+aa> = 2 n^2 + |b|^2``."""
    nbar, b = moments.mean_photon, moments.anomalous
    return nbar, 2.0 * nbar * nbar + b * b + nbar
