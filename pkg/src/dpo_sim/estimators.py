"""Lagged correlations, spectra and equal-time moments from trajectory ensembles.

Every estimate carries leave-one-group-out jackknife replicates over
trajectory groups, so derived quantities (combinations, fitted intercepts,
Fourier integrals) get standard errors by recomputing them per replicate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import curve_fit

from .analytic import SpectrumCurve, SteadyMoments
from .params import DpoParams, ReservoirMoments
from .sde import TrajectoryEnsemble, iter_blocks, output_records

DEFAULT_GROUPS = 50
MIN_R2 = 0.99
FIT_BINS = 10

CAVITY_KINDS = ("cavity-quadrature-plus", "cavity-quadrature-minus", "cavity-power")
OUTPUT_KINDS = ("output-quadrature-plus", "output-quadrature-minus", "output-power")


class EstimationError(RuntimeError):
    pass


def jackknife_se(replicates: NDArray[np.float64]) -> NDArray[np.float64]:
    g = replicates.shape[0]
    centered = replicates - replicates.mean(axis=0)
    return np.sqrt((g - 1) / g * np.sum(centered**2, axis=0))


@dataclass
class CorrelationEstimate:
    lags: NDArray[np.float64]
    values: NDArray[np.float64]
    std_errs: NDArray[np.float64]
    kind: str
    replicates: NDArray[np.float64]
    dt: float

    @property
    def includes_zero(self) -> bool:
        return self.lags[0] == 0.0

    def at(self, lag_index: int) -> tuple[float, float]:
        return float(self.values[lag_index]), float(self.std_errs[lag_index])

    def combine(self, other: "CorrelationEstimate", a: float, b: float, kind: str) -> "CorrelationEstimate":
        """``a * self + b * other`` on the same lag grid and jackknife groups."""
        if not np.array_equal(self.lags, other.lags):
            raise ValueError("lag grids differ")
        reps = a * self.replicates + b * other.replicates
        return CorrelationEstimate(
            self.lags, a * self.values + b * other.values, jackknife_se(reps), kind, reps, self.dt
        )


@dataclass
class Estimate:
    value: float
    std_err: float

    def within(self, target: float, n_se: float = 3.0) -> bool:
        return abs(self.value - target) <= n_se * self.std_err


class LagAccumulator:
    """Streaming time-and-ensemble lagged products, grouped for the jackknife."""

    def __init__(self, max_lag: int, discard: int, n_traj: int, n_groups: int = DEFAULT_GROUPS) -> None:
        self.max_lag = max_lag
        self.discard = discard
        self.n_traj = n_traj
        self.n_groups = min(n_groups, n_traj)
        self.lag_sums = np.zeros((self.n_groups, max_lag + 1))
        self.sums = np.zeros(self.n_groups)
        self.counts = np.zeros(self.n_groups)
        self.window = None

    def group_of(self, traj_indices: NDArray[np.int64]) -> NDArray[np.int64]:
        return (traj_indices * self.n_groups) // self.n_traj

    def add(self, x: NDArray[np.float64], traj_indices: NDArray[np.int64]) -> None:
        x = x[:, self.discard :]
        window = x.shape[1]
        if window <= self.max_lag:
            raise EstimationError(
                f"stationarity window of {window} samples is not longer than max_lag={self.max_lag}"
            )
        if self.window is None:
            self.window = window
        elif window != self.window:
            raise ValueError("all blocks must share one record length")
        nfft = 1 << int(math.ceil(math.log2(window + self.max_lag + 1)))
        spec = np.fft.rfft(x, n=nfft, axis=1)
        acf = np.fft.irfft(spec * np.conj(spec), n=nfft, axis=1)[:, : self.max_lag + 1]
        per_traj = acf / (window - np.arange(self.max_lag + 1))
        groups = self.group_of(np.asarray(traj_indices))
        np.add.at(self.lag_sums, groups, per_traj)
        np.add.at(self.sums, groups, x.mean(axis=1))
        np.add.at(self.counts, groups, 1.0)

    def _estimate(self, lag_sums, sums, counts):
        mean = sums / counts
        return lag_sums / counts - mean * mean

    def finish(self, dt: float, kind: str, first_lag: int = 0) -> CorrelationEstimate:
        if self.counts.sum() == 0:
            raise EstimationError("no records accumulated")
        tot_lag, tot_sum, tot_n = self.lag_sums.sum(axis=0), self.sums.sum(), self.counts.sum()
        values = self._estimate(tot_lag, tot_sum, tot_n)
        reps = np.stack(
            [
                self._estimate(tot_lag - self.lag_sums[g], tot_sum - self.sums[g], tot_n - self.counts[g])
                for g in range(self.n_groups)
            ]
        )
        sl = slice(first_lag, None)
        lags = dt * np.arange(self.max_lag + 1)
        return CorrelationEstimate(lags[sl], values[sl], jackknife_se(reps[:, sl]), kind, reps[:, sl], dt)


def _first_lag(kind: str) -> int:
    # output records carry a white-noise floor at lag 0
    return 1 if kind.startswith("output") else 0


def lagged_autocorrelation(
    records: NDArray[np.float64] | Iterable[NDArray[np.float64]],
    dt: float,
    max_lag: float,
    discard: float = 0.0,
    kind: str = "cavity-quadrature-plus",
    n_groups: int = DEFAULT_GROUPS,
) -> CorrelationEstimate:
    """``<x(t + tau) x(t)>`` averaged over the stationary window and the ensemble.

    ``records`` is an ``(n_traj, n_samples)`` array or an iterable of such
    blocks (trajectories in order). ``discard`` is the transient removed from
    the start of every record, in time units.
    """
    blocks = [records] if isinstance(records, np.ndarray) else list(records)
    n_traj = sum(b.shape[0] for b in blocks)
    acc = LagAccumulator(int(round(max_lag / dt)), int(round(discard / dt)), n_traj, n_groups)
    start = 0
    for block in blocks:
        acc.add(block, np.arange(start, start + block.shape[0]))
        start += block.shape[0]
    return acc.finish(dt, kind, _first_lag(kind))


BRANCHES = ("u", "v", "u_out", "v_out")
_BRANCH_KIND = {
    "u": "cavity-quadrature-plus",
    "v": "cavity-quadrature-minus",
    "u_out": "output-quadrature-plus",
    "v_out": "output-quadrature-minus",
}


@dataclass
class EnsembleCorrelations:
    """Branch correlations of one ensemble run plus the u-v cross moment.

    Branches that were not accumulated are ``None``.
    """

    params: DpoParams
    cavity_plus: CorrelationEstimate | None
    cavity_minus: CorrelationEstimate | None
    output_plus: CorrelationEstimate | None
    output_minus: CorrelationEstimate | None
    cross_uv: Estimate | None
    n_traj: int
    seed: int

    def by_kind(self, kind: str) -> CorrelationEstimate:
        table = {
            "cavity-quadrature-plus": self.cavity_plus,
            "cavity-quadrature-minus": self.cavity_minus,
            "output-quadrature-plus": self.output_plus,
            "output-quadrature-minus": self.output_minus,
        }
        if kind == "cavity-power":
            return power_correlation(self.by_kind(CAVITY_KINDS[0]), self.by_kind(CAVITY_KINDS[1]), kind)
        if kind == "output-power":
            return power_correlation(self.by_kind(OUTPUT_KINDS[0]), self.by_kind(OUTPUT_KINDS[1]), kind)
        est = table[kind]
        if est is None:
            raise EstimationError(f"{kind} was not accumulated in this run")
        return est


def _per_branch(value: float | Mapping[str, float], name: str) -> float:
    if isinstance(value, Mapping):
        return value[name[0]]
    return value


def ensemble_correlations(
    params: DpoParams,
    n_traj: int,
    dt: float,
    t_end: float,
    seed: int,
    max_lag: float | Mapping[str, float],
    discard: float | Mapping[str, float],
    n_groups: int = DEFAULT_GROUPS,
    block_size: int = 128,
    branches: Sequence[str] = BRANCHES,
    blocks: Iterable[TrajectoryEnsemble] | None = None,
) -> EnsembleCorrelations:
    """Run (or consume) an ensemble block by block and accumulate branch correlations.

    ``max_lag`` and ``discard`` are times, either shared or given per
    quadrature as ``{"u": ..., "v": ...}`` (output branches follow their
    cavity branch). The two quadratures relax independently, so near the
    critical point the fast minus branch need not wait out the slow plus one.
    """
    unknown = set(branches) - set(BRANCHES)
    if unknown:
        raise ValueError(f"unknown branches {sorted(unknown)}")
    accs = {
        name: LagAccumulator(
            int(round(_per_branch(max_lag, name) / dt)),
            int(round(_per_branch(discard, name) / dt)),
            n_traj,
            n_groups,
        )
        for name in branches
    }
    want_cross = "u" in accs and "v" in accs
    skip = max(accs["u"].discard, accs["v"].discard) if want_cross else 0
    n_g = min(n_groups, n_traj)
    cross = np.zeros(n_g)
    counts = np.zeros(n_g)
    if blocks is None:
        blocks = iter_blocks(params, n_traj, dt, t_end, seed, block_size=block_size)
    for ens in blocks:
        idx = ens.traj_indices
        series = {"u": ens.u, "v": ens.v}
        if "u_out" in accs or "v_out" in accs:
            series["u_out"], series["v_out"] = output_records(ens)
        for name, acc in accs.items():
            acc.add(series[name], idx)
        if want_cross:
            groups = (idx * n_g) // n_traj
            np.add.at(cross, groups, np.mean(ens.u[:, skip:] * ens.v[:, skip:], axis=1))
            np.add.at(counts, groups, 1.0)
    cross_est = None
    if want_cross:
        cross_reps = (cross.sum() - cross) / (counts.sum() - counts)
        cross_est = Estimate(float(cross.sum() / counts.sum()), float(jackknife_se(cross_reps[:, None])[0]))
    done = {
        name: acc.finish(dt, _BRANCH_KIND[name], _first_lag(_BRANCH_KIND[name])) for name, acc in accs.items()
    }
    return EnsembleCorrelations(
        params,
        done.get("u"),
        done.get("v"),
        done.get("u_out"),
        done.get("v_out"),
        cross_est,
        n_traj,
        seed,
    )


def power_correlation(plus: CorrelationEstimate, minus: CorrelationEstimate, kind: str) -> CorrelationEstimate:
    """``<alpha*(t) alpha(t + tau)> = (<a+ a+> - <a- a->) / 4`` from the branch correlations."""
    return plus.combine(minus, 0.25, -0.25, kind)


@dataclass
class ExpFit:
    amplitude: float
    rate: float
    r2: float
    n_points: int
    amplitude_se: float = 0.0


def _exp(t, amp, rate):
    return amp * np.exp(-rate * t)


def _select_window(corr: CorrelationEstimate, max_points: int | None) -> int:
    v, se = corr.values, corr.std_errs
    strong = np.abs(v) > 5.0 * np.where(se > 0, se, 0.0)
    n = len(v) if strong.all() else int(np.argmin(strong))
    # stop after about three e-foldings of the leading value
    decayed = np.abs(v) < math.exp(-3.0) * abs(v[0])
    if decayed.any():
        n = min(n, int(np.argmax(decayed)))
    if max_points is not None:
        n = min(n, max_points)
    return n


def _fit_values(lags, values, sigma):
    pos = values > 0 if values[0] > 0 else values < 0
    head = np.flatnonzero(pos)[: max(3, len(values) // 2)]
    slope, icpt = np.polyfit(lags[head], np.log(np.abs(values[head])), 1)
    p0 = (math.copysign(math.exp(icpt), values[0]), max(-slope, 1e-6))
    popt, _ = curve_fit(_exp, lags, values, p0=p0, sigma=sigma, absolute_sigma=True, maxfev=5000)
    return popt


def binned_r2(lags, values, model, n_bins: int = FIT_BINS) -> float:
    """Coefficient of determination on lag-bin means.

    Single-lag estimates of a weak output branch scatter by far more than the
    model misfit one wants to detect; averaging contiguous lags first keeps
    the diagnostic sensitive to shape rather than to per-lag noise.
    """
    if len(values) >= 2 * n_bins:
        edges = np.linspace(0, len(values), n_bins + 1).astype(int)
        values = np.array([values[a:b].mean() for a, b in zip(edges[:-1], edges[1:])])
        model = np.array([model[a:b].mean() for a, b in zip(edges[:-1], edges[1:])])
    ss_tot = float(np.sum((values - values.mean()) ** 2))
    return 1.0 - float(np.sum((values - model) ** 2)) / ss_tot if ss_tot > 0 else 1.0


def fit_exponential(corr: CorrelationEstimate, max_points: int | None = None, min_points: int = 5) -> ExpFit:
    """Weighted fit of ``A exp(-rate tau)`` over the leading, well-resolved lags."""
    if not np.any(corr.values):
        return ExpFit(0.0, math.nan, 1.0, 0, 0.0)
    n = _select_window(corr, max_points)
    if n < min_points:
        raise EstimationError(f"only {n} resolved lags available for the exponential fit of {corr.kind}")
    lags, vals = corr.lags[:n], corr.values[:n]
    sigma = np.where(corr.std_errs[:n] > 0, corr.std_errs[:n], 1e-300)
    amp, rate = _fit_values(lags, vals, sigma)
    r2 = binned_r2(lags, vals, _exp(lags, amp, rate))
    rep_amps = np.array([_fit_values(lags, rep[:n], sigma)[0] for rep in corr.replicates])
    amp_se = float(jackknife_se(rep_amps[:, None])[0])
    return ExpFit(float(amp), float(rate), r2, n, amp_se)


def _continuation(amp, rate, omegas, dt):
    # int_0^dt A exp(-rate t) cos(w t) dt
    z = rate - 1j * omegas
    return np.real(amp * -np.expm1(-z * dt) / z)


def _lag_integral(lags, values, omegas):
    """Trapezoid ``int values(tau) cos(omega tau) dtau`` over the lag grid; ``values`` may be 2-D."""
    weights = np.full(len(lags), lags[1] - lags[0])
    weights[0] *= 0.5
    weights[-1] *= 0.5
    kernel = np.cos(np.outer(lags, omegas)) * weights[:, None]
    return values @ kernel


def _sign_for(kind: str) -> float:
    return -1.0 if kind.endswith("minus") else 1.0


def check_decayed(corr: CorrelationEstimate, tail_points: int = 10) -> None:
    """The correlation must have reached the noise level by the last lag."""
    tail = slice(-tail_points, None)
    level = abs(float(np.mean(corr.values[tail])))
    noise = float(np.mean(corr.std_errs[tail]))
    if level >= 2.0 * max(noise, 1e-300) and level > 1e-12 * max(abs(corr.values[0]), 1e-300):
        raise EstimationError(
            f"{corr.kind} correlation has not decayed by max_lag={corr.lags[-1]:.3g} "
            f"(tail {level:.3g} vs stderr {noise:.3g}); use a longer max_lag and stationarity window"
        )


def spectrum_from_correlation(
    corr: CorrelationEstimate,
    omegas: ArrayLike,
    analytic_floor: float,
    continuation_points: int = 20,
) -> SpectrumCurve:
    """``floor +/- 2 Re int_0^inf e^{i w tau} C(tau) dtau`` from an estimated correlation.

    The sign is negative for minus-quadrature kinds. When the lag grid starts
    at ``dt`` the interval ``[0, dt)`` is filled from an exponential fitted to
    the leading lags. The returned curve carries jackknife errors in
    ``meta["std_errs"]``.
    """
    check_decayed(corr)
    w = np.asarray(omegas, dtype=float)
    sign = _sign_for(corr.kind)

    def integral(values: NDArray[np.float64], fit_vals: NDArray[np.float64] | None) -> NDArray[np.float64]:
        total = _lag_integral(corr.lags, values, w)
        if not corr.includes_zero and fit_vals is not None:
            if np.any(fit_vals):
                n = min(continuation_points, len(fit_vals))
                amp, rate = _fit_values(corr.lags[:n], fit_vals[:n], sigma_head)
                total = total + _continuation(amp, rate, w, corr.lags[0])
        return total

    sigma_head = np.where(corr.std_errs[:continuation_points] > 0, corr.std_errs[:continuation_points], 1e-300)
    center = integral(corr.values, corr.values)
    reps = np.stack([integral(rep, rep) for rep in corr.replicates])
    values = analytic_floor + sign * 2.0 * center
    se = 2.0 * jackknife_se(reps)
    return SpectrumCurve(
        w,
        values,
        analytic_floor,
        corr.kind,
        (),
        {"std_errs": se, "estimated_from": corr.kind},
    )


@dataclass(frozen=True)
class EstimatedMoments(SteadyMoments):
    se_mean_photon: float = 0.0
    se_anomalous: float = 0.0


def cavity_moments_from_corr(plus: CorrelationEstimate, minus: CorrelationEstimate) -> EstimatedMoments:
    """Equal-time cavity moments from the lag-0 branch variances."""
    if not (plus.includes_zero and minus.includes_zero):
        raise ValueError("cavity correlations must include lag 0")
    u2, v2 = plus.values[0], minus.values[0]
    rep_n = 0.25 * (plus.replicates[:, 0] - minus.replicates[:, 0])
    rep_m = 0.25 * (plus.replicates[:, 0] + minus.replicates[:, 0])
    return EstimatedMoments(
        0.25 * (u2 - v2),
        0.25 * (u2 + v2),
        "cavity",
        float(jackknife_se(rep_n[:, None])[0]),
        float(jackknife_se(rep_m[:, None])[0]),
    )


def equal_time_output_moments(
    plus: CorrelationEstimate,
    minus: CorrelationEstimate,
    reservoir: ReservoirMoments,
    min_r2: float = MIN_R2,
) -> EstimatedMoments:
    """Output ``(n_out, <alpha_out^2>)`` from the continuous parts of the output correlations.

    Each branch correlation is extrapolated to ``tau = 0`` by an exponential
    fit; the delta-correlated reflected reservoir adds ``2(M +/- N)`` to the
    normally ordered equal-time branch moment.
    """
    fits = []
    for corr in (plus, minus):
        fit = fit_exponential(corr)
        if fit.r2 < min_r2:
            raise EstimationError(f"exponential fit of {corr.kind} is poor (R^2={fit.r2:.4f} < {min_r2})")
        fits.append(fit)
    n_res, m_res = reservoir.n_res, reservoir.m_res
    a_plus = fits[0].amplitude + 2.0 * (m_res + n_res)
    a_minus = fits[1].amplitude + 2.0 * (m_res - n_res)
    mean_photon = 0.25 * (a_plus - a_minus)
    anomalous = 0.25 * (a_plus + a_minus)
    # the two branches come from independent noise streams
    se = 0.25 * math.hypot(fits[0].amplitude_se, fits[1].amplitude_se)
    return EstimatedMoments(mean_photon, anomalous, "output", se, se)


def branch_equal_time(corr: CorrelationEstimate, reservoir_term: float, min_r2: float = MIN_R2) -> Estimate:
    """Normally ordered equal-time moment of one output branch (intercept + delta term)."""
    fit = fit_exponential(corr)
    if fit.r2 < min_r2:
        raise EstimationError(f"exponential fit of {corr.kind} is poor (R^2={fit.r2:.4f} < {min_r2})")
    return Estimate(fit.amplitude + reservoir_term, fit.amplitude_se)


def default_settings(params: DpoParams) -> Mapping[str, float]:
    """Default ``dt``, ``max_lag`` and stationarity window for an ensemble run."""
    lam = params.lambda_plus
    return {
        "dt": 0.01 / params.kappa,
        "max_lag": 20.0 / lam,
        "window": 100.0 / lam,
        "discard": 10.0 / lam,
    }


def doubling_ratio(small: Sequence[float], large: Sequence[float]) -> float:
    return float(np.mean(np.asarray(large) / np.asarray(small)))
