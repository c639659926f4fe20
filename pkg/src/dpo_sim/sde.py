"""Ensemble integrator for the quadrature-branch Langevin dynamics.

The complex c-number noise of the oscillator has a normally ordered
correlation matrix that is not positive semidefinite, so ``alpha`` itself
cannot be sampled. The sum and difference combinations ``alpha* +/- alpha``
obey decoupled Ornstein-Uhlenbeck equations with nonnegative diffusions
``2[kappa(M +/- N) + epsilon]``; they are evolved here as two independent
real processes ``u`` and ``v`` whose second moments equal the formal ones.

Each branch's noise is the sum of a parametric (cavity) stream and a
reservoir stream. The reservoir increments are recorded because the output
field is built from them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.signal import lfilter

from .params import DpoParams, Regime, branch_diffusions, classify_regime

# column order of the flat binary dump
RECORD_COLUMNS = ("u", "v", "dW_R_plus", "dW_R_minus")
DRAWS_PER_STEP = 4


class TransientOnlyError(ValueError):
    """Above threshold only finite-time simulations are meaningful."""


def _relax_fraction(x: float) -> float:
    """``(1 - exp(-x)) / x``, accurate down to subnormal ``x``."""
    if x < 1e-8:
        return 1.0 - 0.5 * x
    return -math.expm1(-x) / x


def exact_ou_step(x: ArrayLike, lam: float, D: float, dt: float, xi: ArrayLike) -> NDArray[np.float64]:
    """Exact transition of ``dx = -(lam/2) x dt + sqrt(D) dW`` over ``dt``.

    ``xi`` is a standard normal draw (scalar or array). ``lam = 0`` is a pure
    diffusion step.
    """
    if D < 0.0:
        raise ValueError(f"diffusion must be >= 0, got {D}")
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    if lam < 0.0:
        raise ValueError("decay rate must be >= 0")
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    return x * math.exp(-0.5 * lam * dt) + xi * math.sqrt(D * dt * _relax_fraction(lam * dt))


@dataclass(frozen=True)
class BranchCoefficients:
    """Per-step constants for one quadrature branch.

    ``beta`` is the regression of the exact OU noise integral on the plain
    increment of the same white noise over the step.
    """

    lam: float
    d_cavity: float
    d_reservoir: float
    dt: float

    @property
    def diffusion(self) -> float:
        return self.d_cavity + self.d_reservoir

    @property
    def decay(self) -> float:
        return math.exp(-0.5 * self.lam * self.dt)

    @property
    def noise_var(self) -> float:
        return self.diffusion * self.dt * _relax_fraction(self.lam * self.dt)

    @property
    def beta(self) -> float:
        return _relax_fraction(0.5 * self.lam * self.dt)

    @property
    def other_std(self) -> float:
        """Std of the noise integral once its reservoir component is removed."""
        resid = self.noise_var - self.beta**2 * self.d_reservoir * self.dt
        return math.sqrt(max(resid, 0.0))

    def standard_normal(self, dw_r: NDArray[np.float64], z: NDArray[np.float64]) -> NDArray[np.float64]:
        """Standardized noise draw ``xi`` for ``exact_ou_step`` given the reservoir increment."""
        std = math.sqrt(self.noise_var)
        if std == 0.0:
            return np.zeros_like(z)
        return (self.beta * dw_r + self.other_std * z) / std


def branch_coefficients(params: DpoParams, dt: float) -> tuple[BranchCoefficients, BranchCoefficients]:
    d = branch_diffusions(params)
    plus = BranchCoefficients(params.lambda_plus, d["C_plus"], d["R_plus"], dt)
    minus = BranchCoefficients(params.lambda_minus, d["C_minus"], d["R_minus"], dt)
    return plus, minus


@dataclass
class TrajectoryEnsemble:
    """Sample paths of the branch surrogates and the reservoir increments.

    ``u`` and ``v`` have ``n_steps + 1`` columns (the vacuum start included);
    the increment arrays have ``n_steps`` columns, column ``k`` covering the
    step from ``t_k`` to ``t_{k+1}``.
    """

    params: DpoParams
    dt: float
    n_steps: int
    seed: int
    traj_start: int
    u: NDArray[np.float64]
    v: NDArray[np.float64]
    dw_r_plus: NDArray[np.float64]
    dw_r_minus: NDArray[np.float64]

    @property
    def n_traj(self) -> int:
        return self.u.shape[0]

    @property
    def traj_indices(self) -> NDArray[np.int64]:
        return np.arange(self.traj_start, self.traj_start + self.n_traj)

    @property
    def times(self) -> NDArray[np.float64]:
        return self.dt * np.arange(self.n_steps + 1)

    def dump(self, path) -> None:
        """Little-endian float64, one row per (trajectory, step), columns ``RECORD_COLUMNS``.

        The final state ``u[:, n_steps]`` has no increment partner and is not written.
        """
        stacked = np.stack(
            [self.u[:, :-1], self.v[:, :-1], self.dw_r_plus, self.dw_r_minus], axis=-1
        ).astype("<f8")
        with open(path, "wb") as fh:
            fh.write(stacked.tobytes(order="C"))


def load_dump(path, n_traj: int, n_steps: int) -> NDArray[np.float64]:
    raw = np.fromfile(path, dtype="<f8")
    return raw.reshape(n_traj, n_steps, len(RECORD_COLUMNS))


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based Philox stream keyed by (seed, trajectory index)."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(index,))
    return np.random.Generator(np.random.Philox(ss))


def n_steps_for(t_end: float, dt: float) -> int:
    return int(round(t_end / dt))


def _check_regime(params: DpoParams, allow_transient: bool) -> None:
    if classify_regime(params) is Regime.ABOVE and not allow_transient:
        raise TransientOnlyError(
            "above threshold the ensemble has no steady state; pass allow_transient=True "
            "to confirm a finite-time (transient) simulation"
        )


def simulate_ensemble(
    params: DpoParams,
    n_traj: int,
    dt: float,
    t_end: float,
    seed: int,
    *,
    traj_start: int = 0,
    allow_transient: bool = False,
    time_chunk: int = 4096,
) -> TrajectoryEnsemble:
    """Evolve trajectories ``traj_start .. traj_start + n_traj - 1`` from the vacuum.

    Trajectory ``i`` draws from its own stream, so any partition of the
    ensemble into blocks yields identical records.
    """
    _check_regime(params, allow_transient)
    if n_traj <= 0:
        raise ValueError("n_traj must be positive")
    n_steps = n_steps_for(t_end, dt)
    if n_steps <= 0:
        raise ValueError("t_end must cover at least one step")
    plus, minus = branch_coefficients(params, dt)
    rngs = [trajectory_rng(seed, traj_start + i) for i in range(n_traj)]

    u = np.zeros((n_traj, n_steps + 1))
    v = np.zeros((n_traj, n_steps + 1))
    dw_rp = np.empty((n_traj, n_steps))
    dw_rm = np.empty((n_traj, n_steps))
    sq_rp = math.sqrt(plus.d_reservoir * dt)
    sq_rm = math.sqrt(minus.d_reservoir * dt)

    for start in range(0, n_steps, time_chunk):
        stop = min(start + time_chunk, n_steps)
        draws = np.stack([rng.standard_normal((stop - start, DRAWS_PER_STEP)) for rng in rngs])
        dw_rp[:, start:stop] = sq_rp * draws[..., 0]
        dw_rm[:, start:stop] = sq_rm * draws[..., 1]
        for coeffs, x, dw, z in (
            (plus, u, dw_rp[:, start:stop], draws[..., 2]),
            (minus, v, dw_rm[:, start:stop], draws[..., 3]),
        ):
            xi = coeffs.standard_normal(dw, z)
            # x_{k+1} = decay * x_k + sigma * xi_k, i.e. exact_ou_step applied along the row
            eta = xi * math.sqrt(coeffs.noise_var)
            a = coeffs.decay
            x[:, start + 1 : stop + 1] = lfilter([1.0], [1.0, -a], eta, axis=1, zi=a * x[:, start : start + 1])[0]
    return TrajectoryEnsemble(params, dt, n_steps, seed, traj_start, u, v, dw_rp, dw_rm)


def iter_blocks(
    params: DpoParams,
    n_traj: int,
    dt: float,
    t_end: float,
    seed: int,
    block_size: int = 128,
    **kwargs,
) -> Iterator[TrajectoryEnsemble]:
    for start in range(0, n_traj, block_size):
        yield simulate_ensemble(
            params, min(block_size, n_traj - start), dt, t_end, seed, traj_start=start, **kwargs
        )


def output_records(ensemble: TrajectoryEnsemble) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Discrete output-field surrogates, one sample per step.

    ``u_out_k = sqrt(kappa) (u_k + u_{k+1})/2 - dW_R_plus_k / (sqrt(kappa) dt)``, likewise for
    ``v``. The cavity state enters as the step average so that its correlation
    with the step's reservoir increment matches the continuous-time response
    to second order in ``lambda dt``. The reservoir term is a white-noise
    density, so the lag-0 sample variance carries an ``O(1/dt)`` floor.
    """
    k = ensemble.params.kappa
    sk = math.sqrt(k)
    dt = ensemble.dt
    u_mid = 0.5 * (ensemble.u[:, :-1] + ensemble.u[:, 1:])
    v_mid = 0.5 * (ensemble.v[:, :-1] + ensemble.v[:, 1:])
    u_out = sk * u_mid - ensemble.dw_r_plus / (sk * dt)
    v_out = sk * v_mid - ensemble.dw_r_minus / (sk * dt)
    return u_out, v_out


def reconstruct_moments(u2: float, v2: float) -> tuple[float, float]:
    """``(<alpha* alpha>, <alpha^2>)`` from the branch second moments."""
    return 0.25 * (u2 - v2), 0.25 * (u2 + v2)
