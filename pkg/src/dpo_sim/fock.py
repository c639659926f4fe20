"""Truncated Fock-basis integration of the squeezed-reservoir DPO master equation.

Used as a simulation-free reference for intracavity moments and the photon
distribution. Ladder operators act on the dense density matrix through
shifted slices, so one right-hand-side evaluation is O(dim^2).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray
from scipy.sparse.linalg import spsolve

from .analytic import SteadyMoments
from .params import DpoParams, require_below_threshold
from .photon_stats import PhotonDistribution

log = logging.getLogger(__name__)

TOP_OCCUPATION_MAX = 1e-8
RESIDUAL_TOL = 1e-10


class TruncationLeakError(RuntimeError):
    pass


class NonConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class DensityMatrix:
    entries: NDArray[np.complex128]
    t: float = 0.0
    residual: float = math.nan
    steps: int = 0

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def top_occupation(self) -> float:
        return float(self.entries[-1, -1].real)

    def diagonal(self) -> NDArray[np.float64]:
        return np.real(np.diag(self.entries)).copy()


def vacuum(dim: int) -> DensityMatrix:
    rho = np.zeros((dim, dim), dtype=complex)
    rho[0, 0] = 1.0
    return DensityMatrix(rho)


def annihilation(dim: int) -> NDArray[np.float64]:
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1)


class _Ladder:
    """Left/right multiplication by a and a^dagger without forming matrices."""

    def __init__(self, dim: int) -> None:
        s = np.sqrt(np.arange(dim, dtype=float))
        self.col = s[1:, None]
        self.row = s[None, 1:]
        self.number = np.arange(dim, dtype=float)
        # a a^dagger of the truncated matrices: n + 1 except 0 on the top level,
        # which keeps the truncated generator exactly trace-preserving
        self.anti_number = self.number + 1.0
        self.anti_number[-1] = 0.0

    def a_left(self, x):
        out = np.zeros_like(x)
        out[:-1] = self.col * x[1:]
        return out

    def ad_left(self, x):
        out = np.zeros_like(x)
        out[1:] = self.col * x[:-1]
        return out

    def a_right(self, x):
        out = np.zeros_like(x)
        out[:, 1:] = x[:, :-1] * self.row
        return out

    def ad_right(self, x):
        out = np.zeros_like(x)
        out[:, :-1] = x[:, 1:] * self.row
        return out


_LADDERS: dict[int, _Ladder] = {}


def _ladder(dim: int) -> _Ladder:
    if dim not in _LADDERS:
        _LADDERS[dim] = _Ladder(dim)
    return _LADDERS[dim]


def lindblad_rhs(rho: NDArray[np.complex128], params: DpoParams) -> NDArray[np.complex128]:
    """Time derivative of ``rho`` under the parametric gain and squeezed-bath dissipators."""
    dim = rho.shape[0]
    if dim < 2:
        raise ValueError("Fock truncation must be at least 2")
    lad = _ladder(dim)
    k, e, n_res, m_res = params.kappa, params.epsilon, params.n_res, params.m_res
    num = lad.number

    a_rho = lad.a_left(rho)
    ad_rho = lad.ad_left(rho)
    rho_a = lad.a_right(rho)
    rho_ad = lad.ad_right(rho)
    a2_rho = lad.a_left(a_rho)
    ad2_rho = lad.ad_left(ad_rho)
    rho_a2 = lad.a_right(rho_a)
    rho_ad2 = lad.ad_right(rho_ad)

    out = 0.5 * e * (ad2_rho - a2_rho - rho_ad2 + rho_a2)
    # (N+1) dissipator: 2 a rho a+ - n rho - rho n
    out += 0.5 * k * (n_res + 1.0) * (2.0 * lad.ad_right(a_rho) - num[:, None] * rho - rho * num[None, :])
    anti = lad.anti_number
    out += 0.5 * k * n_res * (2.0 * lad.a_right(ad_rho) - anti[:, None] * rho - rho * anti[None, :])
    if m_res != 0.0:
        out += 0.5 * k * m_res * (
            a2_rho - 2.0 * lad.a_right(a_rho) + rho_a2 - 2.0 * lad.ad_right(ad_rho) + ad2_rho + rho_ad2
        )
    return out


def _rk4_step(rho, params, dt):
    k1 = lindblad_rhs(rho, params)
    k2 = lindblad_rhs(rho + 0.5 * dt * k1, params)
    k3 = lindblad_rhs(rho + 0.5 * dt * k2, params)
    k4 = lindblad_rhs(rho + dt * k3, params)
    return rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def max_stable_dt(params: DpoParams, dim: int) -> float:
    """Conservative RK4 step bound from a Gershgorin-type estimate of the generator's spectral radius."""
    k = params.kappa
    radius = dim * (2.0 * k * (2.0 * params.n_res + 1.0) + 2.0 * params.epsilon + 3.0 * k * params.m_res)
    return 2.5 / radius


def _step_size(params: DpoParams, dim: int, dt: float | None) -> float:
    dt = 1e-3 / params.kappa if dt is None else dt
    limit = max_stable_dt(params, dim)
    if dt > limit:
        log.info("dt=%.3g exceeds RK4 stability bound %.3g at dim=%d; using the bound", dt, limit, dim)
        dt = limit
    return dt


def _check_trace(rho, t):
    trace = np.trace(rho).real
    if not math.isfinite(trace) or abs(trace - 1.0) > 1e-8:
        raise NonConvergenceError(f"trace drifted to {trace} at t={t}; reduce dt")


def evolve(
    params: DpoParams,
    dim: int,
    t_end: float,
    dt: float | None = None,
    rho0: DensityMatrix | None = None,
) -> DensityMatrix:
    """Fixed-step RK4 transient from ``rho0`` (vacuum by default) to ``t_end``."""
    dt = _step_size(params, dim, dt)
    rho = (rho0 or vacuum(dim)).entries.astype(complex)
    n_steps = int(math.ceil(t_end / dt - 1e-9))
    for step in range(n_steps):
        rho = _rk4_step(rho, params, dt)
        if step % 1000 == 999:
            _check_trace(rho, (step + 1) * dt)
    _check_trace(rho, n_steps * dt)
    residual = float(np.max(np.abs(lindblad_rhs(rho, params))))
    return DensityMatrix(rho, t=n_steps * dt, residual=residual, steps=n_steps)


def evolve_to_steady(
    params: DpoParams,
    dim: int,
    t_end: float = 2000.0,
    dt: float | None = None,
    tol: float = RESIDUAL_TOL,
    check_every: int = 200,
) -> DensityMatrix:
    """Integrate from vacuum until ``max|d rho/dt| < tol``.

    Raises ``TruncationLeakError`` as soon as the top Fock level holds more
    than 1e-8, and ``NonConvergenceError`` if ``t_end`` is reached first.
    """
    require_below_threshold(params, "Fock steady state")
    dt = _step_size(params, dim, dt)
    rho = vacuum(dim).entries
    t, steps = 0.0, 0
    residual = math.inf
    while t < t_end:
        for _ in range(check_every):
            rho = _rk4_step(rho, params, dt)
        steps += check_every
        t = steps * dt
        _check_trace(rho, t)
        top = rho[-1, -1].real
        if top > TOP_OCCUPATION_MAX:
            raise TruncationLeakError(
                f"top Fock level occupation {top:.2e} exceeds {TOP_OCCUPATION_MAX:.0e} at dim={dim}, t={t:.2f}"
            )
        residual = float(np.max(np.abs(lindblad_rhs(rho, params))))
        if residual < tol:
            break
    else:
        raise NonConvergenceError(f"residual {residual:.3e} > {tol:.1e} at t_end={t_end} (dim={dim})")
    log.debug("steady state at t=%.1f, residual=%.2e, dim=%d", t, residual, dim)
    return DensityMatrix(rho, t=t, residual=residual, steps=steps)


def liouvillian(params: DpoParams, dim: int) -> sp.csr_matrix:
    """Sparse generator acting on column-stacked ``vec(rho)``; ``vec(A rho B) = (B^T kron A) vec(rho)``."""
    a = sp.diags(np.sqrt(np.arange(1, dim, dtype=float)), 1, format="csr")
    ad = a.T.tocsr()
    eye = sp.identity(dim, format="csr")
    num = ad @ a
    anti = a @ ad

    def left(op):
        return sp.kron(eye, op)

    def right(op):
        return sp.kron(op.T, eye)

    def both(l_op, r_op):
        return sp.kron(r_op.T, l_op)

    k, e, n_res, m_res = params.kappa, params.epsilon, params.n_res, params.m_res
    a2, ad2 = a @ a, ad @ ad
    gen = 0.5 * e * (left(ad2) - left(a2) - right(ad2) + right(a2))
    gen = gen + 0.5 * k * (n_res + 1.0) * (2.0 * both(a, ad) - left(num) - right(num))
    gen = gen + 0.5 * k * n_res * (2.0 * both(ad, a) - left(anti) - right(anti))
    if m_res != 0.0:
        gen = gen + 0.5 * k * m_res * (left(a2) - 2.0 * both(a, a) + right(a2) - 2.0 * both(ad, ad) + left(ad2) + right(ad2))
    return gen.tocsr()


def solve_steady(params: DpoParams, dim: int) -> DensityMatrix:
    """Null vector of the truncated generator with unit trace, by one sparse LU solve.

    This is the same fixed point the time integration approaches; it raises
    ``TruncationLeakError`` when the top level holds more than 1e-8.
    """
    require_below_threshold(params, "Fock steady state")
    gen = liouvillian(params, dim).tolil()
    rhs = np.zeros(dim * dim)
    # replace one balance equation by the trace condition
    gen[0, :] = 0.0
    gen[0, [i * (dim + 1) for i in range(dim)]] = 1.0
    rhs[0] = 1.0
    vec = spsolve(gen.tocsc(), rhs)
    rho = vec.reshape(dim, dim, order="F").astype(complex)
    rho = 0.5 * (rho + rho.conj().T)
    residual = float(np.max(np.abs(lindblad_rhs(rho, params))))
    top = rho[-1, -1].real
    if top > TOP_OCCUPATION_MAX:
        raise TruncationLeakError(f"top Fock level occupation {top:.2e} exceeds {TOP_OCCUPATION_MAX:.0e} at dim={dim}")
    return DensityMatrix(rho, t=math.inf, residual=residual, steps=0)


def adaptive_steady_state(
    params: DpoParams,
    dim: int = 30,
    max_dim: int = 240,
    method: str = "direct",
    **kwargs,
) -> DensityMatrix:
    """Steady state with the truncation doubled until the top level stays empty.

    ``method="direct"`` solves the sparse balance equations; ``"rk4"``
    integrates from vacuum with ``evolve_to_steady`` (keyword arguments are
    passed through).
    """
    if method not in ("direct", "rk4"):
        raise ValueError(f"unknown method {method!r}")
    while True:
        try:
            if method == "direct":
                return solve_steady(params, dim)
            return evolve_to_steady(params, dim, **kwargs)
        except TruncationLeakError:
            if dim * 2 > max_dim:
                raise
            log.info("truncation leak at dim=%d, retrying with dim=%d", dim, 2 * dim)
            dim *= 2


def expect_number(rho: NDArray[np.complex128]) -> float:
    num = np.arange(rho.shape[0], dtype=float)
    return float(np.real(np.dot(num, np.diag(rho))))


def expect_a(rho: NDArray[np.complex128]) -> complex:
    # Tr(rho a) = sum_i sqrt(i+1) rho[i+1, i]
    s = np.sqrt(np.arange(1, rho.shape[0], dtype=float))
    return complex(np.dot(s, np.diag(rho, k=-1)))


def expect_a2(rho: NDArray[np.complex128]) -> complex:
    # Tr(rho a^2) = sum_i sqrt((i+1)(i+2)) rho[i+2, i]
    i = np.arange(rho.shape[0] - 2, dtype=float)
    return complex(np.dot(np.sqrt((i + 1.0) * (i + 2.0)), np.diag(rho, k=-2)))


def moments_from_rho(rho: DensityMatrix) -> tuple[SteadyMoments, PhotonDistribution]:
    entries = rho.entries
    mean = expect_number(entries)
    anomalous = expect_a2(entries).real
    probs = rho.diagonal()
    dist = PhotonDistribution(probs=probs, n_max=len(probs) - 1, tail_bound=1.0 - math.fsum(probs.tolist()))
    return SteadyMoments(mean, anomalous, "cavity"), dist


def write_diagonal_csv(rho: DensityMatrix, path, header: str = "") -> None:
    from .io import write_csv

    diag = rho.diagonal()
    write_csv(path, ["n", "rho_nn"], [(n, p) for n, p in enumerate(diag)], header)
