import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpo_sim import sde
from dpo_sim.params import DpoParams

BASE = DpoParams(0.8, 0.2, 0.0)


def test_ou_step_without_noise_decays():
    for dt in (0.01, 0.5, 3.0):
        assert sde.exact_ou_step(1.0, 1.2, 0.0, dt, 0.7) == pytest.approx(math.exp(-0.6 * dt), rel=1e-15)


def test_ou_step_pure_diffusion():
    assert sde.exact_ou_step(0.0, 0.0, 0.4, 0.01, 1.0) == pytest.approx(math.sqrt(0.004), rel=1e-15)


def test_ou_step_rejects_bad_input():
    with pytest.raises(ValueError):
        sde.exact_ou_step(0.0, 1.0, -0.1, 0.1, 0.0)
    with pytest.raises(ValueError):
        sde.exact_ou_step(0.0, 1.0, 0.1, 0.0, 0.0)


def test_ou_stationary_variance():
    rng = np.random.default_rng(3)
    x = np.zeros(20_000)
    for _ in range(400):
        x = sde.exact_ou_step(x, 0.4, 0.4, 0.25, rng.standard_normal(x.size))
    var = x.var()
    se = var * math.sqrt(2 / x.size)
    assert abs(var - 1.0) < 3 * se


@given(
    st.floats(0.0, 3.0),
    st.floats(0.0, 5.0),
    st.floats(1e-3, 2.0),
    st.integers(1, 50),
)
@settings(max_examples=40)
def test_ou_steps_compose(lam, d, dt, k):
    # k exact steps of dt have the same variance as one step of k*dt
    var = 0.0
    for _ in range(k):
        var = var * math.exp(-lam * dt) + float(sde.exact_ou_step(0.0, lam, d, dt, 1.0)) ** 2
    one = float(sde.exact_ou_step(0.0, lam, d, k * dt, 1.0)) ** 2
    assert var == pytest.approx(one, rel=1e-9, abs=1e-15)


@given(st.floats(0.1, 1.0), st.floats(0.0, 0.99), st.floats(0.0, 1.5), st.floats(1e-3, 0.5))
@settings(max_examples=60)
def test_branch_noise_split_is_consistent(kappa, frac, r, dt):
    p = DpoParams(kappa, frac * kappa / 2, r)
    for c in sde.branch_coefficients(p, dt):
        assert c.other_std >= 0.0
        # the reservoir regression plus the remainder reproduce the full noise variance
        total = c.beta**2 * c.d_reservoir * dt + c.other_std**2
        assert total == pytest.approx(c.noise_var, rel=1e-9, abs=1e-300)


def test_no_pump_no_squeezing_stays_zero():
    ens = sde.simulate_ensemble(DpoParams(0.8, 0.0, 0.0), 5, 0.01, 2.0, seed=1)
    assert not ens.u.any() and not ens.v.any()
    u_out, v_out = sde.output_records(ens)
    assert not u_out.any() and not v_out.any()


def test_vacuum_start_and_shapes():
    ens = sde.simulate_ensemble(BASE, 3, 0.1, 1.0, seed=1)
    assert ens.u.shape == (3, 11) and ens.dw_r_plus.shape == (3, 10)
    assert not ens.u[:, 0].any() and not ens.v[:, 0].any()
    assert ens.times[-1] == pytest.approx(1.0)


def test_same_seed_is_bit_identical():
    a = sde.simulate_ensemble(BASE, 4, 0.05, 3.0, seed=9)
    b = sde.simulate_ensemble(BASE, 4, 0.05, 3.0, seed=9)
    assert a.u.tobytes() == b.u.tobytes()
    assert a.dw_r_minus.tobytes() == b.dw_r_minus.tobytes()
    c = sde.simulate_ensemble(BASE, 4, 0.05, 3.0, seed=10)
    assert not np.array_equal(a.u, c.u)


def test_blocks_do_not_change_records():
    whole = sde.simulate_ensemble(BASE, 7, 0.05, 2.0, seed=4)
    parts = list(sde.iter_blocks(BASE, 7, 0.05, 2.0, seed=4, block_size=3))
    assert [p.traj_start for p in parts] == [0, 3, 6]
    assert np.array_equal(np.vstack([p.u for p in parts]), whole.u)
    chunked = sde.simulate_ensemble(BASE, 7, 0.05, 2.0, seed=4, time_chunk=7)
    assert np.array_equal(chunked.v, whole.v)


def test_recursion_matches_exact_step():
    ens = sde.simulate_ensemble(BASE, 2, 0.05, 1.0, seed=2)
    plus, _ = sde.branch_coefficients(BASE, 0.05)
    rng = sde.trajectory_rng(2, 1)
    draws = rng.standard_normal((ens.n_steps, sde.DRAWS_PER_STEP))
    dw = math.sqrt(plus.d_reservoir * 0.05) * draws[:, 0]
    xi = plus.standard_normal(dw, draws[:, 2])
    x = 0.0
    for k in range(ens.n_steps):
        x = float(sde.exact_ou_step(x, plus.lam, plus.diffusion, 0.05, xi[k]))
    assert x == pytest.approx(ens.u[1, -1], rel=1e-10, abs=1e-12)


def test_stationary_cavity_moments():
    n_traj = 10_000
    ens = sde.simulate_ensemble(BASE, n_traj, 0.01, 50.0, seed=6)
    u2, v2 = ens.u[:, -1] ** 2, ens.v[:, -1] ** 2
    se_u = u2.std(ddof=1) / math.sqrt(n_traj)
    assert abs(u2.mean() - 1.0) < 3 * se_u
    n, m = sde.reconstruct_moments(u2.mean(), v2.mean())
    se_n = 0.25 * (u2 - v2).std(ddof=1) / math.sqrt(n_traj)
    se_m = 0.25 * (u2 + v2).std(ddof=1) / math.sqrt(n_traj)
    assert abs(n - 1 / 6) < 3 * se_n
    assert abs(m - 1 / 3) < 3 * se_m
    cross = ens.u[:, -1] * ens.v[:, -1]
    assert abs(cross.mean()) < 3 * cross.std(ddof=1) / math.sqrt(n_traj)


def test_critical_point_grows_linearly():
    p = DpoParams(0.8, 0.4, 0.0)
    ens = sde.simulate_ensemble(p, 4000, 0.05, 20.0, seed=8)
    t = ens.times
    i, j = 100, 400
    # per-trajectory difference quotient; its mean is the slope of <u^2>
    slopes = (ens.u[:, j] ** 2 - ens.u[:, i] ** 2) / (t[j] - t[i])
    se = slopes.std(ddof=1) / math.sqrt(slopes.size)
    d_plus = 2 * (p.kappa * (p.m_res + p.n_res) + p.epsilon)
    assert abs(slopes.mean() - d_plus) < 3 * se
    assert np.polyfit(t[1:], np.mean(ens.u[:, 1:] ** 2, axis=0), 1)[0] == pytest.approx(d_plus, rel=0.1)


def test_above_threshold_needs_confirmation():
    p = DpoParams(0.8, 0.5, 0.0)
    with pytest.raises(sde.TransientOnlyError):
        sde.simulate_ensemble(p, 2, 0.01, 1.0, seed=1)
    ens = sde.simulate_ensemble(p, 2, 0.01, 1.0, seed=1, allow_transient=True)
    assert ens.n_steps == 100


def test_output_floor_scales_with_dt():
    p = DpoParams(0.8, 0.2, 0.5)
    for dt in (0.02, 0.005):
        ens = sde.simulate_ensemble(p, 200, dt, 20.0, seed=3)
        u_out, _ = sde.output_records(ens)
        raw = np.mean(u_out[:, int(10 / dt):] ** 2)
        d_r = 2 * p.kappa * (p.m_res + p.n_res)
        floor = d_r / (p.kappa * dt)
        assert raw == pytest.approx(floor, rel=0.05)


def test_dump_roundtrip(tmp_path):
    ens = sde.simulate_ensemble(BASE, 3, 0.1, 1.0, seed=1)
    path = tmp_path / "records.bin"
    ens.dump(path)
    assert path.stat().st_size == 3 * 10 * 4 * 8
    data = sde.load_dump(path, 3, 10)
    assert np.array_equal(data[..., 0], ens.u[:, :-1])
    assert np.array_equal(data[..., 3], ens.dw_r_minus)


def test_reconstruction_identities():
    assert sde.reconstruct_moments(1.0, 1 / 3) == pytest.approx((1 / 6, 1 / 3))
