import numpy as np
import pytest

from viscolab.constitutive import ConstitutiveModel, EnergyModel, ViscosityModel
from viscolab.diagnostics import energy_report, min_det_series, theta_norm
from viscolab.errors import MismatchedSampling
from viscolab.pde_solver import (FieldState, SolverConfig, Termination,
                                 Trajectory, build_grid, heat_extension,
                                 init_state, run)

MODEL = ConstitutiveModel(EnergyModel.w0(), ViscosityModel.z0doubleprime())


@pytest.fixture(scope="module")
def decay():
    grid = build_grid(1, 64)
    state = init_state(grid, lambda x: np.array(x, copy=True),
                       lambda x: 0.1 * np.sin(np.pi * x), 1e-3)
    traj = run(MODEL, grid, SolverConfig(dt=1e-3, t_end=0.4), state)
    ext = heat_extension(grid, state.xi, state.v, 1e-3, 0.4)
    return grid, traj, ext


def test_rest_report_is_zero():
    grid = build_grid(1, 16)
    state = init_state(grid, lambda x: np.array(x, copy=True),
                       lambda x: np.zeros_like(x), 1e-3)
    traj = run(MODEL, grid, SolverConfig(dt=1e-2, t_end=0.1), state)
    rep = energy_report(traj, MODEL, grid)
    assert not rep.kinetic.any()
    assert not rep.elastic.any()
    assert not rep.dissipated_cumulative.any()
    assert not rep.balance_residual.any()
    assert all(d == 1.0 for _, d in min_det_series(traj, grid))


def test_decay_energy_budget(decay):
    grid, traj, _ = decay
    rep = energy_report(traj, MODEL, grid)
    total = rep.kinetic + rep.elastic
    assert np.all(np.diff(total) <= 1e-15)
    assert np.all(np.diff(rep.dissipated_cumulative) >= -1e-15)
    # the residual carries the O(dt) scheme error, ~1% of E(0) at dt = 1e-3
    assert np.max(np.abs(rep.balance_residual)) <= 5e-2 * total[0]


def test_balance_residual_shrinks_with_dt():
    grid = build_grid(1, 32)
    residuals = []
    for dt in (2e-3, 1e-3):
        state = init_state(grid, lambda x: np.array(x, copy=True),
                           lambda x: 0.1 * np.sin(np.pi * x), 1e-3)
        traj = run(MODEL, grid, SolverConfig(dt=dt, t_end=0.2), state)
        rep = energy_report(traj, MODEL, grid)
        residuals.append(abs(rep.balance_residual[-1]))
    assert residuals[0] / residuals[1] >= 1.8


def test_min_det_closed_form():
    # uniform shrinking map xi = (1 - eps t) X built by hand
    grid = build_grid(2, 8)
    x = grid.node_positions()
    eps = 0.3
    states = [FieldState(t, (1.0 - eps * t) * x, np.zeros_like(x))
              for t in (0.0, 0.5, 1.0)]
    traj = Trajectory(states, Termination('completed'))
    series = min_det_series(traj, grid)
    for t, d in series:
        assert d == pytest.approx((1.0 - eps * t) ** 2, abs=1e-12)


def test_forcing_work_balances_manufactured():
    # constant-in-time forcing on a rest state does no work (v = 0)
    grid = build_grid(1, 16)
    state = init_state(grid, lambda x: np.array(x, copy=True),
                       lambda x: np.zeros_like(x), 1e-3)
    traj = run(MODEL, grid, SolverConfig(dt=1e-2, t_end=0.05), state)
    rep = energy_report(traj, MODEL, grid,
                        forcing=lambda t, g: np.zeros(g.node_shape + (1,)))
    assert np.max(np.abs(rep.balance_residual)) <= 1e-14


def test_theta_zero_for_rest(decay):
    grid = build_grid(1, 16)
    state = init_state(grid, lambda x: np.array(x, copy=True),
                       lambda x: np.zeros_like(x), 1e-3)
    traj = run(MODEL, grid, SolverConfig(dt=1e-2, t_end=0.1), state)
    ext = heat_extension(grid, state.xi, state.v, 1e-2, 0.1)
    rep = theta_norm(traj, ext, grid, p=4.0)
    assert rep.theta == 0.0
    assert rep.d_of_t == 0.0


def test_theta_zero_when_fed_extension(decay):
    grid, _, ext = decay
    rep = theta_norm(ext, ext, grid, p=4.0)
    assert rep.theta == 0.0
    assert rep.d_of_t > 0.0


def test_theta_monotone_in_window(decay):
    grid, traj, ext = decay
    thetas, ds = [], []
    for t_max in (0.4, 0.2, 0.1, 0.05):
        rep = theta_norm(traj, ext, grid, p=4.0, t_max=t_max)
        assert rep.window == pytest.approx(t_max)
        thetas.append(rep.theta)
        ds.append(rep.d_of_t)
    assert all(a > b > 0.0 for a, b in zip(thetas, thetas[1:]))
    assert all(a > b > 0.0 for a, b in zip(ds, ds[1:]))


def test_theta_mismatched_sampling(decay):
    grid, traj, ext = decay
    clipped = Trajectory(traj.states[:-3], traj.termination)
    with pytest.raises(MismatchedSampling):
        theta_norm(clipped, ext, grid, p=4.0)
    with pytest.raises(ValueError):
        theta_norm(traj, ext, grid, p=2.0)
