"""Trajectory monitors: energy balance, determinant floor, deviation norms.

Spatial quadratures use the cell-centered midpoint rule at exactly the
points where the discrete gradients live, so the energy bookkeeping is
consistent with the solver's summation-by-parts pair.  Time integrals
accumulate trapezoidally over the stored snapshots.
"""

from dataclasses import dataclass

import numpy as np

from .constitutive import dissipation_density, energy
from .errors import MismatchedSampling
from .pde_solver import gradient_field


@dataclass(frozen=True)
class EnergyReport:
    times: np.ndarray
    kinetic: np.ndarray
    elastic: np.ndarray
    dissipated_cumulative: np.ndarray
    balance_residual: np.ndarray


@dataclass(frozen=True)
class ThetaReport:
    """Space-time L_p norms of a trajectory's distance to its extension.

    theta measures (xi - xibar): the L_p norm of its second time difference
    plus the L_p norm of the second space differences of its velocity;
    d_of_t is the same functional of the extension alone.
    """

    window: float
    theta: float
    d_of_t: float
    p_norm: float


def _to_centers(grid, nodal):
    if grid.dim == 1:
        return 0.5 * (nodal[1:] + nodal[:-1])
    return 0.25 * (nodal[1:, 1:] + nodal[:-1, 1:]
                   + nodal[1:, :-1] + nodal[:-1, :-1])


def energy_report(traj, model, grid, forcing=None):
    """Kinetic/elastic/dissipation series and the balance residual.

    residual(t) = E(t) + dissipated(t) - E(0) - work_of_forcing(t); with a
    faithful scheme it shrinks at the order of the time discretization.
    """
    if not traj.states:
        raise ValueError("empty trajectory")
    hvol = grid.spacing ** grid.dim
    times = traj.times
    kin = np.empty(len(times))
    ela = np.empty(len(times))
    diss_rate = np.empty(len(times))
    work_rate = np.empty(len(times))
    for idx, st in enumerate(traj.states):
        f = gradient_field(grid, st.xi)
        q = gradient_field(grid, st.v)
        vc = _to_centers(grid, st.v)
        kin[idx] = 0.5 * hvol * float(np.sum(vc * vc))
        ela[idx] = hvol * float(np.sum(energy(model.energy, f)))
        diss_rate[idx] = hvol * float(np.sum(dissipation_density(model.viscosity, f, q)))
        if forcing is None:
            work_rate[idx] = 0.0
        else:
            fc = _to_centers(grid, forcing(st.time, grid))
            work_rate[idx] = hvol * float(np.sum(fc * vc))

    def cumtrap(rate):
        out = np.zeros_like(rate)
        if len(rate) > 1:
            dt = np.diff(times)
            out[1:] = np.cumsum(0.5 * dt * (rate[1:] + rate[:-1]))
        return out

    diss = cumtrap(diss_rate)
    work = cumtrap(work_rate)
    total = kin + ela
    residual = total + diss - total[0] - work
    return EnergyReport(times, kin, ela, diss, residual)


def min_det_series(traj, grid):
    """(time, minimum cell determinant) per snapshot."""
    out = []
    for st in traj.states:
        dets = np.linalg.det(gradient_field(grid, st.xi))
        out.append((st.time, float(np.min(dets))))
    return out


def _second_space_diff_norm_p(grid, nodal, p):
    """Sum over interior nodes of |second axis-aligned differences|^p."""
    h2 = grid.spacing ** 2
    if grid.dim == 1:
        d2 = (nodal[2:] - 2.0 * nodal[1:-1] + nodal[:-2]) / h2
        mag2 = np.sum(d2 * d2, axis=-1)
    else:
        inner = nodal[1:-1, 1:-1]
        dxx = (nodal[2:, 1:-1] - 2.0 * inner + nodal[:-2, 1:-1]) / h2
        dyy = (nodal[1:-1, 2:] - 2.0 * inner + nodal[1:-1, :-2]) / h2
        mag2 = np.sum(dxx * dxx, axis=-1) + np.sum(dyy * dyy, axis=-1)
    return float(np.sum(mag2 ** (p / 2.0)))


def _pair_norm(grid, xi_list, v_list, times, p):
    """||u_tt||_p + ||grad^2 u_t||_p over interior snapshots, u = (xi, v)."""
    if len(times) < 3:
        raise MismatchedSampling("need at least 3 snapshots")
    dt = times[1] - times[0]
    hvol = grid.spacing ** grid.dim
    acc_tt = 0.0
    acc_xx = 0.0
    for k in range(1, len(times) - 1):
        utt = (xi_list[k + 1] - 2.0 * xi_list[k] + xi_list[k - 1]) / dt ** 2
        mag2 = np.sum(utt * utt, axis=-1)
        acc_tt += float(np.sum(mag2 ** (p / 2.0))) * hvol * dt
        acc_xx += _second_space_diff_norm_p(grid, v_list[k], p) * hvol * dt
    return acc_tt ** (1.0 / p) + acc_xx ** (1.0 / p)


def theta_norm(traj, extension, grid, p, t_max=None):
    """Deviation monitor of a trajectory relative to its heat extension.

    Second differences replace the continuum derivatives: centered in time
    (endpoints dropped) and axis-aligned in space; the discrete L_p norm
    uses the node spacing and snapshot spacing as quadrature weights.  Also
    evaluates the extension's own norm, which must vanish as the window
    shrinks.
    """
    if p <= grid.dim + 2:
        raise ValueError(f"p must exceed dim + 2 = {grid.dim + 2}")
    if t_max is not None:
        traj = traj.restrict(t_max)
        extension = extension.restrict(t_max)
    states_a = traj.states
    states_b = extension.states
    if len(states_a) != len(states_b):
        raise MismatchedSampling(
            f"{len(states_a)} trajectory vs {len(states_b)} extension snapshots")
    ta = np.array([s.time for s in states_a])
    tb = np.array([s.time for s in states_b])
    if np.max(np.abs(ta - tb)) > 1e-12:
        raise MismatchedSampling("snapshot times differ")
    gaps = np.diff(ta)
    if len(gaps) and np.max(np.abs(gaps - gaps[0])) > 1e-12:
        raise MismatchedSampling("second differences need uniform snapshot spacing")
    window = float(ta[-1] - ta[0])
    diff_xi = [a.xi - b.xi for a, b in zip(states_a, states_b)]
    diff_v = [a.v - b.v for a, b in zip(states_a, states_b)]
    theta = _pair_norm(grid, diff_xi, diff_v, ta, p)
    d_of_t = _pair_norm(grid, [s.xi for s in states_b],
                        [s.v for s in states_b], tb, p)
    return ThetaReport(window, theta, d_of_t, p)
