"""Structured-grid discretization of the viscoelastic momentum balance.

The domain is the unit interval (1D) or unit square (2D) with clamped
boundary nodes.  Deformation gradients live at cell centers via averaged
corner differences; the stress divergence is the exact negative adjoint of
that gradient, so the pair forms a summation-by-parts couple.  Time stepping
is semi-implicit: the elastic stress is explicit, the viscous stress is
linearized around the frozen tangent D_Q Z and refrozen in a short Picard
loop inside each step.
"""

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .constitutive import piola_stress, viscous_stress, viscous_tangent_field
from .errors import (BoundaryMismatch, Interpenetration, InvalidConfig,
                     LinearSolveFailure, PicardDivergence)

DENSE_FALLBACK_MAX = 2000
CLAMP_TOL = 1e-10


@dataclass(frozen=True)
class Grid:
    """Uniform node-centered grid on [0,1]^dim with cells^dim cells."""

    dim: int
    cells: int

    @property
    def spacing(self):
        return 1.0 / self.cells

    @property
    def node_shape(self):
        return (self.cells + 1,) * self.dim

    @property
    def cell_shape(self):
        return (self.cells,) * self.dim

    @property
    def num_nodes(self):
        return (self.cells + 1) ** self.dim

    def node_positions(self):
        axes = [np.linspace(0.0, 1.0, self.cells + 1)] * self.dim
        mesh = np.meshgrid(*axes, indexing='ij')
        return np.stack(mesh, axis=-1)

    def cell_centers(self):
        h = self.spacing
        axes = [(np.arange(self.cells) + 0.5) * h] * self.dim
        mesh = np.meshgrid(*axes, indexing='ij')
        return np.stack(mesh, axis=-1)

    def boundary_mask(self):
        mask = np.zeros(self.node_shape, dtype=bool)
        for ax in range(self.dim):
            idx = [slice(None)] * self.dim
            idx[ax] = 0
            mask[tuple(idx)] = True
            idx[ax] = -1
            mask[tuple(idx)] = True
        return mask


def build_grid(dim, cells):
    if dim not in (1, 2):
        raise InvalidConfig(f"dim must be 1 or 2, got {dim}")
    if cells < 4:
        raise InvalidConfig(f"cells must be at least 4, got {cells}")
    return Grid(dim, cells)


@dataclass(frozen=True)
class FieldState:
    """Nodal deformation and velocity at one instant."""

    time: float
    xi: np.ndarray
    v: np.ndarray


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    t_end: float
    picard_tol: float = 1e-10
    picard_max: int = 5
    det_floor: float = 1e-3
    linear_tol: float = 1e-10
    p_norm: float | None = None   # None: smallest integer above dim + 2
    save_every: int = 1

    def __post_init__(self):
        if self.dt <= 0.0 or self.t_end <= 0.0:
            raise InvalidConfig("dt and t_end must be positive")
        if self.picard_max < 1:
            raise InvalidConfig("picard_max must be at least 1")
        if self.det_floor <= 0.0:
            raise InvalidConfig("det_floor must be positive")
        if self.save_every < 1:
            raise InvalidConfig("save_every must be at least 1")


@dataclass(frozen=True)
class Termination:
    """How a trajectory ended: 'completed', 'det_floor_hit',
    'picard_divergence' or 'linear_solver_failure' (with the event time)."""

    kind: str
    time: float | None = None


@dataclass(frozen=True)
class Trajectory:
    states: list
    termination: Termination

    @property
    def times(self):
        return np.array([s.time for s in self.states])

    def restrict(self, t_max):
        """Snapshots with time <= t_max (tolerant to roundoff)."""
        kept = [s for s in self.states if s.time <= t_max + 1e-12]
        return Trajectory(kept, self.termination)


def init_state(grid, xi0, xi1, det_floor):
    """Sample initial deformation/velocity functions onto the grid.

    The callables receive the (..., dim) node coordinate array.  Boundary
    values are checked against the clamped conditions (xi = X, v = 0) and
    then overwritten exactly; the cell determinant floor is enforced.
    """
    x = grid.node_positions()
    xi = np.array(xi0(x), dtype=float).reshape(x.shape)
    v = np.array(xi1(x), dtype=float).reshape(x.shape)
    if not (np.all(np.isfinite(xi)) and np.all(np.isfinite(v))):
        raise InvalidConfig("initial fields contain non-finite values")
    bmask = grid.boundary_mask()
    mism = max(np.max(np.abs(xi[bmask] - x[bmask])), np.max(np.abs(v[bmask])))
    if mism > CLAMP_TOL:
        raise BoundaryMismatch(f"boundary violates clamping by {mism:.3e}")
    xi[bmask] = x[bmask]
    v[bmask] = 0.0
    dets = np.linalg.det(gradient_field(grid, xi))
    if np.min(dets) <= det_floor:
        raise Interpenetration(
            f"min cell det = {np.min(dets):.3e} <= floor {det_floor:.3e}")
    return FieldState(0.0, xi, v)


def gradient_field(grid, nodal):
    """Cell-centered gradient by averaged corner differences.

    Exact for affine fields; second-order accurate at cell centers.
    Returns shape cell_shape + (dim, dim) with F[..., r, c] = d xi_r / d X_c.
    """
    h = grid.spacing
    if grid.dim == 1:
        d = (nodal[1:] - nodal[:-1]) / h
        return d[:, :, None]
    dx = (nodal[1:, :-1] - nodal[:-1, :-1] + nodal[1:, 1:] - nodal[:-1, 1:]) / (2 * h)
    dy = (nodal[:-1, 1:] - nodal[:-1, :-1] + nodal[1:, 1:] - nodal[1:, :-1]) / (2 * h)
    return np.stack([dx, dy], axis=-1)


def stress_divergence(grid, cell_stress):
    """Row-wise divergence: exact negative adjoint of gradient_field.

    <div P, w>_nodes = -<P, grad w>_cells for every clamped w.  Boundary
    rows are zeroed (clamped degrees of freedom carry no equation).
    """
    h = grid.spacing
    if grid.dim == 1:
        acc = np.zeros((grid.cells + 1, 1))
        p = cell_stress[:, :, 0]
        acc[1:] += p / h
        acc[:-1] -= p / h
    else:
        acc = np.zeros((grid.cells + 1, grid.cells + 1, 2))
        px = cell_stress[..., 0] / (2 * h)
        py = cell_stress[..., 1] / (2 * h)
        acc[1:, :-1] += px
        acc[:-1, :-1] -= px
        acc[1:, 1:] += px
        acc[:-1, 1:] -= px
        acc[:-1, 1:] += py
        acc[:-1, :-1] -= py
        acc[1:, 1:] += py
        acc[1:, :-1] -= py
    # acc accumulated the plain transpose G^T P; the adjoint pair needs -G^T
    div = -acc
    div[grid.boundary_mask()] = 0.0
    return div


@lru_cache(maxsize=8)
def _assembly_pattern(dim, cells):
    """Precomputed element-to-interior-DOF scatter pattern for a grid."""
    grid = Grid(dim, cells)
    h = grid.spacing
    if dim == 1:
        corners = np.stack([np.arange(cells), np.arange(cells) + 1], axis=1)
        gcoef = np.array([[-1.0 / h], [1.0 / h]])
    else:
        ii, jj = np.meshgrid(np.arange(cells), np.arange(cells), indexing='ij')
        flat = lambda a, b: a * (cells + 1) + b
        corners = np.stack([flat(ii, jj), flat(ii + 1, jj),
                            flat(ii, jj + 1), flat(ii + 1, jj + 1)],
                           axis=-1).reshape(-1, 4)
        s = 1.0 / (2 * h)
        gcoef = np.array([[-s, -s], [s, -s], [-s, s], [s, s]])
    bmask = grid.boundary_mask().reshape(-1)
    interior = np.nonzero(~bmask)[0]
    dof_map = -np.ones(grid.num_nodes * dim, dtype=np.int64)
    for comp in range(dim):
        dof_map[interior * dim + comp] = np.arange(len(interior)) * dim + comp
    ncorner = corners.shape[1]
    ldof = ncorner * dim
    elem_dofs = (corners[:, :, None] * dim
                 + np.arange(dim)[None, None, :]).reshape(-1, ldof)
    rows = np.repeat(elem_dofs, ldof, axis=1).reshape(-1)
    cols = np.tile(elem_dofs, (1, ldof)).reshape(-1)
    rows_i = dof_map[rows]
    cols_i = dof_map[cols]
    keep = (rows_i >= 0) & (cols_i >= 0)
    n_int = len(interior) * dim
    return gcoef, interior, rows_i[keep], cols_i[keep], keep, n_int


class ViscousOperator:
    """w -> -div(M grad w) on clamped nodal vector fields.

    m_cells holds the frozen tangent per cell as (cells..., n^2, n^2).
    The assembled interior matrix agrees exactly with the matrix-free
    composition of gradient_field, the cell-wise tangent and
    stress_divergence.
    """

    def __init__(self, grid, m_cells):
        self.grid = grid
        n = grid.dim
        m_cells = np.asarray(m_cells, dtype=float)
        want = grid.cell_shape + (n * n, n * n)
        if m_cells.shape != want:
            m_cells = np.broadcast_to(m_cells, want)
        self.m_cells = m_cells
        scale = max(1.0, float(np.max(np.abs(m_cells))))
        diff = np.max(np.abs(m_cells - np.swapaxes(m_cells, -1, -2)))
        self.symmetric = bool(diff <= 1e-12 * scale)
        self._matrix = None

    def apply(self, nodal):
        g = gradient_field(self.grid, nodal)
        n = self.grid.dim
        flat = g.reshape(self.grid.cell_shape + (n * n,))
        mg = np.einsum('...ab,...b->...a', self.m_cells, flat)
        return -stress_divergence(self.grid, mg.reshape(g.shape))

    def interior_matrix(self):
        if self._matrix is None:
            grid = self.grid
            n = grid.dim
            gcoef, _, rows, cols, keep, n_int = _assembly_pattern(grid.dim, grid.cells)
            t4 = self.m_cells.reshape(-1, n, n, n, n)
            k_all = np.einsum('ac,xscte,be->xasbt', gcoef, t4, gcoef)
            ldof = gcoef.shape[0] * n
            data = k_all.reshape(-1, ldof * ldof).reshape(-1)[keep]
            self._matrix = sp.csr_matrix((data, (rows, cols)), shape=(n_int, n_int))
        return self._matrix


def assemble_viscous_operator(grid, m_cells):
    return ViscousOperator(grid, m_cells)


def identity_tangent(grid):
    """Cell field of identity maps; the assembled operator is -Laplace."""
    n = grid.dim
    return np.broadcast_to(np.eye(n * n), grid.cell_shape + (n * n, n * n))


def _interior_vec(grid, nodal):
    _, interior, *_ = _assembly_pattern(grid.dim, grid.cells)
    return nodal.reshape(-1, grid.dim)[interior].reshape(-1)


def _from_interior(grid, vec):
    _, interior, *_ = _assembly_pattern(grid.dim, grid.cells)
    out = np.zeros((grid.num_nodes, grid.dim))
    out[interior] = vec.reshape(-1, grid.dim)
    return out.reshape(grid.node_shape + (grid.dim,))


def solve_shifted(op, alpha, rhs_nodal, tol, x0_nodal=None):
    """Solve (alpha I + L) v = rhs on the interior, zero on the boundary.

    Conjugate gradients for symmetric tangents, BiCGStab otherwise, with a
    dense direct fallback below DENSE_FALLBACK_MAX unknowns.
    """
    grid = op.grid
    b = _interior_vec(grid, rhs_nodal)
    if not np.any(b):
        return np.zeros(grid.node_shape + (grid.dim,))
    a = op.interior_matrix() + alpha * sp.identity(b.size, format='csr')
    x0 = None if x0_nodal is None else _interior_vec(grid, x0_nodal)
    maxiter = max(1000, 2 * b.size)
    solver = spla.cg if op.symmetric else spla.bicgstab
    x, info = solver(a, b, x0=x0, rtol=tol, atol=0.0, maxiter=maxiter)
    if info != 0:
        if b.size <= DENSE_FALLBACK_MAX:
            x = np.linalg.solve(a.toarray(), b)
        else:
            raise LinearSolveFailure(
                f"Krylov solver returned info={info} at tol {tol:.1e}")
    return _from_interior(grid, x)


def _apply_tangent(grid, m_cells, cell_field):
    n = grid.dim
    flat = cell_field.reshape(grid.cell_shape + (n * n,))
    out = np.einsum('...ab,...b->...a', m_cells, flat)
    return out.reshape(cell_field.shape)


def semi_implicit_step(state, model, grid, cfg, forcing=None):
    """One step of the frozen-tangent scheme.

    With F = grad xi^n and v^0 = v^n, the Picard loop k = 0, 1, ... solves

        (v_new - v^n)/dt - div(M^k grad v_new)
            = div(DW(F)) + div(Z(F, grad v^k) - M^k grad v^k) + f,

    refreezing M^k = D_Q Z(F, grad v^k) between iterations, until the sup
    increment drops below picard_tol or picard_max solves were spent.  For
    tangents linear in the velocity gradient the first iterate is already a
    fixed point.  Then xi advances by dt * v_new.
    """
    dt = cfg.dt
    f_cells = gradient_field(grid, state.xi)
    elastic = stress_divergence(grid, piola_stress(model.energy, f_cells))
    rhs_fixed = state.v / dt + elastic
    if forcing is not None:
        rhs_fixed = rhs_fixed + forcing(state.time + dt, grid)

    v_k = state.v
    m_k = viscous_tangent_field(model.viscosity, f_cells, gradient_field(grid, v_k))
    first_inc = None
    for it in range(cfg.picard_max):
        grad_vk = gradient_field(grid, v_k)
        corr = viscous_stress(model.viscosity, f_cells, grad_vk) \
            - _apply_tangent(grid, m_k, grad_vk)
        rhs = rhs_fixed + stress_divergence(grid, corr)
        op = assemble_viscous_operator(grid, m_k)
        v_new = solve_shifted(op, 1.0 / dt, rhs, cfg.linear_tol, x0_nodal=v_k)
        if not np.all(np.isfinite(v_new)):
            raise PicardDivergence("non-finite iterate")
        inc = float(np.max(np.abs(v_new - v_k)))
        if first_inc is None:
            first_inc = inc
        elif inc > 10.0 * max(first_inc, 1e-300):
            raise PicardDivergence(
                f"increment grew from {first_inc:.3e} to {inc:.3e}")
        v_k = v_new
        if inc <= cfg.picard_tol:
            break
        if it + 1 < cfg.picard_max:
            m_k = viscous_tangent_field(model.viscosity, f_cells,
                                        gradient_field(grid, v_k))
    return FieldState(state.time + dt, state.xi + dt * v_k, v_k)


def run(model, grid, cfg, state0, forcing=None):
    """March semi_implicit_step to t_end, monitoring the determinant floor.

    Breakdown and solver failures are recorded in the termination tag, never
    raised; the offending snapshot is kept so diagnostics can see it.
    """
    if cfg.p_norm is not None and cfg.p_norm <= grid.dim + 2:
        raise InvalidConfig(f"p_norm must exceed dim + 2 = {grid.dim + 2}")
    n_steps = int(round(cfg.t_end / cfg.dt))
    states = [state0]
    term = Termination('completed')
    state = state0
    for k in range(1, n_steps + 1):
        try:
            state = semi_implicit_step(state, model, grid, cfg, forcing)
        except PicardDivergence:
            term = Termination('picard_divergence', state.time)
            break
        except LinearSolveFailure:
            term = Termination('linear_solver_failure', state.time)
            break
        state = replace(state, time=k * cfg.dt)
        min_det = float(np.min(np.linalg.det(gradient_field(grid, state.xi))))
        if min_det <= cfg.det_floor:
            states.append(state)
            term = Termination('det_floor_hit', state.time)
            break
        if k % cfg.save_every == 0 or k == n_steps:
            states.append(state)
    return Trajectory(states, term)


def heat_extension(grid, xi0, xi1, dt, t_end, save_every=1):
    """Smooth reference path: integrate the heat flow of the initial velocity.

    xi1 diffuses under the clamped discrete Laplacian (implicit Euler); the
    deformation accumulates it trapezoidally, so the pair plays the role of
    a reference trajectory whose velocity solves the heat equation.
    """
    xi0 = np.asarray(xi0, dtype=float)
    xi1 = np.asarray(xi1, dtype=float)
    bmask = grid.boundary_mask()
    if np.max(np.abs(xi1[bmask])) > CLAMP_TOL:
        raise BoundaryMismatch("extension velocity must vanish on the boundary")
    op = assemble_viscous_operator(grid, identity_tangent(grid))
    a = op.interior_matrix() + (1.0 / dt) * sp.identity(
        op.interior_matrix().shape[0], format='csr')
    try:
        lu = spla.splu(a.tocsc())
    except RuntimeError as exc:
        raise LinearSolveFailure(str(exc)) from exc
    n_steps = int(round(t_end / dt))
    states = [FieldState(0.0, xi0.copy(), xi1.copy())]
    xibar, v = xi0.copy(), xi1.copy()
    for k in range(1, n_steps + 1):
        v_new = _from_interior(grid, lu.solve(_interior_vec(grid, v) / dt))
        xibar = xibar + 0.5 * dt * (v + v_new)
        v = v_new
        if k % save_every == 0 or k == n_steps:
            states.append(FieldState(k * dt, xibar.copy(), v.copy()))
    return Trajectory(states, Termination('completed'))


@dataclass(frozen=True)
class ExactSolution:
    """Closed-form space-time deformation for verification runs.

    xi, xi_t, xi_tt map (t, points) -> (..., dim) values at points of shape
    (..., dim); grad_xi and grad_xi_t return (..., dim, dim) gradients.
    """

    dim: int
    xi: callable
    xi_t: callable
    xi_tt: callable
    grad_xi: callable
    grad_xi_t: callable


@dataclass(frozen=True)
class ManufacturedResult:
    l2: float
    linf: float
    trajectory: Trajectory


def manufactured_forcing(model, grid, exact):
    """Forcing that makes `exact` a solution up to scheme consistency error.

    The stress fields are evaluated from the exact (analytic) gradients at
    cell centers and pushed through the same discrete divergence the solver
    uses, so the measured error is dominated by the scheme itself rather
    than by an independent quadrature of the forcing.
    """
    centers = grid.cell_centers()
    nodes = grid.node_positions()

    def f(t, g):
        fc = exact.grad_xi(t, centers)
        qc = exact.grad_xi_t(t, centers)
        p = piola_stress(model.energy, fc) + viscous_stress(model.viscosity, fc, qc)
        return exact.xi_tt(t, nodes) - stress_divergence(g, p)

    return f


def manufactured_run(model, grid, cfg, exact):
    """Run against a manufactured solution; report max-in-time nodal errors."""
    state0 = init_state(grid, lambda x: exact.xi(0.0, x),
                        lambda x: exact.xi_t(0.0, x), cfg.det_floor)
    traj = run(model, grid, cfg, state0,
               forcing=manufactured_forcing(model, grid, exact))
    nodes = grid.node_positions()
    hvol = grid.spacing ** grid.dim
    l2 = linf = 0.0
    for st in traj.states:
        err = st.xi - exact.xi(st.time, nodes)
        l2 = max(l2, math.sqrt(hvol * float(np.sum(err * err))))
        linf = max(linf, float(np.max(np.abs(err))))
    return ManufacturedResult(l2, linf, traj)


def manufactured_default(dim, amplitude=0.01):
    """Reference verification case: a decaying sine bump on the first axis."""
    a = amplitude
    pi = np.pi
    if dim == 1:
        def shape(x):
            return np.sin(pi * x[..., 0])

        def dshape(x):
            return pi * np.cos(pi * x[..., 0])
    else:
        def shape(x):
            return np.sin(pi * x[..., 0]) * np.sin(pi * x[..., 1])

        def dshape(x):
            # gradient of the 2D bump, shape (..., 2)
            return np.stack([
                pi * np.cos(pi * x[..., 0]) * np.sin(pi * x[..., 1]),
                pi * np.sin(pi * x[..., 0]) * np.cos(pi * x[..., 1])], axis=-1)

    def xi(t, x):
        out = np.array(x, dtype=float).copy()
        out[..., 0] += a * math.exp(-t) * shape(x)
        return out

    def xi_t(t, x):
        out = np.zeros_like(np.asarray(x, dtype=float))
        out[..., 0] = -a * math.exp(-t) * shape(x)
        return out

    def xi_tt(t, x):
        out = np.zeros_like(np.asarray(x, dtype=float))
        out[..., 0] = a * math.exp(-t) * shape(x)
        return out

    def _bump_grad(t, x, coef):
        # first row of the gradient carries the bump derivative
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (dim, dim))
        if dim == 1:
            out[..., 0, 0] = coef * dshape(x)
        else:
            ds = dshape(x)
            out[..., 0, 0] = coef * ds[..., 0]
            out[..., 0, 1] = coef * ds[..., 1]
        return out

    def grad_xi(t, x):
        g = _bump_grad(t, x, a * math.exp(-t))
        for r in range(dim):
            g[..., r, r] += 1.0
        return g

    def grad_xi_t(t, x):
        return _bump_grad(t, x, -a * math.exp(-t))

    return ExactSolution(dim, xi, xi_t, xi_tt, grad_xi, grad_xi_t)
