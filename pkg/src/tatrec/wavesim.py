"""Time-domain solvers for the damped acoustic wave equation.

Forward solves run on a computational box that extends the measurement
domain by a margin plus a perfectly matched layer, so waves leave the
domain as if propagating in free space. Back-projection solves run on the
domain grid alone as an interior initial-boundary-value problem with the
recorded trace injected as Dirichlet data; substituting s = T - t turns the
sign-flipped backward equation into an ordinary damped forward march in s,
which is the mechanism that keeps the reversed wave controlled.

Time stepping is the explicit centered scheme

    (u^{n+1} - 2u^n + u^{n-1})/dt^2 + d*(u^{n+1} - u^{n-1})/(2 dt)
        = c^2 Lap(u^n) + PML terms,

second-order accurate, with the damping handled symmetrically (diagonal
solve for u^{n+1}) and the first step seeded by a Taylor expansion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import factorized

from .fields import (BoundaryTrace, Grid2D, ScalarField2D, WavePair,
                     boundary_sensors, write_field)
from .media import Medium

# The stepping kernels are compiled with numba when available (an order of
# magnitude faster); the numpy implementations below are the fallback.
try:
    from numba import njit as _njit

    HAS_JIT = True
except ImportError:     # pragma: no cover - exercised only without numba
    HAS_JIT = False

PML_REFLECTION_TARGET = 1e-4


if HAS_JIT:
    @_njit(cache=True)
    def _step_kernel(u_next, u_cur, u_prev, c2, num_prev, inv_denom,
                     sig_x, sig_y, phi1, phi2,
                     inv_dx2, inv_dy2, inv_2dx, inv_2dy, dt2, use_pml):
        ny, nx = u_cur.shape
        for j in range(1, ny - 1):
            for i in range(1, nx - 1):
                lap = ((u_cur[j, i + 1] - 2.0 * u_cur[j, i] + u_cur[j, i - 1]) * inv_dx2
                       + (u_cur[j + 1, i] - 2.0 * u_cur[j, i] + u_cur[j - 1, i]) * inv_dy2)
                rhs = c2[j, i] * lap
                if use_pml:
                    rhs += (phi1[j, i + 1] - phi1[j, i - 1]) * inv_2dx
                    rhs += (phi2[j + 1, i] - phi2[j - 1, i]) * inv_2dy
                    rhs -= sig_x[i] * sig_y[j] * u_cur[j, i]
                u_next[j, i] = (2.0 * u_cur[j, i] - num_prev[j, i] * u_prev[j, i]
                                + dt2 * rhs) * inv_denom[j, i]

    @_njit(cache=True)
    def _phi_kernel(u_new, phi1, phi2, phi1_decay, phi2_decay,
                    phi1_src, phi2_src, inv_2dx, inv_2dy):
        ny, nx = u_new.shape
        for j in range(1, ny - 1):
            for i in range(1, nx - 1):
                ux = (u_new[j, i + 1] - u_new[j, i - 1]) * inv_2dx
                uy = (u_new[j + 1, i] - u_new[j - 1, i]) * inv_2dy
                phi1[j, i] = phi1[j, i] * phi1_decay[i] + phi1_src[j, i] * ux
                phi2[j, i] = phi2[j, i] * phi2_decay[j] + phi2_src[j, i] * uy


class SolverInstabilityError(RuntimeError):
    """Non-finite values appeared during time stepping."""

    def __init__(self, step: int):
        super().__init__(f"solver produced non-finite values at step {step}")
        self.step = step


@dataclass(frozen=True)
class SolveConfig:
    """Time horizon and discretization controls shared by all solves.

    The time step is derived per run as cfl * min(dx, dy) / max(c), rounded
    down so the horizon T is hit exactly. pml_strength is the peak absorption
    of the cubic-graded layer; None picks it so normal-incidence reflection
    is about 1e-4. box_margin is the gap between the domain boundary and the
    start of the layer.
    """

    T: float
    cfl: float = 0.5
    pml_cells: int = 20
    pml_strength: float | None = None
    box_margin: float = 0.2

    def __post_init__(self):
        if not (np.isfinite(self.T) and self.T > 0):
            raise ValueError(f"bad horizon T={self.T}")
        if not 0 < self.cfl < 1:
            raise ValueError(f"Courant number must lie in (0, 1), got {self.cfl}")
        if self.pml_cells < 0:
            raise ValueError("pml_cells must be nonnegative")
        if self.pml_strength is not None and self.pml_strength < 0:
            raise ValueError("pml_strength must be nonnegative")
        if self.box_margin < 0:
            raise ValueError("box_margin must be nonnegative")


@dataclass(frozen=True, eq=False)
class ForwardResult:
    """Everything a forward solve produces.

    trace            boundary values at every time step;
    final            state [u, u_t] at t = T on the domain grid;
    damping_integral accumulated 2 * integral of a c^-2 |u_t|^2 over time and
                     the domain (zero when a = 0);
    energy_series    per-step domain energy E(t_k);
    final_box        state at t = T on the full computational box, kept so
                     whole-box energy accounting is possible after the run.
    """

    trace: BoundaryTrace
    final: WavePair
    damping_integral: float
    energy_series: np.ndarray
    final_box: WavePair

    def __post_init__(self):
        if self.damping_integral < 0:
            raise ValueError("damping integral cannot be negative")


def _check_cfl(dt: float, c_max: float, dx: float, dy: float) -> None:
    # stability bound of the explicit five-point scheme
    if dt * c_max * np.sqrt(1.0 / dx**2 + 1.0 / dy**2) > 1.0 + 1e-9:
        raise ValueError(f"CFL violation: dt={dt} too large for c_max={c_max}, "
                         f"spacing ({dx}, {dy})")


def time_step(cfg: SolveConfig, medium: Medium) -> tuple[float, int]:
    """Derived (dt, n_steps): largest step under the Courant bound that
    divides the horizon exactly."""
    g = medium.grid
    dt_raw = cfg.cfl * min(g.dx, g.dy) / medium.c_max
    n = int(np.ceil(cfg.T / dt_raw - 1e-12))
    dt = cfg.T / n
    _check_cfl(dt, medium.c_max, g.dx, g.dy)
    return dt, n


def _margin_cells(cfg: SolveConfig, grid: Grid2D) -> int:
    return int(np.ceil(cfg.box_margin / min(grid.dx, grid.dy) - 1e-9))


def _pml_sigma(n_total: int, pml_cells: int, strength: float | None, dx: float) -> np.ndarray:
    """Cubic-graded absorption profile along one axis of the extended box."""
    sigma = np.zeros(n_total)
    p = pml_cells
    if p == 0:
        return sigma
    length = p * dx
    if strength is None:
        # exp(-2 * integral sigma) = target for the cubic profile
        strength = 2.0 * np.log(1.0 / PML_REFLECTION_TARGET) / length
    depth = (p - np.arange(p)) / p
    sigma[:p] = strength * depth**3
    sigma[-p:] = sigma[p - 1::-1]
    return sigma


def _lap5(u: np.ndarray, inv_dx2: float, inv_dy2: float, out: np.ndarray) -> np.ndarray:
    out.fill(0.0)
    core = u[1:-1, 1:-1]
    out[1:-1, 1:-1] = ((u[1:-1, 2:] - 2.0 * core + u[1:-1, :-2]) * inv_dx2
                       + (u[2:, 1:-1] - 2.0 * core + u[:-2, 1:-1]) * inv_dy2)
    return out


def _ddx(u: np.ndarray, inv_2dx: float, out: np.ndarray) -> np.ndarray:
    out.fill(0.0)
    out[:, 1:-1] = (u[:, 2:] - u[:, :-2]) * inv_2dx
    return out


def _ddy(u: np.ndarray, inv_2dy: float, out: np.ndarray) -> np.ndarray:
    out.fill(0.0)
    out[1:-1, :] = (u[2:, :] - u[:-2, :]) * inv_2dy
    return out


def _grad_centered(u: np.ndarray, dx: float, dy: float) -> tuple[np.ndarray, np.ndarray]:
    """Gradient with centered differences inside, one-sided at the edges."""
    gx = np.empty_like(u)
    gy = np.empty_like(u)
    gx[:, 1:-1] = (u[:, 2:] - u[:, :-2]) / (2.0 * dx)
    gx[:, 0] = (u[:, 1] - u[:, 0]) / dx
    gx[:, -1] = (u[:, -1] - u[:, -2]) / dx
    gy[1:-1, :] = (u[2:, :] - u[:-2, :]) / (2.0 * dy)
    gy[0, :] = (u[1, :] - u[0, :]) / dy
    gy[-1, :] = (u[-1, :] - u[-2, :]) / dy
    return gx, gy


def _energy_arrays(u: np.ndarray, ut: np.ndarray, inv_c2: np.ndarray,
                   dx: float, dy: float, mask=None) -> float:
    gx, gy = _grad_centered(u, dx, dy)
    density = gx * gx + gy * gy + inv_c2 * ut * ut
    if mask is not None:
        density = density * mask
    return float(np.sum(density) * dx * dy)


def local_energy(state: WavePair, c: ScalarField2D, mask=None) -> float:
    """Energy integral of [u, u_t] over the masked region:
    sum over nodes of (|grad u|^2 + c^-2 |u_t|^2) times the cell area.
    """
    if state.grid != c.grid:
        raise ValueError("state and sound speed live on different grids")
    if mask is not None:
        mask = np.asarray(mask, dtype=np.float64).reshape(c.grid.shape)
    inv_c2 = 1.0 / (c.values * c.values)
    return _energy_arrays(state.u.values, state.ut.values, inv_c2,
                          c.grid.dx, c.grid.dy, mask)


def energy_norm(state: WavePair, c: ScalarField2D) -> float:
    """Norm of a state in the energy space with the given sound speed."""
    return float(np.sqrt(local_energy(state, c)))


def extended_energy(result: ForwardResult, c: ScalarField2D, mask=None) -> float:
    """Local energy of the final state plus the accumulated damping loss.

    Pass the domain sound speed for domain accounting, or the box sound
    speed (grid matching result.final_box) for whole-box accounting; on a
    large enough box the value matches the initial energy up to scheme error.
    """
    if c.grid == result.final.grid:
        state = result.final
    elif c.grid == result.final_box.grid:
        state = result.final_box
    else:
        raise ValueError("sound-speed grid matches neither the domain nor the box state")
    return local_energy(state, c, mask) + result.damping_integral


def _free_space_march(f: WavePair, medium: Medium, cfg: SolveConfig,
                      diagnostics: bool, snapshot_every: int = 0, snapshot_dir=None):
    """Core free-space march on the extended box. Returns the trace plus,
    when diagnostics is on, the final states and energy bookkeeping."""
    grid = medium.grid
    if f.grid != grid:
        raise ValueError("initial data grid differs from the medium grid")
    dt, nsteps = time_step(cfg, medium)
    if nsteps < 3:
        raise ValueError("horizon too short: need at least 3 time steps")
    dx, dy = grid.dx, grid.dy

    pad = _margin_cells(cfg, grid) + cfg.pml_cells
    if pad < 1:
        raise ValueError("computational box must extend beyond the domain: "
                         "increase box_margin or pml_cells")
    nx_e, ny_e = grid.nx + 2 * pad, grid.ny + 2 * pad
    box_grid = Grid2D(nx_e, ny_e,
                      grid.x_min - pad * dx, grid.x_max + pad * dx,
                      grid.y_min - pad * dy, grid.y_max + pad * dy)
    core = (slice(pad, pad + grid.ny), slice(pad, pad + grid.nx))

    c2 = np.ones((ny_e, nx_e))
    c2[core] = medium.c.values**2
    a_e = np.zeros((ny_e, nx_e))
    a_e[core] = medium.a.values

    sig_x = _pml_sigma(nx_e, cfg.pml_cells, cfg.pml_strength, dx)
    sig_y = _pml_sigma(ny_e, cfg.pml_cells, cfg.pml_strength, dy)
    damp = a_e + sig_x[None, :] + sig_y[:, None]
    sig_prod = sig_x[None, :] * sig_y[:, None]
    inv_denom = 1.0 / (1.0 + 0.5 * dt * damp)
    num_prev = 1.0 - 0.5 * dt * damp
    dt2 = dt * dt

    use_pml = cfg.pml_cells > 0
    scratch = np.empty((ny_e, nx_e))
    phi1 = np.zeros((ny_e, nx_e))
    phi2 = np.zeros((ny_e, nx_e))
    if use_pml:
        phi1_decay = (1.0 - 0.5 * dt * sig_x) / (1.0 + 0.5 * dt * sig_x)
        phi2_decay = (1.0 - 0.5 * dt * sig_y) / (1.0 + 0.5 * dt * sig_y)
        phi1_src = dt * (sig_y[:, None] - sig_x[None, :]) * c2 / (1.0 + 0.5 * dt * sig_x[None, :])
        phi2_src = dt * (sig_x[None, :] - sig_y[:, None]) * c2 / (1.0 + 0.5 * dt * sig_y[:, None])

    sensors = boundary_sensors(grid)
    rows, cols = sensors // grid.nx, sensors % grid.nx
    sensors_ext = (rows + pad) * nx_e + (cols + pad)
    trace = np.empty((nsteps + 1, sensors.size))

    inv_c2_omega = 1.0 / medium.c.values**2
    a_omega = medium.a.values
    dA = dx * dy
    energy = np.empty(nsteps + 1) if diagnostics else None
    damping_rate = np.empty(nsteps + 1) if diagnostics else None

    def omega_energy(u_box, ut_omega):
        return _energy_arrays(u_box[core], ut_omega, inv_c2_omega, dx, dy)

    def omega_damping(ut_omega):
        return float(np.sum(a_omega * inv_c2_omega * ut_omega * ut_omega) * dA)

    lap = np.empty((ny_e, nx_e))
    u_prev = np.zeros((ny_e, nx_e))
    u_prev[core] = f.u.values
    ut0 = np.zeros((ny_e, nx_e))
    ut0[core] = f.ut.values

    trace[0] = u_prev.ravel()[sensors_ext]

    inv_dx2, inv_dy2 = 1.0 / dx**2, 1.0 / dy**2
    inv_2dx, inv_2dy = 0.5 / dx, 0.5 / dy

    # Taylor-seeded first step: u^1 = u^0 + dt u_t^0 + dt^2/2 u_tt^0
    _lap5(u_prev, inv_dx2, inv_dy2, lap)
    u_cur = u_prev + dt * ut0 + 0.5 * dt2 * (c2 * lap - damp * ut0 - sig_prod * u_prev)
    trace[1] = u_cur.ravel()[sensors_ext]
    del ut0
    if diagnostics:
        u0_core, u1_core = u_prev[core].copy(), u_cur[core].copy()

    snapshots = snapshot_every > 0 and snapshot_dir is not None
    if snapshots:
        write_field(ScalarField2D(grid, u_prev[core].copy()), f"{snapshot_dir}/u_{0:06d}.tatf")

    u_spare = np.zeros((ny_e, nx_e))   # cycles through the three time levels
    for n in range(1, nsteps):
        u_next = u_spare
        if HAS_JIT:
            _step_kernel(u_next, u_cur, u_prev, c2, num_prev, inv_denom,
                         sig_x, sig_y, phi1, phi2,
                         inv_dx2, inv_dy2, inv_2dx, inv_2dy, dt2, use_pml)
        else:
            _lap5(u_cur, inv_dx2, inv_dy2, lap)
            np.multiply(c2, lap, out=u_next)
            if use_pml:
                u_next += _ddx(phi1, inv_2dx, scratch)
                u_next += _ddy(phi2, inv_2dy, scratch)
                np.multiply(sig_prod, u_cur, out=scratch)
                u_next -= scratch
            u_next *= dt2
            u_next += u_cur
            u_next += u_cur
            np.multiply(num_prev, u_prev, out=scratch)
            u_next -= scratch
            u_next *= inv_denom
        if not np.all(np.isfinite(u_next)):
            raise SolverInstabilityError(n + 1)
        if use_pml:
            if HAS_JIT:
                _phi_kernel(u_next, phi1, phi2, phi1_decay, phi2_decay,
                            phi1_src, phi2_src, inv_2dx, inv_2dy)
            else:
                phi1 *= phi1_decay[None, :]
                _ddx(u_next, inv_2dx, scratch)
                scratch *= phi1_src
                phi1 += scratch
                phi2 *= phi2_decay[:, None]
                _ddy(u_next, inv_2dy, scratch)
                scratch *= phi2_src
                phi2 += scratch

        trace[n + 1] = u_next.ravel()[sensors_ext]
        if diagnostics:
            ut_omega = (u_next[core] - u_prev[core]) * (0.5 / dt)
            energy[n] = omega_energy(u_cur, ut_omega)
            damping_rate[n] = omega_damping(ut_omega)
            if n == 1:
                # one-sided start derivative, consistent with the series estimator
                ut_start = (-3.0 * u0_core + 4.0 * u1_core - u_next[core]) * (0.5 / dt)
                energy[0] = _energy_arrays(u0_core, ut_start, inv_c2_omega, dx, dy)
                damping_rate[0] = omega_damping(ut_start)
        if snapshots and n % snapshot_every == 0:
            write_field(ScalarField2D(grid, u_cur[core].copy()), f"{snapshot_dir}/u_{n:06d}.tatf")

        u_spare, u_prev, u_cur = u_prev, u_cur, u_next

    boundary_trace = BoundaryTrace(nsteps + 1, dt, sensors, trace)
    if not diagnostics:
        return boundary_trace, None, None, None, None

    u_pprev = u_spare   # the recycled buffer still holds the state two steps back
    # one-sided time derivative at t = T, consistent with scheme order
    ut_final = (3.0 * u_cur[core] - 4.0 * u_prev[core] + u_pprev[core]) * (0.5 / dt)
    energy[nsteps] = omega_energy(u_cur, ut_final)
    damping_rate[nsteps] = omega_damping(ut_final)
    damping_integral = 2.0 * float(np.trapezoid(damping_rate, dx=dt))

    final = WavePair(ScalarField2D(grid, u_cur[core].copy()),
                     ScalarField2D(grid, ut_final))
    ut_box = (3.0 * u_cur - 4.0 * u_prev + u_pprev) * (0.5 / dt)
    final_box = WavePair(ScalarField2D(box_grid, u_cur), ScalarField2D(box_grid, ut_box))
    return boundary_trace, final, damping_integral, energy, final_box


def forward_solve(f: WavePair, medium: Medium, cfg: SolveConfig, *,
                  snapshot_every: int = 0, snapshot_dir=None) -> ForwardResult:
    """Propagate initial data [f1, f2] through the medium in free space.

    The state is embedded in the extended box (where c = 1 and a = 0 hold
    exactly), marched to t = T, and observed at the domain-boundary sensors
    every step. Raises SolverInstabilityError with the step index if the
    field stops being finite.

    Parameters
    ----------
    f : WavePair
        Initial data on the medium grid, supported in the domain.
    medium : Medium
        Sound speed and attenuation.
    cfg : SolveConfig
        Horizon and discretization controls.
    snapshot_every : int
        If positive, dump the domain-restricted field every that many steps
        as ``u_%06d.tatf`` under snapshot_dir.
    """
    trace, final, damping_integral, energy, final_box = _free_space_march(
        f, medium, cfg, diagnostics=True,
        snapshot_every=snapshot_every, snapshot_dir=snapshot_dir)
    return ForwardResult(trace, final, damping_integral, energy, final_box)


def _interior_march(u0: np.ndarray, ut0: np.ndarray, damping: np.ndarray,
                    c2: np.ndarray, dirichlet: np.ndarray, sensors: np.ndarray,
                    dt: float, grid: Grid2D) -> tuple[np.ndarray, np.ndarray]:
    """March the damped wave equation on the domain grid with Dirichlet data
    injected at the boundary sensors each step.

    dirichlet[k] holds the sensor values at step k; u0 must already agree
    with dirichlet[0] at the sensors. Returns the state and its one-sided
    time derivative after the last step.
    """
    nsteps = dirichlet.shape[0] - 1
    if nsteps < 3:
        raise ValueError("trace too short: need at least 3 time steps")
    dx, dy = grid.dx, grid.dy
    inv_dx2, inv_dy2 = 1.0 / dx**2, 1.0 / dy**2
    inv_2dx, inv_2dy = 0.5 / dx, 0.5 / dy
    dt2 = dt * dt
    inv_denom = 1.0 / (1.0 + 0.5 * dt * damping)
    num_prev = 1.0 - 0.5 * dt * damping
    lap = np.empty_like(u0)
    scratch = np.empty_like(u0)
    if HAS_JIT:
        no_sig_x = np.zeros(grid.nx)
        no_sig_y = np.zeros(grid.ny)
        no_phi = np.zeros_like(u0)

    u_prev = u0.copy()
    _lap5(u_prev, inv_dx2, inv_dy2, lap)
    u_cur = u_prev + dt * ut0 + 0.5 * dt2 * (c2 * lap - damping * ut0)
    u_cur.ravel()[sensors] = dirichlet[1]

    u_spare = np.zeros_like(u0)
    for n in range(1, nsteps):
        u_next = u_spare
        if HAS_JIT:
            _step_kernel(u_next, u_cur, u_prev, c2, num_prev, inv_denom,
                         no_sig_x, no_sig_y, no_phi, no_phi,
                         inv_dx2, inv_dy2, inv_2dx, inv_2dy, dt2, False)
        else:
            _lap5(u_cur, inv_dx2, inv_dy2, lap)
            np.multiply(c2, lap, out=u_next)
            u_next *= dt2
            u_next += u_cur
            u_next += u_cur
            np.multiply(num_prev, u_prev, out=scratch)
            u_next -= scratch
            u_next *= inv_denom
        u_next.ravel()[sensors] = dirichlet[n + 1]
        if not np.all(np.isfinite(u_next)):
            raise SolverInstabilityError(n + 1)
        u_spare, u_prev, u_cur = u_prev, u_cur, u_next

    u_pprev = u_spare
    ut_end = (3.0 * u_cur - 4.0 * u_prev + u_pprev) * (0.5 / dt)
    return u_cur, ut_end


def backward_solve(trace: BoundaryTrace, terminal: WavePair, medium: Medium,
                   sign: int, cfg: SolveConfig) -> WavePair:
    """Solve the interior problem backward from t = T to t = 0 and return
    the state [v(0), v_t(0)].

    The equation is v_tt + sign * a v_t = c^2 Lap(v); sign = -1 selects the
    attenuation-flipped back-projection (which, after substituting s = T - t,
    marches as a damped equation and stays controlled), sign = +1 the plain
    one (anti-damped in reversed time). Terminal data are taken at t = T and
    the trace is injected at the boundary every step.
    """
    grid = medium.grid
    if terminal.grid != grid:
        raise ValueError("terminal data grid differs from the medium grid")
    if sign not in (-1, 1):
        raise ValueError(f"sign must be -1 or +1, got {sign}")
    sensors = boundary_sensors(grid)
    if trace.sensors.shape != sensors.shape or not np.array_equal(trace.sensors, sensors):
        raise ValueError("trace sensors do not match the medium grid boundary")
    if abs(trace.duration - cfg.T) > 1e-9 * max(1.0, cfg.T):
        raise ValueError(f"trace spans {trace.duration}, configuration wants T={cfg.T}")
    dt = trace.dt
    _check_cfl(dt, medium.c_max, grid.dx, grid.dy)

    # reversed time: s = T - t turns d/dt into -d/ds, flipping the damping
    reversed_dirichlet = trace.values[::-1]
    damping = -float(sign) * medium.a.values
    c2 = medium.c.values**2
    u0 = terminal.u.values.copy()
    ut0 = -terminal.ut.values            # dv/ds = -dv/dt
    u_end, ut_end = _interior_march(u0, ut0, damping, c2, reversed_dirichlet,
                                    sensors, dt, grid)
    return WavePair(ScalarField2D(grid, u_end), ScalarField2D(grid, -ut_end))


# ---------------------------------------------------------------------------
# Harmonic extension (five-point Laplace solve with Dirichlet data)
# ---------------------------------------------------------------------------

_laplace_solvers: dict[Grid2D, object] = {}

HARMONIC_RESIDUAL_TOL = 1e-10


def _laplace_solver(grid: Grid2D):
    solver = _laplace_solvers.get(grid)
    if solver is None:
        mx, my = grid.nx - 2, grid.ny - 2
        inv_dx2, inv_dy2 = 1.0 / grid.dx**2, 1.0 / grid.dy**2
        tx = sparse.diags_array([2.0 * np.ones(mx), -np.ones(mx - 1), -np.ones(mx - 1)],
                                offsets=[0, 1, -1]) * inv_dx2
        ty = sparse.diags_array([2.0 * np.ones(my), -np.ones(my - 1), -np.ones(my - 1)],
                                offsets=[0, 1, -1]) * inv_dy2
        A = sparse.kron(sparse.eye_array(my), tx) + sparse.kron(ty, sparse.eye_array(mx))
        solver = (factorized(A.tocsc()), A.tocsr())
        _laplace_solvers[grid] = solver
    return solver


def harmonic_extension(boundary_values: np.ndarray, grid: Grid2D) -> ScalarField2D:
    """Discrete harmonic extension: solve the five-point Laplace equation on
    the grid interior with the given Dirichlet data (one value per boundary
    sensor, in the canonical counterclockwise order).
    """
    sensors = boundary_sensors(grid)
    bv = np.asarray(boundary_values, dtype=np.float64)
    if bv.shape != sensors.shape:
        raise ValueError(f"expected {sensors.size} boundary values, got {bv.shape}")
    full = np.zeros(grid.shape)
    full.ravel()[sensors] = bv

    inv_dx2, inv_dy2 = 1.0 / grid.dx**2, 1.0 / grid.dy**2
    rhs = (full[1:-1, :-2] + full[1:-1, 2:]) * inv_dx2 + (full[:-2, 1:-1] + full[2:, 1:-1]) * inv_dy2
    b = rhs.ravel()

    solve, A = _laplace_solver(grid)
    x = solve(b)
    b_norm = float(np.linalg.norm(b))
    if b_norm > 0:
        residual = float(np.linalg.norm(A @ x - b)) / b_norm
        if residual > HARMONIC_RESIDUAL_TOL:
            raise RuntimeError(f"harmonic extension residual {residual:.2e} exceeds "
                               f"{HARMONIC_RESIDUAL_TOL:.0e}")
    full[1:-1, 1:-1] = x.reshape(grid.ny - 2, grid.nx - 2)
    return ScalarField2D(grid, full)
