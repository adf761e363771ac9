import numpy as np
import pytest

from tatrec import (ScalarField2D, SolveConfig, WavePair, backward_solve,
                    boundary_sensors, extended_energy, forward_solve,
                    harmonic_extension, local_energy, make_grid, make_medium,
                    read_field, uniform_medium, zero_pair)
from tatrec.fields import BoundaryTrace, field_from_function
from tatrec.wavesim import _interior_march, energy_norm, time_step

from conftest import gaussian_bump


def bump_pair(grid, **kw):
    u = ScalarField2D(grid, gaussian_bump(grid, **kw))
    return WavePair(u, ScalarField2D(grid, np.zeros(grid.shape)))


class TestTimeStep:
    def test_step_divides_horizon(self, medium101):
        cfg = SolveConfig(T=3.0)
        dt, n = time_step(cfg, medium101)
        assert n * dt == pytest.approx(3.0, abs=1e-14)
        assert dt <= 0.5 * medium101.grid.dx / medium101.c_max + 1e-15

    def test_cfl_violation_rejected(self, medium101):
        with pytest.raises(ValueError, match="CFL"):
            time_step(SolveConfig(T=3.0, cfl=0.95), medium101)


class TestForwardSolve:
    def test_zero_data_gives_zero_everything(self, grid51):
        medium = make_medium(grid51)
        res = forward_solve(zero_pair(grid51), medium, SolveConfig(T=1.0, pml_cells=10))
        assert np.all(res.trace.values == 0.0)
        assert np.all(res.final.u.values == 0.0)
        assert np.all(res.final.ut.values == 0.0)
        assert res.damping_integral == 0.0

    def test_arrival_time_against_fine_grid_reference(self):
        # flat medium, bump at the origin: the wavefront reaches the nearest
        # boundary point at t ~ distance/speed = 1
        def arrival(n):
            grid = make_grid(n, n, (-1, 1, -1, 1))
            medium = uniform_medium(grid)
            cfg = SolveConfig(T=1.6)
            res = forward_solve(bump_pair(grid, width=0.005), medium, cfg)
            sensors = boundary_sensors(grid)
            rows, cols = sensors // grid.nx, sensors % grid.nx
            mid_right = np.nonzero((cols == grid.nx - 1) & (rows == (grid.ny - 1) // 2))[0][0]
            sig = np.abs(res.trace.values[:, mid_right])
            k = np.nonzero(sig > 0.25 * sig.max())[0][0]
            return k * res.trace.dt, res.trace.dt

        t_coarse, dt_coarse = arrival(101)
        t_fine, _ = arrival(301)
        assert abs(t_coarse - t_fine) <= 2.0 * dt_coarse
        assert t_coarse == pytest.approx(1.0, abs=0.15)

    def test_energy_non_increasing_on_damped_medium(self, cfg_t3):
        # needs the production resolution: the estimator wobbles when the
        # phantom edges are thinner than a couple of cells
        from tatrec import build_phantom, tat_pair
        grid = make_grid(201, 201, (-1, 1, -1, 1))
        medium = make_medium(grid)
        res = forward_solve(tat_pair(build_phantom(grid), medium), medium, cfg_t3)
        ev = res.energy_series
        slack = (ev - np.minimum.accumulate(ev)).max()
        assert slack <= 1e-3 * ev[0]

    def test_trace_starts_at_zero_for_interior_data(self, grid51):
        medium = make_medium(grid51)
        X, Y = grid51.meshgrid()
        u = gaussian_bump(grid51, width=0.02) * (np.maximum(np.abs(X), np.abs(Y)) < 0.9)
        f = WavePair(ScalarField2D(grid51, u), ScalarField2D(grid51, np.zeros(grid51.shape)))
        res = forward_solve(f, medium, SolveConfig(T=1.0))
        assert np.all(res.trace.values[0] == 0.0)

    def test_snapshots_written(self, grid51, tmp_path):
        medium = uniform_medium(grid51)
        forward_solve(bump_pair(grid51), medium, SolveConfig(T=0.5),
                      snapshot_every=20, snapshot_dir=tmp_path)
        files = sorted(tmp_path.glob("u_*.tatf"))
        assert files, "no snapshots written"
        snap = read_field(files[0])
        assert snap.grid == grid51


class TestBackwardSolve:
    def test_zero_trace_zero_terminal(self, grid51):
        medium = make_medium(grid51)
        cfg = SolveConfig(T=1.0)
        dt, n = time_step(cfg, medium)
        sensors = boundary_sensors(grid51)
        trace = BoundaryTrace(n + 1, dt, sensors, np.zeros((n + 1, sensors.size)))
        out = backward_solve(trace, zero_pair(grid51), medium, -1, cfg)
        assert np.all(out.u.values == 0.0)
        assert np.all(out.ut.values == 0.0)

    def test_signs_agree_when_undamped(self, grid51):
        medium = uniform_medium(grid51)
        cfg = SolveConfig(T=1.5)
        res = forward_solve(bump_pair(grid51), medium, cfg)
        term = zero_pair(grid51)
        vm = backward_solve(res.trace, term, medium, -1, cfg)
        vp = backward_solve(res.trace, term, medium, +1, cfg)
        assert np.abs(vm.u.values - vp.u.values).max() < 1e-12
        assert np.abs(vm.ut.values - vp.ut.values).max() < 1e-12

    def test_terminal_energy_ordering_on_damped_medium(self, medium101, phantom101, cfg_t3):
        # with the measured trace injected, the attenuation-flipped run stays
        # below the plain damped run at every reversed time
        from tatrec import measure, tat_pair
        h = measure(tat_pair(phantom101, medium101), medium101, cfg_t3)
        phi = harmonic_extension(h.values[-1], medium101.grid)
        term = WavePair(phi, ScalarField2D(medium101.grid, np.zeros(medium101.grid.shape)))
        n = h.nt - 1
        for frac in (0.25, 0.5, 1.0):
            k = max(3, int(round(frac * n)))
            sub = BoundaryTrace(k + 1, h.dt, h.sensors, h.values[n - k:])
            cfg_k = SolveConfig(T=k * h.dt)
            em = local_energy(backward_solve(sub, term, medium101, -1, cfg_k), medium101.c)
            ep = local_energy(backward_solve(sub, term, medium101, +1, cfg_k), medium101.c)
            assert em <= ep * (1.0 + 1e-9)

    def test_zero_trace_energy_monotone_in_reversed_time(self, medium101):
        # terminal-data-driven runs: the attenuation-flipped march dissipates,
        # the plain one grows, monotonically in the reversed time
        grid = medium101.grid
        X, Y = grid.meshgrid()
        interior = np.maximum(np.abs(X), np.abs(Y)) < 1.0 - 1e-12
        u = gaussian_bump(grid, x0=0.1, y0=-0.2, width=0.05) * interior
        term = WavePair(ScalarField2D(grid, u), ScalarField2D(grid, np.zeros(grid.shape)))
        cfg = SolveConfig(T=2.0)
        dt, n = time_step(cfg, medium101)
        sensors = boundary_sensors(grid)
        e_minus, e_plus = [local_energy(term, medium101.c)], [local_energy(term, medium101.c)]
        for frac in (0.1, 0.4, 0.7, 1.0):
            k = max(3, int(round(frac * n)))
            trace = BoundaryTrace(k + 1, dt, sensors, np.zeros((k + 1, sensors.size)))
            cfg_k = SolveConfig(T=k * dt)
            e_minus.append(local_energy(backward_solve(trace, term, medium101, -1, cfg_k), medium101.c))
            e_plus.append(local_energy(backward_solve(trace, term, medium101, +1, cfg_k), medium101.c))
        tol = 1e-3 * e_minus[0]
        assert all(b <= a + tol for a, b in zip(e_minus, e_minus[1:]))
        assert all(b >= a - tol for a, b in zip(e_plus, e_plus[1:]))

    def test_duality_with_interior_march(self, medium101, phantom101):
        # the backward solve is exactly the damped forward march in s = T - t
        from tatrec import measure, tat_pair
        cfg = SolveConfig(T=1.5)
        h = measure(tat_pair(phantom101, medium101), medium101, cfg)
        phi = harmonic_extension(h.values[-1], medium101.grid)
        out = backward_solve(h, WavePair(phi, ScalarField2D(medium101.grid,
                                                            np.zeros(medium101.grid.shape))),
                             medium101, -1, cfg)
        u_end, ut_end = _interior_march(
            phi.values.copy(), np.zeros(medium101.grid.shape), medium101.a.values,
            medium101.c.values**2, h.values[::-1], boundary_sensors(medium101.grid),
            h.dt, medium101.grid)
        assert np.array_equal(out.u.values, u_end)
        assert np.array_equal(out.ut.values, -ut_end)

    def test_mismatched_trace_rejected(self, grid51, medium101):
        medium51 = make_medium(grid51)
        cfg = SolveConfig(T=1.0)
        res = forward_solve(zero_pair(grid51), medium51, cfg)
        with pytest.raises(ValueError):
            backward_solve(res.trace, zero_pair(medium101.grid), medium101, -1, cfg)

    def test_instability_aborts_with_step_index(self, grid51):
        from tatrec import SolverInstabilityError
        medium = uniform_medium(grid51)
        cfg = SolveConfig(T=1.0)
        dt, n = time_step(cfg, medium)
        sensors = boundary_sensors(grid51)
        signs = (-1.0) ** np.arange(n + 1)
        vals = np.broadcast_to(1e308 * signs[:, None], (n + 1, sensors.size)).copy()
        trace = BoundaryTrace(n + 1, dt, sensors, vals)
        with pytest.raises(SolverInstabilityError):
            backward_solve(trace, zero_pair(grid51), medium, -1, cfg)


class TestHarmonicExtension:
    def test_constant_data(self, grid51):
        ext = harmonic_extension(np.ones(boundary_sensors(grid51).size), grid51)
        assert np.allclose(ext.values, 1.0, atol=1e-10)

    def test_linear_data(self, grid51):
        X, _ = grid51.meshgrid()
        bv = X.ravel()[boundary_sensors(grid51)]
        ext = harmonic_extension(bv, grid51)
        assert np.allclose(ext.values, X, atol=1e-9)

    def test_harmonic_polynomial(self, grid51):
        X, Y = grid51.meshgrid()
        h = X**2 - Y**2
        bv = h.ravel()[boundary_sensors(grid51)]
        ext = harmonic_extension(bv, grid51)
        assert np.abs(ext.values - h).max() < 10 * grid51.dx**2

    def test_maximum_principle(self, grid51):
        rng = np.random.default_rng(11)
        bv = rng.standard_normal(boundary_sensors(grid51).size)
        ext = harmonic_extension(bv, grid51)
        assert ext.values.min() >= bv.min() - 1e-12
        assert ext.values.max() <= bv.max() + 1e-12


class TestEnergy:
    def test_zero_state(self, grid51):
        medium = make_medium(grid51)
        assert local_energy(zero_pair(grid51), medium.c) == 0.0

    def test_unit_integrand(self, grid51):
        medium = make_medium(grid51)
        state = WavePair(ScalarField2D(grid51, np.zeros(grid51.shape)), medium.c)
        area = (grid51.x_max - grid51.x_min) * (grid51.y_max - grid51.y_min)
        # nodal-sum quadrature counts nx*ny cells of size dx*dy
        expected = grid51.nx * grid51.ny * grid51.cell_area
        assert local_energy(state, medium.c) == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(area, rel=0.05)

    def test_against_nodal_sum_oracle(self, grid51):
        medium = make_medium(grid51)
        rng = np.random.default_rng(5)
        u = ScalarField2D(grid51, rng.standard_normal(grid51.shape))
        ut = ScalarField2D(grid51, rng.standard_normal(grid51.shape))
        got = local_energy(WavePair(u, ut), medium.c)

        # independent oracle: explicit loops, one-sided stencils at the edges
        nx, ny, dx, dy = grid51.nx, grid51.ny, grid51.dx, grid51.dy
        uu, tt, cc = u.values, ut.values, medium.c.values
        total = 0.0
        for j in range(ny):
            for i in range(nx):
                if i == 0:
                    gx = (uu[j, 1] - uu[j, 0]) / dx
                elif i == nx - 1:
                    gx = (uu[j, -1] - uu[j, -2]) / dx
                else:
                    gx = (uu[j, i + 1] - uu[j, i - 1]) / (2 * dx)
                if j == 0:
                    gy = (uu[1, i] - uu[0, i]) / dy
                elif j == ny - 1:
                    gy = (uu[-1, i] - uu[-2, i]) / dy
                else:
                    gy = (uu[j + 1, i] - uu[j - 1, i]) / (2 * dy)
                total += (gx**2 + gy**2 + tt[j, i]**2 / cc[j, i]**2) * dx * dy
        assert got == pytest.approx(total, rel=1e-12)

    def test_masked_energy(self, grid51):
        medium = make_medium(grid51)
        rng = np.random.default_rng(6)
        state = WavePair(ScalarField2D(grid51, rng.standard_normal(grid51.shape)),
                         ScalarField2D(grid51, rng.standard_normal(grid51.shape)))
        X, _ = grid51.meshgrid()
        left = (X < 0).astype(float)
        right = (X >= 0).astype(float)
        total = local_energy(state, medium.c)
        assert (local_energy(state, medium.c, left)
                + local_energy(state, medium.c, right)) == pytest.approx(total, rel=1e-12)


class TestExtendedEnergy:
    def test_undamped_equals_local(self, grid51):
        medium = uniform_medium(grid51)
        res = forward_solve(bump_pair(grid51), medium, SolveConfig(T=1.0))
        assert res.damping_integral == 0.0
        assert extended_energy(res, medium.c) == pytest.approx(
            local_energy(res.final, medium.c))

    def test_zero_data(self, grid51):
        medium = make_medium(grid51)
        res = forward_solve(zero_pair(grid51), medium, SolveConfig(T=1.0))
        assert extended_energy(res, medium.c) == 0.0

    def test_conserved_on_large_box(self, grid101):
        # no absorbing layer; box big enough that the wave never exits
        medium = make_medium(grid101)
        cfg = SolveConfig(T=1.0, pml_cells=0, box_margin=1.5)
        f = bump_pair(grid101, width=0.03)
        res = forward_solve(f, medium, cfg)
        box_grid = res.final_box.grid
        c_box = ScalarField2D(box_grid, _embed_speed(medium, box_grid))
        e_start = local_energy(f, medium.c)
        e_end = extended_energy(res, c_box)
        assert abs(e_end - e_start) / e_start < 0.01


def _embed_speed(medium, box_grid):
    vals = np.ones(box_grid.shape)
    pad_x = round((medium.grid.x_min - box_grid.x_min) / box_grid.dx)
    pad_y = round((medium.grid.y_min - box_grid.y_min) / box_grid.dy)
    vals[pad_y:pad_y + medium.grid.ny, pad_x:pad_x + medium.grid.nx] = medium.c.values
    return vals
