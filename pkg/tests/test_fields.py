import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tatrec import (BoundaryTrace, FieldFormatError, Grid2D, ScalarField2D,
                    WavePair, boundary_sensors, make_grid, pair_add, pair_scale,
                    pair_sub, read_field, read_trace, write_field, write_trace)
from tatrec.fields import sample_bilinear, zero_field, zero_pair


class TestGrid:
    def test_paper_grid_spacing(self):
        g = make_grid(501, 501, (-1, 1, -1, 1))
        assert g.dx == pytest.approx(0.004)
        assert g.dy == pytest.approx(0.004)

    def test_minimal_grid(self):
        g = make_grid(3, 3, (0, 1, 0, 1))
        assert g.dx == 0.5 and g.dy == 0.5

    def test_rectangular_grid(self):
        g = make_grid(3, 5, (0, 1, 0, 2))
        assert g.dx == 0.5 and g.dy == 0.5

    @pytest.mark.parametrize("nx,ny", [(2, 3), (3, 2), (1, 1), (0, 5)])
    def test_rejects_tiny_grids(self, nx, ny):
        with pytest.raises(ValueError):
            make_grid(nx, ny, (0, 1, 0, 1))

    @pytest.mark.parametrize("bounds", [(1, 0, 0, 1), (0, 1, 1, 1), (0, np.inf, 0, 1),
                                        (np.nan, 1, 0, 1)])
    def test_rejects_bad_bounds(self, bounds):
        with pytest.raises(ValueError):
            make_grid(5, 5, bounds)


class TestScalarField:
    def test_rejects_wrong_size(self):
        g = make_grid(4, 4, (0, 1, 0, 1))
        with pytest.raises(ValueError):
            ScalarField2D(g, np.zeros(15))

    def test_rejects_non_finite(self):
        g = make_grid(4, 4, (0, 1, 0, 1))
        vals = np.zeros((4, 4))
        vals[2, 1] = np.nan
        with pytest.raises(ValueError):
            ScalarField2D(g, vals)

    def test_values_are_read_only(self):
        g = make_grid(4, 4, (0, 1, 0, 1))
        f = zero_field(g)
        with pytest.raises(ValueError):
            f.values[0, 0] = 1.0

    def test_bilinear_sampling_reproduces_linear_functions(self):
        g = make_grid(11, 11, (-1, 1, -1, 1))
        X, Y = g.meshgrid()
        f = ScalarField2D(g, 2.0 * X - 3.0 * Y + 0.5)
        xs = np.array([-0.95, -0.3, 0.0, 0.123, 0.77])
        ys = np.array([0.9, -0.51, 0.05, -0.99, 0.33])
        assert np.allclose(sample_bilinear(f, xs, ys), 2.0 * xs - 3.0 * ys + 0.5)


class TestWavePair:
    def test_grids_must_match(self):
        g1 = make_grid(4, 4, (0, 1, 0, 1))
        g2 = make_grid(5, 5, (0, 1, 0, 1))
        with pytest.raises(ValueError):
            WavePair(zero_field(g1), zero_field(g2))

    def test_pair_arithmetic(self):
        g = make_grid(4, 4, (0, 1, 0, 1))
        rng = np.random.default_rng(3)
        a = WavePair(ScalarField2D(g, rng.standard_normal((4, 4))),
                     ScalarField2D(g, rng.standard_normal((4, 4))))
        b = WavePair(ScalarField2D(g, rng.standard_normal((4, 4))),
                     ScalarField2D(g, rng.standard_normal((4, 4))))
        s = pair_add(a, b)
        d = pair_sub(s, b)
        assert np.allclose(d.u.values, a.u.values)
        half = pair_scale(a, 0.5)
        assert np.allclose(2.0 * half.ut.values, a.ut.values)


class TestBoundarySensors:
    @pytest.mark.parametrize("nx,ny", [(3, 3), (5, 4), (7, 11)])
    def test_covers_every_boundary_node_once(self, nx, ny):
        g = make_grid(nx, ny, (0, 1, 0, 2))
        s = boundary_sensors(g)
        assert s.size == 2 * nx + 2 * ny - 4
        assert np.unique(s).size == s.size
        rows, cols = s // nx, s % nx
        on_edge = (rows == 0) | (rows == ny - 1) | (cols == 0) | (cols == nx - 1)
        assert on_edge.all()

    def test_counterclockwise_from_lower_left(self):
        g = make_grid(3, 3, (0, 1, 0, 1))
        assert boundary_sensors(g).tolist() == [0, 1, 2, 5, 8, 7, 6, 3]


class TestFieldFiles:
    def test_zero_field_round_trip(self, tmp_path):
        g = make_grid(3, 3, (0, 1, 0, 1))
        f = zero_field(g)
        write_field(f, tmp_path / "z.tatf")
        assert read_field(tmp_path / "z.tatf").equals(f)

    def test_sound_speed_round_trip_is_byte_identical(self, tmp_path):
        from tatrec import build_sound_speed
        g = make_grid(101, 101, (-1, 1, -1, 1))
        c = build_sound_speed(g)
        p1, p2 = tmp_path / "c1.tatf", tmp_path / "c2.tatf"
        write_field(c, p1)
        write_field(read_field(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()
        assert read_field(p1).equals(c)

    def test_header_layout(self, tmp_path):
        g = make_grid(3, 4, (0.0, 1.0, -2.0, 2.0))
        path = tmp_path / "h.tatf"
        write_field(zero_field(g), path)
        raw = path.read_bytes()
        assert raw[:4] == b"TATF"
        assert int.from_bytes(raw[4:8], "little") == 3
        assert int.from_bytes(raw[8:12], "little") == 4
        assert np.frombuffer(raw[12:44], dtype="<f8").tolist() == [0.0, 1.0, -2.0, 2.0]
        assert len(raw) == 44 + 12 * 8

    def test_size_mismatch_rejected(self, tmp_path):
        g = make_grid(3, 3, (0, 1, 0, 1))
        path = tmp_path / "bad.tatf"
        write_field(zero_field(g), path)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(FieldFormatError):
            read_field(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.tatf"
        path.write_bytes(b"NOPE" + bytes(100))
        with pytest.raises(FieldFormatError):
            read_field(path)

    def test_non_finite_payload_rejected(self, tmp_path):
        g = make_grid(3, 3, (0, 1, 0, 1))
        path = tmp_path / "nan.tatf"
        write_field(zero_field(g), path)
        raw = bytearray(path.read_bytes())
        raw[44:52] = np.array([np.nan]).tobytes()
        path.write_bytes(bytes(raw))
        with pytest.raises(FieldFormatError):
            read_field(path)

    @settings(max_examples=25, deadline=None)
    @given(nx=st.integers(3, 8), ny=st.integers(3, 8), data=st.data())
    def test_round_trip_identity_property(self, tmp_path_factory, nx, ny, data):
        vals = data.draw(arrays(np.float64, (ny, nx),
                                elements=st.floats(-1e12, 1e12, allow_nan=False)))
        g = make_grid(nx, ny, (-2, 2, 0, 1))
        f = ScalarField2D(g, vals)
        path = tmp_path_factory.mktemp("rt") / "f.tatf"
        write_field(f, path)
        back = read_field(path)
        assert back.equals(f)


class TestTraceFiles:
    def test_round_trip(self, tmp_path):
        g = make_grid(5, 4, (0, 1, 0, 1))
        sensors = boundary_sensors(g)
        rng = np.random.default_rng(7)
        tr = BoundaryTrace(6, 0.01, sensors, rng.standard_normal((6, sensors.size)))
        path = tmp_path / "t.tatt"
        write_trace(tr, path)
        back = read_trace(path, g)
        assert back.nt == tr.nt and back.dt == tr.dt
        assert np.array_equal(back.values, tr.values)
        assert np.array_equal(back.sensors, sensors)

    def test_wrong_grid_rejected(self, tmp_path):
        g = make_grid(5, 4, (0, 1, 0, 1))
        sensors = boundary_sensors(g)
        tr = BoundaryTrace(3, 0.01, sensors, np.zeros((3, sensors.size)))
        path = tmp_path / "t.tatt"
        write_trace(tr, path)
        with pytest.raises(FieldFormatError):
            read_trace(path, make_grid(6, 6, (0, 1, 0, 1)))

    def test_trace_validates_shape(self):
        g = make_grid(4, 4, (0, 1, 0, 1))
        with pytest.raises(ValueError):
            BoundaryTrace(3, 0.01, boundary_sensors(g), np.zeros((3, 5)))
