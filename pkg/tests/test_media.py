import numpy as np
import pytest

from tatrec import (AttenuationParams, Medium, attenuation_profile,
                    build_attenuation, build_phantom, build_sound_speed,
                    make_grid, make_medium)
from tatrec.fields import ScalarField2D, sample_bilinear
from tatrec.media import PHANTOM_SCALE, SHEPP_LOGAN_ELLIPSES


def ellipse_sum_oracle(x, y):
    """Independent per-point summation over the ten-ellipse table."""
    total = 0.0
    for amp, a, b, x0, y0, deg in SHEPP_LOGAN_ELLIPSES:
        th = np.deg2rad(deg)
        xs, ys = x / PHANTOM_SCALE, y / PHANTOM_SCALE
        xr = (xs - x0) * np.cos(th) + (ys - y0) * np.sin(th)
        yr = -(xs - x0) * np.sin(th) + (ys - y0) * np.cos(th)
        if (xr / a) ** 2 + (yr / b) ** 2 <= 1.0:
            total += amp
    return total


class TestSoundSpeed:
    def test_formula_at_center(self, grid101):
        c = build_sound_speed(grid101)
        assert sample_bilinear(c, 0.0, 0.0) == pytest.approx(1.1, abs=1e-12)

    def test_formula_in_taper_free_interior(self):
        g = make_grid(41, 41, (-1, 1, -1, 1))  # (0.25, 0.25) is a node
        c = build_sound_speed(g)
        i = int(round((0.25 - g.x_min) / g.dx))
        # sin(2 pi 0.25) = 1, cos(2 pi 0.25) = 0
        assert c.values[i, i] == pytest.approx(1.2, abs=1e-12)

    def test_exactly_one_outside_domain(self):
        g = make_grid(121, 121, (-1.2, 1.2, -1.2, 1.2))
        c = build_sound_speed(g)
        X, Y = g.meshgrid()
        outside = np.maximum(np.abs(X), np.abs(Y)) > 1.0
        assert np.all(c.values[outside] == 1.0)

    def test_continuous_across_taper(self, grid101):
        c = build_sound_speed(grid101).values
        jumps = max(np.abs(np.diff(c, axis=0)).max(), np.abs(np.diff(c, axis=1)).max())
        assert jumps < 0.1  # no discontinuity at grid scale


class TestAttenuation:
    def test_disk1_center_value(self, grid101):
        a = build_attenuation(grid101, AttenuationParams())
        assert sample_bilinear(a, 1.0 / 3.0, -0.5) == pytest.approx(9.0, abs=0.01)

    def test_background_profile_before_regularization(self, grid101):
        raw = attenuation_profile(grid101, AttenuationParams())
        assert sample_bilinear(raw, 0.0, 0.9) == pytest.approx(1.5, abs=1e-12)

    def test_zero_outside_domain(self):
        g = make_grid(121, 121, (-1.3, 1.3, -1.3, 1.3))
        a = build_attenuation(g, AttenuationParams())
        X, Y = g.meshgrid()
        outside = np.maximum(np.abs(X), np.abs(Y)) > 1.0
        assert np.all(a.values[outside] == 0.0)
        assert sample_bilinear(a, 1.2, 0.0) == 0.0

    def test_nonnegative_everywhere(self, grid101):
        a = build_attenuation(grid101, AttenuationParams())
        assert a.values.min() >= 0.0

    @pytest.mark.parametrize("which", ["d1", "d2", "d3"])
    def test_monotone_in_magnitudes(self, grid101, which):
        import dataclasses
        base = AttenuationParams()
        bumped = dataclasses.replace(base, **{which: getattr(base, which) + 2.0})
        a0 = build_attenuation(grid101, base).values
        a1 = build_attenuation(grid101, bumped).values
        assert np.all(a1 >= a0 - 1e-12)

    def test_rejects_bad_params(self):
        with pytest.raises(ValueError):
            AttenuationParams(d1=-1.0)
        with pytest.raises(ValueError):
            AttenuationParams(disk1_rsq=0.0)
        with pytest.raises(ValueError):
            AttenuationParams(taper_width=1.5)


class TestPhantom:
    def test_zero_outside_support_margin(self, grid101):
        ph = build_phantom(grid101, blur_radius=0.012)
        X, Y = grid101.meshgrid()
        far = np.sqrt(X**2 + Y**2) > 0.95
        assert np.all(ph.values[far] == 0.0)

    def test_unblurred_matches_direct_summation(self, grid101):
        ph = build_phantom(grid101, blur_radius=0.0)
        probes = [(0.0, -0.7), (0.3, 0.0), (-0.15, 0.18), (0.0, 0.83), (0.05, -0.55)]
        for x, y in probes:
            i = int(round((x - grid101.x_min) / grid101.dx))
            j = int(round((y - grid101.y_min) / grid101.dy))
            xn, yn = grid101.xs[i], grid101.ys[j]
            assert ph.values[j, i] == pytest.approx(ellipse_sum_oracle(xn, yn), abs=1e-12)

    def test_zero_blur_is_identity(self, grid101):
        a = build_phantom(grid101, blur_radius=0.0)
        b = build_phantom(grid101, blur_radius=0.0)
        assert a.equals(b)

    @pytest.mark.parametrize("blur", [0.01, 0.03])
    def test_blur_preserves_mass(self, grid101, blur):
        sharp = build_phantom(grid101, blur_radius=0.0)
        soft = build_phantom(grid101, blur_radius=blur)
        m0, m1 = sharp.values.sum(), soft.values.sum()
        assert abs(m1 - m0) / abs(m0) < 1e-3

    def test_support_strictly_inside_domain(self, grid101):
        ph = build_phantom(grid101)  # default blur
        X, Y = grid101.meshgrid()
        edge = np.maximum(np.abs(X), np.abs(Y)) >= 1.0 - 1e-12
        assert np.all(ph.values[edge] == 0.0)


class TestMedium:
    def test_make_medium_invariants(self, medium101):
        assert medium101.c.values.min() > 0
        assert medium101.a.values.min() >= 0

    def test_rejects_negative_attenuation(self, grid101):
        c = build_sound_speed(grid101)
        bad = ScalarField2D(grid101, np.full(grid101.shape, -0.1))
        with pytest.raises(ValueError):
            Medium(grid101, c, bad)

    def test_rejects_nonunit_exterior(self):
        g = make_grid(61, 61, (-1.2, 1.2, -1.2, 1.2))
        c = ScalarField2D(g, np.full(g.shape, 1.1))
        a = ScalarField2D(g, np.zeros(g.shape))
        with pytest.raises(ValueError):
            Medium(g, c, a)

    def test_scaled_params(self):
        p = AttenuationParams().scaled(4.0)
        assert p.d1 == 36.0 and p.d2 == 16.0 and p.d3 == 6.0
        assert p.disk1_rsq == AttenuationParams().disk1_rsq
