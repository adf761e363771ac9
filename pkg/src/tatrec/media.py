"""Sound speed, attenuation, and phantom construction.

The measurement domain is the square [-1, 1]^2. Media must satisfy c = 1 and
a = 0 at every node outside it, so the sinusoidal sound-speed map and the
piecewise attenuation map are blended to their exterior values across a thin
cosine taper band along the boundary. The attenuation map is additionally
mollified by a grid-scale Gaussian before tapering, which is what turns the
two sharp disks into the smooth blobs the solvers propagate through.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .fields import Grid2D, ScalarField2D, field_from_function

OMEGA_HALF_WIDTH = 1.0   # the domain is the square |x| <= 1, |y| <= 1
DEFAULT_TAPER_WIDTH = 0.1

# Ten-ellipse head phantom, one row per ellipse:
# (intensity, semi-axis a, semi-axis b, center x, center y, rotation degrees).
# Intensities are additive where ellipses overlap.
SHEPP_LOGAN_ELLIPSES = np.array([
    [1.0, 0.69, 0.92, 0.0, 0.0, 0.0],
    [-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0],
    [-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0],
    [-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0],
    [0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0],
    [0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0],
    [0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0],
    [0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0],
    [0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0],
    [0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0],
])

# The raw phantom spans [-0.69, 0.69] x [-0.92, 0.92]; shrink it so it fits
# inside [-0.9, 0.9]^2 with room for the smoothing kernel's support (4 sigma,
# up to sigma = 0.03) while staying strictly inside the domain.
PHANTOM_SCALE = 0.85 / 0.92


@dataclass(frozen=True)
class AttenuationParams:
    """Parameters of the two-disk-plus-ramp attenuation map.

    d1, d2 are the disk magnitudes, d3 scales the background ramp
    d3*(1 + x) outside the disks; the disks are given by squared distance
    thresholds around their centers. taper_width is the width of the band
    along the domain boundary over which the coefficient is brought to zero.
    """

    d1: float = 9.0
    d2: float = 4.0
    d3: float = 1.5
    disk1_center: tuple[float, float] = (1.0 / 3.0, -0.5)
    disk1_rsq: float = 0.05
    disk2_center: tuple[float, float] = (-1.0 / 3.0, 1.0 / 3.0)
    disk2_rsq: float = 0.07
    taper_width: float = DEFAULT_TAPER_WIDTH

    def __post_init__(self):
        if min(self.d1, self.d2, self.d3) < 0:
            raise ValueError("disk and background magnitudes must be nonnegative")
        if self.disk1_rsq <= 0 or self.disk2_rsq <= 0:
            raise ValueError("squared radii must be positive")
        if not 0 < self.taper_width < OMEGA_HALF_WIDTH:
            raise ValueError(f"taper_width must lie in (0, {OMEGA_HALF_WIDTH})")

    def scaled(self, factor: float) -> "AttenuationParams":
        """Same geometry with all magnitudes multiplied by `factor`."""
        return AttenuationParams(self.d1 * factor, self.d2 * factor, self.d3 * factor,
                                 self.disk1_center, self.disk1_rsq,
                                 self.disk2_center, self.disk2_rsq, self.taper_width)


@dataclass(frozen=True, eq=False)
class Medium:
    """Sound speed and attenuation on a shared grid.

    Requires c > 0 and a >= 0 everywhere, and the exterior normalization
    c = 1, a = 0 at every node outside the closed domain square.
    """

    grid: Grid2D
    c: ScalarField2D
    a: ScalarField2D

    def __post_init__(self):
        if not (self.c.grid == self.grid and self.a.grid == self.grid):
            raise ValueError("c and a must live on the medium grid")
        if np.min(self.c.values) <= 0:
            raise ValueError("sound speed must be positive")
        if np.min(self.a.values) < 0:
            raise ValueError("attenuation must be nonnegative")
        X, Y = self.grid.meshgrid()
        outside = np.maximum(np.abs(X), np.abs(Y)) > OMEGA_HALF_WIDTH
        if np.any(self.c.values[outside] != 1.0) or np.any(self.a.values[outside] != 0.0):
            raise ValueError("need c = 1 and a = 0 outside the domain square")

    @property
    def c_max(self) -> float:
        return float(np.max(self.c.values))


def _boundary_taper(X: np.ndarray, Y: np.ndarray, width: float) -> np.ndarray:
    """Cosine ramp: 0 outside/on the domain boundary, 1 at depth >= width."""
    depth = OMEGA_HALF_WIDTH - np.maximum(np.abs(X), np.abs(Y))
    t = np.clip(depth / width, 0.0, 1.0)
    return 0.5 * (1.0 - np.cos(np.pi * t))


def build_sound_speed(grid: Grid2D, taper_width: float = DEFAULT_TAPER_WIDTH) -> ScalarField2D:
    """Sinusoidal sound speed 1 + 0.2 sin(2 pi x) + 0.1 cos(2 pi y), blended
    to exactly 1 across the taper band and outside the domain.
    """
    if not 0 < taper_width < OMEGA_HALF_WIDTH:
        raise ValueError(f"taper_width must lie in (0, {OMEGA_HALF_WIDTH})")

    def speed(X, Y):
        bump = 0.2 * np.sin(2 * np.pi * X) + 0.1 * np.cos(2 * np.pi * Y)
        return 1.0 + _boundary_taper(X, Y, taper_width) * bump

    return field_from_function(grid, speed)


def attenuation_profile(grid: Grid2D, params: AttenuationParams) -> ScalarField2D:
    """The raw piecewise attenuation map, before mollification and taper:
    d1 on disk 1, d2 on disk 2, d3*(1 + x) elsewhere in the domain, 0 outside.
    """
    X, Y = grid.meshgrid()
    inside = np.maximum(np.abs(X), np.abs(Y)) <= OMEGA_HALF_WIDTH
    d1sq = (X - params.disk1_center[0]) ** 2 + (Y - params.disk1_center[1]) ** 2
    d2sq = (X - params.disk2_center[0]) ** 2 + (Y - params.disk2_center[1]) ** 2
    in1 = d1sq < params.disk1_rsq
    in2 = d2sq < params.disk2_rsq
    values = params.d3 * (1.0 + X)
    values[in1] = params.d1
    values[in2] = params.d2
    values[~inside] = 0.0
    return ScalarField2D(grid, values)


def build_attenuation(grid: Grid2D, params: AttenuationParams) -> ScalarField2D:
    """Mollified, boundary-tapered attenuation coefficient.

    The raw piecewise map is smoothed with a Gaussian of standard deviation
    two cells, then multiplied by the cosine taper so the coefficient is
    exactly zero on and outside the domain boundary.
    """
    raw = attenuation_profile(grid, params).values
    smooth = gaussian_filter(raw, sigma=2.0, mode="constant", cval=0.0)
    X, Y = grid.meshgrid()
    values = smooth * _boundary_taper(X, Y, params.taper_width)
    return ScalarField2D(grid, np.maximum(values, 0.0))


def _ellipse_sum(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    total = np.zeros_like(X)
    for amp, a, b, x0, y0, deg in SHEPP_LOGAN_ELLIPSES:
        th = np.deg2rad(deg)
        xr = (X - x0) * np.cos(th) + (Y - y0) * np.sin(th)
        yr = -(X - x0) * np.sin(th) + (Y - y0) * np.cos(th)
        total += amp * ((xr / a) ** 2 + (yr / b) ** 2 <= 1.0)
    return total


def build_phantom(grid: Grid2D, blur_radius: float = 0.03) -> ScalarField2D:
    """Head phantom scaled to fit inside [-0.9, 0.9]^2, optionally smoothed
    with a Gaussian of standard deviation `blur_radius` (in length units).

    For blur_radius up to 0.03 the support stays strictly inside the domain
    square, so the phantom is a valid source for measurement (its boundary
    trace starts at zero).
    """
    if blur_radius < 0:
        raise ValueError("blur_radius must be nonnegative")
    X, Y = grid.meshgrid()
    values = _ellipse_sum(X / PHANTOM_SCALE, Y / PHANTOM_SCALE)
    if blur_radius > 0:
        values = gaussian_filter(values, sigma=(blur_radius / grid.dy, blur_radius / grid.dx),
                                 mode="constant", cval=0.0)
    return ScalarField2D(grid, values)


def make_medium(grid: Grid2D, taper_width: float = DEFAULT_TAPER_WIDTH,
                params: AttenuationParams | None = None) -> Medium:
    """Assemble the variable-speed, attenuating medium used by the experiments."""
    if params is None:
        params = AttenuationParams(taper_width=taper_width)
    return Medium(grid, build_sound_speed(grid, taper_width), build_attenuation(grid, params))


def uniform_medium(grid: Grid2D) -> Medium:
    """Free-space medium: c = 1, a = 0."""
    ones = ScalarField2D(grid, np.ones(grid.shape))
    zeros = ScalarField2D(grid, np.zeros(grid.shape))
    return Medium(grid, ones, zeros)


def undamped_medium(grid: Grid2D, taper_width: float = DEFAULT_TAPER_WIDTH) -> Medium:
    """Variable sound speed with the attenuation switched off."""
    zeros = ScalarField2D(grid, np.zeros(grid.shape))
    return Medium(grid, build_sound_speed(grid, taper_width), zeros)
