"""Ray geometry of the travel-time metric: geodesic lengths and depths.

A sound speed c induces the metric ds = |dx| / c, under which wavefronts
travel at unit speed. Geodesics are traced as Hamiltonian bicharacteristics
of H = c(x)^2 |xi|^2 / 2 with a fixed-step fourth-order integrator; the
parameter of unit-speed rays is metric length, i.e. travel time. Two
quantities matter for reconstruction guarantees:

* the longest geodesic contained in the closed domain (estimated by sweeping
  rays launched from boundary points toward other boundary points), which a
  measurement horizon must exceed;
* the deepest interior point, i.e. the largest travel time to the boundary
  (computed by first-order fast marching of the eikonal equation).

The sampled sound speed is interpolated with a C^1 bicubic spline so the
Hamiltonian is conserved along traced rays to integrator accuracy.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .fields import Grid2D
from .media import OMEGA_HALF_WIDTH, Medium

HAMILTONIAN_DRIFT_TOL = 1e-6


class TrappedRayError(RuntimeError):
    """A traced ray exceeded the arc-length cap without leaving the domain."""


@dataclass(eq=False)
class Ray:
    """One traced geodesic: sampled positions/momenta, metric length, and
    whether it left the domain (False means the length cap was hit)."""

    positions: np.ndarray
    momenta: np.ndarray
    length: float
    exited: bool
    hamiltonian_drift: float


class _SpeedModel:
    """Bicubic interpolant of c^2 with analytic gradient."""

    def __init__(self, medium: Medium):
        g = medium.grid
        # spline axes are (x, y); field arrays are (ny, nx)
        self._s = RectBivariateSpline(g.xs, g.ys, (medium.c.values**2).T, kx=3, ky=3)
        self._xlim = (g.x_min, g.x_max)
        self._ylim = (g.y_min, g.y_max)

    def _clamp(self, x, y):
        return (np.clip(x, *self._xlim), np.clip(y, *self._ylim))

    def c2(self, x, y):
        x, y = self._clamp(x, y)
        return self._s.ev(x, y)

    def grad_c2(self, x, y):
        x, y = self._clamp(x, y)
        return self._s.ev(x, y, dx=1), self._s.ev(x, y, dy=1)


def _hamiltonian(model: _SpeedModel, x, y, px, py):
    return 0.5 * model.c2(x, y) * (px * px + py * py)


def _rhs(model: _SpeedModel, x, y, px, py):
    c2 = model.c2(x, y)
    gx, gy = model.grad_c2(x, y)
    xi_sq = px * px + py * py
    return c2 * px, c2 * py, -0.5 * gx * xi_sq, -0.5 * gy * xi_sq


def _rk4_step(model: _SpeedModel, x, y, px, py, h):
    k1 = _rhs(model, x, y, px, py)
    k2 = _rhs(model, x + 0.5 * h * k1[0], y + 0.5 * h * k1[1],
              px + 0.5 * h * k1[2], py + 0.5 * h * k1[3])
    k3 = _rhs(model, x + 0.5 * h * k2[0], y + 0.5 * h * k2[1],
              px + 0.5 * h * k2[2], py + 0.5 * h * k2[3])
    k4 = _rhs(model, x + h * k3[0], y + h * k3[1], px + h * k3[2], py + h * k3[3])
    x_new = x + (h / 6.0) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    y_new = y + (h / 6.0) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    px_new = px + (h / 6.0) * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
    py_new = py + (h / 6.0) * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3])
    return x_new, y_new, px_new, py_new


def _inside(x, y):
    w = OMEGA_HALF_WIDTH
    return (np.abs(x) <= w) & (np.abs(y) <= w)


def _exit_fraction(x0, y0, x1, y1):
    """Fraction along segment (x0,y0)->(x1,y1) where it first crosses the
    domain boundary; assumes the start is inside and the end outside."""
    w = OMEGA_HALF_WIDTH
    frac = np.ones_like(np.asarray(x0, dtype=float))
    for p0, p1 in ((x0, x1), (y0, y1)):
        d = p1 - p0
        with np.errstate(divide="ignore", invalid="ignore"):
            hit_hi = np.where(d > 0, (w - p0) / d, np.inf)
            hit_lo = np.where(d < 0, (-w - p0) / d, np.inf)
        frac = np.minimum(frac, np.minimum(hit_hi, hit_lo))
    return np.clip(frac, 0.0, 1.0)


def trace_ray(x0: tuple[float, float], xi0: tuple[float, float], medium: Medium,
              step: float = 0.005, max_length: float = 20.0) -> Ray:
    """Trace one geodesic from a point in the closed domain until it exits.

    xi0 is normalized to a metric-unit covector, so the integration parameter
    is metric length (travel time); the reported length is interpolated to
    the boundary crossing. Raises TrappedRayError if the cap is reached, and
    ValueError if the Hamiltonian drifts beyond tolerance (step too large).
    """
    model = _SpeedModel(medium)
    x, y = float(x0[0]), float(x0[1])
    if not _inside(x, y):
        raise ValueError(f"launch point {x0} lies outside the domain")
    norm = np.hypot(xi0[0], xi0[1])
    if norm == 0:
        raise ValueError("zero launch direction")
    scale = 1.0 / (np.sqrt(model.c2(x, y)) * norm)   # |xi|_g = c |xi| = 1
    px, py = xi0[0] * scale, xi0[1] * scale

    h0 = _hamiltonian(model, x, y, px, py)
    pts = [(x, y)]
    moms = [(px, py)]
    drift = 0.0
    length = 0.0
    exited = False
    while length < max_length:
        xn, yn, pxn, pyn = _rk4_step(model, x, y, px, py, step)
        if not _inside(xn, yn):
            frac = float(_exit_fraction(x, y, xn, yn))
            length += frac * step
            # land exactly on the crossing for the stored endpoint
            x, y = x + frac * (xn - x), y + frac * (yn - y)
            px, py = px + frac * (pxn - px), py + frac * (pyn - py)
            pts.append((x, y))
            moms.append((px, py))
            exited = True
            break
        x, y, px, py = xn, yn, pxn, pyn
        length += step
        pts.append((x, y))
        moms.append((px, py))
        drift = max(drift, abs(float(_hamiltonian(model, x, y, px, py)) - h0))

    rel_drift = drift / h0
    if rel_drift > HAMILTONIAN_DRIFT_TOL:
        raise ValueError(f"Hamiltonian drift {rel_drift:.2e} exceeds tolerance; reduce the step")
    if not exited:
        raise TrappedRayError(f"ray from {x0} exceeded length cap {max_length} inside the domain")
    return Ray(np.asarray(pts), np.asarray(moms), float(length), exited, float(rel_drift))


def _boundary_points(n: int) -> np.ndarray:
    """n points equally spaced along the domain-square perimeter, starting at
    the bottom-left corner; all four corners are included when 4 | n."""
    w = OMEGA_HALF_WIDTH
    perim = 8.0 * w
    s = (np.arange(n) / n) * perim
    pts = np.empty((n, 2))
    side = np.floor(s / (2.0 * w)).astype(int)
    t = s - side * 2.0 * w
    pts[side == 0] = np.stack([-w + t[side == 0], np.full(np.sum(side == 0), -w)], axis=1)
    pts[side == 1] = np.stack([np.full(np.sum(side == 1), w), -w + t[side == 1]], axis=1)
    pts[side == 2] = np.stack([w - t[side == 2], np.full(np.sum(side == 2), w)], axis=1)
    pts[side == 3] = np.stack([np.full(np.sum(side == 3), -w), w - t[side == 3]], axis=1)
    return pts


def _sweep_lengths(model: _SpeedModel, starts: np.ndarray, dirs: np.ndarray,
                   step: float, max_length: float) -> tuple[np.ndarray, np.ndarray]:
    """Advance a whole bundle of rays at once; returns in-domain lengths and
    a trapped mask for rays that never exited within the cap."""
    x, y = starts[:, 0].copy(), starts[:, 1].copy()
    norm = np.hypot(dirs[:, 0], dirs[:, 1])
    scale = 1.0 / (np.sqrt(model.c2(x, y)) * norm)
    px, py = dirs[:, 0] * scale, dirs[:, 1] * scale

    n = x.size
    lengths = np.zeros(n)
    active = np.ones(n, dtype=bool)
    n_steps = int(np.ceil(max_length / step))
    for _ in range(n_steps):
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        xa, ya, pxa, pya = x[idx], y[idx], px[idx], py[idx]
        xn, yn, pxn, pyn = _rk4_step(model, xa, ya, pxa, pya, step)
        out = ~_inside(xn, yn)
        if out.any():
            o = idx[out]
            frac = _exit_fraction(x[o], y[o], xn[out], yn[out])
            lengths[o] += frac * step
            active[o] = False
        stay = ~out
        s = idx[stay]
        x[s], y[s], px[s], py[s] = xn[stay], yn[stay], pxn[stay], pyn[stay]
        lengths[s] += step
    return lengths, active


def ray_length_sweep(medium: Medium, n_boundary_samples: int = 64,
                     n_angle_samples: int = 64, step: float = 0.005,
                     max_length: float = 20.0):
    """Sweep geodesics from boundary points toward other boundary points.

    Aiming each launch at the other sampled boundary points covers the inward
    direction cone densely and hits straight chords (including the diagonals)
    exactly. Returns (starts, directions, lengths, trapped): per-ray launch
    data, in-domain metric lengths, and a mask of rays that hit the cap.
    """
    if n_boundary_samples < 8 or n_angle_samples < 8:
        raise ValueError("need at least 8 boundary and 8 angle samples")
    model = _SpeedModel(medium)
    points = _boundary_points(n_boundary_samples)
    targets = _boundary_points(n_angle_samples) if n_angle_samples != n_boundary_samples else points

    starts = np.repeat(points, targets.shape[0], axis=0)
    aims = np.tile(targets, (points.shape[0], 1))
    dirs = aims - starts
    keep = np.hypot(dirs[:, 0], dirs[:, 1]) > 1e-12
    starts, dirs = starts[keep], dirs[keep]

    lengths, trapped = _sweep_lengths(model, starts, dirs, step, max_length)
    return starts, dirs, lengths, trapped


def estimate_T0(medium: Medium, n_boundary_samples: int = 64,
                n_angle_samples: int = 64, step: float = 0.005,
                max_length: float = 20.0) -> float:
    """Estimate the longest in-domain geodesic length.

    A lower-bound estimate that converges to the supremum from below as the
    sampling refines. Raises TrappedRayError if any swept ray fails to leave
    the domain within the cap, which invalidates the estimate.
    """
    starts, _, lengths, trapped = ray_length_sweep(medium, n_boundary_samples,
                                                   n_angle_samples, step, max_length)
    if trapped.any():
        i = int(np.nonzero(trapped)[0][0])
        raise TrappedRayError(f"{int(trapped.sum())} rays hit the length cap {max_length}; "
                              f"first launch {tuple(starts[i])}, medium may be trapping")
    return float(lengths.max())


def _fast_march_depth(grid: Grid2D, c: np.ndarray) -> np.ndarray:
    """First-order fast-marching travel time from the grid boundary inward,
    with local speed c (metric distance to the boundary)."""
    ny, nx = c.shape
    dist = np.full((ny, nx), np.inf)
    known = np.zeros((ny, nx), dtype=bool)
    heap: list[tuple[float, int, int]] = []
    for j in range(ny):
        for i in (0, nx - 1):
            dist[j, i] = 0.0
            heapq.heappush(heap, (0.0, j, i))
    for i in range(1, nx - 1):
        for j in (0, ny - 1):
            dist[j, i] = 0.0
            heapq.heappush(heap, (0.0, j, i))

    dx = (grid.x_max - grid.x_min) / (nx - 1)
    dy = (grid.y_max - grid.y_min) / (ny - 1)

    while heap:
        d, j, i = heapq.heappop(heap)
        if known[j, i] or d > dist[j, i]:
            continue
        known[j, i] = True
        for dj, di in ((0, 1), (0, -1), (1, 0), (-1, 0)):
            jn, im = j + dj, i + di
            if not (0 <= jn < ny and 0 <= im < nx) or known[jn, im]:
                continue
            ux = min(dist[jn, im - 1] if im > 0 else np.inf,
                     dist[jn, im + 1] if im < nx - 1 else np.inf)
            uy = min(dist[jn - 1, im] if jn > 0 else np.inf,
                     dist[jn + 1, im] if jn < ny - 1 else np.inf)
            slo = 1.0 / c[jn, im]
            cand = _eikonal_update(ux, uy, dx, dy, slo)
            if cand < dist[jn, im]:
                dist[jn, im] = cand
                heapq.heappush(heap, (cand, jn, im))
    return dist


def _eikonal_update(ux: float, uy: float, dx: float, dy: float, slo: float) -> float:
    """Upwind solve of (d-ux)^2/dx^2 + (d-uy)^2/dy^2 = slo^2 (one-sided when
    only one neighbor is known)."""
    if ux == np.inf:
        return uy + slo * dy
    if uy == np.inf:
        return ux + slo * dx
    a = 1.0 / dx**2 + 1.0 / dy**2
    b = -2.0 * (ux / dx**2 + uy / dy**2)
    cc = ux**2 / dx**2 + uy**2 / dy**2 - slo**2
    disc = b * b - 4.0 * a * cc
    if disc < 0:
        return min(ux + slo * dx, uy + slo * dy)
    d = (-b + np.sqrt(disc)) / (2.0 * a)
    if d < max(ux, uy):   # two-sided update invalid, fall back to one-sided
        return min(ux + slo * dx, uy + slo * dy)
    return d


def estimate_T1(medium: Medium, n_interior_samples: int = 64, step: float | None = None) -> float:
    """Largest travel time from an interior point to the domain boundary.

    Fast-marches the eikonal equation inward from the boundary on a grid at
    least n_interior_samples nodes per axis (the medium grid, refined if
    `step` asks for finer spacing), then maximizes over the interior nodes.
    """
    if n_interior_samples < 4:
        raise ValueError("need at least 4 interior samples per axis")
    g = medium.grid
    n_nodes = max(g.nx, g.ny, n_interior_samples)
    if step is not None and step > 0:
        n_nodes = max(n_nodes, int(np.ceil((g.x_max - g.x_min) / step)) + 1)
    if n_nodes == g.nx == g.ny:
        c = medium.c.values
        grid = g
    else:
        grid = Grid2D(n_nodes, n_nodes, g.x_min, g.x_max, g.y_min, g.y_max)
        model = _SpeedModel(medium)
        X, Y = grid.meshgrid()
        c = np.sqrt(np.maximum(model.c2(X.ravel(), Y.ravel()), 1e-12)).reshape(grid.shape)
    depth = _fast_march_depth(grid, c)
    return float(depth.max())
