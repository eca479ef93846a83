"""Finite inverse Hilbert transform and per-segment partial images.

Convention: ``H f(x) = (1/pi) PV int f(s) / (x - s) ds``.  For ``f`` supported
strictly inside ``(-a, a)`` the inverse used here is

    f(x) = -(sqrt(a^2 - x^2) / pi) PV int_{-a}^{a} g(s) / (sqrt(a^2 - s^2) (x - s)) ds,

which needs no line-integral constant.  It is discretised with Gauss-Chebyshev
nodes ``a*cos((2k-1)pi/2K)`` and evaluated at the interleaved points
``a*cos(j*pi/K)``, where the principal value is exact for polynomials.
"""

from __future__ import annotations

import dataclasses
import functools
import math

import numpy as np
from scipy import ndimage
from scipy.interpolate import CubicSpline

from .geometry import ScanConfig
from .phantom import ImageGrid

#: f_n = DBP_SCALE * H^{-1}[b_n] along the source-translation direction.
DBP_SCALE = -1.0 / (2.0 * math.pi)


@dataclasses.dataclass
class LineSamples:
    """Uniform samples centred on the line origin, support half-length ``half_length``."""

    values: np.ndarray
    spacing: float
    half_length: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)

    @property
    def positions(self) -> np.ndarray:
        m = self.values.shape[-1]
        return (np.arange(m) - (m - 1) / 2.0) * self.spacing


@functools.lru_cache(maxsize=16)
def _chebyshev(K: int):
    k = np.arange(1, K + 1)
    nodes = np.cos((2 * k - 1) * np.pi / (2 * K))
    evals = np.cos(np.arange(1, K) * np.pi / K)
    diff = evals[:, None] - nodes[None, :]
    inv = -(np.sqrt(1.0 - evals ** 2)[:, None] / K) / diff
    fwd = (np.sqrt(1.0 - nodes ** 2)[None, :] / K) / diff
    return nodes, evals, inv, fwd


def _default_K(samples: LineSamples) -> int:
    inside = int(2 * samples.half_length / samples.spacing) + 1
    return max(64, 2 * inside)


def _to_nodes(samples: LineSamples, nodes):
    pos = samples.positions
    spline = CubicSpline(pos, samples.values, axis=-1, extrapolate=False)
    out = spline(samples.half_length * nodes)
    return np.nan_to_num(out)


def _from_evals(samples: LineSamples, evals, vals):
    a = samples.half_length
    x = np.concatenate(([-a], a * evals[::-1], [a]))
    y = np.concatenate((np.zeros(vals.shape[:-1] + (1,)), vals[..., ::-1],
                        np.zeros(vals.shape[:-1] + (1,))), axis=-1)
    pos = samples.positions
    spline = CubicSpline(x, y, axis=-1, extrapolate=False)
    out = np.nan_to_num(spline(pos))
    out[..., np.abs(pos) >= a] = 0.0
    return out


def _check(samples: LineSamples):
    pos = samples.positions
    if samples.values.shape[-1] < 32:
        raise ValueError("need at least 32 samples per line")
    if samples.half_length <= 0 or samples.half_length > pos[-1] + 1e-9 * samples.spacing:
        raise ValueError("support half-length exceeds the sampled interval")
    if not np.all(np.isfinite(samples.values)):
        raise ValueError("line samples must be finite")


def finite_hilbert_inverse(b: LineSamples, K: int | None = None) -> LineSamples:
    """Recover ``f`` on ``[-a, a]`` from ``g = H f`` sampled on a uniform grid."""
    _check(b)
    K = K or _default_K(b)
    nodes, evals, inv, _ = _chebyshev(K)
    vals = _to_nodes(b, nodes) @ inv.T
    return LineSamples(_from_evals(b, evals, vals), b.spacing, b.half_length)


def finite_hilbert_forward(f: LineSamples, K: int | None = None) -> LineSamples:
    """``H f`` for ``f`` supported in ``[-a, a]``, with the same quadrature."""
    _check(f)
    K = K or _default_K(f)
    nodes, evals, _, fwd = _chebyshev(K)
    vals = _to_nodes(f, nodes) @ fwd.T
    a = f.half_length
    x = np.concatenate(([-a], a * evals[::-1], [a]))
    # H f is finite at the interval ends for f vanishing there; extrapolate linearly
    y = vals[..., ::-1]
    y = np.concatenate((2 * y[..., :1] - y[..., 1:2], y, 2 * y[..., -1:] - y[..., -2:-1]), axis=-1)
    pos = f.positions
    inside = np.abs(pos) <= a
    out = np.zeros(np.shape(f.values))
    out[..., inside] = CubicSpline(x, y, axis=-1)(pos[inside])
    return LineSamples(out, f.spacing, a)


# ----------------------------------------------------------------------------
# per-segment inversion on images
# ----------------------------------------------------------------------------

def visible_half_extent(cfg: ScanConfig, y_local):
    """Half-width in ``x'`` of the region seen by some ray of one segment at height ``y'``."""
    L = np.asarray(y_local, dtype=float) + cfg.l
    return cfg.lambda_m * (1.0 - L / cfg.D) + cfg.u_m * L / cfg.D


@dataclasses.dataclass(frozen=True)
class LinePlan:
    """Filtering lines of one segment.

    Lines run along ``m = (cos theta, sin theta)`` (the source translation) at
    perpendicular offsets ``offsets`` along ``p = (-sin theta, cos theta)``;
    the offset equals the local ``y'`` of the line.  Line ``i`` is sampled at
    ``halves[i] * nodes`` with the ``K`` Chebyshev nodes.
    """

    theta: float
    offsets: np.ndarray
    halves: np.ndarray
    K: int
    spacing: float
    reach: float

    @property
    def eta(self) -> float:
        return self.theta + math.pi / 2

    def node_positions(self):
        nodes = _chebyshev(self.K)[0]
        m = (math.cos(self.theta), math.sin(self.theta))
        p = (-math.sin(self.theta), math.cos(self.theta))
        along = self.halves[:, None] * nodes[None, :]
        xs = self.offsets[:, None] * p[0] + along * m[0]
        ys = self.offsets[:, None] * p[1] + along * m[1]
        return xs, ys


def line_plan(cfg: ScanConfig, theta: float, radius: float, spacing: float,
              margin: float = 0.1, K: int | None = None) -> LinePlan:
    """Lines covering the disk of ``radius`` with spacing ``spacing``.

    The partial image of a segment is nonzero wherever some measured ray
    passes, which extends well beyond the FOV along the lines.  Each line
    therefore spans the segment's visible extent, plus ``margin * radius``.
    """
    if radius <= 0 or spacing <= 0:
        raise ValueError("radius and spacing must be positive")
    kmax = int(math.floor(radius / spacing)) + 1
    offsets = np.arange(-kmax, kmax + 1) * spacing
    chord = np.sqrt(np.maximum(radius ** 2 - offsets ** 2, 0.0))
    halves = np.maximum(visible_half_extent(cfg, offsets), chord) + margin * radius
    if K is None:
        K = max(64, int(math.ceil(2.0 * math.pi * halves.max() / spacing)))
    return LinePlan(theta, offsets, halves, K, spacing, float(halves.max()))


def invert_lines(plan: LinePlan, node_values: np.ndarray, grid: ImageGrid,
                 scale: float = DBP_SCALE) -> ImageGrid:
    """Invert DBP values sampled at ``plan.node_positions()`` onto ``grid``."""
    node_values = np.asarray(node_values, dtype=float)
    if node_values.shape != (plan.offsets.size, plan.K):
        raise ValueError("node values do not match the line plan")
    _, evals, inv, _ = _chebyshev(plan.K)
    f_eval = scale * (node_values @ inv.T)  # at halves * evals
    # every line onto a common uniform along-line lattice
    fine = plan.spacing / 4
    X, Y = grid.mesh()
    m = (math.cos(plan.theta), math.sin(plan.theta))
    along = X * m[0] + Y * m[1]
    across = -X * m[1] + Y * m[0]
    n_along = int(math.ceil(np.abs(along).max() / fine)) + 2
    tau = np.arange(-n_along, n_along + 1) * fine
    lattice = np.zeros((plan.offsets.size, tau.size))
    for i, a in enumerate(plan.halves):
        x = np.concatenate(([-a], a * evals[::-1], [a]))
        y = np.concatenate(([0.0], f_eval[i, ::-1], [0.0]))
        inside = np.abs(tau) < a
        lattice[i, inside] = CubicSpline(x, y)(tau[inside])
    ri = (across - plan.offsets[0]) / plan.spacing
    ci = (along - tau[0]) / fine
    vals = ndimage.map_coordinates(lattice, [ri.ravel(), ci.ravel()], order=1,
                                   mode="grid-constant", cval=0.0).reshape(X.shape)
    return grid.like(vals)


def invert_dbp(dbp, plan: LinePlan, out_grid: ImageGrid | None = None,
               scale: float = DBP_SCALE) -> ImageGrid:
    """Partial image of one segment from its DBP image.

    The DBP image is sampled (bilinear) at the line nodes, inverted line by
    line and resampled back onto ``out_grid`` (default: the DBP grid).  The
    DBP grid must contain every node of the plan.
    """
    src = dbp.grid
    if abs(dbp.eta - plan.eta) > 1e-9:
        raise ValueError("line plan and DBP image have different filtering directions")
    out_grid = out_grid or ImageGrid(src.width, src.height, src.pixel_size)
    xs, ys = plan.node_positions()
    ci = (xs - src.xs[0]) / src.pixel_size
    ri = (ys - src.ys[0]) / src.pixel_size
    if ci.min() < 0 or ri.min() < 0 or ci.max() > src.width - 1 or ri.max() > src.height - 1:
        raise ValueError("DBP grid does not cover the filtering lines")
    node_values = ndimage.map_coordinates(src.values, [ri.ravel(), ci.ravel()],
                                          order=1).reshape(xs.shape)
    return invert_lines(plan, node_values, out_grid, scale)


def accumulate(partials, fov_radius: float | None = None):
    """Pixelwise sum of partial images in a fixed order.

    Returns ``(image, mask)``; ``mask`` is the circular FOV mask (all True when
    no radius is given).
    """
    partials = list(partials)
    if not partials:
        raise ValueError("nothing to accumulate")
    first = partials[0]
    total = np.zeros_like(first.values)
    for p in partials:
        if not first.same_shape(p):
            raise ValueError("partial images live on different grids")
        total = total + p.values
    out = first.like(total)
    mask = np.ones(total.shape, bool) if fov_radius is None else out.disk_mask(fov_radius)
    return out, mask
