"""Differentiated backprojection (D-DBP along the detector, S-DBP along the source)."""

from __future__ import annotations

import dataclasses
import math

import numba
import numpy as np

from .geometry import GeometryError, ScanConfig, StctFrame, to_local
from .io import read_array, write_array
from .phantom import ImageGrid
from .projector import Sinogram, config_echo
from .redundancy import WeightMap


@dataclasses.dataclass
class DbpImage:
    """DBP of one segment on an image grid.

    ``eta`` is the Hilbert filtering direction measured counter-clockwise from
    the +y axis; the filtering lines run along ``(-sin eta, cos eta)``, which is
    parallel to the source translation of the segment.
    """

    frame: StctFrame
    grid: ImageGrid
    eta: float

    @property
    def values(self) -> np.ndarray:
        return self.grid.values

    @property
    def direction(self) -> np.ndarray:
        return np.array([-math.sin(self.eta), math.cos(self.eta)])

    def save(self, path, cfg: ScanConfig | None = None) -> None:
        meta = {"frame": self.frame.n, "theta": self.frame.theta, "eta": self.eta,
                "pixel_size": self.grid.pixel_size}
        if cfg is not None:
            meta.update(config_echo(cfg))
        write_array(path, "dbp", self.values, meta, dims="y x")

    @classmethod
    def load(cls, path) -> "DbpImage":
        data, h = read_array(path, "dbp")
        grid = ImageGrid(data.shape[1], data.shape[0], float(h["pixel_size"]), data)
        return cls(StctFrame(int(h["frame"]), float(h["theta"])), grid, float(h["eta"]))


def eta_for(frame: StctFrame) -> float:
    return frame.theta + math.pi / 2


def preweight(sino: Sinogram, weights: WeightMap | None) -> Sinogram:
    """Multiply by ``w * (l+h)^2 / sqrt((l+h)^2 + (lambda-u)^2)``."""
    cfg = sino.cfg
    if weights is not None and weights.data.shape != sino.data.shape:
        raise ValueError("weight map and sinogram dimensions differ")
    lam, u = np.meshgrid(cfg.lambdas, cfg.us, indexing="ij")
    factor = cfg.D ** 2 / np.sqrt(cfg.D ** 2 + (lam - u) ** 2)
    w = 1.0 if weights is None else weights.data
    return sino.replace(sino.data * w * factor[None])


def diff_along_detector(sino: Sinogram) -> Sinogram:
    """Central differences over u, second-order one-sided at the detector edges."""
    if sino.cfg.J < 3:
        raise ValueError("need at least 3 detector elements")
    return sino.replace(np.gradient(sino.data, sino.cfg.pixel_pitch, axis=2, edge_order=2))


def diff_along_source(sino: Sinogram) -> Sinogram:
    if sino.cfg.N < 3:
        raise ValueError("need at least 3 source samples")
    return sino.replace(np.gradient(sino.data, sino.cfg.d_lambda, axis=1, edge_order=2))


def _trapezoid(n: int, step: float) -> np.ndarray:
    w = np.full(n, step)
    w[0] = w[-1] = step / 2
    return w


@numba.njit(cache=True)
def _ddbp_kernel(G, lambdas, qw, xl, yl, l, D, u0, du, clamp, out):
    N, J = G.shape
    for p in range(xl.shape[0]):
        L = yl[p] + l
        acc = 0.0
        for i in range(N):
            lam = lambdas[i]
            fj = (lam + (xl[p] - lam) * D / L - u0) / du
            if fj < 0.0 or fj > J - 1:
                if not clamp:
                    continue
                val = G[i, 0] if fj < 0.0 else G[i, J - 1]
            elif fj == J - 1:
                val = G[i, J - 1]
            else:
                j0 = int(fj)
                a = fj - j0
                val = (1.0 - a) * G[i, j0] + a * G[i, j0 + 1]
            acc += qw[i] * val
        out[p] = 0.5 * acc / (L * L)


@numba.njit(cache=True)
def _sdbp_kernel(G, u0, du, qw, xl, yl, h, D, lam0, dlam, out):
    # the source position hit from detector element j is affine in j: fi = c0 + j*c1
    N, J = G.shape
    for p in range(xl.shape[0]):
        H = h - yl[p]
        k = D / H
        c0 = (u0 * (1.0 - k) + xl[p] * k - lam0) / dlam
        c1 = du * (1.0 - k) / dlam
        if c1 > 0.0:
            jlo = max(0, int(math.ceil(-c0 / c1)) - 1)
            jhi = min(J - 1, int(math.floor((N - 1 - c0) / c1)) + 1)
        else:
            jlo = max(0, int(math.ceil((N - 1 - c0) / c1)) - 1)
            jhi = min(J - 1, int(math.floor(-c0 / c1)) + 1)
        acc = 0.0
        for j in range(jlo, jhi + 1):
            fi = c0 + j * c1
            if fi < 0.0 or fi > N - 1:
                continue
            i0 = int(fi)
            if i0 >= N - 1:
                i0 = N - 2
            a = fi - i0
            acc += qw[j] * ((1.0 - a) * G[i0, j] + a * G[i0 + 1, j])
        out[p] = 0.5 * acc / (H * H)


def _frame_data(diffed: Sinogram, frame: StctFrame) -> np.ndarray:
    return np.ascontiguousarray(diffed.data[frame.n - 1], dtype=np.float64)


def d_dbp_points(diffed: Sinogram, frame: StctFrame, x, y, clamp: bool = False) -> np.ndarray:
    """D-DBP of ``diffed`` (already preweighted and differentiated along u) at points.

    Detector positions beyond the last element contribute zero, or the edge
    value when ``clamp`` is set.
    """
    cfg = diffed.cfg
    x = np.asarray(x, dtype=float)
    xl, yl = to_local(frame, x.ravel(), np.asarray(y, dtype=float).ravel())
    if np.any(yl + cfg.l <= 0):
        raise GeometryError("D-DBP point on or behind the source line (L <= 0)")
    out = np.empty(xl.shape)
    _ddbp_kernel(_frame_data(diffed, frame), cfg.lambdas, _trapezoid(cfg.N, cfg.d_lambda),
                 np.ascontiguousarray(xl), np.ascontiguousarray(yl), cfg.l, cfg.D,
                 float(cfg.us[0]), cfg.pixel_pitch, clamp, out)
    return out.reshape(x.shape)


def s_dbp_points(diffed: Sinogram, frame: StctFrame, x, y) -> np.ndarray:
    """S-DBP of ``diffed`` (preweighted and differentiated along lambda) at points."""
    cfg = diffed.cfg
    x = np.asarray(x, dtype=float)
    xl, yl = to_local(frame, x.ravel(), np.asarray(y, dtype=float).ravel())
    if np.any(cfg.h - yl <= 0):
        raise GeometryError("S-DBP point on or behind the detector line (H <= 0)")
    out = np.empty(xl.shape)
    _sdbp_kernel(_frame_data(diffed, frame), float(cfg.us[0]), cfg.pixel_pitch,
                 _trapezoid(cfg.J, cfg.pixel_pitch),
                 np.ascontiguousarray(xl), np.ascontiguousarray(yl), cfg.h, cfg.D,
                 -cfg.lambda_m, cfg.d_lambda, out)
    return out.reshape(x.shape)


def _on_grid(fn, diffed, frame, grid, radius, **kw):
    X, Y = grid.mesh()
    vals = np.zeros(X.shape)
    sel = np.ones(X.shape, bool) if radius is None else X ** 2 + Y ** 2 <= radius ** 2
    vals[sel] = fn(diffed, frame, X[sel], Y[sel], **kw)
    return DbpImage(frame, grid.like(vals), eta_for(frame))


def d_dbp(diffed: Sinogram, frame: StctFrame, grid: ImageGrid,
          radius: float | None = None, clamp: bool = False) -> DbpImage:
    """D-DBP on ``grid``; pixels beyond ``radius`` (if given) are left at zero."""
    return _on_grid(d_dbp_points, diffed, frame, grid, radius, clamp=clamp)


def s_dbp(diffed: Sinogram, frame: StctFrame, grid: ImageGrid,
          radius: float | None = None) -> DbpImage:
    """S-DBP on ``grid``; source positions beyond the translation range contribute zero."""
    return _on_grid(s_dbp_points, diffed, frame, grid, radius)


def prepare(sino: Sinogram, weights: WeightMap | None, kind: str) -> Sinogram:
    """Preweight and differentiate for ``kind`` in {"d", "s"}."""
    pw = preweight(sino, weights)
    if kind == "d":
        return diff_along_detector(pw)
    if kind == "s":
        return diff_along_source(pw)
    raise ValueError(f"unknown DBP kind {kind!r}")
