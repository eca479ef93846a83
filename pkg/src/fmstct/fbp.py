"""Full-scan weighted FBP baseline (FW-FBP).

Each source position of a segment is treated as one view of a flat-detector
fan-beam scan: redundancy weight and obliquity preweight, ramp filter along
the detector, then distance-weighted backprojection.  The weighted rows are
zero-padded before filtering, so the filtered rows are available beyond the
detector edge; backprojected points whose ray misses the detector pick up
these filter tails.
"""

from __future__ import annotations

import numpy as np
from scipy.signal import fftconvolve

from .dbp import _ddbp_kernel, _trapezoid, preweight
from .geometry import GeometryError, ScanConfig, to_local
from .phantom import ImageGrid
from .projector import Sinogram
from .redundancy import WeightMap

#: Global scale of the backprojection; 1 for the construction below.
FBP_SCALE = 1.0


def ramp_kernel(n: int, spacing: float) -> np.ndarray:
    """Band-limited ramp taps ``h(k)`` for ``k = -(n-1) .. n-1``."""
    k = np.arange(-(n - 1), n)
    h = np.zeros(k.size)
    h[k == 0] = 1.0 / (4.0 * spacing ** 2)
    odd = k % 2 == 1
    h[odd] = -1.0 / (np.pi * k[odd] * spacing) ** 2
    return h


def ramp_filter(row, spacing: float, axis: int = -1) -> np.ndarray:
    """Linear (zero-padded) convolution with the band-limited ramp, times ``spacing``."""
    row = np.asarray(row, dtype=float)
    n = row.shape[axis]
    if n < 8:
        raise ValueError("ramp filtering needs at least 8 samples")
    kernel = ramp_kernel(n, spacing)
    shape = [1] * row.ndim
    shape[axis] = kernel.size
    full = fftconvolve(row, kernel.reshape(shape), mode="full", axes=axis)
    # keep outputs aligned with the input samples
    return spacing * np.take(full, np.arange(n - 1, 2 * n - 1), axis=axis)


def extended_filter(rows: np.ndarray, spacing: float, pad: int) -> np.ndarray:
    """Ramp-filtered rows evaluated on the detector lattice extended by ``pad`` on each side."""
    rows = np.asarray(rows, dtype=float)
    n = rows.shape[-1]
    kernel = ramp_kernel(n + pad, spacing)
    full = fftconvolve(rows, kernel.reshape((1,) * (rows.ndim - 1) + (-1,)),
                       mode="full", axes=-1)
    # full[m] sits at detector index m - (n + pad - 1); keep -pad .. n - 1 + pad
    return spacing * full[..., n - 1: 2 * n + 2 * pad - 1]


def _pad_needed(cfg: ScanConfig, rho: float) -> int:
    """Detector samples beyond each edge reached by rays through the disk of radius ``rho``."""
    L = cfg.l - rho
    if L <= 0:
        raise GeometryError("backprojection region reaches the source line")
    reach = cfg.lambda_m + (rho + cfg.lambda_m) * cfg.D / L
    return max(0, int(np.ceil((reach - cfg.u_m) / cfg.pixel_pitch)) + 2)


def fw_fbp_points(sino: Sinogram, weights: WeightMap | None, x, y) -> np.ndarray:
    """FW-FBP at arbitrary points."""
    cfg = sino.cfg
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    pw = preweight(sino, weights).data
    rho = float(np.sqrt(x ** 2 + y ** 2).max(initial=0.0))
    pad = _pad_needed(cfg, rho)
    u0 = float(cfg.us[0]) - pad * cfg.pixel_pitch
    qw = _trapezoid(cfg.N, cfg.d_lambda)
    total = np.zeros(x.size)
    out = np.empty(x.size)
    for k, frame in enumerate(cfg.frames):
        xl, yl = to_local(frame, x.ravel(), y.ravel())
        rows = extended_filter(pw[k], cfg.pixel_pitch, pad)
        _ddbp_kernel(np.ascontiguousarray(rows), cfg.lambdas, qw,
                     np.ascontiguousarray(xl), np.ascontiguousarray(yl), cfg.l, cfg.D,
                     u0, cfg.pixel_pitch, False, out)
        total += out
    return FBP_SCALE * total.reshape(x.shape)


def fw_fbp(sino: Sinogram, weights: WeightMap | None, cfg: ScanConfig, grid: ImageGrid,
           radius: float | None = None) -> ImageGrid:
    """FW-FBP image on ``grid``; pixels beyond ``radius`` (if given) stay zero."""
    if sino.cfg != cfg:
        raise ValueError("sinogram was acquired with a different configuration")
    X, Y = grid.mesh()
    vals = np.zeros(X.shape)
    sel = np.ones(X.shape, bool) if radius is None else X ** 2 + Y ** 2 <= radius ** 2
    vals[sel] = fw_fbp_points(sino, weights, X[sel], Y[sel])
    return grid.like(vals)
