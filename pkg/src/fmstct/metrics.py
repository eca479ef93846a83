"""Image quality metrics: PSNR, SSIM, line profiles and FOV-edge error."""

from __future__ import annotations

import csv
import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .phantom import ImageGrid


def _values(img) -> np.ndarray:
    return np.asarray(img.values if isinstance(img, ImageGrid) else img, dtype=float)


def psnr(recon, truth, mask=None) -> float:
    """``10 log10(peak^2 / MSE)`` over ``mask`` with ``peak = max(truth[mask])``.

    Returns ``inf`` when the images agree exactly on the mask.
    """
    r, t = _values(recon), _values(truth)
    if r.shape != t.shape:
        raise ValueError("images differ in shape")
    m = np.ones(r.shape, bool) if mask is None else np.asarray(mask, bool)
    if not m.any():
        raise ValueError("empty mask")
    mse = float(np.mean((r[m] - t[m]) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(float(t[m].max()) ** 2 / mse)


def ssim(recon, truth, window: int = 8, data_range: float | None = None) -> float:
    """Mean single-scale SSIM over all ``window x window`` uniform windows.

    Local variances and covariance use the unbiased (sample) normalisation.
    ``data_range`` defaults to the dynamic range of ``truth``.
    """
    x, y = _values(recon), _values(truth)
    if x.shape != y.shape:
        raise ValueError("images differ in shape")
    if data_range is None:
        data_range = float(y.max() - y.min()) or 1.0
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    wx = sliding_window_view(x, (window, window))
    wy = sliding_window_view(y, (window, window))
    n = window * window
    mx = wx.mean(axis=(-2, -1))
    my = wy.mean(axis=(-2, -1))
    norm = n / (n - 1.0)
    vx = norm * (np.mean(wx * wx, axis=(-2, -1)) - mx * mx)
    vy = norm * (np.mean(wy * wy, axis=(-2, -1)) - my * my)
    cxy = norm * (np.mean(wx * wy, axis=(-2, -1)) - mx * my)
    s = ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx ** 2 + my ** 2 + c1) * (vx + vy + c2))
    return float(s.mean())


def profile(img, row: int, cols: tuple[int, int]) -> list[tuple[int, float]]:
    """Values of ``img`` along ``row`` for columns ``cols[0] .. cols[1]`` inclusive."""
    v = _values(img)
    c0, c1 = cols
    if not 0 <= row < v.shape[0] or not 0 <= c0 <= c1 < v.shape[1]:
        raise IndexError(f"profile row {row}, cols {cols} outside image {v.shape}")
    return [(c, float(v[row, c])) for c in range(c0, c1 + 1)]


def write_profile_csv(path, rows, header=("col", "value")) -> None:
    """Write ``(col, value, ...)`` rows as CSV with a header line."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for c, *vals in rows:
            w.writerow([c, *(repr(float(v)) for v in vals)])


def edge_annulus_error(recon: ImageGrid, truth: ImageGrid, R: float, band: float = 0.1) -> float:
    """RMS error over pixels with radius in ``[(1 - band) R, R]``."""
    if not 0 < band < 0.5:
        raise ValueError("band must lie in (0, 0.5)")
    X, Y = recon.mesh()
    rad = np.hypot(X, Y)
    sel = (rad >= (1 - band) * R) & (rad <= R)
    if not sel.any():
        raise ValueError("annulus contains no pixels")
    return float(np.sqrt(np.mean((recon.values[sel] - truth.values[sel]) ** 2)))


def report(recon: ImageGrid, truth: ImageGrid, R: float) -> dict:
    mask = recon.disk_mask(R)
    return {
        "psnr_db": psnr(recon, truth, mask),
        "ssim": ssim(recon, truth),
        "edge_annulus_rms": edge_annulus_error(recon, truth, R),
        "max_in_fov": float(recon.values[mask].max()),
        "truth_max": float(truth.values[mask].max()),
    }
