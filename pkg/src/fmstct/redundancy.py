"""Redundancy weights for full-scan mSTCT.

Adjacent segments measure some rays twice.  In the ``t``-``lambda`` plane of
one segment the doubly measured samples form two bands: ``R1`` (shared with
the previous segment) and ``R2`` (shared with the next one).  Weights in R2
ramp smoothly from 1 at the boundary where the partner's data ends to 0 at
the segment's own data edge, measuring distances along a directional line
(the W-Line, angle ``phi`` in the ``(t, lambda)`` plane).  R1 takes the
complement of its partner's R2 weight, so every ray sums to one.

All segments share the same geometry, so the weight function is evaluated
once on ``(lambda, t)`` and reused for every segment.
"""

from __future__ import annotations

import dataclasses
import enum
import math

import numpy as np

from .geometry import ScanConfig, detector_to_virtual, overlap_map, virtual_to_detector
from .io import read_array, write_array
from .projector import config_echo, config_from_echo

DEFAULT_PHI = 3 * math.pi / 4

_MARCH_STEPS = 96
_BISECT_ITERS = 48


class RegionLabel(enum.IntEnum):
    NON_REDUNDANT = 0
    R1 = 1
    R2 = 2


def smooth_f(x):
    """Sine ramp: 1 for x <= 0, 0 for x >= 1, ``(1 + sin((0.5 - x)*pi))/2`` between."""
    x = np.asarray(x, dtype=float)
    y = 0.5 * (1.0 + np.sin((0.5 - np.clip(x, 0.0, 1.0)) * np.pi))
    return np.where(x <= 0, 1.0, np.where(x >= 1, 0.0, y))


def valid_region_contains(cfg: ScanConfig, lam, t):
    """True where ``(lam, t)`` is a measured ray (inside the region Omega)."""
    lam = np.asarray(lam, dtype=float)
    u = virtual_to_detector(cfg, lam, np.asarray(t, dtype=float))
    tol = 1e-12 * max(cfg.lambda_m, cfg.u_m)
    with np.errstate(invalid="ignore"):
        return (np.abs(lam) <= cfg.lambda_m + tol) & (np.abs(u) <= cfg.u_m + tol)


def t_max(cfg: ScanConfig) -> float:
    """Virtual-detector coordinate of the extreme ray ``(lambda_m, u_m)``."""
    return float(detector_to_virtual(cfg, cfg.lambda_m, cfg.u_m))


def region_labels(cfg: ScanConfig, lam, t) -> np.ndarray:
    """Vectorised :func:`classify` returning an int array of :class:`RegionLabel`."""
    lam = np.asarray(lam, dtype=float)
    t = np.asarray(t, dtype=float)
    own = valid_region_contains(cfg, lam, t)
    prev = valid_region_contains(cfg, *overlap_map(cfg, lam, t, -1))
    nxt = valid_region_contains(cfg, *overlap_map(cfg, lam, t, +1))
    out = np.zeros(np.broadcast(lam, t).shape, dtype=np.int8)
    out[own & prev] = RegionLabel.R1
    out[own & nxt] = RegionLabel.R2
    return out


def classify(cfg: ScanConfig, n: int, lam: float, t: float) -> RegionLabel:
    """Region of the sample ``(lam, t)`` of segment ``n``.

    The answer is the same for every ``n``: segment indices wrap around the
    full circle, so each segment has both neighbours.
    """
    return RegionLabel(int(region_labels(cfg, lam, t)))


# ----------------------------------------------------------------------------
# W-Line distances
# ----------------------------------------------------------------------------

def _linear_exit(g0, g1, bound):
    """Largest tau >= 0 keeping ``|g0 + tau*g1| <= bound``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        up = np.where(g1 > 0, (bound - g0) / g1, np.inf)
        dn = np.where(g1 < 0, (-bound - g0) / g1, np.inf)
    return np.maximum(np.minimum(up, dn), 0.0)


def _own_exit(cfg, lam, t, dt, dl):
    u = virtual_to_detector(cfg, lam, t)
    du = (cfg.D * dt - cfg.h * dl) / cfg.l
    return np.minimum(_linear_exit(lam, dl, cfg.lambda_m), _linear_exit(u, du, cfg.u_m))


def _partner_exit(cfg, lam, t, dt, dl, tau_max, step):
    """First tau in (0, tau_max] where the partner ray leaves Omega, else inf."""
    def partner_in(tau):
        return valid_region_contains(cfg, *overlap_map(cfg, lam + tau * dl, t + tau * dt, step))

    n = lam.shape[0]
    found = np.full(n, np.inf)
    lo = np.zeros(n)
    hi = np.full(n, np.nan)
    pending = np.ones(n, dtype=bool)
    for k in range(1, _MARCH_STEPS + 1):
        tau = tau_max * k / _MARCH_STEPS
        out = pending & ~partner_in(tau)
        hi[out] = tau[out]
        pending &= ~out
        lo[pending] = tau[pending]
        if not pending.any():
            break
    sel = ~np.isnan(hi)
    a, b = lo[sel], hi[sel]
    lam_s, t_s = lam[sel], t[sel]
    dl_s, dt_s = np.broadcast_to(dl, lam.shape)[sel], np.broadcast_to(dt, lam.shape)[sel]
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (a + b)
        inside = valid_region_contains(
            cfg, *overlap_map(cfg, lam_s + mid * dl_s, t_s + mid * dt_s, step))
        a = np.where(inside, mid, a)
        b = np.where(inside, b, mid)
    found[sel] = 0.5 * (a + b)
    return found


def _distances(cfg: ScanConfig, lam, t, phi: float, step: int = +1):
    """W-Line distances ``(d_inner, d_outer)`` for samples of the overlap band ``step``.

    ``step=+1`` treats the samples as R2 points (partner in the next segment).
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    d_inner = np.full(lam.shape, np.inf)
    d_outer = np.full(lam.shape, np.inf)
    for sign in (+1.0, -1.0):
        dt, dl = sign * math.cos(phi), sign * math.sin(phi)
        own = _own_exit(cfg, lam, t, dt, dl)
        partner = _partner_exit(cfg, lam, t, dt, dl, own, step)
        inner = partner < own
        d_inner = np.where(inner, np.minimum(d_inner, partner), d_inner)
        d_outer = np.where(~inner, np.minimum(d_outer, own), d_outer)
    return d_inner, d_outer


def boundary_distances(cfg: ScanConfig, n: int, lam, t, phi: float = DEFAULT_PHI):
    """Distances along the W-Line from an R2 sample to the two kinds of boundary.

    ``d_inner`` reaches the boundary where the next segment's data ends (the
    weight is 1 there), ``d_outer`` reaches this segment's own data edge
    (weight 0).  Boundaries are located by marching and bisection on the
    region predicate.
    """
    d_in, d_out = _distances(cfg, lam, t, phi, +1)
    if np.ndim(lam) == 0 and np.ndim(t) == 0:
        return float(d_in[0]), float(d_out[0])
    return d_in, d_out


def _r2_weight(cfg, lam, t, phi):
    d_in, d_out = _distances(cfg, lam, t, phi, +1)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = d_in / (d_in + d_out)
    # a W-Line chord touching only one kind of boundary saturates
    ratio = np.where(np.isinf(d_in) & np.isfinite(d_out), 1.0, ratio)
    ratio = np.where(np.isinf(d_out) & np.isfinite(d_in), 0.0, ratio)
    ratio = np.where((d_in == 0) & (d_out == 0), 0.5, ratio)
    return smooth_f(ratio)


def weight(cfg: ScanConfig, lam, t, phi: float = DEFAULT_PHI) -> np.ndarray:
    """Continuous redundancy weight of the ray ``(lam, t)`` (any segment).

    Rays outside the measured region get weight 0.
    """
    lam, t = np.broadcast_arrays(np.asarray(lam, dtype=float), np.asarray(t, dtype=float))
    shape = lam.shape
    lam, t = lam.ravel(), t.ravel()
    labels = region_labels(cfg, lam, t)
    w = valid_region_contains(cfg, lam, t).astype(float)
    r2 = labels == RegionLabel.R2
    if r2.any():
        w[r2] = _r2_weight(cfg, lam[r2], t[r2], phi)
    r1 = labels == RegionLabel.R1
    if r1.any():
        lp, tp = overlap_map(cfg, lam[r1], t[r1], -1)
        w[r1] = 1.0 - _r2_weight(cfg, lp, tp, phi)
    return w.reshape(shape)


@dataclasses.dataclass
class WeightMap:
    """Weights ``data[n, i, j]`` on the sinogram sample grid, all in [0, 1]."""

    cfg: ScanConfig
    data: np.ndarray
    phi: float = DEFAULT_PHI

    def __post_init__(self):
        expected = (self.cfg.T, self.cfg.N, self.cfg.J)
        if self.data.shape != expected:
            raise ValueError(f"weight map shape {self.data.shape} != {expected}")

    def save(self, path) -> None:
        write_array(path, "weights", self.data, {**config_echo(self.cfg), "phi": self.phi},
                    dims="segment source detector")

    @classmethod
    def load(cls, path) -> "WeightMap":
        data, header = read_array(path, "weights")
        return cls(config_from_echo(header), data, float(header["phi"]))


def segment_weights(cfg: ScanConfig, phi: float = DEFAULT_PHI) -> np.ndarray:
    """``N x J`` weights of one segment on its ``(lambda_i, u_j)`` samples."""
    lam, u = np.meshgrid(cfg.lambdas, cfg.us, indexing="ij")
    return weight(cfg, lam, detector_to_virtual(cfg, lam, u), phi)


def build_weight_map(cfg: ScanConfig, phi: float = DEFAULT_PHI) -> WeightMap:
    base = segment_weights(cfg, phi)
    return WeightMap(cfg, np.repeat(base[None], cfg.T, axis=0), phi)
