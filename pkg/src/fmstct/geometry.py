"""Full-scan multiple source-translation CT geometry.

Every segment (one STCT) is described in a local frame: the source translates
along ``y' = -l`` with coordinate ``lambda``, the flat detector sits on
``y' = h`` with coordinate ``u`` and the virtual detector through the rotation
centre (``y' = 0``) carries coordinate ``t``.  A local point ``(x', y')`` maps
to world coordinates by the row-vector product ``[x', y'] @ rot(theta_n)``.

All lengths are in mm and all angles in radians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class GeometryError(ValueError):
    """Raised when a point or ray is not representable in a segment frame."""


def rotation(theta: float) -> np.ndarray:
    """Right-multiplied rotation matrix used by the source trajectory."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, s], [-s, c]])


def segmentation(l: float, h: float, u_m: float) -> tuple[float, int]:
    """Return the effective inter-segment angle and number of segments.

    The raw angle ``2*arctan(u_m/h)`` is rounded up to a whole number of
    segments that tile the circle evenly.
    """
    if h <= 0 or u_m <= 0:
        raise ValueError("h and u_m must be positive")
    raw = raw_delta_theta(h, u_m)
    T = math.ceil(2 * math.pi / raw - 1e-12)
    return 2 * math.pi / T, T


def raw_delta_theta(h: float, u_m: float) -> float:
    return 2.0 * math.atan(u_m / h)


@dataclass(frozen=True)
class ScanConfig:
    """Acquisition geometry of a full-scan mSTCT.

    ``u_m`` is derived from ``J * pixel_pitch / 2``; ``T`` and
    ``delta_theta`` are derived from the detector half-angle.
    """

    l: float
    h: float
    lambda_m: float
    N: int
    J: int
    pixel_pitch: float
    mode: str = "full"
    u_m: float = field(init=False)
    T: int = field(init=False)
    delta_theta: float = field(init=False)

    def __post_init__(self):
        u_m = self.J * self.pixel_pitch / 2.0
        object.__setattr__(self, "u_m", u_m)
        if self.mode != "full":
            raise ValueError("only full-scan mode is supported")
        if not (self.l > 0 and self.h > 0 and self.lambda_m > 0 and u_m > 0):
            raise ValueError("l, h, lambda_m and u_m must be positive")
        if self.N < 2 or self.J < 2:
            raise ValueError("N and J must be at least 2")
        if self.lambda_m * self.h <= u_m * self.l:
            raise ValueError(
                "lambda_m*h must exceed u_m*l, otherwise the FOV radius is not positive"
            )
        dtheta, T = segmentation(self.l, self.h, u_m)
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "delta_theta", dtheta)

    @classmethod
    def bench(cls, lambda_m: float = 20.0, N: int = 251, J: int = 1024) -> "ScanConfig":
        """The bench geometry used throughout the experiments (l=13.75, h=106.5)."""
        return cls(l=13.75, h=106.5, lambda_m=lambda_m, N=N, J=J, pixel_pitch=0.127)

    @property
    def D(self) -> float:
        """Source-line to detector distance ``l + h``."""
        return self.l + self.h

    @property
    def lambdas(self) -> np.ndarray:
        """Source samples, uniform with both endpoints included."""
        return np.linspace(-self.lambda_m, self.lambda_m, self.N)

    @property
    def d_lambda(self) -> float:
        return 2.0 * self.lambda_m / (self.N - 1)

    @property
    def us(self) -> np.ndarray:
        """Detector element centres."""
        return (np.arange(self.J) - (self.J - 1) / 2.0) * self.pixel_pitch

    @property
    def frames(self) -> list["StctFrame"]:
        return [StctFrame(n, self.delta_theta * (n - 1)) for n in range(1, self.T + 1)]

    def frame(self, n: int) -> "StctFrame":
        """Segment ``n`` (1-based, wrapped modulo T)."""
        n = (n - 1) % self.T + 1
        return StctFrame(n, self.delta_theta * (n - 1))

    def with_lambda_m(self, lambda_m: float, N: int | None = None) -> "ScanConfig":
        return ScanConfig(self.l, self.h, lambda_m, self.N if N is None else N,
                          self.J, self.pixel_pitch, self.mode)


@dataclass(frozen=True)
class StctFrame:
    n: int
    theta: float

    def __post_init__(self):
        if not 0.0 <= self.theta < 2 * math.pi:
            raise ValueError("theta_n must lie in [0, 2*pi)")


def fov_radius(cfg: ScanConfig) -> float:
    """Radius of the disk with complete projection data."""
    return _fov_radius(cfg.l, cfg.h, cfg.lambda_m, cfg.u_m)


def _fov_radius(l, h, lambda_m, u_m):
    return (lambda_m * h - u_m * l) / math.hypot(l + h, lambda_m + u_m)


def standard_fov_radius(cfg: ScanConfig) -> float:
    """Inscribed radius of the static fan (source at the centre of its track)."""
    return cfg.l * cfg.u_m / math.hypot(cfg.l + cfg.h, cfg.u_m)


def fov_magnification(cfg: ScanConfig) -> float:
    return fov_radius(cfg) / standard_fov_radius(cfg)


# ----------------------------------------------------------------------------
# point / ray mappings
# ----------------------------------------------------------------------------

def to_local(frame: StctFrame, x, y):
    """World point -> frame coordinates ``(x', y')`` (inverse of the rotation)."""
    c, s = math.cos(frame.theta), math.sin(frame.theta)
    return x * c + y * s, -x * s + y * c


def to_world(frame: StctFrame, xl, yl):
    c, s = math.cos(frame.theta), math.sin(frame.theta)
    return xl * c - yl * s, xl * s + yl * c


def source_position(cfg: ScanConfig, frame: StctFrame, lam: float) -> np.ndarray:
    if abs(lam) > cfg.lambda_m * (1 + 1e-12):
        raise ValueError(f"lambda={lam} outside [-{cfg.lambda_m}, {cfg.lambda_m}]")
    return np.array([lam, -cfg.l]) @ rotation(frame.theta)


def detector_position(cfg: ScanConfig, frame: StctFrame, u) -> np.ndarray:
    return np.array([u, cfg.h]) @ rotation(frame.theta)


def point_to_detector(cfg: ScanConfig, frame: StctFrame, lam, x, y):
    """Detector coordinate ``u*`` hit by the ray from ``lam`` through ``(x, y)``.

    Returns ``(u_star, L)`` where ``L`` is the distance of the point from the
    source line.  Works elementwise on arrays.
    """
    xl, yl = to_local(frame, x, y)
    L = yl + cfg.l
    if np.any(L <= 0):
        raise GeometryError("point lies on or behind the source line (L <= 0)")
    return lam + (xl - lam) * cfg.D / L, L


def point_to_source(cfg: ScanConfig, frame: StctFrame, u, x, y):
    """Source coordinate ``lambda*`` of the ray from detector ``u`` through ``(x, y)``.

    Returns ``(lambda_star, H)`` with ``H`` the distance from the detector line.
    """
    xl, yl = to_local(frame, x, y)
    H = cfg.h - yl
    if np.any(H <= 0):
        raise GeometryError("point lies on or behind the detector line (H <= 0)")
    return u + (xl - u) * cfg.D / H, H


def virtual_to_detector(cfg: ScanConfig, lam, t):
    """``u`` on the physical detector of the ray ``(lam, t)``."""
    return (cfg.D * t - cfg.h * lam) / cfg.l


def detector_to_virtual(cfg: ScanConfig, lam, u):
    return (cfg.l * u + cfg.h * lam) / cfg.D


def to_parallel(cfg: ScanConfig, frame: StctFrame, lam, t):
    """Rebin ``(lam, t)`` to the parallel-beam pair ``(alpha, s)``.

    ``alpha = arctan((lam - t)/l) - theta_n`` and ``s`` is the signed distance
    of the ray from the origin.  Rays from different segments are the same
    world line exactly when ``fan_angle + theta_n`` and ``s`` agree, see
    :func:`world_angle`.
    """
    d = np.asarray(lam) - np.asarray(t)
    alpha = np.arctan(d / cfg.l) - frame.theta
    s = cfg.l * np.asarray(t) / np.hypot(d, cfg.l)
    return alpha, s


def world_angle(cfg: ScanConfig, frame: StctFrame, lam, t):
    """Angle of the ray normal in world coordinates, ``arctan((lam-t)/l) + theta_n``."""
    return np.arctan((np.asarray(lam) - np.asarray(t)) / cfg.l) + frame.theta


def ray_endpoints(cfg: ScanConfig, frame: StctFrame, lam, u):
    """World endpoints (source, detector element) of the ray ``(lam, u)``."""
    lam = np.asarray(lam, dtype=float)
    u = np.asarray(u, dtype=float)
    sx, sy = to_world(frame, lam, -cfg.l * np.ones_like(lam))
    dx, dy = to_world(frame, u, cfg.h * np.ones_like(u))
    return (sx, sy), (dx, dy)


def overlap_map(cfg: ScanConfig, lam, t, step: int = -1):
    """Coordinates of the same physical ray in the segment ``n + step``.

    ``step=-1`` maps segment ``n`` to its predecessor, ``step=+1`` to its
    successor.  The fan angle shifts by ``-step * delta_theta`` and the
    distance ``s`` from the origin is preserved.  Rays that would be parallel
    to the target detector come back as NaN.
    """
    lam = np.asarray(lam, dtype=float)
    t = np.asarray(t, dtype=float)
    l = cfg.l
    d = lam - t
    k = math.tan(-step * cfg.delta_theta)
    denom = l - d * k
    with np.errstate(divide="ignore", invalid="ignore"):
        d_new = (d * l + l * l * k) / denom
        d_new = np.where(denom > 1e-12 * l, d_new, np.nan)
        t_new = t * np.hypot(d_new, l) / np.hypot(d, l)
    return t_new + d_new, t_new


def adjacent_overlap_map(cfg: ScanConfig, frame: StctFrame, lam, t):
    """Map ``(lam, t)`` of ``frame`` to the previous segment.

    Raises :class:`GeometryError` when the ray cannot be seen by the previous
    segment's detector line at all.
    """
    lam_p, t_p = overlap_map(cfg, lam, t, step=-1)
    if np.any(~np.isfinite(lam_p)):
        raise GeometryError("ray is parallel to the previous segment's detector")
    return lam_p, t_p
