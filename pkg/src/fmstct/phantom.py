"""Analytic ellipse phantoms, rasterisation and exact line integrals."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class Ellipse:
    cx: float
    cy: float
    a: float
    b: float
    tilt: float = 0.0  # radians
    density: float = 1.0

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise ValueError("ellipse semi-axes must be positive")

    def scaled(self, k: float) -> "Ellipse":
        return Ellipse(self.cx * k, self.cy * k, self.a * k, self.b * k, self.tilt, self.density)

    def rotated(self, angle: float) -> "Ellipse":
        c, s = math.cos(angle), math.sin(angle)
        return Ellipse(c * self.cx - s * self.cy, s * self.cx + c * self.cy,
                       self.a, self.b, self.tilt + angle, self.density)


@dataclass(frozen=True)
class PhantomSpec:
    """A list of additive ellipses inside a square of half-size ``half_size``."""

    ellipses: tuple[Ellipse, ...] = ()
    half_size: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "ellipses", tuple(self.ellipses))
        for e in self.ellipses:
            # bounding box of the tilted ellipse
            ex = math.hypot(e.a * math.cos(e.tilt), e.b * math.sin(e.tilt))
            ey = math.hypot(e.a * math.sin(e.tilt), e.b * math.cos(e.tilt))
            if (abs(e.cx) + ex > self.half_size * (1 + 1e-9)
                    or abs(e.cy) + ey > self.half_size * (1 + 1e-9)):
                raise ValueError(f"{e} does not fit inside half-size {self.half_size}")

    def scaled_to(self, half_size: float) -> "PhantomSpec":
        k = half_size / self.half_size
        return PhantomSpec(tuple(e.scaled(k) for e in self.ellipses), half_size)

    def rotated(self, angle: float) -> "PhantomSpec":
        return PhantomSpec(tuple(e.rotated(angle) for e in self.ellipses),
                           self.half_size * math.sqrt(2))

    @property
    def max_density(self) -> float:
        """Upper bound of the pointwise density (exact for the bundled phantoms)."""
        g = ImageGrid(512, 512, 2 * self.half_size / 512)
        return float(rasterize(self, g).values.max()) if self.ellipses else 0.0

    @property
    def support_radius(self) -> float:
        r = 0.0
        for e in self.ellipses:
            r = max(r, math.hypot(e.cx, e.cy) + max(e.a, e.b))
        return r


@dataclass
class ImageGrid:
    """Square-pixel image centred on the rotation axis.

    ``values[iy, ix]`` is sampled at ``x = (ix - (width-1)/2) * pixel_size`` and
    ``y = (iy - (height-1)/2) * pixel_size``; values are attenuation per mm.
    """

    width: int
    height: int
    pixel_size: float
    values: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.pixel_size <= 0:
            raise ValueError("pixel size must be positive")
        if self.values is None:
            self.values = np.zeros((self.height, self.width))
        if self.values.size != self.width * self.height:
            raise ValueError("value array does not match grid dimensions")
        self.values = self.values.reshape(self.height, self.width)

    @classmethod
    def covering(cls, half_size: float, n: int) -> "ImageGrid":
        """``n x n`` grid whose outer pixel edges sit at ``+-half_size``."""
        return cls(n, n, 2.0 * half_size / n)

    @property
    def xs(self) -> np.ndarray:
        return (np.arange(self.width) - (self.width - 1) / 2.0) * self.pixel_size

    @property
    def ys(self) -> np.ndarray:
        return (np.arange(self.height) - (self.height - 1) / 2.0) * self.pixel_size

    def mesh(self):
        return np.meshgrid(self.xs, self.ys)

    def like(self, values: np.ndarray) -> "ImageGrid":
        return ImageGrid(self.width, self.height, self.pixel_size, np.asarray(values))

    def same_shape(self, other: "ImageGrid") -> bool:
        return (self.width, self.height) == (other.width, other.height) and \
            math.isclose(self.pixel_size, other.pixel_size)

    def disk_mask(self, radius: float) -> np.ndarray:
        X, Y = self.mesh()
        return X ** 2 + Y ** 2 <= radius ** 2


def _inside(e: Ellipse, X, Y):
    c, s = math.cos(e.tilt), math.sin(e.tilt)
    dx, dy = X - e.cx, Y - e.cy
    xr = dx * c + dy * s
    yr = -dx * s + dy * c
    return (xr / e.a) ** 2 + (yr / e.b) ** 2 <= 1.0


def rasterize(spec: PhantomSpec, grid: ImageGrid, supersample: int = 1) -> ImageGrid:
    """Sum of densities of the ellipses containing each pixel centre.

    With ``supersample=k`` each pixel averages a ``k x k`` set of sub-samples.
    """
    X, Y = grid.mesh()
    out = np.zeros_like(X)
    offsets = ((np.arange(supersample) + 0.5) / supersample - 0.5) * grid.pixel_size
    for ox in offsets:
        for oy in offsets:
            for e in spec.ellipses:
                out += e.density * _inside(e, X + ox, Y + oy)
    return grid.like(out / supersample ** 2)


def line_integral(spec: PhantomSpec, p0, p1):
    """Exact integral of the phantom along the infinite line through ``p0`` and ``p1``.

    ``p0`` and ``p1`` are ``(x, y)`` pairs whose components may be arrays of
    matching shape; the result has that shape.
    """
    x0, y0 = (np.asarray(v, dtype=float) for v in p0)
    x1, y1 = (np.asarray(v, dtype=float) for v in p1)
    dx, dy = x1 - x0, y1 - y0
    norm = np.hypot(dx, dy)
    if np.any(norm == 0):
        raise ValueError("ray direction must be nonzero")
    dx, dy = dx / norm, dy / norm
    total = np.zeros(np.broadcast(x0, dx).shape)
    for e in spec.ellipses:
        c, s = math.cos(e.tilt), math.sin(e.tilt)
        # ray in the ellipse's normalised frame (unit circle)
        px, py = x0 - e.cx, y0 - e.cy
        qx = (px * c + py * s) / e.a
        qy = (-px * s + py * c) / e.b
        vx = (dx * c + dy * s) / e.a
        vy = (-dx * s + dy * c) / e.b
        A = vx * vx + vy * vy
        B = qx * vx + qy * vy
        C = qx * qx + qy * qy - 1.0
        disc = B * B - A * C
        chord = 2.0 * np.sqrt(np.maximum(disc, 0.0)) / A
        total += e.density * chord
    return total


def parse_phantom(text: str) -> PhantomSpec:
    """Parse the plain-text phantom format.

    One ellipse per line as ``cx cy a b tilt_deg density``; ``#`` starts a
    comment and a ``half_size = <mm>`` line sets the bounding square.
    """
    half = None
    ellipses = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            key, value = (p.strip() for p in line.split("=", 1))
            if key != "half_size":
                raise ValueError(f"line {lineno}: unknown header key {key!r}")
            half = float(value)
            continue
        parts = line.split()
        if len(parts) != 6:
            raise ValueError(f"line {lineno}: expected 6 fields, got {len(parts)}")
        cx, cy, a, b, tilt, dens = map(float, parts)
        ellipses.append(Ellipse(cx, cy, a, b, math.radians(tilt), dens))
    if half is None:
        raise ValueError("missing 'half_size = ...' header line")
    return PhantomSpec(tuple(ellipses), half)


def format_phantom(spec: PhantomSpec) -> str:
    lines = [f"half_size = {spec.half_size!r}", "# cx cy a b tilt_deg density"]
    for e in spec.ellipses:
        lines.append(f"{e.cx!r} {e.cy!r} {e.a!r} {e.b!r} {math.degrees(e.tilt)!r} {e.density!r}")
    return "\n".join(lines) + "\n"


def load_phantom(path: str | Path) -> PhantomSpec:
    return parse_phantom(Path(path).read_text())


def forbild_like() -> PhantomSpec:
    """Bundled approximate FORBILD-style head phantom, unit half-size."""
    text = resources.files("fmstct.data").joinpath("forbild_like.txt").read_text()
    return parse_phantom(text)


def disk(radius: float, density: float = 1.0, half_size: float | None = None) -> PhantomSpec:
    return PhantomSpec((Ellipse(0.0, 0.0, radius, radius, 0.0, density),),
                       radius if half_size is None else half_size)
