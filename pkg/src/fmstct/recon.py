"""Reconstruction drivers: FD-BPF, FS-BPF and the FW-FBP baseline."""

from __future__ import annotations

import dataclasses

from .dbp import d_dbp, d_dbp_points, prepare, s_dbp, s_dbp_points
from .fbp import fw_fbp
from .geometry import fov_radius
from .hilbert import accumulate, invert_lines, line_plan
from .phantom import ImageGrid
from .projector import Sinogram
from .redundancy import WeightMap

ALGORITHMS = ("fd-bpf", "fs-bpf", "fw-fbp")


@dataclasses.dataclass
class Reconstruction:
    image: ImageGrid
    radius: float
    dbps: list = dataclasses.field(default_factory=list)
    partials: list = dataclasses.field(default_factory=list)

    @property
    def mask(self):
        return self.image.disk_mask(self.radius)


def bpf(sino: Sinogram, weights: WeightMap | None, grid: ImageGrid, kind: str,
        margin: float = 0.1, keep: bool = False) -> Reconstruction:
    """Backprojection filtration with D-DBP (``kind="d"``) or S-DBP (``kind="s"``).

    The DBP of every segment is evaluated directly at the Chebyshev nodes of
    its filtering lines, inverted, and the partial images are summed.  With
    ``keep`` the DBP images on ``grid`` and the partial images are returned too.
    """
    cfg = sino.cfg
    R = fov_radius(cfg)
    diffed = prepare(sino, weights, kind)
    at_points = d_dbp_points if kind == "d" else s_dbp_points
    on_grid = d_dbp if kind == "d" else s_dbp
    partials, dbps = [], []
    for frame in cfg.frames:
        plan = line_plan(cfg, frame.theta, R, grid.pixel_size, margin)
        xs, ys = plan.node_positions()
        partials.append(invert_lines(plan, at_points(diffed, frame, xs, ys), grid))
        if keep:
            dbps.append(on_grid(diffed, frame, grid, radius=R * (1 + margin)))
    image, _ = accumulate(partials, R)
    return Reconstruction(image, R, dbps, partials if keep else [])


def reconstruct(sino: Sinogram, weights: WeightMap | None, grid: ImageGrid,
                algorithm: str, margin: float = 0.1, keep: bool = False) -> Reconstruction:
    if algorithm == "fd-bpf":
        return bpf(sino, weights, grid, "d", margin, keep)
    if algorithm == "fs-bpf":
        return bpf(sino, weights, grid, "s", margin, keep)
    if algorithm == "fw-fbp":
        R = fov_radius(sino.cfg)
        return Reconstruction(fw_fbp(sino, weights, sino.cfg, grid, R * (1 + margin)), R)
    raise ValueError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")
