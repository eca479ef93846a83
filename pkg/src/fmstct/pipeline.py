"""Experiment configuration and the phantom -> project -> weights -> recon -> metrics chain."""

from __future__ import annotations

import dataclasses
import logging
import math
from pathlib import Path

import numpy as np

from .geometry import ScanConfig, fov_magnification, fov_radius, raw_delta_theta, standard_fov_radius
from .io import read_array, write_array, write_pgm
from .metrics import edge_annulus_error, profile, psnr, ssim, write_profile_csv
from .phantom import ImageGrid, PhantomSpec, forbild_like, format_phantom, load_phantom, rasterize
from .projector import Sinogram, config_echo, forward_project
from .recon import ALGORITHMS, reconstruct
from .redundancy import WeightMap, build_weight_map

log = logging.getLogger(__name__)

TRUTH_SUPERSAMPLE = 4


class ConfigError(ValueError):
    """Invalid or missing configuration entry; ``key`` names the culprit."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    l: float = 13.75
    h: float = 106.5
    lambda_m: float = 20.0
    N: int = 251
    J: int = 1024
    pixel_pitch: float = 0.127
    phantom: str = "forbild_like"
    grid: int = 256
    algorithm: str = "fs-bpf"
    phi_deg: float = 135.0
    out: str = "out"
    seed: int = 0
    save_partials: bool = False
    window: tuple[float, float] = (0.0, 3.0)
    margin: float = 0.1
    sweep_lambda_m: tuple[float, ...] = ()
    profile_row: int | None = None
    profile_cols: tuple[int, int] | None = None
    base_dir: str = "."

    @property
    def phi(self) -> float:
        return math.radians(self.phi_deg)

    @property
    def out_dir(self) -> Path:
        return Path(self.out)

    def scan(self, lambda_m: float | None = None) -> ScanConfig:
        try:
            return ScanConfig(self.l, self.h, self.lambda_m if lambda_m is None else lambda_m,
                              self.N, self.J, self.pixel_pitch)
        except ValueError as exc:
            raise ConfigError("lambda_m", str(exc)) from exc

    def phantom_spec(self) -> PhantomSpec:
        if self.phantom == "forbild_like":
            return forbild_like()
        path = Path(self.phantom)
        if not path.is_absolute():
            path = Path(self.base_dir) / path
        if not path.exists():
            raise ConfigError("phantom", f"file not found: {path}")
        try:
            return load_phantom(path)
        except ValueError as exc:
            raise ConfigError("phantom", str(exc)) from exc


def _as_bool(key, v):
    s = v.lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(key, f"expected a boolean, got {v!r}")


def _as_pair(key, v, conv):
    parts = v.replace(",", ":").split(":")
    if len(parts) != 2:
        raise ConfigError(key, f"expected lo:hi, got {v!r}")
    try:
        return conv(parts[0]), conv(parts[1])
    except ValueError as exc:
        raise ConfigError(key, str(exc)) from exc


_PARSERS = {
    "l": float, "h": float, "lambda_m": float, "N": int, "J": int, "pixel_pitch": float,
    "phantom": str, "grid": int, "algorithm": str, "phi_deg": float, "out": str,
    "seed": int, "save_partials": _as_bool, "margin": float,
    "window": lambda k, v: _as_pair(k, v, float),
    "profile_cols": lambda k, v: _as_pair(k, v, int),
    "profile_row": int,
    "sweep_lambda_m": lambda k, v: tuple(float(x) for x in v.replace(",", " ").split()),
}
_KEYED = {"save_partials", "window", "profile_cols", "sweep_lambda_m"}


def parse_config(text: str, base_dir: str = ".", **overrides) -> ExperimentConfig:
    """Parse flat ``key = value`` text (``#`` starts a comment)."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = (s.strip() for s in line.partition("="))
        if not sep or not key:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {raw!r}")
        if key not in _PARSERS:
            raise ConfigError(key, "unknown configuration key")
        conv = _PARSERS[key]
        try:
            values[key] = conv(key, val) if key in _KEYED else conv(val)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(key, f"cannot parse {val!r}: {exc}") from exc
    values.update({k: v for k, v in overrides.items() if v is not None})
    cfg = ExperimentConfig(base_dir=str(base_dir), **values)
    validate(cfg)
    return cfg


def load_config(path, **overrides) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError("config", f"file not found: {path}")
    return parse_config(path.read_text(), base_dir=str(path.parent), **overrides)


def validate(cfg: ExperimentConfig) -> None:
    if cfg.algorithm not in ALGORITHMS:
        raise ConfigError("algorithm", f"{cfg.algorithm!r} is not one of {', '.join(ALGORITHMS)}")
    if cfg.grid < 16:
        raise ConfigError("grid", "grid must be at least 16 pixels")
    if not 0 < cfg.phi_deg < 180 or cfg.phi_deg == 90:
        raise ConfigError("phi_deg", "W-Line angle must lie in (0, 180) degrees, excluding 90")
    if cfg.window[1] <= cfg.window[0]:
        raise ConfigError("window", "window must satisfy lo < hi")
    if not 0 <= cfg.margin < 1:
        raise ConfigError("margin", "margin must lie in [0, 1)")
    for lm in (cfg.lambda_m, *cfg.sweep_lambda_m):
        cfg.scan(lm)


def geometry_summary(scan: ScanConfig) -> dict:
    return {
        "fov_radius_mm": fov_radius(scan),
        "standard_fov_radius_mm": standard_fov_radius(scan),
        "fov_magnification": fov_magnification(scan),
        "T": scan.T,
        "delta_theta_deg": math.degrees(scan.delta_theta),
        "delta_theta_raw_deg": math.degrees(raw_delta_theta(scan.h, scan.u_m)),
    }


# ----------------------------------------------------------------------------
# image containers
# ----------------------------------------------------------------------------

def save_image(path, img: ImageGrid, meta: dict | None = None) -> None:
    write_array(path, "image", img.values, {"pixel_size": img.pixel_size, **(meta or {})},
                dims="y x")


def load_image(path) -> ImageGrid:
    data, h = read_array(path, "image")
    return ImageGrid(data.shape[1], data.shape[0], float(h["pixel_size"]), data)


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise ConfigError("out", f"missing {what} file {path}; run the earlier stage first")
    return path


# ----------------------------------------------------------------------------
# stages
# ----------------------------------------------------------------------------

@dataclasses.dataclass
class Stage:
    cfg: ExperimentConfig
    scan: ScanConfig
    out: Path

    @property
    def R(self) -> float:
        return fov_radius(self.scan)

    @property
    def grid(self) -> ImageGrid:
        return ImageGrid.covering(self.R, self.cfg.grid)

    def echo(self) -> dict:
        c = self.cfg
        return {**config_echo(self.scan), "phantom": c.phantom, "grid": c.grid,
                "algorithm": c.algorithm, "phi_deg": c.phi_deg, "margin": c.margin,
                "seed": c.seed}

    def phantom(self) -> PhantomSpec:
        return self.cfg.phantom_spec().scaled_to(self.R)

    def run_phantom(self) -> ImageGrid:
        spec = self.phantom()
        truth = rasterize(spec, self.grid, TRUTH_SUPERSAMPLE)
        (self.out / "phantom.txt").write_text(format_phantom(spec))
        save_image(self.out / "truth.bin", truth, self.echo())
        write_pgm(self.out / "truth.pgm", truth.values, self.cfg.window)
        return truth

    def run_project(self) -> Sinogram:
        sino = forward_project(self.phantom(), self.scan)
        sino.save(self.out / "sinogram.bin")
        return sino

    def run_weights(self) -> WeightMap:
        weights = build_weight_map(self.scan, self.cfg.phi)
        weights.save(self.out / "weights.bin")
        return weights

    def run_recon(self, sino: Sinogram | None = None,
                  weights: WeightMap | None = None) -> ImageGrid:
        if sino is None:
            sino = Sinogram.load(_require(self.out / "sinogram.bin", "sinogram"))
        if weights is None:
            weights = WeightMap.load(_require(self.out / "weights.bin", "weight map"))
        if sino.cfg != self.scan or weights.cfg != self.scan:
            raise ConfigError("out", "stored sinogram or weights were made with another geometry")
        rec = reconstruct(sino, weights, self.grid, self.cfg.algorithm, self.cfg.margin,
                          keep=self.cfg.save_partials)
        echo = self.echo()
        for k, d in enumerate(rec.dbps, 1):
            d.save(self.out / f"dbp_{k:02d}.bin", self.scan)
        for k, p in enumerate(rec.partials, 1):
            save_image(self.out / f"partial_{k:02d}.bin", p, {**echo, "frame": k})
        save_image(self.out / "recon.bin", rec.image, echo)
        write_pgm(self.out / "recon.pgm", rec.image.values, self.cfg.window)
        return rec.image

    def profile_spec(self) -> tuple[int, tuple[int, int]]:
        n = self.cfg.grid
        row = n // 2 if self.cfg.profile_row is None else self.cfg.profile_row
        cols = self.cfg.profile_cols or (0, min(100, n - 1))
        return row, cols

    def run_profile(self, recon: ImageGrid | None = None,
                    truth: ImageGrid | None = None) -> Path:
        recon = recon or load_image(_require(self.out / "recon.bin", "reconstruction"))
        truth = truth or load_image(_require(self.out / "truth.bin", "truth"))
        row, cols = self.profile_spec()
        try:
            r = profile(recon, row, cols)
            t = profile(truth, row, cols)
        except IndexError as exc:
            raise ConfigError("profile_cols", str(exc)) from exc
        path = self.out / "profile.csv"
        write_profile_csv(path, [(c, v, w) for (c, v), (_, w) in zip(r, t)],
                          header=("col", "recon", "truth"))
        return path

    def run_metrics(self, recon: ImageGrid | None = None,
                    truth: ImageGrid | None = None) -> dict:
        recon = recon or load_image(_require(self.out / "recon.bin", "reconstruction"))
        truth = truth or load_image(_require(self.out / "truth.bin", "truth"))
        if not recon.same_shape(truth):
            raise ConfigError("grid", "reconstruction and truth grids differ")
        mask = recon.disk_mask(self.R)
        rep = {
            "algorithm": self.cfg.algorithm,
            "lambda_m": self.scan.lambda_m,
            "N": self.scan.N,
            **geometry_summary(self.scan),
            "psnr_db": psnr(recon, truth, mask),
            "ssim": ssim(recon, truth),
            "edge_annulus_rms": edge_annulus_error(recon, truth, self.R),
            "max_in_fov": float(recon.values[mask].max()),
            "truth_max": float(truth.values[mask].max()),
        }
        write_report(self.out / "metrics.txt", rep)
        return rep


def write_report(path, rep: dict) -> None:
    lines = []
    for k, v in rep.items():
        lines.append(f"{k} = {v!r}" if isinstance(v, float) else f"{k} = {v}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_report(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        k, _, v = line.partition("=")
        out[k.strip()] = v.strip()
    return out


def stage(cfg: ExperimentConfig, lambda_m: float | None = None, out: Path | None = None) -> Stage:
    out = Path(out or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return Stage(cfg, cfg.scan(lambda_m), out)


def _stored(obj):
    """Round to the float32 payload precision so later stages see what the files hold."""
    if isinstance(obj, ImageGrid):
        return obj.like(obj.values.astype(np.float32).astype(np.float64))
    obj.data = obj.data.astype(np.float32).astype(np.float64)
    return obj


def run_single(st: Stage) -> dict:
    log.info("lambda_m=%g: phantom", st.scan.lambda_m)
    truth = _stored(st.run_phantom())
    log.info("lambda_m=%g: projecting %d segments", st.scan.lambda_m, st.scan.T)
    sino = _stored(st.run_project())
    log.info("lambda_m=%g: weights", st.scan.lambda_m)
    weights = _stored(st.run_weights())
    log.info("lambda_m=%g: %s reconstruction", st.scan.lambda_m, st.cfg.algorithm)
    recon = _stored(st.run_recon(sino, weights))
    st.run_profile(recon, truth)
    return st.run_metrics(recon, truth)


def run_pipeline(cfg: ExperimentConfig) -> list[dict]:
    """Run the full chain once, or once per ``sweep_lambda_m`` entry in subdirectories."""
    if not cfg.sweep_lambda_m:
        return [run_single(stage(cfg))]
    reports = []
    for lm in cfg.sweep_lambda_m:
        reports.append(run_single(stage(cfg, lm, cfg.out_dir / f"lambda_m_{lm:g}")))
    summary = {}
    for rep in reports:
        tag = f"lambda_m_{rep['lambda_m']:g}"
        for key in ("psnr_db", "ssim", "edge_annulus_rms", "fov_magnification"):
            summary[f"{tag}.{key}"] = rep[key]
    write_report(cfg.out_dir / "sweep.txt", summary)
    return reports
