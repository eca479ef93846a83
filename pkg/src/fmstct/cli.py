"""Command-line driver: ``fmstct <stage> --config FILE [flags]``."""

from __future__ import annotations

import argparse
import logging
import sys

from .geometry import GeometryError
from .io import ContainerError
from .pipeline import ConfigError, geometry_summary, load_config, run_pipeline, stage

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

STAGES = ("phantom", "project", "weights", "recon", "metrics", "profile", "pipeline")


def _window(text: str):
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo:hi, got {text!r}") from None
    return lo, hi


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fmstct", description=__doc__)
    p.add_argument("stage", choices=STAGES)
    p.add_argument("--config", required=True, help="flat key = value experiment file")
    p.add_argument("--algo", help="fd-bpf, fs-bpf or fw-fbp")
    p.add_argument("--phi-deg", type=float, help="W-Line angle in degrees")
    p.add_argument("--out", help="output directory")
    p.add_argument("--grid", type=int, help="reconstruction grid size (pixels per side)")
    p.add_argument("--window", type=_window, help="PGM display window lo:hi")
    p.add_argument("--dry-run", action="store_true", help="print derived geometry and exit")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _print(rep: dict) -> None:
    for k, v in rep.items():
        print(f"{k} = {v!r}" if isinstance(v, float) else f"{k} = {v}")


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, algorithm=args.algo, phi_deg=args.phi_deg,
                          out=args.out, grid=args.grid, window=args.window)
        if args.dry_run:
            for lm in cfg.sweep_lambda_m or (cfg.lambda_m,):
                print(f"[lambda_m = {lm:g}]")
                _print(geometry_summary(cfg.scan(lm)))
            return EXIT_OK
        if args.stage == "pipeline":
            for rep in run_pipeline(cfg):
                _print(rep)
            return EXIT_OK
        st = stage(cfg)
        if args.stage == "phantom":
            st.run_phantom()
        elif args.stage == "project":
            st.run_project()
        elif args.stage == "weights":
            st.run_weights()
        elif args.stage == "recon":
            st.run_recon()
        elif args.stage == "profile":
            print(st.run_profile())
        elif args.stage == "metrics":
            _print(st.run_metrics())
        return EXIT_OK
    except (ConfigError, ContainerError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GeometryError, FloatingPointError, ArithmeticError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
