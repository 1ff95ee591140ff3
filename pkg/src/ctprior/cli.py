"""``ctprior`` command line.

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import config as cfgmod
from . import harness
from .io import GridFormatError
from .solvers import NumericalError

log = logging.getLogger("ctprior")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3


def _add_experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("config", nargs="?", help="experiment INI file (defaults apply when omitted)")
    p.add_argument("--phantom", help="phantom preset name")
    p.add_argument("--size", type=int, help="image side length in pixels")
    p.add_argument("--geometry", choices=("parallel", "fan"))
    p.add_argument("--angles", type=int, help="number of projection angles")
    p.add_argument("--noise", choices=("gaussian", "poisson"))
    p.add_argument("--sigma", type=float)
    p.add_argument("--counts", type=float, help="mean photon count per bin (poisson)")
    p.add_argument("--method", choices=cfgmod.METHODS)
    p.add_argument("--lam", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--codes", type=int, help="number of latent codes N")
    p.add_argument("--iterations", type=int)
    p.add_argument("--seeds", type=int, nargs="+")
    p.add_argument("--output", help=f"output directory (relative paths resolve under ${harness.OUTPUT_ROOT_ENV})")


def _experiment(args) -> cfgmod.ExperimentConfig:
    cfg = cfgmod.load(args.config) if args.config else cfgmod.ExperimentConfig()
    phantom = replace(cfg.phantom, **{k: v for k, v in (("name", args.phantom), ("size", args.size)) if v is not None})
    geometry = cfg.geometry
    noise, solver = cfg.noise, cfg.solver
    if args.geometry and args.geometry != geometry.kind:
        geometry = replace(geometry, kind=args.geometry)
        # switching geometry switches to that geometry's default noise model and weights
        if not args.config:
            fan = args.geometry == "fan"
            noise = replace(noise, kind="poisson" if fan else "gaussian")
            solver = replace(solver, fidelity="poisson" if fan else "l2", **cfgmod.desk_defaults(args.geometry))
    if args.angles is not None:
        geometry = replace(geometry, num_angles=args.angles)
    nkw = {k: v for k, v in (("kind", args.noise), ("sigma", args.sigma), ("mean_counts", args.counts)) if v is not None}
    if nkw:
        noise = cfgmod.NoiseSpec(**{**noise.__dict__, **nkw})
        if "kind" in nkw:
            solver = replace(solver, fidelity="poisson" if noise.kind == "poisson" else "l2")
    skw = {k: v for k, v in (("lam", args.lam), ("rho", args.rho), ("num_codes", args.codes),
                             ("iterations", args.iterations)) if v is not None}
    if skw:
        solver = replace(solver, **skw)
    return cfgmod.ExperimentConfig(
        phantom, geometry, noise, solver,
        method=args.method or cfg.method,
        seeds=tuple(args.seeds) if args.seeds else cfg.seeds,
        output=args.output or cfg.output,
    )


def _cmd_simulate(args):
    cfg = _experiment(args)
    out = harness.simulate(cfg)
    cfgmod.dump(cfg, out / "experiment.ini")
    print(f"wrote simulation to {out}")


def _cmd_reconstruct(args):
    cfg = _experiment(args)
    rows = harness.reconstruct(cfg, figures=not args.no_figures)
    for r in rows:
        print(f"{r['method']} seed {r['seed']}: PSNR {r['psnr']}  SSIM {r['ssim']}  "
              f"fidelity {r['final_fidelity']:.4g} (truth {r['truth_fidelity']:.4g})")


def _cmd_sweep(args):
    cfg = _experiment(args)
    if cfg.method != "mcdip-admm":
        raise cfgmod.ConfigError("sweep-codes needs method = mcdip-admm")
    table = harness.sweep_codes(cfg, tuple(args.code_counts), figures=not args.no_figures)
    print("N    final   best    gap")
    for r in table:
        print(f"{r['num_codes']:<4d} {r['mean_final_psnr']:6.2f}  {r['mean_best_psnr']:6.2f}  {r['mean_gap']:5.2f}  {r['label']}")


def _cmd_prior(args):
    out = args.output or "prior"
    root = os.environ.get(harness.OUTPUT_ROOT_ENV)
    path = Path(out) if (Path(out).is_absolute() or not root) else Path(root) / out
    harness.prior_sample(path, size=args.size, alpha=args.alpha, seed=args.seed,
                         mcmc_steps=args.mcmc_steps, figures=not args.no_figures)
    print(f"wrote prior samples to {path}")


def _cmd_metrics(args):
    m = harness.compare_images(args.estimate, args.reference)
    print(f"psnr {m['psnr']:.4f}")
    print(f"ssim {m['ssim']:.6f}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ctprior", description="CT reconstruction with generator priors")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="phantom, clean and noisy sinograms")
    _add_experiment_flags(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("reconstruct", help="run the configured method for every seed")
    _add_experiment_flags(p)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=_cmd_reconstruct)

    p = sub.add_parser("sweep-codes", help="MCDIP-ADMM over several code counts")
    _add_experiment_flags(p)
    p.add_argument("--code-counts", type=int, nargs="+", default=list(harness.DEFAULT_CODE_COUNTS))
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("prior-sample", help="samples from the classical priors and a random generator")
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mcmc-steps", type=int, default=10_000)
    p.add_argument("--output")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=_cmd_prior)

    p = sub.add_parser("metrics", help="PSNR and SSIM of an estimate against a reference (grid or PNG files)")
    p.add_argument("estimate")
    p.add_argument("reference")
    p.set_defaults(func=_cmd_metrics)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except GridFormatError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (cfgmod.ConfigError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
