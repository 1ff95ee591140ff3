"""Experiment workflows behind the command line.

Directory layout under the experiment's output directory::

    simulate.json            realized SNR, count scale, truth fidelity per seed
    truth.grid / truth.png
    sino_clean.grid
    sino_s<seed>.grid        noisy data, one file per seed
    <method>/s<seed>/        final.grid, final.png, best.*, trace.csv
    <method>/summary.csv     one row per seed, "final (best)" columns
    <method>/psnr.png        PSNR traces of all seeds
    sweep/                   code-count sweep tables, mean traces, figures
    prior/                   prior samples
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import generator as gen
from . import io, report
from .config import ExperimentConfig
from .metrics import psnr, ssim
from .noise import NoiseSpec, apply_noise, realized_snr_db
from .phantoms import preset
from .priors import sample_l1, sample_truncated_gaussian, sample_tv_prior
from .solvers import DataTerm, RunTrace, TraceRecord, run_dip, run_mcdip_admm, run_pnp_dip
from .tomography import cgne, fbp, projector

__all__ = [
    "OUTPUT_ROOT_ENV",
    "output_dir",
    "simulate",
    "load_simulation",
    "reconstruct",
    "sweep_codes",
    "prior_sample",
    "compare_images",
    "DEFAULT_CODE_COUNTS",
]

OUTPUT_ROOT_ENV = "CTPRIOR_OUTPUT_ROOT"
DEFAULT_CODE_COUNTS = (1, 5, 10, 20, 30)
SUMMARY_FIELDS = (
    "method", "seed", "num_codes", "psnr", "ssim", "final_psnr", "best_psnr", "best_t",
    "final_ssim", "best_ssim", "final_fidelity", "truth_fidelity",
)


def output_dir(cfg: ExperimentConfig) -> Path:
    """``cfg.output``, relative to ``$CTPRIOR_OUTPUT_ROOT`` when that is set."""
    out = Path(cfg.output)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not out.is_absolute():
        out = Path(root) / out
    return out


def _noise_for(cfg: ExperimentConfig, seed: int) -> NoiseSpec:
    return replace(cfg.noise, seed=seed)


def _count_scale(cfg, clean):
    if cfg.noise.kind != "poisson":
        return 1.0
    m = float(np.mean(clean))
    if not m > 0:
        raise ValueError("poisson simulation needs a nonzero forward projection")
    return cfg.noise.mean_counts / m


def simulate(cfg: ExperimentConfig) -> Path:
    out = io.ensure_dir(output_dir(cfg))
    geom = cfg.build_geometry()
    truth = preset(cfg.phantom.name, cfg.phantom.size)
    clean = projector(geom).forward(truth)
    scale = _count_scale(cfg, clean)
    io.write_grid(out / "truth.grid", truth, geom.extent)
    io.write_png(out / "truth.png", truth, vmin=0.0, vmax=1.0)
    io.write_grid(out / "sino_clean.grid", clean, geom.extent)
    meta = {"count_scale": scale, "seeds": {}}
    for seed in cfg.seeds:
        y = apply_noise(scale * clean, _noise_for(cfg, seed))
        io.write_grid(out / f"sino_s{seed}.grid", y, geom.extent)
        io.write_png(out / f"sino_s{seed}.png", y)
        data = DataTerm(projector(geom), y, "poisson" if cfg.noise.kind == "poisson" else "l2", scale)
        meta["seeds"][str(seed)] = {
            "realized_snr_db": realized_snr_db(scale * clean, y),
            "truth_fidelity": data.value(truth),
        }
    (out / "simulate.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return out


def load_simulation(cfg: ExperimentConfig, seed: int):
    """``(truth, y, count_scale)`` written by :func:`simulate`."""
    out = output_dir(cfg)
    try:
        truth, _ = io.read_grid(out / "truth.grid")
        y, _ = io.read_grid(out / f"sino_s{seed}.grid")
        meta = json.loads((out / "simulate.json").read_text())
    except FileNotFoundError as exc:
        raise FileNotFoundError(f"missing simulation output ({exc.filename}); run 'simulate' first") from None
    return truth, y, float(meta["count_scale"])


def _single_shot(image, truth, data):
    p, s = psnr(image, truth), ssim(image, truth)
    trace = RunTrace()
    trace.add(TraceRecord(0, p, s, data.value(image), math.nan), image)
    trace.final_image = image
    return trace


def run_method(cfg: ExperimentConfig, seed: int, truth, y, scale) -> tuple[np.ndarray, RunTrace | None, DataTerm]:
    geom = cfg.build_geometry()
    kind = "poisson" if cfg.solver.fidelity == "poisson" else "l2"
    data = DataTerm(projector(geom), y, kind, scale)
    solver = replace(cfg.solver, seed=seed)
    if cfg.method == "fbp":
        return fbp(y / scale, geom), None, data
    if cfg.method == "cgne":
        return cgne(y / scale, geom, iterations=10), None, data
    fn = {"dip": run_dip, "pnp-dip": run_pnp_dip, "mcdip-admm": run_mcdip_admm}[cfg.method]
    image, trace = fn(data, solver, truth=truth)
    return image, trace, data


def _summary_row(cfg, seed, trace, data, truth):
    fin, best = trace.final, trace.best
    n = cfg.solver.num_codes if cfg.method == "mcdip-admm" else 1
    return {
        "method": cfg.method,
        "seed": seed,
        "num_codes": n,
        "psnr": f"{fin.psnr:.2f} ({best.psnr:.2f})",
        "ssim": f"{fin.ssim:.4f} ({best.ssim:.4f})",
        "final_psnr": fin.psnr,
        "best_psnr": best.psnr,
        "best_t": trace.best_t,
        "final_ssim": fin.ssim,
        "best_ssim": best.ssim,
        "final_fidelity": fin.fidelity,
        "truth_fidelity": data.value(truth),
    }


def reconstruct(cfg: ExperimentConfig, figures: bool = True) -> list[dict]:
    """Run ``cfg.method`` for every seed; returns the summary rows."""
    out = output_dir(cfg)
    mdir = io.ensure_dir(out / cfg.method)
    rows, curves = [], {}
    for seed in cfg.seeds:
        truth, y, scale = load_simulation(cfg, seed)
        image, trace, data = run_method(cfg, seed, truth, y, scale)
        sdir = io.ensure_dir(mdir / f"s{seed}")
        single = trace is None
        if single:
            trace = _single_shot(image, truth, data)
        else:
            io.write_csv(sdir / "trace.csv", trace.rows(), TraceRecord.FIELDS)
            io.write_grid(sdir / "best.grid", trace.best_image)
            io.write_png(sdir / "best.png", trace.best_image, vmin=0.0, vmax=1.0)
            curves[f"seed {seed}"] = (trace.column("t"), trace.column("psnr"))
        io.write_grid(sdir / "final.grid", image)
        io.write_png(sdir / "final.png", image, vmin=0.0, vmax=1.0)
        rows.append(_summary_row(cfg, seed, trace, data, truth))
    io.write_csv(mdir / "summary.csv", rows, SUMMARY_FIELDS)
    if figures and curves:
        report.plot_traces(curves, mdir / "psnr.png", title=cfg.method)
    return rows


def sweep_codes(cfg: ExperimentConfig, code_counts=DEFAULT_CODE_COUNTS, figures: bool = True) -> list[dict]:
    """MCDIP-ADMM for every ``N`` in ``code_counts`` and every seed.

    Writes ``sweep/runs.csv`` (one row per run), ``sweep/table.csv`` (means
    over seeds) and ``sweep/trace_N<n>.csv`` (mean PSNR trace over seeds).
    """
    if cfg.method != "mcdip-admm":
        raise ValueError("sweep-codes needs method = mcdip-admm")
    out = output_dir(cfg)
    sdir = io.ensure_dir(out / "sweep")
    runs, table, curves = [], [], {}
    for n in code_counts:
        ncfg = replace(cfg, solver=replace(cfg.solver, num_codes=int(n)))
        finals, bests, traces = [], [], []
        for seed in cfg.seeds:
            truth, y, scale = load_simulation(ncfg, seed)
            _, trace, data = run_method(ncfg, seed, truth, y, scale)
            row = _summary_row(ncfg, seed, trace, data, truth)
            row["label"] = "PnP-DIP equivalent" if n == 1 else ""
            runs.append(row)
            finals.append(trace.final.psnr)
            bests.append(trace.best.psnr)
            traces.append(trace)
        t = traces[0].column("t")
        mean_psnr = np.mean([tr.column("psnr") for tr in traces], axis=0)
        io.write_csv(sdir / f"trace_N{n}.csv",
                     [{"t": int(a), "mean_psnr": float(b)} for a, b in zip(t, mean_psnr)], ("t", "mean_psnr"))
        curves[f"N = {n}"] = (t, mean_psnr)
        table.append({
            "num_codes": n,
            "label": "PnP-DIP equivalent" if n == 1 else "",
            "mean_final_psnr": float(np.mean(finals)),
            "mean_best_psnr": float(np.mean(bests)),
            "mean_gap": float(np.mean(np.subtract(bests, finals))),
        })
    io.write_csv(sdir / "runs.csv", runs, SUMMARY_FIELDS + ("label",))
    io.write_csv(sdir / "table.csv", table, ("num_codes", "label", "mean_final_psnr", "mean_best_psnr", "mean_gap"))
    if figures:
        report.plot_traces(curves, sdir / "psnr_vs_iter.png", ylabel="mean PSNR (dB)")
        report.plot_code_sweep([r["num_codes"] for r in table], [r["mean_final_psnr"] for r in table],
                               [r["mean_best_psnr"] for r in table], sdir / "psnr_vs_codes.png")
    return table


def prior_sample(out: str | Path, size: int = 64, alpha: float = 1.0, seed: int = 0,
                 mcmc_steps: int = 10_000, figures: bool = True) -> dict[str, np.ndarray]:
    """One sample each from the truncated Gaussian, l1 and TV priors and from
    a randomly initialised generator fed a Gaussian latent code."""
    out = io.ensure_dir(Path(out))
    gcfg = gen.GeneratorConfig.for_image(size)
    params = gen.init_params(gcfg, seed)
    z = gen.sample_codes(gcfg, 1, seed)
    samples = {
        "gaussian": sample_truncated_gaussian(alpha, (size, size), seed),
        "l1": sample_l1(alpha, (size, size), seed),
        "tv": sample_tv_prior(alpha, (size, size), seed, mcmc_steps=mcmc_steps),
        "generator": gen.image_of(gen.dip_forward(z, params)),
    }
    for name, img in samples.items():
        io.write_grid(out / f"{name}.grid", img)
        io.write_png(out / f"{name}.png", img)
    if figures:
        titles = ["truncated Gaussian", "l1", "TV", "random generator"]
        report.plot_images(list(samples.values()), titles, out / "panel.png")
    return samples


def _read_image(path) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() in (".png", ".pgm"):
        from PIL import Image

        with Image.open(path) as im:
            return np.asarray(im, dtype=float)
    return io.read_grid(path)[0]


def compare_images(estimate, reference) -> dict[str, float]:
    xhat, x = _read_image(estimate), _read_image(reference)
    return {"psnr": psnr(xhat, x), "ssim": ssim(xhat, x)}
