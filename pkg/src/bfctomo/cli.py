"""Command-line front end.

Subcommands: ``simulate | infer | design | theory | calibrate``.  Every
command resolves its parameters (preset < config file < flags), validates
dimensions before doing any heavy work, writes its data products (CSV/JSON)
together with rendered PNG figures, and finishes with a manifest recording
the fully resolved parameters.  Feeding a manifest back via ``--config``
reproduces the run.

Exit codes: 0 success, 2 usage/parse error, 3 I/O failure, 4 convergence
budget exhausted (outputs still written), 5 calibration fit failure.
"""

from __future__ import annotations

import argparse
import csv
import io as _stringio
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, io, plots
from .calibration import FREQUENCY_SWEEP, PHASE_SWEEP, fit_correlation, integrated_correlation
from .design import DesignStudy, design_histogram
from .errors import FitDivergedError, TomographyError
from .inference import (
    ChainConfig,
    FluxModel,
    bayes_estimates,
    default_K0,
    save_checkpoint,
    sequential_fidelity_schedule,
)
from .measurement import SettingPlan, random_settings
from .simulate import CoincidenceDataset, car_of_dataset, simulate_counts
from .states import (
    DispersionConfig,
    FrequencyGrid,
    dispersion_phases,
    lambda_for_car,
    car_for_lambda,
    maximally_entangled,
    white_noise_fidelity,
    white_noise_log_negativity,
    white_noise_state,
)

OUTDIR_ENV = "BFCTOMO_OUTDIR"

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_BUDGET = 4
EXIT_FIT = 5

PRESETS = {
    "ppln": {
        "d": 5, "B": 3, "R_tot": 21, "delta_max": 2.5, "K": 2e4, "seed": 7,
        "model": "poisson", "car": 90.0, "phases": "dispersion",
        "beta2": 2.06e-2, "fiber_length": 20.0, "include_offset": True,
        "delta_omega": 2.0 * math.pi * 40e9,
    },
    "mrr": {
        "d": 8, "B": 0, "R_tot": 30, "delta_max": 3.4, "K": 2e4, "seed": 7,
        "model": "poisson", "car": 23.5, "phases": "uniform",
        "delta_omega": 2.0 * math.pi * 40.5e9,
    },
}

_SIMULATE_DEFAULTS = {
    "d": 4, "B": 0, "R_tot": 12, "delta_max": 4.0, "K": 1e4, "seed": 0,
    "model": "poisson", "car": 50.0, "lam": None, "phases": "uniform",
    "beta2": 2.06e-2, "fiber_length": 20.0, "include_offset": True,
    "delta_omega": 2.0 * math.pi * 40e9, "exposure": None, "rho_file": None,
}


def _outdir(args) -> Path:
    out = args.out or os.environ.get(OUTDIR_ENV) or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _resolve_simulate_config(args) -> dict:
    cfg = dict(_SIMULATE_DEFAULTS)
    if args.preset:
        cfg.update(PRESETS[args.preset])
    if args.config:
        file_cfg = io.load_config(args.config)
        unknown = set(file_cfg) - set(_SIMULATE_DEFAULTS)
        if unknown:
            raise TomographyError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(file_cfg)
    for key in _SIMULATE_DEFAULTS:
        flag = getattr(args, key, None)
        if flag is not None:
            cfg[key] = flag
    return cfg


def _ideal_state(cfg: dict, grid: FrequencyGrid):
    if cfg["phases"] == "uniform":
        alphas = np.zeros(grid.d)
    elif cfg["phases"] == "dispersion":
        disp = DispersionConfig(
            beta2=float(cfg["beta2"]),
            length=float(cfg["fiber_length"]),
            include_offset=bool(cfg["include_offset"]),
        )
        alphas = dispersion_phases(grid, disp)
    else:
        alphas = np.asarray(cfg["phases"], dtype=float)
    return maximally_entangled(grid, alphas)


def cmd_simulate(args) -> int:
    t0 = time.perf_counter()
    cfg = _resolve_simulate_config(args)
    out = _outdir(args)
    d = int(cfg["d"])
    grid = FrequencyGrid(d=d, B=int(cfg["B"]), delta_omega=float(cfg["delta_omega"]))

    if cfg["rho_file"]:
        rho_true = io.read_density(cfg["rho_file"])
    else:
        lam = cfg["lam"]
        if lam is None:
            lam = lambda_for_car(float(cfg["car"]), d)
        psi = _ideal_state(cfg, grid)
        rho_true = white_noise_state(psi, float(lam))
        cfg["lam"] = float(lam)

    plan = random_settings(d, int(cfg["R_tot"]), float(cfg["delta_max"]), int(cfg["seed"]))
    data = simulate_counts(
        rho_true, plan, float(cfg["K"]), model=cfg["model"], seed=int(cfg["seed"]),
        exposure=cfg["exposure"],
    )

    settings_path = out / "settings.json"
    counts_path = out / "counts.csv"
    truth_path = out / "ground_truth.json"
    jsi_path = out / "jsi.png"
    io.write_plan(settings_path, plan)
    io.write_counts(counts_path, data)
    io.write_density(truth_path, rho_true)
    plots.save_jsi(jsi_path, data.counts[0], title="unmodulated joint spectrum (r = 1)")

    car = car_of_dataset(data)
    print(f"simulate: wrote {counts_path} (R={len(plan)}, d={d}, "
          f"CAR range [{car.min:.1f}, {car.max:.1f}])")
    io.write_manifest(
        out / "manifest_simulate.json", "simulate", cfg,
        inputs=[p for p in [args.config, cfg["rho_file"]] if p],
        outputs=[settings_path, counts_path, truth_path, jsi_path],
        duration_s=time.perf_counter() - t0,
    )
    return EXIT_OK


def _truncate_first_r(plan: SettingPlan, data: CoincidenceDataset, first_r: int):
    if not (1 <= first_r <= len(plan)):
        raise TomographyError(
            f"--first-R must be in 1..{len(plan)}, got {first_r}"
        )
    plan_r = SettingPlan(
        d=plan.d, settings=plan.settings[:first_r], delta_max=plan.delta_max, seed=plan.seed
    )
    data_r = CoincidenceDataset(
        counts=data.counts[:first_r], exposure=data.exposure[:first_r], seed=data.seed
    )
    return plan_r, data_r


def cmd_infer(args) -> int:
    t0 = time.perf_counter()
    out = _outdir(args)
    plan = io.read_plan(args.settings)
    data = io.read_counts(args.counts)
    if data.d != plan.d or data.R_tot != len(plan):
        raise TomographyError(
            f"counts shape (R={data.R_tot}, d={data.d}) does not match plan "
            f"(R={len(plan)}, d={plan.d})"
        )
    if args.first_R is not None:
        plan, data = _truncate_first_r(plan, data, args.first_R)
    d = plan.d

    grid = FrequencyGrid(d=d, B=args.B, delta_omega=args.delta_omega)
    if args.ideal == "uniform":
        psi = maximally_entangled(grid, np.zeros(d))
    else:
        disp = DispersionConfig(beta2=args.beta2, length=args.fiber_length)
        psi = maximally_entangled(grid, dispersion_phases(grid, disp))

    k0 = args.K0 if args.K0 is not None else default_K0(data)
    flux = FluxModel(K0=float(k0), sigma=args.sigma)
    base_cfg = ChainConfig(S=args.samples, beta=args.beta, burn_in=args.burn_in, seed=args.seed)

    seq = sequential_fidelity_schedule(
        data, plan, flux, base_cfg, threshold=args.threshold, max_n=args.max_n
    )
    pairs = tuple(
        (rec.n, rec.fidelity_to_previous) for rec in seq.schedule if rec.n > 0
    )
    summary = bayes_estimates(
        seq.result, psi, d, flux=flux,
        acceptance_rate=seq.result.acceptance_rate, sequential_fidelities=pairs,
    )

    summary_path = out / "summary.json"
    rho_path = out / "rho.json"
    seq_path = out / "sequential.csv"
    ckpt_path = out / "chain_checkpoint.npz"
    rho_png = out / "rho.png"
    seq_png = out / "sequential.png"

    io.write_density(rho_path, summary.rho_mean)
    io.write_json(summary_path, {
        "d": d,
        "R_used": len(plan),
        "K0": float(k0),
        "fidelity_mean": summary.fidelity_mean,
        "fidelity_std": summary.fidelity_std,
        "logneg_mean": summary.logneg_mean,
        "logneg_std": summary.logneg_std,
        "K_mean": summary.K_mean,
        "K_std": summary.K_std,
        "acceptance_rate": summary.acceptance_rate,
        "beta": seq.result.beta,
        "n_stop": seq.n_stop,
        "converged": seq.converged,
        "sequential_fidelities": [[n, f] for n, f in pairs],
    })
    buf = _stringio.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["n", "T", "fidelity_to_previous", "acceptance_rate", "beta"])
    for rec in seq.schedule:
        writer.writerow([rec.n, rec.T, repr(rec.fidelity_to_previous),
                         repr(rec.acceptance_rate), repr(rec.beta)])
    io.atomic_write_text(seq_path, buf.getvalue())
    save_checkpoint(seq.result, ckpt_path)
    plots.save_density(rho_png, summary.rho_mean, title="posterior mean")
    plots.save_sequential(seq_png, seq.schedule)

    print(f"infer: F = {summary.fidelity_mean:.4f} +/- {summary.fidelity_std:.4f}, "
          f"E = {summary.logneg_mean:.3f} +/- {summary.logneg_std:.3f} ebits, "
          f"n_stop = {seq.n_stop}, converged = {seq.converged}")
    io.write_manifest(
        out / "manifest_infer.json", "infer",
        {
            "settings": str(args.settings), "counts": str(args.counts),
            "ideal": args.ideal, "B": args.B, "beta2": args.beta2,
            "fiber_length": args.fiber_length, "delta_omega": args.delta_omega,
            "K0": args.K0, "sigma": args.sigma, "samples": args.samples,
            "beta": args.beta, "burn_in": args.burn_in, "seed": args.seed,
            "threshold": args.threshold, "max_n": args.max_n, "first_R": args.first_R,
        },
        inputs=[args.settings, args.counts],
        outputs=[summary_path, rho_path, seq_path, ckpt_path, rho_png, seq_png],
        duration_s=time.perf_counter() - t0,
    )
    return EXIT_OK if seq.converged else EXIT_BUDGET


def cmd_design(args) -> int:
    t0 = time.perf_counter()
    out = _outdir(args)
    histograms = []
    outputs = []
    summary = {}
    for dmax in args.delta_max:
        study = DesignStudy(d=args.d, delta_max=dmax, R=args.R, trials=args.trials,
                            seed=args.seed)
        hist = design_histogram(study)
        histograms.append(hist)
        csv_path = out / f"design_hist_dmax{dmax:g}.csv"
        io.write_histogram(csv_path, hist.bin_edges, hist.counts, {
            "d": args.d, "R": study.settings_per_trial, "delta_max": dmax,
            "trials": args.trials, "seed": args.seed,
        })
        outputs.append(csv_path)
        summary[f"{dmax:g}"] = {
            "median_singular_value": hist.median,
            "tail_fraction_below_1e-2": hist.tail_fraction,
        }
        print(f"design: delta_max={dmax:g} median s = {hist.median:.4f}, "
              f"tail(<1e-2) = {hist.tail_fraction:.4f}")
    summary_path = out / "design_summary.json"
    png_path = out / "design_hist.png"
    io.write_json(summary_path, summary)
    plots.save_design_histograms(png_path, histograms)
    io.write_manifest(
        out / "manifest_design.json", "design",
        {"d": args.d, "R": args.R, "delta_max": list(args.delta_max),
         "trials": args.trials, "seed": args.seed},
        inputs=[], outputs=outputs + [summary_path, png_path],
        duration_s=time.perf_counter() - t0,
    )
    return EXIT_OK


def cmd_theory(args) -> int:
    t0 = time.perf_counter()
    out = _outdir(args)
    if (args.car is None) == (args.lam is None):
        raise TomographyError("pass exactly one of --car or --lam")
    rows = []
    for d in range(args.d_min, args.d_max + 1):
        lam = lambda_for_car(args.car, d) if args.car is not None else args.lam
        rows.append({
            "d": d,
            "lam": lam,
            "CAR": car_for_lambda(lam, d),
            "F": white_noise_fidelity(lam, d),
            "E": white_noise_log_negativity(lam, d),
        })
    table_path = out / "theory.csv"
    buf = _stringio.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["d", "lambda", "CAR", "F", "E"])
    for row in rows:
        writer.writerow([row["d"], repr(row["lam"]), repr(row["CAR"]),
                         repr(row["F"]), repr(row["E"])])
    io.atomic_write_text(table_path, buf.getvalue())
    png_path = out / "theory.png"
    plots.save_theory_table(png_path, rows)
    for row in rows:
        print(f"theory: d={row['d']} lambda={row['lam']:.6f} "
              f"F={row['F']:.4f} E={row['E']:.4f}")
    io.write_manifest(
        out / "manifest_theory.json", "theory",
        {"car": args.car, "lam": args.lam, "d_min": args.d_min, "d_max": args.d_max},
        inputs=[], outputs=[table_path, png_path],
        duration_s=time.perf_counter() - t0,
    )
    return EXIT_OK


def cmd_calibrate(args) -> int:
    t0 = time.perf_counter()
    out = _outdir(args)
    samples, mode = io.read_sweep(args.data)
    if args.mode is not None:
        mode = args.mode
    fit = fit_correlation(samples, mode)

    result = {
        "mode": mode,
        "free_parameters": list(fit.free),
        "gamma": fit.params.gamma,
        "phi0": fit.params.phi0,
        "scale": fit.params.scale,
        "offset": fit.params.offset,
        "stderr": fit.stderr,
        "residual_sum": fit.residual_sum,
    }
    if fit.omega_fsr is not None:
        result["omega_fsr"] = fit.omega_fsr
        result["omega_fsr_hz"] = fit.omega_fsr / (2.0 * math.pi)
        result["gamma_hz"] = fit.params.gamma / (2.0 * math.pi)

    fit_path = out / "calibration.json"
    png_path = out / "calibration.png"
    io.write_json(fit_path, result)

    x = samples[:, 0]
    xs = np.linspace(x.min(), x.max(), 400)
    if mode == PHASE_SWEEP:
        model = fit.params.offset + fit.params.scale * (1.0 - np.cos(xs + fit.params.phi0))
        xlabel = "applied joint phase (rad)"
    else:
        from dataclasses import replace as _replace
        model = np.array([
            integrated_correlation(_replace(fit.params, detune=fit.omega_fsr - w))
            for w in xs
        ])
        xlabel = "drive frequency (rad/s)"
    plots.save_calibration(png_path, x, samples[:, 1], xs, model, xlabel)

    line = ", ".join(f"{k}={v:.4g}" for k, v in fit.stderr.items())
    print(f"calibrate[{mode}]: residual_sum={fit.residual_sum:.4g}, stderr: {line}")
    io.write_manifest(
        out / "manifest_calibrate.json", "calibrate",
        {"data": str(args.data), "mode": mode},
        inputs=[args.data], outputs=[fit_path, png_path],
        duration_s=time.perf_counter() - t0,
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bfctomo",
        description="Randomized electro-optic tomography of frequency-bin entangled photon pairs",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate a synthetic coincidence dataset")
    sim.add_argument("--config", help="JSON config (a manifest is accepted)")
    sim.add_argument("--preset", choices=sorted(PRESETS), help="parameter preset")
    sim.add_argument("--out", help=f"output directory (default ${OUTDIR_ENV} or cwd)")
    sim.add_argument("--d", type=int)
    sim.add_argument("--B", type=int)
    sim.add_argument("--R-tot", dest="R_tot", type=int)
    sim.add_argument("--delta-max", dest="delta_max", type=float)
    sim.add_argument("--K", type=float)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--model", choices=["poisson", "multinomial"])
    sim.add_argument("--car", type=float)
    sim.add_argument("--lam", type=float)
    sim.add_argument("--phases", choices=["uniform", "dispersion"])
    sim.add_argument("--beta2", type=float)
    sim.add_argument("--fiber-length", dest="fiber_length", type=float)
    sim.add_argument("--delta-omega", dest="delta_omega", type=float)
    sim.add_argument("--rho-file", dest="rho_file")
    sim.set_defaults(func=cmd_simulate)

    inf = sub.add_parser("infer", help="reconstruct the state from a dataset")
    inf.add_argument("--settings", required=True)
    inf.add_argument("--counts", required=True)
    inf.add_argument("--out", help=f"output directory (default ${OUTDIR_ENV} or cwd)")
    inf.add_argument("--ideal", choices=["uniform", "dispersion"], default="uniform")
    inf.add_argument("--B", type=int, default=0)
    inf.add_argument("--beta2", type=float, default=2.06e-2)
    inf.add_argument("--fiber-length", dest="fiber_length", type=float, default=20.0)
    inf.add_argument("--delta-omega", dest="delta_omega", type=float,
                     default=2.0 * math.pi * 40e9)
    inf.add_argument("--K0", type=float, help="flux prior center (default: JSI total)")
    inf.add_argument("--sigma", type=float, default=0.1)
    inf.add_argument("--samples", type=int, default=1024, help="retained samples S")
    inf.add_argument("--beta", type=float, default=0.2, help="initial step size")
    inf.add_argument("--burn-in", dest="burn_in", type=int, default=None)
    inf.add_argument("--seed", type=int, default=0)
    inf.add_argument("--threshold", type=float, default=0.99)
    inf.add_argument("--max-n", dest="max_n", type=int, default=8)
    inf.add_argument("--first-R", dest="first_R", type=int,
                     help="use only the first R settings")
    inf.set_defaults(func=cmd_infer)

    des = sub.add_parser("design", help="singular-value study of random measurement maps")
    des.add_argument("--d", type=int, required=True)
    des.add_argument("--delta-max", dest="delta_max", type=float, nargs="+", required=True)
    des.add_argument("--R", type=int, default=None, help="settings per map (default 2d)")
    des.add_argument("--trials", type=int, default=2000)
    des.add_argument("--seed", type=int, default=0)
    des.add_argument("--out", help=f"output directory (default ${OUTDIR_ENV} or cwd)")
    des.set_defaults(func=cmd_design)

    theo = sub.add_parser("theory", help="analytic noise-model table")
    theo.add_argument("--car", type=float)
    theo.add_argument("--lam", type=float)
    theo.add_argument("--d-min", dest="d_min", type=int, default=2)
    theo.add_argument("--d-max", dest="d_max", type=int, default=8)
    theo.add_argument("--out", help=f"output directory (default ${OUTDIR_ENV} or cwd)")
    theo.set_defaults(func=cmd_theory)

    cal = sub.add_parser("calibrate", help="fit a calibration sweep")
    cal.add_argument("--data", required=True, help="sweep CSV with .meta.json sidecar")
    cal.add_argument("--mode", choices=[PHASE_SWEEP, FREQUENCY_SWEEP],
                     help="override the sidecar mode")
    cal.add_argument("--out", help=f"output directory (default ${OUTDIR_ENV} or cwd)")
    cal.set_defaults(func=cmd_calibrate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FitDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FIT
    except TomographyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"error: failed to parse inputs: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
