"""Command-line workbench: simulate / analyze / scan / fit-relaxation / echo / recon.

Pipelines compose through files only; every command is deterministic given
(config, seed), data goes to files, summaries to stdout, warnings to stderr.
Exit codes: 0 success, 1 runtime failure, 2 configuration/validation error.
"""

from __future__ import annotations

import argparse
import math
import sys
import traceback
from pathlib import Path

import numpy as np

from . import io as nio
from .analysis import (
    build_chi_grid,
    fit_gaussian_peak,
    fit_power_law,
    fit_relaxation,
    harmonic_scan,
    concentration_from_t2,
    peak_vs_harmonic_fit,
    per_harmonic_peak_table,
    reconstruct_spectrum,
    spectrum_from_contour,
    trace_contour,
    zero_freq_estimate,
)
from .config import (
    RunConfig,
    load_config,
    plan_from_section,
    scan_from_section,
    spectrum_from_section,
    train_from_section,
)
from .echoes import echo_amplitude
from .errors import (
    InsufficientDataError,
    NoiseScopeError,
    ValidationError,
)
from .filters import finite_correction
from .forward import synthesize_experiment


def _say(args, message: str) -> None:
    if not args.quiet:
        print(message)


def _out_dir(args, cfg: RunConfig) -> Path:
    if args.out is not None:
        return Path(args.out)
    io_sec = cfg.section("io", required=False)
    return cfg.resolve(io_sec.get("out_dir", "out"))


def _effective_seed(args, cfg: RunConfig):
    return args.seed if args.seed is not None else cfg.seed


def _t1_of(section: dict) -> float:
    return float(section.get("t1", math.inf))


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    model = spectrum_from_section(cfg.section("spectrum"))
    plan_sec = cfg.section("plan")
    plan = plan_from_section(plan_sec, _effective_seed(args, cfg))
    train_sec = cfg.section("train", required=False)
    train = train_from_section(train_sec, tau=min(plan.tau_list))
    filter_mode = train_sec.get("filter_mode", "numeric")
    t1 = _t1_of(plan_sec)
    records = synthesize_experiment(model, train, plan, t1,
                                    filter_mode=filter_mode)
    grid = build_chi_grid(records, t1, chi_max=plan.noise_floor_chi)
    out = _out_dir(args, cfg)
    nio.write_records_csv(out / "records.csv", records)
    nio.write_chi_grid_csv(out / "chi_grid.csv", grid)
    finite_chi = grid.chi[grid.valid]
    _say(args, f"simulate: {len(plan.tau_list)} tau values, "
               f"chi range [{finite_chi.min():.4g}, {finite_chi.max():.4g}], "
               f"wrote {out / 'records.csv'} and {out / 'chi_grid.csv'}")
    return 0


def cmd_analyze(args) -> int:
    cfg = load_config(args.config)
    ana = cfg.section("analyze")
    out = _out_dir(args, cfg)
    grid_path = cfg.resolve(cfg.section("io", required=False).get(
        "grid", str(out / "chi_grid.csv")))
    grid = nio.read_chi_grid_csv(grid_path)
    levels = ana.get("levels")
    if not levels:
        raise ValidationError("[analyze] needs a non-empty 'levels' list")
    smooth_sigma = float(ana.get("smooth_sigma", 4e-6))
    fits = []
    estimates = []
    for level in levels:
        trace = trace_contour(grid, float(level), smooth_sigma)
        if len(trace) < 3:
            print(f"warning: level {level}: contour too short to fit "
                  f"({len(trace)} points); skipped", file=sys.stderr)
            continue
        fit = fit_power_law(trace)
        fits.append(fit)
        estimates.append(spectrum_from_contour(trace))
        _say(args, f"analyze: level {level}: alpha={fit.alpha:.4f} "
                   f"log10(C)={math.log10(fit.c_value):.3f} "
                   f"(+-{fit.ci95_c / fit.c_value / math.log(10):.3f})")
    if not fits:
        print("warning: no level produced a fittable contour", file=sys.stderr)
    nio.write_fits_json(out / "fits.json", fits)
    if estimates:
        omega = np.concatenate([e.omega for e in estimates])
        s_vals = np.concatenate([e.s_vals for e in estimates])
        order = np.argsort(omega, kind="stable")
        merged = estimates[0].__class__(
            omega=omega[order], s_vals=s_vals[order],
            segments=[s for e in estimates for s in e.segments])
        nio.write_spectrum_csv(out / "fundamental.csv", merged)
    if ana.get("reconstruct", False) and fits:
        plan = plan_from_section(cfg.section("plan"),
                                 _effective_seed(args, cfg))
        train = train_from_section(cfg.section("train", required=False),
                                   tau=min(plan.tau_list))
        recon = reconstruct_spectrum(fits, None, train, plan,
                                     smooth_sigma=smooth_sigma)
        nio.write_spectrum_csv(out / "recon.csv", recon)
    return 0


def _correction_from_config(cfg: RunConfig):
    train_sec = cfg.section("train", required=False)
    if not train_sec or train_sec.get("shape", "instantaneous") == "instantaneous":
        return None
    template = train_from_section(train_sec, tau=4e-6)
    return finite_correction(template.shape, template.resonator, template.beta)


def cmd_scan(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(args, cfg)
    io_sec = cfg.section("io", required=False)
    grid = nio.read_chi_grid_csv(cfg.resolve(io_sec.get(
        "grid", str(out / "chi_grid.csv"))))
    fits, _ = nio.read_fits_json(cfg.resolve(io_sec.get(
        "fits", str(out / "fits.json"))))
    if not fits:
        raise ValidationError("scan needs at least one power-law fit record")
    scan_sec = cfg.section("scan")
    scfg = scan_from_section(scan_sec)
    correction = _correction_from_config(cfg)
    est = harmonic_scan(grid, fits, scfg, correction)
    nio.write_spectrum_csv(out / "scan.csv", est)
    fit_lo = float(scan_sec.get("peak_fit_min", scfg.omega_scan_range[0]))
    fit_hi = float(scan_sec.get("peak_fit_max", scfg.omega_scan_range[1]))
    try:
        peak = fit_gaussian_peak(est, (fit_lo, fit_hi))
        nio.write_fits_json(out / "peak.json", fits, peak)
        _say(args, f"scan: peak center/2pi = {peak.center / (2 * math.pi):.6g} Hz, "
                   f"width/2pi = {peak.width_sigma / (2 * math.pi):.4g} Hz, "
                   f"amplitude = {peak.amplitude:.4g} /s")
    except (InsufficientDataError,) as exc:
        print(f"warning: peak fit skipped: {exc}", file=sys.stderr)
    table = per_harmonic_peak_table(grid, fits, scfg, correction,
                                    (fit_lo, fit_hi))
    lines = ["m_s,amplitude"]
    for m_s, amp in table:
        lines.append(f"{m_s},{amp!r}")
    (out / "peak_harmonics.csv").parent.mkdir(parents=True, exist_ok=True)
    (out / "peak_harmonics.csv").write_text("\n".join(lines) + "\n")
    if len(table) >= 3:
        p2, p0 = peak_vs_harmonic_fit(table)
        _say(args, f"scan: amplitude vs harmonic fit p2={p2:.4g} p0={p0:.4g}")
    return 0


def cmd_fit_relaxation(args) -> int:
    cfg = load_config(args.config)
    sec = cfg.section("relaxation")
    out = _out_dir(args, cfg)
    data_path = cfg.resolve(sec.get("data", ""))
    if not sec.get("data"):
        raise ValidationError("[relaxation] needs a 'data' CSV path")
    raw = np.genfromtxt(data_path, delimiter=",", names=True)
    if raw.dtype.names is None or len(raw.dtype.names) < 2:
        raise ValidationError(f"{data_path} must have a two-column CSV header")
    cols = raw.dtype.names
    data = list(zip(raw[cols[0]].tolist(), raw[cols[1]].tolist()))
    model = sec.get("model", "exp")
    theta = float(sec.get("theta", math.pi))
    fit = fit_relaxation(data, model, theta=theta)
    derived = {}
    t2 = fit.parameters.get("t2", fit.parameters.get("t2_1"))
    if t2 is not None:
        if sec.get("print_s0", False):
            s0 = zero_freq_estimate(t2)
            derived["s_zero"] = s0
            _say(args, f"fit-relaxation: S(0) = {s0:.6g} /s (T2 = {t2:.6g} s)")
        species = sec.get("species")
        if species:
            ppm = concentration_from_t2(t2, species)
            derived["concentration_ppm"] = ppm
            _say(args, f"fit-relaxation: [{species}] N = {ppm:.4g} ppm")
    params = " ".join(f"{k}={v:.6g}" for k, v in fit.parameters.items())
    _say(args, f"fit-relaxation: {model}: {params}")
    nio.write_relaxation_json(out / "relaxation.json", fit,
                              derived if derived else None)
    return 0


def cmd_echo(args) -> int:
    cfg = load_config(args.config)
    sec = cfg.section("echo")
    out = _out_dir(args, cfg)
    lines = ["label,amplitude,phase"]
    if "trace" in sec:
        trace = nio.read_iq_trace_csv(cfg.resolve(sec["trace"]))
        amp, phase = echo_amplitude(trace)
        lines.append(f"{Path(sec['trace']).name},{amp!r},{phase!r}")
    elif "sweep_dir" in sec:
        sweep = nio.read_field_sweep(cfg.resolve(sec["sweep_dir"]))
        from .echoes import field_sweep_spectrum

        fields, dc = field_sweep_spectrum(sweep)
        for f_mt, val in zip(fields, dc):
            lines.append(f"{f_mt!r},{abs(val)!r},{math.atan2(val.imag, val.real)!r}")
    else:
        raise ValidationError("[echo] needs either 'trace' or 'sweep_dir'")
    out.mkdir(parents=True, exist_ok=True)
    (out / "echo_amplitudes.csv").write_text("\n".join(lines) + "\n")
    _say(args, f"echo: wrote {out / 'echo_amplitudes.csv'} "
               f"({len(lines) - 1} rows)")
    return 0


def cmd_recon(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(args, cfg)
    io_sec = cfg.section("io", required=False)
    fits, peak = nio.read_fits_json(cfg.resolve(io_sec.get(
        "fits", str(out / "fits.json"))))
    if not fits:
        raise ValidationError("recon needs at least one power-law fit record")
    plan = plan_from_section(cfg.section("plan"), _effective_seed(args, cfg))
    train = train_from_section(cfg.section("train", required=False),
                               tau=min(plan.tau_list))
    ana = cfg.section("analyze", required=False)
    recon = reconstruct_spectrum(fits, peak, train, plan,
                                 smooth_sigma=float(ana.get("smooth_sigma", 4e-6)))
    nio.write_spectrum_csv(out / "recon.csv", recon)
    _say(args, f"recon: {recon.omega.size} points -> {out / 'recon.csv'}")
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "analyze": cmd_analyze,
    "scan": cmd_scan,
    "fit-relaxation": cmd_fit_relaxation,
    "echo": cmd_echo,
    "recon": cmd_recon,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="noisescope",
        description="CPMG noise-spectroscopy workbench")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func in _COMMANDS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument("--quiet", action="store_true",
                       help="suppress stdout summaries")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NoiseScopeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
