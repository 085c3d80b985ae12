"""CSV / JSON readers and writers for every pipeline artifact.

All writers are atomic (write to a temp file, then rename) and format floats
with shortest round-trip repr, so reruns of a deterministic pipeline produce
byte-identical files.
"""

from __future__ import annotations

import json
import math
import os
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .analysis import (
    PeakFit,
    PowerLawFit,
    RelaxationFit,
    SegmentInfo,
    SpectrumEstimate,
)
from .bath import EnsembleResult
from .echoes import FieldSweep, IQTrace
from .errors import ValidationError
from .forward import ChiGrid, ExperimentRecord

__all__ = [
    "write_records_csv", "read_records_csv",
    "write_chi_grid_csv", "read_chi_grid_csv",
    "write_spectrum_csv", "read_spectrum_csv",
    "write_filter_csv",
    "write_ensemble_csv",
    "write_iq_trace_csv", "read_iq_trace_csv",
    "write_field_sweep", "read_field_sweep",
    "write_fits_json", "read_fits_json",
    "write_relaxation_json",
]


def _fmt(x: float) -> str:
    return repr(float(x))


def _atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def write_records_csv(path, records: Sequence[ExperimentRecord]) -> None:
    lines = []
    averages = {r.averages for r in records}
    for a in sorted(averages):
        lines.append(f"# averages={a}")
    lines.append("tau_s,n_echo,amplitude")
    for rec in records:
        for k, amp in enumerate(rec.echo_amplitudes, start=1):
            lines.append(f"{_fmt(rec.tau)},{k},{_fmt(amp)}")
    _atomic_write(path, "\n".join(lines) + "\n")


def read_records_csv(path) -> list:
    averages = 1
    rows = []
    with open(path) as fh:
        header_seen = False
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if "averages=" in line:
                    averages = int(line.split("averages=")[1])
                continue
            if not header_seen:
                if line != "tau_s,n_echo,amplitude":
                    raise ValidationError(f"unexpected records header: {line!r}")
                header_seen = True
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise ValidationError(f"malformed records row: {line!r}")
            rows.append((float(parts[0]), int(parts[1]), float(parts[2])))
    if not rows:
        raise ValidationError(f"no echo records in {path}")
    records = []
    by_tau: dict = {}
    order = []
    for tau, n, amp in rows:
        if tau not in by_tau:
            by_tau[tau] = {}
            order.append(tau)
        by_tau[tau][n] = amp
    for tau in order:
        echoes = by_tau[tau]
        n_max = max(echoes)
        amps = np.full(n_max, math.nan)
        for n, amp in echoes.items():
            amps[n - 1] = amp
        records.append(ExperimentRecord(tau=tau, echo_amplitudes=amps,
                                        averages=averages))
    return records


def write_chi_grid_csv(path, grid: ChiGrid) -> None:
    """Matrix layout: header row carries the tau axis, first column the t axis;
    invalid cells are written as nan."""
    lines = ["t_s\\tau_s," + ",".join(_fmt(v) for v in grid.tau_axis)]
    vals = np.where(grid.valid, grid.chi, math.nan)
    for i, t in enumerate(grid.t_axis):
        lines.append(_fmt(t) + "," + ",".join(_fmt(v) for v in vals[i]))
    _atomic_write(path, "\n".join(lines) + "\n")


def read_chi_grid_csv(path) -> ChiGrid:
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("t_s\\tau_s,"):
            raise ValidationError(f"unexpected chi-grid header: {header!r}")
        tau_axis = np.array([float(v) for v in header.split(",")[1:]])
        t_vals, rows = [], []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != tau_axis.size + 1:
                raise ValidationError(f"malformed chi-grid row: {line!r}")
            t_vals.append(float(parts[0]))
            rows.append([float(v) for v in parts[1:]])
    chi = np.asarray(rows)
    return ChiGrid(tau_axis=tau_axis, t_axis=np.asarray(t_vals), chi=chi,
                   valid=np.isfinite(chi))


def _point_provenance(est: SpectrumEstimate):
    """Per-point (m_s, n_echoes, window_index) from the covering segments."""
    n_pts = est.omega.size
    m_s = np.zeros(n_pts, dtype=int)
    n_echoes = np.zeros(n_pts, dtype=int)
    window = np.full(n_pts, -1, dtype=int)
    best_weight = np.full(n_pts, -math.inf)
    for idx, seg in enumerate(est.segments):
        lo, hi = seg.omega_span
        sel = (est.omega >= lo) & (est.omega <= hi)
        n_echoes[sel] += seg.n_range[1] - seg.n_range[0] + 1
        better = sel & (seg.weight > best_weight)
        m_s[better] = seg.m_s
        window[better] = idx
        best_weight[better] = seg.weight
    return m_s, n_echoes, window


def write_spectrum_csv(path, est: SpectrumEstimate) -> None:
    m_s, n_echoes, window = _point_provenance(est)
    lines = ["omega_rad_s,s_per_s,m_s,n_echoes,window_index"]
    for k in range(est.omega.size):
        lines.append(f"{_fmt(est.omega[k])},{_fmt(est.s_vals[k])},"
                     f"{m_s[k]},{n_echoes[k]},{window[k]}")
    _atomic_write(path, "\n".join(lines) + "\n")


def read_spectrum_csv(path) -> SpectrumEstimate:
    omega, s_vals, segments = [], [], {}
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "omega_rad_s,s_per_s,m_s,n_echoes,window_index":
            raise ValidationError(f"unexpected spectrum header: {header!r}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            w, s, m, n, win = line.split(",")
            omega.append(float(w))
            s_vals.append(float(s))
            key = (int(m), int(win))
            lo, hi, cnt, nmax = segments.get(
                key, (math.inf, -math.inf, 0, int(n)))
            segments[key] = (min(lo, float(w)), max(hi, float(w)), cnt + 1,
                             max(nmax, int(n)))
    segs = [SegmentInfo(m_s=m, n_range=(1, nmax), omega_span=(lo, hi),
                        weight=float(cnt))
            for (m, _win), (lo, hi, cnt, nmax) in sorted(segments.items())]
    return SpectrumEstimate(omega=np.asarray(omega), s_vals=np.asarray(s_vals),
                            segments=segs)


def write_filter_csv(path, omega: np.ndarray, values: np.ndarray) -> None:
    lines = ["omega_rad_s,value"]
    for w, v in zip(omega, values):
        lines.append(f"{_fmt(w)},{_fmt(v)}")
    _atomic_write(path, "\n".join(lines) + "\n")


def write_ensemble_csv(path, result: EnsembleResult) -> None:
    lines = ["t_s,coherence,std_err"]
    for t, c, e in zip(result.t_axis, result.mean_coherence, result.std_err):
        lines.append(f"{_fmt(t)},{_fmt(c)},{_fmt(e)}")
    _atomic_write(path, "\n".join(lines) + "\n")


def write_iq_trace_csv(path, trace: IQTrace) -> None:
    lines = ["t_s,i,q"]
    for k in range(trace.i_vals.size):
        lines.append(f"{_fmt(k * trace.dt)},{_fmt(trace.i_vals[k])},"
                     f"{_fmt(trace.q_vals[k])}")
    _atomic_write(path, "\n".join(lines) + "\n")


def read_iq_trace_csv(path) -> IQTrace:
    t, i_vals, q_vals = [], [], []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "t_s,i,q":
            raise ValidationError(f"unexpected IQ trace header: {header!r}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            a, b, c = line.split(",")
            t.append(float(a))
            i_vals.append(float(b))
            q_vals.append(float(c))
    if len(t) < 2:
        raise ValidationError(f"IQ trace in {path} is too short")
    dt = t[1] - t[0]
    return IQTrace(dt=dt, i_vals=np.asarray(i_vals), q_vals=np.asarray(q_vals))


def write_field_sweep(directory, sweep: FieldSweep) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    index_lines = ["field_mT,filename"]
    for k, field_mt in enumerate(sweep.fields):
        name = f"trace_{k:04d}.csv"
        write_iq_trace_csv(directory / name, sweep.traces[k])
        index_lines.append(f"{_fmt(field_mt)},{name}")
    _atomic_write(directory / "index.csv", "\n".join(index_lines) + "\n")


def read_field_sweep(directory) -> FieldSweep:
    directory = Path(directory)
    index = directory / "index.csv"
    if not index.exists():
        raise ValidationError(f"no index.csv in {directory}")
    fields, traces = [], []
    with open(index) as fh:
        header = fh.readline().strip()
        if header != "field_mT,filename":
            raise ValidationError(f"unexpected sweep index header: {header!r}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            field_mt, name = line.split(",")
            fields.append(float(field_mt))
            traces.append(read_iq_trace_csv(directory / name))
    return FieldSweep(fields=np.asarray(fields), traces=tuple(traces))


def _triple(value, ci):
    return {"value": value, "ci_low": value - ci, "ci_high": value + ci}


def write_fits_json(path, fits: Sequence[PowerLawFit],
                    peak: Optional[PeakFit] = None) -> None:
    payload = {
        "power_law_fits": [
            {
                "level": f.level,
                "residual": f.residual,
                "parameters": {
                    "c": _triple(f.c_value, f.ci95_c),
                    "alpha": _triple(f.alpha, f.ci95_alpha),
                },
            }
            for f in fits
        ]
    }
    if peak is not None:
        payload["peak_fit"] = {
            "parameters": {
                "amplitude": _triple(peak.amplitude, peak.ci95_amplitude),
                "center": _triple(peak.center, peak.ci95_center),
                "width_sigma": _triple(peak.width_sigma, peak.ci95_width),
            }
        }
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _ci_half(entry) -> float:
    return 0.5 * (entry["ci_high"] - entry["ci_low"])


def read_fits_json(path):
    """Returns (list of PowerLawFit, PeakFit or None)."""
    with open(path) as fh:
        payload = json.load(fh)
    fits = []
    for row in payload.get("power_law_fits", []):
        pars = row["parameters"]
        fits.append(PowerLawFit(
            c_value=pars["c"]["value"], alpha=pars["alpha"]["value"],
            ci95_c=_ci_half(pars["c"]), ci95_alpha=_ci_half(pars["alpha"]),
            level=row["level"], residual=row.get("residual", math.nan)))
    peak = None
    if "peak_fit" in payload:
        pars = payload["peak_fit"]["parameters"]
        peak = PeakFit(
            amplitude=pars["amplitude"]["value"],
            center=pars["center"]["value"],
            width_sigma=pars["width_sigma"]["value"],
            ci95_amplitude=_ci_half(pars["amplitude"]),
            ci95_center=_ci_half(pars["center"]),
            ci95_width=_ci_half(pars["width_sigma"]))
    return fits, peak


def write_relaxation_json(path, fit: RelaxationFit,
                          derived: Optional[dict] = None) -> None:
    payload = {
        "model": fit.model,
        "parameters": {
            name: _triple(fit.parameters[name], fit.ci95.get(name, 0.0))
            for name in fit.parameters
        },
    }
    if derived:
        payload["derived"] = derived
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
