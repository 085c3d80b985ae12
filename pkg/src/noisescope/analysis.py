"""Inverse pipeline: chi grids, contour fits, and spectral reconstruction.

Workflow: echo records -> chi grid -> smoothed constant-chi contours ->
straight-line power-law fits in log(t)/log(tau) -> fundamental-frequency
spectrum, plus the harmonic-scan protocol that measures sharp spectral
peaks above the fundamental by scanning higher filter harmonics across
overlapping frequency windows with background subtraction.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import optimize, stats

from .errors import (
    EmptyResultWarning,
    FitError,
    InsufficientDataError,
    ValidationError,
)
from .filters import FiniteCorrection, PulseTrain
from .forward import (
    ChiGrid,
    ExperimentRecord,
    SamplingPlan,
    power_law_prefactor,
    synthesize_experiment,
)
from .spectra import Composite, GaussianPeak, PowerLaw, SpectrumModel

__all__ = [
    "ContourTrace",
    "PowerLawFit",
    "HarmonicScanConfig",
    "SegmentInfo",
    "SpectrumEstimate",
    "PeakFit",
    "RelaxationFit",
    "build_chi_grid",
    "trace_contour",
    "fit_power_law",
    "spectrum_from_contour",
    "background_chi",
    "sharp_peak_estimate",
    "harmonic_scan",
    "per_harmonic_peak_table",
    "fit_gaussian_peak",
    "peak_vs_harmonic_fit",
    "zero_freq_estimate",
    "fit_relaxation",
    "concentration_from_t2",
    "reconstruct_spectrum",
]


@dataclass
class ContourTrace:
    """First-crossing locus of a fixed chi level: one (tau, t) pair per tau."""

    level: float
    tau: np.ndarray
    t: np.ndarray

    def __len__(self):
        return self.tau.size

    @property
    def points(self):
        return list(zip(self.tau.tolist(), self.t.tolist()))


@dataclass
class PowerLawFit:
    """S(w) = C w^-alpha inferred from one chi contour."""

    c_value: float
    alpha: float
    ci95_c: float
    ci95_alpha: float
    level: float
    residual: float

    def predicted_t(self, tau):
        """Contour detection time the fit predicts at tau."""
        pref = power_law_prefactor(self.alpha) * self.c_value
        return self.level / (pref * np.asarray(tau, dtype=float) ** self.alpha)

    def chi_at(self, tau, t):
        """Background chi this fit predicts at an exact (tau, t) point."""
        pref = power_law_prefactor(self.alpha) * self.c_value
        return pref * np.asarray(t, dtype=float) * np.asarray(tau, dtype=float) ** self.alpha


@dataclass(frozen=True)
class HarmonicScanConfig:
    """Protocol constants for the scanning-harmonic peak measurement."""

    window_w: float
    epsilon: float
    tau_min: float
    t_max: float
    omega_scan_range: tuple
    chi_noise_threshold: float = 4.5
    tau_max: Optional[float] = None

    def __post_init__(self):
        if not (self.window_w > 0 and self.tau_min > 0 and self.t_max > 0):
            raise ValidationError("window_w, tau_min, t_max must be > 0")
        if not (0 < self.epsilon <= 0.1):
            raise ValidationError("epsilon must be in (0, 0.1]")
        lo, hi = self.omega_scan_range
        if not (0 < lo < hi):
            raise ValidationError("omega_scan_range must satisfy 0 < lo < hi")
        object.__setattr__(self, "omega_scan_range", (float(lo), float(hi)))
        cap = 2.0 * math.pi / self.window_w
        if self.tau_max is None:
            object.__setattr__(self, "tau_max", cap)
        elif self.tau_max > cap * (1 + 1e-9):
            raise ValidationError(
                f"tau_max={self.tau_max:g} exceeds 2*pi/W={cap:g}; a wider "
                "window would admit two harmonics at once")

    @property
    def min_detection_time(self) -> float:
        """sqrt(2 pi)/(epsilon W): detection time making the filter peak
        narrower than epsilon * W."""
        return math.sqrt(2.0 * math.pi) / (self.epsilon * self.window_w)


@dataclass(frozen=True)
class SegmentInfo:
    """Provenance of one averaged piece of a SpectrumEstimate."""

    m_s: int
    n_range: tuple
    omega_span: tuple
    weight: float


@dataclass
class SpectrumEstimate:
    """Reconstructed S(omega); values may be negative after subtraction."""

    omega: np.ndarray
    s_vals: np.ndarray
    segments: list = field(default_factory=list)


@dataclass
class PeakFit:
    amplitude: float
    center: float
    width_sigma: float
    ci95_amplitude: float
    ci95_center: float
    ci95_width: float


@dataclass
class RelaxationFit:
    model: str
    parameters: dict
    ci95: dict


def build_chi_grid(records: Sequence[ExperimentRecord], t1: float,
                   normalize: bool = True,
                   tau_axis: Optional[np.ndarray] = None,
                   t_axis: Optional[np.ndarray] = None,
                   chi_max: float = math.inf) -> ChiGrid:
    """Grid chi = -ln(L_obs) - t/(2 T1) from echo records by nearest match.

    With ``normalize`` the amplitudes are first divided by the dataset
    maximum (chi = 0 at the maximum echo); pass ``normalize=False`` when the
    amplitudes are already normalized.  Cells with non-positive amplitude or
    chi above ``chi_max`` (the noise floor) are masked invalid.
    """
    if not records:
        raise ValidationError("no experiment records")
    if not t1 > 0:
        raise ValidationError("t1 must be > 0 (or inf)")
    taus = np.array([r.tau for r in records], dtype=float)
    if tau_axis is None:
        tau_axis = np.unique(taus)
    else:
        tau_axis = np.asarray(tau_axis, dtype=float)
    if t_axis is None:
        step = 0.5 * taus.min()
        t_hi = max(r.tau * r.echo_amplitudes.size for r in records)
        t_axis = np.arange(taus.min(), t_hi + 0.5 * step, step)
    else:
        t_axis = np.asarray(t_axis, dtype=float)

    scale = 1.0
    if normalize:
        scale = max(float(np.nanmax(r.echo_amplitudes)) for r in records)
        if not scale > 0:
            raise ValidationError("all echo amplitudes are <= 0")

    chi = np.full((t_axis.size, tau_axis.size), math.nan)
    valid = np.zeros_like(chi, dtype=bool)
    rate = 0.0 if math.isinf(t1) else 0.5 / t1
    for rec in records:
        j = int(np.argmin(np.abs(tau_axis - rec.tau)))
        n_echo = rec.echo_amplitudes.size
        t_echo = rec.tau * np.arange(1, n_echo + 1)
        rows = np.clip(np.searchsorted(t_axis, t_echo), 1, t_axis.size - 1)
        rows = np.where(
            np.abs(t_axis[rows - 1] - t_echo) <= np.abs(t_axis[rows] - t_echo),
            rows - 1, rows)
        amps = rec.echo_amplitudes / scale
        ok = amps > 0
        vals = np.full(n_echo, math.nan)
        vals[ok] = -np.log(amps[ok]) - t_echo[ok] * rate
        ok &= ~(vals > chi_max)
        chi[rows, j] = vals
        valid[rows, j] = ok
    return ChiGrid(tau_axis=tau_axis, t_axis=t_axis, chi=chi, valid=valid)


def trace_contour(grid: ChiGrid, level: float,
                  smooth_sigma: float = 4e-6) -> ContourTrace:
    """First echo time per tau where Gaussian-smoothed chi exceeds the level.

    Smoothing acts along t within each tau column with an amplitude-
    preserving (kernel-normalized) Gaussian of width smooth_sigma; columns
    whose smoothed decay never crosses the level are omitted.  An entirely
    empty trace is returned (with a warning) rather than raised.
    """
    taus, times = [], []
    for j, tau in enumerate(grid.tau_axis):
        t_vals, chi_vals = grid.column(j)
        if t_vals.size == 0:
            continue
        n_idx = np.round(t_vals / tau).astype(int)
        n_hi = int(n_idx.max())
        dense = np.zeros(n_hi)
        mask = np.zeros(n_hi)
        dense[n_idx - 1] = chi_vals
        mask[n_idx - 1] = 1.0
        if smooth_sigma > 0:
            k_half = int(math.ceil(4.0 * smooth_sigma / tau))
            offsets = np.arange(-k_half, k_half + 1) * tau
            kern = np.exp(-(offsets**2) / (2.0 * smooth_sigma**2))
            num = np.convolve(dense, kern, mode="same")
            den = np.convolve(mask, kern, mode="same")
            with np.errstate(invalid="ignore", divide="ignore"):
                smoothed = num / den
        else:
            smoothed = np.where(mask > 0, dense, math.nan)
        crossed = np.nonzero((smoothed[n_idx - 1] > level))[0]
        if crossed.size:
            taus.append(tau)
            times.append(t_vals[crossed[0]])
    if not taus:
        warnings.warn(f"no chi contour at level {level:g} anywhere in the grid",
                      EmptyResultWarning, stacklevel=2)
    return ContourTrace(level=level, tau=np.asarray(taus),
                        t=np.asarray(times))


def fit_power_law(trace: ContourTrace) -> PowerLawFit:
    """Straight-line fit of log t vs log tau; slope gives -alpha.

    The intercept combined with the zeta-sum prefactor C'(alpha) yields the
    power-law amplitude C.  95% intervals come from the linearized parameter
    covariance with a Student-t quantile.
    """
    if len(trace) < 3:
        raise InsufficientDataError(
            f"power-law fit needs >= 3 contour points, got {len(trace)}")
    x = np.log(trace.tau)
    y = np.log(trace.t)
    design = np.column_stack([np.ones_like(x), x])
    coef, res_ss, *_ = np.linalg.lstsq(design, y, rcond=None)
    a, b = coef
    alpha = -b
    n = x.size
    resid = y - design @ coef
    ssr = float(resid @ resid)
    dof = n - 2
    sigma2 = ssr / dof if dof > 0 else 0.0
    cov = sigma2 * np.linalg.inv(design.T @ design)
    tq = stats.t.ppf(0.975, dof) if dof > 0 else math.inf
    se_a = math.sqrt(max(cov[0, 0], 0.0))
    se_alpha = math.sqrt(max(cov[1, 1], 0.0))
    if alpha <= -1.0:
        raise FitError(f"fitted alpha={alpha:.3f} <= -1 has no harmonic sum",
                       residual=math.sqrt(sigma2))
    pref = power_law_prefactor(alpha)
    c_value = trace.level * math.exp(-a) / pref
    # delta method on ln C = ln(level) - a - ln C'(alpha)
    h = 1e-6
    dlnp = (math.log(power_law_prefactor(alpha + h))
            - math.log(power_law_prefactor(alpha - h))) / (2 * h)
    cov_a_alpha = -cov[0, 1]
    var_lnc = (cov[0, 0] + dlnp**2 * cov[1, 1] + 2.0 * dlnp * cov_a_alpha)
    se_lnc = math.sqrt(max(var_lnc, 0.0))
    return PowerLawFit(c_value=c_value, alpha=alpha,
                       ci95_c=c_value * tq * se_lnc,
                       ci95_alpha=tq * se_alpha,
                       level=trace.level,
                       residual=math.sqrt(sigma2))


def spectrum_from_contour(trace: ContourTrace) -> SpectrumEstimate:
    """Fundamental-frequency spectrum S(pi/tau) = pi^2 level / (4 t)."""
    if len(trace) == 0:
        raise ValidationError("empty contour trace")
    omega = math.pi / trace.tau
    s_vals = math.pi**2 * trace.level / (4.0 * trace.t)
    order = np.argsort(omega)
    n_idx = np.round(trace.t / trace.tau).astype(int)
    seg = SegmentInfo(m_s=1,
                      n_range=(int(n_idx.min()), int(n_idx.max())),
                      omega_span=(float(omega.min()), float(omega.max())),
                      weight=float(len(trace)))
    return SpectrumEstimate(omega=omega[order], s_vals=s_vals[order],
                            segments=[seg])


def _select_background(tau, t, fits):
    """Index of the fit whose contour line passes nearest (tau, t) in log t."""
    tau = np.asarray(tau, dtype=float)
    t = np.asarray(t, dtype=float)
    dist = np.stack([np.abs(np.log(f.predicted_t(tau)) - np.log(t))
                     for f in fits])
    return np.argmin(dist, axis=0)


def background_chi(tau: float, t: float, fits: Sequence[PowerLawFit]) -> float:
    """Background chi_B at (tau, t) from the nearest contour fit.

    Nearest means smallest |log t_predicted - log t| among the fits; the
    selected fit's power law is then evaluated at the exact (tau, t).
    """
    if not fits:
        raise ValidationError("need at least one power-law fit")
    idx = int(_select_background(tau, t, fits))
    return float(fits[idx].chi_at(tau, t))


def sharp_peak_estimate(m_s, n_echo, tau, chi, chi_b, a_corr=1.0):
    """S_P(omega_s) = pi^2 m_s^2 (chi - chi_B) / (4 N tau A(omega_s))."""
    return (math.pi**2 * np.asarray(m_s, dtype=float) ** 2
            * (np.asarray(chi) - np.asarray(chi_b))
            / (4.0 * np.asarray(n_echo, dtype=float) * np.asarray(tau)
               * np.asarray(a_corr, dtype=float)))


def _first_odd_above(x: float) -> int:
    m = int(math.floor(x)) + 1
    return m if m % 2 == 1 else m + 1


def _last_odd_at_most(x: float) -> int:
    m = int(math.floor(x + 1e-12))
    return m if m % 2 == 1 else m - 1


def _nanmean_stack(arrays, size):
    if not arrays:
        return np.full(size, math.nan)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return np.nanmean(np.stack(arrays), axis=0)


def _scan_windows(grid: ChiGrid, fits: Sequence[PowerLawFit],
                  config: HarmonicScanConfig,
                  correction: Optional[FiniteCorrection],
                  points_per_window: int):
    """Shared engine behind harmonic_scan and per_harmonic_peak_table.

    Returns (omega_grid, windows) where each window entry is
    (center, list of (SegmentInfo, per-m_s averaged values on omega_grid)).
    """
    if not fits:
        raise ValidationError("harmonic scan needs at least one contour fit")
    w_width = config.window_w
    lo, hi = config.omega_scan_range
    step = w_width / points_per_window
    omega_grid = np.arange(lo, hi + 0.5 * step, step)
    avail_tau = grid.tau_axis[(grid.tau_axis >= config.tau_min * (1 - 1e-12))
                              & (grid.tau_axis <= config.tau_max * (1 + 1e-12))]
    centers = np.arange(lo + 0.5 * w_width, hi + 0.49 * w_width, 0.5 * w_width)

    def lookup_rows(t_echo):
        rows = np.clip(np.searchsorted(grid.t_axis, t_echo), 1,
                       grid.t_axis.size - 1)
        return np.where(
            np.abs(grid.t_axis[rows - 1] - t_echo)
            <= np.abs(grid.t_axis[rows] - t_echo), rows - 1, rows)

    tau_cols = {float(tv): int(np.argmin(np.abs(grid.tau_axis - tv)))
                for tv in avail_tau}

    windows = []
    for w_c in centers:
        w_minus = w_c - 0.5 * w_width
        w_plus = w_c + 0.5 * w_width
        m_lo = _first_odd_above(w_plus * config.tau_min / math.pi)
        m_hi = _last_odd_at_most(2.0 * w_minus / w_width)
        per_ms = []
        for m_s in range(m_lo, m_hi + 1, 2):
            tau_lo = m_s * math.pi / w_plus
            tau_hi = m_s * math.pi / w_minus
            taus = avail_tau[(avail_tau >= tau_lo * (1 - 1e-12))
                             & (avail_tau <= tau_hi * (1 + 1e-12))]
            if taus.size == 0:
                continue
            tau_fin = taus.min()
            tau_start = taus.max()
            n_min = int(math.floor(config.min_detection_time / tau_fin)) + 1
            n_max = int(math.floor(config.t_max / tau_start + 1e-12))
            if n_min > n_max:
                continue
            taus_desc = np.sort(taus)[::-1]
            omega_s = m_s * math.pi / taus_desc
            cols = np.array([tau_cols[float(tv)] for tv in taus_desc])
            a_corr = correction.at(omega_s) if correction is not None else 1.0
            acc = np.zeros(omega_grid.size)
            cnt = np.zeros(omega_grid.size)
            n_used = []
            for n_echo in range(n_min, n_max + 1):
                t_echo = n_echo * taus_desc
                rows = lookup_rows(t_echo)
                chi_vals = grid.chi[rows, cols]
                ok = grid.valid[rows, cols] & (
                    chi_vals <= config.chi_noise_threshold)
                if not np.any(ok):
                    continue
                chi_b = _background_vec(taus_desc[ok], t_echo[ok], fits)
                a_ok = a_corr[ok] if isinstance(a_corr, np.ndarray) else a_corr
                s_p = sharp_peak_estimate(m_s, n_echo, taus_desc[ok],
                                          chi_vals[ok], chi_b, a_ok)
                w_pts = omega_s[ok]
                order = np.argsort(w_pts)
                w_pts, s_p = w_pts[order], s_p[order]
                if w_pts.size == 1:
                    sel = np.zeros(omega_grid.size, dtype=bool)
                    sel[int(np.argmin(np.abs(omega_grid - w_pts[0])))] = True
                    acc[sel] += s_p[0]
                else:
                    sel = (omega_grid >= w_pts[0]) & (omega_grid <= w_pts[-1])
                    acc[sel] += np.interp(omega_grid[sel], w_pts, s_p)
                cnt[sel] += 1.0
                n_used.append(n_echo)
            if not n_used:
                continue
            seg_vals = np.full(omega_grid.size, math.nan)
            covered = cnt > 0
            seg_vals[covered] = acc[covered] / cnt[covered]
            info = SegmentInfo(
                m_s=m_s, n_range=(min(n_used), max(n_used)),
                omega_span=(float(omega_s.min()), float(omega_s.max())),
                weight=float(cnt.sum()))
            per_ms.append((info, seg_vals))
        windows.append((w_c, per_ms))
    return omega_grid, windows


def harmonic_scan(grid: ChiGrid, fits: Sequence[PowerLawFit],
                  config: HarmonicScanConfig,
                  correction: Optional[FiniteCorrection] = None,
                  points_per_window: int = 64) -> SpectrumEstimate:
    """Scan filter harmonics across overlapping windows to estimate S_P.

    Per window [w_c - W/2, w_c + W/2]:
      * scanning harmonics run from the smallest odd m exceeding
        w_+ tau_min / pi to the largest odd m <= 2 w_- / W;
      * for each m_s the usable delays lie in [m_s pi/w_+, m_s pi/w_-],
        echo numbers run from the peak-width bound
        N > sqrt(2 pi)/(eps W tau_fin) up to N tau_start <= t_max;
      * each (m_s, N) sweep of tau yields a spectral segment via the
        background-subtracted harmonic formula, resampled onto a uniform
        frequency grid, averaged over N and then over m_s (uniformly).
    Windows advance by W/2 (bricklaying) and overlaps are averaged.  Cells
    with chi above the noise threshold are skipped; windows with no valid
    combination leave NaN gaps and are flagged with a warning.
    """
    omega_grid, windows = _scan_windows(grid, fits, config, correction,
                                        points_per_window)
    w_width = config.window_w
    window_vals = []
    segments = []
    empty_windows = []
    for w_c, per_ms in windows:
        segments.extend(info for info, _ in per_ms)
        win = _nanmean_stack([vals for _, vals in per_ms], omega_grid.size)
        if not per_ms:
            empty_windows.append(w_c)
        in_win = ((omega_grid >= w_c - 0.5 * w_width)
                  & (omega_grid <= w_c + 0.5 * w_width))
        window_vals.append(np.where(in_win, win, math.nan))
    if empty_windows:
        warnings.warn(
            f"{len(empty_windows)} scan window(s) had no valid (m_s, N, tau) "
            "combination; the estimate has gaps", EmptyResultWarning,
            stacklevel=2)
    s_vals = _nanmean_stack(window_vals, omega_grid.size)
    return SpectrumEstimate(omega=omega_grid, s_vals=s_vals,
                            segments=segments)


def per_harmonic_peak_table(grid: ChiGrid, fits: Sequence[PowerLawFit],
                            config: HarmonicScanConfig,
                            correction: Optional[FiniteCorrection] = None,
                            omega_range: Optional[tuple] = None,
                            points_per_window: int = 64) -> list:
    """Peak amplitude measured by each scanning harmonic separately.

    Returns [(m_s, amplitude), ...] where amplitude is the maximum of the
    m_s-averaged spectral segment inside omega_range (defaults to the scan
    range); input for the quadratic amplitude-vs-harmonic fit.
    """
    omega_grid, windows = _scan_windows(grid, fits, config, correction,
                                        points_per_window)
    lo, hi = omega_range if omega_range is not None else config.omega_scan_range
    sel = (omega_grid >= lo) & (omega_grid <= hi)
    by_ms: dict = {}
    for _, per_ms in windows:
        for info, vals in per_ms:
            by_ms.setdefault(info.m_s, []).append(vals)
    table = []
    for m_s in sorted(by_ms):
        combined = _nanmean_stack(by_ms[m_s], omega_grid.size)[sel]
        if np.any(np.isfinite(combined)):
            table.append((m_s, float(np.nanmax(combined))))
    return table


def _background_vec(tau, t, fits):
    idx = _select_background(tau, t, fits)
    out = np.empty(np.asarray(tau, dtype=float).size)
    for k, f in enumerate(fits):
        sel = idx == k
        if np.any(sel):
            out[sel] = f.chi_at(np.asarray(tau)[sel], np.asarray(t)[sel])
    return out


def fit_gaussian_peak(est: SpectrumEstimate, omega_range) -> PeakFit:
    """Nonlinear least-squares Gaussian A exp(-(w - w_P)^2 / (2 sigma^2))."""
    lo, hi = omega_range
    sel = (est.omega >= lo) & (est.omega <= hi) & np.isfinite(est.s_vals)
    w = est.omega[sel]
    s = est.s_vals[sel]
    if w.size < 5:
        raise InsufficientDataError(
            f"Gaussian peak fit needs >= 5 points in range, got {w.size}")

    def gauss(x, amp, center, sigma):
        return amp * np.exp(-((x - center) ** 2) / (2.0 * sigma**2))

    i0 = int(np.argmax(s))
    p0 = (float(s[i0]), float(w[i0]), 0.15 * (hi - lo))
    try:
        popt, pcov = optimize.curve_fit(gauss, w, s, p0=p0, maxfev=5000)
    except RuntimeError as exc:
        resid = float(np.sqrt(np.mean((s - gauss(w, *p0)) ** 2)))
        raise FitError(f"Gaussian peak fit did not converge: {exc}",
                       residual=resid)
    popt = np.asarray(popt)
    popt[2] = abs(popt[2])
    dof = max(w.size - 3, 1)
    tq = stats.t.ppf(0.975, dof)
    se = np.sqrt(np.abs(np.diag(pcov)))
    return PeakFit(amplitude=float(popt[0]), center=float(popt[1]),
                   width_sigma=float(popt[2]),
                   ci95_amplitude=float(tq * se[0]),
                   ci95_center=float(tq * se[1]),
                   ci95_width=float(tq * se[2]))


def peak_vs_harmonic_fit(peaks) -> tuple:
    """Least squares of peak amplitude = p2 * m_s^2 + p0; returns (p2, p0)."""
    pts = list(peaks)
    if len(pts) < 3:
        raise InsufficientDataError("need >= 3 harmonics for the quadratic fit")
    m = np.array([p[0] for p in pts], dtype=float)
    amp = np.array([p[1] for p in pts], dtype=float)
    design = np.column_stack([m**2, np.ones_like(m)])
    coef, *_ = np.linalg.lstsq(design, amp, rcond=None)
    return float(coef[0]), float(coef[1])


def zero_freq_estimate(t2_hahn: float) -> float:
    """S(0) = 2/T2 from an exponential Hahn-echo decay (chi = t/T2)."""
    if not t2_hahn > 0:
        raise ValidationError("t2 must be > 0")
    return 2.0 / t2_hahn


_VAN_WYK_P1 = 71e-6      # s * ppm
_BAUCH_NV = 160e-6       # s * ppm


def concentration_from_t2(t2: float, species: str) -> float:
    """Nitrogen concentration in ppm from a Hahn-echo T2.

    P1 centers follow [N] = 71 us ppm / T2 (van Wyk); NV ensembles follow
    [N] = 160 us ppm / T2 (Bauch).
    """
    if not t2 > 0:
        raise ValidationError("t2 must be > 0")
    if species == "P1":
        return _VAN_WYK_P1 / t2
    if species == "NV":
        return _BAUCH_NV / t2
    raise ValidationError(f"unknown species {species!r} (use 'P1' or 'NV')")


_RELAX_MODELS = ("exp", "biexp", "inversion_recovery",
                 "inversion_depolarization")


def fit_relaxation(data, model: str, theta: float = math.pi) -> RelaxationFit:
    """Nonlinear least squares of a relaxation decay.

    Models: "exp" M exp(-t/T2); "biexp" M1 exp(-t/T2_1) + M2 exp(-t/T2_2)
    (reported with T2_1 < T2_2); "inversion_recovery"
    M (1 - 2 sin^2(theta/2)) exp(-t/T1) with the inversion flip angle theta
    held fixed (M and theta only enter as a product, so they cannot both be
    fitted); "inversion_depolarization" M exp(-t/T1).
    """
    if model not in _RELAX_MODELS:
        raise ValidationError(f"unknown relaxation model {model!r}")
    arr = np.asarray(list(data), dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValidationError("data must be a list of (t, signal) pairs")
    t, y = arr[:, 0], arr[:, 1]
    scale = float(np.max(np.abs(y))) or 1.0
    t_char = float(np.median(t[t > 0])) if np.any(t > 0) else 1.0

    if model == "exp":
        names = ("m", "t2")
        p0 = (scale, t_char)
        func = lambda tt, m, t2: m * np.exp(-tt / t2)
    elif model == "biexp":
        names = ("m1", "t2_1", "m2", "t2_2")
        p0 = (0.7 * scale, 0.5 * t_char, 0.3 * scale, 3.0 * t_char)
        func = lambda tt, m1, t21, m2, t22: (m1 * np.exp(-tt / t21)
                                             + m2 * np.exp(-tt / t22))
    elif model == "inversion_recovery":
        amp_factor = 1.0 - 2.0 * math.sin(0.5 * theta) ** 2
        if abs(amp_factor) < 1e-12:
            raise ValidationError(
                "theta = pi/2 makes the inversion-recovery amplitude vanish")
        names = ("m", "t1")
        p0 = (y[0] / amp_factor if y[0] != 0 else scale, t_char)
        func = lambda tt, m, t1: m * amp_factor * np.exp(-tt / t1)
    else:
        names = ("m", "t1")
        p0 = (y[0] if y[0] != 0 else scale, t_char)
        func = lambda tt, m, t1: m * np.exp(-tt / t1)

    if t.size < 2 * len(names):
        raise InsufficientDataError(
            f"model {model!r} needs >= {2 * len(names)} points, got {t.size}")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            popt, pcov = optimize.curve_fit(func, t, y, p0=p0, maxfev=20000)
    except RuntimeError as exc:
        resid = float(np.sqrt(np.mean((y - func(t, *p0)) ** 2)))
        raise FitError(f"relaxation fit did not converge: {exc}",
                       residual=resid)
    dof = max(t.size - len(names), 1)
    tq = stats.t.ppf(0.975, dof)
    se = np.sqrt(np.abs(np.diag(pcov)))
    params = dict(zip(names, (float(v) for v in popt)))
    cis = dict(zip(names, (float(tq * v) for v in se)))
    if model == "biexp" and params["t2_1"] > params["t2_2"]:
        params = {"m1": params["m2"], "t2_1": params["t2_2"],
                  "m2": params["m1"], "t2_2": params["t2_1"]}
        cis = {"m1": cis["m2"], "t2_1": cis["t2_2"],
               "m2": cis["m1"], "t2_2": cis["t2_1"]}
    if model == "inversion_recovery":
        params["theta"] = theta
        cis["theta"] = 0.0
    for key in ("t2", "t2_1", "t2_2", "t1"):
        if key in params and params[key] <= 0:
            raise FitError(f"fitted {key} <= 0; data is not a decay",
                           residual=float(np.sqrt(np.mean(
                               (y - func(t, *popt)) ** 2))))
    return RelaxationFit(model=model, parameters=params, ci95=cis)


def reconstruct_spectrum(fits: Sequence[PowerLawFit],
                         peak: Optional[PeakFit],
                         train_template: PulseTrain,
                         plan: SamplingPlan,
                         t1: float = math.inf,
                         smooth_sigma: float = 4e-6,
                         m_cutoff: int = 61) -> SpectrumEstimate:
    """Forward-synthesize each fit's composite model with realistic filters,
    then re-trace its contour: the "reconstructed" fundamental spectrum.

    The reconstruction accounts for what the ideal delta-peak inversion
    cannot: finite filter widths at low echo number and realistic pulses.
    """
    if not fits:
        raise ValidationError("need at least one power-law fit")
    all_omega, all_s, segs = [], [], []
    for f in fits:
        terms = [PowerLaw(C=f.c_value, alpha=f.alpha)]
        if peak is not None and peak.amplitude > 0:
            terms.append(GaussianPeak(A=peak.amplitude, omega_p=peak.center,
                                      sigma=peak.width_sigma))
        model: SpectrumModel = terms[0] if len(terms) == 1 else Composite(tuple(terms))
        records = synthesize_experiment(model, train_template, plan, t1,
                                        filter_mode="numeric",
                                        m_cutoff=m_cutoff)
        grid = build_chi_grid(records, t1)
        trace = trace_contour(grid, f.level, smooth_sigma)
        if len(trace) == 0:
            continue
        est = spectrum_from_contour(trace)
        all_omega.append(est.omega)
        all_s.append(est.s_vals)
        segs.extend(est.segments)
    if not all_omega:
        warnings.warn("reconstruction produced no contour points",
                      EmptyResultWarning, stacklevel=2)
        return SpectrumEstimate(omega=np.array([]), s_vals=np.array([]),
                                segments=[])
    omega = np.concatenate(all_omega)
    s_vals = np.concatenate(all_s)
    order = np.argsort(omega, kind="stable")
    return SpectrumEstimate(omega=omega[order], s_vals=s_vals[order],
                            segments=segs)
