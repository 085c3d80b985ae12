"""Forward synthesis of decoherence exponents and coherence decay curves.

chi is the dimensionless decoherence exponent: coherence L = exp(-chi) for
Gaussian noise, with the observed echo amplitude additionally carrying the
spin-lattice factor exp(-t/(2 T1)).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    CutoffError,
    DomainError,
    TruncationWarning,
    ValidationError,
)
from .filters import FilterFunction, PulseTrain, period_transform
from .spectra import (
    Composite,
    PowerLaw,
    SpectrumModel,
    eval_spectrum,
    high_frequency_bound,
)

__all__ = [
    "zeta_real",
    "power_law_prefactor",
    "chi_power_law",
    "chi_discrete",
    "chi_overlap",
    "chi_vs_echo",
    "observed_coherence",
    "ChiGrid",
    "SamplingPlan",
    "ExperimentRecord",
    "synthesize_experiment",
]

# Bernoulli numbers B_2..B_14 for the Euler-Maclaurin tail.
_BERNOULLI = (1.0 / 6, -1.0 / 30, 1.0 / 42, -1.0 / 30, 5.0 / 66,
              -691.0 / 2730, 7.0 / 6)


def zeta_real(s: float) -> float:
    """Riemann zeta for real s > 1 by direct series plus Euler-Maclaurin tail.

    Accurate to ~1e-14 relative for s in (1, 10]; checked against
    zeta(2) = pi^2/6, zeta(3), and zeta(4) = pi^4/90.
    """
    if not (math.isfinite(s) and s > 1.0):
        raise DomainError(f"zeta_real requires real s > 1, got {s!r}")
    n_direct = 24
    total = math.fsum(k ** (-s) for k in range(1, n_direct))
    n = float(n_direct)
    total += n ** (1.0 - s) / (s - 1.0) + 0.5 * n ** (-s)
    fact = 1.0
    power = n ** (-s - 1.0)
    rising = s
    for k, b in enumerate(_BERNOULLI, start=1):
        fact *= (2 * k - 1) * (2 * k)
        total += b / fact * rising * power
        power /= n * n
        rising *= (s + 2 * k - 1) * (s + 2 * k)
    return total


def power_law_prefactor(alpha: float) -> float:
    """C'(alpha)/C = 4 zeta(2+alpha) (1 - 2^-(2+alpha)) / pi^(2+alpha).

    Relates chi = C'(alpha) t tau^alpha to the power-law amplitude C under
    the odd-harmonic sum of the delta-peak filter approximation.
    """
    if not (math.isfinite(alpha) and alpha > -1.0):
        raise DomainError(f"power-law prefactor needs alpha > -1, got {alpha!r}")
    s = 2.0 + alpha
    return 4.0 * zeta_real(s) * (1.0 - 2.0 ** (-s)) / math.pi**s


def chi_power_law(c: float, alpha: float, tau: float, t: float) -> float:
    """Closed-form chi = C'(alpha) * t * tau^alpha for S(w) = c |w|^-alpha."""
    return power_law_prefactor(alpha) * c * t * tau**alpha


def _power_law_terms(model: SpectrumModel):
    if isinstance(model, PowerLaw):
        yield model
    elif isinstance(model, Composite):
        for term in model.terms:
            yield from _power_law_terms(term)


def chi_discrete(model: SpectrumModel, tau: float, t: float,
                 m_cutoff: int = 10001) -> float:
    """chi = (4t/pi^2) sum_{m odd} S(m pi/tau)/m^2, truncated at m_cutoff.

    Power-law components get an analytic tail correction beyond the cutoff;
    the residual (correction error plus a bound on all other components'
    tails) must stay below 1e-6 of the result, else a CutoffError carrying a
    suggested cutoff is raised.
    """
    if m_cutoff < 1 or m_cutoff % 2 == 0:
        raise ValidationError("m_cutoff must be an odd integer >= 1")
    m = np.arange(1, m_cutoff + 1, 2, dtype=float)
    s_vals = np.asarray(eval_spectrum(model, m * math.pi / tau), dtype=float)
    base = float(np.sum(s_vals / m**2))

    correction = 0.0
    corr_residual = 0.0
    for term in _power_law_terms(model):
        s_exp = 2.0 + term.alpha
        amp = term.C * (tau / math.pi) ** term.alpha
        correction += amp * (m_cutoff + 1.0) ** (1.0 - s_exp) / (2.0 * (s_exp - 1.0))
        corr_residual += amp * s_exp * float(m_cutoff) ** (-s_exp - 1.0) / 6.0

    other = model
    others_sup = 0.0
    non_pl = _strip_power_laws(other)
    if non_pl is not None:
        others_sup = high_frequency_bound(non_pl, (m_cutoff + 2) * math.pi / tau)
    residual = corr_residual + others_sup / (2.0 * (m_cutoff + 1.0))

    chi = (4.0 * t / math.pi**2) * (base + correction)
    if residual > 0 and residual > 1e-6 * (base + correction):
        scale = residual / (1e-6 * max(base + correction, residual))
        suggested = int(m_cutoff * math.ceil(scale)) | 1
        raise CutoffError(
            f"m_cutoff={m_cutoff} leaves a relative tail above 1e-6; "
            f"try m_cutoff={suggested}", suggested_cutoff=suggested)
    return chi


def _strip_power_laws(model: SpectrumModel) -> Optional[SpectrumModel]:
    """The model minus its power-law components (their tails are corrected)."""
    if isinstance(model, PowerLaw):
        return None
    if isinstance(model, Composite):
        kept = [t for t in (_strip_power_laws(x) for x in model.terms)
                if t is not None]
        if not kept:
            return None
        return kept[0] if len(kept) == 1 else Composite(tuple(kept))
    return model


def chi_overlap(model: SpectrumModel, filt: FilterFunction, t: float) -> float:
    """chi = (t^2/2) * trapezoid of S(w) * F_total(w) over the filter grid.

    Warns (TruncationWarning) when the outer 5% of the grid on either side
    still holds more than 1% of the integrand mass.
    """
    omega = filt.omega
    integrand = np.empty_like(filt.total)
    nonzero = omega != 0.0
    integrand[nonzero] = np.asarray(
        eval_spectrum(model, omega[nonzero])) * filt.total[nonzero]
    zero_idx = np.nonzero(~nonzero)[0]
    for i in zero_idx:  # diverging models: fill by neighbor average
        lo = integrand[i - 1] if i > 0 else 0.0
        hi = integrand[i + 1] if i + 1 < integrand.size else 0.0
        integrand[i] = 0.5 * (lo + hi)
    chi = 0.5 * t**2 * float(np.trapezoid(integrand, omega))
    n_edge = max(2, omega.size // 20)
    edge = 0.5 * t**2 * (
        float(np.trapezoid(integrand[:n_edge], omega[:n_edge]))
        + float(np.trapezoid(integrand[-n_edge:], omega[-n_edge:])))
    if chi > 0 and edge > 0.01 * chi:
        warnings.warn(
            f"filter grid may truncate the S*F integrand: outer bins hold "
            f"{edge / chi:.1%} of the total", TruncationWarning, stacklevel=2)
    return chi


def chi_vs_echo(model: SpectrumModel, train: PulseTrain, n_echo_max: int,
                m_cutoff: int = 61, lag_bins: Optional[int] = None) -> np.ndarray:
    """chi at every echo N = 1..n_echo_max of a periodic train, numerically.

    Uses the factorization of the train filter into a single-period transform
    times a squared Dirichlet kernel.  Expanding the kernel into lags p gives

        chi(N) = (1/4pi) [N G_0 + 2 sum_{p=1}^{N-1} (N-p) Re(e^{i p beta} G_p)]

    with G_p the Fourier coefficients of h(w) = S(w) |Z1(w)|^2 at lag p*tau.
    All G_p come from one folded FFT, so the cost is one spectrum evaluation
    per tau regardless of how many echoes are requested.  The frequency grid
    spans |w| < (m_cutoff+1) pi/tau on midpoints (never hitting w = 0).
    """
    if n_echo_max < 1:
        raise ValidationError("n_echo_max must be >= 1")
    if m_cutoff < 1 or m_cutoff % 2 == 0:
        raise ValidationError("m_cutoff must be an odd integer >= 1")
    pt = period_transform(train)
    tau, beta = train.tau, train.beta
    if lag_bins is None:
        lag_bins = 1 << int(math.ceil(math.log2(max(2 * (n_echo_max + 1), 2048))))
    if lag_bins <= n_echo_max:
        raise ValidationError("lag_bins must exceed n_echo_max")
    d_omega = 2.0 * math.pi / (lag_bins * tau)
    n_half = (m_cutoff + 1) * lag_bins // 2
    omega = (np.arange(2 * n_half) - n_half + 0.5) * d_omega
    h = np.asarray(eval_spectrum(model, omega)) * pt.z1_sq_at(omega)
    folded = h.reshape(-1, lag_bins).sum(axis=0)
    p = np.arange(lag_bins)
    g = d_omega * np.exp(-1j * math.pi * p / lag_bins) * np.fft.fft(folded)
    a = np.real(np.exp(1j * beta * p) * g)
    cum_a = np.cumsum(a)          # sum_{p<=n} a_p, index n
    cum_pa = np.cumsum(p * a)
    n_arr = np.arange(1, n_echo_max + 1)
    sum_a = cum_a[n_arr - 1] - a[0]       # sum_{p=1}^{N-1} a_p
    sum_pa = cum_pa[n_arr - 1]            # sum_{p=1}^{N-1} p a_p
    chi = (n_arr * a[0] + 2.0 * (n_arr * sum_a - sum_pa)) / (4.0 * math.pi)
    return chi


def observed_coherence(chi, t, t1: float):
    """L_obs = exp(-t/(2 T1) - chi); T1 may be math.inf."""
    if not t1 > 0:
        raise ValidationError("t1 must be > 0 (or inf)")
    chi_arr = np.asarray(chi, dtype=float)
    t_arr = np.asarray(t, dtype=float)
    rate = 0.0 if math.isinf(t1) else 0.5 / t1
    out = np.exp(-t_arr * rate - chi_arr)
    return out if out.ndim else float(out)


@dataclass
class ChiGrid:
    """2-D decoherence exponent chi(t, tau) with a per-cell validity mask.

    Rows index the detection-time axis, columns the interpulse delay axis.
    For a fixed tau column only cells nearest to echo times t = N tau are
    populated.
    """

    tau_axis: np.ndarray
    t_axis: np.ndarray
    chi: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        self.tau_axis = np.asarray(self.tau_axis, dtype=float)
        self.t_axis = np.asarray(self.t_axis, dtype=float)
        self.chi = np.asarray(self.chi, dtype=float)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.chi.shape != (self.t_axis.size, self.tau_axis.size):
            raise ValidationError("chi must be shaped (len(t_axis), len(tau_axis))")
        if self.valid.shape != self.chi.shape:
            raise ValidationError("valid mask must match chi's shape")

    def column(self, j: int):
        """(t values, chi values) of the valid cells in tau column j."""
        rows = np.nonzero(self.valid[:, j])[0]
        return self.t_axis[rows], self.chi[rows, j]

    def lookup(self, tau: float, t: float):
        """chi at the cell nearest (tau, t), or nan if invalid/absent."""
        j = int(np.argmin(np.abs(self.tau_axis - tau)))
        i = int(np.argmin(np.abs(self.t_axis - t)))
        if not self.valid[i, j]:
            return math.nan
        return float(self.chi[i, j])


@dataclass(frozen=True)
class SamplingPlan:
    """Which tau values to sweep and how echoes are acquired."""

    tau_list: tuple
    max_sequence_time: float
    noise_floor_chi: float = math.inf
    shot_noise_sigma: float = 0.0
    seed: Optional[int] = None
    averages: int = 1

    def __post_init__(self):
        object.__setattr__(self, "tau_list",
                           tuple(float(x) for x in self.tau_list))
        if not self.tau_list:
            raise ValidationError("tau_list must not be empty")
        if any(x <= 0 for x in self.tau_list):
            raise ValidationError("tau values must be > 0")
        if not self.max_sequence_time > max(self.tau_list):
            raise ValidationError("max_sequence_time must exceed max(tau_list)")
        if self.shot_noise_sigma < 0:
            raise ValidationError("shot_noise_sigma must be >= 0")
        if self.averages < 1:
            raise ValidationError("averages must be >= 1")


@dataclass(frozen=True)
class ExperimentRecord:
    """Echo amplitudes for one tau; index k holds echo N = k + 1."""

    tau: float
    echo_amplitudes: np.ndarray
    averages: int = 1


def synthesize_experiment(model: SpectrumModel, train_template: PulseTrain,
                          plan: SamplingPlan, t1: float,
                          filter_mode: str = "numeric",
                          m_cutoff: Optional[int] = None):
    """Generate CPMG echo-decay records for every tau in the plan.

    filter_mode "numeric" builds the realistic periodic filter from the
    template's pulse shape / flip angle / resonator; "delta" uses the
    ideal delta-peak harmonic sum instead.  Echo amplitudes get zero-mean
    Gaussian noise of width shot_noise_sigma/sqrt(averages); each tau owns an
    independent stream spawned from (seed, tau index), so records are
    deterministic and order-independent.
    """
    if filter_mode not in ("numeric", "delta"):
        raise ValidationError(f"unknown filter_mode {filter_mode!r}")
    if plan.shot_noise_sigma > 0 and plan.seed is None:
        raise ValidationError("seed is required when shot_noise_sigma > 0")
    records = []
    for i, tau in enumerate(plan.tau_list):
        n_max = int(math.floor(plan.max_sequence_time / tau + 1e-9))
        train = train_template.with_tau(tau, n_pulses=n_max)
        if filter_mode == "numeric":
            chis = chi_vs_echo(model, train, n_max,
                               m_cutoff=m_cutoff if m_cutoff else 61)
        else:
            rate = chi_discrete(model, tau, 1.0,
                                m_cutoff=m_cutoff if m_cutoff else 10001)
            chis = rate * tau * np.arange(1, n_max + 1)
        t_echo = tau * np.arange(1, n_max + 1)
        amps = observed_coherence(chis, t_echo, t1)
        if plan.shot_noise_sigma > 0:
            rng = np.random.default_rng(
                np.random.SeedSequence(entropy=plan.seed, spawn_key=(i,)))
            amps = amps + rng.normal(
                0.0, plan.shot_noise_sigma / math.sqrt(plan.averages),
                size=amps.size)
        records.append(ExperimentRecord(tau=tau, echo_amplitudes=amps,
                                        averages=plan.averages))
    return records
