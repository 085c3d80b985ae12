"""Control-phase profiles, modulation functions, and CPMG filter functions.

The pulse train is a CPMG-style sequence of nominally-pi rotations about y:
pulse k is centered at t_k = tau*(k - 1/2) and echo N forms at t = N*tau.
The cumulative control phase Phi(t) fixes the toggling-frame modulation
vector f = (-sin Phi, 0, cos Phi); filters are squared Fourier magnitudes of
the modulation components, normalized so that chi = (t^2/2) * int S*F dw.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import (
    ConfigurationError,
    ResolutionError,
    ValidationError,
)

__all__ = [
    "PulseShape",
    "ResonatorModel",
    "PulseTrain",
    "PhaseProfile",
    "ModulationFunction",
    "FilterFunction",
    "FiniteCorrection",
    "PeriodTransform",
    "default_time_step",
    "build_phase_profile",
    "modulation_from_phase",
    "filter_from_modulation",
    "delta_filter_peaks",
    "finite_correction",
    "flip_angle_split_prediction",
    "period_transform",
    "dirichlet_kernel_sq",
]

_SHAPE_KINDS = ("instantaneous", "square", "gaussian")


@dataclass(frozen=True)
class PulseShape:
    """Programmed pulse envelope before any resonator distortion."""

    kind: str
    duration: float = 0.0
    gaussian_sigma: float = 0.0

    def __post_init__(self):
        if self.kind not in _SHAPE_KINDS:
            raise ValidationError(f"unknown pulse shape kind {self.kind!r}")
        if self.kind == "instantaneous":
            if self.duration != 0.0:
                raise ValidationError("instantaneous pulses have no duration")
        else:
            if not (math.isfinite(self.duration) and self.duration > 0):
                raise ValidationError("finite pulse needs duration > 0")
        if self.kind == "gaussian":
            if not (0 < self.gaussian_sigma < self.duration):
                raise ValidationError("need 0 < gaussian_sigma < duration")
        elif self.gaussian_sigma:
            raise ValidationError("gaussian_sigma only applies to gaussian pulses")

    @classmethod
    def instantaneous(cls) -> "PulseShape":
        return cls("instantaneous")

    @classmethod
    def square(cls, duration: float) -> "PulseShape":
        return cls("square", duration)

    @classmethod
    def gaussian(cls, duration: float, sigma: float) -> "PulseShape":
        return cls("gaussian", duration, sigma)


@dataclass(frozen=True)
class ResonatorModel:
    """Resonator as a one-pole ring-down with time constant 2 Q / omega0."""

    omega0: float
    q_factor: float

    def __post_init__(self):
        if not (math.isfinite(self.omega0) and self.omega0 > 0):
            raise ValidationError("omega0 must be finite and > 0")
        if not (math.isfinite(self.q_factor) and self.q_factor >= 1):
            raise ValidationError("q_factor must be >= 1")

    @property
    def ring_down_time(self) -> float:
        return 2.0 * self.q_factor / self.omega0


@dataclass(frozen=True)
class PulseTrain:
    """CPMG schedule: delay tau, echo count, flip angle, and pulse realism."""

    tau: float
    n_pulses: int
    beta: float = math.pi
    shape: PulseShape = field(default_factory=PulseShape.instantaneous)
    resonator: Optional[ResonatorModel] = None

    def __post_init__(self):
        if not (math.isfinite(self.tau) and self.tau > 0):
            raise ValidationError("tau must be finite and > 0")
        if self.tau <= self.shape.duration:
            raise ValidationError("tau must exceed the pulse duration")
        if self.n_pulses < 1:
            raise ValidationError("n_pulses must be >= 1")
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise ValidationError("beta must be finite and > 0")

    def with_tau(self, tau: float, n_pulses: Optional[int] = None) -> "PulseTrain":
        return replace(self, tau=tau,
                       n_pulses=self.n_pulses if n_pulses is None else n_pulses)


@dataclass(frozen=True)
class PhaseProfile:
    """Cumulative control phase Phi(t) sampled at step dt from t = 0."""

    dt: float
    phi: np.ndarray

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.phi.size) * self.dt


@dataclass(frozen=True)
class ModulationFunction:
    """Toggling-frame components f_x, f_z on the phase-profile grid."""

    dt: float
    f_x: np.ndarray
    f_z: np.ndarray

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.f_z.size) * self.dt


@dataclass(frozen=True)
class FilterFunction:
    """Sampled multi-axis filter on a symmetric frequency grid (rad/s)."""

    omega: np.ndarray
    fx_vals: np.ndarray
    fz_vals: np.ndarray
    total: np.ndarray

    def total_at(self, omega) -> np.ndarray:
        return np.interp(omega, self.omega, self.total)


@dataclass(frozen=True)
class FiniteCorrection:
    """Tabulated A(omega) = F_realistic / F_ideal at ideal filter peaks.

    Built once from a CPMG-1 reference; independent of the interpulse delay,
    so it can be interpolated at any queried peak frequency.
    """

    omega: np.ndarray
    a_vals: np.ndarray

    def at(self, omega) -> np.ndarray:
        return np.interp(np.abs(omega), self.omega, self.a_vals)


def default_time_step(train: PulseTrain) -> float:
    """Uniform dt resolving both the pulse envelope and the interpulse plateau.

    The step is tau / 2^k so pulse centers and echo times fall exactly on grid
    samples, which the periodic filter construction relies on.
    """
    if train.shape.kind == "instantaneous":
        n1 = 1024
    else:
        raw = min(train.shape.duration / 50.0, train.tau / 512.0)
        n1 = 1 << max(9, int(math.ceil(math.log2(train.tau / raw))))
    return train.tau / n1


def _check_resolution(train: PulseTrain, dt: float) -> int:
    if train.shape.kind == "instantaneous":
        if dt > train.tau / 1000.0 * (1 + 1e-12):
            raise ResolutionError(
                f"dt={dt:g} too coarse: instantaneous pulses need dt <= tau/1000")
    elif dt > train.shape.duration / 20.0 * (1 + 1e-12):
        raise ResolutionError(
            f"dt={dt:g} too coarse: finite pulses need dt <= duration/20")
    n1 = int(round(train.tau / dt))
    if n1 < 8 or abs(n1 * dt - train.tau) > 1e-9 * train.tau:
        raise ResolutionError(
            f"dt={dt:g} must divide tau={train.tau:g} into >= 8 equal steps")
    return n1


def _period_envelope(train: PulseTrain, dt: float,
                     overlap_tol: float = 1e-3) -> np.ndarray:
    """One-period control envelope with the pulse centered at tau/2.

    The resonator ring-down is applied by convolution and the result is
    re-centered so the half-area point of the envelope sits at the pulse
    center (the accumulated phase there is beta/2).  Envelope area spilling
    past the period boundary beyond ``overlap_tol`` of the total is a
    configuration error (ring-down reaching the next pulse).
    """
    n1 = _check_resolution(train, dt)
    t = np.arange(n1) * dt
    c = 0.5 * train.tau
    shape = train.shape
    if shape.kind == "instantaneous":
        env = np.zeros(n1)
        env[n1 // 2] = 1.0
    elif shape.kind == "square":
        env = (np.abs(t - c) <= 0.5 * shape.duration * (1 + 1e-12)).astype(float)
    else:
        env = np.exp(-((t - c) ** 2) / (2.0 * shape.gaussian_sigma**2))
        env[np.abs(t - c) > 0.5 * shape.duration] = 0.0
    if train.resonator is not None:
        t_ring = train.resonator.ring_down_time
        n_ring = int(min(math.ceil(27.7 * t_ring / dt), 8 * n1)) + 1
        kernel = np.exp(-np.arange(n_ring) * dt / t_ring)
        full = np.convolve(env, kernel)
        area = np.cumsum(full) - 0.5 * full
        k_half = int(np.searchsorted(area, 0.5 * full.sum()))
        idx = np.arange(full.size) + (n1 // 2 - k_half)
        env = np.zeros(n1)
        inside = (idx >= 0) & (idx < n1)
        np.add.at(env, idx[inside], full[inside])
        lost = full[~inside].sum() / full.sum()
        if lost > overlap_tol:
            raise ConfigurationError(
                f"ring-down spills {lost:.2e} of the pulse area past the "
                f"interpulse window (tolerance {overlap_tol:g})")
    return env


def _period_phase_increment(train: PulseTrain, dt: float,
                            overlap_tol: float = 1e-3) -> np.ndarray:
    """Cumulative phase over one period: n1+1 samples from 0 to beta."""
    env = _period_envelope(train, dt, overlap_tol)
    padded = np.append(env, 0.0)
    inc = np.concatenate(
        ([0.0], np.cumsum(0.5 * (padded[:-1] + padded[1:]))))
    return train.beta * inc / inc[-1]


def build_phase_profile(train: PulseTrain, dt: Optional[float] = None,
                        overlap_tol: float = 1e-3) -> PhaseProfile:
    """Cumulative phase Phi(t) for the full train over [0, n_pulses * tau].

    Each pulse's completed increment is normalized to exactly beta, and the
    envelope is centered so Phi(tau/2) = beta/2 at the first pulse center.
    """
    if dt is None:
        dt = default_time_step(train)
    inc = _period_phase_increment(train, dt, overlap_tol)
    n1 = inc.size - 1
    n_p = train.n_pulses
    phi = np.empty(n_p * n1 + 1)
    blocks = inc[np.newaxis, :n1] + train.beta * np.arange(n_p)[:, np.newaxis]
    phi[: n_p * n1] = blocks.reshape(-1)
    phi[-1] = train.beta * n_p
    return PhaseProfile(dt=dt, phi=phi)


def modulation_from_phase(profile: PhaseProfile) -> ModulationFunction:
    """f_x = -sin(Phi), f_z = cos(Phi), samplewise."""
    if profile.phi.size == 0:
        raise ValidationError("empty phase profile")
    return ModulationFunction(dt=profile.dt, f_x=-np.sin(profile.phi),
                              f_z=np.cos(profile.phi))


def filter_from_modulation(mod: ModulationFunction, t_detect: float,
                           pad_factor: int = 4) -> FilterFunction:
    """Multi-axis filter F_mu(w) = |FT of f_mu over [0, t]|^2 / (2 pi t^2).

    The modulation is truncated or zero-padded to span [0, t_detect]; the
    output grid is symmetric in omega with resolution <= 2*pi/(pad_factor*t).
    """
    if mod.f_z.size == 0:
        raise ValidationError("empty modulation function")
    if not (t_detect > 0):
        raise ValidationError("t_detect must be > 0")
    dt = mod.dt
    n = int(round(t_detect / dt)) + 1
    if n < 4:
        raise ResolutionError("t_detect spans fewer than 4 modulation samples")

    def prepare(vals):
        out = np.zeros(n)
        m = min(n, vals.size)
        out[:m] = vals[:m]
        out[0] *= 0.5
        out[-1] *= 0.5
        return out

    n_fft = 1 << int(math.ceil(math.log2(max(pad_factor, 1) * n)))
    ft_x = np.fft.fft(prepare(mod.f_x), n_fft) * dt
    ft_z = np.fft.fft(prepare(mod.f_z), n_fft) * dt
    norm = 1.0 / (2.0 * math.pi * t_detect**2)
    omega = np.fft.fftshift(np.fft.fftfreq(n_fft, dt)) * 2.0 * math.pi
    fx = np.fft.fftshift(np.abs(ft_x) ** 2) * norm
    fz = np.fft.fftshift(np.abs(ft_z) ** 2) * norm
    return FilterFunction(omega=omega, fx_vals=fx, fz_vals=fz, total=fx + fz)


def delta_filter_peaks(tau: float, t: float, m_max: int):
    """Ideal-limit delta-peak approximation: (omega_m, weight) for odd m.

    Weights are per positive-frequency peak; the mirror peaks at -omega_m
    carry the same weight, so chi = (t^2/2) * 2 * sum(S(omega_m) * weight).
    """
    if m_max < 1 or m_max % 2 == 0:
        raise ValidationError("m_max must be an odd integer >= 1")
    m = np.arange(1, m_max + 1, 2)
    omega_m = m * math.pi / tau
    weights = 4.0 / (t * tau**2 * omega_m**2)
    return list(zip(omega_m.tolist(), weights.tolist()))


def flip_angle_split_prediction(beta: float, tau: float) -> float:
    """Filter-peak splitting frequency (beta - pi)/tau caused by flip errors."""
    return (beta - math.pi) / tau


def _local_maxima(vals: np.ndarray) -> np.ndarray:
    left = vals[1:-1] > vals[:-2]
    right = vals[1:-1] >= vals[2:]
    return np.nonzero(left & right)[0] + 1


def finite_correction(shape: PulseShape, resonator: Optional[ResonatorModel],
                      beta: float = math.pi, tau_ref: float = 4e-6,
                      floor: float = 1e-12) -> FiniteCorrection:
    """A(omega) from the ratio of realistic to ideal CPMG-1 filters.

    Both filters are built on one shared grid; the ratio is tabulated only at
    the ideal filter's peak frequencies (it is ill-conditioned at the zeros)
    and anchored to A(0) = 1, with linear interpolation in between.
    """
    real_train = PulseTrain(tau=tau_ref, n_pulses=1, beta=beta, shape=shape,
                            resonator=resonator)
    dt = default_time_step(real_train)
    mod_real = modulation_from_phase(build_phase_profile(real_train, dt))
    ideal_train = PulseTrain(tau=tau_ref, n_pulses=1)
    mod_ideal = modulation_from_phase(build_phase_profile(ideal_train, dt))
    filt_real = filter_from_modulation(mod_real, tau_ref, pad_factor=8)
    filt_ideal = filter_from_modulation(mod_ideal, tau_ref, pad_factor=8)
    pos = filt_ideal.omega > 0
    omega = filt_ideal.omega[pos]
    ideal = filt_ideal.total[pos]
    real = filt_real.total[pos]
    peaks = _local_maxima(ideal)
    peaks = peaks[ideal[peaks] >= floor * ideal.max()]
    if peaks.size == 0:
        raise ConfigurationError("ideal reference filter has no usable peaks")
    return FiniteCorrection(
        omega=np.concatenate(([0.0], omega[peaks])),
        a_vals=np.concatenate(([1.0], real[peaks] / ideal[peaks])))


def dirichlet_kernel_sq(theta, n: int):
    """|sum_{k=0}^{n-1} e^{i k theta}|^2 = sin^2(n theta/2)/sin^2(theta/2)."""
    th = np.asarray(theta, dtype=float)
    den = np.sin(0.5 * th)
    num = np.sin(0.5 * n * th)
    small = np.abs(den) < 1e-12
    safe = np.where(small, 1.0, den)
    out = np.where(small, float(n) ** 2, (num / safe) ** 2)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class PeriodTransform:
    """Fourier transform Z1 of one period of e^{i Phi(t)}.

    For identical periods the train transform factorizes: over N periods
    |Z_N(w)|^2 = |Z1(w)|^2 * D_N(beta - w tau) with D_N the squared Dirichlet
    kernel, and the multi-axis filter is
    F_total(w) = (|Z_N(w)|^2 + |Z_N(-w)|^2) / (4 pi t^2).
    """

    tau: float
    beta: float
    dt: float
    omega: np.ndarray
    z1_sq: np.ndarray

    def z1_sq_at(self, omega) -> np.ndarray:
        return np.interp(omega, self.omega, self.z1_sq)

    def filter_total(self, omega, n_echo: int) -> np.ndarray:
        w = np.asarray(omega, dtype=float)
        t = n_echo * self.tau
        d_plus = dirichlet_kernel_sq(self.beta - w * self.tau, n_echo)
        d_minus = dirichlet_kernel_sq(self.beta + w * self.tau, n_echo)
        out = (self.z1_sq_at(w) * d_plus + self.z1_sq_at(-w) * d_minus) / (
            4.0 * math.pi * t**2)
        return out if out.ndim else float(out)


def period_transform(train: PulseTrain, dt: Optional[float] = None,
                     pad_factor: int = 32,
                     overlap_tol: float = 1e-3) -> PeriodTransform:
    """Build the single-period transform underlying a periodic CPMG filter."""
    if dt is None:
        dt = default_time_step(train)
    inc = _period_phase_increment(train, dt, overlap_tol)
    z = np.exp(1j * inc)
    z[0] *= 0.5
    z[-1] *= 0.5
    n_fft = 1 << int(math.ceil(math.log2(pad_factor * z.size)))
    z1 = np.fft.fft(z, n_fft) * dt
    omega = np.fft.fftshift(np.fft.fftfreq(n_fft, dt)) * 2.0 * math.pi
    return PeriodTransform(tau=train.tau, beta=train.beta, dt=dt, omega=omega,
                           z1_sq=np.fft.fftshift(np.abs(z1) ** 2))
