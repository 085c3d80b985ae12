"""Monte-Carlo oracle: semiclassical noise trajectories and ensemble coherence.

Trajectories carry the gyromagnetically scaled field (units rad/s), so an
Ornstein-Uhlenbeck component with parameters (delta, tau_c) realizes exactly
the Lorentzian spectrum 2 delta^2 tau_c / (1 + w^2 tau_c^2) and a spectral
line realizes the Gaussian peak model.  This gives an estimate of the
coherence L = <cos phi> that is independent of the filter-function route.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.signal import lfilter

from .errors import ResamplingWarning, ValidationError
from .filters import ModulationFunction

__all__ = [
    "OUComponent",
    "LineComponent",
    "BathConfig",
    "EnsembleResult",
    "sample_ou",
    "sample_line",
    "ensemble_coherence",
]


@dataclass(frozen=True)
class OUComponent:
    """Ornstein-Uhlenbeck field: std delta (rad/s), correlation time tau_c."""

    delta: float
    tau_c: float

    def __post_init__(self):
        if not (self.delta > 0 and self.tau_c > 0):
            raise ValidationError("OU component needs delta > 0 and tau_c > 0")


@dataclass(frozen=True)
class LineComponent:
    """Stationary Gaussian process whose PSD is the GaussianPeak model."""

    A: float
    omega_p: float
    sigma: float

    def __post_init__(self):
        if self.A < 0 or self.omega_p <= 0 or self.sigma <= 0:
            raise ValidationError(
                "line component needs A >= 0, omega_p > 0, sigma > 0")


@dataclass(frozen=True)
class BathConfig:
    ou_components: tuple = ()
    line_components: tuple = ()
    dt: float = 1e-8
    duration: float = 1e-4
    n_trajectories: int = 1000
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "ou_components", tuple(self.ou_components))
        object.__setattr__(self, "line_components", tuple(self.line_components))
        if not (self.dt > 0 and self.duration > self.dt):
            raise ValidationError("need 0 < dt < duration")
        if self.n_trajectories < 100:
            raise ValidationError("n_trajectories must be >= 100")
        for c in self.ou_components:
            if self.dt > c.tau_c / 20.0:
                raise ValidationError(
                    f"dt={self.dt:g} too coarse for tau_c={c.tau_c:g} "
                    "(need dt <= tau_c/20)")
        for c in self.line_components:
            if self.dt > 2.0 * math.pi / (20.0 * c.omega_p):
                raise ValidationError(
                    f"dt={self.dt:g} too coarse for omega_p={c.omega_p:g} "
                    "(need dt <= 2*pi/(20*omega_p))")


@dataclass
class EnsembleResult:
    t_axis: np.ndarray
    mean_coherence: np.ndarray
    std_err: np.ndarray


def sample_ou(delta: float, tau_c: float, dt: float, duration: float,
              stream: np.random.Generator) -> np.ndarray:
    """One stationary O-U trajectory by exact discretization.

    x_{k+1} = x_k e^{-dt/tau_c} + delta sqrt(1 - e^{-2 dt/tau_c}) xi_k with
    standard-normal xi and a stationary start x_0 ~ N(0, delta^2); exact for
    any dt because the transition kernel is sampled, not integrated.
    """
    n = int(round(duration / dt))
    decay = math.exp(-dt / tau_c)
    kick = delta * math.sqrt(max(0.0, 1.0 - decay * decay))
    x0 = delta * stream.standard_normal()
    noise = kick * stream.standard_normal(n)
    rest = lfilter([1.0], [1.0, -decay], noise, zi=np.array([decay * x0]))[0]
    return np.concatenate(([x0], rest))


def sample_line(A: float, omega_p: float, sigma: float, dt: float,
                duration: float, stream: np.random.Generator,
                k_components: int = 256) -> np.ndarray:
    """One spectral-line trajectory from a random cosine/sine superposition.

    Frequencies are drawn from N(omega_p, sigma^2) and amplitudes are
    independent Gaussians scaled so the ensemble PSD equals the GaussianPeak
    model: total variance (1/2pi) * int S dw = 2 A sigma / sqrt(2 pi).
    """
    if k_components < 64:
        raise ValidationError("k_components must be >= 64")
    n = int(round(duration / dt)) + 1
    if A == 0.0:
        stream.normal(size=3 * k_components)  # keep the stream advancing
        return np.zeros(n)
    freqs = stream.normal(omega_p, sigma, k_components)
    amp_scale = math.sqrt(2.0 * A * sigma / math.sqrt(2.0 * math.pi)
                          / k_components)
    a_cos = amp_scale * stream.standard_normal(k_components)
    a_sin = amp_scale * stream.standard_normal(k_components)
    phase = freqs[:, np.newaxis] * (np.arange(n) * dt)[np.newaxis, :]
    return a_cos @ np.cos(phase) + a_sin @ np.sin(phase)


def _trajectory(config: BathConfig, stream: np.random.Generator,
                n_samples: int) -> np.ndarray:
    duration = (n_samples - 1) * config.dt
    b = np.zeros(n_samples)
    for c in config.ou_components:
        b += sample_ou(c.delta, c.tau_c, config.dt, duration, stream)
    for c in config.line_components:
        b += sample_line(c.A, c.omega_p, c.sigma, config.dt, duration, stream)
    return b


def ensemble_coherence(config: BathConfig, mod: ModulationFunction,
                       echo_times: Optional[Sequence[float]] = None
                       ) -> EnsembleResult:
    """<cos phi> at each echo time, phi = int f_z(t') b(t') dt' per trajectory.

    The phase integral is a trapezoid on the modulation grid; if the bath
    step does not match it, f_z is resampled by linear interpolation (with a
    ResamplingWarning).  Each trajectory draws from its own stream spawned
    from (seed, trajectory index), so results are chunking- and
    order-independent.  std_err is the jackknife standard error of the mean
    (identical to s/sqrt(n) for a sample mean).
    """
    span = min(config.duration, (mod.f_z.size - 1) * mod.dt)
    if echo_times is None:
        echo_times = [span]
    t_axis = np.asarray(sorted(echo_times), dtype=float)
    if t_axis.size == 0 or t_axis[0] <= 0 or t_axis[-1] > span * (1 + 1e-9):
        raise ValidationError("echo times must lie in (0, duration]")

    if abs(config.dt - mod.dt) <= 1e-12 * mod.dt:
        dt = mod.dt
        n_samples = int(round(span / dt)) + 1
        f_z = mod.f_z[:n_samples]
    else:
        warnings.warn("bath and modulation grids differ; resampling f_z",
                      ResamplingWarning, stacklevel=2)
        dt = config.dt
        n_samples = int(round(span / dt)) + 1
        f_z = np.interp(np.arange(n_samples) * dt, mod.times, mod.f_z)

    echo_idx = np.round(t_axis / dt).astype(int)
    if np.any(np.abs(echo_idx * dt - t_axis) > 0.5 * dt + 1e-15):
        raise ValidationError("echo times must fall on the integration grid")

    n_traj = config.n_trajectories
    cos_phi = np.empty((n_traj, t_axis.size))
    for i in range(n_traj):
        stream = np.random.default_rng(
            np.random.SeedSequence(entropy=config.seed, spawn_key=(i,)))
        b = _trajectory(config, stream, n_samples)
        y = f_z * b
        phi = np.concatenate(
            ([0.0], np.cumsum(0.5 * (y[1:] + y[:-1]) * dt)))
        cos_phi[i] = np.cos(phi[echo_idx])
    mean = cos_phi.mean(axis=0)
    std_err = cos_phi.std(axis=0, ddof=1) / math.sqrt(n_traj)
    return EnsembleResult(t_axis=t_axis, mean_coherence=mean, std_err=std_err)
