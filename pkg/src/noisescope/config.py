"""TOML run configuration: parsing and section builders.

Numbers are plain SI-suffixed floats (e.g. ``tau = 1.4e-6``); no unit
parsing.  Each CLI subcommand consumes the sections it needs.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

from .analysis import HarmonicScanConfig
from .errors import ValidationError
from .filters import PulseShape, PulseTrain, ResonatorModel
from .forward import SamplingPlan
from .spectra import SpectrumModel, model_from_dict

__all__ = [
    "RunConfig",
    "load_config",
    "spectrum_from_section",
    "train_from_section",
    "plan_from_section",
    "scan_from_section",
]


@dataclass
class RunConfig:
    """Parsed configuration file plus the directory it came from."""

    raw: dict
    base_dir: Path
    seed: Optional[int] = None

    def section(self, name: str, required: bool = True) -> dict:
        sec = self.raw.get(name)
        if sec is None:
            if required:
                raise ValidationError(f"config is missing the [{name}] section")
            return {}
        if not isinstance(sec, dict):
            raise ValidationError(f"[{name}] must be a table")
        return sec

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = _toml.load(fh)
    except FileNotFoundError:
        raise ValidationError(f"config file not found: {path}")
    except _toml.TOMLDecodeError as exc:
        raise ValidationError(f"config parse error in {path}: {exc}")
    seed = raw.get("seed")
    if seed is not None and not isinstance(seed, int):
        raise ValidationError("seed must be an integer")
    return RunConfig(raw=raw, base_dir=path.parent, seed=seed)


def spectrum_from_section(section: dict) -> SpectrumModel:
    return model_from_dict(section)


def _get(section: dict, key: str, default=None, required: bool = False):
    if key in section:
        return section[key]
    if required:
        raise ValidationError(f"missing required config field {key!r}")
    return default


def train_from_section(section: dict, tau: float) -> PulseTrain:
    """Pulse-train template at a placeholder tau (replaced per sweep point)."""
    kind = _get(section, "shape", "instantaneous")
    if kind == "instantaneous":
        shape = PulseShape.instantaneous()
    elif kind == "square":
        shape = PulseShape.square(float(_get(section, "duration", required=True)))
    elif kind == "gaussian":
        shape = PulseShape.gaussian(
            float(_get(section, "duration", required=True)),
            float(_get(section, "gaussian_sigma", required=True)))
    else:
        raise ValidationError(f"unknown pulse shape {kind!r}")
    resonator = None
    if "resonator_q" in section or "resonator_omega0" in section:
        resonator = ResonatorModel(
            omega0=float(_get(section, "resonator_omega0", required=True)),
            q_factor=float(_get(section, "resonator_q", required=True)))
    return PulseTrain(tau=tau, n_pulses=1,
                      beta=float(_get(section, "beta", math.pi)),
                      shape=shape, resonator=resonator)


def tau_list_from_section(section: dict) -> tuple:
    if "tau_list" in section:
        return tuple(float(x) for x in section["tau_list"])
    lo = float(_get(section, "tau_min", required=True))
    hi = float(_get(section, "tau_max", required=True))
    count = int(_get(section, "tau_count", required=True))
    spacing = _get(section, "tau_spacing", "log")
    if count < 1 or not (0 < lo <= hi):
        raise ValidationError("need tau_count >= 1 and 0 < tau_min <= tau_max")
    if spacing == "log":
        return tuple(np.geomspace(lo, hi, count).tolist())
    if spacing == "linear":
        return tuple(np.linspace(lo, hi, count).tolist())
    raise ValidationError(f"unknown tau_spacing {spacing!r}")


def plan_from_section(section: dict, seed: Optional[int]) -> SamplingPlan:
    return SamplingPlan(
        tau_list=tau_list_from_section(section),
        max_sequence_time=float(_get(section, "max_sequence_time",
                                     required=True)),
        noise_floor_chi=float(_get(section, "noise_floor_chi", math.inf)),
        shot_noise_sigma=float(_get(section, "shot_noise_sigma", 0.0)),
        seed=seed,
        averages=int(_get(section, "averages", 1)))


def scan_from_section(section: dict) -> HarmonicScanConfig:
    return HarmonicScanConfig(
        window_w=float(_get(section, "window_w", required=True)),
        epsilon=float(_get(section, "epsilon", required=True)),
        tau_min=float(_get(section, "tau_min", required=True)),
        t_max=float(_get(section, "t_max", required=True)),
        omega_scan_range=(
            float(_get(section, "omega_scan_min", required=True)),
            float(_get(section, "omega_scan_max", required=True))),
        chi_noise_threshold=float(_get(section, "chi_noise_threshold", 4.5)),
        tau_max=(float(section["tau_max"]) if "tau_max" in section else None))
