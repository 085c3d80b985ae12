"""Parametric noise power-spectral-density models.

All models are two-sided densities, even in omega, with omega in rad/s and
S(omega) in 1/s.  The convention is fixed so that ``chi = (t^2/2) * integral
S(w) F(w) dw`` is dimensionless when the filter function F carries units of
1/(s * rad/s), i.e. S is the plain Fourier transform of the autocorrelation
of the (gyromagnetically scaled) noise field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import singledispatch
from typing import Union

import numpy as np

from .errors import DomainError, ValidationError

__all__ = [
    "SpectrumModel",
    "PowerLaw",
    "Lorentzian",
    "GaussianPeak",
    "LorentzianEnsemble",
    "Composite",
    "eval_spectrum",
    "eval_lorentzian_ensemble",
    "high_frequency_bound",
    "model_to_dict",
    "model_from_dict",
]


def _require_finite_positive(name: str, value: float) -> None:
    if not math.isfinite(value) or value <= 0:
        raise ValidationError(f"{name} must be finite and > 0, got {value!r}")


@dataclass(frozen=True)
class PowerLaw:
    """S(w) = C |w|^-alpha.  C in 1/s * (rad/s)^alpha, alpha dimensionless."""

    C: float
    alpha: float

    def __post_init__(self):
        _require_finite_positive("C", self.C)
        if not math.isfinite(self.alpha):
            raise ValidationError(f"alpha must be finite, got {self.alpha!r}")


@dataclass(frozen=True)
class Lorentzian:
    """S(w) = 2 delta^2 tau_c / (1 + w^2 tau_c^2), the O-U process spectrum."""

    delta: float
    tau_c: float

    def __post_init__(self):
        _require_finite_positive("delta", self.delta)
        _require_finite_positive("tau_c", self.tau_c)


@dataclass(frozen=True)
class GaussianPeak:
    """Narrow spectral line of height A at +-omega_p with std width sigma."""

    A: float
    omega_p: float
    sigma: float

    def __post_init__(self):
        _require_finite_positive("A", self.A)
        _require_finite_positive("omega_p", self.omega_p)
        _require_finite_positive("sigma", self.sigma)


@dataclass(frozen=True)
class LorentzianEnsemble:
    """Ensemble of Lorentzians with correlation times distributed as p0/tau_c.

    S(w) = (2 delta^2 p0 / w) * (arctan(tau2 w) - arctan(tau1 w)) for w != 0,
    with the limit 2 delta^2 p0 (tau2 - tau1) at w = 0.  Scales as 1/w for
    1/tau2 << w << 1/tau1.
    """

    delta: float
    p0: float
    tau1: float
    tau2: float

    def __post_init__(self):
        _require_finite_positive("delta", self.delta)
        _require_finite_positive("p0", self.p0)
        _require_finite_positive("tau1", self.tau1)
        _require_finite_positive("tau2", self.tau2)
        if not self.tau1 < self.tau2:
            raise ValidationError(
                f"need tau1 < tau2, got tau1={self.tau1!r}, tau2={self.tau2!r}"
            )


@dataclass(frozen=True)
class Composite:
    """Sum of component spectra, evaluated in order."""

    terms: tuple

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if not self.terms:
            raise ValidationError("Composite requires at least one term")
        for term in self.terms:
            if not isinstance(term, (PowerLaw, Lorentzian, GaussianPeak,
                                     LorentzianEnsemble, Composite)):
                raise ValidationError(f"not a spectrum model: {term!r}")


SpectrumModel = Union[PowerLaw, Lorentzian, GaussianPeak, LorentzianEnsemble,
                      Composite]


def _as_abs_omega(omega):
    w = np.abs(np.asarray(omega, dtype=float))
    if not np.all(np.isfinite(w)):
        raise ValidationError("omega must be finite")
    return w


@singledispatch
def eval_spectrum(model, omega):
    """Evaluate S(|omega|) in 1/s for a model at omega (rad/s, scalar or array)."""
    raise ValidationError(f"not a spectrum model: {model!r}")


@eval_spectrum.register
def _(model: PowerLaw, omega):
    w = _as_abs_omega(omega)
    if np.any(w == 0.0):
        raise DomainError("power-law spectrum diverges at omega = 0")
    out = model.C * w ** (-model.alpha)
    return out if out.ndim else float(out)


@eval_spectrum.register
def _(model: Lorentzian, omega):
    w = _as_abs_omega(omega)
    out = 2.0 * model.delta**2 * model.tau_c / (1.0 + (w * model.tau_c) ** 2)
    return out if out.ndim else float(out)


@eval_spectrum.register
def _(model: GaussianPeak, omega):
    w = _as_abs_omega(omega)
    out = model.A * (
        np.exp(-((w - model.omega_p) ** 2) / (2.0 * model.sigma**2))
        + np.exp(-((w + model.omega_p) ** 2) / (2.0 * model.sigma**2))
    )
    return out if out.ndim else float(out)


@eval_spectrum.register
def _(model: LorentzianEnsemble, omega):
    return eval_lorentzian_ensemble(model, omega)


@eval_spectrum.register
def _(model: Composite, omega):
    w = np.asarray(omega, dtype=float)
    if w.ndim:
        parts = np.stack([np.asarray(eval_spectrum(t, w)) for t in model.terms])
        return parts.sum(axis=0)
    # scalar path: exact accumulation so later background subtractions do not
    # lose small terms to cancellation
    return math.fsum(float(eval_spectrum(t, w)) for t in model.terms)


def eval_lorentzian_ensemble(model: LorentzianEnsemble, omega):
    """Closed form of the tau_c-integrated Lorentzian ensemble.

    Uses arctan(b) - arctan(a) = arctan((b - a)/(1 + a b)), which stays
    accurate when tau2 - tau1 is small compared to either cutoff.
    """
    w = _as_abs_omega(omega)
    scale = 2.0 * model.delta**2 * model.p0
    span = model.tau2 - model.tau1
    with np.errstate(divide="ignore", invalid="ignore"):
        diff = np.arctan(w * span / (1.0 + model.tau1 * model.tau2 * w**2))
        out = np.where(w > 0.0, scale * diff / np.where(w > 0.0, w, 1.0),
                       scale * span)
    return out if out.ndim else float(out)


@singledispatch
def high_frequency_bound(model, omega_cut: float) -> float:
    """Upper bound on S(omega) over omega >= omega_cut (> 0)."""
    raise ValidationError(f"not a spectrum model: {model!r}")


@high_frequency_bound.register
def _(model: PowerLaw, omega_cut: float) -> float:
    if model.alpha >= 0:
        return eval_spectrum(model, omega_cut)
    return math.inf  # growing spectrum has no high-frequency bound


@high_frequency_bound.register
def _(model: Lorentzian, omega_cut: float) -> float:
    return eval_spectrum(model, omega_cut)


@high_frequency_bound.register
def _(model: LorentzianEnsemble, omega_cut: float) -> float:
    return eval_spectrum(model, omega_cut)


@high_frequency_bound.register
def _(model: GaussianPeak, omega_cut: float) -> float:
    if omega_cut <= model.omega_p:
        return 2.0 * model.A
    return eval_spectrum(model, omega_cut)


@high_frequency_bound.register
def _(model: Composite, omega_cut: float) -> float:
    return math.fsum(high_frequency_bound(t, omega_cut) for t in model.terms)


_KIND_FIELDS = {
    "power_law": ("C", "alpha"),
    "lorentzian": ("delta", "tau_c"),
    "gaussian_peak": ("A", "omega_p", "sigma"),
    "lorentzian_ensemble": ("delta", "p0", "tau1", "tau2"),
}

_KIND_CLASSES = {
    "power_law": PowerLaw,
    "lorentzian": Lorentzian,
    "gaussian_peak": GaussianPeak,
    "lorentzian_ensemble": LorentzianEnsemble,
}


def model_to_dict(model: SpectrumModel) -> dict:
    """Serialize a model to the key-value config block representation."""
    if isinstance(model, Composite):
        return {"kind": "composite",
                "terms": [model_to_dict(t) for t in model.terms]}
    for kind, cls in _KIND_CLASSES.items():
        if isinstance(model, cls):
            out = {"kind": kind}
            for name in _KIND_FIELDS[kind]:
                out[name] = getattr(model, name)
            return out
    raise ValidationError(f"not a spectrum model: {model!r}")


def model_from_dict(data: dict) -> SpectrumModel:
    """Build a model from its config block representation."""
    try:
        kind = data["kind"]
    except (KeyError, TypeError):
        raise ValidationError(f"spectrum config needs a 'kind' field: {data!r}")
    if kind == "composite":
        terms = data.get("terms")
        if not isinstance(terms, (list, tuple)) or not terms:
            raise ValidationError("composite spectrum needs a 'terms' list")
        return Composite(tuple(model_from_dict(t) for t in terms))
    if kind not in _KIND_CLASSES:
        raise ValidationError(f"unknown spectrum kind {kind!r}")
    fields = _KIND_FIELDS[kind]
    missing = [f for f in fields if f not in data]
    if missing:
        raise ValidationError(f"spectrum kind {kind!r} missing fields {missing}")
    extra = set(data) - set(fields) - {"kind"}
    if extra:
        raise ValidationError(f"spectrum kind {kind!r} has unknown fields {sorted(extra)}")
    try:
        kwargs = {f: float(data[f]) for f in fields}
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"non-numeric spectrum field: {exc}")
    return _KIND_CLASSES[kind](**kwargs)
