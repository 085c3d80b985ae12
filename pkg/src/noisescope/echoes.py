"""Raw echo time-trace processing: windowing, I/Q integration, field sweeps.

Traces are assumed already demodulated to baseband in-phase/quadrature form
(the spectrometer hardware does this on board); this module reduces them to
scalar echo amplitudes and assembles echo-detected field-sweep spectra.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError

__all__ = [
    "IQTrace",
    "FieldSweep",
    "blackman_window",
    "echo_amplitude",
    "field_sweep_spectrum",
]


@dataclass(frozen=True)
class IQTrace:
    """Baseband echo recording: in-phase and quadrature samples at step dt."""

    dt: float
    i_vals: np.ndarray
    q_vals: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "i_vals", np.asarray(self.i_vals, dtype=float))
        object.__setattr__(self, "q_vals", np.asarray(self.q_vals, dtype=float))
        if self.i_vals.shape != self.q_vals.shape or self.i_vals.ndim != 1:
            raise ValidationError("i_vals and q_vals must be equal-length 1-D")
        if self.i_vals.size < 8:
            raise ValidationError("traces need at least 8 samples")
        if not self.dt > 0:
            raise ValidationError("dt must be > 0")


@dataclass(frozen=True)
class FieldSweep:
    """One echo trace per magnetic field value (fields in mT, sorted)."""

    fields: np.ndarray
    traces: tuple

    def __post_init__(self):
        object.__setattr__(self, "fields", np.asarray(self.fields, dtype=float))
        object.__setattr__(self, "traces", tuple(self.traces))
        if self.fields.size != len(self.traces):
            raise ValidationError("need exactly one trace per field")
        if np.any(np.diff(self.fields) < 0):
            raise ValidationError("fields must be sorted ascending")


def blackman_window(trace: IQTrace) -> IQTrace:
    """Apply the standard (alpha = 0.16) Blackman taper samplewise."""
    w = np.blackman(trace.i_vals.size)
    return IQTrace(dt=trace.dt, i_vals=trace.i_vals * w,
                   q_vals=trace.q_vals * w)


def echo_amplitude(trace: IQTrace) -> tuple:
    """(amplitude, phase) of a windowed, integrated echo trace.

    The Blackman-windowed trace is summed to a single complex (I, Q) pair;
    amplitude = sqrt(I^2 + Q^2) and phase = atan2(Q, I).  A zero trace
    reports phase 0.
    """
    windowed = blackman_window(trace)
    i_sum = float(windowed.i_vals.sum())
    q_sum = float(windowed.q_vals.sum())
    amplitude = math.hypot(i_sum, q_sum)
    phase = math.atan2(q_sum, i_sum) if amplitude > 0 else 0.0
    return amplitude, phase


def field_sweep_spectrum(sweep: FieldSweep) -> tuple:
    """(fields, dc values) of the windowed Fourier transform per field.

    The dc bin of the transform of the windowed complex trace i + 1j*q forms
    the echo-detected field-sweep spectrum; it equals the windowed sum.
    """
    lengths = {t.i_vals.size for t in sweep.traces}
    if len(lengths) > 1:
        raise ValidationError("all traces in a sweep must share one length")
    dc = np.empty(len(sweep.traces), dtype=complex)
    for k, trace in enumerate(sweep.traces):
        w = blackman_window(trace)
        spectrum = np.fft.fft(w.i_vals + 1j * w.q_vals)
        dc[k] = spectrum[0]
    return sweep.fields, dc
