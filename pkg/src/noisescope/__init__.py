"""CPMG dynamical-decoupling noise spectroscopy workbench.

Forward half: parametric noise spectra -> filter functions -> decoherence
exponents -> synthetic echo-decay experiments, with a Monte-Carlo bath
simulator as an independent oracle.  Inverse half: chi grids -> contour
traces -> power-law fits -> fundamental and harmonic-scan spectral
reconstruction.
"""

from .analysis import (
    ContourTrace,
    HarmonicScanConfig,
    PeakFit,
    PowerLawFit,
    RelaxationFit,
    SegmentInfo,
    SpectrumEstimate,
    background_chi,
    build_chi_grid,
    concentration_from_t2,
    fit_gaussian_peak,
    fit_power_law,
    fit_relaxation,
    harmonic_scan,
    peak_vs_harmonic_fit,
    per_harmonic_peak_table,
    reconstruct_spectrum,
    sharp_peak_estimate,
    spectrum_from_contour,
    trace_contour,
    zero_freq_estimate,
)
from .bath import (
    BathConfig,
    EnsembleResult,
    LineComponent,
    OUComponent,
    ensemble_coherence,
    sample_line,
    sample_ou,
)
from .echoes import (
    FieldSweep,
    IQTrace,
    blackman_window,
    echo_amplitude,
    field_sweep_spectrum,
)
from .filters import (
    FilterFunction,
    FiniteCorrection,
    ModulationFunction,
    PhaseProfile,
    PulseShape,
    PulseTrain,
    ResonatorModel,
    build_phase_profile,
    default_time_step,
    delta_filter_peaks,
    filter_from_modulation,
    finite_correction,
    flip_angle_split_prediction,
    modulation_from_phase,
    period_transform,
)
from .forward import (
    ChiGrid,
    ExperimentRecord,
    SamplingPlan,
    chi_discrete,
    chi_overlap,
    chi_power_law,
    chi_vs_echo,
    observed_coherence,
    power_law_prefactor,
    synthesize_experiment,
    zeta_real,
)
from .spectra import (
    Composite,
    GaussianPeak,
    Lorentzian,
    LorentzianEnsemble,
    PowerLaw,
    SpectrumModel,
    eval_lorentzian_ensemble,
    eval_spectrum,
    model_from_dict,
    model_to_dict,
)

__version__ = "0.1.0"
