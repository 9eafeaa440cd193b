"""Simulation and analysis of a triggered microwave single-photon emitter
measured by heterodyne Hanbury Brown-Twiss correlation."""

from .archive import ArchiveReader, ArchiveWriter, read_archive, write_archive
from .chain import (
    ChainParams,
    IQTrace,
    ShotBlock,
    ShotRecord,
    digital_downconvert,
    matched_filter,
    synthesize_block,
    synthesize_shot,
)
from .config import ExperimentConfig, RunManifest, build_config, load_config
from .correlator import (
    CorrelationAccumulator,
    CorrelationResult,
    CorrelatorConfig,
    HBTCorrelator,
    LagGrid,
    PeakTable,
    accumulate_shot,
    finalize,
    merge,
    peak_extract,
    rabi_traces,
)
from .emission import (
    ModeOutcome,
    PreparedState,
    PulseTrainSpec,
    StateKind,
    TemporalMode,
    coherent_state,
    emission_envelope,
    prepare_state,
    sample_joint_heterodyne,
    sample_pulse_train,
    vacuum_state,
)
from .errors import PhotonStatError, ValidationError
from .fitting import (
    FitReport,
    FluxSpectrumFit,
    PowerSweepReflectionFit,
    RabiFit,
    ReflectionFit,
    fit_flux_spectrum,
    fit_rabi,
    fit_reflection,
    g2_theory,
    shots_to_precision,
    total_efficiency,
)
from .pipeline import SimulationPlan, default_mode, simulate_correlation
from .qubit import (
    DecayRates,
    DrivePoint,
    FluxBias,
    QubitParams,
    efficiency,
    flux_spectrum_map,
    reflection_coefficient,
    transition_frequency,
)
from .rng import KeyedStream

__version__ = "0.1.0"

__all__ = [
    "ArchiveReader", "ArchiveWriter", "read_archive", "write_archive",
    "ChainParams", "IQTrace", "ShotBlock", "ShotRecord", "digital_downconvert", "matched_filter",
    "synthesize_block", "synthesize_shot",
    "ExperimentConfig", "RunManifest", "build_config", "load_config",
    "CorrelationAccumulator", "CorrelationResult", "CorrelatorConfig", "HBTCorrelator", "LagGrid",
    "PeakTable", "accumulate_shot", "finalize", "merge", "peak_extract", "rabi_traces",
    "ModeOutcome", "PreparedState", "PulseTrainSpec", "StateKind", "TemporalMode", "coherent_state",
    "emission_envelope", "prepare_state", "sample_joint_heterodyne", "sample_pulse_train", "vacuum_state",
    "PhotonStatError", "ValidationError",
    "FitReport", "FluxSpectrumFit", "PowerSweepReflectionFit", "RabiFit", "ReflectionFit",
    "fit_flux_spectrum", "fit_rabi", "fit_reflection", "g2_theory", "shots_to_precision",
    "total_efficiency",
    "SimulationPlan", "default_mode", "simulate_correlation",
    "DecayRates", "DrivePoint", "FluxBias", "QubitParams", "efficiency", "flux_spectrum_map",
    "reflection_coefficient", "transition_frequency",
    "KeyedStream",
]
