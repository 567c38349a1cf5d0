"""Privacy-preserving gaze pipeline: event detection, privacy mechanisms,
RBF re-identification, utility metrics and the Gatekeeper query API."""

from .core import (
    EventLabel,
    GazeEvent,
    GazePoint,
    GazeSample,
    GazeSeries,
    IvtParams,
    angular_distance,
    detect_events_ivt,
    sample_velocity,
    segment_events,
)
from .data_io import load_dataset, read_recording, write_dataset, write_recording
from .dataset import Aoi, Dataset, Stimulus
from .evaluation import EvalConfig, EvalReport, compare_utility, evaluate_mechanisms, run_identification
from .privacy import MechanismConfig, OnlineMechanism, apply_gaussian, apply_mechanism, apply_spatial, apply_temporal
from .synth import SubjectProfile, SynthConfig, generate_dataset

__version__ = "0.1.0"
