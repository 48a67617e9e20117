"""Quantum state smoothing for partially observed open quantum systems."""

from .errors import (
    ContractError,
    DegenerateEnsembleError,
    DimensionError,
    ImpossibleRecordError,
    ParameterError,
    PositivityError,
    QsmoothError,
    StepSizeError,
)
from .forward import (
    TrajectoryGrid,
    filter_forward,
    filter_forward_joint,
    kraus_step,
    sample_ostensible_unobserved_step,
    sample_true_record,
    sample_true_step,
)
from .model import (
    HomodyneChannel,
    JumpChannel,
    OpenSystemModel,
    dephased_decay_model,
    lindblad_generator,
    two_level_atom,
)
from .operators import BlochVector, fidelity, from_bloch, hermitize, project_psd, purity, to_bloch
from .records import Record, RecordStep, dump_record, load_record
from .retrofilter import EffectGrid, effect_back_step, retrofilter_record
from .smoother import (
    SmoothedTrajectory,
    SmoothingEnsemble,
    build_ensemble,
    smooth,
    smoothed_record_weights,
)

__version__ = "0.1.0"

__all__ = [
    "ContractError",
    "DegenerateEnsembleError",
    "DimensionError",
    "ImpossibleRecordError",
    "ParameterError",
    "PositivityError",
    "QsmoothError",
    "StepSizeError",
    "TrajectoryGrid",
    "filter_forward",
    "filter_forward_joint",
    "kraus_step",
    "sample_ostensible_unobserved_step",
    "sample_true_record",
    "sample_true_step",
    "HomodyneChannel",
    "JumpChannel",
    "OpenSystemModel",
    "dephased_decay_model",
    "lindblad_generator",
    "two_level_atom",
    "BlochVector",
    "fidelity",
    "from_bloch",
    "hermitize",
    "project_psd",
    "purity",
    "to_bloch",
    "Record",
    "RecordStep",
    "dump_record",
    "load_record",
    "EffectGrid",
    "effect_back_step",
    "retrofilter_record",
    "SmoothedTrajectory",
    "SmoothingEnsemble",
    "build_ensemble",
    "smooth",
    "smoothed_record_weights",
]
