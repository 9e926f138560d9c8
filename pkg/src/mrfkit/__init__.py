"""MR fingerprinting toolkit: simulation, neural reconstruction, matching.

The pipeline in one breath: :func:`simulate_fingerprints` turns (T1, T2)
pairs into signal-magnitude fingerprints under an acquisition
:class:`Schedule`; :func:`build_dictionary` tabulates them over a grid;
:func:`train` fits a small fully-connected network mapping fingerprints
back to (T1, T2); :func:`match_one`/:func:`match_map` provide the
conventional normalized-dot-product baseline; :mod:`mrfkit.phantom` and
:func:`density_study` evaluate both reconstructors.
"""

from .schedule import Schedule, default_schedule, load_schedule, save_schedule, schedule_digest
from .epg import EpgState, TissueParams, epg_relax, epg_rf, epg_shift, epg_simulate, simulate_fingerprints
from .dictionary import (
    Dictionary,
    GridSpec,
    add_noise,
    build_dictionary,
    grid_entries,
    load_dictionary,
    normalize,
    parse_grid_spec,
    save_dictionary,
    subsample,
)
from .maps import (
    ImageStack,
    Metrics,
    ParamMap,
    accuracy_summary,
    compute_metrics,
    load_param_map_csv,
    load_stack,
    r_squared,
    save_param_map_csv,
    save_stack,
)
from .network import (
    Layer,
    Mlp,
    OutputScaler,
    forward,
    forward_many,
    initialize_network,
    load_model,
    loss,
    reconstruct_map,
    save_model,
)
from .training import TrainConfig, TrainingDivergedError, train
from .matcher import match_map, match_one, match_signals
from .phantom import PhantomSpec, Region, brain_phantom, render_phantom, simulate_stack
from .study import StudyResult, density_study, derive_rng, derive_seed, linear_fit
from .bench import BenchReport, speed_benchmark

__version__ = "0.1.0"

__all__ = [
    "BenchReport",
    "Dictionary",
    "EpgState",
    "GridSpec",
    "ImageStack",
    "Layer",
    "Metrics",
    "Mlp",
    "OutputScaler",
    "ParamMap",
    "PhantomSpec",
    "Region",
    "Schedule",
    "StudyResult",
    "TissueParams",
    "TrainConfig",
    "TrainingDivergedError",
    "accuracy_summary",
    "add_noise",
    "brain_phantom",
    "build_dictionary",
    "compute_metrics",
    "default_schedule",
    "density_study",
    "derive_rng",
    "derive_seed",
    "epg_relax",
    "epg_rf",
    "epg_shift",
    "epg_simulate",
    "forward",
    "forward_many",
    "grid_entries",
    "initialize_network",
    "linear_fit",
    "load_dictionary",
    "load_model",
    "load_param_map_csv",
    "load_schedule",
    "load_stack",
    "loss",
    "match_map",
    "match_one",
    "match_signals",
    "normalize",
    "parse_grid_spec",
    "r_squared",
    "reconstruct_map",
    "render_phantom",
    "save_dictionary",
    "save_model",
    "save_param_map_csv",
    "save_schedule",
    "save_stack",
    "schedule_digest",
    "simulate_fingerprints",
    "simulate_stack",
    "speed_benchmark",
    "subsample",
    "train",
]
