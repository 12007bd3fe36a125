from .observation import (
    OBSERVATION_TYPES,
    ObservationModel,
    ObservationPath,
    build_observation,
    generate_observation,
    ks_log_weight_step,
)
from .metrics import TestDictionary, TestFunction, build_coordinate_dictionary, build_default_dictionary, distance_d
from .particles import FilterEstimate, FilterRun, WeightedEnsemble, accumulate_log_weights, run_filter, simulate_particles
from .kalman import KalmanBucyFilter
from .experiments import (
    ScalingResult,
    epsilon_scaling_experiment,
    inverse_moment_bound,
    moment_envelope,
    self_distance_ratio,
    verify_martingale_bounds,
)

__all__ = [
    "OBSERVATION_TYPES",
    "ObservationModel",
    "ObservationPath",
    "build_observation",
    "generate_observation",
    "ks_log_weight_step",
    "TestDictionary",
    "TestFunction",
    "build_coordinate_dictionary",
    "build_default_dictionary",
    "distance_d",
    "FilterEstimate",
    "FilterRun",
    "WeightedEnsemble",
    "accumulate_log_weights",
    "run_filter",
    "simulate_particles",
    "KalmanBucyFilter",
    "ScalingResult",
    "epsilon_scaling_experiment",
    "inverse_moment_bound",
    "moment_envelope",
    "self_distance_ratio",
    "verify_martingale_bounds",
]
