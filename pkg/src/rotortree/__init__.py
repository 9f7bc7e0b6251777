"""Rotor walks on periodic trees: moment matrices of the good-children
branching process, the predicted range density, and simulation checks."""

from .engine import WalkState, new_walk, run_until_returns, sample_good_tree, step
from .experiments import ExperimentConfig, ExperimentReport
from .generator import (
    Generator,
    GeneratorError,
    adjacency,
    dump_generator,
    is_palindromic,
    load_generator,
    parse_generator,
)
from .mbp import Classification, MomentData, RotorLaw, analyze, offspring_law
from .spectral import gamma_closed_form, gamma_matrix, inverse, perron_vector, spectral_radius

__version__ = "0.1.0"

__all__ = [
    "Classification",
    "ExperimentConfig",
    "ExperimentReport",
    "Generator",
    "GeneratorError",
    "MomentData",
    "RotorLaw",
    "WalkState",
    "adjacency",
    "analyze",
    "dump_generator",
    "gamma_closed_form",
    "gamma_matrix",
    "inverse",
    "is_palindromic",
    "load_generator",
    "new_walk",
    "offspring_law",
    "parse_generator",
    "perron_vector",
    "run_until_returns",
    "sample_good_tree",
    "spectral_radius",
    "step",
]
