"""Epidemic contagion on graphs and patient-zero inference.

Simulators (SIR / SEIR / asymptomatic COVID SEIR), source inference by
dynamic message passing and a from-scratch graph convolutional network,
centrality baselines, and closed-form detectability limits with the
evaluation harness to test them.
"""

from .dynamics import EpidemicParams, Snapshot, run_episode
from .graphs import (
    Graph,
    PropagationRule,
    diameter,
    equivalence_classes,
    generate_ba,
    generate_er,
    generate_rgg,
    leading_eigenvalue,
    load_edge_list,
)
from .limits import bound_curve, expected_gi_size, fit_logistic, p_max, t_max
from .scores import SourceScores

__version__ = "0.1.0"

__all__ = [
    "EpidemicParams",
    "Snapshot",
    "run_episode",
    "Graph",
    "PropagationRule",
    "diameter",
    "equivalence_classes",
    "generate_ba",
    "generate_er",
    "generate_rgg",
    "leading_eigenvalue",
    "load_edge_list",
    "bound_curve",
    "expected_gi_size",
    "fit_logistic",
    "p_max",
    "t_max",
    "SourceScores",
    "__version__",
]
