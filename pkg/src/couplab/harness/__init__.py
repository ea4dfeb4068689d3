"""Experiment drivers, configuration, result files and the command line."""

from .config import ExperimentConfig
from .experiments import (
    BoundAudit,
    BoundConstants,
    CredibilityCheck,
    FlipEstimate,
    Prop1Report,
    RobustnessResult,
    bound_audit,
    credibility_band,
    credibility_empirical,
    flip_probability,
    prop1_audit,
    robustness_eval,
    toy_setup,
)
from .io import ResultRow, RunManifest, read_rows, write_rows
from .runner import cell_seed, run_cell, sweep
from .stats import proportion_ci, two_proportion_z


def run_cli(argv=None) -> int:
    from .cli import run_cli as _run

    return _run(argv)

__all__ = [
    "ExperimentConfig",
    "BoundAudit",
    "BoundConstants",
    "CredibilityCheck",
    "FlipEstimate",
    "Prop1Report",
    "RobustnessResult",
    "bound_audit",
    "credibility_band",
    "credibility_empirical",
    "flip_probability",
    "prop1_audit",
    "robustness_eval",
    "toy_setup",
    "ResultRow",
    "RunManifest",
    "read_rows",
    "write_rows",
    "cell_seed",
    "run_cell",
    "sweep",
    "proportion_ci",
    "two_proportion_z",
    "run_cli",
]
