"""Sequential search for rare targets on a binary observation hierarchy.

A biased random walk descends the tree guided by per-node hypothesis
tests and confirms targets at the leaves; a flat probing baseline and a
seeded experiment harness round out the package.
"""

from ._backend import backend_name
from .chernoff import run_chernoff
from .harness import (
    ExperimentConfig,
    config_from_dict,
    emit_results,
    load_config,
    parse_results,
    run_experiment,
    run_replications,
)
from .localtests import LocalTestSpec
from .models import (
    Bernoulli,
    BernoulliTreeModel,
    DecaySchedule,
    Exponential,
    ExponentialFlowModel,
)
from .oracle import verify_report
from .policy import (
    RunResult,
    run_multi_target,
    run_single_target,
    run_unknown_count,
)

__version__ = "0.1.0"

__all__ = [
    "Bernoulli",
    "BernoulliTreeModel",
    "DecaySchedule",
    "ExperimentConfig",
    "Exponential",
    "ExponentialFlowModel",
    "LocalTestSpec",
    "RunResult",
    "__version__",
    "backend_name",
    "config_from_dict",
    "emit_results",
    "load_config",
    "parse_results",
    "run_chernoff",
    "run_experiment",
    "run_multi_target",
    "run_replications",
    "run_single_target",
    "run_unknown_count",
    "verify_report",
]
