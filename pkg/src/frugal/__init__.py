"""frugal: data-dependent discretization of infinite parameter spaces.

Learns a finite set of provably promising algorithm parameters for
configuration problems whose capped loss is piecewise constant in the
parameter, then optionally reduces the set to a single near-optimal
parameter with an empirical selector.  Ships three domains: an exactly
solvable synthetic family, branch-and-bound over small binary programs, and
budget-capped linkage clustering.
"""
from .core import (
    CappedRunOutcome,
    ConfigProblem,
    InstanceHandle,
    ParamCell,
    ParamPoint,
    ParamSpace,
    PartitionCell,
    capped_mean,
    law_capped_mean,
    tail_quantile_exact,
)
from .learner import (
    LearnerConfig,
    OptimalSubsetResult,
    compute_eta,
    learn_subset,
    select_finite,
)
from .stats import GammaInputs, gamma_bound, massart_bound, mc_rademacher
from .synthetic import SyntheticFamily, SyntheticProblem, synthetic_exact_opt

__version__ = "0.1.0"

__all__ = [
    "CappedRunOutcome",
    "ConfigProblem",
    "InstanceHandle",
    "ParamCell",
    "ParamPoint",
    "ParamSpace",
    "PartitionCell",
    "capped_mean",
    "law_capped_mean",
    "tail_quantile_exact",
    "LearnerConfig",
    "OptimalSubsetResult",
    "compute_eta",
    "learn_subset",
    "select_finite",
    "GammaInputs",
    "gamma_bound",
    "massart_bound",
    "mc_rademacher",
    "SyntheticFamily",
    "SyntheticProblem",
    "synthetic_exact_opt",
    "__version__",
]
