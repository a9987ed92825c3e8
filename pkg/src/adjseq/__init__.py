"""Sequential p-values for multiple hypotheses in group sequential designs.

Supports weighted Bonferroni and weighted parametric (WPGSD) intersection
tests with graphical weighting strategies, closed testing, and Monte Carlo
checks of familywise error.
"""

__version__ = "0.1.0"

from .boundaries import BoundarySet, bonferroni_bounds, wpgsd_bounds
from .config import ConfigError, RunConfig, load_config, parse_config
from .correlation import CorrelationModel, DesignSchedule, EventTable, build_ccs, info_fractions, subset_ccs
from .gaussian import MVNSettings, NumericalError, TailProbability, union_crossing_probability
from .graph import (
    HypothesisSet,
    WeightingStrategy,
    enumerate_closure,
    is_consonant,
    subset_weights,
    update_after_rejection,
    validate_strategy,
)
from .inference import (
    Design,
    InferenceReport,
    ObservedStatistics,
    adjusted_sequential_p,
    bonferroni_shortcut,
    closed_test_report,
    rejects,
    repeated_p_value,
    sequential_p_elementary,
    sequential_p_intersection,
)
from .simulation import SimulationPlan, SimulationResult, simulate
from .spending import HSDSpending, cumulative_spend, make_spending
