"""Offline caching-error modeling and budget-constrained cache scheduling."""

__version__ = "0.1.0"

from .error_model import (
    ConsistencyReport,
    ErrorMatrix,
    build_error_matrix,
    consistency_check,
    error_entry,
    hoeffding_bound,
    matrix_stats,
    per_sample_errors,
)
from .errors import (
    CemError,
    ConfigurationError,
    ContractError,
    DegenerateInputError,
    InfeasibleError,
    InstanceTooLargeError,
    IntegrityError,
    IntervalLookupError,
    NumericalDivergenceError,
    ParseError,
)
from .evaluate import (
    FidelityReport,
    SweepRecord,
    fidelity,
    measure_accumulated_error,
    online_errors,
    relative_difference,
    spearman,
    sweep_random_schedules,
)
from .scheduler import (
    CacheSchedule,
    CumulativeErrorMatrix,
    brute_force_plan,
    cumulative,
    dp_plan,
    linear_schedule,
    schedule_cost,
    uniform_schedule,
)
from .store import read_error_matrix, read_schedule, write_error_matrix, write_schedule
from .surrogate import (
    ExecutionMode,
    Surrogate,
    SurrogateConfig,
    Trajectory,
    make_surrogate,
    run_cached,
    run_full,
)
