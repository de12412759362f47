from fleetopt._core import (
    Error,
    __version__,
    aggregate,
    classify_parameters,
    monte_carlo_ei,
    normalize_weights,
    regression_rate,
    render,
    run,
    select_representatives,
)

__all__ = [
    "Error",
    "__version__",
    "aggregate",
    "classify_parameters",
    "monte_carlo_ei",
    "normalize_weights",
    "regression_rate",
    "render",
    "run",
    "select_representatives",
]
