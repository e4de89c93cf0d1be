"""Numerical laboratory for marginal treatment effects under unordered multinomial choice."""

__version__ = "0.1.0"

from .config import bundled_config, bundled_names, build_scenario, load_config, parse_config  # noqa: F401
from .laws import (  # noqa: F401
    DifferenceLaw,
    ErrorVectorLaw,
    UnivariateLaw,
    difference_law,
    empirical,
    gaussian,
    logistic,
    margin_map,
    quantile,
    student_t,
    uniform,
)
from .population import (  # noqa: F401
    BoundaryPoint,
    GFunction,
    IdentificationReport,
    cond_mean_GD,
    extended_cond_mean_GD,
    identify_thresholds_by_limit,
    identity_g,
    indicator_below,
    mte_identified,
    qte,
)
from .scenario import InstrumentLaw, OutcomeModel, Scenario, joint_cdf_V, v_from_u  # noqa: F401
from .selection import choose, hurdle_indicators, thresholds, verify_representation  # noqa: F401
