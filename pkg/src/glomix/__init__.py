"""Intermittent interval maps with an indifferent fixed point: assumption
checks, conjugation to the half-line, transfer operators, infinite-volume
averages and global-local mixing experiments."""

__version__ = "0.1.0"

from .checks import CheckReport, check_A2, check_A3, check_A4, check_A5, check_A5prime, check_all
from .errors import (
    ConfigError,
    ConvergenceError,
    DomainError,
    EndpointMismatch,
    GlomixError,
    MapSpecError,
    NonIntegrable,
    SamplingError,
    SingularMass,
)
from .grid import GridFunction
from .halfline import HalfLineMap, check_B3, conjugate, psi, psi_inv
from .maps import (
    IntervalMap,
    build_doubling,
    build_generalized_lsv,
    build_generalized_pm,
    build_lsv,
    build_perturbed_lsv,
    build_perturbed_pm,
    eval_map,
    inverse_branch,
    map_from_json,
    orbit,
)
from .measures import (
    MeasureSpec,
    Observable,
    counterexample_averages,
    estimate_global_average,
    finite_volume_average,
    integrate,
    interval_mass,
    lambda_q,
    lebesgue,
    nu_p,
)
from .mixing import MixingRun, correlation_montecarlo, correlation_transfer, glm_diagnostic, run_mixing
from .transfer import estimate_invariant_density, pf_apply, pf_indicator
