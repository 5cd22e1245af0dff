"""Small-time asymptotics and barrier-crossing estimates for pinned Gaussian processes."""
from .asymptotics import (
    BridgeAsymptotics,
    SpeedExponents,
    expansion_coeffs,
    finite_eps_bridge_cov_matrix,
    finite_eps_bridge_cov_oracle,
    speed_exponents,
    step_asymptotics,
)
from .conditioning import ConditionedKernel, Observations, cond_cov_matrix, cond_mean
from .errors import (
    ConfigError,
    DegenerateConditioningError,
    DomainError,
    FactorizationError,
    InvalidStartError,
    OutOfSpaceError,
    ParameterError,
    PinnedGPError,
    UnsupportedFamilyError,
)
from .exit_rates import ExitProblem, closed_g, rate_double, rate_lower, rate_upper
from .kernels import Family, KernelSpec, eval_cov, eval_inner, gram
from .montecarlo import Barrier, McResult, McRun, Method, estimate_crossing, table1_harness
from .rkhs_fd import GridRate, appendix_a_identity_check, rate_quadratic
from .simulate import PathSampler, SequentialState, path_rng, sequential_step

__version__ = "0.1.0"
