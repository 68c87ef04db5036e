"""Affine jump-diffusions: transforms, simulation, stability and limit theory."""

from .errors import (
    AJDError,
    ClassificationError,
    InadmissibleSpecError,
    SchemaError,
    SimulationError,
    StateSpaceError,
    TransformDomainError,
    UnstableMatrixError,
)
from .model import (
    JumpDist,
    ModelSpec,
    effective_matrix,
    exponential,
    gaussian,
    point,
    validate_spec,
)
from .riccati import char_fn, closed_form_oracle, semiflow_residual, solve_transform
from .simulate import cir_exact_step, simulate_path, simulate_paths, simulate_skeleton
from .stability import (
    GeneratorProbe,
    classify,
    generator_apply,
    lyapunov_scan,
    max_real_eigenvalue,
    solve_lyapunov,
    transience_rate_1d,
)
from .limits import (
    batch_means_variance,
    corollary_cov,
    corollary_mean,
    fclt_diagnostic,
    skeleton_average,
    time_average,
    tv_proxy_decay,
)
from .calibrate import MomentGrid, default_grid, fit, gmm_objective, moment_residual

__version__ = "0.1.0"
