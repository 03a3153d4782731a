"""Analysis and synthesis for discrete-time jump-linear systems whose
mode chain lives on a gridded interval-valued mode space.

The mode space is discretized by a midpoint rule; coefficient matrices
become per-cell fields, the transition kernel a density matrix, and the
mean-square moment operators finite-dimensional positive maps.  On top
of those the package provides stability and detectability tests,
coupled Riccati solvers (LQ, Nash game, attenuation designs), and Monte
Carlo trajectory statistics.
"""

__version__ = "0.1.0"

from .config import RunConfig, bundled_config_path, load_config, save_config
from .errors import (
    ConfigError,
    ConvergenceError,
    DegenerateKernelError,
    GainNotFoundError,
    GammaTooSmallError,
    MjlsError,
    NotStabilizingError,
    SignConditionError,
    SolverError,
    UnstableDynamicsError,
)
from .fields import (
    GridComponent,
    InitialDensity,
    KernelDensity,
    MatrixField,
    ModeGrid,
    build_grid,
    build_markov_kernel_from_blocks,
    eval_affine_field,
    eval_scaled_field,
    per_component_constant,
)
from .game import (
    GameProblem,
    GameSolution,
    nash_values,
    solve_game,
    solve_hinf,
    verify_brl,
    worst_case_disturbance_gain,
)
from .operators import (
    OperatorHandle,
    SpectralRadiusResult,
    apply_E,
    apply_L,
    apply_T,
    dense_operator_matrix,
    pairing,
    spectral_radius,
    sqrt_field,
)
from .riccati import (
    RiccatiProblem,
    RiccatiSolution,
    certify_stabilizing,
    check_strict_block_feasibility,
    in_S_plus,
    riccati_ops,
    solve_maximal,
)
from .sim import (
    J2Comparison,
    SimPlan,
    TrajectoryStats,
    compare_j2,
    hinf_ratio_run,
    run_paths,
    sample_chain,
)
from .stability import (
    CorrelationSequence,
    StabilityReport,
    check_emss,
    closed_loop_radius,
    propagate_correlation,
    solve_closed_loop_lyapunov,
    solve_lyapunov_identity,
    synth_detectability_gain,
    verify_detectability_gain,
    verify_lyapunov_inequality,
    verify_stabilizability_gain,
)
from .system import SystemModel
