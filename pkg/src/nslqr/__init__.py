"""Online control of non-stationary linear-quadratic systems.

Core objects: dynamics sequences (`instances`), stationary LQR solvers
(`lqr`), interval least squares (`estimation`), the adaptive-restart
controller (`dynlqr`), comparator policies (`baselines`), and the
simulation/audit harness (`harness`).
"""

from .errors import (
    BadConfig,
    ConditionViolated,
    DegenerateDirection,
    Diverged,
    InfeasibleBudget,
    NonConvergent,
    NslqrError,
    SingularDesign,
    StabilizationFailed,
    Unstable,
)
from .lqr import (
    CostSpec,
    Gain,
    Theta,
    ValueMatrix,
    avg_cost,
    avg_cost_with_noise,
    closed_loop,
    dare_residual,
    finite_horizon_dp,
    gain_from_value,
    operator_norm,
    optimal_gain,
    solve_dare,
    solve_lyapunov,
    spectral_radius,
)
from .instances import (
    DynamicsSeq,
    GainSeq,
    StabilityCert,
    VariationReport,
    build_drift_instance,
    build_pasted_lower_bound,
    build_restartlqr_adversary,
    build_switching_instance,
    check_sequential_stability,
    fixed_gain_certificate,
    from_json,
    stabilizing_sequence,
    stationary,
    to_json,
    total_variation,
)
from .estimation import (
    OlsEstimate,
    Trajectory,
    bias_demo_2d,
    bias_demo_design_matrix,
    design_matrix_stats,
    directional_foc_residual,
    directional_ols,
    normal_equation_residual,
    ols_fit,
    quadratic_geometry_check,
)
from .dynlqr import (
    ControlDecision,
    DynLqrConfig,
    DynLqrController,
    Event,
    default_config,
    new_controller,
)
from .baselines import (
    FixedGainController,
    OracleCeController,
    RestartConfig,
    RestartLqrController,
)
from .harness import (
    AuditReport,
    RegretReport,
    build_controller,
    calibrate_c_test,
    make_stream,
    regret_decomposition_audit,
    run_sweep,
    simulate,
)

__version__ = "0.1.0"
