from .constraints import (
    ConstraintNet,
    NotFeedforwardError,
    chain,
    check_full_rank,
    constraint_tau,
    constraint_tautau,
    curvature,
    eval_constraints,
    from_layered,
    gram_posdef_check,
    hessians,
    jacobian_arcs,
    jacobian_M,
    jacobian_xi,
    layer_blocks,
    posdef_pivots,
)
from .dynamics import (
    DivergenceError,
    ELState,
    InconsistentInitialState,
    MultiplierSystem,
    SingularMultiplierSystem,
    Trajectory,
    consistent_init,
    constraint_rate,
    el_rhs,
    forward_solve,
    integrate,
    output_loss_gradient,
    solve_multipliers,
)
from .limits import (
    back_substitute,
    bp_limit_deltas,
    bp_limit_weight_rate,
    damped_second_order,
    gradient_flow,
)
