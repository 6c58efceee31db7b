"""Projection robust Wasserstein distances on the Stiefel manifold."""

from .measures import (
    CostContext,
    DiscreteMeasure,
    add_noise,
    cost_matrix,
    fragmented_hypercube,
    load_measure,
    save_measure,
    wishart_gaussian_pair,
)
from .stiefel import (
    RETRACTIONS,
    StiefelPoint,
    TangentVector,
    random_stiefel,
    retract,
    tangent_project,
)
from .entropic_ot import (
    SinkhornState,
    TransportPlan,
    entropic_objective,
    projected_cost,
    round_to_polytope,
    sinkhorn_solve,
)
from .exact_ot import ExactOtSolution, brute_force_ot, exact_ot_plan, exact_ot_solve
from .solvers import (
    AdaptiveState,
    SolveResult,
    SolverConfig,
    correlation_apply,
    prw_objective,
    ragas_solve,
    rgas_solve,
    riemannian_gradient,
    rsgan_solve,
    solve,
    stationarity_surrogate,
    subspace_error,
)

__version__ = "0.1.0"
