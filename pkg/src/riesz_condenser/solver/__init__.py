from .core import (
    FRANK_WOLFE,
    INFEASIBLE,
    ITERATION_LIMIT,
    OPTIMAL,
    PROJECTED_GRADIENT,
    Block,
    KKTReport,
    QuadraticProgram,
    SolveOptions,
    frank_wolfe,
    projected_gradient,
    solve_qp,
)
from .problems import (
    CapacityResult,
    ProblemReport,
    SolveResult,
    build_qp,
    capacity_estimate,
    condenser_matrix,
    kkt_check,
    solve_constrained,
    solve_unconstrained,
    validate_problem,
)
from .projection import knapsack_lmo, project_knapsack
from .probe import ProbeLevel, ProbeReport, ProbeTemplate, ball_ratio_multiple, short_circuit_probe
