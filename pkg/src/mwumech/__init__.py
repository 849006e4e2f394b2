"""MWU covering/packing solvers, convex decomposition via an integrality-gap
verifier, and approximately truthful randomized auction mechanisms."""
from .auction import (
    Additive,
    AuctionInstance,
    ExactVerifier,
    GreedyVerifier,
    SingleMinded,
    generate_instance,
    make_verifier,
    measure_alpha,
    polytope_alpha,
)
from .audit import AuditError, audit_truthfulness, lemma_checks
from .core import (
    CapacityError,
    ContractError,
    ConvexDecomposition,
    DimensionError,
    FractionalPoint,
    IntegralPoint,
    MalformedOracleError,
    MwuError,
    SeededRng,
    TripwireError,
    verify_membership,
    zero_out,
)
from .covering import (
    ColumnOracleResponse,
    CoveringProblem,
    explicit_covering_problem,
    solve_covering,
    solve_covering_unit,
)
from .decomposition import convex_decompose, exact_decompose, find_dominating_combination
from .mechanism import (
    MechanismParams,
    approx_fractional_mechanism,
    exact_ls_mechanism,
    fractional_vcg,
    integral_conversion,
    run_mechanism,
)
from .packing import (
    ExactWelfareSolver,
    MwuWelfareSolver,
    PackingProblem,
    auction_demand_oracle,
    explicit_packing_problem,
    solve_packing,
)

__version__ = "0.1.0"
