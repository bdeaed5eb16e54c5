from ._core import (
    DivergenceError,
    ExpressionError,
    Grid,
    evaluate,
    exp_moment,
    exp_moment_closed_form,
    expansion,
    frontier_maturity,
    hbmo_norm,
    homogeneity,
    set_threads,
    simple_demand_oracle,
    solvability_frontier,
    solve,
    solve_prices,
    terminal_bmo_norm,
    threads,
)

__version__ = "0.3.0"
