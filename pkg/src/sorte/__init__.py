"""Systemic optimal risk transfer equilibria on finite scenario spaces."""

from .constraints import ConstraintSpec, allocation_basis, membership
from .dual import (
    DualPoint,
    EquilibriumSolution,
    dual_objective,
    recover_allocation,
    solve_lambda,
    solve_q_optimal,
    solve_sorte,
    stationarity,
)
from .errors import (
    BoundaryError,
    BracketError,
    ConvergenceError,
    DimensionError,
    DomainError,
    NormalizationError,
    ScaleError,
    SchemaError,
    SorteError,
    SpecError,
    ValidationError,
)
from .exponential import (
    buhlmann_equilibrium,
    sorte_exponential,
    systemic_value_exponential,
    translation_shift,
    weight_translation,
)
from .market import MarketModel, PricingVector, ProbMeasure, load_market
from .oracle import brute_force_primal
from .scenario import Scenario, load_scenario, scenario_document
from .utility import CustomUtility, ExponentialUtility, UtilityProfile, apply_weights, check_utility
from .verification import (
    check_fair_pricing,
    check_pareto,
    deterministic_allocation,
    search_pareto_improvement,
    verify_sorte,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
