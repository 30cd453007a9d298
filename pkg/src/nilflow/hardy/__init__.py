"""Hardy-field functions in a closed grammar of log-power monomials."""

from .classify import (
    DistanceClass,
    FarFromPolys,
    GrowthType,
    NearLinearOverM,
    NotPointwiseGood,
    Order,
    PolyPlusConvergent,
    Type,
    TypePlus,
    classify_type,
    distance_class,
    growth_compare,
)
from .expr import LOG, T, Evaluation, HardyExpr, Term, derivative, evaluate
from .parse import parse_constant, parse_expr, stirling_logfact
from .symbolic import (
    Symbol,
    SymbolicReal,
    compare,
    declare_symbol,
    independent_over_q,
    lookup_symbol,
    rank_over_q,
)

__all__ = [
    "DistanceClass", "FarFromPolys", "GrowthType", "NearLinearOverM",
    "NotPointwiseGood", "Order", "PolyPlusConvergent", "Type", "TypePlus",
    "classify_type", "distance_class", "growth_compare",
    "LOG", "T", "Evaluation", "HardyExpr", "Term", "derivative", "evaluate",
    "parse_constant", "parse_expr", "stirling_logfact",
    "Symbol", "SymbolicReal", "compare", "declare_symbol", "independent_over_q",
    "lookup_symbol", "rank_over_q",
]
