"""Exception types shared across the package."""


class NilflowError(Exception):
    """Base class for all errors raised by nilflow."""


class PrecisionExhausted(NilflowError, ArithmeticError):
    """Working precision could not resolve a value, even after escalation."""


class UndecidableInGrammar(NilflowError):
    """An exact decision depends on relations between undeclared constants."""


class GrammarError(NilflowError, ValueError):
    """Malformed expression text, or an operation that leaves the grammar."""


class DimensionMismatch(NilflowError, ValueError):
    pass


class NoFeasibleBlockLength(NilflowError):
    """The block-length inequalities have no solution for this function and degree."""


class ConfigInvalid(NilflowError, ValueError):
    pass


class CacheError(NilflowError, OSError):
    pass
