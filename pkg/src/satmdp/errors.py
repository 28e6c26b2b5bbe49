"""Exception hierarchy shared across the package."""


class SatMdpError(Exception):
    """Base class for all package errors."""


class ParseError(SatMdpError):
    """Malformed DIMACS input; message names the offending line."""


class FormulaError(SatMdpError):
    """A formula violates a structural requirement (clause arity, index range)."""


class ParameterError(SatMdpError):
    """Caller passed arguments outside an operation's documented domain."""


class ResourceLimitError(SatMdpError):
    """An exhaustive computation would exceed its configured budget."""


class InvariantViolation(SatMdpError):
    """An internal guarantee failed; indicates a bug, raised loudly."""
