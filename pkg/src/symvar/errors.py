"""Exception hierarchy.

Two families: ``HypothesisError`` for inputs that violate a mathematical
precondition (the CLI maps these to exit code 2) and plain ``SymvarError``
for malformed input or solver failure.
"""


class SymvarError(Exception):
    """Base class for every error raised by the package."""


class HypothesisError(SymvarError):
    """An input violates a hypothesis the construction relies on."""


# group
class DimensionMismatch(SymvarError):
    pass


class NotClosed(HypothesisError):
    pass


class MissingIdentity(HypothesisError):
    pass


class NotIsometry(HypothesisError):
    pass


# geometry
class FocusInsideSet(HypothesisError):
    pass


class ApexNotInSet(HypothesisError):
    pass


# finite metric spaces / variational
class InvalidMetric(HypothesisError):
    pass


class InvalidBifunction(HypothesisError):
    pass


class NoInvariantPoint(HypothesisError):
    pass


class NotInvariantObjective(HypothesisError):
    pass


class NotInvariantStart(HypothesisError):
    pass


class NotConvexWrtGroup(HypothesisError):
    """The finite instance admits no invariant point passing the certificate."""


class EmptyInvariantSlice(HypothesisError):
    pass


class HypothesisViolated(HypothesisError):
    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


# smooth
class InvarianceViolated(HypothesisError):
    pass


class NotBoundedBelowSuspected(HypothesisError):
    pass


class TargetOutsideBall(HypothesisError):
    pass


class TargetNotInvariant(HypothesisError):
    pass


class CoercivityViolated(HypothesisError):
    pass


# pde
class ShapeMismatch(SymvarError):
    pass


class NotInvariantData(HypothesisError):
    pass


class BadExponent(HypothesisError):
    pass


class NoConvergence(SymvarError):
    def __init__(self, message, iterations=None):
        super().__init__(message)
        self.iterations = iterations


# control
class GridMismatch(SymvarError):
    pass


class Blowup(SymvarError):
    pass


class HypothesesViolated(HypothesisError):
    pass


# cli
class ConfigParse(SymvarError):
    pass


class UnknownSubcommand(SymvarError):
    pass
