"""Exception types raised across the tent pitcher package."""


class TentPitcherError(Exception):
    """Base class for every error raised by this package."""


class DegenerateSimplex(TentPitcherError):
    """A simplex has (numerically) zero length, area or volume."""


class IsolatedVertex(TentPitcherError):
    """A vertex is not incident on any cell."""


class InvalidArgument(TentPitcherError, ValueError):
    """An argument is outside its legal range."""


class CausalityAlreadyViolated(TentPitcherError):
    """The front is already steeper than the causal slope allows."""


class StuckFront(TentPitcherError):
    """A pitch produced a non-positive tentpole."""


class BudgetExceeded(TentPitcherError):
    """The driver ran out of steps before reaching the target time."""


class FrontConformed(TentPitcherError):
    """No vertex is eligible for pitching because every vertex met its target."""


class NotALeaf(TentPitcherError):
    """A refinement operation was asked to act on an interior forest node."""


class FlipRejected(TentPitcherError):
    """An edge flip would produce an invalid triangulation or element."""


class CoarsenRejected(TentPitcherError):
    """De-refinement preconditions failed.

    ``reason`` names the failed check (``"Leaf"``, ``"Degree"``,
    ``"Coplanarity"``, ``"Root"``, ``"Pattern"`` or ``"Progress"``).
    """

    def __init__(self, reason, message=""):
        super().__init__(f"{reason}: {message}" if message else reason)
        self.reason = reason


class ClassUndefined(TentPitcherError):
    """A homothety class was requested for a triangle with a flip in its ancestry."""


class EstimateNotConverged(TentPitcherError):
    """The slope estimate of the lookahead loop did not stabilise."""

    def __init__(self, message, last_value):
        super().__init__(message)
        self.last_value = last_value


class InvariantViolation(TentPitcherError):
    """A maintained invariant does not hold on entry to an operation."""


class CycleUnsupported(TentPitcherError):
    """Coarsening clusters wait on each other in a cycle."""


class ParseError(TentPitcherError):
    """An input file is malformed; the message names the offending line."""

    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no
