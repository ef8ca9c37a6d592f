"""Exception types raised across the package."""


class BelyiError(Exception):
    """Base class for every error this package raises on purpose."""


# combinatorial layer

class SizeMismatch(BelyiError):
    """Permutations of a triple act on different ground sets."""


class CompositionMismatch(BelyiError):
    """sigma, alpha, phi do not compose to the identity."""


class Disconnected(BelyiError):
    """The group generated by sigma and alpha is not transitive."""


class NonIntegerGenus(BelyiError):
    """Euler characteristic came out odd; the triple is not a map."""


class NotATriangulation(BelyiError):
    """Expected an edge-reversal involution and triangular faces."""


# circle packing

class NoConvergence(BelyiError):
    """Radius iteration did not reach tolerance."""

    def __init__(self, message, max_iters=None):
        super().__init__(message)
        self.max_iters = max_iters


class LayoutInconsistent(BelyiError):
    """Laying out circles reached the same circle with different centers."""


# elliptic layer

class PoleAtLatticePoint(BelyiError):
    """Evaluation point collides with a lattice point of the torus."""


class NotInUpperHalfPlane(BelyiError):
    """A modulus tau must have positive imaginary part."""


# constellations

class NotBalanced(BelyiError):
    """Zero and pole multiplicities do not sum to the same degree."""


class EvaluationAtPole(BelyiError):
    """f was evaluated at (or too close to) a prescribed pole."""


class EvaluationAtSingularity(BelyiError):
    """A log-derivative was evaluated at a zero or pole of f."""


class DegenerateState(BelyiError):
    """Two stars collided or a scale factor vanished."""


class WrongGenus(BelyiError):
    """Operation only defined for genus 0 or 1 input."""


# Newton solver

class SingularJacobian(BelyiError):
    """LU elimination met a vanishing pivot at working precision."""


class Diverged(BelyiError):
    """Residual norms grew or the state degenerated irrecoverably."""


class MaxIterations(BelyiError):
    """Newton used its iteration budget without meeting the tolerance."""


class NotConverged(BelyiError):
    """A downstream step needs a converged solver state."""


# identification

class NoRelationFound(BelyiError):
    """No integer relation within the degree and height budget."""


class DegreeBudgetExceeded(BelyiError):
    """Sweep reached max_degree without a verified polynomial."""


# verification

class TracingStalled(BelyiError):
    """Path continuation step size collapsed before reaching t = 1."""


class WrongEndpointCount(BelyiError):
    """Arrivals at some one-star do not match its multiplicity."""


# pipeline

class ExhaustedSubdivisions(BelyiError):
    """Every subdivision level up to the budget failed to converge."""


class UnsupportedGenus(BelyiError):
    """The pipeline handles genus 0 and 1 only."""


class ParseError(BelyiError):
    """Malformed permutation, catalog line, or configuration input."""
