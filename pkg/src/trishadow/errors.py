"""Exception hierarchy shared by all modules."""


class ShadowingError(Exception):
    """Base class for every error raised by trishadow."""


class SingularRestriction(ShadowingError):
    """A map restricted to Ker P^1 is numerically singular (invertibility axiom fails)."""


class SmallGainViolated(ShadowingError):
    """The product c * ||G|| is not below one, so the correction map is not a contraction."""

    def __init__(self, c, gnorm):
        super().__init__(f"small-gain condition violated: c*||G|| = {c * gnorm:.6g} >= 1")
        self.c = c
        self.gnorm = gnorm


class NonConvergence(ShadowingError):
    """Fixed-point iteration contracted slower than the certified rate allows."""

    def __init__(self, msg, ratios=None):
        super().__init__(msg)
        self.ratios = list(ratios or [])


class DichotomyRequired(ShadowingError):
    """Operation only valid for exponential dichotomies (P^3 = 0) or hyperbolic data."""


class HyperbolicityError(ShadowingError):
    """Pad matrix is not hyperbolic or its unstable subspace does not match Ker P_0."""


class NoSolution(ShadowingError):
    """Finite-section system is inconsistent for the given right-hand side."""


class StepSizeUnderflow(ShadowingError):
    """Fixed-step integration would need a step below the representable resolution."""


class InversionFailure(ShadowingError):
    """A perturbed map G_n = A_n + g_n could not be inverted by the damped fixed-point solve."""
