"""Exception types raised across the package.

Each failure mode of the numerical checks and solvers gets its own class so
callers can react to (or test for) a specific condition rather than parsing
messages.
"""


class GeopticsError(Exception):
    """Base class for all package errors."""


class MultiplicityDrift(GeopticsError):
    """Eigenvalue multiplicity pattern changed between sample points."""


class NotSemisimple(GeopticsError):
    """An eigenvalue's geometric multiplicity is below its algebraic one."""


class CharacteristicBoundary(GeopticsError):
    """The boundary matrix A_d(0) is singular (or nearly so)."""


class GlancingOrSingular(GeopticsError):
    """An eigenvalue sits on the imaginary axis, or the frequency is glancing."""


class StabilityFail(GeopticsError):
    """Uniform stability margin violated at a sampled frequency."""


class GlancingMode(GeopticsError):
    """A real mode has vanishing normal group velocity."""


class IrregularFrequency(GeopticsError):
    """Mode multiplicities are not locally constant around the frequency."""


class NotHyperbolicMode(GeopticsError):
    """Operation requires a real (hyperbolic) mode."""


class DegenerateBasis(GeopticsError):
    """A boundary basis {B(0) r} is (numerically) rank deficient."""


class ClassificationContradiction(GeopticsError):
    """A resonance triple violates the hyperbolic/elliptic pairing rules."""


class UnindexedMode(GeopticsError):
    """A characteristic Fourier index lies outside the enumerated bound."""


class NotSolvable(GeopticsError):
    """Corrector right-hand side is not annihilated by the flat projector."""


class NearSingular(GeopticsError):
    """A non-characteristic symbol is too ill-conditioned to invert safely."""


class SpectrumViolation(GeopticsError):
    """Fourier support escapes the sign-constrained index lattice."""


class MissingTrace(GeopticsError):
    """Required boundary trace data was not recorded."""


class SupportLeak(GeopticsError):
    """A field that must vanish for t <= 0 does not."""


class BoundaryResidualNonzero(GeopticsError):
    """Elliptic residual fails to vanish on the boundary slice."""


class CFLViolation(GeopticsError):
    """Explicit time step violates the CFL restriction."""


class BlowUp(GeopticsError):
    """Iterate norm exceeded the configured cap."""


class NoConvergence(GeopticsError):
    """Fixed-point iteration failed to converge.

    Carries a suggested shorter final time in ``t0_suggestion``.
    """

    def __init__(self, message, t0_suggestion=None):
        super().__init__(message)
        self.t0_suggestion = t0_suggestion


class MissingUpstream(GeopticsError):
    """A pipeline stage was requested before its inputs were cached."""


class ConfigError(GeopticsError):
    """Run configuration failed validation."""


class MultipleTripleFamilies(UserWarning):
    """More than one normalized resonance family was found (warning)."""
