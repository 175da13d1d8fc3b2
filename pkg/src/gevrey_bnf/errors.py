"""Exception hierarchy shared by all modules."""


class BNFError(Exception):
    """Base class for every error raised by the package."""


class ValidationError(BNFError, ValueError):
    """Input does not describe a valid element of the formal algebra."""


class MomentumViolation(ValidationError):
    pass


class ForbiddenTerm(ValidationError):
    """Constant term or one of the excluded linear terms in u_0, conj(u_0)."""


class RealityConflict(ValidationError):
    pass


class DegreeOverflow(ValidationError):
    pass


class DegreeUnderflow(ValidationError):
    pass


class OrderViolation(ValidationError):
    """A generator has scaling order below what the operation requires."""


class ParseError(ValidationError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class KernelInputError(BNFError):
    """The homological equation was given a term in the kernel (alpha == beta)."""

    def __init__(self, key):
        super().__init__(f"term {key} lies in the kernel of ad(D_omega)")
        self.key = key


class ResonanceError(BNFError):
    def __init__(self, key, divisor):
        super().__init__(f"small divisor {divisor!r} for key {key}")
        self.key = key
        self.divisor = divisor


class NotLinearizableError(BNFError):
    def __init__(self, step, offending):
        keys = ", ".join(f"{k}: {v}" for k, v in list(offending.items())[:5])
        super().__init__(f"step {step}: non-vanishing normal-form coefficients {keys}")
        self.step = step
        self.offending = offending


class NonConvergentError(BNFError):
    pass


class DecayViolation(BNFError):
    def __init__(self, step, term, value, bound):
        super().__init__(f"step {step}: {term} = {value} exceeds bound {bound}")
        self.step = step
        self.term = term
        self.value = value
        self.bound = bound
