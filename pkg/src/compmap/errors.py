"""Exception hierarchy shared by all compmap modules."""


class CompmapError(Exception):
    """Base class. ``code`` is the machine-readable tag used on the CLI error channel."""

    code = "error"

    def __init__(self, message="", **context):
        super().__init__(message)
        self.context = context


class DomainError(CompmapError, ValueError):
    code = "domain_error"


class NonFiniteState(CompmapError, ArithmeticError):
    """A map evaluation hit a singularity or produced a non-finite value.

    ``index`` is the 1-based iteration index when raised from orbit iteration.
    """

    code = "non_finite_state"

    def __init__(self, message="", index=None, **context):
        super().__init__(message, index=index, **context)
        self.index = index


class OrbitEscaped(CompmapError, ArithmeticError):
    code = "orbit_escaped"


class KeyRejected(CompmapError):
    code = "key_rejected"


class LengthMismatch(CompmapError, ValueError):
    code = "length_mismatch"


class DimensionMismatch(CompmapError, ValueError):
    code = "dimension_mismatch"


class OracleMismatch(CompmapError):
    code = "oracle_mismatch"


class AmbiguousPosition(CompmapError):
    code = "ambiguous_position"

    def __init__(self, message="", position=None, **context):
        super().__init__(message, position=position, **context)
        self.position = position


class NotBijective(CompmapError):
    code = "not_bijective"


class CodeOutOfRange(CompmapError):
    code = "code_out_of_range"


class SequenceTooShort(CompmapError, ValueError):
    code = "sequence_too_short"


class GeneratorExhausted(CompmapError):
    code = "generator_exhausted"


class ParseError(CompmapError, ValueError):
    code = "parse_error"
