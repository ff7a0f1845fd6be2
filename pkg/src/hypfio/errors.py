"""Exception and warning classes shared across the package."""


class DomainError(ArithmeticError):
    """A symbol was evaluated where a denominator (or negative power base) vanishes."""


class ParseError(ValueError):
    """Malformed expression text."""


class FlowEscape(RuntimeError):
    """A characteristic left the padded computational box."""


class ContractionFailure(RuntimeError):
    """The Neumann operator is not a contraction even after time splitting."""


class H1Violation(ValueError):
    """The lower-order matrix does not decrease in order below the diagonal."""


class CFLViolation(RuntimeError):
    """Method-of-lines substep cap cannot meet the stability limit."""


class RepresentationUnavailable(ValueError):
    """The FIO representation path does not apply to this problem."""


class BranchExplosion(RuntimeWarning):
    """Broken-flow enumeration was truncated."""


class AliasingWarning(RuntimeWarning):
    """Input has significant spectral mass near the top of the band."""


class NoConvergence(RuntimeWarning):
    """The norm estimate stalled; the returned value falls back on random probes."""
