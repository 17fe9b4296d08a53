"""Shared error types."""


class ResolutionError(ValueError):
    """Requested scale is not resolvable on the given grid."""


class WindowTooLargeError(RuntimeError):
    """Picard iteration is not contracting; reduce the window T'."""


class ConvergenceError(RuntimeError):
    """Fixed-point iteration exceeded max_iter."""


class StepSizeError(RuntimeError):
    """Explicit step produced unstable growth; reduce dt."""
