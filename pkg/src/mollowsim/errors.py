"""Exception types shared across the package."""


class MollowsimError(Exception):
    """Base class for package-specific failures."""


class ConfigError(MollowsimError):
    """Invalid configuration: parse failure, schema violation, or guard violation.

    Carries an optional ``field`` naming the offending key (dotted path for
    nested contexts) so callers can report precisely what to fix.
    """

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        prefix = ""
        if line is not None:
            prefix += f"line {line}: "
        if field is not None:
            prefix += f"{field}: "
        super().__init__(prefix + message)


class NumericalInvariantError(MollowsimError):
    """A state invariant (trace, hermiticity, positivity) broke mid-run.

    ``step`` is the index of the first offending integration step.
    """

    def __init__(self, message, step=None):
        self.step = step
        if step is not None:
            message = f"step {step}: {message}"
        super().__init__(message)


class AlignmentUnsupportedError(MollowsimError):
    """Requested an alignment (rank-2) observable on a manifold with f < 1.

    This is the structured "no alignment observable" outcome: a spin-1/2
    manifold carries no rank-2 multipole, so a linearly polarized probe has
    nothing to read out.
    """


class PipelineError(MollowsimError):
    """A pipeline stage failed; wraps the underlying error with the stage name."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"pipeline stage '{stage}' failed: {cause}")
