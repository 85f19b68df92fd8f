"""Exception hierarchy shared by all lpmm modules.

Every error carries a stable machine-readable ``code`` string so the CLI and
the HTTP service can map failures without parsing messages.
"""


class LpmmError(Exception):
    """Base class for all toolkit errors."""

    code = "lpmm_error"

    def __init__(self, message: str, code: str | None = None):
        super().__init__(message)
        if code is not None:
            self.code = code


class FormatError(LpmmError):
    """Malformed input: bad file contents, schema violations, version tags.

    CLI exit code 2, HTTP status 400.
    """

    code = "format_error"


class DomainError(LpmmError):
    """Input is well-formed but violates an operation contract
    (degree mismatch, degenerate geometry, out-of-range degree ...).

    CLI exit code 3, HTTP status 422.
    """

    code = "domain_error"


class TrainingDivergedError(DomainError):
    """Non-finite loss encountered during adaptor training."""

    code = "training_diverged"

    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"non-finite loss at step {step}")
