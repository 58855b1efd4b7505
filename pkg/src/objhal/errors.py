"""Exception types shared across the harness."""


class HarnessError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(HarnessError):
    """Invalid run configuration (CLI exit code 2)."""


class InputError(HarnessError):
    """Malformed or inconsistent input data (CLI exit code 3)."""


class EndpointError(HarnessError):
    """A judge endpoint failed or misbehaved (CLI exit code 4)."""

    def __init__(self, message: str, attempts: int | None = None):
        super().__init__(message)
        self.attempts = attempts
