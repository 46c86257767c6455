"""Exception types shared across the pipeline."""


class FinragError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(FinragError):
    """A file could not be parsed; message names the path and line."""


class ValidationError(FinragError):
    """An invariant on loaded or constructed data was violated."""


class ConfigError(FinragError):
    """Run configuration or routing is invalid or incomplete."""


class TransportError(FinragError):
    """A remote backend failed after retries were exhausted."""


class RequestError(FinragError):
    """A remote backend rejected the request (non-retryable 4xx)."""


class ProtocolError(FinragError):
    """A backend response violated the wire contract."""


class GenerationError(FinragError):
    """A generation stage failed; carries the stage label."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
