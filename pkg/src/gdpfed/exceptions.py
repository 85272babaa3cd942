"""Exception types raised across the package."""


class ParseError(ValueError):
    """A line of the dataset file could not be parsed."""

    def __init__(self, lineno, message):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}")


class ConfigurationError(ValueError):
    """Invalid experiment or partition configuration."""


class ProtocolError(RuntimeError):
    """Raised when the federated protocol receives inconsistent messages."""


class RoundFailedError(RuntimeError):
    """Wraps any failure inside a protocol round with its round index."""

    def __init__(self, round_index, cause):
        self.round_index = round_index
        super().__init__(f"round {round_index} failed: {cause!r}")
