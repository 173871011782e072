"""Error types shared across the package.

Each error carries a ``kind`` that maps onto the CLI exit-code contract:
parse/data problems exit 2, configuration problems exit 3, output problems
exit 4.
"""


class LogriskError(Exception):
    kind = "error"


class ParseError(LogriskError):
    """Input file is not well-formed (bad XML, bad CSV framing)."""

    kind = "parse"

    def __init__(self, message, line=None, column=None):
        if line is not None:
            message = f"{message} (line {line}" + (
                f", column {column})" if column is not None else ")"
            )
        super().__init__(message)
        self.line = line
        self.column = column


class DataError(LogriskError):
    """Input parses but its content violates a data contract."""

    kind = "data"


class ConfigError(LogriskError):
    """Caller supplied an invalid or inconsistent configuration."""

    kind = "config"


class OutputError(LogriskError):
    """An output location cannot be written."""

    kind = "output"


EXIT_CODES = {"parse": 2, "data": 2, "config": 3, "output": 4}


def exit_code_for(exc: LogriskError) -> int:
    return EXIT_CODES.get(exc.kind, 1)
