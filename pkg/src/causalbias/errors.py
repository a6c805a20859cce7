"""Exception hierarchy. Each class carries the CLI exit code for its failure class."""


class CausalBiasError(Exception):
    exit_code = 1


class GraphParseError(CausalBiasError, ValueError):
    exit_code = 2

    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class InputError(CausalBiasError, ValueError):
    """Malformed data or configuration (bad CSV, non-binary cell, bad spec)."""

    exit_code = 2


class StructureError(CausalBiasError, ValueError):
    """The graph does not support the requested computation."""

    exit_code = 3


class PositivityError(CausalBiasError, ValueError):
    exit_code = 4


class CollinearityError(CausalBiasError, ValueError):
    exit_code = 4


class ParameterError(CausalBiasError, ValueError):
    """Parameterization whose derived conditionals are not valid probabilities."""

    exit_code = 2
