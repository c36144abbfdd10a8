"""Exception types raised across the package."""


class ConfigurationError(ValueError):
    """Invalid hyperparameters or feature specification."""


class InputError(ValueError):
    """Invalid numerical input (e.g. a non-unit direction, r beyond the cutoff)."""


class ContractError(ValueError):
    """Two feature blocks cannot be combined (mismatched samples, missing CG entries)."""


class ParseError(ValueError):
    """Malformed input file."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class GenerationError(RuntimeError):
    """A dataset generator could not satisfy its placement constraints."""
