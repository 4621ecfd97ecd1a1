"""
Exception types raised by flowprop.
Library code raises these; only the CLI turns them into exit codes.
"""


class FlowpropError(Exception):
    """Base class for every error flowprop raises on purpose."""


class ConfigError(FlowpropError):
    """Invalid configuration value or unreadable config file."""

    def __init__(self, message, line=None):
        self.message = message
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ContractError(FlowpropError):
    """Operands with inconsistent shapes, lengths or levels."""


class FormatError(FlowpropError):
    """Malformed tensor or pixmap file."""

    def __init__(self, message, offset):
        self.offset = offset
        super().__init__(f"{message} (byte offset {offset})")


class SamplingError(FlowpropError):
    """Clip too short for the requested training triplet."""


class EvaluationError(FlowpropError):
    """Detection evaluation without any ground truth to score against."""
