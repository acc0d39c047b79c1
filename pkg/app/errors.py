from typing import Optional


class FdToolkitError(Exception):
    """Base exception for the FD toolkit"""
    pass


class DomainError(FdToolkitError):
    """Flow or demand outside the domain where the model is defined"""
    pass


class ParamError(FdToolkitError):
    """Model parameters violate their invariants"""
    pass


class DataError(FdToolkitError):
    """Input data cannot support the requested computation"""
    pass


class NumericalError(FdToolkitError):
    """Non-finite values produced during a numerical routine"""
    pass


class OrderError(FdToolkitError):
    """Signal event log is out of order (green_end before its green_start)"""
    pass


class ConfigError(FdToolkitError):
    """Missing or inconsistent configuration"""
    pass


class InvariantError(FdToolkitError):
    """A computed quantity broke a domain invariant"""
    pass


class ParseError(FdToolkitError):
    """Malformed input file row"""

    def __init__(self, line: Optional[int], reason: str):
        self.line = line
        self.reason = reason
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{reason}")


class IoError(FdToolkitError):
    """Output destination cannot be written"""
    pass
