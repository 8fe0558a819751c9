from __future__ import annotations


class GmxbError(Exception):
    """Base class for every error raised by the package."""


class DomainError(GmxbError, ValueError):
    """An argument lies outside the domain of an operation."""


class ConfigError(GmxbError):
    def __init__(self, message: str, *, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field:
            where.append(field)
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(f"{prefix}{message}")


class CertificationError(GmxbError):
    """Extreme-point search requested where the bang-bang principle is not certified."""


class NumericalError(GmxbError):
    pass
