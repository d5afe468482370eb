"""Exception hierarchy shared by all dhac modules."""

from __future__ import annotations


class DhacError(Exception):
    """Base class for all toolkit errors."""


class ParseError(DhacError):
    """Malformed program/config/trace document (bad JSON, missing fields)."""


class ValidationError(DhacError):
    """Structurally invalid graph: cycle, dangling id, arity or type violation."""


class InputError(DhacError):
    """Input vector does not match the graph's input arity/types/ranges."""


class EvalError(DhacError):
    """Runtime evaluation failure (div-by-zero, non-finite, inexact int div)."""

    def __init__(self, reason: str, node_id: str | None = None):
        self.reason = reason
        self.node_id = node_id
        where = f" at node '{node_id}'" if node_id else ""
        super().__init__(f"{reason}{where}")


class BuiltinError(DhacError):
    """Unknown builtin name or invalid builtin parameters."""


class ConfigError(DhacError):
    """Invalid backend/scenario configuration."""


class StatsError(DhacError):
    """error_stats called on empty or mismatched sequences."""


class ModulusError(DhacError):
    """Invalid modulus (non-positive, non-prime where primality is required)."""


class NoInverseError(DhacError):
    """Residue has no multiplicative inverse modulo m."""


class SiteError(DhacError):
    """Invalid sentinel site (missing id, non-float node, duplicate site)."""


class TraceError(DhacError):
    """Trace document does not match the instrumented program."""
