"""Fixed-width integer checks for the hardware datapath model.

With auditing enabled every value that would live in a hardware register is
checked against its declared width. Violations are counted and, in strict
mode, raised immediately.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field


class WidthViolation(AssertionError):
    pass


@dataclass
class _AuditState:
    enabled: bool = False
    strict: bool = True
    checks: int = 0
    violations: list[str] = field(default_factory=list)


_state = _AuditState()


def score_width(depth: int) -> int:
    """Bits needed for a count in ``0..depth``, i.e. ceil(log2(depth + 1))."""
    return depth.bit_length()


def tree_depth(lanes: int) -> int:
    """Stages of a binary comparator tree over ``lanes`` inputs: ceil(log2(lanes))."""
    return (lanes - 1).bit_length()


def audit_enabled() -> bool:
    return _state.enabled


def check_width(value: int, bits: int, what: str) -> None:
    """Record a violation if ``value`` does not fit an unsigned ``bits``-bit register."""
    if not _state.enabled:
        return
    _state.checks += 1
    if value < 0 or value >> bits:
        msg = f"{what}={value} exceeds {bits}-bit unsigned width"
        _state.violations.append(msg)
        if _state.strict:
            raise WidthViolation(msg)


def check_array_width(values, bits: int, what: str) -> None:
    """Vectorised :func:`check_width` for numpy arrays."""
    if not _state.enabled or values.size == 0:
        return
    check_width(int(values.min()), bits, what + "[min]")
    check_width(int(values.max()), bits, what + "[max]")


@contextlib.contextmanager
def datapath_audit(strict: bool = True):
    """Enable width auditing for the block.

    Yields the audit state; its ``checks`` and ``violations`` stay readable
    after the block exits (until the next audit starts).
    """
    prev = (_state.enabled, _state.strict)
    _state.enabled, _state.strict = True, strict
    _state.checks = 0
    _state.violations.clear()
    try:
        yield _state
    finally:
        _state.enabled, _state.strict = prev
