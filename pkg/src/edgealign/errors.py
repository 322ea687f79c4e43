"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: input/format problems exit
with 2, infeasible alignment with 3, violated internal invariants with 4.
"""

from __future__ import annotations


class EdgeAlignError(Exception):
    """Base class for all package errors."""


class InputFormatError(EdgeAlignError):
    """Malformed input: bad file headers, shape mismatches, out-of-range values."""

    exit_code = 2


class InfeasibleAssignmentError(EdgeAlignError):
    """No injective assignment covers every source pixel.

    ``deficient`` names a set of left indices whose combined candidate
    set is too small (a Hall-condition witness).
    """

    exit_code = 3

    def __init__(self, deficient: list[int], message: str | None = None):
        self.deficient = list(deficient)
        shown = ", ".join(str(i) for i in self.deficient[:16])
        if len(self.deficient) > 16:
            shown += ", ..."
        super().__init__(
            message
            or f"no feasible assignment: deficient left set [{shown}] "
            f"({len(self.deficient)} nodes)"
        )


class InternalInvariantError(EdgeAlignError):
    """A postcondition the library guarantees was violated; indicates a bug."""

    exit_code = 4
