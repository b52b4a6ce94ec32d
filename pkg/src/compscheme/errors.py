"""Exception hierarchy shared by the solver, the players and the CLI."""

from __future__ import annotations


class CompSchemeError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 1


class InputError(CompSchemeError, ValueError):
    """Bad user input: malformed rational, job size off the grid, bad machine index."""

    exit_code = 2


class ResourceError(CompSchemeError):
    """A configured cap (states, nodes, search nodes, sweeps) would be exceeded."""

    exit_code = 3


class InvariantViolation(CompSchemeError, AssertionError):
    """A property that the theory guarantees failed to hold.

    Seeing one of these means the implementation is wrong, not the input.
    """

    exit_code = 4


class ProtocolError(CompSchemeError):
    """An external player sent a malformed or illegal message."""

    exit_code = 2
