#!/usr/bin/env python3
# -*- coding: UTF-8 -*-
"""Errors raised by `dmf_poi`.

Each error carries the exit code the command-line front end returns for it:
1 for usage errors, 2 for data errors, 3 for numeric failures.
"""


class DMFError(Exception):
    """Base class for all `dmf_poi` errors."""

    exit_code = 1


class UsageError(DMFError):
    """Bad flags, config values, or parameters."""

    exit_code = 1


class InvalidSigma(UsageError, ValueError):
    """Gaussian distance kernel requested with a non-positive bandwidth."""


class DataError(DMFError, ValueError):
    """The input data cannot support the requested operation."""

    exit_code = 2


class MalformedRow(DataError):
    """A check-in row failed validation."""

    def __init__(self, line, reason):
        self.line = line
        self.reason = reason
        super().__init__(f"Malformed check-in row at line {line}: {reason}")


class EmptyInput(DataError):
    """No usable records."""


class UnreadableFile(DataError):
    """An input file is not valid JSON, Avro or UTF-8 text."""


class UnsupportedSchema(DataError):
    """A dataset, graph or checkpoint was written with another schema version."""


class UnlocatedUsers(DataError):
    """Indexed users have no check-ins to place them on the map."""


class DegenerateSplit(DataError):
    """A train/test split left one side empty."""


class IsolatedUser(DataError):
    """A walk was requested from a user with no neighbors."""

    def __init__(self, user):
        self.user = user
        super().__init__(f"User {user} has no neighbors in the adjacency graph.")


class InsufficientCandidates(DataError):
    """Fewer candidate items than recommendations requested."""


class EmptyTestSet(DataError):
    """Precision/recall requested for a user without test items."""


class NoTestUsers(DataError):
    """No user has test items, so there is nothing to evaluate."""


class NonFiniteUpdate(DMFError, ArithmeticError):
    """An SGD update produced NaN or Inf."""

    exit_code = 3

    def __init__(self, user, item, epoch=None, detail=""):
        self.user = user
        self.item = item
        self.epoch = epoch
        self.detail = detail
        super().__init__(self._message())

    def _message(self):
        where = f"user {self.user}, item {self.item}"
        if self.epoch is not None:
            where += f", epoch {self.epoch}"
        return (
            f"Non-finite update at {where}. {self.detail}".rstrip()
            + " Try a smaller learning rate or walk_scale=normalized."
        )

    def __str__(self):
        return self._message()
