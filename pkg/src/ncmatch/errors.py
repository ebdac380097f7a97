"""Exception taxonomy shared across the package.

Every public operation raises one of these subclasses so callers (and the
CLI, which maps categories to exit codes) can react to the *kind* of failure
without parsing messages:

- InvalidArgumentError: an argument violates an operation's contract.
- NotFoundError: a referenced entity (domain id, file) does not exist.
- ConfigError: a configuration document is malformed or carries unknown keys.
- NumericFailureError: a computation produced non-finite values or lost
  structure it is contractually required to have.
- DataFormatError: a data file on disk does not match its declared schema.
"""

from __future__ import annotations


class NcmatchError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgumentError(NcmatchError, ValueError):
    """An argument violates an operation's contract (shape, range, kind)."""


class NotFoundError(NcmatchError, LookupError):
    """A referenced entity does not exist."""


class ConfigError(NcmatchError, ValueError):
    """A configuration document is malformed, unversioned, or has unknown keys."""


class NumericFailureError(NcmatchError, ArithmeticError):
    """A computation produced non-finite values or violated a numeric contract."""


class DataFormatError(NcmatchError, ValueError):
    """A data file on disk does not match its declared schema."""
