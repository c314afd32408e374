"""Structured errors and warnings.

Every warning raised by the package is a :class:`VaxWarning` carrying a
stable, machine-readable ``code``; reports collect them by code.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass


class VaxError(Exception):
    """Base class for all package errors."""

    code = "error"


class DataError(VaxError, ValueError):
    """Invalid input data, optionally located by row and column.

    Rows are 1-based line numbers of the input file (the header is line 1).
    """

    code = "data_error"

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class PositivityError(DataError):
    code = "positivity"


class FitError(VaxError):
    """A nuisance model could not be fitted."""

    code = "fit_error"

    def __init__(self, message: str, nuisance: str | None = None, column: str | None = None):
        self.nuisance = nuisance
        self.column = column
        prefix = f"{nuisance}: " if nuisance else ""
        super().__init__(prefix + message)


class EstimationError(VaxError):
    """An estimand could not be evaluated (degenerate denominator, missing nuisance)."""

    code = "estimation_error"

    def __init__(self, message: str, estimand: str | None = None):
        self.estimand = estimand
        prefix = f"{estimand}: " if estimand else ""
        super().__init__(prefix + message)


class ConfigError(VaxError, ValueError):
    code = "config_error"


class VaxWarning(UserWarning):
    """Warning with a stable code; ``str(w)`` is the human-readable message."""

    def __init__(self, code: str, message: str):
        self.code = code
        super().__init__(message)


# stable warning codes
W_NONCONVERGENCE = "fit.nonconvergence"
W_TRUNCATION = "nuisance.truncation"
W_MONOTONE_CLAMP = "nuisance.monotone_clamp"
W_PROTECTED_CLAMP = "strata.protected_mass_clamped"
W_Q_CLAMP = "bounds.q_clamped"
W_STRICT_FALLBACK = "bounds.strict_trim_fallback"
W_BOOT_FAILED = "bounds.bootstrap_failed_replicates"
W_SENSITIVITY_SKIP = "sensitivity.epsilon_failed"
W_TIME_SEED = "rng.time_seeded"
W_REPLICATE_FAILED = "simulation.replicate_failed"
W_POSITIVITY = "nuisance.positivity_flag"


def warn(code: str, message: str, stacklevel: int = 2) -> None:
    warnings.warn(VaxWarning(code, message), stacklevel=stacklevel + 1)


@dataclass(frozen=True)
class WarningRecord:
    code: str
    message: str

    def to_dict(self) -> dict:
        return {"code": self.code, "message": self.message}


def collect(caught) -> list[WarningRecord]:
    """Convert ``warnings.catch_warnings(record=True)`` output to records.

    Foreign warnings are kept under the code ``python.<Category>``.
    """
    out = []
    for w in caught:
        msg = w.message
        if isinstance(msg, VaxWarning):
            out.append(WarningRecord(msg.code, str(msg)))
        else:
            out.append(WarningRecord(f"python.{w.category.__name__}", str(msg)))
    return out
