"""Trial data ingestion, validation and empirical cell statistics.

A trial record is ``(X, Z, S, Y)``: baseline covariates, vaccine arm,
infection indicator and post-infection outcome. :class:`TrialData` is the
validated, immutable container every estimator consumes.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .diagnostics import DataError, PositivityError


@dataclass(frozen=True)
class Observation:
    """A single trial record."""

    x: tuple[float, ...]
    z: int
    s: int
    y: float

    def __post_init__(self):
        if self.z not in (0, 1) or self.s not in (0, 1):
            raise DataError(f"z and s must be 0 or 1, got z={self.z!r}, s={self.s!r}")
        if not math.isfinite(self.y) or not all(math.isfinite(v) for v in self.x):
            raise DataError("y and covariates must be finite")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


class TrialData:
    """Validated rectangular trial dataset.

    Parameters
    ----------
    x : array_like, shape (n, p)
        Baseline covariates (``p`` may be 0).
    z, s : array_like of {0, 1}, shape (n,)
        Vaccine arm and infection indicator.
    y : array_like, shape (n,)
        Post-infection outcome. Binary outcomes are detected and flagged.
    covariate_names : sequence of str, optional
        Labels for the columns of ``x``; defaults to ``x1 .. xp``.

    Raises
    ------
    DataError
        On shape mismatch, non-finite values or out-of-range arms/infections.
    PositivityError
        If either arm has no infected participant.

    Notes
    -----
    Arrays are copied and made read-only, so instances can be shared freely
    between threads and processes.
    """

    __slots__ = ("x", "z", "s", "y", "covariate_names", "binary_y", "_cache")

    def __init__(self, x, z, s, y, covariate_names: Sequence[str] | None = None,
                 check_positivity: bool = True):
        z = np.asarray(z)
        n = z.shape[0] if z.ndim else 0
        x = np.asarray(x, dtype=float)
        if x.size == 0:
            x = np.zeros((n, 0))
        elif x.ndim == 1:
            x = x.reshape(-1, 1)
        s = np.asarray(s)
        y = np.asarray(y, dtype=float)
        if not (x.shape[0] == n == s.shape[0] == y.shape[0]) or z.ndim != 1:
            raise DataError("x, z, s and y must have the same number of rows")
        if n == 0:
            raise DataError("dataset is empty")
        for name, v in (("z", z), ("s", s)):
            vf = np.asarray(v, dtype=float)
            bad = np.flatnonzero(~np.isin(vf, (0.0, 1.0)))
            if bad.size:
                raise DataError(f"{name} must be 0 or 1, got {vf[bad[0]]!r}", row=int(bad[0]) + 1, column=name)
        if not np.all(np.isfinite(y)):
            raise DataError("y must be finite", row=int(np.flatnonzero(~np.isfinite(y))[0]) + 1, column="y")
        if not np.all(np.isfinite(x)):
            r, c = np.argwhere(~np.isfinite(x))[0]
            raise DataError("covariates must be finite", row=int(r) + 1, column=f"x[{c}]")
        if covariate_names is None:
            covariate_names = [f"x{j + 1}" for j in range(x.shape[1])]
        covariate_names = tuple(str(c) for c in covariate_names)
        if len(covariate_names) != x.shape[1]:
            raise DataError("covariate_names length does not match x")
        self.x = _frozen(x)
        self.z = _frozen(np.asarray(z, dtype=np.int8))
        self.s = _frozen(np.asarray(s, dtype=np.int8))
        self.y = _frozen(y)
        self.covariate_names = covariate_names
        self.binary_y = bool(np.all((y == 0.0) | (y == 1.0)))
        self._cache = {}
        if check_positivity:
            for arm in (0, 1):
                if not np.any((self.z == arm) & (self.s == 1)):
                    raise PositivityError(f"no infected participants (S=1) in arm Z={arm}", column="s")

    # -- construction helpers -------------------------------------------
    @classmethod
    def from_observations(cls, observations: Sequence[Observation],
                          covariate_names: Sequence[str] | None = None) -> "TrialData":
        if not observations:
            raise DataError("dataset is empty")
        p = len(observations[0].x)
        if any(len(o.x) != p for o in observations):
            raise DataError("observations have differing covariate dimension")
        x = np.array([o.x for o in observations], dtype=float).reshape(len(observations), p)
        return cls(x, [o.z for o in observations], [o.s for o in observations],
                   [o.y for o in observations], covariate_names)

    def take(self, idx, check_positivity: bool = True) -> "TrialData":
        """Rows ``idx`` (e.g. a bootstrap resample) as a new dataset."""
        idx = np.asarray(idx)
        return TrialData(self.x[idx], self.z[idx], self.s[idx], self.y[idx],
                         self.covariate_names, check_positivity=check_positivity)

    # -- accessors ------------------------------------------------------
    @property
    def n(self) -> int:
        return int(self.z.shape[0])

    @property
    def p(self) -> int:
        return int(self.x.shape[1])

    def __len__(self) -> int:
        return self.n

    @property
    def observations(self) -> list[Observation]:
        return [self.observation(i) for i in range(self.n)]

    def observation(self, i: int) -> Observation:
        return Observation(tuple(float(v) for v in self.x[i]), int(self.z[i]), int(self.s[i]), float(self.y[i]))

    def column_index(self, name: str | int) -> int:
        if isinstance(name, (int, np.integer)):
            if not 0 <= int(name) < self.p:
                raise DataError(f"covariate index {name} out of range")
            return int(name)
        try:
            return self.covariate_names.index(name)
        except ValueError:
            raise DataError(f"unknown covariate {name!r}", column=str(name)) from None

    def cached(self, key, build):
        """Memoize derived, immutable artefacts (cell codes, sort orders)."""
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    def __repr__(self) -> str:
        return f"TrialData(n={self.n}, covariates={list(self.covariate_names)}, binary_y={self.binary_y})"


@dataclass(frozen=True)
class CellStats:
    """Empirical summaries of the four (z, s) cells.

    ``count[z][s]`` and ``mean[z][s]``; ``mean`` is ``None`` for an empty cell,
    which is also listed in ``empty_cells``.
    """

    n: int
    count: tuple[tuple[int, int], tuple[int, int]]
    mean: tuple[tuple[float | None, float | None], tuple[float | None, float | None]]
    y_range: tuple[tuple[tuple[float, float] | None, ...], ...]
    arm_size: tuple[int, int]
    rho_bar: tuple[float, float]
    arm_mean: tuple[float | None, float | None]
    rho_dot: float
    empty_cells: tuple[tuple[int, int], ...] = field(default=())

    def mu(self, z: int, s: int) -> float:
        m = self.mean[z][s]
        if m is None:
            raise DataError(f"cell (Z={z}, S={s}) is empty")
        return m


def cell_stats(data: TrialData) -> CellStats:
    """Counts, means and infected fractions of the (z, s) cells.

    Parameters
    ----------
    data : TrialData

    Returns
    -------
    CellStats
        Exact empirical fractions; empty cells are flagged, never NaN.
    """
    z, s, y = data.z, data.s, data.y
    counts, means, ranges, empty = [], [], [], []
    for zv in (0, 1):
        crow, mrow, rrow = [], [], []
        for sv in (0, 1):
            m = (z == zv) & (s == sv)
            c = int(m.sum())
            crow.append(c)
            if c:
                vals = y[m]
                mrow.append(math.fsum(vals.tolist()) / c)
                rrow.append((float(vals.min()), float(vals.max())))
            else:
                mrow.append(None)
                rrow.append(None)
                empty.append((zv, sv))
        counts.append(tuple(crow))
        means.append(tuple(mrow))
        ranges.append(tuple(rrow))
    arm = tuple(counts[zv][0] + counts[zv][1] for zv in (0, 1))
    rho = tuple(counts[zv][1] / arm[zv] if arm[zv] else 0.0 for zv in (0, 1))
    arm_mean = tuple(
        math.fsum(y[z == zv].tolist()) / arm[zv] if arm[zv] else None for zv in (0, 1)
    )
    return CellStats(
        n=data.n, count=tuple(counts), mean=tuple(means), y_range=tuple(ranges),
        arm_size=arm, rho_bar=rho, arm_mean=arm_mean,
        rho_dot=(counts[0][1] + counts[1][1]) / data.n, empty_cells=tuple(empty),
    )


def _parse_number(text: str, row: int, column: str) -> float:
    t = text.strip()
    if t == "" or t.upper() in ("NA", "NAN", "NULL", "NONE"):
        raise DataError("missing value", row=row, column=column)
    try:
        v = float(t)
    except ValueError:
        raise DataError(f"non-numeric value {text!r}", row=row, column=column) from None
    if not math.isfinite(v):
        raise DataError(f"non-finite value {text!r}", row=row, column=column)
    return v


def load_csv(path: str | Path, schema: Mapping) -> TrialData:
    """Read a comma-delimited UTF-8 file with a header row.

    Parameters
    ----------
    path : path-like
    schema : mapping
        ``{"z": <col>, "s": <col>, "y": <col>, "x": [<col>, ...]}``.

    Returns
    -------
    TrialData
        Rows in file order.

    Raises
    ------
    DataError
        Missing column, non-numeric or missing cell, Z/S outside {0, 1},
        or empty file; located by line number and column name.
    PositivityError
        No infected participant in one of the arms.
    """
    missing = [k for k in ("z", "s", "y") if k not in schema]
    if missing:
        raise DataError(f"schema lacks required keys {missing}")
    xcols = list(schema.get("x", []))
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=",")
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("empty file", row=1) from None
        header = [h.strip().lstrip("﻿") for h in header]
        cols = {}
        for role in ("z", "s", "y"):
            name = schema[role]
            if name not in header:
                raise DataError("missing column", row=1, column=name)
            cols[role] = header.index(name)
        xidx = []
        for name in xcols:
            if name not in header:
                raise DataError("missing column", row=1, column=name)
            xidx.append(header.index(name))
        z, s, y, x = [], [], [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(c.strip() == "" for c in rec):
                continue
            if len(rec) != len(header):
                raise DataError(f"expected {len(header)} fields, found {len(rec)}", row=lineno)
            zv = _parse_number(rec[cols["z"]], lineno, schema["z"])
            sv = _parse_number(rec[cols["s"]], lineno, schema["s"])
            for v, role in ((zv, "z"), (sv, "s")):
                if v not in (0.0, 1.0):
                    raise DataError(f"value {v!r} outside {{0, 1}}", row=lineno, column=schema[role])
            z.append(int(zv))
            s.append(int(sv))
            y.append(_parse_number(rec[cols["y"]], lineno, schema["y"]))
            x.append([_parse_number(rec[j], lineno, nm) for j, nm in zip(xidx, xcols)])
    if not z:
        raise DataError("empty file: header but no data rows", row=2)
    return TrialData(np.array(x, dtype=float).reshape(len(z), len(xcols)), z, s, y, xcols)
