"""Observed-data records, the covariate transformation and CSV ingestion.

The covariate subject to a lower detection limit, ``Z``, is handled on the
transformed scale ``T = h^{-1}(Z)`` with ``h(t) = exp(-t)``. Left-censoring of
``Z`` at ``L`` becomes right-censoring of ``T`` at ``C = -log L``. Censored
rows carry ``V = C`` and ``delta = 0``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from os import PathLike
from typing import Mapping, Sequence

import numpy as np

from .errors import ConsistencyError, DataError, DomainError, SchemaError


@dataclass(frozen=True)
class Transformation:
    """Monotone decreasing map ``h`` with ``Z = h(T)``."""

    kind: str = "neg_log"

    def __post_init__(self):
        if self.kind != "neg_log":
            raise ValueError(f"unsupported transformation {self.kind!r}")

    def forward(self, t):
        """``h(t) = exp(-t)``."""
        return np.exp(-np.asarray(t, dtype=float))

    def inverse(self, z):
        """``h^{-1}(z) = -log z``; requires ``z > 0``."""
        z = np.asarray(z, dtype=float)
        if np.any(z <= 0):
            raise DomainError("neg_log transformation requires positive values")
        return -np.log(z)


NEG_LOG = Transformation()


def transform_limit(limit: float, transform: Transformation = NEG_LOG) -> float:
    """Map a detection limit ``L`` on the Z scale to ``C = h^{-1}(L)``."""
    if not math.isfinite(limit) or limit <= 0:
        raise DomainError(f"detection limit must be positive, got {limit}")
    return float(transform.inverse(limit))


@dataclass(frozen=True)
class LinearPredictorLayout:
    """Column layout ``D(t) = (1, x', h(t))'`` shared by every GLM fit."""

    p: int
    transform: Transformation = NEG_LOG

    @property
    def dim(self) -> int:
        return self.p + 2

    def design(self, x, t) -> np.ndarray:
        """Design rows for covariates ``x`` (n x p) at transformed values ``t``."""
        return self.design_z(x, self.transform.forward(t))

    def design_z(self, x, z) -> np.ndarray:
        z = np.atleast_1d(np.asarray(z, dtype=float))
        x = np.asarray(x, dtype=float).reshape(len(z), self.p)
        return np.column_stack([np.ones(len(z)), x, z])

    def split(self, theta):
        """Return ``(beta, gamma)``."""
        theta = np.asarray(theta, dtype=float)
        return theta[:-1], float(theta[-1])


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ObservationSet:
    """Validated sample ``(Y, X, V, delta)`` with transformed limit ``c``.

    ``x`` never contains an intercept column. Arrays are copied and frozen.
    """

    y: np.ndarray
    x: np.ndarray
    v: np.ndarray
    delta: np.ndarray
    c: float
    x_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        n = len(y)
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(n, -1) if n else x.reshape(0, 0)
        if x.shape[0] != n:
            raise DataError(f"x has {x.shape[0]} rows, expected {n}")
        v = np.asarray(self.v, dtype=float).ravel()
        d = np.asarray(self.delta).ravel()
        if len(v) != n or len(d) != n:
            raise DataError("y, v and delta must have the same length")
        if not np.all((d == 0) | (d == 1)):
            raise DataError("delta must be binary")
        c = float(self.c)
        p = x.shape[1]
        if n < p + 3:
            raise DataError(f"need n >= p + 3 records, got n={n}, p={p}")
        for name, arr in (("y", y), ("x", x), ("v", v)):
            if not np.all(np.isfinite(arr)):
                raise DataError(f"non-finite entries in {name}")
        if not math.isfinite(c):
            raise DataError("transformed limit must be finite")
        det = d == 1
        bad = np.flatnonzero(det & (v > c))
        if bad.size:
            raise ConsistencyError(
                f"detected record {bad[0]} lies beyond the limit (v={v[bad[0]]} > c={c})",
                row=int(bad[0]),
            )
        bad = np.flatnonzero(~det & (v != c))
        if bad.size:
            raise ConsistencyError(
                f"censored record {bad[0]} must carry v = c", row=int(bad[0])
            )
        names = tuple(self.x_names) if self.x_names else tuple(f"x{j + 1}" for j in range(p))
        if len(names) != p:
            raise DataError("x_names length does not match x columns")
        object.__setattr__(self, "y", _readonly(y))
        object.__setattr__(self, "x", _readonly(x))
        object.__setattr__(self, "v", _readonly(v))
        object.__setattr__(self, "delta", _readonly(d))
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "x_names", names)

    @classmethod
    def from_latent(cls, y, x, t, c, x_names=()) -> "ObservationSet":
        """Censor latent transformed values ``t`` at ``c``."""
        t = np.asarray(t, dtype=float)
        delta = (t <= c).astype(float)
        return cls(y=y, x=x, v=np.minimum(t, c), delta=delta, c=c, x_names=x_names)

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def detected(self) -> np.ndarray:
        return self.delta == 1

    @property
    def censoring_rate(self) -> float:
        return float(1.0 - np.mean(self.delta))

    @property
    def limit(self) -> float:
        """Detection limit ``L = h(c)`` on the original scale."""
        return float(NEG_LOG.forward(self.c))

    @property
    def layout(self) -> LinearPredictorLayout:
        return LinearPredictorLayout(self.p)

    def z_observed(self) -> np.ndarray:
        """``h(V)`` for detected rows, NaN for censored rows."""
        z = NEG_LOG.forward(self.v)
        return np.where(self.detected, z, np.nan)

    def take(self, idx) -> "ObservationSet":
        idx = np.asarray(idx)
        return ObservationSet(
            self.y[idx], self.x[idx], self.v[idx], self.delta[idx], self.c, self.x_names
        )

    def select_columns(self, cols: Sequence[int]) -> "ObservationSet":
        cols = list(cols)
        return ObservationSet(
            self.y,
            self.x[:, cols],
            self.v,
            self.delta,
            self.c,
            tuple(self.x_names[j] for j in cols),
        )


def _parse_float(raw: str, column: str, row: int) -> float:
    try:
        return float(raw)
    except ValueError:
        raise DataError(f"row {row}: column {column!r} is not numeric: {raw!r}") from None


def load_csv(
    path: str | PathLike,
    schema: Mapping[str, object],
    limit: float,
    transform: Transformation = NEG_LOG,
) -> ObservationSet:
    """Read a CSV file into an :class:`ObservationSet`.

    ``schema`` maps roles to column names: ``y`` (response), ``z`` (raw
    covariate, blank when below the limit), optional ``detected`` (1/0 flag)
    and ``x`` (a sequence of column names or a comma-separated string).
    Lines starting with ``#`` are skipped.
    Row indices in error messages are zero-based data rows.
    """
    c = transform_limit(limit, transform)
    for role in ("y", "z"):
        if role not in schema:
            raise SchemaError(f"schema is missing the {role!r} role")
    x_cols = schema.get("x", ())
    if isinstance(x_cols, str):
        x_cols = [s for s in x_cols.split(",") if s]
    x_cols = list(x_cols)
    flag_col = schema.get("detected")

    with open(path, newline="", encoding="utf-8") as fh:
        # lines starting with '#' are comments (the CLI writes such headers)
        reader = csv.DictReader(line for line in fh if not line.startswith("#"))
        header = reader.fieldnames or []
        wanted = [schema["y"], schema["z"], *x_cols] + ([flag_col] if flag_col else [])
        for col in wanted:
            if col not in header:
                raise SchemaError(f"column {col!r} not found in {path}")
        rows = list(reader)

    n = len(rows)
    y = np.empty(n)
    x = np.empty((n, len(x_cols)))
    v = np.empty(n)
    delta = np.empty(n)
    for i, row in enumerate(rows):
        y[i] = _parse_float(row[schema["y"]], schema["y"], i)
        for j, col in enumerate(x_cols):
            x[i, j] = _parse_float(row[col], col, i)
        raw_z = (row[schema["z"]] or "").strip()
        if flag_col:
            flag = _parse_float(row[flag_col], flag_col, i)
            if flag not in (0.0, 1.0):
                raise DataError(f"row {i}: detection flag must be 0 or 1")
            detected = flag == 1.0
        else:
            detected = raw_z != ""
        if not detected:
            v[i], delta[i] = c, 0.0
            continue
        if raw_z == "":
            raise ConsistencyError(f"row {i}: flagged detected but value is blank", row=i)
        z = _parse_float(raw_z, schema["z"], i)
        if z <= 0:
            raise DomainError(f"row {i}: covariate value {z} is not positive", row=i)
        if z < limit:
            raise ConsistencyError(
                f"row {i}: detected value {z} lies below the limit {limit}", row=i
            )
        v[i], delta[i] = float(transform.inverse(z)), 1.0
    return ObservationSet(y=y, x=x, v=v, delta=delta, c=c, x_names=tuple(x_cols))
