"""Pooled two-sample data: loading, validation, serialization and preprocessing.

A pooled sample stacks the outcome dataset (``d == 1``) on top of the belief
dataset (``d == 0``). The single value column holds the realized outcome on
outcome rows and the elicited belief on belief rows.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DegenerateSampleError, ParseError, SchemaError, ValidationError

DEFAULT_SCHEMA = {
    "d": "D",
    "value": "value",
    "weight": "w",
    "psi_lo": "psi_lo",
    "psi_hi": "psi_hi",
    "link_id": "link_id",
    "covariates": None,  # None -> every column named x1, x2, ...
}


@dataclass(frozen=True)
class ObservationRow:
    d: int
    y_tilde: float
    x: tuple[float, ...] = ()
    weight: float = 1.0
    psi_lo: float | None = None
    psi_hi: float | None = None
    link_id: str | None = None


@dataclass(frozen=True, eq=False)
class PooledSample:
    """Column-oriented pooled sample.

    Arrays are read-only after construction. ``x`` has shape ``(n, d_x)``
    (``d_x`` may be 0). ``psi_lo``/``psi_hi`` are NaN on outcome rows.
    """

    d: np.ndarray
    y: np.ndarray
    x: np.ndarray
    weight: np.ndarray
    psi_lo: np.ndarray | None = None
    psi_hi: np.ndarray | None = None
    link_id: np.ndarray | None = None
    has_weights: bool = False
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        d_raw = np.asarray(self.d, dtype=float).ravel()
        bad = np.flatnonzero((d_raw != 0) & (d_raw != 1))
        if bad.size:
            raise ValidationError(f"D must be 0 or 1, got {d_raw[bad[0]]}", row=int(bad[0]))
        d = d_raw.astype(np.int8)
        y = np.asarray(self.y, dtype=float).ravel()
        n = d.size
        x = np.zeros((n, 0)) if self.x is None else np.asarray(self.x, dtype=float)
        if x.size == 0:
            x = np.zeros((n, 0))
        elif x.ndim == 1:
            x = x.reshape(n, -1)
        w = np.ones(n) if self.weight is None else np.asarray(self.weight, dtype=float).ravel()
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "weight", w)
        for name in ("psi_lo", "psi_hi"):
            arr = getattr(self, name)
            if arr is not None:
                object.__setattr__(self, name, np.asarray(arr, dtype=float).ravel())
        if self.link_id is not None:
            object.__setattr__(self, "link_id", np.asarray(self.link_id, dtype=object).ravel())
        self._validate()
        for arr in (self.d, self.y, self.x, self.weight, self.psi_lo, self.psi_hi):
            if arr is not None:
                arr.flags.writeable = False

    def _validate(self):
        n = self.d.size
        if self.y.size != n or self.x.shape[0] != n or self.weight.size != n:
            raise ValidationError("column lengths differ")
        bad = np.flatnonzero(~np.isfinite(self.y))
        if bad.size:
            raise ValidationError("value is not finite", row=int(bad[0]))
        bad = np.flatnonzero(~np.isfinite(self.x).all(axis=1))
        if bad.size:
            raise ValidationError("covariate is not finite", row=int(bad[0]))
        bad = np.flatnonzero(~(np.isfinite(self.weight) & (self.weight > 0)))
        if bad.size:
            raise ValidationError(f"nonpositive weight {self.weight[bad[0]]}", row=int(bad[0]))
        if self.has_bounds:
            lo, hi = self.psi_lo, self.psi_hi
            belief = self.d == 0
            bad = np.flatnonzero(belief & ~(np.isfinite(lo) & np.isfinite(hi)))
            if bad.size:
                raise ValidationError("missing belief bound", row=int(bad[0]))
            bad = np.flatnonzero(belief & (lo > hi))
            if bad.size:
                raise ValidationError("psi_lo > psi_hi", row=int(bad[0]))
            bad = np.flatnonzero(~belief & (np.isfinite(lo) | np.isfinite(hi)))
            if bad.size:
                raise ValidationError("belief bounds given on an outcome row", row=int(bad[0]))
        n1 = int(self.d.sum())
        if n1 == 0 or n1 == n:
            raise DegenerateSampleError(
                f"need rows in both subsamples, got n1={n1}, n0={n - n1}"
            )

    @property
    def n(self) -> int:
        return int(self.d.size)

    @property
    def n1(self) -> int:
        return int(self.d.sum())

    @property
    def n0(self) -> int:
        return self.n - self.n1

    @property
    def d_x(self) -> int:
        return int(self.x.shape[1])

    @property
    def has_bounds(self) -> bool:
        return self.psi_lo is not None and self.psi_hi is not None

    @property
    def has_links(self) -> bool:
        return self.link_id is not None

    @property
    def outcomes(self) -> np.ndarray:
        return self.y[self.d == 1]

    @property
    def beliefs(self) -> np.ndarray:
        return self.y[self.d == 0]

    @property
    def rows(self) -> list[ObservationRow]:
        out = []
        for i in range(self.n):
            lo = hi = None
            if self.has_bounds and self.d[i] == 0:
                lo, hi = float(self.psi_lo[i]), float(self.psi_hi[i])
            out.append(
                ObservationRow(
                    d=int(self.d[i]),
                    y_tilde=float(self.y[i]),
                    x=tuple(float(v) for v in self.x[i]),
                    weight=float(self.weight[i]),
                    psi_lo=lo,
                    psi_hi=hi,
                    link_id=None if self.link_id is None else self.link_id[i],
                )
            )
        return out

    @classmethod
    def from_rows(cls, rows: Sequence[ObservationRow]) -> "PooledSample":
        rows = list(rows)
        bounds = any(r.psi_lo is not None for r in rows)
        links = any(r.link_id is not None for r in rows)
        nan = float("nan")
        return cls(
            d=[r.d for r in rows],
            y=[r.y_tilde for r in rows],
            x=np.array([r.x for r in rows], dtype=float),
            weight=[r.weight for r in rows],
            psi_lo=[nan if r.psi_lo is None else r.psi_lo for r in rows] if bounds else None,
            psi_hi=[nan if r.psi_hi is None else r.psi_hi for r in rows] if bounds else None,
            link_id=[r.link_id for r in rows] if links else None,
            has_weights=any(r.weight != 1.0 for r in rows),
        )

    @classmethod
    def from_arrays(cls, outcomes, beliefs, x_outcomes=None, x_beliefs=None, **kw):
        """Stack an outcome array and a belief array into a pooled sample."""
        outcomes = np.asarray(outcomes, dtype=float).ravel()
        beliefs = np.asarray(beliefs, dtype=float).ravel()
        d = np.r_[np.ones(outcomes.size, np.int8), np.zeros(beliefs.size, np.int8)]
        if x_outcomes is None:
            x = np.zeros((d.size, 0))
        else:
            x = np.vstack([np.asarray(x_outcomes, float).reshape(outcomes.size, -1),
                           np.asarray(x_beliefs, float).reshape(beliefs.size, -1)])
        return cls(d=d, y=np.r_[outcomes, beliefs], x=x, weight=kw.pop("weight", None), **kw)

    def with_values(self, y) -> "PooledSample":
        return replace(self, y=np.asarray(y, dtype=float))

    def subset(self, mask) -> "PooledSample":
        mask = np.asarray(mask)
        opt = lambda a: None if a is None else a[mask]
        return PooledSample(
            d=self.d[mask], y=self.y[mask], x=self.x[mask], weight=self.weight[mask],
            psi_lo=opt(self.psi_lo), psi_hi=opt(self.psi_hi), link_id=opt(self.link_id),
            has_weights=self.has_weights, extra=dict(self.extra),
        )

    def equals(self, other: "PooledSample") -> bool:
        def same(a, b):
            if a is None or b is None:
                return a is None and b is None
            if a.dtype == object or b.dtype == object:
                return a.shape == b.shape and all(u == v for u, v in zip(a, b))
            return a.shape == b.shape and np.array_equal(a, b, equal_nan=True)

        return all(
            same(getattr(self, k), getattr(other, k))
            for k in ("d", "y", "x", "weight", "psi_lo", "psi_hi", "link_id")
        )


def _resolve_schema(schema: Mapping | None) -> dict:
    out = dict(DEFAULT_SCHEMA)
    if schema:
        out.update(schema)
    return out


def _parse_float(text: str, row: int, column: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"column {column!r}: cannot parse {text!r} as a number", row=row) from None


def load_pooled_sample(path, schema: Mapping | None = None) -> PooledSample:
    """Read a pooled sample from a UTF-8 CSV with a header line.

    ``schema`` maps logical fields (``d``, ``value``, ``weight``, ``covariates``,
    ``psi_lo``, ``psi_hi``, ``link_id``) to column names. Optional columns absent
    from the header are skipped; ``d`` and ``value`` are required. Row indices in
    error messages are 0-based data rows.
    """
    schema = _resolve_schema(schema)
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for key in ("d", "value"):
            if schema[key] not in header:
                raise SchemaError(f"missing required column {schema[key]!r} (field {key!r})")
        cov_cols = schema["covariates"]
        if cov_cols is None:
            cov_cols = sorted((c for c in header if c[:1] == "x" and c[1:].isdigit()),
                              key=lambda c: int(c[1:]))
        else:
            missing = [c for c in cov_cols if c not in header]
            if missing:
                raise SchemaError(f"missing covariate columns {missing}")
        w_col = schema["weight"] if schema["weight"] in header else None
        lo_col = schema["psi_lo"] if schema["psi_lo"] in header else None
        hi_col = schema["psi_hi"] if schema["psi_hi"] in header else None
        if (lo_col is None) != (hi_col is None):
            raise SchemaError("belief bounds need both psi_lo and psi_hi columns")
        link_col = schema["link_id"] if schema["link_id"] in header else None

        d, y, x, w, lo, hi, links = [], [], [], [], [], [], []
        for i, rec in enumerate(reader):
            dv = _parse_float(rec[schema["d"]], i, schema["d"])
            if dv not in (0.0, 1.0):
                raise ValidationError(f"D must be 0 or 1, got {rec[schema['d']]!r}", row=i)
            d.append(int(dv))
            y.append(_parse_float(rec[schema["value"]], i, schema["value"]))
            x.append([_parse_float(rec[c], i, c) for c in cov_cols])
            if w_col is not None:
                wv = _parse_float(rec[w_col], i, w_col)
                if not (math.isfinite(wv) and wv > 0):
                    raise ValidationError(f"nonpositive weight {wv}", row=i)
                w.append(wv)
            if lo_col is not None:
                # blank bounds are allowed on outcome rows only
                lo.append(float("nan") if rec[lo_col] in ("", None) else _parse_float(rec[lo_col], i, lo_col))
                hi.append(float("nan") if rec[hi_col] in ("", None) else _parse_float(rec[hi_col], i, hi_col))
            if link_col is not None:
                links.append(rec[link_col] or None)

    n = len(d)
    return PooledSample(
        d=d,
        y=y,
        x=np.array(x, dtype=float).reshape(n, len(cov_cols)),
        weight=w if w_col is not None else None,
        psi_lo=lo if lo_col is not None else None,
        psi_hi=hi if hi_col is not None else None,
        link_id=links if link_col is not None else None,
        has_weights=w_col is not None,
    )


def save_pooled_sample(sample: PooledSample, path, schema: Mapping | None = None) -> None:
    """Write ``sample`` with the same CSV layout :func:`load_pooled_sample` reads."""
    schema = _resolve_schema(schema)
    cov_cols = schema["covariates"] or [f"x{k + 1}" for k in range(sample.d_x)]
    header = [schema["d"], schema["value"]]
    if sample.has_weights:
        header.append(schema["weight"])
    header += list(cov_cols)
    if sample.has_bounds:
        header += [schema["psi_lo"], schema["psi_hi"]]
    if sample.has_links:
        header.append(schema["link_id"])

    def fmt(v):
        return "" if not math.isfinite(v) else repr(float(v))

    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for i in range(sample.n):
            rec = [int(sample.d[i]), repr(float(sample.y[i]))]
            if sample.has_weights:
                rec.append(repr(float(sample.weight[i])))
            rec += [repr(float(v)) for v in sample.x[i]]
            if sample.has_bounds:
                rec += [fmt(sample.psi_lo[i]), fmt(sample.psi_hi[i])]
            if sample.has_links:
                rec.append("" if sample.link_id[i] is None else sample.link_id[i])
            wr.writerow(rec)


def weighted_mean(values, weights) -> float:
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if values.shape != weights.shape:
        raise ValueError(f"length mismatch: {values.shape} vs {weights.shape}")
    total = weights.sum()
    if not total > 0:
        raise ValueError("total weight must be positive")
    return float((weights * values).sum() / total)


def weighted_upper_quantile(values, weights, q: float) -> float:
    """Smallest value whose cumulative normalized weight reaches ``q``.

    With unit weights this is the order statistic of rank ``ceil(q * n)``.
    """
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    order = np.argsort(values, kind="stable")
    cum = np.cumsum(weights[order])
    # relative slack absorbs q*n landing a hair above an integer in floating point
    k = int(np.searchsorted(cum, q * cum[-1] * (1 - 1e-12), side="left"))
    return float(values[order[min(k, values.size - 1)]])


def winsorize_upper(sample: PooledSample, q: float, two_sided: bool = False,
                    use_weights: bool = True) -> PooledSample:
    """Cap each subsample at its own (weighted) ``q``-quantile.

    Outcome and belief rows are processed separately. With ``two_sided`` the
    lower tail is also floored at the mirrored ``1 - q`` level.
    """
    if not 0 < q <= 1:
        raise ValueError(f"quantile level must lie in (0, 1], got {q}")
    y = sample.y.copy()
    for arm in (1, 0):
        idx = np.flatnonzero(sample.d == arm)
        if idx.size == 0:
            raise DegenerateSampleError(f"subsample D={arm} is empty")
        w = sample.weight[idx] if use_weights else np.ones(idx.size)
        vals = y[idx]
        cap = weighted_upper_quantile(vals, w, q)
        vals = np.minimum(vals, cap)
        if two_sided:
            floor = -weighted_upper_quantile(-vals, w, q)
            vals = np.maximum(vals, floor)
        y[idx] = vals
    return sample.with_values(y)
