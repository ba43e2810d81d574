"""Observed-data containers, pair enumeration, and CSV ingestion."""

import csv
from dataclasses import dataclass, field
from typing import Iterator, Sequence, Tuple

import numpy as np

from .errors import EstimabilityError, IngestionError, ValidationError

OUTCOME_KINDS = ("continuous", "count")


@dataclass(frozen=True)
class Subject:
    """One observed record: treatment z, outcome y, covariate vector w."""

    id: str
    z: int
    y: float
    w: Tuple[float, ...] = ()


@dataclass(frozen=True)
class PairIndex:
    """Unordered subject pair, stored with i < j over positions."""

    i: int
    j: int


class Dataset:
    """Immutable column store for n subjects.

    Arrays are set once and frozen; the object is safe to share read-only
    across threads and cheap to pickle to worker processes.
    """

    def __init__(self, z, y, w=None, ids=None, outcome_kind="continuous"):
        z = np.asarray(z)
        y = np.asarray(y, dtype=float)
        n = len(z)
        if n < 2:
            raise ValidationError("a dataset needs at least two subjects")
        if len(y) != n:
            raise ValidationError("z and y lengths differ")
        if w is None:
            w = np.empty((n, 0))
        w = np.asarray(w, dtype=float)
        if w.ndim == 1:
            w = w[:, None]
        if w.shape[0] != n:
            raise ValidationError("covariate row count differs from n")
        if outcome_kind not in OUTCOME_KINDS:
            raise ValidationError(f"outcome_kind must be one of {OUTCOME_KINDS}")
        if not np.all(np.isin(z, (0, 1))):
            raise ValidationError("treatment indicator must be 0/1")
        if not np.all(np.isfinite(y)):
            raise ValidationError("outcomes must be finite")
        if w.size and not np.all(np.isfinite(w)):
            raise ValidationError("covariates must be finite")
        self.z = z.astype(np.int8)
        self.y = y
        self.w = w
        self.ids = tuple(str(i) for i in (ids if ids is not None else range(n)))
        self.outcome_kind = outcome_kind
        self.n_rejected_rows = 0
        for a in (self.z, self.y, self.w):
            a.setflags(write=False)

    @property
    def n(self):
        return len(self.z)

    @property
    def n1(self):
        return int(self.z.sum())

    @property
    def n0(self):
        return self.n - self.n1

    @property
    def p(self):
        return self.w.shape[1]

    @property
    def ties(self):
        """Whether the half-tie kernel applies (forced for count outcomes)."""
        return self.outcome_kind == "count"

    def subjects(self):
        for k in range(self.n):
            yield Subject(self.ids[k], int(self.z[k]), float(self.y[k]),
                          tuple(self.w[k]))

    def require_both_arms(self):
        if self.n1 == 0 or self.n0 == 0:
            raise EstimabilityError(
                "dataset has a single treatment arm; no discordant pairs exist")


@dataclass(frozen=True)
class PotentialDataset:
    """Simulation-only container holding both potential outcomes."""

    y1: np.ndarray
    y0: np.ndarray
    z: np.ndarray
    w: np.ndarray
    b: np.ndarray

    def observed(self, outcome_kind="continuous"):
        y = np.where(self.z == 1, self.y1, self.y0)
        return Dataset(self.z, y, self.w, outcome_kind=outcome_kind)


def enumerate_pairs(dataset) -> Iterator[PairIndex]:
    """All C(n, 2) unordered position pairs, each exactly once."""
    n = dataset.n
    for i in range(n - 1):
        for j in range(i + 1, n):
            yield PairIndex(i, j)


def discordant_pairs(dataset) -> Iterator[Tuple[int, int]]:
    """All n1 * n0 (treated_index, control_index) pairs."""
    treated = np.flatnonzero(dataset.z == 1)
    control = np.flatnonzero(dataset.z == 0)
    for t in treated:
        for c in control:
            yield int(t), int(c)


@dataclass(frozen=True)
class CsvSchema:
    """Column selection for load_csv."""

    z_col: str
    y_col: str
    w_cols: Sequence[str] = field(default_factory=tuple)


def load_csv(path, schema: CsvSchema, outcome_kind="continuous") -> Dataset:
    """Read a header-first UTF-8 CSV into a Dataset.

    Rows with an empty value in any required column are rejected listwise
    (counted on the returned dataset). Malformed values raise IngestionError
    naming the 1-based data row.
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise IngestionError(f"cannot open {path}: {exc}") from None
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise IngestionError("empty file or missing header row")
        needed = [schema.z_col, schema.y_col, *schema.w_cols]
        missing = [c for c in needed if c not in reader.fieldnames]
        if missing:
            raise IngestionError(f"missing column(s): {', '.join(missing)}")

        z, y, w, ids, rejected = [], [], [], [], 0
        for rownum, rec in enumerate(reader, start=1):
            vals = [rec.get(c) for c in needed]
            if any(v is None or v.strip() == "" for v in vals):
                rejected += 1
                continue
            zv = vals[0].strip()
            if zv not in ("0", "1"):
                raise IngestionError(
                    f"treatment column {schema.z_col!r} must be 0/1, got {zv!r}",
                    row=rownum)
            try:
                yv = float(vals[1])
                wv = [float(v) for v in vals[2:]]
            except ValueError as exc:
                raise IngestionError(f"non-numeric value: {exc}", row=rownum) from None
            z.append(int(zv))
            y.append(yv)
            w.append(wv)
            ids.append(rec.get("id", str(rownum)))

    if len(z) < 2:
        raise IngestionError(f"need at least 2 usable rows, found {len(z)}")
    ds = Dataset(np.array(z), np.array(y),
                 np.array(w) if schema.w_cols else None,
                 ids=ids, outcome_kind=outcome_kind)
    ds.n_rejected_rows = rejected
    return ds
