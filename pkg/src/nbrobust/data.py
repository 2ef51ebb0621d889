"""Categorical datasets with missing cells: CSV I/O, discretization, perturbation.

A dataset is stored column-encoded: every attribute owns a vocabulary of
tokens and the cell matrix holds integer codes into it, with ``MISSING_CODE``
marking a NULL cell.  Public accessors speak tokens; a missing cell is
surfaced as ``None``, which can never collide with a parsed token (including
the literal null-token string).
"""

from __future__ import annotations

import csv
import io
import math
import os
import warnings
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass
from functools import cached_property
from typing import Literal

import numpy as np

from .errors import MalformedCsv, NonNumeric, NotComplete, NullLabel, SchemaMismatch

MISSING_CODE = -1
ABSENT_CODE = -2  # token never seen in an attribute; matches no cell

Cell = str | None
Point = tuple[str, ...]


def round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


@dataclass(frozen=True)
class Schema:
    attributes: tuple[str, ...]
    label_attribute: str
    null_token: str = "NULL"
    label_position: int | None = None  # column index of the label in the CSV header; None = last

    def __post_init__(self):
        object.__setattr__(self, "attributes", tuple(self.attributes))
        if not self.attributes:
            raise SchemaMismatch("schema needs at least one feature attribute")
        if len(set(self.attributes)) != len(self.attributes):
            raise SchemaMismatch(f"duplicate attribute names in {self.attributes}")
        if self.label_attribute in self.attributes:
            raise SchemaMismatch(f"label {self.label_attribute!r} is also a feature attribute")
        pos = self.label_position
        if pos is not None and not 0 <= pos <= len(self.attributes):
            raise SchemaMismatch(f"label_position {pos} out of range")

    @property
    def d(self) -> int:
        return len(self.attributes)

    @property
    def header(self) -> list[str]:
        cols = list(self.attributes)
        pos = len(cols) if self.label_position is None else self.label_position
        cols.insert(pos, self.label_attribute)
        return cols

    def index_of(self, attribute: str) -> int:
        try:
            return self.attributes.index(attribute)
        except ValueError:
            raise SchemaMismatch(f"unknown attribute {attribute!r}") from None

    @classmethod
    def from_header(cls, header: Sequence[str], label: str, null_token: str = "NULL") -> Schema:
        if label not in header:
            raise MalformedCsv(f"label column {label!r} not in header {list(header)}")
        pos = list(header).index(label)
        attrs = tuple(h for h in header if h != label)
        return cls(attrs, label, null_token, None if pos == len(attrs) else pos)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable labelled categorical dataset whose feature cells may be NULL.

    ``codes`` is an ``(n, d)`` int array indexing ``vocab[j]`` per column;
    ``labels`` indexes ``label_vocab``.  Row order is significant: it is the
    tie-breaking order used by every downstream algorithm.
    """

    schema: Schema
    codes: np.ndarray
    vocab: tuple[tuple[str, ...], ...]
    labels: np.ndarray
    label_vocab: tuple[str, ...]
    provenance: str | None = None

    def __post_init__(self):
        n = self.labels.shape[0]
        if self.codes.shape != (n, self.schema.d):
            raise SchemaMismatch(f"cell matrix shape {self.codes.shape} != ({n}, {self.schema.d})")
        if len(self.vocab) != self.schema.d:
            raise SchemaMismatch("one vocabulary per attribute required")
        self.codes.setflags(write=False)
        self.labels.setflags(write=False)

    # -- construction -------------------------------------------------------

    @classmethod
    def from_rows(
        cls,
        schema: Schema,
        rows: Iterable[tuple[Sequence[Cell], str]],
        provenance: str | None = None,
    ) -> Dataset:
        """Build from ``(cells, label)`` pairs; ``None`` cells are missing."""
        d = schema.d
        lookups: list[dict[str, int]] = [{} for _ in range(d)]
        label_lookup: dict[str, int] = {}
        flat: list[int] = []
        label_codes: list[int] = []
        for cells, label in rows:
            if len(cells) != d:
                raise MalformedCsv(f"row has {len(cells)} cells, expected {d}")
            if label is None:
                raise NullLabel("every row needs a label")
            for j, tok in enumerate(cells):
                if tok is None:
                    flat.append(MISSING_CODE)
                else:
                    flat.append(lookups[j].setdefault(tok, len(lookups[j])))
            label_codes.append(label_lookup.setdefault(label, len(label_lookup)))
        n = len(label_codes)
        codes = np.asarray(flat, dtype=np.int32).reshape(n, d)
        return cls(
            schema,
            codes,
            tuple(tuple(lk) for lk in lookups),
            np.asarray(label_codes, dtype=np.int32),
            tuple(label_lookup),
            provenance,
        )

    def _replace(self, codes=None, labels=None, vocab=None, provenance=None) -> Dataset:
        return Dataset(
            self.schema,
            self.codes if codes is None else codes,
            self.vocab if vocab is None else vocab,
            self.labels if labels is None else labels,
            self.label_vocab,
            self.provenance if provenance is None else provenance,
        )

    # -- shape --------------------------------------------------------------

    @property
    def n(self) -> int:
        return int(self.labels.shape[0])

    @property
    def d(self) -> int:
        return self.schema.d

    @property
    def attributes(self) -> tuple[str, ...]:
        return self.schema.attributes

    @cached_property
    def missing_mask(self) -> np.ndarray:
        return self.codes == MISSING_CODE

    @property
    def missing_count(self) -> int:
        return int(self.missing_mask.sum())

    @property
    def is_complete(self) -> bool:
        return self.missing_count == 0

    def require_complete(self, what: str = "dataset") -> None:
        if not self.is_complete:
            raise NotComplete(f"{what} has {self.missing_count} missing cells")

    # -- token access -------------------------------------------------------

    @cached_property
    def _token_codes(self) -> tuple[dict[str, int], ...]:
        return tuple({tok: c for c, tok in enumerate(v)} for v in self.vocab)

    @cached_property
    def _label_codes(self) -> dict[str, int]:
        return {tok: c for c, tok in enumerate(self.label_vocab)}

    def token_code(self, j: int, token: str) -> int:
        return self._token_codes[j].get(token, ABSENT_CODE)

    def label_code(self, label: str) -> int:
        return self._label_codes.get(label, ABSENT_CODE)

    def encode_point(self, t: Sequence[str]) -> np.ndarray:
        if len(t) != self.d:
            raise SchemaMismatch(f"point has {len(t)} values, expected {self.d}")
        return np.array([self.token_code(j, tok) for j, tok in enumerate(t)], dtype=np.int32)

    def cell(self, row: int, j: int) -> Cell:
        c = int(self.codes[row, j])
        return None if c == MISSING_CODE else self.vocab[j][c]

    def row(self, r: int) -> tuple[Cell, ...]:
        return tuple(self.cell(r, j) for j in range(self.d))

    def label_of(self, r: int) -> str:
        return self.label_vocab[int(self.labels[r])]

    def rows(self) -> Iterator[tuple[tuple[Cell, ...], str]]:
        for r in range(self.n):
            yield self.row(r), self.label_of(r)

    def column(self, j: int) -> list[Cell]:
        return [self.cell(r, j) for r in range(self.n)]

    def present_labels(self) -> list[str]:
        """Labels occurring in the data, in first-appearance order."""
        _, first = np.unique(self.labels, return_index=True)
        order = np.unique(self.labels)[np.argsort(first)]
        return [self.label_vocab[int(c)] for c in order]

    # -- derived datasets ---------------------------------------------------

    def with_missing(self, cells: Iterable[tuple[int, int]]) -> Dataset:
        """Copy with the given ``(row, attribute)`` cells set to NULL."""
        codes = self.codes.copy()
        for r, j in cells:
            codes[r, j] = MISSING_CODE
        return self._replace(codes=codes)

    def with_values(self, changes: Mapping[tuple[int, int], Cell]) -> Dataset:
        """Copy with cells overwritten by tokens (``None`` = NULL); grows vocabularies."""
        codes = self.codes.copy()
        vocab = [list(v) for v in self.vocab]
        lookups = [dict(m) for m in self._token_codes]
        for (r, j), tok in changes.items():
            if tok is None:
                codes[r, j] = MISSING_CODE
                continue
            c = lookups[j].get(tok)
            if c is None:
                c = lookups[j][tok] = len(vocab[j])
                vocab[j].append(tok)
            codes[r, j] = c
        return self._replace(codes=codes, vocab=tuple(tuple(v) for v in vocab))

    def subset(self, indices: Sequence[int] | np.ndarray) -> Dataset:
        idx = np.asarray(indices, dtype=np.intp)
        return self._replace(codes=self.codes[idx].copy(), labels=self.labels[idx].copy())

    # -- serialization ------------------------------------------------------

    def to_csv(self, dest: str | os.PathLike | io.TextIOBase) -> None:
        if isinstance(dest, (str, os.PathLike)):
            with open(dest, "w", encoding="utf-8", newline="") as fh:
                self._write_csv(fh)
        else:
            self._write_csv(dest)

    def to_csv_string(self) -> str:
        buf = io.StringIO()
        self._write_csv(buf)
        return buf.getvalue()

    def _write_csv(self, fh) -> None:
        schema = self.schema
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(schema.header)
        pos = schema.d if schema.label_position is None else schema.label_position
        null = schema.null_token
        for cells, label in self.rows():
            out = [null if c is None else c for c in cells]
            out.insert(pos, label)
            w.writerow(out)


def load_csv(
    path: str | os.PathLike,
    schema: Schema | None = None,
    *,
    label: str | None = None,
    null_token: str = "NULL",
) -> Dataset:
    """Read a labelled CSV; cells equal to the null token become missing.

    Either pass a ``schema`` or the ``label`` column name (attributes are then
    taken from the header in order).
    """
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_csv(fh, schema, label=label, null_token=null_token)


def parse_csv(fh, schema: Schema | None = None, *, label: str | None = None, null_token: str = "NULL") -> Dataset:
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise MalformedCsv("empty file: missing header") from None
    if schema is None:
        if label is None:
            raise SchemaMismatch("either a schema or a label column name is required")
        schema = Schema.from_header(header, label, null_token)
    elif sorted(header) != sorted(schema.header):
        raise MalformedCsv(f"header {header} does not match schema columns {schema.header}")
    if len(set(header)) != len(header):
        raise MalformedCsv(f"duplicate column names in header {header}")
    feature_pos = [header.index(a) for a in schema.attributes]
    label_pos = header.index(schema.label_attribute)
    null = schema.null_token

    def records():
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise MalformedCsv(f"line {lineno}: {len(rec)} fields, header has {len(header)}")
            lab = rec[label_pos]
            if lab == null:
                raise NullLabel(f"line {lineno}: label cell is the null token")
            yield [None if rec[p] == null else rec[p] for p in feature_pos], lab

    ds = Dataset.from_rows(schema, records())
    if ds.n == 0:
        raise MalformedCsv("no data rows")
    return ds


def read_points(path: str | os.PathLike, attributes: Sequence[str], null_token: str = "NULL") -> list[Point]:
    """Read complete test points; extra columns (e.g. a label) are ignored."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedCsv("empty points file") from None
        missing = [a for a in attributes if a not in header]
        if missing:
            raise MalformedCsv(f"points file lacks attributes {missing}")
        pos = [header.index(a) for a in attributes]
        points = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise MalformedCsv(f"line {lineno}: ragged row")
            pt = tuple(rec[p] for p in pos)
            if null_token in pt:
                raise MalformedCsv(f"line {lineno}: test points must be complete")
            points.append(pt)
    return points


def write_points(path: str | os.PathLike, attributes: Sequence[str], points: Iterable[Sequence[str]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(attributes))
        for p in points:
            w.writerow(list(p))


# -- discretization ---------------------------------------------------------


@dataclass(frozen=True)
class Binner:
    """Per-attribute cut points; value ``v`` falls in bin ``#{cut <= v}``."""

    cuts: dict[str, tuple[float, ...]]
    n_bins: int = 5
    strategy: Literal["uniform", "quantile"] = "uniform"

    def bin_index(self, attribute: str, value: float) -> int:
        return int(np.searchsorted(self.cuts[attribute], value, side="right"))

    def token(self, attribute: str, value: float) -> str:
        return f"b{self.bin_index(attribute, value)}"


def _numeric_column(ds: Dataset, attribute: str) -> np.ndarray:
    j = ds.schema.index_of(attribute)
    vals = []
    for tok in ds.column(j):
        if tok is None:
            continue
        try:
            vals.append(float(tok))
        except ValueError:
            raise NonNumeric(f"{attribute}: {tok!r} is not a number") from None
    return np.asarray(vals, dtype=float)


def _collapse(edges: np.ndarray) -> tuple[float, ...]:
    # drop repeated edges, then keep only the interior ones
    keep = [edges[0]]
    for e in edges[1:]:
        if e > keep[-1]:
            keep.append(e)
    return tuple(float(x) for x in keep[1:-1])


def fit_discretizer(
    dataset: Dataset,
    numeric_attrs: Iterable[str],
    n_bins: int = 5,
    strategy: Literal["uniform", "quantile"] = "uniform",
) -> Binner:
    if n_bins < 2:
        raise ValueError("n_bins must be at least 2")
    if strategy not in ("uniform", "quantile"):
        raise ValueError(f"unknown strategy {strategy!r}")
    dataset.require_complete("discretizer training set")
    cuts: dict[str, tuple[float, ...]] = {}
    for attr in numeric_attrs:
        col = _numeric_column(dataset, attr)
        lo, hi = float(col.min()), float(col.max())
        if lo == hi:
            warnings.warn(f"{attr}: constant column, using a single bin", stacklevel=2)
            cuts[attr] = ()
            continue
        if strategy == "uniform":
            edges = np.linspace(lo, hi, n_bins + 1)
        else:
            edges = np.quantile(col, np.linspace(0.0, 1.0, n_bins + 1))
        cuts[attr] = _collapse(edges)
    return Binner(cuts, n_bins, strategy)


def apply_discretizer(dataset: Dataset, binner: Binner) -> Dataset:
    """Replace numeric cells by bin tokens; NULLs stay NULL, outliers clamp."""
    rows = [list(cells) for cells, _ in dataset.rows()]
    for attr in binner.cuts:
        if attr not in dataset.attributes:
            raise SchemaMismatch(f"binner attribute {attr!r} not in dataset")
        j = dataset.schema.index_of(attr)
        for cells in rows:
            tok = cells[j]
            if tok is None:
                continue
            try:
                cells[j] = binner.token(attr, float(tok))
            except ValueError:
                raise NonNumeric(f"{attr}: {tok!r} is not a number") from None
    labels = [dataset.label_of(r) for r in range(dataset.n)]
    return Dataset.from_rows(dataset.schema, zip(rows, labels), dataset.provenance)


# -- perturbation -----------------------------------------------------------


def inject_missing(dataset: Dataset, rate: float, seed: int) -> Dataset:
    """NULL exactly ``round(rate * n * d)`` uniformly chosen feature cells."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"rate {rate} outside [0, 1]")
    dataset.require_complete("injection source")
    n, d = dataset.n, dataset.d
    k = min(round_half_up(rate * n * d), n * d)
    rng = np.random.default_rng(seed)
    flat = rng.choice(n * d, size=k, replace=False)
    codes = dataset.codes.copy()
    codes.reshape(-1)[flat] = MISSING_CODE
    return dataset._replace(codes=codes, provenance=f"inject_missing(rate={rate}, seed={seed})")


def split(dataset: Dataset, train_fraction: float = 0.8, seed: int = 0) -> tuple[Dataset, Dataset]:
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be in (0, 1)")
    perm = np.random.default_rng(seed).permutation(dataset.n)
    cut = round_half_up(train_fraction * dataset.n)
    return dataset.subset(perm[:cut]), dataset.subset(perm[cut:])


def active_domain(dataset: Dataset, attribute_index: int) -> set[str]:
    col = dataset.codes[:, attribute_index]
    present = np.unique(col[col != MISSING_CODE])
    return {dataset.vocab[attribute_index][int(c)] for c in present}


# -- synthetic data ---------------------------------------------------------


def synthetic_dataset(
    n_rows: int,
    n_attrs: int,
    n_labels: int = 3,
    domain_size: int = 5,
    seed: int = 0,
    concentration: float = 1.0,
) -> Dataset:
    """Complete categorical dataset drawn from a random Naive Bayes model.

    Each label gets its own Dirichlet(``concentration``) distribution per
    attribute, so labels are distinguishable and predictions mostly strict.
    """
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, n_labels, size=n_rows).astype(np.int32)
    codes = np.empty((n_rows, n_attrs), dtype=np.int32)
    for j in range(n_attrs):
        probs = rng.dirichlet(np.full(domain_size, concentration), size=n_labels)
        cum = np.cumsum(probs, axis=1)
        cum[:, -1] = 1.0
        u = rng.random(n_rows)
        codes[:, j] = (u[:, None] >= cum[labels]).sum(axis=1)
    schema = Schema(tuple(f"a{j}" for j in range(n_attrs)), "label")
    vocab = tuple(tuple(f"v{k}" for k in range(domain_size)) for _ in range(n_attrs))
    # relabel so label_vocab follows first appearance, matching from_rows
    _, first = np.unique(labels, return_index=True)
    order = np.unique(labels)[np.argsort(first)]
    remap = np.empty(n_labels, dtype=np.int32)
    remap[order] = np.arange(len(order), dtype=np.int32)
    label_vocab = tuple(f"l{int(c)}" for c in order)
    return Dataset(schema, codes, vocab, remap[labels], label_vocab,
                   f"synthetic(n={n_rows}, d={n_attrs}, m={n_labels}, k={domain_size}, seed={seed})")
