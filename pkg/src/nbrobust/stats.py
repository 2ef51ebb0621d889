"""Frequency counting over incomplete datasets.

``build_index`` makes one pass over the cell matrix and records, per label
and attribute, how often each token occurs and how many cells are NULL.
``counts_for`` then answers a test point in O(m*d) dictionary lookups, while
``scan_counts`` recomputes the same numbers by scanning the data (the
per-point baseline and the oracle the index is checked against).
"""

from __future__ import annotations

import json
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .data import MISSING_CODE, Dataset
from .errors import EmptyDataset, IncompletePoint


@dataclass(frozen=True)
class FrequencyIndex:
    n: int
    d: int
    labels: tuple[str, ...]
    N: tuple[int, ...]
    M: tuple[tuple[int, ...], ...]
    E: tuple[tuple[dict[str, int], ...], ...]
    domains: tuple[frozenset[str], ...]

    @property
    def m(self) -> int:
        return len(self.labels)

    def to_json(self) -> str:
        payload = {
            "n": self.n,
            "labels": list(self.labels),
            "N": list(self.N),
            "M": [list(row) for row in self.M],
            "E": [[dict(sorted(tbl.items())) for tbl in row] for row in self.E],
        }
        return json.dumps(payload, sort_keys=True)


@dataclass(frozen=True)
class PointCounts:
    """Counts for one complete test point ``t``.

    ``e[i][j]`` is the number of rows labelled ``labels[i]`` whose j-th cell
    equals ``t[j]``; ``m[i][j]`` the number whose j-th cell is NULL.
    ``has_match[j]`` / ``has_other[j]`` say whether the active domain of
    attribute j contains ``t[j]`` / some token other than ``t[j]``.
    """

    n: int
    labels: tuple[str, ...]
    N: tuple[int, ...]
    e: tuple[tuple[int, ...], ...]
    m: tuple[tuple[int, ...], ...]
    has_match: tuple[bool, ...]
    has_other: tuple[bool, ...]

    @property
    def d(self) -> int:
        return len(self.has_match)


def _label_positions(dataset: Dataset) -> tuple[np.ndarray, tuple[str, ...]]:
    present = dataset.present_labels()
    remap = np.full(len(dataset.label_vocab), -1, dtype=np.intp)
    for i, lab in enumerate(present):
        remap[dataset.label_code(lab)] = i
    return remap[dataset.labels], tuple(present)


def build_index(dataset: Dataset) -> FrequencyIndex:
    if dataset.n == 0:
        raise EmptyDataset("cannot index an empty dataset")
    pos, labels = _label_positions(dataset)
    m = len(labels)
    N = np.bincount(pos, minlength=m)
    M_rows: list[list[int]] = [[] for _ in range(m)]
    E_rows: list[list[dict[str, int]]] = [[] for _ in range(m)]
    domains = []
    for j in range(dataset.d):
        vocab = dataset.vocab[j]
        width = len(vocab) + 1
        # slot 0 of each label block counts NULLs, slot c+1 counts token code c
        table = np.bincount(pos * width + (dataset.codes[:, j] + 1), minlength=m * width)
        table = table.reshape(m, width)
        totals = table[:, 1:].sum(axis=0)
        nonzero = np.flatnonzero(totals)
        domains.append(frozenset(vocab[c] for c in nonzero))
        for i in range(m):
            M_rows[i].append(int(table[i, 0]))
            row = table[i, 1:]
            E_rows[i].append({vocab[c]: int(row[c]) for c in nonzero if row[c]})
    return FrequencyIndex(
        n=dataset.n,
        d=dataset.d,
        labels=labels,
        N=tuple(int(x) for x in N),
        M=tuple(tuple(r) for r in M_rows),
        E=tuple(tuple(r) for r in E_rows),
        domains=tuple(domains),
    )


def _check_point(t: Sequence[str | None], d: int) -> None:
    if len(t) != d:
        raise IncompletePoint(f"test point has {len(t)} values, expected {d}")
    if any(v is None for v in t):
        raise IncompletePoint("test point contains a missing value")


def counts_for(index: FrequencyIndex, t: Sequence[str]) -> PointCounts:
    _check_point(t, index.d)
    e = tuple(tuple(tbl.get(v, 0) for tbl, v in zip(row, t)) for row in index.E)
    has_match = tuple(v in dom for v, dom in zip(t, index.domains))
    has_other = tuple(len(dom) > (1 if hit else 0) for dom, hit in zip(index.domains, has_match))
    return PointCounts(index.n, index.labels, index.N, e, index.M, has_match, has_other)


def scan_counts(dataset: Dataset, t: Sequence[str]) -> PointCounts:
    """Compute the counts for ``t`` directly from the data, without an index."""
    _check_point(t, dataset.d)
    if dataset.n == 0:
        raise EmptyDataset("cannot count over an empty dataset")
    pos, labels = _label_positions(dataset)
    m = len(labels)
    tc = dataset.encode_point(t)
    codes = dataset.codes
    N = np.bincount(pos, minlength=m)
    e = np.zeros((m, dataset.d), dtype=np.int64)
    miss = np.zeros((m, dataset.d), dtype=np.int64)
    has_match, has_other = [], []
    for j in range(dataset.d):
        col = codes[:, j]
        hit = col == tc[j]
        nul = col == MISSING_CODE
        e[:, j] = np.bincount(pos[hit], minlength=m)
        miss[:, j] = np.bincount(pos[nul], minlength=m)
        has_match.append(bool(hit.any()))
        has_other.append(bool((~hit & ~nul).any()))
    return PointCounts(
        dataset.n,
        labels,
        tuple(int(x) for x in N),
        tuple(tuple(int(x) for x in r) for r in e),
        tuple(tuple(int(x) for x in r) for r in miss),
        tuple(has_match),
        tuple(has_other),
    )
