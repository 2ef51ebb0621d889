"""Certifiable robustness of Naive Bayes predictions over incomplete data.

A test point is robust when one label wins in every possible world, i.e.
every completion of the NULL cells with tokens from the attribute's active
domain.  ``certify`` decides this from the per-label extreme supports; the
enumeration oracle and the sampling baseline decide it by training on
worlds directly.
"""

from __future__ import annotations

import functools
import itertools
from collections.abc import Iterator, Sequence
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .data import MISSING_CODE, Dataset, active_domain
from .errors import EmptyDomain, IncompletePoint, TooManyWorlds
from .stats import FrequencyIndex, PointCounts, counts_for, scan_counts

DEFAULT_WORLD_CAP = 10**6


@functools.total_ordering
@dataclass(frozen=True, eq=False)
class Support:
    """Exact support ``N/n * prod(e_j / N)`` kept as integers.

    Its value is ``prod_e / (total * label_count**(dim - 1))``; comparisons
    cross-multiply, so nothing is ever rounded.
    """

    prod_e: int
    label_count: int
    total: int
    dim: int

    @classmethod
    def from_counts(cls, numerators: Sequence[int], label_count: int, total: int) -> Support:
        return cls(_prod(numerators), label_count, total, len(numerators))

    @property
    def numerator(self) -> int:
        return self.prod_e if self.label_count else 0

    @property
    def denominator(self) -> int:
        return self.total * self.label_count ** (self.dim - 1) if self.label_count else 1

    def __eq__(self, other):
        if not isinstance(other, Support):
            return NotImplemented
        return self.numerator * other.denominator == other.numerator * self.denominator

    def __lt__(self, other):
        if not isinstance(other, Support):
            return NotImplemented
        return self.numerator * other.denominator < other.numerator * self.denominator

    def __hash__(self):
        return hash(self.as_fraction())

    def is_zero(self) -> bool:
        return self.numerator == 0

    def as_fraction(self) -> Fraction:
        return Fraction(self.numerator, self.denominator)

    def __str__(self) -> str:
        return frac_str(self.as_fraction())


ZERO = Support(0, 0, 1, 1)


def _prod(values: Sequence[int]) -> int:
    out = 1
    for v in values:
        out *= v
    return out


def frac_str(x: Fraction | Support) -> str:
    f = x.as_fraction() if isinstance(x, Support) else Fraction(x)
    return f"{f.numerator}/{f.denominator}"


@dataclass(frozen=True)
class LabelBounds:
    label: str
    min_support: Support | Fraction
    max_support: Support | Fraction


@dataclass(frozen=True)
class CertifyVerdict:
    robust_label: str | None
    table: tuple[LabelBounds, ...] = ()

    @property
    def is_robust(self) -> bool:
        return self.robust_label is not None

    @property
    def outcome(self) -> str:
        return "robust" if self.is_robust else "non_robust"

    def to_dict(self, point_id: int | None = None) -> dict:
        out: dict = {"point_id": point_id, "outcome": self.outcome}
        if self.is_robust:
            out["robust_label"] = self.robust_label
        out["table"] = [
            {"label": b.label, "min_support": frac_str(b.min_support), "max_support": frac_str(b.max_support)}
            for b in self.table
        ]
        return out


# -- exact supports ---------------------------------------------------------


def support(dataset: Dataset, label: str, t: Sequence[str]) -> Support:
    """Support of ``t`` for ``label`` on a complete dataset (zero if absent)."""
    dataset.require_complete()
    counts = scan_counts(dataset, t)
    if label not in counts.labels:
        return Support(0, 0, dataset.n, dataset.d)
    i = counts.labels.index(label)
    return Support.from_counts(counts.e[i], counts.N[i], counts.n)


def min_max_support(counts: PointCounts, guard: bool = True) -> tuple[LabelBounds, ...]:
    """Per-label minimum and maximum support over all possible worlds.

    With ``guard`` on, NULLs only count towards the maximum when ``t_j`` is
    in attribute j's active domain, and are forced into the minimum when
    ``t_j`` is the only token in that domain.
    """
    out = []
    for i, label in enumerate(counts.labels):
        lo, hi = [], []
        for j in range(counts.d):
            e, m = counts.e[i][j], counts.m[i][j]
            forced = guard and counts.has_match[j] and not counts.has_other[j]
            reachable = not guard or counts.has_match[j]
            lo.append(e + m if forced else e)
            hi.append(e + m if reachable else e)
        N = counts.N[i]
        out.append(LabelBounds(label, Support.from_counts(lo, N, counts.n), Support.from_counts(hi, N, counts.n)))
    return tuple(out)


def decide(table: Sequence[LabelBounds]) -> str | None:
    """The label whose minimum strictly beats every other label's maximum."""
    if not table:
        return None
    if len(table) == 1:
        return table[0].label
    his = [b.max_support for b in table]
    order = sorted(range(len(his)), key=lambda i: his[i], reverse=True)
    top, runner = order[0], order[1]
    for i, b in enumerate(table):
        rival = his[runner] if i == top else his[top]
        if b.min_support > rival:
            return b.label
    return None


def certify_counts(counts: PointCounts, guard: bool = True) -> CertifyVerdict:
    table = min_max_support(counts, guard)
    return CertifyVerdict(decide(table), table)


def certify(index: FrequencyIndex, t: Sequence[str], guard: bool = True) -> CertifyVerdict:
    return certify_counts(counts_for(index, t), guard)


def certify_batch(index: FrequencyIndex, points: Sequence[Sequence[str]], guard: bool = True) -> list[CertifyVerdict]:
    out = []
    for pid, t in enumerate(points):
        try:
            out.append(certify(index, t, guard))
        except IncompletePoint as exc:
            raise IncompletePoint(f"point {pid}: {exc}", point_id=pid) from None
    return out


def certify_iterate(dataset: Dataset, points: Sequence[Sequence[str]], guard: bool = True) -> list[CertifyVerdict]:
    """Index-free baseline: re-scan the whole dataset for every point."""
    out = []
    for pid, t in enumerate(points):
        try:
            out.append(certify_counts(scan_counts(dataset, t), guard))
        except IncompletePoint as exc:
            raise IncompletePoint(f"point {pid}: {exc}", point_id=pid) from None
    return out


# -- possible worlds --------------------------------------------------------


@dataclass(frozen=True)
class PossibleWorld:
    dataset: Dataset
    fills: dict[tuple[int, int], str]

    def altered_to(self, label: str, j: int, token: str) -> int:
        """How many filled cells of rows labelled ``label`` got ``token`` at attribute ``j``."""
        ds = self.dataset
        return sum(1 for (r, jj), tok in self.fills.items() if jj == j and tok == token and ds.label_of(r) == label)


def _fill_plan(dataset: Dataset) -> tuple[list[tuple[int, int]], list[list[int]]]:
    cells = [(int(r), int(j)) for r, j in np.argwhere(dataset.codes == MISSING_CODE)]
    domains = {}
    for j in range(dataset.d):
        toks = sorted(active_domain(dataset, j))
        domains[j] = [dataset.token_code(j, tok) for tok in toks]
    choices = []
    for r, j in cells:
        if not domains[j]:
            raise EmptyDomain(f"attribute {dataset.attributes[j]!r} has no observed value to fill row {r}")
        choices.append(domains[j])
    return cells, choices


def count_worlds(dataset: Dataset) -> int:
    _, choices = _fill_plan(dataset)
    return _prod([len(c) for c in choices])


def enumerate_worlds(dataset: Dataset, cap: int = DEFAULT_WORLD_CAP) -> Iterator[PossibleWorld]:
    """Every completion of the NULL cells, row-major, domain tokens sorted."""
    cells, choices = _fill_plan(dataset)
    total = _prod([len(c) for c in choices])
    if total > cap:
        raise TooManyWorlds(f"{total} possible worlds exceed cap {cap}")
    return _worlds(dataset, cells, choices)


def _worlds(dataset, cells, choices):
    rows = np.array([r for r, _ in cells], dtype=np.intp)
    cols = np.array([j for _, j in cells], dtype=np.intp)
    for combo in itertools.product(*choices):
        codes = dataset.codes.copy()
        if cells:
            codes[rows, cols] = combo
        fills = {cell: dataset.vocab[cell[1]][c] for cell, c in zip(cells, combo)}
        yield PossibleWorld(dataset._replace(codes=codes), fills)


def _fraction_supports(dataset: Dataset, labels: Sequence[str], t: Sequence[str]) -> list[Fraction]:
    # plain row loop, deliberately independent of the counting module
    n, d = dataset.n, dataset.d
    N = dict.fromkeys(labels, 0)
    E = {lab: [0] * d for lab in labels}
    for cells, lab in dataset.rows():
        N[lab] += 1
        for j in range(d):
            if cells[j] == t[j]:
                E[lab][j] += 1
    out = []
    for lab in labels:
        s = Fraction(N[lab], n)
        for j in range(d):
            s *= Fraction(E[lab][j], N[lab])
        out.append(s)
    return out


def _strict_argmax(labels: Sequence[str], values: Sequence) -> str | None:
    best = max(values)
    winners = [lab for lab, v in zip(labels, values) if v == best]
    return winners[0] if len(winners) == 1 else None


def predict(dataset: Dataset, t: Sequence[str]) -> str | None:
    """Naive Bayes prediction on a complete dataset; ``None`` on a tied argmax."""
    dataset.require_complete()
    counts = scan_counts(dataset, t)
    sups = [Support.from_counts(counts.e[i], counts.N[i], counts.n) for i in range(len(counts.labels))]
    return _strict_argmax(counts.labels, sups)


def oracle_certify(dataset: Dataset, t: Sequence[str], cap: int = DEFAULT_WORLD_CAP) -> CertifyVerdict:
    """Decide robustness by training on every possible world.

    The table holds the exact min/max support seen across all worlds.
    """
    if len(t) != dataset.d or any(v is None for v in t):
        raise IncompletePoint("test point must be complete")
    labels = dataset.present_labels()
    lo: list[Fraction | None] = [None] * len(labels)
    hi: list[Fraction | None] = [None] * len(labels)
    predictions = set()
    for world in enumerate_worlds(dataset, cap):
        sups = _fraction_supports(world.dataset, labels, t)
        predictions.add(_strict_argmax(labels, sups))
        for i, s in enumerate(sups):
            lo[i] = s if lo[i] is None or s < lo[i] else lo[i]
            hi[i] = s if hi[i] is None or s > hi[i] else hi[i]
    table = tuple(LabelBounds(lab, lo[i], hi[i]) for i, lab in enumerate(labels))
    robust = next(iter(predictions)) if len(predictions) == 1 else None
    return CertifyVerdict(robust, table)


def approx_certify(dataset: Dataset, t: Sequence[str], samples: int = 100, seed: int = 0) -> CertifyVerdict:
    """Sampling baseline: robust iff ``samples`` random worlds all agree.

    Can report a non-robust point as robust; a non-robust answer is always
    correct.  The table records the extreme supports among sampled worlds.
    """
    if len(t) != dataset.d or any(v is None for v in t):
        raise IncompletePoint("test point must be complete")
    rng = np.random.default_rng(seed)
    labels = dataset.present_labels()
    remap = np.full(len(dataset.label_vocab), -1, dtype=np.intp)
    for i, lab in enumerate(labels):
        remap[dataset.label_code(lab)] = i
    pos = remap[dataset.labels]
    m = len(labels)
    N = np.bincount(pos, minlength=m)
    tc = dataset.encode_point(t)
    miss = dataset.codes == MISSING_CODE
    fill_rows, fill_codes = [], []
    for j in range(dataset.d):
        rows = np.flatnonzero(miss[:, j])
        dom = np.array(sorted(dataset.token_code(j, tok) for tok in active_domain(dataset, j)), dtype=np.int32)
        if rows.size and not dom.size:
            raise EmptyDomain(f"attribute {dataset.attributes[j]!r} has no observed value")
        fill_rows.append(rows)
        fill_codes.append(dom)
    lo: list[Support | None] = [None] * m
    hi: list[Support | None] = [None] * m
    predictions = set()
    for _ in range(samples):
        codes = dataset.codes.copy()
        for j in range(dataset.d):
            rows = fill_rows[j]
            if rows.size:
                codes[rows, j] = fill_codes[j][rng.integers(0, fill_codes[j].size, size=rows.size)]
        e = np.empty((m, dataset.d), dtype=np.int64)
        for j in range(dataset.d):
            e[:, j] = np.bincount(pos[codes[:, j] == tc[j]], minlength=m)
        sups = [Support.from_counts([int(x) for x in e[i]], int(N[i]), dataset.n) for i in range(m)]
        predictions.add(_strict_argmax(labels, sups))
        for i, s in enumerate(sups):
            lo[i] = s if lo[i] is None or s < lo[i] else lo[i]
            hi[i] = s if hi[i] is None or s > hi[i] else hi[i]
    table = tuple(LabelBounds(lab, lo[i], hi[i]) for i, lab in enumerate(labels)) if samples else ()
    robust = next(iter(predictions)) if len(predictions) == 1 else None
    return CertifyVerdict(robust, table)
