"""Poisoning attacks that NULL training cells until test points lose robustness.

The single-point attack works on the gap ``Delta = S(l*|t) - S(l|t)`` between
the clean prediction ``l*`` and a challenger ``l``.  Only two kinds of cell
edits move it usefully:

* A1 retargets a cell of an ``l`` row to ``t_j`` at the attribute with the
  fewest ``l`` matches (largest gain for ``S(l|t)``);
* A2 moves a ``t_j`` cell of an ``l*`` row off ``t_j`` at the attribute with
  the fewest ``l*`` matches (largest loss for ``S(l*|t)``).

A1 gains never shrink and A2 losses are constant, so the cheapest way to push
``Delta`` below zero is usually a pure A1 or pure A2 run.  When a pure run
saturates (the challenger already matches everywhere, or ``S(l|t)`` is stuck
at zero) a combination can still succeed; ``alter_prediction`` scans all
``(a, b)`` splits of greedy A1/A2 prefixes for that case.

Edits are later NULLed, and a NULL can only be filled from its column's
observed tokens.  Every edited column therefore keeps at least one unedited
``t_j`` cell and one unedited cell that differs, so the clean data and the
edited data both remain possible worlds of the poisoned set.
"""

from __future__ import annotations

import time
from collections import deque
from collections.abc import Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Literal

import numpy as np

from .data import MISSING_CODE, Dataset
from .decision import CertifyVerdict, Support, certify, certify_counts, predict
from .errors import (
    AllInfeasible,
    AmbiguousPrediction,
    AttackError,
    BudgetExhausted,
    Infeasible,
    StuckNoLegalStep,
    UnionConflict,
)
from .stats import PointCounts, build_index

Strategy = Literal["A1", "A2"]


@dataclass(frozen=True)
class Alteration:
    row: int
    attribute: int
    old: str
    new: str
    strategy: Strategy

    @property
    def cell(self) -> tuple[int, int]:
        return (self.row, self.attribute)


@dataclass
class DeltaLedger:
    """Match counts of ``t`` for the winner ``l*`` and a challenger ``l``.

    Label sizes never change under cell edits, so ``Delta``'s sign only
    depends on the two numerator vectors.
    """

    e_star: list[int]
    e: list[int]
    n_star: int
    n_label: int
    n: int

    @property
    def d(self) -> int:
        return len(self.e)

    def support_star(self) -> Support:
        return Support.from_counts(self.e_star, self.n_star, self.n)

    def support_label(self) -> Support:
        return Support.from_counts(self.e, self.n_label, self.n)

    def is_flipped(self) -> bool:
        return self.support_star() < self.support_label()

    def delta(self) -> Fraction:
        return self.support_star().as_fraction() - self.support_label().as_fraction()

    def copy(self) -> DeltaLedger:
        return DeltaLedger(list(self.e_star), list(self.e), self.n_star, self.n_label, self.n)


@dataclass(frozen=True)
class Step:
    alteration: Alteration
    e_star: tuple[int, ...]
    e: tuple[int, ...]
    delta: Fraction


@dataclass(frozen=True)
class AlterTrace:
    winner: str
    label: str
    delta0: Fraction
    k_plus: int | None  # None: the pure-A1 run saturates before flipping
    k_minus: int | None
    plus_steps: tuple[Step, ...]
    minus_steps: tuple[Step, ...]
    branch: Literal["A1", "A2", "MIXED"]
    k: int
    alterations: tuple[Alteration, ...]

    def plus_decreases(self) -> list[Fraction]:
        return _decreases(self.delta0, self.plus_steps)

    def minus_decreases(self) -> list[Fraction]:
        return _decreases(self.delta0, self.minus_steps)


def _decreases(delta0: Fraction, steps: Sequence[Step]) -> list[Fraction]:
    prev, out = delta0, []
    for s in steps:
        out.append(prev - s.delta)
        prev = s.delta
    return out


@dataclass(frozen=True)
class AlterResult:
    dataset: Dataset
    k: int
    trace: AlterTrace


# -- greedy runs ------------------------------------------------------------


def _truncate(rows: deque, keep: int) -> None:
    while len(rows) > max(keep, 0):
        rows.pop()


class _PairState:
    """Everything the greedy runs need for one ``(l*, l)`` pair on one point."""

    def __init__(self, dataset: Dataset, t: Sequence[str], winner: str, label: str):
        self.dataset = dataset
        self.t = tuple(t)
        tc = dataset.encode_point(t)
        codes = dataset.codes
        star_rows = np.flatnonzero(dataset.labels == dataset.label_code(winner))
        label_rows = np.flatnonzero(dataset.labels == dataset.label_code(label))
        d = dataset.d
        self.ledger = DeltaLedger(
            e_star=[int((codes[star_rows, j] == tc[j]).sum()) for j in range(d)],
            e=[int((codes[label_rows, j] == tc[j]).sum()) for j in range(d)],
            n_star=len(star_rows),
            n_label=len(label_rows),
            n=dataset.n,
        )
        # candidate rows per attribute, lowest row index first
        self.plus_rows = [deque(int(r) for r in label_rows if codes[r, j] != tc[j]) for j in range(d)]
        self.minus_rows = [deque(int(r) for r in star_rows if codes[r, j] == tc[j]) for j in range(d)]
        # each column must keep an unedited cell equal to t_j and one that
        # differs; otherwise NULLing the edits shrinks the column's domain and
        # the original or the edited data stops being a possible world
        for j in range(d):
            hits = int((codes[:, j] == tc[j]).sum())
            _truncate(self.plus_rows[j], dataset.n - hits - 1)
            _truncate(self.minus_rows[j], hits - 1)
        # A2 needs an observed token other than t_j to write
        self.replacement: list[str | None] = []
        for j in range(d):
            others = sorted(tok for c, tok in enumerate(dataset.vocab[j]) if c != tc[j] and (codes[:, j] == c).any())
            self.replacement.append(others[0] if others else None)
            if not others:
                self.minus_rows[j].clear()

    def plus_choice(self, ledger: DeltaLedger, rows: list[deque]) -> int | None:
        best = None
        for j, ej in enumerate(ledger.e):
            if rows[j] and (best is None or ej < ledger.e[best]):
                best = j
        return best

    def minus_choice(self, ledger: DeltaLedger, rows: list[deque]) -> int | None:
        if 0 in ledger.e_star:
            return None
        best = None
        for j, ej in enumerate(ledger.e_star):
            if rows[j] and (best is None or ej < ledger.e_star[best]):
                best = j
        return best

    def apply_plus(self, ledger: DeltaLedger, j: int, rows: list[deque]) -> Alteration:
        r = rows[j].popleft()
        ledger.e[j] += 1
        return Alteration(r, j, self.dataset.cell(r, j), self.t[j], "A1")

    def apply_minus(self, ledger: DeltaLedger, j: int, rows: list[deque]) -> Alteration:
        r = rows[j].popleft()
        ledger.e_star[j] -= 1
        return Alteration(r, j, self.t[j], self.replacement[j], "A2")

    def minus_edits(self, alloc: Sequence[int]) -> tuple[Alteration, ...]:
        """A2 edits taking the first ``alloc[j]`` candidate rows of each column."""
        return tuple(
            Alteration(r, j, self.t[j], self.replacement[j], "A2")
            for j, x in enumerate(alloc)
            for r in list(self.minus_rows[j])[:x]
        )

    def run(self, strategy: Strategy) -> list[Step]:
        """Greedy steps of one strategy until it can no longer move Delta."""
        ledger = self.ledger.copy()
        rows = [deque(q) for q in (self.plus_rows if strategy == "A1" else self.minus_rows)]
        steps = []
        while True:
            if strategy == "A1":
                j = self.plus_choice(ledger, rows)
                if j is None:
                    break
                alt = self.apply_plus(ledger, j, rows)
            else:
                j = self.minus_choice(ledger, rows)
                if j is None:
                    break
                alt = self.apply_minus(ledger, j, rows)
            steps.append(Step(alt, tuple(ledger.e_star), tuple(ledger.e), ledger.delta()))
        return steps


def _supports_along(state: _PairState, steps: Sequence[Step], star: bool) -> list[Support]:
    led = state.ledger
    out = [led.support_star() if star else led.support_label()]
    for s in steps:
        if star:
            out.append(Support.from_counts(s.e_star, led.n_star, led.n))
        else:
            out.append(Support.from_counts(s.e, led.n_label, led.n))
    return out


def _first_flip(star: Sequence[Support], label: Sequence[Support], vary_star: bool) -> int | None:
    seq = star if vary_star else label
    for k, s in enumerate(seq):
        a, b = (s, label[0]) if vary_star else (star[0], s)
        if a < b:
            return k
    return None


def _best_split(star: Sequence[Support], label: Sequence[Support]) -> tuple[int, int] | None:
    """Cheapest ``(a, b)`` with ``star[b] < label[a]``; ``star`` is non-increasing."""
    best = None
    b = len(star) - 1
    for a, s_label in enumerate(label):
        if not star[b] < s_label:
            continue
        while b > 0 and star[b - 1] < s_label:
            b -= 1
        if best is None or a + b < best[0] + best[1]:
            best = (a, b)
    return best


def _star_schedule(state: _PairState, greedy: Sequence[Step], bmax: int) -> list[tuple[int, ...]]:
    """For b = 0..bmax, per-column A2 edit counts giving l*'s smallest product.

    While every column may be driven to zero, lowering the smallest count
    first is optimal, so the greedy run already is the schedule.  A column
    whose every t_j cell sits in an l* row must keep one of them; there the
    greedy order can waste edits, and a small exact DP over columns is used.
    """
    e_star = state.ledger.e_star
    caps = [len(q) for q in state.minus_rows]
    if all(cap >= e for cap, e in zip(caps, e_star)):
        out, counts = [tuple(0 for _ in e_star)], [0] * len(e_star)
        for st in greedy:
            counts[st.alteration.attribute] += 1
            out.append(tuple(counts))
        return out
    bmax = min(bmax, sum(caps))
    # best[b] = (smallest product over the columns seen so far, allocation)
    best: list[tuple[int, tuple[int, ...]] | None] = [(1, ())] + [None] * bmax
    for e, cap in zip(e_star, caps):
        nxt: list[tuple[int, tuple[int, ...]] | None] = [None] * (bmax + 1)
        for b, cur in enumerate(best):
            if cur is None:
                continue
            for x in range(min(cap, bmax - b) + 1):
                cand = cur[0] * (e - x)
                slot = nxt[b + x]
                if slot is None or cand < slot[0]:
                    nxt[b + x] = (cand, cur[1] + (x,))
        best = nxt
    out = []
    for entry in best:
        if entry is None:
            break
        out.append(entry[1])
    return out


def _attack_pair(dataset: Dataset, t: Sequence[str], winner: str, label: str) -> AlterTrace:
    state = _PairState(dataset, t, winner, label)
    led = state.ledger
    plus = state.run("A1")
    minus = state.run("A2")
    label_sups = _supports_along(state, plus, star=False)
    # with a zero in l's counts no amount of A2 alone can flip the order
    pure_minus = minus if 0 not in led.e else []
    star_pure = _supports_along(state, pure_minus, star=True)
    k_plus = _first_flip(star_pure, label_sups, vary_star=False)
    k_minus = _first_flip(star_pure, label_sups, vary_star=True)
    pure = [k for k in (k_plus, k_minus) if k is not None]
    bmax = min(pure) if pure else sum(len(q) for q in state.minus_rows)
    schedule = _star_schedule(state, minus, bmax)
    star_sups = [
        Support.from_counts([e - x for e, x in zip(led.e_star, alloc)], led.n_star, led.n) for alloc in schedule
    ]
    split = _best_split(star_sups, label_sups)
    if split is None and not pure:
        raise Infeasible(f"no edit sequence makes {label!r} beat {winner!r}")
    if pure and (split is None or min(pure) <= sum(split)):
        # equal costs: take the branch that ends further below zero
        if k_plus is None or (
            k_minus is not None
            and (k_minus, minus[k_minus - 1].delta) < (k_plus, plus[k_plus - 1].delta)
        ):
            branch, k = "A2", k_minus
            alterations = tuple(s.alteration for s in minus[:k])
        else:
            branch, k = "A1", k_plus
            alterations = tuple(s.alteration for s in plus[:k])
    else:
        a, b = split
        branch, k = "MIXED", a + b
        alterations = tuple(s.alteration for s in plus[:a]) + state.minus_edits(schedule[b])
    return AlterTrace(
        winner=winner,
        label=label,
        delta0=led.delta(),
        k_plus=k_plus,
        k_minus=k_minus,
        plus_steps=tuple(plus[:k_plus] if k_plus is not None else plus),
        minus_steps=tuple(pure_minus[:k_minus] if k_minus is not None else pure_minus),
        branch=branch,
        k=k,
        alterations=alterations,
    )


def _clean_winner(dataset: Dataset, t: Sequence[str]) -> str:
    winner = predict(dataset, t)
    if winner is None:
        raise AmbiguousPrediction(f"prediction for {tuple(t)} ties on the clean dataset")
    return winner


def alter_prediction(dataset: Dataset, t: Sequence[str], label: str) -> AlterResult:
    """Fewest cell edits making ``label`` strictly beat the clean prediction.

    Raises ``Infeasible`` when no sequence of edits gets there.
    """
    dataset.require_complete()
    winner = _clean_winner(dataset, t)
    if label == winner:
        raise ValueError(f"{label!r} is already the prediction")
    trace = _attack_pair(dataset, t, winner, label)
    altered = dataset.with_values({a.cell: a.new for a in trace.alterations})
    return AlterResult(altered, trace.k, trace)


# -- plans ------------------------------------------------------------------


@dataclass(frozen=True)
class PointReport:
    point_id: int
    label_attacked: str | None = None
    branch: str | None = None
    k_plus: int | None = None
    k_minus: int | None = None
    k: int = 0
    trace: AlterTrace | None = None

    def to_dict(self) -> dict:
        return {
            "point_id": self.point_id,
            "label_attacked": self.label_attacked,
            "branch": self.branch,
            "k_plus": self.k_plus,
            "k_minus": self.k_minus,
            "k": self.k,
        }


@dataclass(frozen=True)
class PoisonPlan:
    algorithm: Literal["GS", "RP", "SR", "MULTI"]
    cells: tuple[tuple[int, int], ...]
    per_point: tuple[PointReport, ...]
    dataset: Dataset
    total_cells: int
    runtime_ms: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def poisoning_rate(self) -> float:
        return len(self.cells) / self.total_cells if self.total_cells else 0.0

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "cells": [{"row": r, "attribute": j} for r, j in self.cells],
            "per_point": [p.to_dict() for p in self.per_point],
            "poisoning_rate": self.poisoning_rate,
            "runtime_ms": self.runtime_ms,
        }


def poisoning_rate(plan: PoisonPlan, dataset: Dataset) -> float:
    total = dataset.n * dataset.d
    return len(plan.cells) / total if total else 0.0


def _plan(algorithm, source: Dataset, cells, reports, started: float) -> PoisonPlan:
    cells = tuple(sorted(set(cells)))
    return PoisonPlan(
        algorithm,
        cells,
        tuple(reports),
        source.with_missing(cells),
        source.n * source.d,
        (time.perf_counter() - started) * 1000.0,
    )


def _single(dataset: Dataset, t: Sequence[str], point_id: int) -> tuple[list[tuple[int, int]], PointReport]:
    winner = _clean_winner(dataset, t)
    best: AlterTrace | None = None
    for label in dataset.present_labels():
        if label == winner:
            continue
        try:
            trace = _attack_pair(dataset, t, winner, label)
        except Infeasible:
            continue
        if best is None or trace.k < best.k:
            best = trace
    if best is None:
        raise AllInfeasible(f"point {point_id}: no challenger label can overtake {winner!r}")
    report = PointReport(point_id, best.label, best.branch, best.k_plus, best.k_minus, best.k, best)
    return [a.cell for a in best.alterations], report


def _tag(exc: AttackError, point_id: int) -> AttackError:
    exc.point_id = point_id
    return exc


def poison_single(dataset: Dataset, t: Sequence[str]) -> PoisonPlan:
    """Minimum set of cells to NULL so that ``t`` is no longer certifiably robust."""
    started = time.perf_counter()
    dataset.require_complete()
    try:
        cells, report = _single(dataset, t, 0)
    except AttackError as exc:
        raise _tag(exc, 0)
    return _plan("GS", dataset, cells, [report], started)


def poison_multi(dataset: Dataset, points: Sequence[Sequence[str]]) -> PoisonPlan:
    """Union of the per-point optimal attacks, each computed on the clean data."""
    started = time.perf_counter()
    dataset.require_complete()
    cells: list[tuple[int, int]] = []
    reports = []
    for pid, t in enumerate(points):
        try:
            c, rep = _single(dataset, t, pid)
        except AttackError as exc:
            raise _tag(exc, pid)
        cells.extend(c)
        reports.append(rep)
    plan = _plan("MULTI", dataset, cells, reports, started)
    # each per-point plan keeps its own witnesses, but the union can still
    # NULL every remaining t_j (or non-t_j) cell of a column another point needs
    lost = [i for i, v in enumerate(verify_plan(plan, points)) if v.is_robust]
    if lost:
        exc = UnionConflict(f"union of per-point plans leaves point(s) {lost} robust")
        raise _tag(exc, lost[0])
    return plan


def verify_plan(plan: PoisonPlan, points: Sequence[Sequence[str]], guard: bool = True) -> list[CertifyVerdict]:
    index = build_index(plan.dataset)
    return [certify(index, t, guard) for t in points]


def plan_is_effective(plan: PoisonPlan, points: Sequence[Sequence[str]], guard: bool = True) -> bool:
    return not any(v.is_robust for v in verify_plan(plan, points, guard))


# -- random baselines -------------------------------------------------------


class _LiveCounts:
    """Point counts kept in step with cells being NULLed one at a time."""

    def __init__(self, dataset: Dataset, points: Sequence[Sequence[str]]):
        self.dataset = dataset
        self.codes = dataset.codes.copy()
        self.labels = tuple(dataset.present_labels())
        remap = {dataset.label_code(lab): i for i, lab in enumerate(self.labels)}
        self.pos = np.array([remap[int(c)] for c in dataset.labels], dtype=np.intp)
        m, d = len(self.labels), dataset.d
        self.N = tuple(int(x) for x in np.bincount(self.pos, minlength=m))
        self.M = np.zeros((m, d), dtype=np.int64)
        self.domain = [np.bincount(self.codes[:, j], minlength=len(dataset.vocab[j])) for j in range(d)]
        self.present = [int(c.sum()) for c in self.domain]
        self.tcodes = [dataset.encode_point(t) for t in points]
        self.e = []
        for tc in self.tcodes:
            e = np.zeros((m, d), dtype=np.int64)
            for j in range(d):
                e[:, j] = np.bincount(self.pos[self.codes[:, j] == tc[j]], minlength=m)
            self.e.append(e)

    def null(self, r: int, j: int) -> None:
        v = int(self.codes[r, j])
        if v == MISSING_CODE:
            return
        i = self.pos[r]
        self.codes[r, j] = MISSING_CODE
        self.M[i, j] += 1
        self.domain[j][v] -= 1
        self.present[j] -= 1
        for tc, e in zip(self.tcodes, self.e):
            if tc[j] == v:
                e[i, j] -= 1

    def counts(self, p: int) -> PointCounts:
        tc = self.tcodes[p]
        d = self.dataset.d
        hits = [int(self.domain[j][tc[j]]) if tc[j] >= 0 else 0 for j in range(d)]
        return PointCounts(
            self.dataset.n,
            self.labels,
            self.N,
            tuple(tuple(int(x) for x in row) for row in self.e[p]),
            tuple(tuple(int(x) for x in row) for row in self.M),
            tuple(h > 0 for h in hits),
            tuple(self.present[j] - hits[j] > 0 for j in range(d)),
        )

    def robust(self, p: int) -> bool:
        return certify_counts(self.counts(p)).is_robust


def poison_random(
    dataset: Dataset,
    points: Sequence[Sequence[str]],
    seed: int = 0,
    budget_cap: int | None = None,
) -> PoisonPlan:
    """NULL uniformly random cells until every point is non-robust."""
    started = time.perf_counter()
    dataset.require_complete()
    n, d = dataset.n, dataset.d
    budget = n * d if budget_cap is None else budget_cap
    live = _LiveCounts(dataset, points)
    order = np.random.default_rng(seed).permutation(n * d)
    cells: list[tuple[int, int]] = []
    pending = [p for p in range(len(points)) if live.robust(p)]
    for flat in order:
        if not pending:
            break
        if len(cells) >= budget:
            raise BudgetExhausted(f"{len(pending)} point(s) still robust after {len(cells)} NULLs")
        r, j = divmod(int(flat), d)
        live.null(r, j)
        cells.append((r, j))
        pending = [p for p in range(len(points)) if live.robust(p)]
    if pending:
        raise BudgetExhausted(f"{len(pending)} point(s) robust even with every cell NULL")
    reports = [PointReport(p) for p in range(len(points))]
    return _plan("RP", dataset, cells, reports, started)


def poison_smart_random(
    dataset: Dataset,
    points: Sequence[Sequence[str]],
    seed: int = 0,
    budget_cap: int | None = None,
) -> PoisonPlan:
    """Random challenger, then random interleaving of greedy A1/A2 edits."""
    started = time.perf_counter()
    dataset.require_complete()
    budget = dataset.n * dataset.d if budget_cap is None else budget_cap
    rng = np.random.default_rng(seed)
    cells: list[tuple[int, int]] = []
    reports = []
    for pid, t in enumerate(points):
        try:
            c, rep = _smart_random_point(dataset, t, pid, rng, budget)
        except AttackError as exc:
            raise _tag(exc, pid)
        cells.extend(c)
        reports.append(rep)
    return _plan("SR", dataset, cells, reports, started)


def _smart_random_point(dataset, t, pid, rng, budget):
    winner = _clean_winner(dataset, t)
    rivals = [lab for lab in dataset.present_labels() if lab != winner]
    if not rivals:
        raise StuckNoLegalStep(f"point {pid}: no other label to promote")
    label = rivals[int(rng.integers(len(rivals)))]
    state = _PairState(dataset, t, winner, label)
    ledger = state.ledger.copy()
    plus_rows = [deque(q) for q in state.plus_rows]
    minus_rows = [deque(q) for q in state.minus_rows]
    live = _LiveCounts(dataset, [t])
    cells = []
    n_plus = n_minus = 0
    while live.robust(0):
        if len(cells) >= budget:
            raise BudgetExhausted(f"point {pid}: still robust after {len(cells)} edits")
        moves = []
        jp, jm = state.plus_choice(ledger, plus_rows), state.minus_choice(ledger, minus_rows)
        if jp is not None:
            moves.append(("A1", jp))
        if jm is not None:
            moves.append(("A2", jm))
        if not moves:
            raise StuckNoLegalStep(f"point {pid}: no legal A1/A2 edit left")
        kind, j = moves[int(rng.integers(len(moves)))]
        if kind == "A1":
            alt = state.apply_plus(ledger, j, plus_rows)
            n_plus += 1
        else:
            alt = state.apply_minus(ledger, j, minus_rows)
            n_minus += 1
        live.null(*alt.cell)
        cells.append(alt.cell)
    return cells, PointReport(pid, label, None, n_plus, n_minus, len(cells))
