from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cases import ROBUST_WORLD_FILLS, POINT_AB, SCHEMA_XY, robust_example
from nbrobust.data import Dataset, inject_missing, synthetic_dataset
from nbrobust.decision import (
    Support,
    approx_certify,
    certify,
    certify_batch,
    certify_iterate,
    count_worlds,
    enumerate_worlds,
    frac_str,
    oracle_certify,
    predict,
    support,
)
from nbrobust.errors import EmptyDomain, IncompletePoint, NotComplete, TooManyWorlds
from nbrobust.stats import build_index
from oracles import fraction_support, random_tiny


def bounds(verdict):
    return {b.label: (Fraction(b.min_support.as_fraction() if isinstance(b.min_support, Support) else b.min_support),
                      Fraction(b.max_support.as_fraction() if isinstance(b.max_support, Support) else b.max_support))
            for b in verdict.table}


def test_worked_example_world_supports():
    world = robust_example().with_values(ROBUST_WORLD_FILLS)
    assert support(world, "l*", POINT_AB).as_fraction() == Fraction(1, 4)
    assert support(world, "l", POINT_AB).as_fraction() == Fraction(2, 45)


def test_worked_example_certify():
    verdict = certify(build_index(robust_example()), POINT_AB)
    assert verdict.robust_label == "l*"
    assert bounds(verdict) == {
        "l*": (Fraction(1, 6), Fraction(1, 4)),
        "l": (Fraction(1, 45), Fraction(1, 15)),
    }
    out = verdict.to_dict(3)
    assert out["outcome"] == "robust" and out["point_id"] == 3
    assert out["table"][0] == {"label": "l*", "min_support": "1/6", "max_support": "1/4"}


def test_worked_example_matches_oracle():
    ds = robust_example()
    assert count_worlds(ds) == 6 * 4 * 4
    assert bounds(oracle_certify(ds, POINT_AB)) == bounds(certify(build_index(ds), POINT_AB))


def test_support_comparison_is_exact():
    a = Support.from_counts([1, 1], 3, 9)
    b = Support.from_counts([2, 1], 6, 9)
    assert a == b and hash(a) == hash(b)
    assert not a < b
    assert Support.from_counts([0, 4], 4, 9).is_zero()
    assert frac_str(Fraction(3, 6)) == "1/2"
    assert frac_str(Fraction(0)) == "0/1"


def test_support_of_absent_label_is_zero():
    assert support(robust_example().with_values(ROBUST_WORLD_FILLS), "zz", POINT_AB).is_zero()


def test_support_requires_complete():
    with pytest.raises(NotComplete):
        support(robust_example(), "l", POINT_AB)


def test_tie_gives_no_prediction():
    ds = Dataset.from_rows(SCHEMA_XY, [(("a", "b"), "p"), (("a", "b"), "q")])
    assert predict(ds, ("a", "b")) is None
    assert not certify(build_index(ds), ("a", "b")).is_robust


def test_single_label_is_robust():
    ds = Dataset.from_rows(SCHEMA_XY, [(("a", None), "p"), ((None, "b"), "p")])
    assert certify(build_index(ds), ("z", "z")).robust_label == "p"


def test_all_null_column_is_non_robust():
    ds = Dataset.from_rows(SCHEMA_XY, [(("a", None), "p"), (("a", None), "p"), (("c", None), "q")])
    assert not certify(build_index(ds), ("a", "b")).is_robust
    with pytest.raises(EmptyDomain):
        count_worlds(ds)


def test_world_cap():
    ds = inject_missing(synthetic_dataset(30, 4, domain_size=5, seed=0), 0.5, 0)
    with pytest.raises(TooManyWorlds):
        list(enumerate_worlds(ds, cap=1000))


def test_incomplete_point():
    with pytest.raises(IncompletePoint):
        oracle_certify(robust_example(), ("a", None))
    with pytest.raises(IncompletePoint) as info:
        certify_batch(build_index(robust_example()), [("a", "b"), ("a", None)])
    assert info.value.point_id == 1


def _random_cases(n_instances, seed):
    rng = np.random.default_rng(seed)
    for _ in range(n_instances):
        ds, t = random_tiny(rng, max_missing=6)
        yield ds, t


def test_certify_matches_oracle_seeded():
    for ds, t in _random_cases(300, 11):
        try:
            want = oracle_certify(ds, t)
        except EmptyDomain:
            # no possible world: every support is zero, so only a lone label survives
            got = certify(build_index(ds), t)
            assert got.is_robust == (len(ds.present_labels()) == 1)
            continue
        got = certify(build_index(ds), t)
        assert got.robust_label == want.robust_label
        assert bounds(got) == bounds(want)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_bounds_sandwich_every_world(seed):
    ds, t = random_tiny(np.random.default_rng(seed), max_missing=4)
    try:
        worlds = list(enumerate_worlds(ds))
    except EmptyDomain:
        return
    table = bounds(certify(build_index(ds), t))
    for world in worlds:
        rows = list(world.dataset.rows())
        for label, (lo, hi) in table.items():
            assert lo <= fraction_support(rows, label, t) <= hi


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_open_world_bounds_are_looser(seed):
    ds, t = random_tiny(np.random.default_rng(seed), max_missing=5)
    index = build_index(ds)
    tight, loose = bounds(certify(index, t)), bounds(certify(index, t, guard=False))
    for label in tight:
        assert loose[label][0] <= tight[label][0]
        assert loose[label][1] >= tight[label][1]
    if certify(index, t, guard=False).is_robust:
        assert certify(index, t).is_robust


def test_batch_equals_iterate():
    ds = inject_missing(synthetic_dataset(500, 6, seed=5, concentration=0.3), 0.02, 1)
    points = [tuple(c) for c, _ in synthetic_dataset(40, 6, seed=6).rows()]
    batch = certify_batch(build_index(ds), points)
    assert batch == certify_iterate(ds, points)
    assert any(v.is_robust for v in batch)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 1000))
def test_approx_never_misses_a_robust_point(seed, sample_seed):
    ds, t = random_tiny(np.random.default_rng(seed), max_missing=5)
    try:
        truth = oracle_certify(ds, t)
    except EmptyDomain:
        return
    approx = approx_certify(ds, t, samples=20, seed=sample_seed)
    if truth.is_robust:
        assert approx.robust_label == truth.robust_label
    if not approx.is_robust:
        assert not truth.is_robust


def test_approx_is_deterministic():
    ds = inject_missing(synthetic_dataset(60, 3, seed=2), 0.3, 0)
    t = ("v0", "v1", "v2")
    assert approx_certify(ds, t, 50, seed=4) == approx_certify(ds, t, 50, seed=4)


def test_certify_is_deterministic():
    ds = inject_missing(synthetic_dataset(200, 4, seed=9), 0.25, 3)
    points = [("v0", "v1", "v2", "v3"), ("v4", "v4", "v4", "v4")]
    first = [v.to_dict(i) for i, v in enumerate(certify_batch(build_index(ds), points))]
    again = [v.to_dict(i) for i, v in enumerate(certify_batch(build_index(ds), points))]
    assert first == again
