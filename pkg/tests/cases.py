"""Hand-transcribed worked examples shared by several test modules."""

from nbrobust.data import Dataset, Schema

SCHEMA_XY = Schema(("X", "Y"), "label")

# fresh tokens stand in for the placeholder constants of the worked example;
# None is a NULL cell
ROBUST_ROWS = [
    (("a", "b"), "l*"),
    (("c", "b"), "l*"),
    (("a", "d"), "l*"),
    (("a", None), "l*"),
    (("a", "b"), "l"),
    (("b", "c"), "l"),
    ((None, "u4"), "l"),
    ((None, "u5"), "l"),
    (("u6", "u7"), "l"),
]

# the possible world obtained by filling (3, Y)=b, (6, X)=a, (7, X)=b
ROBUST_WORLD_FILLS = {(3, 1): "b", (6, 0): "a", (7, 0): "b"}

ATTACK_ROWS = [
    (("a", "b"), "l*"),
    (("a", "s1"), "l*"),
    (("s2", "b"), "l*"),
    (("s3", "b"), "l*"),
    (("a", "b"), "l"),
    (("s1", "b"), "l"),
    (("s2", "s3"), "l"),
    (("s4", "s5"), "l"),
    (("s6", "s7"), "l"),
]

POINT_AB = ("a", "b")


def robust_example() -> Dataset:
    return Dataset.from_rows(SCHEMA_XY, ROBUST_ROWS)


def attack_example() -> Dataset:
    return Dataset.from_rows(SCHEMA_XY, ATTACK_ROWS)
