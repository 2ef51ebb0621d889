"""Command-line front end and benchmark harness.

Subcommands: ``synth``, ``discretize``, ``perturb``, ``certify``, ``poison``
and ``bench``.  Exit codes: 0 ok, 2 bad input, 3 resource cap hit (world
enumeration), 4 attack failed or could not be verified.
"""

from __future__ import annotations

import argparse
import csv
import gc
import json
import statistics
import sys
import time
from collections.abc import Callable, Sequence
from pathlib import Path

from . import data, decision, poisoning
from .errors import AttackError, NBRobustError, TooManyWorlds
from .stats import build_index

EXIT_OK, EXIT_INPUT, EXIT_CAP, EXIT_ATTACK = 0, 2, 3, 4

SUMMARY_COLUMNS = [
    "dataset", "n", "d", "m", "missing_rate", "k_points", "algo", "build_ms", "query_ms",
    "verdicts_robust", "verdicts_nonrobust", "poisoning_rate", "cells_poisoned", "seed",
]


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _dump(obj, dest: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True)
    if dest is None or dest == "-":
        print(text)
    else:
        Path(dest).write_text(text + "\n", encoding="utf-8")


def dataset_stats(ds: data.Dataset) -> dict:
    total = ds.n * ds.d
    return {
        "n": ds.n,
        "d": ds.d,
        "m": len(ds.present_labels()),
        "missing_rate": ds.missing_count / total if total else 0.0,
    }


def _timed_mean(fn: Callable[[], object], repeat: int) -> tuple[float, object]:
    """Mean wall-clock ms over ``repeat`` runs, after one untimed warm-up run."""
    result = fn()
    times = []
    gc_was_on = gc.isenabled()
    gc.disable()
    try:
        for _ in range(repeat):
            started = time.perf_counter()
            result = fn()
            times.append((time.perf_counter() - started) * 1000.0)
    finally:
        if gc_was_on:
            gc.enable()
    return statistics.fmean(times), result


# -- certification ----------------------------------------------------------


def run_certify(
    train: data.Dataset,
    points: Sequence[Sequence[str]],
    algo: str,
    *,
    repeat: int = 5,
    samples: int = 100,
    seed: int = 0,
    guard: bool = True,
) -> dict:
    """Time one certification algorithm; build and query phases are kept apart."""
    if repeat < 1:
        raise ValueError("repeat must be at least 1")
    build_ms = 0.0
    if algo == "index":
        build_ms, index = _timed_mean(lambda: build_index(train), repeat)
        query_ms, verdicts = _timed_mean(lambda: decision.certify_batch(index, points, guard), repeat)
    elif algo == "iterate":
        query_ms, verdicts = _timed_mean(lambda: decision.certify_iterate(train, points, guard), repeat)
    elif algo == "approx":
        query_ms, verdicts = _timed_mean(
            lambda: [decision.approx_certify(train, t, samples, seed) for t in points], repeat
        )
    elif algo == "oracle":
        query_ms, verdicts = _timed_mean(lambda: [decision.oracle_certify(train, t) for t in points], repeat)
    else:
        raise ValueError(f"unknown certification algorithm {algo!r}")
    report = {
        "command": "certify",
        "algo": algo,
        "dataset": dataset_stats(train),
        "k_points": len(points),
        "repeat": repeat,
        "seed": seed,
        "build_ms": build_ms,
        "query_ms": query_ms,
        "runtime_ms": build_ms + query_ms,
        "verdicts": [v.to_dict(i) for i, v in enumerate(verdicts)],
        "verdicts_robust": sum(v.is_robust for v in verdicts),
        "verdicts_nonrobust": sum(not v.is_robust for v in verdicts),
    }
    if algo == "approx":
        report["samples"] = samples
        report["note"] = "sampled worlds only: a robust verdict may be wrong"
    return report


# -- poisoning --------------------------------------------------------------


def run_poison(
    train: data.Dataset,
    points: Sequence[Sequence[str]],
    algo: str,
    *,
    seed: int = 0,
    budget: int | None = None,
) -> tuple[dict, poisoning.PoisonPlan]:
    """Run an attack and re-check every target on the poisoned data."""
    if algo == "gs":
        if len(points) != 1:
            raise ValueError("gs attacks a single point; use multi for several")
        plan = poisoning.poison_single(train, points[0])
    elif algo == "multi":
        plan = poisoning.poison_multi(train, points)
    elif algo == "rp":
        plan = poisoning.poison_random(train, points, seed, budget)
    elif algo == "sr":
        plan = poisoning.poison_smart_random(train, points, seed, budget)
    else:
        raise ValueError(f"unknown poisoning algorithm {algo!r}")
    verdicts = poisoning.verify_plan(plan, points)
    still = [i for i, v in enumerate(verdicts) if v.is_robust]
    if still:
        raise CliError(f"plan verification failed: points {still} are still robust", EXIT_ATTACK)
    report = plan.to_dict()
    report.update(
        {
            "command": "poison",
            "seed": seed,
            "dataset": dataset_stats(train),
            "k_points": len(points),
            "cells_poisoned": len(plan.cells),
            "verified": True,
        }
    )
    return report, plan


# -- bench ------------------------------------------------------------------


def _bench_source(entry: dict, base: Path, k_max: int) -> tuple[data.Dataset, list[tuple[str, ...]]]:
    """Training set plus a pool of held-out test points for one config entry."""
    if "synthetic" in entry:
        syn = entry["synthetic"]
        rows = int(syn["rows"])
        full = data.synthetic_dataset(
            rows + k_max,
            int(syn["attrs"]),
            int(syn.get("labels", 3)),
            int(syn.get("domain", 5)),
            int(syn.get("seed", 0)),
        )
        train = full.subset(range(rows))
        pool = [tuple(full.row(r)) for r in range(rows, rows + k_max)]
        return train, pool
    path = base / entry["path"]
    full = data.load_csv(path, label=entry.get("label", "label"), null_token=entry.get("null_token", "NULL"))
    full.require_complete("bench source")
    train, held = data.split(full, float(entry.get("train_fraction", 0.8)), int(entry.get("split_seed", 0)))
    return train, [tuple(held.row(r)) for r in range(min(k_max, held.n))]


def run_bench(config: dict, base: Path = Path(".")) -> tuple[list[dict], list[dict]]:
    """Execute the config grid; a failing cell is recorded and skipped."""
    seed = int(config.get("seed", 0))
    repeat = int(config.get("repeat", 5))
    rates = [float(r) for r in config.get("missing_rates", [0.2, 0.4, 0.6, 0.8])]
    ks = [int(k) for k in config.get("k_points", [16])]
    certify_algos = config.get("certify_algos", ["index", "iterate"])
    poison_algos = config.get("poison_algos", [])
    samples = int(config.get("samples", 100))
    reports, rows = [], []

    def record(name, train, rate, k, algo, fn):
        base_row = {"dataset": name, **dataset_stats(train), "missing_rate": rate, "k_points": k, "algo": algo, "seed": seed}
        try:
            rep = fn()
        except (NBRobustError, ValueError, CliError) as exc:
            reports.append({**base_row, "status": "failed", "error": f"{type(exc).__name__}: {exc}"})
            rows.append({**base_row, "build_ms": "", "query_ms": "", "verdicts_robust": "", "verdicts_nonrobust": "",
                         "poisoning_rate": "", "cells_poisoned": "", "status": "failed"})
            return
        rep["dataset_name"] = name
        rep["status"] = "ok"
        reports.append(rep)
        rows.append({
            **base_row,
            "build_ms": round(rep.get("build_ms", 0.0), 3),
            "query_ms": round(rep.get("query_ms", rep.get("runtime_ms", 0.0)), 3),
            "verdicts_robust": rep.get("verdicts_robust", ""),
            "verdicts_nonrobust": rep.get("verdicts_nonrobust", ""),
            "poisoning_rate": rep.get("poisoning_rate", ""),
            "cells_poisoned": rep.get("cells_poisoned", ""),
            "status": "ok",
        })

    for entry in config["datasets"]:
        name = entry.get("name", entry.get("path", "synthetic"))
        train, pool = _bench_source(entry, base, max(ks))
        for rate in rates:
            incomplete = data.inject_missing(train, rate, seed)
            for k in ks:
                pts = pool[:k]
                for algo in certify_algos:
                    record(name, incomplete, rate, k, algo,
                           lambda: run_certify(incomplete, pts, algo, repeat=repeat, samples=samples, seed=seed))
        for k in ks:
            pts = pool[:k]
            for algo in poison_algos:
                use = "multi" if algo == "gs" and k > 1 else algo
                record(name, train, 0.0, k, use, lambda: run_poison(train, pts, use, seed=seed)[0])
    return reports, rows


def write_summary(rows: list[dict], dest: Path) -> None:
    with open(dest, "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS + ["status"], lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)


# -- argument handling ------------------------------------------------------


def _load_train(args) -> data.Dataset:
    return data.load_csv(args.train, label=args.label, null_token=args.null_token)


def _cmd_synth(args) -> int:
    full = data.synthetic_dataset(args.rows + args.points, args.attrs, args.labels, args.domain, args.seed)
    train = full.subset(range(args.rows))
    train.to_csv(args.out)
    if args.points_out:
        pts = [full.row(r) for r in range(args.rows, args.rows + args.points)]
        data.write_points(args.points_out, full.attributes, pts)
    return EXIT_OK


def _cmd_discretize(args) -> int:
    numeric = [c for c in (args.numeric_cols or "").split(",") if c]
    if args.bins < 2:
        raise CliError("--bins must be at least 2", EXIT_INPUT)
    if not numeric:
        Path(args.out).write_bytes(Path(args.input).read_bytes())
        return EXIT_OK
    ds = data.load_csv(args.input, label=args.label, null_token=args.null_token)
    binner = data.fit_discretizer(ds, numeric, args.bins, args.strategy)
    for attr, cuts in binner.cuts.items():
        print(f"{attr}: {', '.join(repr(c) for c in cuts) or '(single bin)'}", file=sys.stderr)
    data.apply_discretizer(ds, binner).to_csv(args.out)
    return EXIT_OK


def _cmd_perturb(args) -> int:
    ds = data.load_csv(args.input, label=args.label, null_token=args.null_token)
    data.inject_missing(ds, args.rate, args.seed).to_csv(args.out)
    return EXIT_OK


def _cmd_certify(args) -> int:
    train = _load_train(args)
    points = data.read_points(args.points, train.attributes, args.null_token)
    report = run_certify(
        train, points, args.algo, repeat=args.repeat, samples=args.samples, seed=args.seed, guard=not args.no_guard
    )
    _dump(report, args.json)
    return EXIT_OK


def _cmd_poison(args) -> int:
    train = _load_train(args)
    points = data.read_points(args.points, train.attributes, args.null_token)
    report, plan = run_poison(train, points, args.algo, seed=args.seed, budget=args.budget)
    if args.out_dataset:
        plan.dataset.to_csv(args.out_dataset)
    _dump(report, args.json)
    return EXIT_OK


def _cmd_bench(args) -> int:
    config_path = Path(args.config)
    config = json.loads(config_path.read_text(encoding="utf-8"))
    reports, rows = run_bench(config, config_path.parent)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "reports.json").write_text(json.dumps(reports, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    write_summary(rows, out / "summary.csv")
    failed = sum(r.get("status") == "failed" for r in reports)
    print(f"{len(reports)} cells, {failed} failed -> {out}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nbrobust", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def io_opts(sp):
        sp.add_argument("--label", default="label", help="label column name")
        sp.add_argument("--null-token", default="NULL")

    sp = sub.add_parser("synth", help="write a synthetic categorical dataset")
    sp.add_argument("out")
    sp.add_argument("--rows", type=int, default=1000)
    sp.add_argument("--attrs", type=int, default=8)
    sp.add_argument("--labels", type=int, default=3)
    sp.add_argument("--domain", type=int, default=5)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--points", type=int, default=0, help="extra rows drawn as test points")
    sp.add_argument("--points-out")
    sp.set_defaults(func=_cmd_synth)

    sp = sub.add_parser("discretize", help="bin numeric columns into categorical tokens")
    sp.add_argument("input")
    sp.add_argument("out")
    sp.add_argument("--bins", type=int, default=5)
    sp.add_argument("--strategy", choices=["uniform", "quantile"], default="uniform")
    sp.add_argument("--numeric-cols", default="", help="comma-separated column names")
    io_opts(sp)
    sp.set_defaults(func=_cmd_discretize)

    sp = sub.add_parser("perturb", help="NULL a fixed fraction of feature cells")
    sp.add_argument("input")
    sp.add_argument("out")
    sp.add_argument("--rate", type=float, required=True)
    sp.add_argument("--seed", type=int, default=0)
    io_opts(sp)
    sp.set_defaults(func=_cmd_perturb)

    sp = sub.add_parser("certify", help="decide robustness of test points")
    sp.add_argument("train")
    sp.add_argument("points")
    sp.add_argument("--algo", choices=["index", "iterate", "approx", "oracle"], default="index")
    sp.add_argument("--samples", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--repeat", type=int, default=5)
    sp.add_argument("--no-guard", action="store_true", help="use the raw min/max formulas")
    sp.add_argument("--json", help="write the report here instead of stdout")
    io_opts(sp)
    sp.set_defaults(func=_cmd_certify)

    sp = sub.add_parser("poison", help="compute a poisoning plan")
    sp.add_argument("train")
    sp.add_argument("points")
    sp.add_argument("--algo", choices=["gs", "rp", "sr", "multi"], default="gs")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--budget", type=int)
    sp.add_argument("--json")
    sp.add_argument("--out-dataset")
    io_opts(sp)
    sp.set_defaults(func=_cmd_poison)

    sp = sub.add_parser("bench", help="run a grid of certify/poison experiments")
    sp.add_argument("config", help="JSON grid description")
    sp.add_argument("--out-dir", default="bench-out")
    sp.set_defaults(func=_cmd_bench)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except TooManyWorlds as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    except AttackError as exc:
        where = f" (point {exc.point_id})" if exc.point_id is not None else ""
        print(f"attack failed{where}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ATTACK
    except (NBRobustError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
