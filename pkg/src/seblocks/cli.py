"""Command-line interface: run tests on CSV samples, print exact null
distributions, and drive the power-study harness.

Exit codes: 0 on success, 1 on any error, 2 when --decide is passed and
the test rejects at the requested level.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np

from . import nulldist, simulate, twosample
from .nulldist import CapacityError, EmpiricalNull, NormalNull, Pmf
from .partition import (
    BlockFrequencies,
    Sample,
    TieError,
    block_frequencies,
    fit_partition,
    make_plan,
)
from .simulate import ScenarioSpec, TestConfig
from .twosample import make_scores

_DIST_STATISTICS = (
    "precedence",
    "empty_block",
    "maximal_block",
    "runs",
    "interior_exterior",
    "dixon_c2",
    "linear_rank",
)


class CliError(Exception):
    """User-facing error: printed as a one-line diagnostic, exit 1."""


def read_sample_csv(path: str) -> Sample:
    """Read one observation per row, one coordinate per column.

    A single leading header row is detected and skipped when any of its
    cells is not numeric.
    """
    rows = []
    try:
        with open(path, newline="") as handle:
            reader = csv.reader(handle)
            raw = [row for row in reader if row and any(cell.strip() for cell in row)]
    except OSError as exc:
        raise CliError(f"{path}: {exc.strerror or exc}") from exc
    if not raw:
        raise CliError(f"{path}: no data rows")

    def parse(row, lineno):
        try:
            return [float(cell) for cell in row]
        except ValueError:
            raise CliError(
                f"{path}: row {lineno} has a non-numeric cell: {row!r}"
            ) from None

    start = 0
    try:
        first = parse(raw[0], 1)
        rows.append(first)
        start = 1
    except CliError:
        start = 1  # header row
    width = None
    for i, row in enumerate(raw[start:], start=start + 1):
        values = parse(row, i)
        if width is None:
            width = len(values)
        rows.append(values)
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise CliError(f"{path}: rows have inconsistent column counts {sorted(widths)}")
    try:
        return Sample(np.array(rows))
    except ValueError as exc:
        raise CliError(f"{path}: {exc}") from exc


def write_sample_csv(path: str, sample: Sample):
    """Write a sample so that re-reading reproduces it bit-exactly."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        for row in sample.points:
            writer.writerow([repr(float(v)) for v in row])


def _null_summary(null) -> dict:
    if isinstance(null, Pmf):
        return {"null": "exact", "null_atoms": len(null.support)}
    if isinstance(null, EmpiricalNull):
        return {"null": "monte_carlo", "null_draws": null.n_draws}
    if isinstance(null, NormalNull):
        return {"null": "normal", "null_mean": null.mean, "null_variance": null.variance}
    return {"null": type(null).__name__}


def _emit_result(payload: dict, fmt: str, out=None):
    out = out if out is not None else sys.stdout
    if fmt == "json":
        json.dump(payload, out, indent=2)
        out.write("\n")
    elif fmt == "table":
        width = max(len(k) for k in payload)
        for key, value in payload.items():
            out.write(f"{key:<{width}}  {value}\n")
    elif fmt == "csv":
        writer = csv.writer(out)
        writer.writerow(payload.keys())
        writer.writerow(payload.values())
    else:  # pragma: no cover
        raise CliError(f"unknown output format {fmt!r}")


def _resolve_method(method: str, m: int, n: int) -> str:
    if method != "auto":
        return method
    return "exact" if math.comb(m + n, n) <= nulldist.enumeration_cap() else "monte_carlo"


def cmd_test(args) -> int:
    x = read_sample_csv(args.x)
    y = read_sample_csv(args.y)
    if x.p != y.p:
        raise CliError(f"column-count mismatch: {args.x} has {x.p}, {args.y} has {y.p}")
    if args.partition_sample == "x":
        tested, partitioner = y, x
    else:
        tested, partitioner = x, y
    m, n = tested.size, partitioner.size
    if m < n:
        print(
            f"warning: tested sample ({m}) is smaller than the partitioning sample "
            f"({n}); labeling the smaller sample as the partitioner keeps the "
            "rejection region nondegenerate",
            file=sys.stderr,
        )

    test = simulate._TEST_ALIASES.get(args.test.lower(), args.test.lower())
    if test not in simulate.KNOWN_TESTS:
        raise CliError(f"unknown test {args.test!r}; known: {simulate.KNOWN_TESTS}")

    meta = {"m": m, "n": n, "p": x.p, "seed": args.seed}
    if test == "runs":
        if x.p != 1:
            raise CliError("the runs test needs single-column data")
        try:
            result = twosample.runs_test(tested, partitioner, args.alternative or "lower")
        except TieError as exc:
            raise CliError(f"tie-error: {exc}") from exc
        result.metadata.update(meta)
    else:
        try:
            plan = make_plan(args.plan, x.p, n)
        except ValueError as exc:
            raise CliError(str(exc)) from exc
        try:
            fitted = fit_partition(plan, partitioner, on_ties=args.on_ties, seed=args.seed)
        except TieError as exc:
            raise CliError(f"tie-error: {exc}") from exc
        freqs = block_frequencies(fitted, tested)
        if freqs.boundary_ties == m:
            raise CliError(
                "tie-error: every tested point (row 1 onward) ties a partition "
                "threshold; the samples share their values"
            )
        if freqs.boundary_ties:
            print(
                f"warning: {freqs.boundary_ties} tested point(s) tie a partition "
                "threshold; counted by the half-open convention",
                file=sys.stderr,
            )
        meta["plan"] = plan.label.value
        alt = args.alternative
        method = _resolve_method(args.method, m, n)
        try:
            if test in simulate.SCORE_TESTS:
                family = args.scores or test
                scores = make_scores(family, m, n)
                result = twosample.linear_rank_test(
                    freqs,
                    scores,
                    alt or "two-sided",
                    method,
                    n_draws=args.draws,
                    seed=args.seed,
                )
            elif test == "precedence":
                result = twosample.precedence_test(freqs, args.j, alt or "two-sided")
            elif test == "maximal_block":
                result = twosample.maximal_block_test(freqs, args.j, alt or "upper")
            elif test == "empty_block":
                result = twosample.empty_block_test(freqs, alt or "upper")
            else:
                result = twosample.dixon_c2_test(
                    freqs, method, alt or "upper", n_draws=args.draws, seed=args.seed
                )
        except CapacityError as exc:
            raise CliError(str(exc)) from exc
        result.metadata.update(meta)

    payload = result.to_json_dict()
    payload.update(_null_summary(result.null_reference))
    exit_code = 0
    if args.decide:
        decision = twosample.randomized_decision(result, args.alpha, seed=(args.seed, 1))
        payload["alpha"] = args.alpha
        payload["reject"] = decision.reject
        payload["gamma"] = decision.gamma
        exit_code = 2 if decision.reject else 0
    _emit_result(payload, args.output)
    return exit_code


def _dist_null(args):
    name = args.statistic
    m, n = args.m, args.n
    if name == "precedence":
        j = args.j if args.j is not None else twosample.default_precedence_j(n)
        return nulldist.precedence_pmf(m, n, j), j
    if name == "empty_block":
        return nulldist.empty_block_pmf(m, n), None
    if name == "maximal_block":
        j = args.j if args.j is not None else twosample.default_maximal_block_j(n)
        return nulldist.maximal_block_pmf(m, n, j), j
    if name == "runs":
        return nulldist.runs_pmf(m, n), None
    if name == "interior_exterior":
        return nulldist.interior_exterior_empty_pmf(m, n), None
    if name == "dixon_c2":
        return (
            nulldist.dixon_c2_null(
                m, n, _resolve_method(args.method, m, n), n_draws=args.draws, seed=args.seed
            ),
            None,
        )
    if name == "linear_rank":
        scores = make_scores(args.scores or "wilcoxon", m, n)
        return (
            nulldist.linear_rank_null(
                m,
                n,
                scores.scores,
                _resolve_method(args.method, m, n),
                n_draws=args.draws,
                seed=args.seed,
            ),
            None,
        )
    raise CliError(f"unknown statistic {name!r}; known: {_DIST_STATISTICS}")


def _oracle_statistics(name: str, m: int, n: int, j, scores) -> dict:
    """Brute-force distribution over all equally likely frequency
    vectors, for cross-checking the closed forms."""
    enum = nulldist.enumerate_frequency_vectors(m, n)
    tally: dict = {}
    for vec in enum.vectors:
        if name == "precedence":
            key = sum(vec[:j])
        elif name == "empty_block":
            key = sum(1 for c in vec if c == 0)
        elif name == "maximal_block":
            key = max(vec[:j])
        elif name == "runs":
            z = twosample.build_indicator_vector(BlockFrequencies(vec, m, n)).z
            key = int(1 + (z[1:] != z[:-1]).sum())
        elif name == "interior_exterior":
            key = (
                sum(1 for c in vec[1:-1] if c == 0),
                int(vec[0] == 0) + int(vec[-1] == 0),
            )
        elif name == "dixon_c2":
            key = nulldist.dixon_statistic(vec, m, n)
        elif name == "linear_rank":
            zero_pos = np.cumsum(np.asarray(vec[:-1])) + np.arange(n)
            key = float(scores.sum() - scores[zero_pos].sum())
            if np.array_equal(scores, np.arange(1.0, m + n + 1)):
                key = int(round(key))
        else:
            raise CliError(f"--oracle is not available for {name!r}")
        tally[key] = tally.get(key, 0) + 1
    return {k: Fraction(v, enum.count) for k, v in tally.items()}


def _check_oracle(args, null, j) -> int:
    if not isinstance(null, (Pmf, nulldist.JointPmf)):
        raise CliError("--oracle needs an exact pmf; use --method exact")
    scores = None
    if args.statistic == "linear_rank":
        scores = make_scores(args.scores or "wilcoxon", args.m, args.n).scores
    expected = _oracle_statistics(args.statistic, args.m, args.n, j, scores)
    if isinstance(null, nulldist.JointPmf):
        actual = {atom: pr for atom, pr in null.atoms}
    else:
        actual = {v: pr for v, pr in zip(null.support, null.probs)}
    if isinstance(next(iter(actual)), float):
        ok = len(actual) == len(expected) and all(
            math.isclose(a, e, rel_tol=1e-12, abs_tol=1e-12) and actual[a] == expected[e]
            for a, e in zip(sorted(actual), sorted(expected))
        )
    else:
        ok = actual == expected
    if not ok:
        raise CliError("oracle cross-check FAILED: closed form disagrees with enumeration")
    total = math.comb(args.m + args.n, args.n)
    print(f"oracle cross-check passed over {total} frequency vectors", file=sys.stderr)
    return 0


def cmd_dist(args) -> int:
    if args.m < 1 or args.n < 1:
        raise CliError("m and n must be >= 1")
    try:
        null, j = _dist_null(args)
    except CapacityError as exc:
        raise CliError(str(exc)) from exc
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    if args.oracle:
        _check_oracle(args, null, j)

    if isinstance(null, EmpiricalNull):
        null = null.to_pmf()
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        if isinstance(null, NormalNull):
            _emit_result(
                {"mean": null.mean, "variance": null.variance, "m": args.m, "n": args.n},
                "csv" if args.output == "csv" else args.output,
                out,
            )
            return 0
        writer = csv.writer(out)
        if isinstance(null, nulldist.JointPmf):
            writer.writerow(["s0_in", "s0_ex", "numerator", "denominator", "probability"])
            for row in null.csv_rows():
                writer.writerow([*row[:2], row[2], row[3], repr(row[4])])
        else:
            writer.writerow(["value", "numerator", "denominator", "probability"])
            for value, num, den, prob in null.csv_rows():
                shown = (
                    repr(float(value)) if isinstance(value, (float, Fraction)) else value
                )
                writer.writerow([shown, num, den, repr(prob)])
    finally:
        if args.out:
            out.close()
    return 0


def _shipped_config(name: str) -> str | None:
    base = resources.files("seblocks").joinpath("configs", f"{name}.json")
    if base.is_file():
        return base.read_text()
    return None


def _load_power_config(path: str) -> dict:
    text = None
    if Path(path).is_file():
        text = Path(path).read_text()
        origin = path
    else:
        text = _shipped_config(path)
        origin = f"shipped config {path!r}"
        if text is None:
            raise CliError(f"{path}: not a file and not a shipped config name")
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(f"{origin}: line {exc.lineno}: {exc.msg}") from exc
    for key in ("replicates", "seed", "runs"):
        if key not in cfg:
            raise CliError(f"{origin}: missing required key {key!r}")
    if not isinstance(cfg["runs"], list) or not cfg["runs"]:
        raise CliError(f"{origin}: 'runs' must be a non-empty list")
    if int(cfg["replicates"]) < 1:
        raise CliError(f"{origin}: replicates must be >= 1")
    return cfg


# the twelve published columns: six block tests under both constructions
_ALL_TESTS = [
    {"test": test, "plan": plan}
    for plan in ("spiral", "stairstep")
    for test in (
        "wilcoxon",
        "van_der_waerden",
        "terry_hoeffding",
        "precedence",
        "maximal_block",
        "empty_block",
    )
]


def _power_rows(cfg: dict, workers: int) -> list[dict]:
    m = int(cfg.get("m", 200))
    n = int(cfg.get("n", 200))
    p = int(cfg.get("p", 3))
    alpha = float(cfg.get("alpha", 0.05))
    replicates = int(cfg["replicates"])
    seed = int(cfg["seed"])
    draws = int(cfg.get("null_draws", 200_000))
    rows = []
    for block in cfg["runs"]:
        try:
            spec = ScenarioSpec(
                scenario=int(block.get("scenario", 0)),
                c=float(block.get("c", 0.0)),
                p=p,
                m=m,
                n=n,
            )
            entries = block["tests"]
            if entries == "ALL":
                entries = _ALL_TESTS
            tests = [
                TestConfig(
                    test=t["test"],
                    plan=t.get("plan", "spiral"),
                    j=t.get("j"),
                    alternative=t.get("alternative"),
                )
                for t in entries
            ]
        except (KeyError, ValueError, TypeError) as exc:
            raise CliError(f"bad run entry {block!r}: {exc}") from exc
        estimates = simulate.run_power_study(
            spec,
            tests,
            alpha,
            replicates,
            seed,
            workers=workers,
            n_null_draws=draws,
            randomize_roles=bool(cfg.get("randomize_roles", True)),
            permute_columns=bool(cfg.get("permute_columns", True)),
            randomize_directions=bool(cfg.get("randomize_directions", True)),
        )
        for est in estimates:
            rows.append(
                {
                    "scenario": est.scenario,
                    "c": est.c,
                    "test": est.test,
                    "plan": est.plan,
                    "alpha": est.alpha,
                    "replicates": est.replicates,
                    "rejections": est.rejections,
                    "rejection_rate": est.rejection_rate,
                    "std_error": est.std_error,
                    "seed": est.seed,
                    "tie_retries": est.tie_retries,
                }
            )
    return rows


def _rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()))
    writer.writeheader()
    for row in rows:
        writer.writerow(
            {
                k: (repr(v) if isinstance(v, float) else v)
                for k, v in row.items()
            }
        )
    return buf.getvalue()


def cmd_power(args) -> int:
    cfg = _load_power_config(args.config)
    workers = args.workers if args.workers else int(cfg.get("workers", 1))
    rows = _power_rows(cfg, workers)
    csv_text = _rows_to_csv(rows)
    json_text = json.dumps({"config": cfg, "results": rows}, indent=2) + "\n"
    if args.out:
        Path(args.out + ".csv").write_text(csv_text)
        Path(args.out + ".json").write_text(json_text)
        print(f"wrote {args.out}.csv and {args.out}.json", file=sys.stderr)
    else:
        sys.stdout.write(json_text if args.output == "json" else csv_text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seblocks",
        description="Distribution-free two-sample tests via statistically equivalent blocks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("test", help="run a two-sample test on two CSV samples")
    t.add_argument("--x", required=True, help="comparison sample CSV (one row per observation)")
    t.add_argument("--y", required=True, help="reference sample CSV (partitions by default)")
    t.add_argument("--test", default="wilcoxon", help=f"one of {simulate.KNOWN_TESTS}")
    t.add_argument("--plan", default="spiral", choices=["spiral", "stairstep", "univariate"])
    t.add_argument("--scores", default=None, help="score family override for rank tests")
    t.add_argument("--j", type=int, default=None, help="block count for precedence/maximal tests")
    t.add_argument("--alternative", default=None, choices=["lower", "upper", "two-sided"])
    t.add_argument("--alpha", type=float, default=0.05)
    t.add_argument(
        "--method", default="auto", choices=["auto", "exact", "monte_carlo", "normal"]
    )
    t.add_argument("--draws", type=int, default=200_000, help="Monte Carlo null draws")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--decide", action="store_true", help="exit 2 on rejection at --alpha")
    t.add_argument("--output", default="json", choices=["json", "table", "csv"])
    t.add_argument("--partition-sample", default="y", choices=["y", "x"])
    t.add_argument("--on-ties", default="error", choices=["error", "perturb"])
    t.set_defaults(func=cmd_test)

    d = sub.add_parser("dist", help="print an exact null distribution as CSV")
    d.add_argument("--statistic", required=True, help=f"one of {_DIST_STATISTICS}")
    d.add_argument("--m", type=int, required=True)
    d.add_argument("--n", type=int, required=True)
    d.add_argument("--j", type=int, default=None)
    d.add_argument("--scores", default=None)
    d.add_argument("--method", default="auto", choices=["auto", "exact", "monte_carlo", "normal"])
    d.add_argument("--draws", type=int, default=200_000)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--oracle", action="store_true", help="cross-check against enumeration")
    d.add_argument("--output", default="csv", choices=["csv", "json", "table"])
    d.add_argument("--out", default=None, help="write to a file instead of stdout")
    d.set_defaults(func=cmd_dist)

    p = sub.add_parser("power", help="run a configured power study")
    p.add_argument("--config", required=True, help="config file path or shipped config name")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", default=None, help="output file prefix (.csv and .json)")
    p.add_argument("--output", default="csv", choices=["csv", "json"])
    p.set_defaults(func=cmd_power)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (TieError, CapacityError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
