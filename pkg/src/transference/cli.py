"""Command-line front end: flow traces, exponent reports, the verification suite."""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import tempfile
from pathlib import Path

from .exponents import EstimationError, duality_to_json
from .fixtures import (
    DEFAULT_SHAPES,
    KINDS,
    FixtureError,
    FixtureSpec,
    default_corpus,
    fixture_to_json,
    generate,
    load_fixture,
)
from .flow import (
    FlowError,
    PathSpec,
    exact_grid,
    psi_profile,
    s_grid,
    successive_minima,
    trace_to_csv,
    witnesses_to_json,
)
from .harness import (
    DEFAULT_TOLERANCE,
    REGISTRY,
    HarnessError,
    SuiteConfig,
    estimate_exponents,
    make_report,
    run_suite,
    suite_table,
    suite_to_json,
)
from .problem import DEFAULT_PRECISION_BITS, ApproximationProblem, ProblemError

PRECISION_ENV = "TRANSFERENCE_PRECISION_BITS"

DEFAULTS = {
    "fixture": "random",
    "kind": "random-uniform",
    "n": 2,
    "m": 1,
    "seed": 0,
    "precision_bits": DEFAULT_PRECISION_BITS,
    "s_max": 25.0,
    "s_step": 0.05,
    "exact_grid": None,
    "t_max": None,
    "height": 1,
    "tolerance": DEFAULT_TOLERANCE,
    "digits": 15,
    "only": None,
    "transposed": False,
    "s": 1.0,
    "out": None,
}
# config-file keys and how to parse them
CONFIG_TYPES = {
    "fixture": str,
    "kind": str,
    "n": int,
    "m": int,
    "seed": int,
    "precision_bits": int,
    "s_max": float,
    "s_step": float,
    "exact_grid": str,
    "t_max": int,
    "height": int,
    "tolerance": float,
    "digits": int,
    "only": str,
    "transposed": lambda v: v.strip().lower() in ("1", "true", "yes", "on"),
    "s": float,
}

log = logging.getLogger("transference")


class UsageError(ValueError):
    """Invalid command-line or configuration input."""


def read_config(path: str) -> dict:
    """Flat ``key = value`` file; '#' starts a comment, keys use '_' or '-'."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, value = (part.strip() for part in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in CONFIG_TYPES:
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                out[key] = CONFIG_TYPES[key](value)
            except ValueError as exc:
                raise UsageError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return out


def resolve(args: argparse.Namespace) -> dict:
    """Merge flags > config file > environment > defaults."""
    settings = dict(DEFAULTS)
    env = os.environ.get(PRECISION_ENV)
    if env:
        try:
            settings["precision_bits"] = int(env)
        except ValueError as exc:
            raise UsageError(f"{PRECISION_ENV} must be an integer, got {env!r}") from exc
    if getattr(args, "config", None):
        from_file = read_config(args.config)
        args._file_keys = tuple(from_file)
        settings.update(from_file)
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None and value is not False:
            settings[key] = value
    settings["bits_explicit"] = settings["precision_bits"] != DEFAULTS["precision_bits"] or bool(
        env or args.precision_bits is not None or "precision_bits" in getattr(args, "_file_keys", ()))
    if settings["precision_bits"] < 64:
        raise UsageError("precision must be at least 64 bits")
    if settings["s_max"] <= 0 or settings["s_step"] <= 0:
        raise UsageError("s grid must be nonempty and increasing")
    if isinstance(settings["exact_grid"], str):
        settings["exact_grid"] = parse_exact_grid(settings["exact_grid"])
    if isinstance(settings["only"], str):
        settings["only"] = tuple(x.strip() for x in settings["only"].split(",") if x.strip())
    return settings


def parse_exact_grid(text: str) -> tuple[int, int]:
    try:
        lo, hi = (int(v) for v in text.split(":"))
    except ValueError as exc:
        raise UsageError(f"--exact-grid expects U_MIN:U_MAX, got {text!r}") from exc
    if not 2 <= lo < hi:
        raise UsageError("--exact-grid needs 2 <= U_MIN < U_MAX")
    return lo, hi


def suite_config(settings: dict, corrupt: bool = False) -> SuiteConfig:
    return SuiteConfig(
        s_max=settings["s_max"],
        s_step=settings["s_step"],
        t_max=settings["t_max"],
        height=settings["height"],
        tolerance=settings["tolerance"],
        only=tuple(settings["only"] or ()),
        exact_grid=settings["exact_grid"],
        corrupt_lambda_order=corrupt,
    )


# -- fixtures ------------------------------------------------------------------------


def fixture_spec(settings: dict, kind: str) -> FixtureSpec:
    return FixtureSpec(kind, settings["n"], settings["m"], settings["seed"], settings["precision_bits"])


def load_problem(settings: dict) -> ApproximationProblem:
    """A fixture file, or a generator keyword (zero or one of the fixture kinds)."""
    name = settings["fixture"]
    bits = settings["precision_bits"]
    if name == "zero":
        return ApproximationProblem.zero(settings["n"], settings["m"])
    short = {"random": "random-uniform", "algebraic": "algebraic-power"}
    kind = short.get(name, name)
    if kind in KINDS and kind != "user" and not Path(name).exists():
        return generate(fixture_spec(settings, kind))
    # decimal entries are re-read at the stored precision unless one was asked for
    return load_fixture(name, bits if settings["bits_explicit"] else None)


def load_problems(settings: dict) -> list[ApproximationProblem]:
    if settings["fixture"] == "corpus":
        return [generate(spec) for spec in default_corpus(settings["precision_bits"], DEFAULT_SHAPES)]
    return [load_problem(settings)]


# -- output --------------------------------------------------------------------------


def write_atomic(path: str | Path, text: str) -> None:
    """Write through a temporary file in the same directory and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=path.name + ".", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit(text: str, out: str | None) -> None:
    if out:
        write_atomic(out, text)
    else:
        sys.stdout.write(text)


# -- commands -------------------------------------------------------------------------


def cmd_flow(args, settings) -> int:
    problem = load_problem(settings)
    if settings["transposed"]:
        problem = problem.transposed()
    if settings["exact_grid"]:
        grid = exact_grid(problem.n, *settings["exact_grid"])
    else:
        grid = s_grid(settings["s_max"], settings["s_step"])
    trace = psi_profile(problem, grid)
    # validate the ordering before anything is written
    for smp in trace:
        for a, b in zip(smp.lambdas, smp.lambdas[1:]):
            rep = make_report("lambda_order", "lambda_order", b, ">=", a, 1e-9)
            if rep.verdict != "holds":
                raise FlowError(f"lambda ordering broken at s={smp.s}", smp.s)
    csv_text = trace_to_csv(trace, settings["digits"])
    emit(csv_text, settings["out"])
    if settings["out"]:
        write_atomic(str(settings["out"]) + ".witnesses.json", witnesses_to_json(trace, settings["digits"]) + "\n")
    return 0


def cmd_exponents(args, settings) -> int:
    problem = load_problem(settings)
    run = estimate_exponents(problem, suite_config(settings))
    payload = {
        "label": problem.label,
        "n": problem.n,
        "m": problem.m,
        "reports": [r.to_json() for r in run.all_reports],
        "duality": duality_to_json(run.duality),
        "errors": run.errors,
    }
    emit(json.dumps(payload, indent=1) + "\n", settings["out"])
    return 2 if run.errors else 0


def cmd_verify(args, settings) -> int:
    only = settings["only"] or ()
    unknown = [name for name in only if name not in REGISTRY and "_" not in name]
    if unknown:
        raise UsageError(f"unknown inequality names {unknown}; known families: {', '.join(REGISTRY)}")
    config = suite_config(settings, corrupt=args.corrupt_lambda_order)
    results = []
    for problem in load_problems(settings):
        log.info("verifying %s", problem.label)
        results.append(run_suite(problem, config))
    if settings["out"]:
        write_atomic(settings["out"], suite_to_json(results))
    sys.stdout.write(suite_table(results))
    if any(r.violated for r in results):
        return 1
    if any(r.errors for r in results):
        return 2
    return 0


def cmd_gen(args, settings) -> int:
    kind = settings["kind"]
    if kind == "user":
        raise UsageError("user fixtures are written by hand; see the fixture format in the README")
    spec = fixture_spec(settings, kind)
    emit(fixture_to_json(generate(spec), spec), settings["out"])
    return 0


def cmd_minima(args, settings) -> int:
    problem = load_problem(settings)
    if settings["transposed"]:
        problem = problem.transposed()
    s = settings["s"]
    res = successive_minima(problem, s, PathSpec.standard(problem.n, problem.m))
    payload = {
        "label": problem.label,
        "s": s,
        "lambdas": list(res.lambdas),
        "psis": [math.log(v) / s for v in res.lambdas] if s > 0 else None,
        "witnesses": [list(w) for w in res.witnesses],
    }
    emit(json.dumps(payload, indent=1) + "\n", settings["out"])
    return 0


COMMANDS = {
    "flow": cmd_flow,
    "exponents": cmd_exponents,
    "verify": cmd_verify,
    "gen": cmd_gen,
    "minima": cmd_minima,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value file (flags override it)")
    common.add_argument("--fixture", help="fixture JSON path, or zero|random|algebraic|liouville|rational"
                        " (verify also accepts corpus)")
    common.add_argument("--n", type=int, help="rows of Theta for generated fixtures")
    common.add_argument("--m", type=int, help="columns of Theta for generated fixtures")
    common.add_argument("--seed", type=int, help="seed for generated fixtures")
    common.add_argument("--precision-bits", type=int,
                        help=f"entry precision in bits (default {DEFAULT_PRECISION_BITS}, env {PRECISION_ENV})")
    common.add_argument("--s-max", type=float, help="flow horizon")
    common.add_argument("--s-step", type=float, help="flow grid spacing")
    common.add_argument("--exact-grid", help="U_MIN:U_MAX, sample s = n ln u at integers u")
    common.add_argument("--t-max", type=int, help="threshold for the classical search")
    common.add_argument("--height", type=int, help="coefficient bound for enumerated multivectors")
    common.add_argument("--tolerance", type=float, help="tolerance for exponent-level inequalities")
    common.add_argument("--digits", type=int, help="significant digits in CSV output")
    common.add_argument("--out", help="output file (default: standard output; verify writes JSON only here)")
    common.add_argument("--only", help="comma-separated inequality families or instance names")
    common.add_argument("--transposed", action="store_true", default=None, help="work with the transpose")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(prog="transference", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("flow", parents=[common], help="successive minima along the flow as CSV")
    sub.add_parser("exponents", parents=[common], help="exponent reports for Theta and its transpose")
    verify = sub.add_parser("verify", parents=[common], help="run the inequality suite")
    verify.add_argument("--corrupt-lambda-order", action="store_true", help=argparse.SUPPRESS)
    gen = sub.add_parser("gen", parents=[common], help="write a fixture file")
    gen.add_argument("--kind", choices=[k for k in KINDS if k != "user"], help="fixture kind")
    minima = sub.add_parser("minima", parents=[common], help="successive minima at one flow time")
    minima.add_argument("--s", type=float, help="flow time")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        settings = resolve(args)
        return COMMANDS[args.command](args, settings)
    except (UsageError, FixtureError, ProblemError, HarnessError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FlowError, EstimationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
