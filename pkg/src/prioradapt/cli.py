"""Command-line surface.

Five commands: ``normalize`` a confusion CSV, ``estimate`` priors from a
decision or score stream, ``reweight`` a score stream with priors,
``simulate`` a synthetic deployment stream, and ``evaluate`` scenarios
into a comparison table.

Exit codes: 0 success, 2 parse or validation failure, 3 solver failure,
4 I/O failure.  All outputs are UTF-8 with LF line endings and are
byte-stable for fixed seeds and inputs.  The ``PRIOR_ADAPT_THREADS``
environment variable caps how many scenarios ``evaluate`` runs in
parallel (default 1).
"""

from __future__ import annotations

import argparse
import contextlib
import json
import os
import sys
from typing import Optional

from . import fileio
from .core import (
    AdaptedPolicy,
    PriorEstimate,
    decide_adapted,
    decide_baseline,
    reweight,
    reweight_normalized,
    uniform_estimate,
)
from .errors import (
    ConvergenceError,
    IllConditionedError,
    InsufficientDataError,
    ParseError,
    PriorAdaptError,
    SingularMatrixError,
    ValidationError,
)
from .estimators import (
    estimate_matrix_inverse,
    estimate_naive,
    estimate_precision_recall,
    estimate_qp,
    precision_recall,
)
from .harness import (
    EvaluationRow,
    METHOD_ORDER,
    cross_validate,
    default_suite,
    evaluate_suite,
    run_drift_scenario,
    simulate_stream,
)
from .monitor import StreamMonitor
from .solver import SolverOptions

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_SOLVER = 3
EXIT_IO = 4

_SOLVER_ERRORS = (ConvergenceError, IllConditionedError, SingularMatrixError)

METHOD_FLAGS = {
    "naive": "naive",
    "pr": "precision_recall",
    "inverse": "matrix_inverse",
    "qp": "quadratic_program",
}

DISPLAY_NAMES = {
    "baseline": "Baseline",
    "naive": "Naive",
    "precision_recall": "Precision-recall",
    "matrix_inverse": "Matrix inverse",
    "quadratic_program": "Quadratic programming",
    "ground_truth": "Ground truth",
}

#: Rows eligible for the per-column best marker: the estimation methods,
#: excluding the baseline and the ground-truth oracle.
BOLDABLE = ("naive", "precision_recall", "matrix_inverse", "quadratic_program")

DEFAULT_SUITE_SEED = 20240


def _add_global_options(parser: argparse.ArgumentParser, for_subcommand: bool) -> None:
    # Sub-parsers share the namespace with the main parser and would clobber
    # already-parsed values with their defaults, so they suppress instead.
    default = argparse.SUPPRESS if for_subcommand else None
    parser.add_argument("--seed", type=int, default=default, help="override random seeds")
    parser.add_argument(
        "--output",
        default=default,
        help="output path (default: stdout)",
    )
    parser.add_argument(
        "--format",
        choices=("markdown", "csv", "json"),
        default=argparse.SUPPRESS if for_subcommand else "markdown",
        help="table format for evaluate (default: markdown)",
    )
    parser.add_argument(
        "--quiet",
        action="store_true",
        default=argparse.SUPPRESS if for_subcommand else False,
        help="suppress progress messages",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="prioradapt",
        description=(
            "Estimate deployment class priors from a classifier's decision "
            "stream and re-weight its scores."
        ),
    )
    _add_global_options(parser, for_subcommand=False)
    common = argparse.ArgumentParser(add_help=False)
    _add_global_options(common, for_subcommand=True)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("normalize", parents=[common], help="row-normalize a confusion CSV")
    p.add_argument("confusion", help="confusion CSV (counts or rates)")

    p = sub.add_parser("estimate", parents=[common], help="estimate class priors from a stream")
    p.add_argument("confusion", help="row-normalized confusion CSV")
    p.add_argument("stream", help="decision indices (one per line) or scores CSV")
    p.add_argument(
        "--method",
        choices=tuple(METHOD_FLAGS) + ("all",),
        default="all",
        help="estimator to run (default: all)",
    )
    p.add_argument("--window", type=int, default=None, help="sliding-window length")

    p = sub.add_parser("reweight", parents=[common], help="re-weight a score stream with priors")
    p.add_argument("scores", help="scores CSV")
    p.add_argument("--priors", default=None, help="priors JSON (static re-weighting)")
    p.add_argument(
        "--confusion", default=None,
        help="confusion CSV for live re-estimation instead of --priors",
    )
    p.add_argument(
        "--method",
        choices=tuple(METHOD_FLAGS),
        default=None,
        help="method to pick from the priors JSON, or the live estimator",
    )
    p.add_argument(
        "--reestimate-every", type=int, default=None,
        help="with --confusion: re-estimate priors every N records",
    )
    p.add_argument("--window", type=int, default=None, help="sliding-window length")
    p.add_argument(
        "--lenient", action="store_true",
        help="skip malformed rows with a warning instead of failing",
    )

    p = sub.add_parser("simulate", parents=[common], help="synthesize a deployment stream")
    p.add_argument("scenario", help="scenario JSON with a classifier section")

    p = sub.add_parser("evaluate", parents=[common], help="compare estimators across scenarios")
    p.add_argument(
        "scenario", nargs="?", default=None,
        help="scenario JSON; omit for the built-in 12-scenario suite",
    )
    p.add_argument("--folds", type=int, default=10, help="cross-validation folds")
    p.add_argument("--window", type=int, default=None, help="window for drift scenarios")
    p.add_argument(
        "--reestimate-every", type=int, default=50,
        help="re-estimation cadence for drift scenarios (no validated default exists; "
        "50 is just a starting point)",
    )
    return parser


@contextlib.contextmanager
def _open_output(path: Optional[str]):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fp:
            yield fp


def _note(args, message: str) -> None:
    if not args.quiet:
        print(message, file=sys.stderr)


def _solver_options(args) -> SolverOptions:
    return SolverOptions(seed=args.seed if args.seed is not None else 0)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_normalize(args) -> int:
    conf = fileio.read_confusion_csv(args.confusion)
    with _open_output(args.output) as fp:
        fileio.write_confusion_csv(conf, fp)
    return EXIT_OK


def _ingest_stream(args, conf) -> StreamMonitor:
    monitor = StreamMonitor(conf.catalog, window=args.window)
    if fileio.stream_kind(args.stream) == "decisions":
        for decision in fileio.read_decision_stream(args.stream, conf.k):
            monitor.ingest(decision)
    else:
        catalog, records = fileio.read_score_records(args.stream)
        if catalog != conf.catalog:
            raise ValidationError(
                "scores CSV classes do not match the confusion matrix classes"
            )
        for _, record in records:
            monitor.ingest_scored(record)
    return monitor


def cmd_estimate(args) -> int:
    conf = fileio.read_confusion_csv(args.confusion)
    monitor = _ingest_stream(args, conf)
    hist = monitor.snapshot()

    wanted = list(METHOD_FLAGS.values()) if args.method == "all" else [METHOD_FLAGS[args.method]]
    opts = _solver_options(args)
    estimates, failures, failure_excs = {}, {}, {}

    table = precision_recall(conf)
    producers = {
        "naive": lambda: estimate_naive(hist),
        "precision_recall": lambda: estimate_precision_recall(hist, table),
        "matrix_inverse": lambda: estimate_matrix_inverse(conf, hist),
        "quadratic_program": lambda: estimate_qp(conf, hist, opts),
    }
    for method in wanted:
        try:
            estimates[method] = producers[method]()
        except ConvergenceError as exc:
            message = f"{type(exc).__name__}: {exc}"
            if exc.best_iterate is not None:
                best = ", ".join(fileio.format_float(v) for v in exc.best_iterate)
                message += f" (best iterate: {best})"
            failures[method] = message
            failure_excs[method] = exc
        except PriorAdaptError as exc:
            failures[method] = f"{type(exc).__name__}: {exc}"
            failure_excs[method] = exc

    doc = fileio.priors_document(
        conf.catalog, estimates, failures, total_decisions=hist.total
    )
    with _open_output(args.output) as fp:
        fileio.write_json(doc, fp)

    if estimates:
        return EXIT_OK
    if any(isinstance(e, _SOLVER_ERRORS) for e in failure_excs.values()):
        return EXIT_SOLVER
    return EXIT_VALIDATION


def _reweight_header(catalog) -> str:
    raw = ",".join(f"raw_{l}" for l in catalog.labels)
    norm = ",".join(f"norm_{l}" for l in catalog.labels)
    return f"baseline,adapted,{raw},{norm}\n"


def _reweight_row(record, policy) -> str:
    baseline = decide_baseline(record)
    adapted = decide_adapted(record, policy)
    raw = reweight(record, policy)
    norm = reweight_normalized(record, policy)
    cells = [str(baseline), str(adapted)]
    cells += [fileio.format_float(v) for v in raw]
    cells += [fileio.format_float(v) for v in norm]
    return ",".join(cells) + "\n"


def cmd_reweight(args) -> int:
    if os.path.getsize(args.scores) == 0:
        # An empty stream re-weights to an empty stream.
        with _open_output(args.output) as fp:
            pass
        return EXIT_OK
    if (args.priors is None) == (args.confusion is None):
        raise ValidationError("reweight needs exactly one of --priors or --confusion")

    warn = (lambda msg: _note(args, f"warning: {msg}")) if args.lenient else None
    catalog, records = fileio.read_score_records(args.scores, args.lenient, warn)

    if args.priors is not None:
        method = METHOD_FLAGS.get(args.method) if args.method else None
        values, tag = fileio.read_priors_json(args.priors, catalog, method)
        total = values.sum()
        if not total > 0.0:
            raise ValidationError("priors JSON has no positive mass")
        estimate = PriorEstimate(values / total, method=tag)
        policy = AdaptedPolicy.from_priors(estimate)
        with _open_output(args.output) as fp:
            fp.write(_reweight_header(catalog))
            for _, record in records:
                fp.write(_reweight_row(record, policy))
        return EXIT_OK

    # Live mode: re-estimate from the running histogram every N records.
    if args.reestimate_every is None or args.reestimate_every < 1:
        raise ValidationError("--confusion requires --reestimate-every N (N >= 1)")
    conf = fileio.read_confusion_csv(args.confusion)
    if conf.catalog != catalog:
        raise ValidationError("scores CSV classes do not match the confusion matrix classes")
    method = METHOD_FLAGS.get(args.method or "qp", "quadratic_program")
    opts = _solver_options(args)
    table = precision_recall(conf)

    def reestimate(hist):
        if method == "naive":
            return estimate_naive(hist)
        if method == "precision_recall":
            return estimate_precision_recall(hist, table)
        if method == "matrix_inverse":
            return estimate_matrix_inverse(conf, hist)
        return estimate_qp(conf, hist, opts)

    monitor = StreamMonitor(catalog, window=args.window)
    policy = AdaptedPolicy.from_priors(uniform_estimate(catalog.k))
    with _open_output(args.output) as fp:
        fp.write(_reweight_header(catalog))
        for _, record in records:
            fp.write(_reweight_row(record, policy))
            monitor.ingest_scored(record)
            if monitor.decisions_seen % args.reestimate_every == 0:
                try:
                    policy = AdaptedPolicy.from_priors(reestimate(monitor.snapshot()))
                except PriorAdaptError as exc:
                    _note(args, f"warning: keeping previous priors: {exc}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.output is None:
        raise ValidationError("simulate requires --output PREFIX for its two files")
    spec, clf = fileio.read_scenario_json(args.scenario, seed_override=args.seed)
    if clf is None:
        raise ValidationError("scenario JSON needs a classifier section to simulate")

    scores_path = args.output + ".scores.csv"
    truth_path = args.output + ".truth.csv"
    labels = spec.catalog.labels

    segments = [(0, spec.true_priors)] + [(d.start, d.priors) for d in (spec.drift or ())]
    with open(scores_path, "w", encoding="utf-8", newline="\n") as scores_fp, \
            open(truth_path, "w", encoding="utf-8", newline="\n") as truth_fp:
        scores_fp.write(",".join(f"s_{l}" for l in labels) + "\n")
        truth_fp.write("# true priors per segment; each segment begins at the named row index\n")
        for seg_no, (start, priors) in enumerate(segments):
            nonzero = {labels[i]: float(p) for i, p in enumerate(priors) if p > 0.0}
            truth_fp.write(f"# segment {seg_no} from row {start}: {json.dumps(nonzero)}\n")
        truth_fp.write("index,label,segment\n")
        for index, record, segment in simulate_stream(spec, clf):
            scores_fp.write(",".join(fileio.format_float(v) for v in record.scores) + "\n")
            truth_fp.write(f"{index},{labels[record.true_label]},{segment}\n")
    _note(args, f"wrote {scores_path} and {truth_path}")
    return EXIT_OK


def _best_by_scenario(rows: list[EvaluationRow]) -> dict[str, Optional[str]]:
    best: dict[str, Optional[str]] = {}
    scenarios = {r.scenario for r in rows}
    for scenario in scenarios:
        candidates = {
            r.method: r.accuracy
            for r in rows
            if r.scenario == scenario and r.method in BOLDABLE and r.accuracy is not None
        }
        if not candidates:
            best[scenario] = None
            continue
        top = max(candidates.values())
        best[scenario] = next(m for m in METHOD_ORDER if candidates.get(m) == top)
    return best


def _scenario_order(rows: list[EvaluationRow]) -> list[str]:
    seen: dict[str, None] = {}
    for r in rows:
        seen.setdefault(r.scenario, None)
    return list(seen)


def _cell(row: EvaluationRow) -> str:
    if row.accuracy is None:
        return "N/A"
    text = f"{row.accuracy:.3f}"
    if row.folds > 1 and row.accuracy_std is not None:
        text += f"±{row.accuracy_std:.3f}"
    return text


def render_markdown(rows: list[EvaluationRow]) -> str:
    scenarios = _scenario_order(rows)
    best = _best_by_scenario(rows)
    by = {(r.scenario, r.method): r for r in rows}
    methods = [m for m in METHOD_ORDER if any((s, m) in by for s in scenarios)]
    lines = ["| Method | " + " | ".join(scenarios) + " |"]
    lines.append("| --- |" + " --- |" * len(scenarios))
    for method in methods:
        cells = []
        for scenario in scenarios:
            row = by.get((scenario, method))
            if row is None:
                cells.append("N/A")
                continue
            text = _cell(row)
            if best.get(scenario) == method and row.accuracy is not None:
                text = f"**{text}**"
            cells.append(text)
        lines.append(f"| {DISPLAY_NAMES[method]} | " + " | ".join(cells) + " |")
    if any("/segment-" in s for s in scenarios):
        lines.append("")
        lines.append(
            "Per-segment rows come from the windowed drift extension, "
            "not the validated batch protocol."
        )
    return "\n".join(lines) + "\n"


def render_csv(rows: list[EvaluationRow]) -> str:
    best = _best_by_scenario(rows)
    lines = ["scenario,method,accuracy_mean,accuracy_std,folds,prior_l1_error,best,error"]
    for r in rows:
        cells = [
            r.scenario,
            r.method,
            fileio.format_float(r.accuracy) if r.accuracy is not None else "",
            fileio.format_float(r.accuracy_std) if r.accuracy_std is not None else "",
            str(r.folds),
            fileio.format_float(r.prior_l1_error) if r.prior_l1_error is not None else "",
            "1" if best.get(r.scenario) == r.method else "0",
            (r.error or "").replace(",", ";"),
        ]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def render_json(rows: list[EvaluationRow]) -> str:
    best = _best_by_scenario(rows)
    doc = {
        "scenarios": _scenario_order(rows),
        "best": best,
        "rows": [
            {
                "scenario": r.scenario,
                "method": r.method,
                "accuracy_mean": r.accuracy,
                "accuracy_std": r.accuracy_std,
                "folds": r.folds,
                "prior_l1_error": r.prior_l1_error,
                "error": r.error,
            }
            for r in rows
        ],
    }
    return json.dumps(doc, indent=2) + "\n"


def _threads() -> int:
    raw = os.environ.get("PRIOR_ADAPT_THREADS", "").strip()
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def cmd_evaluate(args) -> int:
    if args.folds < 2:
        raise ValidationError(f"--folds must be >= 2, got {args.folds}")
    if args.scenario is not None:
        spec, clf = fileio.read_scenario_json(args.scenario, seed_override=args.seed)
        if clf is None:
            raise ValidationError("scenario JSON needs a classifier section to evaluate")
        if spec.drift:
            rows = run_drift_scenario(
                spec, clf,
                window=args.window if args.window is not None else spec.transfer_size,
                reestimate_every=args.reestimate_every,
                solver_opts=_solver_options(args),
            )
        else:
            rows = cross_validate(
                spec, clf, folds=args.folds, solver_opts=_solver_options(args)
            )
    else:
        suite = default_suite(
            seed=args.seed if args.seed is not None else DEFAULT_SUITE_SEED
        )
        rows = evaluate_suite(
            suite,
            folds=args.folds,
            solver_opts=_solver_options(args),
            threads=_threads(),
            isolate_failures=True,
        )
    renderer = {"markdown": render_markdown, "csv": render_csv, "json": render_json}
    with _open_output(args.output) as fp:
        fp.write(renderer[args.format](rows))
    if all(r.accuracy is None for r in rows):
        return EXIT_SOLVER
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

_COMMANDS = {
    "normalize": cmd_normalize,
    "estimate": cmd_estimate,
    "reweight": cmd_reweight,
    "simulate": cmd_simulate,
    "evaluate": cmd_evaluate,
}


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except _SOLVER_ERRORS as exc:
        message = f"error: {type(exc).__name__}: {exc}"
        if isinstance(exc, ConvergenceError) and exc.best_iterate is not None:
            best = ", ".join(fileio.format_float(v) for v in exc.best_iterate)
            message += f"\nbest iterate: {best}"
        print(message, file=sys.stderr)
        return EXIT_SOLVER
    except (ValidationError, InsufficientDataError, PriorAdaptError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
