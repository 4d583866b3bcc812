"""Single entry point: serve the ingest service, run simulations, process
offline window files, run experiments, export datasets.

Exit codes: 0 success; 2 usage error (argparse); 3 invalid input data;
4 server unreachable; 1 any other runtime failure.  Every file-producing
subcommand writes a ``<output>.manifest.json`` beside its output recording
the flags, seeds and package version that produced it.
"""

from __future__ import annotations

import argparse
import json
import sys
import threading
from datetime import datetime, timezone
from pathlib import Path

import httpx

from . import __version__
from .errors import (DatasetError, DegenerateTaskError, InsufficientDataError,
                     InvalidWindowError, StressmonError)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2
EXIT_BAD_INPUT = 3
EXIT_UNREACHABLE = 4


def write_manifest(output_path, args: argparse.Namespace, extra=None) -> None:
    manifest = {
        "tool": "stressmon",
        "version": __version__,
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "command": args.command,
        "flags": {k: v for k, v in vars(args).items()
                  if k not in ("func", "command") and v is not None},
    }
    if extra:
        manifest.update(extra)
    path = Path(str(output_path) + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, default=str) + "\n")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stressmon",
        description="Desk-scale stress monitoring: PPG pipeline, EMA label "
                    "queries, classifiers and simulation.")
    parser.add_argument("--log-level", default="info",
                        choices=["debug", "info", "warning", "error"])
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the ingest service")
    serve.add_argument("--config", help="JSON config file")
    serve.add_argument("--data-dir", help="override data directory")
    serve.add_argument("--host", help="listen host")
    serve.add_argument("--port", type=int, help="listen port")
    serve.set_defaults(func=cmd_serve)

    sim = sub.add_parser("simulate", help="stream synthetic subjects at a server")
    sim.add_argument("--server", required=True, help="base URL, e.g. http://127.0.0.1:8430")
    sim.add_argument("--days", type=float, default=1.0)
    sim.add_argument("--subjects", type=int, default=1)
    sim.add_argument("--seed", type=int, required=True)
    sim.add_argument("--accel", type=float, default=0.0,
                     help="simulated-to-wall time factor; 0 = free-running")
    sim.add_argument("--profiles", help="JSON profile file (overrides --subjects)")
    sim.add_argument("--report-dir", default="./sim-reports")
    sim.add_argument("--start-ms", type=int, default=1_700_000_000_000)
    sim.add_argument("--no-auto-respond", action="store_true")
    sim.set_defaults(func=cmd_simulate)

    proc = sub.add_parser("process", help="offline window CSVs -> feature CSV")
    proc.add_argument("--in", dest="input", required=True,
                      help="window CSV file or directory of them")
    proc.add_argument("--out", required=True, help="feature CSV to write")
    proc.set_defaults(func=cmd_process)

    exp = sub.add_parser("experiment", help="run an evaluation protocol")
    exp_sub = exp.add_subparsers(dest="experiment", required=True)

    def common_experiment_flags(p):
        p.add_argument("--data", required=True, help="labeled dataset CSV")
        p.add_argument("--task", default="T4", choices=["T1", "T2", "T3", "T4"])
        p.add_argument("--model", default="rf", choices=["rf", "knn"])
        p.add_argument("--seed", type=int, required=True)
        p.add_argument("--trees", type=int, default=100)
        p.add_argument("--min-leaf", type=int, default=1)
        p.add_argument("--knn-k", type=int, default=5)
        p.add_argument("--out", help="write a machine-readable CSV report here")

    crossval = exp_sub.add_parser("crossval", help="stratified K-fold macro-F1")
    common_experiment_flags(crossval)
    crossval.add_argument("--k", type=int, default=5, help="number of folds")
    crossval.set_defaults(func=cmd_crossval)

    pers = exp_sub.add_parser("personalization",
                              help="before/after adding half the held subject")
    common_experiment_flags(pers)
    pers.add_argument("--subject", required=True, help="held-out subject id")
    pers.set_defaults(func=cmd_personalization)

    curve = exp_sub.add_parser("learning-curve",
                               help="macro-F1 vs training size, repeated")
    common_experiment_flags(curve)
    curve.add_argument("--subject", help="restrict to one subject's rows")
    curve.add_argument("--sizes", default="100:500:50",
                       help="train sizes as start:stop:step (inclusive)")
    curve.add_argument("--test-size", type=int, default=100)
    curve.add_argument("--repeats", type=int, default=100)
    curve.set_defaults(func=cmd_learning_curve)

    export = sub.add_parser("export", help="download a dataset CSV from a server")
    export.add_argument("--server", required=True)
    export.add_argument("--kind", required=True, choices=["labeled", "unlabeled"])
    export.add_argument("--out", required=True)
    export.add_argument("--subject")
    export.set_defaults(func=cmd_export)

    return parser


def classifier_spec(args):
    from .models import ClassifierSpec
    if args.model == "knn":
        return ClassifierSpec(kind="knn", k=args.knn_k, seed=args.seed)
    return ClassifierSpec(kind="random_forest", n_trees=args.trees,
                          min_leaf=args.min_leaf, seed=args.seed)


def cmd_serve(args) -> int:
    import uvicorn

    from .api import create_app
    from .service import ServiceConfig, load_config

    config = load_config(args.config)
    overrides = {}
    if args.data_dir:
        overrides["data_dir"] = args.data_dir
    if args.host:
        overrides["listen_host"] = args.host
    if args.port:
        overrides["listen_port"] = args.port
    if overrides:
        config = ServiceConfig(**{**config.__dict__, **overrides})
    app = create_app(config=config)
    uvicorn.run(app, host=config.listen_host, port=config.listen_port,
                log_level=args.log_level)
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .simulator import (ServiceClient, SimClock, load_profiles, make_cohort,
                            run_simulation)

    try:
        health = httpx.get(f"{args.server.rstrip('/')}/healthz", timeout=5.0)
        health.raise_for_status()
    except Exception as exc:
        print(f"server {args.server} unreachable: {exc}", file=sys.stderr)
        return EXIT_UNREACHABLE

    if args.profiles:
        profiles = load_profiles(args.profiles)
    else:
        profiles = make_cohort(args.subjects, args.seed,
                               days=max(1, int(args.days)))
    duration_ms = int(args.days * 86_400_000)
    report_dir = Path(args.report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)

    reports = {}
    errors = []

    def run_one(index, profile):
        try:
            with httpx.Client(timeout=30.0) as http:
                client = ServiceClient(http, base_url=args.server)
                reports[profile.subject_id] = run_simulation(
                    profile, duration_ms, client,
                    seed=args.seed * 10_007 + index,
                    sim_origin_ms=args.start_ms,
                    clock=SimClock(acceleration=args.accel),
                    auto_respond=not args.no_auto_respond)
        except Exception as exc:  # surfaced after join
            errors.append((profile.subject_id, exc))

    threads = [threading.Thread(target=run_one, args=(i, p), daemon=True)
               for i, p in enumerate(profiles)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        for subject, exc in errors:
            print(f"{subject}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    for subject_id, report in sorted(reports.items()):
        out = report_dir / f"{subject_id}.csv"
        out.write_text(report.to_csv())
        write_manifest(out, args, extra={"subject": subject_id})
        delivered = sum(1 for o in report.outcomes if o.accepted)
        print(f"{subject_id}: {len(report.outcomes)} windows, {delivered} delivered, "
              f"{report.responses_submitted} responses, "
              f"{report.delivery_failures} failures")
    return EXIT_OK


def cmd_process(args) -> int:
    from .errors import InsufficientBeatsError, InsufficientDataError
    from .hrv import write_features_csv
    from .pipeline import WindowPipeline
    from .windows import read_windows_path

    windows = read_windows_path(args.input)
    if not windows:
        print(f"no windows found in {args.input}", file=sys.stderr)
        return EXIT_BAD_INPUT
    pipeline = WindowPipeline()
    rows = []
    unusable = 0
    for window in windows:
        try:
            window.validate(expected_duration_s=None)
            rows.append((window.subject_id, window.start_time_ms,
                         pipeline.features(window)))
        except (InsufficientBeatsError, InsufficientDataError):
            unusable += 1
    write_features_csv(rows, args.out)
    write_manifest(args.out, args, extra={"windows": len(windows),
                                          "usable": len(rows),
                                          "unusable": unusable})
    print(f"{len(rows)} feature rows written to {args.out} "
          f"({unusable} unusable windows skipped)")
    return EXIT_OK


def _load_labeled(args):
    from .evaluation import read_labeled_csv
    return read_labeled_csv(args.data)


def cmd_crossval(args) -> int:
    from .evaluation import BINARY_TASKS, EvalConfig, run_crossval

    dataset = _load_labeled(args)
    report = run_crossval(dataset, BINARY_TASKS[args.task], classifier_spec(args),
                          EvalConfig(folds=args.k, seed=args.seed))
    print(f"{args.task} {report.kind} ({report.n_positive} pos / "
          f"{report.n_negative} neg): {report.format_row()}")
    if args.out:
        Path(args.out).write_text("\n".join(report.csv_rows()) + "\n")
        write_manifest(args.out, args)
    return EXIT_OK


def cmd_personalization(args) -> int:
    from .evaluation import BINARY_TASKS, run_personalization

    dataset = _load_labeled(args)
    result = run_personalization(dataset, args.subject, BINARY_TASKS[args.task],
                                 classifier_spec(args), seed=args.seed)
    print(f"{args.subject} {args.task}: before {result.before:.2f} -> "
          f"after {result.after:.2f}")
    if args.out:
        Path(args.out).write_text(
            "subject,task,model,before,after\n"
            f"{args.subject},{args.task},{args.model},"
            f"{result.before:.6f},{result.after:.6f}\n")
        write_manifest(args.out, args)
    return EXIT_OK


def cmd_learning_curve(args) -> int:
    from .evaluation import BINARY_TASKS, map_labels, run_learning_curve

    dataset = _load_labeled(args)
    if args.subject:
        mask = dataset.subjects == args.subject
        if not mask.any():
            print(f"subject {args.subject!r} not in dataset", file=sys.stderr)
            return EXIT_BAD_INPUT
        dataset = dataset.select(mask)
    binary = map_labels(dataset, BINARY_TASKS[args.task])
    start, stop, step = (int(x) for x in args.sizes.split(":"))
    sizes = list(range(start, stop + 1, step))
    points = run_learning_curve(binary.X, binary.y, sizes, classifier_spec(args),
                                test_size=args.test_size, repeats=args.repeats,
                                seed=args.seed)
    for point in points:
        print(f"train={point.train_size:5d}  macro-F1 {point.mean:.3f} "
              f"± {point.std:.3f}")
    if args.out:
        lines = ["train_size,mean_macro_f1,std_macro_f1"]
        lines += [f"{p.train_size},{p.mean:.6f},{p.std:.6f}" for p in points]
        Path(args.out).write_text("\n".join(lines) + "\n")
        write_manifest(args.out, args)
    return EXIT_OK


def cmd_export(args) -> int:
    params = {"kind": args.kind}
    if args.subject:
        params["subject"] = args.subject
    try:
        response = httpx.get(f"{args.server.rstrip('/')}/api/v1/dataset/export",
                             params=params, timeout=60.0)
    except Exception as exc:
        print(f"server {args.server} unreachable: {exc}", file=sys.stderr)
        return EXIT_UNREACHABLE
    if response.status_code != 200:
        print(f"export failed: {response.status_code} {response.text}",
              file=sys.stderr)
        return EXIT_RUNTIME
    Path(args.out).write_text(response.text)
    write_manifest(args.out, args)
    print(f"wrote {args.out} ({len(response.text.splitlines()) - 1} rows)")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DatasetError, DegenerateTaskError, InsufficientDataError,
            InvalidWindowError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except StressmonError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (httpx.HTTPError, ConnectionError) as exc:
        print(f"connection error: {exc}", file=sys.stderr)
        return EXIT_UNREACHABLE


if __name__ == "__main__":
    sys.exit(main())
