"""Command-line entry point.

    simflock run STUDY.json [--max-concurrent N] [--seed N]
                            [--log-to-file | --no-log-to-file]
                            [--workers host:port[,host:port...]]
    simflock info {workflows|search|scheduler|distributions}
    simflock report OUT_DIR
    simflock worker --listen HOST:PORT --slots N -- COMMAND [ARGS...]
    simflock serve [--host HOST] [--port PORT]

Exit codes for `run`: 0 when the study completes its budget (individual
trial failures live in the report), 2 for an invalid or unreadable study
file, 3 when the worker pool is exhausted mid-study.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .errors import InvalidSpecError, PoolExhaustedError

INFO_TOPICS = ("workflows", "search", "scheduler", "distributions")

_INFO = {
    "workflows": f"""\
simflock {__version__} workflows

  param_est   Tune simulation parameters to match target outputs.
              Requires: targets (name -> value), rule (least_squares default,
              gaussian_mle with per-target sigmas), budget.
              Optional: search (random default; grid / gp_bo).
  bayes_opt   Minimize or maximize one output metric with Gaussian-process
              Bayesian optimization (search is fixed to gp_bo).
              Requires: objective_metric, mode (min|max), budget.
  opt         Same interface as bayes_opt with a pluggable search algorithm.
              Requires: objective_metric, mode, budget, search.
  doe         Run a structured ensemble with no objective.
              Requires: design (lhs / sobol / full_factorial).

Common fields: space, simulator, out_dir, max_concurrent (default 1),
seed (default 0), auto_run (default true), log_to_file (default false),
scheduler (fifo default), retries (default 0), timeout_s (default 300),
constants (extra config entries sent to every trial, e.g. OUT_DIR).
""",
    "search": f"""\
simflock {__version__} search algorithms

  {{"search": "random"}}
      Independent draw per parameter; seed defaults to the study seed.
  {{"search": "grid"}}
      Visits the full-factorial enumeration once; requires every parameter
      to be grid/choice/randint. Budget clamps to the grid size.
  {{"search": "gp_bo", "n_initial": 8, "candidates_per_step": 512}}
      Gaussian-process Bayesian optimization with expected improvement,
      screened over Sobol candidate points. First n_initial proposals come
      from the Sobol sequence (n_initial >= 2).
""",
    "scheduler": f"""\
simflock {__version__} trial schedulers

  {{"scheduler": "fifo"}}
      Every trial runs to completion (default).
  {{"scheduler": "asha", "metric": NAME, "mode": "min", "grace": 1,
    "max_t": 8, "reduction": 2}}
      Asynchronous successive halving over intermediate reports: at each
      rung budget grace * reduction^k, a trial continues only if its metric
      is within the best ceil(m/reduction) recorded at that rung so far.
      Pruned trials get terminal status "pruned".
""",
    "distributions": f"""\
simflock {__version__} parameter distributions

  {{"type": "uniform", "lo": 0.4, "hi": 1.2}}      uniform on [lo, hi)
  {{"type": "loguniform", "lo": 1e2, "hi": 1e6}}   uniform in ln x; lo > 0
  {{"type": "randint", "lo": 0, "hi": 4}}          integers in [lo, hi)
  {{"type": "randn", "mean": 0, "stddev": 1}}      normal (8-sigma tail guard)
  {{"type": "choice", "values": [...]}}            sampled from the list
  {{"type": "grid", "values": [...]}}              enumerated exhaustively by
                                                 grid search / full factorial
""",
}


def cmd_run(args: argparse.Namespace) -> int:
    from .studyfile import load_study_file, lower_study
    from .workflows import build_and_run

    try:
        model = load_study_file(args.study_file)
    except OSError as exc:
        print(f"error: cannot read study file: {exc}", file=sys.stderr)
        return 2
    except InvalidSpecError as exc:
        _print_reasons(exc)
        return 2

    updates = {}
    if args.max_concurrent is not None:
        updates["max_concurrent"] = args.max_concurrent
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.log_to_file is not None:
        updates["log_to_file"] = args.log_to_file
    if updates:
        model = model.model_copy(update=updates)

    workers = None
    if args.workers:
        workers = [w.strip() for w in args.workers.split(",") if w.strip()]
    elif os.environ.get("SIMFLOCK_WORKERS"):
        workers = [w.strip() for w in os.environ["SIMFLOCK_WORKERS"].split(",") if w.strip()]

    try:
        loaded = lower_study(model, worker_override=workers)
        report = build_and_run(loaded.spec, loaded.pool, out_dir=loaded.out_dir)
    except InvalidSpecError as exc:
        _print_reasons(exc)
        return 2
    except PoolExhaustedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3

    counts = ", ".join(f"{k}={v}" for k, v in report.status_counts().items() if v)
    print(f"study complete: {len(report.records)} trials ({counts})")
    if report.best_trial is not None:
        print(f"best trial: {report.best_trial.trial_id} "
              f"objective={report.best_objective:.6g}")
    print(f"report written to {loaded.out_dir / 'report.json'}")
    return 0


def _print_reasons(exc: InvalidSpecError) -> None:
    print("error: invalid study spec:", file=sys.stderr)
    for reason in exc.reasons:
        print(f"  - {reason}", file=sys.stderr)


def cmd_info(args: argparse.Namespace) -> int:
    topic = args.topic
    if topic not in INFO_TOPICS:
        print(f"unknown topic {topic!r}; choose from: {', '.join(INFO_TOPICS)}",
              file=sys.stderr)
        return 2
    print(_INFO[topic], end="")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    path = Path(args.out_dir) / "report.json"
    try:
        data = json.loads(path.read_text())
        summary = data["summary"]
        trials = data["trials"]
    except OSError as exc:
        print(f"error: cannot read {path}: {exc}", file=sys.stderr)
        return 1
    except (json.JSONDecodeError, KeyError) as exc:
        print(f"error: corrupt report at {path}: {exc}", file=sys.stderr)
        return 1

    print(f"{summary['workflow']} study, seed {summary['seed']}: "
          f"{summary['n_trials']} trials")
    counts = ", ".join(f"{k}={v}" for k, v in summary["status_counts"].items() if v)
    print(f"statuses: {counts}")
    print(f"total wall time: {summary['total_wall_time']:.3f}s "
          f"(peak concurrency {summary['peak_concurrent']})")
    if summary.get("best_trial_id") is not None:
        line = f"best trial: {summary['best_trial_id']} objective={summary['best_objective']:.6g}"
        if summary.get("best_rmse") is not None:
            line += f" rmse={summary['best_rmse']:.6g}"
        print(line)
        best = next(t for t in trials if t["trial_id"] == summary["best_trial_id"])
        print(f"best config: {json.dumps(best['config'])}")
    else:
        print("best trial: none")
    print(f"best-so-far curve: {Path(args.out_dir) / 'best_so_far.csv'}")
    return 0


def cmd_worker(args: argparse.Namespace) -> int:
    from .worker import serve_forever

    host, _, port = args.listen.rpartition(":")
    if not host or not port.isdigit():
        print(f"error: --listen must be HOST:PORT, got {args.listen!r}", file=sys.stderr)
        return 2
    sim_command = list(args.sim_command)
    if sim_command and sim_command[0] == "--":
        sim_command = sim_command[1:]
    if not sim_command:
        print("error: worker needs a simulator command after --", file=sys.stderr)
        return 2
    print(f"serving {' '.join(sim_command)} on {host}:{port}")
    serve_forever(host, int(port), tuple(sim_command), slots=args.slots)
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="simflock",
                                     description="simulation-study orchestrator")
    parser.add_argument("--version", action="version", version=f"simflock {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a study from a spec file")
    p_run.add_argument("study_file")
    p_run.add_argument("--max-concurrent", type=int, default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--log-to-file", action=argparse.BooleanOptionalAction, default=None)
    p_run.add_argument("--workers", default=None,
                       help="comma-separated host:port list overriding the file")
    p_run.set_defaults(func=cmd_run)

    p_info = sub.add_parser("info", help="describe available options")
    p_info.add_argument("topic", nargs="?", default="workflows")
    p_info.set_defaults(func=cmd_info)

    p_report = sub.add_parser("report", help="summarize a finished study directory")
    p_report.add_argument("out_dir")
    p_report.set_defaults(func=cmd_report)

    p_worker = sub.add_parser("worker", help="host a simulator for remote executors")
    p_worker.add_argument("--listen", required=True, help="HOST:PORT to bind")
    p_worker.add_argument("--slots", type=int, default=None)
    p_worker.add_argument("sim_command", nargs=argparse.REMAINDER,
                          help="simulator command (prefix with --)")
    p_worker.set_defaults(func=cmd_worker)

    p_serve = sub.add_parser("serve", help="start the HTTP service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> None:
    args = build_parser().parse_args(argv)
    sys.exit(args.func(args))


if __name__ == "__main__":
    main()
