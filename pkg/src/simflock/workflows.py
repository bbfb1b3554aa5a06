"""The four study workflows: parameter estimation, Bayesian optimization,
general optimization, and design of experiments.

A study is one driver loop: a (lazy) stream of trial specs feeds the
executor, completed results flow back through a single event consumer that
scores trials, maintains search history, and feeds the trial scheduler.
Failed and rejected trials consume budget but never enter search history.
"""

from __future__ import annotations

import io
import math
import sys
import time
from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import Path
from typing import Callable, Iterator, Union

import numpy as np

from .designs import FullFactorial, SamplingDesign, design_size, generate_design
from .errors import (
    InvalidSigmaError,
    InvalidSpecError,
    LifecycleError,
    MissingOutputError,
)
from .executor import (
    AttemptEnded,
    DEFAULT_TIMEOUT,
    Resources,
    TrialEvent,
    TrialFinished,
    TrialRecord,
    TrialReport,
    TrialSpec,
    TrialStarted,
    TrialStatus,
    WorkerEndpoint,
    derive_trial_seed,
    run_trials,
)
from .params import ParamSpace, ParamValue, validate_space
from .scheduling import Decision, Fifo, SchedulerKind, make_scheduler
from .search import (
    GpBayesOpt,
    GridSearch,
    Observation,
    Proposal,
    RandomSearch,
    SearchAlg,
    suggest,
)

WORKFLOWS = ("param_est", "bayes_opt", "opt", "doe")

LOG_PREFIX = "simflock_log"


@dataclass(frozen=True)
class LeastSquares:
    """Weighted sum of squared deviations from target outputs."""

    targets: dict[str, float]
    weights: dict[str, float] | None = None

    def check(self) -> str | None:
        if not self.targets:
            return "targets must be nonempty"
        if self.weights:
            extra = set(self.weights) - set(self.targets)
            if extra:
                return f"weights for unknown targets: {sorted(extra)}"
            if any(w <= 0 for w in self.weights.values()):
                return "weights must be positive"
        return None


@dataclass(frozen=True)
class GaussianMLE:
    """Negative log-likelihood under independent Gaussian observation noise."""

    targets: dict[str, float]
    sigmas: dict[str, float]

    def check(self) -> str | None:
        if not self.targets:
            return "targets must be nonempty"
        extra = set(self.sigmas) - set(self.targets)
        if extra:
            return f"sigmas for unknown targets: {sorted(extra)}"
        missing = set(self.targets) - set(self.sigmas)
        if missing:
            return f"sigmas missing for targets: {sorted(missing)}"
        if any(s <= 0 for s in self.sigmas.values()):
            return "sigmas must be positive"
        return None


EstimationRule = Union[LeastSquares, GaussianMLE]


def score_least_squares(
    rule: LeastSquares, metrics: dict[str, float]
) -> tuple[float, float | None]:
    """Returns (J, rmse); rmse only under unit weights."""
    j = 0.0
    unit_weights = True
    for name, target in rule.targets.items():
        if name not in metrics:
            raise MissingOutputError(name)
        w = (rule.weights or {}).get(name, 1.0)
        if w != 1.0:
            unit_weights = False
        j += w * (metrics[name] - target) ** 2
    rmse = math.sqrt(j / len(rule.targets)) if unit_weights else None
    return j, rmse


def score_gaussian_mle(rule: GaussianMLE, metrics: dict[str, float]) -> float:
    nll = 0.0
    for name, target in rule.targets.items():
        if name not in metrics:
            raise MissingOutputError(name)
        sigma = rule.sigmas[name]
        if sigma <= 0:
            raise InvalidSigmaError(f"sigma for {name!r} must be positive")
        nll += (metrics[name] - target) ** 2 / (2.0 * sigma**2) + math.log(
            sigma * math.sqrt(2.0 * math.pi)
        )
    return nll


@dataclass
class StudySpec:
    """Declarative description of one study."""

    workflow: str
    space: ParamSpace
    budget: int | None = None  # derived from the design for DoE
    max_concurrent: int = 1
    seed: int = 0
    auto_run: bool = True
    log_to_file: bool = False
    rule: EstimationRule | None = None  # param_est
    mode: str = "min"  # bayes_opt / opt
    objective_metric: str | None = None  # bayes_opt / opt
    search: SearchAlg | None = None  # opt (pluggable); param_est (optional)
    design: SamplingDesign | None = None  # doe
    scheduler: SchedulerKind = field(default_factory=Fifo)
    retries: int = 0
    timeout: float = DEFAULT_TIMEOUT
    resources: Resources = field(default_factory=Resources)
    constants: dict[str, ParamValue] = field(default_factory=dict)


def validate_spec(spec: StudySpec) -> list[str]:
    """Every violation found, not just the first."""
    reasons: list[str] = []
    if spec.workflow not in WORKFLOWS:
        reasons.append(f"unknown workflow {spec.workflow!r}; expected one of {WORKFLOWS}")
        return reasons
    if len(spec.space) == 0:
        reasons.append("parameter space is empty")
    try:
        validate_space(spec.space)
    except Exception as exc:
        reasons.append(str(exc))
    if spec.max_concurrent < 1:
        reasons.append("max_concurrent must be >= 1")
    if spec.retries < 0:
        reasons.append("retries must be >= 0")
    if spec.timeout <= 0:
        reasons.append("timeout must be positive")
    if spec.mode not in ("min", "max"):
        reasons.append(f"mode must be 'min' or 'max', got {spec.mode!r}")
    if hasattr(spec.scheduler, "check"):
        bad = spec.scheduler.check()
        if bad:
            reasons.append(f"scheduler: {bad}")

    if spec.workflow == "doe":
        if spec.design is None:
            reasons.append("doe requires a sampling design")
        else:
            try:
                design_size(spec.design, spec.space)
            except Exception as exc:
                reasons.append(f"design: {exc}")
    else:
        if spec.budget is None or spec.budget < 1:
            reasons.append("budget must be >= 1")

    if spec.workflow == "param_est":
        if spec.rule is None:
            reasons.append("param_est requires an estimation rule")
        else:
            bad = spec.rule.check()
            if bad:
                reasons.append(f"rule: {bad}")
    if spec.workflow in ("bayes_opt", "opt"):
        if not spec.objective_metric:
            reasons.append(f"{spec.workflow} requires objective_metric")
    if spec.workflow == "bayes_opt" and spec.search is not None:
        if not isinstance(spec.search, GpBayesOpt):
            reasons.append("bayes_opt search is fixed to gp_bo and cannot be overridden")
    if isinstance(spec.search, GpBayesOpt):
        bad = spec.search.check()
        if bad:
            reasons.append(f"search: {bad}")
    return reasons


@dataclass
class StudyReport:
    workflow: str
    seed: int
    records: list[TrialRecord]
    mode: str | None = None
    objectives: list[float | None] | None = None  # submission order
    rmse: list[float | None] | None = None  # param_est only
    best_so_far: list[float | None] | None = None
    best_trial: TrialRecord | None = None
    best_objective: float | None = None
    best_rmse: float | None = None
    total_wall_time: float = 0.0
    peak_concurrent: int = 0
    warnings: list[str] = field(default_factory=list)
    log_path: Path | None = None
    out_dir: Path | None = None

    def status_counts(self) -> dict[str, int]:
        counts = {status.value: 0 for status in TrialStatus}
        for record in self.records:
            counts[record.status.value] += 1
        return counts

    def to_json_dict(self) -> dict:
        trials = []
        for i, record in enumerate(self.records):
            entry = {
                "trial_id": record.trial_id,
                "config": record.config,
                "status": record.status.value,
                "metrics": record.metrics,
                "wall_time": record.wall_time,
                "attempts": record.attempts,
                "error": record.error,
            }
            if self.objectives is not None:
                entry["objective"] = self.objectives[i]
            if self.rmse is not None:
                entry["rmse"] = self.rmse[i]
            trials.append(entry)
        summary = {
            "workflow": self.workflow,
            "seed": self.seed,
            "mode": self.mode,
            "n_trials": len(self.records),
            "status_counts": self.status_counts(),
            "best_trial_id": self.best_trial.trial_id if self.best_trial else None,
            "best_objective": self.best_objective,
            "best_rmse": self.best_rmse,
            "total_wall_time": self.total_wall_time,
            "peak_concurrent": self.peak_concurrent,
            "warnings": self.warnings,
            "log_path": str(self.log_path) if self.log_path else None,
        }
        return {"summary": summary, "trials": trials}


class _Driver:
    """Shared study loop; one instance per run, single-threaded callbacks."""

    def __init__(
        self,
        spec: StudySpec,
        pool: list[WorkerEndpoint],
        on_event: Callable[[TrialEvent], None] | None = None,
    ) -> None:
        self.spec = spec
        self.pool = pool
        self.outer_event = on_event
        self.scheduler = make_scheduler(spec.scheduler)
        self.history: list[Observation] = []
        self.issued: dict[int, Proposal] = {}  # trial_id -> proposal, issue order
        self.scored: set[int] = set()  # trial_ids that made it into history
        self.objectives: dict[int, float] = {}
        self.rmse: dict[int, float | None] = {}
        self.search_cache: dict = {}
        self.running = 0
        self.peak = 0
        self.warnings: list[str] = []

    # -- scoring ----------------------------------------------------------

    def score(self, record: TrialRecord) -> float | None:
        spec = self.spec
        if spec.workflow == "doe":
            return None
        if record.status is not TrialStatus.COMPLETED:
            return None
        try:
            if spec.workflow == "param_est":
                if isinstance(spec.rule, LeastSquares):
                    j, rmse = score_least_squares(spec.rule, record.metrics)
                    self.rmse[record.trial_id] = rmse
                    return j
                nll = score_gaussian_mle(spec.rule, record.metrics)
                return nll
            metric = spec.objective_metric
            if metric not in record.metrics:
                raise MissingOutputError(metric)
            return float(record.metrics[metric])
        except (MissingOutputError, InvalidSigmaError) as exc:
            record.status = TrialStatus.FAILED
            record.error = str(exc)
            return None

    def objective_mode(self) -> str:
        return "min" if self.spec.workflow == "param_est" else self.spec.mode

    # -- event consumption --------------------------------------------------

    def consume(self, event: TrialEvent) -> Decision | None:
        decision: Decision | None = None
        if isinstance(event, TrialStarted):
            self.running += 1
            self.peak = max(self.peak, self.running)
            if event.attempt == 1:
                self.scheduler.on_start(event.trial_id)
        elif isinstance(event, AttemptEnded):
            self.running -= 1
        elif isinstance(event, TrialReport):
            if self.scheduler.is_live(event.trial_id):
                decision = self.scheduler.on_report(event.trial_id, event.step, event.metrics)
        elif isinstance(event, TrialFinished):
            record = event.record
            if self.scheduler.is_live(record.trial_id):
                self.scheduler.on_complete(record.trial_id, record.metrics)
            objective = self.score(record)
            if objective is not None and math.isfinite(objective):
                self.objectives[record.trial_id] = objective
                self.scored.add(record.trial_id)
                proposal = self.issued.get(record.trial_id)
                self.history.append(
                    Observation(
                        config=record.config,
                        unit_point=proposal.unit_point if proposal else
                        tuple([0.0] * len(self.spec.space)),
                        objective=objective,
                        trial_id=record.trial_id,
                    )
                )
        if self.outer_event is not None:
            self.outer_event(event)
        return decision

    # -- spec streams -------------------------------------------------------

    def effective_budget(self) -> int:
        spec = self.spec
        if spec.workflow == "doe":
            return design_size(spec.design, spec.space)
        budget = spec.budget
        search = self.search_alg()
        if isinstance(search, GridSearch):
            budget = min(budget, design_size(FullFactorial(), spec.space))
        return budget

    def search_alg(self) -> SearchAlg | None:
        spec = self.spec
        if spec.workflow == "doe":
            return None
        if spec.workflow == "bayes_opt":
            return spec.search or GpBayesOpt(seed=spec.seed)
        if spec.workflow == "opt":
            return spec.search or RandomSearch(seed=spec.seed)
        return spec.search or RandomSearch(seed=spec.seed)  # param_est default

    def make_trial_spec(self, trial_id: int, config: dict[str, ParamValue]) -> TrialSpec:
        return TrialSpec(
            trial_id=trial_id,
            config=config,
            seed=derive_trial_seed(self.spec.seed, trial_id),
            resources=self.spec.resources,
            report_steps=self.scheduler.report_steps,
            wire_extras=dict(self.spec.constants),
        )

    def spec_stream(self) -> Iterator[TrialSpec]:
        spec = self.spec
        if spec.workflow == "doe":
            rng = np.random.default_rng((spec.seed, 0xD0E))
            configs = generate_design(spec.design, spec.space, rng)
            for trial_id, config in enumerate(configs):
                yield self.make_trial_spec(trial_id, config)
            return
        search = self.search_alg()
        mode = self.objective_mode()
        for trial_id in range(self.effective_budget()):
            # pending = everything issued that never became a scored
            # observation (in-flight plus failed/rejected/pruned), so the
            # proposal stream index equals the issue count
            pending = [p for tid, p in self.issued.items() if tid not in self.scored]
            proposal: Proposal = suggest(search, spec.space, self.history, mode,
                                         pending=pending, cache=self.search_cache)
            self.issued[trial_id] = proposal
            yield self.make_trial_spec(trial_id, proposal.config)

    # -- the run ------------------------------------------------------------

    def run(self) -> StudyReport:
        spec = self.spec
        start = time.monotonic()
        records = run_trials(
            self.spec_stream(),
            self.pool,
            max_concurrent=spec.max_concurrent,
            retries=spec.retries,
            on_event=self.consume,
            timeout=spec.timeout,
        )
        total = time.monotonic() - start

        report = StudyReport(
            workflow=spec.workflow,
            seed=spec.seed,
            records=records,
            total_wall_time=total,
            peak_concurrent=self.peak,
            warnings=self.warnings,
        )
        if spec.workflow == "doe":
            return report

        mode = self.objective_mode()
        report.mode = mode
        objectives = [self.objectives.get(r.trial_id) for r in records]
        report.objectives = objectives
        if spec.workflow == "param_est" and isinstance(spec.rule, LeastSquares):
            report.rmse = [self.rmse.get(r.trial_id) for r in records]

        best_so_far: list[float | None] = []
        best: float | None = None
        better = (lambda a, b: a < b) if mode == "min" else (lambda a, b: a > b)
        best_record: TrialRecord | None = None
        for record, objective in zip(records, objectives):
            if objective is not None and (best is None or better(objective, best)):
                best = objective
                best_record = record
            best_so_far.append(best)
        report.best_so_far = best_so_far
        report.best_trial = best_record
        report.best_objective = best
        if best_record is not None and report.rmse is not None:
            idx = records.index(best_record)
            report.best_rmse = report.rmse[idx]
        if best_record is None:
            report.warnings.append("no trial completed with a score; best trial is absent")
        return report


def run_study(
    spec: StudySpec,
    pool: list[WorkerEndpoint],
    out_dir: Path | str | None = None,
    on_event: Callable[[TrialEvent], None] | None = None,
) -> StudyReport:
    """Validate, run, and persist one study."""
    reasons = validate_spec(spec)
    if reasons:
        raise InvalidSpecError(reasons)
    report = _Driver(spec, pool, on_event).run()
    log_dir = Path(out_dir) if out_dir is not None else Path.cwd()
    report.log_path = write_log(report, to_file=spec.log_to_file, directory=log_dir)
    if out_dir is not None:
        write_report_files(report, Path(out_dir))
    return report


def run_param_est(spec: StudySpec, pool, out_dir=None, on_event=None) -> StudyReport:
    if spec.workflow != "param_est":
        raise InvalidSpecError([f"expected workflow 'param_est', got {spec.workflow!r}"])
    return run_study(spec, pool, out_dir, on_event)


def run_bayes_opt(spec: StudySpec, pool, out_dir=None, on_event=None) -> StudyReport:
    if spec.workflow != "bayes_opt":
        raise InvalidSpecError([f"expected workflow 'bayes_opt', got {spec.workflow!r}"])
    return run_study(spec, pool, out_dir, on_event)


def run_opt(spec: StudySpec, pool, out_dir=None, on_event=None) -> StudyReport:
    if spec.workflow != "opt":
        raise InvalidSpecError([f"expected workflow 'opt', got {spec.workflow!r}"])
    return run_study(spec, pool, out_dir, on_event)


def run_doe(spec: StudySpec, pool, out_dir=None, on_event=None) -> StudyReport:
    if spec.workflow != "doe":
        raise InvalidSpecError([f"expected workflow 'doe', got {spec.workflow!r}"])
    return run_study(spec, pool, out_dir, on_event)


class StudyHandle:
    """Manual-mode study: adjust settings, then build(), then run()."""

    def __init__(
        self,
        spec: StudySpec,
        pool: list[WorkerEndpoint],
        out_dir: Path | str | None = None,
        on_event: Callable[[TrialEvent], None] | None = None,
    ) -> None:
        self._spec = spec
        self._pool = pool
        self._out_dir = out_dir
        self._on_event = on_event
        self._built = False
        self._ran = False

    def _mutate(self, **changes) -> None:
        if self._built:
            raise LifecycleError("settings are frozen once build() has been called")
        self._spec = replace(self._spec, **changes)

    def set_max_concurrent(self, value: int) -> None:
        self._mutate(max_concurrent=value)

    def set_retries(self, value: int) -> None:
        self._mutate(retries=value)

    def set_timeout(self, value: float) -> None:
        self._mutate(timeout=value)

    def set_resources(self, cpus: int) -> None:
        self._mutate(resources=Resources(cpus=cpus))

    def set_search(self, search: SearchAlg) -> None:
        self._mutate(search=search)

    def set_scheduler(self, scheduler: SchedulerKind) -> None:
        self._mutate(scheduler=scheduler)

    def set_log_to_file(self, value: bool) -> None:
        self._mutate(log_to_file=value)

    @property
    def spec(self) -> StudySpec:
        return self._spec

    def build(self) -> "StudyHandle":
        if self._built:
            raise LifecycleError("build() called twice")
        reasons = validate_spec(self._spec)
        if reasons:
            raise InvalidSpecError(reasons)
        self._built = True
        return self

    def run(self) -> StudyReport:
        if not self._built:
            raise LifecycleError("run() called before build()")
        if self._ran:
            raise LifecycleError("run() called twice")
        self._ran = True
        return run_study(self._spec, self._pool, self._out_dir, self._on_event)


def build_and_run(
    spec: StudySpec,
    pool: list[WorkerEndpoint],
    out_dir: Path | str | None = None,
    on_event: Callable[[TrialEvent], None] | None = None,
) -> StudyReport | StudyHandle:
    """Default mode runs immediately; manual mode returns a configurable handle."""
    reasons = validate_spec(spec)
    if reasons:
        raise InvalidSpecError(reasons)
    if spec.auto_run:
        return run_study(spec, pool, out_dir, on_event)
    return StudyHandle(spec, pool, out_dir, on_event)


# -- reporting ---------------------------------------------------------------


def format_log(report: StudyReport) -> str:
    out = io.StringIO()
    out.write(f"simflock {report.workflow} study (seed {report.seed})\n")
    counts = ", ".join(f"{k}={v}" for k, v in report.status_counts().items() if v)
    out.write(f"trials: {len(report.records)} ({counts})\n")
    out.write(f"total wall time: {report.total_wall_time:.3f}s, "
              f"peak concurrency: {report.peak_concurrent}\n")
    header = f"{'trial':>5}  {'status':<9}  {'objective':>12}  {'wall_s':>8}  metrics"
    out.write(header + "\n")
    for i, record in enumerate(report.records):
        objective = ""
        if report.objectives is not None and report.objectives[i] is not None:
            objective = f"{report.objectives[i]:.6g}"
        metrics = ", ".join(f"{k}={v:.6g}" for k, v in record.metrics.items())
        if record.error:
            metrics = (metrics + " " if metrics else "") + f"[{record.error}]"
        out.write(
            f"{record.trial_id:>5}  {record.status.value:<9}  {objective:>12}  "
            f"{record.wall_time:>8.3f}  {metrics}\n"
        )
    if report.best_trial is not None:
        line = f"best trial: {report.best_trial.trial_id} objective={report.best_objective:.6g}"
        if report.best_rmse is not None:
            line += f" rmse={report.best_rmse:.6g}"
        out.write(line + "\n")
    for warning in report.warnings:
        out.write(f"warning: {warning}\n")
    return out.getvalue()


def write_log(
    report: StudyReport, to_file: bool, directory: Path | str | None = None
) -> Path | None:
    """Write the study log to a timestamped file, or echo it to stdout."""
    text = format_log(report)
    if not to_file:
        sys.stdout.write(text)
        return None
    directory = Path(directory) if directory is not None else Path.cwd()
    directory.mkdir(parents=True, exist_ok=True)
    stamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    path = directory / f"{LOG_PREFIX}_{stamp}.txt"
    suffix = 0
    while path.exists():
        suffix += 1
        path = directory / f"{LOG_PREFIX}_{stamp}_{suffix}.txt"
    path.write_text(text)
    return path


def write_report_files(report: StudyReport, out_dir: Path) -> None:
    """Persist report.json and best_so_far.csv under the study output directory."""
    import json

    out_dir.mkdir(parents=True, exist_ok=True)
    report.out_dir = out_dir
    (out_dir / "report.json").write_text(json.dumps(report.to_json_dict(), indent=2) + "\n")
    lines = ["trial_id,objective,best"]
    if report.objectives is not None and report.best_so_far is not None:
        for record, objective, best in zip(
            report.records, report.objectives, report.best_so_far
        ):
            obj = "" if objective is None else f"{objective!r}"
            cur = "" if best is None else f"{best!r}"
            lines.append(f"{record.trial_id},{obj},{cur}")
    (out_dir / "best_so_far.csv").write_text("\n".join(lines) + "\n")
