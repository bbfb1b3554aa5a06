"""Load a study-spec JSON document and lower it to core types."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import pydantic

from .designs import FullFactorial, LatinHypercube, SamplingDesign, Sobol
from .errors import InvalidSpecError
from .executor import LocalProcess, RemoteTcp, Resources, WorkerEndpoint
from .params import (
    Choice,
    Distribution,
    GridValues,
    LogUniform,
    ParamSpace,
    RandInt,
    Randn,
    Uniform,
)
from .scheduling import Asha, Fifo, SchedulerKind
from .search import GpBayesOpt, GridSearch, RandomSearch, SearchAlg
from .service import models as m
from .workflows import EstimationRule, GaussianMLE, LeastSquares, StudySpec


@dataclass
class LoadedStudy:
    spec: StudySpec
    pool: list[WorkerEndpoint]
    out_dir: Path


def parse_study_text(text: str) -> m.StudyFileModel:
    """Strict parse; raises InvalidSpecError with every violation found."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidSpecError(
            [f"not valid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"]
        ) from None
    try:
        return m.StudyFileModel.model_validate(raw)
    except pydantic.ValidationError as exc:
        reasons = []
        for err in exc.errors():
            loc = ".".join(str(p) for p in err["loc"]) or "<root>"
            reasons.append(f"{loc}: {err['msg']}")
        raise InvalidSpecError(reasons) from None


def load_study_file(path: Path | str) -> m.StudyFileModel:
    return parse_study_text(Path(path).read_text())


def _lower_distribution(model) -> Distribution:
    if isinstance(model, m.UniformModel):
        return Uniform(model.lo, model.hi)
    if isinstance(model, m.LogUniformModel):
        return LogUniform(model.lo, model.hi)
    if isinstance(model, m.RandIntModel):
        return RandInt(model.lo, model.hi)
    if isinstance(model, m.RandnModel):
        return Randn(model.mean, model.stddev)
    if isinstance(model, m.ChoiceModel):
        return Choice(tuple(model.values))
    if isinstance(model, m.GridValuesModel):
        return GridValues(tuple(model.values))
    raise TypeError(f"unknown distribution model {model!r}")


def _lower_search(model, study_seed: int) -> SearchAlg:
    if isinstance(model, m.RandomSearchModel):
        return RandomSearch(seed=study_seed if model.seed is None else model.seed)
    if isinstance(model, m.GridSearchModel):
        return GridSearch()
    if isinstance(model, m.GpBayesOptModel):
        return GpBayesOpt(
            seed=study_seed if model.seed is None else model.seed,
            n_initial=model.n_initial,
            candidates_per_step=model.candidates_per_step,
        )
    raise TypeError(f"unknown search model {model!r}")


def _lower_scheduler(model) -> SchedulerKind:
    if model is None or isinstance(model, m.FifoModel):
        return Fifo()
    if isinstance(model, m.AshaModel):
        return Asha(
            metric=model.metric, mode=model.mode, grace=model.grace,
            max_t=model.max_t, reduction=model.reduction,
        )
    raise TypeError(f"unknown scheduler model {model!r}")


def _lower_design(model) -> SamplingDesign | None:
    if model is None:
        return None
    if isinstance(model, m.LhsModel):
        return LatinHypercube(n=model.n, midpoint=model.midpoint)
    if isinstance(model, m.SobolModel):
        return Sobol(n=model.n, skip=model.skip)
    if isinstance(model, m.FullFactorialModel):
        return FullFactorial()
    raise TypeError(f"unknown design model {model!r}")


def _lower_rule(model, targets: dict[str, float] | None) -> EstimationRule | None:
    if model is None:
        return None
    targets = targets or {}
    if isinstance(model, m.LeastSquaresModel):
        return LeastSquares(targets=targets, weights=model.weights)
    if isinstance(model, m.GaussianMleModel):
        return GaussianMLE(targets=targets, sigmas=model.sigmas)
    raise TypeError(f"unknown rule model {model!r}")


def _build_pool(
    simulator: m.SimulatorModel, worker_override: list[str] | None
) -> list[WorkerEndpoint]:
    if worker_override:
        return [RemoteTcp(addr) for addr in worker_override]
    reasons = []
    if simulator.command and simulator.tcp:
        reasons.append("simulator: give either command or tcp endpoints, not both")
    if not simulator.command and not simulator.tcp:
        reasons.append("simulator: needs a command or tcp endpoints")
    if reasons:
        raise InvalidSpecError(reasons)
    if simulator.command:
        return [LocalProcess(tuple(simulator.command))]
    return [RemoteTcp(addr) for addr in simulator.tcp]


def lower_study(
    model: m.StudyFileModel, worker_override: list[str] | None = None
) -> LoadedStudy:
    """Turn the validated document into a runnable spec, pool, and out_dir."""
    space = ParamSpace({name: _lower_distribution(d) for name, d in model.space.items()})
    rule = _lower_rule(model.rule, model.targets)
    if model.workflow == "param_est" and rule is None and model.targets:
        rule = LeastSquares(targets=model.targets)  # least squares is the default rule
    spec = StudySpec(
        workflow=model.workflow,
        space=space,
        budget=model.budget,
        max_concurrent=model.max_concurrent,
        seed=model.seed,
        auto_run=model.auto_run,
        log_to_file=model.log_to_file,
        rule=rule,
        mode=model.mode,
        objective_metric=model.objective_metric,
        search=None if model.search is None else _lower_search(model.search, model.seed),
        design=_lower_design(model.design),
        scheduler=_lower_scheduler(model.scheduler),
        retries=model.retries,
        timeout=model.timeout_s,
        resources=Resources(cpus=model.resources.cpus) if model.resources else Resources(),
        constants=dict(model.constants),
    )
    pool = _build_pool(model.simulator, worker_override)
    return LoadedStudy(spec=spec, pool=pool, out_dir=Path(model.out_dir))
