"""Pydantic models for study files and the HTTP API.

The study-spec JSON document is strict: unknown keys are rejected so that a
typo in a parameter name or option surfaces immediately instead of being
silently ignored.
"""

from __future__ import annotations

from typing import Annotated, Literal, Union

from pydantic import BaseModel, ConfigDict, Field

ParamValueModel = Union[int, float, str]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


# -- parameter distributions --------------------------------------------------


class UniformModel(_Strict):
    type: Literal["uniform"]
    lo: float
    hi: float


class LogUniformModel(_Strict):
    type: Literal["loguniform"]
    lo: float
    hi: float


class RandIntModel(_Strict):
    type: Literal["randint"]
    lo: int
    hi: int


class RandnModel(_Strict):
    type: Literal["randn"]
    mean: float
    stddev: float


class ChoiceModel(_Strict):
    type: Literal["choice"]
    values: list[ParamValueModel]


class GridValuesModel(_Strict):
    type: Literal["grid"]
    values: list[ParamValueModel]


DistributionModel = Annotated[
    Union[UniformModel, LogUniformModel, RandIntModel, RandnModel, ChoiceModel, GridValuesModel],
    Field(discriminator="type"),
]


# -- search algorithms ---------------------------------------------------------


class RandomSearchModel(_Strict):
    search: Literal["random"]
    seed: int | None = None  # defaults to the study seed


class GridSearchModel(_Strict):
    search: Literal["grid"]


class GpBayesOptModel(_Strict):
    search: Literal["gp_bo"]
    seed: int | None = None
    n_initial: int = 8
    candidates_per_step: int = 512


SearchModel = Annotated[
    Union[RandomSearchModel, GridSearchModel, GpBayesOptModel],
    Field(discriminator="search"),
]


# -- schedulers ----------------------------------------------------------------


class FifoModel(_Strict):
    scheduler: Literal["fifo"]


class AshaModel(_Strict):
    scheduler: Literal["asha"]
    metric: str
    mode: Literal["min", "max"] = "min"
    grace: int = 1
    max_t: int = 8
    reduction: int = 2


SchedulerModel = Annotated[Union[FifoModel, AshaModel], Field(discriminator="scheduler")]


# -- sampling designs ------------------------------------------------------------


class LhsModel(_Strict):
    design: Literal["lhs"]
    n: int
    midpoint: bool = False


class SobolModel(_Strict):
    design: Literal["sobol"]
    n: int
    skip: int = 0


class FullFactorialModel(_Strict):
    design: Literal["full_factorial"]


DesignModel = Annotated[
    Union[LhsModel, SobolModel, FullFactorialModel], Field(discriminator="design")
]


# -- estimation rules -------------------------------------------------------------


class LeastSquaresModel(_Strict):
    rule: Literal["least_squares"]
    weights: dict[str, float] | None = None


class GaussianMleModel(_Strict):
    rule: Literal["gaussian_mle"]
    sigmas: dict[str, float]


RuleModel = Annotated[
    Union[LeastSquaresModel, GaussianMleModel], Field(discriminator="rule")
]


# -- the study file ---------------------------------------------------------------


class SimulatorModel(_Strict):
    """Either a local command or a list of TCP worker endpoints."""

    command: list[str] | None = None
    tcp: list[str] | None = None


class ResourcesModel(_Strict):
    cpus: int = 1


class StudyFileModel(_Strict):
    workflow: Literal["param_est", "bayes_opt", "opt", "doe"]
    space: dict[str, DistributionModel]
    simulator: SimulatorModel
    out_dir: str
    budget: int | None = None
    max_concurrent: int = 1
    seed: int = 0
    auto_run: bool = True
    log_to_file: bool = False
    search: SearchModel | None = None
    scheduler: SchedulerModel | None = None
    design: DesignModel | None = None
    rule: RuleModel | None = None
    targets: dict[str, float] | None = None
    mode: Literal["min", "max"] = "min"
    objective_metric: str | None = None
    retries: int = 0
    timeout_s: float = 300.0
    resources: ResourcesModel | None = None
    constants: dict[str, ParamValueModel] = Field(default_factory=dict)


# -- HTTP responses ----------------------------------------------------------------


class HealthResponse(BaseModel):
    status: str
    version: str


class InfoResponse(BaseModel):
    topic: str
    text: str


class StudySubmitted(BaseModel):
    study_id: str
    status: str


class StudyStatus(BaseModel):
    study_id: str
    workflow: str
    status: str  # running | completed | failed
    error: str | None = None
    summary: dict | None = None


class StudyList(BaseModel):
    studies: list[StudyStatus]
