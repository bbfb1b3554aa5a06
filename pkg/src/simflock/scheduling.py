"""Trial schedulers: FIFO (never prunes) and asynchronous successive halving.

Schedulers consume intermediate metric reports and answer continue-or-prune.
All mutation happens from the executor's single result-ingestion loop, so no
locking is needed here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .errors import MissingMetricError, UnknownTrialError


class Decision(Enum):
    CONTINUE = "continue"
    PRUNE = "prune"


@dataclass(frozen=True)
class Fifo:
    """Run every trial to completion."""


@dataclass(frozen=True)
class Asha:
    """Asynchronous successive halving.

    Rung budgets are grace * reduction^k for every k with budget <= max_t.
    A trial reaching a rung is promoted iff its metric is within the best
    ceil(m / reduction) of the m values recorded at that rung so far
    (promote-on-arrival; ties promote).
    """

    metric: str
    mode: str = "min"
    grace: int = 1
    max_t: int = 8
    reduction: int = 2

    def check(self) -> str | None:
        if self.mode not in ("min", "max"):
            return f"mode must be 'min' or 'max', got {self.mode!r}"
        if self.grace < 1 or self.max_t < 1:
            return "grace and max_t must be positive"
        if self.grace > self.max_t:
            return f"grace ({self.grace}) must be <= max_t ({self.max_t})"
        if self.reduction < 2:
            return f"reduction must be >= 2, got {self.reduction}"
        return None

    def rung_budgets(self) -> list[int]:
        budgets = []
        b = self.grace
        while b <= self.max_t:
            budgets.append(b)
            b *= self.reduction
        return budgets


SchedulerKind = Fifo | Asha


class TrialScheduler:
    """Shared lifecycle tracking; subclasses add the pruning rule."""

    def __init__(self) -> None:
        self._live: set[int] = set()
        self.prune_count = 0

    def on_start(self, trial_id: int) -> None:
        self._live.add(trial_id)

    def on_report(self, trial_id: int, step: int, metrics: dict[str, float]) -> Decision:
        if trial_id not in self._live:
            raise UnknownTrialError(f"trial {trial_id} is not live")
        decision = self._decide(trial_id, step, metrics)
        if decision is Decision.PRUNE:
            self.prune_count += 1
            self._live.discard(trial_id)
        return decision

    def on_complete(self, trial_id: int, final_metrics: dict[str, float] | None = None) -> None:
        if trial_id not in self._live:
            raise UnknownTrialError(f"trial {trial_id} is not live")
        self._live.discard(trial_id)

    def is_live(self, trial_id: int) -> bool:
        return trial_id in self._live

    def _decide(self, trial_id: int, step: int, metrics: dict[str, float]) -> Decision:
        raise NotImplementedError

    @property
    def report_steps(self) -> int | None:
        """How many intermediate reports trials should emit, if any."""
        return None


class FifoScheduler(TrialScheduler):
    def _decide(self, trial_id: int, step: int, metrics: dict[str, float]) -> Decision:
        return Decision.CONTINUE


class AshaScheduler(TrialScheduler):
    def __init__(self, config: Asha) -> None:
        bad = config.check()
        if bad:
            raise ValueError(bad)
        super().__init__()
        self.config = config
        self._budgets = config.rung_budgets()
        # rung index -> list of (trial_id, metric value) in arrival order
        self.rungs: dict[int, list[tuple[int, float]]] = {
            k: [] for k in range(len(self._budgets))
        }

    def _decide(self, trial_id: int, step: int, metrics: dict[str, float]) -> Decision:
        if step not in self._budgets:
            return Decision.CONTINUE
        if self.config.metric not in metrics:
            raise MissingMetricError(self.config.metric)
        rung = self._budgets.index(step)
        recorded = self.rungs[rung]
        if any(tid == trial_id for tid, _ in recorded):
            return Decision.CONTINUE  # one record per trial per rung
        value = float(metrics[self.config.metric])
        recorded.append((trial_id, value))

        values = sorted(
            (v for _, v in recorded), reverse=(self.config.mode == "max")
        )
        keep = math.ceil(len(values) / self.config.reduction)
        threshold = values[keep - 1]
        promoted = value <= threshold if self.config.mode == "min" else value >= threshold
        return Decision.CONTINUE if promoted else Decision.PRUNE

    @property
    def report_steps(self) -> int | None:
        return self.config.max_t


def make_scheduler(kind: SchedulerKind) -> TrialScheduler:
    if isinstance(kind, Fifo):
        return FifoScheduler()
    if isinstance(kind, Asha):
        return AshaScheduler(kind)
    raise TypeError(f"unknown scheduler {kind!r}")
