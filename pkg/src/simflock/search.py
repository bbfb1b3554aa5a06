"""Sequential proposal strategies: random, grid, and GP Bayesian optimization.

``suggest`` is a pure function of (algorithm, space, history): the driver
owns all state. Determinism comes from deriving every rng stream from the
algorithm seed plus the history length at call time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import gp
from .designs import gen_sobol
from .errors import GridExhaustedError, NotEnumerableError
from .gp import KernelParams
from .params import ParamSpace, ParamValue, enumerable_support, unit_to_config


@dataclass(frozen=True)
class RandomSearch:
    seed: int = 0


@dataclass(frozen=True)
class GridSearch:
    """Visits the full-factorial enumeration once, in order."""


@dataclass(frozen=True)
class GpBayesOpt:
    seed: int = 0
    n_initial: int = 8  # quasi-random warmup points before the GP takes over
    kernel: KernelParams | None = None
    candidates_per_step: int = 512
    # hyperparameters are re-optimized every this many proposals and reused
    # (refitting data only) in between; 1 re-optimizes at every step
    refit_every: int = 4

    def check(self) -> str | None:
        if self.n_initial < 2:
            return "n_initial must be >= 2 (the surrogate needs two points)"
        if self.candidates_per_step < 1:
            return "candidates_per_step must be positive"
        if self.refit_every < 1:
            return "refit_every must be positive"
        return None


SearchAlg = RandomSearch | GridSearch | GpBayesOpt


@dataclass(frozen=True)
class Observation:
    """One scored trial as the search algorithms see it.

    unit_point is recorded at proposal time and never re-derived from the
    config, so categorical values stay attached to the coordinate that
    produced them.
    """

    config: dict[str, ParamValue]
    unit_point: tuple[float, ...]
    objective: float
    trial_id: int


@dataclass(frozen=True)
class Proposal:
    config: dict[str, ParamValue]
    unit_point: tuple[float, ...]


def suggest(
    alg: SearchAlg,
    space: ParamSpace,
    history: list[Observation],
    mode: str = "min",
    pending: Sequence[Proposal] = (),
    cache: dict | None = None,
) -> Proposal:
    """Propose the next configuration.

    `history` holds completed, scored trials; `pending` holds proposals the
    driver has issued that are not (yet) in history — in-flight trials plus
    failed/rejected/pruned ones. Keeping len(history) + len(pending) equal
    to the number of trials issued makes proposal streams reproducible and
    duplicate-free under concurrent dispatch.

    `cache` is optional driver-owned scratch space (one dict per study);
    GP-BO keeps its last optimized hyperparameters there so it can refit
    data without re-optimizing at every single step. Identical inputs give
    identical proposals.
    """
    if isinstance(alg, RandomSearch):
        return _suggest_random(alg, space, history, pending)
    if isinstance(alg, GridSearch):
        return _suggest_grid(space, history, pending)
    if isinstance(alg, GpBayesOpt):
        return _suggest_gp(alg, space, history, pending, mode, cache)
    raise TypeError(f"unknown search algorithm {alg!r}")


def _suggest_random(
    alg: RandomSearch,
    space: ParamSpace,
    history: list[Observation],
    pending: Sequence[Proposal],
) -> Proposal:
    rng = np.random.default_rng((alg.seed, len(history) + len(pending)))
    point = rng.random(len(space))
    return Proposal(unit_to_config(space, point), tuple(float(u) for u in point))


def _grid_unit_point(space: ParamSpace, config: dict[str, ParamValue]) -> tuple[float, ...]:
    # center of the sample_unit bucket that maps back to each value
    coords = []
    for name, dist in space.items():
        support = enumerable_support(dist)
        assert support is not None
        coords.append((support.index(config[name]) + 0.5) / len(support))
    return tuple(coords)


def _suggest_grid(
    space: ParamSpace, history: list[Observation], pending: Sequence[Proposal]
) -> Proposal:
    from .designs import gen_full_factorial  # cycle guard

    for name, dist in space.items():
        if enumerable_support(dist) is None:
            raise NotEnumerableError(name)
    visited = [obs.config for obs in history] + [p.config for p in pending]
    for config in gen_full_factorial(space):
        if config not in visited:
            return Proposal(config, _grid_unit_point(space, config))
    raise GridExhaustedError("every grid point has been visited")


def _sobol_point(space: ParamSpace, index: int) -> Proposal:
    point = gen_sobol(len(space), 1, skip=index).points[0]
    return Proposal(unit_to_config(space, point), tuple(float(u) for u in point))


def _suggest_gp(
    alg: GpBayesOpt,
    space: ParamSpace,
    history: list[Observation],
    pending: Sequence[Proposal],
    mode: str,
    cache: dict | None,
) -> Proposal:
    bad = alg.check()
    if bad:
        raise ValueError(bad)
    k = len(history) + len(pending)
    if k < alg.n_initial or len(history) < 2:  # surrogate needs 2 completed points
        return _sobol_point(space, k)

    d = len(space)
    x = np.array([obs.unit_point for obs in history])
    y = np.array([obs.objective for obs in history])
    cached = (cache or {}).get("gp_kernel")
    if cached is not None and k - cached[0] < alg.refit_every:
        state = gp.gp_fit(x, y, kernel=cached[1], optimize=False)
    else:
        fit_rng = np.random.default_rng((alg.seed, k, 1))
        state = gp.gp_fit(x, y, kernel=alg.kernel or gp.default_kernel(d), rng=fit_rng)
        if cache is not None:
            cache["gp_kernel"] = (k, state.kernel)

    # Sobol candidates plus a seeded toroidal shift: keeps the low-discrepancy
    # spread but decorrelates candidate grids across steps and seeds.
    base = gen_sobol(d, alg.candidates_per_step, skip=0).points
    shift = np.random.default_rng((alg.seed, k, 2)).random(d)
    candidates = np.mod(base + shift, 1.0)

    best = float(np.min(y) if mode == "min" else np.max(y))
    ei = gp.expected_improvement(state, candidates, best, mode)
    pick = int(np.argmax(ei))  # ties resolve to the lowest index
    point = candidates[pick]
    return Proposal(unit_to_config(space, point), tuple(float(u) for u in point))
