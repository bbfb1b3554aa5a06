"""Per-parameter sampling distributions and the unit-cube bridge.

Every structured design and search algorithm works in the unit hypercube;
``sample_unit`` is the single inverse-CDF bridge that turns a coordinate
u in [0, 1) into a concrete parameter value. Random search reuses the same
bridge with rng draws, so the two routes always agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Union

import numpy as np

from .errors import InvalidDistributionError, OutOfRangeError

ParamValue = Union[float, int, str]


@dataclass(frozen=True)
class Uniform:
    """Continuous uniform on [lo, hi)."""

    lo: float
    hi: float

    def check(self) -> str | None:
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            return "bounds must be finite"
        if not self.lo < self.hi:
            return f"requires lo < hi, got [{self.lo}, {self.hi})"
        return None


@dataclass(frozen=True)
class LogUniform:
    """Log-uniform on [lo, hi); uniform in ln x, so lo must be positive."""

    lo: float
    hi: float

    def check(self) -> str | None:
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            return "bounds must be finite"
        if self.lo <= 0:
            return f"requires lo > 0, got lo={self.lo}"
        if not self.lo < self.hi:
            return f"requires lo < hi, got [{self.lo}, {self.hi})"
        return None


@dataclass(frozen=True)
class RandInt:
    """Integers in the half-open range [lo, hi)."""

    lo: int
    hi: int

    def check(self) -> str | None:
        if not self.lo < self.hi:
            return f"requires lo < hi, got [{self.lo}, {self.hi})"
        return None


@dataclass(frozen=True)
class Randn:
    """Normal with the given mean and standard deviation."""

    mean: float
    stddev: float

    def check(self) -> str | None:
        if not (math.isfinite(self.mean) and math.isfinite(self.stddev)):
            return "mean and stddev must be finite"
        if self.stddev < 0:
            return f"requires stddev >= 0, got {self.stddev}"
        return None


@dataclass(frozen=True)
class Choice:
    """Sampled uniformly from an explicit list of values."""

    values: tuple[ParamValue, ...]

    def __init__(self, values) -> None:
        object.__setattr__(self, "values", tuple(values))

    def check(self) -> str | None:
        return _check_values(self.values)


@dataclass(frozen=True)
class GridValues:
    """Explicit list of values meant to be enumerated exhaustively.

    Same support as Choice, but signals grid search and full-factorial
    designs to visit every value rather than sample.
    """

    values: tuple[ParamValue, ...]

    def __init__(self, values) -> None:
        object.__setattr__(self, "values", tuple(values))

    def check(self) -> str | None:
        return _check_values(self.values)


def _check_values(values: tuple[ParamValue, ...]) -> str | None:
    if len(values) == 0:
        return "values list must be nonempty"
    if len(set(values)) != len(values):
        return "values list must be duplicate-free"
    return None


Distribution = Union[Uniform, LogUniform, RandInt, Randn, Choice, GridValues]


class ParamSpace:
    """Ordered mapping from parameter name to its distribution.

    Insertion order is load-bearing: it defines the column order of design
    matrices and the dimension indices seen by search algorithms.
    """

    def __init__(self, entries: dict[str, Distribution]) -> None:
        self._entries = dict(entries)

    @property
    def names(self) -> list[str]:
        return list(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[str]:
        return iter(self._entries)

    def __getitem__(self, name: str) -> Distribution:
        return self._entries[name]

    def items(self):
        return self._entries.items()

    def distributions(self) -> list[Distribution]:
        return list(self._entries.values())

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ParamSpace) and self._entries == other._entries

    def __repr__(self) -> str:
        inner = ", ".join(f"{k}={v!r}" for k, v in self._entries.items())
        return f"ParamSpace({inner})"


def validate_space(space: ParamSpace) -> None:
    """Raise InvalidDistributionError naming the first offending parameter."""
    for name, dist in space.items():
        if not name:
            raise InvalidDistributionError(name, "parameter name must be nonempty")
        reason = dist.check()
        if reason is not None:
            raise InvalidDistributionError(name, reason)


# Inverse normal CDF via P. Acklam's rational approximation (~1.15e-9
# relative error), so every platform produces the same draws.
_ICDF_A = (
    -3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
    1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00,
)
_ICDF_B = (
    -5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
    6.680131188771972e+01, -1.328068155288572e+01,
)
_ICDF_C = (
    -7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
    -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00,
)
_ICDF_D = (
    7.784695709041462e-03, 3.224671290700398e-01,
    2.445134137142996e+00, 3.754408661907416e+00,
)

_TAIL_GUARD = 8.0  # standard deviations; caps the u -> 0 or 1 tails


def inverse_normal_cdf(u: float) -> float:
    """Standard-normal quantile for u in [0, 1), clamped to +/- 8 sigma."""
    if u <= 0.0:
        return -_TAIL_GUARD
    if u >= 1.0:
        return _TAIL_GUARD
    a, b, c, d = _ICDF_A, _ICDF_B, _ICDF_C, _ICDF_D
    p_low = 0.02425
    if u < p_low:
        q = math.sqrt(-2.0 * math.log(u))
        z = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    elif u <= 1.0 - p_low:
        q = u - 0.5
        r = q * q
        z = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q / \
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
    else:
        q = math.sqrt(-2.0 * math.log(1.0 - u))
        z = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    return max(-_TAIL_GUARD, min(_TAIL_GUARD, z))


def sample_unit(dist: Distribution, u: float) -> ParamValue:
    """Map a unit-cube coordinate through the distribution's inverse CDF."""
    if not 0.0 <= u < 1.0:
        raise OutOfRangeError(f"unit coordinate must lie in [0, 1), got {u}")
    u = float(u)
    if isinstance(dist, Uniform):
        # rounding can land exactly on hi for u one ulp below 1; keep half-open
        return min(dist.lo + u * (dist.hi - dist.lo), math.nextafter(dist.hi, dist.lo))
    if isinstance(dist, LogUniform):
        value = math.exp(math.log(dist.lo) + u * (math.log(dist.hi) - math.log(dist.lo)))
        return min(value, math.nextafter(dist.hi, dist.lo))
    if isinstance(dist, RandInt):
        return dist.lo + math.floor(u * (dist.hi - dist.lo))
    if isinstance(dist, Randn):
        return dist.mean + dist.stddev * inverse_normal_cdf(u)
    if isinstance(dist, (Choice, GridValues)):
        return dist.values[math.floor(u * len(dist.values))]
    raise TypeError(f"unknown distribution {dist!r}")


def sample_random(dist: Distribution, rng: np.random.Generator) -> ParamValue:
    """Draw one value; equal seeds give equal streams."""
    return sample_unit(dist, float(rng.random()))


def sample_config(space: ParamSpace, rng: np.random.Generator) -> dict[str, ParamValue]:
    """One i.i.d. draw per parameter, in space order."""
    return {name: sample_random(dist, rng) for name, dist in space.items()}


def unit_to_config(space: ParamSpace, point) -> dict[str, ParamValue]:
    """Map one unit-cube row (len == space size) to a config."""
    names = space.names
    if len(point) != len(names):
        raise ValueError(f"point has {len(point)} coordinates for {len(names)} parameters")
    return {name: sample_unit(space[name], float(point[i])) for i, name in enumerate(names)}


def enumerable_support(dist: Distribution) -> list[ParamValue] | None:
    """Finite support in enumeration order, or None for continuous variants."""
    if isinstance(dist, (GridValues, Choice)):
        return list(dist.values)
    if isinstance(dist, RandInt):
        return list(range(dist.lo, dist.hi))
    return None


def in_support(dist: Distribution, value: ParamValue) -> bool:
    if isinstance(dist, Uniform):
        return isinstance(value, (int, float)) and dist.lo <= value < dist.hi
    if isinstance(dist, LogUniform):
        return isinstance(value, (int, float)) and dist.lo <= value < dist.hi
    if isinstance(dist, RandInt):
        return isinstance(value, int) and dist.lo <= value < dist.hi
    if isinstance(dist, Randn):
        if not isinstance(value, (int, float)):
            return False
        if dist.stddev == 0:
            return value == dist.mean
        return abs(value - dist.mean) <= _TAIL_GUARD * dist.stddev
    if isinstance(dist, (Choice, GridValues)):
        return value in dist.values
    return False
