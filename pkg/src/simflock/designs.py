"""Structured unit-hypercube designs: full factorial, Latin hypercube, Sobol.

Designs are generated in the unit cube and mapped through a ParamSpace with
``materialize``, so the same inverse-CDF bridge serves every design.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import BudgetExceededError, DimensionTooLargeError, NotEnumerableError
from .params import ParamSpace, ParamValue, enumerable_support, unit_to_config

FULL_FACTORIAL_CAP = 10**6


@dataclass(frozen=True)
class FullFactorial:
    """Cartesian product of every parameter's finite support."""


@dataclass(frozen=True)
class LatinHypercube:
    """n stratified samples: one point per 1/n stratum in every dimension."""

    n: int
    midpoint: bool = False  # stratum centers instead of jittered offsets


@dataclass(frozen=True)
class Sobol:
    """n consecutive points of the Sobol sequence, after `skip` skipped ones."""

    n: int
    skip: int = 0


SamplingDesign = FullFactorial | LatinHypercube | Sobol


@dataclass(frozen=True)
class DesignMatrix:
    """n x d unit-cube points plus the parameter names defining the columns."""

    points: np.ndarray
    names: tuple[str, ...]

    @property
    def n(self) -> int:
        return int(self.points.shape[0])

    @property
    def d(self) -> int:
        return len(self.names)


def gen_full_factorial(
    space: ParamSpace, cap: int = FULL_FACTORIAL_CAP
) -> list[dict[str, ParamValue]]:
    """Cartesian product in lexicographic (parameter order, value order) order."""
    supports: list[list[ParamValue]] = []
    for name, dist in space.items():
        support = enumerable_support(dist)
        if support is None:
            raise NotEnumerableError(name)
        supports.append(support)
    total = math.prod(len(s) for s in supports)
    if total > cap:
        raise BudgetExceededError(
            f"full factorial would produce {total} configs (cap {cap})"
        )
    names = space.names
    return [dict(zip(names, combo)) for combo in itertools.product(*supports)]


def gen_latin_hypercube(
    d: int, n: int, rng: np.random.Generator, midpoint: bool = False
) -> DesignMatrix:
    """Per column: a random permutation of the n strata, jittered within each.

    Jitter (rather than stratum midpoints) avoids aliasing against any
    periodic structure in the response; pass midpoint=True to disable it.
    """
    if d < 1 or n < 1:
        raise ValueError(f"need d >= 1 and n >= 1, got d={d}, n={n}")
    points = np.empty((n, d))
    for j in range(d):
        perm = rng.permutation(n)
        offsets = np.full(n, 0.5) if midpoint else rng.random(n)
        points[:, j] = (perm + offsets) / n
    # guard against offset rounding up to the stratum boundary
    np.clip(points, 0.0, np.nextafter(1.0, 0.0), out=points)
    return DesignMatrix(points, tuple(f"x{j}" for j in range(d)))


# Direction-number rows (s, a, m) for sequence dimensions 2..24, from the
# standard Joe-Kuo new-6 table of primitive polynomials; dimension 1 is the
# plain van der Corput sequence in base 2.
_SOBOL_ROWS: tuple[tuple[int, int, tuple[int, ...]], ...] = (
    (1, 0, (1,)),
    (2, 1, (1, 3)),
    (3, 1, (1, 3, 1)),
    (3, 2, (1, 1, 1)),
    (4, 1, (1, 1, 3, 3)),
    (4, 4, (1, 3, 5, 13)),
    (5, 2, (1, 1, 5, 5, 17)),
    (5, 4, (1, 1, 5, 5, 5)),
    (5, 7, (1, 1, 7, 11, 19)),
    (5, 11, (1, 1, 5, 1, 1)),
    (5, 13, (1, 1, 1, 3, 11)),
    (5, 14, (1, 3, 5, 5, 31)),
    (6, 1, (1, 3, 3, 9, 7, 49)),
    (6, 13, (1, 1, 1, 15, 21, 21)),
    (6, 16, (1, 3, 1, 13, 27, 49)),
    (6, 19, (1, 1, 1, 15, 7, 5)),
    (6, 22, (1, 3, 1, 15, 13, 25)),
    (6, 25, (1, 1, 5, 5, 19, 61)),
    (7, 1, (1, 3, 7, 11, 23, 15, 103)),
    (7, 4, (1, 3, 7, 13, 13, 15, 69)),
    (7, 7, (1, 1, 3, 13, 7, 35, 63)),
    (7, 8, (1, 3, 5, 9, 1, 25, 53)),
    (7, 14, (1, 3, 1, 13, 9, 35, 107)),
)

SOBOL_MAX_DIM = len(_SOBOL_ROWS) + 1
SOBOL_BITS = 32


def sobol_direction_vectors(dim_index: int, nbits: int = SOBOL_BITS) -> list[int]:
    """32-bit direction integers v_1..v_nbits for one sequence dimension (0-based)."""
    if dim_index == 0:
        return [1 << (nbits - k) for k in range(1, nbits + 1)]
    s, a, m = _SOBOL_ROWS[dim_index - 1]
    v = [m[k] << (nbits - k - 1) for k in range(s)]
    for k in range(s, nbits):
        new = v[k - s] ^ (v[k - s] >> s)
        for j in range(1, s):
            if (a >> (s - 1 - j)) & 1:
                new ^= v[k - j]
        v.append(new)
    return v


def gen_sobol(d: int, n: int, skip: int = 0) -> DesignMatrix:
    """Points skip+1 .. skip+n of the Sobol sequence, Gray-code indexed.

    The index-0 point (all zeros) is always dropped before `skip` applies:
    a zero coordinate would pin every parameter at its lower bound at once.
    Deterministic; two calls with equal arguments are bit-identical.
    """
    if d < 1:
        raise ValueError(f"need d >= 1, got {d}")
    if d > SOBOL_MAX_DIM:
        raise DimensionTooLargeError(
            f"{d} dimensions requested; direction numbers shipped for {SOBOL_MAX_DIM}"
        )
    if n < 0 or skip < 0:
        raise ValueError("n and skip must be nonnegative")
    names = tuple(f"x{j}" for j in range(d))
    if n == 0:
        return DesignMatrix(np.empty((0, d)), names)
    vectors = [sobol_direction_vectors(j) for j in range(d)]
    scale = 1.0 / 2.0**SOBOL_BITS
    state = [0] * d
    out = np.empty((n, d))
    for i in range(skip + n):
        c = (~i & (i + 1)).bit_length()  # 1-based index of lowest zero bit of i
        for j in range(d):
            state[j] ^= vectors[j][c - 1]
        if i >= skip:
            row = i - skip
            for j in range(d):
                out[row, j] = state[j] * scale
    return DesignMatrix(out, names)


def materialize(design: DesignMatrix, space: ParamSpace) -> list[dict[str, ParamValue]]:
    """Map every design row through the space; preserves row order."""
    if design.points.shape[0] and design.points.shape[1] != len(space):
        raise ValueError(
            f"design has {design.points.shape[1]} columns for {len(space)} parameters"
        )
    return [unit_to_config(space, row) for row in design.points]


def design_size(design: SamplingDesign, space: ParamSpace) -> int:
    """Number of trials the design will produce over the given space."""
    if isinstance(design, FullFactorial):
        sizes = []
        for name, dist in space.items():
            support = enumerable_support(dist)
            if support is None:
                raise NotEnumerableError(name)
            sizes.append(len(support))
        return math.prod(sizes)
    return design.n


def generate_design(
    design: SamplingDesign, space: ParamSpace, rng: np.random.Generator
) -> list[dict[str, ParamValue]]:
    """Produce the full list of configs for any design variant."""
    if isinstance(design, FullFactorial):
        return gen_full_factorial(space)
    if isinstance(design, LatinHypercube):
        matrix = gen_latin_hypercube(len(space), design.n, rng, midpoint=design.midpoint)
        return materialize(DesignMatrix(matrix.points, tuple(space.names)), space)
    if isinstance(design, Sobol):
        matrix = gen_sobol(len(space), design.n, design.skip)
        return materialize(DesignMatrix(matrix.points, tuple(space.names)), space)
    raise TypeError(f"unknown design {design!r}")
