"""Truncated Lebesgue-Poisson integration on a product quadrature grid.

The discretized measure charges finite node configurations.  Three policies
handle tuples that revisit a spatial node:

* ``exclude`` (default): only tuples with pairwise distinct spatial nodes
  contribute.  The restricted measure is the Lebesgue-Poisson measure of the
  finite node set conditioned on pinpointing, so every combinatorial identity
  (Minlos, duality, convolution) is exact, and the series is finite.
* ``merge``: all tuples contribute; marks at a coincident position are summed
  into a single atom before evaluation.
* ``separate``: all tuples contribute and coincident entries are kept as
  separate evaluation slots, which reproduces the continuum product series
  (e.g. the closed-form exponential of product functions) to truncation error.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterator

from .grids import GridSpec
from .measures import Atom, FiniteMeasure

ENUM_BUDGET = 5_000_000


@dataclass(frozen=True)
class LPResult:
    value: float
    error_estimate: float
    level_sums: tuple[float, ...]


_CONFIG_CACHE: dict = {}
_PAIR_CACHE: dict = {}
_MULTISET_CACHE: dict = {}
_CACHE_LIMIT = 8


def _cached(cache: dict, grid: GridSpec, n_max: int, build):
    key = (id(grid), n_max)
    hit = cache.get(key)
    if hit is not None and hit[0] is grid:
        return hit[1]
    data = list(build(grid, n_max))
    if len(cache) >= _CACHE_LIMIT:
        cache.clear()
    cache[key] = (grid, data)
    return data


def iter_configs(grid: GridSpec, n_max: int) -> list[tuple[FiniteMeasure, float]]:
    """Distinct-spatial-node configurations of size <= n_max with weights.

    Results are memoized per (grid, n_max) since identity checks evaluate
    many integrands over the same enumeration.
    """
    return _cached(_CONFIG_CACHE, grid, n_max, _gen_configs)


def iter_disjoint_pairs(
    grid: GridSpec, n_max: int
) -> list[tuple[FiniteMeasure, FiniteMeasure, FiniteMeasure, float]]:
    """Ordered pairs of spatially disjoint configurations, total size <= n_max.

    Yields (xi1, xi2, xi1 + xi2, weight(xi1)*weight(xi2)); memoized per
    (grid, n_max).
    """
    return _cached(_PAIR_CACHE, grid, n_max, _gen_disjoint_pairs)


def _gen_configs(
    grid: GridSpec, n_max: int
) -> Iterator[tuple[FiniteMeasure, float]]:
    """Weight of a configuration is the product of its node weights; the 1/n!
    of the defining series cancels against the n! orderings of a set.
    """
    S, M = grid.n_space, grid.n_marks
    positions = grid.position_tuples()
    marks = grid.mark_grid.nodes
    w = grid.mark_grid.weights
    u = grid.space_grid.weights
    top = min(n_max, S)
    if (1 + M) ** S > ENUM_BUDGET:
        raise ValueError("grid too large for configuration enumeration")
    yield FiniteMeasure(), 1.0
    for n in range(1, top + 1):
        for sites in itertools.combinations(range(S), n):
            site_w = math.prod(u[i] for i in sites)
            for js in itertools.product(range(M), repeat=n):
                weight = site_w * math.prod(w[j] for j in js)
                atoms = tuple(
                    sorted(
                        (Atom(float(marks[j]), positions[i]) for j, i in zip(js, sites)),
                        key=lambda a: a.position,
                    )
                )
                yield FiniteMeasure.unchecked(atoms), weight


def _gen_disjoint_pairs(
    grid: GridSpec, n_max: int
) -> Iterator[tuple[FiniteMeasure, FiniteMeasure, float]]:
    S, M = grid.n_space, grid.n_marks
    positions = grid.position_tuples()
    marks = grid.mark_grid.nodes
    w = grid.mark_grid.weights
    u = grid.space_grid.weights
    if (1 + 2 * M) ** S > ENUM_BUDGET:
        raise ValueError("grid too large for pair enumeration")
    # per spatial site: absent, or (owner in {1,2}, mark index j)
    states = [None] + [(o, j) for o in (1, 2) for j in range(M)]
    for assign in itertools.product(states, repeat=S):
        occupied = [(i, st) for i, st in enumerate(assign) if st is not None]
        if len(occupied) > n_max:
            continue
        weight = 1.0
        parts: tuple[list, list] = ([], [])
        for i, (owner, j) in occupied:
            weight *= w[j] * u[i]
            parts[owner - 1].append(Atom(float(marks[j]), positions[i]))
        xi1 = FiniteMeasure.unchecked(tuple(sorted(parts[0], key=lambda a: a.position)))
        xi2 = FiniteMeasure.unchecked(tuple(sorted(parts[1], key=lambda a: a.position)))
        union = FiniteMeasure.unchecked(
            tuple(sorted(parts[0] + parts[1], key=lambda a: a.position))
        )
        yield xi1, xi2, union, weight


def _iter_multisets(grid: GridSpec, n_max: int):
    """Multisets of product nodes, as (n, eta, coeff) with coeff prod(w)/prod(m_k!).

    Coincident entries are kept as separate atom slots; memoized per
    (grid, n_max).
    """
    return _cached(_MULTISET_CACHE, grid, n_max, _gen_multisets)


def _gen_multisets(grid: GridSpec, n_max: int):
    P = grid.n_nodes
    count = sum(math.comb(P + n - 1, n) for n in range(n_max + 1))
    if count > ENUM_BUDGET:
        raise ValueError(
            f"multiset enumeration needs {count} terms (budget {ENUM_BUDGET})"
        )
    w = grid.prod_w
    positions = [grid.node(p)[1] for p in range(P)]
    s_vals = grid.prod_s
    for n in range(1, n_max + 1):
        for combo in itertools.combinations_with_replacement(range(P), n):
            coeff = math.prod(w[p] for p in combo)
            for _, group in itertools.groupby(combo):
                coeff /= math.factorial(sum(1 for _ in group))
            atoms = tuple(
                sorted(
                    (Atom(float(s_vals[p]), positions[p]) for p in combo),
                    key=lambda a: a.position,
                )
            )
            yield n, FiniteMeasure.unchecked(atoms), coeff


def lp_integrate(
    G: Callable[[FiniteMeasure], float],
    grid: GridSpec,
    n_max: int = 20,
    policy: str | None = None,
) -> LPResult:
    """Integrate G against the truncated discretized Lebesgue-Poisson measure.

    The error estimate is the magnitude of the last computed series term;
    it is zero when the enumeration exhausts the series (exclude policy with
    n_max >= number of spatial nodes).
    """
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    if policy is None:
        policy = "exclude" if grid.exclude_repeated_nodes else "merge"
    if policy not in ("exclude", "merge", "separate"):
        raise ValueError(f"unknown node policy {policy!r}")

    levels = [0.0] * (n_max + 1)
    if policy == "exclude":
        for eta, weight in iter_configs(grid, n_max):
            levels[len(eta)] += weight * G(eta)
        exhausted = n_max >= grid.n_space
    else:
        levels[0] = float(G(FiniteMeasure()))
        for n, eta, coeff in _iter_multisets(grid, n_max):
            if policy == "merge":
                eta = FiniteMeasure().add(eta)
            levels[n] += coeff * G(eta)
        exhausted = False

    value = math.fsum(levels)
    error = 0.0 if exhausted else abs(levels[n_max]) if levels else 0.0
    return LPResult(value=value, error_estimate=error, level_sums=tuple(levels))
