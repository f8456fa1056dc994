"""K-transform calculus on finite discrete measures.

K maps quasi-observables (functions of finite measures) to observables via
the sum over sub-measures; its Moebius inverse, the star-convolution that K
turns into a pointwise product, Lebesgue-Poisson exponents, and the two
combinatorial Fubini identities used throughout the dynamics modules.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .grids import GridSpec
from .lebesgue_poisson import LPResult, iter_configs, iter_disjoint_pairs, lp_integrate
from .measures import FiniteMeasure

STAR_CONV_MAX_ATOMS = 18


@dataclass(frozen=True)
class SupportWindow:
    """Bounded-support metadata: box x mark interval, atom count cap, bound."""

    box: tuple[tuple[float, float], ...]
    count: int
    mark_interval: tuple[float, float]
    bound: float


@dataclass(frozen=True)
class CombinatorialFunction:
    """A function of finite measures, optionally with declared bounded support."""

    evaluator: Callable[[FiniteMeasure], float]
    window: SupportWindow | None = None

    def __call__(self, eta: FiniteMeasure) -> float:
        if self.window is not None:
            if len(eta) > self.window.count:
                return 0.0
            lo_m, hi_m = self.window.mark_interval
            for a in eta.atoms:
                if not lo_m <= a.mark <= hi_m:
                    return 0.0
                if not all(
                    lo <= c <= hi for c, (lo, hi) in zip(a.position, self.window.box)
                ):
                    return 0.0
        return self.evaluator(eta)


def tabulated(values: dict[FiniteMeasure, float],
              window: SupportWindow | None = None) -> CombinatorialFunction:
    """Function given by a measure -> value table (zero off the table)."""
    return CombinatorialFunction(lambda eta: values.get(eta, 0.0), window=window)


def indicator_zero() -> CombinatorialFunction:
    return CombinatorialFunction(lambda eta: 1.0 if len(eta) == 0 else 0.0)


def random_bbs(
    grid: GridSpec,
    rng: np.random.Generator,
    max_atoms: int = 3,
    scale: float = 1.0,
) -> CombinatorialFunction:
    """Random bounded function supported on grid configurations with few atoms."""
    values = {
        eta: scale * rng.uniform(-1.0, 1.0)
        for eta, _ in iter_configs(grid, max_atoms)
    }
    window = SupportWindow(
        box=grid.space_grid.box,
        count=max_atoms,
        mark_interval=grid.mark_grid.window,
        bound=scale,
    )
    return tabulated(values, window=window)


# ---------------------------------------------------------------------------
# transforms


def _size_cap(G) -> int | None:
    """Atom-count cap implied by a declared support window, if any."""
    window = getattr(G, "window", None)
    return None if window is None else window.count


def k_transform(G, eta: FiniteMeasure) -> float:
    """(KG)(eta) = sum of G over all sub-measures of eta."""
    return math.fsum(G(xi) for xi in eta.sub_measures(max_atoms=_size_cap(G)))


def k_inverse(F, eta: FiniteMeasure) -> float:
    """Moebius inversion: signed sum of F over sub-measures."""
    n = len(eta)
    return math.fsum(
        (-1.0) ** (n - len(xi)) * F(xi)
        for xi in eta.sub_measures(max_atoms=_size_cap(F))
    )


def star_convolution(G1, G2, eta: FiniteMeasure) -> float:
    """Sum over 3-colorings eta = xi1 + xi2 + xi3 of G1(xi1+xi2) G2(xi2+xi3)."""
    atoms = eta.atoms
    n = len(atoms)
    if n > STAR_CONV_MAX_ATOMS:
        raise ValueError(f"refusing 3^{n} star-convolution terms")
    total = []
    for colors in itertools.product(range(3), repeat=n):
        parts: tuple[list, list, list] = ([], [], [])
        for a, c in zip(atoms, colors):
            parts[c].append(a)
        left = FiniteMeasure.unchecked(
            tuple(sorted(parts[0] + parts[1], key=lambda a: a.position))
        )
        right = FiniteMeasure.unchecked(
            tuple(sorted(parts[1] + parts[2], key=lambda a: a.position))
        )
        total.append(G1(left) * G2(right))
    return math.fsum(total)


def lp_exponent(f, eta: FiniteMeasure) -> float:
    """e_lambda(f, eta): product of f(mark, position) over atoms; 1 at eta = 0."""
    out = 1.0
    for a in eta.atoms:
        out *= f(a.mark, a.position)
    return out


def lp_exponent_function(f) -> CombinatorialFunction:
    return CombinatorialFunction(lambda eta: lp_exponent(f, eta))


# ---------------------------------------------------------------------------
# identities on the discretized Lebesgue-Poisson measure


def minlos_check_1(G, H, grid: GridSpec, n_max: int) -> tuple[float, float, float]:
    """Both sides of the split/merge identity; exact on the discrete measure.

    lhs: double integral of G(xi1+xi2) H(xi1, xi2) over spatially disjoint
    pairs with total size <= n_max.  rhs: single integral over eta of
    G(eta) * sum over sub-measure splits.
    """
    lhs_terms = [
        weight * G(union) * H(xi1, xi2)
        for xi1, xi2, union, weight in iter_disjoint_pairs(grid, n_max)
    ]
    rhs_terms = []
    for eta, weight in iter_configs(grid, n_max):
        g = G(eta)
        if g == 0.0:
            continue
        inner = math.fsum(H(xi, _complement(eta, xi)) for xi in eta.sub_measures())
        rhs_terms.append(weight * g * inner)
    lhs = math.fsum(lhs_terms)
    rhs = math.fsum(rhs_terms)
    return lhs, rhs, abs(lhs - rhs)


def minlos_check_2(H, grid: GridSpec, n_max: int) -> tuple[float, float, float]:
    """Both sides of the atom-sum / insertion identity.

    lhs sums H(eta, s_x, x) over atoms of eta (|tau(eta)| <= n_max); rhs
    integrates insertions at unoccupied nodes over eta with
    |tau(eta)| <= n_max - 1, the matched truncation.
    """
    lhs_terms = []
    for eta, weight in iter_configs(grid, n_max):
        for a in eta.atoms:
            lhs_terms.append(weight * H(eta, a.mark, a.position))
    rhs_terms = []
    node_w = grid.prod_w
    nodes = [grid.node(p) for p in range(grid.n_nodes)]
    for eta, weight in iter_configs(grid, n_max - 1):
        occupied = set(eta.positions)
        for (s, x), wn in zip(nodes, node_w):
            if x in occupied:
                continue
            rhs_terms.append(weight * wn * H(eta.plus_atom(s, x), s, x))
    lhs = math.fsum(lhs_terms)
    rhs = math.fsum(rhs_terms)
    return lhs, rhs, abs(lhs - rhs)


def correlation_pairing(G, k, grid: GridSpec, n_max: int = 20) -> float:
    """<G, k> against the discretized Lebesgue-Poisson measure."""
    return lp_integrate(lambda eta: G(eta) * k(eta), grid, n_max).value


def kg_growth_check(G: CombinatorialFunction, eta_samples) -> tuple[bool, float]:
    """Polynomial growth bound for KG with the explicit constant C * 2^N.

    Returns (all samples within bound, max observed |KG| / (1+|tau cap Lambda|)^N
    relative to C * 2^N).
    """
    if G.window is None:
        raise ValueError("growth check needs a declared support window")
    C, N, box = G.window.bound, G.window.count, G.window.box
    admissible = C * 2.0 ** N
    worst = 0.0
    for eta in eta_samples:
        in_box = len(eta.restrict(box))
        bound = admissible * (1.0 + in_box) ** N
        worst = max(worst, abs(k_transform(G, eta)) / bound)
    return worst <= 1.0, worst


def _complement(eta: FiniteMeasure, xi: FiniteMeasure) -> FiniteMeasure:
    drop = set(xi.positions)
    return FiniteMeasure.unchecked(
        tuple(a for a in eta.atoms if a.position not in drop)
    )
