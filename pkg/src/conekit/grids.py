"""Quadrature discretization of the reference intensity on mark x space windows.

The mark axis carries a Gauss-Legendre rule after a log substitution (the
default mark intensity theta*exp(-s)/s is smooth in log s); the spatial box
carries a uniform-cell midpoint rule.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np


def nu_theta_density(s: float, theta: float) -> float:
    """Gamma-process mark intensity density theta*exp(-s)/s."""
    if s <= 0.0:
        raise ValueError(f"mark must be positive, got {s}")
    if theta <= 0.0:
        raise ValueError(f"theta must be positive, got {theta}")
    return theta * math.exp(-s) / s


@dataclass(frozen=True)
class MarkGrid:
    nodes: np.ndarray    # strictly increasing, in [a, b], a > 0
    weights: np.ndarray  # positive quadrature weights for the mark intensity
    window: tuple[float, float]
    theta: float | None = None

    def __post_init__(self):
        a, b = self.window
        if not a > 0.0:
            raise ValueError("mark window must satisfy a > 0")
        if not b > a:
            raise ValueError("mark window must satisfy b > a")
        if np.any(np.diff(self.nodes) <= 0):
            raise ValueError("mark nodes must be strictly increasing")
        if np.any(self.weights <= 0):
            raise ValueError("mark weights must be positive")

    @property
    def total(self) -> float:
        return float(self.weights.sum())


@dataclass(frozen=True)
class SpaceGrid:
    nodes: np.ndarray    # (S, d) positions
    weights: np.ndarray  # positive quadrature weights for sigma
    box: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if len({tuple(x) for x in self.nodes}) != len(self.nodes):
            raise ValueError("space nodes must be distinct")
        if np.any(self.weights <= 0):
            raise ValueError("space weights must be positive")

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    def position(self, i: int) -> tuple[float, ...]:
        return tuple(float(c) for c in self.nodes[i])


@dataclass(frozen=True)
class GridSpec:
    """Product quadrature nodes (s_j, x_i) with weights w_j * u_i."""

    mark_grid: MarkGrid
    space_grid: SpaceGrid
    exclude_repeated_nodes: bool = True
    # flattened product arrays, index p = j * S + i
    prod_s: np.ndarray = field(init=False, repr=False)
    prod_x: np.ndarray = field(init=False, repr=False)
    prod_w: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        s = np.repeat(self.mark_grid.nodes, self.n_space)
        x = np.tile(self.space_grid.nodes, (self.n_marks, 1))
        w = np.repeat(self.mark_grid.weights, self.n_space) * np.tile(
            self.space_grid.weights, self.n_marks
        )
        object.__setattr__(self, "prod_s", s)
        object.__setattr__(self, "prod_x", x)
        object.__setattr__(self, "prod_w", w)

    @property
    def n_marks(self) -> int:
        return len(self.mark_grid.nodes)

    @property
    def n_space(self) -> int:
        return len(self.space_grid.nodes)

    @property
    def n_nodes(self) -> int:
        return self.n_marks * self.n_space

    @property
    def total_mass(self) -> float:
        return self.mark_grid.total * self.space_grid.total

    def node(self, p: int) -> tuple[float, tuple[float, ...]]:
        return float(self.prod_s[p]), tuple(float(c) for c in self.prod_x[p])

    def nodes_iter(self):
        for p in range(self.n_nodes):
            yield (p,) + self.node(p)

    def position_tuples(self) -> list[tuple[float, ...]]:
        return [self.space_grid.position(i) for i in range(self.n_space)]


def _log_gauss_mark_grid(a, b, n, density) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre on [log a, log b]; weights absorb the density and ds."""
    t, glw = np.polynomial.legendre.leggauss(n)
    lo, hi = math.log(a), math.log(b)
    t = 0.5 * (hi - lo) * t + 0.5 * (hi + lo)
    s = np.exp(t)
    w = 0.5 * (hi - lo) * glw * s * np.array([density(si) for si in s])
    return s, w


def _midpoint_space_grid(box, counts) -> tuple[np.ndarray, np.ndarray]:
    axes = []
    cell = 1.0
    for (lo, hi), n in zip(box, counts):
        h = (hi - lo) / n
        axes.append(lo + h * (np.arange(n) + 0.5))
        cell *= h
    nodes = np.array(list(itertools.product(*axes)))
    return nodes, np.full(len(nodes), cell)


def build_grid(
    mark_window,
    theta=1.0,
    mark_nodes=16,
    box=((0.0, 1.0),),
    space_nodes=4,
    exclude_repeated_nodes=True,
    nu_density=None,
    sigma_density=None,
) -> GridSpec:
    """Assemble the product quadrature; deterministic for fixed arguments.

    nu_density overrides the default theta*exp(-s)/s mark density;
    sigma_density (a function of position) modulates the Lebesgue midpoint
    weights.
    """
    a, b = float(mark_window[0]), float(mark_window[1])
    if a <= 0.0 or b <= a:
        raise ValueError(f"invalid mark window [{a}, {b}]")
    box = tuple((float(lo), float(hi)) for lo, hi in box)
    if any(hi <= lo for lo, hi in box):
        raise ValueError(f"empty box {box}")
    if isinstance(space_nodes, int):
        space_nodes = (space_nodes,) * len(box)

    density = nu_density or (lambda s: nu_theta_density(s, theta))
    m_nodes, m_weights = _log_gauss_mark_grid(a, b, int(mark_nodes), density)
    x_nodes, x_weights = _midpoint_space_grid(box, space_nodes)
    if sigma_density is not None:
        x_weights = x_weights * np.array([sigma_density(x) for x in x_nodes])

    return GridSpec(
        mark_grid=MarkGrid(m_nodes, m_weights, (a, b),
                           theta=None if nu_density else theta),
        space_grid=SpaceGrid(x_nodes, x_weights, box),
        exclude_repeated_nodes=exclude_repeated_nodes,
    )


def grid_from_config(cfg: dict) -> GridSpec:
    """Build a GridSpec from its JSON configuration record."""
    return build_grid(
        mark_window=cfg["mark_window"],
        theta=cfg.get("theta", 1.0),
        mark_nodes=cfg.get("mark_nodes", 16),
        box=cfg["box"],
        space_nodes=cfg.get("space_nodes", 4),
        exclude_repeated_nodes=cfg.get("exclude_repeated_nodes", True),
    )
