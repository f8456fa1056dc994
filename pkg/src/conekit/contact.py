"""Contact-model correlation hierarchy on the product grid.

The truncated hierarchy d/dt k^(n) = (M+V) k^(n) + W k^(n-1) is lower
triangular; the generator M+V acts slot-wise as a single node-space matrix
Z = T - diag(m), so its exponential factorizes across tensor slots.  Levels
n >= 2 are advanced by the variation-of-constants integral with composite
Gauss panels; a fine-step RK4 integrator of the coupled system is kept as
an independent oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import expm

from .grids import GridSpec
from .measures import FiniteMeasure

_GAUSS_ORDER = 8
_SLOT_LETTERS = "abcdefgh"


@dataclass(frozen=True)
class ContactKernels:
    """Mortality m(s), mark transfer q(s_source, s_target), dispersal a(dx)."""

    m: Callable[[float], float]
    q: Callable[[float, float], float]
    a: Callable[[np.ndarray], float]


@dataclass(frozen=True)
class ContactRates:
    kappa: np.ndarray  # per-node branching rate (quadrature row sums)
    r: np.ndarray      # kappa - m per node
    R: float           # max of r over the grid
    mu: float          # max of m over the grid


@dataclass
class HierarchyState:
    levels: dict[int, np.ndarray]
    t: float

    @property
    def n_max(self) -> int:
        return max(self.levels)

    def copy(self) -> "HierarchyState":
        return HierarchyState({n: v.copy() for n, v in self.levels.items()}, self.t)

    def max_asymmetry(self) -> float:
        """Largest relative deviation from slot-permutation symmetry."""
        worst = 0.0
        for n, k in self.levels.items():
            if n < 2:
                continue
            scale = max(np.max(np.abs(k)), 1e-300)
            for axis in range(n - 1):
                swapped = np.swapaxes(k, axis, axis + 1)
                worst = max(worst, np.max(np.abs(k - swapped)) / scale)
        return worst


class ContactOperators:
    """Grid tabulation of the hierarchy operators for one kernel set."""

    def __init__(self, kernels: ContactKernels, grid: GridSpec):
        self.grid = grid
        self.kernels = kernels
        P = grid.n_nodes
        s, x, wt = grid.prod_s, grid.prod_x, grid.prod_w
        self.m_diag = np.array([kernels.m(si) for si in s])
        # QA[p_src, p_tgt] = q(s_src, s_tgt) * a(x_src - x_tgt), no weights
        self.QA = np.array(
            [[kernels.q(s[j], s[i]) * kernels.a(x[j] - x[i]) for i in range(P)]
             for j in range(P)]
        )
        a_vals = np.array(
            [[kernels.a(x[j] - x[i]) for i in range(P)] for j in range(P)]
        )
        if not np.allclose(a_vals, a_vals.T, rtol=0, atol=1e-12):
            raise ValueError("dispersal kernel must be even: a(-x) = a(x)")
        # convolution operator: (T k)(p) = sum_src QA[src, p] wt[src] k(src)
        self.T = (self.QA * wt[:, None]).T
        self.kappa = self.T.sum(axis=1)
        self.r = self.kappa - self.m_diag
        # slot generator of M + V = A - diag(m)
        self.Z = self.T - np.diag(self.m_diag)
        self._expm_cache: dict[float, np.ndarray] = {}

    def rates(self) -> ContactRates:
        return ContactRates(
            kappa=self.kappa.copy(),
            r=self.r.copy(),
            R=float(self.r.max()),
            mu=float(self.m_diag.max()),
        )

    def _expm(self, t: float) -> np.ndarray:
        key = float(t)
        out = self._expm_cache.get(key)
        if out is None:
            out = expm(key * self.Z)
            self._expm_cache[key] = out
        return out

    def apply_slotwise(self, mat: np.ndarray, k: np.ndarray) -> np.ndarray:
        """Apply a node-space matrix along every tensor slot and sum."""
        out = np.zeros_like(k)
        for axis in range(k.ndim):
            out += self._apply_slot(mat, k, axis)
        return out

    def apply_exp(self, t: float, k: np.ndarray) -> np.ndarray:
        """exp(t (M+V)) k, using the slot factorization of the exponential."""
        E = self._expm(t)
        for axis in range(k.ndim):
            k = self._apply_slot(E, k, axis)
        return k

    @staticmethod
    def _apply_slot(mat: np.ndarray, k: np.ndarray, axis: int) -> np.ndarray:
        moved = np.tensordot(mat, k, axes=([1], [axis]))
        return np.moveaxis(moved, 0, axis)

    def apply_W(self, k_lower: np.ndarray, n: int) -> np.ndarray:
        """Insertion map from level n-1 tensors to level n tensors."""
        if n < 2:
            return np.zeros((self.grid.n_nodes,) * max(n, 1))
        letters = _SLOT_LETTERS[:n]
        out = np.zeros((self.grid.n_nodes,) * n)
        for i in range(n):
            rest = letters[:i] + letters[i + 1:]
            for j in range(n):
                if j == i:
                    continue
                out += np.einsum(
                    f"{letters[j]}{letters[i]},{rest}->{letters}",
                    self.QA, k_lower,
                )
        return out

    def rhs(self, state: dict[int, np.ndarray]) -> dict[int, np.ndarray]:
        """Coupled right-hand side of the truncated hierarchy."""
        out = {}
        for n in sorted(state):
            d = self.apply_slotwise(self.Z, state[n])
            if n >= 2:
                d += self.apply_W(state[n - 1], n)
            out[n] = d
        return out


def build_operators(kernels: ContactKernels, grid: GridSpec) -> ContactOperators:
    return ContactOperators(kernels, grid)


def rate_report(kernels: ContactKernels, grid: GridSpec) -> ContactRates:
    return ContactOperators(kernels, grid).rates()


# ---------------------------------------------------------------------------
# time evolution


def _gauss_panel(lo: float, hi: float):
    t, w = np.polynomial.legendre.leggauss(_GAUSS_ORDER)
    return 0.5 * (hi - lo) * t + 0.5 * (hi + lo), 0.5 * (hi - lo) * w


def evolve_hierarchy(
    k0: HierarchyState, t: float, steps: int, ops: ContactOperators
) -> HierarchyState:
    """Advance the hierarchy to time t by the recursive Duhamel representation.

    ``steps`` is the number of Gauss panels per unit time for the
    variation-of-constants integrals; nested levels reuse the same panel
    width.  Raises ArithmeticError when the result degenerates to NaN.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0.0:
        return k0.copy()
    h = t / steps
    cache: dict[tuple[int, float], np.ndarray] = {}

    def level(n: int, tau: float) -> np.ndarray:
        key = (n, round(tau, 14))
        hit = cache.get(key)
        if hit is not None:
            return hit
        val = ops.apply_exp(tau, k0.levels[n])
        if n >= 2 and tau > 0.0:
            panels = max(1, math.ceil(tau / h - 1e-12))
            edges = np.linspace(0.0, tau, panels + 1)
            for lo, hi in zip(edges[:-1], edges[1:]):
                nodes, weights = _gauss_panel(lo, hi)
                for tg, wg in zip(nodes, weights):
                    src = ops.apply_W(level(n - 1, tg), n)
                    val = val + wg * ops.apply_exp(tau - tg, src)
        cache[key] = val
        return val

    levels = {n: level(n, t) for n in sorted(k0.levels)}
    for v in levels.values():
        if np.any(np.isnan(v)):
            raise ArithmeticError("NaN encountered in hierarchy evolution")
    return HierarchyState(levels, k0.t + t)


def evolve_hierarchy_rk4(
    k0: HierarchyState, t: float, dt: float, ops: ContactOperators
) -> HierarchyState:
    """Classic fourth-order integration of the coupled system (test oracle)."""
    n_steps = max(1, round(t / dt))
    h = t / n_steps
    state = {n: v.copy() for n, v in k0.levels.items()}
    for _ in range(n_steps):
        f1 = ops.rhs(state)
        f2 = ops.rhs({n: state[n] + 0.5 * h * f1[n] for n in state})
        f3 = ops.rhs({n: state[n] + 0.5 * h * f2[n] for n in state})
        f4 = ops.rhs({n: state[n] + h * f3[n] for n in state})
        for n in state:
            state[n] = state[n] + (h / 6.0) * (
                f1[n] + 2.0 * f2[n] + 2.0 * f3[n] + f4[n]
            )
    for v in state.values():
        if np.any(np.isnan(v)):
            raise ArithmeticError("NaN encountered in RK4 evolution")
    return HierarchyState(state, k0.t + t)


# ---------------------------------------------------------------------------
# bound checks


def positivity_check(state: HierarchyState, tol: float | None = None) -> bool:
    """All tensor entries >= -tol (default 1e-9 of the largest entry)."""
    scale = max(np.max(np.abs(v)) for v in state.levels.values())
    if tol is None:
        tol = 1e-9 * max(scale, 1.0)
    return all(np.min(v) >= -tol for v in state.levels.values())


def upper_bound_check(
    state: HierarchyState,
    C: float,
    rates: ContactRates,
    k0: HierarchyState | None = None,
) -> dict[int, dict[str, float]]:
    """Per-level sup-norm against the a-priori growth bound.

    When k0 is supplied, the hypothesis ||k0^(n)|| <= C^n n! is verified
    first.  The bound branches on the sign of R = max(kappa - m).
    """
    if k0 is not None:
        for n, v in k0.levels.items():
            if np.max(np.abs(v)) > C ** n * math.factorial(n) * (1 + 1e-12):
                raise ValueError(f"initial data violates C^n n! hypothesis at n={n}")
    t, R = state.t, rates.R
    out = {}
    for n, v in state.levels.items():
        norm = float(np.max(np.abs(v)))
        growth = math.exp(t * R) if R < 0 else math.exp(t * n * R)
        bound = growth * (C + t) ** n * math.factorial(n)
        out[n] = {"norm": norm, "bound": bound, "margin": bound - norm}
    return out


def harmonic_number(n: int) -> float:
    """T_n = sum_{j=1}^{n-1} 1/j; the level-n activation time."""
    return sum(1.0 / j for j in range(1, n))


def lower_bound_params(
    k0_level1: np.ndarray, region: np.ndarray, ops: ContactOperators
) -> tuple[float, float]:
    """(alpha, beta) computed from data over a node-mask region B.

    alpha = min(inf_B k0^(1), inf_{B x B} q*a); beta = alpha * mass(B).
    Raises when alpha <= 0 or the smallness hypothesis beta < mu fails.
    """
    idx = np.flatnonzero(region)
    if idx.size == 0:
        raise ValueError("empty region")
    alpha = min(
        float(k0_level1[idx].min()),
        float(ops.QA[np.ix_(idx, idx)].min()),
    )
    if alpha <= 0.0:
        raise ValueError("alpha must be positive on the region")
    beta = alpha * float(ops.grid.prod_w[idx].sum())
    mu = float(ops.m_diag.max())
    if beta >= mu:
        raise ValueError(f"hypothesis beta < mu violated ({beta} >= {mu})")
    return alpha, beta


def lower_bound_check(
    state: HierarchyState,
    region: np.ndarray,
    alpha: float,
    beta: float,
    mu: float,
) -> dict[int, dict[str, float]]:
    """min over B^n of k^(n) against alpha^n e^((beta-mu) n t) n!, for t >= T_n."""
    idx = np.flatnonzero(region)
    t = state.t
    out = {}
    for n, v in state.levels.items():
        if t < harmonic_number(n) - 1e-12:
            continue
        sub = v[np.ix_(*([idx] * n))]
        low = float(sub.min())
        bound = alpha ** n * math.exp((beta - mu) * n * t) * math.factorial(n)
        out[n] = {"min": low, "bound": bound, "margin": low - bound}
    return out


# ---------------------------------------------------------------------------
# descendant operator and its dual, pointwise on grid measures


def hat_l_contact(G, eta: FiniteMeasure, kernels: ContactKernels,
                  grid: GridSpec) -> float:
    """Descendant operator of the contact generator at a grid measure.

    Quadrature insertions are restricted to spatial sites unoccupied in eta,
    the convention under which the operator is exactly adjoint to the dual
    on the discretized Lebesgue-Poisson measure.
    """
    if not eta:
        return 0.0
    occupied = set(eta.positions)
    nodes = [(p, *grid.node(p)) for p in range(grid.n_nodes)]
    wts = grid.prod_w
    terms = [-math.fsum(kernels.m(a.mark) for a in eta.atoms) * G(eta)]
    for a in eta.atoms:
        base = eta.drop(a.position)
        ax = np.asarray(a.position)
        for p, s, y in nodes:
            if y in occupied:
                continue
            rate = kernels.q(a.mark, s) * kernels.a(ax - np.asarray(y)) * wts[p]
            if rate == 0.0:
                continue
            terms.append(rate * (G(base.plus_atom(s, y)) + G(eta.plus_atom(s, y))))
    return math.fsum(terms)


def l_triangle_contact(k, eta: FiniteMeasure, kernels: ContactKernels,
                       grid: GridSpec) -> float:
    """Dual operator on correlation functions, same insertion convention."""
    if not eta:
        return 0.0
    occupied = set(eta.positions)
    nodes = [(p, *grid.node(p)) for p in range(grid.n_nodes)]
    wts = grid.prod_w
    terms = [-math.fsum(kernels.m(a.mark) for a in eta.atoms) * k(eta)]
    for y in eta.atoms:
        base = eta.drop(y.position)
        yx = np.asarray(y.position)
        for p, s, xp in nodes:
            if xp in occupied:
                continue
            rate = kernels.q(s, y.mark) * kernels.a(np.asarray(xp) - yx) * wts[p]
            if rate == 0.0:
                continue
            terms.append(rate * k(base.plus_atom(s, xp)))
        pair = math.fsum(
            kernels.q(b.mark, y.mark) * kernels.a(np.asarray(b.position) - yx)
            for b in base.atoms
        )
        if pair:
            terms.append(pair * k(base))
    return math.fsum(terms)
