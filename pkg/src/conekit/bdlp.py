"""Birth-death dynamics with pairwise competition (BDLP model).

The descendant operator splits into a diagonal part and three perturbations;
the admissibility conditions make the perturbations relatively bounded by the
diagonal part with explicit constants, which this module verifies numerically
on the discretized Lebesgue-Poisson measure.  The dual operator couples
hierarchy level n to level n+1, so the truncated correlation evolution takes
a closure rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .contact import HierarchyState, _SLOT_LETTERS
from .grids import GridSpec
from .lebesgue_poisson import iter_configs
from .measures import FiniteMeasure


@dataclass(frozen=True)
class BdlpKernels:
    """Mortality, symmetric mark kernels q+-, even displacement kernels a+-."""

    m: Callable[[float], float]
    q_plus: Callable[[float, float], float]
    q_minus: Callable[[float, float], float]
    a_plus: Callable[[np.ndarray], float]
    a_minus: Callable[[np.ndarray], float]


@dataclass(frozen=True)
class WeightedNormParams:
    """Weight C^{|tau(eta)|} exp(alpha * total mass) for the L1 norm."""

    alpha: float
    C: float

    def weight(self, eta: FiniteMeasure) -> float:
        return self.C ** len(eta) * math.exp(self.alpha * eta.total_mass())


def competition_load(kernels: BdlpKernels) -> Callable[[FiniteMeasure], float]:
    """D(eta): total mortality plus pairwise competition pressure."""

    def D(eta: FiniteMeasure) -> float:
        total = math.fsum(kernels.m(a.mark) for a in eta.atoms)
        for i, a in enumerate(eta.atoms):
            for j, b in enumerate(eta.atoms):
                if i == j:
                    continue
                total += kernels.q_minus(a.mark, b.mark) * kernels.a_minus(
                    np.asarray(a.position) - np.asarray(b.position)
                )
        return total

    return D


def grid_kappas(kernels: BdlpKernels, grid: GridSpec) -> tuple[float, float]:
    """Discrete stand-ins for the dispersal/competition kernel masses.

    Worst-case (max over grid positions) quadrature row sums, so the
    relative-bound constants remain valid upper bounds on the window.
    """
    x = grid.space_grid.nodes
    u = grid.space_grid.weights
    kp = km = 0.0
    for xi in x:
        kp = max(kp, sum(kernels.a_plus(xj - xi) * uj for xj, uj in zip(x, u)))
        km = max(km, sum(kernels.a_minus(xj - xi) * uj for xj, uj in zip(x, u)))
    return float(kp), float(km)


# ---------------------------------------------------------------------------
# descendant operator and dual, pointwise on grid measures


def hat_l_parts(
    G, eta: FiniteMeasure, kernels: BdlpKernels, grid: GridSpec
) -> tuple[float, float, float, float]:
    """The four components of the descendant operator at a grid measure."""
    if not eta:
        return 0.0, 0.0, 0.0, 0.0
    occupied = set(eta.positions)
    nodes = [(p, *grid.node(p)) for p in range(grid.n_nodes)]
    wts = grid.prod_w
    D = competition_load(kernels)
    v0 = -D(eta) * G(eta)

    v1_terms = []
    for a in eta.atoms:
        pressure = math.fsum(
            kernels.q_minus(a.mark, b.mark)
            * kernels.a_minus(np.asarray(a.position) - np.asarray(b.position))
            for b in eta.atoms
            if b.position != a.position
        )
        if pressure:
            v1_terms.append(pressure * G(eta.drop(a.position)))
    v1 = -math.fsum(v1_terms)

    v2_terms, v3_terms = [], []
    for a in eta.atoms:
        base = eta.drop(a.position)
        ax = np.asarray(a.position)
        for p, s, y in nodes:
            if y in occupied:
                continue
            rate = kernels.q_plus(a.mark, s) * kernels.a_plus(ax - np.asarray(y))
            if rate == 0.0:
                continue
            rate *= wts[p]
            v2_terms.append(rate * G(base.plus_atom(s, y)))
            v3_terms.append(rate * G(eta.plus_atom(s, y)))
    return v0, v1, math.fsum(v2_terms), math.fsum(v3_terms)


def hat_l_bdlp(G, eta, kernels, grid) -> float:
    return math.fsum(hat_l_parts(G, eta, kernels, grid))


def l_triangle_bdlp(
    k, eta: FiniteMeasure, kernels: BdlpKernels, grid: GridSpec
) -> float:
    """Dual operator; insertions at unoccupied sites make the duality exact."""
    if not eta:
        return 0.0
    occupied = set(eta.positions)
    nodes = [(p, *grid.node(p)) for p in range(grid.n_nodes)]
    wts = grid.prod_w
    D = competition_load(kernels)
    terms = [-D(eta) * k(eta)]
    # competition couples upward: -sum_x int q-(s_x, s) a-(x-y) k(eta + s d_y)
    for p, s, y in nodes:
        if y in occupied:
            continue
        rate = math.fsum(
            kernels.q_minus(a.mark, s)
            * kernels.a_minus(np.asarray(a.position) - np.asarray(y))
            for a in eta.atoms
        )
        if rate:
            terms.append(-rate * wts[p] * k(eta.plus_atom(s, y)))
    for y in eta.atoms:
        base = eta.drop(y.position)
        yx = np.asarray(y.position)
        for p, s, xp in nodes:
            if xp in occupied:
                continue
            rate = kernels.q_plus(s, y.mark) * kernels.a_plus(np.asarray(xp) - yx)
            if rate == 0.0:
                continue
            terms.append(rate * wts[p] * k(base.plus_atom(s, xp)))
        pair = math.fsum(
            kernels.q_plus(b.mark, y.mark)
            * kernels.a_plus(np.asarray(b.position) - yx)
            for b in base.atoms
        )
        if pair:
            terms.append(pair * k(base))
    return math.fsum(terms)


# ---------------------------------------------------------------------------
# admissibility conditions and relative bounds


def condition_check(
    kernels: BdlpKernels,
    alpha: float,
    C: float,
    beta: float,
    grid: GridSpec,
) -> dict:
    """Evaluate the four admissibility conditions on the grid.

    Slacks are (right side - left side) minima; the small-beta condition is
    strict, the others are non-strict.
    """
    s_nodes = grid.mark_grid.nodes
    w = grid.mark_grid.weights
    e_alpha = np.exp(alpha * s_nodes)
    m_vals = np.array([kernels.m(s) for s in s_nodes])

    slack_minus = math.inf
    slack_plus = math.inf
    for s, ms in zip(s_nodes, m_vals):
        qm = np.array([kernels.q_minus(s, t) for t in s_nodes])
        qp = np.array([kernels.q_plus(s, t) for t in s_nodes])
        slack_minus = min(slack_minus, beta * ms - float(qm @ (e_alpha * w)))
        slack_plus = min(
            slack_plus,
            beta * math.exp(alpha * s) * ms - float(qp @ (e_alpha * w)),
        )

    x = grid.space_grid.nodes
    displacements = [xi - xj for xi in x for xj in x]
    slack_compare = math.inf
    for s in s_nodes:
        for tau, et in zip(s_nodes, e_alpha):
            qp = kernels.q_plus(s, tau)
            qm = kernels.q_minus(s, tau)
            for dx in displacements:
                slack_compare = min(
                    slack_compare,
                    beta * et * qm * kernels.a_minus(dx) - qp * kernels.a_plus(dx),
                )

    kappa_plus, kappa_minus = grid_kappas(kernels, grid)
    lhs_small = kappa_plus + kappa_minus * C + 1.0 / C
    slack_small = 1.0 / (2.0 * beta) - lhs_small
    a0_proxy = beta * kappa_minus * C + kappa_plus * beta + beta / C

    conditions = {
        "beta_minus": {"slack": slack_minus, "passed": slack_minus >= 0.0},
        "beta_plus": {"slack": slack_plus, "passed": slack_plus >= 0.0},
        "beta_compare": {"slack": slack_compare, "passed": slack_compare >= 0.0},
        "small_beta": {"slack": slack_small, "passed": slack_small > 0.0},
    }
    return {
        "conditions": conditions,
        "kappa_plus": kappa_plus,
        "kappa_minus": kappa_minus,
        "beta": beta,
        "alpha": alpha,
        "C": C,
        "a0_proxy": a0_proxy,
        "passed": all(c["passed"] for c in conditions.values()),
    }


def weighted_l1_norm(
    G, params: WeightedNormParams, grid: GridSpec, n_max: int = 20
) -> float:
    """L1 norm of G against the weighted discretized Lebesgue-Poisson measure."""
    return math.fsum(
        weight * abs(G(eta)) * params.weight(eta)
        for eta, weight in iter_configs(grid, n_max)
    )


def relative_bound_estimate(
    G_samples,
    kernels: BdlpKernels,
    params: WeightedNormParams,
    beta: float,
    grid: GridSpec,
    n_max: int = 20,
) -> dict:
    """Observed ||L_i G|| / ||L_0 G|| ratios against their proof constants."""
    kappa_plus, kappa_minus = grid_kappas(kernels, grid)
    bounds = (
        beta * kappa_minus * params.C,
        kappa_plus * beta,
        beta / params.C,
    )
    configs = list(iter_configs(grid, n_max))
    ratios = []
    skipped = 0
    for G in G_samples:
        norms = [0.0, 0.0, 0.0, 0.0]
        for eta, weight in configs:
            parts = hat_l_parts(G, eta, kernels, grid)
            wgt = weight * params.weight(eta)
            for i, v in enumerate(parts):
                norms[i] += wgt * abs(v)
        if norms[0] == 0.0:
            skipped += 1
            continue
        ratios.append(tuple(norms[i] / norms[0] for i in (1, 2, 3)))
    max_ratios = tuple(
        max((r[i] for r in ratios), default=0.0) for i in range(3)
    )
    return {
        "ratios": ratios,
        "max_ratios": max_ratios,
        "bounds": bounds,
        "within": tuple(
            mr <= b + 1e-8 for mr, b in zip(max_ratios, bounds)
        ),
        "skipped": skipped,
    }


# ---------------------------------------------------------------------------
# truncated correlation evolution


class BdlpTensorOps:
    """Grid tabulation of the dual operator acting on dense level tensors."""

    def __init__(self, kernels: BdlpKernels, grid: GridSpec):
        self.grid = grid
        P = grid.n_nodes
        s, x, wt = grid.prod_s, grid.prod_x, grid.prod_w
        self.wt = wt
        self.m_diag = np.array([kernels.m(si) for si in s])
        self.QAm = np.array(
            [[kernels.q_minus(s[i], s[j]) * kernels.a_minus(x[i] - x[j])
              for j in range(P)] for i in range(P)]
        )
        self.QAp = np.array(
            [[kernels.q_plus(s[i], s[j]) * kernels.a_plus(x[i] - x[j])
              for j in range(P)] for i in range(P)]
        )
        # replacement operator: target slot i, integrated source p'
        self.Tp = (self.QAp * wt[:, None]).T
        self._diag_cache: dict[int, np.ndarray] = {}

    def diagonal(self, n: int) -> np.ndarray:
        """D(eta) tabulated on level-n node tuples."""
        hit = self._diag_cache.get(n)
        if hit is not None:
            return hit
        P = len(self.m_diag)
        out = np.zeros((P,) * n)
        for i in range(n):
            shape = [1] * n
            shape[i] = P
            out += self.m_diag.reshape(shape)
            for j in range(i + 1, n):
                # QAm is symmetric, so ordered pairs (i, j) and (j, i) agree
                full = [1] * n
                full[i] = P
                full[j] = P
                out += 2.0 * self.QAm.reshape(full)
        self._diag_cache[n] = out
        return out

    def down_coupling(self, k_upper: np.ndarray, n: int) -> np.ndarray:
        """Contraction of a level-(n+1) tensor into level n (competition term)."""
        mat = (self.QAm * self.wt[None, :]).T  # mat[p', p_i]
        contracted = np.tensordot(k_upper, mat, axes=([n], [0]))
        out = np.zeros(k_upper.shape[:-1])
        for i in range(n):
            diag = np.diagonal(contracted, axis1=i, axis2=n)
            out += np.moveaxis(diag, -1, i)
        return out

    def insert_apply(self, k: np.ndarray) -> np.ndarray:
        out = np.zeros_like(k)
        for axis in range(k.ndim):
            moved = np.tensordot(self.Tp, k, axes=([1], [axis]))
            out += np.moveaxis(moved, 0, axis)
        return out

    def w_plus(self, k_lower: np.ndarray, n: int) -> np.ndarray:
        if n < 2:
            return np.zeros((len(self.m_diag),) * max(n, 1))
        letters = _SLOT_LETTERS[:n]
        out = np.zeros((len(self.m_diag),) * n)
        for i in range(n):
            rest = letters[:i] + letters[i + 1:]
            for j in range(n):
                if j == i:
                    continue
                out += np.einsum(
                    f"{letters[j]}{letters[i]},{rest}->{letters}",
                    self.QAp, k_lower,
                )
        return out

    def rhs(self, state: dict[int, np.ndarray],
            closure: str = "zero",
            boundary: np.ndarray | None = None) -> dict[int, np.ndarray]:
        n_top = max(state)
        out = {}
        for n in sorted(state):
            k = state[n]
            d = -self.diagonal(n) * k + self.insert_apply(k)
            if n >= 2:
                d += self.w_plus(state[n - 1], n)
            if n < n_top:
                d -= self.down_coupling(state[n + 1], n)
            elif closure == "freeze" and boundary is not None:
                d -= self.down_coupling(boundary, n)
            out[n] = d
        return out


def evolve_correlations_bdlp(
    k0: HierarchyState,
    t: float,
    steps: int,
    kernels: BdlpKernels,
    grid: GridSpec,
    closure: str = "zero",
    boundary: np.ndarray | None = None,
) -> HierarchyState:
    """RK4 integration of the truncated dual-operator system.

    The level coupling to n_max + 1 is dropped (closure="zero") or replaced
    by a constant boundary tensor (closure="freeze").
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if closure not in ("zero", "freeze"):
        raise ValueError(f"unknown closure {closure!r}")
    ops = BdlpTensorOps(kernels, grid)
    h = t / steps
    state = {n: v.copy() for n, v in k0.levels.items()}
    for _ in range(steps):
        f1 = ops.rhs(state, closure, boundary)
        s2 = {n: state[n] + 0.5 * h * f1[n] for n in state}
        f2 = ops.rhs(s2, closure, boundary)
        s3 = {n: state[n] + 0.5 * h * f2[n] for n in state}
        f3 = ops.rhs(s3, closure, boundary)
        s4 = {n: state[n] + h * f3[n] for n in state}
        f4 = ops.rhs(s4, closure, boundary)
        for n in state:
            state[n] = state[n] + (h / 6.0) * (
                f1[n] + 2.0 * f2[n] + 2.0 * f3[n] + f4[n]
            )
    for v in state.values():
        if np.any(np.isnan(v)):
            raise ArithmeticError("NaN encountered in correlation evolution")
    return HierarchyState(state, k0.t + t)


def subpoisson_fit(
    trajectory: list[HierarchyState], params: WeightedNormParams, grid: GridSpec
) -> tuple[float, float, float]:
    """Fit log of the weighted sup-ratio r(t) <= log A + B t by least squares.

    Returns (A_fit, B_fit, max positive residual of the fit).
    """
    times = np.array([st.t for st in trajectory])
    ratios = []
    for st in trajectory:
        worst = 0.0
        for n, k in st.levels.items():
            denom = params.C ** n * np.exp(
                params.alpha * _mass_tensor(grid, n)
            )
            worst = max(worst, float(np.max(np.abs(k) / denom)))
        ratios.append(max(worst, 1e-300))
    log_r = np.log(ratios)
    if len(times) < 2:
        return float(np.exp(log_r[0])), 0.0, 0.0
    B_fit, logA = np.polyfit(times, log_r, 1)
    resid = log_r - (logA + B_fit * times)
    return float(np.exp(logA)), float(B_fit), float(max(resid.max(), 0.0))


def _mass_tensor(grid: GridSpec, n: int) -> np.ndarray:
    P = grid.n_nodes
    out = np.zeros((P,) * n)
    for i in range(n):
        shape = [1] * n
        shape[i] = P
        out = out + grid.prod_s.reshape(shape)
    return out
