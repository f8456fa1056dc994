import math

import numpy as np
import pytest
from scipy.linalg import expm

from conekit import contact, harmonic
from conekit.contact import (
    ContactKernels,
    HierarchyState,
    build_operators,
    evolve_hierarchy,
    evolve_hierarchy_rk4,
    harmonic_number,
    lower_bound_check,
    lower_bound_params,
    positivity_check,
    upper_bound_check,
)
from conekit.experiments import random_grid_measure


def _kernels(m=1.0, q=0.3, a=1.0):
    return ContactKernels(
        m=lambda s: m,
        q=lambda s, t: q,
        a=lambda dx: a,
    )


def _ops(grid, **kw):
    return build_operators(_kernels(**kw), grid)


def test_rates_are_row_sums(medium_grid):
    ops = _ops(medium_grid, q=0.4)
    assert np.allclose(ops.kappa, ops.T.sum(axis=1))
    rates = ops.rates()
    assert np.isclose(rates.mu, 1.0)
    assert np.isclose(rates.R, float(ops.kappa.max()) - 1.0)


def test_level_one_exponential_matches_dense_expm(medium_grid):
    ops = _ops(medium_grid)
    P = medium_grid.n_nodes
    rng = np.random.default_rng(3)
    k = rng.uniform(0.5, 1.0, size=P)
    got = ops.apply_exp(0.7, k)
    dense = expm(0.7 * ops.Z) @ k
    assert np.allclose(got, dense, rtol=1e-10)


def test_level_two_exponential_is_kronecker_sum(small_grid):
    ops = _ops(small_grid)
    P = small_grid.n_nodes
    rng = np.random.default_rng(4)
    k2 = rng.uniform(0.0, 1.0, size=(P, P))
    got = ops.apply_exp(0.5, k2)
    E = expm(0.5 * ops.Z)
    assert np.allclose(got, E @ k2 @ E.T, rtol=1e-10)


def test_duhamel_matches_rk4(small_grid):
    ops = _ops(small_grid)
    P = small_grid.n_nodes
    k0 = HierarchyState(
        {1: 0.5 * np.ones(P), 2: 0.5 * np.ones((P, P))}, 0.0
    )
    a = evolve_hierarchy(k0, 0.8, 8, ops)
    b = evolve_hierarchy_rk4(k0, 0.8, 1e-3, ops)
    for n in a.levels:
        assert np.allclose(a.levels[n], b.levels[n], rtol=1e-8)


def test_evolution_preserves_symmetry_and_positivity(small_grid):
    ops = _ops(small_grid)
    P = small_grid.n_nodes
    k0 = HierarchyState(
        {1: np.ones(P), 2: 2.0 * np.ones((P, P))}, 0.0
    )
    state = evolve_hierarchy(k0, 1.0, 8, ops)
    assert state.max_asymmetry() < 1e-12
    assert positivity_check(state)


def test_zero_time_returns_initial_state(small_grid):
    ops = _ops(small_grid)
    k0 = HierarchyState({1: np.ones(small_grid.n_nodes)}, 0.0)
    state = evolve_hierarchy(k0, 0.0, 4, ops)
    assert np.array_equal(state.levels[1], k0.levels[1])


def test_upper_bound_check_rejects_bad_initial_data(small_grid):
    ops = _ops(small_grid)
    P = small_grid.n_nodes
    rates = ops.rates()
    big = HierarchyState({1: 10.0 * np.ones(P)}, 0.0)
    with pytest.raises(ValueError):
        upper_bound_check(big, 1.0, rates, k0=big)


def test_upper_bound_margins_nonnegative_in_subcritical_case(small_grid):
    ops = _ops(small_grid, q=0.2)
    P = small_grid.n_nodes
    C = 1.0
    k0 = HierarchyState(
        {n: (0.5 * C) ** n * math.factorial(n) * np.ones((P,) * n)
         for n in (1, 2)},
        0.0,
    )
    state = evolve_hierarchy(k0, 1.5, 8, ops)
    for entry in upper_bound_check(state, C, ops.rates(), k0).values():
        assert entry["margin"] >= 0.0


def test_harmonic_number_prefix_sums():
    assert harmonic_number(1) == 0.0
    assert harmonic_number(2) == 1.0
    assert np.isclose(harmonic_number(4), 1.0 + 0.5 + 1.0 / 3.0)


def test_lower_bound_requires_positive_alpha(small_grid):
    ops = _ops(small_grid)
    region = np.ones(small_grid.n_nodes, dtype=bool)
    with pytest.raises(ValueError):
        lower_bound_params(np.zeros(small_grid.n_nodes), region, ops)


def test_lower_bound_margin_nonnegative(medium_grid):
    ops = _ops(medium_grid, q=0.3)
    P = medium_grid.n_nodes
    k0 = HierarchyState(
        {1: 0.5 * np.ones(P), 2: 0.25 * 2.0 * np.ones((P, P))}, 0.0
    )
    region = np.ones(P, dtype=bool)
    alpha, beta = lower_bound_params(k0.levels[1], region, ops)
    rates = ops.rates()
    state = evolve_hierarchy(k0, harmonic_number(2) + 0.5, 8, ops)
    out = lower_bound_check(state, region, alpha, beta, rates.mu)
    assert out[1]["margin"] >= 0.0
    assert out[2]["margin"] >= 0.0


def test_descendant_operator_duality(small_grid):
    kernels = _kernels(q=0.3)
    rng = np.random.default_rng(9)
    for _ in range(5):
        G = harmonic.random_bbs(small_grid, rng, max_atoms=2)
        k = harmonic.random_bbs(small_grid, rng, max_atoms=2)
        lhs = harmonic.correlation_pairing(
            lambda eta: contact.hat_l_contact(G, eta, kernels, small_grid),
            k, small_grid, 4,
        )
        rhs = harmonic.correlation_pairing(
            G,
            lambda eta: contact.l_triangle_contact(k, eta, kernels, small_grid),
            small_grid, 4,
        )
        assert abs(lhs - rhs) < 1e-11 * max(abs(lhs), abs(rhs), 1.0)


def test_descendant_operator_death_only_collapse(small_grid):
    # with q = 0 the operator is pure mark-rate decay
    kernels = _kernels(q=0.0)
    rng = np.random.default_rng(11)
    G = harmonic.random_bbs(small_grid, rng, max_atoms=2)
    eta = random_grid_measure(small_grid, rng, max_atoms=2)
    got = contact.hat_l_contact(G, eta, kernels, small_grid)
    expected = -len(eta) * 1.0 * G(eta)
    assert abs(got - expected) < 1e-12 * max(abs(expected), 1.0)
