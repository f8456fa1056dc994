import math

import numpy as np

from conekit import harmonic
from conekit.experiments import random_grid_measure, random_node_function
from conekit.measures import FiniteMeasure


def test_k_transform_of_zero_indicator_is_one(medium_grid, rng):
    G = harmonic.indicator_zero()
    eta = random_grid_measure(medium_grid, rng, max_atoms=3)
    assert harmonic.k_transform(G, eta) == 1.0


def test_k_transform_inverse_roundtrip(medium_grid, rng):
    for _ in range(20):
        G = harmonic.random_bbs(medium_grid, rng, max_atoms=3)
        eta = random_grid_measure(medium_grid, rng, max_atoms=4)
        back = harmonic.k_inverse(
            lambda xi: harmonic.k_transform(G, xi), eta
        )
        assert abs(back - G(eta)) < 1e-12 * max(abs(G(eta)), 1.0)


def test_star_convolution_with_zero_indicator_is_identity(medium_grid, rng):
    G = harmonic.random_bbs(medium_grid, rng, max_atoms=3)
    one_at_zero = harmonic.indicator_zero()
    eta = random_grid_measure(medium_grid, rng, max_atoms=3)
    assert np.isclose(
        harmonic.star_convolution(G, one_at_zero, eta), G(eta), rtol=1e-12
    )


def test_star_convolution_is_symmetric(medium_grid, rng):
    G1 = harmonic.random_bbs(medium_grid, rng, max_atoms=2)
    G2 = harmonic.random_bbs(medium_grid, rng, max_atoms=2)
    eta = random_grid_measure(medium_grid, rng, max_atoms=3)
    assert np.isclose(
        harmonic.star_convolution(G1, G2, eta),
        harmonic.star_convolution(G2, G1, eta),
        rtol=1e-12,
    )


def test_lp_exponent_is_product_over_atoms():
    f = lambda s, x: s * x[0]
    eta = FiniteMeasure([(1.0, (0.5,)), (2.0, (0.25,))])
    assert np.isclose(harmonic.lp_exponent(f, eta), 0.5 * 0.5)
    assert harmonic.lp_exponent(f, FiniteMeasure()) == 1.0


def test_k_transform_of_lp_exponent_shifts_by_one(medium_grid, rng):
    f = random_node_function(medium_grid, rng)
    eta = random_grid_measure(medium_grid, rng, max_atoms=4)
    lhs = harmonic.k_transform(harmonic.lp_exponent_function(f), eta)
    rhs = math.prod(1.0 + f(a.mark, a.position) for a in eta.atoms)
    assert abs(lhs - rhs) < 1e-12 * max(abs(rhs), 1.0)


def test_minlos_identities_hold_exactly_on_small_grid(small_grid, rng):
    Ha = harmonic.random_bbs(small_grid, rng, max_atoms=2)
    Hb = harmonic.random_bbs(small_grid, rng, max_atoms=2)
    G = harmonic.random_bbs(small_grid, rng, max_atoms=2)
    f = random_node_function(small_grid, rng)
    lhs, rhs, diff = harmonic.minlos_check_1(
        G, lambda x1, x2: Ha(x1) * Hb(x2), small_grid, n_max=4
    )
    assert diff < 1e-12 * max(abs(lhs), abs(rhs), 1.0)
    lhs2, rhs2, diff2 = harmonic.minlos_check_2(
        lambda eta, s, x: Ha(eta) * f(s, x), small_grid, n_max=4
    )
    assert diff2 < 1e-12 * max(abs(lhs2), abs(rhs2), 1.0)


def test_correlation_pairing_against_direct_sum(small_grid, rng):
    G = harmonic.random_bbs(small_grid, rng, max_atoms=2)
    k = harmonic.random_bbs(small_grid, rng, max_atoms=2)
    from conekit.lebesgue_poisson import iter_configs

    direct = math.fsum(
        w * G(eta) * k(eta) for eta, w in iter_configs(small_grid, 2)
    )
    assert np.isclose(
        harmonic.correlation_pairing(G, k, small_grid, n_max=2), direct,
        rtol=1e-12,
    )


def test_tabulated_function_defaults_outside_table(small_grid):
    eta = FiniteMeasure([(1.0, (0.5,))])
    G = harmonic.tabulated({eta: 2.5})
    assert G(eta) == 2.5
    assert G(FiniteMeasure()) == 0.0


def test_kg_growth_check_flags_bounded_functions(medium_grid, rng):
    G = harmonic.random_bbs(medium_grid, rng, max_atoms=2)
    samples = [random_grid_measure(medium_grid, rng, max_atoms=3)
               for _ in range(10)]
    ok, bound = harmonic.kg_growth_check(G, samples)
    assert ok
    assert bound >= 0.0
