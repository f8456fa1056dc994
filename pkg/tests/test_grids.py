import math

import numpy as np
import pytest
from scipy.special import exp1

from conekit.grids import build_grid, grid_from_config, nu_theta_density


def test_mark_weights_integrate_the_gamma_intensity():
    theta, a, b = 1.7, 0.05, 20.0
    grid = build_grid((a, b), theta=theta, mark_nodes=48, space_nodes=1)
    total = float(grid.mark_grid.weights.sum())
    expected = theta * (exp1(a) - exp1(b))
    assert abs(total - expected) < 1e-8 * expected


def test_mark_first_moment_matches_exponential_integral():
    theta, a, b = 2.0, 0.01, 30.0
    grid = build_grid((a, b), theta=theta, mark_nodes=48, space_nodes=1)
    moment = float(grid.mark_grid.nodes @ grid.mark_grid.weights)
    expected = theta * (math.exp(-a) - math.exp(-b))
    assert abs(moment - expected) < 1e-8 * expected


def test_midpoint_space_weights_sum_to_volume():
    grid = build_grid((0.1, 2.0), box=((0.0, 2.0), (1.0, 1.5)),
                      space_nodes=(4, 3))
    assert np.isclose(grid.space_grid.weights.sum(), 2.0 * 0.5)
    assert grid.n_space == 12
    assert all(len(p) == 2 for p in grid.position_tuples())


def test_product_nodes_enumerate_all_mark_site_pairs():
    grid = build_grid((0.1, 2.0), mark_nodes=3, space_nodes=4)
    assert grid.n_nodes == 12
    seen = set()
    for p in range(grid.n_nodes):
        s, x = grid.node(p)
        seen.add((s, x))
        assert grid.prod_s[p] == s
    assert len(seen) == 12


def test_node_weights_factorize():
    grid = build_grid((0.1, 2.0), mark_nodes=2, space_nodes=3)
    for p in range(grid.n_nodes):
        s, x = grid.node(p)
        j = list(grid.mark_grid.nodes).index(s)
        i = grid.position_tuples().index(x)
        expected = grid.mark_grid.weights[j] * grid.space_grid.weights[i]
        assert np.isclose(grid.prod_w[p], expected)


def test_invalid_windows_raise():
    with pytest.raises(ValueError):
        build_grid((0.0, 1.0))
    with pytest.raises(ValueError):
        build_grid((2.0, 1.0))
    with pytest.raises(ValueError):
        build_grid((0.1, 1.0), box=((1.0, 0.0),))


def test_grid_from_config_round_trip():
    cfg = {
        "mark_window": [0.1, 3.0],
        "theta": 1.5,
        "mark_nodes": 2,
        "box": [[0.0, 1.0]],
        "space_nodes": 4,
    }
    grid = grid_from_config(cfg)
    direct = build_grid((0.1, 3.0), theta=1.5, mark_nodes=2, space_nodes=4)
    assert np.allclose(grid.mark_grid.nodes, direct.mark_grid.nodes)
    assert np.allclose(grid.prod_w, direct.prod_w)


def test_density_override_is_used():
    grid = build_grid((0.5, 1.5), mark_nodes=16, space_nodes=1,
                      nu_density=lambda s: 1.0)
    assert np.isclose(grid.mark_grid.weights.sum(), 1.0, atol=1e-10)


def test_nu_theta_density_formula():
    assert np.isclose(nu_theta_density(2.0, 3.0), 3.0 * math.exp(-2.0) / 2.0)
