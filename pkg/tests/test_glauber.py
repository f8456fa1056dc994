import math

import numpy as np
import pytest
from scipy.special import exp1

from conekit import glauber
from conekit.glauber import (
    GibbsParams,
    WindowFunctional,
    detailed_balance_residual,
    dirichlet_residual,
    f_aux,
    gnz_residual,
    pair_energy,
    phi_energy,
    sample_gamma_measure,
    sample_gibbs_mcmc,
    zero_potential,
)
from conekit.experiments import make_potential
from conekit.measures import FiniteMeasure


def _params(theta=1.0, box=((0.0, 1.0),), eps=1e-4, seed=7):
    return GibbsParams(theta=theta, box=box, eps=eps, seed=seed)


def _bump(amp=1.5, rng_=0.3):
    return make_potential({"form": "bump", "amp": amp, "range": rng_})


def test_reference_mass_formula():
    p = _params(theta=2.0, box=((0.0, 0.5), (0.0, 2.0)), eps=1e-3)
    assert np.isclose(p.reference_mass, 2.0 * exp1(1e-3) * 1.0)


def test_phi_energy_is_additive_over_atoms():
    pot = _bump()
    eta = FiniteMeasure([(1.0, (0.1,)), (2.0, (0.2,))])
    single = sum(
        phi_energy(0.5, (0.15,), FiniteMeasure([(a.mark, a.position)]), pot)
        for a in eta.atoms
    )
    assert np.isclose(phi_energy(0.5, (0.15,), eta, pot), single)


def test_pair_energy_counts_unordered_pairs():
    pot = _bump(amp=1.0, rng_=1.0)
    eta = FiniteMeasure([(1.0, (0.1,)), (1.0, (0.2,))])
    direct = phi_energy(1.0, (0.1,), eta.drop((0.1,)), pot)
    assert np.isclose(pair_energy(eta, pot), direct)


def test_f_aux_vanishes_for_zero_potential():
    f = f_aux(1.0, (0.5,), zero_potential())
    assert f(2.0, (0.1,)) == 0.0


def test_gamma_sampler_truncated_moments():
    p = _params(theta=1.5, eps=1e-3, seed=11)
    samples = sample_gamma_measure(p, 40000)
    masses = samples.total_masses()
    mean_expected = 1.5 * math.exp(-1e-3)
    var_expected = 1.5 * (1 + 1e-3) * math.exp(-1e-3)
    se = masses.std(ddof=1) / math.sqrt(len(masses))
    assert abs(masses.mean() - mean_expected) < 4 * se
    assert abs(masses.var(ddof=1) - var_expected) < 0.05


def test_sample_index_and_counts_are_consistent():
    p = _params(seed=3)
    samples = sample_gamma_measure(p, 500)
    assert samples.n_samples == 500
    assert samples.counts.sum() == len(samples.marks)
    assert np.all(np.bincount(samples.sample_index, minlength=500)
                  == samples.counts)
    etas = list(samples.measures())
    assert len(etas) == 500


def test_detailed_balance_birth_and_mark_moves():
    pot = _bump(amp=1.5, rng_=0.3)
    p = _params(theta=0.5, box=((0.0, 0.6),))
    eta = FiniteMeasure([(0.8, (0.1,)), (1.2, (0.45,))])
    res_birth = detailed_balance_residual(
        pot, p, eta, "birth", new_mark=0.7, new_pos=(0.3,)
    )
    assert res_birth < 1e-12
    res_mark = detailed_balance_residual(
        pot, p, eta, "mark", new_mark=2.0, idx=1
    )
    assert res_mark < 1e-12


def test_mcmc_chain_matches_gamma_law_at_zero_potential():
    p = _params(theta=1.0, seed=19)
    chain = sample_gibbs_mcmc(zero_potential(), p, n_sweeps=6000,
                              burn_in=1000)
    masses = chain.total_masses()
    # batch-means interval around the truncated reference mean
    nb = 30
    usable = (len(masses) // nb) * nb
    bm = masses[:usable].reshape(nb, -1).mean(axis=1)
    se = bm.std(ddof=1) / math.sqrt(nb)
    assert abs(masses.mean() - 1.0 * math.exp(-p.eps)) < 5 * se


def test_gnz_vectorized_and_generic_paths_agree(medium_grid):
    p = _params(theta=1.0, seed=23)
    samples = sample_gamma_measure(p, 200)
    pot = zero_potential()
    F = WindowFunctional(
        g=lambda x: np.cos(x[:, 0]),
        h=lambda m: np.exp(-0.5 * m),
        label="probe",
    )
    lhs_v, rhs_v = glauber._gnz_sides_vectorized(F, samples, pot, medium_grid)
    lhs_g, rhs_g = glauber._gnz_sides_generic(F, samples, pot, medium_grid)
    assert np.allclose(lhs_v, lhs_g, rtol=1e-10)
    assert np.allclose(rhs_v, rhs_g, rtol=1e-10)


def test_gnz_identity_on_small_free_sample():
    p = _params(theta=1.0, seed=29)
    grid = _quad_grid(p)
    samples = sample_gamma_measure(p, 20000)
    F = WindowFunctional(g=lambda x: np.ones(len(x)),
                         h=lambda m: np.exp(-m), label="exp_mass")
    lhs, rhs, se = gnz_residual(F, samples, p, zero_potential(), grid)
    assert abs(lhs - rhs) <= 4 * se


def _quad_grid(params):
    from conekit.grids import build_grid

    return build_grid((1e-4, 40.0), theta=params.theta, mark_nodes=40,
                      box=params.box, space_nodes=8)


def test_dirichlet_identity_on_small_free_sample():
    p = _params(theta=1.0, seed=31)
    grid = _quad_grid(p)
    samples = sample_gamma_measure(p, 20000)
    F = WindowFunctional(g=lambda x: np.ones(len(x)),
                         h=lambda m: np.exp(-m), label="F")
    G = WindowFunctional(g=lambda x: np.ones(len(x)),
                         h=lambda m: np.exp(-0.5 * m), label="G")
    lhs, rhs, se = dirichlet_residual(F, G, samples, zero_potential(), p, grid)
    assert abs(lhs - rhs) <= 4 * se


def test_glauber_collapse_identities_at_zero_potential(small_grid, rng):
    from conekit import harmonic
    from conekit.experiments import random_grid_measure

    p = _params()
    pot = zero_potential()
    for _ in range(5):
        G = harmonic.random_bbs(small_grid, rng, max_atoms=2)
        eta = random_grid_measure(small_grid, rng, max_atoms=2)
        occupied = set(eta.positions)
        got = glauber.hat_l_glauber(G, eta, pot, p, small_grid)
        birth = math.fsum(
            small_grid.prod_w[q] * small_grid.prod_s[q]
            * G(eta.plus_atom(*small_grid.node(q)))
            for q in range(small_grid.n_nodes)
            if small_grid.node(q)[1] not in occupied
        )
        assert abs(got - (-eta.total_mass() * G(eta) + birth)) < 1e-12
        got_d = glauber.l_triangle_glauber(G, eta, pot, p, small_grid, 4)
        expect_d = -eta.total_mass() * G(eta) + math.fsum(
            a.mark * G(eta.drop(a.position)) for a in eta.atoms
        )
        assert abs(got_d - expect_d) < 1e-12


def test_glauber_duality_with_interaction(small_grid, rng):
    from conekit import harmonic

    p = _params()
    pot = _bump(amp=0.4, rng_=0.5)
    G = harmonic.random_bbs(small_grid, rng, max_atoms=2)
    k = harmonic.random_bbs(small_grid, rng, max_atoms=2)
    lhs = harmonic.correlation_pairing(
        lambda eta: glauber.hat_l_glauber(G, eta, pot, p, small_grid),
        k, small_grid, 4,
    )
    rhs = harmonic.correlation_pairing(
        G,
        lambda eta: glauber.l_triangle_glauber(k, eta, pot, p, small_grid, 4),
        small_grid, 4,
    )
    assert abs(lhs - rhs) < 1e-10 * max(abs(lhs), abs(rhs), 1.0)


def test_condition_check_flags_large_theta(medium_grid):
    pot = _bump(amp=0.5, rng_=0.5)
    good = glauber.glauber_condition_check(pot, 0.01, 0.5, 3.0, medium_grid)
    bad = glauber.glauber_condition_check(pot, 100.0, 0.5, 3.0, medium_grid)
    assert good["checks"]["small_param"]["passed"]
    assert not bad["checks"]["small_param"]["passed"]


def test_mcmc_rejects_inadmissible_potential():
    pot = make_potential({"form": "bump", "amp": -1.0, "range": 0.3})
    p = _params()
    with pytest.raises(ValueError):
        sample_gibbs_mcmc(pot, p, n_sweeps=10, burn_in=0)
