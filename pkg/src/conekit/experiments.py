"""Experiment drivers behind the CLI commands.

Each driver consumes a validated JSON config, runs the relevant module
operations, and emits a RunReport plus CSV tables and PNG figures in the
output directory.  All randomness flows through one seeded generator, so a
rerun with the same config and seed reproduces the report byte for byte.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from scipy import stats

from . import bdlp, contact, glauber, harmonic, plots
from .grids import GridSpec, grid_from_config
from .lebesgue_poisson import iter_configs, lp_integrate
from .measures import FiniteMeasure
from .reporting import RunReport, write_csv


class ConfigError(ValueError):
    """Raised for malformed or unknown configuration documents."""


def _check_keys(doc: dict, allowed: set[str], required: set[str], where: str):
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    missing = required - set(doc)
    if missing:
        raise ConfigError(f"missing keys in {where}: {sorted(missing)}")


def _grid(cfg: dict) -> GridSpec:
    try:
        return grid_from_config(cfg)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad grid config: {exc}") from exc


# ---------------------------------------------------------------------------
# registries of named kernel / potential / functional forms


def make_mark_rate(doc: dict):
    """m(s) factory."""
    form = doc.get("form")
    if form == "constant":
        v = float(doc["value"])
        return lambda s: v
    if form == "affine":
        b, a = float(doc["base"]), float(doc["slope"])
        return lambda s: b + a * s
    raise ConfigError(f"unknown mark rate form {form!r}")


def make_mark_kernel(doc: dict):
    """q(s, t) factory (symmetric in all shipped forms)."""
    form = doc.get("form")
    if form == "constant":
        v = float(doc["value"])
        return lambda s, t: v
    if form == "exp_decay":
        c, r = float(doc["scale"]), float(doc["rate"])
        return lambda s, t: c * math.exp(-r * (s + t))
    if form == "product":
        c = float(doc["scale"])
        return lambda s, t: c * s * t
    raise ConfigError(f"unknown mark kernel form {form!r}")


def make_space_kernel(doc: dict):
    """a(dx) factory; all forms are even."""
    form = doc.get("form")
    if form == "constant":
        v = float(doc["value"])
        return lambda dx: v
    if form == "gaussian":
        c, w = float(doc["scale"]), float(doc["width"])
        return lambda dx: c * math.exp(-float(np.dot(dx, dx)) / (2.0 * w * w))
    raise ConfigError(f"unknown space kernel form {form!r}")


def make_potential(doc: dict) -> glauber.PairPotential:
    form = doc.get("form")
    if form == "zero":
        return glauber.zero_potential()
    if form == "bump":
        amp, rng_ = float(doc["amp"]), float(doc["range"])

        def phi(x, y):
            x = np.asarray(x, dtype=float)
            y = np.asarray(y, dtype=float)
            d2 = np.sum((x - y) ** 2, axis=-1)
            out = amp * np.maximum(1.0 - d2 / (rng_ * rng_), 0.0) ** 2
            return out

        return glauber.PairPotential(phi=phi, range=rng_, positive_flag=amp >= 0)
    raise ConfigError(f"unknown potential form {form!r}")


def _make_g(doc: dict):
    form = doc.get("form", "one")
    if form == "one":
        return lambda x: np.ones(np.asarray(x).shape[0])
    if form == "cos":
        freq = float(doc.get("freq", 1.0))
        return lambda x: np.prod(np.cos(freq * np.asarray(x, float)), axis=-1)
    raise ConfigError(f"unknown g form {form!r}")


def _make_h(doc: dict):
    form = doc.get("form", "one")
    if form == "one":
        return lambda m: np.ones_like(np.asarray(m, dtype=float))
    if form == "exp_neg":
        rate = float(doc.get("rate", 1.0))
        return lambda m: np.exp(-rate * np.asarray(m, dtype=float))
    if form == "reciprocal":
        return lambda m: 1.0 / (1.0 + np.asarray(m, dtype=float))
    raise ConfigError(f"unknown h form {form!r}")


def make_functional(doc: dict) -> glauber.WindowFunctional:
    window = doc.get("window")
    if window is not None:
        window = tuple(tuple(float(c) for c in pair) for pair in window)
    return glauber.WindowFunctional(
        g=_make_g(doc.get("g", {})),
        h=_make_h(doc.get("h", {})),
        window=window,
        label=doc.get("label", ""),
    )


def make_contact_kernels(doc: dict) -> contact.ContactKernels:
    return contact.ContactKernels(
        m=make_mark_rate(doc["m"]),
        q=make_mark_kernel(doc["q"]),
        a=make_space_kernel(doc["a"]),
    )


def make_bdlp_kernels(doc: dict) -> bdlp.BdlpKernels:
    return bdlp.BdlpKernels(
        m=make_mark_rate(doc["m"]),
        q_plus=make_mark_kernel(doc["q_plus"]),
        q_minus=make_mark_kernel(doc["q_minus"]),
        a_plus=make_space_kernel(doc["a_plus"]),
        a_minus=make_space_kernel(doc["a_minus"]),
    )


def random_grid_measure(
    grid: GridSpec, rng: np.random.Generator, max_atoms: int
) -> FiniteMeasure:
    """Uniform random pinpointing configuration on grid nodes."""
    n = int(rng.integers(0, max_atoms + 1))
    sites = rng.choice(grid.n_space, size=min(n, grid.n_space), replace=False)
    atoms = []
    for i in sites:
        j = int(rng.integers(grid.n_marks))
        atoms.append(
            (
                float(grid.mark_grid.nodes[j]),
                grid.space_grid.position(int(i)),
            )
        )
    return FiniteMeasure(atoms)


def random_node_function(grid: GridSpec, rng: np.random.Generator,
                         scale: float = 0.9):
    """Random mark-space test function tabulated on the grid nodes."""
    table = {}
    for p in range(grid.n_nodes):
        s, x = grid.node(p)
        table[(s, x)] = scale * float(rng.uniform(-1.0, 1.0))
    return lambda s, x: table[(s, tuple(x) if not isinstance(x, tuple) else x)]


# ---------------------------------------------------------------------------
# identities


def run_identities(cfg: dict, out_dir: Path, seed: int | None = None) -> RunReport:
    _check_keys(
        cfg,
        {"grid", "lp_grid", "seed", "n_roundtrip", "n_star", "n_minlos",
         "n_lp_exp", "n_max", "lp_n_max", "tolerances"},
        {"grid", "lp_grid", "seed"},
        "identities config",
    )
    seed = cfg["seed"] if seed is None else seed
    rng = np.random.default_rng(seed)
    grid = _grid(cfg["grid"])
    lp_grid = _grid(cfg["lp_grid"])
    n_max = int(cfg.get("n_max", 12))
    tol = cfg.get("tolerances", {})
    tol_round = float(tol.get("roundtrip", 1e-12))
    tol_star = float(tol.get("star", 1e-11))
    tol_minlos = float(tol.get("minlos", 1e-10))
    tol_lp = float(tol.get("lp_exponential", 1e-10))

    report = RunReport("identities", cfg, metadata={"seed": seed})
    rows = []

    worst_round = worst_exp = 0.0
    for trial in range(int(cfg.get("n_roundtrip", 200))):
        G = harmonic.random_bbs(grid, rng, max_atoms=3)
        eta = random_grid_measure(grid, rng, max_atoms=min(10, grid.n_space))
        g_val = G(eta)
        back = harmonic.k_inverse(lambda xi: harmonic.k_transform(G, xi), eta)
        fwd = harmonic.k_transform(lambda xi: harmonic.k_inverse(G, xi), eta)
        scale = max(abs(g_val), 1.0)
        res = max(abs(back - g_val), abs(fwd - g_val)) / scale
        worst_round = max(worst_round, res)

        f = random_node_function(grid, rng)
        lhs = harmonic.k_transform(harmonic.lp_exponent_function(f), eta)
        prod = 1.0
        for a in eta.atoms:
            prod *= 1.0 + f(a.mark, a.position)
        worst_exp = max(worst_exp, abs(lhs - prod) / max(abs(prod), 1.0))
        if trial < 20:
            rows.append({"family": "roundtrip", "trial": trial, "residual": res})

    worst_star = 0.0
    for trial in range(int(cfg.get("n_star", 50))):
        G1 = harmonic.random_bbs(grid, rng, max_atoms=3)
        G2 = harmonic.random_bbs(grid, rng, max_atoms=3)
        eta = random_grid_measure(grid, rng, max_atoms=min(6, grid.n_space))
        lhs = harmonic.k_transform(
            lambda xi: harmonic.star_convolution(G1, G2, xi), eta
        )
        rhs = harmonic.k_transform(G1, eta) * harmonic.k_transform(G2, eta)
        res = abs(lhs - rhs) / max(abs(rhs), 1.0)
        worst_star = max(worst_star, res)
        rows.append({"family": "star", "trial": trial, "residual": res})

    worst_m1 = worst_m2 = 0.0
    for trial in range(int(cfg.get("n_minlos", 50))):
        G = harmonic.random_bbs(grid, rng, max_atoms=2)
        Ha = harmonic.random_bbs(grid, rng, max_atoms=2)
        Hb = harmonic.random_bbs(grid, rng, max_atoms=2)
        f = random_node_function(grid, rng)
        lhs, rhs, diff = harmonic.minlos_check_1(
            G, lambda x1, x2: Ha(x1) * Hb(x2), grid, n_max
        )
        res1 = diff / max(abs(lhs), abs(rhs), 1.0)
        lhs2, rhs2, diff2 = harmonic.minlos_check_2(
            lambda eta, s, x: Ha(eta) * f(s, x), grid, n_max
        )
        res2 = diff2 / max(abs(lhs2), abs(rhs2), 1.0)
        worst_m1, worst_m2 = max(worst_m1, res1), max(worst_m2, res2)
        rows.append({"family": "minlos_1", "trial": trial, "residual": res1})
        rows.append({"family": "minlos_2", "trial": trial, "residual": res2})

    worst_lp = 0.0
    lp_n_max = int(cfg.get("lp_n_max", 25))
    for trial in range(int(cfg.get("n_lp_exp", 20))):
        f = random_node_function(lp_grid, rng)
        got = lp_integrate(
            harmonic.lp_exponent_function(f), lp_grid, n_max=lp_n_max,
            policy="separate",
        ).value
        expect = math.exp(
            math.fsum(
                f(*lp_grid.node(p)) * lp_grid.prod_w[p]
                for p in range(lp_grid.n_nodes)
            )
        )
        res = abs(got - expect) / max(abs(expect), 1.0)
        worst_lp = max(worst_lp, res)
        rows.append({"family": "lp_exponential", "trial": trial, "residual": res})

    for name, worst, tolerance in [
        ("k_roundtrip", worst_round, tol_round),
        ("k_multiplicativity", worst_star, tol_star),
        ("lp_exponent_product", worst_exp, tol_round),
        ("minlos_part_1", worst_m1, tol_minlos),
        ("minlos_part_2", worst_m2, tol_minlos),
        ("lp_exponential_integral", worst_lp, tol_lp),
    ]:
        report.add_verdict(name, worst <= tolerance, tolerance=tolerance,
                           observed=worst, margin=tolerance - worst)

    report.tables["residuals"] = rows
    write_csv(out_dir / "residuals.csv", rows)
    plots.residual_bars(
        out_dir / "identity_residuals.png",
        [v["name"] for v in report.verdicts],
        [max(v["observed"], 1e-18) for v in report.verdicts],
        "Worst identity residuals", "relative residual",
    )
    return report


# ---------------------------------------------------------------------------
# contact


def _contact_initial(doc: dict, grid: GridSpec, C: float,
                     n_levels: int) -> contact.HierarchyState:
    form = doc.get("form", "scaled_ones")
    if form != "scaled_ones":
        raise ConfigError(f"unknown initial form {form!r}")
    c = float(doc.get("level_scale", 0.5))
    P = grid.n_nodes
    levels = {
        n: (c * C) ** n * math.factorial(n) * np.ones((P,) * n)
        for n in range(1, n_levels + 1)
    }
    return contact.HierarchyState(levels, 0.0)


def run_contact(cfg: dict, out_dir: Path, seed: int | None = None) -> RunReport:
    _check_keys(
        cfg,
        {"grid", "kernels", "C", "times", "steps", "n_levels", "initial",
         "seed", "lower_bound", "rk4_check", "duality_pairs", "duality_n_max"},
        {"grid", "kernels", "C", "times", "steps", "seed"},
        "contact config",
    )
    seed = cfg["seed"] if seed is None else seed
    rng = np.random.default_rng(seed)
    grid = _grid(cfg["grid"])
    kernels = make_contact_kernels(cfg["kernels"])
    ops = contact.build_operators(kernels, grid)
    rates = ops.rates()
    C = float(cfg["C"])
    n_levels = int(cfg.get("n_levels", 3))
    k0 = _contact_initial(cfg.get("initial", {}), grid, C, n_levels)

    report = RunReport(
        "contact", cfg,
        metadata={"seed": seed, "R": rates.R, "mu": rates.mu,
                  "kappa_max": float(rates.kappa.max())},
    )
    rows = []
    positivity_ok = True
    states = {}
    for t in cfg["times"]:
        state = contact.evolve_hierarchy(k0, float(t), int(cfg["steps"]), ops)
        states[float(t)] = state
        positivity_ok = positivity_ok and contact.positivity_check(state)
        for n, entry in contact.upper_bound_check(state, C, rates, k0).items():
            rows.append({"t": t, "n": n, **entry})
    report.add_verdict("positivity", positivity_ok, tolerance=1e-9)
    worst_margin = min(r["margin"] for r in rows)
    report.add_verdict("upper_bound", worst_margin >= 0.0,
                       observed=worst_margin, margin=worst_margin)
    report.tables["upper_bounds"] = rows
    write_csv(out_dir / "upper_bounds.csv", rows)

    lb_cfg = cfg.get("lower_bound")
    if lb_cfg:
        region = np.zeros(grid.n_nodes, dtype=bool)
        nodes = lb_cfg.get("nodes")
        if nodes is None:
            region[:] = True
        else:
            region[np.asarray(nodes, dtype=int)] = True
        alpha, beta = contact.lower_bound_params(k0.levels[1], region, ops)
        lb_rows = []
        for n in lb_cfg.get("levels", [1, 2]):
            t_n = contact.harmonic_number(n)
            for dt in lb_cfg.get("time_offsets", [0.0, 0.5, 1.0]):
                t = t_n + float(dt)
                state = contact.evolve_hierarchy(k0, t, int(cfg["steps"]), ops)
                entry = contact.lower_bound_check(
                    state, region, alpha, beta, rates.mu
                )[n]
                lb_rows.append({"t": t, "n": n, **entry})
        worst_lb = min(r["margin"] for r in lb_rows)
        report.add_verdict("lower_bound", worst_lb >= 0.0, observed=worst_lb,
                           margin=worst_lb,
                           detail={"alpha": alpha, "beta": beta, "mu": rates.mu})
        report.tables["lower_bounds"] = lb_rows
        write_csv(out_dir / "lower_bounds.csv", lb_rows)

    rk4 = cfg.get("rk4_check")
    if rk4:
        t = float(rk4["t"])
        a = contact.evolve_hierarchy(k0, t, int(cfg["steps"]), ops)
        b = contact.evolve_hierarchy_rk4(k0, t, float(rk4["dt"]), ops)
        res = max(
            float(np.max(np.abs(a.levels[n] - b.levels[n]))
                  / max(np.max(np.abs(b.levels[n])), 1e-300))
            for n in a.levels
        )
        tol_rk4 = float(rk4.get("tolerance", 1e-6))
        report.add_verdict("duhamel_vs_rk4", res <= tol_rk4,
                           tolerance=tol_rk4, observed=res)

    n_pairs = int(cfg.get("duality_pairs", 0))
    if n_pairs:
        res = _contact_duality_residual(
            kernels, grid, rng, n_pairs, int(cfg.get("duality_n_max", 8))
        )
        report.add_verdict("duality", res <= 1e-9, tolerance=1e-9, observed=res)

    for n in range(1, n_levels + 1):
        series = {
            f"margin n={n}": [
                next(r["margin"] for r in rows if r["t"] == t and r["n"] == n)
                for t in cfg["times"]
            ]
        }
        plots.line_plot(
            out_dir / f"upper_margin_n{n}.png", cfg["times"], series,
            "t", "bound - norm", f"A-priori bound margin, level {n}",
        )
    return report


def _contact_duality_residual(kernels, grid, rng, n_pairs, n_max) -> float:
    worst = 0.0
    for _ in range(n_pairs):
        G = harmonic.random_bbs(grid, rng, max_atoms=2)
        k = harmonic.random_bbs(grid, rng, max_atoms=2)
        lhs = harmonic.correlation_pairing(
            lambda eta: contact.hat_l_contact(G, eta, kernels, grid), k,
            grid, n_max,
        )
        rhs = harmonic.correlation_pairing(
            G, lambda eta: contact.l_triangle_contact(k, eta, kernels, grid),
            grid, n_max,
        )
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1.0))
    return worst


# ---------------------------------------------------------------------------
# BDLP


def run_bdlp_conditions(cfg: dict, out_dir: Path,
                        seed: int | None = None) -> RunReport:
    _check_keys(
        cfg,
        {"grid", "kernels", "alpha", "C", "beta", "seed", "n_bound_samples",
         "n_duality_pairs", "n_max"},
        {"grid", "kernels", "alpha", "C", "beta", "seed"},
        "bdlp-conditions config",
    )
    seed = cfg["seed"] if seed is None else seed
    rng = np.random.default_rng(seed)
    grid = _grid(cfg["grid"])
    kernels = make_bdlp_kernels(cfg["kernels"])
    alpha, C, beta = float(cfg["alpha"]), float(cfg["C"]), float(cfg["beta"])
    n_max = int(cfg.get("n_max", 20))

    check = bdlp.condition_check(kernels, alpha, C, beta, grid)
    report = RunReport(
        "bdlp-conditions", cfg,
        metadata={"seed": seed, "kappa_plus": check["kappa_plus"],
                  "kappa_minus": check["kappa_minus"]},
    )
    cond_rows = []
    for name, entry in check["conditions"].items():
        report.add_verdict(f"condition_{name}", entry["passed"],
                           observed=entry["slack"], margin=entry["slack"])
        cond_rows.append({"condition": name, **entry})
    report.tables["conditions"] = cond_rows
    write_csv(out_dir / "conditions.csv", cond_rows)
    report.add_verdict("a0_proxy_below_half", check["a0_proxy"] < 0.5,
                       observed=check["a0_proxy"],
                       margin=0.5 - check["a0_proxy"])

    if check["passed"]:
        n_samples = int(cfg.get("n_bound_samples", 50))
        params = bdlp.WeightedNormParams(alpha=alpha, C=C)
        G_samples = [
            harmonic.random_bbs(grid, rng, max_atoms=2) for _ in range(n_samples)
        ]
        est = bdlp.relative_bound_estimate(
            G_samples, kernels, params, beta, grid, n_max
        )
        names = ("competition", "dispersal_replace", "dispersal_add")
        ratio_rows = []
        for i, name in enumerate(names):
            report.add_verdict(
                f"relative_bound_{name}", est["within"][i],
                tolerance=est["bounds"][i], observed=est["max_ratios"][i],
                margin=est["bounds"][i] - est["max_ratios"][i],
            )
        for j, r in enumerate(est["ratios"]):
            ratio_rows.append({"sample": j, **dict(zip(names, r))})
        report.tables["relative_bounds"] = ratio_rows
        write_csv(out_dir / "relative_bounds.csv", ratio_rows)
        plots.residual_bars(
            out_dir / "relative_bounds.png", list(names),
            [max(v, 1e-18) for v in est["max_ratios"]],
            "Observed relative-bound ratios", "max ratio",
        )

        n_pairs = int(cfg.get("n_duality_pairs", 0))
        if n_pairs:
            worst = 0.0
            for _ in range(n_pairs):
                G = harmonic.random_bbs(grid, rng, max_atoms=2)
                k = harmonic.random_bbs(grid, rng, max_atoms=2)
                lhs = harmonic.correlation_pairing(
                    lambda eta: bdlp.hat_l_bdlp(G, eta, kernels, grid), k,
                    grid, n_max,
                )
                rhs = harmonic.correlation_pairing(
                    G, lambda eta: bdlp.l_triangle_bdlp(k, eta, kernels, grid),
                    grid, n_max,
                )
                worst = max(worst, abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1.0))
            report.add_verdict("duality", worst <= 1e-9, tolerance=1e-9,
                               observed=worst)
    return report


def run_bdlp_run(cfg: dict, out_dir: Path, seed: int | None = None) -> RunReport:
    _check_keys(
        cfg,
        {"grid", "kernels", "alpha", "C", "seed", "n_levels", "initial_scale",
         "t_final", "steps", "n_times", "closure"},
        {"grid", "kernels", "alpha", "C", "seed", "t_final", "steps"},
        "bdlp-run config",
    )
    seed = cfg["seed"] if seed is None else seed
    grid = _grid(cfg["grid"])
    kernels = make_bdlp_kernels(cfg["kernels"])
    alpha, C = float(cfg["alpha"]), float(cfg["C"])
    params = bdlp.WeightedNormParams(alpha=alpha, C=C)
    n_levels = int(cfg.get("n_levels", 3))
    r0 = float(cfg.get("initial_scale", 0.5))
    closure = cfg.get("closure", "zero")

    # sub-Poissonian initial data: k0 = r0 C^n exp(alpha * total mass)
    levels = {
        n: r0 * C**n * np.exp(alpha * bdlp._mass_tensor(grid, n))
        for n in range(1, n_levels + 1)
    }
    k0 = contact.HierarchyState(levels, 0.0)

    t_final = float(cfg["t_final"])
    n_times = int(cfg.get("n_times", 8))
    times = np.linspace(0.0, t_final, n_times + 1)
    steps_per = max(1, int(cfg["steps"]) // n_times)
    trajectory = [k0]
    state = k0
    for lo, hi in zip(times[:-1], times[1:]):
        state = bdlp.evolve_correlations_bdlp(
            state, float(hi - lo), steps_per, kernels, grid, closure=closure
        )
        trajectory.append(state)

    A_fit, B_fit, resid = bdlp.subpoisson_fit(trajectory, params, grid)
    report = RunReport(
        "bdlp-run", cfg,
        metadata={"seed": seed, "closure": closure, "A_fit": A_fit,
                  "B_fit": B_fit, "fit_residual": resid},
    )
    report.add_verdict("evolution_finite", True)
    report.add_verdict("subpoisson_envelope_fit", resid <= 0.5,
                       tolerance=0.5, observed=resid)

    rows = []
    for st in trajectory:
        row = {"t": st.t}
        for n, k in st.levels.items():
            row[f"sup_n{n}"] = float(np.max(np.abs(k)))
        rows.append(row)
    report.tables["trajectory"] = rows
    write_csv(out_dir / "trajectory.csv", rows)
    plots.line_plot(
        out_dir / "level_norms.png", [r["t"] for r in rows],
        {f"n={n}": [r[f"sup_n{n}"] for r in rows]
         for n in range(1, n_levels + 1)},
        "t", "sup norm", "Correlation level norms", logy=True,
    )
    return report


# ---------------------------------------------------------------------------
# Glauber


def run_glauber_sample(cfg: dict, out_dir: Path,
                       seed: int | None = None) -> RunReport:
    _check_keys(
        cfg,
        {"theta", "box", "eps", "seed", "n_samples", "potential", "gibbs"},
        {"theta", "box", "seed", "n_samples"},
        "glauber-sample config",
    )
    seed = cfg["seed"] if seed is None else seed
    params = glauber.GibbsParams(
        theta=float(cfg["theta"]),
        box=tuple(tuple(float(c) for c in pair) for pair in cfg["box"]),
        eps=float(cfg.get("eps", 1e-4)),
        seed=seed,
    )
    n_samples = int(cfg["n_samples"])
    sample = glauber.sample_gamma_measure(params, n_samples)
    masses = sample.total_masses()
    shape = params.theta * params.volume
    # truncated reference moments: E = theta vol e^{-eps}, Var = theta vol (1+eps) e^{-eps}
    mean_target = shape * math.exp(-params.eps)
    var_target = shape * (1.0 + params.eps) * math.exp(-params.eps)
    mean, var = float(masses.mean()), float(masses.var(ddof=1))
    se_mean = float(masses.std(ddof=1) / math.sqrt(n_samples))
    m4 = float(np.mean((masses - mean) ** 4))
    se_var = math.sqrt(max(m4 - var**2, 0.0) / n_samples)
    ks = stats.kstest(masses, "gamma", args=(shape, 0.0, 1.0))

    report = RunReport(
        "glauber-sample", cfg,
        metadata={"seed": seed, "mean": mean, "var": var,
                  "ks_stat": float(ks.statistic), "ks_pvalue": float(ks.pvalue)},
    )
    report.add_verdict("mean_mass", abs(mean - mean_target) <= 3 * se_mean,
                       tolerance=3 * se_mean, observed=abs(mean - mean_target))
    report.add_verdict("var_mass", abs(var - var_target) <= 3 * se_var,
                       tolerance=3 * se_var, observed=abs(var - var_target))
    report.add_verdict("ks_gamma_law", ks.pvalue > 0.01, tolerance=0.01,
                       observed=float(ks.pvalue))
    rows = [{"statistic": "mean", "observed": mean, "target": mean_target,
             "se": se_mean},
            {"statistic": "var", "observed": var, "target": var_target,
             "se": se_var},
            {"statistic": "ks", "observed": float(ks.statistic),
             "target": 0.0, "se": float(ks.pvalue)}]
    report.tables["moments"] = rows
    write_csv(out_dir / "moments.csv", rows)
    plots.mass_histogram(
        out_dir / "mass_histogram.png", masses,
        pdf=lambda g: stats.gamma.pdf(g, shape, scale=1.0),
        title=f"Total mass vs Gamma({shape:g}, 1)",
    )

    gibbs_cfg = cfg.get("gibbs")
    if gibbs_cfg:
        potential = make_potential(cfg.get("potential", {"form": "zero"}))
        chain = glauber.sample_gibbs_mcmc(
            potential, params, int(gibbs_cfg["n_sweeps"]),
            int(gibbs_cfg["burn_in"]), thin=int(gibbs_cfg.get("thin", 1)),
        )
        ch_mass = chain.total_masses()
        ch_mean = float(ch_mass.mean())
        ch_se = float(ch_mass.std(ddof=1) / math.sqrt(len(ch_mass)))
        trace = chain.meta["trace"]
        acf_time = _autocorr_time(trace[:, 2])
        diag_rows = [
            {"move": k, "acceptance": v}
            for k, v in sorted(chain.meta["acceptance"].items())
        ]
        diag_rows.append({"move": "autocorr_time", "acceptance": acf_time})
        report.tables["chain_diagnostics"] = diag_rows
        write_csv(out_dir / "chain_diagnostics.csv", diag_rows)
        plots.chain_trace(out_dir / "chain_trace.png", trace[:, 0],
                          trace[:, 2], trace[:, 1], "MCMC chain trace")
        is_zero = cfg.get("potential", {"form": "zero"})["form"] == "zero"
        eff = max(len(ch_mass) / max(acf_time, 1.0), 1.0)
        se_eff = ch_se * math.sqrt(len(ch_mass) / eff)
        if is_zero:
            report.add_verdict(
                "gibbs_matches_gamma", abs(ch_mean - mean_target) <= 3 * se_eff,
                tolerance=3 * se_eff, observed=abs(ch_mean - mean_target),
            )
        else:
            report.add_verdict(
                "repulsion_lowers_mass", ch_mean < mean_target,
                observed=ch_mean, detail={"baseline": mean_target},
            )
        report.metadata["gibbs_mean"] = ch_mean
        report.metadata["gibbs_se"] = se_eff
    return report


def _autocorr_time(series: np.ndarray, max_lag: int = 200) -> float:
    x = np.asarray(series, dtype=float)
    x = x - x.mean()
    var = float(x @ x) / len(x)
    if var == 0.0:
        return 1.0
    tau = 1.0
    for lag in range(1, min(max_lag, len(x) // 2)):
        rho = float(x[:-lag] @ x[lag:]) / ((len(x) - lag) * var)
        if rho < 0.05:
            break
        tau += 2.0 * rho
    return tau


def run_glauber_gnz(cfg: dict, out_dir: Path,
                    seed: int | None = None) -> RunReport:
    _check_keys(
        cfg,
        {"theta", "box", "eps", "seed", "n_samples", "potential",
         "quad_grid", "functionals", "gibbs"},
        {"theta", "box", "seed", "n_samples", "potential", "quad_grid",
         "functionals"},
        "glauber-gnz config",
    )
    seed = cfg["seed"] if seed is None else seed
    params = glauber.GibbsParams(
        theta=float(cfg["theta"]),
        box=tuple(tuple(float(c) for c in pair) for pair in cfg["box"]),
        eps=float(cfg.get("eps", 1e-4)),
        seed=seed,
    )
    potential = make_potential(cfg["potential"])
    grid = _grid(cfg["quad_grid"])
    n_samples = int(cfg["n_samples"])
    if cfg["potential"]["form"] == "zero":
        samples = glauber.sample_gamma_measure(params, n_samples)
    else:
        gibbs_cfg = cfg.get("gibbs", {})
        thin = int(gibbs_cfg.get("thin", 2))
        burn = int(gibbs_cfg.get("burn_in", 2000))
        samples = glauber.sample_gibbs_mcmc(
            potential, params, n_samples * thin, burn, thin=thin
        )

    report = RunReport("glauber-gnz", cfg, metadata={"seed": seed})
    rows = []
    for doc in cfg["functionals"]:
        F = make_functional(doc)
        lhs, rhs, se = glauber.gnz_residual(F, samples, params, potential, grid)
        gap = abs(lhs - rhs)
        label = doc.get("label", "functional")
        report.add_verdict(f"gnz_{label}", gap <= 3 * se, tolerance=3 * se,
                           observed=gap, margin=3 * se - gap)
        rows.append({"functional": label, "lhs": lhs, "rhs": rhs, "se": se,
                     "z": gap / se if se > 0 else 0.0})
    report.tables["gnz"] = rows
    write_csv(out_dir / "gnz.csv", rows)
    plots.residual_bars(
        out_dir / "gnz_z_scores.png", [r["functional"] for r in rows],
        [max(r["z"], 1e-6) for r in rows],
        "Integration-by-parts identity, |lhs-rhs| in SE units", "z",
        threshold=3.0,
    )
    return report


def run_glauber_bounds(cfg: dict, out_dir: Path,
                       seed: int | None = None) -> RunReport:
    _check_keys(
        cfg,
        {"theta", "box", "eps", "seed", "alpha", "C", "potential",
         "op_grid", "n_bound_samples", "n_duality_pairs", "n_max",
         "dirichlet"},
        {"theta", "box", "seed", "alpha", "C", "potential", "op_grid"},
        "glauber-bounds config",
    )
    seed = cfg["seed"] if seed is None else seed
    rng = np.random.default_rng(seed)
    params = glauber.GibbsParams(
        theta=float(cfg["theta"]),
        box=tuple(tuple(float(c) for c in pair) for pair in cfg["box"]),
        eps=float(cfg.get("eps", 1e-4)),
        seed=seed,
    )
    potential = make_potential(cfg["potential"])
    grid = _grid(cfg["op_grid"])
    alpha, C = float(cfg["alpha"]), float(cfg["C"])
    n_max = int(cfg.get("n_max", 6))

    report = RunReport("glauber-bounds", cfg, metadata={"seed": seed})
    check = glauber.glauber_condition_check(potential, params.theta, alpha, C,
                                            grid)
    for name, entry in check["checks"].items():
        report.add_verdict(f"condition_{name}", entry["passed"],
                           detail=entry)

    # collapse identities at phi = 0 are exact on any grid measure
    zero = glauber.zero_potential()
    worst_collapse = 0.0
    for _ in range(10):
        G = harmonic.random_bbs(grid, rng, max_atoms=2)
        eta = random_grid_measure(grid, rng, max_atoms=min(3, grid.n_space))
        got = glauber.hat_l_glauber(G, eta, zero, params, grid)
        occupied = set(eta.positions)
        birth = math.fsum(
            grid.prod_w[p] * grid.prod_s[p] * G(
                eta.plus_atom(*grid.node(p))
            )
            for p in range(grid.n_nodes)
            if grid.node(p)[1] not in occupied
        )
        expect = -eta.total_mass() * G(eta) + birth
        worst_collapse = max(worst_collapse, abs(got - expect))
        got_d = glauber.l_triangle_glauber(G, eta, zero, params, grid, n_max)
        expect_d = -eta.total_mass() * G(eta) + math.fsum(
            a.mark * G(eta.drop(a.position)) for a in eta.atoms
        )
        worst_collapse = max(worst_collapse, abs(got_d - expect_d))
    report.add_verdict("collapse_identities", worst_collapse <= 1e-12,
                       tolerance=1e-12, observed=worst_collapse)

    n_pairs = int(cfg.get("n_duality_pairs", 10))
    worst_dual = 0.0
    for _ in range(n_pairs):
        G = harmonic.random_bbs(grid, rng, max_atoms=2)
        k = harmonic.random_bbs(grid, rng, max_atoms=2)
        lhs = harmonic.correlation_pairing(
            lambda eta: glauber.hat_l_glauber(G, eta, potential, params, grid),
            k, grid, n_max,
        )
        rhs = harmonic.correlation_pairing(
            G,
            lambda eta: glauber.l_triangle_glauber(k, eta, potential, params,
                                                   grid, n_max),
            grid, n_max,
        )
        worst_dual = max(worst_dual, abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1.0))
    report.add_verdict("duality", worst_dual <= 1e-8, tolerance=1e-8,
                       observed=worst_dual)

    n_bound = int(cfg.get("n_bound_samples", 30))
    G_samples = [harmonic.random_bbs(grid, rng, max_atoms=2)
                 for _ in range(n_bound)]
    est = glauber.relative_bound_glauber(G_samples, potential, params, alpha,
                                         C, grid, n_max=20)
    report.add_verdict("relative_bound", est["within"],
                       tolerance=est["bound"], observed=est["max_ratio"],
                       margin=est["bound"] - est["max_ratio"])
    rows = [{"sample": i, "ratio": r} for i, r in enumerate(est["ratios"])]
    report.tables["relative_bounds"] = rows
    write_csv(out_dir / "relative_bounds.csv", rows)

    dir_cfg = cfg.get("dirichlet")
    if dir_cfg:
        n_samples = int(dir_cfg["n_samples"])
        samples = glauber.sample_gamma_measure(params, n_samples)
        F = make_functional(dir_cfg["F"])
        G = make_functional(dir_cfg["G"])
        quad = _grid(dir_cfg["quad_grid"]) if "quad_grid" in dir_cfg else grid
        dir_pot = (
            make_potential(dir_cfg["potential"])
            if "potential" in dir_cfg else potential
        )
        lhs, rhs, se = glauber.dirichlet_residual(F, G, samples, dir_pot,
                                                  params, quad)
        gap = abs(lhs - rhs)
        report.add_verdict("dirichlet_form", gap <= 3 * se, tolerance=3 * se,
                           observed=gap, margin=3 * se - gap)
        report.metadata["dirichlet"] = {"lhs": lhs, "rhs": rhs, "se": se}

    plots.residual_bars(
        out_dir / "glauber_ratios.png",
        [f"G{i}" for i in range(len(est["ratios"]))],
        [max(r, 1e-18) for r in est["ratios"]],
        "Observed birth-part relative bounds", "ratio",
        threshold=est["bound"],
    )
    return report


COMMANDS = {
    "identities": run_identities,
    "contact": run_contact,
    "bdlp-conditions": run_bdlp_conditions,
    "bdlp-run": run_bdlp_run,
    "glauber-sample": run_glauber_sample,
    "glauber-gnz": run_glauber_gnz,
    "glauber-bounds": run_glauber_bounds,
}
