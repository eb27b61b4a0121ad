import math

import numpy as np
import pytest

from conftest import random_state
from tdgl2d.diagnostics import reduced_ode_oracle
from tdgl2d.fields import (Params, gauge_transform, link_variables,
                           magnetic_field, make_initial_state,
                           psi_valid_block, refresh_closures)
from tdgl2d.grid import GridConfig, build_grid
from tdgl2d.integrators import (AlgorithmId, LowerBoundUnstable, Scenario,
                                StepperCache, UpperBoundStable, adi_solve_psi,
                                find_stability_limit, psi_sweep_factors,
                                run_probe, semigroup_s, step_explicit,
                                step_fully_implicit, step_implicit,
                                step_multirate, step_semi_implicit)
from tdgl2d import linalg, oracles


def uniform_state(g, p, value):
    s = make_initial_state(g, p, seed=0, noise_eps=0.0)
    s.psi[g.n_sx - 1:g.n_ex + 2, :] *= value
    refresh_closures(s, p, g)
    return s


def step_by(alg, s, p, g, cache, n=0):
    if alg == "I":
        return step_explicit(s, p, g)
    if alg == "II":
        return step_semi_implicit(s, p, g, cache)
    if alg == "III":
        return step_implicit(s, p, g, cache)
    if alg == "IV":
        return step_fully_implicit(s, p, g, cache)
    return step_multirate(s, p, g, cache, phase=n)


def test_algorithm_id_parse():
    assert AlgorithmId.parse("I") is AlgorithmId.EXPLICIT
    assert AlgorithmId.parse("iv") is AlgorithmId.FULLY_IMPLICIT
    assert AlgorithmId.parse("SEMI_IMPLICIT") is AlgorithmId.SEMI_IMPLICIT
    with pytest.raises(ValueError):
        AlgorithmId.parse("V")


@pytest.mark.parametrize("alg", ["I", "II", "III", "IV"])
def test_fixed_point_preserved(alg, g_small):
    for tau in (1.0, 0.49):
        p = Params(kappa=4.0, sigma=1.0, dt=0.05, tau=tau)
        s = uniform_state(g_small, p, math.sqrt(tau))
        ref = psi_valid_block(s, g_small).copy()
        cache = StepperCache(p, g_small)
        rep = step_by(alg, s, p, g_small, cache)
        assert not rep.diverged
        assert np.max(np.abs(psi_valid_block(s, g_small) - ref)) < 1e-13
        assert rep.max_da < 1e-13


def test_explicit_tracks_ode_first_order(g_small):
    # uniform data reduce every explicit-psi algorithm to the logistic
    # flow; the global error halves with the step
    t_end = 2.0
    errs = []
    for dt in (0.02, 0.01):
        p = Params(kappa=4.0, sigma=1.0, dt=dt)
        s = uniform_state(g_small, p, 0.5)
        for _ in range(round(t_end / dt)):
            step_explicit(s, p, g_small)
        x_want, _ = reduced_ode_oracle(0.25, 0.0, 1.0, 0.0, t_end)
        errs.append(abs(abs(s.psi[g_small.n_sx, 1]) - math.sqrt(x_want)))
    assert errs[0] / errs[1] == pytest.approx(2.0, abs=0.2)


def test_semi_implicit_one_step_order(g_small, p_small, rng):
    # one step of II differs from I by O(dt^2): halving dt shrinks the
    # difference about fourfold
    diffs = []
    for dt in (0.02, 0.01):
        p = Params(kappa=p_small.kappa, sigma=p_small.sigma, dt=dt,
                   h_l=p_small.h_l, h_r=p_small.h_r)
        s1 = random_state(g_small, p, np.random.default_rng(11))
        s2 = s1.copy()
        cache = StepperCache(p, g_small)
        step_explicit(s1, p, g_small)
        step_semi_implicit(s2, p, g_small, cache)
        d = max(np.max(np.abs(s2.a_x - s1.a_x)),
                np.max(np.abs(s2.a_y - s1.a_y)))
        diffs.append(d)
    assert diffs[0] / diffs[1] == pytest.approx(4.0, rel=0.25)


def test_implicit_uniform_matches_explicit_euler(g_small):
    # L terms vanish on uniform data, so III reproduces the explicit
    # Euler recurrence for the reaction term
    p = Params(kappa=4.0, sigma=1.0, dt=0.05)
    s = uniform_state(g_small, p, 0.5)
    cache = StepperCache(p, g_small)
    x = 0.5 + 0j
    for _ in range(40):
        step_implicit(s, p, g_small, cache)
        x = x + p.dt * (x - abs(x) ** 2 * x)
    got = s.psi[g_small.n_sx, 1]
    assert got == pytest.approx(x, abs=1e-12)


def test_adi_dt_zero_identity(g_small, p_small, rng):
    s = random_state(g_small, p_small, rng)
    links = link_variables(s, p_small, g_small)
    rhs = rng.standard_normal((g_small.n_sc, g_small.n_y)) \
        + 1j * rng.standard_normal((g_small.n_sc, g_small.n_y))
    out = adi_solve_psi(rhs, links, p_small, g_small, dt=0.0)
    assert np.array_equal(out.view(float), rhs.astype(complex).view(float))


def test_adi_fourier_mode_second_sweep(g_small):
    # U = 1 and a single y Fourier mode on one column: the y sweep divides
    # by (1 + dt * 4 sin^2(pi k / n_y) / h_y^2)
    g = g_small
    p = Params(kappa=2.0, sigma=1.0, dt=0.2)
    u = np.ones(g.shape, complex)
    from tdgl2d.fields import LinkField
    links = LinkField(u_x=u, u_y=u.copy())
    k = 2
    jj = np.arange(g.n_y)
    mode = np.exp(2j * np.pi * k * jj / g.n_y)
    rhs = np.zeros((g.n_sc, g.n_y), complex)
    rhs[3, :] = mode
    phi = adi_solve_psi(rhs, links, p, g, dt=p.dt)
    factors = psi_sweep_factors(links, u[g.n_sx - 1, :], u[g.n_ex, :],
                                p.dt, g)
    phi_half = linalg.thomas_solve(factors[0], rhs)
    lam = 4.0 / g.h_y ** 2 * math.sin(math.pi * k / g.n_y) ** 2
    assert np.max(np.abs(phi - phi_half / (1.0 + p.dt * lam))) < 1e-13


def test_adi_vs_unfactored_richardson(rng):
    g = build_grid(GridConfig(64, 64, 4, 4))
    p = Params(kappa=3.0, sigma=1.0, dt=0.2)
    s = make_initial_state(g, p, seed=3)
    s.a_x[...] = rng.standard_normal(g.shape)
    s.a_y[...] = rng.standard_normal(g.shape)
    refresh_closures(s, p, g)
    links = link_variables(s, p, g)
    rhs = rng.standard_normal((g.n_sc, g.n_y)) \
        + 1j * rng.standard_normal((g.n_sc, g.n_y))
    e1 = np.max(np.abs(adi_solve_psi(rhs, links, p, g, dt=0.1)
                       - oracles.unfactored_psi_solve(rhs, links, p, g,
                                                      dt=0.1)))
    e2 = np.max(np.abs(adi_solve_psi(rhs, links, p, g, dt=0.05)
                       - oracles.unfactored_psi_solve(rhs, links, p, g,
                                                      dt=0.05)))
    assert e1 / e2 == pytest.approx(4.0, rel=0.15)


def test_semigroup_values():
    assert semigroup_s(0.0 + 0j, 1.0, 0.5) == 0.0
    z = math.sqrt(0.49) * np.exp(0.7j)
    assert semigroup_s(z, 0.49, 2.0) == pytest.approx(z, abs=1e-14)
    # frozen: tau = 1, |psi| = 0.5, dt = 0.1 from the 40-digit evaluation
    got = abs(semigroup_s(0.5 + 0j, 1.0, 0.1))
    assert got == pytest.approx(0.5378993920243496, abs=1e-14)
    # phase preserved exactly
    w = semigroup_s(0.3 * np.exp(1.1j), 1.0, 0.3)
    assert np.angle(w) == pytest.approx(1.1, abs=1e-14)


def test_semigroup_consistency_first_order():
    # (S(psi) - psi)/dt approaches N(psi) at first order in dt
    from tdgl2d.operators import nonlinear_n
    psi = 0.62 * np.exp(0.4j)
    tau = 0.9
    res = []
    for dt in (1e-2, 1e-3, 1e-4):
        s_val = semigroup_s(psi, tau, dt)
        res.append(abs((s_val - psi) / dt - nonlinear_n(psi, tau)))
    assert res[0] / res[1] == pytest.approx(10.0, rel=0.15)
    assert res[1] / res[2] == pytest.approx(10.0, rel=0.15)


def test_fully_implicit_semigroup_exact(g_small):
    # uniform data: the trajectory equals the closed-form amplitude flow
    # at any dt; 100 steps of dt = 1 stay within 1e-12
    p = Params(kappa=4.0, sigma=1.0, dt=1.0)
    s = uniform_state(g_small, p, 0.5)
    cache = StepperCache(p, g_small)
    for _ in range(100):
        rep = step_fully_implicit(s, p, g_small, cache)
        assert not rep.diverged
    x_want, _ = reduced_ode_oracle(0.25, 0.0, 1.0, 0.0, 100.0)
    got = np.abs(psi_valid_block(s, g_small))
    assert np.max(np.abs(got - math.sqrt(x_want))) <= 1e-12


def test_multirate_m1_bitwise_matches_iv(g_small):
    p = Params(kappa=4.0, sigma=1.0, dt=0.05, h_l=0.2, h_r=0.2, m=1)
    sA = make_initial_state(g_small, p, seed=9)
    sB = sA.copy()
    cA, cB = StepperCache(p, g_small), StepperCache(p, g_small)
    for k in range(25):
        step_fully_implicit(sA, p, g_small, cA)
        step_multirate(sB, p, g_small, cB, phase=k)
    assert np.array_equal(sA.psi.view(float), sB.psi.view(float),
                          equal_nan=True)
    assert np.array_equal(sA.a_x, sB.a_x)
    assert np.array_equal(sA.a_y, sB.a_y)


def test_multirate_frozen_field_follows_ode(g_small):
    # large m with H = 0 freezes A at zero; uniform psi follows the
    # closed-form amplitude flow through the pure semigroup steps
    p = Params(kappa=4.0, sigma=1.0, dt=0.5, m=1000)
    s = uniform_state(g_small, p, 0.3)
    cache = StepperCache(p, g_small)
    for k in range(60):
        step_multirate(s, p, g_small, cache, phase=k)
    assert np.max(np.abs(s.a_y)) == 0.0
    x_want, _ = reduced_ode_oracle(0.09, 0.0, 1.0, 0.0, 30.0)
    got = abs(s.psi[g_small.n_sx, 1])
    assert got == pytest.approx(math.sqrt(x_want), abs=1e-12)


def test_multirate_skips_a_updates(g_small):
    p = Params(kappa=4.0, sigma=1.0, dt=0.05, h_l=0.2, h_r=0.2, m=4)
    s = make_initial_state(g_small, p, seed=9, mode="field-cooled")
    cache = StepperCache(p, g_small)
    for k in range(9):
        rep = step_multirate(s, p, g_small, cache, phase=k)
        if k % 4 == 0:
            assert rep.max_da > 0.0
        else:
            assert rep.max_da == 0.0


@pytest.mark.parametrize("alg", ["I", "II", "III", "IV"])
def test_one_step_gauge_equivariance(alg, g_small, p_small, rng):
    p = Params(kappa=2.0, sigma=1.3, dt=0.002, h_l=0.3, h_r=0.1)
    s = random_state(g_small, p, rng)
    chi = rng.uniform(-math.pi, math.pi, g_small.shape)
    s_gauged = gauge_transform(s, chi, p, g_small)
    c1, c2 = StepperCache(p, g_small), StepperCache(p, g_small)
    step_by(alg, s, p, g_small, c1)
    step_by(alg, s_gauged, p, g_small, c2)
    s_then_gauge = gauge_transform(s, chi, p, g_small)
    blk = psi_valid_block(s_gauged, g_small)
    blk_ref = psi_valid_block(s_then_gauge, g_small)
    scale = max(1.0, float(np.max(np.abs(blk_ref))))
    assert np.max(np.abs(blk - blk_ref)) <= 1e-10 * scale
    a_scale = max(1.0, float(np.max(np.abs(s_then_gauge.a_y))))
    assert np.max(np.abs(s_gauged.a_x - s_then_gauge.a_x)) <= 1e-10 * a_scale
    assert np.max(np.abs(s_gauged.a_y - s_then_gauge.a_y)) <= 1e-10 * a_scale


def test_one_step_pairwise_consistency(g_small, rng):
    # all four algorithms from the same smooth state differ pairwise by
    # O(dt^2): halving dt shrinks every pairwise gap about fourfold
    def smooth_state(p):
        s = make_initial_state(g_small, p, seed=0, noise_eps=0.0)
        g = g_small
        for i in range(g.n_sx - 1, g.n_ex + 2):
            for j in range(g.shape[1]):
                s.psi[i, j] = (0.6 + 0.2 * math.sin(2 * math.pi * j / g.n_y)
                               + 0.15j * math.cos(math.pi * i / g.n_x))
        refresh_closures(s, p, g)
        return s

    gaps = {}
    for dt in (0.02, 0.01):
        p = Params(kappa=2.0, sigma=1.0, dt=dt, h_l=0.2, h_r=0.2)
        finals = {}
        for alg in ("I", "II", "III", "IV"):
            s = smooth_state(p)
            step_by(alg, s, p, g_small, StepperCache(p, g_small))
            finals[alg] = (psi_valid_block(s, g_small).copy(),
                           s.a_x.copy(), s.a_y.copy())
        for a in ("I", "II", "III"):
            for b in ("II", "III", "IV"):
                if a >= b:
                    continue
                gap = max(float(np.max(np.abs(finals[a][k] - finals[b][k])))
                          for k in range(3))
                gaps.setdefault((a, b), []).append(gap)
    for pair, (e1, e2) in gaps.items():
        assert e1 / e2 == pytest.approx(4.0, rel=0.3), pair


def test_divergence_flag(g_small):
    p = Params(kappa=4.0, sigma=1.0, dt=50.0, h_l=0.5, h_r=0.5)
    s = make_initial_state(g_small, p, seed=2, mode="field-cooled")
    diverged = False
    for _ in range(200):
        rep = step_explicit(s, p, g_small)
        if rep.diverged:
            diverged = True
            break
    assert diverged


def test_post_step_boundary_consistency(g_small):
    p = Params(kappa=4.0, sigma=1.0, dt=0.01, h_l=0.5, h_r=0.5)
    s = make_initial_state(g_small, p, seed=2, mode="field-cooled")
    cache = StepperCache(p, g_small)
    for alg in ("I", "II", "III", "IV"):
        step_by(alg, s, p, g_small, cache)
        b = magnetic_field(s, g_small)
        assert np.max(np.abs(b[0, 1:] - 0.5)) < 1e-12
        assert np.max(np.abs(b[g_small.n_x, 1:] - 0.5)) < 1e-12


def test_find_stability_limit_bisection():
    # synthetic probe: stable iff dt <= 0.0637
    true_limit = 0.0637
    calls = []

    def probe(dt):
        calls.append(dt)
        return dt <= true_limit

    scen = None
    lim = find_stability_limit(AlgorithmId.EXPLICIT, scen, 0.001, 1.0,
                               probe=probe)
    assert lim <= true_limit
    assert true_limit - lim <= 0.001  # two significant figures of 0.06x
    assert lim in calls


def test_find_stability_limit_brackets():
    with pytest.raises(LowerBoundUnstable):
        find_stability_limit(AlgorithmId.EXPLICIT, None, 0.1, 1.0,
                             probe=lambda dt: False)
    with pytest.raises(UpperBoundStable) as err:
        find_stability_limit(AlgorithmId.EXPLICIT, None, 0.1, 1.0,
                             probe=lambda dt: True)
    assert err.value.cap == 1.0
    # degenerate bounds: the single value is probed and returned
    assert find_stability_limit(AlgorithmId.EXPLICIT, None, 0.5, 0.5,
                                probe=lambda dt: True) == 0.5
    with pytest.raises(LowerBoundUnstable):
        find_stability_limit(AlgorithmId.EXPLICIT, None, 0.5, 0.5,
                             probe=lambda dt: False)


def test_fully_implicit_ode_scenario_unbounded(g_small):
    # uniform order parameter, no applied field: the fully implicit update
    # is the exact local flow, stable at any step size up to the cap
    p = Params(kappa=4.0, sigma=1.0, dt=1.0)
    scen = Scenario(grid=g_small, params=p, seed=0, probe_horizon=60,
                    initial="meissner", noise_eps=0.0)
    with pytest.raises(UpperBoundStable):
        find_stability_limit(AlgorithmId.FULLY_IMPLICIT, scen, 1.0, 64.0)


def test_run_probe_explicit_detects_instability(g_small):
    p = Params(kappa=4.0, sigma=1.0, dt=1.0, h_l=0.5, h_r=0.5)
    scen = Scenario(grid=g_small, params=p, seed=0, probe_horizon=400,
                    initial="field-cooled")
    assert run_probe(AlgorithmId.EXPLICIT, scen, 0.02)
    assert not run_probe(AlgorithmId.EXPLICIT, scen, 0.5)
