import math
import warnings
from fractions import Fraction

import numpy as np
import pytest

from exclusion_lab import ClockRealization, EventLog, JumpKernel, Occupancy, evolve, sample_equilibrium
from exclusion_lab.experiments import coupled_replica, current_replica, run_replicas, stack
from exclusion_lab.stats.estimators import (
    EnsembleEstimate, additive_functional, cauchy_stable, clt_diagnostic, fmean, mean_estimate,
    second_class_occupation, symmetric_walk_pmf, trend_slope, variance_curve, variance_estimate,
    velocity_and_tails, walk_marginal_test, wilson,
)
from exclusion_lab.stats.local import (
    LocalFunction, centered_monomial, centered_occupation, constant, current_function, decompose,
    expectation, monotone_monomial, monotone_split, pair_identity_terms,
)

F = Fraction


# ------------------------------------------------------------ basis algebra


def test_decompose_single_site():
    rho = F(1, 3)
    d = decompose(centered_occupation(rho, 0), rho)
    assert d.monotone == {(0,): 1} and d.centered == {(0,): 1} and d.constant == 0


def test_decompose_pair_product():
    rho = F(2, 7)
    d = decompose(centered_monomial((0, 1), rho), rho)
    assert d.monotone == {(0,): -rho, (1,): -rho, (0, 1): 1}
    assert d.constant == 0 and d.K == 2
    assert d.centered == {(0,): 0, (1,): 0, (0, 1): 1}


def test_reconstruction_exact_on_random_tables():
    rng = np.random.default_rng(0)
    for size in range(0, 7):
        for rho in (F(0), F(1, 4), F(3, 5), F(1)):
            f = LocalFunction(range(size), [F(int(v), 7) for v in rng.integers(-20, 20, 1 << size)])
            d = decompose(f, rho)
            assert d.reconstruct("monotone").table == f.table
            assert d.reconstruct("centered").table == f.table
            assert d.constant == expectation(f, rho)


def test_basis_functions_have_mean_zero():
    for rho in (F(1, 10), F(1, 2), F(9, 10)):
        for I in [(0,), (0, 1), (0, 2, 5), (1, 2, 3, 4)]:
            assert expectation(centered_monomial(I, rho), rho) == 0
            assert expectation(monotone_monomial(I, rho), rho) == 0


def test_pair_identity():
    for k in range(1, 10):
        rho = F(k, 10)
        lhs, terms = pair_identity_terms(rho)
        total = terms[0] + terms[1] + terms[2]
        assert lhs.equals(total)
        # the current function term carries the whole non-linear part
        assert terms[0].equals(current_function(0).scale(-1).shift(rho * (1 - rho)))


def test_monotone_split_examples():
    rho = F(1, 4)
    f = monotone_monomial((0,), rho)
    plus, minus = monotone_split(decompose(f, rho))
    assert plus.equals(f) and all(v == 0 for v in minus.table)
    g = centered_monomial((0, 1), rho)
    plus, minus = monotone_split(decompose(g, rho))
    assert plus.equals(monotone_monomial((0, 1), rho))
    assert minus.equals(monotone_monomial((0,), rho).scale(rho) + monotone_monomial((1,), rho).scale(rho))
    assert (plus - minus).equals(g)
    assert plus.is_increasing() and minus.is_increasing()


def test_monotone_split_of_arbitrary_function():
    rng = np.random.default_rng(2)
    rho = F(3, 8)
    for _ in range(30):
        f = LocalFunction(range(4), [F(int(v)) for v in rng.integers(-9, 10, 16)])
        d = decompose(f, rho)
        plus, minus = monotone_split(d)
        assert plus.is_increasing() and minus.is_increasing()
        assert expectation(plus, rho) == 0 and expectation(minus, rho) == 0
        assert (plus - minus).shift(d.constant).equals(f)


# ------------------------------------------------------------ functionals


def _hand_log():
    # sites -2..2, particles at -1 and 0; TASEP moves 0 -> 1, -1 -> 0, 1 -> 2
    c = Occupancy.from_sites(-2, 2, [-1, 0])
    log = EventLog(
        np.array([0.5, 1.25, 1.5, 2.0, 3.0]),
        np.array([0, -1, 0, 1, 0]),
        np.array([1, 1, 1, 1, 1]),
        np.array([True, True, False, True, True]),
    )
    return c, log


def test_additive_functional_hand_log():
    rho = 0.25
    f = centered_occupation(rho, 0)
    # eta_0: 1 on [0, .5), 0 on [.5, 1.25), 1 on [1.25, 3), 0 on [3, 4)
    want = 0.5 * 0.75 + 0.75 * -0.25 + 1.75 * 0.75 + 1.0 * -0.25
    assert additive_functional(_hand_log(), f, 4.0) == pytest.approx(want, abs=1e-15)
    assert additive_functional(_hand_log(), constant(0.0, (0,)), 4.0) == 0.0
    with pytest.raises(ValueError):
        additive_functional(_hand_log(), centered_occupation(rho, 7), 4.0)


def test_additive_functional_frozen_and_unit():
    c = Occupancy.from_sites(-3, 3, [0])
    log = EventLog(np.array([]), np.array([], np.int64), np.array([], np.int64), np.array([], bool))
    assert additive_functional((c, log), centered_occupation(0.3, 0), 2.5) == pytest.approx(2.5 * 0.7)
    c = sample_equilibrium(0.5, 20, 3)
    _, log = evolve(c, JumpKernel.tasep(), ClockRealization(3, 30.0), 30.0, log=True, observe=(-1, 1))
    one = LocalFunction((0, 1), [1.0] * 4)
    assert additive_functional((c, log), one, 30.0) == 30.0


def test_additive_functional_matches_event_loop():
    k = JumpKernel({1: 0.8, -1: 0.2})
    f = current_function(0)
    from exclusion_lab import run

    for seed in range(5):
        c = sample_equilibrium(0.4, 40, seed)
        clock = ClockRealization(seed, 12.0)
        r = run(c, k, clock, 12.0, functions=(f,), log=True, observe=(-2, 2))
        assert additive_functional((c, r.log), f, 12.0) == pytest.approx(r.integrals[0, -1], abs=1e-9)


# ------------------------------------------------------------ estimators


def test_ensemble_estimate_interval():
    e = EnsembleEstimate(10, 1.0, 0.5)
    assert e.ci95 == (1.0 - 0.98, 1.0 + 0.98)
    assert e.covers(1.9) and not e.covers(2.0)
    with pytest.raises(ValueError):
        EnsembleEstimate(1, 0.0, -1.0)


def test_reductions_are_order_independent():
    x = np.random.default_rng(1).standard_normal(10001) * 1e8
    y = np.random.default_rng(2).permutation(x)
    assert fmean(x) == fmean(y)
    assert mean_estimate(x) == mean_estimate(y)
    assert variance_estimate(x) == variance_estimate(y)


def test_stderr_scales_with_sample_size():
    rng = np.random.default_rng(5)
    ratios = []
    for _ in range(20):
        x = rng.exponential(size=8000)
        ratios.append(mean_estimate(x).stderr / mean_estimate(x[:4000]).stderr)
    assert abs(np.mean(ratios) - 1 / math.sqrt(2)) <= 0.2 / math.sqrt(2)


def test_stderr_scaling_on_replicas():
    k = JumpKernel.tasep()
    res = run_replicas(coupled_replica, 3, 400, kernel=k, rho=0.25, t=50.0, samples=[50.0])
    R = stack(res, "R")[:, 0] / 50.0
    ratio = mean_estimate(R).stderr / mean_estimate(R[:200]).stderr
    assert abs(ratio - 1 / math.sqrt(2)) <= 0.2 / math.sqrt(2)


def test_wilson_interval():
    lo, hi = wilson(0, 100)
    assert lo == pytest.approx(0.0, abs=1e-15) and 0 < hi < 0.05
    lo, hi = wilson(50, 100)
    assert lo < 0.5 < hi and hi - 0.5 == pytest.approx(0.5 - lo)
    assert wilson(0, 0) == (0.0, 1.0)


def test_variance_curve_rejects_uncentered_functions():
    A = np.zeros((5, 2))
    with pytest.raises(ValueError):
        variance_curve(A, [1.0, 2.0], monotone_monomial((0,), 0.3).shift(0.1), 0.3)
    out = variance_curve(A, [1.0, 2.0], centered_occupation(0.3, 0), 0.3)
    assert all(e.value == 0 for e in out)


def test_empty_system_has_zero_variance():
    f = monotone_monomial((0,), 0.0)
    A = []
    for seed in range(20):
        c = Occupancy.from_sites(-10, 10)
        _, log = evolve(c, JumpKernel.tasep(), ClockRealization(seed, 10.0), 10.0, log=True, observe=(0, 0))
        A.append([additive_functional((c, log), f, t) for t in (5.0, 10.0)])
    assert all(e.value == 0 for e in variance_curve(A, [5.0, 10.0], f, 0.0))
    rep = clt_diagnostic(np.array(A)[:, 1], 10.0)
    assert rep.degenerate and not rep.rejected()


def test_second_class_occupation_empty_background():
    k = JumpKernel.tasep()
    res = run_replicas(coupled_replica, 7, 3000, kernel=k, rho=0.0 + 1e-300, t=20.0, samples=[20.0])
    e = second_class_occupation(dwell=stack(res, "dwell")[:, 0])
    assert e.covers(1 - math.exp(-20.0))
    # grid fallback agrees and warns when the grid is coarse
    grid = np.linspace(0, 20, 401)
    res = run_replicas(coupled_replica, 8, 1500, kernel=k, rho=1e-300, t=20.0, samples=grid)
    g = second_class_occupation(R=stack(res, "R"), grid=grid)
    assert abs(g.value - (1 - math.exp(-20))) < 4 * g.stderr + 0.01
    with pytest.warns(UserWarning):
        second_class_occupation(R=stack(res, "R")[:, ::40], grid=grid[::40])


def test_cauchy_stability():
    est = [EnsembleEstimate(100, v, 0.01) for v in (0.90, 0.93, 0.935)]
    assert cauchy_stable(est)
    assert not cauchy_stable([EnsembleEstimate(100, v, 0.01) for v in (0.5, 1.0, 2.0)])


def test_velocity_at_half_density_is_zero():
    k = JumpKernel.tasep()
    res = run_replicas(coupled_replica, 2, 300, kernel=k, rho=0.5, t=100.0, samples=[100.0])
    rep = velocity_and_tails([stack(res, "R")[:, 0]], [100.0], 0.3, 0.0)
    assert rep.velocity.covers(0.0)
    assert rep.fit.points == 1 and rep.fit.ci95 == (-math.inf, math.inf)


def test_trend_slope_detects_growth():
    times = [100.0, 200.0, 400.0, 800.0]
    flat = [EnsembleEstimate(1000, 1.0, 0.02) for _ in times]
    grow = [EnsembleEstimate(1000, 0.1 * math.sqrt(t), 0.02) for t in times]
    assert not trend_slope(times, flat).excludes_zero
    assert trend_slope(times, grow).excludes_zero and trend_slope(times, grow).slope > 0


def test_symmetric_walk_law():
    n = np.arange(-200, 201)
    assert symmetric_walk_pmf(n, 50.0).sum() == pytest.approx(1.0, abs=1e-12)
    rng = np.random.default_rng(4)
    x = rng.poisson(25.0, 5000) - rng.poisson(25.0, 5000)
    stat, dof, p = walk_marginal_test(x, 50.0)
    assert p > 1e-3 and dof > 10


def test_current_and_occupation_tallies():
    res = run_replicas(current_replica, 4, 50, kernel=JumpKernel.tasep(), rho=0.25, t=20.0, samples=[10.0, 20.0])
    N = stack(res, "N")
    assert np.all(N[:, 1] >= N[:, 0])
    assert all(r["ok"] for r in res)
