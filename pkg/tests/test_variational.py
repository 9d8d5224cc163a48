import numpy as np
import pytest

from exclusion_lab import (
    CertificateError, ClockRealization, HeightProfile, Interface, JumpKernel, Occupancy,
    envelope, evolve, evolve_height, evolve_interface, finite_k_window, height_from_occupancy,
    occupancy_from_height, run, run_variational, sample_equilibrium, second_class_variational,
)
from exclusion_lab.variational import profile_from_csv, profile_to_csv

TASEP = JumpKernel.tasep()


def test_height_examples():
    assert np.all(height_from_occupancy(Occupancy.from_sites(-4, 4)).values == 0)
    z = height_from_occupancy(Occupancy(-4, np.ones(9, np.int8)))
    assert all(z[i] == i for i in range(-5, 5))
    c = Occupancy.from_sites(-2, 3, [0, 1, 3])
    z = height_from_occupancy(c)
    assert (z[0], z[1], z[2], z[3], z[-1], z[-2]) == (0, 1, 1, 2, -1, -1)


def test_height_round_trip():
    rng = np.random.default_rng(1)
    for _ in range(10000):
        lo = int(rng.integers(-6, 1))
        c = Occupancy(lo, rng.integers(0, 2, int(rng.integers(1, 9)) - lo), "frozen")
        if c.hi < 0:
            continue
        assert occupancy_from_height(height_from_occupancy(c)) == c


def test_height_increment_errors():
    with pytest.raises(ValueError):
        occupancy_from_height(HeightProfile(0, [0, 2, 2]))
    with pytest.raises(ValueError):
        occupancy_from_height(HeightProfile(0, [1, 0]))


def _first_epoch_clock(site, t=1.0):
    # a seed whose first event in -3..3 is at ``site``
    for seed in range(10000):
        c = ClockRealization(seed, t)
        times, sites, _ = c.events(-3, 3, TASEP)
        if len(times) and sites[0] == site:
            return c, times
    raise AssertionError


def test_single_epoch_examples():
    clock, times = _first_epoch_clock(0)
    t = (times[0] + times[1]) / 2 if len(times) > 1 else times[0]
    # flat z: the epoch is suppressed
    z = evolve_height(HeightProfile(-4, np.zeros(9)), clock, 0, t)
    assert np.all(z.values == 0)
    # z = (0, 1, 1) at (-1, 0, 1): a particle jumps 0 -> 1, z_0 drops to 0
    z = HeightProfile(-4, [0, 0, 0, 0, 1, 1, 1, 1, 1])
    out = evolve_height(z, clock, 0, t)
    assert out[0] == 0 and out[1] == 1 and out[-1] == 0
    # initial interface: the epoch at 0 raises xi_0 to 1
    xi = evolve_interface(Interface.initial(0, -4, 4), clock, t)
    assert xi[0] == 1
    assert [xi[j] for j in range(-4, 5) if j != 0] == [4, 3, 2, 1, 0, 0, 0, 0]


def test_interface_growth_order():
    """``xi_j`` for ``j > 0`` never jumps before ``xi_{j-1}`` has jumped."""
    for seed in range(20):
        clock = ClockRealization(seed, 10.0)
        for t in np.linspace(0.5, 10, 20):
            xi = evolve_interface(Interface.initial(0, -30, 30), clock, t)
            xi.check()
            for j in range(1, 30):
                if xi[j] > 0:
                    assert xi[j - 1] > 0


def test_w_profile_is_step_initial_exclusion():
    k = 3
    for seed in range(10):
        clock = ClockRealization(seed, 8.0)
        i = np.arange(-40, 41)
        w = HeightProfile(-40, np.minimum(i - k, 0))
        out = evolve_height(w, clock, 0, 8.0)
        step = Occupancy.from_sites(-39, 40, range(-39, k + 1))
        ex = evolve(step, TASEP, clock, 8.0, observe=(-20, 25))
        occ = occupancy_from_height(out)
        assert np.array_equal(occ.bits[20:65], ex.bits[20:65])


def test_w_equals_z0_minus_xi():
    """``w^k_i = z_k(0) - xi^k_{i-k}`` on shared clocks, with the index shift."""
    c = sample_equilibrium(0.4, 60, 2)
    z0 = height_from_occupancy(c)
    clock = ClockRealization(2, 6.0)
    for k in (-3, 0, 4):
        i = np.arange(-40, 41)
        w = HeightProfile(-40, z0[k] - np.maximum(k - i, 0))
        wt = evolve_height(w, clock, 0, 6.0)
        xi = evolve_interface(Interface.initial(k, -40 - k, 40 - k), clock, 6.0)
        for site in range(-20, 21):
            assert wt[site] == z0[k] - xi[site - k]


def _interfaces(clock, t, labels, half=60):
    return [evolve_interface(Interface.initial(k, -half, half), clock, t) for k in labels]


def test_envelope_at_time_zero_and_positive_times():
    c = sample_equilibrium(0.3, 90, 5)
    z0 = height_from_occupancy(c)
    labels = range(-30, 31)
    clock = ClockRealization(5, 6.0)
    at0 = _interfaces(clock, 0.0, labels)
    for i in range(-10, 11):
        assert envelope(z0, at0, i, 0.0) == z0[i]
    xs = _interfaces(clock, 6.0, labels)
    zt = evolve_height(z0, clock, 0, 6.0)
    for i in range(-10, 11):
        assert envelope(z0, xs, i, 6.0) == zt[i]


def test_label_monotonicity():
    clock = ClockRealization(8, 12.0)
    rng = np.random.default_rng(3)
    xs = {k: evolve_interface(Interface.initial(k, -80, 80), clock, 12.0) for k in range(-20, 21)}
    for _ in range(500):
        k, l = sorted(rng.choice(np.arange(-20, 21), 2, replace=False))
        i = int(rng.integers(-30, 31))
        assert xs[k][i - k] <= xs[l][i - l]


def test_finite_window_certificate():
    c = sample_equilibrium(0.25, 200, 4)
    z0 = height_from_occupancy(c)
    t = 10.0
    clock = ClockRealization(4, t)
    # at t = 0 every label collapses to k = 0
    xs0 = _interfaces(clock, 0.0, [0], half=100)
    assert finite_k_window(xs0, 0.0, 0.0, -2.0, 2.0)
    small = _interfaces(clock, t, range(-25, 26), half=100)
    assert finite_k_window(small, t, 0.0, -2.5, 2.5)
    big = _interfaces(clock, t, range(-75, 76), half=140)
    for i in range(-3, 4):
        assert envelope(z0, small, i, t) == envelope(z0, big, i, t)
    with pytest.raises(ValueError):
        finite_k_window(small, t, 0.0, -0.5, 2.5)


def test_uncertified_window_is_an_error():
    c = sample_equilibrium(0.5, 60, 1)
    z0 = height_from_occupancy(c)
    clock = ClockRealization(1, 20.0)
    xs = _interfaces(clock, 20.0, range(-1, 2))
    with pytest.raises(CertificateError):
        envelope(z0, xs, 0, 20.0)
    with pytest.raises(CertificateError):
        envelope(z0, [], 0)


def test_second_class_at_time_zero_and_low_density():
    c = sample_equilibrium(0.3, 80, 6, "origin-empty")
    z0 = height_from_occupancy(c)
    clock = ClockRealization(6, 5.0)
    xs = _interfaces(clock, 0.0, range(-30, 31))
    assert second_class_variational(z0, z0, xs, 0, range(-10, 11)) == 0
    # empty background: R(t) is the lone particle's Poisson path
    empty = Occupancy.from_sites(-90, 90)
    samples = np.linspace(0.5, 5.0, 10)
    vr = run_variational(empty, clock, 5.0, samples, observe=(-20, 30), margin=40)
    r = run(empty, TASEP, clock, 5.0, samples=samples, second_class=0, observe=())
    assert [vr.second_class(0, s) for s in range(10)] == r.R.tolist()


def test_run_variational_matches_exclusion():
    t = 30.0
    samples = np.linspace(3, t, 10)
    for seed in range(5):
        c = sample_equilibrium(0.25, 140, seed, "origin-empty")
        clock = ClockRealization(seed, t)
        vr = run_variational(c, clock, t, samples, observe=(-20, 50), debug=True)
        r = run(c, TASEP, clock, t, samples=samples, second_class=0, observe=(-21, 50), snapshots=True)
        assert not vr.audit.tripped and not r.audit.tripped
        for s in range(10):
            z = height_from_occupancy(Occupancy(c.lo, r.snapshots[s]))
            zdyn = z.values[-20 - z.lo: 51 - z.lo] - int(r.crossings[s])
            assert np.array_equal(vr.envelope(s), zdyn)
            assert np.array_equal(vr.z[s], zdyn)
            assert vr.second_class(0, s) == r.R[s]


def test_profile_csv_round_trip(tmp_path):
    z = height_from_occupancy(sample_equilibrium(0.5, 10, 3))
    p = tmp_path / "z.csv"
    profile_to_csv(z, p)
    back = profile_from_csv(p)
    assert back.lo == z.lo and np.array_equal(back.values, z.values)
