import math

import numpy as np
import pytest
from scipy import stats

from exclusion_lab import (
    ClockRealization, DomainError, WeightGrid, brute_force_three_step, brute_force_upright,
    corner_passage, hitting_time_passage, interface_hits, lpp_three_step, lpp_upright, psi,
    psi_inverse, shape_g, shape_gamma,
)
from exclusion_lab.experiments import brute_force_replica, conjugacy_replica
from exclusion_lab.lpp import shape_gamma_upright
from exclusion_lab.rng import derive_seed


def test_psi_examples():
    assert psi(0, 1) == (1, 1)
    for j in range(1, 8):
        for i in range(1 - j, 9):
            assert psi_inverse(*psi(i, j)) == (i, j)
    with pytest.raises(DomainError):
        psi(-1, 1)
    with pytest.raises(DomainError):
        psi_inverse(0, 3)


def test_three_step_small_examples():
    w = WeightGrid.exponential_three_step(5, 2, 2)
    L = lpp_three_step(w)
    assert L[0, 1] == w[0, 1]
    assert L[3, 0] == 0.0 and L[-2, 2] == 0.0
    for c in w.cells():
        assert L[c] == brute_force_three_step(w, *c)
    zero = WeightGrid.three_step(3, 3, lambda i, j: 0.0)
    assert all(v == 0.0 for v in (lpp_three_step(zero)[c] for c in zero.cells()))
    with pytest.raises(DomainError):
        lpp_three_step(w, 3, 2)


def test_three_step_hand_grid():
    # Y_{i,j} = 1 + i + 10 j on the (1, 2) domain
    w = WeightGrid.three_step(1, 2, lambda i, j: 1.0 + i + 10 * j)
    L = lpp_three_step(w)
    # j = 1: cells i = 0, 1, 2 in a row; j = 2: cells i = -1, 0, 1
    assert L[0, 1] == 11 and L[1, 1] == 23 and L[2, 1] == 36
    # (0, 1) precedes (-1, 2) through the (i + 1, j - 1) step
    assert L[-1, 2] == L[0, 1] + 20 == 31
    assert L[0, 2] == max(L[-1, 2], L[1, 1]) + 21
    assert L[1, 2] == max(L[0, 2], L[2, 1]) + 22


def test_upright_examples():
    w = WeightGrid.exponential_upright(3, 6, 4)
    T = lpp_upright(w)
    assert T[1, 1] == w[1, 1]
    acc = 0.0
    for k in range(1, 7):
        acc = acc + w[k, 1]
        assert T[k, 1] == acc
    for c in w.cells():
        assert T[c] == brute_force_upright(w, *c)
    for c in T.cells():
        k, l = c
        if k > 1:
            assert T[c] >= T[k - 1, l]
        if l > 1:
            assert T[c] >= T[k, l - 1]


def test_conjugacy_and_vertical_step():
    for i in range(50):
        assert conjugacy_replica(derive_seed(1, i), size=12)


def test_brute_force_on_all_small_domains():
    for i in range(20):
        assert brute_force_replica(derive_seed(2, i))


def test_weight_reproducibility_and_csv(tmp_path):
    a = WeightGrid.exponential_upright(9, 5, 5)
    b = WeightGrid.exponential_upright(9, 5, 5)
    assert np.array_equal(a.values, b.values)
    # a larger grid extends the smaller one
    big = WeightGrid.exponential_upright(9, 8, 7)
    assert np.array_equal(big.values[:5, :5], a.values)
    p = tmp_path / "w.csv"
    a.to_csv(p)
    assert np.array_equal(WeightGrid.from_csv(p).values, a.values)
    three = WeightGrid.exponential_three_step(9, 2, 3)
    three.to_csv(p)
    back = WeightGrid.from_csv(p, kind="three-step")
    assert all(back[c] == three[c] for c in three.cells())
    with pytest.raises(ValueError):
        WeightGrid.upright([[1.0, -1.0]])


def test_corner_passage_equals_full_table():
    for seed in range(5):
        full = lpp_upright(WeightGrid.exponential_upright(seed, 40, 40))
        assert corner_passage(seed, 40) == full[40, 40]


def test_shape_functions():
    assert shape_g(0.0) == 0.25 and shape_g(1.0) == 0.0
    assert shape_g(-1.0) == 1.0 and shape_g(-2.0) == 2.0
    assert shape_gamma(1.0, 1.0) == pytest.approx(3 + 2 * math.sqrt(2), abs=1e-14)
    assert shape_gamma_upright(1.0, 1.0) == pytest.approx(4.0)
    x = np.linspace(-0.999, 0.999, 1000)
    assert np.max(np.abs(shape_gamma(x, shape_g(x)) - 1)) <= 1e-12
    with pytest.raises(DomainError):
        shape_gamma(-1.0, 0.5)


def _hits(seed, horizon=80.0, levels=6):
    return interface_hits(ClockRealization(seed, horizon), horizon, -60, 60, levels, observe=(-12, 12))


def test_hitting_time_boundary_values():
    h = _hits(3)
    for i in range(0, 5):
        assert hitting_time_passage(h, i, 0) == 0.0
        assert hitting_time_passage(h, -i, i) == 0.0
    with pytest.raises(DomainError):
        hitting_time_passage(h, 0, 50)


def test_hitting_times_match_dp_in_law():
    cells = [(0, 1), (2, 1), (-1, 2), (1, 3), (-2, 4), (0, 4)]
    n = 1500
    hit = np.array([[_hits(derive_seed(4, r)).passage(*c) for c in cells] for r in range(n)])
    dp = []
    for r in range(n):
        L = lpp_three_step(WeightGrid.exponential_three_step(derive_seed(5, r), 4, 4))
        dp.append([L[c] for c in cells])
    dp = np.array(dp)
    for a in range(len(cells)):
        z = (hit[:, a].mean() - dp[:, a].mean()) / math.sqrt(hit[:, a].var() / n + dp[:, a].var() / n)
        assert abs(z) < 4


def test_waiting_times_are_exponential_and_independent():
    waits, preds = [], []
    for r in range(1500):
        h = _hits(derive_seed(6, r))
        waits.append(h.waiting_time(0, 3))
        preds.append(max(h.passage(-1, 3), h.passage(1, 2), h.passage(0, 2)))
    waits = np.array(waits)
    assert np.all(waits > 0)
    assert stats.kstest(waits, "expon").pvalue > 1e-3
    assert abs(stats.pearsonr(waits, preds)[0]) < 4 / math.sqrt(len(waits))
