import itertools

import numpy as np
import pytest

from icct.coefficients import (
    C_STRINGS,
    C_TABLE,
    D_STRINGS,
    D_TABLE,
    coefficient_set,
    coefficients_from_eta,
    oracle_coefficient_set,
    power_sums,
    string_expectation,
)
from icct.errors import DimensionCapError, ValidationError
from conftest import random_mode_eta


def nested_loop_sums(eta):
    """Brute-force distinct-index sums, the oracle for power_sums."""
    x = eta * eta
    n = len(x)
    idx = range(n)
    t42 = sum(x[i] ** 2 * x[j] for i, j in itertools.permutations(idx, 2))
    t222 = sum(x[i] * x[j] * x[k] for i, j, k in itertools.permutations(idx, 3))
    t62 = sum(x[i] ** 3 * x[j] for i, j in itertools.permutations(idx, 2))
    t44 = sum(x[i] ** 2 * x[j] ** 2 for i, j in itertools.permutations(idx, 2))
    # t422 counts ordered (j, k) pairs around the eta^4 index
    t422 = sum(x[i] ** 2 * x[j] * x[k] for i, j, k in itertools.permutations(idx, 3))
    t2222 = sum(x[i] * x[j] * x[k] * x[p] for i, j, k, p in itertools.permutations(idx, 4))
    return t42, t222, t62, t44, t422, t2222


def test_power_sums_against_nested_loops(rng):
    for n in (2, 3, 5):
        eta = random_mode_eta(rng, n)
        p = power_sums(eta)
        t42, t222, t62, t44, t422, t2222 = nested_loop_sums(eta)
        assert p.t42 == pytest.approx(t42, abs=1e-12)
        assert p.t222 == pytest.approx(t222, abs=1e-12)
        assert p.t62 == pytest.approx(t62, abs=1e-12)
        assert p.t44 == pytest.approx(t44, abs=1e-12)
        assert p.t422 == pytest.approx(t422, abs=1e-12)
        assert p.t2222 == pytest.approx(t2222, abs=1e-12)


def test_power_sums_com_and_single_ion():
    p4 = power_sums(np.full(4, 0.5))
    assert p4.s4 == pytest.approx(0.25, abs=1e-15)
    p1 = power_sums(np.array([1.0]))
    assert (p1.s2, p1.s4, p1.s6, p1.s8) == (1.0, 1.0, 1.0, 1.0)
    for t in (p1.t42, p1.t222, p1.t62, p1.t44, p1.t422, p1.t2222):
        assert t == 0.0


def test_formula_matches_oracle_random_modes(rng):
    for _ in range(25):
        n = int(rng.integers(1, 7))
        eta = random_mode_eta(rng, n)
        formula = coefficients_from_eta(eta).as_dict()
        oracle = oracle_coefficient_set(eta).as_dict()
        for key, value in formula.items():
            assert value == pytest.approx(oracle[key], abs=1e-10), key


def test_single_ion_degeneration():
    c = coefficient_set(np.array([1.0]))
    assert (c.a, c.b1, c.b2) == (1.0, 1.0, 0.0)
    assert c.c == (0.0, 1.0, 0.0, 0.0, 0.0)
    expected_d = tuple(1.0 if i == 1 else 0.0 for i in range(14))
    assert c.d == expected_d


def test_com_b2_closed_form():
    for n in (2, 4, 19, 40):
        c = coefficient_set(np.full(n, 1.0 / np.sqrt(n)))
        assert c.b2 == pytest.approx(2.0 * (1.0 - 1.0 / n), rel=1e-12)


def test_all_entries_nonnegative(rng):
    for _ in range(20):
        eta = random_mode_eta(rng, int(rng.integers(1, 8)))
        c = coefficient_set(eta)
        assert all(v >= 0.0 for v in c.as_dict().values())


def test_homogeneity_of_raw_sums(rng):
    # C is degree 6 and D degree 8 in the unnormalized couplings
    eta = rng.normal(size=5)
    lam = 1.7
    base = coefficients_from_eta(eta)
    scaled = coefficients_from_eta(lam * eta)
    for c0, c1 in zip(base.c, scaled.c):
        assert c1 == pytest.approx(lam**6 * c0, rel=1e-12)
    for d0, d1 in zip(base.d, scaled.d):
        assert d1 == pytest.approx(lam**8 * d0, rel=1e-12)


def test_permutation_and_sign_invariance(rng):
    eta = random_mode_eta(rng, 6)
    ref = coefficients_from_eta(eta).as_dict()
    perm = coefficients_from_eta(eta[rng.permutation(6)]).as_dict()
    signs = eta * np.where(rng.random(6) < 0.5, -1.0, 1.0)
    flipped = coefficients_from_eta(signs).as_dict()
    for key in ref:
        assert perm[key] == pytest.approx(ref[key], abs=1e-13)
        assert flipped[key] == pytest.approx(ref[key], abs=1e-13)


def test_string_expectation_basics(rng):
    eta = random_mode_eta(rng, 4)
    assert string_expectation(eta, "-+") == pytest.approx(1.0, abs=1e-14)
    # three distinct indices are impossible with two ions
    assert string_expectation(random_mode_eta(rng, 2), C_STRINGS[4]) == pytest.approx(0.0, abs=1e-14)
    eta3 = random_mode_eta(rng, 3)
    p = power_sums(eta3)
    d6 = D_TABLE[5] @ np.array([p.s8, p.t62, p.t44, p.t422, p.t2222])
    assert string_expectation(eta3, D_STRINGS[5]) == pytest.approx(d6, abs=1e-12)


def test_string_expectation_validation():
    with pytest.raises(DimensionCapError):
        string_expectation(np.ones(13) / np.sqrt(13), "-+")
    with pytest.raises(ValidationError):
        string_expectation(np.array([1.0]), "-x+")


def test_coefficient_set_requires_normalization():
    with pytest.raises(ValidationError):
        coefficient_set(np.array([1.0, 1.0]))


def test_table_self_check_catches_corruption():
    import icct.coefficients as mod

    original = mod.C_TABLE[0, 1]
    mod._reset_table_check()
    mod.C_TABLE[0, 1] = original + 1
    try:
        with pytest.raises(AssertionError):
            coefficients_from_eta(np.array([0.6, 0.8]))
    finally:
        mod.C_TABLE[0, 1] = original
        mod._reset_table_check()
        coefficients_from_eta(np.array([0.6, 0.8]))
