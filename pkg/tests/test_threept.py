from fractions import Fraction

import numpy as np
import pytest

from popdiff.core.gridfn import GridFunction
from popdiff.core.patterns import ap4_spec
from popdiff.core.threept import (
    VECTOR,
    FiniteGroup,
    FiniteGroupSpec,
    bohr_set,
    choose_prime,
    derived_bohr,
    lift_to_interval,
    nu_measure,
    popular_3pt_search,
    regularity_decompose,
    smoothed_3pt_count,
)
from popdiff.errors import NoPrimeInWindow, NotAutomorphism, Singular, UsageError


@pytest.fixture
def z101():
    return FiniteGroupSpec(FiniteGroup(101), 2, 3)


def test_bohr_set_on_z5():
    B = bohr_set(FiniteGroup(5), [1], 0.25)
    assert B.members.tolist() == [0, 1, 4]
    assert B.measure == Fraction(3, 5)
    assert B.delta == Fraction(1, 4)


def test_bohr_radius_bounds():
    with pytest.raises(UsageError):
        bohr_set(FiniteGroup(5), [1], 0.6)
    with pytest.raises(UsageError):
        bohr_set(FiniteGroup(5), [1], 0)


def test_bohr_set_in_vector_group():
    group = FiniteGroup(5, 2, VECTOR)
    B = bohr_set(group, [(1, 0)], Fraction(1, 4))
    # первая координата в {0, 1, 4}, вторая любая
    assert B.size == 15
    assert all(group.elements[i][0] in (0, 1, 4) for i in B.members)


def test_vector_group_requires_prime():
    with pytest.raises(UsageError):
        FiniteGroup(6, 2, VECTOR)


def test_spec_rejects_non_automorphism():
    with pytest.raises(NotAutomorphism):
        FiniteGroupSpec(FiniteGroup(10), 2, 3)
    with pytest.raises(NotAutomorphism):
        FiniteGroupSpec(FiniteGroup(7), 3, 3)
    assert FiniteGroupSpec(FiniteGroup(7), 3, 3, strict=False).M1.tolist() == [[3]]


def test_spec_from_dict_roundtrip():
    spec = FiniteGroupSpec.from_dict({"kind": "vector", "p": 5, "n": 2, "M1": [[1, 0], [0, 1]], "M2": [[2, 0], [0, 3]]})
    again = FiniteGroupSpec.from_dict(spec.to_dict())
    assert np.array_equal(again.M2, spec.M2)
    with pytest.raises(UsageError):
        FiniteGroupSpec.from_dict({"kind": "Z_N"})


def test_nu_is_probability_density(z101):
    B = bohr_set(z101.group, [1, 5], 0.25)
    nu = nu_measure(B)
    assert nu.mean() == pytest.approx(1.0, abs=1e-12)
    assert np.all(nu >= 0)
    sums = {(int(a) + int(b)) % 101 for a in B.members for b in B.members}
    assert set(np.nonzero(nu)[0].tolist()) <= sums


def test_derived_bohr_matches_definition(z101):
    B = bohr_set(z101.group, [1, 7], 0.25)
    derived = derived_bohr(B, z101)
    for r in derived.members:
        assert B.mask[(2 * r) % 101] and B.mask[(3 * r) % 101]
    assert len(derived.S) == 4


def test_smoothed_count_backends_agree(z101, rng):
    f = (rng.random(101) < 0.4).astype(float)
    B = bohr_set(z101.group, [1, 7], 0.25)
    direct = smoothed_3pt_count(f, z101, B, "direct")
    fourier = smoothed_3pt_count(f, z101, B, "fourier")
    assert abs(direct - fourier) <= 1e-9
    with pytest.raises(UsageError):
        smoothed_3pt_count(f, z101, B, "magic")


def test_smoothed_count_in_vector_group(rng):
    spec = FiniteGroupSpec(FiniteGroup(3, 2, VECTOR), [[1, 0], [0, 1]], [[2, 1], [0, 2]])
    f = rng.random(9)
    B = bohr_set(spec.group, [(1, 1)], Fraction(1, 2))
    direct = smoothed_3pt_count(f, spec, B, "direct")
    assert smoothed_3pt_count(f, spec, B, "fourier") == pytest.approx(direct, abs=1e-9)


def test_smoothed_count_of_constant(z101):
    B = bohr_set(z101.group, [1], 0.25)
    assert smoothed_3pt_count(np.full(101, 0.5), z101, B) == pytest.approx(0.125, abs=1e-12)


def test_regularity_decomposition_contracts(z101, rng):
    f = (rng.random(101) < 0.5).astype(float)
    dec = regularity_decompose(f, z101.group, 0.2, 0.25, S0=[1])
    contracts = dec.contracts(f, S0=[1])
    assert contracts["sum_matches"]
    assert contracts["mean_gap"] <= 1e-12
    low, high = contracts["f1_range"]
    assert low >= -1e-12 and high <= 1 + 1e-12
    assert contracts["f2_norm"] <= 0.2
    assert contracts["f3_fourier_max"] <= dec.gamma2 + 1e-12
    assert contracts["S0_in_T"]
    assert 1 <= dec.stages <= 400
    assert dec.lipschitz_constant >= 0


def test_regularity_rejects_unbounded(z101):
    with pytest.raises(UsageError):
        regularity_decompose(np.full(101, 2.0), z101.group, 0.2, 0.25)


def test_popular_search_in_cyclic_group(rng):
    spec = FiniteGroupSpec(FiniteGroup(101), 1, 2)
    mask = rng.random(101) < 0.5
    report = popular_3pt_search(mask, spec, 0.05)
    assert report.points == 3
    assert report.differences == 100
    assert report.threshold_hits > 0
    d = report.argmax_d
    count = sum(mask[x] and mask[(x + d) % 101] and mask[(x + 2 * d) % 101] for x in range(101))
    assert report.max_d == Fraction(int(count), 101)


def test_popular_search_dispatches_grid_functions(rng):
    f = GridFunction.random_set(rng, 5, 1, 2, 0.5)
    report = popular_3pt_search(f, ap4_spec(5), 0.1)
    assert report.points == 3
    with pytest.raises(UsageError):
        popular_3pt_search(f, FiniteGroupSpec(FiniteGroup(25), 1, 2), 0.1)


def test_choose_prime():
    assert choose_prime(30, 1, 0.1, [1]) == (31, Fraction(1, 10))
    assert choose_prime(30, 1, 0.01, [1]) == (31, Fraction(1, 25))
    assert choose_prime(30, 1, 0.1, [31])[0] == 37
    with pytest.raises(NoPrimeInWindow):
        choose_prime(30, 1, 0.01, [1], widen=False)


@pytest.mark.parametrize("N, p", [(30, 31), (40, 41)])
def test_lift_to_interval(rng, N, p):
    A = [x for x in range(N) if rng.random() < 0.6]
    report = lift_to_interval(A, N, [[1]], [[2]], 0.3)
    assert report["p"] == p
    assert report["best_d"] is not None
    assert report["audit_passed"]
    for x, y, z in report["triples"]:
        assert y[0] - x[0] == z[0] - y[0] == report["best_d"][0]


def test_lift_uses_half_window_bohr_radius():
    report = lift_to_interval(np.ones(40, dtype=bool), 40, [[1]], [[2]], 0.3)
    assert report["p"] == 41
    assert report["bohr_radius"] == Fraction(3, 20)
    # ‖d/41‖, ‖2d/41‖ < 3/20 оставляет |d| ≤ 3
    assert report["bohr_size"] == 7
    assert 0 < abs(report["best_d"][0]) <= 3
    # x ∈ [12.3, 28.7]: 16 точек, все тройки внутри [40]
    assert report["lifted_count"] == 16
    assert report["audit_passed"]


def test_lift_in_two_dimensions(rng):
    mask = rng.random((10, 10)) < 0.6
    report = lift_to_interval(mask, 10, [[1, 0], [0, 1]], [[0, -1], [1, 0]], 0.5, k=2)
    assert report["p"] == 11
    assert report["audit_passed"]
    assert report["best_d"] != [0, 0]


def test_lift_errors():
    with pytest.raises(Singular):
        lift_to_interval([1, 2], 30, [[1]], [[1]], 0.1)
    with pytest.raises(UsageError):
        lift_to_interval([31], 30, [[1]], [[2]], 0.1)


def test_three_point_popular_differences_exist(rng):
    spec = ap4_spec(5)
    for _ in range(50):
        f = GridFunction.random_set(rng, 5, 1, 3, rng.uniform(0.3, 0.6))
        assert popular_3pt_search(f, spec, 0.1).threshold_hits > 0


def test_decomposition_contracts_on_random_functions(z101, rng):
    for i in range(20):
        f = rng.random(101) if i % 2 else (rng.random(101) < 0.5).astype(float)
        dec = regularity_decompose(f, z101.group, 0.2, 0.25)
        contracts = dec.contracts(f)
        assert contracts["sum_matches"]
        assert contracts["mean_gap"] <= 1e-12
        assert contracts["f2_norm"] <= 0.2
        assert contracts["f3_fourier_max"] <= dec.gamma2 + 1e-12
