from fractions import Fraction

import numpy as np
import pytest

from popdiff.core.analysis import (
    abstract_atom_distribution,
    gowers_norm,
    linear_quadratic_distribution,
    multiplicative_derivative,
    pattern_count,
    pattern_tuple_distribution,
    popular_search,
    structured_pattern_average,
    von_neumann_check,
)
from popdiff.core.ffalg import FpMatrix, random_invertible
from popdiff.core.gridfn import (
    COMPLEX,
    FLOAT,
    Grid,
    GridFunction,
    GridPoint,
    QuadraticFactor,
    atom_labels,
    conditional_expectation,
    full_rank_factor,
)
from popdiff.core.patterns import PatternSpec, ap4_spec, reduce_to_identity_form, rotated_square_spec
from popdiff.config import set_guard_limit
from popdiff.errors import NotAutomorphism, NotMeasurable, TooLarge, UsageError


def _random_unit(rng, p, k, n):
    size = p ** (k * n)
    return GridFunction(p, k, n, rng.random(size), FLOAT, True, True)


def _random_complex(rng, p, k, n):
    size = p ** (k * n)
    values = rng.random(size) * np.exp(2j * np.pi * rng.random(size))
    return GridFunction(p, k, n, values, COMPLEX, False, True)


# ---------------------------------------------------------------------------
# β(d) и популярные разности
# ---------------------------------------------------------------------------

def test_constant_function_count():
    f = GridFunction.constant(5, 1, 2, Fraction(1, 2))
    d = GridPoint.from_index(7, 5, 1, 2)
    assert pattern_count(f, ap4_spec(5), d) == Fraction(1, 16)
    assert pattern_count(f, ap4_spec(5), d, points=3) == Fraction(1, 8)


def test_zero_difference_counts_density(rng):
    f = GridFunction.random_set(rng, 5, 2, 1, 0.4)
    zero = GridPoint.zero(5, 2, 1)
    assert pattern_count(f, rotated_square_spec(5), zero) == f.mean()


def test_exact_and_float_backends_agree(rng):
    f = GridFunction.random_set(rng, 5, 1, 3, 0.5)
    exact = popular_search(f, ap4_spec(5), 0.05, backend="exact")
    approx = popular_search(f, ap4_spec(5), 0.05, backend="float")
    assert exact.argmax_d == approx.argmax_d
    assert float(exact.max_d) == pytest.approx(approx.max_d, abs=1e-12)
    assert exact.threshold_hits == approx.threshold_hits
    for d in (1, 17, 99):
        assert float(exact.counts[d]) == pytest.approx(approx.counts[d], abs=1e-12)


def test_sparse_search_matches_dense(rng):
    f = GridFunction.random_set(rng, 5, 1, 3, 0.3)
    dense = popular_search(f, ap4_spec(5), 0, method="dense")
    sparse = popular_search(f, ap4_spec(5), 0, method="sparse")
    assert sparse.method == "sparse"
    assert sparse.max_d == dense.max_d
    assert sparse.argmax_d == dense.argmax_d
    assert sparse.threshold_hits == dense.threshold_hits
    for d, beta in sparse.counts.items():
        assert dense.counts[d] == beta


def test_report_fields(rng):
    f = GridFunction.random_set(rng, 5, 1, 2, 0.5)
    report = popular_search(f, ap4_spec(5), 0.05)
    data = report.to_dict()
    assert data["points"] == 4
    assert data["backend"] == "exact"
    assert report.differences == 24
    assert 0 <= report.markov_fraction <= 1
    assert report.argmax_d != 0
    assert report.threshold == report.alpha**4 - Fraction(1, 20)


def test_search_respects_guard(rng):
    f = GridFunction.random_set(rng, 5, 1, 3, 0.5)
    set_guard_limit(1000)
    with pytest.raises(TooLarge):
        popular_search(f, ap4_spec(5), 0.05, method="dense")


@pytest.mark.slow
def test_random_sets_have_popular_differences(rng):
    spec = ap4_spec(5)
    found = 0
    for _ in range(50):
        f = GridFunction.random_set(rng, 5, 1, 4, rng.uniform(0.3, 0.6))
        report = popular_search(f, spec, 0.05, backend="float")
        found += report.threshold_hits > 0
    assert found >= 48


def test_three_point_search_small(rng):
    f = GridFunction.random_set(rng, 5, 1, 3, 0.5)
    report = popular_search(f, ap4_spec(5), 0.1, points=3)
    assert report.points == 3
    assert report.threshold_hits > 0


# ---------------------------------------------------------------------------
# Нормы Гауэрса
# ---------------------------------------------------------------------------

def test_u1_is_absolute_mean(rng):
    f = _random_unit(rng, 3, 1, 2)
    assert gowers_norm(f, 1) == pytest.approx(abs(f.numeric().mean()))


def test_constants_are_fixed():
    for s in (2, 3):
        f = GridFunction.constant(3, 1, 2, Fraction(1, 3))
        assert gowers_norm(f, s) == pytest.approx(1 / 3, abs=1e-12)


def test_u2_of_point_indicator():
    mask = np.zeros(3, dtype=bool)
    mask[0] = True
    f = GridFunction.indicator(3, 1, 1, mask)
    expected = 3 ** (-3 / 4)
    for method in ("direct", "recursive", "fourier"):
        assert gowers_norm(f, 2, method) == pytest.approx(expected, abs=1e-12)


def test_recursive_and_direct_agree(rng):
    shapes = [(5, 1, 2), (3, 1, 3), (3, 2, 1), (7, 1, 2)]
    for i in range(50):
        p, k, n = shapes[i % len(shapes)]
        f = _random_complex(rng, p, k, n) if i % 2 else _random_unit(rng, p, k, n)
        direct = gowers_norm(f, 2, "direct")
        recursive = gowers_norm(f, 2, "recursive")
        fourier = gowers_norm(f, 2, "fourier")
        assert direct == pytest.approx(recursive, abs=1e-12)
        assert fourier == pytest.approx(recursive, abs=1e-12)


def test_norms_are_monotone_in_s(rng):
    f = _random_complex(rng, 3, 1, 2)
    u2 = gowers_norm(f, 2)
    u3 = gowers_norm(f, 3)
    assert gowers_norm(f, 1) <= u2 + 1e-12
    assert u2 <= u3 + 1e-12


def test_fourier_mode_only_for_u2(rng):
    with pytest.raises(UsageError):
        gowers_norm(_random_unit(rng, 3, 1, 1), 3, "fourier")


def test_multiplicative_derivative(rng):
    f = _random_complex(rng, 5, 1, 1)
    h = GridPoint.from_index(2, 5, 1, 1)
    g = multiplicative_derivative(f, h)
    vals = f.values
    assert g.values[1] == pytest.approx(vals[1] * np.conj(vals[3]))


def _von_neumann_instances(rng, count, s_values):
    scalars = FpMatrix.from_rows
    for i in range(count):
        s = s_values[i % len(s_values)]
        perm = rng.permutation([1, 2, 3, 4])[:s]
        autos = [scalars([[int(a)]], 5) for a in perm]
        fs = [_random_complex(rng, 5, 1, 2) for _ in range(s)]
        yield fs, autos


def test_von_neumann_small(rng):
    for fs, autos in _von_neumann_instances(rng, 10, (3,)):
        result = von_neumann_check(fs, autos)
        assert result["holds"], result


@pytest.mark.slow
def test_von_neumann_acceptance(rng):
    for fs, autos in _von_neumann_instances(rng, 100, (3, 4)):
        result = von_neumann_check(fs, autos)
        assert result["lhs"] <= result["rhs"] + 1e-9


def _general_automorphisms(rng, s, p=5):
    while True:
        autos = [random_invertible(rng, 2, p) for _ in range(s)]
        if any(A.data[0, 1] == 0 and A.data[1, 0] == 0 and A.data[0, 0] == A.data[1, 1] for A in autos):
            continue
        if all((A - B).is_invertible() for i, A in enumerate(autos) for B in autos[i + 1:]):
            return autos


@pytest.mark.parametrize("s", [2, 3, 4])
def test_von_neumann_general_automorphisms(rng, s):
    for _ in range(5):
        autos = _general_automorphisms(rng, s)
        fs = [_random_complex(rng, 5, 2, 1) for _ in range(s)]
        result = von_neumann_check(fs, autos)
        assert result["holds"], result


def test_von_neumann_two_functions_factorise(rng):
    # при обратимой A₁ − A₂ пара (x + A₁d, x + A₂d) пробегает G² равномерно
    autos = _general_automorphisms(rng, 2)
    fs = [_random_complex(rng, 5, 2, 1) for _ in range(2)]
    result = von_neumann_check(fs, autos)
    means = [abs(np.mean(f.values)) for f in fs]
    assert result["lhs"] == pytest.approx(means[0] * means[1], abs=1e-12)
    assert result["rhs"] == pytest.approx(min(means), abs=1e-12)


def test_von_neumann_rejects_equal_automorphisms(rng):
    fs = [_random_complex(rng, 5, 1, 1) for _ in range(3)]
    autos = [FpMatrix.from_rows([[a]], 5) for a in (1, 2, 2)]
    with pytest.raises(NotAutomorphism):
        von_neumann_check(fs, autos)


# ---------------------------------------------------------------------------
# Равнораспределение
# ---------------------------------------------------------------------------

def test_linear_quadratic_distribution():
    factor = full_rank_factor(3, 3, 1, 1)
    report = linear_quadratic_distribution(factor.linear_matrix(), factor.B2, 3, 3)
    assert report.support_ok
    assert report.predicted_cell_probability == Fraction(1, 9)
    assert report.cells_observed == 9
    assert report.total == 27


def test_sum_of_squares_deviation_decreases_with_n():
    # x·x над F_5^n: отклонения 1/5, 4/25, 1/25 при n = 3, 4, 5
    deviations = []
    for n in (3, 4, 5):
        report = linear_quadratic_distribution([], [FpMatrix.identity(n, 5)], n, 5)
        assert report.support_ok and report.support_full
        deviations.append(report.max_multiplicative_deviation)
    assert deviations == pytest.approx([0.2, 0.16, 0.04], abs=1e-12)
    assert deviations[0] > deviations[1] > deviations[2]


def test_dependent_linear_forms_shrink_support():
    report = linear_quadratic_distribution([[1, 0, 0], [2, 0, 0]], [], 3, 5)
    assert report.support_ok
    assert report.predicted_dim == 1
    assert report.cells_observed == 5
    assert report.observed_dim == 1
    assert report.max_multiplicative_deviation == 0


def test_pattern_tuple_support_small():
    J = FpMatrix.from_rows([[2]], 5)
    factor = full_rank_factor(5, 3, 1, 1, 1)
    report = pattern_tuple_distribution(factor, J)
    assert report.support_ok
    assert report.prediction_reliable
    assert report.predicted_dim == 5
    assert report.observed_dim <= report.predicted_dim
    assert report.total == 125**2


def test_pattern_tuple_restricted_to_h():
    J = FpMatrix.from_rows([[2]], 5)
    report = pattern_tuple_distribution(full_rank_factor(5, 3, 1, 1), J, restrict_to_H=True)
    assert report.support_ok
    assert report.extra["restrict_to_H"]
    assert report.total == 125 * 25


def test_unreliable_prediction_is_flagged():
    J = FpMatrix.from_rows([[0, 4], [1, 0]], 5)
    report = pattern_tuple_distribution(full_rank_factor(5, 1, 1, 0), J)
    assert not report.prediction_reliable


@pytest.mark.slow
def test_pattern_tuple_deviation_shrinks_with_n():
    J = FpMatrix.from_rows([[2]], 5)
    deviations = {}
    for n in (3, 4, 5):
        report = pattern_tuple_distribution(full_rank_factor(5, n, 1, 1, 1), J)
        assert report.support_ok
        deviations[n] = report.max_multiplicative_deviation
    assert deviations[5] < deviations[3]


def test_abstract_atoms():
    factor = full_rank_factor(3, 3, 1, 1)
    report = abstract_atom_distribution(factor)
    assert report.predicted_dim == 2 * 2 + 1
    assert report.cells_observed <= 3**5
    assert report.total == 27**2


def test_abstract_atoms_detect_rank_deficiency():
    factor = QuadraticFactor(3, 3, ([1, 0, 0], [2, 0, 0]))
    report = abstract_atom_distribution(factor)
    assert report.extra["rank_linear"] == 1
    assert report.cells_observed == 9
    assert not report.support_full
    assert report.observed_dim == 2 < report.predicted_dim


def test_pattern_count_multiset_invariant_under_reduction(rng):
    p, k, n = 5, 2, 1
    M1, M2 = random_invertible(rng, k, p), random_invertible(rng, k, p)
    spec = PatternSpec(p, k, M1, M2)
    reduced = reduce_to_identity_form(spec)
    f = GridFunction.random_set(rng, p, k, n, 0.5)
    before, after = [], []
    for i in range(p ** (k * n)):
        d = GridPoint.from_index(i, p, k, n)
        beta = pattern_count(f, spec, d)
        assert beta == pattern_count(f, reduced, GridPoint.from_matrix(M1 @ d.X))
        before.append(beta)
        after.append(pattern_count(f, reduced, d))
    assert sorted(before) == sorted(after)


def test_structured_average_constant_function():
    f = GridFunction.constant(5, 1, 2, Fraction(1, 2))
    result = structured_pattern_average(f, full_rank_factor(5, 2, 1, 0), FpMatrix.from_rows([[2]], 5))
    assert result["lhs"] == Fraction(1, 16) * Fraction(1, 5)
    assert result["tolerance"] == 0
    assert result["bound"] == result["lhs"]
    assert result["holds"]


def test_structured_average_linear_factor(rng):
    factor = full_rank_factor(5, 3, 1, 0)
    f = conditional_expectation(GridFunction.random_set(rng, 5, 1, 3, 0.5), factor)
    result = structured_pattern_average(f, factor, FpMatrix.from_rows([[2]], 5))
    assert result["support_full"]
    assert result["bound"] == Fraction(1, 5) * f.mean() ** 4
    assert result["bound"] > 0
    assert result["holds"]


def test_structured_average_atom_indicator():
    factor = full_rank_factor(5, 3, 1, 1)
    labels, _ = atom_labels(factor, Grid(5, 1, 3))
    f = GridFunction.indicator(5, 1, 3, labels == labels[7])
    result = structured_pattern_average(f, factor, FpMatrix.from_rows([[2]], 5))
    assert result["lhs"] > 0
    assert result["holds"] in (True, None)
    if result["bound"] is None:
        assert result["tolerance"] is None


@pytest.mark.slow
def test_structured_average_high_rank_factor(rng):
    # n = 5: смещения x·x не больше 5^{-5/2}, отклонение кортежей заведомо меньше 1
    factor = full_rank_factor(5, 5, 0, 1)
    f = conditional_expectation(GridFunction.random_set(rng, 5, 1, 5, 0.5), factor)
    result = structured_pattern_average(f, factor, FpMatrix.from_rows([[2]], 5))
    assert result["support_full"]
    assert result["deviation"] < 1
    assert 0 < result["bound"] <= f.mean() ** 4
    assert result["holds"]


def test_structured_average_requires_measurable():
    factor = full_rank_factor(5, 2, 1, 0)
    mask = np.zeros(25, dtype=bool)
    mask[1] = True  # точки 1 и 6 лежат в одном атоме x₁ = 1
    g = GridFunction.indicator(5, 1, 2, mask)
    with pytest.raises(NotMeasurable):
        structured_pattern_average(g, factor, FpMatrix.from_rows([[2]], 5))


def test_structured_average_rejects_float(rng):
    f = GridFunction.random_set(rng, 5, 1, 2, 0.5).to_float()
    with pytest.raises(UsageError):
        structured_pattern_average(f, full_rank_factor(5, 2, 1, 0), FpMatrix.from_rows([[2]], 5))
