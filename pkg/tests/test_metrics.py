import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import ari_brute, nmi_brute
from sklearn.metrics import adjusted_rand_score, normalized_mutual_info_score

from flowguide.metrics import (
    GaussianSummary,
    ari,
    assignment_histogram,
    contingency,
    frechet_distance,
    frechet_from_summaries,
    nmi,
)
from flowguide.ot_guidance import hard_codes, sinkhorn

labelings = st.integers(2, 12).flatmap(
    lambda n: st.tuples(st.lists(st.integers(0, 4), min_size=n, max_size=n),
                        st.lists(st.integers(0, 4), min_size=n, max_size=n))
)


def test_nmi_examples():
    assert nmi([0, 0, 1, 1, 2], [0, 0, 1, 1, 2]) == 1.0
    assert nmi([3, 3, 3, 3], [0, 1, 2, 0]) == 0.0
    assert nmi([0, 0, 1, 1], [0, 1, 0, 1]) == 0.0
    assert nmi([0, 0], [5, 5]) == 1.0


def test_ari_examples():
    assert ari([0, 1, 1, 2], [0, 1, 1, 2]) == 1.0
    assert ari([0, 0, 1, 1], [0, 1, 0, 1]) == pytest.approx(-0.5, abs=1e-15)
    assert ari([0, 0, 1, 2], [2, 2, 0, 1]) == 1.0


def test_length_mismatch():
    with pytest.raises(ValueError):
        nmi([0, 1], [0])
    with pytest.raises(ValueError):
        ari([0, 1, 0], [0, 1])


def test_contingency_counts():
    table = contingency([0, 0, 1, 2], [1, 1, 1, 0])
    np.testing.assert_array_equal(table, [[0, 2], [0, 1], [1, 0]])


@settings(max_examples=100, deadline=None)
@given(labelings)
def test_nmi_matches_brute_force(pair):
    a, b = pair
    assert nmi(a, b) == pytest.approx(nmi_brute(a, b), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(labelings)
def test_ari_matches_brute_force(pair):
    a, b = pair
    assert ari(a, b) == pytest.approx(ari_brute(a, b), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(labelings)
def test_against_sklearn(pair):
    a, b = pair
    assert nmi(a, b) == pytest.approx(normalized_mutual_info_score(a, b, average_method="geometric"), abs=1e-10)
    assert ari(a, b) == pytest.approx(adjusted_rand_score(a, b), abs=1e-10)


@settings(max_examples=100, deadline=None)
@given(labelings, st.permutations(range(5)))
def test_symmetry_and_relabeling(pair, perm):
    a, b = pair
    pa = [perm[x] for x in a]
    assert nmi(a, b) == pytest.approx(nmi(b, a), abs=1e-12)
    assert ari(a, b) == pytest.approx(ari(b, a), abs=1e-12)
    assert nmi(pa, b) == pytest.approx(nmi(a, b), abs=1e-12)
    assert ari(pa, b) == pytest.approx(ari(a, b), abs=1e-12)


# -- frechet -------------------------------------------------------------------

def test_frechet_identity():
    x = np.random.default_rng(0).standard_normal((50, 2))
    assert frechet_distance(x, x) == pytest.approx(0.0, abs=1e-9)


def test_frechet_point_masses():
    a = np.tile([1.0, 2.0], (5, 1))
    b = np.tile([-1.0, 0.5], (5, 1))
    assert frechet_distance(a, b) == pytest.approx(4.0 + 2.25, abs=1e-12)


def test_frechet_unit_shift():
    a = GaussianSummary(np.zeros(2), np.eye(2))
    b = GaussianSummary(np.array([1.0, 0.0]), np.eye(2))
    assert frechet_from_summaries(a, b) == pytest.approx(1.0, abs=1e-12)


def _frechet_scipy(x, y):
    from scipy.linalg import sqrtm

    ma, mb = x.mean(0), y.mean(0)
    ca, cb = np.cov(x, rowvar=False), np.cov(y, rowvar=False)
    return float((ma - mb) @ (ma - mb) + np.trace(ca + cb - 2 * np.real(sqrtm(ca @ cb))))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 10.0))
def test_frechet_properties(seed, s):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((40, 2)) @ rng.standard_normal((2, 2))
    y = rng.standard_normal((30, 2)) @ rng.standard_normal((2, 2)) + rng.standard_normal(2)
    d = frechet_distance(x, y)
    assert d >= 0
    assert frechet_distance(y, x) == pytest.approx(d, rel=1e-9, abs=1e-9)
    assert frechet_distance(s * x, s * y) == pytest.approx(s * s * d, rel=1e-7, abs=1e-9)
    assert d == pytest.approx(_frechet_scipy(x, y), rel=1e-6, abs=1e-9)


def test_frechet_general_dimension():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((60, 4))
    y = rng.standard_normal((60, 4)) * 2 + 1
    assert frechet_distance(x, y) == pytest.approx(_frechet_scipy(x, y), rel=1e-6)


def test_frechet_needs_enough_samples():
    with pytest.raises(ValueError):
        frechet_distance(np.zeros((2, 2)), np.zeros((5, 2)))


# -- histogram -----------------------------------------------------------------

def test_histogram_examples():
    np.testing.assert_array_equal(assignment_histogram([0, 0, 1], 3), [2, 1, 0])
    np.testing.assert_array_equal(assignment_histogram([], 4), [0, 0, 0, 0])
    with pytest.raises(ValueError):
        assignment_histogram([3], 3)


def test_histogram_of_uniform_plan_codes():
    k, m = 4, 5
    codes = hard_codes(sinkhorn(np.zeros((k, k * m))))
    counts = [0] * k
    for c in codes:
        counts[c] += 1
    np.testing.assert_array_equal(assignment_histogram(codes, k), counts)
    assert counts == [k * m, 0, 0, 0]
