import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from demoscale.dtw import (
    WarpPath,
    distance_matrix,
    dtw_distance,
    dtw_distance_brute_force,
)
from demoscale.errors import ValidationError


class TestDistanceMatrix:
    def test_identical_singletons(self):
        mat = distance_matrix([(0.0, 0.0)], [(0.0, 0.0)])
        assert mat.shape == (1, 1) and mat[0, 0] == 0.0

    def test_3_4_5_triangle(self):
        mat = distance_matrix([(0.0, 0.0)], [(3.0, 4.0)])
        assert mat[0, 0] == pytest.approx(5.0, abs=1e-12)

    def test_matches_elementwise_recomputation(self):
        rng = np.random.default_rng(3)
        x, y = rng.normal(size=(4, 2)), rng.normal(size=(3, 2))
        mat = distance_matrix(x, y)
        assert mat.shape == (4, 3)
        for i in range(4):
            for j in range(3):
                assert mat[i, j] == pytest.approx(np.linalg.norm(x[i] - y[j]), abs=1e-12)

    def test_symmetric_under_role_swap(self):
        rng = np.random.default_rng(4)
        x, y = rng.normal(size=(5, 3)), rng.normal(size=(4, 3))
        assert np.allclose(distance_matrix(x, y), distance_matrix(y, x).T)

    def test_empty_sequence_rejected(self):
        with pytest.raises(ValidationError):
            distance_matrix([], [(1.0, 2.0)])

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            distance_matrix([(1.0, 2.0)], [(1.0, 2.0, 3.0)])


class TestDtwDistance:
    def test_identical_sequences_zero_diagonal_path(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(6, 2))
        dist, path = dtw_distance(x, x, return_path=True)
        assert dist == 0.0
        assert path.pairs == tuple((i, i) for i in range(6))

    def test_small_case_equals_brute_force(self):
        # 3x2 grid: only three monotone paths to enumerate.
        x = [(0.0,), (1.0,), (2.0,)]
        y = [(0.0,), (2.0,)]
        assert dtw_distance(x, y) == pytest.approx(dtw_distance_brute_force(x, y), rel=1e-12)

    def test_random_small_cases_equal_brute_force(self):
        rng = np.random.default_rng(6)
        for _ in range(200):
            u, v = rng.integers(1, 7, size=2)
            d = int(rng.integers(1, 4))
            x, y = rng.normal(size=(u, d)), rng.normal(size=(v, d))
            assert dtw_distance(x, y) == pytest.approx(
                dtw_distance_brute_force(x, y), rel=1e-9
            )

    def test_symmetry(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            x = rng.normal(size=(int(rng.integers(1, 12)), 2))
            y = rng.normal(size=(int(rng.integers(1, 12)), 2))
            assert dtw_distance(x, y) == pytest.approx(dtw_distance(y, x), rel=1e-12, abs=1e-12)

    def test_endpoint_lower_bound(self):
        # Both endpoints are always on the path, so the squared distance is
        # at least the sum of the two squared corner entries.
        rng = np.random.default_rng(8)
        for _ in range(50):
            x = rng.normal(size=(int(rng.integers(2, 10)), 2))
            y = rng.normal(size=(int(rng.integers(2, 10)), 2))
            dist = dtw_distance(x, y)
            corner = np.linalg.norm(x[0] - y[0]) ** 2 + np.linalg.norm(x[-1] - y[-1]) ** 2
            assert dist**2 >= corner - 1e-9

    def test_path_resummation_reproduces_distance(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            x = rng.normal(size=(int(rng.integers(2, 15)), 2))
            y = rng.normal(size=(int(rng.integers(2, 15)), 2))
            dist, path = dtw_distance(x, y, return_path=True)
            total = sum(np.linalg.norm(x[i] - y[j]) ** 2 for i, j in path.pairs)
            assert np.sqrt(total) == pytest.approx(dist, rel=1e-12)
            assert path.pairs[0] == (0, 0)
            assert path.pairs[-1] == (len(x) - 1, len(y) - 1)


class TestWarpPath:
    def test_rejects_bad_start(self):
        with pytest.raises(ValidationError):
            WarpPath(pairs=((1, 0), (2, 1)))

    def test_rejects_non_monotone_step(self):
        with pytest.raises(ValidationError):
            WarpPath(pairs=((0, 0), (2, 1)))


@settings(max_examples=60, deadline=None)
@given(
    x=st.lists(st.lists(st.floats(-10, 10), min_size=2, max_size=2), min_size=1, max_size=6),
    y=st.lists(st.lists(st.floats(-10, 10), min_size=2, max_size=2), min_size=1, max_size=6),
)
def test_dp_equals_enumeration_property(x, y):
    assert dtw_distance(x, y) == pytest.approx(dtw_distance_brute_force(x, y), rel=1e-9, abs=1e-9)
