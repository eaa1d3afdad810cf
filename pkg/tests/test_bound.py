import itertools

import numpy as np
import pytest

from fgcf import bound
from fgcf.errors import DataError, ParameterError
from oracles import mp_bound

# independent 50-digit evaluation of the closed form, recorded before the build
X0 = 1.2228373084348377819


def params(g_u=2, g_v=2, n=100, m=100, n_obs=1000, delta=0.1):
    return bound.BoundParams(g_u, g_v, n, m, n_obs, delta)


class TestGeneralizationBound:
    def test_recorded_value(self):
        assert abs(bound.generalization_bound(params()) - X0) <= 1e-12

    def test_quadruple_obs_halves(self):
        for p in (params(), params(3, 5, 17, 400, 77, 0.37), params(8, 8, 10**6, 10**5, 12345, 1e-6)):
            h = bound.generalization_bound(p)
            h4 = bound.generalization_bound(params(p.g_u, p.g_v, p.n_users, p.n_movies, 4 * p.n_obs, p.delta))
            assert h4 == h * 0.5

    def test_matches_mpmath_on_grid(self):
        grid = itertools.product([1, 3], [2, 5], [10, 1000], [50, 10**5], [7, 10**6], [0.01, 0.5])
        for g_u, g_v, n, m, o, d in grid:
            h = bound.generalization_bound(params(g_u, g_v, n, m, o, d))
            assert abs(h - float(mp_bound(g_u, g_v, n, m, o, d))) <= 1e-12

    def test_increases_with_g_u(self):
        # min(g_u, g_v) held fixed by keeping g_v the minimum
        for g_u in range(2, 10):
            lo = bound.generalization_bound(params(g_u=g_u, g_v=2))
            hi = bound.generalization_bound(params(g_u=g_u + 1, g_v=2))
            assert hi > lo

    def test_monotone_in_obs_and_delta(self):
        hs = [bound.generalization_bound(params(n_obs=o)) for o in (10, 100, 1000, 10**4)]
        assert all(a > b for a, b in zip(hs, hs[1:]))
        hs = [bound.generalization_bound(params(delta=d)) for d in (0.001, 0.01, 0.1, 0.9)]
        assert all(a > b for a, b in zip(hs, hs[1:]))

    @pytest.mark.parametrize("kw", [dict(n=2), dict(m=1), dict(n_obs=0), dict(delta=0.0),
                                    dict(delta=1.0), dict(g_u=0)])
    def test_invalid_parameters(self, kw):
        with pytest.raises(ParameterError):
            bound.generalization_bound(params(**kw))

    def test_grid_csv(self, tmp_path):
        rows = bound.bound_grid([2], [2, 3], [100], [100], [1000], [0.1])
        bound.write_bound_csv(rows, tmp_path / "b.csv")
        lines = (tmp_path / "b.csv").read_text().splitlines()
        assert lines[0] == "g_u,g_v,N,M,n_obs,delta,h"
        assert float(lines[1].split(",")[-1]) == bound.generalization_bound(params())
        assert len(lines) == 3


class TestDistortion:
    @pytest.mark.parametrize("x,y,d", [(2.0, 1, 0), (0.0, 1, 1), (-0.3, -1, 0), (0.5, -1, 1), (0.0, -1, 1)])
    def test_examples(self, x, y, d):
        assert bound.sign_distortion(x, y) == d

    def test_bad_sign(self):
        with pytest.raises(ParameterError):
            bound.sign_distortion(1.0, 0)

    def test_identical_and_opposite(self):
        rng = np.random.default_rng(0)
        Y = rng.choice([-1, 1], size=(4, 6))
        pairs = [(0, 0), (3, 5), (2, 1)]
        assert bound.average_distortions(Y.astype(float), Y, pairs) == (0.0, 0.0)
        assert bound.average_distortions(-Y.astype(float), Y, pairs) == (1.0, 1.0)

    def test_matches_double_loop(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(5, 5))
        X[1, 2] = 0.0
        Y = rng.choice([-1, 1], size=(5, 5))
        pairs = [(0, 1), (1, 2), (4, 4), (3, 0)]
        total = sum(bound.sign_distortion(X[i, j], Y[i, j]) for i in range(5) for j in range(5))
        sub = sum(bound.sign_distortion(X[i, j], Y[i, j]) for i, j in pairs)
        D, D_O = bound.average_distortions(X, Y, pairs)
        assert D == total / 25 and D_O == sub / 4
        assert abs(D - D_O) <= 1

    def test_empty_pairs(self):
        with pytest.raises(DataError):
            bound.average_distortions(np.ones((2, 2)), np.ones((2, 2), int), [])

    def test_shape_mismatch(self):
        with pytest.raises(ParameterError):
            bound.average_distortions(np.ones((2, 2)), np.ones((2, 3), int), [(0, 0)])


class TestSigns:
    def test_threshold_maps_to_minus_one(self):
        np.testing.assert_array_equal(bound.to_signs([1, 2, 3, 4, 5], 3.0), [-1, -1, -1, 1, 1])

    def test_default_threshold(self):
        assert bound.default_threshold((1, 2, 3, 4, 5)) == 3.0

    def test_report(self):
        rng = np.random.default_rng(2)
        Y = rng.choice([-1, 1], size=(10, 10))
        X = Y * rng.choice([1, -1], p=[0.8, 0.2], size=(10, 10))
        pairs = [(i, j) for i in range(10) for j in range(10) if (i + j) % 3 == 0]
        rep = bound.bound_report(X, Y, pairs, 2, 2, 0.1)
        assert rep.h >= 0 and 0 <= rep.gap <= 1
