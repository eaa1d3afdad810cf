import math

import numpy as np
import pytest

from fgcf import evaluation as ev
from fgcf.errors import DataError, ParameterError
from fgcf.model import GroupModel, ObservationSet
from fgcf.posteriors import PosteriorEstimates


def posterior(rating, users=None, movies=None, pairs=None):
    rating = np.atleast_2d(np.asarray(rating, dtype=float))
    k = rating.shape[0]
    pairs = np.array([[i, i] for i in range(k)]) if pairs is None else np.asarray(pairs)
    users = np.full((k, 2), 0.5) if users is None else np.asarray(users, dtype=float)
    movies = np.full((k, 2), 0.5) if movies is None else np.asarray(movies, dtype=float)
    return PosteriorEstimates(pairs, rating, users, movies, (1, 2, 3, 4, 5))


class TestPredictors:
    def test_r1_point_mass(self):
        assert ev.predict_r1(posterior([0, 0, 0, 0, 1])).values[0] == 5.0

    def test_r1_two_point(self):
        assert ev.predict_r1(posterior([0.5, 0, 0, 0, 0.5])).values[0] == 3.0

    def test_r1_dot_product(self):
        rng = np.random.default_rng(0)
        rows = rng.dirichlet(np.ones(5), size=7)
        got = ev.predict_r1(posterior(rows)).values
        for k in range(7):
            assert got[k] == pytest.approx(sum((r + 1) * rows[k, r] for r in range(5)), abs=1e-14)

    def test_r1_lookup_order(self):
        post = posterior([[1, 0, 0, 0, 0], [0, 0, 0, 0, 1]])
        np.testing.assert_array_equal(ev.predict_r1(post, [(1, 1), (0, 0)]).values, [5.0, 1.0])

    def test_map_groups_tie_goes_to_smallest(self):
        post = posterior(np.full((2, 5), 0.2), users=[[0.5, 0.5], [0.2, 0.8]], movies=[[0.4, 0.6], [0.5, 0.5]])
        u, v = ev.map_groups(post)
        np.testing.assert_array_equal(u, [0, 1])
        np.testing.assert_array_equal(v, [1, 0])

    def test_r2_deterministic_row(self):
        w = np.full((2, 2, 5), 0.2)
        w[1, 0] = [0, 0, 0, 1, 0]
        pred = ev.predict_r2((np.array([1]), np.array([0])), w, (1, 2, 3, 4, 5), [(0, 0)])
        assert pred.values[0] == 4.0

    def test_r2_uniform_row(self):
        w = np.full((2, 2, 5), 0.2)
        pred = ev.predict_r2((np.array([0]), np.array([1])), w, (1, 2, 3, 4, 5), [(0, 0)])
        assert pred.values[0] == pytest.approx(3.0, abs=1e-15)

    def test_map_rating(self):
        assert ev.predict_map_rating(posterior([0.1, 0.4, 0.3, 0.1, 0.1])).values[0] == 2.0


class TestScoring:
    def truth(self):
        return ObservationSet(3, 3, [0, 1, 2, 0], [0, 1, 2, 2], [1, 3, 5, 2])

    def test_zero_error(self):
        t = self.truth()
        pred = ev.PredictionSet(t.pairs(), t.ratings.astype(float), "r1")
        assert ev.rmse(pred, t) == 0.0

    def test_off_by_one(self):
        t = self.truth()
        pred = ev.PredictionSet(t.pairs(), t.ratings + 1.0, "r1")
        assert ev.rmse(pred, t) == 1.0

    def test_against_loop(self):
        rng = np.random.default_rng(1)
        users, movies = np.divmod(np.arange(10), 5)
        t = ObservationSet(2, 5, users, movies, rng.integers(1, 6, 10))
        vals = rng.uniform(1, 5, 10)
        order = rng.permutation(10)
        pred = ev.PredictionSet(t.pairs()[order], vals[order], "r1")
        expect = math.sqrt(sum((vals[k] - t.ratings[k]) ** 2 for k in range(10)) / 10)
        assert ev.rmse(pred, t) == pytest.approx(expect, rel=1e-14)

    def test_empty_and_missing(self):
        t = self.truth()
        with pytest.raises(DataError):
            ev.rmse(ev.PredictionSet(np.zeros((0, 2), int), np.zeros(0), "r1"), t)
        with pytest.raises(DataError):
            ev.rmse(ev.PredictionSet(np.array([[1, 0]]), np.array([3.0]), "r1"), t)

    def test_movie_average(self):
        obs = ObservationSet(3, 3, [0, 1, 2], [0, 0, 1], [2, 4, 5])
        pred = ev.movie_average_baseline(obs, [(2, 0), (0, 1), (0, 2)])
        np.testing.assert_allclose(pred.values, [3.0, 5.0, 11 / 3])


class TestSplits:
    def data(self, n=40):
        rng = np.random.default_rng(2)
        pairs = rng.choice(n * n, size=5 * n, replace=False)
        return ObservationSet(n, n, pairs // n, pairs % n, rng.integers(1, 6, pairs.size))

    def test_hide_none(self):
        obs = self.data()
        train, val = ev.hide_validation(obs, 0, 0)
        assert train.size == obs.size and val.size == 0

    def test_hide_all_but_one(self):
        obs = self.data()
        train, val = ev.hide_validation(obs, obs.size - 1, 0)
        assert train.size == 1 and val.size == obs.size - 1

    def test_partition(self):
        obs = self.data()
        train, val = ev.hide_validation(obs, 50, 3)
        both = {tuple(t) for t in train.triples()} | {tuple(t) for t in val.triples()}
        assert both == {tuple(t) for t in obs.triples()}
        assert train.size + val.size == obs.size

    @pytest.mark.parametrize("count", [-1, 200, 201])
    def test_hide_invalid(self, count):
        with pytest.raises(ParameterError):
            ev.hide_validation(self.data(), count, 0)

    def test_nested_subsamples(self):
        obs = self.data()
        small = {tuple(t) for t in ev.subsample(obs, 1, 7).triples()}
        large = {tuple(t) for t in ev.subsample(obs, 3, 7).triples()}
        assert len(small) == 40 and len(large) == 120 and small <= large

    def test_subsample_too_dense(self):
        with pytest.raises(ParameterError):
            ev.subsample(self.data(), 6, 0)


def small_config(**kw):
    base = dict(densities=(2, 4), seeds=(0, 1), validation=50, imp_max_iters=10, em_max_iters=10,
                imp_refits=1, sweeps=5)
    base.update(kw)
    return ev.SweepConfig(**base)


class TestSweep:
    source = ev.SyntheticSource(ev.reference_model(), 120, 120)

    def test_baseline_only(self):
        res = ev.cold_start_sweep(self.source, small_config(algorithms=("baseline",), densities=(1,),
                                                            seeds=(0,)))
        assert [r["alg"] for r in res.rows] == ["baseline"]

    def test_row_count(self):
        cfg = small_config(densities=(1, 3, 5))
        res = ev.cold_start_sweep(self.source, cfg)
        assert len(res.rows) == 3 * len(cfg.algorithms) * len(cfg.seeds)
        assert len(res.cells) == 6

    def test_row_count_all_estimators_and_oracle(self):
        cfg = small_config(estimators=("r1", "r2", "map"), algorithms=ev.ALGORITHMS + (ev.ORACLE_ALG,))
        res = ev.cold_start_sweep(self.source, cfg)
        # baseline + oracle + 3 estimators for each of imp and em
        assert len(res.rows) == 2 * 2 * (2 + 3 * 2)

    def test_deterministic_and_thread_independent(self):
        cfg = small_config()
        a = ev.cold_start_sweep(self.source, cfg)
        b = ev.cold_start_sweep(self.source, cfg, threads=2)
        assert a.rows == b.rows and a.cells == b.cells
        c = ev.cold_start_sweep(self.source, small_config(master_seed=1))
        assert c.rows != a.rows

    def test_known_groups_exact_on_degenerate_kernel(self):
        w = np.zeros((2, 2, 5))
        w[0, 0, 0] = w[0, 1, 2] = w[1, 0, 4] = w[1, 1, 3] = 1.0
        src = ev.SyntheticSource(GroupModel([0.5, 0.5], [0.5, 0.5], w), 100, 100)
        res = ev.cold_start_sweep(src, small_config(algorithms=(ev.ORACLE_ALG,)))
        assert len(res.rows) == 4 and all(r["rmse"] == 0.0 for r in res.select(ev.ORACLE_ALG))

    def test_fixed_dataset(self):
        obs = TestSplits().data(60)
        res = ev.cold_start_sweep(obs, small_config(densities=(1, 2), g_u=2, g_v=2))
        assert {r["alg"] for r in res.rows} == {"baseline", "imp", "em"}
        with pytest.raises(ParameterError):
            ev.cold_start_sweep(obs, small_config(algorithms=("baseline", ev.ORACLE_ALG)))

    def test_csv_outputs(self, tmp_path):
        res = ev.cold_start_sweep(self.source, small_config(algorithms=("baseline",)))
        ev.write_sweep_csv(res, tmp_path / "s.csv")
        ev.write_pivot_csv(res, tmp_path / "p.csv")
        ev.write_cells_csv(res, tmp_path / "c.csv")
        assert (tmp_path / "s.csv").read_text().splitlines()[0] == ",".join(ev.SweepResult.HEADER)
        pivot = (tmp_path / "p.csv").read_text().splitlines()
        assert len(pivot) == 3 and pivot[0].startswith("density,baseline_movie-mean_mean")
        assert b"\r" not in (tmp_path / "c.csv").read_bytes()

    @pytest.mark.parametrize("kw", [dict(algorithms=("svd",)), dict(estimators=("r3",)),
                                    dict(init="random"), dict(densities=(0,)), dict(imp_refits=-1)])
    def test_bad_config(self, kw):
        with pytest.raises(ParameterError):
            ev.cold_start_sweep(self.source, small_config(**kw))

    def test_reference_model_valid(self):
        m = ev.reference_model()
        np.testing.assert_allclose(m.w.sum(axis=2), 1.0, atol=1e-14)
        assert m.w.shape == (4, 4, 5)
