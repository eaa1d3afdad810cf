"""Predictions, RMSE scoring and the cold-start sweep protocol."""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import em as em_mod
from . import imp as imp_mod
from .errors import DataError, ParameterError
from .model import GroupModel, ObservationSet, discretized_gaussian_kernel, sample_synthetic
from .seeding import substream
from .vdvq import (DEFAULT_BETA, DEFAULT_EPSILON, DEFAULT_NOISE_SD, DEFAULT_SWEEPS,
                   vdvq_model)

ESTIMATORS = ("r1", "r2", "map")
ALGORITHMS = ("imp", "em", "baseline")
ORACLE_ALG = "known-groups"
VALIDATION_SIZE = 1000


@dataclass(frozen=True, eq=False)
class PredictionSet:
    pairs: np.ndarray
    values: np.ndarray
    estimator: str

    def __len__(self):
        return len(self.values)


def _pairs(pairs):
    return np.asarray(pairs, dtype=np.int64).reshape(-1, 2)


def predict_r1(post, pairs=None):
    """Conditional-mean prediction ``sum_r r p(r | R_O)``."""
    pairs = post.pairs if pairs is None else _pairs(pairs)
    rows = post.lookup(pairs)
    values = post.rating[rows] @ np.asarray(post.ratings, dtype=np.float64)
    return PredictionSet(pairs, values, "r1")


def map_groups(post):
    """MAP group per user and per movie; ties resolve to the smallest index."""
    return np.argmax(post.users, axis=1), np.argmax(post.movies, axis=1)


def predict_r2(groups, w, ratings, pairs):
    """Hard-decision prediction ``sum_r r w(r | u_n, v_m)`` at the MAP groups."""
    user_groups, movie_groups = groups
    pairs = _pairs(pairs)
    rows = np.asarray(w)[user_groups[pairs[:, 0]], movie_groups[pairs[:, 1]]]
    return PredictionSet(pairs, rows @ np.asarray(ratings, dtype=np.float64), "r2")


def predict_map_rating(post, pairs=None):
    """Most probable rating under the rating posterior."""
    pairs = post.pairs if pairs is None else _pairs(pairs)
    rows = post.lookup(pairs)
    values = np.asarray(post.ratings, dtype=np.float64)[np.argmax(post.rating[rows], axis=1)]
    return PredictionSet(pairs, values, "map")


def rmse(pred, truth):
    """Root mean squared error of ``pred`` against the ratings in ``truth``."""
    if len(pred) == 0:
        raise DataError("no predictions to score")
    e = truth.edge_index(pred.pairs[:, 0], pred.pairs[:, 1])
    if np.any(e < 0):
        raise DataError(f"{int(np.sum(e < 0))} predicted pairs have no true rating")
    err = pred.values - truth.ratings[e]
    return math.sqrt(float(np.mean(err * err)))


def movie_average_baseline(obs, pairs):
    """Per-movie mean training rating; movies without ratings get the global mean."""
    pairs = _pairs(pairs)
    sums = np.bincount(obs.movies, weights=obs.ratings.astype(float), minlength=obs.n_movies)
    counts = obs.movie_degree
    global_mean = float(obs.ratings.mean()) if obs.size else float(np.mean(obs.alphabet))
    means = np.full(obs.n_movies, global_mean)
    means[counts > 0] = sums[counts > 0] / counts[counts > 0]
    return PredictionSet(pairs, means[pairs[:, 1]], "movie-mean")


def known_group_predictions(model, truth, pairs):
    """Conditional mean of the rating given the TRUE groups and TRUE kernel."""
    return predict_r2((truth.user_groups, truth.movie_groups), model.w, model.ratings, pairs)


def hide_validation(obs, count, seed):
    """Split off ``count`` uniformly chosen triples as a validation set."""
    if count < 0 or (count > 0 and count >= obs.size):
        raise ParameterError(f"validation count {count} must be below |O| = {obs.size}")
    rng = substream(seed, "split")
    held = np.zeros(obs.size, dtype=bool)
    held[rng.choice(obs.size, size=count, replace=False)] = True
    return obs.subset(~held), obs.subset(held)


def subsample_order(obs, seed):
    """Random removal order; a training set of size k is the first k edges."""
    return substream(seed, "subsample").permutation(obs.size)


def subsample(obs, density, seed, order=None):
    """Keep ``round(density * N)`` uniformly chosen triples.

    Subsamples drawn with the same seed are nested across densities.
    """
    keep = int(round(density * obs.n_users))
    if keep > obs.size or keep < 0:
        raise ParameterError(f"density {density} needs {keep} triples, only {obs.size} available")
    order = subsample_order(obs, seed) if order is None else order
    return obs.subset(np.sort(order[:keep]))


# ---------------------------------------------------------------------------
# sweep


@dataclass
class SweepConfig:
    g_u: int = 4
    g_v: int = 4
    algorithms: tuple = ALGORITHMS
    estimators: tuple = ("r1",)
    densities: tuple = (1, 3, 5, 10, 20, 30)
    seeds: tuple = tuple(range(10))
    validation: int = VALIDATION_SIZE
    init: str = "vdvq"
    beta: float = DEFAULT_BETA
    sweeps: int = DEFAULT_SWEEPS
    noise_sd: float = DEFAULT_NOISE_SD
    epsilon: float = DEFAULT_EPSILON
    imp_tol: float = imp_mod.DEFAULT_TOL
    imp_max_iters: int = imp_mod.DEFAULT_MAX_ITERS
    imp_refits: int = 10
    em_tol: float = em_mod.DEFAULT_TOL
    em_max_iters: int = em_mod.DEFAULT_MAX_ITERS
    em_form: str = "em"
    master_seed: int = 0

    def check(self):
        unknown = set(self.algorithms) - set(ALGORITHMS) - {ORACLE_ALG}
        if unknown:
            raise ParameterError(f"unknown algorithms {sorted(unknown)}")
        if set(self.estimators) - set(ESTIMATORS):
            raise ParameterError(f"unknown estimators {self.estimators}")
        if self.init not in ("vdvq", "uniform"):
            raise ParameterError(f"unknown init {self.init!r}")
        if self.imp_refits < 0:
            raise ParameterError("imp_refits must be nonnegative")
        if not self.densities or min(self.densities) <= 0:
            raise ParameterError("densities must be positive")
        return self


# Mean rating per (user group, movie group): additive effects plus an
# interaction, so that user groups differ in their rating marginals.
REFERENCE_MEANS = ((2.1, 2.7, 1.7, 2.3),
                   (1.05, 1.65, 3.85, 4.45),
                   (3.15, 3.75, 2.75, 3.35),
                   (2.1, 2.7, 4.9, 5.0))
REFERENCE_SD = 0.6


def reference_model():
    """Informative 4x4 synthetic model used by the cold-start experiments."""
    w = discretized_gaussian_kernel(np.array(REFERENCE_MEANS), REFERENCE_SD)
    return GroupModel(np.full(4, 0.25), np.full(4, 0.25), w)


@dataclass
class SyntheticSource:
    """Regenerate a dataset per seed from a known model."""

    model: GroupModel
    n_users: int
    n_movies: int

    def draw(self, seed, density):
        return sample_synthetic(self.model, self.n_users, self.n_movies, density=density,
                                seed=substream(seed, "data"))


@dataclass
class SweepResult:
    rows: list = field(default_factory=list)
    cells: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    HEADER = ("density", "alg", "estimator", "seed", "rmse", "iters")

    def select(self, alg, estimator=None):
        return [r for r in self.rows if r["alg"] == alg
                and (estimator is None or r["estimator"] == estimator)]

    def table(self, alg, estimator="r1"):
        """``{density: array of rmse over seeds}`` for one algorithm."""
        out = {}
        for r in self.select(alg, None if alg in ("baseline", ORACLE_ALG) else estimator):
            out.setdefault(r["density"], []).append(r["rmse"])
        return {d: np.array(v) for d, v in out.items()}


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_sweep_csv(result, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(SweepResult.HEADER) + "\n")
        for r in result.rows:
            fh.write(",".join(_fmt(r[k]) for k in SweepResult.HEADER) + "\n")


def write_pivot_csv(result, path):
    """Mean and standard error of RMSE per density, one column pair per learner."""
    keys = []
    for r in result.rows:
        k = (r["alg"], r["estimator"])
        if k not in keys:
            keys.append(k)
    densities = sorted({r["density"] for r in result.rows})
    cols = ["density"]
    for alg, est in keys:
        cols += [f"{alg}_{est}_mean", f"{alg}_{est}_se"]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(cols) + "\n")
        for d in densities:
            line = [_fmt(d)]
            for alg, est in keys:
                v = np.array([r["rmse"] for r in result.rows
                              if r["alg"] == alg and r["estimator"] == est and r["density"] == d])
                se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
                line += [_fmt(float(v.mean())), _fmt(se)]
            fh.write(",".join(line) + "\n")


def write_cells_csv(result, path):
    cols = ("density", "seed", "train_size", "validation_size", "cold_user_pairs", "cold_movie_pairs")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(cols) + "\n")
        for c in result.cells:
            fh.write(",".join(_fmt(c[k]) for k in cols) + "\n")


def _init_model(config, train, seed):
    if config.init == "uniform":
        model = GroupModel.uniform(config.g_u, config.g_v, train.alphabet)
        return model, None, None
    res = vdvq_model(train, config.g_u, config.g_v, config.beta, config.sweeps, config.noise_sd,
                     config.epsilon, seed=seed)
    return res.model, res.user_beliefs, res.movie_beliefs


def _predict(estimator, post, w, ratings, pairs):
    if estimator == "r1":
        return predict_r1(post, pairs)
    if estimator == "r2":
        return predict_r2(map_groups(post), w, ratings, pairs)
    return predict_map_rating(post, pairs)


def _split(source, config, key):
    """Dataset and validation split for one replicate (identical across densities)."""
    truth = None
    if isinstance(source, SyntheticSource):
        # headroom of six Poisson standard deviations so the densest subsample fits
        need = max(config.densities) * source.n_users + config.validation
        data, truth = source.draw(key, (need + 6 * math.sqrt(need) + 1) / source.n_users)
    else:
        data = source
    train_full, validation = hide_validation(data, config.validation, key)
    return train_full, validation, truth


def run_cell(source, config, seed, density):
    """Train every learner at one (seed, density) and score it on validation.

    All draws come from substreams of ``(config.master_seed, seed)``.
    """
    key = (config.master_seed, seed)
    train_full, validation, truth = _split(source, config, key)
    train = subsample(train_full, density, key)
    pairs = validation.pairs()
    rows = []

    def row(alg, estimator, value, iters):
        rows.append(dict(density=density, alg=alg, estimator=estimator, seed=seed,
                         rmse=float(value), iters=int(iters)))

    if "baseline" in config.algorithms:
        row("baseline", "movie-mean", rmse(movie_average_baseline(train, pairs), validation), 0)
    if {"imp", "em"} & set(config.algorithms):
        model, f0, h0 = _init_model(config, train, key)
        if "imp" in config.algorithms:
            res = imp_mod.imp_run(model, train, config.imp_max_iters, config.imp_tol,
                                  query_pairs=pairs, refits=config.imp_refits)
            for est in config.estimators:
                pred = _predict(est, res.posteriors, res.model.w, model.ratings, pairs)
                row("imp", est, rmse(pred, validation), res.report.iterations)
        if "em" in config.algorithms:
            res = em_mod.em_run(model, train, config.em_max_iters, config.em_tol,
                                user_beliefs=f0, movie_beliefs=h0, form=config.em_form,
                                query_pairs=pairs)
            for est in config.estimators:
                pred = _predict(est, res.posteriors, res.state.w, model.ratings, pairs)
                row("em", est, rmse(pred, validation), res.state.iteration)
    if ORACLE_ALG in config.algorithms:
        row(ORACLE_ALG, "r1", rmse(known_group_predictions(source.model, truth, pairs), validation), 0)

    cold_users = int(np.sum(train.user_degree[pairs[:, 0]] == 0))
    cold_movies = int(np.sum(train.movie_degree[pairs[:, 1]] == 0))
    cell = dict(density=density, seed=seed, train_size=train.size, validation_size=validation.size,
                cold_user_pairs=cold_users, cold_movie_pairs=cold_movies)
    return rows, cell


def _run_cell_args(args):
    return run_cell(*args)


def cold_start_sweep(source, config, threads=1):
    """Run every (density, seed) cell and collect RMSE rows.

    ``source`` is an ObservationSet (fixed dataset) or a SyntheticSource.
    Cells are independent; with ``threads > 1`` they run in worker
    processes and are merged back in key order, so the result does not
    depend on the worker count.
    """
    config.check()
    if not isinstance(source, (ObservationSet, SyntheticSource)):
        raise ParameterError("source must be an ObservationSet or SyntheticSource")
    if ORACLE_ALG in config.algorithms and not isinstance(source, SyntheticSource):
        raise ParameterError(f"{ORACLE_ALG} needs a synthetic source with known groups")
    jobs = [(source, config, s, d) for d in config.densities for s in config.seeds]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            outputs = list(pool.map(_run_cell_args, jobs))
    else:
        outputs = [_run_cell_args(j) for j in jobs]

    alg_order = {a: i for i, a in enumerate(("baseline", "imp", "em", ORACLE_ALG))}
    est_order = {e: i for i, e in enumerate(("movie-mean",) + ESTIMATORS)}
    rows = [r for out, _ in outputs for r in out]
    rows.sort(key=lambda r: (config.densities.index(r["density"]), alg_order[r["alg"]],
                             est_order[r["estimator"]], config.seeds.index(r["seed"])))
    cells = sorted((c for _, c in outputs),
                   key=lambda c: (config.densities.index(c["density"]), config.seeds.index(c["seed"])))
    meta = dict(config=asdict(config), subsampling="uniform without replacement, nested per seed",
                degree_law="poisson" if isinstance(source, SyntheticSource) else "data")
    return SweepResult(rows, cells, meta)
