"""Density evolution for IMP, realized as sampled population dynamics.

A population holds ``S`` samples of (true group, belief vector) per side.
The user side approximates the law of user-to-movie messages, the movie
side that of movie-to-user messages.  A new user message from a node of
true group ``u`` draws an edge-perspective degree ``d ~ lambda``, takes
``d - 1`` movie messages ``(v_j, b_j)`` at random from the previous movie
population, draws ratings ``r_j ~ w(.|u, v_j)`` from the generating model
and combines

    a'(u') ~ p_U(u') prod_j sum_v w(r_j|u',v) b_j(v)

under the inference model.  ``literal=True`` combines ``d`` messages
instead of ``d - 1``.  Node posteriors use the node-perspective degree
law and all ``d`` incoming messages.
"""

import math
from dataclasses import dataclass

import numpy as np

from ._numerics import KERNEL_FLOOR, normalize_log_rows
from .errors import ParameterError
from .seeding import as_generator, substream

DEFAULT_POPULATION = 100_000
ENTROPY_BINS = 10


# ---------------------------------------------------------------------------
# degree distributions


def edge_degree(node_dist):
    """``lambda_j = Lambda_j j / sum_k Lambda_k k`` for a pmf indexed by degree."""
    p = np.asarray(node_dist, dtype=np.float64)
    j = np.arange(p.size)
    mean = float(np.sum(p * j))
    if not mean > 0:
        raise ParameterError("degree distribution has zero mean degree")
    return p * j / mean


def _check_pmf(p, what):
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size == 0 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
        raise ParameterError(f"{what} is not a probability vector over degrees")
    return p


@dataclass(frozen=True, eq=False)
class DegreeDistribution:
    """Node-perspective pmf ``node[j]`` over degrees ``j = 0..d_max``."""

    node: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "node", _check_pmf(self.node, "node degree pmf"))
        object.__setattr__(self, "edge", edge_degree(self.node))

    @classmethod
    def from_dict(cls, table):
        table = {int(k): float(v) for k, v in table.items()}
        if min(table) < 0:
            raise ParameterError("degrees must be nonnegative")
        p = np.zeros(max(table) + 1)
        for k, v in table.items():
            p[k] = v
        return cls(p)

    @classmethod
    def from_counts(cls, degrees):
        """Empirical degree law of an observed graph."""
        counts = np.bincount(np.asarray(degrees, dtype=np.int64))
        return cls(counts / counts.sum())

    @classmethod
    def point(cls, d):
        return cls.from_dict({d: 1.0})

    def as_dict(self, which="node"):
        p = self.node if which == "node" else self.edge
        return {int(j): float(p[j]) for j in np.flatnonzero(p)}

    @property
    def mean(self):
        return float(np.sum(self.node * np.arange(self.node.size)))

    def sample(self, rng, size, which="node"):
        p = self.node if which == "node" else self.edge
        return rng.choice(p.size, size=size, p=p)


@dataclass(frozen=True, eq=False)
class GraphDegrees:
    user: DegreeDistribution
    movie: DegreeDistribution

    @classmethod
    def from_observations(cls, obs):
        return cls(DegreeDistribution.from_counts(obs.user_degree),
                   DegreeDistribution.from_counts(obs.movie_degree))

    def check_balance(self, n_users, n_movies, rtol=1e-9):
        """Edges counted from both sides must agree: ``N E[d_u] = M E[d_v]``."""
        a, b = n_users * self.user.mean, n_movies * self.movie.mean
        return abs(a - b) <= rtol * max(a, b)


# ---------------------------------------------------------------------------
# populations


@dataclass(frozen=True, eq=False)
class MessagePopulation:
    user_groups: np.ndarray
    user_beliefs: np.ndarray
    movie_groups: np.ndarray
    movie_beliefs: np.ndarray
    iteration: int = 0

    @property
    def size(self):
        return self.user_groups.size

    def check(self, atol=1e-9):
        for name, b in (("user", self.user_beliefs), ("movie", self.movie_beliefs)):
            if np.any(b < 0) or np.max(np.abs(b.sum(axis=1) - 1.0)) > atol:
                raise AssertionError(f"{name} beliefs not normalized at iteration {self.iteration}")
        if self.movie_groups.size != self.size:
            raise AssertionError("population sides differ in size")


def de_init(model, size=DEFAULT_POPULATION, seed=0):
    """True groups drawn from the priors; every belief equals its prior."""
    if size < 1:
        raise ParameterError("population size must be >= 1")
    rng = as_generator(seed)
    u = rng.choice(model.g_u, size=size, p=model.p_u)
    v = rng.choice(model.g_v, size=size, p=model.p_v)
    return MessagePopulation(u, np.tile(model.p_u, (size, 1)), v, np.tile(model.p_v, (size, 1)), 0)


def _draw_ratings(w, a, b, rng):
    # inverse-CDF draw from w(.|a_j, b_j) for each j
    cdf = np.cumsum(w[a, b], axis=1)
    k = (rng.random(a.size)[:, None] > cdf).sum(axis=1)
    return np.minimum(k, w.shape[2] - 1)


def _combine(counts, own_groups, other_groups, other_beliefs, true_w, infer_w, log_prior, rng,
             side):
    """Combine ``counts[s]`` random opposite-side messages for every sample ``s``."""
    size = counts.size
    owner = np.repeat(np.arange(size), counts)
    pick = rng.integers(0, other_groups.size, size=owner.size)
    if side == "user":
        r = _draw_ratings(true_w, own_groups[owner], other_groups[pick], rng)
        # sum_v w(r|u', v) b(v) for every u'
        factors = np.einsum("euv,ev->eu", infer_w[:, :, r].transpose(2, 0, 1), other_beliefs[pick])
    else:
        r = _draw_ratings(true_w, other_groups[pick], own_groups[owner], rng)
        factors = np.einsum("euv,eu->ev", infer_w[:, :, r].transpose(2, 0, 1), other_beliefs[pick])
    logp = np.tile(log_prior, (size, 1))
    logf = np.log(factors)
    for k in range(logp.shape[1]):
        logp[:, k] += np.bincount(owner, weights=logf[:, k], minlength=size)
    return normalize_log_rows(logp, "population sample")


def _models(model, inference_model):
    infer = model if inference_model is None else inference_model
    if (infer.g_u, infer.g_v, infer.n_ratings) != (model.g_u, model.g_v, model.n_ratings):
        raise ParameterError("inference model must match the generating model's shape")
    with np.errstate(divide="ignore"):
        return (np.asarray(model.w), np.maximum(infer.w, KERNEL_FLOOR),
                np.log(infer.p_u), np.log(infer.p_v))


def de_iterate(pop, model, degrees, seed, inference_model=None, literal=False):
    """One flooding step of both populations (each reads only the old other side)."""
    rng = as_generator(seed)
    true_w, infer_w, log_pu, log_pv = _models(model, inference_model)
    drop = 0 if literal else 1
    du = degrees.user.sample(rng, pop.size, "edge") - drop
    dv = degrees.movie.sample(rng, pop.size, "edge") - drop
    users = _combine(du, pop.user_groups, pop.movie_groups, pop.movie_beliefs, true_w, infer_w,
                     log_pu, rng, "user")
    movies = _combine(dv, pop.movie_groups, pop.user_groups, pop.user_beliefs, true_w, infer_w,
                      log_pv, rng, "movie")
    return MessagePopulation(pop.user_groups, users, pop.movie_groups, movies, pop.iteration + 1)


def node_posteriors(pop, model, degrees, seed, inference_model=None):
    """Sampled node posteriors: degree ``d ~ Lambda`` (resp. Gamma), ``d`` incoming messages.

    Returns ``(user_groups, user_post, movie_groups, movie_post)``.
    """
    rng = as_generator(seed)
    true_w, infer_w, log_pu, log_pv = _models(model, inference_model)
    du = degrees.user.sample(rng, pop.size, "node")
    dv = degrees.movie.sample(rng, pop.size, "node")
    users = _combine(du, pop.user_groups, pop.movie_groups, pop.movie_beliefs, true_w, infer_w,
                     log_pu, rng, "user")
    movies = _combine(dv, pop.movie_groups, pop.user_groups, pop.user_beliefs, true_w, infer_w,
                      log_pv, rng, "movie")
    return pop.user_groups, users, pop.movie_groups, movies


# ---------------------------------------------------------------------------
# summaries


@dataclass(frozen=True)
class BeliefMetrics:
    mean_true: float
    se_true: float
    map_error: float
    entropy_mean: float
    entropy_hist: tuple

    def as_row(self):
        return (self.mean_true, self.se_true, self.map_error, self.entropy_mean) + self.entropy_hist


def de_metrics(groups, beliefs, bins=ENTROPY_BINS):
    """Mean belief on the true group (with its standard error), MAP error, entropy histogram.

    The histogram covers ``[0, log g]`` in ``bins`` equal bins and holds
    sample fractions.
    """
    groups = np.asarray(groups)
    beliefs = np.asarray(beliefs, dtype=np.float64)
    n, g = beliefs.shape
    if n == 0:
        raise ParameterError("no samples to summarize")
    true = beliefs[np.arange(n), groups]
    se = float(true.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    err = float(np.mean(np.argmax(beliefs, axis=1) != groups))
    with np.errstate(divide="ignore", invalid="ignore"):
        ent = -np.sum(np.where(beliefs > 0, beliefs * np.log(beliefs), 0.0), axis=1)
    top = math.log(g) if g > 1 else 1.0
    hist, _ = np.histogram(np.clip(ent, 0.0, top), bins=bins, range=(0.0, top))
    return BeliefMetrics(float(true.mean()), se, err, float(ent.mean()),
                         tuple(float(h) / n for h in hist))


@dataclass
class DeResult:
    population: MessagePopulation
    rows: list


METRIC_HEADER = ("iteration", "side", "kind", "mean_true_belief", "se", "map_error",
                 "entropy_mean") + tuple(f"entropy_bin_{k}" for k in range(ENTROPY_BINS))


def de_run(model, degrees, iterations, size=DEFAULT_POPULATION, seed=0, inference_model=None,
           literal=False):
    """Run ``iterations`` DE steps and record message and node-posterior metrics each step.

    Randomness comes from named substreams of ``seed``, so a run is a pure
    function of its arguments.
    """
    if iterations < 0:
        raise ParameterError("iterations must be nonnegative")
    pop = de_init(model, size, substream(seed, "de", 0))
    rows = []

    def record(pop):
        ug, up, vg, vp = node_posteriors(pop, model, degrees, substream(seed, "de", 2, pop.iteration),
                                         inference_model)
        for side, kind, g, b in (("user", "message", pop.user_groups, pop.user_beliefs),
                                 ("movie", "message", pop.movie_groups, pop.movie_beliefs),
                                 ("user", "node", ug, up), ("movie", "node", vg, vp)):
            rows.append((pop.iteration, side, kind) + de_metrics(g, b).as_row())

    record(pop)
    for i in range(iterations):
        pop = de_iterate(pop, model, degrees, substream(seed, "de", 1, i), inference_model, literal)
        pop.check()
        record(pop)
    return DeResult(pop, rows)


def write_de_csv(result, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(METRIC_HEADER) + "\n")
        for row in result.rows:
            fh.write(",".join(repr(x) if isinstance(x, float) else str(x) for x in row) + "\n")


# ---------------------------------------------------------------------------
# tree condition


@dataclass(frozen=True)
class TreeCondition:
    lhs: float
    holds: bool
    beta: float


def tree_condition(n_users, n_movies, d_max, depth, delta):
    """``(2l + 1) ln d / ln N`` compared against ``1 - delta``; ``beta = M / N``."""
    if n_users <= 1:
        raise ParameterError("N must exceed 1")
    if n_movies < 1:
        raise ParameterError("M must be >= 1")
    if d_max < 2:
        raise ParameterError("d_max must be >= 2")
    if depth < 0:
        raise ParameterError("depth must be >= 0")
    if not 0.0 < delta < 1.0:
        raise ParameterError("delta must lie in (0, 1)")
    lhs = (2 * depth + 1) * math.log(d_max) / math.log(n_users)
    return TreeCondition(lhs, lhs < 1.0 - delta, n_movies / n_users)
