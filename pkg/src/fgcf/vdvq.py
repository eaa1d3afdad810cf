"""VDVQ initialization: soft k-critics clustering grown by GLA splitting.

A critic is a synthetic user who rated every movie.  Users are compared to
critics only on the movies they actually rated; the codebook doubles at
every splitting stage and is refined by ``sweeps`` soft k-means passes.
Movies are clustered the same way on the transposed observation set.  The
resulting soft memberships give per-node initial beliefs, group priors and
the initial kernel.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ._numerics import segment_sum
from .errors import DataError, ParameterError
from .model import GroupModel
from .seeding import as_generator, substream

DEFAULT_BETA = 3.0
DEFAULT_SWEEPS = 10
DEFAULT_NOISE_SD = 0.1
DEFAULT_EPSILON = 0.9


@dataclass(frozen=True, eq=False)
class Codebook:
    critics: np.ndarray  # (K, D): one row per critic
    stage: int = 0
    sweep: int = 0

    @property
    def size(self):
        return self.critics.shape[0]


@dataclass(frozen=True, eq=False)
class SoftAssignment:
    pi: np.ndarray  # (nodes, K)
    beta: float


def vdvq_init(obs):
    """Single critic: the average rating of every movie (global mean if unrated)."""
    if obs.size == 0:
        raise DataError("cannot initialize a codebook from an empty observation set")
    sums = np.bincount(obs.movies, weights=obs.ratings.astype(float), minlength=obs.n_movies)
    counts = obs.movie_degree
    critic = np.full(obs.n_movies, obs.ratings.mean())
    rated = counts > 0
    critic[rated] = sums[rated] / counts[rated]
    return Codebook(critic[None, :], 0, 0)


def gla_split(cb, noise_sd, seed):
    """Double the codebook: keep every critic and append a perturbed copy."""
    if noise_sd < 0:
        raise ParameterError("noise_sd must be nonnegative")
    rng = as_generator(seed)
    z = rng.normal(0.0, 1.0, size=cb.critics.shape) * noise_sd
    return Codebook(np.vstack([cb.critics, cb.critics + z]), cb.stage + 1, 0)


def critic_distances(critics, obs):
    """RMS distance of every user to every critic over the user's rated movies.

    Returns ``(distances (N, K), degree (N,))``; rows of users without
    ratings are zero.
    """
    diff2 = (critics[:, obs.movies].T - obs.ratings[:, None]) ** 2
    total = segment_sum(diff2, obs.users, obs.n_users)
    deg = obs.user_degree
    d = np.zeros_like(total)
    active = deg > 0
    d[active] = np.sqrt(total[active] / deg[active, None])
    return d, deg


def soft_assign(critics, obs, beta):
    """pi_n(u) proportional to exp(-beta * d_n(u)); uniform for unrated users."""
    if not beta > 0:
        raise ParameterError("beta must be positive")
    d, deg = critic_distances(critics, obs)
    logits = -beta * (d - d.min(axis=1, keepdims=True))
    pi = np.exp(logits)
    pi /= pi.sum(axis=1, keepdims=True)
    pi[deg == 0] = 1.0 / critics.shape[0]
    return pi


def soft_kmeans_sweep(cb, obs, beta, seed=None):
    """One assignment + centroid pass.

    Each critic coordinate (movie ``m``) becomes the ``pi``-weighted mean of
    the ratings ``m`` received; coordinates with no weight keep their value.
    A critic that attracts no mass at all is re-seeded as a perturbed copy
    of the heaviest critic.
    """
    if not np.any(obs.user_degree > 0):
        raise DataError("soft k-means needs at least one user with a rating")
    pi = soft_assign(cb.critics, obs, beta)
    weights = pi[obs.users]  # (E, K)
    num = segment_sum(weights * obs.ratings[:, None], obs.movies, obs.n_movies).T
    den = segment_sum(weights, obs.movies, obs.n_movies).T
    critics = cb.critics.copy()
    has = den > 0
    critics[has] = num[has] / den[has]

    mass = pi[obs.user_degree > 0].sum(axis=0)
    empty = np.flatnonzero(mass == 0)
    if empty.size:
        rng = as_generator(0 if seed is None else seed)
        heaviest = int(np.argmax(mass))
        for k in empty:
            critics[k] = critics[heaviest] + rng.normal(0.0, DEFAULT_NOISE_SD, critics.shape[1])
    return Codebook(critics, cb.stage, cb.sweep + 1), SoftAssignment(pi, float(beta))


def _merge_lightest(critics, mass):
    """Merge the two critics with the smallest mass (mass-weighted mean)."""
    order = np.argsort(mass, kind="stable")
    a, b = sorted(int(i) for i in order[:2])
    total = mass[a] + mass[b]
    if total > 0:
        merged = (mass[a] * critics[a] + mass[b] * critics[b]) / total
    else:
        merged = 0.5 * (critics[a] + critics[b])
    critics = critics.copy()
    critics[a] = merged
    mass = mass.copy()
    mass[a] = total
    return np.delete(critics, b, axis=0), np.delete(mass, b)


@dataclass
class ClusterResult:
    codebook: Codebook
    assignment: SoftAssignment
    reseeded: int = 0


def vdvq_cluster(obs, n_groups, beta=DEFAULT_BETA, sweeps=DEFAULT_SWEEPS,
                 noise_sd=DEFAULT_NOISE_SD, seed=0):
    """Grow a codebook of ``n_groups`` critics for the users of ``obs``.

    The codebook is split to the next power of two; surplus critics are then
    merged two at a time (lightest first) and the result re-swept.
    """
    if n_groups < 1:
        raise ParameterError("need at least one group")
    if sweeps < 0:
        raise ParameterError("sweeps must be nonnegative")
    rng = as_generator(seed)
    cb = vdvq_init(obs)
    stages = math.ceil(math.log2(n_groups)) if n_groups > 1 else 0
    for _ in range(stages):
        cb = gla_split(cb, noise_sd, rng)
        for _ in range(sweeps):
            cb, _ = soft_kmeans_sweep(cb, obs, beta, rng)
    if cb.size > n_groups:
        critics = cb.critics
        mass = soft_assign(critics, obs, beta)[obs.user_degree > 0].sum(axis=0)
        while critics.shape[0] > n_groups:
            critics, mass = _merge_lightest(critics, mass)
        cb = Codebook(critics, cb.stage, 0)
        for _ in range(sweeps):
            cb, _ = soft_kmeans_sweep(cb, obs, beta, rng)
    pi = soft_assign(cb.critics, obs, beta)
    return ClusterResult(cb, SoftAssignment(pi, float(beta)))


def estimate_w(pi_users, pi_movies, obs):
    """Soft rating frequencies per group pair.

    Returns ``(w, empty_cells)``; cells with no mass get a uniform row and
    are listed in ``empty_cells``.
    """
    pu = np.asarray(getattr(pi_users, "pi", pi_users), dtype=float)
    pv = np.asarray(getattr(pi_movies, "pi", pi_movies), dtype=float)
    g_u, g_v, n_r = pu.shape[1], pv.shape[1], len(obs.alphabet)
    w = np.zeros((g_u, g_v, n_r))
    for k in range(n_r):
        sel = obs.rating_index == k
        w[:, :, k] = pu[obs.users[sel]].T @ pv[obs.movies[sel]]
    total = w.sum(axis=2)
    empty = total <= 0
    w[empty] = 1.0 / n_r
    w[~empty] /= total[~empty][:, None]
    return w, [tuple(int(i) for i in c) for c in np.argwhere(empty)]


def priors_from_assignment(pi, epsilon=DEFAULT_EPSILON, active=None):
    """Per-node beliefs: ``epsilon`` on the MAP critic, the rest spread evenly.

    The group prior is the average belief over ``active`` nodes (all nodes
    by default); inactive nodes (no observations) are given that prior.
    MAP ties go to the smallest index.  Returns ``(prior, beliefs)``.
    """
    pi = np.asarray(getattr(pi, "pi", pi), dtype=float)
    g = pi.shape[1]
    if g == 1:
        beliefs = np.ones((pi.shape[0], 1))
        return np.ones(1), beliefs
    if not (1.0 / g < epsilon <= 1.0):
        raise ParameterError(f"epsilon must lie in (1/{g}, 1], got {epsilon}")
    beliefs = np.full(pi.shape, (1.0 - epsilon) / (g - 1))
    beliefs[np.arange(pi.shape[0]), np.argmax(pi, axis=1)] = epsilon
    active = np.ones(pi.shape[0], dtype=bool) if active is None else np.asarray(active, bool)
    if active.any():
        prior = beliefs[active].mean(axis=0)
    else:
        prior = np.full(g, 1.0 / g)
    prior /= prior.sum()
    beliefs[~active] = prior
    return prior, beliefs


@dataclass
class InitResult:
    model: GroupModel
    user_beliefs: np.ndarray
    movie_beliefs: np.ndarray
    user_assignment: SoftAssignment
    movie_assignment: SoftAssignment
    empty_cells: list = field(default_factory=list)


def vdvq_model(obs, g_u, g_v, beta=DEFAULT_BETA, sweeps=DEFAULT_SWEEPS, noise_sd=DEFAULT_NOISE_SD,
               epsilon=DEFAULT_EPSILON, seed=0):
    """Full initializer: cluster users and movies, then estimate priors and kernel."""
    users = vdvq_cluster(obs, g_u, beta, sweeps, noise_sd, substream(seed, "split-noise", 0))
    movies = vdvq_cluster(obs.transpose(), g_v, beta, sweeps, noise_sd,
                          substream(seed, "split-noise", 1))
    w, empty = estimate_w(users.assignment, movies.assignment, obs)
    p_u, f = priors_from_assignment(users.assignment, epsilon, obs.user_degree > 0)
    p_v, h = priors_from_assignment(movies.assignment, epsilon, obs.movie_degree > 0)
    model = GroupModel(p_u, p_v, w, obs.alphabet)
    return InitResult(model, f, h, users.assignment, movies.assignment, empty)
