"""Variational EM learner with per-node group beliefs.

Each iteration updates the user beliefs ``f`` and movie beliefs ``h`` from
the current kernel, then refits the kernel ``w`` using the new beliefs.
The convergence functional is the observed-data negative log-likelihood

    NLL = -sum_{(n,m) in O} log sum_{u,v} w(r_nm|u,v) f_n(u) h_m(v).

By default every observed pair's contribution is weighted by its posterior
``Q_nm(u, v) = w f h / Z_nm``, which makes each half-step an exact
coordinate-wise M-step, so the NLL never increases.  ``form="printed"``
drops the per-pair normalizer ``Z_nm``; that variant has no monotonicity
guarantee.
"""

from dataclasses import dataclass, field

import numpy as np

from ._numerics import kernel_apply, normalize_rows, pair_counts, rating_distribution, row_sum, segment_sum
from .errors import DegeneracyError, ParameterError
from .posteriors import PosteriorEstimates, check_pairs

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITERS = 500
FORMS = ("em", "printed")


@dataclass(frozen=True, eq=False)
class EmState:
    f: np.ndarray
    h: np.ndarray
    w: np.ndarray
    ratings: tuple
    iteration: int = 0

    def check(self, atol=1e-9):
        for name, p in (("f", self.f), ("h", self.h), ("w", self.w)):
            if p.size and (np.any(p < 0) or np.max(np.abs(p.sum(axis=-1) - 1.0)) > atol):
                raise AssertionError(f"{name} not normalized at iteration {self.iteration}")


@dataclass
class EmResult:
    state: EmState
    posteriors: PosteriorEstimates
    trace: list = field(default_factory=list)
    converged: bool = False


def em_init(model, obs, user_beliefs=None, movie_beliefs=None):
    """Start from node beliefs (default: the priors) and the model kernel."""
    if model.ratings != obs.alphabet:
        raise ParameterError(f"model ratings {model.ratings} != data alphabet {obs.alphabet}")
    f = np.tile(model.p_u, (obs.n_users, 1)) if user_beliefs is None else np.array(user_beliefs, float)
    h = np.tile(model.p_v, (obs.n_movies, 1)) if movie_beliefs is None else np.array(movie_beliefs, float)
    if f.shape != (obs.n_users, model.g_u) or h.shape != (obs.n_movies, model.g_v):
        raise ParameterError("initial beliefs have the wrong shape")
    return EmState(f, h, np.array(model.w, dtype=np.float64), model.ratings, 0)


def _likelihoods(w, f, h, obs):
    """Per-edge user factor ``s_e(u) = sum_v w(r_e|u,v) h_m(v)`` and ``Z_e = sum_u f_n(u) s_e(u)``."""
    s = kernel_apply(w, obs, h[obs.movies], "user")
    z = row_sum(s * f[obs.users])
    bad = ~(z > 0)
    if bad.any():
        e = int(np.flatnonzero(bad)[0])
        raise DegeneracyError(f"zero likelihood on pair ({int(obs.users[e])},{int(obs.movies[e])})")
    return s, z


def negative_log_likelihood(state, obs):
    if obs.size == 0:
        return 0.0
    _, z = _likelihoods(state.w, state.f, state.h, obs)
    return float(-np.sum(np.log(z)))


def em_iterate(state, obs, form="em"):
    """Update f and h from iteration-i quantities, then w from the new f, h."""
    if form not in FORMS:
        raise ParameterError(f"unknown EM form {form!r}")
    if obs.size == 0:
        return EmState(state.f, state.h, state.w, state.ratings, state.iteration + 1)
    w = state.w

    s, z = _likelihoods(w, state.f, state.h, obs)
    t = kernel_apply(w, obs, state.f[obs.users], "movie")
    scale = 1.0 / z if form == "em" else np.ones_like(z)
    f_acc = state.f * segment_sum(s * scale[:, None], obs.users, obs.n_users)
    h_acc = state.h * segment_sum(t * scale[:, None], obs.movies, obs.n_movies)
    # nodes without observations keep their previous belief
    f_acc[obs.user_degree == 0] = state.f[obs.user_degree == 0]
    h_acc[obs.movie_degree == 0] = state.h[obs.movie_degree == 0]
    f = normalize_rows(f_acc, "user", lambda n: int(n))
    h = normalize_rows(h_acc, "movie", lambda m: int(m))

    _, z = _likelihoods(w, f, h, obs)
    scale = 1.0 / z if form == "em" else np.ones_like(z)
    counts = pair_counts(w, obs, f[obs.users] * scale[:, None], h[obs.movies])
    w_new = normalize_rows(counts, "kernel row", lambda u, v: (int(u), int(v)))
    return EmState(f, h, w_new, state.ratings, state.iteration + 1)


def em_posteriors(state, obs, query_pairs=None):
    """Rating posterior from ``sum_{u,v} f_n h_m w``; node posteriors are f, h."""
    pairs = check_pairs(query_pairs, obs.n_users, obs.n_movies)
    rating = rating_distribution(state.f[pairs[:, 0]], state.h[pairs[:, 1]], state.w)
    substituted = obs.edge_index(pairs[:, 0], pairs[:, 1]) < 0
    return PosteriorEstimates(pairs, rating, state.f, state.h, state.ratings, substituted)


def em_run(model, obs, max_iters=DEFAULT_MAX_ITERS, tol=DEFAULT_TOL, *, user_beliefs=None,
           movie_beliefs=None, form="em", query_pairs=None):
    """Iterate until the NLL changes by less than ``tol``.

    ``trace[0]`` is the NLL of the initial state and ``trace[i]`` the NLL
    after iteration ``i``.
    """
    if max_iters < 1:
        raise ParameterError("max_iters must be >= 1")
    if not tol > 0:
        raise ParameterError("tol must be positive")
    state = em_init(model, obs, user_beliefs, movie_beliefs)
    trace = [negative_log_likelihood(state, obs)]
    converged = False
    for _ in range(max_iters):
        state = em_iterate(state, obs, form)
        state.check()
        trace.append(negative_log_likelihood(state, obs))
        if abs(trace[-1] - trace[-2]) < tol:
            converged = True
            break
    return EmResult(state, em_posteriors(state, obs, query_pairs), trace, converged)


def em_model(state, base_model):
    """Package a learned state as a GroupModel (priors = mean node beliefs)."""
    p_u = state.f.mean(axis=0) if state.f.shape[0] else base_model.p_u
    p_v = state.h.mean(axis=0) if state.h.shape[0] else base_model.p_v
    return base_model.replace(p_u=p_u / p_u.sum(), p_v=p_v / p_v.sum(), w=state.w)
