"""IMP: sum-product message passing on the user/movie observation graph.

One message of each direction lives on every observed edge ``(n, m)``:
``y[e]`` (user -> movie, a distribution over user groups) and ``x[e]``
(movie -> user, over movie groups).  The kernel is fixed during inference;
it comes from an initializer such as VDVQ.

Updates use a flooding schedule and are carried out in the log domain.  The
extrinsic product over ``V_n \\ m`` is formed as the full per-node sum of
log edge factors minus the edge's own term.  Inside that product each edge
``(n, k)`` contributes through its own rating ``r_{n,k}``.

``imp_run(..., refits=k)`` optionally re-estimates the kernel and priors
from the converged edge beliefs ``k`` times, warm-starting the messages
each round.  With ``refits=0`` the kernel stays exactly as initialized.
"""

from dataclasses import dataclass, field

import numpy as np

from ._numerics import (floor_kernel, kernel_apply, normalize_log_rows, normalize_rows, pair_counts,
                        rating_distribution, segment_sum)
from .errors import ParameterError
from .posteriors import PosteriorEstimates, check_pairs

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITERS = 200


@dataclass(frozen=True, eq=False)
class MessageState:
    y: np.ndarray
    x: np.ndarray
    iteration: int = 0

    def check(self, atol=1e-9):
        for name, msg in (("y", self.y), ("x", self.x)):
            if msg.size and (np.any(msg < 0) or np.max(np.abs(msg.sum(axis=1) - 1.0)) > atol):
                raise AssertionError(f"{name}-messages not normalized at iteration {self.iteration}")


@dataclass
class ConvergenceReport:
    iterations: int = 0
    converged: bool = False
    trace: list = field(default_factory=list)
    refits: int = 0
    kernel_changes: list = field(default_factory=list)


@dataclass
class ImpResult:
    state: MessageState
    posteriors: PosteriorEstimates
    report: ConvergenceReport
    model: object = None


def _check_shapes(model, obs):
    if model.ratings != obs.alphabet:
        raise ParameterError(f"model ratings {model.ratings} != data alphabet {obs.alphabet}")


def imp_init(model, obs):
    """Every y-message starts at p_U and every x-message at p_V."""
    _check_shapes(model, obs)
    y = np.tile(model.p_u, (obs.size, 1))
    x = np.tile(model.p_v, (obs.size, 1))
    return MessageState(y, x, 0)


def _log_factors(w, obs, state):
    # log sum_v w(r_nk|u,v) x_{k->n}(v) per edge, and the movie-side analogue
    log_su = np.log(kernel_apply(w, obs, state.x, "user"))
    log_sv = np.log(kernel_apply(w, obs, state.y, "movie"))
    return log_su, log_sv


def imp_iterate(state, model, obs, damping=0.0):
    """One synchronous update of every edge message."""
    w = floor_kernel(model.w)
    log_su, log_sv = _log_factors(w, obs, state)
    user_total = segment_sum(log_su, obs.users, obs.n_users)
    movie_total = segment_sum(log_sv, obs.movies, obs.n_movies)
    with np.errstate(divide="ignore"):
        log_pu, log_pv = np.log(model.p_u), np.log(model.p_v)

    def edge_name(e):
        return f"({int(obs.users[e])},{int(obs.movies[e])})"

    y = normalize_log_rows(log_pu + user_total[obs.users] - log_su, "edge", edge_name)
    x = normalize_log_rows(log_pv + movie_total[obs.movies] - log_sv, "edge", edge_name)
    if damping:
        y = (1.0 - damping) * y + damping * state.y
        x = (1.0 - damping) * x + damping * state.x
    return MessageState(y, x, state.iteration + 1)


def node_beliefs(state, model, obs):
    """Full-product node posteriors p(U_n | R_O), p(V_m | R_O)."""
    w = floor_kernel(model.w)
    log_su, log_sv = _log_factors(w, obs, state)
    with np.errstate(divide="ignore"):
        log_pu, log_pv = np.log(model.p_u), np.log(model.p_v)
    users = normalize_log_rows(log_pu + segment_sum(log_su, obs.users, obs.n_users), "user")
    movies = normalize_log_rows(log_pv + segment_sum(log_sv, obs.movies, obs.n_movies), "movie")
    return users, movies


def imp_posteriors(state, model, obs, query_pairs=None):
    """Rating posteriors for ``query_pairs`` plus all node posteriors.

    Observed pairs combine their two edge messages through the kernel.  For
    unobserved pairs no edge messages exist, so the node posteriors are used
    instead (as if a zero-information edge were attached).
    """
    pairs = check_pairs(query_pairs, obs.n_users, obs.n_movies)
    users, movies = node_beliefs(state, model, obs)
    e = obs.edge_index(pairs[:, 0], pairs[:, 1])
    observed = e >= 0
    a = np.where(observed[:, None], state.y[np.maximum(e, 0)] if obs.size else 0.0, users[pairs[:, 0]])
    b = np.where(observed[:, None], state.x[np.maximum(e, 0)] if obs.size else 0.0, movies[pairs[:, 1]])
    rating = rating_distribution(a, b, floor_kernel(model.w))
    return PosteriorEstimates(pairs, rating, users, movies, model.ratings, ~observed)


def refit_model(state, model, obs):
    """Re-estimate the kernel and priors from the current IMP beliefs.

    The belief on edge ``e`` over group pairs is proportional to
    ``y_e(u) x_e(v) w(r_e|u,v)``; the kernel becomes the normalized soft
    rating counts and each prior the mean node posterior over nodes with
    at least one observation.
    """
    if obs.size == 0:
        return model
    w = floor_kernel(model.w)
    z = (state.y * kernel_apply(w, obs, state.x, "user")).sum(axis=1)
    counts = pair_counts(w, obs, state.y / z[:, None], state.x)
    new_w = normalize_rows(counts, "kernel row", lambda u, v: (int(u), int(v)))
    users, movies = node_beliefs(state, model, obs)
    p_u = users[obs.user_degree > 0].mean(axis=0) if np.any(obs.user_degree > 0) else model.p_u
    p_v = movies[obs.movie_degree > 0].mean(axis=0) if np.any(obs.movie_degree > 0) else model.p_v
    return model.replace(w=new_w, p_u=p_u / p_u.sum(), p_v=p_v / p_v.sum())


def _iterate_to_convergence(state, model, obs, max_iters, tol, damping, report):
    for _ in range(max_iters):
        new = imp_iterate(state, model, obs, damping)
        new.check()
        change = 0.0
        if obs.size:
            change = float(max(np.max(np.abs(new.y - state.y)), np.max(np.abs(new.x - state.x))))
        report.trace.append(change)
        state = new
        if change < tol:
            return state, True
    return state, False


def imp_run(model, obs, max_iters=DEFAULT_MAX_ITERS, tol=DEFAULT_TOL, damping=0.0,
            query_pairs=None, refits=0, refit_tol=1e-6):
    """Iterate until the largest message change drops below ``tol``.

    ``report.trace`` holds the max message change of every iteration (all
    refit rounds concatenated).  Refitting stops early once the kernel moves
    by less than ``refit_tol``.
    """
    if max_iters < 1:
        raise ParameterError("max_iters must be >= 1")
    if not tol > 0:
        raise ParameterError("tol must be positive")
    if not 0.0 <= damping < 1.0:
        raise ParameterError("damping must lie in [0, 1)")
    if refits < 0:
        raise ParameterError("refits must be nonnegative")
    report = ConvergenceReport()
    state = imp_init(model, obs)
    state, report.converged = _iterate_to_convergence(state, model, obs, max_iters, tol, damping, report)
    for _ in range(refits):
        new_model = refit_model(state, model, obs)
        delta = float(np.max(np.abs(new_model.w - model.w)))
        report.kernel_changes.append(delta)
        report.refits += 1
        model = new_model
        state, report.converged = _iterate_to_convergence(state, model, obs, max_iters, tol, damping,
                                                          report)
        if delta < refit_tol:
            break
    report.iterations = state.iteration
    return ImpResult(state, imp_posteriors(state, model, obs, query_pairs), report, model)
