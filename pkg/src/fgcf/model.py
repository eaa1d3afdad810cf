"""Generative group model, observation sets, sampling and file formats.

Every user ``n`` belongs to a hidden group ``U_n ~ p_U`` and every movie
``m`` to a hidden group ``V_m ~ p_V``.  An observed rating is drawn from the
kernel ``w(r | U_n, V_m)`` independently of all other ratings once the groups
are fixed.
"""

import csv
import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DataError, ModelFormatError, ParameterError
from .seeding import as_generator

DEFAULT_RATINGS = (1, 2, 3, 4, 5)
PROB_ATOL = 1e-12
MAX_REDRAWS = 100


def _frozen(a, dtype=np.float64):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GroupModel:
    """Priors over user/movie groups plus the rating kernel.

    ``w`` has shape ``(g_u, g_v, len(ratings))`` and ``w[u, v, k]`` is the
    probability of rating ``ratings[k]`` given groups ``(u, v)``.
    """

    p_u: np.ndarray
    p_v: np.ndarray
    w: np.ndarray
    ratings: tuple = DEFAULT_RATINGS

    def __post_init__(self):
        object.__setattr__(self, "p_u", _frozen(self.p_u))
        object.__setattr__(self, "p_v", _frozen(self.p_v))
        object.__setattr__(self, "w", _frozen(self.w))
        object.__setattr__(self, "ratings", tuple(int(r) for r in self.ratings))
        if self.p_u.ndim != 1 or self.p_v.ndim != 1 or self.w.ndim != 3:
            raise ParameterError("p_u, p_v must be vectors and w a 3-d table")
        expected = (self.p_u.size, self.p_v.size, len(self.ratings))
        if self.w.shape != expected:
            raise ParameterError(f"kernel shape {self.w.shape} != {expected}")

    @property
    def g_u(self):
        return self.p_u.size

    @property
    def g_v(self):
        return self.p_v.size

    @property
    def n_ratings(self):
        return len(self.ratings)

    @classmethod
    def uniform(cls, g_u, g_v, ratings=DEFAULT_RATINGS):
        k = len(ratings)
        return cls(np.full(g_u, 1.0 / g_u), np.full(g_v, 1.0 / g_v),
                   np.full((g_u, g_v, k), 1.0 / k), ratings)

    def replace(self, **changes):
        fields = dict(p_u=self.p_u, p_v=self.p_v, w=self.w, ratings=self.ratings)
        fields.update(changes)
        return GroupModel(**fields)

    def rating_values(self):
        return np.asarray(self.ratings, dtype=np.float64)

    def __eq__(self, other):
        if not isinstance(other, GroupModel):
            return NotImplemented
        return (self.ratings == other.ratings
                and np.array_equal(self.p_u, other.p_u)
                and np.array_equal(self.p_v, other.p_v)
                and np.array_equal(self.w, other.w))

    __hash__ = None


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    message: str = "ok"
    where: tuple = ()

    def __bool__(self):
        return self.ok


def validate_model(model):
    """Check the probability invariants; report the first violation."""
    if model.g_u < 1 or model.g_v < 1 or model.n_ratings < 1:
        return ValidationReport(False, "empty group or rating set")
    for name, p in (("p_U", model.p_u), ("p_V", model.p_v)):
        bad = np.flatnonzero(~np.isfinite(p) | (p < 0) | (p > 1))
        if bad.size:
            i = int(bad[0])
            return ValidationReport(False, f"{name}[{i}] = {float(p[i])!r} outside [0, 1]", (i,))
        s = float(p.sum())
        if abs(s - 1.0) > PROB_ATOL:
            return ValidationReport(False, f"{name} sums to {s:.12g}")
    w = model.w
    bad = np.argwhere(~np.isfinite(w) | (w < 0) | (w > 1))
    if bad.size:
        u, v, k = (int(i) for i in bad[0])
        return ValidationReport(False, f"w({model.ratings[k]}|{u},{v}) = {float(w[u, v, k])!r} outside [0, 1]",
                                (u, v, k))
    sums = w.sum(axis=2)
    bad = np.argwhere(np.abs(sums - 1.0) > PROB_ATOL)
    if bad.size:
        u, v = (int(i) for i in bad[0])
        return ValidationReport(False, f"kernel row ({u},{v}) sums to {sums[u, v]:.12g}", (u, v))
    if len(set(model.ratings)) != model.n_ratings:
        return ValidationReport(False, "rating alphabet has duplicates")
    return ValidationReport(True)


def check_model(model):
    report = validate_model(model)
    if not report:
        raise ParameterError(f"invalid model: {report.message}")
    return model


class ObservationSet:
    """Sparse set of observed ``(user, movie, rating)`` triples.

    Users and movies are dense 0-based indices; ratings are values from
    ``alphabet``.  Per-node adjacency is kept in CSR form: the edges of user
    ``n`` are ``user_edges[user_ptr[n]:user_ptr[n + 1]]``.
    """

    def __init__(self, n_users, n_movies, users, movies, ratings, alphabet=DEFAULT_RATINGS):
        self.n_users = int(n_users)
        self.n_movies = int(n_movies)
        self.alphabet = tuple(int(r) for r in alphabet)
        if self.n_users < 0 or self.n_movies < 0:
            raise DataError("negative dimensions")
        self.users = _frozen(users, np.int64).reshape(-1)
        self.movies = _frozen(movies, np.int64).reshape(-1)
        self.ratings = _frozen(ratings, np.int64).reshape(-1)
        if not (self.users.size == self.movies.size == self.ratings.size):
            raise DataError("triple arrays differ in length")
        if self.size:
            if self.users.min() < 0 or self.users.max() >= self.n_users:
                raise DataError("user index out of range")
            if self.movies.min() < 0 or self.movies.max() >= self.n_movies:
                raise DataError("movie index out of range")
        alpha = np.asarray(self.alphabet, dtype=np.int64)
        if alpha.size == 0:
            raise DataError("empty rating alphabet")
        order = np.argsort(alpha)
        pos = np.clip(np.searchsorted(alpha[order], self.ratings), 0, alpha.size - 1)
        outside = alpha[order][pos] != self.ratings
        if np.any(outside):
            raise DataError(f"rating {int(self.ratings[outside][0])} outside alphabet {self.alphabet}")
        self.rating_index = _frozen(order[pos], np.int64)

        self.keys = _frozen(self.users * max(self.n_movies, 1) + self.movies, np.int64)
        uniq, counts = np.unique(self.keys, return_counts=True)
        if np.any(counts > 1):
            k = int(uniq[counts > 1][0])
            raise DataError(f"duplicate pair (user={k // max(self.n_movies, 1)}, "
                            f"movie={k % max(self.n_movies, 1)})")
        self._sorted_keys = uniq
        self._key_order = np.argsort(self.keys, kind="stable")

        self.user_edges, self.user_ptr = _csr(self.users, self.n_users)
        self.movie_edges, self.movie_ptr = _csr(self.movies, self.n_movies)
        # adjacency and triples must describe the same relation
        if (self.user_ptr[-1] != self.size or self.movie_ptr[-1] != self.size
                or not np.array_equal(np.sort(self.user_edges), np.arange(self.size))):
            raise DataError("adjacency does not match triple list")

    @property
    def size(self):
        return int(self.users.size)

    def __len__(self):
        return self.size

    @cached_property
    def rating_groups(self):
        """Edge ids grouped by rating index, one array per alphabet entry."""
        order = np.argsort(self.rating_index, kind="stable")
        bounds = np.searchsorted(self.rating_index[order], np.arange(len(self.alphabet) + 1))
        return [order[bounds[k]:bounds[k + 1]] for k in range(len(self.alphabet))]

    @property
    def user_degree(self):
        return np.diff(self.user_ptr)

    @property
    def movie_degree(self):
        return np.diff(self.movie_ptr)

    def user_adjacency(self, n):
        """Movies rated by user ``n`` with their ratings (the set V_n)."""
        e = self.user_edges[self.user_ptr[n]:self.user_ptr[n + 1]]
        return self.movies[e], self.ratings[e]

    def movie_adjacency(self, m):
        """Users who rated movie ``m`` with their ratings (the set U_m)."""
        e = self.movie_edges[self.movie_ptr[m]:self.movie_ptr[m + 1]]
        return self.users[e], self.ratings[e]

    def triples(self):
        return list(zip(self.users.tolist(), self.movies.tolist(), self.ratings.tolist()))

    def pairs(self):
        return np.stack([self.users, self.movies], axis=1)

    def edge_index(self, users, movies):
        """Edge id of each ``(user, movie)`` pair, or -1 if unobserved."""
        keys = np.asarray(users, np.int64) * max(self.n_movies, 1) + np.asarray(movies, np.int64)
        if self.size == 0:
            return np.full(keys.shape, -1, dtype=np.int64)
        pos = np.clip(np.searchsorted(self._sorted_keys, keys), 0, self.size - 1)
        found = self._sorted_keys[pos] == keys
        return np.where(found, self._key_order[pos], -1)

    def subset(self, edges):
        edges = np.asarray(edges)
        if edges.dtype == bool:
            edges = np.flatnonzero(edges)
        return ObservationSet(self.n_users, self.n_movies, self.users[edges],
                              self.movies[edges], self.ratings[edges], self.alphabet)

    def transpose(self):
        """Swap the roles of users and movies."""
        return ObservationSet(self.n_movies, self.n_users, self.movies, self.users,
                              self.ratings, self.alphabet)

    def __eq__(self, other):
        if not isinstance(other, ObservationSet):
            return NotImplemented
        return (self.n_users == other.n_users and self.n_movies == other.n_movies
                and self.alphabet == other.alphabet
                and np.array_equal(self.users, other.users)
                and np.array_equal(self.movies, other.movies)
                and np.array_equal(self.ratings, other.ratings))

    __hash__ = None

    def __repr__(self):
        return (f"ObservationSet(N={self.n_users}, M={self.n_movies}, |O|={self.size}, "
                f"alphabet={self.alphabet})")


def _csr(index, n):
    order = np.argsort(index, kind="stable")
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(index, minlength=n), out=ptr[1:])
    order.setflags(write=False)
    ptr.setflags(write=False)
    return order, ptr


@dataclass(frozen=True, eq=False)
class SyntheticTruth:
    user_groups: np.ndarray
    movie_groups: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "user_groups", _frozen(self.user_groups, np.int64))
        object.__setattr__(self, "movie_groups", _frozen(self.movie_groups, np.int64))


def discretized_gaussian_kernel(means, sd, ratings=DEFAULT_RATINGS):
    """Kernel with ``w(r|u,v)`` proportional to ``exp(-(r - means[u,v])^2 / (2 sd^2))``."""
    means = np.asarray(means, dtype=np.float64)
    r = np.asarray(ratings, dtype=np.float64)
    logits = -((r[None, None, :] - means[:, :, None]) ** 2) / (2.0 * sd * sd)
    w = np.exp(logits - logits.max(axis=2, keepdims=True))
    return w / w.sum(axis=2, keepdims=True)


def draw_ratings(model, user_groups, movie_groups, rng):
    """Draw one rating per (user group, movie group) pair from the kernel."""
    rows = model.w[np.asarray(user_groups), np.asarray(movie_groups)]
    cdf = np.cumsum(rows, axis=1)
    u = rng.random(rows.shape[0])
    idx = np.minimum((u[:, None] >= cdf).sum(axis=1), model.n_ratings - 1)
    return np.asarray(model.ratings, dtype=np.int64)[idx]


def attach_edges(degrees, n_movies, rng):
    """Pair user sockets with movies through a random permutation.

    User ``n`` emits ``degrees[n]`` sockets.  The socket list is shuffled and
    each socket is handed a movie drawn uniformly; a socket that lands on a
    movie its user already has is redrawn, at most ``MAX_REDRAWS`` times.
    """
    degrees = np.asarray(degrees, dtype=np.int64)
    if np.any(degrees > n_movies):
        raise DataError("a user degree exceeds the number of movies")
    sockets = rng.permutation(np.repeat(np.arange(degrees.size), degrees))
    movies = rng.integers(0, n_movies, size=sockets.size) if sockets.size else np.zeros(0, np.int64)

    dense = degrees > n_movies // 2
    if np.any(dense):
        # redraws rarely succeed for near-complete rows; sample them exactly
        for n in np.flatnonzero(dense):
            slots = np.flatnonzero(sockets == n)
            movies[slots] = rng.choice(n_movies, size=slots.size, replace=False)

    for _ in range(MAX_REDRAWS + 1):
        keys = sockets * n_movies + movies
        _, first = np.unique(keys, return_index=True)
        clash = np.ones(keys.size, dtype=bool)
        clash[first] = False
        if not clash.any():
            break
        movies[clash] = rng.integers(0, n_movies, size=int(clash.sum()))
    else:
        raise DataError(f"could not resolve duplicate edges after {MAX_REDRAWS} redraws")
    return sockets, movies


def sample_synthetic(model, n_users, n_movies, *, pairs=None, density=None, seed=0):
    """Sample hidden groups, an edge set and ratings from ``model``.

    Give either explicit ``pairs`` (an ``(E, 2)`` array) or a target average
    number of observations per user ``density``; in the latter case user
    degrees are Poisson(density) truncated to ``[0, n_movies]``.
    Returns ``(ObservationSet, SyntheticTruth)``.
    """
    check_model(model)
    if n_users < 1 or n_movies < 1:
        raise ParameterError("need at least one user and one movie")
    if (pairs is None) == (density is None):
        raise ParameterError("give exactly one of pairs or density")
    rng = as_generator(seed)
    user_groups = rng.choice(model.g_u, size=n_users, p=model.p_u)
    movie_groups = rng.choice(model.g_v, size=n_movies, p=model.p_v)
    if pairs is not None:
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        users, movies = pairs[:, 0], pairs[:, 1]
    else:
        if density < 0 or density > n_movies:
            raise DataError(f"target density {density} exceeds the {n_movies} available movies")
        degrees = np.minimum(rng.poisson(density, size=n_users), n_movies)
        users, movies = attach_edges(degrees, n_movies, rng)
    ratings = draw_ratings(model, user_groups[users], movie_groups[movies], rng)
    obs = ObservationSet(n_users, n_movies, users, movies, ratings, model.ratings)
    return obs, SyntheticTruth(user_groups, movie_groups)


# ---------------------------------------------------------------------------
# files


def model_to_dict(model):
    return {
        "g_u": model.g_u,
        "g_v": model.g_v,
        "ratings": list(model.ratings),
        "p_u": model.p_u.tolist(),
        "p_v": model.p_v.tolist(),
        "w": model.w.tolist(),
    }


def model_from_dict(data, source="<dict>"):
    if not isinstance(data, dict):
        raise ModelFormatError(f"{source}: top level must be an object")
    for key in ("g_u", "g_v", "ratings", "p_u", "p_v", "w"):
        if key not in data:
            raise ModelFormatError(f"{source}: missing field '{key}'")
    try:
        model = GroupModel(np.array(data["p_u"], dtype=np.float64),
                           np.array(data["p_v"], dtype=np.float64),
                           np.array(data["w"], dtype=np.float64),
                           tuple(data["ratings"]))
    except (ValueError, TypeError) as exc:
        raise ModelFormatError(f"{source}: malformed array field: {exc}") from exc
    if model.g_u != data["g_u"] or model.g_v != data["g_v"]:
        raise ModelFormatError(f"{source}: field 'g_u'/'g_v' disagrees with array shapes")
    report = validate_model(model)
    if not report:
        raise ModelFormatError(f"{source}: validation failed: {report.message}")
    return model


def save_model(model, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(model_to_dict(model), fh, indent=1)
        fh.write("\n")


def load_model(path):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from exc
    return model_from_dict(data, source=str(path))


DATASET_HEADER = ("user", "movie", "rating")


def write_dataset(obs, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(DATASET_HEADER)
        writer.writerows(obs.triples())


def read_dataset(path, alphabet=DEFAULT_RATINGS, n_users=None, n_movies=None):
    """Read a dense-index ``user,movie,rating`` CSV.

    Dimensions default to one past the largest index seen.
    """
    users, movies, ratings = [], [], []
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != DATASET_HEADER:
            raise ModelFormatError(f"{path}: line 1: expected header user,movie,rating")
        seen = {}
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != 3:
                raise ModelFormatError(f"{path}: line {line}: expected 3 fields, got {len(row)}")
            try:
                n, m, r = (int(x) for x in row)
            except ValueError as exc:
                raise ModelFormatError(f"{path}: line {line}: {exc}") from exc
            if n < 0 or m < 0:
                raise ModelFormatError(f"{path}: line {line}: negative index")
            if r not in alphabet:
                raise DataError(f"{path}: line {line}: rating {r} outside alphabet {tuple(alphabet)}")
            if (n, m) in seen:
                raise DataError(f"{path}: line {line}: duplicate pair ({n},{m}), "
                                f"first seen on line {seen[(n, m)]}")
            seen[(n, m)] = line
            users.append(n)
            movies.append(m)
            ratings.append(r)
    n_users = n_users if n_users is not None else (max(users) + 1 if users else 0)
    n_movies = n_movies if n_movies is not None else (max(movies) + 1 if movies else 0)
    return ObservationSet(n_users, n_movies, users, movies, ratings, alphabet)
