"""Generalization bound for the group model and the sign-agreement distortions.

The bound applies to binary (+1/-1) ratings.  ``to_signs`` maps a rating
alphabet onto signs by thresholding; the rating equal to the threshold
counts as -1 because a zero prediction is a disagreement.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, ParameterError


@dataclass(frozen=True)
class BoundParams:
    g_u: int
    g_v: int
    n_users: int
    n_movies: int
    n_obs: int
    delta: float

    def check(self):
        if self.g_u < 1 or self.g_v < 1:
            raise ParameterError("group counts must be >= 1")
        if self.n_users <= 2 or self.n_movies <= 2:
            raise ParameterError("N and M must exceed 2")
        if self.n_obs < 1:
            raise ParameterError("|O| must be >= 1")
        if not 0.0 < self.delta < 1.0:
            raise ParameterError(f"delta must lie in (0, 1), got {self.delta}")
        return self


def complexity(p):
    """Numerator of the bound before division by ``2|O|``."""
    p.check()
    dim = p.n_users * p.g_u + p.n_movies * p.g_v + p.g_u * p.g_v
    return dim * math.log(12.0 * math.e * p.n_movies / min(p.g_u, p.g_v)) - math.log(p.delta)


def generalization_bound(p):
    """``h = sqrt((dim * ln(12 e M / min(g_u, g_v)) - ln delta) / (2 |O|))``.

    The numerator does not depend on ``|O|``, so scaling ``|O|`` by 4
    halves ``h`` exactly.
    """
    return math.sqrt(complexity(p) / (2.0 * p.n_obs))


def sign_distortion(x, y):
    """1 when ``x * y <= 0`` (zero counts as disagreement), else 0."""
    if y not in (1, -1):
        raise ParameterError(f"y must be +1 or -1, got {y}")
    return int(x * y <= 0)


def _distortion_matrix(X, Y):
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y)
    if X.shape != Y.shape or X.ndim != 2:
        raise ParameterError(f"shape mismatch: X {X.shape}, Y {Y.shape}")
    if not np.all(np.isin(Y, (-1, 1))):
        raise ParameterError("Y entries must be +1 or -1")
    return (X * Y <= 0).astype(np.int64)


def average_distortions(X, Y, pairs):
    """``(D, D_O)``: mean distortion over all entries and over ``pairs``."""
    d = _distortion_matrix(X, Y)
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if pairs.shape[0] == 0:
        raise DataError("D_O is undefined for an empty pair set")
    n, m = d.shape
    if np.any(pairs < 0) or np.any(pairs[:, 0] >= n) or np.any(pairs[:, 1] >= m):
        raise ParameterError("pair index out of range")
    return float(d.mean()), float(d[pairs[:, 0], pairs[:, 1]].mean())


def default_threshold(alphabet):
    return 0.5 * (min(alphabet) + max(alphabet))


def to_signs(ratings, threshold):
    """+1 where ``r > threshold``, -1 otherwise."""
    return np.where(np.asarray(ratings, dtype=np.float64) > threshold, 1, -1)


@dataclass(frozen=True)
class BoundReport:
    h: float
    D: float
    D_O: float

    @property
    def gap(self):
        return abs(self.D - self.D_O)


def bound_report(X, Y, pairs, g_u, g_v, delta):
    """Empirical ``|D - D_O|`` next to the bound ``h``; no tightness is implied."""
    D, D_O = average_distortions(X, Y, pairs)
    n, m = np.shape(X)
    n_obs = np.asarray(pairs).reshape(-1, 2).shape[0]
    h = generalization_bound(BoundParams(g_u, g_v, n, m, n_obs, delta))
    return BoundReport(h, D, D_O)


BOUND_HEADER = ("g_u", "g_v", "N", "M", "n_obs", "delta", "h")


def bound_grid(g_u, g_v, n_users, n_movies, n_obs, delta):
    """Evaluate ``h`` on the Cartesian product of the given value lists."""
    rows = []
    for a in g_u:
        for b in g_v:
            for n in n_users:
                for m in n_movies:
                    for o in n_obs:
                        for dl in delta:
                            p = BoundParams(int(a), int(b), int(n), int(m), int(o), float(dl))
                            rows.append((p, generalization_bound(p)))
    return rows


def write_bound_csv(rows, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(BOUND_HEADER) + "\n")
        for p, h in rows:
            vals = (p.g_u, p.g_v, p.n_users, p.n_movies, p.n_obs, repr(float(p.delta)), repr(float(h)))
            fh.write(",".join(str(v) for v in vals) + "\n")
