from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True, eq=False)
class PosteriorEstimates:
    """Posterior estimates after a learner has run.

    ``rating[k]`` is the distribution over ``ratings`` for ``pairs[k]``;
    ``users`` and ``movies`` hold one group distribution per node.
    ``substituted[k]`` marks pairs that were not observed edges, for which
    the full node beliefs stand in for the edge messages.
    """

    pairs: np.ndarray
    rating: np.ndarray
    users: np.ndarray
    movies: np.ndarray
    ratings: tuple
    substituted: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.substituted is None:
            object.__setattr__(self, "substituted", np.zeros(len(self.pairs), dtype=bool))

    def lookup(self, pairs):
        """Row indices of ``pairs`` inside ``self.pairs``; raises if absent."""
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        width = max(int(self.movies.shape[0]), 1)
        mine = self.pairs[:, 0] * width + self.pairs[:, 1]
        order = np.argsort(mine, kind="stable")
        keys = pairs[:, 0] * width + pairs[:, 1]
        pos = np.clip(np.searchsorted(mine[order], keys), 0, max(mine.size - 1, 0))
        if mine.size == 0 or np.any(mine[order][pos] != keys):
            raise ParameterError("no rating posterior for some requested pair")
        return order[pos]


def check_pairs(pairs, n_users, n_movies):
    if pairs is None:
        return np.zeros((0, 2), dtype=np.int64)
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if pairs.size and (pairs[:, 0].min() < 0 or pairs[:, 0].max() >= n_users
                       or pairs[:, 1].min() < 0 or pairs[:, 1].max() >= n_movies):
        raise ParameterError("query pair references an out-of-range user or movie")
    return pairs
