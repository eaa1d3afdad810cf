import numpy as np

from .errors import DegeneracyError

KERNEL_FLOOR = 1e-12


def floor_kernel(w):
    """Clamp kernel entries away from zero so log-messages stay finite."""
    return np.maximum(np.asarray(w, dtype=np.float64), KERNEL_FLOOR)


def segment_sum(values, index, n):
    """Sum the rows of ``values`` (E, g) into ``n`` bins given by ``index``.

    ``np.bincount`` accumulates in input order, so the result is bit-stable.
    """
    values = np.asarray(values, dtype=np.float64)
    out = np.empty((n, values.shape[1]))
    for k in range(values.shape[1]):
        out[:, k] = np.bincount(index, weights=values[:, k], minlength=n)
    return out


def row_max(a):
    # column-wise loop: numpy reduces a short trailing axis slowly
    top = a[:, 0].copy()
    for k in range(1, a.shape[1]):
        np.maximum(top, a[:, k], out=top)
    return top


def row_sum(a):
    total = a[:, 0].copy()
    for k in range(1, a.shape[1]):
        total += a[:, k]
    return total


def normalize_log_rows(logp, what="row", label=None):
    """Exponentiate and normalize each row of an unnormalized log table."""
    if logp.shape[0] == 0:
        return np.exp(logp)
    top = row_max(logp)
    bad = ~np.isfinite(top)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        name = label(i) if label is not None else i
        raise DegeneracyError(f"zero normalizer for {what} {name}")
    p = np.exp(logp - top[:, None])
    p /= row_sum(p)[:, None]
    return p


def normalize_rows(p, what="row", label=None):
    s = p.sum(axis=-1, keepdims=True)
    bad = ~(s > 0) | ~np.isfinite(s)
    if bad.any():
        i = np.argwhere(bad[..., 0])[0]
        name = label(*i) if label is not None else tuple(int(k) for k in i)
        raise DegeneracyError(f"zero normalizer for {what} {name}")
    return p / s


def kernel_apply(w, obs, beliefs, side):
    """Per-edge ``sum_v w(r_e|u,v) b_e(v)`` (side="user") or ``sum_u`` (side="movie").

    Edges are processed rating by rating so memory stays O(E * g).
    """
    g_u, g_v, _ = w.shape
    out = np.empty((obs.size, g_u if side == "user" else g_v))
    for k, idx in enumerate(obs.rating_groups):
        if idx.size == 0:
            continue
        wk = w[:, :, k].T if side == "user" else w[:, :, k]
        out[idx] = beliefs[idx] @ wk
    return out


def pair_counts(w, obs, a, b):
    """``C[u, v, k] = w(k|u,v) * sum_{e: r_e = k} a_e(u) b_e(v)``."""
    out = np.zeros(w.shape)
    for k, idx in enumerate(obs.rating_groups):
        if idx.size:
            out[:, :, k] = w[:, :, k] * (a[idx].T @ b[idx])
    return out


def rating_distribution(a, b, w):
    """Rows of ``sum_{u,v} a(u) b(v) w(r|u,v)``, normalized over r."""
    p = np.einsum("ku,uvr,kv->kr", a, w, b, optimize=True)
    return normalize_rows(p, "rating posterior")
