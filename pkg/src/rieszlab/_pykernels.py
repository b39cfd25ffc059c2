"""Pure numpy implementations of the hot loops.

These mirror ``_ckernels`` exactly in semantics; the compiled module is
preferred when it imports. Coincident point pairs (distance exactly 0)
contribute 0 in every routine; callers patch in the diagonal rule.
"""
import numpy as np

_CHUNK = 2048


def _power(d2, p):
    out = np.zeros_like(d2)
    nz = d2 > 0.0
    if p == -1.0:
        out[nz] = 1.0 / np.sqrt(d2[nz])
    else:
        out[nz] = d2[nz] ** (0.5 * p)
    return out


def pair_power(X, Y, p):
    """Return the matrix |X_i - Y_j|**p, with exact coincidences set to 0."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    out = np.empty((X.shape[0], Y.shape[0]))
    for s in range(0, X.shape[0], _CHUNK):
        diff = X[s:s + _CHUNK, None, :] - Y[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        out[s:s + _CHUNK] = _power(d2, p)
    return out


def apply_power(X, m, P, p):
    """Return sum_i m_i |P_k - X_i|**p for every evaluation point P_k."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    P = np.ascontiguousarray(P, dtype=np.float64)
    m = np.ascontiguousarray(m, dtype=np.float64)
    out = np.empty(P.shape[0])
    for s in range(0, P.shape[0], _CHUNK // 4):
        diff = P[s:s + _CHUNK // 4, None, :] - X[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        out[s:s + _CHUNK // 4] = _power(d2, p) @ m
    return out


def greedy_transport(Xa, ma, Xb, mb, cap):
    """Greedy matching cost between two nonnegative mass vectors.

    Pairs are matched in order of increasing distance, each pair moving as
    much mass as both ends still hold, at cost min(distance, cap) per unit.
    Mass left unmatched on either side costs cap/2 per unit.
    """
    Xa = np.asarray(Xa, dtype=np.float64)
    Xb = np.asarray(Xb, dtype=np.float64)
    ra = np.array(ma, dtype=np.float64)
    rb = np.array(mb, dtype=np.float64)
    if ra.size == 0 or rb.size == 0:
        return 0.5 * cap * (ra.sum() + rb.sum())
    diff = Xa[:, None, :] - Xb[None, :, :]
    d = np.minimum(np.sqrt(np.einsum("ijk,ijk->ij", diff, diff)), cap)
    order = np.argsort(d, axis=None, kind="stable")
    nb = d.shape[1]
    cost = 0.0
    left = min(ra.sum(), rb.sum())
    for flat in order:
        if left <= 0.0:
            break
        i, j = divmod(int(flat), nb)
        t = min(ra[i], rb[j])
        if t <= 0.0:
            continue
        cost += t * d[i, j]
        ra[i] -= t
        rb[j] -= t
        left -= t
    return cost + 0.5 * cap * (max(ra.sum(), 0.0) + max(rb.sum(), 0.0))
