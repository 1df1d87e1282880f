"""Row-wise projections onto the probability simplex."""

from __future__ import annotations

import numpy as np


def project_simplex(Y):
    """Euclidean projection of each row of ``Y`` onto {z >= 0, sum z = 1}.

    Sort-based thresholding; exact up to floating point.
    """
    Y = np.asarray(Y, dtype=float)
    single = Y.ndim == 1
    Y2 = np.atleast_2d(Y)
    J = Y2.shape[1]
    U = -np.sort(-Y2, axis=1)
    css = np.cumsum(U, axis=1) - 1.0
    ind = np.arange(1, J + 1)
    cond = U - css / ind > 0
    rho = J - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(Y2.shape[0]), rho] / (rho + 1)
    Z = np.maximum(Y2 - theta[:, None], 0.0)
    return Z[0] if single else Z


def project_simplex_weighted(Y, W):
    """Projection of each row of ``Y`` onto the simplex in the norm
    ``sum_j W_j (z_j - y_j)**2`` (``W > 0``).

    The solution is ``z_j = max(y_j - nu / W_j, 0)``. Coordinate ``j`` is
    active exactly when ``nu < W_j y_j``, so sorting the breakpoints
    ``W_j y_j`` in decreasing order and taking the longest prefix whose
    implied multiplier stays below its last breakpoint gives ``nu`` exactly.
    """
    Y = np.asarray(Y, dtype=float)
    W = np.asarray(W, dtype=float)
    if W.shape != Y.shape:
        W = np.broadcast_to(W, Y.shape)
    single = Y.ndim == 1
    Y2, W2 = (Y[None], W[None]) if single else (Y, W)
    if not (W2 > 0).all():
        raise ValueError("weights must be positive")
    rows = np.arange(Y2.shape[0])[:, None]
    WY = W2 * Y2
    order = (-WY).argsort(axis=1, kind="stable")
    ys, ws = Y2[rows, order], W2[rows, order]
    nu = (ys.cumsum(axis=1) - 1.0) / (1.0 / ws).cumsum(axis=1)
    ok = WY[rows, order] > nu
    # the feasible prefixes are nested; the first one (a single coordinate) always qualifies
    r = ok.shape[1] - 1 - ok[:, ::-1].argmax(axis=1)
    nu_r = nu[rows[:, 0], r]
    Z = np.maximum(Y2 - nu_r[:, None] / W2, 0.0)
    Z /= Z.sum(axis=1, keepdims=True)
    return Z[0] if single else Z
