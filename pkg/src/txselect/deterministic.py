"""Deterministic (plug-in) assignment LP and its solver.

maximize   x . mu_0
subject to x . mu_k <= c_k            k = 1..K
           sum_j x_ij = 1, x >= 0      every row i

Small and medium instances are solved by a two-phase revised simplex
(Dantzig pricing with a Bland fallback once pivots stall). Large member-level
instances go to HiGHS (interior point followed by crossover to a vertex,
which is far faster than its dual simplex on many loosely coupled rows). Either way the result is certified the same way: the
constraint multipliers give a Lagrangian upper bound
``sum_i max_j (mu_0 - lambda . mu_k)_ij + lambda . c`` and the gap to the
primal objective must vanish.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize, sparse

from .errors import CertificationError, ValidationError
from .problem import _as3d


@dataclass(frozen=True)
class DeterministicProblem:
    mu_hat: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        mu = _as3d(self.mu_hat, "mu_hat")
        c = np.atleast_1d(np.asarray(self.c, dtype=float))
        if c.shape != (mu.shape[0] - 1,):
            raise ValidationError(f"need {mu.shape[0] - 1} thresholds, got {c.shape}")
        if not np.all(np.isfinite(mu)) or not np.all(np.isfinite(c)):
            raise ValidationError("problem data must be finite")
        object.__setattr__(self, "mu_hat", mu)
        object.__setattr__(self, "c", c)

    @property
    def K(self):
        return self.mu_hat.shape[0] - 1

    @property
    def n(self):
        return self.mu_hat.shape[1]

    @property
    def J(self):
        return self.mu_hat.shape[2]

    def objective(self, x):
        return float(np.sum(np.asarray(x) * self.mu_hat[0]))

    def constraint_values(self, x):
        return np.einsum("kij,ij->k", self.mu_hat[1:], np.asarray(x)) - self.c


@dataclass(frozen=True)
class LpSolution:
    x: np.ndarray | None
    objective: float
    duals: np.ndarray  # K constraint multipliers followed by n row multipliers
    gap: float
    status: str
    method: str = "simplex"
    iterations: int = 0

    @property
    def optimal(self):
        return self.status == "optimal"


class _SimplexStall(RuntimeError):
    pass


def _revised_simplex(A, b, cost, basis, allowed, tol=1e-9, max_iter=50_000):
    """Minimize ``cost . x`` s.t. ``A x = b``, ``x >= 0`` from a feasible basis.

    ``allowed`` masks columns that may enter. Returns (basis, x_B, Binv, iters).
    """
    m = A.shape[0]
    Binv = np.linalg.inv(A[:, basis])
    xb = Binv @ b
    degenerate_run = 0
    bland = False
    since_refactor = 0
    for it in range(max_iter):
        y = cost[basis] @ Binv
        d = cost - y @ A
        d[basis] = 0.0
        cand = np.flatnonzero(allowed & (d < -tol))
        if cand.size == 0:
            return basis, xb, Binv, it
        # first index among the most negative (ties -> lowest column)
        q = int(cand[0]) if bland else int(cand[np.argmin(d[cand])])
        u = Binv @ A[:, q]
        pos = u > tol
        if not pos.any():
            raise _SimplexStall("unbounded direction")
        ratios = np.full(m, np.inf)
        ratios[pos] = xb[pos] / u[pos]
        rmin = ratios.min()
        ties = np.flatnonzero(ratios <= rmin + tol * max(1.0, abs(rmin)))
        r = int(ties[np.argmin(np.asarray(basis)[ties])])
        theta = xb[r] / u[r]
        degenerate_run = degenerate_run + 1 if theta <= tol else 0
        bland = bland or degenerate_run > 50
        xb = xb - theta * u
        xb[r] = theta
        # rank-one update of the basis inverse
        piv = Binv[r] / u[r]
        Binv = Binv - np.outer(u, piv)
        Binv[r] = piv
        basis[r] = q
        since_refactor += 1
        if since_refactor >= 100:
            Binv = np.linalg.inv(A[:, basis])
            xb = Binv @ b
            since_refactor = 0
        xb[np.abs(xb) < 1e-13] = 0.0
    raise _SimplexStall("iteration limit reached")


def _standard_form(prob):
    n, J, K = prob.n, prob.J, prob.K
    nx = n * J
    rows_simplex = sparse.kron(sparse.eye(n), np.ones((1, J))).toarray()
    rows_con = prob.mu_hat[1:].reshape(K, nx)
    A = np.zeros((n + K, nx + K))
    A[:n, :nx] = rows_simplex
    A[n:, :nx] = rows_con
    A[n:, nx:] = np.eye(K)
    b = np.concatenate([np.ones(n), prob.c])
    sign = np.ones(n + K)
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1
    sign[neg] = -1
    cost = np.concatenate([-prob.mu_hat[0].ravel(), np.zeros(K)])
    return A, b, cost, sign


def certify(prob, x, lam):
    """Lagrangian duality gap for a primal point ``x`` and multipliers ``lam``."""
    lam = np.maximum(np.asarray(lam, dtype=float), 0.0)
    reduced = prob.mu_hat[0] - np.einsum("k,kij->ij", lam, prob.mu_hat[1:])
    row_best = reduced.max(axis=1)
    dual_obj = float(row_best.sum() + lam @ prob.c)
    primal = prob.objective(x)
    return dual_obj - primal, np.concatenate([lam, row_best])


def _simplex_solve(prob, tol=1e-9):
    n, J, K = prob.n, prob.J, prob.K
    nx = n * J
    A, b, cost, sign = _standard_form(prob)
    m = n + K
    # phase 1: artificials on every row that lacks a usable slack
    art_rows = [r for r in range(m) if r < n or sign[r] < 0]
    n_art = len(art_rows)
    A1 = np.hstack([A, np.zeros((m, n_art))])
    for a, r in enumerate(art_rows):
        A1[r, nx + K + a] = 1.0
    basis = []
    for r in range(m):
        basis.append(nx + K + art_rows.index(r) if r in art_rows else nx + (r - n))
    cost1 = np.zeros(A1.shape[1])
    cost1[nx + K :] = 1.0
    allowed = np.ones(A1.shape[1], dtype=bool)
    basis, xb, Binv, it1 = _revised_simplex(A1, b, cost1, basis, allowed, tol)
    infeas = float(np.sum(xb[np.asarray(basis) >= nx + K]))
    if infeas > 1e-8 * max(1.0, float(np.abs(b).max())):
        y = cost1[basis] @ Binv
        return LpSolution(None, float("nan"), -sign * y, float("nan"), "infeasible", "simplex", it1)

    # drive zero-level artificials out of the basis; drop redundant rows
    keep_rows = np.ones(m, dtype=bool)
    for r in range(m):
        if basis[r] < nx + K:
            continue
        row = Binv[r] @ A1[:, : nx + K]
        row[[c for c in basis if c < nx + K]] = 0.0
        cands = np.flatnonzero(np.abs(row) > 1e-9)
        if cands.size == 0:
            keep_rows[r] = False
            continue
        q = int(cands[0])
        u = Binv @ A1[:, q]
        piv = Binv[r] / u[r]
        Binv = Binv - np.outer(u, piv)
        Binv[r] = piv
        basis[r] = q
    rows = np.flatnonzero(keep_rows)
    A2 = A[rows]
    b2 = b[rows]
    basis2 = [basis[r] for r in rows]
    allowed2 = np.ones(A.shape[1], dtype=bool)
    basis2, xb2, Binv2, it2 = _revised_simplex(A2, b2, cost, basis2, allowed2, tol)
    z = np.zeros(A.shape[1])
    z[basis2] = xb2
    x = np.clip(z[:nx].reshape(n, J), 0.0, 1.0)
    y2 = cost[basis2] @ Binv2
    y = np.zeros(m)
    y[rows] = y2
    lam = -sign[n:] * y[n:]
    return x, lam, it1 + it2


def _highs_solve(prob):
    n, J, K = prob.n, prob.J, prob.K
    nx = n * J
    A_eq = sparse.kron(sparse.eye(n, format="csr"), np.ones((1, J)), format="csr")
    kwargs = {}
    if K:
        kwargs = {"A_ub": prob.mu_hat[1:].reshape(K, nx), "b_ub": prob.c}
    res = optimize.linprog(
        -prob.mu_hat[0].ravel(), A_eq=A_eq, b_eq=np.ones(n), bounds=(0, None),
        method="highs-ipm", **kwargs,
    )
    if res.status == 2:
        return None
    if res.status != 0:
        raise CertificationError(f"HiGHS failed: {res.message}")
    x = np.clip(res.x.reshape(n, J), 0.0, 1.0)
    lam = -np.asarray(res.ineqlin.marginals) if K else np.zeros(0)
    return x, lam, int(res.nit)


def saa_solve(prob, method="auto", simplex_max_size=4000):
    """Solve the plug-in LP and certify optimality by the duality gap.

    ``method`` is ``"simplex"``, ``"highs"`` or ``"auto"`` (simplex when
    ``n * J <= simplex_max_size``). Infeasible systems return
    ``status="infeasible"`` rather than raising.
    """
    if method == "auto":
        method = "simplex" if prob.n * prob.J <= simplex_max_size else "highs"
    if method == "simplex":
        out = _simplex_solve(prob)
        if isinstance(out, LpSolution):
            return out
    elif method == "highs":
        out = _highs_solve(prob)
        if out is None:
            return LpSolution(None, float("nan"), np.zeros(prob.K + prob.n), float("nan"),
                              "infeasible", "highs")
    else:
        raise ValueError(f"unknown LP method {method!r}")
    x, lam, iters = out
    # renormalize rows against round-off before certifying
    x = x / x.sum(axis=1, keepdims=True)
    gap, duals = certify(prob, x, lam)
    obj = prob.objective(x)
    viol = prob.constraint_values(x)
    if viol.size and viol.max() > 1e-8 * max(1.0, float(np.abs(prob.c).max(initial=0.0))):
        raise CertificationError(f"solver returned a point violating constraints by {viol.max():.3g}")
    if gap > 1e-6 * (1.0 + abs(obj)) or gap < -1e-6 * (1.0 + abs(obj)):
        raise CertificationError(f"optimality certificate failed: duality gap {gap:.3g}")
    return LpSolution(x, obj, duals, max(gap, 0.0), "optimal", method, iters)
