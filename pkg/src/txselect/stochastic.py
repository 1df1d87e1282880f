"""Stochastic approximation with multiple expectation constraints.

Each iteration estimates every constraint from ``L`` fresh effect draws.
If all estimates sit within their tolerances the step follows a stochastic
gradient of the objective; otherwise it follows the stochastic gradient of
one violated constraint picked uniformly at random. Steps are proximal
(Bregman) projections onto the product of simplices, either Euclidean
(``"sgd"``) or with the diagonal Adagrad metric (``"adagrad"``). The answer is
the step-size weighted average of the iterates where the objective was
followed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, NoFeasibleProgressError
from .problem import StochasticProblem, uniform_policy
from .projection import project_simplex, project_simplex_weighted


@dataclass(frozen=True)
class McsaConfig:
    N: int = 2000
    L: int = 50
    gamma0: float = 1.0
    # per-constraint base tolerance; None -> 0.05 * |c_k| + 0.01
    eta0: tuple[float, ...] | float | None = None
    prox: str = "sgd"
    delta: float = 1e-6
    seed: int = 0
    # divide each metric by its largest |mu|/sigma before iterating
    rescale: bool = True

    def validate(self):
        if self.N < 1 or self.L < 1:
            raise ConfigError("N and L must be at least 1")
        if self.gamma0 <= 0:
            raise ConfigError("gamma0 must be positive")
        if self.prox not in ("sgd", "adagrad"):
            raise ConfigError(f"unknown prox {self.prox!r}; use 'sgd' or 'adagrad'")
        if self.delta <= 0:
            raise ConfigError("delta must be positive")
        if self.eta0 is not None and np.any(np.asarray(self.eta0, dtype=float) < 0):
            raise ConfigError("eta0 must be non-negative")
        return self

    def base_tolerances(self, c):
        c = np.asarray(c, dtype=float)
        if self.eta0 is None:
            return 0.05 * np.abs(c) + 0.01
        return np.broadcast_to(np.asarray(self.eta0, dtype=float), c.shape).copy()

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if isinstance(d.get("eta0"), list):
            d["eta0"] = tuple(d["eta0"])
        try:
            return cls(**d).validate()
        except TypeError as exc:
            raise ConfigError(f"optimizer config: {exc}") from None


@dataclass
class McsaTrace:
    """Per-iteration record. ``step`` is 0 for an objective step and ``k``
    (1-based) when constraint ``k`` was followed."""

    step: np.ndarray
    g_hat: np.ndarray
    objective: np.ndarray
    in_b: np.ndarray
    gamma: np.ndarray
    eta: np.ndarray = field(default=None)
    # (N, n, J) iterates x_t before each step; only kept on request
    iterates: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_objective_steps(self):
        return int(self.in_b.sum())

    def to_csv(self, path):
        K = self.g_hat.shape[1]
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "objective", *[f"g{k + 1}" for k in range(K)], "step", "in_b"])
            for t in range(len(self.step)):
                kind = "objective" if self.step[t] == 0 else f"constraint{self.step[t]}"
                w.writerow([t + 1, repr(float(self.objective[t])),
                            *[repr(float(g)) for g in self.g_hat[t]], kind, int(self.in_b[t])])

    def summary(self):
        return {
            "iterations": int(len(self.step)),
            "objective_steps": self.n_objective_steps,
            "constraint_steps": {
                int(k): int(np.sum(self.step == k)) for k in np.unique(self.step) if k > 0
            },
            "final_objective": float(self.objective[-1]) if len(self.objective) else None,
        }


def estimate_constraints(x, problem, L, rng):
    """Monte Carlo constraint estimates ``mean_l(x . U_kl) - c_k``.

    The mean of ``L`` independent ``Normal(mu, diag sigma**2)`` draws is
    itself ``Normal(mu, diag sigma**2 / L)``, so one draw at that scale is
    taken instead of ``L``; the estimator's distribution is unchanged.
    """
    if problem.K == 0:
        return np.zeros(0)
    x = np.asarray(x, dtype=float)
    mu, sig = problem.mu[1:], problem.sigma[1:]
    if not sig.any():
        return (mu * x).sum(axis=(1, 2)) - problem.c
    u_bar = mu + sig * rng.standard_normal(mu.shape) / math.sqrt(L)
    return np.einsum("kij,ij->k", u_bar, x) - problem.c


class ProxState:
    """Bregman geometry for the proximal step; holds Adagrad's accumulator."""

    def __init__(self, kind="sgd", delta=1e-6, shape=None):
        self.kind = kind
        self.delta = delta
        self.sq = None if shape is None else np.zeros(shape)


def prox_project(x, h, gamma, state=None):
    """``argmin_{z in X} <gamma h, z> + B(z, x)`` row by row.

    For ``psi(z) = z.z`` the Bregman term is ``|z - x|^2`` and the step is a
    Euclidean projection of ``x - gamma h / 2``. For Adagrad,
    ``psi_t(z) = z.H_t z`` with ``H_t = delta + sqrt(sum of squared chosen
    gradients)`` (diagonal), giving an ``H_t``-weighted projection of
    ``x - gamma h / (2 H_t)``. The accumulator is updated with ``h`` first.
    """
    state = state or ProxState()
    x = np.asarray(x, dtype=float)
    h = np.asarray(h, dtype=float)
    if state.kind == "sgd":
        return project_simplex(x - 0.5 * gamma * h)
    if state.sq is None:
        state.sq = np.zeros_like(x)
    state.sq += h * h
    H = state.delta + np.sqrt(state.sq)
    return project_simplex_weighted(x - 0.5 * gamma * h / H, H)


def _scales(problem):
    s = np.maximum(np.abs(problem.mu).max(axis=(1, 2)), problem.sigma.max(axis=(1, 2)))
    return np.where(s > 0, s, 1.0)


def mcsa_solve(problem, cfg=None, x0=None, record_iterates=False):
    """Run the cooperative stochastic approximation loop.

    Returns ``(x_hat, trace)`` with ``x_hat`` of shape ``(n, J)``. Step size
    and tolerances are held constant at ``gamma0 / sqrt(N)`` and
    ``eta0 / sqrt(N)``. Raises :class:`NoFeasibleProgressError` (carrying the
    trace) when no iterate passed the constraint check. With
    ``record_iterates`` the trace also keeps every iterate.
    """
    cfg = (cfg or McsaConfig()).validate()
    rng = np.random.default_rng(cfg.seed)
    N = cfg.N
    scale = _scales(problem) if cfg.rescale else np.ones(problem.K + 1)
    p = StochasticProblem(
        problem.mu / scale[:, None, None],
        problem.sigma / scale[:, None, None],
        problem.c / scale[1:],
    )
    gamma = cfg.gamma0 / math.sqrt(N)
    eta = cfg.base_tolerances(problem.c) / math.sqrt(N)
    eta_scaled = eta / scale[1:]

    x = uniform_policy(p.n, p.J) if x0 is None else np.array(x0, dtype=float)
    state = ProxState(cfg.prox, cfg.delta, x.shape)
    step = np.zeros(N, dtype=np.int64)
    g_hat = np.zeros((N, p.K))
    obj = np.zeros(N)
    in_b = np.zeros(N, dtype=bool)
    acc = np.zeros_like(x)
    weight = 0.0
    mu0, sig0 = p.mu[0], p.sigma[0]
    has_noise = bool(np.any(p.sigma > 0))
    iterates = np.empty((N, *x.shape)) if record_iterates else None

    mu_k, c_k = p.mu[1:], p.c
    for t in range(N):
        if has_noise:
            g = estimate_constraints(x, p, cfg.L, rng)
        else:
            g = (mu_k * x).sum(axis=(1, 2)) - c_k
        g_hat[t] = g * scale[1:]
        if iterates is not None:
            iterates[t] = x
        obj[t] = float(np.sum(x * problem.mu[0]))
        violated = np.flatnonzero(g > eta_scaled)
        if violated.size == 0:
            in_b[t] = True
            acc += gamma * x
            weight += gamma
            u = mu0 + sig0 * rng.standard_normal(mu0.shape) if has_noise else mu0
            h = -u
        else:
            k = int(violated[rng.integers(violated.size)]) if violated.size > 1 else int(violated[0])
            step[t] = k + 1
            uk = p.mu[k + 1]
            if has_noise:
                uk = uk + p.sigma[k + 1] * rng.standard_normal(uk.shape)
            h = uk
        x = prox_project(x, h, gamma, state)

    trace = McsaTrace(step, g_hat, obj, in_b, np.full(N, gamma), eta, iterates)
    if weight == 0.0:
        raise NoFeasibleProgressError(
            "no iterate satisfied the constraint tolerances; the problem may be "
            "infeasible or the tolerances too tight",
            trace,
        )
    return acc / weight, trace
