"""Parametric bootstrap of the optimal assignment, and log-odds bias correction.

Instead of resampling members, each replicate redraws the effect means and
per-arm variances from their sampling distributions:

    mu_b        = mu_hat + sqrt((var_treat + var_control) / (n_treat + n_control)) * Z
    var_treat_b = var_treat * X / n_treat,      X  ~ chi2(n_treat - 1)
    var_ctrl_b  = var_control * X' / n_control, X' ~ chi2(n_control - 1)

and the assignment problem is re-solved on the redrawn inputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BootstrapUnstableError, InfeasibleError, ValidationError

EPS_FLOOR = 1e-6
DENSE_COV_LIMIT = 10_000


@dataclass(frozen=True)
class BootstrapInput:
    """Arrays of shape ``(K+1, n, J)`` (metric, cohort, treatment).

    ``solver(mu, var_treat, var_control, n_treat, n_control) -> x`` maps a
    (possibly redrawn) set of estimates to an assignment matrix.
    """

    mu_hat: np.ndarray
    var_treat: np.ndarray
    var_control: np.ndarray
    n_treat: np.ndarray
    n_control: np.ndarray
    solver: object
    B: int = 200
    seed: int = 0
    means_only: bool = False
    max_failure_rate: float = 0.2

    def __post_init__(self):
        arrs = {}
        for name in ("mu_hat", "var_treat", "var_control", "n_treat", "n_control"):
            arrs[name] = np.asarray(getattr(self, name), dtype=float)
        shape = arrs["mu_hat"].shape
        for name, a in arrs.items():
            if a.shape != shape:
                raise ValidationError(f"{name} has shape {a.shape}, expected {shape}")
        if np.any(arrs["n_treat"] < 2) or np.any(arrs["n_control"] < 2):
            raise ValidationError("every cell needs at least 2 treated and 2 control units")
        if np.any(arrs["var_treat"] < 0) or np.any(arrs["var_control"] < 0):
            raise ValidationError("variances must be non-negative")
        if self.B < 1:
            raise ValidationError("B must be at least 1")
        for name, a in arrs.items():
            object.__setattr__(self, name, a)

    @property
    def n_total(self):
        return self.n_treat + self.n_control


@dataclass
class BootstrapResult:
    x_hat: np.ndarray
    x_bar: np.ndarray
    var_hat: np.ndarray  # (nJ, nJ), or its diagonal for very large problems
    bias_hat: np.ndarray
    x_corrected: np.ndarray | None = None
    failures: int = 0
    b_solutions: np.ndarray | None = field(default=None, repr=False)

    def report(self):
        n, J = self.x_hat.shape
        diag = self.var_hat if self.var_hat.ndim == 1 else np.diag(self.var_hat)
        return {
            "bias": self.bias_hat.reshape(n, J).tolist(),
            "variance_diagonal": diag.reshape(n, J).tolist(),
            "bias_l1_per_row": np.abs(self.bias_hat.reshape(n, J)).sum(axis=1).tolist(),
            "failures": self.failures,
        }

    def write_report(self, path):
        Path(path).write_text(json.dumps(self.report(), indent=2, sort_keys=True))


def _replicate_rng(seed, b):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(b)]))


def _control_shared(n_control, var_control):
    """Control draws are shared across treatments when the control inputs
    coincide for every treatment of a (metric, cohort) cell."""
    return bool(
        np.all(n_control == n_control[..., :1]) and np.all(var_control == var_control[..., :1])
    )


def resample_estimates(inp, b, rng=None):
    """Replicate ``b``: returns ``(mu_b, var_treat_b, var_control_b)``.

    The redrawn per-unit variance of the difference is ``var_treat_b +
    var_control_b``. Draws depend only on ``(inp.seed, b)`` unless an
    explicit ``rng`` is passed.
    """
    rng = rng if rng is not None else _replicate_rng(inp.seed, b)
    z = rng.standard_normal(inp.mu_hat.shape)
    sd = np.sqrt((inp.var_treat + inp.var_control) / inp.n_total)
    mu_b = inp.mu_hat + sd * z
    if inp.means_only:
        return mu_b, inp.var_treat.copy(), inp.var_control.copy()
    x_t = rng.chisquare(inp.n_treat - 1)
    if _control_shared(inp.n_control, inp.var_control):
        x_c = np.broadcast_to(rng.chisquare(inp.n_control[..., :1] - 1), inp.mu_hat.shape)
    else:
        x_c = rng.chisquare(inp.n_control - 1)
    var_t_b = inp.var_treat * x_t / inp.n_treat
    var_c_b = inp.var_control * x_c / inp.n_control
    return mu_b, var_t_b, var_c_b


def bootstrap_assignments(inp, x_hat=None, keep_samples=False):
    """Re-solve on ``B`` replicates; return mean, covariance and bias.

    ``bias = mean_b(x_b) - x_hat``. Replicates whose solve raises an
    infeasibility error are skipped; more than ``max_failure_rate`` of them
    raises :class:`BootstrapUnstableError`.
    """
    if x_hat is None:
        x_hat = inp.solver(inp.mu_hat, inp.var_treat, inp.var_control, inp.n_treat, inp.n_control)
    x_hat = np.asarray(x_hat, dtype=float)
    sols, failures = [], 0
    for b in range(inp.B):
        mu_b, vt_b, vc_b = resample_estimates(inp, b)
        try:
            sols.append(np.asarray(inp.solver(mu_b, vt_b, vc_b, inp.n_treat, inp.n_control), dtype=float))
        except InfeasibleError:
            failures += 1
    if failures > inp.max_failure_rate * inp.B or not sols:
        raise BootstrapUnstableError(
            f"{failures} of {inp.B} bootstrap re-solves failed"
        )
    S = np.stack([s.ravel() for s in sols])
    # moments of deviations from x_hat, so replicates equal to x_hat give exact zeros
    D0 = S - x_hat.ravel()
    bias = D0.mean(axis=0)
    x_bar = x_hat.ravel() + bias
    D = D0 - bias
    if S.shape[1] <= DENSE_COV_LIMIT:
        var_hat = D.T @ D / S.shape[0]
    else:
        var_hat = (D * D).mean(axis=0)
    return BootstrapResult(
        x_hat=x_hat,
        x_bar=x_bar.reshape(x_hat.shape),
        var_hat=var_hat,
        bias_hat=bias,
        failures=failures,
        b_solutions=S.reshape(-1, *x_hat.shape) if keep_samples else None,
    )


def _log_odds(p):
    p = np.maximum(np.asarray(p, dtype=float), EPS_FLOOR)
    p = p / p.sum(axis=-1, keepdims=True)
    lp = np.log(p)
    return lp - lp.mean(axis=-1, keepdims=True)


def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def bias_correct(x_hat, bias):
    """Subtract ``bias`` on the centered log-odds scale, row by row.

    ``x_bar = x_hat + bias`` is mapped to log-odds along with ``x_hat``; the
    corrected row is ``softmax(2 * lo(x_hat) - lo(x_bar))``. Probabilities
    are floored at 1e-6 before taking logs.
    """
    x_hat = np.atleast_2d(np.asarray(x_hat, dtype=float))
    x_bar = x_hat + np.asarray(bias, dtype=float).reshape(x_hat.shape)
    lo_hat = _log_odds(x_hat)
    lo_bar = _log_odds(x_bar)
    return _softmax(lo_hat - (lo_bar - lo_hat))


def run_bootstrap(inp, x_hat=None, keep_samples=False):
    """Bootstrap and attach the bias-corrected assignment."""
    res = bootstrap_assignments(inp, x_hat, keep_samples)
    res.x_corrected = bias_correct(res.x_hat, res.bias_hat)
    return res
