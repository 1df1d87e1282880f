"""Assignment problems over a product of probability simplices.

Arrays are laid out as ``(metric, cohort, treatment)``; metric 0 is the
objective to maximize and metrics 1..K enter constraints
``x . mu_k <= c_k``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


def _as3d(a, name):
    a = np.asarray(a, dtype=float)
    if a.ndim == 2:
        a = a[None]
    if a.ndim != 3:
        raise ValidationError(f"{name} must have shape (K+1, n, J)")
    return a


@dataclass(frozen=True)
class StochasticProblem:
    """Effects ``U_k ~ Normal(mu_k, diag(sigma_k**2))``, maximize ``E[x.U_0]``
    subject to ``E[x.U_k] - c_k <= 0``."""

    mu: np.ndarray
    sigma: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        mu = _as3d(self.mu, "mu")
        sigma = _as3d(self.sigma, "sigma")
        c = np.atleast_1d(np.asarray(self.c, dtype=float))
        if sigma.shape != mu.shape:
            raise ValidationError("mu and sigma shapes differ")
        if np.any(sigma < 0) or not np.all(np.isfinite(sigma)):
            raise ValidationError("sigma must be finite and non-negative")
        if not np.all(np.isfinite(mu)):
            raise ValidationError("mu must be finite")
        if c.shape != (mu.shape[0] - 1,):
            raise ValidationError(f"need {mu.shape[0] - 1} thresholds, got {c.shape}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "c", c)

    @property
    def K(self):
        return self.mu.shape[0] - 1

    @property
    def n(self):
        return self.mu.shape[1]

    @property
    def J(self):
        return self.mu.shape[2]

    def objective(self, x):
        return float(np.sum(np.asarray(x) * self.mu[0]))

    def constraint_values(self, x):
        """``x . mu_k - c_k`` for k = 1..K."""
        return np.einsum("kij,ij->k", self.mu[1:], np.asarray(x)) - self.c

    def deterministic(self):
        from .deterministic import DeterministicProblem

        return DeterministicProblem(self.mu, self.c)


def uniform_policy(n, J):
    return np.full((n, J), 1.0 / J)


def check_policy(x, atol=1e-9):
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ValidationError("policy must be a 2-D (rows, arms) array")
    if np.any(x < -atol) or np.any(x > 1 + atol):
        raise ValidationError("policy entries must lie in [0, 1]")
    if not np.allclose(x.sum(axis=1), 1.0, atol=atol):
        raise ValidationError("policy rows must sum to 1")
    return x


@dataclass(frozen=True)
class Constraint:
    """Guardrail on the population-average normalized effect of ``metric``.

    ``direction`` is ``"le"`` (effect <= threshold), ``"ge"`` (effect >=
    threshold) or ``"band"`` (|effect| <= threshold).
    """

    metric: int
    direction: str = "band"
    threshold: float = 0.0

    def __post_init__(self):
        if self.direction not in ("le", "ge", "band"):
            raise ValidationError(f"unknown constraint direction {self.direction!r}")
        if self.metric < 1:
            raise ValidationError("constraints apply to guardrail metrics (index >= 1)")
        if self.direction == "band" and self.threshold < 0:
            raise ValidationError("band half-width must be non-negative")

    def rows(self):
        """``(metric, sign, bound)`` triples meaning ``sign * effect <= bound``."""
        if self.direction == "le":
            return [(self.metric, 1.0, self.threshold)]
        if self.direction == "ge":
            return [(self.metric, -1.0, -self.threshold)]
        return [(self.metric, 1.0, self.threshold), (self.metric, -1.0, self.threshold)]

    def to_dict(self):
        return {"metric": self.metric, "direction": self.direction, "threshold": self.threshold}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["metric"]), d.get("direction", "band"), float(d.get("threshold", 0.0)))


def constraint_rows(constraints):
    return [row for c in constraints for row in c.rows()]


def build_problem(tau, var, weights, constraints, normalizer=None):
    """Stochastic problem over arms ``0..J`` (control first, zero effect).

    ``tau``/``var`` have shape ``(K+1, n, J)`` in raw metric units;
    ``weights`` are population shares per row (summing to 1) so that
    ``x . mu_0`` is the population-average effect. ``normalizer`` divides
    each metric (typically the control-group mean) so that thresholds are
    relative effects.
    """
    tau = np.asarray(tau, dtype=float)
    var = np.asarray(var, dtype=float)
    Km1, n, J = tau.shape
    w = np.asarray(weights, dtype=float).reshape(1, n, 1)
    norm = np.ones(Km1) if normalizer is None else np.asarray(normalizer, dtype=float)
    if np.any(norm == 0):
        raise ValidationError("normalizer must be non-zero")
    scale = w / np.abs(norm)[:, None, None]
    sgn = np.sign(norm)[:, None, None]
    mu_m = np.concatenate([np.zeros((Km1, n, 1)), sgn * tau * scale], axis=2)
    sd_m = np.concatenate([np.zeros((Km1, n, 1)), np.sqrt(np.maximum(var, 0)) * scale], axis=2)
    rows = constraint_rows(constraints)
    mu = [mu_m[0]] + [s * mu_m[k] for k, s, _ in rows]
    sd = [sd_m[0]] + [sd_m[k] for k, _, _ in rows]
    c = [b for _, _, b in rows]
    return StochasticProblem(np.stack(mu), np.stack(sd), np.array(c))
