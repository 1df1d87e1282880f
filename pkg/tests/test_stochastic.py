import csv

import numpy as np
import pytest

from txselect.errors import ConfigError, NoFeasibleProgressError, ValidationError
from txselect.problem import Constraint, StochasticProblem, build_problem, uniform_policy
from txselect.stochastic import McsaConfig, estimate_constraints, mcsa_solve


def test_zero_sigma_estimate_is_exact():
    rng = np.random.default_rng(0)
    mu = rng.normal(size=(3, 2, 3))
    p = StochasticProblem(mu, np.zeros_like(mu), [0.1, -0.2])
    x = uniform_policy(2, 3)
    assert np.allclose(estimate_constraints(x, p, 5, rng), p.constraint_values(x), atol=1e-15)


def test_estimate_arithmetic():
    mu = np.array([[[0.0, 0.0]], [[2.0, 5.0]]])
    p = StochasticProblem(mu, np.zeros_like(mu), [1.0])
    g = estimate_constraints(np.array([[1.0, 0.0]]), p, 50, np.random.default_rng(0))
    assert g.tolist() == [1.0]


def test_estimate_moments():
    rng = np.random.default_rng(1)
    sigma = rng.uniform(0.5, 2.0, size=(2, 3, 4))
    mu = np.zeros_like(sigma)
    p = StochasticProblem(mu, sigma, [0.0])
    x = rng.dirichlet(np.ones(4), size=3)
    L, reps = 7, 10_000
    draws = np.array([estimate_constraints(x, p, L, rng)[0] for _ in range(reps)])
    sd_theory = np.sqrt(np.sum(x**2 * sigma[1] ** 2) / L)
    assert abs(draws.mean()) <= 4 * sd_theory / np.sqrt(reps)
    assert draws.var() == pytest.approx(sd_theory**2, rel=0.05)


def test_unconstrained_argmax():
    mu = np.array([[[1.0, 5.0, 2.0]]])
    p = StochasticProblem(mu, np.zeros_like(mu), [])
    x, trace = mcsa_solve(p, McsaConfig(N=10_000, rescale=False))
    assert x[0, 1] >= 0.99
    assert trace.n_objective_steps == 10_000
    # rescaling divides steps by max |mu| = 5, so the early iterates weigh more
    x, _ = mcsa_solve(p, McsaConfig(N=10_000))
    assert x[0, 1] >= 0.98


def test_objective_steps_and_weighted_average():
    rng = np.random.default_rng(2)
    mu = rng.normal(size=(3, 2, 3))
    c = mu[1:].sum(axis=(1, 2)) / 3 + 0.1
    p = StochasticProblem(mu, 0.3 * np.ones_like(mu), c)
    x, tr = mcsa_solve(p, McsaConfig(N=500, seed=4), record_iterates=True)
    assert tr.n_objective_steps == int(np.sum(tr.step == 0))
    # every iterate lies on the product of simplices
    assert np.all(tr.iterates >= 0)
    assert np.allclose(tr.iterates.sum(axis=2), 1.0, atol=1e-9)
    # the answer is the step-weighted mean of objective-step iterates
    wts = tr.gamma * tr.in_b
    expected = np.einsum("t,tij->ij", wts, tr.iterates) / wts.sum()
    assert np.allclose(x, expected, atol=1e-12)


def test_deterministic_given_seed():
    rng = np.random.default_rng(3)
    mu = rng.normal(size=(2, 3, 3))
    p = StochasticProblem(mu, np.ones_like(mu), [0.0])
    a, _ = mcsa_solve(p, McsaConfig(N=300, seed=9))
    b, _ = mcsa_solve(p, McsaConfig(N=300, seed=9))
    assert np.array_equal(a, b)


def test_infeasible_raises_with_trace():
    mu = np.array([[[1.0, 2.0]], [[10.0, 10.0]]])
    with pytest.raises(NoFeasibleProgressError) as err:
        mcsa_solve(StochasticProblem(mu, np.zeros_like(mu), [5.0]), McsaConfig(N=50))
    assert err.value.trace.n_objective_steps == 0


@pytest.mark.parametrize("bad", [{"N": 0}, {"L": 0}, {"gamma0": 0}, {"prox": "newton"},
                                 {"eta0": -1.0}])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        McsaConfig(**bad).validate()


def test_config_from_dict_rejects_unknown():
    with pytest.raises(ConfigError):
        McsaConfig.from_dict({"steps": 10})


def test_trace_csv(tmp_path):
    mu = np.array([[[1.0, 2.0]], [[0.0, 1.0]]])
    _, tr = mcsa_solve(StochasticProblem(mu, np.zeros_like(mu), [0.5]), McsaConfig(N=20))
    tr.to_csv(tmp_path / "t.csv")
    rows = list(csv.reader(open(tmp_path / "t.csv")))
    assert rows[0] == ["iteration", "objective", "g1", "step", "in_b"]
    assert len(rows) == 21
    assert {r[3] for r in rows[1:]} <= {"objective", "constraint1"}


def test_zero_variance_meets_tolerance():
    rng = np.random.default_rng(5)
    mu = rng.normal(size=(3, 3, 3))
    c = mu[1:].sum(axis=(1, 2)) / 3 + 0.2
    p = StochasticProblem(mu, np.zeros_like(mu), c)
    cfg = McsaConfig(N=4000, prox="adagrad", gamma0=20.0)
    x, _ = mcsa_solve(p, cfg)
    assert np.all(p.constraint_values(x) <= cfg.base_tolerances(c))


def test_adagrad_and_sgd_both_run():
    rng = np.random.default_rng(6)
    mu = rng.normal(size=(2, 4, 5))
    p = StochasticProblem(mu, 0.2 * np.ones_like(mu), [mu[1].mean() * 4])
    for prox in ("sgd", "adagrad"):
        x, _ = mcsa_solve(p, McsaConfig(N=300, prox=prox))
        assert np.allclose(x.sum(axis=1), 1.0)


def test_build_problem_band_and_control():
    tau = np.array([[[0.2, 0.4]], [[0.1, -0.3]]])
    var = np.full_like(tau, 0.01)
    p = build_problem(tau, var, [1.0], [Constraint(1, "band", 0.05)], normalizer=[2.0, 1.0])
    assert p.mu.shape == (3, 1, 3)
    assert p.mu[:, 0, 0].tolist() == [0.0, 0.0, 0.0]
    assert np.allclose(p.mu[0, 0, 1:], [0.1, 0.2])
    assert np.allclose(p.mu[1, 0, 1:], [0.1, -0.3])
    assert np.allclose(p.mu[2, 0, 1:], [-0.1, 0.3])
    assert p.c.tolist() == [0.05, 0.05]
    with pytest.raises(ValidationError):
        Constraint(0)
