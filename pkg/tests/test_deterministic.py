import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import lp_bfs_optimum, random_lp
from txselect.deterministic import DeterministicProblem, certify, saa_solve


def test_argmax_on_simplex():
    sol = saa_solve(DeterministicProblem(np.array([[[1.0, 2.0]]]), []))
    assert sol.optimal
    assert sol.x.tolist() == [[0.0, 1.0]]
    assert sol.objective == 2.0


def test_hand_lp():
    mu = np.array([[[1.0, 2.0]], [[0.0, 10.0]]])
    sol = saa_solve(DeterministicProblem(mu, [5.0]))
    assert sol.x == pytest.approx(np.array([[0.5, 0.5]]))
    assert sol.objective == pytest.approx(1.5)


@pytest.mark.parametrize("method", ["simplex", "highs"])
def test_infeasible_reported(method):
    mu = np.array([[[0.0, 0.0]], [[10.0, 10.0]]])
    sol = saa_solve(DeterministicProblem(mu, [5.0]), method=method)
    assert sol.status == "infeasible"
    assert sol.x is None


def test_k0_decomposes_per_row():
    mu = np.random.default_rng(0).normal(size=(1, 6, 4))
    sol = saa_solve(DeterministicProblem(mu, []))
    assert sol.objective == pytest.approx(mu[0].max(axis=1).sum())
    assert np.array_equal(sol.x.argmax(axis=1), mu[0].argmax(axis=1))


def test_scaling_and_shift_invariance():
    rng = np.random.default_rng(1)
    mu, c = random_lp(rng, n_max=4, K_max=2)
    base = saa_solve(DeterministicProblem(mu, c))
    scaled = mu.copy()
    scaled[0] *= 3.5
    assert saa_solve(DeterministicProblem(scaled, c)).objective == pytest.approx(3.5 * base.objective)
    shift = rng.normal(size=mu.shape[1])
    shifted = mu.copy()
    shifted[0] += shift[:, None]
    assert saa_solve(DeterministicProblem(shifted, c)).objective == pytest.approx(
        base.objective + shift.sum())


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_matches_bfs_enumeration(seed):
    mu, c = random_lp(np.random.default_rng(seed), n_max=3, J_max=3, K_max=2)
    prob = DeterministicProblem(mu, c)
    sol = saa_solve(prob)
    best, _ = lp_bfs_optimum(mu, c)
    assert sol.optimal
    assert sol.objective == pytest.approx(best, abs=1e-6)
    assert sol.gap <= 1e-6 * (1 + abs(sol.objective))
    assert np.all(prob.constraint_values(sol.x) <= 1e-8)


def test_simplex_and_highs_agree():
    rng = np.random.default_rng(7)
    for _ in range(20):
        mu, c = random_lp(rng, n_max=8, J_max=4, K_max=2)
        prob = DeterministicProblem(mu, c)
        a, b = saa_solve(prob, "simplex"), saa_solve(prob, "highs")
        assert a.objective == pytest.approx(b.objective, abs=1e-7)


def test_certificate_detects_suboptimal_point():
    mu = np.array([[[1.0, 2.0]], [[0.0, 10.0]]])
    prob = DeterministicProblem(mu, [5.0])
    sol = saa_solve(prob)
    gap_opt, _ = certify(prob, sol.x, sol.duals[:1])
    gap_bad, _ = certify(prob, np.array([[1.0, 0.0]]), sol.duals[:1])
    assert gap_opt == pytest.approx(0, abs=1e-9)
    assert gap_bad == pytest.approx(0.5)


def test_degenerate_ties_terminate():
    # many identical columns: Bland fallback must still terminate
    mu = np.ones((3, 5, 4))
    sol = saa_solve(DeterministicProblem(mu, [5.0, 5.0]))
    assert sol.optimal
    assert sol.objective == pytest.approx(5.0)
