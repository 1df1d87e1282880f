import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import grid_projection
from txselect.projection import project_simplex, project_simplex_weighted
from txselect.stochastic import ProxState, prox_project


def test_hand_example():
    assert project_simplex([0.8, 0.6]) == pytest.approx([0.6, 0.4])


def test_vertex_clamp():
    assert project_simplex([2.0, 0.0]) == pytest.approx([1.0, 0.0])


def test_hand_example_matches_grid():
    z, _ = grid_projection(np.array([0.8, 0.6]), np.ones(2), steps=1000)
    assert z == pytest.approx([0.6, 0.4], abs=1e-3)


@settings(max_examples=60, deadline=None)
@given(
    y=arrays(float, st.integers(2, 3), elements=st.floats(-2, 2)),
    seed=st.integers(0, 1000),
)
def test_weighted_projection_beats_grid(y, seed):
    w = np.random.default_rng(seed).uniform(0.2, 3.0, size=y.size)
    z = project_simplex_weighted(y, w)
    assert z.min() >= 0 and z.sum() == pytest.approx(1.0, abs=1e-12)
    _, best = grid_projection(y, w, steps=120)
    # the exact projection is at least as good as every grid point
    assert ((z - y) ** 2 * w).sum() <= best + 1e-12


@settings(max_examples=60, deadline=None)
@given(Y=arrays(float, (4, 5), elements=st.floats(-5, 5)))
def test_projection_lands_on_simplex(Y):
    Z = project_simplex(Y)
    assert np.all(Z >= 0)
    assert np.allclose(Z.sum(axis=1), 1.0, atol=1e-12)
    # projection of a simplex point is the point itself
    assert np.allclose(project_simplex(Z), Z, atol=1e-12)


def test_unit_weights_match_euclidean():
    Y = np.random.default_rng(0).normal(size=(50, 4))
    assert np.allclose(project_simplex_weighted(Y, np.ones_like(Y)), project_simplex(Y), atol=1e-12)


def test_weights_must_be_positive():
    with pytest.raises(ValueError):
        project_simplex_weighted([0.5, 0.5], [1.0, 0.0])


def test_zero_step_is_identity():
    x = np.array([[0.2, 0.3, 0.5], [1.0, 0.0, 0.0]])
    assert np.allclose(prox_project(x, np.zeros_like(x), 0.7), x)
    assert np.allclose(prox_project(x, np.zeros_like(x), 0.7, ProxState("adagrad")), x)


def test_adagrad_accumulates_chosen_gradients():
    x = np.full((1, 2), 0.5)
    state = ProxState("adagrad", delta=1e-6, shape=x.shape)
    h = np.array([[1.0, -1.0]])
    prox_project(x, h, 0.1, state)
    prox_project(x, 2 * h, 0.1, state)
    assert np.allclose(state.sq, [[5.0, 5.0]])
