import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from txselect.cohorts import Cohort, CohortSet, EffectEstimate, Predicate, assign_cohort
from txselect.errors import ValidationError


def halves(feature=0, t=0.0, n_features=1):
    return CohortSet(
        (Cohort("L", (Predicate(feature, "<", t),)), Cohort("R", (Predicate(feature, ">=", t),))),
        n_features,
    )


def test_assign_left():
    assert assign_cohort(halves(), [-1.0]) == 0


def test_boundary_goes_right():
    assert assign_cohort(halves(t=0.25), [0.25]) == 1


def test_gap_detected():
    cs = CohortSet((Cohort("a", (Predicate(0, "<", 0.0),)), Cohort("b", (Predicate(0, ">=", 1.0),))), 1)
    with pytest.raises(ValidationError):
        cs.assign([[0.5]])


def test_overlap_detected():
    cs = CohortSet((Cohort("a", (Predicate(0, "<", 1.0),)), Cohort("b", (Predicate(0, ">=", 0.0),))), 1)
    with pytest.raises(ValidationError):
        cs.check_partition(np.array([[-5.0], [5.0]]))


def test_dimension_mismatch():
    with pytest.raises(ValidationError):
        halves().assign(np.zeros((2, 3)))


def grid_partition(xs, ys):
    """Cartesian product of interval cuts on two features."""
    bx = [-np.inf, *xs, np.inf]
    by = [-np.inf, *ys, np.inf]
    cohorts = []
    for i in range(len(bx) - 1):
        for j in range(len(by) - 1):
            cohorts.append(Cohort.from_bounds(f"c{i}{j}", [bx[i], by[j]], [bx[i + 1], by[j + 1]]))
    return CohortSet(tuple(cohorts), 2)


@settings(max_examples=50, deadline=None)
@given(
    xs=st.lists(st.floats(-3, 3), max_size=4, unique=True).map(sorted),
    ys=st.lists(st.floats(-3, 3), max_size=4, unique=True).map(sorted),
    seed=st.integers(0, 10_000),
)
def test_assign_matches_predicate_scan(xs, ys, seed):
    cs = grid_partition(xs, ys)
    rng = np.random.default_rng(seed)
    X = rng.uniform(-4, 4, size=(300, 2))
    # include exact thresholds to exercise the >= convention
    if xs:
        X[:len(xs), 0] = xs
    M = cs.membership(X)
    assert (M.sum(axis=1) == 1).all()
    assert np.array_equal(cs.assign(X), M.argmax(axis=1))


def test_intersection_and_emptiness():
    a = Cohort("a", (Predicate(0, "<", 1.0),))
    b = Cohort("b", (Predicate(0, ">=", 1.0),))
    assert a.intersect(b, 1).is_empty(1)
    c = Cohort("c", (Predicate(0, ">=", 0.0),))
    ac = a.intersect(c, 1)
    assert not ac.is_empty(1)
    assert ac.contains([[0.5]])[0] and not ac.contains([[1.0]])[0]


def test_serialization_round_trip():
    cs = grid_partition([0.0, 1.5], [-1.0])
    assert CohortSet.from_dict(cs.to_dict()) == cs


def test_effect_variance_formula():
    rng = np.random.default_rng(0)
    yt, yc = rng.normal(1, 2, 40), rng.normal(0, 1, 30)
    e = EffectEstimate.from_samples(yt, yc)
    assert e.tau == pytest.approx(yt.mean() - yc.mean(), rel=1e-12)
    assert e.var == pytest.approx(e.var_treat / e.n_treat + e.var_control / e.n_control, rel=1e-12)
    assert e.var_treat == pytest.approx(np.var(yt, ddof=1))
    assert EffectEstimate.from_dict(e.to_dict()) == e
