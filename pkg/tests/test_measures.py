import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmmlab import (
    Coupling,
    DomainError,
    FiniteMeasure,
    FiniteSpace,
    disjoint_union,
    prohorov_distance,
    prohorov_feasible,
    rectangular_completion,
    restrict,
    variational_distance,
)
from mmmlab.generators import random_measure, random_metric_space, random_rational_measure
from mmmlab.reference import prohorov_bruteforce

TOL = 1e-9


def two_point_space(d=0.3):
    return FiniteSpace(["x", "y"], [[0.0, d], [d, 0.0]])


def test_variational_identical_is_zero():
    sp = two_point_space()
    mu = FiniteMeasure(sp, [0.2, 0.5])
    assert variational_distance(mu, mu) == 0.0


def test_variational_dominated_is_mass_gap():
    # for dominated measures the distance is the difference of total masses
    sp = two_point_space()
    mu = FiniteMeasure(sp, [0.1, 0.5])
    nu = FiniteMeasure(sp, [0.4, 0.6])
    assert variational_distance(mu, nu) == pytest.approx(0.4, abs=1e-15)


def test_variational_disjoint_supports():
    sp = two_point_space()
    mu = FiniteMeasure(sp, [1.0, 0.0])
    nu = FiniteMeasure(sp, [0.0, 1.0])
    # oracle: enumerate all four subsets
    best = 0.0
    for mask in range(4):
        sel = np.array([mask & 1, mask >> 1], dtype=bool)
        best = max(best, abs(mu.mass[sel].sum() - nu.mass[sel].sum()))
    assert best == 1.0
    assert variational_distance(mu, nu) == best


def test_variational_requires_same_space():
    mu = FiniteMeasure(two_point_space(), [1, 0])
    nu = FiniteMeasure(two_point_space(0.4), [1, 0])
    with pytest.raises(DomainError):
        variational_distance(mu, nu)


@settings(deadline=None, max_examples=60)
@given(
    st.lists(st.floats(0, 10), min_size=2, max_size=5),
    st.lists(st.floats(0, 10), min_size=2, max_size=5),
    st.lists(st.floats(0, 10), min_size=2, max_size=5),
)
def test_variational_metric_axioms(a, b, c):
    n = min(len(a), len(b), len(c))
    sp = FiniteSpace([f"p{i}" for i in range(n)], np.ones((n, n)) - np.eye(n))
    mu, nu, rho = (FiniteMeasure(sp, v[:n]) for v in (a, b, c))
    assert variational_distance(mu, nu) == variational_distance(nu, mu)
    assert variational_distance(mu, rho) <= (
        variational_distance(mu, nu) + variational_distance(nu, rho) + 1e-12
    )


def test_restrict_full_and_empty():
    sp = two_point_space()
    mu = FiniteMeasure(sp, [0.3, 0.7])
    assert restrict(mu, [0, 1]) == mu
    assert restrict(mu, []).total == 0.0


def test_restrict_complement_mass():
    sp = two_point_space()
    mu = FiniteMeasure(sp, [0.3, 0.7])
    kept = restrict(mu, ["x"])
    assert kept.mass.tolist() == [0.3, 0.0]
    assert variational_distance(kept, mu) == pytest.approx(0.7, abs=1e-15)


def test_feasible_identity_coupling():
    sp = two_point_space()
    mu = FiniteMeasure(sp, [0.4, 0.6])
    ok, xi = prohorov_feasible(mu, mu, 1e-6)
    assert ok and not xi.violations(mu, mu, 1e-6)


def test_feasible_point_masses_threshold():
    sp = two_point_space(0.3)
    mu = FiniteMeasure(sp, [1.0, 0.0])
    nu = FiniteMeasure(sp, [0.0, 1.0])
    ok, _ = prohorov_feasible(mu, nu, 0.2)
    assert not ok  # no admissible edge and a unit of mass to move
    ok, xi = prohorov_feasible(mu, nu, 0.31)
    assert ok
    assert xi.matrix.tolist() == [[1.0]]


def test_feasible_rejects_bad_eps():
    sp = two_point_space()
    mu = FiniteMeasure(sp, [1.0, 0.0])
    with pytest.raises(DomainError):
        prohorov_feasible(mu, mu, 0.0)


def test_distance_point_masses():
    sp = two_point_space(0.3)
    mu = FiniteMeasure(sp, [1.0, 0.0])
    nu = FiniteMeasure(sp, [0.0, 1.0])
    value, xi = prohorov_distance(mu, nu)
    assert abs(value - 0.3) <= TOL
    assert abs(value - prohorov_bruteforce(mu, nu)) <= TOL
    assert not xi.violations(mu, nu, value)


def test_distance_mass_gap():
    sp = two_point_space(0.3)
    mu = FiniteMeasure(sp, [1.0, 0.0])
    nu = FiniteMeasure(sp, [0.6, 0.0])
    value, _ = prohorov_distance(mu, nu)
    assert abs(value - 0.4) <= TOL
    assert abs(value - prohorov_bruteforce(mu, nu)) <= TOL


def test_distance_identical_measures():
    sp = two_point_space()
    mu = FiniteMeasure(sp, [0.4, 0.6])
    value, _ = prohorov_distance(mu, mu)
    assert value <= TOL


def test_distance_rejects_bad_tol():
    sp = two_point_space()
    mu = FiniteMeasure(sp, [1.0, 0.0])
    with pytest.raises(DomainError):
        prohorov_distance(mu, mu, tol=0.0)


def test_distance_two_sided_certificate():
    rng = np.random.default_rng(5)
    for _ in range(15):
        sp = random_metric_space(rng, int(rng.integers(2, 6)))
        mu = random_measure(rng, sp)
        nu = random_measure(rng, sp)
        value, xi = prohorov_distance(mu, nu)
        assert prohorov_feasible(mu, nu, value)[0]
        if value - TOL > 0:
            assert not prohorov_feasible(mu, nu, value - TOL)[0]
        assert not xi.violations(mu, nu, value)


def test_distance_matches_bruteforce_on_rationals():
    rng = np.random.default_rng(11)
    for _ in range(30):
        sp = random_metric_space(rng, int(rng.integers(2, 6)))
        mu = random_rational_measure(rng, sp)
        nu = random_rational_measure(rng, sp)
        value, _ = prohorov_distance(mu, nu)
        assert abs(value - prohorov_bruteforce(mu, nu)) <= 1e-6


def test_distance_below_variational():
    rng = np.random.default_rng(13)
    for _ in range(25):
        sp = random_metric_space(rng, int(rng.integers(2, 6)))
        mu = random_measure(rng, sp)
        nu = random_measure(rng, sp)
        assert prohorov_distance(mu, nu)[0] <= variational_distance(mu, nu) + TOL


def test_pseudometric_axioms():
    rng = np.random.default_rng(17)
    for _ in range(20):
        sp = random_metric_space(rng, int(rng.integers(2, 5)))
        mu, nu, rho = (random_measure(rng, sp) for _ in range(3))
        d12 = prohorov_distance(mu, nu)[0]
        d21 = prohorov_distance(nu, mu)[0]
        d13 = prohorov_distance(mu, rho)[0]
        d23 = prohorov_distance(nu, rho)[0]
        assert abs(d12 - d21) <= 2 * TOL
        assert d13 <= d12 + d23 + 3 * TOL


def test_rectangular_identity_submeasure():
    sp = two_point_space()
    mu1 = FiniteMeasure(sp, [0.5, 0.5])
    mu2 = FiniteMeasure(sp, [0.4, 0.6])
    delta = prohorov_distance(mu1, mu2)[0] + 1e-6
    _, xi = prohorov_feasible(mu1, mu2, delta)
    out = rectangular_completion(mu1, mu1, mu2, xi, eps=1e-9)
    assert np.allclose(out.mass, mu2.mass, atol=1e-12)


def test_rectangular_zero_submeasure():
    sp = two_point_space()
    mu1 = FiniteMeasure(sp, [0.5, 0.5])
    mu2 = FiniteMeasure(sp, [0.4, 0.6])
    delta = prohorov_distance(mu1, mu2)[0] + 1e-6
    _, xi = prohorov_feasible(mu1, mu2, delta)
    zero = FiniteMeasure(sp, [0.0, 0.0])
    out = rectangular_completion(mu1, zero, mu2, xi, eps=mu1.total)
    expect = mu2.mass.copy()
    expect[list(xi.right)] -= xi.right_marginal
    assert np.allclose(out.mass, np.maximum(expect, 0.0), atol=1e-12)
    assert variational_distance(out, mu2) <= xi.mass + 1e-12


def test_rectangular_random_postconditions():
    rng = np.random.default_rng(23)
    for _ in range(25):
        sp = random_metric_space(rng, int(rng.integers(2, 6)))
        mu1 = random_measure(rng, sp)
        mu2 = random_measure(rng, sp)
        delta = prohorov_distance(mu1, mu2)[0] + 1e-6
        _, xi = prohorov_feasible(mu1, mu2, delta)
        scale = rng.random(len(sp))
        sub = FiniteMeasure(sp, mu1.mass * scale)
        eps = float((mu1.mass - sub.mass).sum()) + 1e-12
        out = rectangular_completion(mu1, sub, mu2, xi, eps)
        assert (out.mass <= mu2.mass + 1e-12).all()
        assert variational_distance(out, mu2) <= eps + 1e-12
        assert prohorov_feasible(sub, out, delta)[0]


def test_rectangular_rejects_non_dominated():
    sp = two_point_space()
    mu1 = FiniteMeasure(sp, [0.5, 0.5])
    mu2 = FiniteMeasure(sp, [0.5, 0.5])
    _, xi = prohorov_feasible(mu1, mu2, 1.0)
    bigger = FiniteMeasure(sp, [0.6, 0.5])
    with pytest.raises(DomainError):
        rectangular_completion(mu1, bigger, mu2, xi, eps=1.0)


def test_space_validate_reports_violations():
    sp = FiniteSpace(["a", "b"], [[0.0, 1.0], [2.0, 0.0]])
    msgs = sp.validate()
    assert any("asymmetry" in m for m in msgs)
    tri = FiniteSpace(["a", "b", "c"], [[0, 1, 3.5], [1, 0, 1], [3.5, 1, 0]])
    msgs = tri.validate()
    assert any("triangle" in m for m in msgs)
    good = FiniteSpace(["a", "b"], [[0.0, 1.0], [1.0, 0.0]])
    assert good.validate() == []


def test_ultrametric_flag():
    um = FiniteSpace(["a", "b", "c"], [[0, 1, 1], [1, 0, 0.5], [1, 0.5, 0]])
    assert um.is_ultrametric()
    not_um = FiniteSpace(["a", "b", "c"], [[0, 1, 2], [1, 0, 1.2], [2, 1.2, 0]])
    assert not not_um.is_ultrametric()


def test_disjoint_union_blocks():
    a = two_point_space(0.3)
    b = FiniteSpace(["z"], [[0.0]])
    cross = np.array([[1.0], [1.0]])
    u = disjoint_union(a, b, cross)
    assert len(u) == 3
    assert u.dist[0, 2] == 1.0 and u.dist[0, 1] == 0.3
    assert u.validate() == []


def test_coupling_shape_checked():
    with pytest.raises(DomainError):
        Coupling((0,), (0, 1), np.zeros((2, 2)))
