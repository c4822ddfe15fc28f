import math

import numpy as np
import pytest

from mmmlab import (
    CapabilityError,
    DomainError,
    FiniteSpace,
    FmmSpace,
    MarkSpace,
    MmmSpace,
    equivalent,
    functionally_marked_approx,
    gromov_prohorov_upper,
    mark_dispersion,
    sample_distance_matrix,
    sampled_law_gap,
    validate,
)
from mmmlab.generators import random_fmm, random_mmm
from mmmlab.marked import product_measures
from mmmlab.serialize import dump_measure, dump_mmm, load_fmm, load_measure, load_mmm
from mmmlab.measures import FiniteMeasure

TOL = 1e-9
INTERVAL = MarkSpace.unit_interval()


def three_point_space(scale=1.0):
    d = np.array([[0, 1, 1.5], [1, 0, 1], [1.5, 1, 0]]) * scale
    return FiniteSpace(["a", "b", "c"], d)


def simple_mmm():
    return MmmSpace(three_point_space(), INTERVAL, [(0, 0.1, 0.5), (1, 0.9, 0.25), (2, 0.4, 0.25)])


def test_validate_well_formed():
    assert validate(simple_mmm()) == []


def test_validate_reports_asymmetry():
    sp = FiniteSpace(["a", "b"], [[0, 1], [2, 0]])
    x = MmmSpace(sp, INTERVAL, [(0, 0.5, 1.0)])
    assert any("asymmetry" in m for m in validate(x))


def test_validate_reports_triangle_violation_with_triple():
    sp = FiniteSpace(["a", "b", "c"], [[0, 1, 2.5], [1, 0, 1], [2.5, 1, 0]])
    x = MmmSpace(sp, INTERVAL, [(0, 0.5, 1.0)])
    msgs = [m for m in validate(x) if "triangle" in m]
    assert msgs and "(" in msgs[0]


def test_atoms_merge_and_drop_zero_mass():
    x = MmmSpace(
        three_point_space(), INTERVAL, [(0, 0.5, 0.25), (0, 0.5, 0.25), (1, 0.3, 0.0)]
    )
    assert len(x.atoms) == 1
    assert x.atoms[0].mass == pytest.approx(0.5)


def test_kernel_normalization():
    x = MmmSpace(three_point_space(), INTERVAL, [(0, 0.2, 0.3), (0, 0.8, 0.1)])
    kern = dict(x.kernel(0))
    assert kern[0.2] == pytest.approx(0.75)
    assert kern[0.8] == pytest.approx(0.25)


def test_equivalent_identity_and_permutation():
    x = simple_mmm()
    assert equivalent(x, x)
    perm = [2, 0, 1]
    d = x.space.dist[np.ix_(perm, perm)]
    sp = FiniteSpace(["u", "v", "w"], d)
    atoms = [(perm.index(a.point), a.mark, a.mass) for a in x.atoms]
    y = MmmSpace(sp, INTERVAL, atoms)
    assert equivalent(x, y)


def test_equivalent_detects_mass_change():
    x = simple_mmm()
    atoms = [(a.point, a.mark, a.mass) for a in x.atoms]
    atoms[0] = (atoms[0][0], atoms[0][1], atoms[0][2] + 0.1)
    y = MmmSpace(x.space, INTERVAL, atoms)
    assert not equivalent(x, y)


def test_equivalent_guard():
    sp = FiniteSpace([f"p{i}" for i in range(13)], np.ones((13, 13)) - np.eye(13))
    x = MmmSpace(sp, INTERVAL, [(i, 0.5, 1.0) for i in range(13)])
    with pytest.raises(CapabilityError):
        equivalent(x, x)


def test_equivalence_relation_on_random_spaces():
    rng = np.random.default_rng(3)
    for _ in range(5):
        x = random_mmm(rng, n_points=3)
        assert equivalent(x, x)
        perm = list(rng.permutation(3))
        sp = FiniteSpace(["u", "v", "w"], x.space.dist[np.ix_(perm, perm)])
        y = MmmSpace(sp, x.marks, [(perm.index(a.point), a.mark, a.mass) for a in x.atoms])
        assert equivalent(x, y) and equivalent(y, x)


def test_sample_one_point_space():
    sp = FiniteSpace(["a"], [[0.0]])
    x = MmmSpace(sp, INTERVAL, [(0, 0.7, 2.0)])
    s = sample_distance_matrix(x, 3, np.random.default_rng(0))
    assert s.as_matrix().tolist() == [[0, 0, 0], [0, 0, 0], [0, 0, 0]]
    assert s.sampled_marks == (0.7, 0.7, 0.7)


def test_sample_order_one():
    s = sample_distance_matrix(simple_mmm(), 1, np.random.default_rng(0))
    assert s.entries.size == 0 and len(s.sampled_marks) == 1


def test_sample_zero_mass_rejected():
    sp = FiniteSpace(["a"], [[0.0]])
    x = MmmSpace(sp, INTERVAL, [])
    with pytest.raises(DomainError):
        sample_distance_matrix(x, 2, np.random.default_rng(0))


def test_sample_two_point_frequency():
    sp = FiniteSpace(["a", "b"], [[0, 1], [1, 0]])
    x = MmmSpace(sp, INTERVAL, [(0, 0.0, 0.5), (1, 1.0, 0.5)])
    rng = np.random.default_rng(42)
    n = 4000
    hits = sum(sample_distance_matrix(x, 2, rng).distance(0, 1) == 1.0 for _ in range(n))
    stderr = math.sqrt(0.25 / n)
    assert abs(hits / n - 0.5) <= 3 * stderr


def test_sample_matches_double_sum_oracle():
    rng = np.random.default_rng(7)
    x = random_mmm(rng, n_points=4, max_marks_per_point=1)
    pts, mks, masses = x.atom_arrays()
    p = masses / masses.sum()

    def f(r, u, v):
        return min(1.0, r) + u * v

    exact = sum(
        p[i] * p[j] * f(x.space.dist[pts[i], pts[j]], mks[i], mks[j])
        for i in range(len(pts))
        for j in range(len(pts))
    )
    n = 3000
    vals = np.empty(n)
    for k in range(n):
        s = sample_distance_matrix(x, 2, rng)
        vals[k] = f(s.distance(0, 1), s.sampled_marks[0], s.sampled_marks[1])
    stderr = vals.std(ddof=1) / math.sqrt(n)
    assert abs(vals.mean() - exact) <= 3 * stderr


def test_gp_upper_identical_space():
    x = simple_mmm()
    value, rho = gromov_prohorov_upper(x, x, budget=4, rng=np.random.default_rng(0))
    assert value <= TOL
    assert rho.shape == (3, 3)


def test_gp_upper_single_points_mark_gap():
    a = MmmSpace(FiniteSpace(["p"], [[0.0]]), INTERVAL, [(0, 0.2, 1.0)])
    b = MmmSpace(FiniteSpace(["q"], [[0.0]]), INTERVAL, [(0, 0.7, 1.0)])
    value, _ = gromov_prohorov_upper(a, b, budget=2, rng=np.random.default_rng(0))
    assert 0.5 <= value <= 0.5 + TOL


def test_gp_upper_single_points_mass_gap():
    a = MmmSpace(FiniteSpace(["p"], [[0.0]]), INTERVAL, [(0, 0.2, 1.0)])
    b = MmmSpace(FiniteSpace(["q"], [[0.0]]), INTERVAL, [(0, 0.2, 0.6)])
    value, _ = gromov_prohorov_upper(a, b, budget=2, rng=np.random.default_rng(0))
    assert 0.4 <= value <= 0.4 + TOL


def test_gp_upper_symmetry_report():
    rng = np.random.default_rng(5)
    x = random_mmm(rng, n_points=3)
    y = random_mmm(rng, n_points=4)
    a, _ = gromov_prohorov_upper(x, y, budget=8, rng=np.random.default_rng(1))
    b, _ = gromov_prohorov_upper(y, x, budget=8, rng=np.random.default_rng(1))
    # search noise only; both are upper bounds of the same quantity
    assert abs(a - b) <= max(a, b) + TOL


def test_gp_upper_dominates_functional_approx():
    rng = np.random.default_rng(9)
    x = random_fmm(rng, n_points=3)
    for n in range(0, 4):
        xn = functionally_marked_approx(x, n)
        value, _ = gromov_prohorov_upper(xn, x, budget=24, rng=np.random.default_rng(n))
        assert value <= math.exp(-n) + TOL


def test_gp_upper_rejects_empty_and_bad_budget():
    x = simple_mmm()
    empty = MmmSpace(three_point_space(), INTERVAL, [])
    with pytest.raises(DomainError):
        gromov_prohorov_upper(x, empty, budget=2, rng=np.random.default_rng(0))
    with pytest.raises(DomainError):
        gromov_prohorov_upper(x, x, budget=0, rng=np.random.default_rng(0))


def test_law_gap_same_space_small():
    x = simple_mmm()
    rng = np.random.default_rng(3)
    gap = sampled_law_gap(x, x, m=2, n_samples=800, rng=rng)
    assert gap <= 0.1


def test_law_gap_disjoint_marks():
    sp = three_point_space()
    marks = MarkSpace.finite(["u", "v"])
    x = MmmSpace(sp, marks, [(i, "u", 1 / 3) for i in range(3)])
    y = MmmSpace(sp, marks, [(i, "v", 1 / 3) for i in range(3)])
    gap = sampled_law_gap(x, y, m=2, n_samples=400, rng=np.random.default_rng(0))
    assert gap >= 0.9


def test_law_gap_two_point_exact_enumeration():
    # two-point spaces, equal masses, distances 1 vs 2, same single mark:
    # order-2 laws put mass 1/2 on "same atom twice" and 1/2 on distance 1
    # respectively 2; those two outcomes sit at truncated distance 1, so the
    # law gap is exactly 1/2
    marks = MarkSpace.finite(["u"])
    x = MmmSpace(FiniteSpace(["a", "b"], [[0, 1], [1, 0]]), marks, [(0, "u", 0.5), (1, "u", 0.5)])
    y = MmmSpace(FiniteSpace(["a", "b"], [[0, 2], [2, 0]]), marks, [(0, "u", 0.5), (1, "u", 0.5)])
    gap = sampled_law_gap(x, y, m=2, n_samples=3000, rng=np.random.default_rng(8))
    assert abs(gap - 0.5) <= 0.05


def test_functional_approx_distance_formula():
    sp = FiniteSpace(["a"], [[0.0]])
    marks = MarkSpace.finite(["0", "1"], [[0, 0.7], [0.7, 0]])
    x = MmmSpace(sp, marks, [(0, "0", 0.5), (0, "1", 0.5)])
    approx = functionally_marked_approx(x, 0)
    assert len(approx.space) == 2
    assert approx.space.dist[0, 1] == pytest.approx(min(1.0, 0.7))
    assert mark_dispersion(approx) == 0.0


def test_functional_approx_distortion_bound():
    rng = np.random.default_rng(1)
    x = random_fmm(rng, n_points=4)
    pts, _, _ = x.atom_arrays()
    base = x.space.dist[np.ix_(pts, pts)]
    for n in (0, 2, 5):
        xn = functionally_marked_approx(x, n)
        assert float(np.abs(xn.space.dist - base).max()) <= math.exp(-n) + 1e-12


def test_functional_approx_diagnostic_decreases():
    rng = np.random.default_rng(2)
    x = random_mmm(rng, n_points=3, max_marks_per_point=2)
    gaps = [
        sampled_law_gap(
            functionally_marked_approx(x, n), x, m=2, n_samples=600,
            rng=np.random.default_rng(4),
        )
        for n in (0, 2, 6)
    ]
    assert gaps[2] <= gaps[0] + 0.05


def test_serialize_roundtrip_interval_marks():
    x = simple_mmm()
    assert load_mmm(dump_mmm(x)) == x


def test_serialize_roundtrip_finite_marks():
    marks = MarkSpace.finite(["lo", "hi"], [[0, 0.25], [0.25, 0]])
    x = MmmSpace(three_point_space(), marks, [(0, "lo", 1 / 3), (1, "hi", 2 / 7)])
    assert load_mmm(dump_mmm(x)) == x


def test_serialize_roundtrip_measure():
    mu = FiniteMeasure(three_point_space(), [0.1, 0.0, 2.5])
    assert load_measure(dump_measure(mu)) == mu


def test_load_fmm_requires_single_marks():
    sp = FiniteSpace(["a"], [[0.0]])
    x = MmmSpace(sp, INTERVAL, [(0, 0.1, 0.5), (0, 0.9, 0.5)])
    with pytest.raises(DomainError):
        load_fmm(dump_mmm(x))
    y = FmmSpace(sp, INTERVAL, [1.0], [0.25])
    loaded = load_fmm(dump_mmm(y))
    assert loaded == y and isinstance(loaded, FmmSpace)


def test_serialize_rejects_malformed():
    with pytest.raises(DomainError):
        load_mmm("[points]\na\n[dist]\n0.0\n[atoms]\na 0.5 1.0\n")


def test_product_measures_identical_spaces():
    x = simple_mmm()
    mu1, mu2 = product_measures(x, x)
    assert mu1 == mu2
    assert mu1.total == pytest.approx(x.total_mass)
