"""Random instance builders shared by the test suite and acceptance runner.

Metric spaces come from point clouds in the plane, so the triangle
inequality holds by construction; rational masses keep the exact solvers on
friendly inputs.
"""

from __future__ import annotations

import numpy as np

from .marked import FmmSpace, MarkSpace, MmmSpace
from .measures import FiniteMeasure, FiniteSpace


def random_metric_space(rng, n: int, scale: float = 1.0, dim: int = 2) -> FiniteSpace:
    pts = rng.random((n, dim)) * scale
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    np.fill_diagonal(dist, 0.0)
    return FiniteSpace([f"p{i}" for i in range(n)], dist)


def random_rational_measure(
    rng, space: FiniteSpace, denominator: int = 8, max_units: int = 8
) -> FiniteMeasure:
    units = rng.integers(0, max_units + 1, size=len(space))
    return FiniteMeasure(space, units / denominator)


def random_measure(rng, space: FiniteSpace, scale: float = 1.0) -> FiniteMeasure:
    return FiniteMeasure(space, rng.random(len(space)) * scale)


def random_mmm(
    rng,
    n_points: int = 4,
    marks: MarkSpace | None = None,
    max_marks_per_point: int = 2,
    scale: float = 1.0,
) -> MmmSpace:
    space = random_metric_space(rng, n_points, scale=scale)
    marks = marks if marks is not None else MarkSpace.unit_interval()
    atoms = []
    for p in range(n_points):
        for _ in range(int(rng.integers(1, max_marks_per_point + 1))):
            if marks.kind == "interval":
                mark = float(rng.random())
            else:
                mark = marks.labels[int(rng.integers(len(marks.labels)))]
            atoms.append((p, mark, float(rng.random())))
    return MmmSpace(space, marks, atoms)


def random_fmm(
    rng, n_points: int = 4, marks: MarkSpace | None = None, scale: float = 1.0
) -> FmmSpace:
    space = random_metric_space(rng, n_points, scale=scale)
    marks = marks if marks is not None else MarkSpace.unit_interval()
    if marks.kind == "interval":
        markmap = [float(rng.random()) for _ in range(n_points)]
    else:
        markmap = [
            marks.labels[int(rng.integers(len(marks.labels)))] for _ in range(n_points)
        ]
    weight = rng.random(n_points) + 0.05
    return FmmSpace(space, marks, weight, markmap)


def random_local_bound_member(
    rng, delta: float, eps: float, n_points: int = 5
) -> MmmSpace:
    """Random space in which pairs closer than ``delta`` have mark gap <= eps.

    Points are clustered under the (< delta)-relation by construction:
    components get a base mark and their atoms spread at most ``eps`` around
    it, so the membership holds without trimming.
    """
    space = random_metric_space(rng, n_points, scale=1.0)
    # merge points into components of the (< delta) graph
    parent = list(range(n_points))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i in range(n_points):
        for j in range(i + 1, n_points):
            if space.dist[i, j] < delta:
                parent[find(i)] = find(j)
    marks = MarkSpace.unit_interval()
    base = {}
    atoms = []
    for p in range(n_points):
        root = find(p)
        if root not in base:
            base[root] = float(rng.random()) * (1.0 - eps)
        lo = base[root]
        for _ in range(int(rng.integers(1, 3))):
            mark = lo + float(rng.random()) * eps
            atoms.append((p, min(mark, 1.0), float(rng.random()) + 0.05))
    return MmmSpace(space, marks, atoms)
