"""Finite measures on finite metric spaces.

Points are opaque string labels over a shared :class:`FiniteSpace`; measures
are nonnegative mass vectors.  The Prohorov metric is computed exactly per
threshold by a max-flow feasibility test and then localized by bisection, so
every returned value carries a two-sided certificate: feasibility holds at the
returned value and fails ``tol`` below it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import DomainError

#: slack for floating-point comparisons on masses and distances
ARITH_SLACK = 1e-12

#: default absolute accuracy of the bisection solvers
DEFAULT_TOL = 1e-9


class FiniteSpace:
    """Finite labelled point set with an explicit distance matrix.

    The matrix is stored as given; :meth:`validate` reports violations of
    symmetry, zero diagonal, nonnegativity and the triangle inequality
    instead of raising, so malformed inputs remain inspectable.  Off-diagonal
    zeros are allowed: disjoint unions built for Prohorov evaluation are
    genuine pseudometrics.
    """

    __slots__ = ("labels", "dist", "_index")

    def __init__(self, labels: Iterable, dist) -> None:
        self.labels = tuple(str(lbl) for lbl in labels)
        if len(set(self.labels)) != len(self.labels):
            raise DomainError("point labels must be unique")
        # adopt float arrays without copying and freeze them; large discretized
        # spaces would otherwise double their memory footprint
        arr = np.asarray(dist, dtype=float)
        n = len(self.labels)
        if arr.shape != (n, n):
            raise DomainError(f"distance matrix must be {n}x{n}, got {arr.shape}")
        arr.setflags(write=False)
        self.dist = arr
        self._index = {lbl: i for i, lbl in enumerate(self.labels)}

    def __len__(self) -> int:
        return len(self.labels)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, FiniteSpace)
            and self.labels == other.labels
            and np.array_equal(self.dist, other.dist)
        )

    def __hash__(self):
        return hash((self.labels, self.dist.tobytes()))

    def __repr__(self) -> str:
        return f"FiniteSpace({len(self)} points)"

    def index(self, label) -> int:
        try:
            return self._index[str(label)]
        except KeyError:
            raise DomainError(f"unknown point label {label!r}") from None

    def validate(self, tol: float = 1e-9) -> list[str]:
        """Return human-readable descriptions of all metric-axiom violations."""
        out = []
        d = self.dist
        n = len(self)
        bad = np.nonzero(np.abs(np.diag(d)) > tol)[0]
        for i in bad:
            out.append(f"nonzero diagonal at point {i}: {d[i, i]!r}")
        asym = np.nonzero(np.abs(d - d.T) > tol)
        for i, j in zip(*asym):
            if i < j:
                out.append(f"asymmetry at ({i},{j}): {d[i, j]!r} vs {d[j, i]!r}")
        neg = np.nonzero(d < -tol)
        for i, j in zip(*neg):
            out.append(f"negative distance at ({i},{j}): {d[i, j]!r}")
        for k in range(n):
            gap = d - (d[:, k][:, None] + d[k][None, :])
            viol = np.nonzero(gap > tol)
            for i, j in zip(*viol):
                out.append(
                    f"triangle violation at ({i},{j},{k}): "
                    f"d({i},{j})={d[i, j]!r} > d({i},{k})+d({k},{j})={d[i, k] + d[k, j]!r}"
                )
                break  # one witness per intermediate point is enough
        return out

    def is_ultrametric(self, tol: float = ARITH_SLACK) -> bool:
        d = self.dist
        for k in range(len(self)):
            if (d > np.maximum(d[:, k][:, None], d[k][None, :]) + tol).any():
                return False
        return True


def disjoint_union(a: FiniteSpace, b: FiniteSpace, cross) -> FiniteSpace:
    """Glue two spaces along a cross-distance matrix.

    ``cross[i, j]`` is the distance between point ``i`` of ``a`` and point
    ``j`` of ``b``.  The caller is responsible for the triangle inequality of
    the glued matrix; :meth:`FiniteSpace.validate` checks it when in doubt.
    """
    cross = np.asarray(cross, dtype=float)
    if cross.shape != (len(a), len(b)):
        raise DomainError("cross matrix shape mismatch")
    labels = [f"0:{lbl}" for lbl in a.labels] + [f"1:{lbl}" for lbl in b.labels]
    top = np.hstack([a.dist, cross])
    bot = np.hstack([cross.T, b.dist])
    return FiniteSpace(labels, np.vstack([top, bot]))


class FiniteMeasure:
    """Nonnegative atomic measure on the points of a :class:`FiniteSpace`."""

    __slots__ = ("space", "mass")

    def __init__(self, space: FiniteSpace, mass) -> None:
        m = np.array(mass, dtype=float)
        if m.shape != (len(space),):
            raise DomainError(f"mass vector must have length {len(space)}")
        if m.size and float(m.min()) < -ARITH_SLACK:
            raise DomainError("negative mass")
        np.maximum(m, 0.0, out=m)
        m.setflags(write=False)
        self.space = space
        self.mass = m

    @property
    def total(self) -> float:
        return float(self.mass.sum())

    @property
    def support(self) -> np.ndarray:
        return np.nonzero(self.mass > 0)[0]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, FiniteMeasure)
            and self.space == other.space
            and np.array_equal(self.mass, other.mass)
        )

    def __hash__(self):
        return hash((self.space, self.mass.tobytes()))

    def __repr__(self) -> str:
        return f"FiniteMeasure(total={self.total!r}, support={len(self.support)})"


def _same_space(mu: FiniteMeasure, nu: FiniteMeasure) -> FiniteSpace:
    if mu.space is not nu.space and mu.space != nu.space:
        raise DomainError("measures live on different spaces")
    return mu.space


def variational_distance(mu: FiniteMeasure, nu: FiniteMeasure) -> float:
    """Total-variation style distance ``sup_B |mu(B) - nu(B)|``."""
    _same_space(mu, nu)
    d = mu.mass - nu.mass
    return float(max(np.clip(d, 0, None).sum(), np.clip(-d, 0, None).sum()))


def _resolve_points(space: FiniteSpace, points) -> list[int]:
    idx = []
    for p in points:
        if isinstance(p, (int, np.integer)):
            if not 0 <= int(p) < len(space):
                raise DomainError(f"point index {p} out of range")
            idx.append(int(p))
        else:
            idx.append(space.index(p))
    return idx


def restrict(mu: FiniteMeasure, keep) -> FiniteMeasure:
    """Restriction of ``mu`` to a point subset (labels or indices)."""
    mask = np.zeros(len(mu.space), dtype=bool)
    mask[_resolve_points(mu.space, keep)] = True
    return FiniteMeasure(mu.space, np.where(mask, mu.mass, 0.0))


@dataclass(frozen=True)
class Coupling:
    """Partial coupling between the supports of two measures.

    ``matrix[i, j]`` is the mass shipped from point ``left[i]`` to point
    ``right[j]`` of the shared space.  When returned as a feasibility witness
    at level ``eps`` it satisfies, up to ``ARITH_SLACK``: entrywise
    nonnegativity, marginal domination by the respective measures, mass
    deficit at most ``eps`` on both sides, and no mass on pairs at distance
    ``>= eps``.
    """

    left: tuple[int, ...]
    right: tuple[int, ...]
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (len(self.left), len(self.right)):
            raise DomainError("coupling matrix shape mismatch")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def left_marginal(self) -> np.ndarray:
        return self.matrix.sum(axis=1)

    @property
    def right_marginal(self) -> np.ndarray:
        return self.matrix.sum(axis=0)

    @property
    def mass(self) -> float:
        return float(self.matrix.sum())

    def violations(self, mu1: FiniteMeasure, mu2: FiniteMeasure, eps: float) -> list[str]:
        """Check the witness invariants; empty list means the witness is valid."""
        out = []
        space = _same_space(mu1, mu2)
        if self.matrix.size and float(self.matrix.min()) < -ARITH_SLACK:
            out.append("negative coupling entry")
        for name, marg, idx, mu in (
            ("left", self.left_marginal, self.left, mu1),
            ("right", self.right_marginal, self.right, mu2),
        ):
            cap = mu.mass[list(idx)] if idx else np.zeros(0)
            if marg.size and float((marg - cap).max()) > ARITH_SLACK:
                out.append(f"{name} marginal exceeds measure")
            deficit = mu.total - float(marg.sum())
            if deficit > eps + ARITH_SLACK:
                out.append(f"{name} mass deficit {deficit!r} exceeds eps={eps!r}")
        if self.left and self.right:
            d = space.dist[np.ix_(list(self.left), list(self.right))]
            if bool(((self.matrix > ARITH_SLACK) & (d >= eps)).any()):
                out.append("mass shipped across a pair at distance >= eps")
        return out


def _max_flow(supply: np.ndarray, demand: np.ndarray, edges: np.ndarray):
    """Max flow of the bipartite transport graph; returns (value, flow matrix).

    Plain Edmonds-Karp on a dense residual matrix.  Cross edges have
    effectively infinite capacity; reverse residuals of cross edges therefore
    hold the shipped mass directly.
    """
    n1, n2 = len(supply), len(demand)
    n = n1 + n2 + 2
    src, snk = 0, n - 1
    res = np.zeros((n, n))
    res[src, 1 : n1 + 1] = supply
    res[n1 + 1 : n1 + 1 + n2, snk] = demand
    big = float(supply.sum()) + 1.0
    res[1 : n1 + 1, n1 + 1 : n1 + 1 + n2] = np.where(edges, big, 0.0)
    total = 0.0
    tol = 1e-15
    parent = np.empty(n, dtype=int)
    while True:
        parent.fill(-1)
        parent[src] = src
        frontier = [src]
        reached = False
        while frontier and not reached:
            nxt = []
            for u in frontier:
                for v in np.nonzero((res[u] > tol) & (parent < 0))[0]:
                    parent[v] = u
                    if v == snk:
                        reached = True
                        break
                    nxt.append(int(v))
                if reached:
                    break
            frontier = nxt
        if not reached:
            break
        # bottleneck along the path, then augment
        path = []
        v = snk
        while v != src:
            path.append((parent[v], v))
            v = parent[v]
        bottleneck = min(res[u, v] for u, v in path)
        for u, v in path:
            res[u, v] -= bottleneck
            res[v, u] += bottleneck
        total += bottleneck
    flow = res[n1 + 1 : n1 + 1 + n2, 1 : n1 + 1].T.copy()
    return total, flow


def prohorov_feasible(mu1: FiniteMeasure, mu2: FiniteMeasure, eps: float):
    """Decide whether a partial coupling certifies Prohorov level ``eps``.

    Feasibility means: a nonnegative kernel dominated by both measures,
    shipping mass only across pairs at distance below ``eps`` and leaving a
    deficit of at most ``eps`` on each side.  Decided exactly as a max-flow
    problem; ties at ``dist == eps`` are broken toward infeasibility.

    Returns ``(True, witness)`` or ``(False, None)``.
    """
    if eps <= 0:
        raise DomainError("eps must be positive")
    space = _same_space(mu1, mu2)
    target = max(mu1.total, mu2.total) - eps
    s1 = mu1.support
    s2 = mu2.support
    if target <= ARITH_SLACK:
        return True, Coupling(tuple(s1), tuple(s2), np.zeros((len(s1), len(s2))))
    if not len(s1) or not len(s2):
        return False, None
    edges = space.dist[np.ix_(s1, s2)] < eps - ARITH_SLACK
    value, flow = _max_flow(mu1.mass[s1], mu2.mass[s2], edges)
    if value >= target - ARITH_SLACK:
        return True, Coupling(tuple(int(i) for i in s1), tuple(int(j) for j in s2), flow)
    return False, None


def prohorov_distance(mu1: FiniteMeasure, mu2: FiniteMeasure, tol: float = DEFAULT_TOL):
    """Prohorov distance to absolute accuracy ``tol``, with witness.

    Bisection over the feasibility threshold, seeded by the finite candidate
    set of pairwise support distances plus the total-mass gap.  The returned
    value ``v`` is certified feasible; ``v - tol`` is certified infeasible
    whenever positive.  The witness coupling is the one found at ``v``.
    """
    if tol <= 0:
        raise DomainError("tol must be positive")
    space = _same_space(mu1, mu2)
    hi_cap = float(space.dist.max(initial=0.0)) + mu1.total + mu2.total
    hi_cap = max(hi_cap, tol)
    s1, s2 = mu1.support, mu2.support
    cands = {abs(mu1.total - mu2.total), hi_cap}
    if len(s1) and len(s2):
        cands.update(float(x) for x in np.unique(space.dist[np.ix_(s1, s2)]))
    cands = sorted(c for c in cands if 0.0 < c <= hi_cap)

    def feasible(e: float) -> bool:
        return prohorov_feasible(mu1, mu2, e)[0]

    # hi_cap is always feasible (the empty coupling works), so the leftmost
    # feasible candidate exists and brackets the threshold from above.
    left, right = 0, len(cands) - 1
    while left < right:
        mid = (left + right) // 2
        if feasible(cands[mid]):
            right = mid
        else:
            left = mid + 1
    hi = cands[left]
    lo = cands[left - 1] if left > 0 else 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    ok, witness = prohorov_feasible(mu1, mu2, hi)
    assert ok
    return float(hi), witness


def rectangular_completion(
    mu1: FiniteMeasure,
    mu1_sub: FiniteMeasure,
    mu2: FiniteMeasure,
    xi: Coupling,
    eps: float,
) -> FiniteMeasure:
    """Transport the passage ``mu1 -> mu1_sub`` to the other side of ``xi``.

    Given a sub-measure ``mu1_sub <= mu1`` missing at most ``eps`` mass and a
    feasibility witness ``xi`` for ``(mu1, mu2)`` at some level ``delta``,
    build ``mu2' = xi2' + mu2 - xi2`` where ``xi'`` shrinks each row of
    ``xi`` to the mass still available under ``mu1_sub`` (rows without mass
    contribute nothing).  The result is dominated by ``mu2``, misses at most
    ``eps`` mass, and stays within Prohorov distance ``delta`` of
    ``mu1_sub``.
    """
    space = _same_space(mu1, mu2)
    _same_space(mu1, mu1_sub)
    if eps <= 0:
        raise DomainError("eps must be positive")
    diff = mu1.mass - mu1_sub.mass
    if diff.size and float(diff.min()) < -ARITH_SLACK:
        raise DomainError("mu1_sub must be dominated by mu1")
    if float(np.clip(diff, 0, None).sum()) > eps + ARITH_SLACK:
        raise DomainError("mass removed from mu1 exceeds eps")
    left = list(xi.left)
    right = list(xi.right)
    rows = xi.left_marginal
    if rows.size and float((rows - mu1.mass[left]).max()) > ARITH_SLACK:
        raise DomainError("xi left marginal is not dominated by mu1")
    cols = xi.right_marginal
    if cols.size and float((cols - mu2.mass[right]).max()) > ARITH_SLACK:
        raise DomainError("xi right marginal is not dominated by mu2")
    shrink = np.minimum(mu1_sub.mass[left], rows)
    scale = np.divide(shrink, rows, out=np.zeros_like(rows), where=rows > ARITH_SLACK)
    shrunk_cols = (xi.matrix * scale[:, None]).sum(axis=0)
    out = mu2.mass.copy()
    out[right] += shrunk_cols - cols
    np.maximum(out, 0.0, out=out)  # float dust only: shrunk_cols <= cols entrywise
    return FiniteMeasure(space, out)
