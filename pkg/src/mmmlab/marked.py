"""Marked metric measure spaces on finite ground sets.

An :class:`MmmSpace` is a finite metric space together with an atomic measure
on points x marks; an :class:`FmmSpace` additionally carries one mark per
point (the measure then factorizes through that mark map).  The module
provides structural validation, equivalence checking, sampling of marked
distance matrices, a certified upper bound for the marked Gromov-Prohorov
metric, a sampling-based convergence diagnostic, and the mark-splitting
approximation that turns any marked space into a functionally marked one at
controlled distortion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CapabilityError, DomainError
from .measures import (
    ARITH_SLACK,
    DEFAULT_TOL,
    FiniteMeasure,
    FiniteSpace,
    prohorov_distance,
)

#: distance slack used by the exact-isometry equivalence check
EQUIV_SLACK = 1e-9


class MarkSpace:
    """Mark (type) space: either a finite labelled metric space or [0, 1].

    Finite marks are string labels with an explicit metric (default: discrete
    metric).  Interval marks are floats in [0, 1] under absolute difference.
    """

    __slots__ = ("kind", "labels", "dist", "_index")

    def __init__(self, kind: str, labels=None, dist=None):
        if kind not in ("finite", "interval"):
            raise DomainError("mark space kind must be 'finite' or 'interval'")
        self.kind = kind
        if kind == "finite":
            self.labels = tuple(str(lbl) for lbl in labels)
            if len(set(self.labels)) != len(self.labels):
                raise DomainError("mark labels must be unique")
            k = len(self.labels)
            if dist is None:
                d = np.ones((k, k)) - np.eye(k)
            else:
                d = np.array(dist, dtype=float)
                if d.shape != (k, k):
                    raise DomainError(f"mark metric must be {k}x{k}")
            d.setflags(write=False)
            self.dist = d
            self._index = {lbl: i for i, lbl in enumerate(self.labels)}
        else:
            self.labels = None
            self.dist = None
            self._index = None

    @classmethod
    def finite(cls, labels, dist=None) -> "MarkSpace":
        return cls("finite", labels, dist)

    @classmethod
    def unit_interval(cls) -> "MarkSpace":
        return cls("interval")

    def coerce(self, mark):
        """Canonical representation of a mark value in this space."""
        if self.kind == "interval":
            u = float(mark)
            if not -ARITH_SLACK <= u <= 1 + ARITH_SLACK:
                raise DomainError(f"interval mark {u!r} outside [0, 1]")
            return min(max(u, 0.0), 1.0)
        lbl = str(mark)
        if lbl not in self._index:
            raise DomainError(f"unknown mark label {mark!r}")
        return lbl

    def distance(self, u, v) -> float:
        if self.kind == "interval":
            return abs(float(u) - float(v))
        return float(self.dist[self._index[str(u)], self._index[str(v)]])

    def pairwise(self, marks_a, marks_b) -> np.ndarray:
        """Matrix of mark distances between two sequences of mark values."""
        if self.kind == "interval":
            a = np.asarray([float(u) for u in marks_a])
            b = np.asarray([float(v) for v in marks_b])
            return np.abs(a[:, None] - b[None, :])
        ia = [self._index[str(u)] for u in marks_a]
        ib = [self._index[str(v)] for v in marks_b]
        return self.dist[np.ix_(ia, ib)]

    def validate(self) -> list[str]:
        if self.kind == "interval":
            return []
        out = FiniteSpace(self.labels, self.dist).validate()
        k = len(self.labels)
        for i in range(k):
            for j in range(i + 1, k):
                if self.dist[i, j] <= ARITH_SLACK:
                    out.append(f"mark metric not separating at ({i},{j})")
        return [f"mark space: {msg}" for msg in out]

    def __eq__(self, other) -> bool:
        if not isinstance(other, MarkSpace) or self.kind != other.kind:
            return False
        if self.kind == "interval":
            return True
        return self.labels == other.labels and np.array_equal(self.dist, other.dist)

    def __hash__(self):
        if self.kind == "interval":
            return hash("interval")
        return hash((self.labels, self.dist.tobytes()))

    def __repr__(self) -> str:
        if self.kind == "interval":
            return "MarkSpace.unit_interval()"
        return f"MarkSpace.finite({list(self.labels)!r})"


@dataclass(frozen=True)
class Atom:
    point: int
    mark: object
    mass: float


class MmmSpace:
    """Finite marked metric measure space.

    ``atoms`` lists (point index, mark value, mass) triples; duplicates on the
    same (point, mark) pair are merged and zero-mass atoms dropped, so the
    stored tuple is a canonical support representation.  The point marginal
    ``nu`` and the mass-normalized mark kernels per point are derived.
    """

    def __init__(self, space: FiniteSpace, marks: MarkSpace, atoms) -> None:
        self.space = space
        self.marks = marks
        merged: dict = {}
        for point, mark, mass in atoms:
            point = int(point)
            if not 0 <= point < len(space):
                raise DomainError(f"atom point index {point} out of range")
            mass = float(mass)
            if mass < -ARITH_SLACK:
                raise DomainError("negative atom mass")
            if mass <= 0:
                continue
            key = (point, marks.coerce(mark))
            merged[key] = merged.get(key, 0.0) + mass
        self.atoms = tuple(
            Atom(p, m, merged[(p, m)]) for p, m in sorted(merged.keys())
        )
        nu = np.zeros(len(space))
        for a in self.atoms:
            nu[a.point] += a.mass
        nu.setflags(write=False)
        self.nu = nu

    @property
    def total_mass(self) -> float:
        return float(self.nu.sum())

    @property
    def support_points(self) -> np.ndarray:
        return np.nonzero(self.nu > 0)[0]

    def point_measure(self) -> FiniteMeasure:
        return FiniteMeasure(self.space, self.nu)

    def kernel(self, point: int) -> list[tuple[object, float]]:
        """Mass-normalized mark distribution sitting at ``point``."""
        total = self.nu[point]
        if total <= 0:
            raise DomainError(f"point {point} carries no mass")
        return [(a.mark, a.mass / total) for a in self.atoms if a.point == point]

    def atom_arrays(self):
        """(points, marks, masses) of the support atoms, as parallel arrays."""
        pts = np.array([a.point for a in self.atoms], dtype=int)
        masses = np.array([a.mass for a in self.atoms])
        mks = [a.mark for a in self.atoms]
        return pts, mks, masses

    def is_functional(self, tol: float = ARITH_SLACK) -> bool:
        """True when every charged point carries a single mark."""
        seen: dict[int, object] = {}
        for a in self.atoms:
            if a.point in seen and self.marks.distance(seen[a.point], a.mark) > tol:
                return False
            seen.setdefault(a.point, a.mark)
        return True

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, MmmSpace)
            and self.space == other.space
            and self.marks == other.marks
            and self.atoms == other.atoms
        )

    def __hash__(self):
        return hash((self.space, self.marks, self.atoms))

    def __repr__(self) -> str:
        return f"{type(self).__name__}({len(self.space)} points, {len(self.atoms)} atoms)"


class FmmSpace(MmmSpace):
    """Marked space whose measure factorizes through a total mark map."""

    def __init__(self, space: FiniteSpace, marks: MarkSpace, weight, markmap) -> None:
        w = np.array(weight, dtype=float)
        if w.shape != (len(space),):
            raise DomainError(f"weight vector must have length {len(space)}")
        markmap = tuple(marks.coerce(m) for m in markmap)
        if len(markmap) != len(space):
            raise DomainError("mark map must assign a mark to every point")
        super().__init__(
            space, marks, [(i, markmap[i], w[i]) for i in range(len(space)) if w[i] > 0]
        )
        w.setflags(write=False)
        self.weight = w
        self.markmap = markmap

    def mark_at(self, point: int):
        return self.markmap[point]


def validate(x: MmmSpace) -> list[str]:
    """All invariant violations of the space, its marks and its measure."""
    out = x.space.validate()
    out.extend(x.marks.validate())
    if isinstance(x, FmmSpace) and x.weight.size and float(x.weight.min()) < 0:
        out.append("negative weight")
    return out


def _mark_eq(marks: MarkSpace, u, v, tol: float = EQUIV_SLACK) -> bool:
    if marks.kind == "finite":
        return u == v
    return abs(float(u) - float(v)) <= tol


def _profile(x: MmmSpace, point: int):
    return sorted(
        ((a.mark, a.mass) for a in x.atoms if a.point == point),
        key=lambda t: (str(t[0]), t[1]),
    )


def _profiles_match(marks, pa, pb, tol=EQUIV_SLACK) -> bool:
    if len(pa) != len(pb):
        return False
    return all(
        _mark_eq(marks, ua, ub) and abs(ma - mb) <= tol
        for (ua, ma), (ub, mb) in zip(pa, pb)
    )


def equivalent(x1: MmmSpace, x2: MmmSpace, max_support: int = 12) -> bool:
    """Exact equivalence: a mass- and mark-preserving isometry of supports.

    Decided by backtracking over support bijections; distances and masses are
    compared with slack ``EQUIV_SLACK``.  Supports larger than
    ``max_support`` raise :class:`CapabilityError`.
    """
    if x1.marks != x2.marks:
        raise DomainError("mark spaces differ")
    s1 = [int(i) for i in x1.support_points]
    s2 = [int(i) for i in x2.support_points]
    if max(len(s1), len(s2)) > max_support:
        raise CapabilityError(
            f"equivalence is decided exactly only up to {max_support} support points"
        )
    if len(s1) != len(s2):
        return False
    if abs(x1.total_mass - x2.total_mass) > EQUIV_SLACK:
        return False
    prof1 = {p: _profile(x1, p) for p in s1}
    prof2 = {q: _profile(x2, q) for q in s2}
    d1 = x1.space.dist
    d2 = x2.space.dist
    order = sorted(s1, key=lambda p: -x1.nu[p])
    assigned: dict[int, int] = {}

    def extend(k: int) -> bool:
        if k == len(order):
            return True
        p = order[k]
        for q in s2:
            if q in assigned.values():
                continue
            if abs(x1.nu[p] - x2.nu[q]) > EQUIV_SLACK:
                continue
            if not _profiles_match(x1.marks, prof1[p], prof2[q]):
                continue
            if any(
                abs(d1[p, p0] - d2[q, q0]) > EQUIV_SLACK for p0, q0 in assigned.items()
            ):
                continue
            assigned[p] = q
            if extend(k + 1):
                return True
            del assigned[p]
        return False

    return extend(0)


@dataclass(frozen=True)
class MarkedDistanceMatrixSample:
    """One draw of ``m`` atoms: upper-triangular distances plus mark vector."""

    order: int
    entries: np.ndarray  # condensed upper triangle, row-major, length m(m-1)/2
    sampled_marks: tuple

    def distance(self, k: int, l: int) -> float:
        if k == l:
            return 0.0
        if k > l:
            k, l = l, k
        m = self.order
        pos = k * (2 * m - k - 1) // 2 + (l - k - 1)
        return float(self.entries[pos])

    def as_matrix(self) -> np.ndarray:
        m = self.order
        out = np.zeros((m, m))
        for k in range(m):
            for l in range(k + 1, m):
                out[k, l] = out[l, k] = self.distance(k, l)
        return out


def sample_distance_matrix(x: MmmSpace, m: int, rng) -> MarkedDistanceMatrixSample:
    """Draw ``m`` atoms i.i.d. from the normalized measure."""
    if m < 1:
        raise DomainError("sample order must be at least 1")
    total = x.total_mass
    if total <= 0:
        raise DomainError("cannot sample from the zero measure")
    pts, mks, masses = x.atom_arrays()
    idx = rng.choice(len(pts), size=m, p=masses / masses.sum())
    chosen = pts[idx]
    entries = np.array(
        [
            x.space.dist[chosen[k], chosen[l]]
            for k in range(m)
            for l in range(k + 1, m)
        ]
    )
    return MarkedDistanceMatrixSample(m, entries, tuple(mks[i] for i in idx))


# ---------------------------------------------------------------------------
# marked Gromov-Prohorov upper bound


def _pairs_distortion(r1, r2, pa, pb):
    sub = np.abs(r1[np.ix_(pa, pa)] - r2[np.ix_(pb, pb)])
    return float(sub.max(initial=0.0))


def _msd_improve(r1, r2, f, g, sweeps: int = 6):
    """First-improvement hill climb on mean squared pair distortion.

    ``f`` maps side-1 support positions to side-2 positions, ``g`` the other
    way; the correspondence is the union of both graphs.
    """
    n1, n2 = len(f), len(g)
    for _ in range(sweeps):
        changed = False
        pa = np.concatenate([np.arange(n1), g])
        pb = np.concatenate([f, np.arange(n2)])
        for a in range(n1):
            keep = np.ones(len(pa), dtype=bool)
            keep[a] = False  # the pair being remapped does not vote
            row1 = r1[a, pa[keep]]
            cost = ((row1[None, :] - r2[:, pb[keep]]) ** 2).sum(axis=1)
            b = int(cost.argmin())
            if b != f[a] and cost[b] < cost[f[a]] - 1e-15:
                f[a] = b
                pb[a] = b
                changed = True
        pa = np.concatenate([np.arange(n1), g])
        pb = np.concatenate([f, np.arange(n2)])
        for b in range(n2):
            keep = np.ones(len(pa), dtype=bool)
            keep[n1 + b] = False
            row2 = r2[b, pb[keep]]
            cost = ((row2[None, :] - r1[:, pa[keep]]) ** 2).sum(axis=1)
            a = int(cost.argmin())
            if a != g[b] and cost[a] < cost[g[b]] - 1e-15:
                g[b] = a
                pa[n1 + b] = a
                changed = True
        if not changed:
            break
    return f, g


def _rho_from_pairs(r1, r2, pa, pb, slack: float) -> np.ndarray:
    """Cross matrix min over matched pairs of r1(x, a) + slack/2 + r2(b, y).

    Feasible for the glued triangle inequalities whenever ``slack`` is at
    least the distortion of the matched pairs.
    """
    half = 0.5 * slack
    stack = r1[:, pa][:, :, None] + r2[pb, :][None, :, :] + half
    return stack.min(axis=1)


def _shrink_cross(rho, r1, r2, sweeps: int = 2) -> np.ndarray:
    """Push cross distances down to their triangle lower bounds.

    Entrywise decrease never hurts the downstream Prohorov value, and
    recomputing each entry's exact lower bound keeps the glued matrix
    feasible throughout.
    """
    n1, n2 = rho.shape
    rho = rho.copy()
    for _ in range(sweeps):
        for i in range(n1):
            for j in range(n2):
                lb = 0.0
                if n1 > 1:
                    gaps = np.abs(r1[i] - rho[:, j])
                    gaps[i] = 0.0
                    lb = float(gaps.max())
                if n2 > 1:
                    gaps = np.abs(r2[j] - rho[i])
                    gaps[j] = 0.0
                    lb = max(lb, float(gaps.max()))
                rho[i, j] = lb
    return rho


def _embedded_measures(x1: MmmSpace, x2: MmmSpace, rho: np.ndarray):
    """Both measures on the product (glued points) x marks, metric r + d."""
    pts1, mks1, m1 = x1.atom_arrays()
    pts2, mks2, m2 = x2.atom_arrays()
    marks = x1.marks
    d11 = x1.space.dist[np.ix_(pts1, pts1)] + marks.pairwise(mks1, mks1)
    d22 = x2.space.dist[np.ix_(pts2, pts2)] + marks.pairwise(mks2, mks2)
    d12 = rho[np.ix_(pts1, pts2)] + marks.pairwise(mks1, mks2)
    labels = [f"0:{i}" for i in range(len(pts1))] + [f"1:{j}" for j in range(len(pts2))]
    dist = np.vstack([np.hstack([d11, d12]), np.hstack([d12.T, d22])])
    space = FiniteSpace(labels, dist)
    mu1 = FiniteMeasure(space, np.concatenate([m1, np.zeros(len(pts2))]))
    mu2 = FiniteMeasure(space, np.concatenate([np.zeros(len(pts1)), m2]))
    return mu1, mu2


def gromov_prohorov_upper(
    x1: MmmSpace,
    x2: MmmSpace,
    budget: int = 16,
    rng=None,
    tol: float = DEFAULT_TOL,
    keep_best: int = 3,
):
    """Certified upper bound on the marked Gromov-Prohorov distance.

    Searches over correspondences between the supports; each candidate yields
    a feasible cross-distance matrix (matched-pair construction at slack
    equal to the correspondence distortion, then triangle-tight shrinking),
    on which the Prohorov distance of the embedded measures is computed
    exactly.  ``budget`` counts candidate correspondences (two deterministic
    seeds, the rest random restarts).  No optimality claim is made; the value
    is an upper bound witnessed by the returned cross-distance matrix.
    """
    if budget <= 0:
        raise DomainError("budget must be positive")
    if x1.marks != x2.marks:
        raise DomainError("mark spaces differ")
    if not x1.atoms or not x2.atoms:
        raise DomainError("both spaces must be nonempty")
    if rng is None:
        rng = np.random.default_rng(0)
    s1 = [int(i) for i in x1.support_points]
    s2 = [int(i) for i in x2.support_points]
    r1s = x1.space.dist[np.ix_(s1, s1)]
    r2s = x2.space.dist[np.ix_(s2, s2)]
    n1, n2 = len(s1), len(s2)

    starts = []
    by_mass1 = sorted(range(n1), key=lambda i: (-x1.nu[s1[i]], i))
    by_mass2 = sorted(range(n2), key=lambda j: (-x2.nu[s2[j]], j))
    f0 = np.zeros(n1, dtype=int)
    g0 = np.zeros(n2, dtype=int)
    for k, i in enumerate(by_mass1):
        f0[i] = by_mass2[k % n2]
    for k, j in enumerate(by_mass2):
        g0[j] = by_mass1[k % n1]
    starts.append((f0, g0))
    if n1 == n2:
        starts.append((np.arange(n1), np.arange(n2)))
    while len(starts) < budget:
        starts.append((rng.integers(0, n2, size=n1), rng.integers(0, n1, size=n2)))

    scored = []
    for f, g in starts:
        f, g = _msd_improve(r1s, r2s, np.array(f, dtype=int), np.array(g, dtype=int))
        pa = np.concatenate([np.arange(n1), g])
        pb = np.concatenate([f, np.arange(n2)])
        dis = _pairs_distortion(r1s, r2s, pa, pb)
        scored.append((dis, tuple(int(v) for v in pa), tuple(int(v) for v in pb)))
    scored.sort(key=lambda t: t[0])
    seen = set()
    best_value = None
    best_rho = None
    for dis, pa, pb in scored:
        if (pa, pb) in seen:
            continue
        seen.add((pa, pb))
        rho_s = _rho_from_pairs(r1s, r2s, np.array(pa), np.array(pb), dis)
        rho_s = _shrink_cross(rho_s, r1s, r2s)
        rho = _full_cross(x1, x2, s1, s2, rho_s)
        mu1, mu2 = _embedded_measures(x1, x2, rho)
        value, _ = prohorov_distance(mu1, mu2, tol)
        if best_value is None or value < best_value:
            best_value = value
            best_rho = rho
        if len(seen) >= keep_best:
            break
    return float(best_value), best_rho


def _full_cross(x1, x2, s1, s2, rho_s) -> np.ndarray:
    """Extend a support-block cross matrix to all points.

    Routes every pair through the best support pair; feasibility of the
    support block makes the extension feasible as well.
    """
    via1 = (x1.space.dist[:, s1][:, :, None] + rho_s[None, :, :]).min(axis=1)
    return (via1[:, :, None] + x2.space.dist[s2, :][None, :, :]).min(axis=1)


def sampled_law_gap(
    x1: MmmSpace,
    x2: MmmSpace,
    m: int,
    n_samples: int,
    rng,
    tol: float = 1e-6,
) -> float:
    """Prohorov gap between empirical marked distance matrix laws.

    The ground metric between two order-``m`` draws is the maximum over
    distance entries of min(1, |difference|) and over positions of
    min(1, mark distance).  A convergence diagnostic only: it tends to zero
    along marked Gromov-weakly convergent sequences but does not bound the
    marked Gromov-Prohorov distance.
    """
    if m < 2:
        raise DomainError("sample order must be at least 2")
    if n_samples < 1:
        raise DomainError("need at least one sample")
    if x1.marks != x2.marks:
        raise DomainError("mark spaces differ")

    def empiric(x: MmmSpace):
        out = {}
        for _ in range(n_samples):
            s = sample_distance_matrix(x, m, rng)
            key = (
                tuple(np.round(s.entries, 12).tolist()),
                tuple(
                    round(float(u), 12) if x.marks.kind == "interval" else u
                    for u in s.sampled_marks
                ),
            )
            out[key] = out.get(key, 0.0) + x.total_mass / n_samples
        return out

    e1 = empiric(x1)
    e2 = empiric(x2)
    keys = sorted(set(e1) | set(e2))
    marks = x1.marks

    def ground(ka, kb) -> float:
        da = np.array(ka[0])
        db = np.array(kb[0])
        dist_part = float(np.minimum(1.0, np.abs(da - db)).max(initial=0.0))
        mark_part = max(
            (min(1.0, marks.distance(u, v)) for u, v in zip(ka[1], kb[1])),
            default=0.0,
        )
        return max(dist_part, mark_part)

    n = len(keys)
    dist = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            dist[i, j] = dist[j, i] = ground(keys[i], keys[j])
    space = FiniteSpace([f"s{i}" for i in range(n)], dist)
    mu1 = FiniteMeasure(space, [e1.get(k, 0.0) for k in keys])
    mu2 = FiniteMeasure(space, [e2.get(k, 0.0) for k in keys])
    return prohorov_distance(mu1, mu2, tol)[0]


def product_measures(x1: MmmSpace, x2: MmmSpace):
    """Two atom measures on the shared product space (points x marks).

    Requires a common ground space and mark space; the product metric adds
    mark distance to point distance.  Prohorov distances between the returned
    measures bound the marked Gromov-Prohorov distance of the two spaces
    through this explicit common embedding.
    """
    if x1.space != x2.space:
        raise DomainError("spaces must share the ground space")
    if x1.marks != x2.marks:
        raise DomainError("mark spaces differ")
    keys = sorted({(a.point, a.mark) for a in x1.atoms} | {(a.point, a.mark) for a in x2.atoms})
    pos = {key: i for i, key in enumerate(keys)}
    pts = [p for p, _ in keys]
    mks = [u for _, u in keys]
    dist = x1.space.dist[np.ix_(pts, pts)] + x1.marks.pairwise(mks, mks)
    space = FiniteSpace([f"{x1.space.labels[p]}|{u}" for p, u in keys], dist)
    m1 = np.zeros(len(keys))
    for a in x1.atoms:
        m1[pos[(a.point, a.mark)]] += a.mass
    m2 = np.zeros(len(keys))
    for a in x2.atoms:
        m2[pos[(a.point, a.mark)]] += a.mass
    return FiniteMeasure(space, m1), FiniteMeasure(space, m2)


def functionally_marked_approx(x: MmmSpace, n: int) -> FmmSpace:
    """Split every atom into its own point at mark-distance distortion exp(-n).

    The new point set is the atom set of ``x``; distances add
    min(exp(-n), mark distance) to the base distance, each atom keeps its
    mass, and the mark map sends an atom to its own mark.  The result is a
    valid functionally marked space converging to ``x`` as ``n`` grows.
    """
    if n < 0:
        raise DomainError("approximation level must be nonnegative")
    pts, mks, masses = x.atom_arrays()
    if not len(pts):
        raise DomainError("cannot approximate the empty space")
    cap = float(np.exp(-n))
    base = x.space.dist[np.ix_(pts, pts)]
    dist = base + np.minimum(cap, x.marks.pairwise(mks, mks))
    labels = [
        f"{x.space.labels[p]}|{mks[i]}" for i, p in enumerate(pts)
    ]
    space = FiniteSpace(labels, dist)
    return FmmSpace(space, x.marks, masses, mks)
