"""Mark-function diagnostics for marked metric measure spaces.

The central quantity is the dispersion functional: the expected truncated
distance between two marks drawn independently at a common point.  It
vanishes exactly on functionally marked spaces.  Around it sit membership
tests (marks uniformly controlled by a modulus; mark gaps bounded below a
distance threshold, exactly or after trimming a little mass), a certified
clearance bound keeping a space away from high-dispersion regions, finite
evidence checks for limit criteria, and generators for spaces that admit no
mark function.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import CapabilityError, DomainError
from .marked import FmmSpace, MarkSpace, MmmSpace, gromov_prohorov_upper
from .measures import ARITH_SLACK, FiniteSpace

#: pair comparisons get this much slack so exact-equality examples stay stable
PAIR_SLACK = 1e-12


@dataclass(frozen=True)
class Modulus:
    """Monotone piecewise-linear modulus of continuity table.

    ``breakpoints`` is an increasing sequence of (argument, value) pairs
    starting at (0, 0).  Beyond the last breakpoint the table extends with
    the slope of its last segment, or jumps to infinity when ``unbounded``
    is set.
    """

    breakpoints: tuple[tuple[float, float], ...]
    unbounded: bool = False

    def __post_init__(self):
        bp = tuple((float(a), float(b)) for a, b in self.breakpoints)
        if not bp or bp[0] != (0.0, 0.0):
            raise DomainError("modulus table must start at (0, 0)")
        xs = [a for a, _ in bp]
        ys = [b for _, b in bp]
        if any(x1 <= x0 for x0, x1 in zip(xs, xs[1:])):
            raise DomainError("modulus arguments must be strictly increasing")
        if any(y1 < y0 for y0, y1 in zip(ys, ys[1:])):
            raise DomainError("modulus values must be nondecreasing")
        object.__setattr__(self, "breakpoints", bp)

    @classmethod
    def linear(cls, slope: float, span: float = 1.0) -> "Modulus":
        if slope < 0 or span <= 0:
            raise DomainError("slope must be nonnegative and span positive")
        return cls(((0.0, 0.0), (span, slope * span)))

    @classmethod
    def zero(cls, span: float = 1.0) -> "Modulus":
        return cls(((0.0, 0.0), (span, 0.0)))

    def __call__(self, delta: float) -> float:
        if delta < 0:
            raise DomainError("modulus argument must be nonnegative")
        xs = [a for a, _ in self.breakpoints]
        ys = [b for _, b in self.breakpoints]
        if delta <= xs[-1]:
            return float(np.interp(delta, xs, ys))
        if self.unbounded:
            return math.inf
        if len(xs) == 1:
            return ys[-1]
        slope = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
        return ys[-1] + slope * (delta - xs[-1])


def geometric_grid(levels: int = 8, base: float = 0.5, start: float = 0.5) -> list[float]:
    """Decreasing grid ``start * base**k``; the default halving grid."""
    if levels < 1:
        raise DomainError("need at least one grid level")
    return [start * base**k for k in range(levels)]


@dataclass(frozen=True)
class MembershipReport:
    """Outcome of a membership test, with a re-checkable witness.

    For trim tests the witness is the list of kept atom indices and
    ``retained_mass`` their mass; for gap tests the witness is a violating
    atom pair and ``retained_mass`` is the full mass on success, zero on
    failure.  ``approximate`` marks verdicts from the greedy fallback, which
    may only err toward ``False``.
    """

    verdict: bool
    retained_mass: float
    witness_atoms: tuple[int, ...] | None = None
    violating_pair: tuple[int, int] | None = None
    approximate: bool = False

    def __bool__(self) -> bool:
        return self.verdict


def measure_dispersion(marks: Sequence, masses: Sequence[float], markspace: MarkSpace) -> float:
    """Double integral of min(1, mark distance) against a mark measure squared."""
    marks = list(marks)
    ms = [float(v) for v in masses]
    if len(marks) != len(ms):
        raise DomainError("marks and masses must align")
    terms = []
    for (u, a), (v, b) in itertools.product(zip(marks, ms), repeat=2):
        if a and b:
            terms.append(min(1.0, markspace.distance(u, v)) * a * b)
    return math.fsum(terms)


def mark_dispersion(x: MmmSpace) -> float:
    """Expected truncated mark spread; zero exactly when a mark map exists.

    Per charged point, the dispersion of the normalized mark kernel is
    weighted by the point mass and summed.
    """
    per_point: dict[int, list] = {}
    for a in x.atoms:
        per_point.setdefault(a.point, []).append(a)
    terms = []
    for point, atoms in per_point.items():
        if len(atoms) == 1:
            continue
        nu = x.nu[point]
        for a, b in itertools.product(atoms, repeat=2):
            d = min(1.0, x.marks.distance(a.mark, b.mark))
            if d:
                terms.append(d * a.mass * b.mass / nu)
    return math.fsum(terms)


def _pair_tables(x: MmmSpace):
    pts, mks, masses = x.atom_arrays()
    r = x.space.dist[np.ix_(pts, pts)]
    d = x.marks.pairwise(mks, mks)
    return pts, masses, r, d


def uniform_mark_bound(x: MmmSpace, h: Modulus) -> MembershipReport:
    """Do all support atom pairs satisfy mark distance <= h(point distance)?"""
    if not x.atoms:
        return MembershipReport(True, 0.0)
    _, _, r, d = _pair_tables(x)
    n = len(x.atoms)
    for i in range(n):
        for j in range(i + 1, n):
            if d[i, j] > h(r[i, j]) + PAIR_SLACK:
                return MembershipReport(False, 0.0, violating_pair=(i, j))
    return MembershipReport(True, x.total_mass)


def local_mark_bound(x: MmmSpace, delta: float, eps: float) -> MembershipReport:
    """Do atom pairs closer than ``delta`` keep mark distance at most ``eps``?"""
    if delta <= 0 or eps <= 0:
        raise DomainError("delta and eps must be positive")
    if not x.atoms:
        return MembershipReport(True, 0.0)
    _, _, r, d = _pair_tables(x)
    n = len(x.atoms)
    for i in range(n):
        for j in range(i + 1, n):
            if r[i, j] < delta and d[i, j] > eps:
                return MembershipReport(False, 0.0, violating_pair=(i, j))
    return MembershipReport(True, x.total_mass)


def max_weight_independent_set(weights: Sequence[float], neighbors: Sequence[int]):
    """Exact maximum-weight independent set via bitmask branch and bound.

    ``neighbors[i]`` is the adjacency bitmask of vertex ``i`` (the bit for
    ``i`` itself may be set or not).  Returns (chosen index tuple, weight).
    """
    n = len(weights)
    masks = [int(neighbors[i]) | (1 << i) for i in range(n)]
    order = sorted(range(n), key=lambda i: -weights[i])
    chosen = []
    used = 0
    for i in order:
        if not used & (1 << i):
            chosen.append(i)
            used |= masks[i]
    best_weight = sum(weights[i] for i in chosen)
    best_set = tuple(sorted(chosen))

    def remaining_weight(mask: int) -> float:
        total = 0.0
        while mask:
            lsb = mask & -mask
            total += weights[lsb.bit_length() - 1]
            mask -= lsb
        return total

    stack = [(((1 << n) - 1), 0.0, (), sum(weights))]
    while stack:
        mask, weight, members, rest = stack.pop()
        nonlocal_best = best_weight
        if weight + rest <= nonlocal_best + 1e-15:
            continue
        if mask == 0:
            if weight > best_weight:
                best_weight = weight
                best_set = tuple(sorted(members))
            continue
        # branch on the heaviest remaining vertex
        pick, pick_w = -1, -1.0
        m = mask
        while m:
            lsb = m & -m
            i = lsb.bit_length() - 1
            if weights[i] > pick_w:
                pick, pick_w = i, weights[i]
            m -= lsb
        removed = masks[pick] & mask
        stack.append((mask & ~(1 << pick), weight, members, rest - weights[pick]))
        stack.append(
            (mask & ~removed, weight + weights[pick], members + (pick,), rest - remaining_weight(removed))
        )
    return best_set, best_weight


def _greedy_independent_set(weights, neighbors):
    n = len(weights)
    order = sorted(range(n), key=lambda i: -weights[i])
    chosen = []
    used = 0
    for i in order:
        if not used & (1 << i):
            chosen.append(i)
            used |= int(neighbors[i]) | (1 << i)
    return tuple(sorted(chosen)), sum(weights[i] for i in chosen)


def trimmed_mark_bound(
    x: MmmSpace,
    delta: float,
    eps: float,
    approx: bool = False,
    max_exact: int = 40,
) -> MembershipReport:
    """Can dropping at most ``eps`` mass enforce the local mark bound?

    Conflicting atom pairs (closer than ``delta`` with mark gap above
    ``eps``) cannot coexist in the retained sub-measure, and partial mass on
    an atom keeps it in the support, so the optimal trim is a maximum-weight
    independent set of the conflict graph.  Exact branch and bound up to
    ``max_exact`` atoms; beyond that a greedy fallback (enable with
    ``approx``) whose verdict may only be falsely negative.
    """
    if delta <= 0 or eps <= 0:
        raise DomainError("delta and eps must be positive")
    if not x.atoms:
        return MembershipReport(True, 0.0, witness_atoms=())
    _, masses, r, d = _pair_tables(x)
    n = len(x.atoms)
    conflict = (r < delta) & (d > eps)
    np.fill_diagonal(conflict, False)
    if not conflict.any():
        return MembershipReport(
            True, x.total_mass, witness_atoms=tuple(range(n))
        )
    neighbors = [0] * n
    for i in range(n):
        mask = 0
        for j in np.nonzero(conflict[i])[0]:
            mask |= 1 << int(j)
        neighbors[i] = mask
    approximate = False
    if n > max_exact:
        if not approx:
            raise CapabilityError(
                f"exact trim search handles at most {max_exact} atoms; "
                f"got {n} (pass approx=True for the greedy fallback)"
            )
        kept, kept_mass = _greedy_independent_set(list(masses), neighbors)
        approximate = True
    else:
        kept, kept_mass = max_weight_independent_set(list(masses), neighbors)
    verdict = kept_mass >= x.total_mass - eps - ARITH_SLACK
    return MembershipReport(
        verdict, float(kept_mass), witness_atoms=kept, approximate=approximate
    )


def trimmed_bound_on_grid(
    x: MmmSpace, h: Modulus, deltas: Sequence[float], approx: bool = False
) -> bool:
    """Trimmed mark bound at every grid level ``(delta, h(delta))``."""
    deltas = list(deltas)
    if not deltas:
        raise DomainError("grid must be nonempty")
    return all(trimmed_mark_bound(x, dl, h(dl), approx=approx).verdict for dl in deltas)


def dispersion_clearance(
    x: MmmSpace,
    m: int,
    delta_grid: Sequence[float] | None = None,
    eps_grid: Sequence[float] | None = None,
    approx: bool = False,
) -> float:
    """Certified lower bound on the distance to dispersion >= 1/m spaces.

    Returns the largest grid ``delta`` such that for some grid ``eps`` the
    space satisfies the trimmed bound at ``(2 delta, eps)`` while
    ``(eps + 2 delta) * (2 + total mass + delta)`` stays below ``1/m``; every
    space within marked Gromov-Prohorov distance ``delta`` then has
    dispersion below ``1/m``, so the ball avoids those spaces and their
    closure.  Zero when no grid pair certifies anything.
    """
    if m < 1:
        raise DomainError("level must be at least 1")
    delta_grid = geometric_grid() if delta_grid is None else list(delta_grid)
    eps_grid = geometric_grid(12) if eps_grid is None else list(eps_grid)
    if not delta_grid or not eps_grid:
        raise DomainError("grids must be nonempty")
    total = x.total_mass
    for delta in sorted(delta_grid, reverse=True):
        for eps in sorted(eps_grid):
            if (eps + 2 * delta) * (2 + total + delta) >= 1.0 / m:
                continue
            if trimmed_mark_bound(x, 2 * delta, eps, approx=approx).verdict:
                return float(delta)
    return 0.0


def fmm_metric_surrogate(
    x: MmmSpace,
    y: MmmSpace,
    m_max: int,
    delta_grid: Sequence[float] | None = None,
    eps_grid: Sequence[float] | None = None,
    budget: int = 16,
    rng=None,
    tol: float = 1e-9,
) -> float:
    """Diagnostic surrogate for the complete metric on mark-admitting spaces.

    Upper-bounds the marked Gromov-Prohorov part and adds the largest
    ``min(2^-m, |1/clearance_m(x) - 1/clearance_m(y)|)`` term over
    ``m <= m_max``.  Built from certified one-sided quantities, hence a
    diagnostic rather than the exact metric.  Raises
    :class:`CapabilityError` when a clearance cannot be certified positive.
    """
    if m_max < 0:
        raise DomainError("m_max must be nonnegative")
    base, _ = gromov_prohorov_upper(x, y, budget=budget, rng=rng, tol=tol)
    extra = 0.0
    for m in range(1, m_max + 1):
        ra = dispersion_clearance(x, m, delta_grid, eps_grid)
        rb = dispersion_clearance(y, m, delta_grid, eps_grid)
        if ra == 0.0 or rb == 0.0:
            raise CapabilityError(
                f"cannot certify positive clearance at level {m}"
            )
        extra = max(extra, min(2.0**-m, abs(1.0 / ra - 1.0 / rb)))
    return base + extra


# ---------------------------------------------------------------------------
# limit criteria on finite prefixes


@dataclass(frozen=True)
class EvidenceRow:
    index: int
    delta: float
    verdict: bool
    retained_mass: float
    witness_size: int

    def as_csv(self):
        return (self.index, self.delta, str(self.verdict), self.retained_mass, self.witness_size)


@dataclass(frozen=True)
class EvidenceReport:
    """Finite-prefix evidence for a limit criterion; never a proof."""

    rows: tuple[EvidenceRow, ...]
    per_delta: tuple[tuple[float, float], ...]  # (delta, tail frequency or proxy)
    supported: bool
    detail: str = ""

    CSV_HEADER = ("n", "delta", "verdict", "retained_mass", "witness_size")

    def csv_rows(self):
        return [row.as_csv() for row in self.rows]


def limit_mark_evidence(
    seq: Sequence[MmmSpace],
    h: Modulus,
    deltas: Sequence[float],
    tail_fraction: float = 0.5,
    threshold: float = 0.5,
    approx: bool = False,
) -> EvidenceReport:
    """Membership frequency of the trimmed bound along a finite prefix.

    For each grid ``delta`` the trimmed bound at ``(delta, h(delta))`` is
    evaluated per sequence member; the criterion is supported when, for every
    ``delta``, the membership frequency over the trailing ``tail_fraction``
    of the prefix reaches ``threshold``.
    """
    seq = list(seq)
    if not seq:
        raise DomainError("sequence must be nonempty")
    deltas = list(deltas)
    if not deltas:
        raise DomainError("grid must be nonempty")
    rows = []
    per_delta = []
    supported = True
    tail_start = len(seq) - max(1, math.ceil(len(seq) * tail_fraction))
    for delta in deltas:
        hits = 0
        tail_total = 0
        for n, x in enumerate(seq):
            rep = trimmed_mark_bound(x, delta, h(delta), approx=approx)
            rows.append(
                EvidenceRow(
                    n,
                    delta,
                    rep.verdict,
                    rep.retained_mass,
                    len(rep.witness_atoms or ()),
                )
            )
            if n >= tail_start:
                tail_total += 1
                hits += bool(rep.verdict)
        freq = hits / tail_total
        per_delta.append((float(delta), freq))
        if freq < threshold:
            supported = False
    return EvidenceReport(tuple(rows), tuple(per_delta), supported)


def limit_mark_evidence_on_sets(
    seq: Sequence[FmmSpace],
    subsets: Sequence[Sequence[Sequence[int]]],
    h: Modulus,
    deltas: Sequence[float],
    tail_fraction: float = 0.5,
) -> EvidenceReport:
    """Check the two-part criterion on explicit good sets.

    ``subsets[n][k]`` lists the point indices of the good set of member ``n``
    at grid level ``deltas[k]``.  The pair condition (points of the good set
    closer than ``delta`` have mark gap at most ``h(delta)``) is checked
    exactly for every member; the mass condition (measure outside the good
    set at most ``h(delta)``) is reported as a tail-minimum proxy for its
    infinitely-often form.
    """
    seq = list(seq)
    deltas = list(deltas)
    if not seq or not deltas:
        raise DomainError("sequence and grid must be nonempty")
    if len(subsets) != len(seq) or any(len(s) != len(deltas) for s in subsets):
        raise DomainError("subsets must be indexed per (member, grid level)")
    rows = []
    per_delta = []
    supported = True
    tail_start = len(seq) - max(1, math.ceil(len(seq) * tail_fraction))
    for k, delta in enumerate(deltas):
        bound = h(delta)
        tail_masses = []
        for n, x in enumerate(seq):
            good = sorted(set(int(i) for i in subsets[n][k]))
            for i in good:
                if not 0 <= i < len(x.space):
                    raise DomainError(f"subset index {i} outside member {n}")
            pair_ok = True
            for a_pos, i in enumerate(good):
                for j in good[a_pos + 1 :]:
                    if x.space.dist[i, j] < delta and (
                        x.marks.distance(x.markmap[i], x.markmap[j]) > bound + PAIR_SLACK
                    ):
                        pair_ok = False
                        break
                if not pair_ok:
                    break
            outside = float(x.total_mass - sum(x.nu[i] for i in good))
            mass_ok = outside <= bound + PAIR_SLACK
            rows.append(
                EvidenceRow(n, delta, pair_ok and mass_ok, x.total_mass - outside, len(good))
            )
            if not pair_ok:
                supported = False
            if n >= tail_start:
                tail_masses.append(outside)
        proxy = min(tail_masses)
        per_delta.append((float(delta), proxy))
        if proxy > bound + PAIR_SLACK:
            supported = False
    return EvidenceReport(
        tuple(rows),
        tuple(per_delta),
        supported,
        detail="per_delta carries the tail-minimum of the outside mass",
    )


def ball_diameter_evidence(
    seq: Sequence[FmmSpace],
    subsets: Sequence[Sequence[Sequence[int]]],
    deltas: Sequence[float],
    tail_fraction: float = 0.5,
    support_threshold: float = 0.1,
) -> EvidenceReport:
    """Mass outside the good set plus truncated mark diameter of local balls.

    Evaluates, per member and grid level, the quantity
    ``nu(outside) + sum_x nu(x) * min(1, diam of marks on the delta-ball
    within the good set)`` exactly on atoms.  The per-delta value is the
    tail-minimum proxy of the limit inferior; the verdict is supported when
    the proxy at the smallest grid level drops to ``support_threshold``.
    """
    seq = list(seq)
    deltas = list(deltas)
    if not seq or not deltas:
        raise DomainError("sequence and grid must be nonempty")
    if len(subsets) != len(seq) or any(len(s) != len(deltas) for s in subsets):
        raise DomainError("subsets must be indexed per (member, grid level)")
    rows = []
    per_delta = []
    tail_start = len(seq) - max(1, math.ceil(len(seq) * tail_fraction))
    for k, delta in enumerate(deltas):
        tail_vals = []
        for n, x in enumerate(seq):
            good = sorted(set(int(i) for i in subsets[n][k]))
            good_mask = np.zeros(len(x.space), dtype=bool)
            good_mask[good] = True
            outside = float(x.total_mass - x.nu[good_mask].sum())
            integral = 0.0
            for i in good:
                if x.nu[i] <= 0:
                    continue
                ball = [j for j in good if x.space.dist[i, j] < delta]
                ball_marks = [x.markmap[j] for j in ball]
                diam = max(
                    (
                        x.marks.distance(u, v)
                        for u, v in itertools.combinations(ball_marks, 2)
                    ),
                    default=0.0,
                )
                integral += x.nu[i] * min(1.0, diam)
            value = outside + integral
            rows.append(EvidenceRow(n, delta, value <= support_threshold, value, len(good)))
            if n >= tail_start:
                tail_vals.append(value)
        per_delta.append((float(delta), min(tail_vals)))
    smallest = min(per_delta, key=lambda t: t[0])
    supported = smallest[1] <= support_threshold
    return EvidenceReport(
        tuple(rows),
        tuple(per_delta),
        supported,
        detail="per_delta carries the tail-minimum of the evaluated expression",
    )


# ---------------------------------------------------------------------------
# spaces without a mark function


def no_mark_function_example(kind: str, resolution: int) -> MmmSpace:
    """Discretized spaces whose dispersion equals 1/4 at every resolution.

    ``square``: the unit square carries two marks (equal split) and a
    disjoint segment carries one; mass is half and half.  ``ultrametric``:
    sequence spaces over a ternary and a binary alphabet, truncated at depth
    ``resolution``, with distance exp(-first differing level) and uniform
    branch measures; again two marks on one half, one on the other.
    """
    if resolution < 1:
        raise DomainError("resolution must be at least 1")
    marks = MarkSpace.finite(["0", "1"])
    if kind == "square":
        res = resolution
        coords = []
        labels = []
        for i in range(res):
            for j in range(res):
                coords.append(((i + 0.5) / res, (j + 0.5) / res))
                labels.append(f"sq:{i},{j}")
        n_square = len(coords)
        for k in range(res):
            coords.append((2.0 + (k + 0.5) / res, 0.0))
            labels.append(f"seg:{k}")
        pts = np.array(coords)
        diff = pts[:, None, :] - pts[None, :, :]
        dist = np.sqrt((diff**2).sum(axis=2))
        space = FiniteSpace(labels, dist)
        atoms = []
        square_mass = 0.5 / n_square
        seg_mass = 0.5 / res
        for p in range(n_square):
            atoms.append((p, "0", square_mass / 2))
            atoms.append((p, "1", square_mass / 2))
        for p in range(n_square, n_square + res):
            atoms.append((p, "0", seg_mass))
        return MmmSpace(space, marks, atoms)
    if kind == "ultrametric":
        depth = resolution
        seqs_a = list(itertools.product((0, 1, 2), repeat=depth))
        seqs_b = list(itertools.product((3, 4), repeat=depth))
        seqs = np.array(seqs_a + seqs_b, dtype=np.int8)
        labels = ["a:" + "".join(map(str, s)) for s in seqs_a] + [
            "b:" + "".join(map(str, s)) for s in seqs_b
        ]
        n = len(seqs)
        dist = np.zeros((n, n))
        assigned = np.zeros((n, n), dtype=bool)
        np.fill_diagonal(assigned, True)
        for level in range(depth):
            differ = seqs[:, level][:, None] != seqs[:, level][None, :]
            fresh = differ & ~assigned
            dist[fresh] = math.exp(-(level + 1))
            assigned |= differ
        space = FiniteSpace(labels, dist)
        atoms = []
        mass_a = 0.5 / len(seqs_a)
        mass_b = 0.5 / len(seqs_b)
        for p in range(len(seqs_a)):
            atoms.append((p, "0", mass_a / 2))
            atoms.append((p, "1", mass_a / 2))
        for p in range(len(seqs_a), n):
            atoms.append((p, "0", mass_b))
        return MmmSpace(space, marks, atoms)
    raise DomainError(f"unknown example kind {kind!r}")


def tightest_modulus(x: FmmSpace) -> Modulus:
    """Smallest piecewise-linear modulus controlling the mark map on atoms.

    Fails when two charged points at distance zero carry different marks, in
    which case no continuous modulus exists.
    """
    support = [int(i) for i in x.support_points]
    gaps: dict[float, float] = {}
    for i, j in itertools.combinations(support, 2):
        r = float(x.space.dist[i, j])
        d = float(x.marks.distance(x.markmap[i], x.markmap[j]))
        gaps[r] = max(gaps.get(r, 0.0), d)
    if gaps.get(0.0, 0.0) > 0:
        raise DomainError("distinct marks at distance zero admit no modulus")
    xs = sorted(r for r in gaps if r > 0)
    points = [(0.0, 0.0)]
    running = 0.0
    for r in xs:
        running = max(running, gaps[r])
        points.append((r, running))
    if len(points) == 1:
        points.append((1.0, 0.0))
    return Modulus(tuple(points))
