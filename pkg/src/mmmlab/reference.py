"""Brute-force reference implementations.

These are the independent sides of the dual-route checks: direct subset
enumeration against the flow-based Prohorov solver, full subset DP against
the branch-and-bound trim search, and explicit block enumeration against the
closed double-sum generator.  They are deliberately simple and slow.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .errors import DomainError
from .genealogy import LambdaMeasure, merge_rate
from .marked import MmmSpace
from .measures import FiniteMeasure, _same_space


def prohorov_bruteforce(mu1: FiniteMeasure, mu2: FiniteMeasure) -> float:
    """Exact Prohorov distance by enumerating subsets and threshold intervals.

    On each interval between consecutive support distances the neighbourhood
    map is constant, so the smallest admissible threshold there is the worst
    mass deficit over all subsets; the distance is the minimum over
    intervals.  Exponential in the support size.
    """
    space = _same_space(mu1, mu2)
    pts = sorted(set(mu1.support.tolist()) | set(mu2.support.tolist()))
    if not pts:
        return 0.0
    if len(pts) > 12:
        raise DomainError("brute-force oracle is limited to 12 support points")
    d = space.dist[np.ix_(pts, pts)]
    w1 = mu1.mass[pts]
    w2 = mu2.mass[pts]
    breaks = sorted({0.0} | {float(v) for v in np.unique(d) if v > 0})
    n = len(pts)
    best = math.inf
    for li, lo in enumerate(breaks):
        hi = breaks[li + 1] if li + 1 < len(breaks) else math.inf
        close = d <= lo  # eps in (lo, hi] gives the open eps-ball {dist < eps}
        needed = 0.0
        for mask in range(1, 1 << n):
            members = [i for i in range(n) if mask >> i & 1]
            nbr = np.zeros(n, dtype=bool)
            for i in members:
                nbr |= close[i]
            a1 = float(w1[members].sum())
            a2 = float(w2[members].sum())
            needed = max(needed, a1 - float(w2[nbr].sum()), a2 - float(w1[nbr].sum()))
        if needed <= hi:
            best = min(best, max(needed, lo))
    return best


def trimmed_bound_bruteforce(x: MmmSpace, delta: float, eps: float):
    """Exhaustive best retained mass over all atom subsets.

    Subset DP over bitmasks: a set is admissible when it spans no conflicting
    pair (distance below ``delta`` with mark gap above ``eps``).  Returns
    (best retained mass, verdict).
    """
    if delta <= 0 or eps <= 0:
        raise DomainError("delta and eps must be positive")
    pts, mks, masses = x.atom_arrays()
    n = len(pts)
    if n > 20:
        raise DomainError("subset oracle is limited to 20 atoms")
    if n == 0:
        return 0.0, True
    r = x.space.dist[np.ix_(pts, pts)]
    d = x.marks.pairwise(mks, mks)
    conflicts = [0] * n
    for i in range(n):
        for j in range(n):
            if i != j and r[i, j] < delta and d[i, j] > eps:
                conflicts[i] |= 1 << j
    size = 1 << n
    indep = [False] * size
    weight = [0.0] * size
    indep[0] = True
    best = 0.0
    for mask in range(1, size):
        low = mask & -mask
        i = low.bit_length() - 1
        rest = mask ^ low
        if indep[rest] and not (conflicts[i] & rest):
            indep[mask] = True
            weight[mask] = weight[rest] + masses[i]
            if weight[mask] > best:
                best = weight[mask]
    return best, best >= x.total_mass - eps - 1e-12


def generator_enumeration(f, x: float, n: int, law: LambdaMeasure, theta: float) -> float:
    """Generator of the mutated-fraction chain by enumerating every block.

    Sums, over all individual blocks and both parent choices, the rate times
    the induced change of ``f``; mutation contributes per unmutated
    individual.  Exponential in ``n``.
    """
    if n > 14:
        raise DomainError("block enumeration is limited to n <= 14")
    nx = x * n
    if abs(nx - round(nx)) > 1e-9:
        raise DomainError("n x must be an integer")
    nx = int(round(nx))
    fx = f(x)
    total = theta * (n - nx) * (f(x + 1.0 / n) - fx)
    for k in range(2, n + 1):
        rate = merge_rate(law, n, k)
        if rate <= 0:
            continue
        for block in itertools.combinations(range(n), k):
            m = sum(1 for i in block if i < nx)
            gain = f(x + (k - m) / n) - fx
            loss = f(x - m / n) - fx
            total += rate * (m * gain + (k - m) * loss) / k
    return total
