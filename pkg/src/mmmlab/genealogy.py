"""Event-driven genealogy simulators and their scaling-limit checkers.

The population models evolve a finite set of individuals carrying types:
pairwise resampling (Moran) or uniform block resampling driven by a finite
measure on [0, 1] (Cannings), plus independent mutation through a stochastic
kernel.  Genealogical distance between two individuals is twice the time to
their most recent common ancestor, maintained through a matrix of ancestor
times so that between events no per-tick updates are needed.

Alongside the population simulators live the scalar companions used for
quantitative bounds: the mutated-ancestry fraction jump process, its
diffusion limit, the block-merge rates, the coalescent sampler, an exact
discrete generator, the modulus of cadlagness, and two Monte-Carlo
verification harnesses.

Individuals are indexed 0..N-1.  All randomness flows through explicit
numpy generators; replica splits use ``rng.spawn`` so concurrent replicas
stay reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad

from .errors import DomainError
from .marked import FmmSpace, MarkSpace
from .measures import ARITH_SLACK, FiniteMeasure, FiniteSpace


# ---------------------------------------------------------------------------
# parameters and event records


def uniform_kernel(n_types: int) -> np.ndarray:
    """Mutation kernel resampling the type uniformly over the alphabet."""
    if n_types < 1:
        raise DomainError("need at least one type")
    return np.full((n_types, n_types), 1.0 / n_types)


@dataclass(frozen=True)
class PopulationParams:
    """Shared inputs of the population simulators.

    ``mutation_kernel`` rows are distributions over type indices;
    ``initial_types`` holds indices into ``marks.labels``.
    """

    size: int
    theta: float
    mutation_kernel: np.ndarray
    marks: MarkSpace
    initial_dist: np.ndarray
    initial_types: tuple[int, ...]

    def __post_init__(self):
        if self.size < 1:
            raise DomainError("population size must be positive")
        if self.theta < 0:
            raise DomainError("mutation rate must be nonnegative")
        if self.marks.kind != "finite":
            raise DomainError("population types live in a finite mark space")
        q = np.asarray(self.mutation_kernel, dtype=float)
        k = len(self.marks.labels)
        if q.shape != (k, k):
            raise DomainError(f"mutation kernel must be {k}x{k}")
        if (q < -ARITH_SLACK).any() or np.abs(q.sum(axis=1) - 1.0).max() > 1e-9:
            raise DomainError("mutation kernel rows must be distributions")
        r0 = np.asarray(self.initial_dist, dtype=float)
        if r0.shape != (self.size, self.size):
            raise DomainError("initial distance matrix has wrong shape")
        types = tuple(int(t) for t in self.initial_types)
        if len(types) != self.size or any(not 0 <= t < k for t in types):
            raise DomainError("initial types must index the mark labels")
        object.__setattr__(self, "mutation_kernel", q)
        object.__setattr__(self, "initial_dist", r0)
        object.__setattr__(self, "initial_types", types)


@dataclass(frozen=True)
class MoranParams(PopulationParams):
    """Moran model: every ordered pair resamples at rate gamma / 2."""

    gamma: float = 1.0

    def __post_init__(self):
        super().__post_init__()
        if self.gamma <= 0:
            raise DomainError("resampling rate must be positive")


def default_params(
    n: int,
    gamma: float = 1.0,
    theta: float = 0.0,
    n_types: int = 2,
    initial_dist: np.ndarray | None = None,
) -> MoranParams:
    """Moran parameters with uniform mutation, zero distances, all-zero types."""
    r0 = np.zeros((n, n)) if initial_dist is None else initial_dist
    return MoranParams(
        size=n,
        theta=theta,
        mutation_kernel=uniform_kernel(n_types),
        marks=MarkSpace.finite([str(i) for i in range(n_types)]),
        initial_dist=r0,
        initial_types=(0,) * n,
        gamma=gamma,
    )


@dataclass(frozen=True)
class Event:
    """One Poisson event: resampling arrow, mutation dot, or block merge.

    ``source`` is the parent (arrow tail) or the mutating individual;
    ``targets`` lists the replaced individuals (empty for mutations).
    """

    time: float
    kind: str  # "resample" | "mutate" | "block"
    source: int
    targets: tuple[int, ...] = ()
    new_type: int | None = None


class EventLog:
    """Time-ordered event list with strictly increasing times."""

    def __init__(self, size: int, events: Sequence[Event] = ()):
        self.size = int(size)
        self.events = list(events)
        last = -math.inf
        for ev in self.events:
            if ev.time <= last:
                raise DomainError("event times must be strictly increasing")
            last = ev.time

    def append(self, event: Event) -> None:
        if self.events and event.time <= self.events[-1].time:
            raise DomainError("event times must be strictly increasing")
        self.events.append(event)

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    CSV_HEADER = ("time", "kind", "source", "target", "type")

    def csv_rows(self):
        rows = []
        for ev in self.events:
            target = ";".join(str(t) for t in ev.targets)
            newt = "" if ev.new_type is None else ev.new_type
            rows.append((ev.time, ev.kind, ev.source, target, newt))
        return rows


@dataclass(frozen=True)
class MoranState:
    """Population snapshot: time, distance matrix, types, uniform weights."""

    time: float
    dist: np.ndarray
    types: tuple[int, ...]

    @property
    def weight(self) -> np.ndarray:
        n = len(self.types)
        return np.full(n, 1.0 / n)

    def as_functional_space(self, marks: MarkSpace, labels=None) -> FmmSpace:
        n = len(self.types)
        labels = labels if labels is not None else tuple(f"i{k}" for k in range(n))
        space = FiniteSpace(labels, self.dist)
        return FmmSpace(space, marks, self.weight, [marks.labels[t] for t in self.types])


@dataclass(frozen=True)
class ScalarPath:
    """Piecewise-constant (or Euler-grid) path with values in [0, 1]."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.shape != v.shape or t.ndim != 1 or not len(t):
            raise DomainError("times and values must be matching 1-d arrays")
        if (np.diff(t) <= 0).any():
            raise DomainError("path times must be increasing")
        if v.min() < -ARITH_SLACK or v.max() > 1 + ARITH_SLACK:
            raise DomainError("path values must lie in [0, 1]")
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    def value_at(self, t: float) -> float:
        idx = int(np.searchsorted(self.times, t, side="right")) - 1
        if idx < 0:
            raise DomainError(f"path starts at {self.times[0]}, asked for {t}")
        return float(self.values[idx])

    def maximum(self, up_to: float | None = None) -> float:
        if up_to is None:
            return float(self.values.max())
        idx = int(np.searchsorted(self.times, up_to, side="right"))
        if idx == 0:
            raise DomainError("path not defined that early")
        return float(self.values[:idx].max())

    CSV_HEADER = ("time", "value")

    def csv_rows(self):
        return list(zip(self.times.tolist(), self.values.tolist()))


class _Blocks:
    """Block buffer over a generator: scalar draws without per-call overhead."""

    def __init__(self, rng, size: int = 4096):
        self._rng = rng
        self._size = size
        self._uni = np.empty(0)
        self._exp = np.empty(0)
        self._iu = 0
        self._ie = 0

    def exponential(self) -> float:
        if self._ie >= len(self._exp):
            self._exp = self._rng.exponential(size=self._size)
            self._ie = 0
        v = self._exp[self._ie]
        self._ie += 1
        return float(v)

    def random(self) -> float:
        if self._iu >= len(self._uni):
            self._uni = self._rng.random(size=self._size)
            self._iu = 0
        v = self._uni[self._iu]
        self._iu += 1
        return float(v)

    def integer(self, n: int) -> int:
        return min(int(self.random() * n), n - 1)


# ---------------------------------------------------------------------------
# population simulators


def _snapshot(params: PopulationParams, labels, t, anc, types) -> FmmSpace:
    dist = 2.0 * (t - anc)
    np.fill_diagonal(dist, 0.0)
    state = MoranState(float(t), dist, tuple(int(v) for v in types))
    return state.as_functional_space(params.marks, labels)


def _mutate_type(params, blocks, current: int) -> int:
    row = params.mutation_kernel[current]
    u = blocks.random()
    acc = 0.0
    for j, p in enumerate(row):
        acc += p
        if u <= acc:
            return j
    return len(row) - 1


def moran_simulate(
    params: MoranParams,
    horizon: float,
    sample_times: Sequence[float],
    rng,
) -> tuple[list[FmmSpace], EventLog]:
    """Run the tree-valued Moran model with mutation.

    Every ordered pair (k, l) carries an independent rate gamma/2 clock; at
    a ring, the offspring of k replaces l (type copied, distance zeroed).
    Each individual mutates at rate theta by drawing from the kernel row of
    its current type.  Off-diagonal distances grow at rate 2 between events.
    Snapshots are functionally marked spaces with uniform weights, taken at
    the (sorted) ``sample_times``.
    """
    if horizon <= 0:
        raise DomainError("time horizon must be positive")
    sample_times = sorted(float(s) for s in sample_times)
    if sample_times and (sample_times[0] < 0 or sample_times[-1] > horizon):
        raise DomainError("sample times must lie in [0, horizon]")
    n = params.size
    # ancestor-time matrix: distance at time t is 2 (t - anc); seeding with
    # -r0/2 reproduces the initial matrix and keeps growth uniform
    anc = -np.asarray(params.initial_dist, dtype=float) / 2.0
    anc = anc.copy()
    types = np.array(params.initial_types, dtype=int)
    labels = tuple(f"i{k}" for k in range(n))
    res_total = n * (n - 1) * params.gamma / 2.0
    mut_total = params.theta * n
    total = res_total + mut_total
    blocks = _Blocks(rng)
    log = EventLog(n)
    snaps: list[FmmSpace] = []
    next_sample = 0
    t = 0.0
    while True:
        wait = math.inf if total <= 0 else blocks.exponential() / total
        t_next = t + wait
        # snapshots strictly before the next event see the pre-event state
        while next_sample < len(sample_times) and sample_times[next_sample] < t_next:
            s = sample_times[next_sample]
            snaps.append(_snapshot(params, labels, s, anc, types))
            next_sample += 1
        if t_next > horizon:
            break
        t = t_next
        if blocks.random() * total < res_total:
            k = blocks.integer(n)
            l = blocks.integer(n - 1)
            if l >= k:
                l += 1
            row = anc[k].copy()
            anc[l, :] = row
            anc[:, l] = row
            anc[l, k] = anc[k, l] = t
            anc[l, l] = 0.0
            types[l] = types[k]
            log.append(Event(t, "resample", int(k), (int(l),)))
        else:
            k = blocks.integer(n)
            new = _mutate_type(params, blocks, int(types[k]))
            types[k] = new
            log.append(Event(t, "mutate", int(k), (), new))
    return snaps, log


def cannings_simulate(
    params: PopulationParams,
    law: "LambdaMeasure",
    horizon: float,
    sample_times: Sequence[float],
    rng,
) -> tuple[list[FmmSpace], EventLog]:
    """Run the tree-valued Cannings model driven by a measure on [0, 1].

    For each block size k, a uniformly chosen k-set is replaced at total
    rate binom(N, k) * merge_rate(law, N, k) by offspring of one uniformly
    chosen block member.  Mutation fires only at its own events, never
    inside a block replacement.
    """
    if horizon <= 0:
        raise DomainError("time horizon must be positive")
    sample_times = sorted(float(s) for s in sample_times)
    if sample_times and (sample_times[0] < 0 or sample_times[-1] > horizon):
        raise DomainError("sample times must lie in [0, horizon]")
    n = params.size
    if n < 2:
        raise DomainError("Cannings model needs at least two individuals")
    block_rates = np.array(
        [math.comb(n, k) * merge_rate(law, n, k) for k in range(2, n + 1)]
    )
    if block_rates.sum() <= 0:
        raise DomainError("all block-merge rates vanish")
    mut_total = params.theta * n
    total = float(block_rates.sum()) + mut_total
    cum = np.cumsum(block_rates)
    anc = -np.asarray(params.initial_dist, dtype=float) / 2.0
    anc = anc.copy()
    types = np.array(params.initial_types, dtype=int)
    labels = tuple(f"i{k}" for k in range(n))
    blocks = _Blocks(rng)
    log = EventLog(n)
    snaps: list[FmmSpace] = []
    next_sample = 0
    t = 0.0
    while True:
        t_next = t + blocks.exponential() / total
        while next_sample < len(sample_times) and sample_times[next_sample] < t_next:
            s = sample_times[next_sample]
            snaps.append(_snapshot(params, labels, s, anc, types))
            next_sample += 1
        if t_next > horizon:
            break
        t = t_next
        u = blocks.random() * total
        if u < cum[-1]:
            k = 2 + int(np.searchsorted(cum, u, side="right"))
            k = min(k, n)
            members = rng.choice(n, size=k, replace=False)
            parent = int(members[blocks.integer(k)])
            parent_row = anc[parent].copy()
            for b in members:
                anc[b, :] = parent_row
                anc[:, b] = parent_row
            grid = np.ix_(members, members)
            anc[grid] = t
            for b in members:
                anc[b, b] = 0.0
            types[members] = types[parent]
            others = tuple(int(b) for b in sorted(members) if b != parent)
            log.append(Event(t, "block", parent, others))
        else:
            k = blocks.integer(n)
            new = _mutate_type(params, blocks, int(types[k]))
            types[k] = new
            log.append(Event(t, "mutate", int(k), (), new))
    return snaps, log


def mutated_lineage_path(log: EventLog, t0: float, n: int):
    """Individuals whose ancestry since ``t0`` passed through a mutation.

    Replays the event log from ``t0`` with the three update rules: an arrow
    out of the set adds its targets, a mutation adds the individual, an
    arrow from outside the set removes its targets.  Returns the
    piecewise-constant path as (time, frozenset) steps starting at
    ``(t0, empty)``.
    """
    if log.events and not (
        -ARITH_SLACK <= t0 <= log.events[-1].time + ARITH_SLACK
    ):
        raise DomainError("t0 outside the logged time range")
    current: set[int] = set()
    path = [(float(t0), frozenset())]
    for ev in log.events:
        if ev.time <= t0:
            continue
        if ev.kind == "mutate":
            current.add(ev.source)
        elif ev.kind in ("resample", "block"):
            if ev.source in current:
                current.update(ev.targets)
            else:
                current.difference_update(ev.targets)
        else:
            raise DomainError(f"unknown event kind {ev.kind!r}")
        path.append((ev.time, frozenset(current)))
    return path


# ---------------------------------------------------------------------------
# scalar companions


def mutated_fraction_moran(
    n: int, gamma: float, theta: float, horizon: float, rng
) -> ScalarPath:
    """Jump process of the mutated-ancestry fraction in the Moran model.

    State x on the grid {0, 1/N, ..., 1}, started at 0; down jumps at rate
    (gamma/2) N^2 x (1-x), up jumps at that rate plus theta N (1-x).
    """
    if n < 1:
        raise DomainError("population size must be positive")
    if horizon <= 0:
        raise DomainError("time horizon must be positive")
    blocks = _Blocks(rng)
    m = 0
    t = 0.0
    times = [0.0]
    values = [0.0]
    while True:
        sym = 0.5 * gamma * m * (n - m)
        up = sym + theta * (n - m)
        total = sym + up
        if total <= 0:
            break
        t += blocks.exponential() / total
        if t > horizon:
            break
        m += 1 if blocks.random() * total < up else -1
        times.append(t)
        values.append(m / n)
    return ScalarPath(np.array(times), np.array(values))


def mutated_fraction_diffusion(
    gamma: float, theta: float, horizon: float, dt: float, rng
) -> ScalarPath:
    """Euler scheme for dZ = theta (1-Z) dt + sqrt(gamma Z (1-Z)) dB, Z0 = 0.

    The radicand is floored at zero and the state clamped to [0, 1] after
    every step.
    """
    if dt <= 0:
        raise DomainError("step size must be positive")
    if horizon <= 0:
        raise DomainError("time horizon must be positive")
    steps = int(math.ceil(horizon / dt))
    noise = rng.normal(size=steps)
    sqdt = math.sqrt(dt)
    z = 0.0
    values = np.empty(steps + 1)
    values[0] = 0.0
    for i in range(steps):
        rad = max(gamma * z * (1.0 - z), 0.0)
        z = z + theta * (1.0 - z) * dt + math.sqrt(rad) * sqdt * noise[i]
        z = min(max(z, 0.0), 1.0)
        values[i + 1] = z
    times = np.linspace(0.0, steps * dt, steps + 1)
    return ScalarPath(times, values)


@dataclass(frozen=True)
class BoundReport:
    """Monte-Carlo exceedance estimate checked against a closed-form bound."""

    estimate: float
    stderr: float
    bound: float
    passed: bool
    replicas: int
    exceedances: int
    params: dict = field(default_factory=dict)
    sups: tuple[float, ...] = ()

    CSV_HEADER = ("replica", "sup", "exceeded")

    def csv_rows(self):
        a = self.params.get("a")
        return [
            (i, s, str(bool(s >= a))) for i, s in enumerate(self.sups)
        ]


def fraction_bound_constant(gamma: float, theta: float) -> float:
    """Second-moment constant theta (2 theta + gamma) / 2 of the limit SDE."""
    return 0.5 * theta * (2.0 * theta + gamma)


def verify_mutation_fraction_bound(
    n: int,
    gamma: float,
    theta: float,
    delta: float,
    a: float,
    replicas: int,
    rng,
) -> BoundReport:
    """Estimate P(sup of the fraction over [0, delta] >= a) against C a^-2 delta^2.

    The bound holds for the large-population limit; the PASS criterion
    therefore allows three binomial standard errors of slack on top.
    """
    if a <= 0 or delta <= 0:
        raise DomainError("a and delta must be positive")
    if replicas < 100:
        raise DomainError("need at least 100 replicas")
    rngs = rng.spawn(replicas)
    sups = np.empty(replicas)
    for i in range(replicas):
        path = mutated_fraction_moran(n, gamma, theta, delta, rngs[i])
        sups[i] = path.values.max()
    exceed = int((sups >= a).sum())
    est = exceed / replicas
    stderr = math.sqrt(est * (1.0 - est) / replicas)
    bound = fraction_bound_constant(gamma, theta) * delta**2 / a**2
    return BoundReport(
        estimate=est,
        stderr=stderr,
        bound=bound,
        passed=est <= bound + 3.0 * stderr,
        replicas=replicas,
        exceedances=exceed,
        params={"n": n, "gamma": gamma, "theta": theta, "delta": delta, "a": a},
        sups=tuple(float(s) for s in sups),
    )


# ---------------------------------------------------------------------------
# merge rates, coalescent, generator


@dataclass(frozen=True)
class LambdaMeasure:
    """Finite measure on [0, 1]: atoms plus a piecewise-constant density."""

    atoms: tuple[tuple[float, float], ...] = ()
    density_pieces: tuple[tuple[float, float, float], ...] = ()  # (lo, hi, height)

    def __post_init__(self):
        atoms = tuple((float(y), float(m)) for y, m in self.atoms)
        for y, m in atoms:
            if not 0 <= y <= 1:
                raise DomainError("atom locations must lie in [0, 1]")
            if m < 0:
                raise DomainError("atom masses must be nonnegative")
        pieces = tuple(
            (float(lo), float(hi), float(c)) for lo, hi, c in self.density_pieces
        )
        for lo, hi, c in pieces:
            if not 0 <= lo < hi <= 1:
                raise DomainError("density pieces must satisfy 0 <= lo < hi <= 1")
            if c < 0:
                raise DomainError("density heights must be nonnegative")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "density_pieces", pieces)

    @classmethod
    def kingman(cls, mass: float = 1.0) -> "LambdaMeasure":
        return cls(atoms=((0.0, mass),))

    @classmethod
    def uniform(cls, mass: float = 1.0) -> "LambdaMeasure":
        return cls(density_pieces=((0.0, 1.0, mass),))

    @property
    def total_mass(self) -> float:
        return math.fsum(m for _, m in self.atoms) + math.fsum(
            c * (hi - lo) for lo, hi, c in self.density_pieces
        )

    def __add__(self, other: "LambdaMeasure") -> "LambdaMeasure":
        return LambdaMeasure(
            self.atoms + other.atoms, self.density_pieces + other.density_pieces
        )


def _pow0(base: float, exp: int) -> float:
    """Power with the 0**0 = 1 convention used by the merge-rate integrand."""
    if exp == 0:
        return 1.0
    return base**exp


def merge_rate(law: LambdaMeasure, n: int, k: int) -> float:
    """Rate of a specific k-tuple merge among n blocks.

    Integral of y^(k-2) (1-y)^(n-k) against the measure; atoms are summed
    exactly with 0**0 = 1 and density pieces integrated by adaptive
    quadrature at relative accuracy 1e-8.
    """
    if not 2 <= k <= n:
        raise DomainError("block size must satisfy 2 <= k <= n")
    total = math.fsum(
        m * _pow0(y, k - 2) * _pow0(1.0 - y, n - k) for y, m in law.atoms if m > 0
    )
    for lo, hi, c in law.density_pieces:
        if c <= 0:
            continue
        val, _ = quad(
            lambda y: y ** (k - 2) * (1.0 - y) ** (n - k),
            lo,
            hi,
            epsrel=1e-8,
            epsabs=1e-15,
            limit=200,
        )
        total += c * val
    return total


def dust_free_diagnostic(law: LambdaMeasure) -> float:
    """Integral of 1/y against the measure; infinity means dust-free.

    Exact for this atom + piecewise-constant representation: an atom at zero
    or a density piece touching zero diverges.
    """
    total = 0.0
    for y, m in law.atoms:
        if m <= 0:
            continue
        if y == 0.0:
            return math.inf
        total += m / y
    for lo, hi, c in law.density_pieces:
        if c <= 0:
            continue
        if lo == 0.0:
            return math.inf
        total += c * math.log(hi / lo)
    return total


def coalescent_sample(n: int, law: LambdaMeasure, rng):
    """Backward coalescent genealogy of ``n`` leaves.

    Each k-subset of the current b blocks merges at rate
    ``merge_rate(law, b, k)``; leaf distance is the time to the pair's most
    recent common ancestor.  Returns (space, uniform probability measure).
    """
    if n < 2:
        raise DomainError("need at least two leaves")
    blocks = [[i] for i in range(n)]
    dist = np.zeros((n, n))
    t = 0.0
    while len(blocks) > 1:
        b = len(blocks)
        rates = np.array([math.comb(b, k) * merge_rate(law, b, k) for k in range(2, b + 1)])
        total = float(rates.sum())
        if total <= 0:
            raise DomainError("coalescent stalled: all merge rates vanish")
        t += rng.exponential() / total
        k = 2 + int(np.searchsorted(np.cumsum(rates), rng.random() * total, side="right"))
        k = min(k, b)
        chosen = sorted(rng.choice(b, size=k, replace=False), reverse=True)
        merged: list[int] = []
        for pos, ci in enumerate(chosen):
            for cj in chosen[pos + 1 :]:
                for x in blocks[ci]:
                    for y in blocks[cj]:
                        dist[x, y] = dist[y, x] = t
        for ci in chosen:
            merged.extend(blocks.pop(ci))
        blocks.append(merged)
    space = FiniteSpace([f"leaf{i}" for i in range(n)], dist)
    measure = FiniteMeasure(space, np.full(n, 1.0 / n))
    return space, measure


def mutated_fraction_generator(
    f: Callable[[float], float],
    x: float,
    n: int,
    law: LambdaMeasure,
    theta: float,
) -> float:
    """Exact generator of the Cannings mutated-ancestry fraction at ``x``.

    Sums the mutation term theta N (1-x) (f(x + 1/N) - f(x)) and, over block
    sizes k and mutated-subblock sizes m, the hypergeometric block terms
    where the parent is mutated (fraction gains (k-m)/N) or not (loses m/N).
    ``N x`` must be an integer.
    """
    if not 0 <= x <= 1:
        raise DomainError("x must lie in [0, 1]")
    nx = x * n
    if abs(nx - round(nx)) > 1e-9:
        raise DomainError("N x must be an integer")
    nx = int(round(nx))
    fx = f(x)
    total = theta * n * (1.0 - x) * (f(x + 1.0 / n) - fx)
    for k in range(2, n + 1):
        rate = merge_rate(law, n, k)
        if rate <= 0:
            continue
        inner = 0.0
        for m in range(0, min(nx, k) + 1):
            ways = math.comb(nx, m) * math.comb(n - nx, k - m)
            if ways == 0:
                continue
            gain = f(x + (k - m) / n) - fx
            loss = f(x - m / n) - fx
            inner += ways * (m * gain + (k - m) * loss) / k
        total += rate * inner
    return total


# ---------------------------------------------------------------------------
# modulus of cadlagness


def cadlag_modulus(path, delta: float, metric: Callable | None = None) -> float:
    """Two-sided jump oscillation of a piecewise-constant path.

    Supremum over t1 <= t <= t2 with t2 - t1 <= delta of the smaller of the
    two gaps dist(e(t), e(t1)) and dist(e(t2), e(t)).  A single jump scores
    zero; the quantity detects two large moves inside one short window, which
    is what distinguishes a jump path from an oscillating one.  Exact for
    piecewise-constant paths by scanning segment triples.  ``path`` is a
    :class:`ScalarPath` or a sequence of (time, state) pairs with an
    explicit ``metric``.
    """
    if delta <= 0:
        raise DomainError("delta must be positive")
    if isinstance(path, ScalarPath):
        times = path.times.tolist()
        states = path.values.tolist()
        metric = lambda a, b: abs(a - b)  # noqa: E731
    else:
        pairs = list(path)
        times = [float(t) for t, _ in pairs]
        states = [s for _, s in pairs]
        if metric is None:
            raise DomainError("state sequences need an explicit metric")
    m = len(times)
    best = 0.0
    for i in range(m):
        start_excl = times[i + 1] if i + 1 < m else math.inf
        for k in range(i + 2, m):
            if times[k] - start_excl >= delta:
                break
            for j in range(i + 1, k):
                v = min(metric(states[j], states[i]), metric(states[k], states[j]))
                if v > best:
                    best = v
    return best


# ---------------------------------------------------------------------------
# mark-function pipeline


@dataclass(frozen=True)
class PipelineRow:
    delta: float
    a: float
    bound: float
    estimate: float
    stderr: float
    violations: int
    passed: bool

    def as_csv(self):
        return (
            self.delta,
            self.a,
            self.bound,
            self.estimate,
            self.stderr,
            self.violations,
            str(self.passed),
        )


@dataclass(frozen=True)
class PipelineReport:
    rows: tuple[PipelineRow, ...]
    replicas: int
    passed: bool

    CSV_HEADER = ("delta", "a", "bound", "estimate", "stderr", "violations", "passed")

    def csv_rows(self):
        return [r.as_csv() for r in self.rows]


def mark_function_pipeline(
    model: str,
    params: PopulationParams,
    delta_grid: Sequence[float],
    horizon: float,
    replicas: int,
    rng,
    law: LambdaMeasure | None = None,
    eps: float = 0.25,
    probes_per_window: int = 2,
) -> PipelineReport:
    """Windowed good-set check behind the mark-function argument.

    Per grid delta, time is cut into windows of length delta/2 and the good
    set of a time t in window i is the complement of the mutated-lineage set
    started at the previous window boundary.  Two things are verified:

    * exactness: at probe times, individuals of the good set at distance
      below delta carry equal types (their common ancestor postdates the
      window start and no mutation hit the lineage);
    * the exceedance bound: the probability that the good set ever loses
      nu-mass a = sqrt(2 T C delta / eps) over [delta/2, T] stays below
      2 T C delta / a^2 plus three standard errors.
    """
    if horizon <= 0:
        raise DomainError("time horizon must be positive")
    if eps <= 0:
        raise DomainError("eps must be positive")
    delta_grid = [float(d) for d in delta_grid]
    if not delta_grid or min(delta_grid) <= 0:
        raise DomainError("delta grid must be positive and nonempty")
    if model == "moran":
        if not isinstance(params, MoranParams):
            raise DomainError("moran model needs MoranParams")
        big_c = fraction_bound_constant(params.gamma, params.theta)
    elif model == "cannings":
        if law is None:
            raise DomainError("cannings model needs a LambdaMeasure")
        big_c = fraction_bound_constant(2.0 * law.total_mass, params.theta)
    else:
        raise DomainError(f"unknown model {model!r}")

    n = params.size
    probes: dict[float, list[float]] = {}
    for d in delta_grid:
        half = d / 2.0
        windows = int(math.floor(horizon / half))
        ts = []
        for i in range(1, windows + 1):
            lo = i * half
            hi = min((i + 1) * half, horizon)
            if hi <= lo:
                continue
            for p in range(probes_per_window):
                ts.append(lo + (hi - lo) * (p + 0.5) / probes_per_window)
        probes[d] = sorted(ts)
    all_probes = sorted({t for ts in probes.values() for t in ts})

    rngs = rng.spawn(replicas)
    violations = {d: 0 for d in delta_grid}
    exceed = {d: 0 for d in delta_grid}
    a_of = {
        d: math.sqrt(max(2.0 * horizon * big_c * d / eps, 1e-300)) for d in delta_grid
    }
    for rep in range(replicas):
        if model == "moran":
            snaps, log = moran_simulate(params, horizon, all_probes, rngs[rep])
        else:
            snaps, log = cannings_simulate(params, law, horizon, all_probes, rngs[rep])
        snap_at = dict(zip(all_probes, snaps))
        events = log.events
        event_times = [ev.time for ev in events]
        for d in delta_grid:
            half = d / 2.0
            a = a_of[d]
            worst = 0.0
            bad_pairs = 0
            windows = int(math.floor(horizon / half))
            for i in range(1, windows + 1):
                t0 = (i - 1) * half
                w_lo, w_hi = i * half, min((i + 1) * half, horizon)
                if w_hi <= w_lo:
                    continue
                current: set[int] = set()
                sup_size = None
                probe_iter = [t for t in probes[d] if w_lo <= t < w_hi]
                pi = 0
                start = int(np.searchsorted(event_times, t0, side="right"))
                for ev in events[start:]:
                    if ev.time >= w_hi:
                        break
                    if ev.time > w_lo and sup_size is None:
                        sup_size = len(current)  # value held at the window start
                    while pi < len(probe_iter) and probe_iter[pi] < ev.time:
                        bad_pairs += _probe_violations(
                            snap_at[probe_iter[pi]], current, d
                        )
                        pi += 1
                    if ev.kind == "mutate":
                        current.add(ev.source)
                    elif ev.source in current:
                        current.update(ev.targets)
                    else:
                        current.difference_update(ev.targets)
                    if ev.time > w_lo and sup_size is not None:
                        sup_size = max(sup_size, len(current))
                while pi < len(probe_iter):
                    bad_pairs += _probe_violations(snap_at[probe_iter[pi]], current, d)
                    pi += 1
                if sup_size is None:
                    sup_size = len(current)
                worst = max(worst, sup_size / n)
            violations[d] += bad_pairs
            if worst >= a:
                exceed[d] += 1
    rows = []
    ok = True
    for d in delta_grid:
        est = exceed[d] / replicas
        stderr = math.sqrt(est * (1.0 - est) / replicas)
        bound = 2.0 * horizon * big_c * d / a_of[d] ** 2
        passed = violations[d] == 0 and est <= bound + 3.0 * stderr
        ok = ok and passed
        rows.append(
            PipelineRow(d, a_of[d], bound, est, stderr, violations[d], passed)
        )
    return PipelineReport(tuple(rows), replicas, ok)


def _probe_violations(snap: FmmSpace, mutated: set[int], delta: float) -> int:
    n = len(snap.space)
    good = np.ones(n, dtype=bool)
    if mutated:
        good[list(mutated)] = False
    types = np.array([snap.markmap[i] for i in range(n)])
    close = snap.space.dist < delta
    mask = good[:, None] & good[None, :] & close
    np.fill_diagonal(mask, False)
    differ = types[:, None] != types[None, :]
    return int(np.triu(mask & differ).sum())
