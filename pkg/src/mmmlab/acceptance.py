"""Acceptance suite: quantitative checks with pinned tolerances and seeds.

Each criterion draws its own generator from the root seed (counter-based
split), prints one PASS/FAIL line, and emits a CSV table.  Suites:
``metric`` (1-3), ``diagnostics`` (4-7), ``genealogy`` (8-13), ``all``
(everything plus the determinism criterion 14, which reruns the other
criteria and byte-compares the CSV output).
"""

from __future__ import annotations

import math
import os
import tempfile
import time
from dataclasses import dataclass

import numpy as np

from .diagnostics import mark_dispersion, no_mark_function_example, trimmed_mark_bound
from .generators import (
    random_local_bound_member,
    random_measure,
    random_metric_space,
    random_mmm,
    random_fmm,
    random_rational_measure,
)
from .genealogy import (
    LambdaMeasure,
    MoranParams,
    cannings_simulate,
    coalescent_sample,
    default_params,
    fraction_bound_constant,
    mark_function_pipeline,
    merge_rate,
    moran_simulate,
    mutated_fraction_diffusion,
    mutated_fraction_generator,
    verify_mutation_fraction_bound,
    uniform_kernel,
    PopulationParams,
)
from .marked import MarkSpace, MmmSpace, product_measures
from .measures import FiniteMeasure, prohorov_distance, prohorov_feasible, rectangular_completion
from .reference import (
    generator_enumeration,
    prohorov_bruteforce,
    trimmed_bound_bruteforce,
)
from .serialize import write_csv


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    header: tuple
    rows: list
    seconds: float

    @property
    def status(self) -> str:
        return "PASS" if self.passed else "FAIL"


def _rng_for(seed: int, number: int):
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(number,)))


# --------------------------------------------------------------------- metric


def _c01_prohorov_oracle(rng):
    rows = []
    worst = 0.0
    for i in range(200):
        n = int(rng.integers(2, 6))
        space = random_metric_space(rng, n)
        mu1 = random_rational_measure(rng, space)
        mu2 = random_rational_measure(rng, space)
        oracle = prohorov_bruteforce(mu1, mu2)
        solver = prohorov_distance(mu1, mu2, tol=1e-9)[0]
        diff = abs(oracle - solver)
        worst = max(worst, diff)
        rows.append((i, oracle, solver, diff))
    return worst <= 1e-6, f"max |oracle - solver| = {worst:.3g}", (
        "instance",
        "oracle",
        "solver",
        "abs_diff",
    ), rows


def _c02_metric_axioms(rng):
    rows = []
    worst_sym = 0.0
    worst_tri = -math.inf
    for i in range(100):
        n = int(rng.integers(2, 6))
        space = random_metric_space(rng, n)
        mu1 = random_measure(rng, space)
        mu2 = random_measure(rng, space)
        mu3 = random_measure(rng, space)
        d12 = prohorov_distance(mu1, mu2)[0]
        d21 = prohorov_distance(mu2, mu1)[0]
        d13 = prohorov_distance(mu1, mu3)[0]
        d23 = prohorov_distance(mu2, mu3)[0]
        sym = abs(d12 - d21)
        tri = d13 - (d12 + d23)
        worst_sym = max(worst_sym, sym)
        worst_tri = max(worst_tri, tri)
        rows.append((i, d12, d21, d13, d23, sym, tri))
    passed = worst_sym <= 2e-9 and worst_tri <= 3e-9
    return passed, f"max symmetry gap {worst_sym:.3g}, max triangle excess {worst_tri:.3g}", (
        "triple",
        "d12",
        "d21",
        "d13",
        "d23",
        "symmetry_gap",
        "triangle_excess",
    ), rows


def _c03_rectangular(rng):
    rows = []
    ok = True
    for i in range(100):
        n = int(rng.integers(2, 6))
        space = random_metric_space(rng, n)
        mu1 = random_measure(rng, space)
        mu2 = random_measure(rng, space)
        delta = prohorov_distance(mu1, mu2)[0] + 1e-6
        feasible, xi = prohorov_feasible(mu1, mu2, delta)
        scale = rng.random(n)
        scale[rng.random(n) < 0.3] = 0.0
        mu1_sub = FiniteMeasure(space, mu1.mass * scale)
        eps = float((mu1.mass - mu1_sub.mass).sum()) + 1e-12
        mu2_sub = rectangular_completion(mu1, mu1_sub, mu2, xi, eps)
        dominated = bool((mu2_sub.mass <= mu2.mass + 1e-12).all())
        missing = float((mu2.mass - mu2_sub.mass).sum())
        close = prohorov_feasible(mu1_sub, mu2_sub, delta)[0]
        good = dominated and missing <= eps + 1e-12 and close
        ok = ok and good
        rows.append((i, delta, eps, missing, str(dominated), str(close), str(good)))
    return ok, "completion dominated, mass-bounded and Prohorov-close on all instances" if ok else "violations found", (
        "instance",
        "delta",
        "eps",
        "mass_missing",
        "dominated",
        "prohorov_close",
        "ok",
    ), rows


# ---------------------------------------------------------------- diagnostics


def _c04_dispersion(rng):
    rows = []
    ok = True
    for i in range(100):
        n = int(rng.integers(1, 7))
        marks = MarkSpace.unit_interval() if i % 2 else MarkSpace.finite(["0", "1", "2"])
        x = random_fmm(rng, n, marks=marks)
        beta = mark_dispersion(x)
        ok = ok and beta == 0.0
        rows.append(("random_fmm", i, beta, 0.0, beta))
    for kind in ("square", "ultrametric"):
        for res in (2, 4, 8):
            beta = mark_dispersion(no_mark_function_example(kind, res))
            err = abs(beta - 0.25)
            ok = ok and err <= 1e-12
            rows.append((kind, res, beta, 0.25, err))
    return ok, "dispersion 0 on mark maps, 1/4 on both example families", (
        "kind",
        "instance",
        "dispersion",
        "expected",
        "error",
    ), rows


def _c05_dispersion_estimates(rng):
    rows = []
    ok = True
    for i in range(500):
        # sub-measure estimate
        x = random_mmm(rng, n_points=int(rng.integers(1, 6)), max_marks_per_point=3)
        scale = rng.random(len(x.atoms))
        scale[rng.random(len(x.atoms)) < 0.25] = 0.0
        sub = MmmSpace(
            x.space,
            x.marks,
            [(a.point, a.mark, a.mass * s) for a, s in zip(x.atoms, scale)],
        )
        removed = x.total_mass - sub.total_mass
        lhs = mark_dispersion(x)
        rhs = mark_dispersion(sub) + 2.0 * removed
        good_i = lhs <= rhs + 1e-9
        # local-bound estimate
        delta = float(rng.uniform(0.05, 0.4))
        eps = float(rng.uniform(0.05, 0.6))
        member = random_local_bound_member(rng, 2.0 * delta, eps, n_points=int(rng.integers(1, 6)))
        beta_m = mark_dispersion(member)
        cap = eps * member.total_mass
        good_ii = beta_m <= cap + 1e-9
        ok = ok and good_i and good_ii
        rows.append((i, lhs, rhs, str(good_i), beta_m, cap, str(good_ii)))
    return ok, "no violation of either dispersion estimate", (
        "instance",
        "dispersion",
        "sub_bound",
        "sub_ok",
        "member_dispersion",
        "member_cap",
        "member_ok",
    ), rows


def _c06_trim_solver(rng):
    rows = []
    ok = True
    for i in range(100):
        x = random_mmm(rng, n_points=int(rng.integers(2, 6)), max_marks_per_point=3)
        delta = float(rng.uniform(0.05, 1.2))
        eps = float(rng.uniform(0.05, 1.0))
        rep = trimmed_mark_bound(x, delta, eps)
        best, verdict = trimmed_bound_bruteforce(x, delta, eps)
        agree = abs(rep.retained_mass - best) <= 1e-9 and rep.verdict == verdict
        # monotonicity toward easier parameters
        delta2 = delta * float(rng.uniform(0.2, 1.0))
        eps2 = eps + float(rng.uniform(0.0, 1.0))
        mono = (not rep.verdict) or trimmed_mark_bound(x, delta2, eps2).verdict
        ok = ok and agree and mono
        rows.append(
            (i, len(x.atoms), delta, eps, rep.retained_mass, best, str(agree), str(mono))
        )
    return ok, "branch-and-bound equals the subset oracle; monotone in both parameters", (
        "instance",
        "atoms",
        "delta",
        "eps",
        "solver_mass",
        "oracle_mass",
        "agree",
        "monotone",
    ), rows


def _perturb_within_embedding(rng, x: MmmSpace, budget: float) -> MmmSpace:
    """Random perturbation with Prohorov gap below ``budget`` by construction.

    Mass removals and additions each stay below 0.45 * budget; mark moves
    travel less than 0.9 * budget in the product metric.
    """
    atoms = [[a.point, a.mark, a.mass] for a in x.atoms]
    removable = 0.45 * budget
    for a in atoms:
        if rng.random() < 0.4 and removable > 0:
            cut = min(a[2] * float(rng.random()) * 0.5, removable)
            a[2] -= cut
            removable -= cut
    if rng.random() < 0.6:
        point = int(rng.integers(len(x.space)))
        atoms.append([point, float(rng.random()), 0.45 * budget * float(rng.random())])
    moved = []
    for a in atoms:
        if rng.random() < 0.4:
            shift = (float(rng.random()) - 0.5) * 1.8 * budget * 0.9
            new_mark = min(max(float(a[1]) + shift, 0.0), 1.0)
            if abs(new_mark - float(a[1])) < 0.9 * budget:
                moved.append([a[0], new_mark, a[2]])
                continue
        moved.append(a)
    return MmmSpace(x.space, x.marks, moved)


def _c07_perturbation(rng):
    rows = []
    ok = True
    for i in range(50):
        delta = float(rng.uniform(0.3, 0.8))
        eps = float(rng.uniform(0.1, 0.5))
        x = random_local_bound_member(rng, delta, eps, n_points=int(rng.integers(2, 6)))
        if rng.random() < 0.5:
            # extra removable conflict mass keeps membership while leaving
            # the unperturbed space outside the exact-bound class
            junk = [(int(rng.integers(len(x.space))), float(rng.random()), 0.4 * eps)]
            x = MmmSpace(x.space, x.marks, list((a.point, a.mark, a.mass) for a in x.atoms) + junk)
        assert trimmed_mark_bound(x, delta, eps).verdict
        gap = 0.5 * delta * float(rng.uniform(0.3, 0.9))
        xhat = _perturb_within_embedding(rng, x, gap)
        mu_a, mu_b = product_measures(x, xhat)
        certified = prohorov_feasible(mu_a, mu_b, gap)[0]
        rep = trimmed_mark_bound(xhat, delta - 2.0 * gap, eps + 2.0 * gap)
        good = certified and rep.verdict
        ok = ok and good
        rows.append((i, delta, eps, gap, str(certified), str(rep.verdict)))
    return ok, "perturbed spaces stay members at the shifted parameters", (
        "instance",
        "delta",
        "eps",
        "gap",
        "gap_certified",
        "member",
    ), rows


# ------------------------------------------------------------------ genealogy


def _c08_fraction_bound(rng):
    rows = []
    ok = True
    for delta in (0.05, 0.1, 0.2):
        rep = verify_mutation_fraction_bound(200, 1.0, 0.5, delta, 0.5, 2000, rng)
        ok = ok and rep.passed
        rows.append(
            (delta, rep.replicas, rep.exceedances, rep.estimate, rep.stderr, rep.bound, str(rep.passed))
        )
    return ok, "exceedance estimates below the quadratic bound", (
        "delta",
        "replicas",
        "exceedances",
        "estimate",
        "stderr",
        "bound",
        "passed",
    ), rows


def _c09_diffusion_moments(rng):
    gamma, theta = 1.0, 0.5
    big_c = fraction_bound_constant(gamma, theta)
    times = (0.1, 0.5, 1.0)
    n_paths = 2000
    rngs = rng.spawn(n_paths)
    samples = np.empty((n_paths, len(times)))
    for p in range(n_paths):
        path = mutated_fraction_diffusion(gamma, theta, 1.0, 1e-3, rngs[p])
        for j, t in enumerate(times):
            samples[p, j] = path.value_at(t)
    rows = []
    ok = True
    for j, t in enumerate(times):
        col = samples[:, j]
        mean = float(col.mean())
        mean_err = float(col.std(ddof=1)) / math.sqrt(n_paths)
        sq = float((col**2).mean())
        sq_err = float((col**2).std(ddof=1)) / math.sqrt(n_paths)
        ok_mean = mean <= theta * t + 3.0 * mean_err
        ok_sq = sq <= big_c * t**2 + 3.0 * sq_err
        ok = ok and ok_mean and ok_sq
        rows.append(
            (t, mean, theta * t, mean_err, sq, big_c * t**2, sq_err, str(ok_mean and ok_sq))
        )
    return ok, "first and second moments below the drift bounds", (
        "t",
        "mean",
        "mean_bound",
        "mean_stderr",
        "second_moment",
        "second_bound",
        "second_stderr",
        "passed",
    ), rows


def _c10_merge_rates(rng):
    rows = []
    ok = True
    kingman = LambdaMeasure.kingman()
    uniform = LambdaMeasure.uniform()
    for n in range(2, 11):
        for k in range(2, n + 1):
            got = merge_rate(kingman, n, k)
            want = 1.0 if k == 2 else 0.0
            ok = ok and got == want
            rows.append(("kingman", n, k, got, want, abs(got - want)))
            got_u = merge_rate(uniform, n, k)
            want_u = math.factorial(k - 2) * math.factorial(n - k) / math.factorial(n - 1)
            ok = ok and abs(got_u - want_u) <= 1e-8
            rows.append(("uniform", n, k, got_u, want_u, abs(got_u - want_u)))
    return ok, "Kingman rates exact, uniform rates match the Beta integral", (
        "law",
        "n",
        "k",
        "computed",
        "expected",
        "abs_diff",
    ), rows


def _c11_generator(rng):
    law = LambdaMeasure(atoms=((0.0, 0.5),), density_pieces=((0.0, 1.0, 0.5),))
    theta = 0.7
    rows = []
    ok = True
    worst = 0.0
    for n in range(2, 13):
        for nx in sorted({0, n // 3, n // 2, (2 * n) // 3, n}):
            x = nx / n
            for name, f in (("square", lambda v: v * v), ("cube", lambda v: v**3)):
                got = mutated_fraction_generator(f, x, n, law, theta)
                want = generator_enumeration(f, x, n, law, theta)
                diff = abs(got - want)
                worst = max(worst, diff)
                ok = ok and diff <= 1e-10
                rows.append(("match", name, n, x, got, want, diff))
    # drift bound for f(x) = x^2: |gen - theta (1-x) 2x| bounded by the
    # Taylor remainders (second derivative 2, constant 1/2 on the mutation term)
    n = 50
    lam_total = law.total_mass
    for nx in range(0, n + 1, 5):
        x = nx / n
        gen = mutated_fraction_generator(lambda v: v * v, x, n, law, theta)
        drift = theta * (1.0 - x) * 2.0 * x
        bound = x * (1.0 - x) * 2.0 * lam_total + 0.5 * 2.0 * theta / n
        good = abs(gen - drift) <= bound + 1e-12
        ok = ok and good
        rows.append(("drift", "square", n, x, gen, drift, abs(gen - drift) - bound))
    return ok, f"double sum matches enumeration (max diff {worst:.2g}); drift bound holds", (
        "check",
        "f",
        "n",
        "x",
        "value",
        "reference",
        "gap",
    ), rows


def _c12_pipeline(rng):
    params = default_params(200, gamma=1.0, theta=0.5)
    report = mark_function_pipeline(
        "moran", params, [0.1], horizon=1.0, replicas=500, rng=rng, eps=0.25
    )
    rows = [r.as_csv() for r in report.rows]
    row = report.rows[0]
    detail = (
        f"violations={row.violations}, estimate={row.estimate:.4f} "
        f"vs bound={row.bound:.4f}"
    )
    return report.passed, detail, report.CSV_HEADER, rows


def _c13_ultrametric(rng):
    rows = []
    ok = True
    base_space, _ = coalescent_sample(30, LambdaMeasure.kingman(), rng)
    r0 = 2.0 * base_space.dist
    moran_params = MoranParams(
        size=30,
        theta=0.3,
        mutation_kernel=uniform_kernel(2),
        marks=MarkSpace.finite(["0", "1"]),
        initial_dist=r0,
        initial_types=(0,) * 30,
        gamma=1.0,
    )
    cannings_params = PopulationParams(
        size=30,
        theta=0.3,
        mutation_kernel=uniform_kernel(2),
        marks=MarkSpace.finite(["0", "1"]),
        initial_dist=r0,
        initial_types=(0,) * 30,
    )
    law = LambdaMeasure(atoms=((0.0, 0.5),), density_pieces=((0.0, 1.0, 1.0),))
    rngs = rng.spawn(200)
    for run in range(100):
        snaps, _ = moran_simulate(moran_params, 0.5, [0.2, 0.5], rngs[run])
        good = all(s.space.is_ultrametric(1e-12) for s in snaps)
        ok = ok and good
        rows.append(("moran", run, str(good)))
    for run in range(100):
        snaps, _ = cannings_simulate(cannings_params, law, 0.5, [0.2, 0.5], rngs[100 + run])
        good = all(s.space.is_ultrametric(1e-12) for s in snaps)
        ok = ok and good
        rows.append(("cannings", run, str(good)))
    return ok, "every snapshot ultrametric from ultrametric starts", (
        "model",
        "run",
        "ultrametric",
    ), rows


CRITERIA = {
    1: ("prohorov-oracle", _c01_prohorov_oracle),
    2: ("metric-axioms", _c02_metric_axioms),
    3: ("rectangular-completion", _c03_rectangular),
    4: ("dispersion-characterization", _c04_dispersion),
    5: ("dispersion-estimates", _c05_dispersion_estimates),
    6: ("trim-solver", _c06_trim_solver),
    7: ("perturbation-stability", _c07_perturbation),
    8: ("fraction-bound", _c08_fraction_bound),
    9: ("diffusion-moments", _c09_diffusion_moments),
    10: ("merge-rates", _c10_merge_rates),
    11: ("generator-check", _c11_generator),
    12: ("mark-function-pipeline", _c12_pipeline),
    13: ("ultrametric-preservation", _c13_ultrametric),
}

SUITES = {
    "metric": (1, 2, 3),
    "diagnostics": (4, 5, 6, 7),
    "genealogy": (8, 9, 10, 11, 12, 13),
    "all": tuple(range(1, 15)),
}


def run_criterion(number: int, seed: int) -> CriterionResult:
    name, fn = CRITERIA[number]
    start = time.perf_counter()
    passed, detail, header, rows = fn(_rng_for(seed, number))
    return CriterionResult(
        number, name, passed, detail, header, rows, time.perf_counter() - start
    )


def _csv_name(result: CriterionResult) -> str:
    return f"criterion_{result.number:02d}_{result.name}.csv"


def _write_results(results, out_dir: str, seed: int) -> None:
    os.makedirs(out_dir, exist_ok=True)
    for res in results:
        write_csv(
            os.path.join(out_dir, _csv_name(res)),
            res.header,
            res.rows,
            f"criterion={res.number} name={res.name} seed={seed} status={res.status}",
        )


def run_suite(suite: str, seed: int, out_dir: str, quiet: bool = False):
    """Run an acceptance suite, write CSVs, return the result list."""
    if suite not in SUITES:
        raise KeyError(suite)
    numbers = [n for n in SUITES[suite] if n in CRITERIA]
    results = []
    for number in numbers:
        res = run_criterion(number, seed)
        results.append(res)
        if not quiet:
            print(
                f"{res.status} criterion {res.number:02d} {res.name} "
                f"({res.seconds:.1f}s): {res.detail}"
            )
    _write_results(results, out_dir, seed)
    if suite == "all" and 14 in SUITES["all"]:
        start = time.perf_counter()
        with tempfile.TemporaryDirectory() as tmp:
            rerun = [run_criterion(number, seed) for number in numbers]
            _write_results(rerun, tmp, seed)
            mismatched = []
            for res in results:
                with open(os.path.join(out_dir, _csv_name(res)), "rb") as fh:
                    first = fh.read()
                with open(os.path.join(tmp, _csv_name(res)), "rb") as fh:
                    second = fh.read()
                if first != second:
                    mismatched.append(res.number)
        det = CriterionResult(
            14,
            "determinism",
            not mismatched,
            "reruns byte-identical" if not mismatched else f"criteria {mismatched} differ",
            ("criterion", "identical"),
            [(res.number, str(res.number not in mismatched)) for res in results],
            time.perf_counter() - start,
        )
        results.append(det)
        if not quiet:
            print(
                f"{det.status} criterion 14 determinism ({det.seconds:.1f}s): {det.detail}"
            )
        _write_results([det], out_dir, seed)
    return results
