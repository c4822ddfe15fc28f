"""Command-line front end: seeded batch experiments emitting CSV artifacts.

Parameter resolution order: command-line flag, then environment variable
(``MMMLAB_SEED``, ``MMMLAB_REPLICAS``, ``MMMLAB_OUT``), then the JSON config
file passed via ``--config``, then the built-in default.  Every CSV carries a
header row and a trailing comment with the hash of the resolved
configuration (output directory excluded), so identical configurations
produce byte-identical files.  Per-replica generators are split from the
root seed with numpy's counter-based ``SeedSequence(seed, spawn_key)``.

Exit codes: 0 success, 2 validation failure, 3 capability error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import acceptance as acceptance_mod
from .diagnostics import (
    Modulus,
    limit_mark_evidence,
    local_mark_bound,
    mark_dispersion,
    no_mark_function_example,
    trimmed_mark_bound,
)
from .errors import CapabilityError, DomainError
from .genealogy import (
    LambdaMeasure,
    MoranParams,
    PopulationParams,
    cannings_simulate,
    coalescent_sample,
    dust_free_diagnostic,
    mark_function_pipeline,
    moran_simulate,
    uniform_kernel,
    verify_mutation_fraction_bound,
)
from .marked import MarkSpace, gromov_prohorov_upper
from .measures import prohorov_distance
from .serialize import dump_measure, dump_mmm, load_fmm, load_measure, load_mmm, write_csv


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved run description: what to run, with which knobs.

    The hash covers everything except the output directory, so moving the
    artifacts elsewhere does not change their bytes.  Seeds are never
    defaulted from the clock; stochastic commands refuse to run without one.
    """

    command: str
    params: dict = field(default_factory=dict)
    seed: int | None = None
    replicas: int | None = None
    out: str = "out"

    def hash_hex(self) -> str:
        canon = json.dumps(
            {
                "command": self.command,
                "params": self.params,
                "seed": self.seed,
                "replicas": self.replicas,
            },
            sort_keys=True,
        )
        return hashlib.sha256(canon.encode()).hexdigest()[:12]


def _config_hash(command: str, params: dict) -> str:
    params = dict(params)
    seed = params.pop("seed", None)
    replicas = params.pop("replicas", None)
    return ExperimentConfig(command, params, seed, replicas).hash_hex()


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise DomainError("config file must hold a JSON object")
    return cfg


def _resolve(args, name: str, cfg: dict, default=None, env: str | None = None, cast=None):
    value = getattr(args, name.replace("-", "_"), None)
    if value is None and env is not None:
        value = os.environ.get(env)
    if value is None:
        value = cfg.get(name)
    if value is None:
        value = default
    if value is not None and cast is not None:
        value = cast(value)
    return value


def _require_seed(args, cfg) -> int:
    seed = _resolve(args, "seed", cfg, env="MMMLAB_SEED", cast=int)
    if seed is None:
        raise DomainError("a --seed is required (no wall-clock default)")
    return seed


def _out_dir(args, cfg) -> str:
    out = _resolve(args, "out", cfg, default="out", env="MMMLAB_OUT")
    os.makedirs(out, exist_ok=True)
    return out


def _rng(seed: int, index: int = 0):
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


def _parse_floats(text: str) -> list[float]:
    return [float(v) for v in str(text).split(",") if str(v).strip()]


def _parse_modulus(text: str) -> Modulus:
    if text == "zero":
        return Modulus.zero()
    if text.startswith("linear:"):
        return Modulus.linear(float(text.split(":", 1)[1]))
    pairs = []
    for chunk in str(text).split(","):
        a, b = chunk.split(":")
        pairs.append((float(a), float(b)))
    return Modulus(tuple(pairs))


def _parse_lambda(args, cfg) -> LambdaMeasure:
    atoms = []
    raw = _resolve(args, "lambda-atoms", cfg)
    if raw:
        for chunk in str(raw).split(","):
            y, m = chunk.split(":")
            atoms.append((float(y), float(m)))
    pieces = []
    raw = _resolve(args, "lambda-density", cfg)
    if raw:
        for chunk in str(raw).split(","):
            lo, hi, c = chunk.split(":")
            pieces.append((float(lo), float(hi), float(c)))
    if not atoms and not pieces:
        atoms = [(0.0, 1.0)]  # Kingman default
    return LambdaMeasure(tuple(atoms), tuple(pieces))


def _maybe_plot(args, cfg, out_dir, stem, xs, series: dict[str, list[float]], xlabel, ylabel):
    if not _resolve(args, "plot", cfg, default=False, cast=bool):
        return
    import matplotlib

    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for label, ys in series.items():
        ax.plot(xs, ys, marker="o", label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend()
    fig.tight_layout()
    fig.savefig(os.path.join(out_dir, f"{stem}.svg"))
    plt.close(fig)


def _population_params(args, cfg, need_gamma: bool):
    n = _resolve(args, "n", cfg, default=50, cast=int)
    theta = _resolve(args, "theta", cfg, default=0.0, cast=float)
    n_types = _resolve(args, "n-types", cfg, default=2, cast=int)
    marks = MarkSpace.finite([str(i) for i in range(n_types)])
    common = dict(
        size=n,
        theta=theta,
        mutation_kernel=uniform_kernel(n_types),
        marks=marks,
        initial_dist=np.zeros((n, n)),
        initial_types=(0,) * n,
    )
    if need_gamma:
        gamma = _resolve(args, "gamma", cfg, default=1.0, cast=float)
        return MoranParams(gamma=gamma, **common)
    return PopulationParams(**common)


# ------------------------------------------------------------------- commands


def _cmd_prohorov(args, cfg):
    mu1 = load_measure(open(args.m1).read())
    mu2 = load_measure(open(args.m2).read())
    tol = _resolve(args, "tol", cfg, default=1e-9, cast=float)
    value, witness = prohorov_distance(mu1, mu2, tol)
    out = _out_dir(args, cfg)
    meta = _config_hash("prohorov", {"m1": args.m1, "m2": args.m2, "tol": tol})
    write_csv(
        os.path.join(out, "prohorov.csv"),
        ("value", "tol", "mass1", "mass2", "coupling_mass"),
        [(value, tol, mu1.total, mu2.total, witness.mass)],
        f"config_hash={meta}",
    )
    print(value)
    return 0


def _cmd_mgp(args, cfg):
    x = load_mmm(open(args.x).read())
    y = load_mmm(open(args.y).read())
    seed = _require_seed(args, cfg)
    budget = _resolve(args, "budget", cfg, default=16, cast=int)
    tol = _resolve(args, "tol", cfg, default=1e-9, cast=float)
    value, rho = gromov_prohorov_upper(x, y, budget=budget, rng=_rng(seed), tol=tol)
    out = _out_dir(args, cfg)
    meta = _config_hash("mgp", {"x": args.x, "y": args.y, "seed": seed, "budget": budget, "tol": tol})
    rows = [
        (i, j, float(rho[i, j]))
        for i in range(rho.shape[0])
        for j in range(rho.shape[1])
    ]
    write_csv(
        os.path.join(out, "mgp_cross_distances.csv"),
        ("i", "j", "rho"),
        rows,
        f"config_hash={meta} upper_bound={value!r}",
    )
    print(value)
    return 0


def _cmd_beta(args, cfg):
    x = load_mmm(open(args.x).read())
    value = mark_dispersion(x)
    out = _out_dir(args, cfg)
    meta = _config_hash("beta", {"x": args.x})
    write_csv(
        os.path.join(out, "beta.csv"),
        ("dispersion", "total_mass", "atoms"),
        [(value, x.total_mass, len(x.atoms))],
        f"config_hash={meta}",
    )
    print(value)
    return 0


def _cmd_membership(args, cfg):
    x = load_mmm(open(args.x).read())
    delta = _resolve(args, "delta", cfg, cast=float)
    eps = _resolve(args, "eps", cfg, cast=float)
    if delta is None or eps is None:
        raise DomainError("membership needs --delta and --eps")
    approx = bool(_resolve(args, "approx", cfg, default=False))
    gap = local_mark_bound(x, delta, eps)
    trim = trimmed_mark_bound(x, delta, eps, approx=approx)
    out = _out_dir(args, cfg)
    meta = _config_hash(
        "membership", {"x": args.x, "delta": delta, "eps": eps, "approx": approx}
    )
    rows = [
        ("exact_gap", str(gap.verdict), gap.retained_mass, 0, "False"),
        (
            "after_trim",
            str(trim.verdict),
            trim.retained_mass,
            len(trim.witness_atoms or ()),
            str(trim.approximate),
        ),
    ]
    write_csv(
        os.path.join(out, "membership.csv"),
        ("test", "verdict", "retained_mass", "witness_size", "approximate"),
        rows,
        f"config_hash={meta}",
    )
    print(f"exact_gap={gap.verdict} after_trim={trim.verdict}")
    return 0


def _cmd_criteria(args, cfg):
    kind = _resolve(args, "kind", cfg, default="theorem")
    deltas = _parse_floats(_resolve(args, "deltas", cfg, default="0.5,0.25,0.125,0.0625"))
    h = _parse_modulus(_resolve(args, "modulus", cfg, default="linear:1"))
    texts = [open(path).read() for path in args.seq]
    out = _out_dir(args, cfg)
    meta = _config_hash(
        "criteria",
        {"kind": kind, "deltas": deltas, "files": list(args.seq)},
    )
    if kind == "theorem":
        seq = [load_mmm(t) for t in texts]
        report = limit_mark_evidence(seq, h, deltas, approx=bool(args.approx))
    elif kind in ("sets", "diam"):
        from .diagnostics import ball_diameter_evidence, limit_mark_evidence_on_sets

        subsets = cfg.get("subsets")
        if subsets is None:
            raise DomainError(f"criteria kind {kind!r} needs 'subsets' in the config file")
        seq = [load_fmm(t) for t in texts]
        if kind == "sets":
            report = limit_mark_evidence_on_sets(seq, subsets, h, deltas)
        else:
            report = ball_diameter_evidence(seq, subsets, deltas)
    else:
        raise DomainError(f"unknown criteria kind {kind!r}")
    write_csv(
        os.path.join(out, "criteria.csv"),
        report.CSV_HEADER,
        report.csv_rows(),
        f"config_hash={meta} supported={report.supported}",
    )
    _maybe_plot(
        args,
        cfg,
        out,
        "criteria",
        [d for d, _ in report.per_delta],
        {"evidence": [v for _, v in report.per_delta]},
        "delta",
        "tail statistic",
    )
    print(f"supported={report.supported}")
    return 0


def _cmd_counterexample(args, cfg):
    kind = _resolve(args, "kind", cfg, default="square")
    resolution = _resolve(args, "resolution", cfg, default=4, cast=int)
    x = no_mark_function_example(kind, resolution)
    out = _out_dir(args, cfg)
    path = os.path.join(out, f"counterexample_{kind}_{resolution}.mmm")
    with open(path, "w") as fh:
        fh.write(dump_mmm(x))
    meta = _config_hash("counterexample", {"kind": kind, "resolution": resolution})
    write_csv(
        os.path.join(out, "counterexample.csv"),
        ("kind", "resolution", "dispersion", "points", "atoms", "file"),
        [(kind, resolution, mark_dispersion(x), len(x.space), len(x.atoms), path)],
        f"config_hash={meta}",
    )
    print(path)
    return 0


def _snapshot_times(args, cfg, horizon):
    raw = _resolve(args, "sample-times", cfg)
    if raw is None:
        return [horizon]
    return _parse_floats(raw)


def _run_population(args, cfg, model: str):
    seed = _require_seed(args, cfg)
    horizon = _resolve(args, "horizon", cfg, default=1.0, cast=float)
    times = _snapshot_times(args, cfg, horizon)
    out = _out_dir(args, cfg)
    if model == "moran":
        params = _population_params(args, cfg, need_gamma=True)
        snaps, log = moran_simulate(params, horizon, times, _rng(seed))
        hashed = {"n": params.size, "gamma": params.gamma, "theta": params.theta}
    else:
        params = _population_params(args, cfg, need_gamma=False)
        law = _parse_lambda(args, cfg)
        snaps, log = cannings_simulate(params, law, horizon, times, _rng(seed))
        hashed = {
            "n": params.size,
            "theta": params.theta,
            "lambda_atoms": list(law.atoms),
            "lambda_density": list(law.density_pieces),
        }
    hashed.update({"horizon": horizon, "times": times, "seed": seed})
    meta = _config_hash(model, hashed)
    write_csv(
        os.path.join(out, f"{model}_events.csv"),
        log.CSV_HEADER,
        log.csv_rows(),
        f"config_hash={meta}",
    )
    for i, snap in enumerate(snaps):
        with open(os.path.join(out, f"{model}_snapshot_{i:03d}.mmm"), "w") as fh:
            fh.write(dump_mmm(snap))
    print(f"events={len(log)} snapshots={len(snaps)}")
    return 0


def _cmd_moran(args, cfg):
    return _run_population(args, cfg, "moran")


def _cmd_cannings(args, cfg):
    return _run_population(args, cfg, "cannings")


def _cmd_coalescent(args, cfg):
    seed = _require_seed(args, cfg)
    n = _resolve(args, "n", cfg, default=20, cast=int)
    law = _parse_lambda(args, cfg)
    space, measure = coalescent_sample(n, law, _rng(seed))
    diag = dust_free_diagnostic(law)
    out = _out_dir(args, cfg)
    meta = _config_hash(
        "coalescent",
        {
            "n": n,
            "seed": seed,
            "lambda_atoms": list(law.atoms),
            "lambda_density": list(law.density_pieces),
        },
    )
    with open(os.path.join(out, "coalescent.measure"), "w") as fh:
        fh.write(dump_measure(measure))
    write_csv(
        os.path.join(out, "coalescent.csv"),
        ("n", "height", "dust_free_integral", "ultrametric"),
        [(n, float(space.dist.max()), diag, str(space.is_ultrametric()))],
        f"config_hash={meta}",
    )
    print(f"height={float(space.dist.max())!r} dust_free_integral={diag!r}")
    return 0


def _cmd_verify_mutbound(args, cfg):
    seed = _require_seed(args, cfg)
    n = _resolve(args, "n", cfg, default=200, cast=int)
    gamma = _resolve(args, "gamma", cfg, default=1.0, cast=float)
    theta = _resolve(args, "theta", cfg, default=0.5, cast=float)
    delta = _resolve(args, "delta", cfg, default=0.1, cast=float)
    a = _resolve(args, "a", cfg, default=0.5, cast=float)
    replicas = _resolve(args, "replicas", cfg, default=2000, env="MMMLAB_REPLICAS", cast=int)
    report = verify_mutation_fraction_bound(n, gamma, theta, delta, a, replicas, _rng(seed))
    out = _out_dir(args, cfg)
    meta = _config_hash(
        "verify-mutbound",
        {"n": n, "gamma": gamma, "theta": theta, "delta": delta, "a": a, "replicas": replicas, "seed": seed},
    )
    write_csv(
        os.path.join(out, "verify_mutbound.csv"),
        report.CSV_HEADER,
        report.csv_rows(),
        f"config_hash={meta} estimate={report.estimate!r} bound={report.bound!r} passed={report.passed}",
    )
    _maybe_plot(
        args,
        cfg,
        out,
        "verify_mutbound",
        list(range(report.replicas)),
        {"sup": sorted(report.sups)},
        "replica (sorted)",
        "running maximum",
    )
    print(
        f"{'PASS' if report.passed else 'FAIL'} estimate={report.estimate!r} "
        f"stderr={report.stderr!r} bound={report.bound!r}"
    )
    return 0


def _cmd_pipeline(args, cfg):
    seed = _require_seed(args, cfg)
    model = _resolve(args, "model", cfg, default="moran")
    horizon = _resolve(args, "horizon", cfg, default=1.0, cast=float)
    replicas = _resolve(args, "replicas", cfg, default=200, env="MMMLAB_REPLICAS", cast=int)
    eps = _resolve(args, "eps", cfg, default=0.25, cast=float)
    deltas = _parse_floats(_resolve(args, "deltas", cfg, default="0.1"))
    law = _parse_lambda(args, cfg) if model == "cannings" else None
    params = _population_params(args, cfg, need_gamma=model == "moran")
    report = mark_function_pipeline(
        model, params, deltas, horizon, replicas, _rng(seed), law=law, eps=eps
    )
    out = _out_dir(args, cfg)
    meta = _config_hash(
        "pipeline",
        {
            "model": model,
            "n": params.size,
            "theta": params.theta,
            "horizon": horizon,
            "replicas": replicas,
            "eps": eps,
            "deltas": deltas,
            "seed": seed,
        },
    )
    write_csv(
        os.path.join(out, "pipeline.csv"),
        report.CSV_HEADER,
        report.csv_rows(),
        f"config_hash={meta} passed={report.passed}",
    )
    _maybe_plot(
        args,
        cfg,
        out,
        "pipeline",
        [r.delta for r in report.rows],
        {
            "estimate": [r.estimate for r in report.rows],
            "bound": [r.bound for r in report.rows],
        },
        "delta",
        "exceedance probability",
    )
    print(f"{'PASS' if report.passed else 'FAIL'} replicas={report.replicas}")
    return 0


def _cmd_acceptance(args, cfg):
    seed = _require_seed(args, cfg)
    out = _out_dir(args, cfg)
    if args.suite not in acceptance_mod.SUITES:
        raise DomainError(
            f"unknown suite {args.suite!r}; choose from {sorted(acceptance_mod.SUITES)}"
        )
    results = acceptance_mod.run_suite(args.suite, seed, out)
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmmlab",
        description="Finite marked metric measure space laboratory",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its values")
    common.add_argument("--seed", type=int, help="root seed (required for stochastic commands)")
    common.add_argument("--replicas", type=int, help="number of Monte-Carlo replicas")
    common.add_argument("--out", help="output directory (default ./out)")
    common.add_argument("--plot", action="store_true", default=None, help="also emit SVG line plots")
    common.add_argument("--approx", action="store_true", default=None, help="allow greedy fallbacks beyond exact limits")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prohorov", parents=[common], help="Prohorov distance of two measure files")
    p.add_argument("--m1", required=True)
    p.add_argument("--m2", required=True)
    p.add_argument("--tol", type=float)
    p.set_defaults(func=_cmd_prohorov)

    p = sub.add_parser("mgp", parents=[common], help="marked Gromov-Prohorov upper bound")
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--budget", type=int)
    p.add_argument("--tol", type=float)
    p.set_defaults(func=_cmd_mgp)

    p = sub.add_parser("beta", parents=[common], help="mark dispersion of a space file")
    p.add_argument("--x", required=True)
    p.set_defaults(func=_cmd_beta)

    p = sub.add_parser("membership", parents=[common], help="mark-gap membership tests")
    p.add_argument("--x", required=True)
    p.add_argument("--delta", type=float)
    p.add_argument("--eps", type=float)
    p.set_defaults(func=_cmd_membership)

    p = sub.add_parser("criteria", parents=[common], help="limit-criterion evidence over a sequence")
    p.add_argument("--kind", choices=("theorem", "sets", "diam"))
    p.add_argument("--deltas")
    p.add_argument("--modulus")
    p.add_argument("seq", nargs="+", help="space documents, sequence order")
    p.set_defaults(func=_cmd_criteria)

    p = sub.add_parser("counterexample", parents=[common], help="generate a no-mark-function space")
    p.add_argument("--kind", choices=("square", "ultrametric"))
    p.add_argument("--resolution", type=int)
    p.set_defaults(func=_cmd_counterexample)

    for name in ("moran", "cannings"):
        p = sub.add_parser(name, parents=[common], help=f"simulate the {name} model")
        p.add_argument("--n", type=int)
        p.add_argument("--theta", type=float)
        p.add_argument("--n-types", type=int)
        p.add_argument("--horizon", type=float)
        p.add_argument("--sample-times")
        if name == "moran":
            p.add_argument("--gamma", type=float)
            p.set_defaults(func=_cmd_moran)
        else:
            p.add_argument("--lambda-atoms")
            p.add_argument("--lambda-density")
            p.set_defaults(func=_cmd_cannings)

    p = sub.add_parser("coalescent", parents=[common], help="sample a coalescent genealogy")
    p.add_argument("--n", type=int)
    p.add_argument("--lambda-atoms")
    p.add_argument("--lambda-density")
    p.set_defaults(func=_cmd_coalescent)

    p = sub.add_parser("verify-mutbound", parents=[common], help="Monte-Carlo check of the fraction bound")
    p.add_argument("--n", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--theta", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--a", type=float)
    p.set_defaults(func=_cmd_verify_mutbound)

    p = sub.add_parser("pipeline", parents=[common], help="windowed mark-function pipeline")
    p.add_argument("--model", choices=("moran", "cannings"))
    p.add_argument("--n", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--theta", type=float)
    p.add_argument("--n-types", type=int)
    p.add_argument("--horizon", type=float)
    p.add_argument("--deltas")
    p.add_argument("--eps", type=float)
    p.add_argument("--lambda-atoms")
    p.add_argument("--lambda-density")
    p.set_defaults(func=_cmd_pipeline)

    p = sub.add_parser("acceptance", parents=[common], help="run an acceptance suite")
    p.add_argument("suite", choices=tuple(acceptance_mod.SUITES))
    p.set_defaults(func=_cmd_acceptance)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = _load_config(getattr(args, "config", None))
        return args.func(args, cfg)
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CapabilityError as exc:
        print(f"capability error: {exc}", file=sys.stderr)
        return 3
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
