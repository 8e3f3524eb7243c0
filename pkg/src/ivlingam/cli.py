"""Command-line interface: simulate, discover, oracle and bench."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys

from . import graph as gc
from .bench import ExperimentConfig, run_benchmark
from .discovery import discover
from .errors import GenerationError, InputError, NumericalError
from .estimation import BsisviveConfig, SisviveConfig, b_sisvive, ols_effect, sisvive, tsls
from .io import load_dataset, load_graph, load_json, write_dataset, write_json, write_report
from .sem import LinearSem, TemplateConfig, generate_template, sample, true_dce
from .stats import TestConfig

EXIT_INPUT = 2
EXIT_NUMERICAL = 3
DISCOVERY_METHODS = ("alg1", "bsisvive", "bsisnaive", "sisvive", "tsls", "naive1", "naive2", "naive3")
ORACLE_CHECKS = ("iv-criteria", "dsep", "tsep", "chokepoint", "rank", "noncausal-path")


def _names(s: str | None) -> list[str]:
    return [v.strip() for v in s.split(",") if v.strip()] if s else []


def _emit(obj, out: str | None) -> None:
    if out:
        write_json(obj, out)
    else:
        print(json.dumps(obj, sort_keys=True, indent=1))


# -- simulate ---------------------------------------------------------------


def cmd_simulate(a) -> int:
    cfg = load_json(a.config) if a.config else {}
    n = int(cfg.pop("n", a.n))
    if "coefficients" in cfg:
        model = LinearSem.from_dict(cfg)
    else:
        try:
            tc = TemplateConfig(**{**cfg, "seed": a.seed})
        except TypeError as exc:
            raise InputError(f"bad template config: {exc}") from None
        model = generate_template(tc)
    data = sample(model, n, a.seed)
    write_dataset(data, a.out)
    if a.graph_out:
        write_json(model.graph.to_dict(), a.graph_out)
    if a.model_out:
        write_json(model.to_dict(), a.model_out)
    x, y = a.treatment, a.outcome
    summary = {"n": n, "columns": list(data.columns)}
    if (y, x) in model.coefficients:
        summary["true_dce"] = true_dce(model, x, y)
    print(json.dumps(summary, sort_keys=True))
    return 0


# -- discover ---------------------------------------------------------------


def cmd_discover(a) -> int:
    data = load_dataset(a.data)
    x, y = a.treatment, a.outcome
    for v in (x, y):
        if v not in data.columns:
            raise InputError(f"{a.data}: no column {v!r}")
    V = _names(a.candidates) or [v for v in data.columns if v not in (x, y)]
    m = a.method
    p_method = a.p_method or ("asymptotic" if m in ("bsisvive", "bsisnaive") else "permutation")
    tests = TestConfig(alpha=a.alpha, n_boot=a.n_boot, n_perm=a.n_perm, seed=a.seed, p_method=p_method)
    sis = SisviveConfig(n_folds=a.folds, n_lambda=a.n_lambda, seed=a.seed)
    out: dict = {"method": m, "treatment": x, "outcome": y}
    if m == "alg1":
        r = discover(data, x, y, V, tests, max_z=a.max_z, first_only=not a.enumerate)
        out.update(r.to_dict())
    elif m in ("bsisvive", "bsisnaive"):
        r = b_sisvive(data, V, x, y, BsisviveConfig(a.T, tests, m == "bsisnaive", sis))
        out.update(r.to_dict())
    elif m == "sisvive":
        r = sisvive(data, V, _names(a.conditioning), x, y, sis)
        out.update(r.to_dict())
    elif m == "tsls":
        inst = _names(a.instruments) or V
        out["dce"] = tsls(data, x, y, inst, _names(a.conditioning))
        out["instruments"] = sorted(inst)
        out["conditioning"] = sorted(_names(a.conditioning))
    elif m == "naive1":
        out["dce"] = ols_effect(data, y, [x])[x]
    elif m == "naive2":
        out["dce"] = tsls(data, x, y, V)
    elif m == "naive3":
        out["dce"] = ols_effect(data, y, [x, *V])[x]
    _emit(out, a.out)
    return 0


# -- oracle -----------------------------------------------------------------


def _kv(pairs: list[str]) -> dict[str, str]:
    out = {}
    for p in pairs:
        if "=" not in p:
            raise InputError(f"--args entries must look like key=value, got {p!r}")
        k, v = p.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def cmd_oracle(a) -> int:
    g = load_graph(a.graph)
    kv = _kv(a.args)

    def one(key):
        if key not in kv:
            raise InputError(f"check {a.check!r} needs {key}=...")
        return kv[key]

    def many(key):
        return _names(kv.get(key, ""))

    out: dict = {"check": a.check}
    if a.check == "iv-criteria":
        out["result"] = gc.graphical_iv_criteria(g, one("w"), many("Z"), one("x"), one("y"))
    elif a.check == "dsep":
        out["result"] = gc.d_separated(g, many("A"), many("B"), many("S"))
    elif a.check == "tsep":
        out["result"] = gc.t_separated(g, many("VI"), many("VJ"), many("CI"), many("CJ"))
    elif a.check == "rank":
        out["result"] = gc.generic_rank(g, many("A"), many("B"))
    elif a.check == "noncausal-path":
        out["result"] = gc.active_noncausal_path_exists(g, one("v"), one("y"), many("Z"))
    elif a.check == "chokepoint":
        d = gc.choke_point_diagnosis(g, one("wi"), one("wj"), many("Z"), one("x"), one("y"))
        out["result"] = d.choke_point
        out["conditions"] = {w: dataclasses.asdict(c) for w, c in d.conditions.items()}
    if g.rewrites:
        out["rewrites"] = list(g.rewrites)
    _emit(out, a.out)
    return 0


# -- bench ------------------------------------------------------------------


def cmd_bench(a) -> int:
    d = load_json(a.config) if a.config else {}
    if a.trials is not None:
        d["trials"] = a.trials
    if a.workers is not None:
        d["workers"] = a.workers
    if a.seed is not None:
        d["master_seed"] = a.seed
    cfg = ExperimentConfig.from_dict(d)

    def progress(done, total):
        if a.verbose:
            print(f"\r{done}/{total} trials", end="", file=sys.stderr, flush=True)

    report = run_benchmark(cfg, progress)
    if a.verbose:
        print(file=sys.stderr)
    write_report(report, a.out)
    sys.stdout.write(report.table())
    return 0


# -- entry point -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ivlingam", description="Instrumental-variable discovery under non-Gaussianity.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="sample data from a template config or a model JSON")
    s.add_argument("--config", help="template settings or a full model JSON")
    s.add_argument("--out", required=True, help="CSV output path")
    s.add_argument("--graph-out")
    s.add_argument("--model-out")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--treatment", default="X")
    s.add_argument("--outcome", default="Y")
    s.set_defaults(func=cmd_simulate)

    d = sub.add_parser("discover", help="estimate the effect of treatment on outcome from data")
    d.add_argument("--data", required=True)
    d.add_argument("--treatment", default="X")
    d.add_argument("--outcome", default="Y")
    d.add_argument("--method", choices=DISCOVERY_METHODS, default="alg1")
    d.add_argument("--candidates", help="comma-separated candidate variables (default: all others)")
    d.add_argument("--instruments", help="tsls instruments (default: all candidates)")
    d.add_argument("--conditioning", help="tsls conditioning set, or sisvive background")
    d.add_argument("--alpha", type=float, default=0.05)
    d.add_argument("--T", type=float, default=0.5, help="background fraction for bsisvive")
    d.add_argument("--max-z", type=int, default=3)
    d.add_argument("--enumerate", action="store_true", help="alg1: collect every minimal accepted tuple")
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--n-perm", type=int, default=400)
    d.add_argument("--n-boot", type=int, default=400)
    d.add_argument("--p-method", choices=("permutation", "asymptotic"), default=None,
                   help="Hoeffding p-values (default: permutation; asymptotic for bsisvive)")
    d.add_argument("--folds", type=int, default=10)
    d.add_argument("--n-lambda", type=int, default=50)
    d.add_argument("--out")
    d.set_defaults(func=cmd_discover)

    o = sub.add_parser("oracle", help="graphical queries on a graph JSON")
    o.add_argument("--graph", required=True)
    o.add_argument("--check", choices=ORACLE_CHECKS, required=True)
    o.add_argument("--args", nargs="*", default=[], metavar="KEY=VALUE",
                   help="e.g. w=W Z=Z1,Z2 x=X y=Y; sets are comma-separated")
    o.add_argument("--out")
    o.set_defaults(func=cmd_oracle)

    b = sub.add_parser("bench", help="run the simulation benchmark")
    b.add_argument("--config")
    b.add_argument("--trials", type=int)
    b.add_argument("--workers", type=int)
    b.add_argument("--seed", type=int)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalError, GenerationError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
