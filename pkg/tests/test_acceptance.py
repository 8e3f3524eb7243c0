"""Acceptance checks, one per criterion.

Under pytest each check is a test that prints a PASS/FAIL line (visible with
``-s`` or in the captured output of failures).  Run directly for the plain
report::

    python3 tests/test_acceptance.py            # all checks
    python3 tests/test_acceptance.py 1 4 7      # a subset

The benchmark check (5) runs 50 trials per cell, about ten minutes on one
core.  Set IVLINGAM_BENCH_REPORT to a report JSON written by
``scripts/run_table.py --trials 50`` to reuse it instead; its config hash must
match.
"""

from __future__ import annotations

import contextlib
import io
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np
import pytest

from ivlingam import zoo
from ivlingam.bench import ExperimentConfig, run_benchmark
from ivlingam.cli import main as cli_main
from ivlingam.data import Dataset
from ivlingam.discovery import discover
from ivlingam.estimation import kkt_violation, lasso, tsls
from ivlingam.graph import active_noncausal_path_exists, choke_point_diagnosis, generic_rank
from ivlingam.io import write_json
from ivlingam.sem import ErrorDist, LinearSem, TemplateConfig, generate_template, population_covariance, sample
from ivlingam.stats import (
    TestConfig,
    conditional_covariance,
    hoeffding_independent,
    lmb,
    partial_corr_independent,
    resproj,
)

CHECKS = {}


def check(num: int, title: str):
    def wrap(fn):
        CHECKS[num] = (title, fn)
        return fn
    return wrap


def report(num: int) -> bool:
    title, fn = CHECKS[num]
    ok, detail = fn()
    print(f"{'PASS' if ok else 'FAIL'} [{num}] {title}: {detail}", flush=True)
    return ok


# -- 1 ----------------------------------------------------------------------------------


@check(1, "oracle soundness on instrument pairs, NA on shared-latent tetrads")
def oracle_soundness():
    rng = np.random.default_rng(0)
    variants = [zoo.two_instruments(a, b) for a in (True, False) for b in (False, True)]
    worst = 0.0
    for k in range(100):
        m = zoo.random_sem(variants[k % 4], rng)
        r = discover(m, "X", "Y")
        worst = max(worst, np.inf if r.is_na else abs(r.dce - m.coefficients[("Y", "X")]))
    na = sum(discover(zoo.random_sem(zoo.shared_latent_tetrad(), rng), "X", "Y").is_na for _ in range(100))
    return worst <= 1e-9 and na == 100, f"max |dce - truth| = {worst:.2e} over 100; NA on {na}/100 shared-latent models"


# -- 2 ----------------------------------------------------------------------------------


@check(2, "choke-point models: wrong effect accepted, choke vertex diagnosed, warning fires")
def choke_points():
    rng = np.random.default_rng(1)
    hits = total = 0
    for observed, choke in ((True, "C"), (False, "U")):
        g = zoo.choke_point_graph(observed_choke=observed)
        V = [v for v in g.observed if v not in ("X", "Y")]
        for _ in range(25):
            m = zoo.random_sem(g, rng)
            truth = m.coefficients[("Y", "X")]
            r = discover(m, "X", "Y", V, first_only=False)
            wrong = [t for t in r.accepted_tuples
                     if {t.wi, t.wj} == {"W1", "W2"} and abs(t.dce_estimate - truth) > 1e-6]
            ok = bool(wrong) and r.warning
            if ok:
                d = choke_point_diagnosis(g, "W1", "W2", wrong[0].Z, "X", "Y")
                ok = d.choke_point == choke and all(c.all for c in d.conditions.values())
            hits += ok
            total += 1
    return hits == total, f"{hits}/{total} parameterizations (observed and latent choke vertex)"


# -- 3 ----------------------------------------------------------------------------------


@check(3, "residual independence test agrees with the path predicate (n=50,000, alpha=0.01)")
def residual_predicate():
    rng = np.random.default_rng(0)
    cfg = TestConfig(alpha=0.01, p_method="asymptotic")
    agree = total = 0
    for k in range(50):
        g = zoo.random_dag(rng, int(rng.integers(3, 8)), int(rng.integers(0, 3)), p_edge=0.4, sink="Y")
        m = zoo.random_sem(g, rng)
        d = sample(m, 50_000, k)
        V = [v for v in g.observed if v != "Y"]
        for v in V:
            Z = lmb(g, v, set(V) - {v})
            ri = resproj(d, v, Z).values
            ry = resproj(d, "Y", Z | {v}).values
            ind = hoeffding_independent(ri, ry, cfg).independent
            agree += ind == (not active_noncausal_path_exists(g, v, "Y", Z))
            total += 1
    rate = agree / total
    return rate >= 0.90, f"{agree}/{total} = {rate:.3f} (need >= 0.90)"


# -- 4 ----------------------------------------------------------------------------------


def _numeric_rank(block: np.ndarray, tol: float = 1e-8) -> int:
    s = np.linalg.svd(block, compute_uv=False)
    return int(np.sum(s > tol * max(1.0, s[0])))


@check(4, "generic rank equals numeric rank of the population covariance block")
def trek_rank():
    rng = np.random.default_rng(0)
    agree = 0
    for _ in range(200):
        n_lat = int(rng.integers(0, 3))
        g = zoo.random_dag(rng, int(rng.integers(2, 9 - n_lat)), n_lat, p_edge=float(rng.uniform(0.2, 0.6)))
        names = list(g.names)
        A = sorted(rng.choice(names, int(rng.integers(1, min(4, len(names)) + 1)), replace=False))
        B = sorted(rng.choice(names, int(rng.integers(1, min(4, len(names)) + 1)), replace=False))
        block = zoo.random_sem(g, rng).full_covariance().block(A, B)
        agree += generic_rank(g, A, B) == _numeric_rank(block)
    return agree == 200, f"{agree}/200 (graph, A, B) triples"


# -- 5 ----------------------------------------------------------------------------------


def _bench_report(cfg: ExperimentConfig) -> dict:
    cached = os.environ.get("IVLINGAM_BENCH_REPORT")
    if cached:
        rep = json.loads(Path(cached).read_text())
        if rep["provenance"]["config_hash"] == cfg.digest():
            return rep
        print(f"ignoring {cached}: config hash differs", file=sys.stderr)
    return run_benchmark(cfg).to_dict()


@check(5, "desk-scale benchmark table (50 trials per cell)")
def benchmark():
    cfg = ExperimentConfig(trials=50, workers=os.cpu_count() or 1)
    rep = _bench_report(cfg)

    def med(m, c):
        return rep["cells"][m][c]["median"]

    oracle, naive1 = med("ORACLE", "5000/0.25"), med("NAIVE1", "1000/0.25")
    sis, bsis, naive_b = med("SISVIVE", "5000/0.50"), med("B-SISVIVE", "5000/0.50"), med("B-SISNAIVE", "5000/0.50")
    parts = {
        f"ORACLE 5000/0.25 = {oracle:.4f} <= 0.03": oracle <= 0.03,
        f"NAIVE1 1000/0.25 = {naive1:.5f} in [0.20, 0.30]": abs(naive1 - 0.25) <= 0.05,
        f"SISVIVE 5000/0.50 = {sis:.4f} >= 0.30": sis >= 0.30,
        f"B-SISVIVE 5000/0.50 = {bsis:.4f} <= SISVIVE - 0.05": bsis <= sis - 0.05,
        f"B-SISNAIVE 5000/0.50 = {naive_b:.4f} within [B-SISVIVE, SISVIVE] +/- 0.05":
            min(bsis, sis) - 0.05 <= naive_b <= max(bsis, sis) + 0.05,
    }
    detail = "; ".join(f"{k} {'ok' if v else 'MISS'}" for k, v in parts.items())
    return all(parts.values()), detail


# -- 6 ----------------------------------------------------------------------------------


@check(6, "test calibration under the null (alpha = 0.05, 500 seeds)")
def calibration():
    pc = hp = ha = 0
    for s in range(500):
        rng = np.random.default_rng(s)
        a, b, c = rng.laplace(size=(3, 2000))
        d = Dataset(["a", "b", "c"], np.c_[a, b + 0.8 * c, c])
        pc += not partial_corr_independent(d, "a", "b", ["c"]).independent
        x, y = rng.laplace(size=(2, 1000))
        hp += not hoeffding_independent(x, y, TestConfig(seed=s)).independent
        ha += not hoeffding_independent(x, y, TestConfig(p_method="asymptotic")).independent
    rates = {"partial correlation": pc / 500, "Hoeffding (permutation)": hp / 500, "Hoeffding (asymptotic)": ha / 500}
    ok = all(abs(r - 0.05) <= 0.03 for r in rates.values())
    return ok, ", ".join(f"{k} {v:.3f}" for k, v in rates.items())


# -- 7 ----------------------------------------------------------------------------------


@check(7, "numerical identities")
def identities():
    rng = np.random.default_rng(0)
    kkt = 0.0
    for _ in range(200):
        p = int(rng.integers(2, 15))
        D = rng.normal(size=(60, p)) * rng.uniform(0.1, 10, p)
        t = rng.normal(size=60) * 3
        lam = float(rng.uniform(0.01, 0.99)) * np.abs(D.T @ t).max()
        kkt = max(kkt, kkt_violation(D, t, lasso(D, t, lam), lam))
    iv = orth = 0.0
    for _ in range(200):
        k = int(rng.integers(0, 4))
        names = ["W", "X", "Y"] + [f"C{i}" for i in range(k)]
        d = Dataset(names, rng.laplace(size=(300, 3 + k)) @ rng.normal(size=(3 + k, 3 + k)))
        C = names[3:]
        S = d.cov()
        ratio = conditional_covariance(S, "W", "Y", C) / conditional_covariance(S, "W", "X", C)
        iv = max(iv, abs(tsls(d, "X", "Y", ["W"], C) - ratio) / max(1.0, abs(ratio)))
        r = resproj(d, "Y", names[:2] + C)
        orth = max(orth, float(np.abs(d.matrix(names[:2] + C).T @ r.values).max() / d.n))
    cov = 0.0
    g1 = LinearSem(zoo.single_instrument(),
                   {("X", "W"): 0.8, ("X", "U"): 0.5, ("Y", "U"): 0.5, ("Y", "X"): 0.3},
                   {v: ErrorDist.with_variance(1.0) for v in ("W", "X", "Y", "U")})
    for m in (g1, generate_template(TemplateConfig(n_w=3, n_zf=1, n_zc=1, n_zb=1, seed=0))):
        S = population_covariance(m)
        cov = max(cov, float(np.abs(sample(m, 10**6, 1).cov(S.labels).values - S.values).max()))
    ok = kkt <= 1e-6 and iv <= 1e-10 and orth <= 1e-8 and cov <= 5e-3
    return ok, (f"lasso KKT {kkt:.1e} (<=1e-6), TSLS vs ratio {iv:.1e} (<=1e-10), "
                f"resproj orthogonality {orth:.1e} (<=1e-8), sample vs population cov {cov:.1e} (<=5e-3)")


# -- 8 ----------------------------------------------------------------------------------


def _cli(argv) -> tuple[int, str]:
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        code = cli_main([str(a) for a in argv])
    return code, buf.getvalue()


def _cli_session(root: Path) -> dict[str, bytes]:
    """Every subcommand once with fixed seeds; returns stdout and file bytes keyed by name."""
    root.mkdir()
    write_json({"n_w": 3, "n_zf": 1, "n_zc": 1, "n_zb": 1, "n": 500}, root / "t.json")
    write_json(zoo.choke_point_graph().to_dict(), root / "g.choke.json")
    write_json({"template": {"n_w": 3, "n_zf": 1, "n_zc": 1, "n_zb": 1}, "sample_sizes": [150],
                "confounder_levels": [0.5]}, root / "b.json")
    runs = {
        "simulate": ["simulate", "--config", root / "t.json", "--out", root / "d.csv",
                     "--graph-out", root / "g.json", "--model-out", root / "m.json", "--seed", 5],
        "oracle": ["oracle", "--graph", root / "g.choke.json", "--check", "chokepoint",
                   "--args", "wi=W1", "wj=W2", "x=X", "y=Y"],
        "bench": ["bench", "--config", root / "b.json", "--trials", 2, "--seed", 3, "--out", root / "r.json"],
    }
    for method in ("alg1", "bsisvive", "bsisnaive", "sisvive", "tsls", "naive1", "naive2", "naive3"):
        runs[f"discover-{method}"] = ["discover", "--data", root / "d.csv", "--method", method, "--max-z", 1,
                                      "--n-perm", 100, "--n-boot", 100, "--seed", 2]
    out = {}
    for name, argv in runs.items():
        code, text = _cli(argv)
        out[name] = f"{code}\n{text}".encode()
    for f in sorted(root.iterdir()):
        out[f.name] = f.read_bytes()
    return out


@check(8, "CLI determinism")
def cli_determinism():
    with tempfile.TemporaryDirectory() as tmp:
        # identical relative paths so that file names echoed in output match
        a = _cli_session(Path(tmp) / "a")
        os.rename(Path(tmp) / "a", Path(tmp) / "a0")
        b = _cli_session(Path(tmp) / "a")
    bad = sorted(k for k in a if a[k] != b.get(k))
    codes = {k: a[k].split(b"\n", 1)[0] for k in a if not k.endswith((".csv", ".json", ".txt"))}
    ok = not bad and set(a) == set(b) and all(c == b"0" for c in codes.values())
    return ok, f"{len(a)} outputs compared, {len(bad)} differ{': ' + ', '.join(bad) if bad else ''}"


# -- pytest entry points ------------------------------------------------------------------


@pytest.mark.parametrize("num", sorted(CHECKS))
def test_acceptance(num):
    assert report(num)


if __name__ == "__main__":
    wanted = [int(a) for a in sys.argv[1:]] or sorted(CHECKS)
    results = [report(n) for n in wanted]
    sys.exit(0 if all(results) else 1)
