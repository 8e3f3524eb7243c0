"""Simulation benchmark: template models, nine estimators, median absolute errors."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import InputError, IvlingamError
from .estimation import (
    BsisviveConfig,
    SisviveConfig,
    b_sisvive,
    ols_effect,
    sisvive,
    tsls,
)
from .sem import TemplateConfig, generate_template, sample, template_groups, true_dce
from .stats import TestConfig

log = logging.getLogger(__name__)

METHODS = ("NAIVE1", "NAIVE2", "NAIVE3", "ORACLE", "W-ORACLE", "S-ORACLE",
           "SISVIVE", "B-SISVIVE", "B-SISNAIVE")


@dataclass(frozen=True)
class ExperimentConfig:
    template: TemplateConfig = TemplateConfig()
    sample_sizes: tuple[int, ...] = (100, 1000, 5000)
    confounder_levels: tuple[float, ...] = (0.25, 0.50)
    trials: int = 200
    methods: tuple[str, ...] = METHODS
    master_seed: int = 0
    workers: int = 1
    bsisvive: BsisviveConfig = BsisviveConfig()

    def __post_init__(self):
        if self.trials < 1:
            raise InputError("trials must be at least 1")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise InputError(f"unknown methods {sorted(unknown)}; choose from {list(METHODS)}")
        if not self.methods:
            raise InputError("no methods selected")
        if any(n < 2 for n in self.sample_sizes) or not self.sample_sizes:
            raise InputError("sample sizes must be at least 2")
        if not self.confounder_levels:
            raise InputError("need at least one confounder level")
        if self.workers < 1:
            raise InputError("workers must be at least 1")
        # canonical order keeps reports independent of how methods were listed
        object.__setattr__(self, "methods", tuple(m for m in METHODS if m in set(self.methods)))
        object.__setattr__(self, "sample_sizes", tuple(int(n) for n in self.sample_sizes))
        object.__setattr__(self, "confounder_levels", tuple(float(c) for c in self.confounder_levels))

    @property
    def conditions(self) -> list[tuple[int, float]]:
        return [(n, c) for c in self.confounder_levels for n in self.sample_sizes]

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("workers")  # scheduling does not affect results
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ExperimentConfig":
        d = dict(d)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InputError(f"unknown experiment settings {sorted(unknown)}")
        try:
            if "template" in d:
                d["template"] = TemplateConfig(**d["template"])
            if "bsisvive" in d:
                b = dict(d["bsisvive"])
                if "tests" in b:
                    b["tests"] = TestConfig(**b["tests"])
                if "sisvive" in b:
                    b["sisvive"] = SisviveConfig(**b["sisvive"])
                d["bsisvive"] = BsisviveConfig(**b)
            for k in ("sample_sizes", "confounder_levels", "methods"):
                if k in d:
                    d[k] = tuple(d[k])
            return cls(**d)
        except TypeError as exc:
            raise InputError(f"bad experiment config: {exc}") from None

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def label(n: int, conf: float) -> str:
    return f"{n}/{conf:.2f}"


def _trial_seeds(master_seed: int, cond: int, trial: int) -> tuple[int, int, int]:
    ss = np.random.SeedSequence([master_seed, cond, trial])
    a, b, c = (int(s) for s in ss.generate_state(3, dtype=np.uint32))
    return a, b, c


def run_trial(cfg: ExperimentConfig, cond: int, trial: int) -> dict[str, float | str]:
    """Absolute errors of every configured method on one simulated dataset.

    Failed methods map to the error message instead of a number.
    """
    n, conf = cfg.conditions[cond]
    model_seed, data_seed, test_seed = _trial_seeds(cfg.master_seed, cond, trial)
    tc = dataclasses.replace(cfg.template, confounder_strength=conf, seed=model_seed)
    m = generate_template(tc)
    gr = template_groups(tc)
    x, y = gr.x, gr.y
    data = sample(m, n, data_seed)
    truth = true_dce(m, x, y)
    V = list(gr.candidates)
    bc = dataclasses.replace(
        cfg.bsisvive,
        tests=dataclasses.replace(cfg.bsisvive.tests, seed=test_seed),
        sisvive=dataclasses.replace(cfg.bsisvive.sisvive, seed=test_seed),
    )

    bsis_cache: dict = {}

    def bsis(skip: bool):
        # B-SISNAIVE is the preliminary stage of B-SISVIVE; share one run when both are wanted
        both = {"B-SISVIVE", "B-SISNAIVE"} <= set(cfg.methods)
        k = False if both else skip
        if k not in bsis_cache:
            bsis_cache[k] = b_sisvive(data, V, x, y, dataclasses.replace(bc, skip_refinement=k))
        r = bsis_cache[k]
        return r.preliminary.dce if skip else r.dce

    runners = {
        "NAIVE1": lambda: ols_effect(data, y, [x])[x],
        "NAIVE2": lambda: tsls(data, x, y, V),
        "NAIVE3": lambda: ols_effect(data, y, [x, *V])[x],
        "ORACLE": lambda: tsls(data, x, y, gr.W, gr.ZF + gr.ZB),
        "W-ORACLE": lambda: tsls(data, x, y, gr.W, gr.ZF + gr.ZC + gr.ZB),
        "S-ORACLE": lambda: sisvive(data, gr.W + gr.ZF + gr.ZB, (), x, y, bc.sisvive).dce,
        "SISVIVE": lambda: sisvive(data, V, (), x, y, bc.sisvive).dce,
        "B-SISVIVE": lambda: bsis(False),
        "B-SISNAIVE": lambda: bsis(True),
    }
    out: dict[str, float | str] = {}
    for meth in cfg.methods:
        try:
            out[meth] = abs(float(runners[meth]()) - truth)
        except (IvlingamError, np.linalg.LinAlgError) as exc:
            log.info("%s failed at %s trial %d: %s", meth, label(n, conf), trial, exc)
            out[meth] = f"{type(exc).__name__}: {exc}"
    return out


def _run_one(args):
    cfg, cond, trial = args
    return cond, trial, run_trial(cfg, cond, trial)


@dataclass
class Cell:
    median: float | None
    q25: float | None
    q75: float | None
    trials: int
    failures: int
    errors: list[float] = field(default_factory=list)

    @classmethod
    def of(cls, values: Sequence[float | str]) -> "Cell":
        errs = [v for v in values if not isinstance(v, str)]
        fails = len(values) - len(errs)
        if not errs:
            return cls(None, None, None, len(errs), fails, [])
        q25, med, q75 = (float(q) for q in np.quantile(errs, [0.25, 0.5, 0.75]))
        return cls(med, q25, q75, len(errs), fails, errs)


@dataclass
class BenchReport:
    config: ExperimentConfig
    cells: dict[str, dict[str, Cell]]
    failures: list[str] = field(default_factory=list)

    def median(self, method: str, cell: str) -> float | None:
        return self.cells[method][cell].median

    def to_dict(self) -> dict:
        return {
            "provenance": {"master_seed": self.config.master_seed, "config_hash": self.config.digest()},
            "config": self.config.to_dict(),
            "cells": {m: {c: dataclasses.asdict(v) for c, v in row.items()} for m, row in self.cells.items()},
            "failures": self.failures,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def table(self) -> str:
        labels = [label(n, c) for n, c in self.config.conditions]
        width = max(len(m) for m in self.config.methods) + 2
        lines = [" " * width + "".join(f"{lb:>11}" for lb in labels)]
        for m in self.config.methods:
            vals = [self.cells[m][lb].median for lb in labels]
            lines.append(f"{m:<{width}}" + "".join("        n/a" if v is None else f"{v:>11.2f}" for v in vals))
        return "\n".join(lines) + "\n"


def run_benchmark(cfg: ExperimentConfig, progress=None) -> BenchReport:
    """Run every (condition, trial) pair and aggregate absolute errors per method and condition.

    Each trial's model, data and random streams derive only from
    (master_seed, condition index, trial index), so results do not depend on
    ``workers`` or on the order of ``methods``.
    """
    jobs = [(cfg, ci, t) for ci in range(len(cfg.conditions)) for t in range(cfg.trials)]
    results: dict[tuple[int, int], dict] = {}
    if cfg.workers == 1:
        for job in jobs:
            ci, t, r = _run_one(job)
            results[(ci, t)] = r
            if progress:
                progress(len(results), len(jobs))
    else:
        with ProcessPoolExecutor(cfg.workers) as pool:
            for ci, t, r in pool.map(_run_one, jobs, chunksize=1):
                results[(ci, t)] = r
                if progress:
                    progress(len(results), len(jobs))
    cells: dict[str, dict[str, Cell]] = {}
    failures = []
    for m in cfg.methods:
        row = {}
        for ci, (n, c) in enumerate(cfg.conditions):
            vals = [results[(ci, t)][m] for t in range(cfg.trials)]
            row[label(n, c)] = Cell.of(vals)
            failures += [f"{m} {label(n, c)} trial {t}: {v}" for t, v in enumerate(vals) if isinstance(v, str)]
        cells[m] = row
    return BenchReport(cfg, cells, failures)
