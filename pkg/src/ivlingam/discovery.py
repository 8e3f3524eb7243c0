"""Exhaustive pairwise instrument search with tetrad and residual-independence checks.

Run on a :class:`~ivlingam.sem.LinearSem` the search works at population level:
covariances are exact, blankets come from d-separation and the residual
independence test is replaced by its graphical characterisation.  Run on a
:class:`~ivlingam.data.Dataset` every check is a statistical test.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .data import Dataset
from .errors import InputError, NumericalError
from .graph import Dag, active_noncausal_path_exists, graphical_iv_criteria
from .sem import LinearSem, population_covariance
from .stats import (
    TestConfig,
    conditional_covariance,
    hoeffding_independent,
    lmb,
    partial_corr_independent,
    resproj,
    tetrad_holds,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class IvTuple:
    wi: str
    wj: str
    Z: tuple[str, ...]
    dce_estimate: float
    p_values: tuple[float, float, float]  # tetrad, residual test for wi, for wj
    minimal: bool = True

    def to_dict(self) -> dict:
        return {
            "wi": self.wi, "wj": self.wj, "Z": list(self.Z),
            "dce": self.dce_estimate,
            "p_tetrad": self.p_values[0], "p_hoeffding_i": self.p_values[1], "p_hoeffding_j": self.p_values[2],
            "minimal": self.minimal,
        }


@dataclass(frozen=True)
class DiscoveryResult:
    dce: float | None
    accepted_tuples: tuple[IvTuple, ...] = ()
    warning: bool = False
    spread: float = 0.0
    skipped: tuple[str, ...] = field(default=(), compare=False)

    @property
    def is_na(self) -> bool:
        return self.dce is None

    def to_dict(self) -> dict:
        return {
            "dce": self.dce,
            "accepted_tuples": [t.to_dict() for t in self.accepted_tuples],
            "equivalence_class_warning": self.warning,
            "spread": self.spread,
            "skipped": list(self.skipped),
        }


class _Oracle:
    def __init__(self, m: LinearSem, cfg: TestConfig):
        self.graph = m.graph
        self.cov = population_covariance(m)
        self.cfg = cfg

    def vanishes_with_x(self, w, x, Z):
        return abs(conditional_covariance(self.cov, w, x, Z)) < self.cfg.oracle_tol

    def tetrad(self, wi, wj, x, y, Z):
        return tetrad_holds(self.cov, wi, wj, x, y, Z, self.cfg)

    def blanket(self, w, S):
        return lmb(self.graph, w, S, self.cfg)

    def residual_independent(self, w, y, blanket, key):
        ind = not active_noncausal_path_exists(self.graph, w, y, blanket)
        return (1.0 if ind else 0.0), ind


class _Sample:
    def __init__(self, data: Dataset, cfg: TestConfig):
        self.data = data
        self.cov = data.cov()
        self.cfg = cfg

    def vanishes_with_x(self, w, x, Z):
        return partial_corr_independent(self.cov, w, x, Z, self.cfg).independent

    def tetrad(self, wi, wj, x, y, Z):
        return tetrad_holds(self.data, wi, wj, x, y, Z, self.cfg)

    def blanket(self, w, S):
        return lmb(self.cov, w, S, self.cfg)

    def residual_independent(self, w, y, blanket, key):
        rw = resproj(self.data, w, blanket)
        ry = resproj(self.data, y, blanket | {w})
        res = hoeffding_independent(rw.values, ry.values, self.cfg, key=key)
        return res.p_value, res.independent


def _evaluate(ctx, wi, wj, Z, x, y) -> IvTuple | None:
    if ctx.vanishes_with_x(wi, x, Z) or ctx.vanishes_with_x(wj, x, Z):
        return None
    tet = ctx.tetrad(wi, wj, x, y, Z)
    if not tet.holds:
        return None
    Zs = frozenset(Z)
    key = (wi, wj, tuple(Z))
    p_i, ind_i = ctx.residual_independent(wi, y, ctx.blanket(wi, Zs | {wj}), key + ("i",))
    if not ind_i:
        return None
    p_j, ind_j = ctx.residual_independent(wj, y, ctx.blanket(wj, Zs | {wi}), key + ("j",))
    if not ind_j:
        return None
    dce = conditional_covariance(ctx.cov, wi, y, Z) / conditional_covariance(ctx.cov, wi, x, Z)
    return IvTuple(wi, wj, tuple(Z), dce, (tet.p_value, p_i, p_j))


def discover(source: Dataset | LinearSem, x: str, y: str, V: Iterable[str] | None = None,
             cfg: TestConfig = TestConfig(), max_z: int = 3, first_only: bool = True,
             spread_tol: float | None = None) -> DiscoveryResult:
    """Search pairs {Wi, Wj} of V and conditioning sets Z for a valid instrument pair.

    Conditioning sets are visited in non-decreasing size within each pair,
    pairs and sets in lexicographic order.  With ``first_only`` the first
    accepted tuple decides the estimate; otherwise every accepted tuple whose
    Z has no accepted proper subset (for the same pair) is collected and the
    spread of their estimates is checked against ``spread_tol``.
    """
    if isinstance(source, LinearSem):
        ctx = _Oracle(source, cfg)
        names = source.observed_order
        tol = 1e-6 if spread_tol is None else spread_tol
    elif isinstance(source, Dataset):
        ctx = _Sample(source, cfg)
        names = source.columns
        tol = 0.1 if spread_tol is None else spread_tol
    else:
        raise InputError(f"discover needs a Dataset or LinearSem, got {type(source).__name__}")
    for v in (x, y):
        if v not in names:
            raise InputError(f"unknown variable {v!r}")
    V = sorted(set(names) - {x, y} if V is None else set(V))
    if x in V or y in V:
        raise InputError("V must exclude the treatment and the outcome")
    unknown = set(V) - set(names)
    if unknown:
        raise InputError(f"unknown variables {sorted(unknown)}")

    accepted: list[IvTuple] = []
    skipped: list[str] = []
    for wi, wj in itertools.combinations(V, 2):
        rest = [v for v in V if v not in (wi, wj)]
        found_for_pair: list[frozenset[str]] = []
        for k in range(min(max_z, len(rest)) + 1):
            for Z in itertools.combinations(rest, k):
                if any(f <= set(Z) for f in found_for_pair):
                    continue
                try:
                    t = _evaluate(ctx, wi, wj, Z, x, y)
                except NumericalError as exc:
                    log.info("skipping (%s, %s, %s): %s", wi, wj, Z, exc)
                    skipped.append(f"{wi},{wj}|{','.join(Z)}: {exc}")
                    continue
                if t is None:
                    continue
                if first_only:
                    return DiscoveryResult(t.dce_estimate, (t,), skipped=tuple(skipped))
                accepted.append(t)
                found_for_pair.append(frozenset(Z))
    if not accepted:
        return DiscoveryResult(None, skipped=tuple(skipped))
    ests = [t.dce_estimate for t in accepted]
    spread = max(ests) - min(ests)
    return DiscoveryResult(accepted[0].dce_estimate, tuple(accepted), spread > tol, spread, tuple(skipped))


def completeness_premise(g: Dag, x: str, y: str, V: Sequence[str], max_z: int = 3) -> tuple | None:
    """A (wi, wj, Z) with both members valid instruments given Z and no open
    back-door or collider path to x, or ``None``."""
    V = sorted(V)
    for wi, wj in itertools.combinations(V, 2):
        rest = [v for v in V if v not in (wi, wj)]
        for k in range(min(max_z, len(rest)) + 1):
            for Z in itertools.combinations(rest, k):
                if all(graphical_iv_criteria(g, w, Z, x, y)
                       and not active_noncausal_path_exists(g, w, x, Z) for w in (wi, wj)):
                    return wi, wj, Z
    return None


def completeness_check(g: Dag, x: str, y: str, V: Sequence[str], found: DiscoveryResult,
                       true_dce: float | None = None, max_z: int = 3, tol: float = 1e-9) -> bool:
    """Test-harness predicate: whenever the completeness premise holds, the
    search must have returned an estimate (equal to ``true_dce`` when given)."""
    if completeness_premise(g, x, y, V, max_z) is None:
        return True
    if found.dce is None:
        return False
    return true_dce is None or abs(found.dce - true_dce) <= tol
