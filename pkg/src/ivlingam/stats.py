"""Statistical primitives: conditional covariances, independence tests, residuals.

Functions accepting ``source`` work on a :class:`Dataset` (finite sample) or on a
:class:`CovMatrix`.  A covariance with ``n=None`` is treated as exact, in which
case tests compare against ``TestConfig.oracle_tol`` instead of computing
p-values.
"""

from __future__ import annotations

import functools
import math
import warnings
import zlib
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy import integrate, interpolate
from scipy import stats as sps

from . import _hoeffding
from .data import CovMatrix, Dataset
from .errors import InputError, NumericalError
from .graph import Dag, d_separated

MAX_CONDITION = 1e10


@dataclass(frozen=True)
class TestConfig:
    """Significance level, resampling budgets and seed shared by all tests.

    ``perm_stop`` enables sequential permutation testing: stop as soon as that
    many permuted statistics reach the observed one (p = perm_stop / k).
    ``p_method="asymptotic"`` replaces Hoeffding permutation p-values by the
    large-sample null distribution, which keeps resolving differences far
    below 1 / (n_perm + 1).
    """

    __test__ = False  # not a pytest class

    alpha: float = 0.05
    n_boot: int = 400
    n_perm: int = 400
    seed: int = 0
    perm_stop: int | None = None
    oracle_tol: float = 1e-9
    p_method: str = "permutation"

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise InputError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.n_boot < 100 or self.n_perm < 100:
            raise InputError("n_boot and n_perm must be at least 100")
        if self.perm_stop is not None and self.perm_stop < 1:
            raise InputError("perm_stop must be positive")
        if self.p_method not in ("permutation", "asymptotic"):
            raise InputError(f"p_method must be 'permutation' or 'asymptotic', got {self.p_method!r}")

    def rng(self, *key) -> np.random.Generator:
        """Generator determined by the seed and a stable key (e.g. variable names)."""
        spawn = tuple(zlib.crc32(repr(k).encode()) for k in key)
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=spawn))


class TestResult(NamedTuple):
    __test__ = False

    p_value: float
    independent: bool


class TetradResult(NamedTuple):
    stat: float
    p_value: float
    holds: bool


class HoeffdingResult(NamedTuple):
    D: float
    p_value: float
    independent: bool
    heavy_ties: bool = False
    log_p: float | None = None  # natural log of p_value, set where p may underflow


@dataclass(frozen=True)
class ResidualVector:
    values: np.ndarray
    regressors: tuple[str, ...]
    target: str


def _as_cov(source, names: Sequence[str]) -> CovMatrix:
    if isinstance(source, Dataset):
        return source.cov(names)
    if isinstance(source, CovMatrix):
        return source
    raise InputError(f"expected a Dataset or CovMatrix, got {type(source).__name__}")


def _check_condition(m: np.ndarray, what: str) -> None:
    if m.size and np.linalg.cond(m) > MAX_CONDITION:
        raise NumericalError(f"{what} is ill-conditioned (condition number {np.linalg.cond(m):.3g})")


def conditional_covariance(S: CovMatrix, a: str, b: str, Z: Iterable[str] = ()) -> float:
    """sigma_ab.Z = sigma_ab - Sigma_aZ Sigma_ZZ^-1 Sigma_Zb."""
    Z = sorted(Z)
    if a in Z or b in Z:
        raise InputError("a and b must not be in Z")
    if not Z:
        return S[a, b]
    szz = S.block(Z, Z)
    _check_condition(szz, "Sigma_ZZ")
    return float(S[a, b] - (S.block([a], Z) @ np.linalg.solve(szz, S.block(Z, [b])))[0, 0])


def partial_correlation(S: CovMatrix, a: str, b: str, Z: Iterable[str] = ()) -> float:
    Z = list(Z)
    sab = conditional_covariance(S, a, b, Z)
    saa = conditional_covariance(S, a, a, Z)
    sbb = conditional_covariance(S, b, b, Z)
    return sab / math.sqrt(saa * sbb)


def _fisher_p(r: float, n: int, k: int) -> float:
    if n <= k + 3:
        raise InputError(f"need n > |Z| + 3 for the Fisher z test (n={n}, |Z|={k})")
    r = min(max(r, -1.0), 1.0)
    if abs(r) >= 1.0:
        return 0.0
    z = math.atanh(r) * math.sqrt(n - k - 3)
    return float(2.0 * sps.norm.sf(abs(z)))


def partial_corr_independent(source, a: str, b: str, Z: Iterable[str] = (),
                             cfg: TestConfig = TestConfig()) -> TestResult:
    """Fisher z test of rho_ab.Z = 0."""
    Z = sorted(Z)
    S = _as_cov(source, [a, b, *Z])
    r = partial_correlation(S, a, b, Z)
    if S.is_population:
        ind = abs(r) < cfg.oracle_tol
        return TestResult(1.0 if ind else 0.0, ind)
    p = _fisher_p(r, S.n, len(Z))
    return TestResult(p, p >= cfg.alpha)


def tetrad_statistic(S: CovMatrix, wi: str, wj: str, x: str, y: str, Z: Iterable[str] = ()) -> float:
    Z = list(Z)
    cc = lambda a, b: conditional_covariance(S, a, b, Z)  # noqa: E731
    return cc(wi, x) * cc(wj, y) - cc(wi, y) * cc(wj, x)


def _tetrad_from_matrix(c: np.ndarray, k: int) -> float:
    # rows/cols ordered (wi, wj, x, y, Z...)
    if k:
        c = c[:4, :4] - c[:4, 4:] @ np.linalg.solve(c[4:, 4:], c[4:, :4])
    return c[0, 2] * c[1, 3] - c[0, 3] * c[1, 2]


def tetrad_holds(source, wi: str, wj: str, x: str, y: str, Z: Iterable[str] = (),
                 cfg: TestConfig = TestConfig()) -> TetradResult:
    """Test the conditional tetrad sigma_wix.Z sigma_wjy.Z - sigma_wiy.Z sigma_wjx.Z = 0.

    Exact covariances are compared against ``cfg.oracle_tol``; datasets use a
    null-centred nonparametric bootstrap of the statistic.
    """
    Z = sorted(Z)
    names = [wi, wj, x, y, *Z]
    if len(set(names)) != len(names):
        raise InputError("wi, wj, x, y and Z must be distinct")
    if isinstance(source, CovMatrix):
        stat = tetrad_statistic(source, wi, wj, x, y, Z)
        if source.is_population:
            holds = abs(stat) < cfg.oracle_tol
            return TetradResult(stat, 1.0 if holds else 0.0, holds)
        raise InputError("the sample tetrad test needs the data, not only its covariance")
    if not isinstance(source, Dataset):
        raise InputError(f"expected a Dataset or CovMatrix, got {type(source).__name__}")
    if Z:
        _check_condition(source.cov(Z).values, "Sigma_ZZ")
    m = source.matrix(names)
    n = m.shape[0]
    stat = _tetrad_from_matrix(m.T @ m / n, len(Z))
    rng = cfg.rng("tetrad", *names)
    exceed = 0
    for _ in range(cfg.n_boot):
        b = m[rng.integers(0, n, n)]
        b = b - b.mean(axis=0)
        t = _tetrad_from_matrix(b.T @ b / n, len(Z))
        if abs(t - stat) >= abs(stat):
            exceed += 1
    p = (1 + exceed) / (cfg.n_boot + 1)
    return TetradResult(float(stat), p, p >= cfg.alpha)


def resproj(data: Dataset, v: str, S: Iterable[str] = ()) -> ResidualVector:
    """Residual of the least-squares projection of ``v`` on the columns ``S``."""
    S = tuple(sorted(S))
    if v in S:
        raise InputError(f"{v!r} cannot be regressed on itself")
    target = data.column(v)
    if not S:
        return ResidualVector(target - target.mean(), S, v)
    if data.n <= len(S):
        raise InputError(f"need n > |S| (n={data.n}, |S|={len(S)})")
    X = data.matrix(S)
    _check_condition(X.T @ X, f"regressors {list(S)}")
    coef, *_ = np.linalg.lstsq(X, target, rcond=None)
    return ResidualVector(target - X @ coef, S, v)


def lmb(source, v: str, S: Iterable[str], cfg: TestConfig = TestConfig()) -> frozenset[str]:
    """Local Markov blanket: members s of S not independent of v given S minus s.

    ``source`` may be a Dag (or anything with a ``graph`` attribute), in which
    case d-separation stands in for the test.
    """
    S = sorted(S)
    if v in S:
        raise InputError(f"{v!r} must not be in S")
    graph = source if isinstance(source, Dag) else getattr(source, "graph", None)
    if isinstance(graph, Dag):
        return frozenset(s for s in S
                         if not d_separated(graph, {v}, {s}, set(S) - {s}))
    if not S:
        return frozenset()
    names = [v, *S]
    C = _as_cov(source, names).block(names, names)
    _check_condition(C, f"covariance of {names}")
    P = np.linalg.inv(C)
    out = []
    for i, s in enumerate(S, start=1):
        r = -P[0, i] / math.sqrt(P[0, 0] * P[i, i])
        if isinstance(source, CovMatrix) and source.is_population:
            dep = abs(r) >= cfg.oracle_tol
        else:
            n = source.n
            dep = _fisher_p(r, n, len(S) - 1) < cfg.alpha
        if dep:
            out.append(s)
    return frozenset(out)


def _mid_ranks_and_groups(x: np.ndarray):
    order = np.argsort(x, kind="stable")
    xs = x[order]
    starts = np.flatnonzero(np.r_[True, xs[1:] != xs[:-1]])
    return order, np.r_[starts, len(x)].astype(np.int64)


def hoeffding_d(x, y) -> float:
    """Hoeffding's D (scaled by 30, so it lies in [-1/2, 1])."""
    return _hoeffding_prepare(np.asarray(x, float), np.asarray(y, float))[0]


def _hoeffding_prepare(x: np.ndarray, y: np.ndarray):
    n = len(x)
    order, groups = _mid_ranks_and_groups(x)
    r = sps.rankdata(x)[order]
    y_o = y[order]
    s = sps.rankdata(y_o)
    yr = sps.rankdata(y_o, method="dense").astype(np.int64)
    m = int(yr.max()) if n else 0
    d = _hoeffding.hoeffding_d_sorted(groups, yr, m, r, s)
    return float(d), groups, yr, m, r, s


# Under independence n*D/30 + 1/36 converges to sum_ij Z_ij^2 / (pi^4 i^2 j^2)
# with Z_ij iid standard normal.
_NULL_TERMS = 40
_TAIL_SWITCH = 0.25


@functools.cache
def _null_weights() -> tuple[np.ndarray, float]:
    i = np.arange(1, _NULL_TERMS + 1)
    lam = np.sort((1.0 / (np.pi ** 4 * np.outer(i ** 2, i ** 2))).ravel())[::-1]
    return lam, 1.0 / 36.0 - float(lam.sum())


def _imhof_sf(q: float) -> float:
    """P(Q > q) for the limiting null by Imhof's inversion formula (adaptive quadrature)."""
    lam, rest = _null_weights()
    q = q - rest

    def f(u):
        th = 0.5 * np.arctan(lam * u).sum() - 0.5 * q * u
        return math.sin(th) / (u * math.exp(0.25 * np.log1p((lam * u) ** 2).sum()))

    v, _ = integrate.quad(f, 0.0, np.inf, limit=1000)
    return min(max(0.5 + v / math.pi, 0.0), 1.0)


@functools.cache
def _log_sf_table() -> interpolate.CubicSpline:
    # Imhof on a fixed u grid: the phase and modulus do not depend on q, so the
    # whole table is one matrix product.  Agrees with _imhof_sf to ~1e-9.
    lam, rest = _null_weights()
    u = np.unique(np.r_[np.geomspace(1e-8, 4.0, 600), np.arange(4.0, 20000.0, 0.5)])
    phase = 0.5 * np.arctan(np.outer(u, lam)).sum(axis=1)
    weight = 1.0 / (u * np.exp(0.25 * np.log1p(np.outer(u, lam) ** 2).sum(axis=1)))
    qs = np.linspace(0.0, _TAIL_SWITCH, 501)
    sf = np.concatenate([
        0.5 + integrate.simpson(np.sin(phase - 0.5 * np.outer(chunk - rest, u)) * weight, x=u, axis=1) / math.pi
        for chunk in np.array_split(qs, 20)])
    return interpolate.CubicSpline(qs, np.log(np.clip(sf, 1e-300, 1.0)))


def _tail_log_sf(q: float) -> float:
    # leading-eigenvalue asymptotics, rescaled to agree with Imhof at the switch
    lam, rest = _null_weights()
    l1 = lam[0]
    log_k = -0.5 * float(np.log1p(-lam[1:] / l1).sum())
    return log_k + math.log(2.0) + float(sps.norm.logsf(math.sqrt(max(q - rest, 0.0) / l1)))


@functools.cache
def _tail_offset() -> float:
    return float(_log_sf_table()(_TAIL_SWITCH)) - _tail_log_sf(_TAIL_SWITCH)


def hoeffding_log_pvalue(D: float, n: int) -> float:
    """Natural log of the large-sample p-value of Hoeffding's D."""
    q = n * D / 30.0 + 1.0 / 36.0
    if q <= 0.0:
        return 0.0
    if q < _TAIL_SWITCH:
        return min(float(_log_sf_table()(q)), 0.0)
    return _tail_log_sf(q) + _tail_offset()


def hoeffding_independent(x, y, cfg: TestConfig = TestConfig(), key=()) -> HoeffdingResult:
    """Permutation test of independence based on Hoeffding's D.

    The p-value counts permuted statistics at least as large as the observed
    one, with the plus-one correction.  ``key`` selects the random stream.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if x.shape != y.shape or x.ndim != 1:
        raise InputError("x and y must be vectors of equal length")
    n = len(x)
    if n < 20:
        raise InputError(f"Hoeffding's test needs at least 20 observations, got {n}")
    ties = max(1.0 - len(np.unique(x)) / n, 1.0 - len(np.unique(y)) / n)
    heavy = ties > 0.2
    if heavy:
        warnings.warn(f"{ties:.0%} tied values; using mid-ranks", RuntimeWarning, stacklevel=2)
    d, groups, yr, m, r, s = _hoeffding_prepare(x, y)
    if cfg.p_method == "asymptotic":
        log_p = hoeffding_log_pvalue(d, n)
        p = math.exp(log_p)
        return HoeffdingResult(d, p, p >= cfg.alpha, heavy, log_p)
    rng = cfg.rng("hoeffding", *key)
    exceed = 0
    done = 0
    tol = 1e-12 * max(1.0, abs(d))
    for _ in range(cfg.n_perm):
        perm = rng.permutation(n)
        dp = _hoeffding.hoeffding_d_sorted(groups, yr[perm], m, r, s[perm])
        done += 1
        if dp >= d - tol:
            exceed += 1
            if cfg.perm_stop is not None and exceed >= cfg.perm_stop:
                p = exceed / done
                return HoeffdingResult(d, p, p >= cfg.alpha, heavy, math.log(p))
    p = (1 + exceed) / (cfg.n_perm + 1)
    return HoeffdingResult(d, p, p >= cfg.alpha, heavy, math.log(p))
