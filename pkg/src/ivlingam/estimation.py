"""Causal-effect estimators: OLS and TSLS baselines, a lasso engine, sisVIVE and B-sisVIVE."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import _lasso
from .data import CovMatrix, Dataset
from .errors import InputError, NumericalError
from .stats import MAX_CONDITION, TestConfig, hoeffding_independent, lmb, resproj


def _moments(source, names: Sequence[str]) -> CovMatrix:
    if isinstance(source, Dataset):
        return source.cov(names)
    if isinstance(source, CovMatrix):
        return source
    raise InputError(f"expected a Dataset or CovMatrix, got {type(source).__name__}")


def _solve(a: np.ndarray, b: np.ndarray, what: str) -> np.ndarray:
    cond = np.linalg.cond(a)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise NumericalError(f"{what}: collinear design (condition number {cond:.3g})")
    return np.linalg.solve(a, b)


def ols_effect(source, y: str, regressors: Sequence[str]) -> dict[str, float]:
    """Least-squares coefficients of ``y`` on ``regressors``."""
    regressors = list(regressors)
    if not regressors:
        raise InputError("need at least one regressor")
    if y in regressors:
        raise InputError(f"{y!r} cannot be a regressor of itself")
    if isinstance(source, Dataset) and source.n <= len(regressors):
        raise InputError(f"need n > number of regressors (n={source.n})")
    S = _moments(source, [y, *regressors])
    coef = _solve(S.block(regressors, regressors), S.block(regressors, [y])[:, 0], "OLS")
    return dict(zip(regressors, map(float, coef)))


def _partial_out(S: CovMatrix, names: Sequence[str], conditioning: Sequence[str]) -> np.ndarray:
    a = S.block(names, names)
    if not conditioning:
        return a
    cc = S.block(conditioning, conditioning)
    ca = S.block(conditioning, names)
    return a - ca.T @ _solve(cc, ca, "conditioning set")


def tsls(source, x: str, y: str, instruments: Iterable[str], conditioning: Iterable[str] = (),
         min_r2: float = 1e-6) -> float:
    """Two-stage least squares coefficient of ``x``, with ``conditioning`` in both stages."""
    W = sorted(instruments)
    C = sorted(conditioning)
    if not W:
        raise InputError("tsls needs at least one instrument")
    if set(W) & set(C) or {x, y} & (set(W) | set(C)):
        raise InputError("instruments, conditioning set, x and y must be disjoint")
    names = [*W, x, y]
    S = _moments(source, names + C)
    m = _partial_out(S, names, C)
    k = len(W)
    sww, swx, swy = m[:k, :k], m[:k, k], m[:k, k + 1]
    a = _solve(sww, swx, "instrument covariance")
    den = float(swx @ a)
    r2 = den / m[k, k]
    if r2 < min_r2:
        raise NumericalError(f"weak instruments: first-stage partial R^2 = {r2:.3g}")
    return float(a @ swy) / den


# ---------------------------------------------------------------------------
# lasso
# ---------------------------------------------------------------------------


def lasso_gram(G: np.ndarray, c: np.ndarray, lam: float, beta0: np.ndarray | None = None,
               tol: float = 1e-8, max_sweeps: int = 10_000) -> np.ndarray:
    """Minimise 1/2 b'Gb - c'b + lam*|b|_1 by cyclic coordinate descent."""
    if lam < 0:
        raise InputError("lambda must be nonnegative")
    G = np.ascontiguousarray(G, dtype=float)
    c = np.ascontiguousarray(c, dtype=float)
    beta = np.zeros(len(c)) if beta0 is None else np.array(beta0, dtype=float)
    done = 0
    while done < max_sweeps:
        chunk = min(_POLISH_EVERY, max_sweeps - done)
        sweeps, move = _lasso.cd_gram(G, c, float(lam), beta, float(tol), chunk)
        done += sweeps
        if move < tol:
            # the support is settled; an exact solve there removes the residual KKT slack
            polished = _polish(G, c, lam, beta)
            return beta if polished is None else polished
        # near-flat directions make coordinate descent crawl; try the exact
        # solution on the current support and keep it if the KKT conditions hold
        polished = _polish(G, c, lam, beta)
        if polished is not None:
            return polished
    grad = c - G @ beta
    raise NumericalError(
        f"lasso did not converge in {max_sweeps} sweeps "
        f"(last move {move:.3g}, KKT violation {_kkt(grad, beta, lam):.3g})")


_POLISH_EVERY = 200


def _kkt(grad: np.ndarray, beta: np.ndarray, lam: float) -> float:
    viol = np.where(beta != 0, np.abs(grad - lam * np.sign(beta)), np.maximum(np.abs(grad) - lam, 0))
    return float(viol.max(initial=0.0))


def _polish(G, c, lam, beta) -> np.ndarray | None:
    act = np.flatnonzero(beta)
    if act.size == 0:
        return None
    s = np.sign(beta[act])
    Gaa = G[np.ix_(act, act)]
    if np.linalg.cond(Gaa) > MAX_CONDITION:
        return None
    out = np.zeros_like(beta)
    out[act] = np.linalg.solve(Gaa, c[act] - lam * s)
    if np.any(np.sign(out[act]) != s):
        return None
    grad = c - G @ out
    slack = 1e-9 * max(1.0, lam)
    if np.any(np.abs(np.delete(grad, act)) > lam + slack):
        return None
    return out


def lasso_path_gram(G: np.ndarray, c: np.ndarray, lambdas: Sequence[float]):
    """Exact lasso solutions at decreasing ``lambdas`` by homotopy (LARS with drops).

    Returns ``(solutions, flat_from)``.  If the active set would make G singular
    the solution stops being unique; from that grid index on (``flat_from``)
    the last unique solution is repeated.  ``flat_from`` is None otherwise.
    """
    G = np.asarray(G, dtype=float)
    c = np.asarray(c, dtype=float)
    lambdas = np.asarray(lambdas, dtype=float)
    if np.any(np.diff(lambdas) > 0) or np.any(lambdas < 0):
        raise InputError("lambdas must be nonnegative and non-increasing")
    p = len(c)
    out = np.zeros((len(lambdas), p))
    b = np.zeros(p)
    lam = float(np.max(np.abs(c), initial=0.0))
    i = int(np.searchsorted(-lambdas, -lam, side="right"))  # grid points >= lam_max stay at 0
    if lam == 0.0 or i == len(lambdas):
        return out, None
    j = int(np.argmax(np.abs(c)))
    active, signs = [j], [float(np.sign(c[j]))]
    eps = 1e-12 * lam
    while i < len(lambdas):
        Gaa = G[np.ix_(active, active)]
        if np.linalg.cond(Gaa) > MAX_CONDITION:
            out[i:] = b
            return out, i
        d = np.linalg.solve(Gaa, np.array(signs))
        a = G[:, active] @ d
        r = c - G @ b
        step, event, new_sign = lam, None, 0.0
        inactive = np.ones(p, bool)
        inactive[active] = False
        for k in np.flatnonzero(inactive):
            for sg in (1.0, -1.0):
                den = 1.0 - sg * a[k]
                if den > 1e-14:
                    g = (lam - sg * r[k]) / den
                    if eps < g < step:
                        step, event, new_sign = g, ("add", k), sg
        for pos, k in enumerate(active):
            if d[pos] != 0.0:
                g = -b[k] / d[pos]
                if eps < g < step:
                    step, event = g, ("drop", pos)
        while i < len(lambdas) and lambdas[i] >= lam - step:
            out[i] = b
            out[i, active] += (lam - lambdas[i]) * d
            i += 1
        b[active] += step * d
        lam -= step
        if event is None:
            break
        if event[0] == "add":
            active.append(int(event[1]))
            signs.append(new_sign)
        else:
            k = active.pop(event[1])
            signs.pop(event[1])
            b[k] = 0.0
    out[i:] = b
    return out, None


def _certified_path(G: np.ndarray, c: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Homotopy solutions on ``grid``, each confirmed by the coordinate-descent engine.

    The homotopy path removes the slow crawl of coordinate descent along the
    flat direction of the profiled Gram matrix; warm-started at the exact
    solution, coordinate descent stops after one sweep.
    """
    path, flat_from = lasso_path_gram(G, c, grid)
    stop = len(grid) if flat_from is None else flat_from
    tol = 1e-8 * max(1.0, math.sqrt(float(np.max(np.diag(G)))))
    for i in range(stop):
        path[i] = lasso_gram(G, c, grid[i], path[i], tol=tol)
        path[i][np.abs(path[i]) < 1e-12 * max(1.0, np.abs(path[i]).max())] = 0.0
    if flat_from is not None:
        path[flat_from:] = path[flat_from - 1] if flat_from else 0.0
    return path


def lasso(design, target, lam: float, tol: float = 1e-8, max_sweeps: int = 10_000) -> np.ndarray:
    """argmin_b 1/2 ||target - design b||^2 + lam ||b||_1.

    Coordinate steps are taken in units of each column's norm, which is the
    same as working on standardized columns; the returned coefficients solve
    the problem on the original scale.
    """
    D = np.asarray(design, dtype=float)
    t = np.asarray(target, dtype=float)
    scale = max(1.0, float(np.linalg.norm(t)))
    return lasso_gram(D.T @ D, D.T @ t, lam, tol=tol * scale, max_sweeps=max_sweeps)


def kkt_violation(design, target, beta, lam: float) -> float:
    D = np.asarray(design, dtype=float)
    beta = np.asarray(beta, dtype=float)
    return _kkt(D.T @ (np.asarray(target, float) - D @ beta), beta, lam)


# ---------------------------------------------------------------------------
# sisVIVE
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SisviveConfig:
    n_folds: int = 10
    n_lambda: int = 50
    lambda_decades: float = 4.0
    seed: int = 0

    def __post_init__(self):
        if self.n_folds < 2 or self.n_lambda < 2:
            raise InputError("need at least 2 folds and 2 lambda values")


@dataclass(frozen=True)
class SisviveResult:
    valid_W: tuple[str, ...]
    invalid_Z: tuple[str, ...]
    dce: float
    alpha_coefs: Mapping[str, float]
    lambda_selected: float
    background: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "valid_W": list(self.valid_W), "invalid_Z": list(self.invalid_Z), "dce": self.dce,
            "alpha": {k: self.alpha_coefs[k] for k in sorted(self.alpha_coefs)},
            "lambda": self.lambda_selected, "background": list(self.background),
        }


def _residualize(data: Dataset, names: Sequence[str], background: Sequence[str]) -> np.ndarray:
    M = data.matrix(names)
    if not background:
        return M
    B = data.matrix(background)
    _solve(B.T @ B, np.zeros(len(background)), "background set")
    coef, *_ = np.linalg.lstsq(B, M, rcond=None)
    return M - B @ coef


class _Moments:
    """Sufficient statistics of (W, x, y) for the profiled sisVIVE objective."""

    def __init__(self, A, bx, by, n):
        self.A, self.bx, self.by, self.n = A, bx, by, n

    @classmethod
    def of(cls, W, x, y):
        return cls(W.T @ W, W.T @ x, W.T @ y, len(x))

    def __sub__(self, o):
        return _Moments(self.A - o.A, self.bx - o.bx, self.by - o.by, self.n - o.n)

    def profiled(self):
        """Gram form after projecting onto span(W) and profiling out x's coefficient."""
        Ainv_bx = _solve(self.A, self.bx, "candidate instruments")
        s = float(self.bx @ Ainv_bx)
        if s <= 0:
            raise NumericalError("treatment is orthogonal to the candidate instruments")
        G = self.A - np.outer(self.bx, self.bx) / s
        c = self.by - self.bx * float(Ainv_bx @ self.by) / s
        return G, c, Ainv_bx, s

    def beta(self, alpha, Ainv_bx, s):
        return float(Ainv_bx @ (self.by - self.A @ alpha)) / s


def _span_basis(W: np.ndarray) -> np.ndarray:
    u, sv, _ = np.linalg.svd(W, full_matrices=False)
    return u[:, sv > sv[0] * max(W.shape) * np.finfo(float).eps]


def _projected_loss(basis: np.ndarray, W: np.ndarray, x: np.ndarray, y: np.ndarray,
                    alpha: np.ndarray, beta: float) -> float:
    """Mean squared projection of the held-out residual onto the span of the held-out candidates."""
    r = y - W @ alpha - x * beta
    return float(np.sum((basis.T @ r) ** 2)) / len(r)


def sisvive(data: Dataset, candidates: Iterable[str], background: Iterable[str], x: str, y: str,
            cfg: SisviveConfig = SisviveConfig()) -> SisviveResult:
    """Split ``candidates`` into valid instruments and invalid (directly acting) covariates.

    Everything is first residualized on ``background``.  The candidates are
    standardized and the penalty acts on their direct effects alpha in
    1/2 ||P (y - W alpha - x beta)||^2 + lambda ||alpha||_1, with P the
    projection onto the candidates' span and beta profiled out.  Lambda is
    picked by K-fold cross-validation of the held-out projected residual; the
    effect is then re-estimated by TSLS on the zero-alpha candidates.
    """
    cands = sorted(candidates)
    back = sorted(background)
    if not cands:
        raise InputError("sisvive needs at least one candidate")
    if set(cands) & set(back):
        raise InputError("candidates and background must be disjoint")
    if {x, y} & (set(cands) | set(back)):
        raise InputError("x and y cannot be candidates or background")
    R = _residualize(data, [*cands, x, y], back)
    W, xr, yr = R[:, :-2], R[:, -2], R[:, -1]
    sd = W.std(axis=0)
    if np.any(sd <= 1e-12):
        raise NumericalError("a candidate is constant after residualizing on the background")
    W = W / sd
    n, L = W.shape

    full = _Moments.of(W, xr, yr)
    G, c, Ainv_bx, s = full.profiled()
    lam_max = float(np.max(np.abs(c)))
    grid = lam_max * np.logspace(0, -cfg.lambda_decades, cfg.n_lambda)

    folds = np.random.default_rng(cfg.seed).permutation(n) % cfg.n_folds
    cv = np.zeros(cfg.n_lambda)
    for k in range(cfg.n_folds):
        held = folds == k
        test = _Moments.of(W[held], xr[held], yr[held])
        train = full - test
        Gt, ct, Ainv_t, st = train.profiled()
        Wh, xh, yh = W[held], xr[held], yr[held]
        basis = _span_basis(Wh)
        for i, alpha in enumerate(_certified_path(Gt, ct, grid)):
            cv[i] += _projected_loss(basis, Wh, xh, yh, alpha, train.beta(alpha, Ainv_t, st))
    best = int(np.argmin(cv))
    lam_sel = float(grid[best])

    alpha = _certified_path(G, c, grid[: best + 1])[-1]
    valid = tuple(v for v, a in zip(cands, alpha) if a == 0.0)
    invalid = tuple(v for v, a in zip(cands, alpha) if a != 0.0)
    if not valid:
        raise NumericalError("sisvive: every candidate was selected as invalid")
    dce = tsls(data, x, y, valid, (*invalid, *back))
    coefs = {v: float(a / d) for v, a, d in zip(cands, alpha, sd)}
    return SisviveResult(valid, invalid, dce, coefs, lam_sel, tuple(back))


# ---------------------------------------------------------------------------
# B-sisVIVE
# ---------------------------------------------------------------------------


def _res_dependence(data: Dataset, vi: str, V: Iterable[str], y: str, cfg: TestConfig):
    V = set(V)
    if vi not in V:
        raise InputError(f"{vi!r} must belong to V")
    blanket = lmb(data, vi, V - {vi}, cfg)
    ri = resproj(data, vi, blanket)
    ry = resproj(data, y, blanket | {vi})
    return hoeffding_independent(ri.values, ry.values, cfg, key=("score", vi))


def res_dependence_score(data: Dataset, vi: str, V: Iterable[str], y: str,
                         cfg: TestConfig = TestConfig()) -> float:
    """Minus the residual-independence p-value of ``vi`` against ``y`` (higher = more suspect)."""
    return -_res_dependence(data, vi, V, y, cfg).p_value


class _Residualizer:
    """Least-squares residuals from one precomputed Gram matrix."""

    def __init__(self, data: Dataset, names: Sequence[str]):
        self.names = list(names)
        self.M = data.matrix(self.names)
        self.G = self.M.T @ self.M
        self.idx = {v: i for i, v in enumerate(self.names)}

    def residual(self, v: str, S: Iterable[str]) -> np.ndarray:
        S = sorted(S)
        j = self.idx[v]
        if not S:
            return self.M[:, j]
        k = [self.idx[s] for s in S]
        coef = _solve(self.G[np.ix_(k, k)], self.G[k, j], f"regressors of {v}")
        return self.M[:, j] - self.M[:, k] @ coef


def b_log_score(data: Dataset, W: Iterable[str], Z: Iterable[str], C: Iterable[str], x: str, y: str,
                cfg: TestConfig = TestConfig(), _res: _Residualizer | None = None) -> float:
    """Sum over W_i of log residual-independence p-values, each W_i regressed on
    the rest of W, Z and C, and y regressed on all of W, Z and C.  ``x`` is
    never a regressor."""
    W, Z, C = set(W), set(Z), set(C)
    if W & Z or W & C or Z & C:
        raise InputError("W, Z and C must be disjoint")
    if not W:
        raise InputError("b_score needs at least one instrument")
    if {x, y} & (W | Z | C):
        raise InputError("x and y cannot be members of W, Z or C")
    res = _res or _Residualizer(data, sorted(W | Z | C | {y}))
    everything = W | Z | C
    ry = res.residual(y, everything)
    total = 0.0
    for w in sorted(W):
        rw = res.residual(w, everything - {w})
        total += hoeffding_independent(rw, ry, cfg, key=("bscore", w)).log_p
    return total


def b_score(data: Dataset, W: Iterable[str], Z: Iterable[str], C: Iterable[str], x: str, y: str,
            cfg: TestConfig = TestConfig()) -> float:
    """Product of the residual-independence p-values of the instruments W (see :func:`b_log_score`)."""
    return math.exp(b_log_score(data, W, Z, C, x, y, cfg))


@dataclass(frozen=True)
class BsisviveConfig:
    """Settings for :func:`b_sisvive`.

    Scores use large-sample Hoeffding p-values by default: permutation
    p-values bottom out at 1 / (n_perm + 1), which leaves the strict
    improvement rule of the refinement loop nothing to compare.
    """

    T: float = 0.5
    tests: TestConfig = TestConfig(p_method="asymptotic")
    skip_refinement: bool = False
    sisvive: SisviveConfig = SisviveConfig()

    def __post_init__(self):
        if not 0 <= self.T <= 1:
            raise InputError(f"T must lie in [0, 1], got {self.T}")


@dataclass(frozen=True)
class BsisviveResult:
    dce: float
    background: tuple[str, ...]
    scores: Mapping[str, float]
    preliminary: SisviveResult
    final: SisviveResult
    conditioning: tuple[str, ...]
    trace: tuple[dict, ...] = field(default=())

    def to_dict(self) -> dict:
        return {
            "dce": self.dce,
            "background": list(self.background),
            "scores": {k: self.scores[k] for k in sorted(self.scores)},
            "preliminary": self.preliminary.to_dict(),
            "final": self.final.to_dict(),
            "conditioning": list(self.conditioning),
            "trace": list(self.trace),
        }


def b_sisvive(data: Dataset, V: Iterable[str], x: str, y: str,
              c: BsisviveConfig = BsisviveConfig()) -> BsisviveResult:
    """Back-door protected sisVIVE.

    Variables whose residuals look most dependent on y's residual (the top T
    fraction) are barred from acting as instruments and used as background.
    Unless ``skip_refinement`` is set, background members are then dropped
    greedily while that strictly raises :func:`b_score`.
    """
    V = sorted(V)
    if len(V) < 2:
        raise InputError("b_sisvive needs at least two candidate variables")
    if x in V or y in V:
        raise InputError("V must exclude x and y")
    cfg = c.tests
    dep = {v: _res_dependence(data, v, V, y, cfg) for v in V}
    scores = {v: -r.p_value for v, r in dep.items()}
    ranked = sorted(V, key=lambda v: (-scores[v], dep[v].log_p, -dep[v].D, v))
    n_back = math.ceil(c.T * len(V))
    B = tuple(sorted(ranked[:n_back]))
    cands = [v for v in V if v not in B]
    if not cands:
        raise InputError("background fraction leaves no candidate instruments")
    prelim = sisvive(data, cands, B, x, y, c.sisvive)
    trace: list[dict] = []
    C = set(B)
    if not c.skip_refinement:
        Wp, Zp = prelim.valid_W, prelim.invalid_Z
        res = _Residualizer(data, sorted(set(V) | {y}))
        current = b_log_score(data, Wp, Zp, C, x, y, cfg, res)
        while C:
            trial = {v: b_log_score(data, Wp, Zp, C - {v}, x, y, cfg, res) for v in sorted(C)}
            best = max(sorted(C), key=lambda v: trial[v])
            accepted = trial[best] > current
            trace.append({"removed": best if accepted else None, "candidate": best,
                          "log_score_before": current, "log_score_after": trial[best]})
            if not accepted:
                break
            C.discard(best)
            current = trial[best]
    final = prelim if C == set(B) else sisvive(data, cands, sorted(C), x, y, c.sisvive)
    return BsisviveResult(final.dce, B, scores, prelim, final, tuple(sorted(C)), tuple(trace))
