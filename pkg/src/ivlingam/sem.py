"""Linear non-Gaussian structural equation models.

A :class:`LinearSem` pairs a :class:`~ivlingam.graph.Dag` with structural
coefficients and independent error distributions.  Parentless latent vertices
are their own exogenous source; every observed vertex has an error term.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from .data import CovMatrix, Dataset
from .errors import GenerationError, InputError, NumericalError
from .graph import EXO_SUFFIX, LATENT, OBSERVED, Dag, Vertex

FAMILIES = ("laplace", "gaussian", "uniform")


class MissingEffectWarning(UserWarning):
    """The queried treatment -> outcome edge is absent; the effect is reported as 0."""


@dataclass(frozen=True)
class ErrorDist:
    family: str = "laplace"
    scale: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InputError(f"unknown error family {self.family!r}")
        if not self.scale > 0:
            raise InputError(f"error scale must be positive, got {self.scale}")

    @property
    def variance(self) -> float:
        if self.family == "laplace":
            return 2.0 * self.scale**2
        if self.family == "uniform":
            return self.scale**2 / 3.0
        return self.scale**2

    @classmethod
    def with_variance(cls, variance: float, family: str = "laplace") -> "ErrorDist":
        sd = math.sqrt(variance)
        scale = {"laplace": sd / math.sqrt(2.0), "uniform": sd * math.sqrt(3.0), "gaussian": sd}[family]
        return cls(family, scale)

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.family == "laplace":
            return rng.laplace(0.0, self.scale, n)
        if self.family == "uniform":
            return rng.uniform(-self.scale, self.scale, n)
        return rng.normal(0.0, self.scale, n)


@dataclass(frozen=True)
class LinearSem:
    """V_i = sum_j lambda_ij V_j + e_i over ``graph``.

    ``coefficients`` maps (child, parent) to lambda; edges introduced by latent
    normalisation default to coefficient 1.  ``errors`` holds a distribution for
    every observed vertex and every parentless latent.
    """

    graph: Dag
    coefficients: Mapping[tuple[str, str], float]
    errors: Mapping[str, ErrorDist]

    def __post_init__(self):
        g = self.graph
        coefs = dict(self.coefficients)
        for p, c in g.edges:
            if (c, p) not in coefs and p.endswith(EXO_SUFFIX) and g.kind(p) == LATENT:
                coefs[(c, p)] = 1.0
        want = {(c, p) for p, c in g.edges}
        if set(coefs) != want:
            extra = sorted(set(coefs) - want)
            missing = sorted(want - set(coefs))
            raise InputError(f"coefficients do not match edges (missing {missing}, extra {extra})")
        need = {v for v in g.names if g.kind(v) == OBSERVED or (g.kind(v) == LATENT and not g.parents(v))}
        if set(self.errors) != need:
            raise InputError(
                f"error distributions must cover {sorted(need)}, got {sorted(self.errors)}")
        if any(g.kind(v) not in (OBSERVED, LATENT) for v in g.names):
            raise InputError("models are specified without explicit error vertices")
        object.__setattr__(self, "coefficients", coefs)

    @property
    def observed_order(self) -> tuple[str, ...]:
        return self.graph.observed

    @cached_property
    def _order(self) -> tuple[str, ...]:
        return self.graph.topological_order

    @cached_property
    def _index(self) -> dict[str, int]:
        return {v: i for i, v in enumerate(self._order)}

    def coefficient_matrix(self) -> np.ndarray:
        """Lambda with Lambda[child, parent] indexed in topological order."""
        k = self._index
        lam = np.zeros((len(k), len(k)))
        for (c, p), val in self.coefficients.items():
            lam[k[c], k[p]] = val
        return lam

    @cached_property
    def total_effects(self) -> np.ndarray:
        """(I - Lambda)^-1: row v holds the weight of each source's noise in v."""
        lam = self.coefficient_matrix()
        return np.linalg.solve(np.eye(len(lam)) - lam, np.eye(len(lam)))

    def noise_variances(self) -> np.ndarray:
        out = np.zeros(len(self._order))
        for v, d in self.errors.items():
            out[self._index[v]] = d.variance
        return out

    def full_covariance(self) -> CovMatrix:
        b = self.total_effects
        sigma = (b * self.noise_variances()) @ b.T
        return CovMatrix(self._order, (sigma + sigma.T) / 2)

    def to_dict(self) -> dict:
        d = self.graph.to_dict()
        d["coefficients"] = sorted([c, p, float(v)] for (c, p), v in self.coefficients.items())
        d["errors"] = [{"v": v, "family": e.family, "scale": float(e.scale)}
                       for v, e in sorted(self.errors.items())]
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "LinearSem":
        g = Dag.from_dict(d)
        try:
            coefs = {(c, p): float(v) for c, p, v in d["coefficients"]}
            errs = {e["v"]: ErrorDist(e.get("family", "laplace"), float(e["scale"])) for e in d["errors"]}
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed model JSON: {exc}") from None
        return cls(g, coefs, errs)


def population_covariance(m: LinearSem) -> CovMatrix:
    """Exact covariance of the observed variables."""
    full = m.full_covariance()
    obs = m.observed_order
    sigma = full.block(obs, obs)
    eig = np.linalg.eigvalsh(sigma)
    if eig[0] <= 1e-10 * max(1.0, eig[-1]):
        raise NumericalError(f"implied covariance is not positive definite (min eigenvalue {eig[0]:.3g})")
    return CovMatrix(obs, sigma)


def _noise(m: LinearSem, n: int, rng: np.random.Generator) -> np.ndarray:
    eps = np.zeros((n, len(m._order)))
    # draw in topological order so a seed fixes the data regardless of dict order
    for v in m._order:
        if v in m.errors:
            eps[:, m._index[v]] = m.errors[v].draw(rng, n)
    return eps


def sample(m: LinearSem, n: int, seed: int | np.random.SeedSequence | None = 0) -> Dataset:
    """Ancestral sample of the observed variables (returned centered)."""
    if n < 1:
        raise InputError("n must be at least 1")
    rng = np.random.default_rng(seed)
    b = m.total_effects
    obs_idx = [m._index[v] for v in m.observed_order]
    values = _noise(m, n, rng) @ b[obs_idx].T
    return Dataset(m.observed_order, values)


def intervene(m: LinearSem, target: str, value: float, n: int,
              seed: int | np.random.SeedSequence | None = 0) -> np.ndarray:
    """Raw (uncentered) observed samples under do(target = value).

    Edges into ``target`` are cut and its noise removed.  Columns follow
    ``m.observed_order``.
    """
    if target not in m._index:
        raise InputError(f"unknown vertex {target!r}")
    rng = np.random.default_rng(seed)
    t = m._index[target]
    lam = m.coefficient_matrix()
    lam[t, :] = 0.0
    b = np.linalg.solve(np.eye(len(lam)) - lam, np.eye(len(lam)))
    eps = _noise(m, n, rng)
    eps[:, t] = value
    obs_idx = [m._index[v] for v in m.observed_order]
    return eps @ b[obs_idx].T


def true_dce(m: LinearSem, x: str = "X", y: str = "Y") -> float:
    """The structural coefficient of x in y's equation (0, with a warning, if absent)."""
    if (y, x) not in m.coefficients:
        warnings.warn(f"no edge {x}->{y}; differential causal effect is 0", MissingEffectWarning, stacklevel=2)
        return 0.0
    return float(m.coefficients[(y, x)])


# ---------------------------------------------------------------------------
# synthetic template
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TemplateConfig:
    n_w: int = 25
    n_zf: int = 10
    n_zc: int = 10
    n_zb: int = 1
    confounder_strength: float = 0.25
    min_abs_dce: float = 0.05
    seed: int = 0
    min_error_variance: float = 0.01
    max_draws: int = 10_000

    def __post_init__(self):
        if min(self.n_w, self.n_zf, self.n_zc, self.n_zb) < 0:
            raise InputError("group sizes must be nonnegative")
        if self.min_abs_dce < 0:
            raise InputError("min_abs_dce must be nonnegative")
        if not abs(self.confounder_strength) < 1:
            raise InputError("confounder strength must lie in (-1, 1) for unit variances")


@dataclass(frozen=True)
class TemplateGroups:
    W: tuple[str, ...]
    ZF: tuple[str, ...]
    ZC: tuple[str, ...]
    ZB: tuple[str, ...]
    x: str = "X"
    y: str = "Y"
    confounder: str = "U"
    w_latent: str = "Uw"

    @property
    def candidates(self) -> tuple[str, ...]:
        return self.W + self.ZF + self.ZC + self.ZB


def template_groups(c: TemplateConfig) -> TemplateGroups:
    return TemplateGroups(
        W=tuple(f"W{i + 1}" for i in range(c.n_w)),
        ZF=tuple(f"ZF{i + 1}" for i in range(c.n_zf)),
        ZC=tuple(f"ZC{i + 1}" for i in range(c.n_zc)),
        ZB=tuple(f"ZB{i + 1}" for i in range(c.n_zb)),
    )


def template_graph(c: TemplateConfig) -> Dag:
    gr = template_groups(c)
    x, y, u, uw = gr.x, gr.y, gr.confounder, gr.w_latent
    edges = [(u, x), (u, y), (x, y)]
    for w in gr.W:
        edges += [(uw, w), (w, x)]
        edges += [(w, z) for z in gr.ZF + gr.ZC]
        edges += [(b, w) for b in gr.ZB]
    for z in gr.ZF:
        edges += [(z, x), (z, y)]
    for z in gr.ZC:
        edges += [(u, z), (z, x)]
    for b in gr.ZB:
        edges += [(u, b), (b, x), (b, y)]
    vertices = [Vertex(v) for v in gr.candidates + (x, y)] + [Vertex(u, LATENT), Vertex(uw, LATENT)]
    return Dag(vertices, edges)


def _draw_template(g: Dag, fixed: Mapping[tuple[str, str], float], rng: np.random.Generator,
                   min_error_variance: float):
    """One draw of coefficients scaled so every observed variance is 1.

    Returns ``None`` when some error variance would fall to ``min_error_variance``
    or below.
    """
    order = g.topological_order
    k = {v: i for i, v in enumerate(order)}
    cov = np.zeros((len(order), len(order)))
    coefs: dict[tuple[str, str], float] = {}
    errors: dict[str, ErrorDist] = {}
    for v in order:
        i = k[v]
        parents = sorted(g.parents(v))
        if not parents:
            cov[i, i] = 1.0
            errors[v] = ErrorDist.with_variance(1.0)
            continue
        pidx = [k[p] for p in parents]
        f = np.array([fixed.get((v, p), 0.0) for p in parents])
        free = np.array([(v, p) not in fixed for p in parents])
        b = np.where(free, rng.standard_normal(len(parents)), 0.0)
        s = cov[np.ix_(pidx, pidx)]
        # var = f'Sf + 2c f'Sb + c^2 (b'Sb + 1) = 1, with unit raw error variance
        qa = b @ s @ b + 1.0
        qb = 2.0 * (f @ s @ b)
        qc = f @ s @ f - 1.0
        if qc >= 0:
            return None
        c = (-qb + math.sqrt(qb * qb - 4 * qa * qc)) / (2 * qa)
        lam = f + c * b
        err_var = c * c
        if err_var <= min_error_variance:
            return None
        for p, val in zip(parents, lam):
            coefs[(v, p)] = float(val)
        errors[v] = ErrorDist.with_variance(err_var)
        cov[i, :i] = lam @ cov[pidx, :i]
        cov[:i, i] = cov[i, :i]
        cov[i, i] = 1.0
    return coefs, errors


def generate_template(c: TemplateConfig) -> LinearSem:
    """Random model from the four-group template (instruments W, forward ZF, collider ZC, back-door ZB).

    Free coefficients are standard normal draws, rescaled per vertex (together
    with its error scale) so that each variable has unit variance; the
    confounder edges U -> X and U -> Y are fixed at ``confounder_strength``.
    Draws are rejected until |lambda_yx| >= ``min_abs_dce``.
    """
    g = template_graph(c)
    gr = template_groups(c)
    fixed = {(gr.x, gr.confounder): c.confounder_strength, (gr.y, gr.confounder): c.confounder_strength}
    rng = np.random.default_rng(c.seed)
    for _ in range(c.max_draws):
        out = _draw_template(g, fixed, rng, c.min_error_variance)
        if out is None:
            continue
        coefs, errors = out
        if abs(coefs[(gr.y, gr.x)]) >= c.min_abs_dce:
            return LinearSem(g, coefs, errors)
    raise GenerationError(f"no acceptable template model in {c.max_draws} draws")
