"""Small named graphs and random model generators used by tests, scripts and the CLI."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .graph import EXO_SUFFIX, LATENT, OBSERVED, Dag, Vertex
from .sem import ErrorDist, LinearSem


def _dag(observed: Sequence[str], latent: Sequence[str], edges) -> Dag:
    return Dag([Vertex(v, OBSERVED) for v in observed] + [Vertex(v, LATENT) for v in latent], edges)


def single_instrument() -> Dag:
    """W -> X -> Y with X and Y confounded by latent U."""
    return _dag("WXY", ["U"], [("W", "X"), ("X", "Y"), ("U", "X"), ("U", "Y")])


def two_instruments(w1_to_w2: bool = True, confounded_ws: bool = False) -> Dag:
    """Two instruments W1, W2 of X, linked to each other and optionally sharing a latent L."""
    edges = [("W1", "W2") if w1_to_w2 else ("W2", "W1"),
             ("W1", "X"), ("W2", "X"), ("X", "Y"), ("U", "X"), ("U", "Y")]
    latent = ["U"]
    if confounded_ws:
        latent.append("L")
        edges += [("L", "W1"), ("L", "W2")]
    return _dag(["W1", "W2", "X", "Y"], latent, edges)


def conditional_instrument() -> Dag:
    """W is an instrument only after conditioning on {Z1, Z2}."""
    edges = [("Z1", "W"), ("Z1", "Y"), ("U2", "W"), ("U2", "Z2"), ("Z2", "Y"),
             ("W", "X"), ("X", "Y"), ("U", "X"), ("U", "Y")]
    return _dag(["W", "Z1", "Z2", "X", "Y"], ["U", "U2"], edges)


def shared_latent_tetrad() -> Dag:
    """Tetrads hold given Z although no instrument exists: a latent U1 drives W1, W2, Z, X and Y."""
    edges = [("U1", v) for v in ("W1", "W2", "Z", "X", "Y")]
    edges += [("Z", "X"), ("Z", "Y"), ("X", "Y"), ("U", "X"), ("U", "Y")]
    return _dag(["W1", "W2", "Z", "X", "Y"], ["U", "U1"], edges)


def choke_point_graph(observed_choke: bool = True, extra_instruments: int = 2) -> Dag:
    """W1, W2 reach both X and Y only through a single vertex.

    With ``observed_choke`` the choke vertex is the observed ``C`` and the X-Y
    confounder is ``U``; otherwise the choke vertex is the latent ``U`` and the
    confounder is ``U2``.  ``extra_instruments`` valid instruments W3, W4, ...
    of X are added so that competing estimates exist.
    """
    choke, conf = ("C", "U") if observed_choke else ("U", "U2")
    extra = [f"W{i + 3}" for i in range(extra_instruments)]
    edges = [("W1", choke), ("W2", choke), (choke, "X"), (choke, "Y"), ("X", "Y"), (conf, "X"), (conf, "Y")]
    edges += [(w, "X") for w in extra]
    observed = ["W1", "W2", *extra, "X", "Y"] + ([choke] if observed_choke else [])
    latent = [conf] + ([] if observed_choke else [choke])
    return _dag(observed, latent, edges)


def collider_trap(p: int = 3) -> Dag:
    """Instruments W1..Wp of X that all become invalid once the collider Z0 is conditioned on."""
    ws = [f"W{i + 1}" for i in range(p)]
    edges = [(w, "X") for w in ws] + [(w, "Z0") for w in ws]
    edges += [("X", "Y"), ("U", "Y"), ("U", "Z0")]
    return _dag([*ws, "Z0", "X", "Y"], ["U"], edges)


def back_door_instrument() -> Dag:
    """W -> X -> Y with back-door W <- U1 -> X <- U2 -> Y that no observed set blocks."""
    edges = [("W", "X"), ("X", "Y"), ("U1", "W"), ("U1", "X"), ("U2", "X"), ("U2", "Y")]
    return _dag("WXY", ["U1", "U2"], edges)


def chain(k: int = 3) -> Dag:
    names = [f"V{i + 1}" for i in range(k)]
    return _dag(names, [], list(zip(names, names[1:])))


# ---------------------------------------------------------------------------
# random parameterizations
# ---------------------------------------------------------------------------


def random_sem(g: Dag, rng: np.random.Generator, low: float = 0.5, high: float = 1.5,
               family: str = "laplace", fixed: dict | None = None) -> LinearSem:
    """Coefficients with magnitude uniform on [low, high] and random sign; error scales uniform on [0.5, 1.5]."""
    fixed = fixed or {}
    coefs = {}
    for p, c in sorted(g.edges):
        if p.endswith(EXO_SUFFIX):
            continue
        coefs[(c, p)] = fixed.get((c, p), float(rng.choice([-1.0, 1.0]) * rng.uniform(low, high)))
    errors = {v: ErrorDist(family, float(rng.uniform(0.5, 1.5)))
              for v in g.names if g.kind(v) == OBSERVED or not g.parents(v)}
    return LinearSem(g, coefs, errors)


def random_dag(rng: np.random.Generator, n_observed: int, n_latent: int = 0, p_edge: float = 0.4,
               sink: str | None = None) -> Dag:
    """Random DAG on V1..Vn (in that causal order), plus latents with two or more observed children.

    When ``sink`` is given the last observed vertex is named ``sink``.
    """
    names = [f"V{i + 1}" for i in range(n_observed)]
    if sink is not None:
        names[-1] = sink
    edges = [(names[i], names[j]) for i in range(n_observed) for j in range(i + 1, n_observed)
             if rng.random() < p_edge]
    latent = [f"L{k + 1}" for k in range(n_latent)]
    for lat in latent:
        k = int(rng.integers(2, min(3, n_observed) + 1))
        for c in rng.choice(n_observed, size=k, replace=False):
            edges.append((lat, names[int(c)]))
    return _dag(names, latent, edges)
