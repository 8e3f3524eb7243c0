import itertools

import networkx as nx
import numpy as np
import pytest
from hypothesis import strategies as st

from ivlingam.graph import LATENT, OBSERVED, Dag, Vertex


@st.composite
def small_dags(draw, min_size=2, max_size=7, max_latent=2):
    """Random DAGs: observed V1..Vn in causal order plus a few parentless latents."""
    n = draw(st.integers(min_size, max_size))
    names = [f"V{i + 1}" for i in range(n)]
    pairs = list(itertools.combinations(range(n), 2))
    mask = draw(st.lists(st.booleans(), min_size=len(pairs), max_size=len(pairs)))
    edges = [(names[i], names[j]) for (i, j), keep in zip(pairs, mask) if keep]
    k = draw(st.integers(0, max_latent))
    latents = [f"L{i + 1}" for i in range(k)]
    for lat in latents:
        kids = draw(st.sets(st.sampled_from(names), min_size=min(2, n), max_size=min(3, n)))
        edges += [(lat, c) for c in sorted(kids)]
    return Dag([Vertex(v, OBSERVED) for v in names] + [Vertex(v, LATENT) for v in latents], edges)


def to_nx(g: Dag) -> nx.DiGraph:
    d = nx.DiGraph()
    d.add_nodes_from(g.names)
    d.add_edges_from(g.edges)
    return d


def brute_active_paths(g: Dag, a: str, b: str, S):
    """Every simple path from a to b that is active given S, enumerated by networkx.

    Yields (path, arrows) with arrows[k] True when the k-th edge points forward.
    """
    d = to_nx(g)
    S = set(S)
    desc_in_S = {v for v in g.names if (nx.descendants(d, v) | {v}) & S}
    for path in nx.all_simple_paths(d.to_undirected(as_view=True), a, b):
        arrows = [d.has_edge(u, v) for u, v in zip(path, path[1:])]
        ok = True
        for k in range(1, len(path) - 1):
            collider = arrows[k - 1] and not arrows[k]
            v = path[k]
            if collider and v not in desc_in_S:
                ok = False
            if not collider and v in S:
                ok = False
            if not ok:
                break
        if ok:
            yield path, arrows


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
