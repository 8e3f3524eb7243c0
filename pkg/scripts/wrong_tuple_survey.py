"""Classify every wrong tuple accepted by the oracle search on random instrument graphs.

A wrong tuple is explained when choke_point_diagnosis finds a choke vertex,
or when one member is d-separated from {X, Y} given Z and its partner.
"""

import argparse
from collections import Counter

import numpy as np

from ivlingam import zoo
from ivlingam.discovery import discover
from ivlingam.graph import LATENT, Dag, Vertex, choke_point_diagnosis, d_separated


def random_iv_graph(rng, n_v: int = 4, p_edge: float = 0.35) -> Dag:
    names = [f"V{i + 1}" for i in range(n_v)] + ["X", "Y"]
    edges = {("X", "Y"), ("U", "X"), ("U", "Y")}
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            if (a, b) != ("X", "Y") and rng.random() < p_edge:
                edges.add((a, b))
    vertices = names + [Vertex("U", LATENT)]
    if rng.random() < 0.5:
        edges |= {("L", str(k)) for k in rng.choice(names[:-1], 2, replace=False)}
        vertices.append(Vertex("L", LATENT))
    return Dag(vertices, edges)


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--models", type=int, default=1500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-z", type=int, default=2)
    a = p.parse_args()
    rng = np.random.default_rng(a.seed)
    tally = Counter()
    for _ in range(a.models):
        g = random_iv_graph(rng, int(rng.integers(3, 6)))
        m = zoo.random_sem(g, rng)
        truth = m.coefficients[("Y", "X")]
        for t in discover(m, "X", "Y", max_z=a.max_z, first_only=False).accepted_tuples:
            tally["accepted"] += 1
            if abs(t.dce_estimate - truth) <= 1e-9:
                continue
            Z = set(t.Z)
            if choke_point_diagnosis(g, t.wi, t.wj, t.Z, "X", "Y").found:
                tally["wrong, choke point"] += 1
            elif (d_separated(g, {t.wi}, {"X", "Y"}, Z | {t.wj})
                  or d_separated(g, {t.wj}, {"X", "Y"}, Z | {t.wi})):
                tally["wrong, partner shield"] += 1
            else:
                tally["wrong, unexplained"] += 1
    for k in sorted(tally):
        print(f"{k:24s} {tally[k]}")


if __name__ == "__main__":
    main()
