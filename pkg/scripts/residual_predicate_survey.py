"""Agreement between the residual Hoeffding test and the active non-causal path predicate.

Random small LiNGAM models with Y as a sink; for each candidate v the blanket
is the d-separation blanket within the other candidates.  Prints the
agreement rate and the confusion counts (truth, test).
"""

import argparse
from collections import Counter

import numpy as np

from ivlingam import zoo
from ivlingam.graph import active_noncausal_path_exists
from ivlingam.sem import sample
from ivlingam.stats import TestConfig, hoeffding_independent, lmb, resproj


def survey(seed: int, models: int, n: int, alpha: float, p_method: str) -> Counter:
    rng = np.random.default_rng(seed)
    cfg = TestConfig(alpha=alpha, p_method=p_method)
    counts = Counter()
    for k in range(models):
        g = zoo.random_dag(rng, int(rng.integers(3, 8)), int(rng.integers(0, 3)), p_edge=0.4, sink="Y")
        d = sample(zoo.random_sem(g, rng), n, k)
        V = [v for v in g.observed if v != "Y"]
        for v in V:
            Z = lmb(g, v, set(V) - {v})
            ind = hoeffding_independent(resproj(d, v, Z).values, resproj(d, "Y", Z | {v}).values, cfg).independent
            counts[(not active_noncausal_path_exists(g, v, "Y", Z), ind)] += 1
    return counts


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, nargs="*", default=[0])
    p.add_argument("--models", type=int, default=50)
    p.add_argument("--n", type=int, default=50_000)
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--p-method", choices=("asymptotic", "permutation"), default="asymptotic")
    a = p.parse_args()
    for s in a.seeds:
        c = survey(s, a.models, a.n, a.alpha, a.p_method)
        total = sum(c.values())
        agree = c[(True, True)] + c[(False, False)]
        print(f"seed {s}: {agree}/{total} = {agree / total:.3f}  "
              f"missed dependence {c[(False, True)]}, false alarms {c[(True, False)]}")


if __name__ == "__main__":
    main()
