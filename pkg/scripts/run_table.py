"""Run the simulation benchmark and write the report JSON plus the text table.

    python3 scripts/run_table.py --trials 50 --out results/table1_trials50.json
"""

import argparse
import sys
import time
from pathlib import Path

from ivlingam.bench import METHODS, ExperimentConfig, run_benchmark
from ivlingam.io import write_report


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--methods", nargs="*", default=list(METHODS))
    p.add_argument("--out", default="results/table1.json")
    a = p.parse_args()

    cfg = ExperimentConfig(trials=a.trials, workers=a.workers, master_seed=a.seed, methods=tuple(a.methods))
    start = time.time()

    def progress(done, total):
        print(f"\r{done}/{total}", end="", file=sys.stderr, flush=True)

    rep = run_benchmark(cfg, progress)
    print(file=sys.stderr)
    out = Path(a.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_report(rep, out)
    print(rep.table(), end="")
    print(f"{len(rep.failures)} failed method runs; {time.time() - start:.0f} s; config hash {cfg.digest()}")


if __name__ == "__main__":
    main()
