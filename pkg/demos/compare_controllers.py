"""RMPC against the potential-field baseline on the reconstructed comparison scene.

The baseline slows down as obstacles approach and halts inside its critical radius;
the RMPC keeps moving and goes over.  A handful of seeds is enough to see the gap,
the acceptance suite uses 25.

    python3 demos/compare_controllers.py [n_seeds]
"""
import sys

import numpy as np

from armsim.sim_harness import batch, builtin_scenario


def main(n=5):
    sc = builtin_scenario("paper_comparison")
    table, per_run, failures = batch(sc, ("rmpc", "baseline"), range(n))
    print(f"{'seed':>4} {'rmpc [s]':>9} {'baseline [s]':>13} {'stops':>6} {'critical':>9}")
    for s in range(n):
        r, b = per_run["rmpc"][s], per_run["baseline"][s]
        print(f"{s:4d} {r.completion_time:9.1f} {b.completion_time:13.1f} {b.stop_steps:6d} {b.critical_stops:9d}")
    for c in ("rmpc", "baseline"):
        med = np.median([m.completion_time for m in per_run[c].values()])
        print(f"{c}: median {med:.1f} s, win rate {table[c]['win_rate']:.2f}")
    if failures:
        print("failures:", failures)


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 5)
