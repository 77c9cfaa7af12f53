"""Which joint configurations can still be steered clear of a raised floor?

Samples a coarse grid over the planar joints and asks, for each node, whether some
admissible input sequence keeps every disturbance realisation inside the tightened
workspace over the horizon.  Raising the floor to a tall obstacle shrinks the set.

    python3 demos/invariant_grid.py
"""
from collections import Counter

from armsim.geometry_sets import invariant_grid
from armsim.sim_harness import builtin_scenario


def main():
    sc = builtin_scenario("default_dynamic")
    for floor in (None, 3.8, 4.5):
        rows = invariant_grid(sc, 4, zfloor=floor)
        counts = Counter(r[4] for r in rows)
        label = "static floor" if floor is None else f"floor {floor} m"
        print(f"{label:>14}: {counts[1]}/{len(rows)} feasible, {counts['unknown']} undecided")


if __name__ == "__main__":
    main()
