"""Tabulate where the unstable sphere of each critical point flows.

Usage: python scripts/fate_table.py flag-su3 [--directions 360] [--epsilon 1e-4]

For every critical point p of positive index, prints the number of shooting
directions whose forward limit is each critical point q, split into weight
planes and generic directions.  Fate -1 means undetermined, -2 shadowing.
"""
import argparse

from morse_lab.critical import enumerate_critical_points
from morse_lab.moduli import sample_unstable_sphere
from morse_lab.scenarios import REGISTRY, get_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("scenario", choices=sorted(REGISTRY))
    ap.add_argument("--directions", type=int, default=360)
    ap.add_argument("--epsilon", type=float, default=1e-4)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    sc = get_scenario(args.scenario)
    crit = enumerate_critical_points(sc.manifold, sc.function, sc.n_starts, args.seed, sc.group)
    print(f"{sc.name}: {len(crit)} critical points, indices {[c.index for c in crit]}")
    for p in crit:
        if p.index == 0:
            continue
        s = sample_unstable_sphere(sc.manifold, sc.function, p, crit, sc.group,
                                   n_directions=args.directions, epsilon=args.epsilon,
                                   seed=args.seed)
        for g in s.groups:
            counts = {}
            for fate in g.fates.tolist():
                counts[fate] = counts.get(fate, 0) + 1
            label = g.kind if g.kind == "generic" else f"{g.kind} weight {[round(float(w), 6) + 0.0 for w in g.weights]}"
            table = ", ".join(f"q{q}(index {crit[q].index if q >= 0 else '-'}): {n}"
                              for q, n in sorted(counts.items()))
            print(f"  p{p.id} (index {p.index}) {label}: {table}")


if __name__ == "__main__":
    main()
