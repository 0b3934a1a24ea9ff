"""Stability chart of x'(t) = -a x(t - 1) from the monodromy operator.

For each gain a the dominant Floquet multiplier is compared with exp(s*),
s* the rightmost characteristic root from the principal Lambert-W branch.
"""

import argparse
import csv
import sys
from dataclasses import dataclass

import numpy as np
from scipy.special import lambertw

from netsync.delay import DelaySpec, growth_exponent, monodromy


@dataclass
class ChartConfig:
    a_min: float = 0.1
    a_max: float = 3.0
    points: int = 30
    grid: int = 200


def run(cfg: ChartConfig):
    rows = []
    for a in np.linspace(cfg.a_min, cfg.a_max, cfg.points):
        spec = DelaySpec.scalar([0.0, 1.0], [0.0, -a])
        radius = monodromy(spec, cfg.grid).spectral_radius
        exact = float(np.exp(lambertw(-a).real))
        rows.append((a, radius, exact, growth_exponent(radius, 1.0), abs(radius - exact) / exact))
    return rows


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--a-min", type=float, default=ChartConfig.a_min)
    p.add_argument("--a-max", type=float, default=ChartConfig.a_max)
    p.add_argument("--points", type=int, default=ChartConfig.points)
    p.add_argument("--grid", type=int, default=ChartConfig.grid)
    p.add_argument("--out", default=None, help="CSV path (stdout if omitted)")
    args = p.parse_args()
    rows = run(ChartConfig(args.a_min, args.a_max, args.points, args.grid))
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["a", "radius", "radius_exact", "growth", "rel_err"])
    w.writerows([[f"{v:.10g}" for v in r] for r in rows])
    if args.out:
        fh.close()
    flips = [0.5 * (r0[0] + r1[0]) for r0, r1 in zip(rows, rows[1:]) if (r0[1] < 1) != (r1[1] < 1)]
    print(f"radius crosses 1 near a = {flips}; pi/2 = {np.pi / 2:.6f}", file=sys.stderr)


if __name__ == "__main__":
    main()
