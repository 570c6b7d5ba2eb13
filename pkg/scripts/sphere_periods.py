"""Monodromy periods of the round sphere at several wrapping degrees.

Builds the Jacobi extension of the area bivector on spherical
coordinates, then measures the kernel period of the degree-d covering
square for d = 1..degrees.  The periods should land on 4*pi*d, and the
relation finder should recognise the family as one rational class with
generator 4*pi.

Usage: python3 scripts/sphere_periods.py [--degrees 3] [--grid 256]
"""

import argparse
import math

from algebroids import Chart, make_jacobi_extension, monodromy_group, monodromy_period, tangent_lift

PI = math.pi


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--degrees", type=int, default=3, help="largest wrapping degree")
    ap.add_argument("--grid", type=int, default=256, help="grid points per cube axis")
    ap.add_argument("--eps", type=float, default=1e-3, help="polar-cap cutoff")
    args = ap.parse_args()

    eps = args.eps
    chart = Chart(
        coords=("th", "ph"),
        box=((eps / 2, PI - eps / 2), (-0.1, 2 * PI * args.degrees + 0.1)),
    )
    A = make_jacobi_extension(chart, {(0, 1): "1/sin(th)"})
    splitting = [["0", "0"], ["0", "sin(th)"], ["-sin(th)", "0"]]

    cubes = []
    print(f"polar cutoff {eps}, grid {args.grid}")
    print(f"{'degree':>6} {'period':>14} {'4*pi*d':>14} {'error':>11} {'estimate':>11}")
    for d in range(1, args.degrees + 1):
        cube = tangent_lift(
            chart,
            [f"{eps} + {PI - 2 * eps}*t1", f"{2 * PI * d}*t2"],
            2,
            args.grid,
        )
        cubes.append(cube)
        res = monodromy_period(A, splitting, cube)
        target = 4 * PI * d
        print(
            f"{d:>6} {res.scalar():>14.9f} {target:>14.9f}"
            f" {abs(res.scalar() - target):>11.3e} {res.est_error:>11.3e}"
        )

    labels = [f"deg{d}" for d in range(1, args.degrees + 1)]
    report = monodromy_group(A, splitting, cubes, labels=labels)
    print()
    print(report.summary())
    if report.generator is not None:
        print(f"generator / 4*pi = {report.generator / (4 * PI):.9f}")


if __name__ == "__main__":
    main()
