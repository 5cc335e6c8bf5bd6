#!/usr/bin/env python3
"""Mesh-refinement study: confirm the scheme converges at first order.

Solves the smooth benchmark over a decade-spaced ladder of mesh widths,
measures node errors against the closed form, and fits the order as the
log-log slope. Each tenfold refinement should cut the error by about
ten; the fitted slope should sit near 1.
"""

from epcadde import builtin, convergence_order


def main():
    spec, exact_x, exact_tau = builtin("example1")
    for component in ("x", "tau"):
        rep = convergence_order(
            spec, exact_x, exact_tau,
            h_levels=[0.1, 0.01, 0.001, 0.0001],
            times=[2.0],
            component=component,
        )
        print(f"\ncomponent {component!r}:")
        print(f"  {'h':>8} {'error':>12}")
        for h, e in rep.pairs:
            print(f"  {h:>8} {e:>12.3e}")
        ratios = ", ".join(f"{r:.2f}" for r in rep.ratios)
        print(f"  successive ratios: {ratios}")
        print(f"  fitted order: {rep.fitted_order:.4f}")
        if rep.floor_limited:
            print("  (some levels hit the error floor and were excluded)")


if __name__ == "__main__":
    main()
