#!/usr/bin/env python3
"""Diagnostics: delayed-argument monotonicity and a-priori growth bounds.

The solver is justified when the delayed argument t - tau(t) never runs
backwards, so the first thing worth checking on a computed trajectory is
the sign of 1 - g along the path. The second is whether the path stays
inside the ball promised by the discrete growth inequality; if it does,
the sampled Lipschitz constants cover everything the trajectory visited.
"""

from epcadde import builtin, estimate_constants, monotonicity_certificate, solve


def inspect(name):
    spec, _, _ = builtin(name)
    traj = solve(spec, 0.001)
    print(f"\n{name}")
    print("-" * len(name))

    rep = monotonicity_certificate(traj, spec)
    print(f"max delay growth rate g along path: {rep.max_rate:.4f}")
    if rep.strictly_increasing:
        print("delayed argument strictly increasing: certificate holds")
    else:
        when = ", ".join(f"{t:.3f}" for t in rep.sign_change_times)
        print(f"delayed argument reverses direction at t = {when}")
        print(f"({rep.num_segments} monotone segments; the solve itself is fine,")
        print(" but uniqueness arguments that need a monotone delayed argument")
        print(" do not apply)")

    est = estimate_constants(spec)
    print(f"a-priori bound M1 = {est.M1:.6g}, rhs bound M2 = {est.M2:.6g}, "
          f"delay-law bound M3 = {est.M3:.6g}")
    peak = max(
        float(abs(traj.xs[j]).max()) + float(traj.taus[j])
        for j in range(traj.last_index + 1)
    )
    print(f"observed max |x| + tau along path: {peak:.6g}")
    for c in est.caveats:
        print(f"caveat: {c}")


def main():
    inspect("example2")
    inspect("example1")


if __name__ == "__main__":
    main()
