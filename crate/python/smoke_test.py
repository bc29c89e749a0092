"""Smoke test for the kirchhoff extension module.

Build and install first:
    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install --no-build-isolation dist/kirchhoff-*.whl
"""

import math

import kirchhoff


def check(cond, msg):
    if not cond:
        raise SystemExit(f"FAIL: {msg}")
    print(f"ok   {msg}")


def main():
    p = kirchhoff.Problem("example1", n=128)
    name, lam_f = p.threshold
    check(name == "lambda_f" and lam_f > 0, f"example1 threshold {name}={lam_f:.6f}")
    check(abs(p.parameter - 0.5 * lam_f) < 1e-15, "default parameter is half the threshold")

    checks = p.check(seed=0)
    check(checks["g1"]["pass"] and checks["g2"]["pass"], "structural checks pass")

    sol = p.solve()
    check(sol.status == "converged", f"fixed point {sol!r}")
    check(sol.residual < 1e-8 and sol.inside, "solution inside the invariant interval")
    check(len(sol.u) == len(p.points) == 127, "one value per interior node")

    inv = p.verify_invariance(trials=200, seed=1)
    check(inv["pass"] and inv["violations"] == 0, "sampled invariance")
    check(p.green_positivity()["pass"], "discrete Green function is positive")

    small = kirchhoff.Problem("example3", n=32)
    fp = small.solve(tol=1e-12)
    nw = small.newton()
    diff = max(abs(a - b) for a, b in zip(fp.u, nw["u"]))
    check(nw["converged"] and diff < 1e-8, f"Newton agrees with fixed point ({diff:.2e})")

    unit = kirchhoff.Problem.from_definition("A = 1\ng = 1\npsi = xi\n", n=64)
    u = unit.solve().u
    err = max(abs(v - x[0] * (1 - x[0]) / 2) for v, x in zip(u, unit.points))
    check(err < 1e-12, f"custom unit problem gives the torsion function ({err:.1e})")

    lam1, phi1 = kirchhoff.principal_eigenpair(256)
    check(abs(lam1 - math.pi**2) < 1e-3, f"principal eigenvalue {lam1:.6f}")
    check(abs(max(phi1) - 1.0) < 1e-15, "eigenvector normalized to max 1")

    try:
        kirchhoff.Problem("example2", parameter=1e9)
    except ValueError as e:
        check("mu" in str(e), "parameter above threshold raises ValueError")
    else:
        raise SystemExit("FAIL: parameter above threshold accepted")

    print("python smoke test passed")


if __name__ == "__main__":
    main()
