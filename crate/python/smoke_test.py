"""Smoke test for the mcflab_py extension module.

Build and install it first:

    pip install --no-build-isolation ./crates/python
"""

import json
import math

import mcflab_py as m


def main():
    space = m.SpaceForm(-1.0, 3)
    p = [1.0, 0.0, 0.0, 0.0]
    q = [math.cosh(0.5), math.sinh(0.5), 0.0, 0.0]
    assert abs(space.geodesic_distance(p, q) - 0.5) < 1e-13
    assert abs(space.bilinear(p, p) + 1.0) < 1e-15

    sphere = m.Immersion.geodesic_sphere(space, 2, 16, 0.5)
    assert len(sphere) == 6 * 16 * 16
    assert sphere.max_quadric_defect() < 1e-12
    for x in sphere.coords()[:10]:
        assert abs(space.geodesic_distance(p, x) - 0.5) < 1e-12

    rep = sphere.pinch_report()
    assert rep["max_q"] < 0.0
    assert abs(rep["kmin_ratio"] - 0.196615) < 5e-3

    oracle = m.ShrinkerOracle(-1.0, 2, 0.5)
    assert abs(oracle.t_exact - 0.0600573) < 1e-6

    trace = m.Immersion.geodesic_sphere(space, 2, 12, 0.5).run_flow(
        config=json.dumps({"integrator": "euler", "sample_every": 100})
    )
    assert trace["termination"] == "blowup_resolved"
    assert abs(trace["t_est"] / oracle.t_exact - 1.0) < 0.02

    codim2 = m.Immersion.perturbed_sphere(m.SpaceForm(-1.0, 4), 2, 12, 0.5, [(5, 0.02)])
    assert codim2.codim == 2 and codim2.pinch_report()["max_q"] < 0.0

    torus = m.Immersion.torus(space, 16, 1.5, 0.3)
    assert torus.pinch_report()["max_q"] > 0.0

    summary = m.run_experiment(json.dumps({
        "ambient": {"c": 1.0, "n": 2, "d": 1},
        "shape": {"kind": "geodesic_sphere", "radius": 1.0},
        "grid": {"resolution": 12},
        "flow": {"integrator": "euler", "sample_every": 100},
    }))
    assert summary["schema_version"] == 1
    assert abs(summary["T_est"] / summary["T_exact"] - 1.0) < 0.02

    checks = m.verify_suite("oracles")
    assert all(c["passed"] for c in checks), checks

    try:
        m.SpaceForm(-1.0, 0)
    except ValueError:
        pass
    else:
        raise AssertionError("expected ValueError")

    print(f"ok: {len(checks)} oracle checks, T_est {trace['t_est']:.6f} vs {oracle.t_exact:.6f}")


if __name__ == "__main__":
    main()
