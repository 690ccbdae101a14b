use std::ffi::CString;

use mcflab_py::mcflab_py;
use pyo3::prelude::*;

/// Runs a snippet in an embedded interpreter with the module registered.
fn run(code: &str) {
    pyo3::append_to_inittab!(mcflab_py);
    Python::attach(|py| {
        let code = CString::new(code).unwrap();
        if let Err(e) = py.run(&code, None, None) {
            e.print(py);
            panic!("python snippet failed");
        }
    });
}

#[test]
fn bindings_round_trip() {
    run(r#"
import json, math
import mcflab_py as m

space = m.SpaceForm(-1.0, 3)
p = space.origin()
q = [math.cosh(0.5), math.sinh(0.5), 0.0, 0.0]
assert abs(space.geodesic_distance(p, q) - 0.5) < 1e-13

sphere = m.Immersion.geodesic_sphere(space, 2, 12, 0.5)
assert len(sphere) == 6 * 144 and sphere.codim == 1
assert sphere.pinch_report()["max_q"] < 0.0
assert sphere.step(sphere.stable_dt()).max_quadric_defect() < 1e-12

o = m.ShrinkerOracle(-1.0, 2, 0.5)
assert abs(o.t_exact - 0.0600573) < 1e-6
assert o.radius_at(2 * o.t_exact) is None

trace = sphere.run_flow(config=json.dumps({"integrator": "euler"}))
assert abs(trace["t_est"] / o.t_exact - 1.0) < 0.02

assert m.Immersion.torus(space, 12, 1.5, 0.3).pinch_report()["max_q"] > 0.0

for bad in (lambda: m.SpaceForm(-1.0, 0),
            lambda: m.run_experiment("{}"),
            lambda: m.verify_suite("nope")):
    try:
        bad()
    except ValueError:
        pass
    else:
        raise AssertionError("expected ValueError")
"#);
}
