use std::ffi::CString;

use pyo3::prelude::*;
use sonovortex_py::sonovortex_py;

fn run(code: &str) {
    pyo3::append_to_inittab!(sonovortex_py);
    Python::initialize();
    Python::attach(|py| {
        let code = CString::new(code).unwrap();
        py.run(&code, None, None).unwrap_or_else(|e| {
            e.display(py);
            panic!("python snippet failed");
        });
    });
}

#[test]
fn bindings_round_trip() {
    run(r#"
import sonovortex_py as sv
a = sv.TransducerArray(rows=4, cols=4)
assert a.shape == (4, 4)
d = a.delays((0.0, 0.0, 0.15), normalized=True)
assert len(d) == 4 and min(min(r) for r in d) == 0.0
s = sv.schedule([((0.0, 0.0, 0.15), 600, 0.05)], array=a)
assert abs(s.arrival_gap) <= 1e-6
w = bytes(s.wire)
assert sv.reencode(w) == w
assert sv.decode(w)[0][1] == "cannon-trigger"
try:
    sv.min_stable_aperture(0.0)
    raise AssertionError("accepted zero volume")
except ValueError:
    pass
"#);
}
