//! Drives the module through an embedded interpreter.

use std::ffi::CString;

use pymtgcn::pymtgcn;
use pyo3::prelude::*;
use pyo3::types::PyDict;

const SCRIPT: &str = r#"
import pymtgcn as m

x = [[1.0, -2.0, 3.0], [0.5, 0.0, -1.5]]
p = m.corrupt_features(x, [2, 0])
assert p == [[0.0, -2.0, 0.0], [0.0, 0.0, 0.0]], p
assert m.select_columns(p, [0, 2]) == [[0.0, 0.0], [0.0, 0.0]]
try:
    m.corrupt_features(x, [3])
    raise AssertionError("index out of range accepted")
except ValueError:
    pass

cfg = m.Config.from_file(config, epochs=4, runs=2)
toy = m.Bundle.load(cfg.dataset)
assert (toy.num_nodes, toy.num_features, toy.num_classes) == (200, 40, 4)
reports = m.train(toy, cfg)
assert [r.seed for r in reports] == [0, 1]
assert all(len(r.train_losses()) == 4 for r in reports)
agg = m.aggregate(reports)
result = (agg.mean, reports[0].to_json() == m.train_run(toy, cfg, 0)[0].to_json())
"#;

#[test]
fn module_round_trip_through_python() {
    pyo3::append_to_inittab!(pymtgcn);
    Python::initialize();
    let config = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/toy/gcn.toml");
    Python::attach(|py| {
        let scope = PyDict::new(py);
        scope.set_item("config", config).unwrap();
        let code = CString::new(SCRIPT).unwrap();
        if let Err(e) = py.run(&code, Some(&scope), None) {
            e.print(py);
            panic!("embedded script failed: {e}");
        }
        let (mean, reproducible): (f64, bool) = scope.get_item("result").unwrap().unwrap().extract().unwrap();
        assert!((0.0..=1.0).contains(&mean));
        assert!(reproducible);
    });
}
