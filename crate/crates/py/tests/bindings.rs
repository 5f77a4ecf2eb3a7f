use pyo3::prelude::*;
use pyo3::types::PyDict;

fn with_module<F: FnOnce(Python<'_>, &Bound<'_, PyDict>)>(f: F) {
    Python::attach(|py| {
        let m = pyo3::wrap_pymodule!(mhrs::mhrs)(py);
        let globals = PyDict::new(py);
        globals.set_item("mhrs", m).unwrap();
        f(py, &globals);
    });
}

fn eval<'py>(py: Python<'py>, globals: &Bound<'py, PyDict>, code: &str) -> Bound<'py, PyAny> {
    let code = std::ffi::CString::new(code).unwrap();
    py.eval(&code, Some(globals), None).unwrap()
}

#[test]
fn planner_is_reachable_from_python() {
    with_module(|py, g| {
        let legs = eval(py, g, "mhrs.plan((0, 0), (0, 4), 1, 5, hops=[(0, 2)])");
        let legs: Vec<((usize, usize), (usize, usize), String)> = legs.extract().unwrap();
        assert_eq!(legs[0], ((0, 0), (0, 2), "to_hop".to_string()));
        assert_eq!(legs[1], ((0, 2), (0, 4), "from_hop".to_string()));
    });
}

#[test]
fn simulation_steps_and_summarises() {
    with_module(|py, g| {
        eval(py, g, "globals().__setitem__('sim', mhrs.Simulation('rows = 4\\ncols = 4\\nfleet_size = 3\\nsteps = 20\\nrequests_per_step = 0.8', seed=1))");
        let first = eval(py, g, "sim.step()");
        assert_eq!(first.get_item("time").unwrap().extract::<u64>().unwrap(), 0);
        eval(py, g, "sim.run()");
        assert_eq!(eval(py, g, "sim.now").extract::<u64>().unwrap(), 20);
        let rate: f64 = eval(py, g, "sim.summary()['accept_rate']").extract().unwrap();
        assert!((0.0..=1.0).contains(&rate));
    });
}

#[test]
fn bad_config_raises_value_error() {
    with_module(|py, g| {
        let code = std::ffi::CString::new("mhrs.Simulation('rows = 0')").unwrap();
        let err = py.eval(&code, Some(g), None).unwrap_err();
        assert!(err.is_instance_of::<pyo3::exceptions::PyValueError>(py));
    });
}
