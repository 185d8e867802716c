use pyo3::prelude::*;
use pyo3::types::PyDict;

fn with_module(f: impl FnOnce(Python<'_>, &Bound<'_, PyModule>) -> PyResult<()>) {
    Python::with_gil(|py| {
        let m = PyModule::new_bound(py, "fredjost").unwrap();
        fredjost_py::fredjost_module(&m).unwrap();
        f(py, &m).unwrap();
    });
}

#[test]
fn potential_methods() {
    with_module(|_, m| {
        let p = m.getattr("Potential")?.call1(("kdv:2:1:1",))?;
        let f: num_complex::Complex64 = p.call_method1("jost", (-8.0,))?.extract()?;
        assert!((f.re - 0.1).abs() < 1e-6 && f.im.abs() < 1e-12);
        let ev: Vec<f64> = p.call_method1("eigenvalues", (-6.0, 0.5))?.extract()?;
        assert_eq!(ev.len(), 2);
        assert!((ev[0] + 3.0).abs() < 1e-6);
        let rep = p.call_method0("stability_index")?;
        let rep = rep.downcast::<PyDict>()?;
        assert_eq!(rep.get_item("verdict")?.unwrap().extract::<String>()?, "unstable");
        Ok(())
    });
}

#[test]
fn errors_map_to_python_exceptions() {
    with_module(|py, m| {
        let err = m.getattr("Potential")?.call1(("nonsense",)).unwrap_err();
        assert!(err.is_instance_of::<pyo3::exceptions::PyValueError>(py));
        let p = m.getattr("Potential")?.call1(("kdv:2:1:1",))?;
        let err = p.call_method1("jost", (5.0,)).unwrap_err();
        assert!(err.is_instance_of::<pyo3::exceptions::PyValueError>(py));
        Ok(())
    });
}

#[test]
fn expansion_of_a_small_family() {
    with_module(|_, m| {
        let a0 = vec![vec![1.0, 1.0], vec![0.0, 0.2]];
        let a1 = vec![vec![0.0, 0.0], vec![1.0, 0.0]];
        let r = m.getattr("expand")?.call1((vec![a0, a1],))?;
        let r = r.downcast::<PyDict>()?;
        assert_eq!(r.get_item("order")?.unwrap().extract::<usize>()?, 1);
        let lead: num_complex::Complex64 = r.get_item("leading_coefficient")?.unwrap().extract()?;
        assert!((lead + 1.0).norm() < 1e-10);
        Ok(())
    });
}
