//! Python module `fredjost`.

use fredjost::cli::{parse_cylinder, parse_potential};
use fredjost::cylinder::{
    convergence_study, equivalence_check, evans_ej, f2j, theta_j, F2Route, FourierPotential, GalerkinTruncation,
};
use fredjost::fredholm1d::{
    assemble_bs_kernel, fprime_routes, fredholm_det, simon_jost, simon_jost_minus, SimonQuantity,
};
use fredjost::matdet::{
    det_and_det2, expansion_regular, expansion_singular, riesz_projection, AnalyticMatrixFamily,
};
use fredjost::quad::NystromGrid;
use fredjost::stabindex::{potential_from_wave, solve_standing_wave, stability_index_1d, ReactionProfile, StabilityReport};
use fredjost::volterra::{jost_function, locate_eigenvalues, JostMethod, Potential1D};
use fredjost::{c, CMat, Error, NumericPolicy, C64};
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Precondition(m) => PyValueError::new_err(m),
        Error::Numerical(m) => PyArithmeticError::new_err(m),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for fredjost::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn to_cmat(rows: &[Vec<C64>]) -> PyResult<CMat> {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("ragged matrix"));
    }
    Ok(CMat::from_fn(n, m, |i, j| rows[i][j]))
}

/// Line potential `V = V_inf + W` from a spec string (`kdv:<n>:<kappa>:<c>`,
/// `zero:<v_inf>`, `file:<path>`) or from samples.
#[pyclass(name = "Potential", module = "fredjost")]
#[derive(Clone)]
struct PyPotential {
    inner: Potential1D,
}

#[pymethods]
impl PyPotential {
    #[new]
    fn new(spec: &str) -> PyResult<Self> {
        Ok(PyPotential { inner: parse_potential(spec).py()? })
    }

    /// Potential from a uniform grid `x` and samples of `W`.
    #[staticmethod]
    #[pyo3(signature = (x, w, v_infinity, label = "samples"))]
    fn from_samples(x: Vec<f64>, w: Vec<f64>, v_infinity: f64, label: &str) -> PyResult<Self> {
        if x.len() != w.len() {
            return Err(PyValueError::new_err("x and w differ in length"));
        }
        let mut text = format!("# v_infinity = {v_infinity}\n");
        for (a, b) in x.iter().zip(&w) {
            text.push_str(&format!("{a:.17e} {b:.17e}\n"));
        }
        Ok(PyPotential { inner: Potential1D::from_table(&text, label).py()? })
    }

    #[getter]
    fn v_infinity(&self) -> f64 {
        self.inner.v_infinity
    }

    #[getter]
    fn x_max(&self) -> f64 {
        self.inner.x_max
    }

    #[getter]
    fn label(&self) -> String {
        self.inner.label.clone()
    }

    fn w(&self, x: f64) -> f64 {
        self.inner.w(x)
    }

    /// `F(z)` by the Volterra march; `method` is "wronskian" or "integral".
    #[pyo3(signature = (z, method = "wronskian"))]
    fn jost(&self, z: C64, method: &str) -> PyResult<C64> {
        let m = match method {
            "wronskian" => JostMethod::Wronskian,
            "integral" => JostMethod::Integral,
            _ => return Err(PyValueError::new_err(format!("unknown method {method}"))),
        };
        jost_function(&self.inner, z, m).py()
    }

    /// Nyström `det(I - K(z))` (or `det2` when `modified`).
    #[pyo3(signature = (z, nodes = 400, symmetric = false, modified = false))]
    fn fredholm_det(&self, z: C64, nodes: usize, symmetric: bool, modified: bool) -> PyResult<C64> {
        let g = NystromGrid::gauss_legendre(self.inner.x_max, nodes, 10).py()?;
        let k = assemble_bs_kernel(&self.inner, z, &g, symmetric).py()?;
        fredholm_det(&k, modified).py()
    }

    /// Eigenvalues in `[lo, hi]` below the essential spectrum.
    fn eigenvalues(&self, lo: f64, hi: f64) -> PyResult<Vec<f64>> {
        locate_eigenvalues(&self.inner, (lo, hi)).py()
    }

    /// `F'(0)` by quadrature, by the product of its two factors and by a contour derivative.
    fn fprime<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let r = fprime_routes(&self.inner, &NumericPolicy::default()).py()?;
        let d = PyDict::new_bound(py);
        d.set_item("quadrature", r.quadrature)?;
        d.set_item("first_factor", r.first_factor)?;
        d.set_item("second_factor", r.second_factor)?;
        d.set_item("product", r.product)?;
        d.set_item("cauchy", r.cauchy)?;
        Ok(d)
    }

    /// `Psi_+(z, x)` (or `Psi_-` with `minus`) and optionally its derivative, from half-line determinants.
    #[pyo3(signature = (z, x, derivative = false, minus = false))]
    fn simon(&self, z: C64, x: f64, derivative: bool, minus: bool) -> PyResult<C64> {
        let q = if derivative { SimonQuantity::Derivative } else { SimonQuantity::Value };
        if minus {
            simon_jost_minus(&self.inner, z, x, q).py()
        } else {
            simon_jost(&self.inner, z, x, q).py()
        }
    }

    fn stability_index<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let r = stability_index_1d(&self.inner, &NumericPolicy::default()).py()?;
        report_dict(py, &r)
    }

    fn __repr__(&self) -> String {
        format!("Potential({:?}, v_infinity={})", self.inner.label, self.inner.v_infinity)
    }
}

fn report_dict<'py>(py: Python<'py>, r: &StabilityReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new_bound(py);
    d.set_item("verdict", format!("{:?}", r.verdict).to_lowercase())?;
    d.set_item("gamma", r.gamma)?;
    d.set_item("order_k", r.order_k)?;
    d.set_item("dkf0", r.dkf0)?;
    d.set_item("f_zero", r.f_zero)?;
    d.set_item("f_at_infinity", r.f_at_infinity)?;
    d.set_item("eigenvalues_below_zero", r.eigenvalues_below_zero.clone())?;
    d.set_item("quadrature_df0", r.quadrature_df0)?;
    d.set_item("warnings", r.warnings.clone())?;
    Ok(d)
}

/// Galerkin-truncated potential on the cylinder, from `planar:<1d>`, `cos:<1d>:<eps>` or `file:<path>`.
#[pyclass(name = "Cylinder", module = "fredjost")]
struct PyCylinder {
    inner: FourierPotential,
    spec: String,
}

impl PyCylinder {
    fn trunc(&self, j: usize) -> PyResult<GalerkinTruncation> {
        GalerkinTruncation::new(self.inner.d, j).py()
    }
}

#[pymethods]
impl PyCylinder {
    #[new]
    #[pyo3(signature = (spec, d = 2))]
    fn new(spec: &str, d: usize) -> PyResult<Self> {
        Ok(PyCylinder { inner: parse_cylinder(spec, d).py()?.0, spec: spec.to_string() })
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d
    }

    /// `F_{2,J}(z)`; `route` is "semiseparable" or "nystrom".
    #[pyo3(signature = (j, z, route = "semiseparable"))]
    fn f2j(&self, j: usize, z: C64, route: &str) -> PyResult<C64> {
        let r = match route {
            "semiseparable" => F2Route::Semiseparable,
            "nystrom" => F2Route::Nystrom,
            _ => return Err(PyValueError::new_err(format!("unknown route {route}"))),
        };
        f2j(&self.inner, &self.trunc(j)?, z, r).py()
    }

    fn theta(&self, j: usize, z: C64) -> PyResult<C64> {
        theta_j(&self.inner, &self.trunc(j)?, z).py()
    }

    fn evans(&self, j: usize, z: C64) -> PyResult<C64> {
        evans_ej(&self.inner, &self.trunc(j)?, z).py()
    }

    fn equivalence<'py>(&self, py: Python<'py>, j: usize, z: C64) -> PyResult<Bound<'py, PyDict>> {
        let r = equivalence_check(&self.inner, &self.trunc(j)?, z).py()?;
        let d = PyDict::new_bound(py);
        d.set_item("f2j", r.f2j)?;
        d.set_item("theta", r.theta)?;
        d.set_item("ej", r.ej)?;
        d.set_item("residual", r.residual)?;
        Ok(d)
    }

    fn convergence<'py>(&self, py: Python<'py>, z: C64, j_list: Vec<usize>) -> PyResult<Bound<'py, PyDict>> {
        let t = convergence_study(&self.inner, z, &j_list).py()?;
        let d = PyDict::new_bound(py);
        d.set_item("j", t.rows.iter().map(|r| r.j).collect::<Vec<_>>())?;
        d.set_item("hs_distance", t.rows.iter().map(|r| r.hs_distance).collect::<Vec<_>>())?;
        d.set_item("f_distance", t.rows.iter().map(|r| r.f_distance).collect::<Vec<_>>())?;
        d.set_item("hs_slope", t.hs_slope)?;
        d.set_item("f_slope", t.f_slope)?;
        d.set_item("passed", t.passed)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("Cylinder({:?}, d={})", self.spec, self.inner.d)
    }
}

/// `(det(I - A), det2(I - A))`.
#[pyfunction]
fn det_pair(a: Vec<Vec<C64>>) -> PyResult<(C64, C64)> {
    det_and_det2(&to_cmat(&a)?).py()
}

/// Order and leading Taylor coefficient of `det(I - A(z))` (or `det2`) at `z = 0`,
/// for `A(z) = sum_k coefficients[k] z^k`.
#[pyfunction]
#[pyo3(signature = (coefficients, radius = 1.0, modified = false, contour_radius = 0.3, nodes = 64))]
fn expand<'py>(
    py: Python<'py>,
    coefficients: Vec<Vec<Vec<C64>>>,
    radius: f64,
    modified: bool,
    contour_radius: f64,
    nodes: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let mats = coefficients.iter().map(|m| to_cmat(m)).collect::<PyResult<Vec<_>>>()?;
    let fam = AnalyticMatrixFamily::new(mats, radius).py()?;
    let policy = NumericPolicy::default();
    let d = PyDict::new_bound(py);
    let res = match expansion_regular(&fam, modified, &policy) {
        Ok(r) => {
            d.set_item("case", "regular")?;
            r
        }
        Err(Error::Precondition(_)) => {
            let rd = riesz_projection(fam.a0(), c(1.0), contour_radius, nodes, &policy).py()?;
            d.set_item("case", "singular")?;
            d.set_item("n0", rd.n0)?;
            d.set_item("nu0", rd.nu0)?;
            expansion_singular(&fam, &rd, modified, &policy).py()?
        }
        Err(e) => return Err(py_err(e)),
    };
    d.set_item("order", res.order)?;
    d.set_item("leading_coefficient", res.leading_coefficient)?;
    d.set_item("next_order_bound", res.next_order_bound)?;
    Ok(d)
}

/// Standing wave of a reaction profile, its linearised potential and the stability index.
#[pyfunction]
#[pyo3(signature = (profile, x_max = 20.0, grid = 4001))]
fn stability_index<'py>(py: Python<'py>, profile: &str, x_max: f64, grid: usize) -> PyResult<Bound<'py, PyDict>> {
    let rp = if let Some(rest) = profile.strip_prefix("kdv:") {
        let parts: Vec<f64> = rest
            .split(':')
            .map(|s| s.parse::<f64>().map_err(|_| PyValueError::new_err(format!("bad profile {profile}"))))
            .collect::<PyResult<_>>()?;
        let n = parts[0];
        if n.fract() != 0.0 || n < 2.0 {
            return Err(PyValueError::new_err("kdv profile needs an integer n >= 2"));
        }
        ReactionProfile::kdv(n as u32, *parts.get(1).unwrap_or(&1.0), *parts.get(2).unwrap_or(&1.0)).py()?
    } else {
        ReactionProfile::from_file(std::path::Path::new(profile.strip_prefix("file:").unwrap_or(profile))).py()?
    };
    let policy = NumericPolicy::default();
    let sw = solve_standing_wave(&rp, x_max, grid, &policy).py()?;
    let p = potential_from_wave(&rp, &sw).py()?;
    let r = stability_index_1d(&p, &policy).py()?;
    report_dict(py, &r)
}

#[pymodule]
#[pyo3(name = "fredjost")]
pub fn fredjost_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPotential>()?;
    m.add_class::<PyCylinder>()?;
    m.add_function(wrap_pyfunction!(det_pair, m)?)?;
    m.add_function(wrap_pyfunction!(expand, m)?)?;
    m.add_function(wrap_pyfunction!(stability_index, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
