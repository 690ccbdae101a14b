//! Python bindings: space forms, initial shapes, curvature monitors, the flow
//! and the verification suites. Structured results come back as plain
//! dicts and lists.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use mcflab::cli::ExperimentConfig;
use mcflab::flow::{self, FlowConfig};
use mcflab::verify::{self, Suite};
use mcflab::{immersion, pinch, Error, ParamDomain, Topology};

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Input(_) | Error::Dimension { .. } | Error::Config(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// Serialises through JSON into native Python objects.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(name = "SpaceForm", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PySpaceForm {
    inner: mcflab::SpaceForm,
}

#[pymethods]
impl PySpaceForm {
    #[new]
    fn new(c: f64, ambient_dim: usize) -> PyResult<Self> {
        Ok(Self {
            inner: mcflab::SpaceForm::new(c, ambient_dim).map_err(to_py_err)?,
        })
    }

    #[getter]
    fn c(&self) -> f64 {
        self.inner.c()
    }

    #[getter]
    fn ambient_dim(&self) -> usize {
        self.inner.ambient_dim()
    }

    #[getter]
    fn flat_dim(&self) -> usize {
        self.inner.flat_dim()
    }

    fn origin(&self) -> Vec<f64> {
        self.inner.origin()[..self.inner.flat_dim()].to_vec()
    }

    fn bilinear(&self, u: Vec<f64>, v: Vec<f64>) -> PyResult<f64> {
        self.inner.bilinear(&u, &v).map_err(to_py_err)
    }

    fn project_to_quadric(&self, p: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.project_to_quadric(&p).map_err(to_py_err)
    }

    fn tangent_project(&self, base: Vec<f64>, w: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.tangent_project(&base, &w).map_err(to_py_err)
    }

    fn geodesic_distance(&self, p: Vec<f64>, q: Vec<f64>) -> PyResult<f64> {
        self.inner.geodesic_distance(&p, &q).map_err(to_py_err)
    }

    fn __repr__(&self) -> String {
        format!("SpaceForm(c={}, ambient_dim={})", self.inner.c(), self.inner.ambient_dim())
    }
}

#[pyclass(name = "Immersion", frozen)]
struct PyImmersion {
    inner: mcflab::Immersion,
}

fn sphere_domain(n: usize, resolution: usize) -> PyResult<ParamDomain> {
    let topo = match n {
        2 => Topology::Sphere2,
        3 => Topology::Sphere3,
        _ => return Err(PyValueError::new_err("spheres need n = 2 or 3")),
    };
    ParamDomain::new(topo, resolution).map_err(to_py_err)
}

#[pymethods]
impl PyImmersion {
    /// Distance sphere about the model origin.
    #[staticmethod]
    #[pyo3(signature = (space, n, resolution, radius))]
    fn geodesic_sphere(space: &PySpaceForm, n: usize, resolution: usize, radius: f64) -> PyResult<Self> {
        let s = space.inner;
        let o = s.origin();
        let inner = immersion::make_geodesic_sphere(s, sphere_domain(n, resolution)?, &o[..s.flat_dim()], radius)
            .map_err(to_py_err)?;
        Ok(Self { inner })
    }

    /// Geodesic sphere with `(mode, amplitude)` perturbations.
    #[staticmethod]
    #[pyo3(signature = (space, n, resolution, radius, modes))]
    fn perturbed_sphere(
        space: &PySpaceForm,
        n: usize,
        resolution: usize,
        radius: f64,
        modes: Vec<(usize, f64)>,
    ) -> PyResult<Self> {
        let inner = immersion::make_perturbed_sphere(space.inner, sphere_domain(n, resolution)?, radius, &modes)
            .map_err(to_py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (space, resolution, major, minor))]
    fn torus(space: &PySpaceForm, resolution: usize, major: f64, minor: f64) -> PyResult<Self> {
        let domain = ParamDomain::new(Topology::Torus2, resolution).map_err(to_py_err)?;
        let d = space.inner.ambient_dim() - 2;
        let inner = immersion::make_torus(space.inner, domain, (major, minor), d).map_err(to_py_err)?;
        Ok(Self { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn intrinsic_dim(&self) -> usize {
        self.inner.intrinsic_dim()
    }

    #[getter]
    fn codim(&self) -> usize {
        self.inner.codim()
    }

    #[getter]
    fn space(&self) -> PySpaceForm {
        PySpaceForm { inner: *self.inner.space() }
    }

    /// Node coordinates in the flat ambient, one list per node.
    fn coords(&self) -> Vec<Vec<f64>> {
        (0..self.inner.len()).map(|i| self.inner.node(i).to_vec()).collect()
    }

    fn max_quadric_defect(&self) -> f64 {
        self.inner.max_quadric_defect()
    }

    /// Monitor report (pinching quantity, f_sigma, Z margin, roundness, ...).
    #[pyo3(signature = (epsilon=0.1, sigma=0.1, eps_z=0.01))]
    fn pinch_report<'py>(&self, py: Python<'py>, epsilon: f64, sigma: f64, eps_z: f64) -> PyResult<Bound<'py, PyAny>> {
        let imm = &self.inner;
        let preset = pinch::preset(imm.intrinsic_dim(), imm.codim(), imm.space().c(), epsilon, sigma).map_err(to_py_err)?;
        to_py(py, &pinch::report(imm, &preset, eps_z).map_err(to_py_err)?)
    }

    /// One explicit step of size `dt`.
    #[pyo3(signature = (dt, integrator="rk4"))]
    fn step(&self, dt: f64, integrator: &str) -> PyResult<Self> {
        let integrator = match integrator {
            "euler" => flow::Integrator::Euler,
            "rk4" => flow::Integrator::Rk4,
            other => return Err(PyValueError::new_err(format!("unknown integrator {other:?}"))),
        };
        let inner = flow::step(&self.inner, dt, integrator).map_err(to_py_err)?;
        Ok(Self { inner })
    }

    fn stable_dt(&self) -> PyResult<f64> {
        flow::choose_dt(&self.inner, &FlowConfig::default()).map_err(to_py_err)
    }

    /// Runs the flow to its stop; `config` takes the same keys as the
    /// `flow` section of an experiment file. Returns the trace as a dict.
    #[pyo3(signature = (epsilon=0.1, sigma=0.1, config=None))]
    fn run_flow<'py>(
        &self,
        py: Python<'py>,
        epsilon: f64,
        sigma: f64,
        config: Option<&str>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let cfg: FlowConfig = match config {
            Some(text) => serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?,
            None => FlowConfig::default(),
        };
        let imm = &self.inner;
        let preset = pinch::preset(imm.intrinsic_dim(), imm.codim(), imm.space().c(), epsilon, sigma).map_err(to_py_err)?;
        let trace = py.detach(|| flow::run(imm, &preset, &cfg)).map_err(to_py_err)?;
        to_py(py, &trace)
    }

    fn __repr__(&self) -> String {
        format!(
            "Immersion(n={}, d={}, c={}, nodes={})",
            self.inner.intrinsic_dim(),
            self.inner.codim(),
            self.inner.space().c(),
            self.inner.len()
        )
    }
}

#[pyclass(name = "ShrinkerOracle", frozen)]
struct PyShrinkerOracle {
    inner: verify::ShrinkerOracle,
}

#[pymethods]
impl PyShrinkerOracle {
    #[new]
    fn new(c: f64, n: usize, r0: f64) -> PyResult<Self> {
        Ok(Self {
            inner: verify::ShrinkerOracle::new(c, n, r0).map_err(to_py_err)?,
        })
    }

    #[getter]
    fn t_exact(&self) -> f64 {
        self.inner.t_exact()
    }

    fn radius_at(&self, t: f64) -> Option<f64> {
        self.inner.radius_at(t)
    }

    fn normsq_a_at(&self, t: f64) -> Option<f64> {
        self.inner.normsq_a_at(t)
    }
}

/// Runs an experiment from a JSON config string and returns its summary.
/// Output paths in the config are ignored.
#[pyfunction]
fn run_experiment<'py>(py: Python<'py>, config: &str) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = ExperimentConfig::from_json(config).map_err(to_py_err)?;
    cfg.outputs = mcflab::cli::OutputConfig {
        sample_every: cfg.outputs.sample_every,
        ..Default::default()
    };
    let exp = cfg.validate().map_err(to_py_err)?;
    let outcome = py.detach(|| exp.run()).map_err(to_py_err)?;
    to_py(py, &outcome.summary)
}

/// Runs a verification suite (`oracles`, `residuals`, `invariants` or
/// `convergence`) and returns its checks.
#[pyfunction]
fn verify_suite<'py>(py: Python<'py>, name: &str) -> PyResult<Bound<'py, PyAny>> {
    let suite: Suite = name.parse().map_err(to_py_err)?;
    let checks = py.detach(|| verify::run_suite(suite));
    to_py(py, &checks)
}

#[pymodule]
pub fn mcflab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySpaceForm>()?;
    m.add_class::<PyImmersion>()?;
    m.add_class::<PyShrinkerOracle>()?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(verify_suite, m)?)?;
    Ok(())
}
