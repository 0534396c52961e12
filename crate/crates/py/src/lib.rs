//! Python bindings: curves, the level iteration, candidate verification, the
//! family checks and the command line.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use bergman_ke::checkpoint::{verify_candidate, CandidateFile, Checkpoint};
use bergman_ke::cli::ResidualTotals;
use bergman_ke::curve::Sheet;
use bergman_ke::family::{positivity_suite, psh_check, FamilySweep};
use bergman_ke::iteration::EinsteinCandidate;
use bergman_ke::{Error, HyperellipticCurve, IterationConfig, IterationState, RunConfig, SeedChoice, TraceRow};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Config { .. } | Error::InvalidInput(_) | Error::RepeatedRoots { .. } | Error::UnsupportedModel(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn json_value<'py>(py: Python<'py>, text: String) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

/// `y² = f(x)` with `f` given by ascending coefficients.
#[pyclass(name = "Curve", module = "bergman_ke")]
struct PyCurve {
    inner: HyperellipticCurve,
}

#[pymethods]
impl PyCurve {
    #[new]
    fn new(f: Vec<Complex64>) -> PyResult<Self> {
        Ok(Self { inner: HyperellipticCurve::new(&f).map_err(py_err)? })
    }

    #[getter]
    fn genus(&self) -> usize {
        self.inner.genus()
    }

    #[getter]
    fn branch_points(&self) -> Vec<Complex64> {
        self.inner.branch_points().to_vec()
    }

    #[getter]
    fn fingerprint(&self) -> String {
        self.inner.fingerprint()
    }

    fn __repr__(&self) -> String {
        format!("Curve(genus={}, fingerprint={})", self.inner.genus(), self.inner.fingerprint())
    }
}

fn trace_dict<'py>(py: Python<'py>, row: &TraceRow) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("m", row.m)?;
    d.set_item("N_m", row.n_m)?;
    d.set_item("log_integral", row.log_integral)?;
    d.set_item("normalized_integral", row.normalized_integral)?;
    d.set_item("holder_bound", row.holder_bound)?;
    d.set_item("sup_change", row.sup_change)?;
    d.set_item("residual_sup", row.residual_sup)?;
    d.set_item("residual_l2", row.residual_l2)?;
    d.set_item("trace_integral", row.trace_integral)?;
    d.set_item("log_gain", row.log_gain)?;
    Ok(d)
}

/// The level iteration on one curve.
#[pyclass(name = "Engine", module = "bergman_ke")]
struct PyEngine {
    engine: bergman_ke::Engine,
    state: IterationState,
}

#[pymethods]
impl PyEngine {
    #[new]
    #[pyo3(signature = (curve, m0 = 3, final_level = 24, twist = 0, seed = "fubini_study", residual_grid = 96))]
    fn new(curve: &PyCurve, m0: u32, final_level: u32, twist: u32, seed: &str, residual_grid: usize) -> PyResult<Self> {
        let seed = match seed {
            "fubini_study" => SeedChoice::FubiniStudy,
            "sheared" => SeedChoice::Sheared,
            other => return Err(PyValueError::new_err(format!("unknown seed {other:?}"))),
        };
        let config = IterationConfig { m0, final_level, twist, seed, residual_grid, ..IterationConfig::default() };
        let engine = bergman_ke::Engine::new(&curve.inner, config).map_err(py_err)?;
        let state = engine.seed().map_err(py_err)?;
        Ok(Self { engine, state })
    }

    /// Builds an engine from a TOML configuration string.
    #[staticmethod]
    fn from_config(toml: &str) -> PyResult<Self> {
        let config = RunConfig::parse(toml).map_err(py_err)?;
        let curve = config.curve().map_err(py_err)?;
        let engine = bergman_ke::Engine::new(&curve, config.iteration().map_err(py_err)?).map_err(py_err)?;
        let state = engine.seed().map_err(py_err)?;
        Ok(Self { engine, state })
    }

    #[getter]
    fn level(&self) -> u32 {
        self.state.level
    }

    #[getter]
    fn nodes(&self) -> usize {
        self.engine.nodes.len()
    }

    /// Advances one level.
    fn step(&mut self, py: Python<'_>) -> PyResult<()> {
        let (engine, state) = (&self.engine, &mut self.state);
        py.detach(|| engine.step(state)).map_err(py_err)
    }

    /// Advances to the final level.
    fn run(&mut self, py: Python<'_>) -> PyResult<()> {
        let engine = &self.engine;
        let state = self.state.clone();
        self.state = py.detach(|| engine.run_from(state, |_| Ok(()))).map_err(py_err)?;
        Ok(())
    }

    fn trace<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.state.trace.iter().map(|r| trace_dict(py, r)).collect()
    }

    /// `log D` of the current candidate at `x` on the `+` sheet.
    fn log_density(&self, x: Complex64) -> PyResult<f64> {
        let candidate = EinsteinCandidate::from_state(&self.state);
        let chart = self.engine.atlas.bulk_chart(Sheet::Plus);
        candidate.log_density_at(&self.engine.atlas, chart, x).map_err(py_err)
    }

    /// Residual totals of the current candidate, or `None` without a residual grid.
    fn residual<'py>(&self, py: Python<'py>) -> PyResult<Option<Bound<'py, PyAny>>> {
        match self.engine.residual(&self.state) {
            Some(r) => {
                let text = serde_json::to_string(&ResidualTotals::from(&r))
                    .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
                Ok(Some(json_value(py, text)?))
            }
            None => Ok(None),
        }
    }

    fn checkpoint(&self) -> PyResult<String> {
        Checkpoint::capture(&self.engine, &self.state).and_then(|c| c.to_json()).map_err(py_err)
    }

    fn restore(&mut self, checkpoint: &str) -> PyResult<()> {
        let cp = Checkpoint::from_json(checkpoint).map_err(py_err)?;
        self.state = cp.restore(&self.engine).map_err(py_err)?;
        Ok(())
    }

    fn candidate(&self) -> PyResult<String> {
        CandidateFile::export(&self.engine, &self.state).and_then(|c| c.to_json()).map_err(py_err)
    }
}

/// Dimension of `H⁰(mK + r(∞₊ + ∞₋))` in genus `g`.
#[pyfunction]
#[pyo3(signature = (genus, level, twist = 0))]
fn riemann_roch_count(genus: usize, level: u32, twist: u32) -> PyResult<usize> {
    bergman_ke::riemann_roch_count(genus, level, twist).map_err(py_err)
}

/// Residual totals of a candidate file given as JSON text.
#[pyfunction]
#[pyo3(signature = (candidate, residual_grid = 96))]
fn verify<'py>(py: Python<'py>, candidate: &str, residual_grid: usize) -> PyResult<Bound<'py, PyAny>> {
    let file = CandidateFile::from_json(candidate).map_err(py_err)?;
    let report = py.detach(|| verify_candidate(&file, residual_grid)).map_err(py_err)?;
    let text =
        serde_json::to_string(&ResidualTotals::from(&report)).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    json_value(py, text)
}

/// Psh and positivity reports for the family in a TOML configuration string.
#[pyfunction]
fn family_check<'py>(py: Python<'py>, toml: &str) -> PyResult<Bound<'py, PyAny>> {
    let config = RunConfig::parse(toml).map_err(py_err)?;
    let (family, fcfg) = config.family().map_err(py_err)?;
    let iteration = config.iteration().map_err(py_err)?;
    let text = py
        .detach(|| -> bergman_ke::Result<String> {
            let sweep = FamilySweep::new(&family, &iteration, &fcfg)?;
            let mut reports = Vec::new();
            for &m in &fcfg.levels {
                let psh = psh_check(&sweep.relative_kernel_field(m, &fcfg)?, fcfg.tolerance);
                let pos = positivity_suite(&sweep.direct_image_metric(m)?, fcfg.tolerance, fcfg.sections, fcfg.seed)?;
                reports.push(serde_json::json!({ "level": m, "psh": psh, "positivity": pos }));
            }
            Ok(serde_json::Value::Array(reports).to_string())
        })
        .map_err(py_err)?;
    json_value(py, text)
}

/// Runs the command line with `args` (without the program name); returns the exit code.
#[pyfunction]
fn main(py: Python<'_>, args: Vec<String>) -> i32 {
    py.detach(|| bergman_ke::cli::main_with_args(std::iter::once("bergman-ke".to_string()).chain(args)))
}

#[pymodule]
#[pyo3(name = "bergman_ke")]
fn bergman_ke_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCurve>()?;
    m.add_class::<PyEngine>()?;
    m.add_function(wrap_pyfunction!(riemann_roch_count, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(family_check, m)?)?;
    m.add_function(wrap_pyfunction!(main, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
