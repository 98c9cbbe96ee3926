//! Python bindings. Matrices cross the boundary as lists of rows.

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use altmin_core::diagnostics::{self, RipMode, RIP_ENUMERATION_CAP};
use altmin_core::experiments;
use altmin_core::synth::Instance;
use altmin_core::{
    altmin_dict, error_metric as core_error_metric, gen_samples, grades_recover as core_grades, l1_recover as core_l1,
    perturb_dictionary, threshold_op, AccuracySchedule, AltMinConfig, CoefficientMatrix, Dictionary, Error,
    ModelConfig, NonzeroLaw, Oracle, Outcome, PerturbConfig, SampleSet, SolverConfig,
};

type Rows = Vec<Vec<f64>>;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) | Error::Parse { .. } => PyIOError::new_err(e.to_string()),
        Error::InvalidConfig { .. } | Error::ShapeMismatch { .. } | Error::ZeroColumn { .. } => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn matrix(rows: &Rows) -> PyResult<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn dictionary(a: &Rows) -> PyResult<Dictionary> {
    Dictionary::normalized(matrix(a)?).map_err(py_err)
}

fn solver(kind: &str, s: usize, eps: f64) -> PyResult<SolverConfig> {
    match kind {
        "grades" => Ok(SolverConfig::grades(s)),
        "l1" => Ok(SolverConfig::l1(s, eps)),
        _ => Err(PyValueError::new_err(format!("unknown solver {kind:?}, expected grades or l1"))),
    }
}

#[pyclass(name = "ModelConfig", module = "pyaltmin", from_py_object)]
#[derive(Clone)]
struct PyModelConfig {
    inner: ModelConfig,
}

#[pymethods]
impl PyModelConfig {
    #[new]
    #[pyo3(signature = (d, r, n, s, seed = 1, law = "uniform_pm_1_2"))]
    fn new(d: usize, r: usize, n: usize, s: usize, seed: u64, law: &str) -> PyResult<Self> {
        let law: NonzeroLaw = law.parse().map_err(py_err)?;
        let inner = ModelConfig::new(d, r, n, s, seed).with_law(law);
        inner.validate().map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d
    }

    #[getter]
    fn r(&self) -> usize {
        self.inner.r
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn s(&self) -> usize {
        self.inner.s
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn law(&self) -> String {
        self.inner.law.to_string()
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!("ModelConfig(d={}, r={}, n={}, s={}, seed={}, law={:?})", c.d, c.r, c.n, c.s, c.seed, c.law.to_string())
    }
}

#[pyclass(name = "Instance", module = "pyaltmin")]
struct PyInstance {
    config: ModelConfig,
    inner: Instance,
}

#[pymethods]
impl PyInstance {
    #[staticmethod]
    fn generate(config: PyModelConfig) -> PyResult<Self> {
        let inner = gen_samples(&config.inner).map_err(py_err)?;
        Ok(Self {
            config: config.inner,
            inner,
        })
    }

    #[getter]
    fn dictionary(&self) -> Rows {
        rows(self.inner.dictionary.matrix())
    }

    #[getter]
    fn coefficients(&self) -> Rows {
        rows(self.inner.coefficients.entries())
    }

    #[getter]
    fn samples(&self) -> Rows {
        rows(self.inner.samples.matrix())
    }

    #[getter]
    fn supports(&self) -> Vec<Vec<usize>> {
        self.inner.coefficients.supports().to_vec()
    }

    /// Column-normalized `A* + N(0, (sigma/sqrt(d))^2)`, seeded from the instance.
    fn perturbed(&self, sigma: f64) -> PyResult<Rows> {
        let a = perturb_dictionary(&self.inner.dictionary, PerturbConfig::for_model(sigma, &self.config)).map_err(py_err)?;
        Ok(rows(a.matrix()))
    }
}

#[pyclass(name = "TrialReport", module = "pyaltmin", get_all)]
struct PyTrialReport {
    initial_error: Option<f64>,
    errors: Vec<f64>,
    supp_ok: Vec<Option<bool>>,
    outcome: String,
    dictionary: Rows,
}

#[pymethods]
impl PyTrialReport {
    #[getter]
    fn final_error(&self) -> Option<f64> {
        self.errors.last().copied().or(self.initial_error)
    }

    fn __repr__(&self) -> String {
        let show = |v: Option<f64>| v.map_or("None".to_string(), |x| format!("{x:e}"));
        format!(
            "TrialReport(rounds={}, initial_error={}, final_error={}, outcome={:?})",
            self.errors.len(),
            show(self.initial_error),
            show(self.final_error()),
            self.outcome
        )
    }
}

fn report(rep: altmin_core::TrialReport) -> PyTrialReport {
    PyTrialReport {
        initial_error: rep.initial_error,
        errors: rep.records.iter().filter_map(|r| r.dict_error).collect(),
        supp_ok: rep.records.iter().map(|r| r.supp_ok).collect(),
        outcome: match &rep.outcome {
            Outcome::Completed => "completed".into(),
            Outcome::Stopped => "stopped".into(),
            Outcome::Aborted(e) => format!("aborted: {e}"),
        },
        dictionary: rows(rep.dictionary.matrix()),
    }
}

/// Sign-invariant dictionary error `max_i sqrt(1 - <a_i, b_i>^2)` after normalizing both.
#[pyfunction]
fn error_metric(a: Rows, b: Rows) -> PyResult<f64> {
    core_error_metric(&matrix(&a)?, &matrix(&b)?).map_err(py_err)
}

#[pyfunction]
fn coherence(a: Rows) -> PyResult<f64> {
    Ok(diagnostics::coherence(&dictionary(&a)?))
}

#[pyfunction]
#[pyo3(signature = (a, tol = 1e-10))]
fn spectral_norm(a: Rows, tol: f64) -> PyResult<f64> {
    diagnostics::spectral_norm(&matrix(&a)?, tol).map_err(py_err)
}

/// Returns `(delta, exhaustive)`.
#[pyfunction]
fn rip_constant(a: Rows, k: usize) -> PyResult<(f64, bool)> {
    let est = diagnostics::rip_constant(&dictionary(&a)?, k, RIP_ENUMERATION_CAP).map_err(py_err)?;
    Ok((est.delta, est.mode == RipMode::Exhaustive))
}

#[pyfunction]
fn grades_recover(a: Rows, y: Vec<f64>, s: usize) -> PyResult<Vec<f64>> {
    let a = dictionary(&a)?;
    let y = DVector::from_vec(y);
    let rec = core_grades(&a, y.as_view(), s, &SolverConfig::grades(s)).map_err(py_err)?;
    Ok(rec.x.iter().copied().collect())
}

#[pyfunction]
fn l1_recover(a: Rows, y: Vec<f64>, eps: f64) -> PyResult<Vec<f64>> {
    let a = dictionary(&a)?;
    let y = DVector::from_vec(y);
    let rec = core_l1(&a, y.as_view(), eps, &SolverConfig::l1(a.atoms(), eps)).map_err(py_err)?;
    Ok(rec.x.iter().copied().collect())
}

/// Zeroes entries with `|x| <= rho`.
#[pyfunction]
fn threshold(x: Rows, rho: f64) -> PyResult<Rows> {
    let x = CoefficientMatrix::from_dense(matrix(&x)?);
    Ok(rows(threshold_op(&x, rho).entries()))
}

/// Alternating minimization on samples `y` from `a0`, with no ground truth.
#[pyfunction]
#[pyo3(signature = (y, a0, s, iters = 25, solver_kind = "grades", eps = 1e-9))]
fn altmin(y: Rows, a0: Rows, s: usize, iters: usize, solver_kind: &str, eps: f64) -> PyResult<PyTrialReport> {
    let y = SampleSet::new(matrix(&y)?, None).map_err(py_err)?;
    let cfg = AltMinConfig {
        iters,
        solver: solver(solver_kind, s, eps)?,
        ..AltMinConfig::new(s)
    };
    let rep = altmin_dict(&y, &dictionary(&a0)?, &cfg, None).map_err(py_err)?;
    Ok(report(rep))
}

/// Perturbs the instance's dictionary and runs alternating minimization against the truth.
#[pyfunction]
#[pyo3(signature = (instance, sigma = 0.5, iters = 25, solver_kind = "grades", eps = 1e-9, threshold = None))]
fn run_trial(
    instance: &PyInstance,
    sigma: f64,
    iters: usize,
    solver_kind: &str,
    eps: f64,
    threshold: Option<f64>,
) -> PyResult<PyTrialReport> {
    let cfg = &instance.config;
    let alt = AltMinConfig {
        iters,
        solver: solver(solver_kind, cfg.s, eps)?,
        schedule: threshold.map_or(AccuracySchedule::off(), AccuracySchedule::fixed),
        ..AltMinConfig::new(cfg.s)
    };
    let inst = &instance.inner;
    let a0 = perturb_dictionary(&inst.dictionary, PerturbConfig::for_model(sigma, cfg)).map_err(py_err)?;
    let oracle = Oracle {
        dictionary: &inst.dictionary,
        coefficients: &inst.coefficients,
    };
    let rep = altmin_dict(&inst.samples, &a0, &alt, Some(oracle)).map_err(py_err)?;
    Ok(report(rep))
}

/// Diagnostics report as `(key, value)` pairs in the fixed key order.
#[pyfunction]
fn check(instance: &PyInstance) -> PyResult<Vec<(String, String)>> {
    let cfg = &instance.config;
    let rep = experiments::check(&instance.inner.dictionary, Some(&instance.inner.coefficients), cfg.s, cfg.law)
        .map_err(py_err)?;
    Ok(rep
        .to_string()
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect())
}

#[pymodule]
fn pyaltmin(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelConfig>()?;
    m.add_class::<PyInstance>()?;
    m.add_class::<PyTrialReport>()?;
    m.add_function(wrap_pyfunction!(error_metric, m)?)?;
    m.add_function(wrap_pyfunction!(coherence, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_norm, m)?)?;
    m.add_function(wrap_pyfunction!(rip_constant, m)?)?;
    m.add_function(wrap_pyfunction!(grades_recover, m)?)?;
    m.add_function(wrap_pyfunction!(l1_recover, m)?)?;
    m.add_function(wrap_pyfunction!(threshold, m)?)?;
    m.add_function(wrap_pyfunction!(altmin, m)?)?;
    m.add_function(wrap_pyfunction!(run_trial, m)?)?;
    m.add_function(wrap_pyfunction!(check, m)?)?;
    Ok(())
}
