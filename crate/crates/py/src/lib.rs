//! Python bindings for the photonstat library.
//!
//! Exposes the main types and operations: distribution constructors, the
//! detector forward model with its Monte Carlo simulator, the EM
//! reconstruction, and the post-reconstruction statistics.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use photonstat as core;

fn to_py(e: core::Error) -> PyErr {
    match e {
        core::Error::Io(inner) => PyIOError::new_err(inner.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// A normalized photon-number distribution on a truncated Fock basis.
#[pyclass(name = "PhotonDistribution", from_py_object)]
#[derive(Clone)]
struct PyPhotonDistribution {
    inner: core::PhotonDistribution,
}

#[pymethods]
impl PyPhotonDistribution {
    #[new]
    #[pyo3(signature = (probs, label = "custom".to_string()))]
    fn new(probs: Vec<f64>, label: String) -> PyResult<Self> {
        Ok(Self {
            inner: core::PhotonDistribution::new(probs, label).map_err(to_py)?,
        })
    }

    #[getter]
    fn probs(&self) -> Vec<f64> {
        self.inner.probs().to_vec()
    }

    #[getter]
    fn label(&self) -> String {
        self.inner.label().to_string()
    }

    fn truncation(&self) -> usize {
        self.inner.truncation()
    }

    fn mean_photon_number(&self) -> f64 {
        self.inner.mean_photon_number()
    }

    fn truncated_tail_mass(&self) -> f64 {
        self.inner.truncated_tail_mass()
    }

    fn has_truncation_warning(&self) -> bool {
        self.inner.has_truncation_warning()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "PhotonDistribution(label={:?}, truncation={})",
            self.inner.label(),
            self.inner.truncation()
        )
    }
}

/// The quantum efficiencies at which on/off statistics are collected.
#[pyclass(name = "EfficiencyGrid", skip_from_py_object)]
#[derive(Clone)]
struct PyEfficiencyGrid {
    inner: core::EfficiencyGrid,
}

#[pymethods]
impl PyEfficiencyGrid {
    #[new]
    fn new(etas: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: core::EfficiencyGrid::new(etas).map_err(to_py)?,
        })
    }

    /// `k` efficiencies equally spaced in `(0, eta_max]`.
    #[staticmethod]
    fn equally_spaced(k: usize, eta_max: f64) -> PyResult<Self> {
        Ok(Self {
            inner: core::EfficiencyGrid::equally_spaced(k, eta_max).map_err(to_py)?,
        })
    }

    #[getter]
    fn etas(&self) -> Vec<f64> {
        self.inner.etas().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("EfficiencyGrid(K={})", self.inner.len())
    }
}

/// Response matrix `A[nu][n] = (1 - eta_nu)^n`.
#[pyclass(name = "ResponseMatrix", skip_from_py_object)]
#[derive(Clone)]
struct PyResponseMatrix {
    inner: core::ResponseMatrix,
}

#[pymethods]
impl PyResponseMatrix {
    fn rows(&self) -> usize {
        self.inner.rows()
    }

    fn cols(&self) -> usize {
        self.inner.cols()
    }

    fn row(&self, nu: usize) -> PyResult<Vec<f64>> {
        if nu >= self.inner.rows() {
            return Err(PyValueError::new_err(format!("row {nu} out of range")));
        }
        Ok(self.inner.row(nu).to_vec())
    }

    fn entries(&self) -> Vec<Vec<f64>> {
        (0..self.inner.rows())
            .map(|nu| self.inner.row(nu).to_vec())
            .collect()
    }

    fn no_click_probabilities(&self, d: PyRef<'_, PyPhotonDistribution>) -> PyResult<Vec<f64>> {
        self.inner.no_click_probabilities(&d.inner).map_err(to_py)
    }
}

/// On/off counts collected over an efficiency grid.
#[pyclass(name = "OnOffDataset", skip_from_py_object)]
#[derive(Clone)]
struct PyOnOffDataset {
    inner: core::OnOffDataset,
}

#[pymethods]
impl PyOnOffDataset {
    #[new]
    fn new(
        grid: PyRef<'_, PyEfficiencyGrid>,
        no_click_counts: Vec<u64>,
        total_runs: Vec<u64>,
    ) -> PyResult<Self> {
        Ok(Self {
            inner: core::OnOffDataset::new(grid.inner.clone(), no_click_counts, total_runs)
                .map_err(to_py)?,
        })
    }

    #[getter]
    fn etas(&self) -> Vec<f64> {
        self.inner.grid().etas().to_vec()
    }

    #[getter]
    fn no_click_counts(&self) -> Vec<u64> {
        self.inner.no_click_counts().to_vec()
    }

    #[getter]
    fn total_runs(&self) -> Vec<u64> {
        self.inner.total_runs().to_vec()
    }

    fn grid(&self) -> PyEfficiencyGrid {
        PyEfficiencyGrid {
            inner: self.inner.grid().clone(),
        }
    }

    fn frequencies(&self) -> Vec<f64> {
        self.inner.frequencies()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Reconstruction settings.
#[pyclass(name = "EmConfig", skip_from_py_object)]
#[derive(Clone)]
struct PyEmConfig {
    inner: core::EmConfig,
}

#[pymethods]
impl PyEmConfig {
    #[new]
    #[pyo3(signature = (truncation, max_iterations = 1_000_000, epsilon_tolerance = None, trace_stride = 1000))]
    fn new(
        truncation: usize,
        max_iterations: usize,
        epsilon_tolerance: Option<f64>,
        trace_stride: usize,
    ) -> Self {
        let mut inner = core::EmConfig::new(truncation);
        inner.max_iterations = max_iterations;
        inner.epsilon_tolerance = epsilon_tolerance;
        inner.trace_stride = trace_stride;
        Self { inner }
    }

    #[getter]
    fn truncation(&self) -> usize {
        self.inner.truncation
    }

    #[getter]
    fn max_iterations(&self) -> usize {
        self.inner.max_iterations
    }

    #[getter]
    fn epsilon_tolerance(&self) -> Option<f64> {
        self.inner.epsilon_tolerance
    }
}

/// Result of a reconstruction run.
#[pyclass(name = "ReconstructionResult", skip_from_py_object)]
#[derive(Clone)]
struct PyReconstructionResult {
    inner: core::ReconstructionResult,
}

#[pymethods]
impl PyReconstructionResult {
    #[getter]
    fn rho(&self) -> PyPhotonDistribution {
        PyPhotonDistribution {
            inner: self.inner.rho.clone(),
        }
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations_run
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.final_epsilon
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    /// Trace rows as `(iteration, epsilon, log_likelihood, fidelity | None)`.
    #[getter]
    fn trace(&self) -> Vec<(usize, f64, f64, Option<f64>)> {
        self.inner
            .trace
            .iter()
            .map(|t| (t.iteration, t.epsilon, t.log_likelihood, t.fidelity))
            .collect()
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json_string().map_err(to_py)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: core::ReconstructionResult::from_json_str(text).map_err(to_py)?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "ReconstructionResult(iterations={}, epsilon={:.3e}, converged={})",
            self.inner.iterations_run, self.inner.final_epsilon, self.inner.converged
        )
    }
}

/// Per-element confidence intervals.
#[pyclass(name = "UncertaintyReport", skip_from_py_object)]
#[derive(Clone)]
struct PyUncertaintyReport {
    inner: core::UncertaintyReport,
}

#[pymethods]
impl PyUncertaintyReport {
    #[getter]
    fn delta_rho(&self) -> Vec<f64> {
        self.inner.delta_rho.clone()
    }

    #[getter]
    fn excluded_terms(&self) -> Vec<usize> {
        self.inner.excluded_terms.clone()
    }
}

/// Outcome of a chi-square model fit.
#[pyclass(name = "FitSummary", skip_from_py_object)]
#[derive(Clone)]
struct PyFitSummary {
    inner: core::FitSummary,
}

#[pymethods]
impl PyFitSummary {
    #[getter]
    fn fitted_parameters(&self) -> Vec<(String, f64)> {
        self.inner.fitted_parameters.clone()
    }

    #[getter]
    fn reduced_chi_square(&self) -> f64 {
        self.inner.reduced_chi_square
    }

    #[getter]
    fn degrees_of_freedom(&self) -> usize {
        self.inner.degrees_of_freedom
    }

    /// The best-fit model spec as JSON.
    fn model_json(&self) -> PyResult<String> {
        serde_json_string(&self.inner.model)
    }

    /// Builds the best-fit model distribution.
    fn model_distribution(&self) -> PyResult<PyPhotonDistribution> {
        Ok(PyPhotonDistribution {
            inner: self.inner.model.build().map_err(to_py)?,
        })
    }
}

fn serde_json_string<T: serde::Serialize>(value: &T) -> PyResult<String> {
    serde_json::to_string_pretty(value).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pyfunction]
fn make_fock(n0: usize, truncation: usize) -> PyResult<PyPhotonDistribution> {
    Ok(PyPhotonDistribution {
        inner: core::make_fock(n0, truncation).map_err(to_py)?,
    })
}

#[pyfunction]
fn make_coherent(mean: f64, truncation: usize) -> PyResult<PyPhotonDistribution> {
    Ok(PyPhotonDistribution {
        inner: core::make_coherent(mean, truncation).map_err(to_py)?,
    })
}

#[pyfunction]
fn make_thermal(mean: f64, truncation: usize) -> PyResult<PyPhotonDistribution> {
    Ok(PyPhotonDistribution {
        inner: core::make_thermal(mean, truncation).map_err(to_py)?,
    })
}

#[pyfunction]
fn make_multithermal(mean: f64, modes: u64, truncation: usize) -> PyResult<PyPhotonDistribution> {
    Ok(PyPhotonDistribution {
        inner: core::make_multithermal(mean, modes, truncation).map_err(to_py)?,
    })
}

#[pyfunction]
fn make_mixture(components: Vec<(f64, PyPhotonDistribution)>) -> PyResult<PyPhotonDistribution> {
    let parts: Vec<(f64, core::PhotonDistribution)> =
        components.into_iter().map(|(w, d)| (w, d.inner)).collect();
    Ok(PyPhotonDistribution {
        inner: core::make_mixture(&parts).map_err(to_py)?,
    })
}

/// Builds a distribution from a model-spec JSON string.
#[pyfunction]
fn build_model(spec_json: &str) -> PyResult<PyPhotonDistribution> {
    let spec: core::ModelSpec =
        serde_json::from_str(spec_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(PyPhotonDistribution {
        inner: spec.build().map_err(to_py)?,
    })
}

#[pyfunction]
fn fidelity(
    a: PyRef<'_, PyPhotonDistribution>,
    b: PyRef<'_, PyPhotonDistribution>,
) -> PyResult<f64> {
    core::fidelity(&a.inner, &b.inner).map_err(to_py)
}

#[pyfunction]
fn no_click_probability(d: PyRef<'_, PyPhotonDistribution>, eta: f64) -> PyResult<f64> {
    core::no_click_probability(&d.inner, eta).map_err(to_py)
}

#[pyfunction]
fn response_matrix(
    grid: PyRef<'_, PyEfficiencyGrid>,
    truncation: usize,
) -> PyResult<PyResponseMatrix> {
    Ok(PyResponseMatrix {
        inner: core::response_matrix(&grid.inner, truncation).map_err(to_py)?,
    })
}

#[pyfunction]
fn simulate_dataset(
    d: PyRef<'_, PyPhotonDistribution>,
    grid: PyRef<'_, PyEfficiencyGrid>,
    runs_per_eta: Vec<u64>,
    seed: u64,
) -> PyResult<PyOnOffDataset> {
    Ok(PyOnOffDataset {
        inner: core::simulate_dataset(&d.inner, &grid.inner, &runs_per_eta, seed).map_err(to_py)?,
    })
}

#[pyfunction]
fn save_dataset(d: PyRef<'_, PyOnOffDataset>, path: &str) -> PyResult<()> {
    core::save_dataset(&d.inner, path).map_err(to_py)
}

#[pyfunction]
fn load_dataset(path: &str) -> PyResult<PyOnOffDataset> {
    Ok(PyOnOffDataset {
        inner: core::load_dataset(path).map_err(to_py)?,
    })
}

#[pyfunction]
fn em_step(
    rho: PyRef<'_, PyPhotonDistribution>,
    a: PyRef<'_, PyResponseMatrix>,
    frequencies: Vec<f64>,
) -> PyResult<PyPhotonDistribution> {
    Ok(PyPhotonDistribution {
        inner: core::em_step(&rho.inner, &a.inner, &frequencies).map_err(to_py)?,
    })
}

#[pyfunction]
fn total_error(
    rho: PyRef<'_, PyPhotonDistribution>,
    a: PyRef<'_, PyResponseMatrix>,
    frequencies: Vec<f64>,
) -> f64 {
    core::total_error(&rho.inner, &a.inner, &frequencies)
}

#[pyfunction]
fn log_likelihood(rho: PyRef<'_, PyPhotonDistribution>, data: PyRef<'_, PyOnOffDataset>) -> f64 {
    core::log_likelihood(&rho.inner, &data.inner)
}

#[pyfunction]
#[pyo3(signature = (data, config, reference = None))]
fn reconstruct(
    data: PyRef<'_, PyOnOffDataset>,
    config: PyRef<'_, PyEmConfig>,
    reference: Option<PyRef<'_, PyPhotonDistribution>>,
) -> PyResult<PyReconstructionResult> {
    let reference = reference.as_ref().map(|r| &r.inner);
    Ok(PyReconstructionResult {
        inner: core::reconstruct(&data.inner, &config.inner, reference).map_err(to_py)?,
    })
}

#[pyfunction]
fn default_truncation(data: PyRef<'_, PyOnOffDataset>) -> usize {
    core::default_truncation(&data.inner)
}

#[pyfunction]
fn confidence_intervals(
    result: PyRef<'_, PyReconstructionResult>,
    data: PyRef<'_, PyOnOffDataset>,
) -> PyResult<PyUncertaintyReport> {
    Ok(PyUncertaintyReport {
        inner: core::confidence_intervals(&result.inner, &data.inner).map_err(to_py)?,
    })
}

#[pyfunction]
fn klyshko(d: PyRef<'_, PyPhotonDistribution>, n: usize) -> PyResult<f64> {
    core::klyshko(&d.inner, n).map_err(to_py)
}

#[pyfunction]
fn klyshko_with_uncertainty(
    d: PyRef<'_, PyPhotonDistribution>,
    delta: PyRef<'_, PyUncertaintyReport>,
    n: usize,
) -> PyResult<(f64, f64)> {
    core::klyshko_with_uncertainty(&d.inner, &delta.inner, n).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (rho, delta, family, mu_min = 1e-6, mu_max = 10.0, modes = vec![1]))]
fn fit_model(
    rho: PyRef<'_, PyPhotonDistribution>,
    delta: PyRef<'_, PyUncertaintyReport>,
    family: &str,
    mu_min: f64,
    mu_max: f64,
    modes: Vec<u64>,
) -> PyResult<PyFitSummary> {
    let family: core::ModelFamily = family.parse().map_err(to_py)?;
    let grid = core::FitGrid {
        mu_bracket: (mu_min, mu_max),
        modes,
    };
    Ok(PyFitSummary {
        inner: core::fit_model(&rho.inner, &delta.inner, family, &grid).map_err(to_py)?,
    })
}

#[pyfunction]
#[pyo3(signature = (rho, delta, base_family, mu_min = 1e-6, mu_max = 10.0, modes = vec![1],
                    weights = None, bg_mu_min = None, bg_mu_max = None))]
#[allow(clippy::too_many_arguments)]
fn poisson_background_fit(
    rho: PyRef<'_, PyPhotonDistribution>,
    delta: PyRef<'_, PyUncertaintyReport>,
    base_family: &str,
    mu_min: f64,
    mu_max: f64,
    modes: Vec<u64>,
    weights: Option<Vec<f64>>,
    bg_mu_min: Option<f64>,
    bg_mu_max: Option<f64>,
) -> PyResult<PyFitSummary> {
    let base_family: core::ModelFamily = base_family.parse().map_err(to_py)?;
    let grid = core::BackgroundGrid {
        base: core::FitGrid {
            mu_bracket: (mu_min, mu_max),
            modes,
        },
        weights: weights.unwrap_or_else(|| (0..=20).map(|i| i as f64 / 20.0).collect()),
        background_mu_bracket: (bg_mu_min.unwrap_or(mu_min), bg_mu_max.unwrap_or(mu_max)),
    };
    Ok(PyFitSummary {
        inner: core::poisson_background_fit(&rho.inner, &delta.inner, base_family, &grid)
            .map_err(to_py)?,
    })
}

#[pymodule]
fn photonstat_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPhotonDistribution>()?;
    m.add_class::<PyEfficiencyGrid>()?;
    m.add_class::<PyResponseMatrix>()?;
    m.add_class::<PyOnOffDataset>()?;
    m.add_class::<PyEmConfig>()?;
    m.add_class::<PyReconstructionResult>()?;
    m.add_class::<PyUncertaintyReport>()?;
    m.add_class::<PyFitSummary>()?;
    m.add_function(wrap_pyfunction!(make_fock, m)?)?;
    m.add_function(wrap_pyfunction!(make_coherent, m)?)?;
    m.add_function(wrap_pyfunction!(make_thermal, m)?)?;
    m.add_function(wrap_pyfunction!(make_multithermal, m)?)?;
    m.add_function(wrap_pyfunction!(make_mixture, m)?)?;
    m.add_function(wrap_pyfunction!(build_model, m)?)?;
    m.add_function(wrap_pyfunction!(fidelity, m)?)?;
    m.add_function(wrap_pyfunction!(no_click_probability, m)?)?;
    m.add_function(wrap_pyfunction!(response_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(save_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(load_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(em_step, m)?)?;
    m.add_function(wrap_pyfunction!(total_error, m)?)?;
    m.add_function(wrap_pyfunction!(log_likelihood, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruct, m)?)?;
    m.add_function(wrap_pyfunction!(default_truncation, m)?)?;
    m.add_function(wrap_pyfunction!(confidence_intervals, m)?)?;
    m.add_function(wrap_pyfunction!(klyshko, m)?)?;
    m.add_function(wrap_pyfunction!(klyshko_with_uncertainty, m)?)?;
    m.add_function(wrap_pyfunction!(fit_model, m)?)?;
    m.add_function(wrap_pyfunction!(poisson_background_fit, m)?)?;
    Ok(())
}
