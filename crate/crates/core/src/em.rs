//! Expectation-maximization solver for the on/off inversion problem.
//!
//! The no-click probabilities are linear in the photon distribution with
//! positive coefficients (a LINPOS problem), so the maximum-likelihood
//! distribution is found by an EM multiplicative update. Each run at
//! efficiency `eta_nu` reports one of two outcomes whose responses to an
//! `n`-photon state are `A[nu][n] = (1 - eta_nu)^n` (no click) and
//! `1 - A[nu][n]` (click); the update reweights every Fock component by its
//! posterior responsibility for the observed outcome mix:
//!
//! ```text
//! rho[n] <- rho[n] * sum_nu w_nu * ( f_nu * A[nu][n] / p_nu
//!                                  + (1 - f_nu) * (1 - A[nu][n]) / (1 - p_nu) )
//! ```
//!
//! with `p_nu` the no-click probability of the current iterate and `w_nu`
//! the fraction of all runs taken at `eta_nu` (`1/K` for equal runs). The
//! per-row responses sum to one, so the update factor is exactly one at a
//! fixed point and the binomial log-likelihood never decreases. Iterates are
//! renormalized to unit sum each step; entries starting at zero stay zero.
//!
//! Convergence is monitored by the total absolute error
//! `epsilon = sum_nu |f_nu - p_nu|`. The per-iterate trace additionally
//! records the binomial log-likelihood and, when a reference distribution is
//! supplied, the fidelity against it.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::distributions::{fidelity, PhotonDistribution};
use crate::error::{Error, Result};
use crate::forward::{dot, response_matrix, OnOffDataset, ResponseMatrix};

/// Largest supported truncation for a reconstruction.
pub const MAX_TRUNCATION: usize = 200;

/// Floor applied to probabilities inside EM ratios to avoid division blow-ups.
const PROB_FLOOR: f64 = 1e-300;

/// Starting point for the EM iteration.
#[derive(Debug, Clone)]
pub enum EmInit {
    /// Uniform over the Fock window; strictly positive, so no component is
    /// locked out by the multiplicative update.
    Uniform,
    /// Caller-supplied start; must be strictly positive everywhere it should
    /// remain reachable (zeros are preserved forever).
    Custom(PhotonDistribution),
}

/// Reconstruction settings.
#[derive(Debug, Clone)]
pub struct EmConfig {
    /// Highest photon number of the reconstructed window (`1..=MAX_TRUNCATION`).
    pub truncation: usize,
    /// Iteration cap; the run reports `converged = false` when it fires.
    pub max_iterations: usize,
    /// Stopping level for the total absolute error; `None` uses `1e-7 * K`.
    pub epsilon_tolerance: Option<f64>,
    /// Record a trace point every this many iterations (the final iterate is
    /// always recorded).
    pub trace_stride: usize,
    pub init: EmInit,
}

impl EmConfig {
    pub fn new(truncation: usize) -> Self {
        Self {
            truncation,
            max_iterations: 1_000_000,
            epsilon_tolerance: None,
            trace_stride: 1000,
            init: EmInit::Uniform,
        }
    }

    /// Resolves the stopping tolerance for a dataset with `k` efficiency rows.
    pub fn resolved_tolerance(&self, k: usize) -> f64 {
        self.epsilon_tolerance.unwrap_or(1e-7 * k as f64)
    }

    fn validate(&self) -> Result<()> {
        if self.truncation < 1 || self.truncation > MAX_TRUNCATION {
            return Err(Error::domain(format!(
                "truncation {} outside 1..={MAX_TRUNCATION}",
                self.truncation
            )));
        }
        if self.max_iterations < 1 {
            return Err(Error::domain("max_iterations must be at least 1"));
        }
        if self.trace_stride < 1 {
            return Err(Error::domain("trace_stride must be at least 1"));
        }
        if let Some(tol) = self.epsilon_tolerance {
            if tol.is_nan() || tol <= 0.0 {
                return Err(Error::domain("epsilon_tolerance must be positive"));
            }
        }
        if let EmInit::Custom(d) = &self.init {
            if d.len() != self.truncation + 1 {
                return Err(Error::shape(format!(
                    "custom init has {} entries, expected {}",
                    d.len(),
                    self.truncation + 1
                )));
            }
            if d.probs().iter().any(|p| *p <= 0.0) {
                return Err(Error::domain(
                    "custom init must be strictly positive".to_string(),
                ));
            }
        }
        Ok(())
    }
}

/// One recorded diagnostic row: iteration index, total absolute error,
/// binomial log-likelihood, and fidelity against the reference when present.
/// Serializes as the array `[iteration, epsilon, log_likelihood, fidelity|null]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub iteration: usize,
    pub epsilon: f64,
    pub log_likelihood: f64,
    pub fidelity: Option<f64>,
}

impl Serialize for TracePoint {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        (
            self.iteration,
            self.epsilon,
            self.log_likelihood,
            self.fidelity,
        )
            .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for TracePoint {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let (iteration, epsilon, log_likelihood, fidelity) =
            <(usize, f64, f64, Option<f64>)>::deserialize(deserializer)?;
        Ok(Self {
            iteration,
            epsilon,
            log_likelihood,
            fidelity,
        })
    }
}

/// Output of [`reconstruct`].
#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    /// Final iterate.
    pub rho: PhotonDistribution,
    /// Number of EM updates applied.
    pub iterations_run: usize,
    /// Total absolute error of the final iterate.
    pub final_epsilon: f64,
    /// True when the tolerance fired before the iteration cap.
    pub converged: bool,
    pub trace: Vec<TracePoint>,
}

#[derive(Serialize, Deserialize)]
struct ResultJson {
    rho: Vec<f64>,
    iterations: usize,
    epsilon: f64,
    converged: bool,
    trace: Vec<TracePoint>,
}

impl ReconstructionResult {
    /// JSON interchange form:
    /// `{ "rho": [...], "iterations": int, "epsilon": real, "converged": bool, "trace": [...] }`.
    pub fn to_json_string(&self) -> Result<String> {
        let mirror = ResultJson {
            rho: self.rho.probs().to_vec(),
            iterations: self.iterations_run,
            epsilon: self.final_epsilon,
            converged: self.converged,
            trace: self.trace.clone(),
        };
        Ok(serde_json::to_string_pretty(&mirror)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let mirror: ResultJson = serde_json::from_str(text)?;
        if mirror.rho.len() < 2 {
            return Err(Error::domain(
                "reconstruction JSON needs at least two rho entries".to_string(),
            ));
        }
        let sum: f64 = mirror.rho.iter().sum();
        if sum.is_nan() || sum <= 0.0 {
            return Err(Error::domain(
                "reconstruction JSON rho has no mass".to_string(),
            ));
        }
        Ok(Self {
            rho: PhotonDistribution::new(mirror.rho, "reconstruction")?,
            iterations_run: mirror.iterations,
            final_epsilon: mirror.epsilon,
            converged: mirror.converged,
            trace: mirror.trace,
        })
    }
}

/// Applies one EM update to `rho` for data frequencies `f`, weighting all
/// efficiency rows equally, and renormalizes the result.
///
/// Entries that are zero stay exactly zero. Fails with a degeneracy error if
/// the iterate assigns zero probability to an outcome that was observed.
pub fn em_step(
    rho: &PhotonDistribution,
    a: &ResponseMatrix,
    f: &[f64],
) -> Result<PhotonDistribution> {
    if rho.len() != a.cols() {
        return Err(Error::shape(format!(
            "distribution has {} entries, response matrix expects {}",
            rho.len(),
            a.cols()
        )));
    }
    if f.len() != a.rows() {
        return Err(Error::shape(format!(
            "frequency vector has {} entries, response matrix has {} rows",
            f.len(),
            a.rows()
        )));
    }
    let k = a.rows();
    let weights = vec![1.0 / k as f64; k];
    let mut next = vec![0.0; rho.len()];
    update_into(rho.probs(), a, f, &weights, &mut next)?;
    PhotonDistribution::new(next, rho.label().to_string())
}

/// Total absolute error `sum_nu |f_nu - p_nu[rho]|`.
pub fn total_error(rho: &PhotonDistribution, a: &ResponseMatrix, f: &[f64]) -> f64 {
    assert_eq!(rho.len(), a.cols(), "distribution/matrix shape mismatch");
    assert_eq!(f.len(), a.rows(), "frequency/matrix shape mismatch");
    (0..a.rows())
        .map(|nu| (f[nu] - dot(a.row(nu), rho.probs())).abs())
        .sum()
}

/// Binomial log-likelihood of the dataset under `rho`, constants dropped:
/// `sum_nu n0_nu ln p_nu + (n_nu - n0_nu) ln(1 - p_nu)`.
///
/// Returns `f64::NEG_INFINITY` when the model assigns zero probability to an
/// observed outcome.
pub fn log_likelihood(rho: &PhotonDistribution, data: &OnOffDataset) -> f64 {
    let mut acc = 0.0;
    for (nu, &eta) in data.grid().etas().iter().enumerate() {
        let base = 1.0 - eta;
        let mut power = 1.0;
        let mut p = 0.0;
        let mut q = 0.0;
        for rho_n in rho.probs() {
            p += power * rho_n;
            q += (1.0 - power) * rho_n;
            power *= base;
        }
        // Rounding can push the click mass a ulp past 1 when p underflows.
        let q = q.min(1.0);
        let n0 = data.no_click_counts()[nu];
        let n1 = data.total_runs()[nu] - n0;
        if n0 > 0 {
            if p == 0.0 {
                return f64::NEG_INFINITY;
            }
            // ln p = ln(1 - q) with the click mass q summed directly, which
            // keeps full relative precision when p is close to one.
            acc += n0 as f64 * (-q).ln_1p();
        }
        if n1 > 0 {
            if q == 0.0 {
                return f64::NEG_INFINITY;
            }
            acc += n1 as f64 * q.ln();
        }
    }
    acc
}

/// Runs the EM iteration on a dataset until the total absolute error drops
/// to the tolerance or the iteration cap fires.
///
/// Rows are weighted by their share of the total run count, which reduces to
/// equal weights for equal-run datasets. When `reference` is supplied, every
/// trace point carries the fidelity of the iterate against it.
pub fn reconstruct(
    data: &OnOffDataset,
    config: &EmConfig,
    reference: Option<&PhotonDistribution>,
) -> Result<ReconstructionResult> {
    config.validate()?;
    let n_states = config.truncation + 1;
    if let Some(r) = reference {
        if r.len() != n_states {
            return Err(Error::shape(format!(
                "reference has {} entries, reconstruction uses {}",
                r.len(),
                n_states
            )));
        }
    }
    let k = data.len();
    let tolerance = config.resolved_tolerance(k);
    let a = response_matrix(data.grid(), config.truncation)?;
    let f = data.frequencies();
    let total: u64 = data.total_runs().iter().sum();
    let weights: Vec<f64> = data
        .total_runs()
        .iter()
        .map(|&n| n as f64 / total as f64)
        .collect();

    let mut probs = match &config.init {
        EmInit::Uniform => vec![1.0 / n_states as f64; n_states],
        EmInit::Custom(d) => d.probs().to_vec(),
    };
    let mut next = vec![0.0; n_states];
    let mut trace = Vec::new();
    let mut iteration = 0usize;

    let (final_epsilon, converged) = loop {
        let epsilon = total_error_slice(&probs, &a, &f);
        let stopping = epsilon <= tolerance || iteration >= config.max_iterations;
        if iteration.is_multiple_of(config.trace_stride) || stopping {
            let current = PhotonDistribution::new(probs.clone(), "iterate")?;
            trace.push(TracePoint {
                iteration,
                epsilon,
                log_likelihood: log_likelihood(&current, data),
                fidelity: reference.map(|r| fidelity(&current, r)).transpose()?,
            });
        }
        if stopping {
            break (epsilon, epsilon <= tolerance);
        }
        update_into(&probs, &a, &f, &weights, &mut next)?;
        std::mem::swap(&mut probs, &mut next);
        iteration += 1;
    };

    Ok(ReconstructionResult {
        rho: PhotonDistribution::new(probs, "reconstruction")?,
        iterations_run: iteration,
        final_epsilon,
        converged,
        trace,
    })
}

/// Heuristic default truncation for a dataset: a crude coherent-state moment
/// estimate from the most efficient informative row, then the smallest window
/// holding all but `1e-8` of a Poisson with that mean. Floor 8.
pub fn default_truncation(data: &OnOffDataset) -> usize {
    let f = data.frequencies();
    let mut mean_estimate = 0.0;
    for (nu, &eta) in data.grid().etas().iter().enumerate().rev() {
        if eta > 0.0 && f[nu] > 0.0 {
            mean_estimate = -f[nu].ln() / eta;
            break;
        }
    }
    let mut n = 8;
    while n < MAX_TRUNCATION && poisson_tail_above(mean_estimate, n) >= 1e-8 {
        n += 1;
    }
    n
}

fn poisson_tail_above(mean: f64, truncation: usize) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    let mut term = (-mean).exp();
    let mut cumulative = term;
    for n in 0..truncation {
        term *= mean / (n + 1) as f64;
        cumulative += term;
    }
    (1.0 - cumulative).max(0.0)
}

/// No-click and click mass of `probs` under one response row, both summed
/// directly so each retains full relative precision.
fn split_probabilities(row: &[f64], probs: &[f64]) -> (f64, f64) {
    let mut p = 0.0;
    let mut q = 0.0;
    for (a, rho) in row.iter().zip(probs) {
        p += a * rho;
        q += (1.0 - a) * rho;
    }
    (p, q)
}

fn total_error_slice(probs: &[f64], a: &ResponseMatrix, f: &[f64]) -> f64 {
    (0..a.rows())
        .map(|nu| (f[nu] - dot(a.row(nu), probs)).abs())
        .sum()
}

fn update_into(
    probs: &[f64],
    a: &ResponseMatrix,
    f: &[f64],
    weights: &[f64],
    next: &mut [f64],
) -> Result<()> {
    next.fill(0.0);
    for nu in 0..a.rows() {
        let row = a.row(nu);
        let (p, q) = split_probabilities(row, probs);
        let f_nu = f[nu];
        let g_nu = 1.0 - f_nu;
        if p == 0.0 && f_nu > 0.0 {
            return Err(Error::Degenerate(format!(
                "iterate predicts no-click probability 0 at row {nu} but no-clicks were observed"
            )));
        }
        if q == 0.0 && g_nu > 0.0 {
            return Err(Error::Degenerate(format!(
                "iterate predicts click probability 0 at row {nu} but clicks were observed"
            )));
        }
        let no_click_ratio = if f_nu > 0.0 {
            f_nu / p.max(PROB_FLOOR)
        } else {
            0.0
        };
        let click_ratio = if g_nu > 0.0 {
            g_nu / q.max(PROB_FLOOR)
        } else {
            0.0
        };
        let w = weights[nu];
        for (n, acc) in next.iter_mut().enumerate() {
            let a_nn = row[n];
            *acc += w * (a_nn * no_click_ratio + (1.0 - a_nn) * click_ratio);
        }
    }
    let mut sum = 0.0;
    for (acc, rho) in next.iter_mut().zip(probs) {
        *acc *= rho;
        sum += *acc;
    }
    if sum.is_nan() || sum <= 0.0 || !sum.is_finite() {
        return Err(Error::Degenerate(format!(
            "EM update produced an unnormalizable iterate (sum {sum})"
        )));
    }
    for acc in next.iter_mut() {
        *acc /= sum;
    }
    Ok(())
}
