//! Closed-form photon-number distributions on a truncated Fock basis.
//!
//! These serve three roles: ground truth for the Monte Carlo simulator, fit
//! hypotheses for model comparison, and references for fidelity tracking
//! during reconstruction. All constructors evaluate the untruncated law on
//! `0..=truncation` and renormalize, recording how much tail mass was cut.
//!
//! The multithermal family assumes `modes` equally populated thermal modes
//! (mean `mu / modes` each); unequal populations are not modeled.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the unit-sum invariant accepted by [`PhotonDistribution::new`].
pub const NORM_TOL: f64 = 1e-9;

/// Tolerance on mixture weights summing to one.
pub const MIXTURE_WEIGHT_TOL: f64 = 1e-12;

/// Truncated tail mass above which [`PhotonDistribution::has_truncation_warning`] fires.
pub const TAIL_WARN_THRESHOLD: f64 = 1e-6;

/// A normalized photon-number distribution `probs[n] = Pr(n photons)` for
/// `n = 0..=truncation`.
///
/// Invariants: every entry is finite and nonnegative, the entries sum to one
/// (construction renormalizes), and the vector is never empty. Deserialized
/// values pass through the same validation as [`PhotonDistribution::new`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution")]
pub struct PhotonDistribution {
    label: String,
    probs: Vec<f64>,
    #[serde(skip)]
    truncated_tail: f64,
}

#[derive(Deserialize)]
struct RawDistribution {
    label: String,
    probs: Vec<f64>,
}

impl TryFrom<RawDistribution> for PhotonDistribution {
    type Error = Error;

    fn try_from(raw: RawDistribution) -> Result<Self> {
        PhotonDistribution::new(raw.probs, raw.label)
    }
}

impl PhotonDistribution {
    /// Builds a distribution from explicit probabilities.
    ///
    /// The entries must be nonnegative and sum to one within [`NORM_TOL`];
    /// the residual is removed by renormalization.
    pub fn new(probs: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::domain("distribution needs at least one entry"));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::domain(
                "probabilities must be finite and nonnegative",
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > NORM_TOL {
            return Err(Error::domain(format!(
                "probabilities sum to {sum}, expected 1 within {NORM_TOL}"
            )));
        }
        Ok(Self::renormalized(probs, label.into(), 0.0))
    }

    /// Internal constructor: divides by the current sum and records the tail
    /// mass lost to truncation. `weights` must be nonnegative with a positive sum.
    fn renormalized(mut weights: Vec<f64>, label: String, truncated_tail: f64) -> Self {
        let sum: f64 = weights.iter().sum();
        debug_assert!(sum > 0.0);
        for w in &mut weights {
            *w /= sum;
        }
        Self {
            label,
            probs: weights,
            truncated_tail,
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Number of Fock-basis entries, `truncation + 1`; never zero.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    /// Highest photon number carried by this distribution.
    pub fn truncation(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Mean photon number `sum_n n * probs[n]`.
    pub fn mean_photon_number(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(n, p)| n as f64 * p)
            .sum()
    }

    /// Mass of the untruncated law beyond `truncation`, removed at construction.
    pub fn truncated_tail_mass(&self) -> f64 {
        self.truncated_tail
    }

    /// True when the truncation cut more than [`TAIL_WARN_THRESHOLD`] of mass.
    pub fn has_truncation_warning(&self) -> bool {
        self.truncated_tail > TAIL_WARN_THRESHOLD
    }
}

/// Declarative description of a model family, used for dataset simulation and
/// chi-square fitting. Serializes with a `"family"` JSON discriminator.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum ModelSpec {
    Fock {
        n0: usize,
        truncation: usize,
    },
    Coherent {
        mean: f64,
        truncation: usize,
    },
    Thermal {
        mean: f64,
        truncation: usize,
    },
    Multithermal {
        mean: f64,
        modes: u64,
        truncation: usize,
    },
    Mixture {
        components: Vec<(f64, ModelSpec)>,
    },
}

impl ModelSpec {
    /// Truncation of the distribution this spec builds. For mixtures this is
    /// taken from the first component; [`ModelSpec::build`] verifies they all agree.
    pub fn truncation(&self) -> usize {
        match self {
            ModelSpec::Fock { truncation, .. }
            | ModelSpec::Coherent { truncation, .. }
            | ModelSpec::Thermal { truncation, .. }
            | ModelSpec::Multithermal { truncation, .. } => *truncation,
            ModelSpec::Mixture { components } => components
                .first()
                .map(|(_, spec)| spec.truncation())
                .unwrap_or(0),
        }
    }

    /// Evaluates the spec into a concrete distribution.
    pub fn build(&self) -> Result<PhotonDistribution> {
        match self {
            ModelSpec::Fock { n0, truncation } => make_fock(*n0, *truncation),
            ModelSpec::Coherent { mean, truncation } => make_coherent(*mean, *truncation),
            ModelSpec::Thermal { mean, truncation } => make_thermal(*mean, *truncation),
            ModelSpec::Multithermal {
                mean,
                modes,
                truncation,
            } => make_multithermal(*mean, *modes, *truncation),
            ModelSpec::Mixture { components } => {
                let built = components
                    .iter()
                    .map(|(w, spec)| Ok((*w, spec.build()?)))
                    .collect::<Result<Vec<_>>>()?;
                make_mixture(&built)
            }
        }
    }

    /// Short human-readable description, used as the distribution label.
    pub fn describe(&self) -> String {
        match self {
            ModelSpec::Fock { n0, .. } => format!("fock(n0={n0})"),
            ModelSpec::Coherent { mean, .. } => format!("coherent(mean={mean})"),
            ModelSpec::Thermal { mean, .. } => format!("thermal(mean={mean})"),
            ModelSpec::Multithermal { mean, modes, .. } => {
                format!("multithermal(mean={mean}, modes={modes})")
            }
            ModelSpec::Mixture { components } => {
                let parts: Vec<String> = components
                    .iter()
                    .map(|(w, spec)| format!("{w}*{}", spec.describe()))
                    .collect();
                format!("mixture({})", parts.join(" + "))
            }
        }
    }
}

/// Fock state `|n0>`: all probability on a single photon number.
pub fn make_fock(n0: usize, truncation: usize) -> Result<PhotonDistribution> {
    if n0 > truncation {
        return Err(Error::domain(format!(
            "fock level {n0} exceeds truncation {truncation}"
        )));
    }
    let mut probs = vec![0.0; truncation + 1];
    probs[n0] = 1.0;
    Ok(PhotonDistribution {
        label: format!("fock(n0={n0})"),
        probs,
        truncated_tail: 0.0,
    })
}

/// Coherent state with mean photon number `mean`: Poisson statistics
/// `probs[n] ~ exp(-mean) mean^n / n!`, renormalized over `0..=truncation`.
pub fn make_coherent(mean: f64, truncation: usize) -> Result<PhotonDistribution> {
    if !mean.is_finite() || mean < 0.0 {
        return Err(Error::domain(format!(
            "coherent mean must be finite and nonnegative, got {mean}"
        )));
    }
    let log_probs = poisson_log_probs(mean, truncation);
    from_log_probs(log_probs, format!("coherent(mean={mean})"))
}

/// Single-mode thermal state: `probs[n] ~ mean^n / (1 + mean)^(n + 1)`.
pub fn make_thermal(mean: f64, truncation: usize) -> Result<PhotonDistribution> {
    make_multithermal(mean, 1, truncation).map(|d| PhotonDistribution {
        label: format!("thermal(mean={mean})"),
        ..d
    })
}

/// `modes` equally populated thermal modes with total mean `mean`:
/// `probs[n] ~ C(n + modes - 1, n) x^n / (1 + x)^(n + modes)` with `x = mean / modes`.
///
/// Interpolates between single-mode thermal (`modes = 1`) and Poisson
/// statistics (`modes -> inf`). Evaluated in log space so large mode counts
/// do not overflow the binomial coefficient.
pub fn make_multithermal(mean: f64, modes: u64, truncation: usize) -> Result<PhotonDistribution> {
    if !mean.is_finite() || mean < 0.0 {
        return Err(Error::domain(format!(
            "multithermal mean must be finite and nonnegative, got {mean}"
        )));
    }
    if modes < 1 {
        return Err(Error::domain("multithermal needs at least one mode"));
    }
    let m = modes as f64;
    let x = mean / m;
    // log p[0] = -modes * ln(1 + x); successive ratios are
    // p[n+1]/p[n] = (n + modes)/(n + 1) * x/(1 + x).
    let log_ratio_base = x.ln() - x.ln_1p();
    let mut log_probs = Vec::with_capacity(truncation + 1);
    log_probs.push(-m * x.ln_1p());
    for n in 0..truncation {
        let step = ((n as f64 + m) / (n as f64 + 1.0)).ln() + log_ratio_base;
        log_probs.push(log_probs[n] + step);
    }
    from_log_probs(
        log_probs,
        format!("multithermal(mean={mean}, modes={modes})"),
    )
}

/// Convex combination of distributions sharing a truncation.
pub fn make_mixture(components: &[(f64, PhotonDistribution)]) -> Result<PhotonDistribution> {
    if components.is_empty() {
        return Err(Error::domain("mixture needs at least one component"));
    }
    let len = components[0].1.len();
    if components.iter().any(|(_, d)| d.len() != len) {
        return Err(Error::shape(
            "mixture components must share a truncation".to_string(),
        ));
    }
    if components.iter().any(|(w, _)| !w.is_finite() || *w < 0.0) {
        return Err(Error::domain(
            "mixture weights must be finite and nonnegative",
        ));
    }
    let weight_sum: f64 = components.iter().map(|(w, _)| w).sum();
    if (weight_sum - 1.0).abs() > MIXTURE_WEIGHT_TOL {
        return Err(Error::domain(format!(
            "mixture weights sum to {weight_sum}, expected 1 within {MIXTURE_WEIGHT_TOL}"
        )));
    }
    let mut probs = vec![0.0; len];
    for (w, d) in components {
        for (acc, p) in probs.iter_mut().zip(d.probs()) {
            *acc += w * p;
        }
    }
    let tail = components
        .iter()
        .map(|(w, d)| w * d.truncated_tail_mass())
        .sum();
    let parts: Vec<String> = components
        .iter()
        .map(|(w, d)| format!("{w}*{}", d.label()))
        .collect();
    Ok(PhotonDistribution::renormalized(
        probs,
        format!("mixture({})", parts.join(" + ")),
        tail,
    ))
}

/// Bhattacharyya overlap `sum_n sqrt(a_n b_n)`; 1 iff the distributions match.
pub fn fidelity(a: &PhotonDistribution, b: &PhotonDistribution) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape(format!(
            "fidelity needs equal truncations, got {} and {}",
            a.truncation(),
            b.truncation()
        )));
    }
    let g: f64 = a
        .probs()
        .iter()
        .zip(b.probs())
        .map(|(x, y)| (x * y).sqrt())
        .sum();
    Ok(g.clamp(0.0, 1.0))
}

fn poisson_log_probs(mean: f64, truncation: usize) -> Vec<f64> {
    // log p[n+1] = log p[n] + ln(mean) - ln(n + 1); mean = 0 degenerates to
    // the vacuum because ln(0) = -inf propagates down the recursion.
    let log_mean = mean.ln();
    let mut log_probs = Vec::with_capacity(truncation + 1);
    log_probs.push(-mean);
    for n in 0..truncation {
        log_probs.push(log_probs[n] + log_mean - ((n + 1) as f64).ln());
    }
    log_probs
}

fn from_log_probs(log_probs: Vec<f64>, label: String) -> Result<PhotonDistribution> {
    let weights: Vec<f64> = log_probs.iter().map(|lp| lp.exp()).collect();
    let sum: f64 = weights.iter().sum();
    if sum.is_nan() || sum <= 0.0 {
        return Err(Error::domain(
            "distribution underflows on this truncation window".to_string(),
        ));
    }
    let tail = (1.0 - sum).max(0.0);
    Ok(PhotonDistribution::renormalized(weights, label, tail))
}
