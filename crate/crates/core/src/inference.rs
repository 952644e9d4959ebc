//! Post-reconstruction statistics: confidence intervals on the reconstructed
//! elements, the Klyshko nonclassicality parameter with first-order error
//! propagation, and reduced chi-square fits across model families.

use serde::{Deserialize, Serialize};

use crate::distributions::{
    make_coherent, make_fock, make_mixture, make_multithermal, make_thermal, ModelSpec,
    PhotonDistribution,
};
use crate::em::ReconstructionResult;
use crate::error::{Error, Result};
use crate::forward::{response_matrix, OnOffDataset};

/// Response entries below this floor are excluded from the uncertainty
/// average: `A[nu][n] = (1 - eta_nu)^n` vanishes for large `n` at high
/// efficiency and would otherwise blow up the estimate.
pub const RESPONSE_FLOOR: f64 = 1e-6;

/// Per-element confidence intervals on a reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyReport {
    /// `delta_rho[n]`: average over retained efficiency rows of
    /// `|p_nu - f_nu| / A[nu][n]`.
    pub delta_rho: Vec<f64>,
    /// Number of `(nu, n)` pairs dropped by the response floor, per `n`.
    pub excluded_terms: Vec<usize>,
}

/// Confidence intervals from the residuals of a stopped reconstruction:
/// `delta_rho[n] = mean_nu |p_nu - f_nu| / A[nu][n]` over rows with
/// `A[nu][n] >= RESPONSE_FLOOR`.
///
/// On exactly fitted data every residual, and hence every interval, is zero.
/// Fails if some Fock index retains no rows at all.
pub fn confidence_intervals(
    result: &ReconstructionResult,
    data: &OnOffDataset,
) -> Result<UncertaintyReport> {
    let rho = &result.rho;
    let a = response_matrix(data.grid(), rho.truncation())?;
    let p = a.no_click_probabilities(rho)?;
    let f = data.frequencies();
    let n_states = rho.len();
    let mut delta_rho = vec![0.0; n_states];
    let mut excluded_terms = vec![0usize; n_states];
    for n in 0..n_states {
        let mut sum = 0.0;
        let mut retained = 0usize;
        for nu in 0..a.rows() {
            let response = a.row(nu)[n];
            if response < RESPONSE_FLOOR {
                excluded_terms[n] += 1;
            } else {
                sum += (p[nu] - f[nu]).abs() / response;
                retained += 1;
            }
        }
        if retained == 0 {
            return Err(Error::UndefinedUncertainty { index: n });
        }
        delta_rho[n] = sum / retained as f64;
    }
    Ok(UncertaintyReport {
        delta_rho,
        excluded_terms,
    })
}

/// Klyshko parameter `K_n = (n + 1) p_{n-1} p_{n+1} / (n p_n^2)`.
///
/// Values below one witness nonclassical light; every Poissonian state gives
/// exactly one and a single-mode thermal state gives `(n + 1) / n`.
pub fn klyshko(d: &PhotonDistribution, n: usize) -> Result<f64> {
    if n < 1 || n + 1 > d.truncation() {
        return Err(Error::domain(format!(
            "klyshko index {n} outside 1..={}",
            d.truncation().saturating_sub(1)
        )));
    }
    let p = d.probs();
    if p[n] == 0.0 {
        return Err(Error::domain(format!(
            "klyshko undefined at n = {n}: probability is zero"
        )));
    }
    Ok((n as f64 + 1.0) * p[n - 1] * p[n + 1] / (n as f64 * p[n] * p[n]))
}

/// Klyshko parameter with first-order error propagation, treating the
/// `delta_rho` entries as independent:
/// `dK/K = sqrt((d_{n-1}/p_{n-1})^2 + (d_{n+1}/p_{n+1})^2 + 4 (d_n/p_n)^2)`.
pub fn klyshko_with_uncertainty(
    d: &PhotonDistribution,
    delta: &UncertaintyReport,
    n: usize,
) -> Result<(f64, f64)> {
    let value = klyshko(d, n)?;
    if delta.delta_rho.len() != d.len() {
        return Err(Error::shape(format!(
            "uncertainty report covers {} entries, distribution has {}",
            delta.delta_rho.len(),
            d.len()
        )));
    }
    let p = d.probs();
    if p[n - 1] == 0.0 || p[n + 1] == 0.0 {
        return Err(Error::domain(format!(
            "klyshko uncertainty undefined at n = {n}: a neighboring probability is zero"
        )));
    }
    let r = |i: usize| delta.delta_rho[i] / p[i];
    let relative = (r(n - 1).powi(2) + r(n + 1).powi(2) + 4.0 * r(n).powi(2)).sqrt();
    Ok((value, value * relative))
}

/// Model families available to the chi-square fitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    Fock,
    Coherent,
    Thermal,
    Multithermal,
}

impl std::str::FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fock" => Ok(ModelFamily::Fock),
            "coherent" => Ok(ModelFamily::Coherent),
            "thermal" => Ok(ModelFamily::Thermal),
            "multithermal" => Ok(ModelFamily::Multithermal),
            other => Err(Error::domain(format!("unknown model family \"{other}\""))),
        }
    }
}

impl std::fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            ModelFamily::Fock => "fock",
            ModelFamily::Coherent => "coherent",
            ModelFamily::Thermal => "thermal",
            ModelFamily::Multithermal => "multithermal",
        };
        f.write_str(name)
    }
}

/// Search specification for [`fit_model`]: a continuous bracket for the mean
/// (refined by golden-section search) and an explicit list of mode counts for
/// the multithermal scan. Mode counts are scanned, never interpolated.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitGrid {
    pub mu_bracket: (f64, f64),
    pub modes: Vec<u64>,
}

impl Default for FitGrid {
    fn default() -> Self {
        Self {
            mu_bracket: (1e-6, 10.0),
            modes: vec![1],
        }
    }
}

/// Search specification for [`poisson_background_fit`]: the base-family grid,
/// an explicit list of mixture weights for the base component, and a bracket
/// for the Poissonian background mean.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackgroundGrid {
    pub base: FitGrid,
    pub weights: Vec<f64>,
    pub background_mu_bracket: (f64, f64),
}

impl Default for BackgroundGrid {
    fn default() -> Self {
        Self {
            base: FitGrid::default(),
            weights: (0..=20).map(|i| i as f64 / 20.0).collect(),
            background_mu_bracket: (1e-6, 10.0),
        }
    }
}

/// Outcome of a chi-square fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitSummary {
    /// Best-fit model, rebuildable via [`ModelSpec::build`].
    pub model: ModelSpec,
    /// Named parameter values of the best fit.
    pub fitted_parameters: Vec<(String, f64)>,
    /// Minimized `chi^2 / degrees_of_freedom`.
    pub reduced_chi_square: f64,
    pub degrees_of_freedom: usize,
}

/// Fits a model family to a reconstructed distribution by minimizing
/// `chi^2 = sum_n (rho_n - model_n)^2 / delta_rho_n^2` over the search grid.
///
/// The mean is optimized continuously (coarse scan plus golden-section
/// refinement) for each scanned mode count; ties take the earliest grid
/// point. Fitted-parameter counting: one for the mean (or Fock level), plus
/// one when more than one mode count is scanned.
pub fn fit_model(
    rho: &PhotonDistribution,
    delta: &UncertaintyReport,
    family: ModelFamily,
    grid: &FitGrid,
) -> Result<FitSummary> {
    validate_chi_square_inputs(rho, delta)?;
    let truncation = rho.truncation();
    let chi2 = |model: &PhotonDistribution| chi_square(rho, delta, model);

    let (spec, params, chi_min) = match family {
        ModelFamily::Fock => {
            let mut best: Option<(usize, f64)> = None;
            for n0 in 0..=truncation {
                let value = chi2(&make_fock(n0, truncation)?);
                if best.is_none_or(|(_, c)| value < c) {
                    best = Some((n0, value));
                }
            }
            let (n0, chi_min) = best.expect("nonempty scan");
            (
                ModelSpec::Fock { n0, truncation },
                vec![("n0".to_string(), n0 as f64)],
                chi_min,
            )
        }
        ModelFamily::Coherent => {
            let (mu, chi_min) = minimize_mean(grid.mu_bracket, |mu| {
                Ok(chi2(&make_coherent(mu, truncation)?))
            })?;
            (
                ModelSpec::Coherent {
                    mean: mu,
                    truncation,
                },
                vec![("mean".to_string(), mu)],
                chi_min,
            )
        }
        ModelFamily::Thermal => {
            let (mu, chi_min) = minimize_mean(grid.mu_bracket, |mu| {
                Ok(chi2(&make_thermal(mu, truncation)?))
            })?;
            (
                ModelSpec::Thermal {
                    mean: mu,
                    truncation,
                },
                vec![("mean".to_string(), mu)],
                chi_min,
            )
        }
        ModelFamily::Multithermal => {
            if grid.modes.is_empty() {
                return Err(Error::IllPosedFit(
                    "multithermal fit needs a nonempty mode list".to_string(),
                ));
            }
            let mut best: Option<(u64, f64, f64)> = None;
            for &modes in &grid.modes {
                let (mu, value) = minimize_mean(grid.mu_bracket, |mu| {
                    Ok(chi2(&make_multithermal(mu, modes, truncation)?))
                })?;
                if best.is_none_or(|(_, _, c)| value < c) {
                    best = Some((modes, mu, value));
                }
            }
            let (modes, mu, chi_min) = best.expect("nonempty scan");
            let mut params = vec![("mean".to_string(), mu)];
            if grid.modes.len() > 1 {
                params.push(("modes".to_string(), modes as f64));
            }
            (
                ModelSpec::Multithermal {
                    mean: mu,
                    modes,
                    truncation,
                },
                params,
                chi_min,
            )
        }
    };

    summarize(rho.len(), spec, params, params_count(family, grid), chi_min)
}

fn params_count(family: ModelFamily, grid: &FitGrid) -> usize {
    match family {
        ModelFamily::Multithermal if grid.modes.len() > 1 => 2,
        _ => 1,
    }
}

/// Fits `w * base_family(mu) + (1 - w) * coherent(background_mu)`, scanning
/// the mixture weight over an explicit list and optimizing the two means by
/// coordinate descent. `w = 1` reduces exactly to [`fit_model`] on the base
/// family.
pub fn poisson_background_fit(
    rho: &PhotonDistribution,
    delta: &UncertaintyReport,
    base_family: ModelFamily,
    grid: &BackgroundGrid,
) -> Result<FitSummary> {
    validate_chi_square_inputs(rho, delta)?;
    if grid.weights.is_empty() {
        return Err(Error::IllPosedFit(
            "background fit needs mixture weights".to_string(),
        ));
    }
    if grid
        .weights
        .iter()
        .any(|w| !w.is_finite() || !(0.0..=1.0).contains(w))
    {
        return Err(Error::domain(
            "mixture weights must lie in [0, 1]".to_string(),
        ));
    }
    let truncation = rho.truncation();
    let base_modes: &[u64] = match base_family {
        ModelFamily::Multithermal => {
            if grid.base.modes.is_empty() {
                return Err(Error::IllPosedFit(
                    "multithermal background fit needs a nonempty mode list".to_string(),
                ));
            }
            &grid.base.modes
        }
        _ => &[1],
    };

    let build_base = |mu: f64, modes: u64| -> Result<PhotonDistribution> {
        match base_family {
            ModelFamily::Fock => make_fock(mu.round() as usize, truncation),
            ModelFamily::Coherent => make_coherent(mu, truncation),
            ModelFamily::Thermal => make_thermal(mu, truncation),
            ModelFamily::Multithermal => make_multithermal(mu, modes, truncation),
        }
    };
    let mixture_chi2 = |w: f64, base: &PhotonDistribution, bg_mu: f64| -> Result<f64> {
        let bg = make_coherent(bg_mu, truncation)?;
        let mixed = make_mixture(&[(w, base.clone()), (1.0 - w, bg)])?;
        Ok(chi_square(rho, delta, &mixed))
    };

    struct Best {
        chi: f64,
        weight: f64,
        mean: f64,
        modes: u64,
        background_mean: f64,
    }
    let mut best: Option<Best> = None;
    let bg_mid = 0.5 * (grid.background_mu_bracket.0 + grid.background_mu_bracket.1);
    for &modes in base_modes {
        for &w in &grid.weights {
            let mut mu_bg = bg_mid;
            let mut mu_base = f64::NAN;
            let mut value = f64::INFINITY;
            // Two coordinate sweeps are enough for these smooth one-bump
            // objectives; a third is a cheap safety margin.
            for _ in 0..3 {
                let (mu, _) = minimize_mean(grid.base.mu_bracket, |mu| {
                    mixture_chi2(w, &build_base(mu, modes)?, mu_bg)
                })?;
                mu_base = mu;
                let base = build_base(mu_base, modes)?;
                let (bg, chi) =
                    minimize_mean(grid.background_mu_bracket, |mu| mixture_chi2(w, &base, mu))?;
                mu_bg = bg;
                value = chi;
            }
            if best.as_ref().is_none_or(|b| value < b.chi) {
                best = Some(Best {
                    chi: value,
                    weight: w,
                    mean: mu_base,
                    modes,
                    background_mean: mu_bg,
                });
            }
        }
    }
    let best = best.expect("nonempty scan");

    let base_spec = match base_family {
        ModelFamily::Fock => ModelSpec::Fock {
            n0: best.mean.round() as usize,
            truncation,
        },
        ModelFamily::Coherent => ModelSpec::Coherent {
            mean: best.mean,
            truncation,
        },
        ModelFamily::Thermal => ModelSpec::Thermal {
            mean: best.mean,
            truncation,
        },
        ModelFamily::Multithermal => ModelSpec::Multithermal {
            mean: best.mean,
            modes: best.modes,
            truncation,
        },
    };
    let spec = ModelSpec::Mixture {
        components: vec![
            (best.weight, base_spec),
            (
                1.0 - best.weight,
                ModelSpec::Coherent {
                    mean: best.background_mean,
                    truncation,
                },
            ),
        ],
    };
    let mut params = vec![
        ("weight".to_string(), best.weight),
        ("mean".to_string(), best.mean),
        ("background_mean".to_string(), best.background_mean),
    ];
    let mut n_params = params_count(base_family, &grid.base) + 2;
    if base_family == ModelFamily::Multithermal && grid.base.modes.len() > 1 {
        params.insert(2, ("modes".to_string(), best.modes as f64));
    }
    if grid.weights.len() == 1 {
        n_params -= 1;
    }
    summarize(rho.len(), spec, params, n_params, best.chi)
}

fn summarize(
    n_bins: usize,
    model: ModelSpec,
    fitted_parameters: Vec<(String, f64)>,
    n_params: usize,
    chi_min: f64,
) -> Result<FitSummary> {
    if n_bins <= n_params {
        return Err(Error::IllPosedFit(format!(
            "{n_bins} bins cannot constrain {n_params} parameters"
        )));
    }
    let degrees_of_freedom = n_bins - n_params;
    Ok(FitSummary {
        model,
        fitted_parameters,
        reduced_chi_square: chi_min / degrees_of_freedom as f64,
        degrees_of_freedom,
    })
}

fn validate_chi_square_inputs(rho: &PhotonDistribution, delta: &UncertaintyReport) -> Result<()> {
    if delta.delta_rho.len() != rho.len() {
        return Err(Error::shape(format!(
            "uncertainty report covers {} entries, distribution has {}",
            delta.delta_rho.len(),
            rho.len()
        )));
    }
    if delta.delta_rho.iter().any(|d| d.is_nan() || *d <= 0.0) {
        return Err(Error::IllPosedFit(
            "chi-square weights need strictly positive uncertainties".to_string(),
        ));
    }
    Ok(())
}

fn chi_square(
    rho: &PhotonDistribution,
    delta: &UncertaintyReport,
    model: &PhotonDistribution,
) -> f64 {
    rho.probs()
        .iter()
        .zip(model.probs())
        .zip(&delta.delta_rho)
        .map(|((r, m), d)| {
            let z = (r - m) / d;
            z * z
        })
        .sum()
}

/// Minimizes a smooth objective over a bracket: 64-point coarse scan to
/// locate the basin, then golden-section refinement. Deterministic; ties in
/// the coarse scan keep the earliest point.
fn minimize_mean(
    bracket: (f64, f64),
    mut objective: impl FnMut(f64) -> Result<f64>,
) -> Result<(f64, f64)> {
    let (lo, hi) = bracket;
    if !(lo.is_finite() && hi.is_finite()) || lo < 0.0 || hi <= lo {
        return Err(Error::domain(format!("invalid mean bracket ({lo}, {hi})")));
    }
    const COARSE: usize = 64;
    let step = (hi - lo) / (COARSE - 1) as f64;
    let mut best_idx = 0;
    let mut best_val = f64::INFINITY;
    for i in 0..COARSE {
        let value = objective(lo + i as f64 * step)?;
        if value < best_val {
            best_val = value;
            best_idx = i;
        }
    }
    let mut a = lo + best_idx.saturating_sub(1) as f64 * step;
    let mut b = lo + (best_idx + 1).min(COARSE - 1) as f64 * step;

    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = objective(c)?;
    let mut fd = objective(d)?;
    for _ in 0..80 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = objective(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = objective(d)?;
        }
        if (b - a).abs() <= 1e-12 * (1.0 + a.abs() + b.abs()) {
            break;
        }
    }
    let x = 0.5 * (a + b);
    let value = objective(x)?;
    Ok((x, value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{make_coherent, make_fock, make_mixture, make_thermal};
    use crate::em::{reconstruct, EmConfig};
    use crate::forward::{simulate_dataset, EfficiencyGrid, OnOffDataset};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn heralded(truncation: usize) -> PhotonDistribution {
        let rho1 = (1.0 - 0.027) / (1.0 + 0.0185);
        let rho2 = 0.0185 * rho1;
        make_mixture(&[
            (0.027, make_fock(0, truncation).unwrap()),
            (rho1, make_fock(1, truncation).unwrap()),
            (rho2, make_fock(2, truncation).unwrap()),
        ])
        .unwrap()
    }

    fn uniform_delta(len: usize, value: f64) -> UncertaintyReport {
        UncertaintyReport {
            delta_rho: vec![value; len],
            excluded_terms: vec![0; len],
        }
    }

    #[test]
    fn confidence_intervals_vanish_on_exactly_fitted_data() {
        // Dyadic setup: the reconstruction target reproduces f exactly.
        let truth = PhotonDistribution::new(vec![0.5, 0.25, 0.25], "truth").unwrap();
        let g = EfficiencyGrid::new(vec![0.25, 0.5, 0.75]).unwrap();
        let a = response_matrix(&g, 2).unwrap();
        let p = a.no_click_probabilities(&truth).unwrap();
        let runs = 1u64 << 20;
        let counts: Vec<u64> = p.iter().map(|x| (x * runs as f64).round() as u64).collect();
        let data = OnOffDataset::new(g, counts, vec![runs; 3]).unwrap();
        let result = crate::em::ReconstructionResult {
            rho: truth,
            iterations_run: 0,
            final_epsilon: 0.0,
            converged: true,
            trace: vec![],
        };
        let report = confidence_intervals(&result, &data).unwrap();
        assert_eq!(report.delta_rho, vec![0.0, 0.0, 0.0]);
        assert_eq!(report.excluded_terms, vec![0, 0, 0]);
    }

    #[test]
    fn confidence_intervals_divide_by_the_response() {
        // Single row, eta = 0.5, |p - f| = 0.01: delta_rho[2] = 0.01 / 0.25.
        let rho = PhotonDistribution::new(vec![0.6, 0.3, 0.1], "rho").unwrap();
        let g = EfficiencyGrid::new(vec![0.5]).unwrap();
        let a = response_matrix(&g, 2).unwrap();
        let p = a.no_click_probabilities(&rho).unwrap()[0];
        let f_target = p - 0.01;
        let runs = 1u64 << 26;
        let counts = vec![(f_target * runs as f64).round() as u64];
        let data = OnOffDataset::new(g, counts, vec![runs]).unwrap();
        let result = crate::em::ReconstructionResult {
            rho,
            iterations_run: 0,
            final_epsilon: 0.01,
            converged: false,
            trace: vec![],
        };
        let report = confidence_intervals(&result, &data).unwrap();
        assert_abs_diff_eq!(report.delta_rho[0], 0.01, epsilon = 1e-6);
        assert_abs_diff_eq!(report.delta_rho[1], 0.02, epsilon = 1e-6);
        assert_abs_diff_eq!(report.delta_rho[2], 0.04, epsilon = 1e-6);
    }

    #[test]
    fn confidence_intervals_do_not_depend_on_row_order() {
        // The average over efficiency rows is order-free; recompute it with
        // the rows reversed and compare.
        let truth = make_coherent(0.4, 5).unwrap();
        let g = EfficiencyGrid::equally_spaced(8, 0.8).unwrap();
        let data = simulate_dataset(&truth, &g, &[100_000; 8], 41).unwrap();
        let mut config = EmConfig::new(5);
        config.max_iterations = 20_000;
        let result = reconstruct(&data, &config, None).unwrap();
        let report = confidence_intervals(&result, &data).unwrap();

        let a = response_matrix(&g, 5).unwrap();
        let p = a.no_click_probabilities(&result.rho).unwrap();
        let f = data.frequencies();
        for n in 0..=5 {
            let reversed: f64 = (0..8)
                .rev()
                .map(|nu| (p[nu] - f[nu]).abs() / a.row(nu)[n])
                .sum::<f64>()
                / 8.0;
            assert_abs_diff_eq!(report.delta_rho[n], reversed, epsilon = 1e-12);
        }
    }

    #[test]
    fn confidence_intervals_report_floor_exclusions() {
        // eta = 0.9995 drives (1 - eta)^n below the floor from n = 2 on.
        let rho = PhotonDistribution::new(vec![0.7, 0.1, 0.1, 0.05, 0.05], "rho").unwrap();
        let g = EfficiencyGrid::new(vec![0.3, 0.9995]).unwrap();
        let data = OnOffDataset::new(g, vec![900, 700], vec![1000, 1000]).unwrap();
        let result = crate::em::ReconstructionResult {
            rho,
            iterations_run: 0,
            final_epsilon: 0.1,
            converged: false,
            trace: vec![],
        };
        let report = confidence_intervals(&result, &data).unwrap();
        assert_eq!(report.excluded_terms, vec![0, 0, 1, 1, 1]);
        assert!(report.delta_rho.iter().all(|d| d.is_finite() && *d >= 0.0));
    }

    #[test]
    fn confidence_intervals_error_when_every_row_is_excluded() {
        let rho = PhotonDistribution::new(vec![0.5, 0.3, 0.1, 0.05, 0.03, 0.02], "rho").unwrap();
        let g = EfficiencyGrid::new(vec![0.9995]).unwrap();
        let data = OnOffDataset::new(g, vec![600], vec![1000]).unwrap();
        let result = crate::em::ReconstructionResult {
            rho,
            iterations_run: 0,
            final_epsilon: 0.1,
            converged: false,
            trace: vec![],
        };
        match confidence_intervals(&result, &data) {
            Err(Error::UndefinedUncertainty { index }) => assert_eq!(index, 2),
            other => panic!("expected undefined uncertainty, got {other:?}"),
        }
    }

    #[test]
    fn klyshko_is_one_for_poisson_states() {
        for mu in [0.1, 0.5, 1.0, 2.0] {
            let d = make_coherent(mu, 30).unwrap();
            for n in 1..=5 {
                assert_abs_diff_eq!(klyshko(&d, n).unwrap(), 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn klyshko_is_super_poissonian_for_thermal_states() {
        for mu in [0.1, 0.5, 0.74, 1.0, 2.0] {
            let d = make_thermal(mu, 30).unwrap();
            for n in 1..=5 {
                let expected = (n as f64 + 1.0) / n as f64;
                assert_abs_diff_eq!(klyshko(&d, n).unwrap(), expected, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn klyshko_flags_the_heralded_state_as_nonclassical() {
        let d = heralded(6);
        let k1 = klyshko(&d, 1).unwrap();
        assert_abs_diff_eq!(k1, 0.0010457158273381294, epsilon = 1e-12);
        assert!(k1 < 1.0);
    }

    #[test]
    fn klyshko_rejects_bad_indices() {
        let d = make_coherent(0.5, 4).unwrap();
        assert!(klyshko(&d, 0).is_err());
        assert!(klyshko(&d, 4).is_err());
        let f1 = make_fock(1, 4).unwrap();
        assert!(klyshko(&f1, 2).is_err());
    }

    #[test]
    fn klyshko_uncertainty_matches_the_propagation_formula() {
        let d = PhotonDistribution::new(vec![0.5, 0.25, 0.25], "d").unwrap();
        let delta = uniform_delta(3, 0.01);
        let (value, unc) = klyshko_with_uncertainty(&d, &delta, 1).unwrap();
        assert_abs_diff_eq!(value, 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(unc, 0.36660605559646725, epsilon = 1e-12);

        let zero = uniform_delta(3, 0.0);
        // delta = 0 is rejected by the chi-square fitter but fine here.
        let (_, unc0) = klyshko_with_uncertainty(&d, &zero, 1).unwrap();
        assert_eq!(unc0, 0.0);

        let doubled = uniform_delta(3, 0.02);
        let (_, unc2) = klyshko_with_uncertainty(&d, &doubled, 1).unwrap();
        assert_abs_diff_eq!(unc2, 2.0 * unc, epsilon = 1e-12);
    }

    #[test]
    fn fit_recovers_an_exact_grid_model() {
        let truth = make_multithermal(0.74, 2, 15).unwrap();
        let delta = uniform_delta(16, 1e-3);
        let grid = FitGrid {
            mu_bracket: (1e-4, 3.0),
            modes: vec![1, 2, 3, 5, 10],
        };
        let fit = fit_model(&truth, &delta, ModelFamily::Multithermal, &grid).unwrap();
        assert!(
            fit.reduced_chi_square < 1e-12,
            "chi2 {}",
            fit.reduced_chi_square
        );
        match fit.model {
            ModelSpec::Multithermal { mean, modes, .. } => {
                assert_eq!(modes, 2);
                assert_abs_diff_eq!(mean, 0.74, epsilon = 1e-4);
            }
            other => panic!("unexpected model {other:?}"),
        }
        assert_eq!(fit.degrees_of_freedom, 16 - 2);
    }

    #[test]
    fn fit_rejects_zero_uncertainties() {
        let truth = make_coherent(0.3, 6).unwrap();
        let delta = uniform_delta(7, 0.0);
        assert!(matches!(
            fit_model(&truth, &delta, ModelFamily::Coherent, &FitGrid::default()),
            Err(Error::IllPosedFit(_))
        ));
    }

    #[test]
    fn fit_recovers_coherent_mean_end_to_end() {
        let truth = make_coherent(0.02, 8).unwrap();
        let g = EfficiencyGrid::equally_spaced(15, 0.66).unwrap();
        let data = simulate_dataset(&truth, &g, &[1_000_000; 15], 51).unwrap();
        let mut config = EmConfig::new(8);
        config.max_iterations = 100_000;
        let result = reconstruct(&data, &config, None).unwrap();
        let delta = confidence_intervals(&result, &data).unwrap();
        let grid = FitGrid {
            mu_bracket: (1e-6, 0.5),
            modes: vec![1],
        };
        let fit = fit_model(&result.rho, &delta, ModelFamily::Coherent, &grid).unwrap();
        let mu = fit.fitted_parameters[0].1;
        assert!(
            (mu - 0.02).abs() < 0.002,
            "fitted mean {mu} not within 10% of 0.02"
        );
    }

    #[test]
    fn background_fit_with_unit_weight_reduces_to_the_pure_fit() {
        let truth = make_multithermal(0.6, 3, 12).unwrap();
        let delta = uniform_delta(13, 1e-3);
        let base = FitGrid {
            mu_bracket: (1e-4, 2.0),
            modes: vec![2, 3, 4],
        };
        let pure = fit_model(&truth, &delta, ModelFamily::Multithermal, &base).unwrap();
        let grid = BackgroundGrid {
            base,
            weights: vec![1.0],
            background_mu_bracket: (1e-4, 2.0),
        };
        let mixed =
            poisson_background_fit(&truth, &delta, ModelFamily::Multithermal, &grid).unwrap();
        assert_abs_diff_eq!(
            mixed.reduced_chi_square * mixed.degrees_of_freedom as f64,
            pure.reduced_chi_square * pure.degrees_of_freedom as f64,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            mixed.fitted_parameters[1].1,
            pure.fitted_parameters[0].1,
            epsilon = 1e-9
        );
    }

    #[test]
    fn background_fit_beats_the_pure_fit_on_mixture_truth() {
        // The mixture family is degenerate in (weight, modes, means): several
        // parameter combinations reproduce the same distribution at this
        // noise level, so the test checks what is identifiable - the fitted
        // distribution and the nested-model chi-square ordering - rather
        // than the weight itself.
        let base = make_multithermal(0.5, 2, 12).unwrap();
        let background = make_coherent(0.3, 12).unwrap();
        let truth = make_mixture(&[(0.5, base), (0.5, background)]).unwrap();
        let g = EfficiencyGrid::equally_spaced(15, 0.66).unwrap();
        let data = simulate_dataset(&truth, &g, &[1_000_000; 15], 99).unwrap();
        let mut config = EmConfig::new(12);
        config.max_iterations = 100_000;
        let result = reconstruct(&data, &config, None).unwrap();
        let delta = confidence_intervals(&result, &data).unwrap();

        let base_grid = FitGrid {
            mu_bracket: (1e-4, 2.0),
            modes: vec![1, 2, 3, 5, 10],
        };
        let pure = fit_model(&result.rho, &delta, ModelFamily::Multithermal, &base_grid).unwrap();
        let grid = BackgroundGrid {
            base: base_grid,
            weights: (0..=20).map(|i| i as f64 / 20.0).collect(),
            background_mu_bracket: (1e-4, 2.0),
        };
        let mixed =
            poisson_background_fit(&result.rho, &delta, ModelFamily::Multithermal, &grid).unwrap();
        assert!(mixed.reduced_chi_square <= pure.reduced_chi_square + 1e-12);
        assert!(
            mixed.reduced_chi_square < 0.5 * pure.reduced_chi_square,
            "background admixture should clearly improve the fit: {} vs {}",
            mixed.reduced_chi_square,
            pure.reduced_chi_square
        );
        let w = mixed.fitted_parameters[0].1;
        assert!((0.0..=1.0).contains(&w));
        let recovered = mixed.model.build().unwrap();
        let fid = crate::distributions::fidelity(&recovered, &truth).unwrap();
        assert!(fid >= 0.999, "fitted mixture distribution fidelity {fid}");
    }

    proptest! {
        #[test]
        fn heralded_contamination_below_five_percent_stays_nonclassical(
            rho0 in 1e-6f64..0.05,
            ratio2 in 1e-6f64..0.05,
        ) {
            let rho1 = (1.0 - rho0) / (1.0 + ratio2);
            let rho2 = ratio2 * rho1;
            let d = make_mixture(&[
                (rho0, make_fock(0, 4).unwrap()),
                (rho1, make_fock(1, 4).unwrap()),
                (rho2, make_fock(2, 4).unwrap()),
            ]).unwrap();
            prop_assert!(klyshko(&d, 1).unwrap() < 1.0);
        }

        #[test]
        fn klyshko_scale_invariance_under_renormalization(mu in 0.05f64..2.0, n in 1usize..5) {
            // Truncation changes the normalization but not the ratio.
            let tight = make_coherent(mu, 8).unwrap();
            let wide = make_coherent(mu, 30).unwrap();
            let a = klyshko(&tight, n).unwrap();
            let b = klyshko(&wide, n).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}
