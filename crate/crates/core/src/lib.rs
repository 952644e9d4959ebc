//! Reconstruction of photon-number statistics from on/off detector data.
//!
//! Geiger-mode detectors only distinguish "no photons seen" from "one or
//! more seen", yet the no-click probability at quantum efficiency `eta`,
//! `p0(eta) = sum_n (1 - eta)^n rho[n]`, is linear in the photon-number
//! distribution `rho`. Measuring no-click frequencies at several
//! efficiencies therefore pins down `rho` on a truncated Fock basis. This
//! crate provides:
//!
//! - [`distributions`]: closed-form Fock, coherent, thermal, multithermal
//!   and mixture states used as simulation truths, fit hypotheses, and
//!   fidelity references;
//! - [`forward`]: the detector response model, a seeded binomial Monte Carlo
//!   simulator, and the dataset CSV format;
//! - [`em`]: the expectation-maximization inversion with a convergence
//!   trace;
//! - [`inference`]: confidence intervals on the reconstructed elements, the
//!   Klyshko nonclassicality parameter, and reduced chi-square model fits.
//!
//! ```
//! use photonstat::{
//!     confidence_intervals, fidelity, make_coherent, reconstruct, simulate_dataset,
//!     EfficiencyGrid, EmConfig,
//! };
//!
//! let truth = make_coherent(0.02, 8)?;
//! let grid = EfficiencyGrid::equally_spaced(15, 0.66)?;
//! let data = simulate_dataset(&truth, &grid, &[100_000; 15], 7)?;
//! let mut config = EmConfig::new(8);
//! config.max_iterations = 20_000;
//! let result = reconstruct(&data, &config, Some(&truth))?;
//! assert!(fidelity(&result.rho, &truth)? > 0.99);
//! let report = confidence_intervals(&result, &data)?;
//! assert_eq!(report.delta_rho.len(), 9);
//! # Ok::<(), photonstat::Error>(())
//! ```

pub mod distributions;
pub mod em;
pub mod error;
pub mod forward;
pub mod inference;

pub use distributions::{
    fidelity, make_coherent, make_fock, make_mixture, make_multithermal, make_thermal, ModelSpec,
    PhotonDistribution,
};
pub use em::{
    default_truncation, em_step, log_likelihood, reconstruct, total_error, EmConfig, EmInit,
    ReconstructionResult, TracePoint, MAX_TRUNCATION,
};
pub use error::{Error, Result};
pub use forward::{
    load_dataset, no_click_probability, parse_csv, response_matrix, save_dataset, simulate_dataset,
    to_csv_string, EfficiencyGrid, OnOffDataset, ResponseMatrix,
};
pub use inference::{
    confidence_intervals, fit_model, klyshko, klyshko_with_uncertainty, poisson_background_fit,
    BackgroundGrid, FitGrid, FitSummary, ModelFamily, UncertaintyReport,
};
