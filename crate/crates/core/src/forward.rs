//! Detection model for on/off (Geiger-mode) detectors.
//!
//! A detector with quantum efficiency `eta` misses every photon of an
//! `n`-photon state with probability `(1 - eta)^n`, so the no-click
//! probability of a state with photon distribution `rho` is
//! `p0(eta) = sum_n (1 - eta)^n rho[n]`. Collecting no-click frequencies at
//! several efficiencies turns this into a linear inversion problem; this
//! module provides the response matrix, a binomial Monte Carlo simulator for
//! synthetic datasets, and the dataset CSV format.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution as _};
use serde::{Deserialize, Serialize};

use crate::distributions::PhotonDistribution;
use crate::error::{Error, Result};

/// The quantum efficiencies `eta_1 < eta_2 < ... < eta_K` at which on/off
/// statistics are collected. Entries live in `[0, 1]`; `eta = 0` is allowed
/// (an uninformative all-ones response row the solver tolerates).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid")]
pub struct EfficiencyGrid {
    etas: Vec<f64>,
}

#[derive(Deserialize)]
struct RawGrid {
    etas: Vec<f64>,
}

impl TryFrom<RawGrid> for EfficiencyGrid {
    type Error = Error;

    fn try_from(raw: RawGrid) -> Result<Self> {
        EfficiencyGrid::new(raw.etas)
    }
}

impl EfficiencyGrid {
    /// Validates that the efficiencies are finite, within `[0, 1]`, and
    /// strictly increasing.
    pub fn new(etas: Vec<f64>) -> Result<Self> {
        if etas.is_empty() {
            return Err(Error::domain("efficiency grid needs at least one value"));
        }
        for eta in &etas {
            if !eta.is_finite() || !(0.0..=1.0).contains(eta) {
                return Err(Error::domain(format!(
                    "quantum efficiency {eta} outside [0, 1]"
                )));
            }
        }
        if etas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::domain(
                "efficiencies must be strictly increasing".to_string(),
            ));
        }
        Ok(Self { etas })
    }

    /// `k` efficiencies equally spaced in `(0, eta_max]`: `nu * eta_max / k`.
    pub fn equally_spaced(k: usize, eta_max: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::domain("grid size must be at least 1"));
        }
        Self::new((1..=k).map(|nu| nu as f64 * eta_max / k as f64).collect())
    }

    /// `k >= 2` efficiencies equally spaced on the closed interval
    /// `[eta_min, eta_max]`.
    pub fn linspace(k: usize, eta_min: f64, eta_max: f64) -> Result<Self> {
        if k < 2 {
            return Err(Error::domain("linspace grid needs at least two values"));
        }
        let step = (eta_max - eta_min) / (k - 1) as f64;
        Self::new((0..k).map(|i| eta_min + i as f64 * step).collect())
    }

    pub fn etas(&self) -> &[f64] {
        &self.etas
    }

    /// Number of efficiency settings `K`.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.etas.len()
    }
}

/// Response matrix `A[nu][n] = (1 - eta_nu)^n` mapping a photon distribution
/// to no-click probabilities (row-major, `K` rows, `truncation + 1` columns).
#[derive(Debug, Clone)]
pub struct ResponseMatrix {
    grid: EfficiencyGrid,
    truncation: usize,
    entries: Vec<f64>,
}

/// Builds the response matrix of a grid on the Fock window `0..=truncation`.
pub fn response_matrix(grid: &EfficiencyGrid, truncation: usize) -> Result<ResponseMatrix> {
    if truncation < 1 {
        return Err(Error::domain("truncation must be at least 1"));
    }
    let cols = truncation + 1;
    let mut entries = Vec::with_capacity(grid.len() * cols);
    for &eta in grid.etas() {
        // Running product keeps rows bit-identical with no_click_probability.
        let base = 1.0 - eta;
        let mut power = 1.0;
        for _ in 0..cols {
            entries.push(power);
            power *= base;
        }
    }
    Ok(ResponseMatrix {
        grid: grid.clone(),
        truncation,
        entries,
    })
}

impl ResponseMatrix {
    pub fn grid(&self) -> &EfficiencyGrid {
        &self.grid
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    /// Number of efficiency rows.
    pub fn rows(&self) -> usize {
        self.grid.len()
    }

    /// Number of Fock columns, `truncation + 1`.
    pub fn cols(&self) -> usize {
        self.truncation + 1
    }

    pub fn row(&self, nu: usize) -> &[f64] {
        let cols = self.cols();
        &self.entries[nu * cols..(nu + 1) * cols]
    }

    /// No-click probabilities `A * probs` for every efficiency row.
    pub fn no_click_probabilities(&self, d: &PhotonDistribution) -> Result<Vec<f64>> {
        if d.len() != self.cols() {
            return Err(Error::shape(format!(
                "distribution has {} entries, response matrix expects {}",
                d.len(),
                self.cols()
            )));
        }
        Ok((0..self.rows())
            .map(|nu| dot(self.row(nu), d.probs()))
            .collect())
    }
}

pub(crate) fn dot(row: &[f64], probs: &[f64]) -> f64 {
    row.iter().zip(probs).map(|(a, p)| a * p).sum()
}

/// No-click probability `p0(eta) = sum_n (1 - eta)^n probs[n]`.
pub fn no_click_probability(d: &PhotonDistribution, eta: f64) -> Result<f64> {
    if !eta.is_finite() || !(0.0..=1.0).contains(&eta) {
        return Err(Error::domain(format!(
            "quantum efficiency {eta} outside [0, 1]"
        )));
    }
    let base = 1.0 - eta;
    let mut power = 1.0;
    let mut p0 = 0.0;
    for p in d.probs() {
        p0 += power * p;
        power *= base;
    }
    Ok(p0.clamp(0.0, 1.0))
}

/// On/off counts collected over an efficiency grid: `no_click_counts[nu]`
/// no-click events out of `total_runs[nu]` runs at `eta_nu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDataset")]
pub struct OnOffDataset {
    grid: EfficiencyGrid,
    no_click_counts: Vec<u64>,
    total_runs: Vec<u64>,
}

#[derive(Deserialize)]
struct RawDataset {
    grid: EfficiencyGrid,
    no_click_counts: Vec<u64>,
    total_runs: Vec<u64>,
}

impl TryFrom<RawDataset> for OnOffDataset {
    type Error = Error;

    fn try_from(raw: RawDataset) -> Result<Self> {
        OnOffDataset::new(raw.grid, raw.no_click_counts, raw.total_runs)
    }
}

impl OnOffDataset {
    pub fn new(
        grid: EfficiencyGrid,
        no_click_counts: Vec<u64>,
        total_runs: Vec<u64>,
    ) -> Result<Self> {
        if no_click_counts.len() != grid.len() || total_runs.len() != grid.len() {
            return Err(Error::shape(format!(
                "dataset vectors must match the grid size {}",
                grid.len()
            )));
        }
        for (nu, (&n0, &n)) in no_click_counts.iter().zip(&total_runs).enumerate() {
            if n == 0 {
                return Err(Error::domain(format!(
                    "row {nu}: total runs must be positive"
                )));
            }
            if n0 > n {
                return Err(Error::domain(format!(
                    "row {nu}: no-click count {n0} exceeds total runs {n}"
                )));
            }
        }
        Ok(Self {
            grid,
            no_click_counts,
            total_runs,
        })
    }

    pub fn grid(&self) -> &EfficiencyGrid {
        &self.grid
    }

    pub fn no_click_counts(&self) -> &[u64] {
        &self.no_click_counts
    }

    pub fn total_runs(&self) -> &[u64] {
        &self.total_runs
    }

    /// Number of efficiency rows `K`.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    /// No-click frequencies `f_nu = n0_nu / n_nu`.
    pub fn frequencies(&self) -> Vec<f64> {
        self.no_click_counts
            .iter()
            .zip(&self.total_runs)
            .map(|(&n0, &n)| n0 as f64 / n as f64)
            .collect()
    }
}

/// Draws a synthetic dataset: `no_click_counts[nu] ~ Binomial(runs[nu], p0(eta_nu))`.
///
/// Each efficiency row samples from an independent substream of a counter
/// RNG keyed by `(seed, nu)`, so outputs are reproducible and independent of
/// evaluation order.
pub fn simulate_dataset(
    d: &PhotonDistribution,
    grid: &EfficiencyGrid,
    runs_per_eta: &[u64],
    seed: u64,
) -> Result<OnOffDataset> {
    if runs_per_eta.len() != grid.len() {
        return Err(Error::shape(format!(
            "runs_per_eta has {} entries, grid has {}",
            runs_per_eta.len(),
            grid.len()
        )));
    }
    if runs_per_eta.contains(&0) {
        return Err(Error::domain("every efficiency needs at least one run"));
    }
    let mut no_click_counts = Vec::with_capacity(grid.len());
    for (nu, (&eta, &runs)) in grid.etas().iter().zip(runs_per_eta).enumerate() {
        let p0 = no_click_probability(d, eta)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(nu as u64);
        let binomial = Binomial::new(runs, p0)
            .map_err(|e| Error::domain(format!("binomial sampling: {e}")))?;
        no_click_counts.push(binomial.sample(&mut rng));
    }
    OnOffDataset::new(grid.clone(), no_click_counts, runs_per_eta.to_vec())
}

const CSV_HEADER: &str = "eta,no_click,total";

/// Renders a dataset in the CSV interchange format (`eta,no_click,total`).
pub fn to_csv_string(d: &OnOffDataset) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for ((eta, n0), n) in d
        .grid()
        .etas()
        .iter()
        .zip(d.no_click_counts())
        .zip(d.total_runs())
    {
        // `{}` prints the shortest f64 form that parses back to the same bits.
        writeln!(out, "{eta},{n0},{n}").expect("string write");
    }
    out
}

/// Parses the CSV interchange format. Lines starting with `#` and blank
/// lines are skipped; errors carry the 1-based line number.
pub fn parse_csv(text: &str) -> Result<OnOffDataset> {
    let mut etas = Vec::new();
    let mut no_click_counts = Vec::new();
    let mut total_runs = Vec::new();
    let mut saw_header = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if !saw_header {
            if trimmed != CSV_HEADER {
                return Err(Error::Parse {
                    line,
                    message: format!("expected header \"{CSV_HEADER}\", got \"{trimmed}\""),
                });
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line,
                message: format!("expected 3 comma-separated fields, got {}", fields.len()),
            });
        }
        let eta: f64 = fields[0].trim().parse().map_err(|_| Error::Parse {
            line,
            message: format!("invalid efficiency \"{}\"", fields[0]),
        })?;
        if !eta.is_finite() || !(0.0..=1.0).contains(&eta) {
            return Err(Error::Parse {
                line,
                message: format!("efficiency {eta} outside [0, 1]"),
            });
        }
        if let Some(&prev) = etas.last() {
            if eta <= prev {
                return Err(Error::Parse {
                    line,
                    message: format!(
                        "efficiencies must be strictly increasing ({prev} then {eta})"
                    ),
                });
            }
        }
        let n0: u64 = fields[1].trim().parse().map_err(|_| Error::Parse {
            line,
            message: format!("invalid no-click count \"{}\"", fields[1]),
        })?;
        let n: u64 = fields[2].trim().parse().map_err(|_| Error::Parse {
            line,
            message: format!("invalid total-run count \"{}\"", fields[2]),
        })?;
        if n == 0 {
            return Err(Error::Parse {
                line,
                message: "total runs must be positive".to_string(),
            });
        }
        if n0 > n {
            return Err(Error::Parse {
                line,
                message: format!("no-click count {n0} exceeds total runs {n}"),
            });
        }
        etas.push(eta);
        no_click_counts.push(n0);
        total_runs.push(n);
    }
    if !saw_header {
        return Err(Error::Parse {
            line: 1,
            message: format!("missing header \"{CSV_HEADER}\""),
        });
    }
    if etas.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "dataset has no rows".to_string(),
        });
    }
    OnOffDataset::new(EfficiencyGrid::new(etas)?, no_click_counts, total_runs)
}

/// Writes a dataset to `path` in the CSV interchange format.
pub fn save_dataset(d: &OnOffDataset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_csv_string(d))?;
    Ok(())
}

/// Loads a dataset written by [`save_dataset`]; `load(save(d)) == d` exactly.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<OnOffDataset> {
    parse_csv(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{make_coherent, make_fock, make_multithermal};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn no_click_probability_boundary_cases() {
        let d = make_coherent(0.7, 10).unwrap();
        assert_abs_diff_eq!(no_click_probability(&d, 0.0).unwrap(), 1.0, epsilon = 1e-12);
        let vacuum = make_fock(0, 4).unwrap();
        for eta in [0.0, 0.3, 1.0] {
            assert_eq!(no_click_probability(&vacuum, eta).unwrap(), 1.0);
        }
        assert!(no_click_probability(&d, 1.2).is_err());
        assert!(no_click_probability(&d, -0.1).is_err());
    }

    #[test]
    fn no_click_probability_matches_coherent_oracle() {
        // Analytic no-click law for a coherent state: exp(-eta * mu).
        let d = make_coherent(0.02, 8).unwrap();
        let p = no_click_probability(&d, 0.5).unwrap();
        assert_abs_diff_eq!(p, 0.9900498337491681, epsilon = 1e-9);
    }

    #[test]
    fn no_click_probability_matches_multithermal_oracle() {
        // Analytic no-click law per mode: (1 + eta * mu / M)^(-M).
        let d = make_multithermal(0.74, 2, 40).unwrap();
        let p = no_click_probability(&d, 0.2).unwrap();
        assert_abs_diff_eq!(p, 0.8669447825529095, epsilon = 1e-9);
    }

    #[test]
    fn response_matrix_boundary_grid() {
        let grid = EfficiencyGrid::new(vec![0.0, 1.0]).unwrap();
        let a = response_matrix(&grid, 1).unwrap();
        assert_eq!(a.row(0), &[1.0, 1.0]);
        assert_eq!(a.row(1), &[1.0, 0.0]);
    }

    #[test]
    fn response_matrix_powers_of_half() {
        let grid = EfficiencyGrid::new(vec![0.5]).unwrap();
        let a = response_matrix(&grid, 3).unwrap();
        assert_eq!(a.row(0), &[1.0, 0.5, 0.25, 0.125]);
    }

    #[test]
    fn response_matrix_agrees_with_no_click_probability() {
        // Self-consistency on random (grid, distribution) pairs.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let truncation = rng.random_range(1..12usize);
            let k = rng.random_range(1..8usize);
            let mut etas: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..1.0)).collect();
            etas.sort_by(|a, b| a.partial_cmp(b).unwrap());
            etas.dedup();
            let grid = EfficiencyGrid::new(etas).unwrap();
            let mut probs: Vec<f64> = (0..=truncation)
                .map(|_| rng.random_range(0.0..1.0))
                .collect();
            let sum: f64 = probs.iter().sum();
            probs.iter_mut().for_each(|p| *p /= sum);
            let d = PhotonDistribution::new(probs, "random").unwrap();
            let a = response_matrix(&grid, truncation).unwrap();
            let via_matrix = a.no_click_probabilities(&d).unwrap();
            for (nu, &eta) in grid.etas().iter().enumerate() {
                let direct = no_click_probability(&d, eta).unwrap();
                assert!((via_matrix[nu] - direct).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn grid_validation() {
        assert!(EfficiencyGrid::new(vec![]).is_err());
        assert!(EfficiencyGrid::new(vec![0.2, 0.2]).is_err());
        assert!(EfficiencyGrid::new(vec![0.4, 0.2]).is_err());
        assert!(EfficiencyGrid::new(vec![-0.1, 0.2]).is_err());
        assert!(EfficiencyGrid::new(vec![0.5, 1.1]).is_err());
        let g = EfficiencyGrid::equally_spaced(15, 0.66).unwrap();
        assert_eq!(g.len(), 15);
        assert_abs_diff_eq!(g.etas()[14], 0.66, epsilon = 1e-15);
        assert_abs_diff_eq!(g.etas()[0], 0.044, epsilon = 1e-15);
    }

    #[test]
    fn simulate_vacuum_never_clicks() {
        let vacuum = make_fock(0, 3).unwrap();
        let grid = EfficiencyGrid::equally_spaced(5, 0.9).unwrap();
        let data = simulate_dataset(&vacuum, &grid, &[1000; 5], 42).unwrap();
        assert_eq!(data.no_click_counts(), data.total_runs());
    }

    #[test]
    fn simulate_single_photon_at_unit_efficiency_always_clicks() {
        let fock1 = make_fock(1, 3).unwrap();
        let grid = EfficiencyGrid::new(vec![1.0]).unwrap();
        let data = simulate_dataset(&fock1, &grid, &[1000], 7).unwrap();
        assert_eq!(data.no_click_counts(), &[0]);
    }

    #[test]
    fn simulate_is_deterministic_for_a_seed() {
        let d = make_coherent(0.4, 10).unwrap();
        let grid = EfficiencyGrid::equally_spaced(6, 0.6).unwrap();
        let a = simulate_dataset(&d, &grid, &[10_000; 6], 5).unwrap();
        let b = simulate_dataset(&d, &grid, &[10_000; 6], 5).unwrap();
        assert_eq!(a, b);
        let c = simulate_dataset(&d, &grid, &[10_000; 6], 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn simulate_coherent_frequencies_track_the_analytic_law() {
        // Binomial sampling oracle: each f_nu within 5 sigma of exp(-eta mu).
        let mu = 0.02;
        let d = make_coherent(mu, 8).unwrap();
        let grid = EfficiencyGrid::equally_spaced(15, 0.66).unwrap();
        let runs = 1_000_000u64;
        let data = simulate_dataset(&d, &grid, &[runs; 15], 2024).unwrap();
        for (nu, f) in data.frequencies().iter().enumerate() {
            let p = (-grid.etas()[nu] * mu).exp();
            let sigma = (p * (1.0 - p) / runs as f64).sqrt();
            assert!(
                (f - p).abs() < 5.0 * sigma,
                "row {nu}: |{f} - {p}| >= 5 sigma ({sigma})"
            );
        }
    }

    #[test]
    fn simulate_mean_frequency_over_many_seeds_is_unbiased() {
        let d = make_coherent(0.5, 15).unwrap();
        let grid = EfficiencyGrid::new(vec![0.2, 0.5, 0.8]).unwrap();
        let runs = 10_000u64;
        let seeds = 200u64;
        let mut mean_f = [0.0; 3];
        for seed in 0..seeds {
            let data = simulate_dataset(&d, &grid, &[runs; 3], seed).unwrap();
            for (acc, f) in mean_f.iter_mut().zip(data.frequencies()) {
                *acc += f / seeds as f64;
            }
        }
        for (nu, &eta) in grid.etas().iter().enumerate() {
            let p = no_click_probability(&d, eta).unwrap();
            let bound = 4.0 * (p * (1.0 - p) / (seeds * runs) as f64).sqrt();
            assert!(
                (mean_f[nu] - p).abs() < bound,
                "row {nu}: |{} - {p}| >= {bound}",
                mean_f[nu]
            );
        }
    }

    #[test]
    fn csv_round_trip_and_format() {
        let grid = EfficiencyGrid::new(vec![0.2, 0.4]).unwrap();
        let data =
            OnOffDataset::new(grid, vec![9_800_000, 9_500_000], vec![10_000_000; 2]).unwrap();
        let text = to_csv_string(&data);
        assert!(text.starts_with("eta,no_click,total\n"));
        assert!(text.contains("0.2,9800000,10000000"));
        let back = parse_csv(&text).unwrap();
        assert_eq!(back, data);

        // Trailing zeros in the efficiency field parse to the same value.
        let padded = parse_csv("eta,no_click,total\n0.20,9800000,10000000\n").unwrap();
        assert_eq!(padded.grid().etas(), &[0.2]);
        assert_eq!(padded.no_click_counts(), &[9_800_000]);
    }

    #[test]
    fn csv_accepts_comments_and_blank_lines() {
        let text = "# synthetic run\n\neta,no_click,total\n# mid comment\n0.2,98,100\n0.5,90,100\n";
        let data = parse_csv(text).unwrap();
        assert_eq!(data.len(), 2);
        assert_eq!(data.no_click_counts(), &[98, 90]);
    }

    #[test]
    fn csv_errors_name_the_line() {
        let bad_counts = "eta,no_click,total\n0.2,101,100\n";
        match parse_csv(bad_counts) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        let bad_eta = "eta,no_click,total\n0.2,98,100\n1.5,90,100\n";
        match parse_csv(bad_eta) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        let bad_header = "efficiency,no_click,total\n";
        assert!(matches!(
            parse_csv(bad_header),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn dataset_json_mirrors_fields_and_validates() {
        let grid = EfficiencyGrid::new(vec![0.1, 0.3]).unwrap();
        let data = OnOffDataset::new(grid, vec![90, 70], vec![100, 100]).unwrap();
        let json = serde_json::to_string(&data).unwrap();
        assert_eq!(
            json,
            "{\"grid\":{\"etas\":[0.1,0.3]},\"no_click_counts\":[90,70],\"total_runs\":[100,100]}"
        );
        let back: OnOffDataset = serde_json::from_str(&json).unwrap();
        assert_eq!(back, data);

        let bad_counts: std::result::Result<OnOffDataset, _> = serde_json::from_str(
            "{\"grid\":{\"etas\":[0.1,0.3]},\"no_click_counts\":[200,70],\"total_runs\":[100,100]}",
        );
        assert!(bad_counts.is_err());
        let bad_grid: std::result::Result<OnOffDataset, _> = serde_json::from_str(
            "{\"grid\":{\"etas\":[0.3,0.1]},\"no_click_counts\":[90,70],\"total_runs\":[100,100]}",
        );
        assert!(bad_grid.is_err());
    }

    #[test]
    fn save_load_round_trip_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.csv");
        let d = make_coherent(0.3, 6).unwrap();
        let grid = EfficiencyGrid::equally_spaced(4, 0.5).unwrap();
        let data = simulate_dataset(&d, &grid, &[5000; 4], 9).unwrap();
        save_dataset(&data, &path).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), data);
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_identity(
            counts in proptest::collection::vec((0u64..1_000_000, 1u64..1_000_000), 1..20)
        ) {
            let k = counts.len();
            let grid = EfficiencyGrid::equally_spaced(k, 0.9).unwrap();
            let (no_click, total): (Vec<u64>, Vec<u64>) = counts
                .into_iter()
                .map(|(a, b)| (a.min(b), b.max(1)))
                .unzip();
            let data = OnOffDataset::new(grid, no_click, total).unwrap();
            prop_assert_eq!(parse_csv(&to_csv_string(&data)).unwrap(), data);
        }

        #[test]
        fn no_click_probability_is_nonincreasing_in_eta(mu in 0.0f64..4.0) {
            let d = make_coherent(mu, 25).unwrap();
            let p0 = d.probs()[0];
            let mut last = 1.0f64;
            for i in 0..=20 {
                let eta = i as f64 / 20.0;
                let p = no_click_probability(&d, eta).unwrap();
                prop_assert!(p <= last + 1e-12);
                prop_assert!(p >= p0 - 1e-12);
                last = p;
            }
        }
    }
}
