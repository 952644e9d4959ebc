//! Implementations of the three subcommands.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use photonstat::{
    confidence_intervals, default_truncation, fit_model, klyshko_with_uncertainty, load_dataset,
    poisson_background_fit, reconstruct as em_reconstruct, response_matrix, simulate_dataset,
    to_csv_string, total_error, BackgroundGrid, EfficiencyGrid, EmConfig, FitGrid, FitSummary,
    ModelFamily, ModelSpec, PhotonDistribution, ReconstructionResult, UncertaintyReport,
};

use crate::config::{load as load_config, pick, require};
use crate::manifest::RunManifest;
use crate::{AnalyzeArgs, Cli, CliError, ReconstructArgs, SimulateArgs};

/// Writes through a temporary sibling and renames, so readers never observe
/// a half-written file.
pub fn write_atomic(path: &Path, text: &str) -> Result<(), CliError> {
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, text)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn read_model_spec(path: &Path) -> Result<ModelSpec, CliError> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("model spec {}: {e}", path.display())))
}

/// Rewrites the truncation of a spec (recursively for mixtures) so a
/// reference model can be compared against a reconstruction window.
fn with_truncation(spec: &ModelSpec, truncation: usize) -> ModelSpec {
    match spec {
        ModelSpec::Fock { n0, .. } => ModelSpec::Fock {
            n0: *n0,
            truncation,
        },
        ModelSpec::Coherent { mean, .. } => ModelSpec::Coherent {
            mean: *mean,
            truncation,
        },
        ModelSpec::Thermal { mean, .. } => ModelSpec::Thermal {
            mean: *mean,
            truncation,
        },
        ModelSpec::Multithermal { mean, modes, .. } => ModelSpec::Multithermal {
            mean: *mean,
            modes: *modes,
            truncation,
        },
        ModelSpec::Mixture { components } => ModelSpec::Mixture {
            components: components
                .iter()
                .map(|(w, s)| (*w, with_truncation(s, truncation)))
                .collect(),
        },
    }
}

/// Smallest truncation keeping the model's cut tail below 1e-10 (floor 8).
fn auto_truncation(spec: &ModelSpec) -> Result<usize, CliError> {
    for n in 8..=photonstat::MAX_TRUNCATION {
        let d = with_truncation(spec, n).build()?;
        if d.truncated_tail_mass() < 1e-10 {
            return Ok(n);
        }
    }
    Ok(photonstat::MAX_TRUNCATION)
}

pub fn simulate(cli: &Cli, args: &SimulateArgs) -> Result<(), CliError> {
    let cfg = load_config(cli.config.as_deref())?;
    let seed = require(
        &cli.seed,
        &cfg.seed,
        "--seed (simulation must be reproducible)",
    )?;
    let out = require(&cli.out, &cfg.out, "--out")?;

    let model_path = args.model.clone().or(cfg.simulate.model.clone());
    let spec = match &model_path {
        Some(path) => {
            let spec = read_model_spec(path)?;
            match args.truncation.or(cfg.simulate.truncation) {
                Some(n) => with_truncation(&spec, n),
                None => spec,
            }
        }
        None => {
            let family = require(&args.family, &cfg.simulate.family, "--family or --model")?;
            let mean = pick(&args.mean, &cfg.simulate.mean, 0.02);
            let untruncated = match family.as_str() {
                "fock" => ModelSpec::Fock {
                    n0: pick(&args.n0, &cfg.simulate.n0, 1),
                    truncation: 0,
                },
                "coherent" => ModelSpec::Coherent { mean, truncation: 0 },
                "thermal" => ModelSpec::Thermal { mean, truncation: 0 },
                "multithermal" => ModelSpec::Multithermal {
                    mean,
                    modes: pick(&args.modes, &cfg.simulate.modes, 2),
                    truncation: 0,
                },
                other => {
                    return Err(CliError::Input(format!(
                        "unknown model family \"{other}\" (use fock|coherent|thermal|multithermal or --model)"
                    )))
                }
            };
            let truncation = match args.truncation.or(cfg.simulate.truncation) {
                Some(n) => n,
                None => match &untruncated {
                    ModelSpec::Fock { n0, .. } => (*n0).max(8),
                    spec => auto_truncation(spec)?,
                },
            };
            with_truncation(&untruncated, truncation)
        }
    };
    let truth = spec.build()?;
    if truth.has_truncation_warning() {
        eprintln!(
            "warning: truncation at N = {} cuts {:.3e} of the model's mass",
            truth.truncation(),
            truth.truncated_tail_mass()
        );
    }

    let k = pick(&args.k, &cfg.simulate.k, 15);
    let eta_max = pick(&args.eta_max, &cfg.simulate.eta_max, 0.66);
    let eta_min = args.eta_min.or(cfg.simulate.eta_min);
    let grid = match eta_min {
        Some(lo) => EfficiencyGrid::linspace(k, lo, eta_max)?,
        None => EfficiencyGrid::equally_spaced(k, eta_max)?,
    };
    let runs = pick(&args.runs, &cfg.simulate.runs, 1_000_000);

    let data = simulate_dataset(&truth, &grid, &vec![runs; k], seed)?;
    write_atomic(&out, &to_csv_string(&data))?;

    let resolved = json!({
        "model": spec,
        "k": k,
        "eta_max": eta_max,
        "eta_min": eta_min,
        "runs": runs,
        "truncation": truth.truncation(),
    });
    RunManifest::new("simulate", Some(seed), resolved)
        .output(&out)
        .write_beside(&out)?;

    println!(
        "wrote {} rows for {} to {}",
        data.len(),
        truth.label(),
        out.display()
    );
    Ok(())
}

pub fn reconstruct(cli: &Cli, args: &ReconstructArgs) -> Result<(), CliError> {
    let cfg = load_config(cli.config.as_deref())?;
    let out = require(&cli.out, &cfg.out, "--out")?;
    let dataset_path = require(&args.dataset, &cfg.reconstruct.dataset, "--dataset")?;
    let data = load_dataset(&dataset_path)?;

    let truncation = args
        .truncation
        .or(cfg.reconstruct.truncation)
        .unwrap_or_else(|| default_truncation(&data));
    let tolerance = pick(
        &args.tolerance,
        &cfg.reconstruct.tolerance,
        1e-7 * data.len() as f64,
    );
    let max_iterations = pick(&args.max_iter, &cfg.reconstruct.max_iter, 1_000_000);
    let trace_stride = pick(&args.trace_stride, &cfg.reconstruct.trace_stride, 1000);

    let reference_path = args.reference.clone().or(cfg.reconstruct.reference.clone());
    let reference = reference_path
        .as_deref()
        .map(|p| -> Result<PhotonDistribution, CliError> {
            Ok(with_truncation(&read_model_spec(p)?, truncation).build()?)
        })
        .transpose()?;

    let mut config = EmConfig::new(truncation);
    config.max_iterations = max_iterations;
    config.epsilon_tolerance = Some(tolerance);
    config.trace_stride = trace_stride;
    let result = em_reconstruct(&data, &config, reference.as_ref())?;

    let deltas = match confidence_intervals(&result, &data) {
        Ok(report) => Some(report),
        Err(photonstat::Error::UndefinedUncertainty { index }) => {
            eprintln!("note: uncertainty undefined at n = {index}; table shows rho only");
            None
        }
        Err(e) => return Err(e.into()),
    };

    write_atomic(&out, &result.to_json_string()?)?;
    let resolved = json!({
        "dataset": dataset_path.display().to_string(),
        "truncation": truncation,
        "tolerance": tolerance,
        "max_iterations": max_iterations,
        "trace_stride": trace_stride,
        "reference": reference_path.as_ref().map(|p| p.display().to_string()),
    });
    RunManifest::new("reconstruct", cli.seed, resolved)
        .input(&dataset_path)
        .output(&out)
        .write_beside(&out)?;

    print_summary_table(&result, deltas.as_ref());
    println!(
        "converged: {} (epsilon {:.6e}, tolerance {:.6e}, {} iterations)",
        result.converged, result.final_epsilon, tolerance, result.iterations_run
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn print_summary_table(result: &ReconstructionResult, deltas: Option<&UncertaintyReport>) {
    println!("{:>4}  {:>14}  {:>14}", "n", "rho_n", "delta_rho_n");
    for (n, rho) in result.rho.probs().iter().enumerate() {
        match deltas {
            Some(report) => println!("{n:>4}  {rho:>14.8e}  {:>14.4e}", report.delta_rho[n]),
            None => println!("{n:>4}  {rho:>14.8e}  {:>14}", "n/a"),
        }
    }
}

#[derive(Debug, Serialize)]
struct KlyshkoEntry {
    n: usize,
    value: f64,
    uncertainty: f64,
}

#[derive(Debug, Serialize)]
struct AnalysisReport {
    epsilon: f64,
    iterations: usize,
    converged: bool,
    mean_photon_number: f64,
    klyshko: Vec<KlyshkoEntry>,
    fits: Vec<FitSummary>,
    frequencies_csv: String,
    distribution_csv: String,
}

pub fn analyze(cli: &Cli, args: &AnalyzeArgs) -> Result<(), CliError> {
    let cfg = load_config(cli.config.as_deref())?;
    let out = require(&cli.out, &cfg.out, "--out")?;
    let result_path = require(&args.result, &cfg.analyze.result, "--result")?;
    let dataset_path = require(&args.dataset, &cfg.analyze.dataset, "--dataset")?;

    let result = ReconstructionResult::from_json_str(&fs::read_to_string(&result_path)?)
        .map_err(|e| CliError::Input(format!("result {}: {e}", result_path.display())))?;
    let data = load_dataset(&dataset_path)?;

    // The result JSON does not carry the grid; recomputing epsilon against
    // this dataset and comparing with the stored value catches mismatched
    // result/dataset pairs.
    let a = response_matrix(data.grid(), result.rho.truncation())?;
    let f = data.frequencies();
    let epsilon = total_error(&result.rho, &a, &f);
    if (epsilon - result.final_epsilon).abs() > 1e-9 * (1.0 + epsilon.abs()) {
        return Err(CliError::Input(format!(
            "result does not match dataset: stored epsilon {:.6e}, recomputed {:.6e}",
            result.final_epsilon, epsilon
        )));
    }

    let report = confidence_intervals(&result, &data)?;

    let frequencies_path = out.with_extension("frequencies.csv");
    let mut freq_csv = String::from("eta,frequency,model,residual\n");
    let p = a.no_click_probabilities(&result.rho)?;
    for (nu, &eta) in data.grid().etas().iter().enumerate() {
        writeln!(
            freq_csv,
            "{eta},{},{},{}",
            f[nu],
            p[nu],
            (f[nu] - p[nu]).abs()
        )
        .expect("string write");
    }
    write_atomic(&frequencies_path, &freq_csv)?;

    let distribution_path = out.with_extension("distribution.csv");
    let mut dist_csv = String::from("n,rho,delta_rho\n");
    for (n, rho) in result.rho.probs().iter().enumerate() {
        writeln!(dist_csv, "{n},{rho},{}", report.delta_rho[n]).expect("string write");
    }
    write_atomic(&distribution_path, &dist_csv)?;

    let mut klyshko_entries = Vec::new();
    let probs = result.rho.probs();
    for n in 1..result.rho.truncation() {
        if probs[n - 1] > 0.0 && probs[n] > 0.0 && probs[n + 1] > 0.0 {
            let (value, uncertainty) = klyshko_with_uncertainty(&result.rho, &report, n)?;
            klyshko_entries.push(KlyshkoEntry {
                n,
                value,
                uncertainty,
            });
        }
    }

    let mu_bracket = (
        pick(&args.mu_min, &cfg.analyze.mu_min, 1e-6),
        pick(&args.mu_max, &cfg.analyze.mu_max, 10.0),
    );
    let modes_text = pick(&args.modes, &cfg.analyze.modes, "1-20,100,500".to_string());
    let modes = parse_modes(&modes_text)?;
    let weights = match args.weights.clone().or(cfg.analyze.weights.clone()) {
        Some(text) => parse_weights(&text)?,
        None => (0..=20).map(|i| i as f64 / 20.0).collect(),
    };
    let bg_bracket = (
        pick(&args.bg_mu_min, &cfg.analyze.bg_mu_min, mu_bracket.0),
        pick(&args.bg_mu_max, &cfg.analyze.bg_mu_max, mu_bracket.1),
    );

    let fit_names = if !args.fits.is_empty() {
        args.fits.clone()
    } else {
        cfg.analyze.fits.clone().unwrap_or_default()
    };
    let mut fits = Vec::new();
    for name in &fit_names {
        let summary = if name == "poisson-background" {
            let grid = BackgroundGrid {
                base: FitGrid {
                    mu_bracket,
                    modes: modes.clone(),
                },
                weights: weights.clone(),
                background_mu_bracket: bg_bracket,
            };
            poisson_background_fit(&result.rho, &report, ModelFamily::Multithermal, &grid)?
        } else {
            let family: ModelFamily = name.parse()?;
            let grid = FitGrid {
                mu_bracket,
                modes: if family == ModelFamily::Multithermal {
                    modes.clone()
                } else {
                    vec![1]
                },
            };
            fit_model(&result.rho, &report, family, &grid)?
        };
        fits.push(summary);
    }

    let analysis = AnalysisReport {
        epsilon,
        iterations: result.iterations_run,
        converged: result.converged,
        mean_photon_number: result.rho.mean_photon_number(),
        klyshko: klyshko_entries,
        fits,
        frequencies_csv: frequencies_path.display().to_string(),
        distribution_csv: distribution_path.display().to_string(),
    };
    let text = serde_json::to_string_pretty(&analysis)
        .map_err(|e| CliError::Input(format!("report serialization: {e}")))?;
    write_atomic(&out, &text)?;

    let resolved = json!({
        "result": result_path.display().to_string(),
        "dataset": dataset_path.display().to_string(),
        "fits": fit_names,
        "modes": modes_text,
        "mu_bracket": [mu_bracket.0, mu_bracket.1],
        "background_mu_bracket": [bg_bracket.0, bg_bracket.1],
    });
    RunManifest::new("analyze", cli.seed, resolved)
        .input(&result_path)
        .input(&dataset_path)
        .output(&out)
        .output(&frequencies_path)
        .output(&distribution_path)
        .write_beside(&out)?;

    for entry in &analysis.klyshko {
        let flag = if entry.value + entry.uncertainty < 1.0 {
            "  (nonclassical)"
        } else {
            ""
        };
        println!(
            "K_{} = {:.6e} +/- {:.6e}{flag}",
            entry.n, entry.value, entry.uncertainty
        );
    }
    for fit in &analysis.fits {
        let params: Vec<String> = fit
            .fitted_parameters
            .iter()
            .map(|(k, v)| format!("{k} = {v:.6}"))
            .collect();
        println!(
            "fit {} [{}]: reduced chi^2 = {:.6e} ({} dof)",
            fit.model.describe(),
            params.join(", "),
            fit.reduced_chi_square,
            fit.degrees_of_freedom
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

/// Parses a mode-count list like "1-20,100,500".
fn parse_modes(text: &str) -> Result<Vec<u64>, CliError> {
    let mut modes = Vec::new();
    for token in text.split(',') {
        let token = token.trim();
        if token.is_empty() {
            continue;
        }
        match token.split_once('-') {
            Some((lo, hi)) => {
                let lo: u64 = lo.trim().parse().map_err(|_| bad_modes(token))?;
                let hi: u64 = hi.trim().parse().map_err(|_| bad_modes(token))?;
                if lo == 0 || hi < lo {
                    return Err(bad_modes(token));
                }
                modes.extend(lo..=hi);
            }
            None => {
                let value: u64 = token.parse().map_err(|_| bad_modes(token))?;
                if value == 0 {
                    return Err(bad_modes(token));
                }
                modes.push(value);
            }
        }
    }
    if modes.is_empty() {
        return Err(CliError::Input("empty mode list".to_string()));
    }
    Ok(modes)
}

fn bad_modes(token: &str) -> CliError {
    CliError::Input(format!("invalid mode-count token \"{token}\""))
}

fn parse_weights(text: &str) -> Result<Vec<f64>, CliError> {
    let weights: Result<Vec<f64>, _> = text.split(',').map(|t| t.trim().parse::<f64>()).collect();
    let weights =
        weights.map_err(|_| CliError::Input(format!("invalid weight list \"{text}\"")))?;
    if weights.is_empty() {
        return Err(CliError::Input("empty weight list".to_string()));
    }
    Ok(weights)
}
