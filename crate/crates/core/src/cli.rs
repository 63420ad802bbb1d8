//! Command implementations behind the `dfl-sim` binary.
//!
//! Output goes to `--out` if given, else to the directory named by the
//! `DFL_SIM_OUT` environment variable, else to `experiment.out_dir`.

use std::fs::File;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{AlgorithmId, ExperimentConfig};
use crate::data::write_manifest;
use crate::engine::{write_audit_csv, write_metrics_csv, Simulation, TrainingOutput};
use crate::error::{Error, Result};
use crate::toy::{run_toy, Regime, ToyReport, ToySpec};

/// Environment variable that overrides the configured output directory.
pub const OUT_ENV: &str = "DFL_SIM_OUT";

/// What a `run` invocation resolved to.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub config_path: PathBuf,
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    /// Run id per seed.
    pub run_ids: Vec<String>,
}

/// Best and final accuracy of one finished run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub run_id: String,
    pub seed: u64,
    pub algorithm: String,
    pub best_acc: f64,
    pub final_acc: f64,
}

/// Process exit code for an error: 2 for divergence, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Diverged { .. } => 2,
        _ => 1,
    }
}

pub fn resolve_out_dir(flag: Option<&Path>, configured: &Path) -> PathBuf {
    if let Some(dir) = flag {
        return dir.to_path_buf();
    }
    match std::env::var_os(OUT_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => configured.to_path_buf(),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn train_one(config: &ExperimentConfig, seed: u64, out_dir: &Path) -> Result<TrainingOutput> {
    let (sim, data) = Simulation::from_config(config, seed)?;
    if config.data.wants_manifest() {
        if let Some(p) = &data.partition {
            write_manifest(out_dir.join(format!("manifest_seed{seed}.csv")), p)?;
        }
    }
    let warnings = data.partition.map(|p| p.warnings).unwrap_or_default();
    for w in &warnings {
        eprintln!("warning (seed {seed}): {w}");
    }
    sim.run(warnings)
}

/// `run`: train once per seed and write `metrics_seed{S}.csv`,
/// `audit_seed{S}.csv` and `summary.csv`.
pub fn cmd_run(
    config_path: &Path,
    seeds: Option<Vec<u64>>,
    out: Option<&Path>,
    overrides: &[String],
) -> Result<(RunManifest, Vec<RunSummary>)> {
    let config = ExperimentConfig::load(config_path, overrides)?;
    let seeds = seeds.unwrap_or_else(|| vec![config.experiment.seed]);
    let out_dir = resolve_out_dir(out, &config.experiment.out_dir);
    create_dir(&out_dir)?;

    let outputs: Vec<TrainingOutput> = seeds
        .par_iter()
        .map(|&seed| train_one(&config, seed, &out_dir))
        .collect::<Result<_>>()?;

    let mut summaries = Vec::with_capacity(seeds.len());
    for (&seed, output) in seeds.iter().zip(&outputs) {
        write_metrics_csv(out_dir.join(format!("metrics_seed{seed}.csv")), &output.metrics)?;
        write_audit_csv(out_dir.join(format!("audit_seed{seed}.csv")), &output.plans)?;
        summaries.push(RunSummary {
            run_id: config.run_id(seed),
            seed,
            algorithm: config.experiment.algorithm.to_string(),
            best_acc: output.best_acc(),
            final_acc: output.final_acc(),
        });
    }
    write_summary(&out_dir.join("summary.csv"), &config, &summaries)?;
    let manifest = RunManifest {
        config_path: config_path.to_path_buf(),
        run_ids: summaries.iter().map(|s| s.run_id.clone()).collect(),
        config,
        seeds,
        out_dir,
    };
    Ok((manifest, summaries))
}

fn write_summary(path: &Path, config: &ExperimentConfig, rows: &[RunSummary]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record([
        "run_id",
        "seed",
        "algorithm",
        "rounds",
        "clients",
        "best_acc",
        "final_acc",
    ])?;
    let rounds = config.experiment.rounds.to_string();
    let clients = config.experiment.clients.to_string();
    for r in rows {
        w.write_record([
            r.run_id.as_str(),
            &r.seed.to_string(),
            &r.algorithm,
            &rounds,
            &clients,
            &format!("{:.6}", r.best_acc),
            &format!("{:.6}", r.final_acc),
        ])?;
    }
    let best: Vec<f64> = rows.iter().map(|r| r.best_acc).collect();
    let fin: Vec<f64> = rows.iter().map(|r| r.final_acc).collect();
    w.write_record([
        "mean±std",
        &rows.len().to_string(),
        &config.experiment.algorithm.to_string(),
        &rounds,
        &clients,
        &pm(mean_std(&best)),
        &pm(mean_std(&fin)),
    ])?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn pm((mean, std): (f64, f64)) -> String {
    format!("{mean:.6}±{std:.6}")
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub algorithm: String,
    /// `mean±std` of best accuracy, in percent.
    pub best_acc: String,
    pub best_mean: f64,
    pub best_std: f64,
    pub final_mean: f64,
    pub final_std: f64,
    pub seeds: usize,
}

/// `compare`: every algorithm over every seed on the same config; writes
/// `compare.csv` with one row per algorithm.
pub fn cmd_compare(
    config_path: &Path,
    algorithms: &[AlgorithmId],
    seeds: &[u64],
    out: Option<&Path>,
    overrides: &[String],
) -> Result<Vec<CompareRow>> {
    let base = ExperimentConfig::load(config_path, overrides)?;
    let rows = compare(&base, algorithms, seeds)?;
    let out_dir = resolve_out_dir(out, &base.experiment.out_dir);
    create_dir(&out_dir)?;
    let path = out_dir.join("compare.csv");
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(rows)
}

/// The comparison itself, without touching the filesystem.
pub fn compare(base: &ExperimentConfig, algorithms: &[AlgorithmId], seeds: &[u64]) -> Result<Vec<CompareRow>> {
    algorithms
        .iter()
        .map(|&algorithm| {
            let mut config = base.clone();
            config.experiment.algorithm = algorithm;
            let outputs: Vec<TrainingOutput> = seeds
                .par_iter()
                .map(|&seed| crate::engine::run_training(&config, seed))
                .collect::<Result<_>>()?;
            let best: Vec<f64> = outputs.iter().map(TrainingOutput::best_acc).collect();
            let fin: Vec<f64> = outputs.iter().map(TrainingOutput::final_acc).collect();
            let (best_mean, best_std) = mean_std(&best);
            let (final_mean, final_std) = mean_std(&fin);
            Ok(CompareRow {
                algorithm: algorithm.to_string(),
                best_acc: format!("{:.2}±{:.2}", 100.0 * best_mean, 100.0 * best_std),
                best_mean,
                best_std,
                final_mean,
                final_std,
                seeds: seeds.len(),
            })
        })
        .collect()
}

/// Seeds used by `toy`.
pub const TOY_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

/// `toy`: the three-client scenario over [`TOY_SEEDS`]; writes `toy.csv`
/// (one row per regime and seed) and `toy_summary.csv`.
pub fn cmd_toy(out: Option<&Path>) -> Result<Vec<ToyReport>> {
    let spec = ToySpec::default();
    let reports: Vec<ToyReport> = TOY_SEEDS
        .par_iter()
        .map(|&seed| run_toy(&spec, seed))
        .collect::<Result<_>>()?;
    let out_dir = resolve_out_dir(out, Path::new("out"));
    create_dir(&out_dir)?;

    let path = out_dir.join("toy.csv");
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["regime", "seed", "accuracy"])?;
    for regime in Regime::ALL {
        for r in &reports {
            w.write_record([regime.name(), &r.seed.to_string(), &format!("{:.6}", r.get(regime))])?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = out_dir.join("toy_summary.csv");
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["regime", "mean_acc", "std_acc", "seeds"])?;
    let seeds = TOY_SEEDS.map(|s| s.to_string()).join(" ");
    for regime in Regime::ALL {
        let accs: Vec<f64> = reports.iter().map(|r| r.get(regime)).collect();
        let (mean, std) = mean_std(&accs);
        w.write_record([regime.name(), &format!("{mean:.6}"), &format!("{std:.6}"), &seeds])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_examples() {
        assert_eq!(mean_std(&[0.5]), (0.5, 0.0));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Diverged { round: 3 }), 2);
        assert_eq!(exit_code(&Error::config("rounds", "missing")), 1);
    }
}
