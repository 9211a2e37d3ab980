//! Orchestration behind the `partdec` binary: run configs and suites, write
//! one-line JSON reports plus a manifest, and flatten manifests to CSV.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{self, ConfigError, Overrides, Suite};
use crate::error::Error;
use crate::experiments::{
    random_nonrandomized_instance, random_randomized_instance, run_experiment, run_instance, ConditionerPolicy,
    ExperimentReport, Mode,
};
use crate::linalg::TOL;
use crate::sampling::RngStream;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CSV_HEADER: &str = "mode,J,r,N,lhs_mean,lhs_stderr,rhs_total,margin";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{context}: {source}")]
    Experiment { context: String, source: Error },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: malformed record: {message}")]
    Record { path: PathBuf, message: String },
}

impl CliError {
    /// 2 for configuration errors, 3 for numerical failures, 1 otherwise
    /// (including unreadable files).
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(ConfigError::Io { .. }) => 1,
            CliError::Config(_) => 2,
            CliError::Experiment { source, .. } => match source {
                Error::SdpNonConvergence { .. } | Error::SingularConditioner(_) => 3,
                Error::NotRandomizedCase(_) | Error::ChannelSpec(_) | Error::DecompositionLiteral(_) => 2,
                _ => 1,
            },
            CliError::Io { .. } | CliError::Record { .. } => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub seed: u64,
    pub timestamp: String,
    pub version: String,
    /// Report files, relative to the manifest's directory.
    pub reports: Vec<String>,
    pub wall_time_s: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub manifest_path: PathBuf,
    pub manifest: RunManifest,
    pub reports: Vec<ExperimentReport>,
}

impl RunOutcome {
    pub fn all_passed(&self) -> bool {
        self.reports.iter().all(ExperimentReport::passed)
    }

    pub fn exit_code(&self) -> i32 {
        if self.all_passed() {
            0
        } else {
            1
        }
    }
}

/// The report serialized as a single JSON line (no trailing newline).
pub fn report_line(report: &ExperimentReport) -> String {
    serde_json::to_string(report).expect("reports serialize")
}

fn write_run(
    out_dir: &Path,
    config_hash: String,
    seed: u64,
    reports: Vec<(ExperimentReport, f64)>,
) -> Result<RunOutcome, CliError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut names = Vec::with_capacity(reports.len());
    for (i, (rep, _)) in reports.iter().enumerate() {
        let name = format!("report-{i:03}.json");
        let path = out_dir.join(&name);
        fs::write(&path, report_line(rep) + "\n").map_err(io_err(&path))?;
        names.push(name);
    }
    let manifest = RunManifest {
        config_hash,
        seed,
        timestamp: chrono::Utc::now().to_rfc3339(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        reports: names,
        wall_time_s: reports.iter().map(|r| r.1).collect(),
    };
    let manifest_path = out_dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&manifest_path, text + "\n").map_err(io_err(&manifest_path))?;
    Ok(RunOutcome { manifest_path, manifest, reports: reports.into_iter().map(|r| r.0).collect() })
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

/// Run a single config file. `flags` take precedence over the environment.
pub fn verify(config_path: &Path, flags: Overrides, out_dir: &Path) -> Result<RunOutcome, CliError> {
    let mut cfg = config::parse_config(config_path)?;
    flags.or(Overrides::from_env()?).apply(&mut cfg);
    config::validate(&cfg, &config_path.display().to_string())?;
    let (rep, secs) = timed(|| run_experiment(&cfg));
    let rep = rep.map_err(|source| CliError::Experiment { context: config_path.display().to_string(), source })?;
    write_run(out_dir, config::config_hash(&cfg), cfg.seed, vec![(rep, secs)])
}

/// `(J, r)` for instance `i` of a randomized batch.
pub fn batch_shape(blocks: Option<usize>, r: Option<usize>, i: usize) -> (usize, usize) {
    (blocks.unwrap_or([2, 3][i % 2]), r.unwrap_or([1, 2][(i / 2) % 2]))
}

/// Run every experiment of a suite, then every generated instance.
pub fn sweep(suite_path: &Path, flags: Overrides, out_dir: &Path) -> Result<RunOutcome, CliError> {
    let mut suite = config::parse_suite(suite_path)?;
    let ov = flags.or(Overrides::from_env()?);
    apply_suite_overrides(&mut suite, ov);
    let origin = suite_path.display().to_string();
    let mut reports = Vec::new();
    for (i, cfg) in suite.experiments.iter().enumerate() {
        let (rep, secs) = timed(|| run_experiment(cfg));
        let rep = rep.map_err(|source| CliError::Experiment { context: format!("{origin} [[experiment]] #{}", i + 1), source })?;
        reports.push((rep, secs));
    }
    for (b, batch) in suite.random.iter().enumerate() {
        for i in 0..batch.count {
            let context = format!("{origin} [[random]] #{} instance {i}", b + 1);
            let (rep, secs) = timed(|| -> crate::Result<ExperimentReport> {
                let mut rng = RngStream::new(batch.seed, u64::MAX - i as u64).rng();
                let inst = match batch.mode {
                    Mode::NonrandomizedPd => random_nonrandomized_instance(&mut rng)?,
                    _ => {
                        let (jn, r) = batch_shape(batch.blocks, batch.r, i);
                        random_randomized_instance(jn, r, &mut rng)?
                    }
                };
                run_instance(
                    batch.mode,
                    &inst,
                    batch.samples,
                    batch.seed.wrapping_add(i as u64),
                    ConditionerPolicy::SdpOptimal,
                    TOL.sdp_gap,
                )
            });
            reports.push((rep.map_err(|source| CliError::Experiment { context, source })?, secs));
        }
    }
    write_run(out_dir, config::digest(&config::canonical_suite(&suite)), suite.seed, reports)
}

fn apply_suite_overrides(suite: &mut Suite, ov: Overrides) {
    if let Some(s) = ov.seed {
        suite.seed = s;
    }
    for cfg in &mut suite.experiments {
        ov.apply(cfg);
    }
    for b in &mut suite.random {
        if let Some(s) = ov.seed {
            b.seed = s;
        }
        if let Some(n) = ov.samples {
            b.samples = n;
        }
    }
}

pub fn read_manifest(path: &Path) -> Result<RunManifest, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::Record { path: path.to_path_buf(), message: e.to_string() })
}

pub fn read_report(path: &Path) -> Result<ExperimentReport, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(text.trim_end())
        .map_err(|e| CliError::Record { path: path.to_path_buf(), message: e.to_string() })
}

/// Long-form CSV of every report in a manifest, sorted by `(mode, J, r)`.
pub fn plot_data_csv(manifest_path: &Path) -> Result<String, CliError> {
    let manifest = read_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut reports = manifest
        .reports
        .iter()
        .map(|name| read_report(&base.join(name)))
        .collect::<Result<Vec<_>, _>>()?;
    reports.sort_by(|a, b| (a.mode.as_str(), a.j, a.r).cmp(&(b.mode.as_str(), b.j, b.r)));
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &reports {
        out.push_str(&format!(
            "{},{},{},{},{:e},{:e},{:e},{:e}\n",
            r.mode, r.j, r.r, r.samples, r.lhs_mean, r.lhs_stderr, r.rhs_total, r.margin
        ));
    }
    Ok(out)
}

pub fn plot_data(manifest_path: &Path, out: &Path) -> Result<(), CliError> {
    let csv = plot_data_csv(manifest_path)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(out, csv).map_err(io_err(out))
}
