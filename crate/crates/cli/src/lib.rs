//! Experiment runner: configuration, execution, manifests and reports.

pub mod config;
pub mod experiments;
pub mod table;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::ExperimentConfig;
use table::Table;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "SPARSEPOT_OUT_DIR";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("certificate failure: {0}")]
    Certificate(String),
    #[error("coupling sweep exhausted: {0}")]
    SweepExhausted(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Core(sparsepot::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Certificate(_) => 3,
            CliError::SweepExhausted(_) => 4,
            CliError::Io(_) | CliError::Core(_) => 1,
        }
    }

    pub(crate) fn from_json(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<sparsepot::Error> for CliError {
    fn from(e: sparsepot::Error) -> Self {
        use sparsepot::Error as E;
        match e {
            E::InvalidGraph(_) | E::InvalidSpec(_) | E::InvalidArgument(_) | E::DimensionMismatch { .. } => {
                CliError::Validation(e.to_string())
            }
            E::SparseSetIncomplete { .. } | E::AccuracyNotReached { .. } | E::ValidityWindow { .. } => {
                CliError::Certificate(e.to_string())
            }
            e => CliError::Core(e),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OutputDigest {
    pub file: String,
    pub sha256: String,
}

/// Record of one run, written as `manifest.json` next to the outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunManifest {
    pub kind: String,
    pub config_hash: String,
    pub seed: u64,
    pub versions: BTreeMap<String, String>,
    pub c_norm: Option<f64>,
    pub box_radii: Vec<i64>,
    pub elapsed_seconds: f64,
    pub outputs: Vec<OutputDigest>,
    pub exit_code: i32,
    pub message: Option<String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Options of the `run` command.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

/// Parses the config, runs the experiment and writes outputs plus the manifest.
///
/// Validation errors return before anything is written. Certificate failures
/// and exhausted sweeps still write outputs; the manifest records the exit code.
pub fn run(config_path: &Path, options: &RunOptions) -> Result<RunManifest, CliError> {
    let text = fs::read_to_string(config_path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", config_path.display())))?;
    let config = ExperimentConfig::from_json(&text, options.seed)?;
    run_config(&config, options)
}

pub fn run_config(config: &ExperimentConfig, options: &RunOptions) -> Result<RunManifest, CliError> {
    config.validate()?;
    let start = Instant::now();
    let outcome = match options.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Validation(format!("thread pool: {e}")))?
            .install(|| experiments::execute(config)),
        None => experiments::execute(config),
    }?;
    let elapsed = start.elapsed().as_secs_f64();

    fs::create_dir_all(&options.out_dir)?;
    let mut outputs = Vec::new();
    for (name, table) in &outcome.tables {
        let file = format!("{name}.csv");
        let text = table.to_csv()?;
        fs::write(options.out_dir.join(&file), &text)?;
        outputs.push(OutputDigest { file, sha256: sha256_hex(text.as_bytes()) });
    }
    for (name, doc) in &outcome.documents {
        let file = format!("{name}.json");
        let text = serde_json::to_string_pretty(doc).map_err(CliError::from_json)? + "\n";
        fs::write(options.out_dir.join(&file), &text)?;
        outputs.push(OutputDigest { file, sha256: sha256_hex(text.as_bytes()) });
    }
    let versions = BTreeMap::from([
        ("sparsepot-core".to_string(), sparsepot::VERSION.to_string()),
        ("sparsepot-cli".to_string(), env!("CARGO_PKG_VERSION").to_string()),
    ]);
    let manifest = RunManifest {
        kind: config.experiment.kind().to_string(),
        config_hash: sha256_hex(config.canonical_json().as_bytes()),
        seed: config.seed,
        versions,
        c_norm: outcome.c_norm,
        box_radii: outcome.box_radii,
        elapsed_seconds: elapsed,
        outputs,
        exit_code: outcome.failure.as_ref().map_or(0, CliError::exit_code),
        message: outcome.failure.as_ref().map(ToString::to_string),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(CliError::from_json)? + "\n";
    fs::write(options.out_dir.join(MANIFEST_FILE), text)?;
    match outcome.failure {
        None => Ok(manifest),
        Some(e) => Err(e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Gnuplot,
}

impl std::str::FromStr for ReportFormat {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            "gnuplot" => Ok(Self::Gnuplot),
            other => Err(CliError::Validation(format!("unknown report format `{other}`"))),
        }
    }
}

impl ReportFormat {
    fn extension(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Json => "json",
            Self::Gnuplot => "dat",
        }
    }
}

/// Re-emits every table of a run under `report/` in the requested format.
///
/// Counting staircases are checked to be nondecreasing in the coupling.
pub fn report(manifest_path: &Path, format: ReportFormat) -> Result<Vec<PathBuf>, CliError> {
    let text = fs::read_to_string(manifest_path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", manifest_path.display())))?;
    let manifest: RunManifest =
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("manifest: {e}")))?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let out_dir = dir.join("report");
    fs::create_dir_all(&out_dir)?;
    let mut written = Vec::new();
    for output in manifest.outputs.iter().filter(|o| o.file.ends_with(".csv")) {
        let path = dir.join(&output.file);
        let bytes = fs::read(&path)?;
        if sha256_hex(&bytes) != output.sha256 {
            return Err(CliError::Validation(format!("{} does not match its manifest digest", output.file)));
        }
        let table = Table::read_csv(&path)?;
        check_staircase(&table)?;
        let stem = output.file.trim_end_matches(".csv");
        let target = out_dir.join(format!("{stem}.{}", format.extension()));
        let body = match format {
            ReportFormat::Csv => table.to_csv()?,
            ReportFormat::Json => serde_json::to_string_pretty(&table.to_json()).map_err(CliError::from_json)? + "\n",
            ReportFormat::Gnuplot => table.to_gnuplot(),
        };
        fs::write(&target, body)?;
        written.push(target);
    }
    Ok(written)
}

/// `n_minus` must not decrease as `alpha` grows.
pub fn check_staircase(table: &Table) -> Result<(), CliError> {
    let (Some(a), Some(n)) = (table.column("alpha"), table.column("n_minus")) else {
        return Ok(());
    };
    let mut points: Vec<(f64, u64)> = table
        .rows
        .iter()
        .filter(|r| !r[n].is_empty())
        .map(|r| Ok((r[a].parse::<f64>()?, r[n].parse::<u64>()?)))
        .collect::<Result<_, Box<dyn std::error::Error>>>()
        .map_err(|e| CliError::Validation(format!("staircase table: {e}")))?;
    points.sort_by(|x, y| x.0.total_cmp(&y.0));
    if let Some(w) = points.windows(2).find(|w| w[1].1 < w[0].1) {
        return Err(CliError::Certificate(format!(
            "counting function drops from {} to {} between alpha = {} and {}",
            w[0].1, w[1].1, w[0].0, w[1].0
        )));
    }
    Ok(())
}
