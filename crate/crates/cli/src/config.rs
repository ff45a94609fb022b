//! Experiment configuration files.
//!
//! One JSON object per experiment: a `kind`, a mandatory `seed`, and the
//! fields of that kind. Unknown fields are rejected.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use sparsepot::lattice::{LatticeSpec, Point};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(flatten)]
    pub experiment: Experiment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Experiment {
    Green(GreenConfig),
    SparseBuild(SparseBuildConfig),
    BsSpectrum(BsSpectrumConfig),
    CountNegative(CountNegativeConfig),
    BsPrinciple(BsPrincipleConfig),
    Dimension(DimensionConfig),
    Metric(MetricConfig),
    Calogero(CalogeroConfig),
    WeylDemo(WeylConfig),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Green(_) => "green",
            Experiment::SparseBuild(_) => "sparse-build",
            Experiment::BsSpectrum(_) => "bs-spectrum",
            Experiment::CountNegative(_) => "count-negative",
            Experiment::BsPrinciple(_) => "bs-principle",
            Experiment::Dimension(_) => "dimension",
            Experiment::Metric(_) => "metric",
            Experiment::Calogero(_) => "calogero",
            Experiment::WeylDemo(_) => "weyl-demo",
        }
    }
}

/// Where Green functions come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Host {
    /// Whole `ℤ²` through the potential kernel, normalized by calibration.
    #[serde(rename_all = "camelCase")]
    Z2 {
        #[serde(default = "default_calibration_samples")]
        calibration_samples: usize,
    },
    /// Dirichlet lattice box.
    Box(LatticeSpec),
}

fn default_calibration_samples() -> usize {
    8
}

fn default_cap() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct BuildConfig {
    pub size: usize,
    #[serde(default = "default_cap")]
    pub cap: f64,
    #[serde(default)]
    pub scan_cap: Option<usize>,
    /// Largest mildness admitted among box candidates; defaults to `2d`.
    #[serde(default)]
    pub mildness_cap: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleTarget {
    /// The values are the effective weights `w_n = V_n μ_n²`.
    #[default]
    Effective,
    /// The values are the potential values `V_n`.
    Strength,
}

/// `n^{-power}` or an explicit list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Schedule {
    #[serde(default)]
    pub power: Option<f64>,
    #[serde(default)]
    pub values: Option<Vec<f64>>,
    #[serde(default)]
    pub target: ScheduleTarget,
}

impl Schedule {
    pub fn values(&self, count: usize) -> Result<Vec<f64>, CliError> {
        match (&self.power, &self.values) {
            (Some(s), None) => Ok(sparsepot::bs::power_schedule(count, *s)),
            (None, Some(v)) if v.len() == count => Ok(v.clone()),
            (None, Some(v)) => {
                Err(CliError::Validation(format!("schedule lists {} values for {count} sites", v.len())))
            }
            _ => Err(CliError::Validation("schedule needs exactly one of `power` and `values`".into())),
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        match (&self.power, &self.values) {
            (Some(s), None) if s.is_finite() => Ok(()),
            (None, Some(v)) if v.iter().all(|x| *x > 0.0 && x.is_finite()) => Ok(()),
            _ => Err(CliError::Validation("schedule needs a finite `power` or a list of positive `values`".into())),
        }
    }
}

/// Couplings to sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AlphaSweep {
    List {
        values: Vec<f64>,
    },
    Log {
        lo: f64,
        hi: f64,
        count: usize,
    },
    /// Log-spaced from `below / λ_1` to `above / λ_N` of the Birman–Schwinger matrix.
    Thresholds {
        count: usize,
        below: f64,
        above: f64,
    },
}

impl AlphaSweep {
    fn validate(&self) -> Result<(), CliError> {
        let ok = match self {
            AlphaSweep::List { values } => !values.is_empty() && values.iter().all(|a| *a >= 0.0 && a.is_finite()),
            AlphaSweep::Log { lo, hi, count } => *lo > 0.0 && hi > lo && hi.is_finite() && *count >= 2,
            AlphaSweep::Thresholds { count, below, above } => {
                *below > 0.0 && above.is_finite() && *above > 0.0 && *count >= 2
            }
        };
        if ok {
            Ok(())
        } else {
            Err(CliError::Validation(format!("invalid coupling sweep {self:?}")))
        }
    }

    /// Couplings; `lambdas` (descending) are needed for the threshold form.
    pub fn values(&self, lambdas: Option<&[f64]>) -> Result<Vec<f64>, CliError> {
        match self {
            AlphaSweep::List { values } => Ok(values.clone()),
            AlphaSweep::Log { lo, hi, count } => Ok(sparsepot::bs::log_sweep(*lo, *hi, *count)),
            AlphaSweep::Thresholds { count, below, above } => {
                let l = lambdas
                    .filter(|l| !l.is_empty() && l[l.len() - 1] > 0.0)
                    .ok_or_else(|| CliError::Validation("threshold sweep needs a Birman–Schwinger spectrum".into()))?;
                Ok(sparsepot::bs::log_sweep(below / l[0], above / l[l.len() - 1], *count))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct GreenConfig {
    pub host: Host,
    /// Tabulate all `x` with `|x|_∞ ≤ maxOffset`.
    pub max_offset: i64,
    /// Source point for box hosts; defaults to the origin, or `e_1` under an origin clamp.
    #[serde(default)]
    pub source: Option<Point>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SparseBuildConfig {
    pub host: Host,
    pub build: BuildConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct BsSpectrumConfig {
    pub host: Host,
    pub build: BuildConfig,
    pub schedule: Schedule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CountNegativeConfig {
    pub lattice: LatticeSpec,
    /// Explicit sites; otherwise a sparse set is built with `build`.
    #[serde(default)]
    pub sites: Option<Vec<Point>>,
    #[serde(default)]
    pub build: Option<BuildConfig>,
    pub schedule: Schedule,
    pub alphas: AlphaSweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct BsPrincipleConfig {
    pub lattice: LatticeSpec,
    pub build: BuildConfig,
    pub schedule: Schedule,
    pub alphas: AlphaSweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct DimensionConfig {
    pub lattice: LatticeSpec,
    pub t_min: f64,
    pub t_max: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct MetricConfig {
    pub lattice: LatticeSpec,
    /// Edge lengths are drawn uniformly from this range with the run seed.
    pub length_range: [f64; 2],
    pub build: BuildConfig,
    /// Masses `p_n`; the target field is ignored.
    pub masses: Schedule,
    pub eps0: Vec<f64>,
    #[serde(default = "default_support_cells")]
    pub support_cells: usize,
}

fn default_support_cells() -> usize {
    sparsepot::metric::MIN_SUPPORT_CELLS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CalogeroConfig {
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default = "default_cells")]
    pub cells: usize,
    /// `λ` is drawn log-uniformly from this range.
    #[serde(default = "default_lambda_range")]
    pub lambda_range: [f64; 2],
}

fn default_trials() -> usize {
    200
}
fn default_max_steps() -> usize {
    6
}
fn default_cells() -> usize {
    2000
}
fn default_lambda_range() -> [f64; 2] {
    [0.01, 10.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct WeylConfig {
    pub lattice: LatticeSpec,
    /// `V(x) = (1 + |x|²)^{-decay/2}` for `|x|_∞ ≤ supportRadius`.
    pub decay: f64,
    pub support_radius: i64,
    pub alphas: AlphaSweep,
}

impl ExperimentConfig {
    /// Parses and validates; `seed` overrides the file's seed.
    pub fn from_json(text: &str, seed: Option<u64>) -> Result<Self, CliError> {
        let mut value: Value = serde_json::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))?;
        let obj = value.as_object_mut().ok_or_else(|| CliError::Validation("config must be a JSON object".into()))?;
        let file_seed = match obj.remove("seed") {
            Some(v) => {
                Some(v.as_u64().ok_or_else(|| CliError::Validation("seed must be a nonnegative integer".into()))?)
            }
            None => None,
        };
        let seed = seed.or(file_seed).ok_or_else(|| CliError::Validation("seed is mandatory".into()))?;
        let experiment: Experiment =
            serde_json::from_value(value).map_err(|e| CliError::Validation(format!("config: {e}")))?;
        let config = Self { seed, experiment };
        config.validate()?;
        Ok(config)
    }

    /// Canonical JSON used for hashing.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let spec = |s: &LatticeSpec| s.validate().map_err(|e| CliError::Validation(e.to_string()));
        let host = |h: &Host| match h {
            Host::Z2 { calibration_samples } if *calibration_samples == 0 => {
                Err(CliError::Validation("calibration needs at least one sample".into()))
            }
            Host::Z2 { .. } => Ok(()),
            Host::Box(s) => spec(s),
        };
        let build = |b: &BuildConfig| {
            if b.size == 0 || !(b.cap > 0.0 && b.cap.is_finite()) {
                Err(CliError::Validation(format!("build needs size >= 1 and cap > 0, got {} and {}", b.size, b.cap)))
            } else {
                Ok(())
            }
        };
        match &self.experiment {
            Experiment::Green(c) => {
                host(&c.host)?;
                if c.max_offset < 0 {
                    return Err(CliError::Validation("maxOffset must be nonnegative".into()));
                }
                if matches!(c.host, Host::Z2 { .. }) && c.source.is_some() {
                    return Err(CliError::Validation("the ℤ² table is indexed by offset; source is box-only".into()));
                }
                Ok(())
            }
            Experiment::SparseBuild(c) => {
                host(&c.host)?;
                build(&c.build)
            }
            Experiment::BsSpectrum(c) => {
                host(&c.host)?;
                build(&c.build)?;
                c.schedule.validate()
            }
            Experiment::CountNegative(c) => {
                spec(&c.lattice)?;
                match (&c.sites, &c.build) {
                    (Some(_), None) => {}
                    (None, Some(b)) => build(b)?,
                    _ => return Err(CliError::Validation("give exactly one of `sites` and `build`".into())),
                }
                c.schedule.validate()?;
                c.alphas.validate()
            }
            Experiment::BsPrinciple(c) => {
                spec(&c.lattice)?;
                build(&c.build)?;
                c.schedule.validate()?;
                c.alphas.validate()
            }
            Experiment::Dimension(c) => {
                spec(&c.lattice)?;
                if !(c.t_min > 0.0 && c.t_max > c.t_min && c.t_max.is_finite()) || c.samples < 4 {
                    return Err(CliError::Validation("need 0 < tMin < tMax and at least 4 samples".into()));
                }
                Ok(())
            }
            Experiment::Metric(c) => {
                spec(&c.lattice)?;
                build(&c.build)?;
                c.masses.validate()?;
                let [lo, hi] = c.length_range;
                if !(lo > 0.0 && hi >= lo && hi <= sparsepot::metric::MAX_EDGE_LENGTH) {
                    return Err(CliError::Validation(format!("invalid length range [{lo}, {hi}]")));
                }
                if c.eps0.is_empty() || c.eps0.iter().any(|e| !(*e > 0.0 && *e < lo)) {
                    return Err(CliError::Validation("eps0 values must lie in (0, shortest length)".into()));
                }
                Ok(())
            }
            Experiment::Calogero(c) => {
                let [lo, hi] = c.lambda_range;
                if c.trials == 0 || c.max_steps == 0 || c.cells < 2 || !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                    return Err(CliError::Validation(
                        "calogero needs trials, steps, cells >= 2 and 0 < lambda range".into(),
                    ));
                }
                Ok(())
            }
            Experiment::WeylDemo(c) => {
                spec(&c.lattice)?;
                if !c.decay.is_finite() || c.support_radius < 0 || c.support_radius >= c.lattice.radius {
                    return Err(CliError::Validation("decay must be finite and supportRadius inside the box".into()));
                }
                if matches!(c.alphas, AlphaSweep::Thresholds { .. }) {
                    return Err(CliError::Validation("weyl-demo takes list or log couplings".into()));
                }
                c.alphas.validate()
            }
        }
    }
}
