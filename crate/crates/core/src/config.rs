//! Experiment configuration: a JSON schema describing a model and one
//! experiment to run over it — simulation, forward solving, a verification
//! battery, or a Monte-Carlo/solver comparison.
//!
//! Configurations are strict: unknown fields are rejected, and
//! [`ExperimentConfig::validate`] enforces the semantic requirements
//! (grids sorted, steps positive, states resolvable) that the numerical
//! layers rely on.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{IntensityField, IntensityModel, ModelError, StateSpace};

/// Version of the configuration schema accepted by this build.
pub const SCHEMA_VERSION: u32 = 1;

/// Errors from loading or validating a configuration.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported schema_version {found}; this build reads version {SCHEMA_VERSION}")]
    UnsupportedSchema { found: u32 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid config: {reason}")]
    Invalid { reason: String },
}

fn invalid(reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        reason: reason.into(),
    }
}

/// One intensity field, addressed by state names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntensityEntry {
    pub from: String,
    pub to: String,
    pub field: IntensityField,
}

/// The model section: named states and their transition intensities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub states: Vec<String>,
    pub intensities: Vec<IntensityEntry>,
}

impl ModelSpec {
    /// Resolve names and build the executable model.
    pub fn build(&self) -> Result<IntensityModel, ConfigError> {
        let space = StateSpace::new(self.states.iter().cloned())?;
        let mut model = IntensityModel::new(space);
        let mut seen = std::collections::BTreeSet::new();
        for entry in &self.intensities {
            if !seen.insert((entry.from.clone(), entry.to.clone())) {
                return Err(invalid(format!(
                    "duplicate intensity for {} -> {}",
                    entry.from, entry.to
                )));
            }
            model.set_intensity_by_name(&entry.from, &entry.to, entry.field.clone())?;
        }
        model.validate()?;
        Ok(model)
    }
}

fn default_max_jumps() -> usize {
    crate::simulate::DEFAULT_MAX_JUMPS
}

fn default_abs_slack() -> f64 {
    5e-3
}

fn default_steps_per_window() -> usize {
    128
}

fn default_significance() -> f64 {
    0.01
}

fn default_time_bins() -> usize {
    4
}

fn default_min_group() -> usize {
    30
}

/// Forward-equation residual subsection of a verify experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResidualSpec {
    /// Duration bound d at which the residual is evaluated.
    pub duration_bound: f64,
    /// Solve up to this time.
    pub end_time: f64,
    /// Coarse solver step; the check also runs at half this step.
    pub delta: f64,
    /// Times at which the residual is sampled; must lie on the step grid.
    pub sample_times: Vec<f64>,
}

/// Embedded-chain subsection of a verify experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddedSpec {
    pub horizon: f64,
    pub n_paths: u64,
    #[serde(default = "default_significance")]
    pub significance: f64,
    #[serde(default = "default_time_bins")]
    pub time_bins: usize,
    #[serde(default = "default_min_group")]
    pub min_group: usize,
}

/// The experiment section; `kind` selects the variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExperimentSpec {
    /// Sample paths and write them out.
    Simulate {
        initial_state: String,
        #[serde(default)]
        start_time: f64,
        #[serde(default)]
        initial_duration: f64,
        horizon: f64,
        n_paths: u64,
        #[serde(default = "default_max_jumps")]
        max_jumps: usize,
    },
    /// Propagate the joint state/duration law and write selected rows.
    Solve {
        initial_state: String,
        #[serde(default)]
        start_time: f64,
        #[serde(default)]
        initial_duration: f64,
        end_time: f64,
        delta: f64,
        /// Times whose duration measures are written out.
        output_times: Vec<f64>,
        /// Duration bounds reported in the summary at `end_time`.
        #[serde(default)]
        d_grid: Vec<f64>,
    },
    /// Run the structural verification battery.
    Verify {
        initial_state: String,
        #[serde(default)]
        time: f64,
        #[serde(default)]
        duration: f64,
        /// Look-ahead windows for the Monte-Carlo checks.
        h_grid: Vec<f64>,
        /// Windows for the difference-quotient checks; these usually need to
        /// be much smaller than `h_grid`. Defaults to `h_grid`.
        #[serde(default)]
        quotient_h_grid: Option<Vec<f64>>,
        n_paths: u64,
        #[serde(default = "default_max_jumps")]
        max_jumps: usize,
        #[serde(default = "default_steps_per_window")]
        steps_per_window: usize,
        #[serde(default)]
        residual: Option<ResidualSpec>,
        #[serde(default)]
        embedded: Option<EmbeddedSpec>,
    },
    /// Estimate transition laws by Monte Carlo and compare against the
    /// solver at one time point.
    Compare {
        initial_state: String,
        #[serde(default)]
        start_time: f64,
        #[serde(default)]
        initial_duration: f64,
        time: f64,
        delta: f64,
        n_paths: u64,
        /// Duration bounds compared per destination state.
        d_grid: Vec<f64>,
        /// Allowed deterministic discrepancy on top of 3 standard errors.
        #[serde(default = "default_abs_slack")]
        abs_slack: f64,
        #[serde(default = "default_max_jumps")]
        max_jumps: usize,
    },
}

impl ExperimentSpec {
    /// The `kind` tag as written in config files.
    pub fn kind(&self) -> &'static str {
        match self {
            ExperimentSpec::Simulate { .. } => "simulate",
            ExperimentSpec::Solve { .. } => "solve",
            ExperimentSpec::Verify { .. } => "verify",
            ExperimentSpec::Compare { .. } => "compare",
        }
    }
}

/// A complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seed: u64,
    /// Where outputs go; the CLI can override it.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub model: ModelSpec,
    pub experiment: ExperimentSpec,
}

fn check_grid(name: &str, grid: &[f64], require_positive: bool) -> Result<(), ConfigError> {
    for w in grid.windows(2) {
        // partial_cmp keeps NaN anywhere in the grid an error, not a pass.
        if w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less) {
            return Err(invalid(format!("{name} must be strictly increasing")));
        }
    }
    if let Some(first) = grid.first() {
        if !first.is_finite() || (require_positive && *first <= 0.0) || *first < 0.0 {
            return Err(invalid(format!(
                "{name} must hold finite {} values",
                if require_positive {
                    "positive"
                } else {
                    "nonnegative"
                }
            )));
        }
    }
    if let Some(last) = grid.last() {
        if !last.is_finite() {
            return Err(invalid(format!("{name} must hold finite values")));
        }
    }
    Ok(())
}

impl ExperimentConfig {
    /// Parse a configuration from JSON text (no validation yet).
    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Read and parse a configuration file (no validation yet).
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    /// Enforce schema version, resolvable states, and the grid/step
    /// requirements of the numerical layers.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::UnsupportedSchema {
                found: self.schema_version,
            });
        }
        let model = self.model.build()?;
        let resolve = |name: &str| -> Result<usize, ConfigError> {
            model
                .states()
                .index_of(name)
                .ok_or_else(|| invalid(format!("unknown initial_state {name:?}")))
        };
        match &self.experiment {
            ExperimentSpec::Simulate {
                initial_state,
                start_time,
                initial_duration,
                horizon,
                n_paths,
                max_jumps,
            } => {
                resolve(initial_state)?;
                if !(start_time.is_finite() && horizon.is_finite() && horizon >= start_time) {
                    return Err(invalid("horizon must be finite and at least start_time"));
                }
                if !(initial_duration.is_finite() && *initial_duration >= 0.0) {
                    return Err(invalid("initial_duration must be finite and nonnegative"));
                }
                if *n_paths == 0 || *max_jumps == 0 {
                    return Err(invalid("n_paths and max_jumps must be positive"));
                }
            }
            ExperimentSpec::Solve {
                initial_state,
                start_time,
                initial_duration,
                end_time,
                delta,
                output_times,
                d_grid,
            } => {
                resolve(initial_state)?;
                if !(start_time.is_finite() && end_time.is_finite() && end_time >= start_time) {
                    return Err(invalid("end_time must be finite and at least start_time"));
                }
                if !(initial_duration.is_finite() && *initial_duration >= 0.0) {
                    return Err(invalid("initial_duration must be finite and nonnegative"));
                }
                if !(delta.is_finite() && *delta > 0.0) {
                    return Err(invalid("delta must be finite and positive"));
                }
                check_grid("output_times", output_times, false)?;
                if output_times
                    .iter()
                    .any(|t| *t < *start_time || *t > *end_time)
                {
                    return Err(invalid(
                        "output_times must lie within [start_time, end_time]",
                    ));
                }
                check_grid("d_grid", d_grid, true)?;
            }
            ExperimentSpec::Verify {
                initial_state,
                time,
                duration,
                h_grid,
                quotient_h_grid,
                n_paths,
                max_jumps,
                steps_per_window,
                residual,
                embedded,
            } => {
                resolve(initial_state)?;
                if !(time.is_finite() && duration.is_finite() && *duration >= 0.0) {
                    return Err(invalid(
                        "time must be finite and duration finite and nonnegative",
                    ));
                }
                if h_grid.len() < 2 {
                    return Err(invalid("h_grid needs at least two windows"));
                }
                check_grid("h_grid", h_grid, true)?;
                if let Some(qh) = quotient_h_grid {
                    if qh.len() < 2 {
                        return Err(invalid("quotient_h_grid needs at least two windows"));
                    }
                    check_grid("quotient_h_grid", qh, true)?;
                }
                if *n_paths == 0 || *max_jumps == 0 || *steps_per_window == 0 {
                    return Err(invalid(
                        "n_paths, max_jumps and steps_per_window must be positive",
                    ));
                }
                if let Some(r) = residual {
                    if !(r.duration_bound > 0.0 && r.duration_bound.is_finite()) {
                        return Err(invalid("residual duration_bound must be positive"));
                    }
                    if !(r.delta > 0.0 && r.delta.is_finite()) {
                        return Err(invalid("residual delta must be positive"));
                    }
                    if !(r.end_time.is_finite() && r.end_time > *time) {
                        return Err(invalid("residual end_time must exceed time"));
                    }
                    check_grid("residual sample_times", &r.sample_times, false)?;
                    if r.sample_times.is_empty() {
                        return Err(invalid("residual sample_times must not be empty"));
                    }
                    if r.sample_times
                        .iter()
                        .any(|t| *t < *time || *t + r.delta > r.end_time + 1e-12)
                    {
                        return Err(invalid(
                            "residual sample_times must lie in [time, end_time - delta]",
                        ));
                    }
                }
                if let Some(e) = embedded {
                    if !(e.horizon.is_finite() && e.horizon > 0.0) {
                        return Err(invalid("embedded horizon must be positive"));
                    }
                    if e.n_paths == 0 || e.time_bins == 0 || e.min_group == 0 {
                        return Err(invalid(
                            "embedded n_paths, time_bins and min_group must be positive",
                        ));
                    }
                    if !(e.significance > 0.0 && e.significance < 1.0) {
                        return Err(invalid("embedded significance must lie in (0, 1)"));
                    }
                }
            }
            ExperimentSpec::Compare {
                initial_state,
                start_time,
                initial_duration,
                time,
                delta,
                n_paths,
                d_grid,
                abs_slack,
                max_jumps,
            } => {
                resolve(initial_state)?;
                if !(start_time.is_finite() && time.is_finite() && time > start_time) {
                    return Err(invalid("time must be finite and exceed start_time"));
                }
                if !(initial_duration.is_finite() && *initial_duration >= 0.0) {
                    return Err(invalid("initial_duration must be finite and nonnegative"));
                }
                if !(delta.is_finite() && *delta > 0.0) {
                    return Err(invalid("delta must be finite and positive"));
                }
                if *n_paths == 0 || *max_jumps == 0 {
                    return Err(invalid("n_paths and max_jumps must be positive"));
                }
                if d_grid.is_empty() {
                    return Err(invalid("d_grid must not be empty"));
                }
                check_grid("d_grid", d_grid, true)?;
                if !(abs_slack.is_finite() && *abs_slack > 0.0) {
                    return Err(invalid("abs_slack must be positive"));
                }
            }
        }
        Ok(())
    }

    /// Parse, then validate.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let cfg = Self::from_path(path)?;
        cfg.validate()?;
        Ok(cfg)
    }
}
