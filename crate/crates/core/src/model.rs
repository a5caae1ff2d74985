//! State space and transition intensity fields.
//!
//! A process is specified by a finite set of named states together with, for
//! every ordered pair of distinct states (i, j), an intensity field
//! q_ij(t, u): the hazard of jumping from i to j at calendar time t when the
//! current sojourn in i has lasted u time units. Diagonal entries are never
//! stored; they are defined as q_ii(t, u) = −q_i(t, u) where
//! q_i = Σ_{j≠i} q_ij is the total exit rate, so every row of the intensity
//! matrix sums to zero by construction.
//!
//! All piecewise families evaluate right-continuously at their breakpoints,
//! which is the convention the sampling and quadrature layers rely on.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from model construction, validation, or field evaluation.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model has no states")]
    EmptyStateSpace,
    #[error("duplicate state name `{0}`")]
    DuplicateState(String),
    #[error("state names must be nonempty")]
    EmptyStateName,
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("state index {index} out of range for {n_states} states")]
    StateOutOfRange { index: usize, n_states: usize },
    #[error("state {0} may not carry an intensity onto itself")]
    SelfTransition(usize),
    #[error("duplicate intensity entry {from} -> {to}")]
    DuplicateEntry { from: usize, to: usize },
    #[error("non-finite parameter {name} = {value}")]
    NonFinite { name: &'static str, value: f64 },
    #[error("negative {name} = {value}; intensities must be nonnegative")]
    Negative { name: &'static str, value: f64 },
    #[error("power-law factor evaluated at negative argument {arg}")]
    NegativeDomain { arg: f64 },
    #[error("breakpoints must be strictly increasing and finite")]
    BadCuts,
    #[error("piecewise factor needs one more value than cuts (got {values} values, {cuts} cuts)")]
    PiecewiseShape { cuts: usize, values: usize },
    #[error("table needs at least two edges per axis and a matching value grid")]
    TableShape,
    #[error("query (t = {t}, u = {u}) lies outside the table domain")]
    OutsideTable { t: f64, u: f64 },
}

fn check_finite(name: &'static str, value: f64) -> Result<(), ModelError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(ModelError::NonFinite { name, value })
    }
}

fn check_nonnegative(name: &'static str, value: f64) -> Result<(), ModelError> {
    check_finite(name, value)?;
    if value < 0.0 {
        Err(ModelError::Negative { name, value })
    } else {
        Ok(())
    }
}

fn check_strictly_increasing(cuts: &[f64]) -> Result<(), ModelError> {
    if cuts.iter().any(|c| !c.is_finite()) || cuts.windows(2).any(|w| w[0] >= w[1]) {
        Err(ModelError::BadCuts)
    } else {
        Ok(())
    }
}

/// One-dimensional factor of a separable intensity field.
///
/// Factors are nonnegative functions of a single coordinate (calendar time or
/// sojourn duration). Step functions are right-continuous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Factor {
    /// `value` everywhere.
    Constant { value: f64 },
    /// `coeff · exp(rate · x)`; `rate` may be negative.
    Exponential { coeff: f64, rate: f64 },
    /// `coeff · x^exponent` with `exponent ≥ 0` and the convention `0^0 = 1`.
    /// Defined for `x ≥ 0` only.
    PowerLaw { coeff: f64, exponent: f64 },
    /// Right-continuous step function: `values[0]` on `(−∞, cuts[0])`,
    /// `values[k]` on `[cuts[k−1], cuts[k])`, and the last value from the
    /// last cut onwards. `cuts` may be empty, in which case the single value
    /// applies everywhere.
    PiecewiseConstant { cuts: Vec<f64>, values: Vec<f64> },
}

impl Factor {
    /// Evaluate the factor at `x`.
    pub fn eval(&self, x: f64) -> Result<f64, ModelError> {
        match self {
            Factor::Constant { value } => Ok(*value),
            Factor::Exponential { coeff, rate } => Ok(coeff * (rate * x).exp()),
            Factor::PowerLaw { coeff, exponent } => {
                if x < 0.0 {
                    Err(ModelError::NegativeDomain { arg: x })
                } else {
                    Ok(coeff * x.powf(*exponent))
                }
            }
            Factor::PiecewiseConstant { cuts, values } => {
                let idx = cuts.partition_point(|c| *c <= x);
                Ok(values[idx])
            }
        }
    }

    /// Check parameters: finite, nonnegative values, well-formed breakpoints.
    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            Factor::Constant { value } => check_nonnegative("constant factor value", *value),
            Factor::Exponential { coeff, rate } => {
                check_nonnegative("exponential coeff", *coeff)?;
                check_finite("exponential rate", *rate)
            }
            Factor::PowerLaw { coeff, exponent } => {
                check_nonnegative("power-law coeff", *coeff)?;
                check_nonnegative("power-law exponent", *exponent)
            }
            Factor::PiecewiseConstant { cuts, values } => {
                check_strictly_increasing(cuts)?;
                if values.len() != cuts.len() + 1 {
                    return Err(ModelError::PiecewiseShape {
                        cuts: cuts.len(),
                        values: values.len(),
                    });
                }
                for v in values {
                    check_nonnegative("piecewise value", *v)?;
                }
                Ok(())
            }
        }
    }

    /// Breakpoints at which the factor may jump (empty for smooth factors).
    pub fn cuts(&self) -> &[f64] {
        match self {
            Factor::PiecewiseConstant { cuts, .. } => cuts,
            _ => &[],
        }
    }
}

/// What a [`TableField`] does with queries outside its rectangular domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutsidePolicy {
    /// Reject the query with [`ModelError::OutsideTable`] (the default).
    #[default]
    Error,
    /// Clamp the query to the nearest table cell.
    Clamp,
}

/// Tabulated rates over a rectangular (t, u) grid, right-continuous in both
/// coordinates: `values[a][b]` applies on
/// `[t_edges[a], t_edges[a+1]) × [u_edges[b], u_edges[b+1])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableField {
    /// Calendar-time bin edges, strictly increasing, at least two.
    pub t_edges: Vec<f64>,
    /// Duration bin edges, strictly increasing, at least two.
    pub u_edges: Vec<f64>,
    /// Rates per (t bin, u bin); dimensions
    /// `(t_edges.len()−1) × (u_edges.len()−1)`.
    pub values: Vec<Vec<f64>>,
    /// Out-of-domain behaviour; errors by default.
    #[serde(default)]
    pub outside: OutsidePolicy,
}

impl TableField {
    fn bin(edges: &[f64], x: f64, outside: OutsidePolicy) -> Option<usize> {
        let n_bins = edges.len() - 1;
        if x < edges[0] || x >= edges[n_bins] {
            match outside {
                OutsidePolicy::Error => None,
                OutsidePolicy::Clamp => Some(if x < edges[0] { 0 } else { n_bins - 1 }),
            }
        } else {
            Some(edges.partition_point(|e| *e <= x) - 1)
        }
    }

    /// Evaluate the table at `(t, u)`.
    pub fn eval(&self, t: f64, u: f64) -> Result<f64, ModelError> {
        let a = Self::bin(&self.t_edges, t, self.outside);
        let b = Self::bin(&self.u_edges, u, self.outside);
        match (a, b) {
            (Some(a), Some(b)) => Ok(self.values[a][b]),
            _ => Err(ModelError::OutsideTable { t, u }),
        }
    }

    /// Check edges and value grid shape.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.t_edges.len() < 2 || self.u_edges.len() < 2 {
            return Err(ModelError::TableShape);
        }
        check_strictly_increasing(&self.t_edges)?;
        check_strictly_increasing(&self.u_edges)?;
        if self.values.len() != self.t_edges.len() - 1
            || self
                .values
                .iter()
                .any(|row| row.len() != self.u_edges.len() - 1)
        {
            return Err(ModelError::TableShape);
        }
        for row in &self.values {
            for v in row {
                check_nonnegative("table value", *v)?;
            }
        }
        Ok(())
    }
}

/// Intensity field q_ij(t, u) for one ordered pair of states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum IntensityField {
    /// Constant rate; the process leaves through this channel at a fixed
    /// hazard regardless of time and duration.
    Constant { rate: f64 },
    /// Separable field `time(t) · duration(u)`.
    Product { time: Factor, duration: Factor },
    /// Tabulated rates on a rectangular grid.
    Table(TableField),
}

impl IntensityField {
    /// Evaluate the field at calendar time `t` and duration `u`.
    pub fn eval(&self, t: f64, u: f64) -> Result<f64, ModelError> {
        match self {
            IntensityField::Constant { rate } => Ok(*rate),
            IntensityField::Product { time, duration } => Ok(time.eval(t)? * duration.eval(u)?),
            IntensityField::Table(table) => table.eval(t, u),
        }
    }

    /// Check field parameters.
    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            IntensityField::Constant { rate } => check_nonnegative("constant rate", *rate),
            IntensityField::Product { time, duration } => {
                time.validate()?;
                duration.validate()
            }
            IntensityField::Table(table) => table.validate(),
        }
    }

    /// Calendar-time breakpoints of the field (empty when none).
    pub fn t_cuts(&self) -> &[f64] {
        match self {
            IntensityField::Constant { .. } => &[],
            IntensityField::Product { time, .. } => time.cuts(),
            IntensityField::Table(table) => &table.t_edges,
        }
    }

    /// Duration breakpoints of the field (empty when none).
    pub fn u_cuts(&self) -> &[f64] {
        match self {
            IntensityField::Constant { .. } => &[],
            IntensityField::Product { duration, .. } => duration.cuts(),
            IntensityField::Table(table) => &table.u_edges,
        }
    }
}

/// Ordered set of named states; the index in the list is the state id used
/// everywhere else in the crate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpace {
    names: Vec<String>,
}

impl StateSpace {
    /// Build a state space from unique, nonempty names.
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self, ModelError> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(ModelError::EmptyStateSpace);
        }
        for (k, name) in names.iter().enumerate() {
            if name.is_empty() {
                return Err(ModelError::EmptyStateName);
            }
            if names[..k].contains(name) {
                return Err(ModelError::DuplicateState(name.clone()));
            }
        }
        Ok(StateSpace { names })
    }

    /// Number of states.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    /// True when the space has no states (never, for a validated space).
    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Name of state `i`.
    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    /// All names, in id order.
    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Id of the state called `name`.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// A full intensity specification: a state space plus one field per ordered
/// pair of distinct states (missing pairs mean "no direct transition").
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityModel {
    states: StateSpace,
    /// `entries[from][to]`; diagonal slots are always `None`.
    entries: Vec<Vec<Option<IntensityField>>>,
}

impl IntensityModel {
    /// Model over `states` with no transitions yet.
    pub fn new(states: StateSpace) -> Self {
        let n = states.len();
        IntensityModel {
            states,
            entries: vec![vec![None; n]; n],
        }
    }

    /// Install the field for `from → to`. Rejects self-transitions, unknown
    /// indices, duplicate installs, and invalid field parameters.
    pub fn set_intensity(
        &mut self,
        from: usize,
        to: usize,
        field: IntensityField,
    ) -> Result<(), ModelError> {
        let n = self.states.len();
        for index in [from, to] {
            if index >= n {
                return Err(ModelError::StateOutOfRange { index, n_states: n });
            }
        }
        if from == to {
            return Err(ModelError::SelfTransition(from));
        }
        if self.entries[from][to].is_some() {
            return Err(ModelError::DuplicateEntry { from, to });
        }
        field.validate()?;
        self.entries[from][to] = Some(field);
        Ok(())
    }

    /// Like [`set_intensity`](Self::set_intensity) but addressed by state name.
    pub fn set_intensity_by_name(
        &mut self,
        from: &str,
        to: &str,
        field: IntensityField,
    ) -> Result<(), ModelError> {
        let from = self
            .states
            .index_of(from)
            .ok_or_else(|| ModelError::UnknownState(from.to_owned()))?;
        let to = self
            .states
            .index_of(to)
            .ok_or_else(|| ModelError::UnknownState(to.to_owned()))?;
        self.set_intensity(from, to, field)
    }

    /// The state space.
    pub fn states(&self) -> &StateSpace {
        &self.states
    }

    /// Number of states.
    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    /// The installed field for `from → to`, if any. Diagonal pairs have none.
    pub fn entry(&self, from: usize, to: usize) -> Option<&IntensityField> {
        self.entries[from][to].as_ref()
    }

    /// Iterator over the installed fields leaving state `from`.
    pub fn row_entries(&self, from: usize) -> impl Iterator<Item = (usize, &IntensityField)> {
        self.entries[from]
            .iter()
            .enumerate()
            .filter_map(|(j, f)| f.as_ref().map(|f| (j, f)))
    }

    /// q_ij(t, u). Off-diagonal pairs without a field evaluate to 0; the
    /// diagonal is the negated total exit rate, so rows sum to zero exactly.
    pub fn rate(&self, from: usize, to: usize, t: f64, u: f64) -> Result<f64, ModelError> {
        if from == to {
            return Ok(-self.total_rate(from, t, u)?);
        }
        match self.entry(from, to) {
            Some(field) => field.eval(t, u),
            None => Ok(0.0),
        }
    }

    /// Total exit rate q_i(t, u) = Σ_{j≠i} q_ij(t, u).
    pub fn total_rate(&self, from: usize, t: f64, u: f64) -> Result<f64, ModelError> {
        let mut total = 0.0;
        for (_, field) in self.row_entries(from) {
            total += field.eval(t, u)?;
        }
        Ok(total)
    }

    /// Pointwise row-sup norm ‖Q(t, u)‖∞ = max_i q_i(t, u).
    pub fn max_total_rate(&self, t: f64, u: f64) -> Result<f64, ModelError> {
        let mut max = 0.0f64;
        for i in 0..self.n_states() {
            max = max.max(self.total_rate(i, t, u)?);
        }
        Ok(max)
    }

    /// Supremum of ‖Q(t, u)‖∞ over the rectangle
    /// `[t_lo, t_hi] × [u_lo, u_hi]`, computed by scanning a grid of
    /// `resolution + 1` points per axis enriched with every field breakpoint
    /// and the rectangle corners. Exact for the built-in families (their
    /// extrema sit on breakpoints or corners); the grid is defence in depth
    /// for composites.
    pub fn sup_norm(
        &self,
        t_lo: f64,
        t_hi: f64,
        u_lo: f64,
        u_hi: f64,
        resolution: usize,
    ) -> Result<f64, ModelError> {
        let t_points = self.axis_candidates(t_lo, t_hi, resolution, |f| f.t_cuts());
        let u_points = self.axis_candidates(u_lo, u_hi, resolution, |f| f.u_cuts());
        let mut sup = 0.0f64;
        for &t in &t_points {
            for &u in &u_points {
                sup = sup.max(self.max_total_rate(t, u)?);
            }
        }
        Ok(sup)
    }

    fn axis_candidates(
        &self,
        lo: f64,
        hi: f64,
        resolution: usize,
        cuts_of: impl Fn(&IntensityField) -> &[f64],
    ) -> Vec<f64> {
        let mut points = Vec::with_capacity(resolution + 2);
        let n = resolution.max(1);
        for k in 0..=n {
            points.push(lo + (hi - lo) * (k as f64) / (n as f64));
        }
        for row in &self.entries {
            for field in row.iter().flatten() {
                for &c in cuts_of(field) {
                    if c > lo && c < hi {
                        points.push(c);
                    }
                }
            }
        }
        points.sort_by(f64::total_cmp);
        points.dedup();
        points
    }

    /// Validate every installed field. Structural rules (no self-transitions,
    /// no duplicates) hold by construction; this re-checks field parameters,
    /// which matters for models deserialized from configuration.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.states.is_empty() {
            return Err(ModelError::EmptyStateSpace);
        }
        for row in &self.entries {
            for field in row.iter().flatten() {
                field.validate()?;
            }
        }
        Ok(())
    }
}
