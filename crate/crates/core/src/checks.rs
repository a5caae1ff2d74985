//! Structural verification of the process laws against their defining
//! identities, by Monte Carlo and by the forward solver.
//!
//! Each check targets one property a correctly built process must satisfy:
//! multiple jumps in a short window are O(h²) against an explicit integral
//! bound, quick round-trips vanish at rate o(h), difference quotients of the
//! transition matrix converge to the intensity matrix at first order and stay
//! inside a dominating constant, the forward equation residual shrinks
//! linearly with the solver step, and the embedded jump chain forgets
//! everything but the current state and entry time. Monte Carlo checks
//! compare against bounds widened by three standard errors; solver checks are
//! deterministic.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::Exp1;
use serde::Serialize;
use thiserror::Error;

use crate::hazard::HazardError;
use crate::model::{IntensityModel, ModelError};
use crate::monte_carlo::{collect_tally, multijump_tally};
use crate::quad::QuadError;
use crate::simulate::{path_rng, simulate_batch, Event, SimulationError, Trajectory};
use crate::solver::{solve_row, SolverError};
use crate::stats;
use crate::StartState;

/// Errors from running verification checks.
#[derive(Debug, Error)]
pub enum CheckError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Hazard(#[from] HazardError),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("failed to write check reports: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to encode check reports: {0}")]
    Json(#[from] serde_json::Error),
}

/// Outcome of one named check, with its full evidence attached.
#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub pass: bool,
    /// Relative slack to the failure boundary; negative when failed.
    pub margin: f64,
    pub details: serde_json::Value,
}

/// Serialize reports as pretty JSON (an array of report objects).
pub fn write_reports_json<W: std::io::Write>(
    mut w: W,
    reports: &[CheckReport],
) -> Result<(), CheckError> {
    serde_json::to_writer_pretty(&mut w, reports)?;
    writeln!(w)?;
    Ok(())
}

fn to_report<T: Serialize>(name: &str, pass: bool, margin: f64, details: &T) -> CheckReport {
    CheckReport {
        name: name.to_owned(),
        pass,
        margin,
        details: serde_json::to_value(details).expect("check details serialize"),
    }
}

/// Composite Simpson rule over `panels` panels with a fallible integrand;
/// enough for the smooth or piecewise-smooth envelope integrals below.
fn composite_simpson<F>(f: F, a: f64, b: f64, panels: usize) -> Result<f64, CheckError>
where
    F: Fn(f64) -> Result<f64, CheckError>,
{
    if a == b {
        return Ok(0.0);
    }
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let hi = lo + h;
        let mid = 0.5 * (lo + hi);
        total += (h / 6.0) * (f(lo)? + 4.0 * f(mid)? + f(hi)?);
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// Two-jump bound
// ---------------------------------------------------------------------------

/// Integral upper bound for the probability of two or more jumps in
/// (t, t+h] starting from duration `u` at `t`: the first-jump rate along the
/// characteristic times the worst exit rate available after a reset,
/// integrated over the window. For rates bounded by M it reduces to M²h²/2.
pub fn two_jump_bound(model: &IntensityModel, t: f64, u: f64, h: f64) -> Result<f64, CheckError> {
    let end = t + h;
    let first_rate =
        |v: f64| -> Result<f64, CheckError> { Ok(model.max_total_rate(v, u + (v - t))?) };
    let reset_sup = |w: f64| -> Result<f64, CheckError> {
        // After the first jump the duration lies in [0, w − t].
        Ok(model.sup_norm(w, w, 0.0, w - t, 64)?)
    };
    composite_simpson(
        |v| {
            let inner = composite_simpson(reset_sup, v, end, 64)?;
            Ok(first_rate(v)? * inner)
        },
        t,
        end,
        64,
    )
}

/// Evidence for one window of the two-jump check.
#[derive(Debug, Clone, Serialize)]
pub struct TwoJumpWindow {
    pub h: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub bound: f64,
}

/// Result of the two-jump check across a grid of windows.
#[derive(Debug, Clone, Serialize)]
pub struct TwoJumpCheck {
    pub windows: Vec<TwoJumpWindow>,
    pub n_paths: u64,
    pub pass: bool,
    pub margin: f64,
}

impl TwoJumpCheck {
    pub fn report(&self) -> CheckReport {
        to_report("two_jump_bound", self.pass, self.margin, self)
    }
}

/// Estimate P(≥2 jumps in (t, t+h]) for every window and compare against
/// [`two_jump_bound`] widened by three standard errors.
pub fn check_two_jump(
    model: &IntensityModel,
    start: StartState,
    h_grid: &[f64],
    n_paths: u64,
    seed: u64,
    max_jumps: usize,
) -> Result<TwoJumpCheck, CheckError> {
    let tally = multijump_tally(model, start, start.time, h_grid, n_paths, seed, max_jumps)?;
    let mut windows = Vec::with_capacity(h_grid.len());
    let mut margin = f64::MAX;
    let mut pass = true;
    for (k, &h) in h_grid.iter().enumerate() {
        let estimate = tally.estimate(k);
        let stderr = tally.stderr(k);
        let bound = two_jump_bound(model, start.time, start.duration, h)?;
        let allowance = bound + 3.0 * stderr;
        pass &= estimate <= allowance;
        let scale = allowance.max(1e-12);
        margin = margin.min((allowance - estimate) / scale);
        windows.push(TwoJumpWindow {
            h,
            estimate,
            stderr,
            bound,
        });
    }
    Ok(TwoJumpCheck {
        windows,
        n_paths: tally.n_paths,
        pass,
        margin,
    })
}

// ---------------------------------------------------------------------------
// Quick cycles
// ---------------------------------------------------------------------------

/// Evidence for one window of the quick-cycle check.
#[derive(Debug, Clone, Serialize)]
pub struct QuickCycleWindow {
    pub h: f64,
    pub probability: f64,
    pub stderr: f64,
    /// probability / h, which must vanish as h ↓ 0.
    pub ratio: f64,
}

/// Result of the quick-cycle check: the probability of leaving and returning
/// within h is o(h).
#[derive(Debug, Clone, Serialize)]
pub struct QuickCycleCheck {
    pub windows: Vec<QuickCycleWindow>,
    pub sup_norm: f64,
    pub n_paths: u64,
    pub pass: bool,
    pub margin: f64,
}

impl QuickCycleCheck {
    pub fn report(&self) -> CheckReport {
        to_report("quick_cycles", self.pass, self.margin, self)
    }
}

/// Estimate P(same state at t+h but at least one jump in (t, t+h]) — a
/// departure and return — for every window. Such paths need two jumps, so
/// the ratio to h must shrink toward 0: the check requires the ratios to be
/// nonincreasing as h decreases (within noise) and the smallest-window ratio
/// to sit below M²h/2 plus noise, M the sup-norm over the window.
pub fn check_quick_cycles(
    model: &IntensityModel,
    start: StartState,
    h_grid: &[f64],
    n_paths: u64,
    seed: u64,
    max_jumps: usize,
) -> Result<QuickCycleCheck, CheckError> {
    assert!(
        h_grid.windows(2).all(|w| w[0] < w[1]) && !h_grid.is_empty(),
        "need strictly increasing windows"
    );
    let t = start.time;
    let h_max = *h_grid.last().unwrap();
    let grid = h_grid.to_vec();
    let home = start.state;
    let tally = collect_tally(
        model,
        start,
        t + h_max,
        n_paths,
        seed,
        max_jumps,
        grid.len(),
        move |path, counts| {
            for (k, &h) in grid.iter().enumerate() {
                let (state, _) = path.state_at(t + h);
                if state == home && path.jumps_in(t, t + h) >= 1 {
                    counts[k] += 1;
                }
            }
        },
    )?;
    let sup = model.sup_norm(t, t + h_max, 0.0, start.duration + h_max, 64)?;

    let mut windows = Vec::with_capacity(h_grid.len());
    for (k, &h) in h_grid.iter().enumerate() {
        let probability = tally.estimate(k);
        let stderr = tally.stderr(k);
        windows.push(QuickCycleWindow {
            h,
            probability,
            stderr,
            ratio: probability / h,
        });
    }

    let mut pass = true;
    let mut margin = f64::MAX;
    // Ratios ordered by window length must not grow as h shrinks.
    for pair in windows.windows(2) {
        let (small, large) = (&pair[0], &pair[1]);
        let noise = 3.0 * (small.stderr / small.h + large.stderr / large.h);
        let allowance = large.ratio + noise;
        pass &= small.ratio <= allowance;
        let scale = allowance.max(1e-12);
        margin = margin.min((allowance - small.ratio) / scale);
    }
    // The smallest window pins the vanishing rate: ratio ≤ M²h/2 + noise.
    let first = &windows[0];
    let allowance = 0.5 * sup * sup * first.h + 3.0 * first.stderr / first.h;
    pass &= first.ratio <= allowance;
    let scale = allowance.max(1e-12);
    margin = margin.min((allowance - first.ratio) / scale);

    Ok(QuickCycleCheck {
        windows,
        sup_norm: sup,
        n_paths: tally.n_paths,
        pass,
        margin,
    })
}

// ---------------------------------------------------------------------------
// Derivative limit
// ---------------------------------------------------------------------------

/// The matrix (P(t, t+h, u) − I)/h of transition difference quotients,
/// row i solved forward from (state i, time t, duration u) in `steps` steps.
pub fn difference_quotients(
    model: &IntensityModel,
    t: f64,
    u: f64,
    h: f64,
    steps: usize,
) -> Result<Vec<Vec<f64>>, CheckError> {
    assert!(
        h > 0.0 && steps > 0,
        "need a positive window and step count"
    );
    let n = model.n_states();
    let delta = h / steps as f64;
    let mut quotients = Vec::with_capacity(n);
    for i in 0..n {
        let seq = solve_row(
            model,
            StartState {
                state: i,
                time: t,
                duration: u,
            },
            t + h,
            delta,
        )?;
        let mut row = Vec::with_capacity(n);
        for j in 0..n {
            let p = seq.marginal(t + h, j)?;
            let identity = if i == j { 1.0 } else { 0.0 };
            row.push((p - identity) / h);
        }
        quotients.push(row);
    }
    Ok(quotients)
}

/// Error of the difference quotients against the intensity matrix for one
/// window.
#[derive(Debug, Clone, Serialize)]
pub struct QuotientError {
    pub h: f64,
    pub max_error: f64,
}

/// Result of the derivative-limit check: (P(t,t+h,u) − I)/h → Q(t,u).
#[derive(Debug, Clone, Serialize)]
pub struct DerivativeLimitCheck {
    pub errors: Vec<QuotientError>,
    /// Least-squares slope of log(error) against log(h).
    pub fitted_order: f64,
    pub final_error: f64,
    pub pass: bool,
    pub margin: f64,
}

impl DerivativeLimitCheck {
    pub fn report(&self) -> CheckReport {
        to_report("derivative_limit", self.pass, self.margin, self)
    }
}

/// Tolerances for the derivative-limit check: convergence order at least
/// [`MIN_ORDER`], error at the smallest window at most [`MAX_FINAL_ERROR`].
pub const MIN_ORDER: f64 = 0.9;
pub const MAX_FINAL_ERROR: f64 = 2e-2;

/// Drive h through `h_grid` (descending or ascending; sorted internally) and
/// verify the difference quotients converge to the intensity matrix at first
/// order: fitted log-log slope ≥ 0.9 and final error ≤ 2×10⁻².
pub fn check_derivative_limit(
    model: &IntensityModel,
    t: f64,
    u: f64,
    h_grid: &[f64],
    steps_per_window: usize,
) -> Result<DerivativeLimitCheck, CheckError> {
    assert!(
        h_grid.len() >= 2,
        "need at least two windows to fit a slope"
    );
    let mut hs = h_grid.to_vec();
    hs.sort_by(f64::total_cmp);

    let mut errors = Vec::with_capacity(hs.len());
    for &h in &hs {
        let quotients = difference_quotients(model, t, u, h, steps_per_window)?;
        let mut max_error = 0.0f64;
        for (i, row) in quotients.iter().enumerate() {
            for (j, &quotient) in row.iter().enumerate() {
                let target = model.rate(i, j, t, u)?;
                max_error = max_error.max((quotient - target).abs());
            }
        }
        errors.push(QuotientError { h, max_error });
    }

    // Least-squares slope in log-log coordinates, with a floor so an exact
    // model (zero error) cannot poison the fit.
    let pts: Vec<(f64, f64)> = errors
        .iter()
        .map(|e| (e.h.ln(), e.max_error.max(1e-15).ln()))
        .collect();
    let n_pts = pts.len() as f64;
    let mean_x = pts.iter().map(|p| p.0).sum::<f64>() / n_pts;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / n_pts;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let fitted_order = sxy / sxx;
    let final_error = errors[0].max_error;

    let exact = errors.iter().all(|e| e.max_error < 1e-12);
    let pass = (exact || fitted_order >= MIN_ORDER) && final_error <= MAX_FINAL_ERROR;
    let margin = if exact {
        1.0
    } else {
        ((fitted_order - MIN_ORDER) / MIN_ORDER)
            .min((MAX_FINAL_ERROR - final_error) / MAX_FINAL_ERROR)
    };
    Ok(DerivativeLimitCheck {
        errors,
        fitted_order,
        final_error,
        pass,
        margin,
    })
}

// ---------------------------------------------------------------------------
// Dominating bound
// ---------------------------------------------------------------------------

/// The dominating constant C(t, u) = 2·A·(1 + B) controlling all difference
/// quotients over windows h ∈ (0, 1]: A is the largest exit rate along the
/// characteristic from (t, u), B the largest exit rate at any duration
/// reachable after a reset inside the window.
pub fn dominating_bound(model: &IntensityModel, t: f64, u: f64) -> Result<f64, CheckError> {
    // A = sup over s ∈ [t, t+1] of the worst exit rate at (s, u + s − t):
    // scan a dense grid joined with every field breakpoint mapped onto the
    // characteristic.
    let mut s_points: Vec<f64> = (0..=512).map(|k| t + k as f64 / 512.0).collect();
    for i in 0..model.n_states() {
        for (_, field) in model.row_entries(i) {
            for &c in field.t_cuts() {
                if c > t && c < t + 1.0 {
                    s_points.push(c);
                }
            }
            for &c in field.u_cuts() {
                let s = c - (u - t);
                if s > t && s < t + 1.0 {
                    s_points.push(s);
                }
            }
        }
    }
    let mut a = 0.0f64;
    for &s in &s_points {
        a = a.max(model.max_total_rate(s, u + (s - t))?);
    }

    // B = sup over t ≤ s ≤ v ≤ t+1 of the worst exit rate at (v, v − s):
    // for each v the reachable durations fill [0, v − t].
    let mut b = 0.0f64;
    for k in 0..=128 {
        let v = t + k as f64 / 128.0;
        b = b.max(model.sup_norm(v, v, 0.0, v - t, 64)?);
    }
    Ok(2.0 * a * (1.0 + b))
}

/// Worst difference-quotient row sum for one window.
#[derive(Debug, Clone, Serialize)]
pub struct RowSumSample {
    pub h: f64,
    pub max_row_sum: f64,
}

/// Result of the dominating-bound check.
#[derive(Debug, Clone, Serialize)]
pub struct DominatingBoundCheck {
    pub bound: f64,
    pub samples: Vec<RowSumSample>,
    pub worst_row_sum: f64,
    pub pass: bool,
    pub margin: f64,
}

impl DominatingBoundCheck {
    pub fn report(&self) -> CheckReport {
        to_report("dominating_bound", self.pass, self.margin, self)
    }
}

/// Sweep `n_windows` window lengths h = k/n over (0, 1] and verify every
/// absolute row sum of (P(t,t+h,u) − I)/h stays below [`dominating_bound`].
pub fn check_dominating_bound(
    model: &IntensityModel,
    t: f64,
    u: f64,
    n_windows: usize,
    steps_per_window: usize,
) -> Result<DominatingBoundCheck, CheckError> {
    assert!(n_windows > 0);
    let bound = dominating_bound(model, t, u)?;
    let mut samples = Vec::with_capacity(n_windows);
    let mut worst = 0.0f64;
    for k in 1..=n_windows {
        let h = k as f64 / n_windows as f64;
        let quotients = difference_quotients(model, t, u, h, steps_per_window)?;
        let mut max_row_sum = 0.0f64;
        for row in &quotients {
            max_row_sum = max_row_sum.max(row.iter().map(|q| q.abs()).sum());
        }
        worst = worst.max(max_row_sum);
        samples.push(RowSumSample { h, max_row_sum });
    }
    let pass = worst <= bound;
    let margin = (bound - worst) / bound.max(1e-12);
    Ok(DominatingBoundCheck {
        bound,
        samples,
        worst_row_sum: worst,
        pass,
        margin,
    })
}

// ---------------------------------------------------------------------------
// Forward-equation residual
// ---------------------------------------------------------------------------

/// Residual of the forward equation at one sampled time.
#[derive(Debug, Clone, Serialize)]
pub struct ResidualSample {
    pub time: f64,
    pub state: usize,
    pub residual: f64,
}

/// Result of the forward-residual check at two step sizes.
#[derive(Debug, Clone, Serialize)]
pub struct ResidualCheck {
    pub duration_bound: f64,
    pub coarse_delta: f64,
    pub coarse_residual: f64,
    pub fine_residual: f64,
    /// fine / coarse; first-order convergence pushes this toward 1/2.
    pub factor: f64,
    pub samples: Vec<ResidualSample>,
    pub pass: bool,
    pub margin: f64,
}

impl ResidualCheck {
    pub fn report(&self) -> CheckReport {
        to_report("forward_residual", self.pass, self.margin, self)
    }
}

/// Halving the step must cut the residual by at least this factor.
pub const MAX_RESIDUAL_FACTOR: f64 = 0.6;

/// Largest forward-equation residual over the sample times and all states
/// other than the initial one: the time derivative of P(state j, duration ≤
/// d) must equal influx minus outflow minus the duration density at d.
/// The time derivative is taken as a right difference across one step.
pub fn forward_residual(
    model: &IntensityModel,
    start: StartState,
    d: f64,
    end_time: f64,
    delta: f64,
    sample_times: &[f64],
) -> Result<Vec<ResidualSample>, CheckError> {
    let seq = solve_row(model, start, end_time, delta)?;
    let mut samples = Vec::new();
    for &t in sample_times {
        for j in 0..model.n_states() {
            if j == start.state {
                continue;
            }
            let lhs = (seq.cdf(t + delta, j, d)? - seq.cdf(t, j, d)?) / delta;
            let rhs = seq.influx_rate(model, t, j)?
                - seq.outflow_rate_upto(model, t, j, d)?
                - seq.duration_left_derivative(model, t, j, d)?;
            samples.push(ResidualSample {
                time: t,
                state: j,
                residual: (lhs - rhs).abs(),
            });
        }
    }
    Ok(samples)
}

/// Run [`forward_residual`] at `delta` and `delta/2` and require the maximal
/// residual to shrink by at least [`MAX_RESIDUAL_FACTOR`].
pub fn check_forward_residual(
    model: &IntensityModel,
    start: StartState,
    d: f64,
    end_time: f64,
    delta: f64,
    sample_times: &[f64],
) -> Result<ResidualCheck, CheckError> {
    let coarse = forward_residual(model, start, d, end_time, delta, sample_times)?;
    let fine = forward_residual(model, start, d, end_time, 0.5 * delta, sample_times)?;
    let max_of =
        |samples: &[ResidualSample]| samples.iter().map(|s| s.residual).fold(0.0f64, f64::max);
    let coarse_residual = max_of(&coarse);
    let fine_residual = max_of(&fine);
    // A floor keeps exactly-zero residuals (trivial models) from dividing out.
    let allowance = MAX_RESIDUAL_FACTOR * coarse_residual + 1e-12;
    let factor = fine_residual / coarse_residual.max(1e-300);
    let pass = fine_residual <= allowance;
    let margin = (allowance - fine_residual) / allowance.max(1e-12);
    Ok(ResidualCheck {
        duration_bound: d,
        coarse_delta: delta,
        coarse_residual,
        fine_residual,
        factor,
        samples: coarse,
        pass,
        margin,
    })
}

// ---------------------------------------------------------------------------
// Embedded-chain memorylessness
// ---------------------------------------------------------------------------

/// One sojourn drawn from a trajectory: the state it was spent in, the state
/// before that (None for the first sojourn), when it began, how long it
/// lasted, and where it went (None when the horizon cut it off).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainRecord {
    pub prev2: Option<usize>,
    pub prev1: usize,
    pub entered_at: f64,
    pub sojourn: f64,
    pub dest: Option<usize>,
}

/// Tuning for the embedded-chain test.
#[derive(Debug, Clone, Serialize)]
pub struct EmbeddedChainSettings {
    /// Family-wise significance level (Bonferroni-corrected).
    pub significance: f64,
    /// Number of entry-time bins (quantiles of the pooled entry times).
    pub time_bins: usize,
    /// Smallest group size admitted to a comparison.
    pub min_group: usize,
}

impl Default for EmbeddedChainSettings {
    fn default() -> Self {
        EmbeddedChainSettings {
            significance: 0.01,
            time_bins: 4,
            min_group: 30,
        }
    }
}

/// One performed comparison inside the embedded-chain test.
#[derive(Debug, Clone, Serialize)]
pub struct ChainComparison {
    /// Which conditioning bin: current state and entry-time bin.
    pub bin: String,
    /// "sojourn-ks" between two predecessor groups, or "destination-chi2"
    /// across all predecessor groups.
    pub kind: String,
    pub p_value: f64,
    pub sample_size: u64,
}

/// Result of the embedded-chain memorylessness test.
#[derive(Debug, Clone, Serialize)]
pub struct EmbeddedChainReport {
    pub n_records: usize,
    pub comparisons: Vec<ChainComparison>,
    pub skipped: Vec<String>,
    pub bonferroni_alpha: f64,
    pub min_p: f64,
    pub pass: bool,
    pub margin: f64,
}

impl EmbeddedChainReport {
    pub fn report(&self) -> CheckReport {
        to_report("embedded_chain", self.pass, self.margin, self)
    }
}

/// Extract every sojourn of every path as a [`ChainRecord`], including the
/// final censored one. Paths must start with a fresh duration clock so that
/// entry times are exact.
pub fn embedded_chain_records(paths: &[Trajectory]) -> Vec<ChainRecord> {
    let mut records = Vec::new();
    for path in paths {
        assert!(
            path.initial_duration == 0.0,
            "sojourn extraction needs a fresh duration clock at the start"
        );
        let mut prev2 = None;
        let mut state = path.initial_state;
        let mut entered_at = path.start_time;
        for event in &path.events {
            records.push(ChainRecord {
                prev2,
                prev1: state,
                entered_at,
                sojourn: event.time - entered_at,
                dest: Some(event.state),
            });
            prev2 = Some(state);
            state = event.state;
            entered_at = event.time;
        }
        records.push(ChainRecord {
            prev2,
            prev1: state,
            entered_at,
            sojourn: path.horizon - entered_at,
            dest: None,
        });
    }
    records
}

/// Test that sojourn lengths and destinations depend on the past only
/// through the current state and its entry time. Records are binned by
/// (current state, entry-time quantile); within each bin the records are
/// grouped by the predecessor state and the groups compared pairwise by a
/// two-sample KS test on sojourns and jointly by a chi-square test on
/// destinations. To neutralize horizon censoring, sojourns in a bin are
/// capped at the span from the bin's upper time edge to the horizon — the
/// capped value is fully observed for every record in the bin — and
/// destination tests keep only records that jumped within that cap. All
/// p-values face a Bonferroni-corrected threshold.
///
/// Entry-time binning absorbs calendar-time inhomogeneity only up to the
/// bin width, so strongly time-dependent intensities can need more bins.
pub fn embedded_chain_test(
    records: &[ChainRecord],
    horizon: f64,
    settings: &EmbeddedChainSettings,
) -> EmbeddedChainReport {
    assert!(settings.time_bins >= 1 && settings.significance > 0.0);
    let mut skipped = Vec::new();

    // Pooled entry-time quantiles define the bin edges.
    let mut entries: Vec<f64> = records.iter().map(|r| r.entered_at).collect();
    entries.sort_by(f64::total_cmp);
    let mut edges = Vec::new();
    for k in 1..settings.time_bins {
        let idx = (k * entries.len()) / settings.time_bins;
        edges.push(entries[idx.min(entries.len() - 1)]);
    }

    // Bin key: (current state, entry-time bin); group key inside: prev2.
    type HistoryBins<'a> = BTreeMap<(usize, usize), BTreeMap<Option<usize>, Vec<&'a ChainRecord>>>;
    let mut bins: HistoryBins<'_> = BTreeMap::new();
    for r in records {
        let b = edges.partition_point(|&e| e <= r.entered_at);
        bins.entry((r.prev1, b))
            .or_default()
            .entry(r.prev2)
            .or_default()
            .push(r);
    }

    let group_name = |g: &Option<usize>| match g {
        None => "start".to_owned(),
        Some(s) => format!("state {s}"),
    };

    let mut comparisons = Vec::new();
    for ((state, b), groups) in &bins {
        let bin_label = format!("state {state} / time bin {b}");
        let upper_edge = if *b < edges.len() { edges[*b] } else { horizon };
        let cap = horizon - upper_edge;
        if cap <= 0.0 {
            skipped.push(format!("{bin_label}: no span left before the horizon"));
            continue;
        }
        let eligible: Vec<(&Option<usize>, &Vec<&ChainRecord>)> = groups
            .iter()
            .filter(|(_, v)| v.len() >= settings.min_group)
            .collect();
        if eligible.len() < 2 {
            skipped.push(format!(
                "{bin_label}: fewer than two predecessor groups of {} records",
                settings.min_group
            ));
            continue;
        }

        // Pairwise KS on capped sojourns.
        for (gi, (ga, va)) in eligible.iter().enumerate() {
            for (gb, vb) in eligible.iter().skip(gi + 1) {
                let xa: Vec<f64> = va.iter().map(|r| r.sojourn.min(cap)).collect();
                let xb: Vec<f64> = vb.iter().map(|r| r.sojourn.min(cap)).collect();
                let ks = stats::ks_two_sample(&xa, &xb);
                comparisons.push(ChainComparison {
                    bin: bin_label.clone(),
                    kind: format!("sojourn-ks: {} vs {}", group_name(ga), group_name(gb)),
                    p_value: ks.p_value,
                    sample_size: (xa.len() + xb.len()) as u64,
                });
            }
        }

        // Joint chi-square on destinations of records that jumped within
        // the cap (those jumps are observed for every entry in the bin).
        let n_states = 1 + records
            .iter()
            .map(|r| r.prev1.max(r.dest.unwrap_or(0)))
            .max()
            .unwrap_or(0);
        let mut table: Vec<Vec<u64>> = Vec::new();
        let mut table_n = 0u64;
        for (_, v) in &eligible {
            let mut row = vec![0u64; n_states];
            for r in v.iter().filter(|r| r.sojourn < cap) {
                let dest = r.dest.expect("a jump within the cap is observed");
                row[dest] += 1;
                table_n += 1;
            }
            table.push(row);
        }
        match stats::chi_square_independence(&table) {
            Some(chi) if chi.min_expected >= 5.0 => {
                comparisons.push(ChainComparison {
                    bin: bin_label.clone(),
                    kind: "destination-chi2".to_owned(),
                    p_value: chi.p_value,
                    sample_size: table_n,
                });
            }
            _ => skipped.push(format!(
                "{bin_label}: destination table too sparse for a chi-square test"
            )),
        }
    }

    let m = comparisons.len();
    let bonferroni_alpha = if m > 0 {
        settings.significance / m as f64
    } else {
        settings.significance
    };
    let min_p = comparisons
        .iter()
        .map(|c| c.p_value)
        .fold(f64::INFINITY, f64::min);
    let (pass, margin) = if m == 0 {
        skipped.push("no comparison had enough data; memorylessness untested".to_owned());
        (true, 0.0)
    } else {
        (
            min_p >= bonferroni_alpha,
            (min_p - bonferroni_alpha) / bonferroni_alpha,
        )
    };
    EmbeddedChainReport {
        n_records: records.len(),
        comparisons,
        skipped,
        bonferroni_alpha,
        min_p: if min_p.is_finite() { min_p } else { 1.0 },
        pass,
        margin,
    }
}

/// Simulate a batch and run the embedded-chain test on it.
pub fn check_embedded_chain(
    model: &IntensityModel,
    initial_state: usize,
    horizon: f64,
    n_paths: u64,
    seed: u64,
    max_jumps: usize,
    settings: &EmbeddedChainSettings,
) -> Result<EmbeddedChainReport, CheckError> {
    let paths = simulate_batch(
        model,
        initial_state,
        0.0,
        0.0,
        horizon,
        n_paths,
        max_jumps,
        seed,
    )?;
    let records = embedded_chain_records(&paths);
    Ok(embedded_chain_test(&records, horizon, settings))
}

/// A deliberately non-semi-Markov path generator on three states: the
/// sojourn rate is 1 for the first sojourn and afterwards 3.0 when the
/// predecessor state was 0, 0.5 otherwise; destinations are uniform over
/// the other two states. The embedded-chain test must reject it.
pub fn adversarial_two_step_paths(n_paths: u64, horizon: f64, seed: u64) -> Vec<Trajectory> {
    (0..n_paths)
        .map(|k| {
            let mut rng = path_rng(seed, k);
            let initial_state = (k % 3) as usize;
            let mut events = Vec::new();
            let mut prev2: Option<usize> = None;
            let mut state = initial_state;
            let mut t = 0.0;
            loop {
                let rate = match prev2 {
                    None => 1.0,
                    Some(0) => 3.0,
                    Some(_) => 0.5,
                };
                t += rng.sample::<f64, _>(Exp1) / rate;
                if t > horizon {
                    break;
                }
                let next = [(state + 1) % 3, (state + 2) % 3][rng.random_range(0..2)];
                prev2 = Some(state);
                events.push(Event {
                    time: t,
                    state: next,
                });
                state = next;
            }
            Trajectory {
                initial_state,
                start_time: 0.0,
                initial_duration: 0.0,
                horizon,
                events,
            }
        })
        .collect()
}
