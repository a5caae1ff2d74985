//! Monte Carlo estimation of transition functionals from simulated paths.
//!
//! Every estimator reduces a batch of exactly-sampled trajectories to integer
//! event counts (a [`Tally`]), and only afterwards derives estimates,
//! standard errors, and confidence intervals. Because path k always draws
//! from RNG substream k and merging integer counts is associative, results
//! are bit-identical no matter how many threads run the batch.

use std::io::Write;

use rayon::prelude::*;

use crate::hazard::HazardKernel;
use crate::model::IntensityModel;
use crate::simulate::{path_rng, simulate_path, SimulationError, Trajectory};
use crate::stats;
use crate::StartState;

/// Integer event counts accumulated over a batch of simulated paths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tally {
    /// Number of paths recorded.
    pub n_paths: u64,
    /// One bucket per tracked event.
    pub counts: Vec<u64>,
}

impl Tally {
    /// An empty tally with `buckets` zeroed counters.
    pub fn new(buckets: usize) -> Self {
        Tally {
            n_paths: 0,
            counts: vec![0; buckets],
        }
    }

    /// Fold another tally over the same buckets into this one.
    pub fn merge(&mut self, other: &Tally) {
        assert_eq!(
            self.counts.len(),
            other.counts.len(),
            "tallies track different bucket sets"
        );
        self.n_paths += other.n_paths;
        for (c, o) in self.counts.iter_mut().zip(&other.counts) {
            *c += o;
        }
    }

    /// Sample proportion for one bucket.
    pub fn estimate(&self, bucket: usize) -> f64 {
        assert!(self.n_paths > 0, "no paths recorded");
        self.counts[bucket] as f64 / self.n_paths as f64
    }

    /// Binomial standard error √(p̂(1−p̂)/n) for one bucket.
    pub fn stderr(&self, bucket: usize) -> f64 {
        let p = self.estimate(bucket);
        (p * (1.0 - p) / self.n_paths as f64).sqrt()
    }

    /// Two-sided confidence interval for one bucket's proportion. Buckets
    /// with fewer than 10 hits (or misses) use the Wilson score interval,
    /// where the normal approximation is unreliable.
    pub fn confidence_interval(&self, bucket: usize, level: f64) -> (f64, f64) {
        let z = stats::z_for_level(level);
        let hits = self.counts[bucket];
        if hits < 10 || self.n_paths - hits < 10 {
            stats::wilson_interval(hits, self.n_paths, z)
        } else {
            stats::normal_interval(self.estimate(bucket), self.stderr(bucket), z)
        }
    }
}

/// Simulate `n_paths` trajectories from `start` up to `horizon` and fold each
/// through `record`, which increments whichever buckets the path hits. This
/// is the one parallel reduction all estimators share; anything expressible
/// as per-path integer counts inherits its reproducibility.
#[allow(clippy::too_many_arguments)]
pub fn collect_tally<F>(
    model: &IntensityModel,
    start: StartState,
    horizon: f64,
    n_paths: u64,
    seed: u64,
    max_jumps: usize,
    buckets: usize,
    record: F,
) -> Result<Tally, SimulationError>
where
    F: Fn(&Trajectory, &mut [u64]) + Sync,
{
    assert!(
        start.time.is_finite() && horizon.is_finite() && horizon >= start.time,
        "need a finite horizon at or after the start time"
    );
    assert!(start.state < model.n_states(), "start state out of range");
    (0..n_paths)
        .into_par_iter()
        .try_fold(
            || Tally::new(buckets),
            |mut tally, k| {
                let kernel = HazardKernel::new(model);
                let path = simulate_path(
                    &kernel,
                    start.state,
                    start.time,
                    start.duration,
                    horizon,
                    max_jumps,
                    &mut path_rng(seed, k),
                )?;
                record(&path, &mut tally.counts);
                tally.n_paths += 1;
                Ok(tally)
            },
        )
        .try_reduce(
            || Tally::new(buckets),
            |mut a, b| {
                a.merge(&b);
                Ok(a)
            },
        )
}

/// Count, per state, the paths occupying it at `time`. Bucket j estimates
/// the transition probability from `start` into state j.
pub fn transition_tally(
    model: &IntensityModel,
    start: StartState,
    time: f64,
    n_paths: u64,
    seed: u64,
    max_jumps: usize,
) -> Result<Tally, SimulationError> {
    assert!(n_paths > 0, "need at least one path");
    collect_tally(
        model,
        start,
        time,
        n_paths,
        seed,
        max_jumps,
        model.n_states(),
        move |path, counts| {
            let (state, _) = path.state_at(time);
            counts[state] += 1;
        },
    )
}

/// Count, per (state, duration bound), the paths in state j at `time` whose
/// duration there is at most `d_grid[g]` (a closed inequality). Bucket
/// `j * d_grid.len() + g` estimates the joint law P(state j, duration ≤ d_g).
pub fn duration_cdf_tally(
    model: &IntensityModel,
    start: StartState,
    time: f64,
    d_grid: &[f64],
    n_paths: u64,
    seed: u64,
    max_jumps: usize,
) -> Result<Tally, SimulationError> {
    assert!(n_paths > 0, "need at least one path");
    assert!(!d_grid.is_empty(), "need at least one duration bound");
    assert!(
        d_grid.windows(2).all(|w| w[0] < w[1]) && d_grid.iter().all(|d| d.is_finite() && *d >= 0.0),
        "duration bounds must be finite, nonnegative, and strictly increasing"
    );
    let g_len = d_grid.len();
    let d_grid = d_grid.to_vec();
    collect_tally(
        model,
        start,
        time,
        n_paths,
        seed,
        max_jumps,
        model.n_states() * g_len,
        move |path, counts| {
            let (state, duration) = path.state_at(time);
            let first = d_grid.partition_point(|d| *d < duration);
            for g in first..g_len {
                counts[state * g_len + g] += 1;
            }
        },
    )
}

/// Count, per window length, the paths with at least two jumps in
/// `(time, time + h_grid[k]]`. Bucket k estimates the multi-jump probability
/// for the k-th window.
pub fn multijump_tally(
    model: &IntensityModel,
    start: StartState,
    time: f64,
    h_grid: &[f64],
    n_paths: u64,
    seed: u64,
    max_jumps: usize,
) -> Result<Tally, SimulationError> {
    assert!(n_paths > 0, "need at least one path");
    assert!(!h_grid.is_empty(), "need at least one window length");
    assert!(
        h_grid.windows(2).all(|w| w[0] < w[1]) && h_grid.iter().all(|h| h.is_finite() && *h > 0.0),
        "window lengths must be finite, positive, and strictly increasing"
    );
    assert!(time >= start.time, "window start before the path start");
    let horizon = time + h_grid.last().unwrap();
    let h_grid = h_grid.to_vec();
    collect_tally(
        model,
        start,
        horizon,
        n_paths,
        seed,
        max_jumps,
        h_grid.len(),
        move |path, counts| {
            for (k, &h) in h_grid.iter().enumerate() {
                if path.jumps_in(time, time + h) >= 2 {
                    counts[k] += 1;
                }
            }
        },
    )
}

/// One scalar estimate with its conditioning point: the probability of being
/// in `to_state` at `time`, given `from_state` held since `start_time` with
/// `initial_duration` already on the clock — restricted to durations at most
/// `duration_bound` when one is set.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRow {
    pub from_state: usize,
    pub to_state: usize,
    pub start_time: f64,
    pub time: f64,
    pub initial_duration: f64,
    /// Upper duration bound of the estimated event; `None` for the plain
    /// state marginal.
    pub duration_bound: Option<f64>,
    pub estimate: f64,
    pub stderr: f64,
    pub n_paths: u64,
}

/// Estimate the transition probabilities into every state at `time`.
pub fn estimate_transition(
    model: &IntensityModel,
    start: StartState,
    time: f64,
    n_paths: u64,
    seed: u64,
    max_jumps: usize,
) -> Result<Vec<EstimateRow>, SimulationError> {
    let tally = transition_tally(model, start, time, n_paths, seed, max_jumps)?;
    Ok((0..model.n_states())
        .map(|j| EstimateRow {
            from_state: start.state,
            to_state: j,
            start_time: start.time,
            time,
            initial_duration: start.duration,
            duration_bound: None,
            estimate: tally.estimate(j),
            stderr: tally.stderr(j),
            n_paths: tally.n_paths,
        })
        .collect())
}

/// Estimate the joint state–duration law P(state j, duration ≤ d) at `time`
/// over every state and every bound in `d_grid`.
pub fn estimate_duration_cdf(
    model: &IntensityModel,
    start: StartState,
    time: f64,
    d_grid: &[f64],
    n_paths: u64,
    seed: u64,
    max_jumps: usize,
) -> Result<Vec<EstimateRow>, SimulationError> {
    let tally = duration_cdf_tally(model, start, time, d_grid, n_paths, seed, max_jumps)?;
    let g_len = d_grid.len();
    let mut rows = Vec::with_capacity(model.n_states() * g_len);
    for j in 0..model.n_states() {
        for (g, &d) in d_grid.iter().enumerate() {
            let bucket = j * g_len + g;
            rows.push(EstimateRow {
                from_state: start.state,
                to_state: j,
                start_time: start.time,
                time,
                initial_duration: start.duration,
                duration_bound: Some(d),
                estimate: tally.estimate(bucket),
                stderr: tally.stderr(bucket),
                n_paths: tally.n_paths,
            });
        }
    }
    Ok(rows)
}

/// A probability estimate attached to one look-ahead window length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowEstimate {
    pub window: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub n_paths: u64,
}

/// Estimate, for each window length, the probability of two or more jumps in
/// `(time, time + h]`.
pub fn estimate_multijump(
    model: &IntensityModel,
    start: StartState,
    time: f64,
    h_grid: &[f64],
    n_paths: u64,
    seed: u64,
    max_jumps: usize,
) -> Result<Vec<WindowEstimate>, SimulationError> {
    let tally = multijump_tally(model, start, time, h_grid, n_paths, seed, max_jumps)?;
    Ok(h_grid
        .iter()
        .enumerate()
        .map(|(k, &h)| WindowEstimate {
            window: h,
            estimate: tally.estimate(k),
            stderr: tally.stderr(k),
            n_paths: tally.n_paths,
        })
        .collect())
}

/// Write estimate rows as CSV. Floats carry 12 significant digits; a missing
/// duration bound renders as `total`.
pub fn write_estimates_csv<W: Write>(mut w: W, rows: &[EstimateRow]) -> std::io::Result<()> {
    writeln!(
        w,
        "from,to,start_time,time,initial_duration,duration_bound,estimate,stderr,n_paths"
    )?;
    for r in rows {
        let bound = match r.duration_bound {
            Some(d) => format!("{d:.11e}"),
            None => "total".to_owned(),
        };
        writeln!(
            w,
            "{},{},{:.11e},{:.11e},{:.11e},{},{:.11e},{:.11e},{}",
            r.from_state,
            r.to_state,
            r.start_time,
            r.time,
            r.initial_duration,
            bound,
            r.estimate,
            r.stderr,
            r.n_paths
        )?;
    }
    Ok(())
}
