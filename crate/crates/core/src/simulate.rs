//! Exact trajectory sampling by hazard inversion.
//!
//! A path is an alternating sequence of sojourns and jumps: from the current
//! (state, time, duration) the next jump time is drawn exactly by inverting
//! the accumulated hazard against an Exp(1) draw, the destination from the
//! rate split at that instant, and the duration clock resets to zero. Paths
//! end by censoring at the horizon.
//!
//! Reproducibility: every path gets its own counter-based RNG substream
//! derived from (seed, path index), so batches are bit-identical no matter
//! how work is distributed across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::hazard::{HazardError, HazardKernel, NextJump};
use crate::model::IntensityModel;

/// Default explosion guard: a single path may not jump more often than this.
pub const DEFAULT_MAX_JUMPS: usize = 1_000_000;

/// Errors from path simulation.
#[derive(Debug, Error)]
pub enum SimulationError {
    #[error(transparent)]
    Hazard(#[from] HazardError),
    #[error(
        "path exceeded {max_jumps} jumps before reaching the horizon; \
         the intensities may be explosive"
    )]
    JumpBudgetExceeded { max_jumps: usize },
}

/// One jump: at `time` the process entered `state`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub state: usize,
}

/// A sampled path on [start_time, horizon]: the initial condition plus the
/// strictly increasing jump sequence (each jump changes the state).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub initial_state: usize,
    pub start_time: f64,
    /// Duration already spent in the initial state at `start_time`.
    pub initial_duration: f64,
    pub horizon: f64,
    pub events: Vec<Event>,
}

impl Trajectory {
    /// State and duration at time `t ∈ [start_time, horizon]`. The path is
    /// càdlàg: at a jump time the post-jump state applies with duration 0.
    pub fn state_at(&self, t: f64) -> (usize, f64) {
        assert!(
            t >= self.start_time && t <= self.horizon,
            "query time {t} outside [{}, {}]",
            self.start_time,
            self.horizon
        );
        let idx = self.events.partition_point(|e| e.time <= t);
        if idx == 0 {
            (
                self.initial_state,
                self.initial_duration + (t - self.start_time),
            )
        } else {
            let e = &self.events[idx - 1];
            (e.state, t - e.time)
        }
    }

    /// Total number of jumps on the path.
    pub fn jump_count(&self) -> usize {
        self.events.len()
    }

    /// Number of jumps with time in the half-open window (a, b].
    pub fn jumps_in(&self, a: f64, b: f64) -> usize {
        self.events.partition_point(|e| e.time <= b) - self.events.partition_point(|e| e.time <= a)
    }
}

/// Sample one path from `(initial_state, start_time, initial_duration)` up to
/// `horizon`, drawing from `rng`. `max_jumps` guards against explosive
/// intensity specifications.
pub fn simulate_path<R: Rng + ?Sized>(
    kernel: &HazardKernel<'_>,
    initial_state: usize,
    start_time: f64,
    initial_duration: f64,
    horizon: f64,
    max_jumps: usize,
    rng: &mut R,
) -> Result<Trajectory, SimulationError> {
    let mut events = Vec::new();
    let mut state = initial_state;
    let mut clock = start_time;
    let mut duration = initial_duration;
    loop {
        match kernel.sample_next_jump(state, clock, duration, horizon, rng)? {
            NextJump::Censored => break,
            NextJump::Jump { time, to } => {
                if events.len() >= max_jumps {
                    return Err(SimulationError::JumpBudgetExceeded { max_jumps });
                }
                events.push(Event { time, state: to });
                state = to;
                clock = time;
                duration = 0.0;
            }
        }
    }
    Ok(Trajectory {
        initial_state,
        start_time,
        initial_duration,
        horizon,
        events,
    })
}

/// The RNG substream for path `path_index` of a run seeded with `seed`.
pub fn path_rng(seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index);
    rng
}

/// Simulate `paths` in parallel; path k always uses substream k of `seed`,
/// so the result does not depend on thread count or scheduling.
#[allow(clippy::too_many_arguments)]
pub fn simulate_batch(
    model: &IntensityModel,
    initial_state: usize,
    start_time: f64,
    initial_duration: f64,
    horizon: f64,
    n_paths: u64,
    max_jumps: usize,
    seed: u64,
) -> Result<Vec<Trajectory>, SimulationError> {
    (0..n_paths)
        .into_par_iter()
        .map(|k| {
            let kernel = HazardKernel::new(model);
            simulate_path(
                &kernel,
                initial_state,
                start_time,
                initial_duration,
                horizon,
                max_jumps,
                &mut path_rng(seed, k),
            )
        })
        .collect()
}
