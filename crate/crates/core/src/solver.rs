//! Forward propagation of the joint state–duration law on a duration grid.
//!
//! Conditioned on a start point, the law of (state, duration) at each grid
//! time is stored per state as mass in uniform duration cells [cΔ, (c+1)Δ)
//! plus a single atom: the never-jumped mass of the initial state, whose
//! duration u₀ + (t − s) is known exactly. Time steps equal the cell width,
//! so aging is an exact one-cell shift — the unit-speed transport part of
//! the forward equation costs no numerical diffusion. Within a step, cell
//! mass decays by the exit rate at the cell's characteristic midpoint, the
//! atom decays by its exactly integrated hazard, and whatever decays
//! re-enters the destination states' youngest cell. Outflow is computed as
//! mass − survivors and split across destinations proportionally, so total
//! mass is conserved to rounding by construction; the defect is measured
//! every step and reported.

use std::io::Write;

use thiserror::Error;

use rayon::prelude::*;

use crate::hazard::{HazardError, HazardKernel};
use crate::model::{IntensityModel, ModelError};
use crate::StartState;

/// Largest admissible per-step exit hazard Δ · sup‖rates‖; beyond this the
/// one-point midpoint decay is too coarse to trust.
pub const MAX_STEP_HAZARD: f64 = 0.5;

/// Mass-conservation defect that aborts a run as numerically unsound.
pub const MAX_CONSERVATION_DEFECT: f64 = 1e-4;

/// Relative tolerance for matching query times to grid times.
const GRID_TOL: f64 = 1e-9;

/// Errors from the forward solver.
#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Hazard(#[from] HazardError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("failed to write solver output: {0}")]
    Io(#[from] std::io::Error),
    #[error(
        "step {delta} is too coarse for intensities with sup-norm {sup_norm}; \
         need step × sup ≤ {MAX_STEP_HAZARD}"
    )]
    StepTooLarge { delta: f64, sup_norm: f64 },
    #[error("step size must be positive and finite, got {delta}")]
    BadStep { delta: f64 },
    #[error("end time {end} precedes start time {start}")]
    BackwardInterval { start: f64, end: f64 },
    #[error("interval of length {interval} is not a whole number of steps of {delta}")]
    Misaligned { interval: f64, delta: f64 },
    #[error("no solver row at time {time}; the grid covers [{start}, {end}] in steps of {delta}")]
    OffGrid {
        time: f64,
        start: f64,
        end: f64,
        delta: f64,
    },
    #[error("probability mass drifted by {defect} at time {time}; refine the step size")]
    ConservationLost { time: f64, defect: f64 },
    #[error(
        "the duration law of initial state {state} mixes cells with an atom; \
         its left duration derivative is defined only for other states \
         (recover the initial state by complementing)"
    )]
    DiagonalDurationDerivative { state: usize },
    #[error("state {state} is out of range for a model with {n_states} states")]
    StateOutOfRange { state: usize, n_states: usize },
}

/// Duration mass of one state at one grid time: `cells[c]` holds the mass
/// with duration in [cΔ, (c+1)Δ), `atom` the mass at the row's exactly
/// tracked atom duration (nonzero only for the initial state).
#[derive(Debug, Clone, PartialEq)]
pub struct DurationMeasure {
    pub cells: Vec<f64>,
    pub atom: f64,
}

impl DurationMeasure {
    fn empty() -> Self {
        DurationMeasure {
            cells: Vec::new(),
            atom: 0.0,
        }
    }

    /// Total mass of the measure.
    pub fn total(&self) -> f64 {
        self.cells.iter().sum::<f64>() + self.atom
    }
}

/// The joint state–duration law at one grid time, one measure per state.
/// At step m each measure has exactly m cells, so every cell lies below
/// t − s and the support claim [0, t − s) ∪ {u₀ + t − s} holds by shape.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionRow {
    pub step: usize,
    pub time: f64,
    /// Duration of the surviving initial-state atom: u₀ + (time − s).
    pub atom_duration: f64,
    pub measures: Vec<DurationMeasure>,
}

impl TransitionRow {
    /// Total mass across all states; 1 up to the conservation defect.
    pub fn total_mass(&self) -> f64 {
        self.measures.iter().map(DurationMeasure::total).sum()
    }
}

/// How far total probability mass drifted from 1 during a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConservationReport {
    /// Largest |total − 1| over all recorded rows.
    pub max_defect: f64,
    /// The same defect divided by the elapsed time span (0 for a
    /// zero-length run).
    pub per_unit_time: f64,
}

/// The propagated law on the full time grid, one row per step.
#[derive(Debug, Clone, PartialEq)]
pub struct RowSequence {
    pub initial_state: usize,
    pub start_time: f64,
    pub initial_duration: f64,
    pub delta: f64,
    pub rows: Vec<TransitionRow>,
    pub conservation: ConservationReport,
}

impl RowSequence {
    /// Final grid time of the run.
    pub fn end_time(&self) -> f64 {
        self.rows
            .last()
            .expect("a run has at least its start row")
            .time
    }

    /// Number of states in the propagated model.
    pub fn n_states(&self) -> usize {
        self.rows[0].measures.len()
    }

    /// The row whose grid time matches `time` (within rounding). Rows are
    /// sorted by time but need not start at the run's start time — a
    /// composed result keeps only its end row.
    pub fn row_at(&self, time: f64) -> Result<&TransitionRow, SolverError> {
        let tol = GRID_TOL * (1.0 + time.abs());
        let idx = self.rows.partition_point(|r| r.time < time - tol);
        match self.rows.get(idx) {
            Some(row) if (row.time - time).abs() <= tol => Ok(row),
            _ => Err(SolverError::OffGrid {
                time,
                start: self.start_time,
                end: self.end_time(),
                delta: self.delta,
            }),
        }
    }

    /// P(state at `time` is `state`): all cell mass plus the atom.
    pub fn marginal(&self, time: f64, state: usize) -> Result<f64, SolverError> {
        let row = self.row_at(time)?;
        self.check_state(state)?;
        Ok(row.measures[state].total())
    }

    /// P(state at `time` is `state` and its duration is ≤ `d`); cell mass is
    /// interpolated uniformly, the atom counts when its duration is ≤ `d`.
    pub fn cdf(&self, time: f64, state: usize, d: f64) -> Result<f64, SolverError> {
        let row = self.row_at(time)?;
        self.check_state(state)?;
        let m = &row.measures[state];
        if d < 0.0 {
            return Ok(0.0);
        }
        let x = d / self.delta;
        let full = (x + GRID_TOL).floor().min(m.cells.len() as f64) as usize;
        let mut mass: f64 = m.cells[..full].iter().sum();
        if full < m.cells.len() {
            let frac = (x - full as f64).clamp(0.0, 1.0);
            mass += frac * m.cells[full];
        }
        if m.atom > 0.0 && row.atom_duration <= d * (1.0 + GRID_TOL) + 1e-12 {
            mass += m.atom;
        }
        Ok(mass)
    }

    /// Rate of mass entering `state` at `time` from every other state:
    /// Σ_{k≠state} ∫ q_{k→state}(time, v) · (mass of k in dv).
    pub fn influx_rate(
        &self,
        model: &IntensityModel,
        time: f64,
        state: usize,
    ) -> Result<f64, SolverError> {
        let row = self.row_at(time)?;
        self.check_state(state)?;
        let mut rate = 0.0;
        for (k, measure) in row.measures.iter().enumerate() {
            if k == state {
                continue;
            }
            for (c, &mass) in measure.cells.iter().enumerate() {
                if mass > 0.0 {
                    rate += mass * model.rate(k, state, time, (c as f64 + 0.5) * self.delta)?;
                }
            }
            if measure.atom > 0.0 {
                rate += measure.atom * model.rate(k, state, time, row.atom_duration)?;
            }
        }
        Ok(rate)
    }

    /// Rate of mass leaving `state` at `time` counting only occupants with
    /// duration ≤ `d`: ∫_{[0,d]} q_state(time, v) · (mass in dv).
    pub fn outflow_rate_upto(
        &self,
        model: &IntensityModel,
        time: f64,
        state: usize,
        d: f64,
    ) -> Result<f64, SolverError> {
        let row = self.row_at(time)?;
        self.check_state(state)?;
        let m = &row.measures[state];
        if d < 0.0 {
            return Ok(0.0);
        }
        let x = d / self.delta;
        let full = (x + GRID_TOL).floor().min(m.cells.len() as f64) as usize;
        let mut rate = 0.0;
        for (c, &mass) in m.cells.iter().enumerate().take(full) {
            if mass > 0.0 {
                rate += mass * model.total_rate(state, time, (c as f64 + 0.5) * self.delta)?;
            }
        }
        if full < m.cells.len() && m.cells[full] > 0.0 {
            let frac = (x - full as f64).clamp(0.0, 1.0);
            rate += frac
                * m.cells[full]
                * model.total_rate(state, time, (full as f64 + 0.5) * self.delta)?;
        }
        if m.atom > 0.0 && row.atom_duration <= d * (1.0 + GRID_TOL) + 1e-12 {
            rate += m.atom * model.total_rate(state, time, row.atom_duration)?;
        }
        Ok(rate)
    }

    /// Left derivative in `d` of the duration law P(state, duration ≤ d) at
    /// `time`, for states other than the initial one: mass with duration
    /// exactly `d` entered `state` at `time − d` and survived there since, so
    /// the density is (influx rate then) × (survival to `time`). Zero beyond
    /// the support bound d > time − s.
    pub fn duration_left_derivative(
        &self,
        model: &IntensityModel,
        time: f64,
        state: usize,
        d: f64,
    ) -> Result<f64, SolverError> {
        self.row_at(time)?;
        self.check_state(state)?;
        if state == self.initial_state {
            return Err(SolverError::DiagonalDurationDerivative { state });
        }
        assert!(d >= 0.0, "duration bound must be nonnegative");
        let elapsed = time - self.start_time;
        if d > elapsed * (1.0 + GRID_TOL) + 1e-12 {
            return Ok(0.0);
        }
        let entry_time = time - d;
        let influx = self.influx_rate(model, entry_time, state)?;
        let kernel = HazardKernel::new(model);
        let survival = kernel.survival(state, entry_time, 0.0, time)?;
        Ok(influx * survival)
    }

    /// Write the duration measures at the given grid times as CSV. Cells
    /// render with their lower duration edge and kind `cell`; the atom with
    /// its exact duration and kind `atom`. Zero-mass buckets are skipped.
    pub fn write_rows_csv<W: Write>(&self, mut w: W, times: &[f64]) -> Result<(), SolverError> {
        writeln!(w, "time,state,kind,duration,mass")?;
        for &time in times {
            let row = self.row_at(time)?;
            for (state, measure) in row.measures.iter().enumerate() {
                for (c, &mass) in measure.cells.iter().enumerate() {
                    if mass > 0.0 {
                        writeln!(
                            w,
                            "{:.11e},{},cell,{:.11e},{:.11e}",
                            row.time,
                            state,
                            c as f64 * self.delta,
                            mass
                        )?;
                    }
                }
                if measure.atom > 0.0 {
                    writeln!(
                        w,
                        "{:.11e},{},atom,{:.11e},{:.11e}",
                        row.time, state, row.atom_duration, measure.atom
                    )?;
                }
            }
        }
        Ok(())
    }

    fn check_state(&self, state: usize) -> Result<(), SolverError> {
        if state >= self.n_states() {
            return Err(SolverError::StateOutOfRange {
                state,
                n_states: self.n_states(),
            });
        }
        Ok(())
    }
}

/// Propagate the law of (state, duration) from `start` to `end_time` in
/// steps of `delta`, recording every grid row. The interval must be a whole
/// number of steps and the per-step hazard `delta × sup‖rates‖` at most
/// [`MAX_STEP_HAZARD`].
pub fn solve_row(
    model: &IntensityModel,
    start: StartState,
    end_time: f64,
    delta: f64,
) -> Result<RowSequence, SolverError> {
    let n_states = model.n_states();
    if start.state >= n_states {
        return Err(SolverError::StateOutOfRange {
            state: start.state,
            n_states,
        });
    }
    if !(delta.is_finite() && delta > 0.0) {
        return Err(SolverError::BadStep { delta });
    }
    if end_time < start.time {
        return Err(SolverError::BackwardInterval {
            start: start.time,
            end: end_time,
        });
    }
    assert!(
        start.duration >= 0.0 && start.duration.is_finite(),
        "initial duration must be finite and nonnegative"
    );
    let interval = end_time - start.time;
    let steps_f = interval / delta;
    let n_steps = steps_f.round();
    if (steps_f - n_steps).abs() > GRID_TOL * (1.0 + steps_f.abs()) {
        return Err(SolverError::Misaligned { interval, delta });
    }
    let n_steps = n_steps as usize;
    let sup = model.sup_norm(start.time, end_time, 0.0, start.duration + interval, 32)?;
    if delta * sup > MAX_STEP_HAZARD {
        return Err(SolverError::StepTooLarge {
            delta,
            sup_norm: sup,
        });
    }

    let kernel = HazardKernel::new(model);
    let mut measures: Vec<DurationMeasure> = vec![DurationMeasure::empty(); n_states];
    measures[start.state].atom = 1.0;
    let mut rows = Vec::with_capacity(n_steps + 1);
    rows.push(TransitionRow {
        step: 0,
        time: start.time,
        atom_duration: start.duration,
        measures: measures.clone(),
    });
    let mut max_defect = 0.0f64;

    for m in 0..n_steps {
        let t_lo = start.time + m as f64 * delta;
        let t_hi = start.time + (m + 1) as f64 * delta;
        let t_mid = t_lo + 0.5 * delta;
        let atom_duration = start.duration + (t_lo - start.time);
        let mut next: Vec<DurationMeasure> = (0..n_states)
            .map(|_| DurationMeasure {
                cells: vec![0.0; m + 1],
                atom: 0.0,
            })
            .collect();

        for k in 0..n_states {
            // Cell mass: decay by the exit rate at the characteristic
            // midpoint (a source cell c sits at duration (c+1)Δ there),
            // shift the survivors one cell up, and route the outflow by
            // the destination rates at that same point.
            for (c, &mass) in measures[k].cells.iter().enumerate() {
                if mass == 0.0 {
                    next[k].cells[c + 1] += 0.0;
                    continue;
                }
                let u_mid = (c as f64 + 1.0) * delta;
                let mut rates = vec![0.0; n_states];
                let mut total = 0.0;
                for (j, field) in model.row_entries(k) {
                    let r = field.eval(t_mid, u_mid)?;
                    rates[j] = r;
                    total += r;
                }
                if total == 0.0 {
                    next[k].cells[c + 1] += mass;
                    continue;
                }
                let survived = mass * (-total * delta).exp();
                let outflow = mass - survived;
                next[k].cells[c + 1] += survived;
                for (j, &r) in rates.iter().enumerate() {
                    if r > 0.0 {
                        next[j].cells[0] += outflow * (r / total);
                    }
                }
            }

            // The atom: decay by its exactly integrated hazard along the
            // characteristic and route the outflow by the per-destination
            // hazard shares over the same step.
            let atom = measures[k].atom;
            if atom > 0.0 {
                let mut hazards = vec![0.0; n_states];
                let mut h_total = 0.0;
                for (j, _) in model.row_entries(k) {
                    let h = kernel.entry_hazard(k, j, t_lo, atom_duration, t_hi)?;
                    hazards[j] = h;
                    h_total += h;
                }
                if h_total == 0.0 {
                    next[k].atom += atom;
                } else {
                    let survived = atom * (-h_total).exp();
                    let outflow = atom - survived;
                    next[k].atom += survived;
                    for (j, &h) in hazards.iter().enumerate() {
                        if h > 0.0 {
                            next[j].cells[0] += outflow * (h / h_total);
                        }
                    }
                }
            }
        }

        measures = next;
        let row = TransitionRow {
            step: m + 1,
            time: t_hi,
            atom_duration: start.duration + (t_hi - start.time),
            measures: measures.clone(),
        };
        let defect = (row.total_mass() - 1.0).abs();
        max_defect = max_defect.max(defect);
        if defect > MAX_CONSERVATION_DEFECT {
            return Err(SolverError::ConservationLost { time: t_hi, defect });
        }
        rows.push(row);
    }

    let per_unit_time = if interval > 0.0 {
        max_defect / interval
    } else {
        0.0
    };
    Ok(RowSequence {
        initial_state: start.state,
        start_time: start.time,
        initial_duration: start.duration,
        delta,
        rows,
        conservation: ConservationReport {
            max_defect,
            per_unit_time,
        },
    })
}

/// Re-derive the law at `end_time` by splitting at `split_time`: freeze the
/// first leg's row there, restart the solver from every (state, duration
/// cell) it occupies — cells restart from their midpoint duration, the atom
/// from its exact duration — and mix the second legs by the frozen masses.
/// Survivors of a restarted cell age by exactly the second-leg span, so
/// their cell index shifts by its step count; a run split this way must
/// reproduce the direct run up to the cell-midpoint quantization.
pub fn compose(
    model: &IntensityModel,
    first: &RowSequence,
    split_time: f64,
    end_time: f64,
) -> Result<RowSequence, SolverError> {
    let split_row = first.row_at(split_time)?.clone();
    if end_time < split_time {
        return Err(SolverError::BackwardInterval {
            start: split_time,
            end: end_time,
        });
    }
    let delta = first.delta;
    let span = end_time - split_time;
    let steps_f = span / delta;
    let n2 = steps_f.round();
    if (steps_f - n2).abs() > GRID_TOL * (1.0 + steps_f.abs()) {
        return Err(SolverError::Misaligned {
            interval: span,
            delta,
        });
    }
    let n2 = n2 as usize;
    let n1 = split_row.step;
    let n_states = first.n_states();

    // Every occupied (state, cell) plus the atom restarts its own run.
    enum Origin {
        Cell {
            state: usize,
            cell: usize,
            mass: f64,
        },
        Atom {
            state: usize,
            mass: f64,
        },
    }
    let mut origins = Vec::new();
    for (k, measure) in split_row.measures.iter().enumerate() {
        for (c, &mass) in measure.cells.iter().enumerate() {
            if mass > 0.0 {
                origins.push(Origin::Cell {
                    state: k,
                    cell: c,
                    mass,
                });
            }
        }
        if measure.atom > 0.0 {
            origins.push(Origin::Atom {
                state: k,
                mass: measure.atom,
            });
        }
    }

    let legs: Vec<(usize, f64, bool, TransitionRow)> = origins
        .par_iter()
        .map(|origin| {
            let (state, duration, mass, from_atom) = match *origin {
                Origin::Cell { state, cell, mass } => {
                    (state, (cell as f64 + 0.5) * delta, mass, false)
                }
                Origin::Atom { state, mass } => (state, split_row.atom_duration, mass, true),
            };
            let leg = solve_row(
                model,
                StartState {
                    state,
                    time: split_time,
                    duration,
                },
                end_time,
                delta,
            )?;
            let last = leg.rows.into_iter().next_back().expect("at least one row");
            Ok((state, mass, from_atom, last))
        })
        .collect::<Result<_, SolverError>>()?;

    let mut measures: Vec<DurationMeasure> = (0..n_states)
        .map(|_| DurationMeasure {
            cells: vec![0.0; n1 + n2],
            atom: 0.0,
        })
        .collect();
    for (state, mass, from_atom, last) in &legs {
        for (j, leg_measure) in last.measures.iter().enumerate() {
            for (c2, &leg_mass) in leg_measure.cells.iter().enumerate() {
                if leg_mass > 0.0 {
                    measures[j].cells[c2] += mass * leg_mass;
                }
            }
        }
        // The restarted point's own surviving atom: still exactly placed
        // for the original atom; for a cell its duration grew by exactly
        // n2 steps, landing in the cell shifted by n2.
        let leg_atom = last.measures[*state].atom;
        if leg_atom > 0.0 {
            if *from_atom {
                measures[*state].atom += mass * leg_atom;
            } else {
                let c = (last.atom_duration / delta - 0.5).round() as usize;
                measures[*state].cells[c] += mass * leg_atom;
            }
        }
    }

    let row = TransitionRow {
        step: n1 + n2,
        time: end_time,
        atom_duration: first.initial_duration + (end_time - first.start_time),
        measures,
    };
    let defect = (row.total_mass() - 1.0).abs();
    let elapsed = end_time - first.start_time;
    Ok(RowSequence {
        initial_state: first.initial_state,
        start_time: first.start_time,
        initial_duration: first.initial_duration,
        delta,
        rows: vec![row],
        conservation: ConservationReport {
            max_defect: defect,
            per_unit_time: if elapsed > 0.0 { defect / elapsed } else { 0.0 },
        },
    })
}
