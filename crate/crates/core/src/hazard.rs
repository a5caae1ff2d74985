//! Survival, jump densities, and exact next-jump sampling.
//!
//! Everything here integrates along the characteristic of the duration flow:
//! a process seen in state i at time s with duration u keeps duration
//! u + (v − s) at any later time v until it jumps, so the exit hazard it sees
//! at v is q_i(v, u + v − s). From the accumulated hazard
//! H_i(s, u, t) = ∫_s^t q_i(v, u + v − s) dv follow the survival function
//! exp(−H), the first-jump density q_ij(t, u + t − s)·exp(−H), and exact
//! sampling: draw E ~ Exp(1) and solve H = E for the jump time.
//!
//! Integrals split at field breakpoints mapped onto the characteristic and
//! use closed forms piece by piece (constant, step, exponential and
//! power-law factors); only factor combinations without an elementary
//! antiderivative fall back to adaptive Simpson quadrature.

use rand::Rng;
use rand_distr::Exp1;
use thiserror::Error;

use crate::model::{Factor, IntensityField, IntensityModel, ModelError};
use crate::quad::{adaptive_simpson, QuadError, QuadratureConfig};

/// Absolute time tolerance for hazard inversion: the returned jump time is
/// within this distance of the exact root.
pub const INVERSION_TIME_TOL: f64 = 1e-12;

/// Errors from hazard evaluation or sampling.
#[derive(Debug, Error)]
pub enum HazardError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    #[error("interval is reversed: s = {s}, t = {t}")]
    ReversedInterval { s: f64, t: f64 },
    #[error("total exit rate vanishes at sampled jump time {time} in state {state}")]
    ZeroRateAtJump { state: usize, time: f64 },
}

/// Outcome of sampling the next transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NextJump {
    /// The process jumps at `time` into state `to`.
    Jump { time: f64, to: usize },
    /// No jump occurs before the horizon.
    Censored,
}

/// Hazard integrals and exact sampling for one intensity model.
#[derive(Debug, Clone)]
pub struct HazardKernel<'m> {
    model: &'m IntensityModel,
    quad: QuadratureConfig,
}

impl<'m> HazardKernel<'m> {
    /// Kernel with the default quadrature budget.
    pub fn new(model: &'m IntensityModel) -> Self {
        Self::with_quadrature(model, QuadratureConfig::default())
    }

    /// Kernel with an explicit quadrature budget.
    pub fn with_quadrature(model: &'m IntensityModel, quad: QuadratureConfig) -> Self {
        HazardKernel { model, quad }
    }

    /// The underlying model.
    pub fn model(&self) -> &'m IntensityModel {
        self.model
    }

    /// The quadrature budget in use.
    pub fn quadrature(&self) -> &QuadratureConfig {
        &self.quad
    }

    /// Accumulated exit hazard H_i(s, u, t) = ∫_s^t q_i(v, u + v − s) dv.
    pub fn cumulative_hazard(&self, i: usize, s: f64, u: f64, t: f64) -> Result<f64, HazardError> {
        if t < s {
            return Err(HazardError::ReversedInterval { s, t });
        }
        let w = u - s;
        let mut total = 0.0;
        for (_, field) in self.model.row_entries(i) {
            total += integrate_field_along(field, s, t, w, &self.quad)?;
        }
        Ok(total)
    }

    /// Accumulated hazard of the single channel i → j over the same
    /// characteristic. Zero when no field is installed or `i == j`.
    pub fn entry_hazard(
        &self,
        i: usize,
        j: usize,
        s: f64,
        u: f64,
        t: f64,
    ) -> Result<f64, HazardError> {
        if t < s {
            return Err(HazardError::ReversedInterval { s, t });
        }
        match self.model.entry(i, j) {
            Some(field) => Ok(integrate_field_along(field, s, t, u - s, &self.quad)?),
            None => Ok(0.0),
        }
    }

    /// Probability of remaining in state i throughout (s, t]:
    /// exp(−H_i(s, u, t)).
    pub fn survival(&self, i: usize, s: f64, u: f64, t: f64) -> Result<f64, HazardError> {
        Ok((-self.cumulative_hazard(i, s, u, t)?).exp())
    }

    /// Density (in t) of the first jump landing in state j:
    /// q_ij(t, u + t − s) · exp(−H_i(s, u, t)).
    pub fn jump_density(
        &self,
        i: usize,
        j: usize,
        s: f64,
        u: f64,
        t: f64,
    ) -> Result<f64, HazardError> {
        let rate = match self.model.entry(i, j) {
            Some(field) if i != j => field.eval(t, u + (t - s))?,
            _ => return Ok(0.0),
        };
        Ok(rate * self.survival(i, s, u, t)?)
    }

    /// Smallest t* ∈ [s, horizon] with H_i(s, u, t*) ≥ `target`, or `None`
    /// when even the full horizon accumulates less hazard than `target`.
    /// The root is located to [`INVERSION_TIME_TOL`] by bracket doubling
    /// followed by bisection, which is robust across flat (zero-rate)
    /// stretches of the hazard.
    pub fn hazard_inverse(
        &self,
        i: usize,
        s: f64,
        u: f64,
        target: f64,
        horizon: f64,
    ) -> Result<Option<f64>, HazardError> {
        if horizon < s {
            return Err(HazardError::ReversedInterval { s, t: horizon });
        }
        if target <= 0.0 {
            return Ok(Some(s));
        }
        if self.cumulative_hazard(i, s, u, horizon)? < target {
            return Ok(None);
        }
        // Bracket: grow [lo, hi] until the accumulated hazard reaches target.
        let mut lo = s;
        let mut step = (horizon - s).min(1.0);
        let mut hi = (s + step).min(horizon);
        while self.cumulative_hazard(i, s, u, hi)? < target {
            lo = hi;
            step *= 2.0;
            hi = (hi + step).min(horizon);
        }
        // Bisect: keep H(hi) ≥ target > H(lo).
        while hi - lo > INVERSION_TIME_TOL {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cumulative_hazard(i, s, u, mid)? >= target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(Some(hi))
    }

    /// Exit-rate split across destinations at calendar time `t` and duration
    /// `u`: entry j carries q_ij(t, u); the diagonal and absent channels are
    /// zero.
    pub fn destination_weights(&self, i: usize, t: f64, u: f64) -> Result<Vec<f64>, HazardError> {
        let mut weights = vec![0.0; self.model.n_states()];
        for (j, field) in self.model.row_entries(i) {
            weights[j] = field.eval(t, u)?;
        }
        Ok(weights)
    }

    /// Draw the next transition of a process sitting in state `i` at time `s`
    /// with duration `u`: exact hazard inversion of E ~ Exp(1) for the jump
    /// time, then the destination from the rate split at that instant.
    /// Returns [`NextJump::Censored`] when the jump falls past `horizon`.
    pub fn sample_next_jump<R: Rng + ?Sized>(
        &self,
        i: usize,
        s: f64,
        u: f64,
        horizon: f64,
        rng: &mut R,
    ) -> Result<NextJump, HazardError> {
        let target: f64 = rng.sample(Exp1);
        let time = match self.hazard_inverse(i, s, u, target, horizon)? {
            None => return Ok(NextJump::Censored),
            Some(t) => t,
        };
        let weights = self.destination_weights(i, time, u + (time - s))?;
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(HazardError::ZeroRateAtJump { state: i, time });
        }
        let x: f64 = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut to = usize::MAX;
        for (j, wj) in weights.iter().enumerate() {
            if *wj > 0.0 {
                acc += wj;
                to = j;
                if acc > x {
                    break;
                }
            }
        }
        Ok(NextJump::Jump { time, to })
    }
}

/// ∫_s^t field(v, v + w) dv where w = u − s is the duration offset of the
/// characteristic. Splits at the field's breakpoints mapped into v and uses a
/// closed form on each piece when one exists.
fn integrate_field_along(
    field: &IntensityField,
    s: f64,
    t: f64,
    w: f64,
    quad: &QuadratureConfig,
) -> Result<f64, QuadError> {
    if t <= s {
        return Ok(0.0);
    }
    let mut points = Vec::with_capacity(4);
    points.push(s);
    for &c in field.t_cuts() {
        if c > s && c < t {
            points.push(c);
        }
    }
    for &c in field.u_cuts() {
        let v = c - w;
        if v > s && v < t {
            points.push(v);
        }
    }
    points.push(t);
    points.sort_by(f64::total_cmp);
    points.dedup();

    let mut total = 0.0;
    for pair in points.windows(2) {
        total += integrate_piece(field, pair[0], pair[1], w, quad)?;
    }
    Ok(total)
}

/// A factor restricted to one breakpoint-free piece, as a function of v.
enum PieceFactor {
    /// Constant c on the piece.
    Const(f64),
    /// c · exp(r · (v + o)).
    Exp { c: f64, r: f64, o: f64 },
    /// c · (v + o)^p.
    Pow { c: f64, p: f64, o: f64 },
}

impl PieceFactor {
    /// Restrict `factor` (evaluated at coordinate v + o) to the piece
    /// [a, b], which contains no breakpoints of the factor.
    fn reduce(factor: &Factor, o: f64, a: f64, b: f64) -> Result<PieceFactor, ModelError> {
        Ok(match factor {
            Factor::Constant { value } => PieceFactor::Const(*value),
            Factor::Exponential { coeff, rate } => PieceFactor::Exp {
                c: *coeff,
                r: *rate,
                o,
            },
            Factor::PowerLaw { coeff, exponent } => PieceFactor::Pow {
                c: *coeff,
                p: *exponent,
                o,
            },
            Factor::PiecewiseConstant { .. } => PieceFactor::Const(factor.eval(0.5 * (a + b) + o)?),
        })
    }
}

/// ∫_a^b c·e^{r(v+o)} dv.
fn exp_integral(c: f64, r: f64, o: f64, a: f64, b: f64) -> f64 {
    if r == 0.0 {
        c * (b - a)
    } else {
        c / r * ((r * (b + o)).exp() - (r * (a + o)).exp())
    }
}

/// ∫_a^b c·(v+o)^p dv for p ≥ 0 and v + o ≥ 0 on the piece (bases are
/// clamped at zero to absorb roundoff at the characteristic's origin).
fn pow_integral(c: f64, p: f64, o: f64, a: f64, b: f64) -> f64 {
    let q = p + 1.0;
    c / q * ((b + o).max(0.0).powf(q) - (a + o).max(0.0).powf(q))
}

/// Closed form for ∫_a^b x(v)·y(v) dv when the pair admits one.
fn product_closed_form(x: &PieceFactor, y: &PieceFactor, a: f64, b: f64) -> Option<f64> {
    use PieceFactor::*;
    match (x, y) {
        (Const(c1), Const(c2)) => Some(c1 * c2 * (b - a)),
        (Const(k), Exp { c, r, o }) | (Exp { c, r, o }, Const(k)) => {
            Some(k * exp_integral(*c, *r, *o, a, b))
        }
        (Const(k), Pow { c, p, o }) | (Pow { c, p, o }, Const(k)) => {
            Some(k * pow_integral(*c, *p, *o, a, b))
        }
        (
            Exp {
                c: c1,
                r: r1,
                o: o1,
            },
            Exp {
                c: c2,
                r: r2,
                o: o2,
            },
        ) => {
            let c = c1 * c2 * (r1 * o1 + r2 * o2).exp();
            Some(exp_integral(c, r1 + r2, 0.0, a, b))
        }
        (
            Pow {
                c: c1,
                p: p1,
                o: o1,
            },
            Pow {
                c: c2,
                p: p2,
                o: o2,
            },
        ) if o1 == o2 => Some(pow_integral(c1 * c2, p1 + p2, *o1, a, b)),
        // Exponential × power-law (and power laws offset against each other)
        // have no elementary antiderivative.
        _ => None,
    }
}

fn integrate_piece(
    field: &IntensityField,
    a: f64,
    b: f64,
    w: f64,
    quad: &QuadratureConfig,
) -> Result<f64, QuadError> {
    match field {
        IntensityField::Constant { rate } => Ok(rate * (b - a)),
        IntensityField::Table(table) => {
            let mid = 0.5 * (a + b);
            Ok(table.eval(mid, mid + w)? * (b - a))
        }
        IntensityField::Product { time, duration } => {
            let ft = PieceFactor::reduce(time, 0.0, a, b)?;
            let fu = PieceFactor::reduce(duration, w, a, b)?;
            match product_closed_form(&ft, &fu, a, b) {
                Some(value) => Ok(value),
                None => adaptive_simpson(|v| field.eval(v, v + w), a, b, quad),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{OutsidePolicy, StateSpace, TableField};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Composite Simpson with a fixed panel count — a deliberately simple
    /// oracle, independent of the adaptive integrator under test.
    fn simpson_oracle(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
        let h = (b - a) / (panels as f64);
        let mut acc = f(a) + f(b);
        for k in 1..panels {
            let x = a + h * k as f64;
            acc += if k % 2 == 1 { 4.0 * f(x) } else { 2.0 * f(x) };
        }
        acc * h / 3.0
    }

    fn constant_unit_model() -> IntensityModel {
        let mut m = IntensityModel::new(StateSpace::new(["a", "b"]).unwrap());
        m.set_intensity(0, 1, IntensityField::Constant { rate: 1.0 })
            .unwrap();
        m.set_intensity(1, 0, IntensityField::Constant { rate: 1.0 })
            .unwrap();
        m
    }

    /// q_01(t, u) = 2u, q_10 = 1 — the duration-driven test model.
    fn duration_linear_model() -> IntensityModel {
        let mut m = IntensityModel::new(StateSpace::new(["a", "b"]).unwrap());
        m.set_intensity(
            0,
            1,
            IntensityField::Product {
                time: Factor::Constant { value: 1.0 },
                duration: Factor::PowerLaw {
                    coeff: 2.0,
                    exponent: 1.0,
                },
            },
        )
        .unwrap();
        m.set_intensity(1, 0, IntensityField::Constant { rate: 1.0 })
            .unwrap();
        m
    }

    #[test]
    fn constant_hazard_accumulates_linearly() {
        let m = constant_unit_model();
        let k = HazardKernel::new(&m);
        let h = k.cumulative_hazard(0, 0.0, 0.0, 1.0).unwrap();
        assert!((h - 1.0).abs() < 1e-14);
        let s = k.survival(0, 0.0, 0.0, 1.0).unwrap();
        assert!((s - (-1.0f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn duration_linear_hazard_matches_the_quadratic_antiderivative() {
        // H(s, u, t) = (u + t − s)² − u² for q(t, u) = 2u.
        let m = duration_linear_model();
        let k = HazardKernel::new(&m);
        let h = k.cumulative_hazard(0, 0.0, 0.0, 1.0).unwrap();
        assert!((h - 1.0).abs() < 1e-13);
        let h = k.cumulative_hazard(0, 0.0, 0.5, 2.0).unwrap();
        assert!((h - 6.0).abs() < 1e-12, "got {h}");
    }

    #[test]
    fn piecewise_time_factor_splits_exactly_at_its_cut() {
        // Rate 1 on [0, 1), 3 afterwards: H(0, ·, 2) = 1 + 3 = 4.
        let mut m = IntensityModel::new(StateSpace::new(["a", "b"]).unwrap());
        m.set_intensity(
            0,
            1,
            IntensityField::Product {
                time: Factor::PiecewiseConstant {
                    cuts: vec![1.0],
                    values: vec![1.0, 3.0],
                },
                duration: Factor::Constant { value: 1.0 },
            },
        )
        .unwrap();
        let k = HazardKernel::new(&m);
        let h = k.cumulative_hazard(0, 0.0, 0.0, 2.0).unwrap();
        assert!((h - 4.0).abs() < 1e-13);
        // Smallest root of H = 2 sits in the uplifted piece: 1 + 3(t−1) = 2.
        let t = k.hazard_inverse(0, 0.0, 0.0, 2.0, 10.0).unwrap().unwrap();
        assert!((t - 4.0 / 3.0).abs() < 1e-9, "got {t}");
    }

    #[test]
    fn smooth_product_closed_form_matches_a_simpson_oracle() {
        // exp(0.3·t) × 2·exp(−0.2·u) from (s, u) = (0.5, 0.2).
        let mut m = IntensityModel::new(StateSpace::new(["a", "b"]).unwrap());
        m.set_intensity(
            0,
            1,
            IntensityField::Product {
                time: Factor::Exponential {
                    coeff: 1.0,
                    rate: 0.3,
                },
                duration: Factor::Exponential {
                    coeff: 2.0,
                    rate: -0.2,
                },
            },
        )
        .unwrap();
        let k = HazardKernel::new(&m);
        let got = k.cumulative_hazard(0, 0.5, 0.2, 1.7).unwrap();
        let w = 0.2 - 0.5;
        let want = simpson_oracle(
            |v| (0.3 * v).exp() * 2.0 * (-0.2 * (v + w)).exp(),
            0.5,
            1.7,
            20_000,
        );
        assert!((got - want).abs() < 1e-10, "got {got}, want {want}");
    }

    #[test]
    fn exp_power_mix_falls_back_to_quadrature_and_agrees_with_the_oracle() {
        // exp(−0.4·t) × u^1.5 has no elementary antiderivative.
        let mut m = IntensityModel::new(StateSpace::new(["a", "b"]).unwrap());
        m.set_intensity(
            0,
            1,
            IntensityField::Product {
                time: Factor::Exponential {
                    coeff: 1.0,
                    rate: -0.4,
                },
                duration: Factor::PowerLaw {
                    coeff: 1.0,
                    exponent: 1.5,
                },
            },
        )
        .unwrap();
        let k = HazardKernel::new(&m);
        let got = k.cumulative_hazard(0, 0.25, 0.1, 2.0).unwrap();
        let w = 0.1 - 0.25;
        let want = simpson_oracle(|v| (-0.4 * v).exp() * (v + w).powf(1.5), 0.25, 2.0, 20_000);
        assert!((got - want).abs() < 1e-9, "got {got}, want {want}");
    }

    #[test]
    fn table_hazard_sums_its_characteristic_pieces() {
        // Hand-computed characteristic sum (see the piece list in the test):
        // [0, .5)×bin(0,0)=1, [.5, 1)×bin(0,1)=2, [1, 1.8)×bin(1,1)=4
        // gives 0.5·1 + 0.5·2 + 0.8·4 = 4.7.
        let mut m = IntensityModel::new(StateSpace::new(["a", "b"]).unwrap());
        m.set_intensity(
            0,
            1,
            IntensityField::Table(TableField {
                t_edges: vec![0.0, 1.0, 2.0],
                u_edges: vec![0.0, 0.6, 5.0],
                values: vec![vec![1.0, 2.0], vec![0.5, 4.0]],
                outside: OutsidePolicy::Error,
            }),
        )
        .unwrap();
        let k = HazardKernel::new(&m);
        let got = k.cumulative_hazard(0, 0.0, 0.1, 1.8).unwrap();
        assert!((got - 4.7).abs() < 1e-12, "got {got}");
        // Runs that leave the table domain surface the domain error.
        assert!(k.cumulative_hazard(0, 0.0, 0.1, 2.5).is_err());
    }

    #[test]
    fn jump_density_is_rate_times_survival() {
        let mut m = IntensityModel::new(StateSpace::new(["a", "b"]).unwrap());
        m.set_intensity(0, 1, IntensityField::Constant { rate: 0.5 })
            .unwrap();
        let k = HazardKernel::new(&m);
        let at0 = k.jump_density(0, 1, 0.0, 0.0, 0.0).unwrap();
        assert!((at0 - 0.5).abs() < 1e-14);
        let at2 = k.jump_density(0, 1, 0.0, 0.0, 2.0).unwrap();
        assert!((at2 - 0.5 * (-1.0f64).exp()).abs() < 1e-14);
        // No channel, no density.
        assert_eq!(k.jump_density(1, 0, 0.0, 0.0, 1.0).unwrap(), 0.0);
        assert_eq!(k.jump_density(0, 0, 0.0, 0.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn hazard_inverse_hits_known_roots_and_censors() {
        let m = constant_unit_model();
        let k = HazardKernel::new(&m);
        let t = k.hazard_inverse(0, 2.0, 0.7, 0.5, 10.0).unwrap().unwrap();
        assert!((t - 2.5).abs() < 1e-9);
        assert_eq!(k.hazard_inverse(0, 2.0, 0.7, 0.5, 2.3).unwrap(), None);
        // Root exactly at the horizon still counts as a jump.
        let t = k.hazard_inverse(0, 0.0, 0.0, 0.3, 0.3).unwrap().unwrap();
        assert!((t - 0.3).abs() < 1e-9);

        let m = duration_linear_model();
        let k = HazardKernel::new(&m);
        // H(0, 0, t) = t², so H = 1 at t = 1 and H = 0.25 at t = 0.5.
        let t = k.hazard_inverse(0, 0.0, 0.0, 1.0, 10.0).unwrap().unwrap();
        assert!((t - 1.0).abs() < 1e-9);
        let t = k.hazard_inverse(0, 0.0, 0.0, 0.25, 10.0).unwrap().unwrap();
        assert!((t - 0.5).abs() < 1e-9);
    }

    #[test]
    fn hazard_inverse_returns_the_smallest_root_across_a_flat_stretch() {
        // Rate 1 on [0, 0.5), zero on [0.5, 1), 2 afterwards. H reaches 0.5
        // exactly at t = 0.5 and stays there through the dead window, so the
        // smallest root of H = 0.5 is 0.5, not anything ≥ 1.
        let mut m = IntensityModel::new(StateSpace::new(["a", "b"]).unwrap());
        m.set_intensity(
            0,
            1,
            IntensityField::Product {
                time: Factor::PiecewiseConstant {
                    cuts: vec![0.5, 1.0],
                    values: vec![1.0, 0.0, 2.0],
                },
                duration: Factor::Constant { value: 1.0 },
            },
        )
        .unwrap();
        let k = HazardKernel::new(&m);
        let t = k.hazard_inverse(0, 0.0, 0.0, 0.5, 10.0).unwrap().unwrap();
        assert!((t - 0.5).abs() < 1e-9, "got {t}");
    }

    #[test]
    fn destination_weights_follow_the_rate_split() {
        let mut m = IntensityModel::new(StateSpace::new(["a", "b", "c"]).unwrap());
        m.set_intensity(0, 1, IntensityField::Constant { rate: 0.5 })
            .unwrap();
        m.set_intensity(0, 2, IntensityField::Constant { rate: 1.5 })
            .unwrap();
        let k = HazardKernel::new(&m);
        let w = k.destination_weights(0, 3.0, 0.2).unwrap();
        assert_eq!(w, vec![0.0, 0.5, 1.5]);
    }

    #[test]
    fn zero_model_censors_and_never_jumps() {
        let m = IntensityModel::new(StateSpace::new(["a", "b"]).unwrap());
        let k = HazardKernel::new(&m);
        assert_eq!(k.cumulative_hazard(0, 0.0, 0.0, 5.0).unwrap(), 0.0);
        assert_eq!(k.hazard_inverse(0, 0.0, 0.0, 1.0, 5.0).unwrap(), None);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let next = k.sample_next_jump(0, 0.0, 0.0, 5.0, &mut rng).unwrap();
        assert_eq!(next, NextJump::Censored);
    }

    #[test]
    fn sampled_jump_is_consistent_with_its_own_survival() {
        // The jump time t* returned for target E must satisfy
        // survival(s, u, t*) = exp(−E) up to the inversion tolerance.
        let m = duration_linear_model();
        let k = HazardKernel::new(&m);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let e: f64 = rng.sample(Exp1);
            if let Some(t) = k.hazard_inverse(0, 0.3, 0.1, e, 50.0).unwrap() {
                let s = k.survival(0, 0.3, 0.1, t).unwrap();
                assert!(
                    (s - (-e).exp()).abs() <= 1e-9,
                    "survival {s} vs exp(−E) {}",
                    (-e).exp()
                );
            }
        }
    }

    #[test]
    fn cumulative_hazard_is_additive_along_the_characteristic() {
        let m = duration_linear_model();
        let k = HazardKernel::new(&m);
        let (s, u) = (0.2, 0.4);
        for (t1, t2) in [(0.7, 1.9), (0.2, 3.0), (1.0, 1.0)] {
            let whole = k.cumulative_hazard(0, s, u, t2).unwrap();
            let first = k.cumulative_hazard(0, s, u, t1).unwrap();
            let rest = k.cumulative_hazard(0, t1, u + (t1 - s), t2).unwrap();
            assert!((whole - (first + rest)).abs() < 1e-10);
        }
    }

    #[test]
    fn destination_frequencies_match_the_rate_split() {
        // q_01 : q_02 = 0.5 : 1.5 — destination 2 should win 75% of jumps.
        let mut m = IntensityModel::new(StateSpace::new(["a", "b", "c"]).unwrap());
        m.set_intensity(0, 1, IntensityField::Constant { rate: 0.5 })
            .unwrap();
        m.set_intensity(0, 2, IntensityField::Constant { rate: 1.5 })
            .unwrap();
        let k = HazardKernel::new(&m);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let mut hits = [0u64; 3];
        for _ in 0..n {
            match k.sample_next_jump(0, 0.0, 0.0, 1e6, &mut rng).unwrap() {
                NextJump::Jump { to, .. } => hits[to] += 1,
                NextJump::Censored => panic!("horizon far beyond any plausible jump"),
            }
        }
        let p2 = hits[2] as f64 / n as f64;
        let se = (0.75f64 * 0.25 / n as f64).sqrt();
        assert!(hits[0] == 0);
        assert!((p2 - 0.75).abs() <= 3.0 * se, "p2 = {p2}");
    }
}
