//! Shared fixtures and independent oracles for the integration suites.
//!
//! The matrix exponential here is deliberately written from scratch
//! (scaling-and-squaring on a plain Taylor series) so that solver results
//! can be checked against arithmetic that shares no code with the solver.

#![allow(dead_code)]

use smpkit::model::{Factor, IntensityField, IntensityModel, StateSpace};

/// Three states with six distinct constant rates; every pair is connected.
pub fn three_state_mixed() -> IntensityModel {
    let mut m = IntensityModel::new(StateSpace::new(["a", "b", "c"]).unwrap());
    let rates = [
        (0, 1, 0.3),
        (0, 2, 0.4),
        (1, 0, 0.5),
        (1, 2, 0.7),
        (2, 0, 1.2),
        (2, 1, 1.5),
    ];
    for (i, j, r) in rates {
        m.set_intensity(i, j, IntensityField::Constant { rate: r })
            .unwrap();
    }
    m
}

/// Three states, every off-diagonal rate 0.5: every exit rate is exactly 1.
pub fn symmetric_three_state() -> IntensityModel {
    let mut m = IntensityModel::new(StateSpace::new(["a", "b", "c"]).unwrap());
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                m.set_intensity(i, j, IntensityField::Constant { rate: 0.5 })
                    .unwrap();
            }
        }
    }
    m
}

/// Two states where leaving the first gets likelier with the time already
/// spent there (rate 2u) and the second is left at unit rate.
pub fn duration_linear_model() -> IntensityModel {
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

/// Like [`duration_linear_model`] but with a quadratic pull (rate 1.5u²),
/// so cell-midpoint rules are no longer exact and quantization error shows.
pub fn duration_quadratic_model() -> IntensityModel {
    let mut m = IntensityModel::new(StateSpace::new(["a", "b"]).unwrap());
    m.set_intensity(
        0,
        1,
        IntensityField::Product {
            time: Factor::Constant { value: 1.0 },
            duration: Factor::PowerLaw {
                coeff: 1.5,
                exponent: 2.0,
            },
        },
    )
    .unwrap();
    m.set_intensity(1, 0, IntensityField::Constant { rate: 1.0 })
        .unwrap();
    m
}

/// The full intensity matrix Q(t, u), diagonal included.
pub fn rate_matrix(model: &IntensityModel, t: f64, u: f64) -> Vec<Vec<f64>> {
    let n = model.n_states();
    (0..n)
        .map(|i| (0..n).map(|j| model.rate(i, j, t, u).unwrap()).collect())
        .collect()
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut c = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i][k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                c[i][j] += aik * b[k][j];
            }
        }
    }
    c
}

/// exp(Q·t) by scaling and squaring: scale Q·t until its row-sum norm is at
/// most 1/2, sum the Taylor series far past double precision, then square
/// back up. Row i gives the transition law out of state i for a process
/// whose rates are constant.
pub fn matexp(q: &[Vec<f64>], t: f64) -> Vec<Vec<f64>> {
    let n = q.len();
    let norm = q
        .iter()
        .map(|row| row.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0f64, f64::max)
        * t.abs();
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scale = t / 2f64.powi(squarings);
    let a: Vec<Vec<f64>> = q
        .iter()
        .map(|row| row.iter().map(|x| x * scale).collect())
        .collect();

    let mut result = identity(n);
    let mut term = identity(n);
    for k in 1..=20u32 {
        term = mat_mul(&term, &a);
        for row in &mut term {
            for x in row {
                *x /= k as f64;
            }
        }
        for i in 0..n {
            for j in 0..n {
                result[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..squarings {
        result = mat_mul(&result, &result);
    }
    result
}
