//! Acceptance suite: one test per delivered claim, each printing a single
//! PASS/FAIL line with the measured quantities and the budget they face.
//!
//! Every test uses a fixed seed; the whole suite is deterministic.

mod common;

use std::fs;
use std::process::Command;

use common::{
    duration_linear_model, duration_quadratic_model, matexp, rate_matrix, symmetric_three_state,
    three_state_mixed,
};
use smpkit::checks::{
    adversarial_two_step_paths, check_derivative_limit, check_dominating_bound,
    check_embedded_chain, check_forward_residual, check_two_jump, dominating_bound,
    embedded_chain_records, embedded_chain_test, EmbeddedChainSettings,
};
use smpkit::monte_carlo::{estimate_duration_cdf, estimate_transition};
use smpkit::solver::{compose, solve_row};
use smpkit::StartState;

const MAX_JUMPS: usize = 100_000;

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

#[test]
fn acceptance_01_solver_marginals_match_the_matrix_exponential() {
    // Oracle self-check first: for a two-state flip with rates 0.5 and 1.0,
    // staying probability over one unit is 2/3 + e^{-1.5}/3.
    let q = vec![vec![-0.5, 0.5], vec![1.0, -1.0]];
    let p = matexp(&q, 1.0);
    assert!(
        (p[0][0] - 0.741_043_386_716_143_2).abs() < 1e-12,
        "matrix exponential oracle is off: {}",
        p[0][0]
    );

    let model = three_state_mixed();
    let expected = matexp(&rate_matrix(&model, 0.0, 0.0), 1.0);
    let mut worst = 0.0f64;
    for (i, expected_row) in expected.iter().enumerate() {
        let seq = solve_row(&model, StartState::fresh(i, 0.0), 1.0, 1e-3).unwrap();
        for (j, &probability) in expected_row.iter().enumerate() {
            let got = seq.marginal(1.0, j).unwrap();
            worst = worst.max((got - probability).abs());
        }
    }
    let ok = worst <= 5e-3;
    println!(
        "ACCEPTANCE 01 solver marginals vs matrix exponential: {} \
         (max |error| {:.3e}, budget 5.0e-3)",
        verdict(ok),
        worst
    );
    assert!(ok, "worst marginal error {worst:.3e} exceeds 5e-3");
}

#[test]
fn acceptance_02_monte_carlo_agrees_with_the_solver_on_duration_laws() {
    let model = duration_linear_model();
    let start = StartState::fresh(0, 0.0);
    let time = 2.0;
    let d_grid: Vec<f64> = (1..=10).map(|k| 0.2 * k as f64).collect();
    let n_paths = 200_000;
    let seed = 20_602;

    let mut rows = estimate_transition(&model, start, time, n_paths, seed, MAX_JUMPS).unwrap();
    rows.extend(
        estimate_duration_cdf(&model, start, time, &d_grid, n_paths, seed, MAX_JUMPS).unwrap(),
    );
    let seq = solve_row(&model, start, time, 2e-3).unwrap();

    let mut worst = 0.0f64;
    let mut worst_se = 0.0f64;
    for r in &rows {
        let solver_value = match r.duration_bound {
            None => seq.marginal(time, r.to_state).unwrap(),
            Some(d) => seq.cdf(time, r.to_state, d).unwrap(),
        };
        let diff = (r.estimate - solver_value).abs();
        if diff > worst {
            worst = diff;
            worst_se = r.stderr;
        }
    }
    let ok = worst <= 8.4e-3;
    println!(
        "ACCEPTANCE 02 Monte Carlo vs solver on {} duration-law values: {} \
         (max |difference| {:.3e} at stderr {:.1e}, budget 8.4e-3)",
        rows.len(),
        verdict(ok),
        worst,
        worst_se
    );
    assert!(ok, "worst disagreement {worst:.3e} exceeds 8.4e-3");
}

#[test]
fn acceptance_03_two_jump_probability_obeys_the_window_bound() {
    // Every exit rate is exactly 1, so the integral bound collapses to h²/2.
    let model = symmetric_three_state();
    let h_grid = [0.125, 0.25, 0.5, 1.0];
    let check = check_two_jump(
        &model,
        StartState::fresh(0, 0.0),
        &h_grid,
        100_000,
        20_603,
        MAX_JUMPS,
    )
    .unwrap();
    for w in &check.windows {
        assert!(
            (w.bound - 0.5 * w.h * w.h).abs() < 1e-9,
            "bound for unit rates must be h^2/2, got {} at h={}",
            w.bound,
            w.h
        );
    }
    let largest = check.windows.last().unwrap();
    let ok = check.pass && largest.estimate > 0.2;
    println!(
        "ACCEPTANCE 03 two-jump probability bound: {} \
         (all {} windows within bound + 3 SE, margin {:.3}, P(>=2 jumps in 1.0) = {:.3})",
        verdict(ok),
        check.windows.len(),
        check.margin,
        largest.estimate
    );
    assert!(ok, "two-jump check failed with margin {}", check.margin);
}

#[test]
fn acceptance_04_difference_quotients_converge_to_the_intensities() {
    let h_grid = [0.004, 0.008, 0.016, 0.032, 0.064, 0.128, 0.256];
    let mixed = check_derivative_limit(&three_state_mixed(), 1.0, 0.5, &h_grid, 128).unwrap();
    let linear = check_derivative_limit(&duration_linear_model(), 1.0, 0.5, &h_grid, 128).unwrap();
    let ok = mixed.pass && linear.pass;
    println!(
        "ACCEPTANCE 04 quotient convergence to the intensity matrix: {} \
         (orders {:.2} and {:.2} >= 0.9; final errors {:.2e} and {:.2e} <= 2e-2)",
        verdict(ok),
        mixed.fitted_order,
        linear.fitted_order,
        mixed.final_error,
        linear.final_error
    );
    assert!(mixed.pass, "constant-rate model: {mixed:?}");
    assert!(linear.pass, "duration-dependent model: {linear:?}");
}

#[test]
fn acceptance_05_difference_quotients_respect_the_dominating_constant() {
    // Hand-derived constants: unit exit rates give 2·1·(1+1) = 4; the
    // duration-linear model from (1, 0.5) peaks at 3 along the
    // characteristic and at 2 after a reset, giving 2·3·(1+2) = 18.
    let symmetric = symmetric_three_state();
    let linear = duration_linear_model();
    let c_sym = dominating_bound(&symmetric, 1.0, 0.5).unwrap();
    let c_lin = dominating_bound(&linear, 1.0, 0.5).unwrap();
    assert!((c_sym - 4.0).abs() < 1e-9, "expected 4, got {c_sym}");
    assert!((c_lin - 18.0).abs() < 1e-9, "expected 18, got {c_lin}");

    let sym_check = check_dominating_bound(&symmetric, 1.0, 0.5, 20, 200).unwrap();
    let lin_check = check_dominating_bound(&linear, 1.0, 0.5, 20, 200).unwrap();
    let ok = sym_check.pass && lin_check.pass;
    println!(
        "ACCEPTANCE 05 dominating bound on quotient row sums: {} \
         (worst row sums {:.3} <= 4 and {:.3} <= 18 over 20 windows)",
        verdict(ok),
        sym_check.worst_row_sum,
        lin_check.worst_row_sum
    );
    assert!(ok, "{sym_check:?} / {lin_check:?}");
}

#[test]
fn acceptance_06_splitting_a_run_reproduces_the_direct_law() {
    let model = duration_linear_model();
    let start = StartState {
        state: 0,
        time: 0.0,
        duration: 0.25,
    };
    let delta = 2e-3;
    let full = solve_row(&model, start, 1.0, delta).unwrap();
    let d_probe = [0.3, 0.6, 0.9, 1.2];

    // Splitting at either endpoint must be exact.
    for split in [0.0, 1.0] {
        let composed = compose(&model, &full, split, 1.0).unwrap();
        for j in 0..2 {
            let diff = (composed.marginal(1.0, j).unwrap() - full.marginal(1.0, j).unwrap()).abs();
            assert!(diff < 1e-12, "split at {split}: marginal off by {diff:.2e}");
        }
    }

    // An interior split faces only the cell-midpoint restart quantization.
    // For the linear-pull model the midpoint rule is exact, so run the
    // quadratic-pull model too, where the quantization genuinely bites.
    let quadratic = duration_quadratic_model();
    let full_quad = solve_row(&quadratic, start, 1.0, delta).unwrap();
    let mut worst = 0.0f64;
    for (m, direct) in [(&model, &full), (&quadratic, &full_quad)] {
        let composed = compose(m, direct, 0.5, 1.0).unwrap();
        for j in 0..2 {
            worst = worst
                .max((composed.marginal(1.0, j).unwrap() - direct.marginal(1.0, j).unwrap()).abs());
            for &d in &d_probe {
                worst = worst
                    .max((composed.cdf(1.0, j, d).unwrap() - direct.cdf(1.0, j, d).unwrap()).abs());
            }
        }
    }
    let ok = worst <= 5e-3;
    println!(
        "ACCEPTANCE 06 split-and-restart law composition: {} \
         (endpoint splits exact, interior split max |difference| {:.3e} \
          over linear and quadratic pulls, budget 5.0e-3)",
        verdict(ok),
        worst
    );
    assert!(ok, "interior split disagreement {worst:.3e} exceeds 5e-3");
}

#[test]
fn acceptance_07_duration_density_matches_the_cdf_slope() {
    let model = duration_linear_model();
    let start = StartState {
        state: 0,
        time: 0.0,
        duration: 0.3,
    };
    let delta = 2e-3;
    let time = 1.5;
    let seq = solve_row(&model, start, time, delta).unwrap();
    let mut worst = 0.0f64;
    for d in [0.3, 0.5, 0.7, 0.9, 1.1] {
        let density = seq.duration_left_derivative(&model, time, 1, d).unwrap();
        let slope = (seq.cdf(time, 1, d).unwrap() - seq.cdf(time, 1, d - delta).unwrap()) / delta;
        assert!(density > 0.0, "density at d={d} should be positive");
        worst = worst.max((density - slope).abs());
    }
    let ok = worst <= 2e-2;
    println!(
        "ACCEPTANCE 07 duration density vs cdf slope: {} \
         (max |difference| {:.3e} over 5 interior durations, budget 2.0e-2)",
        verdict(ok),
        worst
    );
    assert!(ok, "density/slope disagreement {worst:.3e} exceeds 2e-2");
}

#[test]
fn acceptance_08_forward_equation_residual_halves_with_the_step() {
    let sample_times = [0.4, 0.6, 0.8];
    let mixed = check_forward_residual(
        &three_state_mixed(),
        StartState::fresh(0, 0.0),
        0.2,
        1.0,
        4e-3,
        &sample_times,
    )
    .unwrap();
    let linear = check_forward_residual(
        &duration_linear_model(),
        StartState::fresh(0, 0.0),
        0.2,
        1.0,
        4e-3,
        &sample_times,
    )
    .unwrap();
    let ok = mixed.pass && linear.pass;
    println!(
        "ACCEPTANCE 08 forward-equation residual at half step: {} \
         (shrink factors {:.3} and {:.3}, budget 0.6)",
        verdict(ok),
        mixed.factor,
        linear.factor
    );
    assert!(mixed.pass, "constant-rate model: {mixed:?}");
    assert!(linear.pass, "duration-dependent model: {linear:?}");
}

#[test]
fn acceptance_09_probability_mass_is_conserved() {
    let mut worst = 0.0f64;
    let model = three_state_mixed();
    for i in 0..3 {
        let seq = solve_row(&model, StartState::fresh(i, 0.0), 1.0, 1e-3).unwrap();
        worst = worst.max(seq.conservation.max_defect);
    }
    let model = duration_linear_model();
    let seq = solve_row(&model, StartState::fresh(0, 0.0), 2.0, 2e-3).unwrap();
    worst = worst.max(seq.conservation.max_defect);

    let ok = worst <= 1e-6;
    println!(
        "ACCEPTANCE 09 probability conservation: {} \
         (max |total mass - 1| {:.3e} across 4 runs, budget 1.0e-6)",
        verdict(ok),
        worst
    );
    assert!(ok, "conservation defect {worst:.3e} exceeds 1e-6");
}

#[test]
fn acceptance_10_embedded_chain_memorylessness_test_has_level_and_power() {
    // A faithful simulator passes.
    let honest = check_embedded_chain(
        &three_state_mixed(),
        0,
        6.0,
        100_000,
        20_610,
        MAX_JUMPS,
        &EmbeddedChainSettings::default(),
    )
    .unwrap();

    // Two states leave almost nothing to compare, but what remains passes.
    let thin = check_embedded_chain(
        &duration_linear_model(),
        0,
        6.0,
        20_000,
        20_611,
        MAX_JUMPS,
        &EmbeddedChainSettings::default(),
    )
    .unwrap();

    // A generator whose sojourns depend on the pre-previous state must be
    // rejected in at least 9 of 10 replicates.
    let mut rejections = 0;
    for rep in 0..10u64 {
        let paths = adversarial_two_step_paths(100_000, 6.0, 3_000 + rep);
        let records = embedded_chain_records(&paths);
        let report = embedded_chain_test(&records, 6.0, &EmbeddedChainSettings::default());
        if !report.pass {
            rejections += 1;
        }
    }

    let ok = honest.pass && thin.pass && rejections >= 9;
    println!(
        "ACCEPTANCE 10 embedded-chain memorylessness: {} \
         (honest min p {:.3} >= alpha {:.2e} over {} comparisons; \
         two-state case passes with {} comparisons; \
         two-step generator rejected {}/10)",
        verdict(ok),
        honest.min_p,
        honest.bonferroni_alpha,
        honest.comparisons.len(),
        thin.comparisons.len(),
        rejections
    );
    assert!(honest.pass, "honest simulator rejected: {honest:?}");
    assert!(thin.pass, "two-state model rejected");
    assert!(rejections >= 9, "power too low: {rejections}/10");
}

#[test]
fn acceptance_11_cli_outputs_are_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let config = serde_json::json!({
        "schema_version": 1,
        "seed": 20_611,
        "model": {
            "states": ["idle", "busy"],
            "intensities": [
                {"from": "idle", "to": "busy", "field": {"kind": "constant", "rate": 0.5}},
                {"from": "busy", "to": "idle", "field": {"kind": "constant", "rate": 1.0}}
            ]
        },
        "experiment": {
            "kind": "compare",
            "initial_state": "idle",
            "time": 1.0,
            "delta": 0.002,
            "n_paths": 20_000,
            "d_grid": [0.5, 1.0]
        }
    });
    let config_path = dir.path().join("compare.json");
    fs::write(&config_path, serde_json::to_string_pretty(&config).unwrap()).unwrap();

    let mut outputs = Vec::new();
    for threads in ["1", "4"] {
        let out_dir = dir.path().join(format!("threads-{threads}"));
        let status = Command::new(env!("CARGO_BIN_EXE_smpkit"))
            .args([
                "compare",
                "--config",
                config_path.to_str().unwrap(),
                "--out",
                out_dir.to_str().unwrap(),
                "--quiet",
            ])
            .env("SMPKIT_THREADS", threads)
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0), "run with {threads} threads failed");
        // resolved_config.json records the (deliberately different) output
        // directory, so only the data outputs are compared.
        outputs.push(
            ["comparison.csv", "summary.json"].map(|name| fs::read(out_dir.join(name)).unwrap()),
        );
    }
    let ok = outputs[0] == outputs[1];
    println!(
        "ACCEPTANCE 11 CLI determinism across thread counts: {} \
         (comparison.csv and summary.json byte-identical for 1 vs 4 threads)",
        verdict(ok)
    );
    assert!(ok, "outputs differ between thread counts");
}
