//! Experiment execution: build the model described by a configuration, run
//! the selected experiment, and write its outputs into a directory.
//!
//! Every run writes `resolved_config.json` (the exact configuration used,
//! after command-line overrides) next to the experiment's own outputs, and
//! all outputs are byte-deterministic for a fixed configuration regardless
//! of thread count.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::json;

use crate::checks::{self, CheckReport, EmbeddedChainSettings};
use crate::config::{ExperimentConfig, ExperimentSpec};
use crate::model::IntensityModel;
use crate::monte_carlo::{estimate_duration_cdf, estimate_transition, EstimateRow};
use crate::simulate::simulate_batch;
use crate::solver::solve_row;
use crate::{Error, StartState};

/// Environment variable bounding the worker thread count; unset, `0`, or an
/// unparseable value means "use all available cores".
pub const THREADS_ENV: &str = "SMPKIT_THREADS";

fn parse_threads(value: Option<&str>) -> usize {
    value
        .and_then(|v| v.trim().parse::<usize>().ok())
        .unwrap_or(0)
}

/// Size the global worker pool from [`THREADS_ENV`]. Safe to call more than
/// once; only the first initialization wins. Results never depend on the
/// thread count — only wall-clock time does.
pub fn init_thread_pool() {
    let threads = parse_threads(std::env::var(THREADS_ENV).ok().as_deref());
    if threads > 0 {
        // A second initialization (e.g. in tests) is fine to ignore.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
}

/// What a run produced: the files written and the names of any failed
/// verification checks or comparison rows.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    pub failed_checks: Vec<String>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, Error> {
    Ok(BufWriter::new(
        fs::File::create(path).map_err(io_err(path))?,
    ))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), Error> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e.into(),
    })?;
    writeln!(w).map_err(io_err(path))?;
    Ok(())
}

fn resolve_state(model: &IntensityModel, name: &str) -> Result<usize, Error> {
    model
        .states()
        .index_of(name)
        .ok_or_else(|| crate::config::ConfigError::Invalid {
            reason: format!("unknown initial_state {name:?}"),
        })
        .map_err(Error::from)
}

/// Run the experiment in `cfg`, writing all outputs under `out_dir`
/// (created if missing). With `quiet` set, nothing is printed.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path, quiet: bool) -> Result<RunOutcome, Error> {
    cfg.validate()?;
    init_thread_pool();
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;

    let mut files = Vec::new();
    let resolved_path = out_dir.join("resolved_config.json");
    let mut resolved = cfg.clone();
    resolved.output_dir = Some(out_dir.to_path_buf());
    write_json(
        &resolved_path,
        &serde_json::to_value(&resolved).expect("config serializes"),
    )?;
    files.push(resolved_path);

    let model = cfg.model.build()?;
    let mut failed_checks = Vec::new();

    match &cfg.experiment {
        ExperimentSpec::Simulate {
            initial_state,
            start_time,
            initial_duration,
            horizon,
            n_paths,
            max_jumps,
        } => {
            let state = resolve_state(&model, initial_state)?;
            let paths = simulate_batch(
                &model,
                state,
                *start_time,
                *initial_duration,
                *horizon,
                *n_paths,
                *max_jumps,
                cfg.seed,
            )?;

            let csv_path = out_dir.join("trajectories.csv");
            let mut w = create(&csv_path)?;
            writeln!(w, "path,time,state").map_err(io_err(&csv_path))?;
            for (k, path) in paths.iter().enumerate() {
                writeln!(
                    w,
                    "{k},{:.11e},{}",
                    path.start_time,
                    model.states().name(path.initial_state)
                )
                .map_err(io_err(&csv_path))?;
                for e in &path.events {
                    writeln!(w, "{k},{:.11e},{}", e.time, model.states().name(e.state))
                        .map_err(io_err(&csv_path))?;
                }
            }
            w.flush().map_err(io_err(&csv_path))?;
            files.push(csv_path);

            let total_jumps: usize = paths.iter().map(|p| p.jump_count()).sum();
            let mut final_counts = vec![0u64; model.n_states()];
            for p in &paths {
                final_counts[p.state_at(*horizon).0] += 1;
            }
            let summary_path = out_dir.join("summary.json");
            write_json(
                &summary_path,
                &json!({
                    "n_paths": n_paths,
                    "total_jumps": total_jumps,
                    "mean_jumps": total_jumps as f64 / *n_paths as f64,
                    "final_state_counts": model
                        .states()
                        .names()
                        .iter()
                        .zip(&final_counts)
                        .map(|(name, count)| json!({"state": name, "count": count}))
                        .collect::<Vec<_>>(),
                }),
            )?;
            files.push(summary_path);
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
            let state = resolve_state(&model, initial_state)?;
            let seq = solve_row(
                &model,
                StartState {
                    state,
                    time: *start_time,
                    duration: *initial_duration,
                },
                *end_time,
                *delta,
            )?;

            let csv_path = out_dir.join("rows.csv");
            let w = create(&csv_path)?;
            seq.write_rows_csv(w, output_times)?;
            files.push(csv_path);

            let mut marginals = Vec::new();
            let mut duration_cdf = Vec::new();
            for j in 0..model.n_states() {
                marginals.push(json!({
                    "state": model.states().name(j),
                    "probability": seq.marginal(*end_time, j)?,
                }));
                for &d in d_grid {
                    duration_cdf.push(json!({
                        "state": model.states().name(j),
                        "duration_bound": d,
                        "probability": seq.cdf(*end_time, j, d)?,
                    }));
                }
            }
            let summary_path = out_dir.join("summary.json");
            write_json(
                &summary_path,
                &json!({
                    "start_time": start_time,
                    "end_time": end_time,
                    "delta": delta,
                    "steps": seq.rows.len() - 1,
                    "conservation": {
                        "max_defect": seq.conservation.max_defect,
                        "per_unit_time": seq.conservation.per_unit_time,
                    },
                    "marginals": marginals,
                    "duration_cdf": duration_cdf,
                }),
            )?;
            files.push(summary_path);
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
            let state = resolve_state(&model, initial_state)?;
            let start = StartState {
                state,
                time: *time,
                duration: *duration,
            };
            let mut reports: Vec<CheckReport> = Vec::new();

            let two_jump =
                checks::check_two_jump(&model, start, h_grid, *n_paths, cfg.seed, *max_jumps)?;
            reports.push(two_jump.report());

            let cycles = checks::check_quick_cycles(
                &model,
                start,
                h_grid,
                *n_paths,
                cfg.seed.wrapping_add(1),
                *max_jumps,
            )?;
            reports.push(cycles.report());

            let qh = quotient_h_grid.as_deref().unwrap_or(h_grid);
            let derivative =
                checks::check_derivative_limit(&model, *time, *duration, qh, *steps_per_window)?;
            reports.push(derivative.report());

            let dominating =
                checks::check_dominating_bound(&model, *time, *duration, 20, *steps_per_window)?;
            reports.push(dominating.report());

            if let Some(r) = residual {
                let res = checks::check_forward_residual(
                    &model,
                    start,
                    r.duration_bound,
                    r.end_time,
                    r.delta,
                    &r.sample_times,
                )?;
                reports.push(res.report());
            }

            if let Some(e) = embedded {
                let settings = EmbeddedChainSettings {
                    significance: e.significance,
                    time_bins: e.time_bins,
                    min_group: e.min_group,
                };
                let chain = checks::check_embedded_chain(
                    &model,
                    state,
                    e.horizon,
                    e.n_paths,
                    cfg.seed.wrapping_add(2),
                    *max_jumps,
                    &settings,
                )?;
                reports.push(chain.report());
            }

            for report in &reports {
                if !quiet {
                    println!(
                        "check {}: {} (margin {:+.3})",
                        report.name,
                        if report.pass { "PASS" } else { "FAIL" },
                        report.margin
                    );
                }
                if !report.pass {
                    failed_checks.push(report.name.clone());
                }
            }

            let report_path = out_dir.join("report.json");
            let w = create(&report_path)?;
            checks::write_reports_json(w, &reports)?;
            files.push(report_path);
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
            let state = resolve_state(&model, initial_state)?;
            let start = StartState {
                state,
                time: *start_time,
                duration: *initial_duration,
            };
            let mut rows: Vec<EstimateRow> =
                estimate_transition(&model, start, *time, *n_paths, cfg.seed, *max_jumps)?;
            rows.extend(estimate_duration_cdf(
                &model, start, *time, d_grid, *n_paths, cfg.seed, *max_jumps,
            )?);
            let seq = solve_row(&model, start, *time, *delta)?;

            let csv_path = out_dir.join("comparison.csv");
            let mut w = create(&csv_path)?;
            writeln!(
                w,
                "from,to,time,duration_bound,mc_estimate,mc_stderr,solver,abs_diff,allowance,agree"
            )
            .map_err(io_err(&csv_path))?;
            let mut max_abs_diff = 0.0f64;
            let mut n_failed = 0usize;
            for r in &rows {
                let solver_value = match r.duration_bound {
                    None => seq.marginal(*time, r.to_state)?,
                    Some(d) => seq.cdf(*time, r.to_state, d)?,
                };
                let abs_diff = (r.estimate - solver_value).abs();
                let allowance = abs_slack + 3.0 * r.stderr;
                let agree = abs_diff <= allowance;
                max_abs_diff = max_abs_diff.max(abs_diff);
                if !agree {
                    n_failed += 1;
                    failed_checks.push(match r.duration_bound {
                        None => format!(
                            "transition {} -> {}",
                            model.states().name(r.from_state),
                            model.states().name(r.to_state)
                        ),
                        Some(d) => format!(
                            "duration cdf {} -> {} at d <= {d}",
                            model.states().name(r.from_state),
                            model.states().name(r.to_state)
                        ),
                    });
                }
                let bound = match r.duration_bound {
                    None => "total".to_owned(),
                    Some(d) => format!("{d:.11e}"),
                };
                writeln!(
                    w,
                    "{},{},{:.11e},{},{:.11e},{:.11e},{:.11e},{:.11e},{:.11e},{}",
                    model.states().name(r.from_state),
                    model.states().name(r.to_state),
                    r.time,
                    bound,
                    r.estimate,
                    r.stderr,
                    solver_value,
                    abs_diff,
                    allowance,
                    agree
                )
                .map_err(io_err(&csv_path))?;
            }
            w.flush().map_err(io_err(&csv_path))?;
            files.push(csv_path);

            if !quiet {
                println!(
                    "compared {} quantities: max |difference| {:.3e}, {} outside allowance",
                    rows.len(),
                    max_abs_diff,
                    n_failed
                );
            }
            let summary_path = out_dir.join("summary.json");
            write_json(
                &summary_path,
                &json!({
                    "time": time,
                    "delta": delta,
                    "n_paths": n_paths,
                    "abs_slack": abs_slack,
                    "n_rows": rows.len(),
                    "n_disagreements": n_failed,
                    "max_abs_diff": max_abs_diff,
                    "solver_conservation_defect": seq.conservation.max_defect,
                }),
            )?;
            files.push(summary_path);
        }
    }

    if !quiet {
        for f in &files {
            println!("wrote {}", f.display());
        }
    }
    Ok(RunOutcome {
        files,
        failed_checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;

    fn config_with(experiment: serde_json::Value) -> ExperimentConfig {
        let text = json!({
            "schema_version": 1,
            "seed": 11,
            "model": {
                "states": ["idle", "busy"],
                "intensities": [
                    {"from": "idle", "to": "busy", "field": {"kind": "constant", "rate": 0.5}},
                    {"from": "busy", "to": "idle", "field": {"kind": "constant", "rate": 1.0}}
                ]
            },
            "experiment": experiment
        })
        .to_string();
        ExperimentConfig::from_json_str(&text).unwrap()
    }

    fn read(path: &Path) -> Vec<u8> {
        fs::read(path).unwrap()
    }

    #[test]
    fn thread_env_parsing_falls_back_to_auto() {
        assert_eq!(parse_threads(None), 0);
        assert_eq!(parse_threads(Some("0")), 0);
        assert_eq!(parse_threads(Some("4")), 4);
        assert_eq!(parse_threads(Some(" 2 ")), 2);
        assert_eq!(parse_threads(Some("four")), 0);
        assert_eq!(parse_threads(Some("-1")), 0);
    }

    #[test]
    fn simulate_writes_deterministic_trajectories() {
        let cfg = config_with(json!({
            "kind": "simulate",
            "initial_state": "idle",
            "horizon": 2.0,
            "n_paths": 200
        }));
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        let outcome = run(&cfg, &a, true).unwrap();
        run(&cfg, &b, true).unwrap();
        assert!(outcome.failed_checks.is_empty());
        assert_eq!(outcome.files.len(), 3);
        for name in ["trajectories.csv", "summary.json"] {
            assert_eq!(read(&a.join(name)), read(&b.join(name)), "{name}");
        }
        let summary: serde_json::Value =
            serde_json::from_slice(&read(&a.join("summary.json"))).unwrap();
        assert_eq!(summary["n_paths"], 200);
        assert!(summary["total_jumps"].as_u64().unwrap() > 0);

        let text = String::from_utf8(read(&a.join("trajectories.csv"))).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "path,time,state");
        assert!(lines.next().unwrap().starts_with("0,0.00000000000e0,idle"));
    }

    #[test]
    fn solve_reports_conservation_and_marginals() {
        let cfg = config_with(json!({
            "kind": "solve",
            "initial_state": "idle",
            "end_time": 1.0,
            "delta": 0.002,
            "output_times": [0.5, 1.0],
            "d_grid": [0.25, 1.0]
        }));
        let dir = tempfile::tempdir().unwrap();
        let outcome = run(&cfg, dir.path(), true).unwrap();
        assert!(outcome.failed_checks.is_empty());
        let summary: serde_json::Value =
            serde_json::from_slice(&read(&dir.path().join("summary.json"))).unwrap();
        assert!(summary["conservation"]["max_defect"].as_f64().unwrap() < 1e-9);
        let total: f64 = summary["marginals"]
            .as_array()
            .unwrap()
            .iter()
            .map(|m| m["probability"].as_f64().unwrap())
            .sum();
        assert!((total - 1.0).abs() < 1e-9);
        let rows = String::from_utf8(read(&dir.path().join("rows.csv"))).unwrap();
        assert!(rows.starts_with("time,state,kind,duration,mass"));
        assert!(rows.lines().count() > 10);
    }

    #[test]
    fn verify_writes_passing_reports_for_an_honest_model() {
        let cfg = config_with(json!({
            "kind": "verify",
            "initial_state": "idle",
            "h_grid": [0.25, 0.5, 1.0],
            "quotient_h_grid": [0.005, 0.02, 0.08],
            "n_paths": 4000,
            "steps_per_window": 64,
            "residual": {
                "duration_bound": 0.2,
                "end_time": 1.0,
                "delta": 0.01,
                "sample_times": [0.4, 0.6, 0.8]
            },
            "embedded": {"horizon": 5.0, "n_paths": 3000}
        }));
        let dir = tempfile::tempdir().unwrap();
        let outcome = run(&cfg, dir.path(), true).unwrap();
        assert_eq!(outcome.failed_checks, Vec::<String>::new());
        let reports: serde_json::Value =
            serde_json::from_slice(&read(&dir.path().join("report.json"))).unwrap();
        let names: Vec<&str> = reports
            .as_array()
            .unwrap()
            .iter()
            .map(|r| r["name"].as_str().unwrap())
            .collect();
        assert_eq!(
            names,
            [
                "two_jump_bound",
                "quick_cycles",
                "derivative_limit",
                "dominating_bound",
                "forward_residual",
                "embedded_chain"
            ]
        );
        assert!(reports
            .as_array()
            .unwrap()
            .iter()
            .all(|r| r["pass"].as_bool().unwrap()));
    }

    #[test]
    fn compare_agrees_for_a_constant_model() {
        let cfg = config_with(json!({
            "kind": "compare",
            "initial_state": "idle",
            "time": 1.0,
            "delta": 0.002,
            "n_paths": 20000,
            "d_grid": [0.25, 0.5, 1.0]
        }));
        let dir = tempfile::tempdir().unwrap();
        let outcome = run(&cfg, dir.path(), true).unwrap();
        assert_eq!(outcome.failed_checks, Vec::<String>::new());
        let summary: serde_json::Value =
            serde_json::from_slice(&read(&dir.path().join("summary.json"))).unwrap();
        assert_eq!(summary["n_disagreements"], 0);
        assert!(summary["max_abs_diff"].as_f64().unwrap() < 0.02);
        let csv = String::from_utf8(read(&dir.path().join("comparison.csv"))).unwrap();
        // 2 marginal rows + 2 states × 3 duration bounds, plus the header.
        assert_eq!(csv.lines().count(), 1 + 2 + 6);
        assert!(csv.lines().skip(1).all(|l| l.ends_with(",true")));
    }

    #[test]
    fn bad_initial_state_surfaces_as_a_config_error() {
        let cfg = config_with(json!({
            "kind": "simulate",
            "initial_state": "missing",
            "horizon": 1.0,
            "n_paths": 10
        }));
        let dir = tempfile::tempdir().unwrap();
        let err = run(&cfg, dir.path(), true).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }
}
