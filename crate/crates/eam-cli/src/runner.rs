//! Command dispatch: build the requested pipeline, write CSV artifacts and a
//! metadata block, and report the outcome.

use std::path::{Path, PathBuf};
use std::time::Instant;

use eam_core::analytic::{self, NopolScheme};
use eam_core::dynamics::{decay_curve, DecaySpec, WahuhaOptions};
use eam_core::io as core_io;
use eam_core::sequence::{avg_fields, FieldWaveform};

use crate::config::{config_hash, Command, RunConfig};
use crate::verify;
use crate::CliError;

/// Outcome of a run: artifact paths plus the verify tally when applicable.
#[derive(Debug, Default)]
pub struct RunOutcome {
    pub artifacts: Vec<PathBuf>,
    pub checks_passed: usize,
    pub checks_failed: usize,
}

fn write_artifact(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    core_io::write_atomic(&path, contents)?;
    Ok(path)
}

fn metadata_block(cfg: &RunConfig, started: Instant, extra: &[(String, String)]) -> String {
    let mut out = String::new();
    out.push_str(&format!("command = {}\n", cfg.command.name()));
    out.push_str(&format!("seed = {}\n", cfg.seed));
    out.push_str(&format!("config_hash = {}\n", config_hash(cfg)));
    out.push_str(&format!("version = {}\n", env!("CARGO_PKG_VERSION")));
    for (k, v) in extra {
        out.push_str(&format!("{k} = {v}\n"));
    }
    out.push_str(&format!(
        "wall_time_s = {:.3}\n",
        started.elapsed().as_secs_f64()
    ));
    out
}

fn linspace(start: f64, stop: f64, points: usize) -> Vec<f64> {
    (0..points)
        .map(|i| start + (stop - start) * i as f64 / (points - 1) as f64)
        .collect()
}

fn logspace(start: f64, stop: f64, points: usize) -> Vec<f64> {
    let (l0, l1) = (start.ln(), stop.ln());
    (0..points)
        .map(|i| (l0 + (l1 - l0) * i as f64 / (points - 1) as f64).exp())
        .collect()
}

/// Execute a validated configuration. Artifacts land in `cfg.output`.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    let started = Instant::now();
    let dir = PathBuf::from(&cfg.output);
    std::fs::create_dir_all(&dir).map_err(eam_core::EamError::Io)?;
    let mut outcome = RunOutcome::default();

    match cfg.command {
        Command::Decay => {
            let spec = DecaySpec {
                placement: cfg.placement,
                polarization: cfg.polarization,
                sequence: cfg.sequence,
                wahuha: (cfg.wahuha_cycles > 0).then_some(WahuhaOptions {
                    cycles_per_interval: cfg.wahuha_cycles,
                    symmetrized: cfg.wahuha_symmetrized,
                }),
                tau_grid: linspace(cfg.tau_start, cfg.tau_stop, cfg.tau_points),
                trials: cfg.trials,
                seed: cfg.seed,
                gmax: cfg.gmax,
                gamma_s: cfg.gamma_s,
                gamma_i: cfg.gamma_i,
                field: FieldWaveform {
                    kind: cfg.field_kind,
                    b0: cfg.b0,
                },
            };
            let curve = decay_curve(&spec)?;
            outcome
                .artifacts
                .push(write_artifact(&dir, "decay.csv", &core_io::write_decay_csv(&curve))?);
            let extra = vec![
                ("t2".to_string(), curve.t2.value.to_string()),
                ("t2_censored".to_string(), curve.t2.censored.to_string()),
                (
                    "time_unit".to_string(),
                    "pi / lambda_max per sampled configuration".to_string(),
                ),
            ];
            outcome.artifacts.push(write_artifact(
                &dir,
                "decay.meta",
                &metadata_block(cfg, started, &extra),
            )?);
        }
        Command::Sensitivity => {
            let r_grid = if cfg.r_log {
                logspace(cfg.r_start, cfg.r_stop, cfg.r_points)
            } else {
                linspace(cfg.r_start, cfg.r_stop, cfg.r_points)
            };
            let rows = analytic::ratio_curves(
                &cfg.q_list,
                &r_grid,
                cfg.t2b,
                cfg.readout_c,
                cfg.gamma,
            )?;
            outcome.artifacts.push(write_artifact(
                &dir,
                "sensitivity.csv",
                &core_io::write_ratio_csv(&rows),
            )?);
            outcome.artifacts.push(write_artifact(
                &dir,
                "sensitivity.meta",
                &metadata_block(cfg, started, &[]),
            )?);
        }
        Command::Phase => {
            // enhancement factor of the closed-form phase over the bare echo
            // phase, per (lambda tau, P); needs a waveform with nonzero echo
            // average
            let field = FieldWaveform {
                kind: cfg.field_kind,
                b0: 1.0,
            };
            let tau = 1.0;
            let (b1, b2) = avg_fields(field, tau);
            if b1 == 0.0 {
                return Err(CliError::Validation {
                    name: "field.kind".into(),
                    reason: "phase tables need a waveform with a nonzero echo average".into(),
                });
            }
            let mut csv = String::from("lambda_tau,polarization,enhancement\n");
            for &lt in &linspace(cfg.lambda_tau_start, cfg.lambda_tau_stop, cfg.lambda_tau_points)
            {
                for &p in &cfg.p_list {
                    let inputs = analytic::PhaseInputs {
                        lambda: vec![lt / tau],
                        tau,
                        polarization: p,
                        gamma_s: cfg.gamma_s,
                        gamma_i: cfg.gamma_i,
                        b1_bar: b1,
                        b2_bar: b2,
                    };
                    let phi = analytic::phase_eam(&inputs)?;
                    let enhancement = phi / (cfg.gamma_s * b1 * tau);
                    csv.push_str(&format!("{lt},{p},{enhancement}\n"));
                }
            }
            outcome
                .artifacts
                .push(write_artifact(&dir, "phase.csv", &csv)?);
            outcome.artifacts.push(write_artifact(
                &dir,
                "phase.meta",
                &metadata_block(cfg, started, &[]),
            )?);
        }
        Command::Nopol => {
            // small-field x-readout signal bracket per single-spin coupling,
            // exact and strong-coupling shorthand
            let mut csv = String::from("lambda_t,exact_bracket,approx_bracket,n_sc\n");
            for &lt in &linspace(cfg.lambda_t_start, cfg.lambda_t_stop, cfg.lambda_t_points) {
                let s = analytic::signal_nopol(&[lt], 0.0, 1.0);
                let c = lt / 4.0;
                let exact = 2.0 + (1.0 + c.cos().powi(2)) * c.sin().powi(2);
                let approx = 2.0 + 0.75 * s.n_sc as f64;
                csv.push_str(&format!("{lt},{exact},{approx},{}\n", s.n_sc));
            }
            outcome
                .artifacts
                .push(write_artifact(&dir, "nopol_signal.csv", &csv)?);

            let mut csv = String::from("n_sc,eta_echo,eta_eam\n");
            for n_sc in 0..=cfg.n_sc_max {
                let echo = analytic::sensitivity_nopol(
                    cfg.gamma,
                    cfg.readout_c,
                    cfg.nopol_tau,
                    n_sc as f64,
                    NopolScheme::Echo,
                );
                let eam = analytic::sensitivity_nopol(
                    cfg.gamma,
                    cfg.readout_c,
                    cfg.nopol_tau,
                    n_sc as f64,
                    NopolScheme::Eam,
                );
                csv.push_str(&format!("{n_sc},{echo},{eam}\n"));
            }
            outcome
                .artifacts
                .push(write_artifact(&dir, "nopol_sensitivity.csv", &csv)?);
            outcome.artifacts.push(write_artifact(
                &dir,
                "nopol.meta",
                &metadata_block(cfg, started, &[]),
            )?);
        }
        Command::Verify => {
            let report = verify::run_suite(cfg);
            let mut text = String::new();
            for check in &report.checks {
                let status = if check.passed { "PASS" } else { "FAIL" };
                text.push_str(&format!("check {}: {status} — {}\n", check.name, check.detail));
            }
            text.push_str(&format!(
                "{} passed, {} failed\n",
                report.passed(),
                report.failed()
            ));
            print!("{text}");
            outcome.artifacts.push(write_artifact(&dir, "verify.txt", &text)?);
            outcome.artifacts.push(write_artifact(
                &dir,
                "verify.meta",
                &metadata_block(cfg, started, &[]),
            )?);
            outcome.checks_passed = report.passed();
            outcome.checks_failed = report.failed();
            if report.failed() > 0 {
                return Err(CliError::VerifyFailed {
                    failed: report.failed(),
                });
            }
        }
    }
    Ok(outcome)
}
