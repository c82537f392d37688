//! Self-check suite behind the `verify` command: exercises the invariants
//! the rest of the toolkit depends on, against the shipped defaults.

use eam_core::analytic::{self, SensitivityModel};
use eam_core::dynamics::{
    brute_force_signal, coherence, decay_curve, DecaySpec, FieldSample, Placement,
};
use eam_core::ensemble::{dipolar_couplings, partition_clusters, sample_cube, SpinEnsemble};
use eam_core::io as core_io;
use eam_core::sequence::{avg_fields, FieldWaveform, ReadoutPhase, SequenceKind};
use eam_core::spincore::{expm_hermitian, spin_operators, CMatrix};

use crate::config::RunConfig;

pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> usize {
        self.checks.iter().filter(|c| c.passed).count()
    }

    pub fn failed(&self) -> usize {
        self.checks.len() - self.passed()
    }
}

fn check(
    checks: &mut Vec<Check>,
    name: &'static str,
    result: Result<String, String>,
) {
    match result {
        Ok(detail) => checks.push(Check {
            name,
            passed: true,
            detail,
        }),
        Err(detail) => checks.push(Check {
            name,
            passed: false,
            detail,
        }),
    }
}

/// Run every invariant check; all must pass on the shipped defaults.
pub fn run_suite(cfg: &RunConfig) -> Report {
    let mut checks = Vec::new();

    check(&mut checks, "spin_operator_algebra", {
        (|| {
            let mut worst = 0.0f64;
            for s in [0.5, 1.0] {
                let ops = spin_operators(s).map_err(|e| e.to_string())?;
                let comm = &ops.sx * &ops.sy - &ops.sy * &ops.sx;
                let target = &ops.sz * num_complex::Complex64::new(0.0, 1.0);
                worst = worst.max(eam_core::spincore::max_norm_diff(&comm, &target));
            }
            if worst < 1e-12 {
                Ok(format!("commutator deviation {worst:.2e}"))
            } else {
                Err(format!("commutator deviation {worst:.2e}"))
            }
        })()
    });

    check(&mut checks, "propagator_unitarity", {
        (|| {
            // expm_hermitian validates unitarity to 1e-12 internally
            for seed in 0..20u64 {
                let h = random_hermitian(5, seed);
                expm_hermitian(&h, 1.37).map_err(|e| e.to_string())?;
            }
            Ok("20 random generators within 1e-12".to_string())
        })()
    });

    check(&mut checks, "field_averages", {
        (|| {
            let (b1, b2) = avg_fields(FieldWaveform::ac_locked(1.0), 1.0);
            let want1 = 2.0 / std::f64::consts::PI;
            let want2 = 1.0 / (2.0 * std::f64::consts::PI);
            let (s1, _) = avg_fields(FieldWaveform::static_field(1.0), 1.0);
            if (b1 - want1).abs() < 1e-12 && (b2 - want2).abs() < 1e-12 && s1.abs() < 1e-12 {
                Ok("locked and static averages match closed forms".into())
            } else {
                Err(format!("averages ({b1}, {b2}, {s1}) off"))
            }
        })()
    });

    check(&mut checks, "refocusing", {
        (|| {
            let ens = SpinEnsemble::single(7.0, 1.0, 1.0, cfg.polarization)
                .map_err(|e| e.to_string())?;
            let part = eam_core::ensemble::ClusterPartition::single_cluster(1);
            let mut worst = 0.0f64;
            for kind in [SequenceKind::Echo, SequenceKind::Eam] {
                let seq = kind.build(1.0, FieldWaveform::zero()).map_err(|e| e.to_string())?;
                let r = coherence(&seq, &ens, &part, FieldSample::locked(0.0))
                    .map_err(|e| e.to_string())?;
                worst = worst.max((r.value - num_complex::Complex64::new(1.0, 0.0)).norm());
            }
            if worst < 1e-10 {
                Ok(format!("zero-field branch overlap within {worst:.2e} of 1"))
            } else {
                Err(format!("refocusing deviation {worst:.2e}"))
            }
        })()
    });

    check(&mut checks, "envelope_bounds", {
        (|| {
            let spec = DecaySpec {
                trials: 5,
                seed: cfg.seed,
                polarization: cfg.polarization,
                ..DecaySpec::new(
                    Placement::Cube { spins: 8 },
                    SequenceKind::Eam,
                    (0..8).map(|i| 0.25 * i as f64).collect(),
                )
            };
            let curve = decay_curve(&spec).map_err(|e| e.to_string())?;
            if curve
                .envelope
                .iter()
                .all(|&v| (0.0..=1.0 + 1e-9).contains(&v))
                && (curve.envelope[0] - 1.0).abs() < 1e-9
            {
                Ok("envelope within [0, 1] and starts at 1".into())
            } else {
                Err(format!("envelope out of bounds: {:?}", curve.envelope))
            }
        })()
    });

    check(&mut checks, "cluster_partition_validity", {
        (|| {
            for seed in 0..100u64 {
                let pts = sample_cube(14, seed);
                let (_, kappa) = dipolar_couplings(&pts, 1.0, 1.0).map_err(|e| e.to_string())?;
                let part = partition_clusters(&kappa, cfg.gmax).map_err(|e| e.to_string())?;
                let mut seen = vec![false; 14];
                for cluster in part.clusters() {
                    if cluster.len() > cfg.gmax {
                        return Err(format!("seed {seed}: cluster larger than gmax"));
                    }
                    for &i in cluster {
                        if seen[i] {
                            return Err(format!("seed {seed}: index {i} repeated"));
                        }
                        seen[i] = true;
                    }
                }
                if !seen.iter().all(|&s| s) {
                    return Err(format!("seed {seed}: partition does not cover"));
                }
            }
            Ok("100 seeds: disjoint and covering".into())
        })()
    });

    check(&mut checks, "cluster_vs_brute_force", {
        (|| {
            let pts = sample_cube(6, 314);
            let ens = SpinEnsemble::new(pts, 1.0, 1.0, cfg.polarization)
                .map_err(|e| e.to_string())?;
            let tau = 0.5 * std::f64::consts::PI / ens.lambda_max();
            let seq = SequenceKind::Eam
                .build(tau, FieldWaveform::zero())
                .map_err(|e| e.to_string())?;
            let whole = coherence(
                &seq,
                &ens,
                &eam_core::ensemble::ClusterPartition::single_cluster(6),
                FieldSample::locked(0.0),
            )
            .map_err(|e| e.to_string())?;
            let brute =
                brute_force_signal(&seq, &ens, FieldSample::locked(0.0)).map_err(|e| e.to_string())?;
            let diff = (whole.value - brute.value).norm();
            if diff < 1e-10 {
                Ok(format!("uncut cluster signal matches brute force to {diff:.2e}"))
            } else {
                Err(format!("deviation {diff:.2e}"))
            }
        })()
    });

    check(&mut checks, "monte_carlo_thread_determinism", {
        (|| {
            let spec = DecaySpec {
                trials: 6,
                seed: cfg.seed,
                ..DecaySpec::new(
                    Placement::Cube { spins: 6 },
                    SequenceKind::Echo,
                    vec![0.2, 0.6, 1.0],
                )
            };
            let mut curves = Vec::new();
            for threads in [1usize, 4] {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .map_err(|e| e.to_string())?;
                curves.push(pool.install(|| decay_curve(&spec)).map_err(|e| e.to_string())?);
            }
            if curves[0].envelope == curves[1].envelope {
                Ok("1-thread and 4-thread envelopes identical".into())
            } else {
                Err("envelopes differ across thread counts".into())
            }
        })()
    });

    check(&mut checks, "optimizer_stationary_point", {
        (|| {
            let opt = analytic::optimize_tau(
                |tau| analytic::sensitivity_echo1(1.0, 1.0, tau, 1.0),
                analytic::default_bracket(1.0),
            )
            .map_err(|e| e.to_string())?;
            let expected = 6.0f64.powf(-1.0 / 3.0);
            let rel = (opt.tau_star - expected).abs() / expected;
            if rel < 1e-4 && !opt.boundary {
                Ok(format!("tau* within {rel:.1e} of 6^(-1/3) T2B"))
            } else {
                Err(format!("tau* = {}, expected {expected}", opt.tau_star))
            }
        })()
    });

    check(&mut checks, "sensitivity_q_zero_reduction", {
        (|| {
            let model = SensitivityModel {
                q: 0.0,
                r: 2.0,
                t2b: cfg.t2b,
                c: cfg.readout_c,
                gamma: cfg.gamma,
                polarization: 1.0,
            };
            let mut worst = 0.0f64;
            for i in 1..50 {
                let tau = 0.04 * i as f64 * cfg.t2b;
                let a = analytic::sensitivity_params(&model, tau);
                let b =
                    analytic::sensitivity_echo_env(cfg.gamma, cfg.readout_c, tau, cfg.t2b, 2.0);
                worst = worst.max((a - b).abs() / b.abs());
            }
            if worst < 1e-12 {
                Ok(format!("pointwise agreement within {worst:.1e}"))
            } else {
                Err(format!("deviation {worst:.1e}"))
            }
        })()
    });

    check(&mut checks, "decay_csv_round_trip", {
        (|| {
            let spec = DecaySpec {
                trials: 3,
                seed: cfg.seed,
                ..DecaySpec::new(
                    Placement::Cube { spins: 5 },
                    SequenceKind::Echo,
                    vec![0.1, 0.7, 1.3],
                )
            };
            let curve = decay_curve(&spec).map_err(|e| e.to_string())?;
            let text = core_io::write_decay_csv(&curve);
            let back = core_io::parse_decay_csv(&text).map_err(|e| e.to_string())?;
            if back.taus == curve.taus
                && back.envelope == curve.envelope
                && back.stderr == curve.stderr
            {
                Ok("serialized curve parses back losslessly".into())
            } else {
                Err("round trip altered the curve".into())
            }
        })()
    });

    Report { checks }
}

fn random_hermitian(dim: usize, seed: u64) -> CMatrix {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut h = CMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..=i {
            let c = if i == j {
                num_complex::Complex64::new(rng.gen_range(-1.0..1.0), 0.0)
            } else {
                num_complex::Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            };
            h[(i, j)] = c;
            h[(j, i)] = c.conj();
        }
    }
    h
}
