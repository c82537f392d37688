//! Propagation of compiled sequences over spin ensembles.
//!
//! The probe interferometer splits into two branches; branch 0 starts in the
//! lower probe manifold. For branch propagators `V0`, `V1` over the
//! environment Hilbert space (restricted to a cluster), the branch overlap
//! is `L = Tr[V1 rho V0^dag]` and the measured signal is
//! `S = (1 + Im L) / 2` for y readout or `(1 + Re L) / 2` for x readout.
//! Under the disjoint-cluster approximation `L` factorizes over clusters,
//! with inter-cluster dipolar couplings dropped.
//!
//! Within one compiled segment the Hamiltonian operator structure is fixed
//! and the time-dependent field enters through its exact antiderivative, so
//! each segment contributes a single Hermitian exponential. When both the
//! field and intra-bath couplings are active inside one segment the two
//! generator parts do not commute and the antiderivative treatment is the
//! leading-order approximation; every quantitative cross-check in this crate
//! runs with one of the two switched off.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::ensemble::{self, ClusterPartition, SpinEnsemble};
use crate::sequence::{
    compile_toggling, embed_wahuha, field_integral, BranchSegments, FieldKind, FieldWaveform,
    PulseSequence, ReadoutPhase, SequenceKind,
};
use crate::spincore::{self, CMatrix, ProductState, UnitaryMatrix};
use crate::{EamError, Result};

/// Default cap on brute-force Hilbert-space size, in spin-1/2 sites.
pub const BRUTE_FORCE_CAP: usize = 12;

/// Central-difference step for [`phase_slope`], in field units.
pub const PHASE_SLOPE_STEP: f64 = 1e-4;

/// A concrete field realization: amplitude override plus the waveform phase
/// drawn for this run (only meaningful for the random-phase kind).
#[derive(Debug, Clone, Copy)]
pub struct FieldSample {
    pub b0: f64,
    pub phase: f64,
}

impl FieldSample {
    pub fn locked(b0: f64) -> Self {
        FieldSample { b0, phase: 0.0 }
    }
}

/// Branch overlap with its cluster factorization.
#[derive(Debug, Clone)]
pub struct CoherenceResult {
    /// `Tr[V1 rho V0^dag]`, the product of the per-cluster factors.
    pub value: Complex64,
    /// One factor per cluster, in partition order. The branch-dependent
    /// probe field phase is folded into the first factor.
    pub per_cluster: Vec<Complex64>,
}

impl CoherenceResult {
    /// Signal for the given readout quadrature.
    pub fn signal(&self, readout: ReadoutPhase) -> f64 {
        match readout {
            ReadoutPhase::Y => 0.5 * (1.0 + self.value.im),
            ReadoutPhase::X => 0.5 * (1.0 + self.value.re),
        }
    }
}

/// Pair of branch propagators for one cluster, including the field terms and
/// intra-cluster dipolar couplings. Index 0 is the branch starting in the
/// lower probe manifold. The branch-dependent probe field phase is not
/// included; see [`probe_phase`].
pub fn branch_propagators(
    segs: &BranchSegments,
    cluster: &[usize],
    ens: &SpinEnsemble,
    field: FieldSample,
) -> Result<(UnitaryMatrix, UnitaryMatrix)> {
    branch_propagators_with_cap(segs, cluster, ens, field, spincore::DEFAULT_SITE_CAP)
}

fn branch_propagators_with_cap(
    segs: &BranchSegments,
    cluster: &[usize],
    ens: &SpinEnsemble,
    field: FieldSample,
    cap_sites: usize,
) -> Result<(UnitaryMatrix, UnitaryMatrix)> {
    let n = cluster.len();
    if n > cap_sites {
        return Err(EamError::DimensionCap {
            dim: 1usize.checked_shl(n as u32).unwrap_or(usize::MAX),
            cap: 1usize << cap_sites,
            cap_sites,
        });
    }
    let dim = 1usize << n;
    let ops = spincore::spin_operators(0.5)?;
    let cartesian = [&ops.sx, &ops.sy, &ops.sz];
    // per-site Cartesian operators embedded in the cluster space
    let mut site_ops: Vec<[CMatrix; 3]> = Vec::with_capacity(n);
    for site in 0..n {
        let mut triple: Vec<CMatrix> = Vec::with_capacity(3);
        for op in cartesian {
            triple.push(spincore::embed_with_cap(op, site, n, cap_sites)?);
        }
        site_ops.push([triple[0].clone(), triple[1].clone(), triple[2].clone()]);
    }
    let along = |site: usize, axis: [f64; 3]| -> CMatrix {
        &site_ops[site][0] * Complex64::new(axis[0], 0.0)
            + &site_ops[site][1] * Complex64::new(axis[1], 0.0)
            + &site_ops[site][2] * Complex64::new(axis[2], 0.0)
    };

    let mut branches = [CMatrix::identity(dim, dim), CMatrix::identity(dim, dim)];
    for seg in &segs.segments {
        let dt = seg.duration();
        let f_seg = field_integral(
            segs.field.kind,
            field.b0,
            field.phase,
            segs.duration,
            seg.t0,
            seg.t1,
        );
        // shared parts: environment Zeeman along the toggled axis and the
        // intra-cluster dipolar term
        let mut shared = CMatrix::zeros(dim, dim);
        if f_seg != 0.0 {
            for site in 0..n {
                shared += along(site, seg.linear) * Complex64::new(ens.gamma_i * f_seg, 0.0);
            }
        }
        if let Some(dip_axis) = seg.dipolar {
            for a in 0..n {
                for b in (a + 1)..n {
                    let kappa = ens.kappa[(cluster[a], cluster[b])];
                    if kappa == 0.0 {
                        continue;
                    }
                    let na = along(a, dip_axis);
                    let nb = along(b, dip_axis);
                    let mut pair = &na * &nb * Complex64::new(3.0, 0.0);
                    for c in 0..3 {
                        pair -= &site_ops[a][c] * &site_ops[b][c];
                    }
                    shared += pair * Complex64::new(kappa * dt, 0.0);
                }
            }
        }
        for (br, branch) in branches.iter_mut().enumerate() {
            let m = seg.manifold[br];
            let mut gen = shared.clone();
            if m != 0.0 {
                for (site, &spin_idx) in cluster.iter().enumerate() {
                    let w = m * ens.lambda[spin_idx] * dt;
                    if w != 0.0 {
                        gen += along(site, seg.linear) * Complex64::new(w, 0.0);
                    }
                }
            }
            // generators carry the time integral already; exponentiate at t = 1
            let u = spincore::expm_hermitian(&gen, 1.0)?;
            *branch = u.matrix() * &*branch;
        }
    }
    let [v0, v1] = branches;
    Ok((UnitaryMatrix::new(v0)?, UnitaryMatrix::new(v1)?))
}

/// Branch-dependent probe field phase difference `phi_1 - phi_0`, where
/// `phi_br = gamma_s sum_seg m_br int b`.
pub fn probe_phase(segs: &BranchSegments, ens: &SpinEnsemble, field: FieldSample) -> f64 {
    let mut diff = 0.0;
    for seg in &segs.segments {
        let f_seg = field_integral(
            segs.field.kind,
            field.b0,
            field.phase,
            segs.duration,
            seg.t0,
            seg.t1,
        );
        diff += ens.gamma_s * (seg.manifold[1] - seg.manifold[0]) * f_seg;
    }
    diff
}

/// Coherence functional under the disjoint-cluster approximation.
///
/// Each cluster contributes `Tr[V1 rho_c V0^dag]` with `rho_c` the cluster's
/// product state; the total is the product of the factors (with the probe
/// field phase folded into the first).
pub fn coherence(
    seq: &PulseSequence,
    ens: &SpinEnsemble,
    partition: &ClusterPartition,
    field: FieldSample,
) -> Result<CoherenceResult> {
    let segs = compile_toggling(seq)?;
    coherence_compiled(&segs, ens, partition, field)
}

/// [`coherence`] on a pre-compiled sequence.
pub fn coherence_compiled(
    segs: &BranchSegments,
    ens: &SpinEnsemble,
    partition: &ClusterPartition,
    field: FieldSample,
) -> Result<CoherenceResult> {
    let probe_factor = Complex64::new(0.0, -probe_phase(segs, ens, field)).exp();
    let mut per_cluster = Vec::with_capacity(partition.clusters().len().max(1));
    for cluster in partition.clusters() {
        let (v0, v1) = branch_propagators(segs, cluster, ens, field)?;
        let rho = spincore::density_matrix(&ProductState::polarized_z(
            cluster.len(),
            ens.polarization,
        )?)?;
        per_cluster.push((v1.matrix() * rho * v0.matrix().adjoint()).trace());
    }
    if per_cluster.is_empty() {
        per_cluster.push(Complex64::new(1.0, 0.0));
    }
    per_cluster[0] *= probe_factor;
    let value = per_cluster.iter().product();
    Ok(CoherenceResult { value, per_cluster })
}

/// Full-Hilbert-space evaluation with no cluster cut, as the oracle for the
/// disjoint-cluster method. Capped at [`BRUTE_FORCE_CAP`] spins.
pub fn brute_force_signal(
    seq: &PulseSequence,
    ens: &SpinEnsemble,
    field: FieldSample,
) -> Result<CoherenceResult> {
    let segs = compile_toggling(seq)?;
    if ens.len() > BRUTE_FORCE_CAP {
        return Err(EamError::DimensionCap {
            dim: 1usize.checked_shl(ens.len() as u32).unwrap_or(usize::MAX),
            cap: 1usize << BRUTE_FORCE_CAP,
            cap_sites: BRUTE_FORCE_CAP,
        });
    }
    coherence_compiled(
        &segs,
        ens,
        &ClusterPartition::single_cluster(ens.len()),
        field,
    )
}

/// Signal derivative with respect to the field amplitude at zero field,
/// by central differences with step [`PHASE_SLOPE_STEP`].
pub fn phase_slope(
    seq: &PulseSequence,
    ens: &SpinEnsemble,
    partition: &ClusterPartition,
) -> Result<f64> {
    let d = PHASE_SLOPE_STEP;
    let readout = seq.readout_phase;
    let plus = coherence(seq, ens, partition, FieldSample::locked(d))?.signal(readout);
    let minus = coherence(seq, ens, partition, FieldSample::locked(-d))?.signal(readout);
    Ok((plus - minus) / (2.0 * d))
}

// --- Monte-Carlo decay curves ------------------------------------------------

/// Spin placement model for decay simulations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Placement {
    /// Fixed count, uniform in the unit cube.
    Cube { spins: usize },
    /// Diamond lattice with independent site occupation.
    Lattice { density: f64, extent: u32 },
}

/// Decoupling options for decay simulations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WahuhaOptions {
    pub cycles_per_interval: usize,
    pub symmetrized: bool,
}

/// Specification of a Monte-Carlo decay simulation.
///
/// `tau_grid` is expressed in units of `pi / lambda_max` of each sampled
/// configuration, matching the coupling-normalized time axis used for decay
/// plots.
#[derive(Debug, Clone)]
pub struct DecaySpec {
    pub placement: Placement,
    pub polarization: f64,
    pub sequence: SequenceKind,
    pub wahuha: Option<WahuhaOptions>,
    /// Interrogation times in units of `pi / lambda_max`.
    pub tau_grid: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub gmax: usize,
    pub gamma_s: f64,
    pub gamma_i: f64,
    pub field: FieldWaveform,
}

impl DecaySpec {
    pub fn new(placement: Placement, sequence: SequenceKind, tau_grid: Vec<f64>) -> Self {
        DecaySpec {
            placement,
            polarization: 0.5,
            sequence,
            wahuha: None,
            tau_grid,
            trials: 100,
            seed: 0,
            gmax: 6,
            gamma_s: 1.0,
            gamma_i: 1.0,
            field: FieldWaveform::zero(),
        }
    }
}

/// T2 extracted from an envelope, flagged when the curve never crosses 1/e.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct T2Estimate {
    pub value: f64,
    pub censored: bool,
}

/// Mean coherence envelope over Monte-Carlo trials.
#[derive(Debug, Clone)]
pub struct DecayCurve {
    /// Interrogation times in units of `pi / lambda_max`.
    pub taus: Vec<f64>,
    pub envelope: Vec<f64>,
    pub stderr: Vec<f64>,
    pub trials: usize,
    pub t2: T2Estimate,
}

fn trial_envelope(spec: &DecaySpec, trial: usize) -> Result<Vec<f64>> {
    // one deterministic stream per trial, independent of scheduling
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(trial as u64 + 1);
    let placement_seed = rng.gen::<u64>();
    let phase = rng.gen::<f64>() * 2.0 * std::f64::consts::PI;

    let positions = match spec.placement {
        Placement::Cube { spins } => ensemble::sample_cube(spins, placement_seed),
        Placement::Lattice { density, extent } => {
            ensemble::sample_lattice(density, extent, placement_seed)?
        }
    };
    if positions.is_empty() {
        return Err(EamError::InvalidParameter {
            name: "placement",
            reason: "sampled zero environment spins".into(),
        });
    }
    let ens = SpinEnsemble::new(positions, spec.gamma_s, spec.gamma_i, spec.polarization)?;
    let partition = ensemble::partition_clusters(&ens.kappa, spec.gmax)?;
    let lambda_max = ens.lambda_max();
    let time_unit = std::f64::consts::PI / lambda_max;

    let field_sample = FieldSample {
        b0: spec.field.b0,
        phase: if spec.field.kind == FieldKind::AcRandomPhase {
            phase
        } else {
            0.0
        },
    };

    let mut out = Vec::with_capacity(spec.tau_grid.len());
    for &x in &spec.tau_grid {
        let tau = x * time_unit;
        if tau <= 0.0 {
            out.push(1.0);
            continue;
        }
        let seq = spec.sequence.build(tau, spec.field)?;
        let seq = match spec.wahuha {
            Some(w) => embed_wahuha(&seq, w.cycles_per_interval, w.symmetrized)?,
            None => seq,
        };
        let result = coherence(&seq, &ens, &partition, field_sample)?;
        out.push(result.value.norm());
    }
    Ok(out)
}

/// Run a Monte-Carlo decay simulation.
///
/// Each trial draws a fresh spatial configuration from a per-trial RNG
/// stream, so results are deterministic for a fixed (spec, seed) regardless
/// of how trials are scheduled across threads.
pub fn decay_curve(spec: &DecaySpec) -> Result<DecayCurve> {
    if spec.trials < 1 {
        return Err(EamError::InvalidParameter {
            name: "trials",
            reason: "must be at least 1".into(),
        });
    }
    let per_trial: Vec<Result<Vec<f64>>> = (0..spec.trials)
        .into_par_iter()
        .map(|trial| trial_envelope(spec, trial))
        .collect();
    let mut rows = Vec::with_capacity(spec.trials);
    for r in per_trial {
        rows.push(r?);
    }
    let n = spec.tau_grid.len();
    let trials = spec.trials as f64;
    let mut envelope = vec![0.0; n];
    let mut second = vec![0.0; n];
    for row in &rows {
        for (i, v) in row.iter().enumerate() {
            envelope[i] += v;
            second[i] += v * v;
        }
    }
    let mut stderr = vec![0.0; n];
    for i in 0..n {
        envelope[i] /= trials;
        let var = (second[i] / trials - envelope[i] * envelope[i]).max(0.0);
        stderr[i] = if spec.trials > 1 {
            (var / (trials - 1.0)).sqrt()
        } else {
            0.0
        };
    }
    let t2 = extract_t2(&spec.tau_grid, &envelope)?;
    Ok(DecayCurve {
        taus: spec.tau_grid.clone(),
        envelope,
        stderr,
        trials: spec.trials,
        t2,
    })
}

/// First downward crossing of 1/e, linearly interpolated between grid
/// points. Returns the grid maximum flagged as censored when the envelope
/// never drops below the threshold.
pub fn extract_t2(taus: &[f64], envelope: &[f64]) -> Result<T2Estimate> {
    if taus.is_empty() || envelope.len() != taus.len() {
        return Err(EamError::EmptyCurve);
    }
    let threshold = (-1.0f64).exp();
    if envelope[0] < threshold {
        return Err(EamError::EnvelopeBelowThreshold(envelope[0]));
    }
    for i in 1..envelope.len() {
        if envelope[i] < threshold && envelope[i - 1] >= threshold {
            let frac = (envelope[i - 1] - threshold) / (envelope[i - 1] - envelope[i]);
            return Ok(T2Estimate {
                value: taus[i - 1] + frac * (taus[i] - taus[i - 1]),
                censored: false,
            });
        }
    }
    Ok(T2Estimate {
        value: *taus.last().unwrap(),
        censored: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequence::{build_eam, build_echo};
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    fn single_spin(lambda: f64, p: f64) -> SpinEnsemble {
        SpinEnsemble::single(lambda, 1.0, 1.0, p).unwrap()
    }

    fn singleton_partition(n: usize) -> ClusterPartition {
        ClusterPartition::single_cluster(n)
    }

    #[test]
    fn echo_refocuses_perfectly() {
        // kappa = 0, b = 0: envelope exactly 1 and no phase, any polarization
        for p in [0.0, 0.3, 1.0] {
            let ens = single_spin(5.0, p);
            let seq = build_echo(1.3, FieldWaveform::zero()).unwrap();
            let r = coherence(&seq, &ens, &singleton_partition(1), FieldSample::locked(0.0))
                .unwrap();
            assert_abs_diff_eq!(r.value.re, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(r.value.im, 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(r.signal(ReadoutPhase::Y), 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn amplified_sequence_refocuses_at_zero_field() {
        for p in [0.0, 0.5, 1.0] {
            let ens = single_spin(4.0 * std::f64::consts::PI * 0.7, p);
            let seq = build_eam(1.0, FieldWaveform::zero(), ReadoutPhase::Y).unwrap();
            let r = coherence(&seq, &ens, &singleton_partition(1), FieldSample::locked(0.0))
                .unwrap();
            assert_abs_diff_eq!(r.value.re, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(r.value.im, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_segment_diagonal_generator() {
        // one spin, coupling z over a single segment: V1 picks up
        // diag(e^{-i lambda t / 2}, e^{+i lambda t / 2})
        let lambda = 2.4;
        let tau = 1.0;
        let ens = single_spin(lambda, 0.0);
        let seq = build_echo(tau, FieldWaveform::zero()).unwrap();
        let segs = compile_toggling(&seq).unwrap();
        let (v0, v1) =
            branch_propagators(&segs, &[0], &ens, FieldSample::locked(0.0)).unwrap();
        // branch 1 couples during the first half, branch 0 during the second
        let expect = Complex64::new(0.0, -lambda * tau / 2.0 * 0.5).exp();
        assert_abs_diff_eq!((v1.matrix()[(0, 0)] - expect).norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!((v0.matrix()[(0, 0)] - expect).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn commuting_segments_collapse_to_one_exponential() {
        // all segments share the z axis when no environment pulses fire, so
        // the ordered product equals the exponential of the summed generator
        let lambda = 1.7;
        let tau = 2.0;
        let ens = single_spin(lambda, 0.0);
        let seq = build_echo(tau, FieldWaveform::zero()).unwrap();
        let segs = compile_toggling(&seq).unwrap();
        let (_, v1) = branch_propagators(&segs, &[0], &ens, FieldSample::locked(0.0)).unwrap();
        let ops = spincore::spin_operators(0.5).unwrap();
        let total = &ops.sz * Complex64::new(lambda * tau / 2.0, 0.0);
        let direct = spincore::expm_hermitian(&total, 1.0).unwrap();
        assert!(spincore::max_norm_diff(v1.matrix(), direct.matrix()) < 1e-12);
    }

    #[test]
    fn echo_slope_matches_closed_form() {
        // S = (1 - sin(2 gamma b tau / pi)) / 2 for the locked AC field
        let tau = 1.0;
        let ens = SpinEnsemble::from_couplings(
            vec![],
            DMatrix::zeros(0, 0),
            1.0,
            1.0,
            0.0,
        )
        .unwrap();
        let seq = build_echo(tau, FieldWaveform::ac_locked(0.0)).unwrap();
        let slope = phase_slope(&seq, &ens, &ClusterPartition::single_cluster(0)).unwrap();
        assert_abs_diff_eq!(slope, -tau / std::f64::consts::PI, epsilon = 1e-8);
    }

    /// Exact single-spin first-order response of the amplified sequence:
    /// slope ratio to the bare echo is `1 + P (gamma_i B2)/(gamma_s B1)
    /// sin^2(lambda tau / 8)`, derived independently by expanding the branch
    /// overlap to first order in the field (see also the 2x2 algebra in the
    /// acceptance suite).
    #[test]
    fn first_order_response_matches_single_spin_derivation() {
        let tau = 1.0;
        let echo_slope = -tau / std::f64::consts::PI;
        for lam_tau in [
            std::f64::consts::FRAC_PI_2,
            std::f64::consts::PI,
            2.0 * std::f64::consts::PI,
            4.0 * std::f64::consts::PI,
        ] {
            for p in [0.25, 1.0] {
                let ens = single_spin(lam_tau / tau, p);
                let seq = build_eam(tau, FieldWaveform::ac_locked(0.0), ReadoutPhase::Y).unwrap();
                let slope =
                    phase_slope(&seq, &ens, &singleton_partition(1)).unwrap();
                let bracket = 1.0 + p * 0.25 * (lam_tau / 8.0).sin().powi(2);
                let rel = (slope / echo_slope - bracket).abs() / bracket;
                assert!(
                    rel < 5e-3,
                    "lam_tau = {lam_tau}, P = {p}: ratio {} vs {}",
                    slope / echo_slope,
                    bracket
                );
            }
        }
    }

    #[test]
    fn static_field_leaves_echo_unchanged() {
        let ens = single_spin(3.0, 0.8);
        let part = singleton_partition(1);
        let seq = build_echo(1.0, FieldWaveform::static_field(0.37)).unwrap();
        let with_field = coherence(&seq, &ens, &part, FieldSample::locked(0.37)).unwrap();
        let without = coherence(&seq, &ens, &part, FieldSample::locked(0.0)).unwrap();
        assert!((with_field.value - without.value).norm() < 1e-10);
    }

    #[test]
    fn static_field_has_no_first_order_response_at_zero_polarization() {
        // the amplified sequence keeps first-order static immunity only for
        // an unpolarized bath; a polarized bath feeds the amplification
        // window, which a constant field also fills
        let ens = single_spin(3.0, 0.0);
        let part = singleton_partition(1);
        let seq = build_eam(1.0, FieldWaveform::static_field(0.0), ReadoutPhase::Y).unwrap();
        let slope = phase_slope(&seq, &ens, &part).unwrap();
        assert!(slope.abs() < 1e-8, "static slope {slope}");

        // the polarized response follows the amplification-window average
        // B2_static = -b0/4: slope = P gamma_i tau sin^2(lambda tau/8) / 8
        let ens = single_spin(4.0 * std::f64::consts::PI, 1.0);
        let slope = phase_slope(&seq, &ens, &part).unwrap();
        assert!(
            (slope - 0.125).abs() < 1e-6,
            "static amplified slope {slope} vs 0.125"
        );
    }

    #[test]
    fn cluster_product_matches_brute_force_when_uncut() {
        let positions = ensemble::sample_cube(6, 42);
        let ens = SpinEnsemble::new(positions, 1.0, 1.0, 0.5).unwrap();
        let tau = 0.4 * std::f64::consts::PI / ens.lambda_max();
        let seq = build_eam(tau, FieldWaveform::zero(), ReadoutPhase::Y).unwrap();
        let whole = coherence(
            &seq,
            &ens,
            &ClusterPartition::single_cluster(6),
            FieldSample::locked(0.0),
        )
        .unwrap();
        let brute = brute_force_signal(&seq, &ens, FieldSample::locked(0.0)).unwrap();
        assert!((whole.value - brute.value).norm() < 1e-12);

        // a genuine partition stays close at short times
        let part = ensemble::partition_clusters(&ens.kappa, 3).unwrap();
        let approx = coherence(&seq, &ens, &part, FieldSample::locked(0.0)).unwrap();
        assert!((approx.value.norm() - brute.value.norm()).abs() < 0.05);
    }

    #[test]
    fn per_cluster_product_reconstructs_value() {
        let positions = ensemble::sample_cube(7, 9);
        let ens = SpinEnsemble::new(positions, 1.0, 1.0, 0.5).unwrap();
        let part = ensemble::partition_clusters(&ens.kappa, 3).unwrap();
        let tau = 0.7 * std::f64::consts::PI / ens.lambda_max();
        let seq = build_eam(tau, FieldWaveform::ac_locked(0.2), ReadoutPhase::Y).unwrap();
        let r = coherence(&seq, &ens, &part, FieldSample::locked(0.2)).unwrap();
        let product: Complex64 = r.per_cluster.iter().product();
        assert!((product - r.value).norm() < 1e-12);
        for factor in &r.per_cluster {
            assert!(factor.norm() <= 1.0 + 1e-10);
        }
        assert!(r.value.norm() <= 1.0 + 1e-10);
    }

    #[test]
    fn brute_force_cap_enforced() {
        let positions = ensemble::sample_cube(13, 1);
        let ens = SpinEnsemble::new(positions, 1.0, 1.0, 0.0).unwrap();
        let seq = build_echo(1.0, FieldWaveform::zero()).unwrap();
        assert!(matches!(
            brute_force_signal(&seq, &ens, FieldSample::locked(0.0)),
            Err(EamError::DimensionCap { .. })
        ));
    }

    #[test]
    fn decay_curve_is_deterministic() {
        let spec = DecaySpec {
            trials: 3,
            tau_grid: vec![0.1, 0.5, 1.0],
            ..DecaySpec::new(
                Placement::Cube { spins: 6 },
                SequenceKind::Echo,
                vec![0.1, 0.5, 1.0],
            )
        };
        let a = decay_curve(&spec).unwrap();
        let b = decay_curve(&spec).unwrap();
        assert_eq!(a.envelope, b.envelope);
        assert_eq!(a.stderr, b.stderr);
        // envelope starts at 1 for tau -> 0 grids
        let spec0 = DecaySpec {
            tau_grid: vec![0.0, 0.4],
            ..spec
        };
        let c = decay_curve(&spec0).unwrap();
        assert_abs_diff_eq!(c.envelope[0], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn decay_curve_independent_of_worker_count() {
        let spec = DecaySpec {
            trials: 4,
            ..DecaySpec::new(
                Placement::Cube { spins: 5 },
                SequenceKind::Eam,
                vec![0.2, 0.8],
            )
        };
        let pool1 = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let pool4 = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap();
        let a = pool1.install(|| decay_curve(&spec)).unwrap();
        let b = pool4.install(|| decay_curve(&spec)).unwrap();
        assert_eq!(a.envelope, b.envelope);
    }

    #[test]
    fn extract_t2_on_synthetic_curves() {
        // exp(-(tau/2)^3) sampled densely: T2 = 2 up to grid resolution
        let taus: Vec<f64> = (0..400).map(|i| i as f64 * 0.01).collect();
        let env: Vec<f64> = taus.iter().map(|t| (-(t / 2.0).powi(3)).exp()).collect();
        let t2 = extract_t2(&taus, &env).unwrap();
        assert!(!t2.censored);
        assert!((t2.value - 2.0).abs() < 0.01);

        // monotone but never below 1/e: censored at the grid maximum
        let env: Vec<f64> = taus.iter().map(|t| 1.0 - 0.3 * t / 4.0).collect();
        let t2 = extract_t2(&taus, &env).unwrap();
        assert!(t2.censored);
        assert_abs_diff_eq!(t2.value, *taus.last().unwrap());

        // noisy curve with a single crossing
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let env: Vec<f64> = taus
            .iter()
            .map(|t| (-(t / 1.5).powi(3)).exp() + 0.002 * (rng.gen::<f64>() - 0.5))
            .collect();
        let t2 = extract_t2(&taus, &env).unwrap();
        assert!(!t2.censored);
        assert!((t2.value - 1.5).abs() < 0.05);

        assert!(extract_t2(&[], &[]).is_err());
        assert!(extract_t2(&[0.0], &[0.1]).is_err());
    }
}
