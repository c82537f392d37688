//! Pulse sequences on the probe and environment channels, and their
//! compilation into per-branch piecewise-constant toggling-frame segments.
//!
//! A pulse with axis `n` (unit vector in the xy plane) and angle `theta`
//! applies `exp(-i theta n . I)` to every spin on its channel. In the
//! toggling frame the environment Hamiltonian terms built from `I_z` acquire
//! rotated axes: after an accumulated pulse product `P`, a lab-frame `I_a`
//! becomes `P^dag I_a P = sum_b R_ab I_b` with `R` the matching SO(3)
//! rotation. The compiler tracks `R` and emits, per segment, the rotated
//! linear axis (shared by the probe-bath couplings and the environment
//! Zeeman term) and the rotated secular-dipolar axis.
//!
//! Probe pulses are ideal and instantaneous: the probe pi/2 pulses open and
//! close the interferometer and the single pi pulse swaps the two branch
//! manifolds for all subsequent segments.
//!
//! The amplified sequence uses environment pi/2 pulses at tau/4, tau/2 and
//! 3tau/4 chosen so the toggling linear axis runs (z, x, z, x) over the four
//! quarters. Both branches then see the coupling propagator
//! `exp(-i tau/4 sum lambda_k Ix) exp(-i tau/4 sum lambda_k Iz)`, zero-field
//! refocusing is exact, and the first-order response picks up the averaged
//! field over the third quarter only.

use crate::spincore::Spin;
use crate::{EamError, Result};

const TAU_EPS: f64 = 1e-12;

/// Control channel addressed by a pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Probe,
    Environment,
}

/// One ideal rotation pulse.
#[derive(Debug, Clone, Copy)]
pub struct PulseEvent {
    /// Offset within the sequence.
    pub time: f64,
    pub channel: Channel,
    /// Unit rotation axis in the xy plane.
    pub axis: [f64; 2],
    /// Rotation angle in (-2 pi, 2 pi].
    pub angle: f64,
}

impl PulseEvent {
    pub fn new(time: f64, channel: Channel, axis: [f64; 2], angle: f64) -> Result<Self> {
        let norm = (axis[0] * axis[0] + axis[1] * axis[1]).sqrt();
        if norm < 1e-300 {
            return Err(EamError::ZeroAxis);
        }
        if !(angle > -2.0 * std::f64::consts::PI - 1e-12 && angle <= 2.0 * std::f64::consts::PI) {
            return Err(EamError::InvalidSequence(format!(
                "pulse angle {angle} outside (-2pi, 2pi]"
            )));
        }
        Ok(PulseEvent {
            time,
            channel,
            axis: [axis[0] / norm, axis[1] / norm],
            angle,
        })
    }
}

/// Field waveform shapes. The AC kinds have period locked to the sequence
/// duration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    /// `b(t) = b0 sin(2 pi t / tau)`, in phase with the sequence.
    AcLocked,
    /// Constant `b(t) = b0`.
    Static,
    /// `b(t) = b0 sin(2 pi t / tau + phase)` with a phase drawn per run.
    AcRandomPhase,
}

/// Field waveform with amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldWaveform {
    pub kind: FieldKind,
    pub b0: f64,
}

impl FieldWaveform {
    pub fn ac_locked(b0: f64) -> Self {
        FieldWaveform {
            kind: FieldKind::AcLocked,
            b0,
        }
    }

    pub fn static_field(b0: f64) -> Self {
        FieldWaveform {
            kind: FieldKind::Static,
            b0,
        }
    }

    pub fn ac_random_phase(b0: f64) -> Self {
        FieldWaveform {
            kind: FieldKind::AcRandomPhase,
            b0,
        }
    }

    pub fn zero() -> Self {
        Self::ac_locked(0.0)
    }
}

/// Exact integral of the waveform over `[t0, t1]` for amplitude `b0` and
/// phase offset `phase` (only meaningful for the AC kinds).
pub fn field_integral(
    kind: FieldKind,
    b0: f64,
    phase: f64,
    tau: f64,
    t0: f64,
    t1: f64,
) -> f64 {
    match kind {
        FieldKind::Static => b0 * (t1 - t0),
        FieldKind::AcLocked | FieldKind::AcRandomPhase => {
            let w = 2.0 * std::f64::consts::PI / tau;
            b0 / w * ((w * t0 + phase).cos() - (w * t1 + phase).cos())
        }
    }
}

/// Axis of the final probe pi/2 pulse, selecting which quadrature of the
/// branch overlap is read out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReadoutPhase {
    /// Signal `S = (1 + Im L) / 2`.
    Y,
    /// Signal `S = (1 + Re L) / 2`.
    X,
}

/// A complete pulse sequence on both channels.
#[derive(Debug, Clone)]
pub struct PulseSequence {
    pub duration: f64,
    /// Time-ordered pulse list.
    pub events: Vec<PulseEvent>,
    pub readout_phase: ReadoutPhase,
    pub field: FieldWaveform,
    pub probe_spin: Spin,
}

fn probe_pulse(time: f64, axis: [f64; 2], angle: f64) -> PulseEvent {
    PulseEvent::new(time, Channel::Probe, axis, angle).expect("valid probe pulse")
}

fn env_pulse(time: f64, axis: [f64; 2], angle: f64) -> PulseEvent {
    PulseEvent::new(time, Channel::Environment, axis, angle).expect("valid environment pulse")
}

const PLUS_X: [f64; 2] = [1.0, 0.0];
const MINUS_X: [f64; 2] = [-1.0, 0.0];
const PLUS_Y: [f64; 2] = [0.0, 1.0];
const MINUS_Y: [f64; 2] = [0.0, -1.0];

fn probe_frame(tau: f64, readout: ReadoutPhase) -> Vec<PulseEvent> {
    use std::f64::consts::{FRAC_PI_2, PI};
    let readout_axis = match readout {
        ReadoutPhase::Y => PLUS_Y,
        ReadoutPhase::X => PLUS_X,
    };
    vec![
        probe_pulse(0.0, PLUS_Y, FRAC_PI_2),
        probe_pulse(tau / 2.0, PLUS_X, PI),
        probe_pulse(tau, readout_axis, FRAC_PI_2),
    ]
}

fn validate_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(EamError::InvalidParameter {
            name: "tau",
            reason: format!("{tau} must be positive and finite"),
        });
    }
    Ok(())
}

/// Spin-echo sequence: probe pi/2 at 0, pi at tau/2, pi/2 at tau; no
/// environment pulses.
pub fn build_echo(tau: f64, field: FieldWaveform) -> Result<PulseSequence> {
    validate_tau(tau)?;
    Ok(PulseSequence {
        duration: tau,
        events: probe_frame(tau, ReadoutPhase::Y),
        readout_phase: ReadoutPhase::Y,
        field,
        probe_spin: Spin::One,
    })
}

/// Environment pulses producing the (z, x, z, x) toggling pattern.
fn amplifier_env_pulses(tau: f64) -> Vec<PulseEvent> {
    use std::f64::consts::FRAC_PI_2;
    vec![
        env_pulse(tau / 4.0, MINUS_Y, FRAC_PI_2),
        env_pulse(tau / 2.0, PLUS_Y, FRAC_PI_2),
        env_pulse(3.0 * tau / 4.0, MINUS_Y, FRAC_PI_2),
    ]
}

/// Environment-amplified sequence for the spin-1 probe.
pub fn build_eam(tau: f64, field: FieldWaveform, readout_phase: ReadoutPhase) -> Result<PulseSequence> {
    validate_tau(tau)?;
    let mut events = probe_frame(tau, readout_phase);
    events.extend(amplifier_env_pulses(tau));
    events.sort_by(|a, b| a.time.total_cmp(&b.time));
    Ok(PulseSequence {
        duration: tau,
        events,
        readout_phase,
        field,
        probe_spin: Spin::One,
    })
}

/// Spin-1/2-probe variant: a global environment pi/2 at t = 0 rotates the
/// bath polarization from +z to +y before the amplified sequence runs.
pub fn build_eam_spinhalf(tau: f64, field: FieldWaveform) -> Result<PulseSequence> {
    use std::f64::consts::FRAC_PI_2;
    validate_tau(tau)?;
    let mut events = probe_frame(tau, ReadoutPhase::Y);
    events.push(env_pulse(0.0, MINUS_X, FRAC_PI_2));
    events.extend(amplifier_env_pulses(tau));
    events.sort_by(|a, b| a.time.total_cmp(&b.time));
    Ok(PulseSequence {
        duration: tau,
        events,
        readout_phase: ReadoutPhase::Y,
        field,
        probe_spin: Spin::Half,
    })
}

/// Convenience selector for the built-in sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SequenceKind {
    Echo,
    Eam,
    /// Amplified sequence read out along x (zero-polarization scheme).
    EamX,
    EamSpinHalf,
}

impl SequenceKind {
    pub fn build(self, tau: f64, field: FieldWaveform) -> Result<PulseSequence> {
        match self {
            SequenceKind::Echo => build_echo(tau, field),
            SequenceKind::Eam => build_eam(tau, field, ReadoutPhase::Y),
            SequenceKind::EamX => build_eam(tau, field, ReadoutPhase::X),
            SequenceKind::EamSpinHalf => build_eam_spinhalf(tau, field),
        }
    }
}

// --- WAHUHA embedding ------------------------------------------------------

/// WHH-4 pulse pattern within one cycle of length `tc`, as (offset fraction,
/// axis) pairs. Windows are tc/6, tc/6, tc/3, tc/6, tc/6.
const WHH_PATTERN: [(f64, [f64; 2]); 4] = [
    (1.0 / 6.0, PLUS_X),
    (2.0 / 6.0, MINUS_Y),
    (4.0 / 6.0, PLUS_Y),
    (5.0 / 6.0, MINUS_X),
];

fn whh_cycle_pulses(start: f64, tc: f64, reversed: bool) -> Vec<PulseEvent> {
    use std::f64::consts::FRAC_PI_2;
    WHH_PATTERN
        .iter()
        .map(|&(frac, axis)| {
            let axis = if reversed { [-axis[0], -axis[1]] } else { axis };
            env_pulse(start + frac * tc, axis, FRAC_PI_2)
        })
        .collect()
}

/// Distinct sorted event times of a sequence, including 0 and tau.
fn interval_boundaries(seq: &PulseSequence) -> Vec<f64> {
    let mut ts: Vec<f64> = seq.events.iter().map(|e| e.time).collect();
    ts.push(0.0);
    ts.push(seq.duration);
    ts.sort_by(f64::total_cmp);
    ts.dedup_by(|a, b| (*a - *b).abs() < TAU_EPS);
    ts
}

/// Insert WHH-4 decoupling cycles into every free-evolution interval of
/// `seq`. With `symmetrized` each cycle is a base half followed by a
/// phase-reversed half, cancelling the first-order average-Hamiltonian
/// correction.
pub fn embed_wahuha(
    seq: &PulseSequence,
    cycles_per_interval: usize,
    symmetrized: bool,
) -> Result<PulseSequence> {
    if cycles_per_interval < 1 {
        return Err(EamError::InvalidParameter {
            name: "cycles_per_interval",
            reason: "must be at least 1".into(),
        });
    }
    let bounds = interval_boundaries(seq);
    let mut events = seq.events.clone();
    for w in bounds.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        if t1 - t0 <= TAU_EPS || t1 > seq.duration + TAU_EPS {
            return Err(EamError::CycleFit { t0, t1 });
        }
        let tc = (t1 - t0) / cycles_per_interval as f64;
        for c in 0..cycles_per_interval {
            let start = t0 + c as f64 * tc;
            if symmetrized {
                events.extend(whh_cycle_pulses(start, tc / 2.0, false));
                events.extend(whh_cycle_pulses(start + tc / 2.0, tc / 2.0, true));
            } else {
                events.extend(whh_cycle_pulses(start, tc, false));
            }
        }
    }
    events.sort_by(|a, b| a.time.total_cmp(&b.time));
    Ok(PulseSequence {
        duration: seq.duration,
        events,
        readout_phase: seq.readout_phase,
        field: seq.field,
        probe_spin: seq.probe_spin,
    })
}

// --- Toggling-frame compilation --------------------------------------------

/// Rodrigues rotation matrix for axis `n` (unit) and angle `theta`.
fn rot3(n: [f64; 3], theta: f64) -> [[f64; 3]; 3] {
    let (s, c) = theta.sin_cos();
    let omc = 1.0 - c;
    let (x, y, z) = (n[0], n[1], n[2]);
    [
        [c + x * x * omc, x * y * omc - z * s, x * z * omc + y * s],
        [y * x * omc + z * s, c + y * y * omc, y * z * omc - x * s],
        [z * x * omc - y * s, z * y * omc + x * s, c + z * z * omc],
    ]
}

fn mat_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

const EYE3: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// One piecewise-constant toggling-frame window shared by both branches.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledSegment {
    pub t0: f64,
    pub t1: f64,
    /// Probe `S_z` eigenvalue followed by each branch during this segment;
    /// index 0 is the branch that starts in the lower manifold.
    pub manifold: [f64; 2],
    /// Toggled axis of every linear environment term (couplings and field),
    /// scaled by the averaging factor; magnitude <= 1.
    pub linear: [f64; 3],
    /// Toggled axis of the secular dipolar term, `None` once averaged away.
    pub dipolar: Option<[f64; 3]>,
}

impl CompiledSegment {
    pub fn duration(&self) -> f64 {
        self.t1 - self.t0
    }

    /// Magnitude of the linear scale factor (1 for plain compilation,
    /// 1/sqrt(3) under decoupling averaging).
    pub fn lin_scale(&self) -> f64 {
        let l = self.linear;
        (l[0] * l[0] + l[1] * l[1] + l[2] * l[2]).sqrt()
    }

    /// Unit linear axis.
    pub fn lin_axis(&self) -> [f64; 3] {
        let s = self.lin_scale();
        let l = self.linear;
        [l[0] / s, l[1] / s, l[2] / s]
    }
}

/// Executable form of a sequence: ordered toggling-frame segments plus the
/// branch manifold bookkeeping.
#[derive(Debug, Clone)]
pub struct BranchSegments {
    pub duration: f64,
    pub probe_spin: Spin,
    pub readout_phase: ReadoutPhase,
    pub field: FieldWaveform,
    pub segments: Vec<CompiledSegment>,
}

impl BranchSegments {
    /// Sum of segment durations; equals the sequence duration exactly.
    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration()).sum()
    }
}

fn manifold_values(spin: Spin) -> [f64; 2] {
    match spin {
        Spin::One => [0.0, 1.0],
        Spin::Half => [-0.5, 0.5],
    }
}

#[derive(Debug, Clone, Copy)]
enum CompileMode {
    Plain,
    /// Replace the in-segment decoupling modulation by its zeroth-order
    /// average: linear axes contract through the cycle-averaged frame row
    /// and the secular dipolar term drops.
    Averaged { symmetrized: bool },
}

/// Compile a sequence into per-branch toggling-frame segments.
///
/// Probe pi pulses swap the branch manifold assignment for subsequent
/// segments; environment pulses rotate the toggling axes. Adjacent segments
/// with identical parameters are merged, so cancelling pulse pairs compile
/// away.
pub fn compile_toggling(seq: &PulseSequence) -> Result<BranchSegments> {
    compile_inner(seq, CompileMode::Plain)
}

fn compile_inner(seq: &PulseSequence, mode: CompileMode) -> Result<BranchSegments> {
    validate_probe_frame(seq)?;
    let mut events = seq.events.clone();
    events.sort_by(|a, b| a.time.total_cmp(&b.time));

    let mut manifold = manifold_values(seq.probe_spin);
    let mut frame = EYE3;
    let mut segments: Vec<CompiledSegment> = Vec::new();
    let mut cursor = 0.0f64;

    let mut push_segment = |t0: f64, t1: f64, manifold: [f64; 2], frame: &[[f64; 3]; 3]| {
        if t1 - t0 <= TAU_EPS {
            return;
        }
        let (linear, dipolar) = match mode {
            CompileMode::Plain => (frame[2], Some(frame[2])),
            CompileMode::Averaged { symmetrized } => {
                let row = wahuha_average_row(symmetrized);
                let mut lin = [0.0; 3];
                for (a, &w) in row.iter().enumerate() {
                    for b in 0..3 {
                        lin[b] += w * frame[a][b];
                    }
                }
                (lin, None)
            }
        };
        let seg = CompiledSegment {
            t0,
            t1,
            manifold,
            linear,
            dipolar,
        };
        if let Some(last) = segments.last_mut() {
            if (last.t1 - seg.t0).abs() <= TAU_EPS
                && last.manifold == seg.manifold
                && last.linear == seg.linear
                && last.dipolar == seg.dipolar
            {
                last.t1 = seg.t1;
                return;
            }
        }
        segments.push(seg);
    };

    for ev in &events {
        if ev.time < -TAU_EPS || ev.time > seq.duration + TAU_EPS {
            return Err(EamError::InvalidSequence(format!(
                "event at t = {} outside [0, {}]",
                ev.time, seq.duration
            )));
        }
        push_segment(cursor, ev.time, manifold, &frame);
        cursor = cursor.max(ev.time);
        match ev.channel {
            Channel::Probe => {
                if is_angle(ev.angle, std::f64::consts::PI) {
                    manifold.swap(0, 1);
                } else if is_angle(ev.angle, std::f64::consts::FRAC_PI_2) {
                    // interferometer open/close; no effect on the branches
                } else {
                    return Err(EamError::InvalidSequence(format!(
                        "probe pulse with angle {} is not pi or pi/2",
                        ev.angle
                    )));
                }
            }
            Channel::Environment => {
                let axis3 = [ev.axis[0], ev.axis[1], 0.0];
                frame = mat_mul(&rot3(axis3, ev.angle), &frame);
            }
        }
    }
    push_segment(cursor, seq.duration, manifold, &frame);

    let compiled = BranchSegments {
        duration: seq.duration,
        probe_spin: seq.probe_spin,
        readout_phase: seq.readout_phase,
        field: seq.field,
        segments,
    };
    debug_assert!((compiled.total_duration() - seq.duration).abs() <= 1e-12 * seq.duration.max(1.0));
    Ok(compiled)
}

fn is_angle(angle: f64, target: f64) -> bool {
    (angle.abs() - target).abs() < 1e-9
}

fn validate_probe_frame(seq: &PulseSequence) -> Result<()> {
    let mut probe: Vec<&PulseEvent> = seq
        .events
        .iter()
        .filter(|e| e.channel == Channel::Probe)
        .collect();
    probe.sort_by(|a, b| a.time.total_cmp(&b.time));
    let mut sorted = seq.events.clone();
    sorted.sort_by(|a, b| a.time.total_cmp(&b.time));
    for (a, b) in seq.events.iter().zip(sorted.iter()) {
        if (a.time - b.time).abs() > TAU_EPS {
            return Err(EamError::InvalidSequence(
                "events are not time-ordered".into(),
            ));
        }
    }
    if probe.len() < 3 {
        return Err(EamError::InvalidSequence(
            "echo-class sequence needs probe pi/2, pi, pi/2 pulses".into(),
        ));
    }
    let first = probe.first().unwrap();
    let last = probe.last().unwrap();
    if first.time.abs() > TAU_EPS || !is_angle(first.angle, std::f64::consts::FRAC_PI_2) {
        return Err(EamError::InvalidSequence(
            "first probe event must be a pi/2 pulse at t = 0".into(),
        ));
    }
    if (last.time - seq.duration).abs() > TAU_EPS
        || !is_angle(last.angle, std::f64::consts::FRAC_PI_2)
    {
        return Err(EamError::InvalidSequence(
            "last probe event must be a pi/2 pulse at t = tau".into(),
        ));
    }
    let pis = probe
        .iter()
        .filter(|e| is_angle(e.angle, std::f64::consts::PI))
        .count();
    if pis != 1 {
        return Err(EamError::InvalidSequence(format!(
            "echo-class sequence needs exactly one probe pi pulse, found {pis}"
        )));
    }
    Ok(())
}

/// Compile with the decoupling cycle replaced by its zeroth-order average:
/// linear terms scale by 1/sqrt(3) (plain cycle) or 1/3 (symmetrized) along
/// the averaged direction, and the secular dipolar term vanishes.
///
/// The input is the bare sequence, without explicit decoupling pulses; the
/// averaging is applied analytically to every segment.
pub fn compile_wahuha_averaged(seq: &PulseSequence, symmetrized: bool) -> Result<BranchSegments> {
    compile_inner(seq, CompileMode::Averaged { symmetrized })
}

/// Duration-weighted average of the lab-z frame row over one WHH-4 cycle.
/// The plain cycle visits (z, y, x, y, z) with weights (1/6, 1/6, 1/3, 1/6,
/// 1/6); the symmetrized cycle adds the phase-reversed half, cancelling the
/// transverse components.
fn wahuha_average_row(symmetrized: bool) -> [f64; 3] {
    if symmetrized {
        [0.0, 0.0, 1.0 / 3.0]
    } else {
        [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]
    }
}

// --- Averaged fields --------------------------------------------------------

/// Echo-weighted and amplification-window field averages.
///
/// `B1 = (1/tau)(int_0^{tau/2} b - int_{tau/2}^tau b)` is the direct probe
/// contribution; `B2 = -(1/tau) int_{tau/2}^{3tau/4} b` weights the
/// environment-mediated term. Exact for the built-in waveforms.
pub fn avg_fields(field: FieldWaveform, tau: f64) -> (f64, f64) {
    let integral = |t0: f64, t1: f64| field_integral(field.kind, field.b0, 0.0, tau, t0, t1);
    let b1 = (integral(0.0, tau / 2.0) - integral(tau / 2.0, tau)) / tau;
    let b2 = -integral(tau / 2.0, 0.75 * tau) / tau;
    (b1, b2)
}

// --- Timeline export --------------------------------------------------------

/// Render a sequence as a human-readable timeline, one event per line:
/// `time channel axis_x axis_y angle`.
pub fn export_timeline(seq: &PulseSequence) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "# pulse timeline: duration = {}, readout = {}, field = {} b0 = {}\n",
        seq.duration,
        match seq.readout_phase {
            ReadoutPhase::Y => "y",
            ReadoutPhase::X => "x",
        },
        match seq.field.kind {
            FieldKind::AcLocked => "ac_locked",
            FieldKind::Static => "static",
            FieldKind::AcRandomPhase => "ac_random_phase",
        },
        seq.field.b0,
    ));
    out.push_str("# columns: time channel axis_x axis_y angle\n");
    for e in &seq.events {
        out.push_str(&format!(
            "{} {} {} {} {}\n",
            e.time,
            match e.channel {
                Channel::Probe => "probe",
                Channel::Environment => "environment",
            },
            e.axis[0],
            e.axis[1],
            e.angle,
        ));
    }
    out
}
