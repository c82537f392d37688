//! Closed-form phase and sensitivity expressions, interrogation-time
//! optimization, and the sensitivity-ratio curve generators.
//!
//! Sensitivities are quoted per unit square-root time (field / sqrt(time));
//! smaller is better. All evaluators are homogeneous of degree -1 in the
//! product `C * gamma`.

use crate::{EamError, Result};

/// Parameters of the phase formulas.
#[derive(Debug, Clone)]
pub struct PhaseInputs {
    /// Probe-bath couplings (angular frequency).
    pub lambda: Vec<f64>,
    /// Interrogation time.
    pub tau: f64,
    /// Bath polarization in [-1, 1].
    pub polarization: f64,
    pub gamma_s: f64,
    pub gamma_i: f64,
    /// Echo-weighted field average (direct probe contribution).
    pub b1_bar: f64,
    /// Amplification-window field average.
    pub b2_bar: f64,
}

impl PhaseInputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(EamError::InvalidParameter {
                name: "tau",
                reason: format!("{} must be positive", self.tau),
            });
        }
        if self.polarization.abs() > 1.0 {
            return Err(EamError::PolarizationRange(self.polarization));
        }
        Ok(())
    }
}

/// Total phase of the amplified scheme,
/// `Phi = gamma_s B1 tau + 2 P gamma_i B2 tau sum_k sin^2(lambda_k tau / 8)`.
///
/// This is the additive form of the amplification formula; dividing by
/// `gamma_s B1 tau` gives the bracket `1 + 2 P (gamma_i B2)/(gamma_s B1)
/// sum_k sin^2(...)` wherever `B1` is nonzero.
pub fn phase_eam(inputs: &PhaseInputs) -> Result<f64> {
    phase_general(inputs, 1.0, 0.0)
}

/// Phase for a general probe manifold pair: the sine argument picks up the
/// factor `|m_a| - |m_b|`.
pub fn phase_general(inputs: &PhaseInputs, m_a: f64, m_b: f64) -> Result<f64> {
    inputs.validate()?;
    let dm = m_a.abs() - m_b.abs();
    if dm.abs() < 1e-12 {
        return Err(EamError::DegenerateManifolds(m_a.abs()));
    }
    let sum: f64 = inputs
        .lambda
        .iter()
        .map(|l| (dm * l * inputs.tau / 8.0).sin().powi(2))
        .sum();
    Ok(inputs.gamma_s * inputs.b1_bar * inputs.tau
        + 2.0 * inputs.polarization * inputs.gamma_i * inputs.b2_bar * inputs.tau * sum)
}

/// Additional phase of the spin-1/2-probe scheme,
/// `Phi = k b tau P sum_k sin^3(lambda_k tau / 4)`.
///
/// The overall proportionality constant is not pinned down by the scheme;
/// `proportionality` defaults to 1 in the convenience wrapper.
pub fn phase_spin_half(
    lambda: &[f64],
    tau: f64,
    polarization: f64,
    b: f64,
    proportionality: f64,
) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(EamError::InvalidParameter {
            name: "tau",
            reason: format!("{tau} must be positive"),
        });
    }
    let sum: f64 = lambda.iter().map(|l| (l * tau / 4.0).sin().powi(3)).sum();
    Ok(proportionality * b * tau * polarization * sum)
}

/// Decoherence-free sensitivity of the amplified scheme,
/// `eta = pi / (C gamma (2 + P n_sc / 2) sqrt(tau))`.
///
/// Undefined at zero polarization; the zero-polarization scheme has its own
/// sensitivity in [`sensitivity_nopol`].
pub fn sensitivity_ideal(gamma: f64, c: f64, polarization: f64, n_sc: f64, tau: f64) -> Result<f64> {
    if polarization == 0.0 {
        return Err(EamError::ZeroPolarization);
    }
    Ok(std::f64::consts::PI / (c * gamma * (2.0 + 0.5 * polarization * n_sc) * tau.sqrt()))
}

/// Sensitivity with cubic-exponential decay from the bath (`t2`) and the
/// residual background (`t2b`).
pub fn sensitivity_real(
    gamma: f64,
    c: f64,
    polarization: f64,
    n_sc: f64,
    tau: f64,
    t2: f64,
    t2b: f64,
) -> f64 {
    let decay = ((tau / t2).powi(3) + (tau / t2b).powi(3)).exp();
    std::f64::consts::PI * decay
        / (c * gamma * tau.sqrt() * (2.0 + 0.5 * polarization * n_sc))
}

/// Two-parameter reduction of the amplified-scheme sensitivity.
#[derive(Debug, Clone, Copy)]
pub struct SensitivityModel {
    /// Environment quality factor, >= 0.
    pub q: f64,
    /// Coherence-time ratio `T2B / T2`, > 0.
    pub r: f64,
    /// Background coherence time, > 0.
    pub t2b: f64,
    /// Readout efficiency factor in (0, 1].
    pub c: f64,
    pub gamma: f64,
    pub polarization: f64,
}

impl SensitivityModel {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, name: &'static str, v: f64| {
            if ok {
                Ok(())
            } else {
                Err(EamError::InvalidParameter {
                    name,
                    reason: format!("{v} out of range"),
                })
            }
        };
        check(self.q >= 0.0, "q", self.q)?;
        check(self.r > 0.0, "r", self.r)?;
        check(self.t2b > 0.0, "t2b", self.t2b)?;
        check(self.c > 0.0 && self.c <= 1.0, "c", self.c)?;
        Ok(())
    }
}

/// Amplified-scheme sensitivity in the (Q, r) parametrization,
/// `eta = pi e^{(1 + r^3)(tau/T2B)^3} / (C gamma sqrt(tau) (2 + tau r Q / (2 T2B)))`.
pub fn sensitivity_params(model: &SensitivityModel, tau: f64) -> f64 {
    let decay = ((1.0 + model.r.powi(3)) * (tau / model.t2b).powi(3)).exp();
    let bracket = 2.0 + tau / (2.0 * model.t2b) * model.r * model.q;
    std::f64::consts::PI * decay / (model.c * model.gamma * tau.sqrt() * bracket)
}

/// Spin-echo sensitivity against the background bath alone,
/// `eta = pi e^{(tau/T2B)^3} / (2 C gamma sqrt(tau))`.
pub fn sensitivity_echo1(gamma: f64, c: f64, tau: f64, t2b: f64) -> f64 {
    std::f64::consts::PI * ((tau / t2b).powi(3)).exp() / (2.0 * c * gamma * tau.sqrt())
}

/// Spin-echo sensitivity with the ancillary environment present,
/// `eta = pi e^{(1 + r^3)(tau/T2B)^3} / (2 C gamma sqrt(tau))`.
pub fn sensitivity_echo_env(gamma: f64, c: f64, tau: f64, t2b: f64, r: f64) -> f64 {
    std::f64::consts::PI * ((1.0 + r.powi(3)) * (tau / t2b).powi(3)).exp()
        / (2.0 * c * gamma * tau.sqrt())
}

/// Result of a one-dimensional sensitivity minimization.
#[derive(Debug, Clone, Copy)]
pub struct OptimizedTau {
    pub tau_star: f64,
    pub eta_star: f64,
    /// Set when no interior minimum was detected; the better bracket end is
    /// returned instead.
    pub boundary: bool,
}

/// Golden-section minimization of a unimodal function of tau over
/// `(bracket.0, bracket.1)`, to relative tolerance 1e-6 in tau.
pub fn optimize_tau(eta: impl Fn(f64) -> f64, bracket: (f64, f64)) -> Result<OptimizedTau> {
    let (mut lo, mut hi) = bracket;
    if !(lo > 0.0 && hi > lo) {
        return Err(EamError::InvalidParameter {
            name: "bracket",
            reason: format!("need 0 < lo < hi, got ({lo}, {hi})"),
        });
    }
    let f_lo = eta(lo);
    let f_hi = eta(hi);
    // non-finite values (cubic-exponential overflow at large tau) lose
    // against anything finite
    let better = |a: f64, b: f64| a.is_finite() && (!b.is_finite() || a < b);
    let inv_phi = 0.5 * (5.0f64.sqrt() - 1.0);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = eta(x1);
    let mut f2 = eta(x2);
    let tol = 1e-6;
    while (hi - lo) > tol * (lo.abs() + hi.abs()) * 0.5 {
        if !f1.is_finite() && !f2.is_finite() {
            // both probes overflowed; the finite region is to the left
            hi = x2;
            x1 = hi - inv_phi * (hi - lo);
            x2 = lo + inv_phi * (hi - lo);
            f1 = eta(x1);
            f2 = eta(x2);
        } else if better(f1, f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = eta(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = eta(x2);
        }
    }
    let tau_star = 0.5 * (lo + hi);
    let eta_star = eta(tau_star);
    // no interior minimum: an end point is at least as good as the interior
    let atol = 1e-12 * (1.0 + eta_star.abs());
    if f_lo <= eta_star + atol || f_hi <= eta_star + atol {
        let (tau_b, eta_b) = if f_lo <= f_hi {
            (bracket.0, f_lo)
        } else {
            (bracket.1, f_hi)
        };
        if eta_b <= eta_star + atol {
            return Ok(OptimizedTau {
                tau_star: tau_b,
                eta_star: eta_b,
                boundary: true,
            });
        }
    }
    Ok(OptimizedTau {
        tau_star,
        eta_star,
        boundary: false,
    })
}

/// Default optimization bracket `(1e-4, 5) * t2b`.
pub fn default_bracket(t2b: f64) -> (f64, f64) {
    (1e-4 * t2b, 5.0 * t2b)
}

/// One row of the sensitivity-ratio table.
#[derive(Debug, Clone, Copy)]
pub struct RatioRow {
    pub r: f64,
    pub q: f64,
    /// Optimized amplified sensitivity over the optimized bare-background
    /// echo sensitivity (environment-free normalization).
    pub ratio_a: f64,
    /// Optimized amplified sensitivity over the optimized echo sensitivity
    /// with the environment present (same-system normalization).
    pub ratio_b: f64,
    /// Optimizing interrogation time of the amplified scheme.
    pub tau_star: f64,
}

/// Tau-optimized sensitivity ratios over a (Q, r) grid.
pub fn ratio_curves(
    q_list: &[f64],
    r_grid: &[f64],
    t2b: f64,
    c: f64,
    gamma: f64,
) -> Result<Vec<RatioRow>> {
    if q_list.is_empty() || r_grid.is_empty() {
        return Err(EamError::InvalidParameter {
            name: "q_list/r_grid",
            reason: "grids must be nonempty".into(),
        });
    }
    let bracket = default_bracket(t2b);
    let echo1 = optimize_tau(|tau| sensitivity_echo1(gamma, c, tau, t2b), bracket)?;
    let mut rows = Vec::with_capacity(q_list.len() * r_grid.len());
    for &q in q_list {
        for &r in r_grid {
            let model = SensitivityModel {
                q,
                r,
                t2b,
                c,
                gamma,
                polarization: 1.0,
            };
            model.validate()?;
            let eam = optimize_tau(|tau| sensitivity_params(&model, tau), bracket)?;
            let echo_env =
                optimize_tau(|tau| sensitivity_echo_env(gamma, c, tau, t2b, r), bracket)?;
            rows.push(RatioRow {
                r,
                q,
                ratio_a: eam.eta_star / echo1.eta_star,
                ratio_b: eam.eta_star / echo_env.eta_star,
                tau_star: eam.tau_star,
            });
        }
    }
    Ok(rows)
}

/// Large-r limit of the same-system sensitivity ratio,
/// `(e^2/3)^{1/6} / (1 + 2^{-7/3} Q)`.
pub fn ratio_asymptote(q: f64) -> f64 {
    let prefactor = (std::f64::consts::E.powi(2) / 3.0).powf(1.0 / 6.0);
    prefactor / (1.0 + 2.0f64.powf(-7.0 / 3.0) * q)
}

/// Zero-polarization x-readout signal at small fields.
#[derive(Debug, Clone, Copy)]
pub struct NopolSignal {
    /// Exact sum: `1 - (bt/2pi)^2 (2 + sum_k (1 + cos^2(l t/4)) sin^2(l t/4)) / 2`.
    pub exact: f64,
    /// Strong-coupling shorthand with the summand replaced by `3/4 n_sc`.
    pub approx: f64,
    /// Number of strongly coupled spins entering the shorthand.
    pub n_sc: usize,
}

/// Small-field x-readout signal of the zero-polarization scheme.
///
/// The exact angular average of the summand `(1 + cos^2) sin^2` is 5/8; the
/// 3/4 shorthand factorizes the average as `<1 + cos^2><sin^2>`. Both forms
/// are returned.
pub fn signal_nopol(lambda: &[f64], b: f64, t: f64) -> NopolSignal {
    let prefactor = 0.5 * (b * t / (2.0 * std::f64::consts::PI)).powi(2);
    let sum: f64 = lambda
        .iter()
        .map(|l| {
            let c = l * t / 4.0;
            (1.0 + c.cos().powi(2)) * c.sin().powi(2)
        })
        .sum();
    let n_sc = crate::ensemble::count_strong(lambda, t);
    NopolSignal {
        exact: 1.0 - prefactor * (2.0 + sum),
        approx: 1.0 - prefactor * (2.0 + 0.75 * n_sc as f64),
        n_sc,
    }
}

/// Sensing scheme selector for the zero-polarization sensitivities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NopolScheme {
    Echo,
    Eam,
}

/// Zero-polarization sensitivities: `pi / (C gamma sqrt(tau))` for the echo,
/// divided by `sqrt(1 + 1.5 n_sc)` for the amplified scheme.
pub fn sensitivity_nopol(gamma: f64, c: f64, tau: f64, n_sc: f64, scheme: NopolScheme) -> f64 {
    let base = std::f64::consts::PI / (c * gamma * tau.sqrt());
    match scheme {
        NopolScheme::Echo => base,
        NopolScheme::Eam => base / (1.0 + 1.5 * n_sc).sqrt(),
    }
}

/// Ideal ancilla-assisted interferometer signal `sin(n b t)`.
pub fn ideal_dqc1_signal(n: f64, b: f64, t: f64) -> f64 {
    (n * b * t).sin()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn locked_inputs(lambda: Vec<f64>, tau: f64, p: f64) -> PhaseInputs {
        // locked AC averages for unit amplitude
        PhaseInputs {
            lambda,
            tau,
            polarization: p,
            gamma_s: 1.0,
            gamma_i: 1.0,
            b1_bar: 2.0 / PI,
            b2_bar: 1.0 / (2.0 * PI),
        }
    }

    #[test]
    fn phase_reduces_to_echo_at_zero_polarization() {
        let inputs = locked_inputs(vec![3.0, -1.0], 1.0, 0.0);
        let phi = phase_eam(&inputs).unwrap();
        assert_abs_diff_eq!(phi, 2.0 / PI, epsilon = 1e-15);
    }

    #[test]
    fn phase_amplification_at_resonant_coupling() {
        // single spin, lambda tau = 4pi, P = 1, B2/B1 = 1/4: bracket 1.5
        let inputs = locked_inputs(vec![4.0 * PI], 1.0, 1.0);
        let phi = phase_eam(&inputs).unwrap();
        let echo = 2.0 / PI;
        assert_abs_diff_eq!(phi / echo, 1.5, epsilon = 1e-12);
    }

    #[test]
    fn phase_strong_coupling_form() {
        // many strongly coupled spins: sin^2 averages to 1/2, so
        // Phi -> gamma B1 tau (1 + P (B2/B1) n_sc)
        let n = 4000;
        let lambda: Vec<f64> = (0..n)
            .map(|k| 2.0 * PI * (10.0 + 40.0 * (k as f64 + 0.5) / n as f64))
            .collect();
        let inputs = locked_inputs(lambda, 1.0, 0.5);
        let phi = phase_eam(&inputs).unwrap();
        let echo = 2.0 / PI;
        let expected = 1.0 + 0.5 * 0.25 * n as f64;
        assert!(
            (phi / echo - expected).abs() / expected < 2e-3,
            "{} vs {}",
            phi / echo,
            expected
        );
    }

    #[test]
    fn phase_bracket_never_deamplifies() {
        for ltau in [0.3, 2.0, 5.0, 11.0, 29.0] {
            for p in [0.0, 0.4, 1.0] {
                let inputs = locked_inputs(vec![ltau], 1.0, p);
                let phi = phase_eam(&inputs).unwrap();
                assert!(phi >= 2.0 / PI - 1e-12);
            }
        }
        // monotone in P for positive field ratio
        let phis: Vec<f64> = [0.0, 0.3, 0.6, 1.0]
            .iter()
            .map(|&p| phase_eam(&locked_inputs(vec![5.0], 1.0, p)).unwrap())
            .collect();
        assert!(phis.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn phase_general_manifolds() {
        let inputs = locked_inputs(vec![4.0 * PI], 1.0, 1.0);
        // (1, 0) reduces to the base formula
        assert_abs_diff_eq!(
            phase_general(&inputs, 1.0, 0.0).unwrap(),
            phase_eam(&inputs).unwrap()
        );
        // (3/2, 1/2): factor |3/2| - |1/2| = 1
        assert_abs_diff_eq!(
            phase_general(&inputs, 1.5, 0.5).unwrap(),
            phase_eam(&inputs).unwrap()
        );
        // doubling the manifold gap halves the tau of the first maximum
        let at = |dmab: (f64, f64), tau: f64| {
            let inputs = locked_inputs(vec![1.0], tau, 1.0);
            phase_general(&inputs, dmab.0, dmab.1).unwrap()
                - inputs.gamma_s * inputs.b1_bar * tau
        };
        let tau_peak_1 = 4.0 * PI; // sin^2(lambda tau / 8) peaks at lambda tau = 4pi
        assert!(at((1.0, 0.0), tau_peak_1) > at((1.0, 0.0), tau_peak_1 * 0.9));
        assert!(at((2.0, 0.0), tau_peak_1 / 2.0) > at((2.0, 0.0), tau_peak_1 * 0.45));
        assert!(matches!(
            phase_general(&inputs, 1.0, -1.0),
            Err(EamError::DegenerateManifolds(_))
        ));
    }

    #[test]
    fn spin_half_phase_examples() {
        assert_eq!(phase_spin_half(&[2.0], 1.0, 0.0, 0.3, 1.0).unwrap(), 0.0);
        // single lambda tau / 4 = pi/2: sum term is 1
        let phi = phase_spin_half(&[2.0 * PI], 1.0, 1.0, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(phi, 1.0, epsilon = 1e-12);
        // densely spaced strongly coupled spins, lambda tau in (2pi, 4pi):
        // sum sin^3 approaches (4 / 3pi) n_sc
        let n = 8000;
        let lambda: Vec<f64> = (0..n)
            .map(|k| 2.0 * PI * (1.0 + (k as f64 + 0.5) / n as f64))
            .collect();
        let phi = phase_spin_half(&lambda, 1.0, 1.0, 1.0, 1.0).unwrap();
        let n_sc = crate::ensemble::count_strong(&lambda, 1.0) as f64;
        assert_abs_diff_eq!(n_sc, n as f64);
        let expected = 4.0 / (3.0 * PI) * n_sc;
        assert!(
            (phi - expected).abs() / expected < 0.02,
            "{phi} vs {expected}"
        );
    }

    #[test]
    fn ideal_sensitivity_values() {
        // n_sc = 0 reduces to the echo value pi / (2 C gamma sqrt(tau))
        let eta = sensitivity_ideal(1.0, 1.0, 0.5, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(eta, PI / 2.0, epsilon = 1e-15);
        // P=1, n_sc=4: bracket 4
        let eta = sensitivity_ideal(1.0, 1.0, 1.0, 4.0, 1.0).unwrap();
        assert_abs_diff_eq!(eta, PI / 4.0, epsilon = 1e-15);
        // bracket 8 at n_sc = 12: halves the sensitivity value
        let eta12 = sensitivity_ideal(1.0, 1.0, 1.0, 12.0, 1.0).unwrap();
        assert_abs_diff_eq!(eta12, eta / 2.0, epsilon = 1e-15);
        assert!(matches!(
            sensitivity_ideal(1.0, 1.0, 0.0, 4.0, 1.0),
            Err(EamError::ZeroPolarization)
        ));
    }

    #[test]
    fn real_sensitivity_limits() {
        let ideal = sensitivity_ideal(1.0, 1.0, 1.0, 4.0, 1e-3).unwrap();
        let real = sensitivity_real(1.0, 1.0, 1.0, 4.0, 1e-3, 1.0, 1.0);
        assert!((real / ideal - 1.0).abs() < 1e-3);
        // tau = T2 = T2B: the decay contributes exactly e^2
        let with = sensitivity_real(1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0);
        let without = sensitivity_ideal(1.0, 1.0, 1.0, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(with / without, std::f64::consts::E.powi(2), epsilon = 1e-12);
        // cubic exponent: doubling tau multiplies the log-decay by 8
        let l1 = (sensitivity_real(1.0, 1.0, 1.0, 0.0, 0.3, 1.0, 1e12)
            * (1.0 / sensitivity_ideal(1.0, 1.0, 1.0, 0.0, 0.3).unwrap()))
        .ln();
        let l2 = (sensitivity_real(1.0, 1.0, 1.0, 0.0, 0.6, 1.0, 1e12)
            * (1.0 / sensitivity_ideal(1.0, 1.0, 1.0, 0.0, 0.6).unwrap()))
        .ln();
        assert_abs_diff_eq!(l2 / l1, 8.0, epsilon = 1e-9);
    }

    #[test]
    fn params_sensitivity_value() {
        let model = SensitivityModel {
            q: 20.0,
            r: 1.0,
            t2b: 1.0,
            c: 1.0,
            gamma: 1.0,
            polarization: 1.0,
        };
        let eta = sensitivity_params(&model, 0.5);
        // pi e^{2 * 0.125} / (sqrt(0.5) * 7)
        let expected = PI * (0.25f64).exp() / (0.5f64.sqrt() * 7.0);
        assert_abs_diff_eq!(eta, expected, epsilon = 1e-12);
        assert!((eta - 0.8150).abs() < 5e-4);
    }

    #[test]
    fn params_reduces_to_echo_env_at_zero_q() {
        let model = SensitivityModel {
            q: 0.0,
            r: 1.7,
            t2b: 0.8,
            c: 0.9,
            gamma: 1.2,
            polarization: 1.0,
        };
        for i in 1..40 {
            let tau = 0.05 * i as f64;
            let a = sensitivity_params(&model, tau);
            let b = sensitivity_echo_env(1.2, 0.9, tau, 0.8, 1.7);
            assert_abs_diff_eq!(a, b, epsilon = 1e-12 * a.abs());
        }
    }

    #[test]
    fn echo_sensitivity_optimum() {
        // stationary point of eq-echo1 is tau* = 6^{-1/3} T2B
        let t2b = 1.0;
        let opt = optimize_tau(|tau| sensitivity_echo1(1.0, 1.0, tau, t2b), default_bracket(t2b))
            .unwrap();
        assert!(!opt.boundary);
        let expected = 6.0f64.powf(-1.0 / 3.0) * t2b;
        assert!((opt.tau_star - expected).abs() / expected < 1e-4);
        assert!((opt.eta_star - 2.5014).abs() < 1e-3);
        // scaling with t2b
        let opt2 = optimize_tau(
            |tau| sensitivity_echo1(1.0, 1.0, tau, 2.0),
            default_bracket(2.0),
        )
        .unwrap();
        assert!((opt2.tau_star - 2.0 * expected).abs() / expected < 1e-3);
    }

    #[test]
    fn echo_env_sensitivity_optimum() {
        let t2b = 1.0;
        for r in [0.3, 1.0, 3.0] {
            let opt = optimize_tau(
                |tau| sensitivity_echo_env(1.0, 1.0, tau, t2b, r),
                default_bracket(t2b),
            )
            .unwrap();
            let expected = (6.0 * (1.0 + r.powi(3))).powf(-1.0 / 3.0) * t2b;
            assert!((opt.tau_star - expected).abs() / expected < 1e-4, "r = {r}");
        }
        // r -> 0 recovers the background-only expression
        let a = sensitivity_echo_env(1.0, 1.0, 0.4, 1.0, 1e-6);
        let b = sensitivity_echo1(1.0, 1.0, 0.4, 1.0);
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        // r = 1 shortens the effective decay time by 2^{1/3}
        let c = sensitivity_echo_env(1.0, 1.0, 0.4, 1.0, 1.0);
        let d = sensitivity_echo1(1.0, 1.0, 0.4, 2.0f64.powf(-1.0 / 3.0));
        assert_abs_diff_eq!(c, d, epsilon = 1e-12);
    }

    #[test]
    fn optimizer_flags_boundary_on_constant_function() {
        let opt = optimize_tau(|_| 1.0, (0.1, 2.0)).unwrap();
        assert!(opt.boundary);
        assert_abs_diff_eq!(opt.eta_star, 1.0);
    }

    #[test]
    fn optimizer_rejects_bad_bracket() {
        assert!(optimize_tau(|t| t, (1.0, 0.5)).is_err());
        assert!(optimize_tau(|t| t, (0.0, 1.0)).is_err());
    }

    #[test]
    fn asymptote_values() {
        assert!((ratio_asymptote(0.0) - 1.1621).abs() < 1e-4);
        assert!((ratio_asymptote(20.0) - 0.2339).abs() < 1e-4);
        assert!((ratio_asymptote(50.0) - 0.1064).abs() < 1e-4);
    }

    #[test]
    fn ratio_table_structure() {
        let q_list = [0.0, 20.0];
        let r_grid = [0.5, 1.0, 2.0];
        let rows = ratio_curves(&q_list, &r_grid, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(rows.len(), 6);
        // Q = 0: the amplified and echo-env expressions coincide
        for row in rows.iter().filter(|r| r.q == 0.0) {
            assert_abs_diff_eq!(row.ratio_b, 1.0, epsilon = 1e-6);
        }
        assert!(ratio_curves(&[], &r_grid, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn ratio_b_approaches_asymptote_at_large_r() {
        for q in [10.0, 20.0, 30.0, 50.0] {
            let rows = ratio_curves(&[q], &[30.0], 1.0, 1.0, 1.0).unwrap();
            let asym = ratio_asymptote(q);
            let rel = (rows[0].ratio_b - asym).abs() / asym;
            assert!(rel < 0.02, "Q = {q}: {} vs {asym}", rows[0].ratio_b);
        }
    }

    #[test]
    fn ratio_a_dips_near_unity_r() {
        let r_grid: Vec<f64> = (0..60).map(|i| 0.1 * 1.1f64.powi(i)).collect();
        let rows = ratio_curves(&[20.0], &r_grid, 1.0, 1.0, 1.0).unwrap();
        let (imin, _) = rows
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.ratio_a.total_cmp(&b.1.ratio_a))
            .unwrap();
        let r_min = rows[imin].r;
        assert!(
            (0.5..=2.0).contains(&r_min),
            "minimum at r = {r_min}, expected near 1"
        );
    }

    #[test]
    fn homogeneity_in_readout_and_gyromagnetic_factors() {
        let model = SensitivityModel {
            q: 15.0,
            r: 2.0,
            t2b: 1.3,
            c: 0.5,
            gamma: 2.0,
            polarization: 1.0,
        };
        let base = sensitivity_params(&model, 0.4);
        let scaled = SensitivityModel {
            c: 0.25,
            gamma: 4.0,
            ..model
        };
        assert_abs_diff_eq!(sensitivity_params(&scaled, 0.4), base, epsilon = 1e-15);
        assert_abs_diff_eq!(
            sensitivity_echo1(2.0, 1.0, 0.3, 1.0),
            2.0 * sensitivity_echo1(4.0, 1.0, 0.3, 1.0),
            epsilon = 1e-15
        );
    }

    #[test]
    fn nopol_signal_forms() {
        // lambda = 0: bracket is exactly 2
        let s = signal_nopol(&[0.0], 1.0, 1.0);
        assert_abs_diff_eq!(
            s.exact,
            1.0 - (1.0 / (2.0 * PI)).powi(2),
            epsilon = 1e-15
        );
        // single lambda t / 4 = pi/2: summand is (1 + 0) * 1 = 1
        let s = signal_nopol(&[2.0 * PI], 1.0, 1.0);
        let prefactor = 0.5 * (1.0 / (2.0 * PI)).powi(2);
        assert_abs_diff_eq!(s.exact, 1.0 - prefactor * 3.0, epsilon = 1e-12);
        // uniform angular average of the exact summand is 5/8, not 3/4
        let n = 20000;
        let avg: f64 = (0..n)
            .map(|k| {
                let c = PI * (k as f64 + 0.5) / n as f64;
                (1.0 + c.cos().powi(2)) * c.sin().powi(2)
            })
            .sum::<f64>()
            / n as f64;
        assert!((avg - 0.625).abs() < 1e-4, "average {avg}");
    }

    #[test]
    fn nopol_sensitivity_values() {
        let echo = sensitivity_nopol(1.0, 1.0, 1.0, 0.0, NopolScheme::Echo);
        let eam0 = sensitivity_nopol(1.0, 1.0, 1.0, 0.0, NopolScheme::Eam);
        assert_abs_diff_eq!(echo, eam0, epsilon = 1e-15);
        let eam6 = sensitivity_nopol(1.0, 1.0, 1.0, 6.0, NopolScheme::Eam);
        assert_abs_diff_eq!(eam6, PI / 10.0f64.sqrt(), epsilon = 1e-12);
        // asymptotic sqrt(n_sc) improvement
        let big = sensitivity_nopol(1.0, 1.0, 1.0, 1e6, NopolScheme::Eam);
        assert!((echo / big / (1.5f64 * 1e6).sqrt() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn dqc1_signal() {
        assert_eq!(ideal_dqc1_signal(3.0, 0.0, 1.0), 0.0);
        assert_abs_diff_eq!(ideal_dqc1_signal(1.0, PI / 2.0, 1.0), 1.0);
        // small-field linearization carries the factor n
        let n = 7.0;
        let bt = 1e-5;
        assert!((ideal_dqc1_signal(n, bt, 1.0) / (n * bt) - 1.0).abs() < 1e-8);
    }
}
