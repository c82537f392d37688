//! Plain-text serialization of ensembles and results.
//!
//! Ensemble table format (`write_ensemble_table` / `parse_ensemble_table`):
//!
//! ```text
//! # eam ensemble v1
//! gamma_s = 1
//! gamma_i = 1
//! polarization = 0.5
//! spins = 2
//! # columns: x y z lambda
//! 0.1 0.2 0.3 -1.25
//! -0.4 0 0.2 3.5
//! # kappa matrix, one row per line
//! 0 0.7
//! 0.7 0
//! ```
//!
//! Decay curves serialize as CSV with the mandatory header
//! `tau,envelope_mean,envelope_stderr,trials`; the extracted T2 and its
//! censoring flag travel in a sidecar metadata block of `key = value` lines.
//! Ratio tables use the header `r,Q,ratio_a,ratio_b,tau_star`.
//!
//! All numbers are written with Rust's shortest-round-trip float formatting,
//! so parse(write(x)) is exact.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::analytic::RatioRow;
use crate::dynamics::DecayCurve;
use crate::ensemble::SpinEnsemble;
use crate::{EamError, Result};

const ENSEMBLE_HEADER: &str = "# eam ensemble v1";

/// Render an ensemble as the documented plain-text table.
pub fn write_ensemble_table(ens: &SpinEnsemble) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{ENSEMBLE_HEADER}");
    let _ = writeln!(out, "gamma_s = {}", ens.gamma_s);
    let _ = writeln!(out, "gamma_i = {}", ens.gamma_i);
    let _ = writeln!(out, "polarization = {}", ens.polarization);
    let _ = writeln!(out, "spins = {}", ens.len());
    let _ = writeln!(out, "# columns: x y z lambda");
    for (pos, lambda) in ens.positions.iter().zip(ens.lambda.iter()) {
        let _ = writeln!(out, "{} {} {} {}", pos[0], pos[1], pos[2], lambda);
    }
    let _ = writeln!(out, "# kappa matrix, one row per line");
    for j in 0..ens.len() {
        let row: Vec<String> = (0..ens.len())
            .map(|k| format!("{}", ens.kappa[(j, k)]))
            .collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

struct Lines<'a> {
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines {
            iter: text.lines().enumerate(),
        }
    }

    /// Next line that is neither blank nor a comment, with its 1-based number.
    fn next_data(&mut self) -> Option<(usize, &'a str)> {
        for (idx, line) in self.iter.by_ref() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            return Some((idx + 1, trimmed));
        }
        None
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> EamError {
    EamError::Parse {
        line,
        message: message.into(),
    }
}

fn parse_f64(line: usize, token: &str, what: &str) -> Result<f64> {
    let v: f64 = token
        .parse()
        .map_err(|_| parse_err(line, format!("{what}: expected a number, got {token:?}")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("{what}: {token:?} is not finite")));
    }
    Ok(v)
}

fn expect_key(line: usize, text: &str, key: &str) -> Result<f64> {
    let (k, v) = text
        .split_once('=')
        .ok_or_else(|| parse_err(line, format!("expected `{key} = <value>`")))?;
    if k.trim() != key {
        return Err(parse_err(
            line,
            format!("expected key `{key}`, got `{}`", k.trim()),
        ));
    }
    parse_f64(line, v.trim(), key)
}

/// Parse the plain-text ensemble table.
pub fn parse_ensemble_table(text: &str) -> Result<SpinEnsemble> {
    let mut lines = Lines::new(text);
    let gamma_s = {
        let (n, l) = lines.next_data().ok_or_else(|| parse_err(0, "empty input"))?;
        expect_key(n, l, "gamma_s")?
    };
    let gamma_i = {
        let (n, l) = lines
            .next_data()
            .ok_or_else(|| parse_err(0, "missing gamma_i"))?;
        expect_key(n, l, "gamma_i")?
    };
    let polarization = {
        let (n, l) = lines
            .next_data()
            .ok_or_else(|| parse_err(0, "missing polarization"))?;
        expect_key(n, l, "polarization")?
    };
    let spins = {
        let (n, l) = lines
            .next_data()
            .ok_or_else(|| parse_err(0, "missing spins"))?;
        let v = expect_key(n, l, "spins")?;
        if v < 0.0 || v.fract() != 0.0 || v > 4096.0 {
            return Err(parse_err(n, format!("spins: {v} is not a valid count")));
        }
        v as usize
    };
    let mut positions = Vec::with_capacity(spins);
    let mut lambda = Vec::with_capacity(spins);
    for _ in 0..spins {
        let (n, l) = lines
            .next_data()
            .ok_or_else(|| parse_err(0, "missing spin row"))?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 4 {
            return Err(parse_err(n, format!("expected 4 columns, got {}", toks.len())));
        }
        positions.push([
            parse_f64(n, toks[0], "x")?,
            parse_f64(n, toks[1], "y")?,
            parse_f64(n, toks[2], "z")?,
        ]);
        lambda.push(parse_f64(n, toks[3], "lambda")?);
    }
    let mut kappa = DMatrix::zeros(spins, spins);
    for j in 0..spins {
        let (n, l) = lines
            .next_data()
            .ok_or_else(|| parse_err(0, "missing kappa row"))?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != spins {
            return Err(parse_err(
                n,
                format!("kappa row {j}: expected {spins} entries, got {}", toks.len()),
            ));
        }
        for (k, tok) in toks.iter().enumerate() {
            kappa[(j, k)] = parse_f64(n, tok, "kappa")?;
        }
    }
    if let Some((n, l)) = lines.next_data() {
        return Err(parse_err(n, format!("unexpected trailing content: {l:?}")));
    }
    // validate symmetry and zero diagonal
    for j in 0..spins {
        if kappa[(j, j)] != 0.0 {
            return Err(parse_err(0, format!("kappa diagonal entry {j} is nonzero")));
        }
        for k in 0..spins {
            if kappa[(j, k)] != kappa[(k, j)] {
                return Err(parse_err(0, format!("kappa is not symmetric at ({j}, {k})")));
            }
        }
    }
    let mut ens = SpinEnsemble::from_couplings(lambda, kappa, gamma_s, gamma_i, polarization)?;
    ens.positions = positions;
    Ok(ens)
}

/// Render a decay curve as CSV.
pub fn write_decay_csv(curve: &DecayCurve) -> String {
    let mut out = String::from("tau,envelope_mean,envelope_stderr,trials\n");
    for i in 0..curve.taus.len() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            curve.taus[i], curve.envelope[i], curve.stderr[i], curve.trials
        );
    }
    out
}

/// Sidecar metadata block for a decay curve.
pub fn write_decay_metadata(curve: &DecayCurve) -> String {
    format!(
        "t2 = {}\nt2_censored = {}\ntrials = {}\n",
        curve.t2.value, curve.t2.censored, curve.trials
    )
}

/// Parse a decay-curve CSV produced by [`write_decay_csv`].
///
/// The extracted T2 is recomputed from the parsed envelope.
pub fn parse_decay_csv(text: &str) -> Result<DecayCurve> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| parse_err(0, "empty input"))?;
    if header.trim() != "tau,envelope_mean,envelope_stderr,trials" {
        return Err(parse_err(1, format!("unexpected header {header:?}")));
    }
    let mut taus = Vec::new();
    let mut envelope = Vec::new();
    let mut stderr = Vec::new();
    let mut trials: Option<usize> = None;
    for (idx, line) in lines {
        let n = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let toks: Vec<&str> = trimmed.split(',').collect();
        if toks.len() != 4 {
            return Err(parse_err(n, format!("expected 4 fields, got {}", toks.len())));
        }
        taus.push(parse_f64(n, toks[0], "tau")?);
        envelope.push(parse_f64(n, toks[1], "envelope_mean")?);
        stderr.push(parse_f64(n, toks[2], "envelope_stderr")?);
        let t: usize = toks[3]
            .parse()
            .map_err(|_| parse_err(n, format!("trials: {:?} is not a count", toks[3])))?;
        match trials {
            None => trials = Some(t),
            Some(prev) if prev != t => {
                return Err(parse_err(n, format!("trials changed from {prev} to {t}")));
            }
            _ => {}
        }
    }
    if taus.is_empty() {
        return Err(parse_err(0, "no data rows"));
    }
    let t2 = crate::dynamics::extract_t2(&taus, &envelope)?;
    Ok(DecayCurve {
        taus,
        envelope,
        stderr,
        trials: trials.unwrap_or(0),
        t2,
    })
}

/// Render a sensitivity-ratio table as CSV.
pub fn write_ratio_csv(rows: &[RatioRow]) -> String {
    let mut out = String::from("r,Q,ratio_a,ratio_b,tau_star\n");
    for row in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            row.r, row.q, row.ratio_a, row.ratio_b, row.tau_star
        );
    }
    out
}

/// Write a file atomically: to `<path>.tmp`, then rename over `path`.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension(match path.extension() {
        Some(ext) => format!("{}.tmp", ext.to_string_lossy()),
        None => "tmp".to_string(),
    });
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
