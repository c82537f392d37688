//! Run configuration: a strict sectioned `key = value` format.
//!
//! Sections and keys are fixed; unknown sections, unknown keys, type
//! mismatches and constraint violations are all rejected with the offending
//! name and line number. Every key has a documented default, so the minimal
//! valid configuration is just `[run]` with a `command`.
//!
//! ```text
//! [run]
//! command = decay          # decay | sensitivity | phase | nopol | verify
//! seed = 42
//! threads = 0              # 0 = all cores
//! output = out
//!
//! [ensemble]
//! placement = cube         # cube | lattice
//! spins = 25               # cube placement
//! density = 0.06           # lattice placement
//! extent = 4               # lattice cells per axis
//! polarization = 0.5
//! gamma_s = 1
//! gamma_i = 1
//! gmax = 6
//!
//! [sequence]
//! kind = eam               # echo | eam | eam_x | eam_spinhalf
//! wahuha_cycles = 0        # 0 disables decoupling
//! wahuha_symmetrized = false
//!
//! [field]
//! kind = ac_locked         # ac_locked | static | ac_random_phase
//! b0 = 0
//!
//! [grid]
//! tau_start = 0.05         # units of pi / lambda_max
//! tau_stop = 2
//! tau_points = 25
//!
//! [monte_carlo]
//! trials = 100
//!
//! [sensitivity]
//! q_list = 10, 20, 30, 50
//! r_start = 0.1
//! r_stop = 30
//! r_points = 40
//! r_log = true
//! t2b = 1
//! readout_c = 1
//! gamma = 1
//!
//! [phase]
//! lambda_tau_start = 0.5
//! lambda_tau_stop = 25
//! lambda_tau_points = 50
//! p_list = 0.25, 0.5, 1
//!
//! [nopol]
//! lambda_t_start = 0.5
//! lambda_t_stop = 25
//! lambda_t_points = 50
//! n_sc_max = 20
//! tau = 1
//! ```

use std::fmt::Write as _;

use eam_core::dynamics::Placement;
use eam_core::sequence::{FieldKind, SequenceKind};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Decay,
    Sensitivity,
    Phase,
    Nopol,
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Decay => "decay",
            Command::Sensitivity => "sensitivity",
            Command::Phase => "phase",
            Command::Nopol => "nopol",
            Command::Verify => "verify",
        }
    }
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub seed: u64,
    pub threads: usize,
    pub output: String,

    pub placement: Placement,
    pub polarization: f64,
    pub gamma_s: f64,
    pub gamma_i: f64,
    pub gmax: usize,

    pub sequence: SequenceKind,
    pub wahuha_cycles: usize,
    pub wahuha_symmetrized: bool,

    pub field_kind: FieldKind,
    pub b0: f64,

    pub tau_start: f64,
    pub tau_stop: f64,
    pub tau_points: usize,

    pub trials: usize,

    pub q_list: Vec<f64>,
    pub r_start: f64,
    pub r_stop: f64,
    pub r_points: usize,
    pub r_log: bool,
    pub t2b: f64,
    pub readout_c: f64,
    pub gamma: f64,

    pub lambda_tau_start: f64,
    pub lambda_tau_stop: f64,
    pub lambda_tau_points: usize,
    pub p_list: Vec<f64>,

    pub lambda_t_start: f64,
    pub lambda_t_stop: f64,
    pub lambda_t_points: usize,
    pub n_sc_max: usize,
    pub nopol_tau: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: Command::Verify,
            seed: 42,
            threads: 0,
            output: "out".into(),
            placement: Placement::Cube { spins: 25 },
            polarization: 0.5,
            gamma_s: 1.0,
            gamma_i: 1.0,
            gmax: 6,
            sequence: SequenceKind::Eam,
            wahuha_cycles: 0,
            wahuha_symmetrized: false,
            field_kind: FieldKind::AcLocked,
            b0: 0.0,
            tau_start: 0.05,
            tau_stop: 2.0,
            tau_points: 25,
            trials: 100,
            q_list: vec![10.0, 20.0, 30.0, 50.0],
            r_start: 0.1,
            r_stop: 30.0,
            r_points: 40,
            r_log: true,
            t2b: 1.0,
            readout_c: 1.0,
            gamma: 1.0,
            lambda_tau_start: 0.5,
            lambda_tau_stop: 25.0,
            lambda_tau_points: 50,
            p_list: vec![0.25, 0.5, 1.0],
            lambda_t_start: 0.5,
            lambda_t_stop: 25.0,
            lambda_t_points: 50,
            n_sc_max: 20,
            nopol_tau: 1.0,
        }
    }
}

fn err(line: usize, message: impl Into<String>) -> CliError {
    CliError::Config {
        line,
        message: message.into(),
    }
}

struct Raw<'a> {
    line: usize,
    value: &'a str,
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(idx) => &line[..idx],
        None => line,
    }
}

/// Parse the sectioned `key = value` text into a validated configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    const SECTIONS: [&str; 8] = [
        "run",
        "ensemble",
        "sequence",
        "field",
        "grid",
        "monte_carlo",
        "sensitivity",
        "phase",
    ];
    let known_section = |s: &str| SECTIONS.contains(&s) || s == "nopol";

    let mut entries: Vec<(String, Raw)> = Vec::new();
    let mut section: Option<String> = None;
    let mut command: Option<(usize, String)> = None;
    let mut placement_kind: Option<(usize, String)> = None;

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(raw_line).trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| err(line_no, "unterminated section header"))?
                .trim();
            if !known_section(name) {
                return Err(err(line_no, format!("unknown section [{name}]")));
            }
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(line_no, format!("expected `key = value`, got {line:?}")))?;
        let section_name = section
            .as_deref()
            .ok_or_else(|| err(line_no, "key outside any [section]"))?;
        let key = key.trim();
        let value = value.trim();
        let full = format!("{section_name}.{key}");
        match full.as_str() {
            "run.command" => command = Some((line_no, value.to_string())),
            "ensemble.placement" => placement_kind = Some((line_no, value.to_string())),
            _ => {}
        }
        if entries.iter().any(|(k, _)| *k == full) {
            return Err(err(line_no, format!("duplicate key {key}")));
        }
        entries.push((
            full,
            Raw {
                line: line_no,
                value,
            },
        ));
    }

    let mut cfg = RunConfig::default();
    let mut consumed: Vec<bool> = vec![false; entries.len()];
    let mut take = |full: &str| -> Option<(usize, String)> {
        for (i, (k, raw)) in entries.iter().enumerate() {
            if k == full {
                consumed[i] = true;
                return Some((raw.line, raw.value.to_string()));
            }
        }
        None
    };

    fn get_f64(item: Option<(usize, String)>, key: &str, out: &mut f64) -> Result<(), CliError> {
        if let Some((line, v)) = item {
            *out = v
                .parse()
                .map_err(|_| err(line, format!("{key}: expected a number, got {v:?}")))?;
            if !out.is_finite() {
                return Err(err(line, format!("{key}: value must be finite")));
            }
        }
        Ok(())
    }
    fn get_usize(item: Option<(usize, String)>, key: &str, out: &mut usize) -> Result<(), CliError> {
        if let Some((line, v)) = item {
            *out = v
                .parse()
                .map_err(|_| err(line, format!("{key}: expected a non-negative integer, got {v:?}")))?;
        }
        Ok(())
    }
    fn get_u64(item: Option<(usize, String)>, key: &str, out: &mut u64) -> Result<(), CliError> {
        if let Some((line, v)) = item {
            *out = v
                .parse()
                .map_err(|_| err(line, format!("{key}: expected an integer, got {v:?}")))?;
        }
        Ok(())
    }
    fn get_bool(item: Option<(usize, String)>, key: &str, out: &mut bool) -> Result<(), CliError> {
        if let Some((line, v)) = item {
            *out = match v.as_str() {
                "true" => true,
                "false" => false,
                _ => return Err(err(line, format!("{key}: expected true or false, got {v:?}"))),
            };
        }
        Ok(())
    }
    fn get_list(item: Option<(usize, String)>, key: &str, out: &mut Vec<f64>) -> Result<(), CliError> {
        if let Some((line, v)) = item {
            let mut list = Vec::new();
            for tok in v.split(',') {
                let tok = tok.trim();
                if tok.is_empty() {
                    continue;
                }
                list.push(
                    tok.parse()
                        .map_err(|_| err(line, format!("{key}: {tok:?} is not a number")))?,
                );
            }
            if list.is_empty() {
                return Err(err(line, format!("{key}: list must be nonempty")));
            }
            *out = list;
        }
        Ok(())
    }

    // [run]
    match command {
        Some((line, v)) => {
            cfg.command = match v.as_str() {
                "decay" => Command::Decay,
                "sensitivity" => Command::Sensitivity,
                "phase" => Command::Phase,
                "nopol" => Command::Nopol,
                "verify" => Command::Verify,
                _ => return Err(err(line, format!("command: unknown value {v:?}"))),
            };
            take("run.command");
        }
        None => return Err(err(0, "missing required key run.command")),
    }
    get_u64(take("run.seed"), "seed", &mut cfg.seed)?;
    get_usize(take("run.threads"), "threads", &mut cfg.threads)?;
    if let Some((_, v)) = take("run.output") {
        cfg.output = v;
    }

    // [ensemble]
    let mut spins = 25usize;
    let mut density = 0.06f64;
    let mut extent = 4usize;
    get_usize(take("ensemble.spins"), "spins", &mut spins)?;
    get_f64(take("ensemble.density"), "density", &mut density)?;
    get_usize(take("ensemble.extent"), "extent", &mut extent)?;
    let kind = match placement_kind {
        Some((line, v)) => {
            take("ensemble.placement");
            match v.as_str() {
                "cube" => "cube",
                "lattice" => "lattice",
                _ => return Err(err(line, format!("placement: unknown value {v:?}"))),
            }
        }
        None => "cube",
    };
    cfg.placement = if kind == "cube" {
        Placement::Cube { spins }
    } else {
        Placement::Lattice {
            density,
            extent: extent as u32,
        }
    };
    get_f64(
        take("ensemble.polarization"),
        "polarization",
        &mut cfg.polarization,
    )?;
    get_f64(take("ensemble.gamma_s"), "gamma_s", &mut cfg.gamma_s)?;
    get_f64(take("ensemble.gamma_i"), "gamma_i", &mut cfg.gamma_i)?;
    get_usize(take("ensemble.gmax"), "gmax", &mut cfg.gmax)?;

    // [sequence]
    if let Some((line, v)) = take("sequence.kind") {
        cfg.sequence = match v.as_str() {
            "echo" => SequenceKind::Echo,
            "eam" => SequenceKind::Eam,
            "eam_x" => SequenceKind::EamX,
            "eam_spinhalf" => SequenceKind::EamSpinHalf,
            _ => return Err(err(line, format!("kind: unknown sequence {v:?}"))),
        };
    }
    get_usize(
        take("sequence.wahuha_cycles"),
        "wahuha_cycles",
        &mut cfg.wahuha_cycles,
    )?;
    get_bool(
        take("sequence.wahuha_symmetrized"),
        "wahuha_symmetrized",
        &mut cfg.wahuha_symmetrized,
    )?;

    // [field]
    if let Some((line, v)) = take("field.kind") {
        cfg.field_kind = match v.as_str() {
            "ac_locked" => FieldKind::AcLocked,
            "static" => FieldKind::Static,
            "ac_random_phase" => FieldKind::AcRandomPhase,
            _ => return Err(err(line, format!("kind: unknown field {v:?}"))),
        };
    }
    get_f64(take("field.b0"), "b0", &mut cfg.b0)?;

    // [grid]
    get_f64(take("grid.tau_start"), "tau_start", &mut cfg.tau_start)?;
    get_f64(take("grid.tau_stop"), "tau_stop", &mut cfg.tau_stop)?;
    get_usize(take("grid.tau_points"), "tau_points", &mut cfg.tau_points)?;

    // [monte_carlo]
    get_usize(take("monte_carlo.trials"), "trials", &mut cfg.trials)?;

    // [sensitivity]
    get_list(take("sensitivity.q_list"), "q_list", &mut cfg.q_list)?;
    get_f64(take("sensitivity.r_start"), "r_start", &mut cfg.r_start)?;
    get_f64(take("sensitivity.r_stop"), "r_stop", &mut cfg.r_stop)?;
    get_usize(take("sensitivity.r_points"), "r_points", &mut cfg.r_points)?;
    get_bool(take("sensitivity.r_log"), "r_log", &mut cfg.r_log)?;
    get_f64(take("sensitivity.t2b"), "t2b", &mut cfg.t2b)?;
    get_f64(take("sensitivity.readout_c"), "readout_c", &mut cfg.readout_c)?;
    get_f64(take("sensitivity.gamma"), "gamma", &mut cfg.gamma)?;

    // [phase]
    get_f64(
        take("phase.lambda_tau_start"),
        "lambda_tau_start",
        &mut cfg.lambda_tau_start,
    )?;
    get_f64(
        take("phase.lambda_tau_stop"),
        "lambda_tau_stop",
        &mut cfg.lambda_tau_stop,
    )?;
    get_usize(
        take("phase.lambda_tau_points"),
        "lambda_tau_points",
        &mut cfg.lambda_tau_points,
    )?;
    get_list(take("phase.p_list"), "p_list", &mut cfg.p_list)?;

    // [nopol]
    get_f64(
        take("nopol.lambda_t_start"),
        "lambda_t_start",
        &mut cfg.lambda_t_start,
    )?;
    get_f64(
        take("nopol.lambda_t_stop"),
        "lambda_t_stop",
        &mut cfg.lambda_t_stop,
    )?;
    get_usize(
        take("nopol.lambda_t_points"),
        "lambda_t_points",
        &mut cfg.lambda_t_points,
    )?;
    get_usize(take("nopol.n_sc_max"), "n_sc_max", &mut cfg.n_sc_max)?;
    get_f64(take("nopol.tau"), "tau", &mut cfg.nopol_tau)?;

    // anything not consumed is an unknown key
    for (i, (k, raw)) in entries.iter().enumerate() {
        if !consumed[i] {
            return Err(err(raw.line, format!("unknown key {k}")));
        }
    }

    validate(&cfg)?;
    Ok(cfg)
}

fn validate(cfg: &RunConfig) -> Result<(), CliError> {
    let bad = |name: &str, reason: String| {
        Err(CliError::Validation {
            name: name.to_string(),
            reason,
        })
    };
    if cfg.trials < 1 {
        return bad("trials", format!("{} must be at least 1", cfg.trials));
    }
    if cfg.gmax < 1 {
        return bad("gmax", "must be at least 1".into());
    }
    if !(-1.0..=1.0).contains(&cfg.polarization) {
        return bad("polarization", format!("{} outside [-1, 1]", cfg.polarization));
    }
    match cfg.placement {
        Placement::Cube { spins } => {
            if spins < 1 {
                return bad("spins", "must be at least 1".into());
            }
        }
        Placement::Lattice { density, extent } => {
            if !(density > 0.0 && density <= 1.0) {
                return bad("density", format!("{density} not in (0, 1]"));
            }
            if extent < 1 {
                return bad("extent", "must be at least 1".into());
            }
        }
    }
    if !(cfg.tau_start >= 0.0 && cfg.tau_stop > cfg.tau_start) {
        return bad(
            "tau_start/tau_stop",
            format!("need 0 <= start < stop, got ({}, {})", cfg.tau_start, cfg.tau_stop),
        );
    }
    if cfg.tau_points < 2 {
        return bad("tau_points", "must be at least 2".into());
    }
    if !(cfg.r_start > 0.0 && cfg.r_stop > cfg.r_start) {
        return bad(
            "r_start/r_stop",
            format!("need 0 < start < stop, got ({}, {})", cfg.r_start, cfg.r_stop),
        );
    }
    if cfg.r_points < 2 {
        return bad("r_points", "must be at least 2".into());
    }
    if cfg.q_list.iter().any(|&q| q < 0.0) {
        return bad("q_list", "quality factors must be non-negative".into());
    }
    if !(cfg.t2b > 0.0) {
        return bad("t2b", format!("{} must be positive", cfg.t2b));
    }
    if !(cfg.readout_c > 0.0 && cfg.readout_c <= 1.0) {
        return bad("readout_c", format!("{} not in (0, 1]", cfg.readout_c));
    }
    if !(cfg.gamma > 0.0) {
        return bad("gamma", format!("{} must be positive", cfg.gamma));
    }
    if cfg.p_list.iter().any(|p| p.abs() > 1.0) {
        return bad("p_list", "polarizations must lie in [-1, 1]".into());
    }
    if !(cfg.lambda_tau_start > 0.0 && cfg.lambda_tau_stop > cfg.lambda_tau_start) {
        return bad("lambda_tau_start/stop", "need 0 < start < stop".into());
    }
    if cfg.lambda_tau_points < 2 {
        return bad("lambda_tau_points", "must be at least 2".into());
    }
    if !(cfg.lambda_t_start > 0.0 && cfg.lambda_t_stop > cfg.lambda_t_start) {
        return bad("lambda_t_start/stop", "need 0 < start < stop".into());
    }
    if cfg.lambda_t_points < 2 {
        return bad("lambda_t_points", "must be at least 2".into());
    }
    if !(cfg.nopol_tau > 0.0) {
        return bad("tau", format!("{} must be positive", cfg.nopol_tau));
    }
    Ok(())
}

/// Canonical serialization; `parse_config(serialize_config(c)) == c`.
pub fn serialize_config(cfg: &RunConfig) -> String {
    let mut out = String::new();
    let list = |v: &[f64]| {
        v.iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(", ")
    };
    let _ = writeln!(out, "[run]");
    let _ = writeln!(out, "command = {}", cfg.command.name());
    let _ = writeln!(out, "seed = {}", cfg.seed);
    let _ = writeln!(out, "threads = {}", cfg.threads);
    let _ = writeln!(out, "output = {}", cfg.output);
    let _ = writeln!(out, "\n[ensemble]");
    match cfg.placement {
        Placement::Cube { spins } => {
            let _ = writeln!(out, "placement = cube");
            let _ = writeln!(out, "spins = {spins}");
        }
        Placement::Lattice { density, extent } => {
            let _ = writeln!(out, "placement = lattice");
            let _ = writeln!(out, "density = {density}");
            let _ = writeln!(out, "extent = {extent}");
        }
    }
    let _ = writeln!(out, "polarization = {}", cfg.polarization);
    let _ = writeln!(out, "gamma_s = {}", cfg.gamma_s);
    let _ = writeln!(out, "gamma_i = {}", cfg.gamma_i);
    let _ = writeln!(out, "gmax = {}", cfg.gmax);
    let _ = writeln!(out, "\n[sequence]");
    let _ = writeln!(
        out,
        "kind = {}",
        match cfg.sequence {
            SequenceKind::Echo => "echo",
            SequenceKind::Eam => "eam",
            SequenceKind::EamX => "eam_x",
            SequenceKind::EamSpinHalf => "eam_spinhalf",
        }
    );
    let _ = writeln!(out, "wahuha_cycles = {}", cfg.wahuha_cycles);
    let _ = writeln!(out, "wahuha_symmetrized = {}", cfg.wahuha_symmetrized);
    let _ = writeln!(out, "\n[field]");
    let _ = writeln!(
        out,
        "kind = {}",
        match cfg.field_kind {
            FieldKind::AcLocked => "ac_locked",
            FieldKind::Static => "static",
            FieldKind::AcRandomPhase => "ac_random_phase",
        }
    );
    let _ = writeln!(out, "b0 = {}", cfg.b0);
    let _ = writeln!(out, "\n[grid]");
    let _ = writeln!(out, "tau_start = {}", cfg.tau_start);
    let _ = writeln!(out, "tau_stop = {}", cfg.tau_stop);
    let _ = writeln!(out, "tau_points = {}", cfg.tau_points);
    let _ = writeln!(out, "\n[monte_carlo]");
    let _ = writeln!(out, "trials = {}", cfg.trials);
    let _ = writeln!(out, "\n[sensitivity]");
    let _ = writeln!(out, "q_list = {}", list(&cfg.q_list));
    let _ = writeln!(out, "r_start = {}", cfg.r_start);
    let _ = writeln!(out, "r_stop = {}", cfg.r_stop);
    let _ = writeln!(out, "r_points = {}", cfg.r_points);
    let _ = writeln!(out, "r_log = {}", cfg.r_log);
    let _ = writeln!(out, "t2b = {}", cfg.t2b);
    let _ = writeln!(out, "readout_c = {}", cfg.readout_c);
    let _ = writeln!(out, "gamma = {}", cfg.gamma);
    let _ = writeln!(out, "\n[phase]");
    let _ = writeln!(out, "lambda_tau_start = {}", cfg.lambda_tau_start);
    let _ = writeln!(out, "lambda_tau_stop = {}", cfg.lambda_tau_stop);
    let _ = writeln!(out, "lambda_tau_points = {}", cfg.lambda_tau_points);
    let _ = writeln!(out, "p_list = {}", list(&cfg.p_list));
    let _ = writeln!(out, "\n[nopol]");
    let _ = writeln!(out, "lambda_t_start = {}", cfg.lambda_t_start);
    let _ = writeln!(out, "lambda_t_stop = {}", cfg.lambda_t_stop);
    let _ = writeln!(out, "lambda_t_points = {}", cfg.lambda_t_points);
    let _ = writeln!(out, "n_sc_max = {}", cfg.n_sc_max);
    let _ = writeln!(out, "tau = {}", cfg.nopol_tau);
    out
}

/// Hash of the semantic configuration fields: identical results imply an
/// identical hash, and any semantic change (anything except `threads` and
/// `output`) changes it.
pub fn config_hash(cfg: &RunConfig) -> String {
    let mut semantic = cfg.clone();
    semantic.threads = 0;
    semantic.output = String::new();
    let text = serialize_config(&semantic);
    let digest = Sha256::digest(text.as_bytes());
    let mut out = String::with_capacity(16);
    for byte in digest.iter().take(8) {
        let _ = write!(out, "{byte:02x}");
    }
    out
}
