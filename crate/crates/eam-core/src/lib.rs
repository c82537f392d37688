//! Simulator and analysis toolkit for environment-assisted magnetometry with
//! spin qubits.
//!
//! A spin-1 probe is coupled to a bath of spin-1/2 impurities through dipolar
//! couplings. Pulse sequences on the probe and on the (collectively driven)
//! bath map field-dependent bath phases onto the probe coherence, amplifying
//! the response to weak AC fields. The crate provides:
//!
//! - [`spincore`]: dense complex linear algebra over small spin Hilbert
//!   spaces (operators, tensor embedding, Hermitian exponentials, product
//!   states).
//! - [`ensemble`]: random spatial bath configurations, dipolar couplings,
//!   disjoint-cluster partitions and coupling statistics.
//! - [`sequence`]: pulse-sequence declaration, WAHUHA decoupling embedding,
//!   and compilation into per-branch piecewise-constant toggling-frame
//!   Hamiltonian segments.
//! - [`dynamics`]: branch propagation, the coherence functional, the
//!   disjoint-cluster product approximation, Monte-Carlo decay curves.
//! - [`analytic`]: closed-form phase and sensitivity expressions with
//!   interrogation-time optimization.
//! - [`io`]: plain-text and CSV serialization of ensembles and results.
//!
//! Units: `hbar = 1`; couplings are angular frequencies; gyromagnetic ratios
//! are angular frequency per field unit. Decay-curve time grids are expressed
//! in units of `pi / lambda_max`, the inverse of the largest probe-bath
//! coupling of each sampled configuration.

pub mod analytic;
pub mod dynamics;
pub mod ensemble;
pub mod io;
pub mod sequence;
pub mod spincore;

use thiserror::Error;

/// Errors produced by the simulation and analysis layers.
#[derive(Debug, Error)]
pub enum EamError {
    #[error("unsupported spin quantum number {0}; supported values are 1/2 and 1")]
    UnsupportedSpin(f64),
    #[error("site index {site} out of range for {count} sites")]
    SiteOutOfRange { site: usize, count: usize },
    #[error("Hilbert-space dimension {dim} exceeds the cap of {cap} (2^{cap_sites} spin-1/2 sites)")]
    DimensionCap {
        dim: usize,
        cap: usize,
        cap_sites: usize,
    },
    #[error("matrix is not Hermitian: max |H - H^dag| = {deviation:.3e} exceeds {tolerance:.1e}")]
    NotHermitian { deviation: f64, tolerance: f64 },
    #[error("matrix is not unitary: max |U^dag U - I| = {deviation:.3e} exceeds {tolerance:.1e}")]
    NotUnitary { deviation: f64, tolerance: f64 },
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("polarization {0} outside [-1, 1]")]
    PolarizationRange(f64),
    #[error("axis vector must have nonzero length")]
    ZeroAxis,
    #[error("spins {i} and {j} coincide (separation below 1e-12)")]
    CoincidentSpins { i: usize, j: usize },
    #[error("environment spin {0} coincides with the probe position")]
    SpinOnProbe(usize),
    #[error("all couplings are zero; T2* is undefined")]
    ZeroCouplings,
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("lattice extent {0} leaves no occupiable sites")]
    EmptyLattice(u32),
    #[error("pulse sequence invalid: {0}")]
    InvalidSequence(String),
    #[error("decoupling cycle does not fit: interval [{t0}, {t1}] has zero duration")]
    CycleFit { t0: f64, t1: f64 },
    #[error("manifold pair is degenerate: |m_a| = |m_b| = {0}")]
    DegenerateManifolds(f64),
    #[error("ideal sensitivity is undefined at zero polarization; use the zero-polarization scheme")]
    ZeroPolarization,
    #[error("decay curve is empty")]
    EmptyCurve,
    #[error("envelope starts at {0:.6} which is already below 1/e; no crossing to extract")]
    EnvelopeBelowThreshold(f64),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EamError>;
