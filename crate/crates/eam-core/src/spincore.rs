//! Dense complex linear algebra over small spin Hilbert spaces.
//!
//! Operators are `nalgebra` dense matrices over `Complex64`. Matrix
//! exponentials of Hermitian generators go through an eigendecomposition so
//! that the result is unitary to machine precision, which the propagation
//! layer relies on. Everything here is pure and allocation-per-call; the
//! Hilbert-space dimensions in play (at most 2^14) make that the right
//! trade.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::{EamError, Result};

/// Dense complex matrix used throughout the crate.
pub type CMatrix = DMatrix<Complex64>;

/// Default cap on explicit Hilbert-space size, in spin-1/2 sites (2^14).
pub const DEFAULT_SITE_CAP: usize = 14;

/// Hermiticity tolerance accepted by [`expm_hermitian`].
pub const HERMITICITY_TOL: f64 = 1e-10;

/// Unitarity tolerance enforced by [`UnitaryMatrix`].
pub const UNITARITY_TOL: f64 = 1e-12;

/// Spin species supported by the toolkit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spin {
    Half,
    One,
}

impl Spin {
    /// Hilbert-space dimension 2s+1.
    pub fn dim(self) -> usize {
        match self {
            Spin::Half => 2,
            Spin::One => 3,
        }
    }

    /// Spin quantum number s.
    pub fn quantum_number(self) -> f64 {
        match self {
            Spin::Half => 0.5,
            Spin::One => 1.0,
        }
    }

    pub fn from_quantum_number(s: f64) -> Result<Self> {
        if (s - 0.5).abs() < 1e-12 {
            Ok(Spin::Half)
        } else if (s - 1.0).abs() < 1e-12 {
            Ok(Spin::One)
        } else {
            Err(EamError::UnsupportedSpin(s))
        }
    }
}

/// The three Cartesian spin operators for one site, `hbar = 1`.
#[derive(Debug, Clone)]
pub struct SpinOperatorSet {
    pub spin: Spin,
    pub sx: CMatrix,
    pub sy: CMatrix,
    pub sz: CMatrix,
}

impl SpinOperatorSet {
    /// Linear combination `n . S` for a real direction vector `n`.
    pub fn along(&self, n: [f64; 3]) -> CMatrix {
        &self.sx * Complex64::new(n[0], 0.0)
            + &self.sy * Complex64::new(n[1], 0.0)
            + &self.sz * Complex64::new(n[2], 0.0)
    }
}

/// Build the spin operators for quantum number `s` (1/2 or 1).
///
/// `sz` is diagonal with eigenvalues s, s-1, ..., -s in descending order;
/// `sx`, `sy` follow from the ladder operators.
pub fn spin_operators(s: f64) -> Result<SpinOperatorSet> {
    let spin = Spin::from_quantum_number(s)?;
    let dim = spin.dim();
    let sq = spin.quantum_number();
    let m = |i: usize| sq - i as f64;

    let mut sz = CMatrix::zeros(dim, dim);
    for i in 0..dim {
        sz[(i, i)] = Complex64::new(m(i), 0.0);
    }
    // raising operator: <m+1| S+ |m> = sqrt(s(s+1) - m(m+1))
    let mut splus = CMatrix::zeros(dim, dim);
    for i in 1..dim {
        let mm = m(i);
        splus[(i - 1, i)] = Complex64::new((sq * (sq + 1.0) - mm * (mm + 1.0)).sqrt(), 0.0);
    }
    let sminus = splus.adjoint();
    let sx = (&splus + &sminus) * Complex64::new(0.5, 0.0);
    let sy = (&splus - &sminus) * Complex64::new(0.0, -0.5);
    Ok(SpinOperatorSet { spin, sx, sy, sz })
}

/// Embed a single-site operator at `site` into an `n`-site tensor product,
/// identity elsewhere. The per-site dimension is taken from `op`.
pub fn embed(op: &CMatrix, site: usize, n: usize) -> Result<CMatrix> {
    embed_with_cap(op, site, n, DEFAULT_SITE_CAP)
}

/// [`embed`] with an explicit dimension cap (in spin-1/2 sites).
pub fn embed_with_cap(op: &CMatrix, site: usize, n: usize, cap_sites: usize) -> Result<CMatrix> {
    if op.nrows() != op.ncols() {
        return Err(EamError::NotSquare {
            rows: op.nrows(),
            cols: op.ncols(),
        });
    }
    if site >= n {
        return Err(EamError::SiteOutOfRange { site, count: n });
    }
    let d = op.nrows();
    let cap = 1usize << cap_sites;
    let dim = d
        .checked_pow(n as u32)
        .filter(|&x| x <= cap)
        .ok_or(EamError::DimensionCap {
            dim: usize::MAX,
            cap,
            cap_sites,
        })?;
    let _ = dim;
    let eye = CMatrix::identity(d, d);
    let mut out = CMatrix::identity(1, 1);
    for k in 0..n {
        out = out.kronecker(if k == site { op } else { &eye });
    }
    Ok(out)
}

/// A matrix validated to be unitary at construction.
#[derive(Debug, Clone)]
pub struct UnitaryMatrix {
    dim: usize,
    matrix: CMatrix,
}

impl UnitaryMatrix {
    /// Wrap a matrix, checking `U^dag U = I` to [`UNITARITY_TOL`] in max norm.
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(EamError::NotSquare {
                rows: matrix.nrows(),
                cols: matrix.ncols(),
            });
        }
        let dim = matrix.nrows();
        let gram = matrix.adjoint() * &matrix;
        let mut dev = 0.0f64;
        for i in 0..dim {
            for j in 0..dim {
                let target = if i == j {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                };
                dev = dev.max((gram[(i, j)] - target).norm());
            }
        }
        if dev > UNITARITY_TOL {
            return Err(EamError::NotUnitary {
                deviation: dev,
                tolerance: UNITARITY_TOL,
            });
        }
        Ok(UnitaryMatrix { dim, matrix })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }
}

/// Max-norm deviation of `h` from its own adjoint.
pub fn hermiticity_deviation(h: &CMatrix) -> f64 {
    let adj = h.adjoint();
    let mut dev = 0.0f64;
    for i in 0..h.nrows() {
        for j in 0..h.ncols() {
            dev = dev.max((h[(i, j)] - adj[(i, j)]).norm());
        }
    }
    dev
}

/// Propagator `exp(-i H t)` of a Hermitian generator, via eigendecomposition.
///
/// Rejects inputs whose Hermiticity deviation exceeds [`HERMITICITY_TOL`].
pub fn expm_hermitian(h: &CMatrix, t: f64) -> Result<UnitaryMatrix> {
    if h.nrows() != h.ncols() {
        return Err(EamError::NotSquare {
            rows: h.nrows(),
            cols: h.ncols(),
        });
    }
    let dev = hermiticity_deviation(h);
    if dev > HERMITICITY_TOL {
        return Err(EamError::NotHermitian {
            deviation: dev,
            tolerance: HERMITICITY_TOL,
        });
    }
    // Symmetrize so the eigensolver sees an exactly Hermitian input.
    let hs = (h + h.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = nalgebra::SymmetricEigen::new(hs);
    let phases = eig
        .eigenvalues
        .map(|w| Complex64::new(0.0, -w * t).exp());
    let u = &eig.eigenvectors * CMatrix::from_diagonal(&phases) * eig.eigenvectors.adjoint();
    UnitaryMatrix::new(u)
}

/// A tensor product of identically polarized spin-1/2 states,
/// `rho = prod_k (1/2 I + P n . I_k)`.
#[derive(Debug, Clone)]
pub struct ProductState {
    pub n: usize,
    pub polarization: f64,
    axis: [f64; 3],
}

impl ProductState {
    /// `axis` is normalized internally; it must be nonzero.
    pub fn new(n: usize, polarization: f64, axis: [f64; 3]) -> Result<Self> {
        if !(-1.0..=1.0).contains(&polarization) || !polarization.is_finite() {
            return Err(EamError::PolarizationRange(polarization));
        }
        let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        if norm < 1e-300 {
            return Err(EamError::ZeroAxis);
        }
        Ok(ProductState {
            n,
            polarization,
            axis: [axis[0] / norm, axis[1] / norm, axis[2] / norm],
        })
    }

    /// Polarization along +z, the common case.
    pub fn polarized_z(n: usize, polarization: f64) -> Result<Self> {
        Self::new(n, polarization, [0.0, 0.0, 1.0])
    }

    pub fn axis(&self) -> [f64; 3] {
        self.axis
    }

    /// Single-site density matrix `1/2 I + P n . I`.
    pub fn site_matrix(&self) -> CMatrix {
        let ops = spin_operators(0.5).expect("spin 1/2 is always supported");
        let mut rho = CMatrix::identity(2, 2) * Complex64::new(0.5, 0.0);
        rho += ops.along(self.axis) * Complex64::new(self.polarization, 0.0);
        rho
    }
}

/// Explicit 2^n density matrix of a [`ProductState`].
pub fn density_matrix(state: &ProductState) -> Result<CMatrix> {
    density_matrix_with_cap(state, DEFAULT_SITE_CAP)
}

/// [`density_matrix`] with an explicit dimension cap (in spin-1/2 sites).
pub fn density_matrix_with_cap(state: &ProductState, cap_sites: usize) -> Result<CMatrix> {
    if state.n > cap_sites {
        return Err(EamError::DimensionCap {
            dim: 1usize
                .checked_shl(state.n as u32)
                .unwrap_or(usize::MAX),
            cap: 1usize << cap_sites,
            cap_sites,
        });
    }
    let site = state.site_matrix();
    let mut rho = CMatrix::identity(1, 1);
    for _ in 0..state.n {
        rho = rho.kronecker(&site);
    }
    Ok(rho)
}

/// Max-norm distance between two matrices of equal shape.
pub fn max_norm_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    let mut dev = 0.0f64;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            dev = dev.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    dev
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
        a * b - b * a
    }

    #[test]
    fn algebra_holds_for_both_spins() {
        for s in [0.5, 1.0] {
            let ops = spin_operators(s).unwrap();
            let i = Complex64::new(0.0, 1.0);
            assert!(max_norm_diff(&commutator(&ops.sx, &ops.sy), &(&ops.sz * i)) < 1e-12);
            assert!(max_norm_diff(&commutator(&ops.sy, &ops.sz), &(&ops.sx * i)) < 1e-12);
            assert!(max_norm_diff(&commutator(&ops.sz, &ops.sx), &(&ops.sy * i)) < 1e-12);
            for m in [&ops.sx, &ops.sy, &ops.sz] {
                assert!(hermiticity_deviation(m) < 1e-12);
            }
        }
    }

    #[test]
    fn sz_is_diagonal_descending() {
        let half = spin_operators(0.5).unwrap();
        assert_abs_diff_eq!(half.sz[(0, 0)].re, 0.5);
        assert_abs_diff_eq!(half.sz[(1, 1)].re, -0.5);
        assert_abs_diff_eq!(half.sx[(0, 1)].re, 0.5);
        assert_abs_diff_eq!(half.sx[(1, 0)].re, 0.5);

        let one = spin_operators(1.0).unwrap();
        for (i, want) in [1.0, 0.0, -1.0].into_iter().enumerate() {
            assert_abs_diff_eq!(one.sz[(i, i)].re, want, epsilon = 1e-15);
        }
    }

    #[test]
    fn unsupported_spin_rejected() {
        assert!(matches!(
            spin_operators(1.5),
            Err(EamError::UnsupportedSpin(_))
        ));
    }

    #[test]
    fn embed_places_operator() {
        let ops = spin_operators(0.5).unwrap();
        let id = CMatrix::identity(2, 2);
        let left = embed(&ops.sz, 0, 2).unwrap();
        assert!(max_norm_diff(&left, &ops.sz.kronecker(&id)) < 1e-15);
        let right = embed(&ops.sz, 1, 2).unwrap();
        assert!(max_norm_diff(&right, &id.kronecker(&ops.sz)) < 1e-15);

        let tr: Complex64 = embed(&ops.sx, 0, 3).unwrap().trace();
        assert!(tr.norm() < 1e-14);
    }

    #[test]
    fn embed_error_paths() {
        let ops = spin_operators(0.5).unwrap();
        assert!(matches!(
            embed(&ops.sz, 2, 2),
            Err(EamError::SiteOutOfRange { .. })
        ));
        assert!(matches!(
            embed(&ops.sz, 0, 40),
            Err(EamError::DimensionCap { .. })
        ));
        assert!(embed_with_cap(&ops.sz, 0, 3, 2).is_err());
    }

    #[test]
    fn expm_zero_generator_is_identity() {
        let h = CMatrix::zeros(3, 3);
        for t in [0.0, 0.7, -13.2] {
            let u = expm_hermitian(&h, t).unwrap();
            assert!(max_norm_diff(u.matrix(), &CMatrix::identity(3, 3)) < 1e-15);
        }
    }

    #[test]
    fn expm_full_rotation_gives_minus_identity() {
        let ops = spin_operators(0.5).unwrap();
        let u = expm_hermitian(&ops.sz, 2.0 * std::f64::consts::PI).unwrap();
        let minus_id = CMatrix::identity(2, 2) * Complex64::new(-1.0, 0.0);
        assert!(max_norm_diff(u.matrix(), &minus_id) < 1e-12);
    }

    fn random_hermitian(dim: usize, seed: u64) -> CMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut h = CMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..=i {
                let c = if i == j {
                    Complex64::new(rng.gen_range(-1.0..1.0), 0.0)
                } else {
                    Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                };
                h[(i, j)] = c;
                h[(j, i)] = c.conj();
            }
        }
        h
    }

    /// Scaling-and-squaring Taylor series, independent of the
    /// eigendecomposition path.
    fn expm_series(h: &CMatrix, t: f64) -> CMatrix {
        let dim = h.nrows();
        let a = h * Complex64::new(0.0, -t);
        let norm = a.iter().map(|c| c.norm()).fold(0.0, f64::max) * dim as f64;
        let squarings = norm.log2().ceil().max(0.0) as u32 + 1;
        let scaled = &a * Complex64::new(1.0 / 2f64.powi(squarings as i32), 0.0);
        let mut term = CMatrix::identity(dim, dim);
        let mut sum = CMatrix::identity(dim, dim);
        for k in 1..200 {
            term = &term * &scaled * Complex64::new(1.0 / k as f64, 0.0);
            sum += &term;
            if term.iter().map(|c| c.norm()).fold(0.0, f64::max) < 1e-14 {
                break;
            }
        }
        let mut out = sum;
        for _ in 0..squarings {
            out = &out * &out;
        }
        out
    }

    #[test]
    fn expm_matches_series_oracle() {
        let h = random_hermitian(4, 0x5eed);
        let t = 0.37;
        let u = expm_hermitian(&h, t).unwrap();
        let series = expm_series(&h, t);
        assert!(max_norm_diff(u.matrix(), &series) < 1e-10);
    }

    #[test]
    fn expm_rejects_non_hermitian() {
        let mut h = random_hermitian(3, 7);
        h[(0, 1)] += Complex64::new(1e-6, 0.0);
        assert!(matches!(
            expm_hermitian(&h, 1.0),
            Err(EamError::NotHermitian { .. })
        ));
    }

    #[test]
    fn density_matrix_examples() {
        // n=1, P=0: maximally mixed
        let rho = density_matrix(&ProductState::polarized_z(1, 0.0).unwrap()).unwrap();
        assert!(max_norm_diff(&rho, &(CMatrix::identity(2, 2) * Complex64::new(0.5, 0.0))) < 1e-15);

        // n=1, P=1, z: pure up
        let rho = density_matrix(&ProductState::polarized_z(1, 1.0).unwrap()).unwrap();
        assert_abs_diff_eq!(rho[(0, 0)].re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rho[(1, 1)].re, 0.0, epsilon = 1e-15);

        // n=2, P=1/2, z: diag(9,3,3,1)/16
        let rho = density_matrix(&ProductState::polarized_z(2, 0.5).unwrap()).unwrap();
        for (i, want) in [9.0, 3.0, 3.0, 1.0].into_iter().enumerate() {
            assert_abs_diff_eq!(rho[(i, i)].re, want / 16.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn density_matrix_cap_enforced() {
        let st = ProductState::polarized_z(20, 0.3).unwrap();
        assert!(matches!(
            density_matrix(&st),
            Err(EamError::DimensionCap { .. })
        ));
    }

    #[test]
    fn product_state_validation() {
        assert!(ProductState::polarized_z(1, 1.2).is_err());
        assert!(ProductState::new(1, 0.5, [0.0, 0.0, 0.0]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn semigroup_property(seed in 0u64..1000, t1 in -2.0f64..2.0, t2 in -2.0f64..2.0) {
            let h = random_hermitian(3, seed);
            let u1 = expm_hermitian(&h, t1).unwrap();
            let u2 = expm_hermitian(&h, t2).unwrap();
            let u12 = expm_hermitian(&h, t1 + t2).unwrap();
            let prod = u1.matrix() * u2.matrix();
            prop_assert!(max_norm_diff(&prod, u12.matrix()) < 1e-11);
        }

        #[test]
        fn generated_unitaries_are_unitary(seed in 0u64..1000, t in -5.0f64..5.0, dim in 2usize..6) {
            let h = random_hermitian(dim, seed);
            // UnitaryMatrix::new would reject any violation beyond 1e-12
            let u = expm_hermitian(&h, t).unwrap();
            prop_assert_eq!(u.dim(), dim);
        }

        #[test]
        fn density_matrix_is_a_state(p in -1.0f64..1.0, nx in -1.0f64..1.0, nz in -1.0f64..1.0) {
            prop_assume!(nx.abs() + nz.abs() > 1e-3);
            let st = ProductState::new(2, p, [nx, 0.3, nz]).unwrap();
            let rho = density_matrix(&st).unwrap();
            let tr: Complex64 = rho.trace();
            prop_assert!((tr.re - 1.0).abs() < 1e-12 && tr.im.abs() < 1e-12);
            let eig = nalgebra::SymmetricEigen::new(rho);
            for w in eig.eigenvalues.iter() {
                prop_assert!(*w >= -1e-12 && *w <= 1.0 + 1e-12);
            }
        }
    }
}
