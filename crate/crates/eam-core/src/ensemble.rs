//! Spatial configurations of environment spins and their dipolar couplings.
//!
//! The probe sits at the origin. Environment spins are placed either
//! uniformly in a unit cube around the probe or on the sites of a diamond
//! lattice (conventional cell edge 1) with independent site occupation.
//! Couplings follow the secular dipolar form: `lambda_k` between probe and
//! spin k, and `kappa_jk` within the bath, the latter entering the
//! Hamiltonian as `sum_{j<k} kappa_jk (3 Iz_j Iz_k - I_j . I_k)`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{EamError, Result};

/// Minimum allowed probe-spin separation when sampling positions.
pub const DEFAULT_EXCLUSION_RADIUS: f64 = 0.02;

/// Separations below this count as coincident and are rejected.
const COINCIDENCE_EPS: f64 = 1e-12;

/// A probe plus environment-spin configuration with precomputed couplings.
#[derive(Debug, Clone)]
pub struct SpinEnsemble {
    /// Environment spin positions, probe at the origin.
    pub positions: Vec<[f64; 3]>,
    /// Probe-bath couplings (angular frequency).
    pub lambda: Vec<f64>,
    /// Intra-bath couplings, symmetric with zero diagonal.
    pub kappa: DMatrix<f64>,
    /// Probe gyromagnetic ratio.
    pub gamma_s: f64,
    /// Environment gyromagnetic ratio.
    pub gamma_i: f64,
    /// Initial bath polarization along +z, in [-1, 1].
    pub polarization: f64,
}

impl SpinEnsemble {
    /// Build an ensemble from positions; couplings are derived.
    pub fn new(
        positions: Vec<[f64; 3]>,
        gamma_s: f64,
        gamma_i: f64,
        polarization: f64,
    ) -> Result<Self> {
        if !(-1.0..=1.0).contains(&polarization) || !polarization.is_finite() {
            return Err(EamError::PolarizationRange(polarization));
        }
        let (lambda, kappa) = dipolar_couplings(&positions, gamma_s, gamma_i)?;
        Ok(SpinEnsemble {
            positions,
            lambda,
            kappa,
            gamma_s,
            gamma_i,
            polarization,
        })
    }

    /// Build directly from couplings, for synthetic configurations.
    pub fn from_couplings(
        lambda: Vec<f64>,
        kappa: DMatrix<f64>,
        gamma_s: f64,
        gamma_i: f64,
        polarization: f64,
    ) -> Result<Self> {
        let n = lambda.len();
        if kappa.nrows() != n || kappa.ncols() != n {
            return Err(EamError::InvalidParameter {
                name: "kappa",
                reason: format!("expected {n}x{n}, got {}x{}", kappa.nrows(), kappa.ncols()),
            });
        }
        if !(-1.0..=1.0).contains(&polarization) || !polarization.is_finite() {
            return Err(EamError::PolarizationRange(polarization));
        }
        // positions are unknown here; store placeholders on the z axis far apart
        let positions = (0..n).map(|k| [0.0, 0.0, 1.0 + k as f64]).collect();
        Ok(SpinEnsemble {
            positions,
            lambda,
            kappa,
            gamma_s,
            gamma_i,
            polarization,
        })
    }

    /// Single synthetic spin with coupling `lambda` and no intra-bath terms.
    pub fn single(lambda: f64, gamma_s: f64, gamma_i: f64, polarization: f64) -> Result<Self> {
        Self::from_couplings(
            vec![lambda],
            DMatrix::zeros(1, 1),
            gamma_s,
            gamma_i,
            polarization,
        )
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    /// Largest |lambda_k|, used to normalize interrogation times.
    pub fn lambda_max(&self) -> f64 {
        self.lambda.iter().fold(0.0, |m, l| m.max(l.abs()))
    }

    /// Copy with all intra-bath couplings zeroed.
    pub fn without_intra_bath(&self) -> Self {
        let mut out = self.clone();
        out.kappa.fill(0.0);
        out
    }
}

/// Sample `n` positions uniformly in the unit cube centered on the probe.
///
/// Positions closer than [`DEFAULT_EXCLUSION_RADIUS`] to the probe are
/// resampled. Deterministic for a fixed seed.
pub fn sample_cube(n: usize, seed: u64) -> Vec<[f64; 3]> {
    sample_cube_with_exclusion(n, seed, DEFAULT_EXCLUSION_RADIUS)
}

/// [`sample_cube`] with an explicit exclusion radius.
pub fn sample_cube_with_exclusion(n: usize, seed: u64, exclusion: f64) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let p = [
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
        ];
        let r2 = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
        if r2 > exclusion * exclusion {
            out.push(p);
        }
    }
    out
}

/// All diamond-lattice sites for `extent` conventional cells per axis,
/// translated so the probe occupies the origin site. The origin site itself
/// is excluded from the returned list.
pub fn diamond_sites(extent: u32) -> Vec<[f64; 3]> {
    const FCC: [[f64; 3]; 4] = [
        [0.0, 0.0, 0.0],
        [0.5, 0.5, 0.0],
        [0.5, 0.0, 0.5],
        [0.0, 0.5, 0.5],
    ];
    let e = extent as i64;
    let c = (e / 2) as f64;
    let mut sites = Vec::new();
    for i in 0..e {
        for j in 0..e {
            for k in 0..e {
                for fcc in &FCC {
                    for basis in [0.0, 0.25] {
                        let site = [
                            i as f64 + fcc[0] + basis - c,
                            j as f64 + fcc[1] + basis - c,
                            k as f64 + fcc[2] + basis - c,
                        ];
                        if site[0].abs() < 1e-9 && site[1].abs() < 1e-9 && site[2].abs() < 1e-9 {
                            continue; // probe site
                        }
                        sites.push(site);
                    }
                }
            }
        }
    }
    sites
}

/// Occupy diamond-lattice sites independently with probability `density`.
///
/// The probe occupies the origin site, which is never occupied by an
/// environment spin. Deterministic for a fixed seed.
pub fn sample_lattice(density: f64, extent: u32, seed: u64) -> Result<Vec<[f64; 3]>> {
    if !(density > 0.0 && density <= 1.0) {
        return Err(EamError::InvalidParameter {
            name: "density",
            reason: format!("{density} not in (0, 1]"),
        });
    }
    let sites = diamond_sites(extent);
    if sites.is_empty() {
        return Err(EamError::EmptyLattice(extent));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sites
        .into_iter()
        .filter(|_| rng.gen::<f64>() < density)
        .collect())
}

/// Secular dipolar couplings for a configuration.
///
/// `lambda_k = gamma_s gamma_i (1 - 3 cos^2 theta_k) / r_k^3` with `theta_k`
/// the polar angle of the probe-to-spin vector from the z axis, and
/// `kappa_jk = (gamma_i^2 / 2)(1 - 3 cos^2 theta_jk) / r_jk^3`.
pub fn dipolar_couplings(
    positions: &[[f64; 3]],
    gamma_s: f64,
    gamma_i: f64,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = positions.len();
    let mut lambda = Vec::with_capacity(n);
    for (k, p) in positions.iter().enumerate() {
        let r2 = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
        let r = r2.sqrt();
        if r < COINCIDENCE_EPS {
            return Err(EamError::SpinOnProbe(k));
        }
        let cos2 = (p[2] / r).powi(2);
        lambda.push(gamma_s * gamma_i * (1.0 - 3.0 * cos2) / (r * r2));
    }
    let mut kappa = DMatrix::zeros(n, n);
    for j in 0..n {
        for k in (j + 1)..n {
            let d = [
                positions[k][0] - positions[j][0],
                positions[k][1] - positions[j][1],
                positions[k][2] - positions[j][2],
            ];
            let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
            let r = r2.sqrt();
            if r < COINCIDENCE_EPS {
                return Err(EamError::CoincidentSpins { i: j, j: k });
            }
            let cos2 = (d[2] / r).powi(2);
            let v = 0.5 * gamma_i * gamma_i * (1.0 - 3.0 * cos2) / (r * r2);
            kappa[(j, k)] = v;
            kappa[(k, j)] = v;
        }
    }
    Ok((lambda, kappa))
}

/// Disjoint grouping of environment spins.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterPartition {
    clusters: Vec<Vec<usize>>,
    gmax: usize,
}

impl ClusterPartition {
    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.clusters
    }

    pub fn gmax(&self) -> usize {
        self.gmax
    }

    /// One cluster containing every spin, the exact (no-approximation) case.
    pub fn single_cluster(n: usize) -> Self {
        ClusterPartition {
            clusters: vec![(0..n).collect()],
            gmax: n.max(1),
        }
    }
}

/// Greedy agglomeration: visit pairs by descending |kappa|, merging groups
/// whenever the merged size stays within `gmax`. Ties break by ascending
/// (j, k). Remaining spins stand as singletons.
pub fn partition_clusters(kappa: &DMatrix<f64>, gmax: usize) -> Result<ClusterPartition> {
    if gmax < 1 {
        return Err(EamError::InvalidParameter {
            name: "gmax",
            reason: "must be at least 1".into(),
        });
    }
    let n = kappa.nrows();
    let mut pairs = Vec::with_capacity(n * (n.saturating_sub(1)) / 2);
    for j in 0..n {
        for k in (j + 1)..n {
            pairs.push((kappa[(j, k)].abs(), j, k));
        }
    }
    pairs.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });

    // union-find with per-root size
    let mut parent: Vec<usize> = (0..n).collect();
    let mut size = vec![1usize; n];
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (_, j, k) in pairs {
        let rj = find(&mut parent, j);
        let rk = find(&mut parent, k);
        if rj != rk && size[rj] + size[rk] <= gmax {
            let (big, small) = if rj < rk { (rj, rk) } else { (rk, rj) };
            parent[small] = big;
            size[big] += size[small];
        }
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n];
    for x in 0..n {
        let r = find(&mut parent, x);
        groups[r].push(x);
    }
    let clusters: Vec<Vec<usize>> = groups.into_iter().filter(|g| !g.is_empty()).collect();
    Ok(ClusterPartition { clusters, gmax })
}

/// Count of strongly coupled spins: those with `|lambda_k| tau >= 2 pi`
/// (boundary inclusive).
pub fn count_strong(lambda: &[f64], tau: f64) -> usize {
    lambda
        .iter()
        .filter(|l| (l.abs() * tau) >= 2.0 * std::f64::consts::PI)
        .count()
}

/// Free-induction dephasing time `1 / sqrt(sum lambda_k^2)`.
pub fn t2_star(lambda: &[f64]) -> Result<f64> {
    let m2: f64 = lambda.iter().map(|l| l * l).sum();
    if m2 <= 0.0 {
        return Err(EamError::ZeroCouplings);
    }
    Ok(1.0 / m2.sqrt())
}

/// Environment quality factor `Q = P sqrt(sum lambda_k^2) T2 = P T2 / T2*`.
pub fn quality_q(polarization: f64, lambda: &[f64], t2: f64) -> f64 {
    let m2: f64 = lambda.iter().map(|l| l * l).sum();
    polarization * m2.sqrt() * t2
}

/// Polarization-time estimate `n_sc * T2*`.
pub fn t_pol_estimate(n_sc: usize, t2_star: f64) -> f64 {
    n_sc as f64 * t2_star
}
