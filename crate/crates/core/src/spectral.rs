//! Singular-value machinery for feature maps: Gram-based exact SVD, coupled
//! power iteration, rank-n removal, covariance spectra and explained variance.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::eigen::{symmetric_eigen, symmetric_eigenvalues};
use crate::error::{Error, Result};
use crate::feature::FeatureMap;

/// A singular value with its left (`C`) and right (`HW`) unit vectors.
///
/// Sign convention: the largest-magnitude entry of `u` is nonnegative, ties
/// going to the lowest index.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularTriplet {
    pub s: f64,
    pub u: DVector<f64>,
    pub v: DVector<f64>,
}

impl SingularTriplet {
    fn canonicalize(mut self) -> Self {
        let mut best = 0;
        for (i, x) in self.u.iter().enumerate() {
            if x.abs() > self.u[best].abs() {
                best = i;
            }
        }
        if self.u.len() > 0 && self.u[best] < 0.0 {
            self.u.neg_mut();
            self.v.neg_mut();
        }
        self
    }

    /// The rank-1 matrix `s · u vᵀ`.
    pub fn outer(&self) -> DMatrix<f64> {
        &self.u * self.v.transpose() * self.s
    }
}

/// Singular values sorted descending, all nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    values: Vec<f64>,
}

impl Spectrum {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("spectrum"));
        }
        if values.iter().any(|&v| v < 0.0) {
            return Err(Error::invalid("singular values must be nonnegative"));
        }
        if values.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::invalid("singular values must be sorted descending"));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn largest(&self) -> Option<f64> {
        self.values.first().copied()
    }

    /// `Σ sᵢ`.
    pub fn nuclear_norm(&self) -> f64 {
        self.values.iter().sum()
    }

    /// `Σ_{i≥2} sᵢ`, summed directly rather than as a difference.
    pub fn tail_sum(&self) -> f64 {
        self.values.iter().skip(1).sum()
    }
}

/// Full thin SVD `X = Σ sᵢ uᵢ vᵢᵀ` over all `N = min(C, HW)` triplets.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub values: Vec<f64>,
    /// `C × N`
    pub left: DMatrix<f64>,
    /// `HW × N`
    pub right: DMatrix<f64>,
}

impl ThinSvd {
    pub fn triplet(&self, i: usize) -> SingularTriplet {
        SingularTriplet {
            s: self.values[i],
            u: self.left.column(i).into_owned(),
            v: self.right.column(i).into_owned(),
        }
    }

    pub fn spectrum(&self) -> Spectrum {
        Spectrum {
            values: self.values.clone(),
        }
    }

    /// `Σ_{i<n} sᵢ uᵢ vᵢᵀ`.
    pub fn leading_sum(&self, n: usize) -> DMatrix<f64> {
        let n = n.min(self.values.len());
        let scaled = DMatrix::from_fn(self.left.nrows(), n, |r, c| self.left[(r, c)] * self.values[c]);
        scaled * self.right.columns(0, n).transpose()
    }
}

/// Exact thin SVD through the eigendecomposition of the smaller Gram matrix.
///
/// The factor on the Gram side comes from the eigenvectors; the other factor
/// is recovered as `Xᵀu / s` (or `Xv / s`) and re-orthonormalised. Directions
/// of numerically zero singular values are completed to an orthonormal set.
pub fn thin_svd(x: &FeatureMap) -> ThinSvd {
    let m = x.matrix();
    let (c, hw) = m.shape();
    let n = c.min(hw);
    let left_side = c <= hw;
    let gram = if left_side { m * m.transpose() } else { m.tr_mul(m) };
    let eig = symmetric_eigen(&gram);
    let basis = eig.vectors.columns(0, n).into_owned();
    let mut other = if left_side { m.tr_mul(&basis) } else { m * &basis };

    let mut values: Vec<f64> = other.column_iter().map(|col| col.norm()).collect();
    let top = values.iter().cloned().fold(0.0, f64::max);
    let zero_tol = top * f64::EPSILON * (c.max(hw) as f64);
    for (j, s) in values.iter_mut().enumerate() {
        if *s <= zero_tol {
            *s = 0.0;
            other.column_mut(j).fill(0.0);
        }
    }
    orthonormalize_columns(&mut other);

    // Singular values from column norms can swap order with the eigenvalues
    // in near-degenerate clusters; restore descending order.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let values: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let basis = DMatrix::from_fn(basis.nrows(), n, |r, k| basis[(r, order[k])]);
    let other = DMatrix::from_fn(other.nrows(), n, |r, k| other[(r, order[k])]);

    let (mut left, mut right) = if left_side { (basis, other) } else { (other, basis) };
    for j in 0..n {
        let t = SingularTriplet {
            s: values[j],
            u: left.column(j).into_owned(),
            v: right.column(j).into_owned(),
        }
        .canonicalize();
        left.set_column(j, &t.u);
        right.set_column(j, &t.v);
    }
    ThinSvd { values, left, right }
}

/// Two-pass modified Gram–Schmidt in column order. Columns that vanish after
/// projection are replaced with the first standard basis vector that stays
/// independent of the previous columns.
fn orthonormalize_columns(q: &mut DMatrix<f64>) {
    let (rows, cols) = q.shape();
    let mut next_basis = 0;
    for j in 0..cols {
        let mut col = q.column(j).into_owned();
        let original = col.norm();
        for _ in 0..2 {
            for i in 0..j {
                let qi = q.column(i);
                let proj = qi.dot(&col);
                col.axpy(-proj, &qi, 1.0);
            }
        }
        let mut norm = col.norm();
        if original == 0.0 || norm <= 1e-8 * original {
            loop {
                assert!(next_basis < rows, "cannot complete an orthonormal basis");
                col = DVector::zeros(rows);
                col[next_basis] = 1.0;
                next_basis += 1;
                for _ in 0..2 {
                    for i in 0..j {
                        let qi = q.column(i);
                        let proj = qi.dot(&col);
                        col.axpy(-proj, &qi, 1.0);
                    }
                }
                norm = col.norm();
                if norm > 0.5 {
                    break;
                }
            }
        }
        col /= norm;
        q.set_column(j, &col);
    }
}

/// Top-`k` singular triplets, descending, sign-canonicalised.
pub fn exact_svd(x: &FeatureMap, k: usize) -> Result<Vec<SingularTriplet>> {
    let n = x.rank_bound();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k must be in 1..={n}, got {k}")));
    }
    let svd = thin_svd(x);
    Ok((0..k).map(|i| svd.triplet(i)).collect())
}

/// All `N` singular values, from the Gram eigenvalues (no vectors).
pub fn singular_values(x: &FeatureMap) -> Spectrum {
    let m = x.matrix();
    let gram = if m.nrows() <= m.ncols() { m * m.transpose() } else { m.tr_mul(m) };
    let values = symmetric_eigenvalues(&gram)
        .into_iter()
        .map(|l| l.max(0.0).sqrt())
        .collect();
    Spectrum { values }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerIterationConfig {
    pub max_iters: usize,
    /// Stop once `|s_k − s_{k−1}| ≤ tol · s_k`; 0 runs all `max_iters`.
    pub tol: f64,
    pub seed: u64,
}

impl Default for PowerIterationConfig {
    fn default() -> Self {
        Self {
            max_iters: 20,
            tol: 0.0,
            seed: 0,
        }
    }
}

impl PowerIterationConfig {
    pub fn with_iters(max_iters: usize) -> Self {
        Self {
            max_iters,
            ..Self::default()
        }
    }
}

const RESEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

fn random_unit(len: usize, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = DVector::from_iterator(len, (0..len).map(|_| StandardNormal.sample(&mut rng)));
    let norm = v.norm();
    v /= norm;
    v
}

/// Dominant singular triplet by the coupled update
/// `u = Xv / ‖Xv‖`, `v = Xᵀu / ‖Xᵀu‖`, with `s = uᵀ X v`.
///
/// The starting right vector is a Gaussian draw from `seed`. One iteration is
/// one left and one right update.
pub fn power_iteration(x: &FeatureMap, config: &PowerIterationConfig) -> Result<SingularTriplet> {
    if config.max_iters == 0 {
        return Err(Error::invalid("power iteration needs max_iters >= 1"));
    }
    if !(config.tol >= 0.0) {
        return Err(Error::invalid("power iteration tolerance must be nonnegative"));
    }
    if x.matrix().iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroInput("feature map"));
    }
    let start = random_unit(x.spatial(), config.seed);
    power_iteration_from(x, start, config)
}

pub(crate) fn power_iteration_from(
    x: &FeatureMap,
    start: DVector<f64>,
    config: &PowerIterationConfig,
) -> Result<SingularTriplet> {
    let m = x.matrix();
    let mut right = start;
    let mut xr = DVector::zeros(m.nrows());
    xr.gemv(1.0, m, &right, 0.0);
    let mut s_prev = xr.norm();
    if s_prev == 0.0 {
        right = random_unit(x.spatial(), config.seed.wrapping_add(RESEED_OFFSET));
        xr.gemv(1.0, m, &right, 0.0);
        s_prev = xr.norm();
        if s_prev == 0.0 {
            return Err(Error::Collapse(
                "starting vector lies in the null space after reseeding".into(),
            ));
        }
    }

    let mut left = DVector::zeros(m.nrows());
    let mut xtl = DVector::zeros(m.ncols());
    for _ in 0..config.max_iters {
        left.copy_from(&xr);
        left /= s_prev;
        xtl.gemv_tr(1.0, m, &left, 0.0);
        let norm = xtl.norm();
        right.copy_from(&xtl);
        right /= norm;
        xr.gemv(1.0, m, &right, 0.0);
        let s = xr.norm();
        let converged = (s - s_prev).abs() <= config.tol * s;
        s_prev = s;
        if converged {
            break;
        }
    }
    let left = &xr / s_prev;
    let s = left.dot(&xr);
    Ok(SingularTriplet { s, u: left, v: right }.canonicalize())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Solver {
    Exact,
    PowerIteration(PowerIterationConfig),
}

impl Default for Solver {
    fn default() -> Self {
        Solver::Exact
    }
}

/// Dominant triplet with the chosen solver.
pub fn dominant_triplet(x: &FeatureMap, solver: &Solver) -> Result<SingularTriplet> {
    match solver {
        Solver::Exact => {
            if x.matrix().iter().all(|&v| v == 0.0) {
                return Err(Error::ZeroInput("feature map"));
            }
            Ok(thin_svd(x).triplet(0))
        }
        Solver::PowerIteration(cfg) => power_iteration(x, cfg),
    }
}

/// `X − Σ_{i≤n} sᵢ uᵢ vᵢᵀ`. Power iteration is only allowed for `n = 1`.
///
/// A zero feature map is returned unchanged: it has no rank to remove.
pub fn remove_rank_n(x: &FeatureMap, n: usize, solver: &Solver) -> Result<FeatureMap> {
    let bound = x.rank_bound();
    if n == 0 || n > bound {
        return Err(Error::invalid(format!("rank n must be in 1..={bound}, got {n}")));
    }
    if x.matrix().iter().all(|&v| v == 0.0) {
        return Ok(x.clone());
    }
    let removed = match solver {
        Solver::Exact => thin_svd(x).leading_sum(n),
        Solver::PowerIteration(cfg) => {
            if n != 1 {
                return Err(Error::invalid("power iteration only supports rank-1 removal"));
            }
            power_iteration(x, cfg)?.outer()
        }
    };
    FeatureMap::new(x.matrix() - removed)
}

/// `X − s₁u₁v₁ᵀ` for an already computed triplet.
pub fn subtract_triplet(x: &FeatureMap, t: &SingularTriplet) -> Result<FeatureMap> {
    FeatureMap::new(x.matrix() - t.outer())
}

/// Eigenvalues of `(1/n) X Xᵀ` with `n = HW`, descending, `C` of them.
///
/// With `standardize`, entries are first shifted and scaled to zero mean and
/// unit (population) variance over the whole matrix.
pub fn cov_eigenvalues(x: &FeatureMap, standardize: bool) -> Result<Vec<f64>> {
    let (c, hw) = x.matrix().shape();
    let m = if standardize {
        let total = (c * hw) as f64;
        let mean = x.matrix().sum() / total;
        let var = x.matrix().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / total;
        if !(var > 0.0) {
            return Err(Error::ZeroInput("feature variance"));
        }
        let sd = var.sqrt();
        x.matrix().map(|v| (v - mean) / sd)
    } else {
        x.matrix().clone()
    };
    let scale = 1.0 / hw as f64;
    let gram = if c <= hw { &m * m.transpose() } else { m.tr_mul(&m) };
    let mut eigs: Vec<f64> = symmetric_eigenvalues(&gram)
        .into_iter()
        .map(|l| (l * scale).max(0.0))
        .collect();
    eigs.resize(c, 0.0);
    Ok(eigs)
}

/// `Σ_{i≤k} sᵢ² / Σ_j sⱼ²`.
pub fn explained_variance(spectrum: &Spectrum, k: usize) -> Result<f64> {
    let n = spectrum.len();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k must be in 1..={n}, got {k}")));
    }
    let total: f64 = spectrum.values.iter().map(|s| s * s).sum();
    if total == 0.0 {
        return Err(Error::ZeroInput("spectrum"));
    }
    if k == n {
        return Ok(1.0);
    }
    let head: f64 = spectrum.values[..k].iter().map(|s| s * s).sum();
    Ok(head / total)
}
