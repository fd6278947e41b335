//! Marchenko–Pastur density, moment fitting, and the KL divergence between an
//! empirical covariance spectrum and its fitted MP law.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::feature_io::FeatureSet;
use crate::spectral::{cov_eigenvalues, remove_rank_n, Solver};
use crate::FeatureMap;

pub const DEFAULT_BINS: usize = 50;
/// Added to every histogram bin on both sides before renormalising.
pub const KL_SMOOTHING: f64 = 1e-10;

/// MP law for `Y = (1/n) X Xᵀ` with `X` of shape `t × n`.
///
/// Edges are `σ²(1 ± √(n/t))²` and the density carries the `t/n` prefactor,
/// so it integrates to `min(1, t/n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MpFit {
    pub sigma2: f64,
    pub t: usize,
    pub n: usize,
    pub lambda_minus: f64,
    pub lambda_plus: f64,
}

impl MpFit {
    pub fn new(sigma2: f64, t: usize, n: usize) -> Result<Self> {
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::invalid(format!("MP variance must be positive, got {sigma2}")));
        }
        if t == 0 || n == 0 {
            return Err(Error::invalid("MP dimensions t and n must be positive"));
        }
        let ratio = (n as f64 / t as f64).sqrt();
        Ok(Self {
            sigma2,
            t,
            n,
            lambda_minus: sigma2 * (1.0 - ratio).powi(2),
            lambda_plus: sigma2 * (1.0 + ratio).powi(2),
        })
    }

    fn prefactor(&self) -> f64 {
        self.t as f64 / self.n as f64 / (2.0 * PI * self.sigma2)
    }

    /// `∫ ρ` over `[a, b]`, evaluated in the angle variable
    /// `λ = c + h·cos θ`, which removes the square-root edge singularities.
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        let lo = a.max(self.lambda_minus);
        let hi = b.min(self.lambda_plus);
        if !(hi > lo) {
            return 0.0;
        }
        let c = 0.5 * (self.lambda_plus + self.lambda_minus);
        let h = 0.5 * (self.lambda_plus - self.lambda_minus);
        let theta = |x: f64| ((x - c) / h).clamp(-1.0, 1.0).acos();
        let (t0, t1) = (theta(hi), theta(lo));
        // ρ dλ = K h² sin²θ / (c + h cos θ) dθ
        let k = self.prefactor();
        let f = |th: f64| {
            let s = th.sin();
            k * h * h * s * s / (c + h * th.cos())
        };
        // The integrand has a knee of width ~√(λ₋/h) near θ = π when λ₋ is
        // small but positive, so refine until two levels agree.
        let mut panels = 8;
        let mut prev = gauss_legendre(&f, t0, t1, panels);
        while panels < 4096 {
            panels *= 2;
            let next = gauss_legendre(&f, t0, t1, panels);
            if (next - prev).abs() <= 1e-14 * next.abs().max(f64::MIN_POSITIVE) {
                return next;
            }
            prev = next;
        }
        prev
    }
}

const GL_NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329_0,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362_0,
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// Composite 8-point Gauss–Legendre over `panels` equal sub-intervals.
fn gauss_legendre(f: &dyn Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let width = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * width;
        let half = 0.5 * width;
        for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS.iter()) {
            total += w * f(mid + half * x);
        }
    }
    total * 0.5 * width
}

/// `ρ(λ) = (t/n)·√((λ₊−λ)(λ−λ₋)) / (2πλσ²)` inside the support, 0 elsewhere.
pub fn mp_density(lambda: f64, fit: &MpFit) -> f64 {
    if !(lambda > fit.lambda_minus && lambda < fit.lambda_plus) || lambda <= 0.0 {
        return 0.0;
    }
    fit.prefactor() * ((fit.lambda_plus - lambda) * (lambda - fit.lambda_minus)).sqrt() / lambda
}

/// Neumaier-compensated sum.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Fits `σ²` by matching the mean eigenvalue.
pub fn fit_mp(eigs: &[f64], t: usize, n: usize) -> Result<MpFit> {
    if eigs.is_empty() {
        return Err(Error::invalid("MP fit needs at least one eigenvalue"));
    }
    if eigs.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::invalid("eigenvalues must be finite and nonnegative"));
    }
    let mean = compensated_sum(eigs.iter().copied()) / eigs.len() as f64;
    MpFit::new(mean, t, n)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralHistogram {
    pub bin_edges: Vec<f64>,
    pub probabilities: Vec<f64>,
}

impl SpectralHistogram {
    /// Equal-width histogram of `values` on `[lo, hi]`; values at `hi` land in
    /// the last bin, values outside the range are dropped.
    pub fn from_values(values: &[f64], lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if bins == 0 || !(hi > lo) {
            return Err(Error::invalid("histogram needs bins >= 1 and hi > lo"));
        }
        let width = (hi - lo) / bins as f64;
        let bin_edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
        let mut counts = vec![0usize; bins];
        let mut total = 0usize;
        for &v in values {
            if v < lo || v > hi {
                continue;
            }
            let idx = (((v - lo) / width) as usize).min(bins - 1);
            counts[idx] += 1;
            total += 1;
        }
        if total == 0 {
            return Err(Error::invalid("no values fall inside the histogram range"));
        }
        let probabilities = counts.iter().map(|&c| c as f64 / total as f64).collect();
        Ok(Self {
            bin_edges,
            probabilities,
        })
    }
}

/// `Σ p log(p/q)` after adding `KL_SMOOTHING` to every bin of both sides and
/// renormalising.
pub fn smoothed_kl(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() || p.is_empty() {
        return Err(Error::invalid("KL needs two non-empty histograms of equal length"));
    }
    let smooth = |xs: &[f64]| -> Vec<f64> {
        let total = compensated_sum(xs.iter().map(|x| x + KL_SMOOTHING));
        xs.iter().map(|x| (x + KL_SMOOTHING) / total).collect()
    };
    let (p, q) = (smooth(p), smooth(q));
    let kl = compensated_sum(p.iter().zip(&q).map(|(pi, qi)| pi * (pi / qi).ln()));
    Ok(kl.max(0.0))
}

/// KL divergence from the eigenvalue histogram to the fitted MP law, over
/// `bins` equal-width bins on `[0, max(λ₊, max eig)]`.
pub fn kl_to_mp(eigs: &[f64], fit: &MpFit, bins: usize) -> Result<f64> {
    if eigs.is_empty() {
        return Err(Error::invalid("KL needs at least one eigenvalue"));
    }
    if bins < 2 {
        return Err(Error::invalid(format!("KL needs at least 2 bins, got {bins}")));
    }
    let max_eig = eigs.iter().cloned().fold(0.0, f64::max);
    let hi = fit.lambda_plus.max(max_eig);
    let hist = SpectralHistogram::from_values(eigs, 0.0, hi, bins)?;
    let q: Vec<f64> = hist
        .bin_edges
        .windows(2)
        .map(|w| fit.mass(w[0], w[1]))
        .collect();
    smoothed_kl(&hist.probabilities, &q)
}

/// KL-to-MP of one feature map, optionally after exact rank-1 removal.
/// Covariance is taken over channels (`t = C`, `n = HW`) on standardised entries.
pub fn sample_kl(x: &FeatureMap, remove_rank_1: bool, bins: usize) -> Result<f64> {
    let x = if remove_rank_1 {
        remove_rank_n(x, 1, &Solver::Exact)?
    } else {
        x.clone()
    };
    let eigs = cov_eigenvalues(&x, true)?;
    let fit = fit_mp(&eigs, x.channels(), x.spatial())?;
    kl_to_mp(&eigs, &fit, bins)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MpGapReport {
    pub remove_rank: usize,
    pub bins: usize,
    pub per_sample: Vec<f64>,
    pub mean_kl: f64,
}

/// Mean KL-to-MP over a feature set, with `remove_rank ∈ {0, 1}`.
pub fn mp_gap_experiment(features: &FeatureSet, remove_rank: usize, bins: usize) -> Result<MpGapReport> {
    if remove_rank > 1 {
        return Err(Error::invalid(format!("remove_rank must be 0 or 1, got {remove_rank}")));
    }
    if features.is_empty() {
        return Err(Error::invalid("feature set is empty"));
    }
    let per_sample = features
        .iter()
        .map(|x| sample_kl(&x, remove_rank == 1, bins))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize_gap(per_sample, remove_rank, bins))
}

/// Builds the report from per-sample KLs computed elsewhere (e.g. in parallel).
pub fn summarize_gap(per_sample: Vec<f64>, remove_rank: usize, bins: usize) -> MpGapReport {
    let mean_kl = compensated_sum(per_sample.iter().copied()) / per_sample.len().max(1) as f64;
    MpGapReport {
        remove_rank,
        bins,
        per_sample,
        mean_kl,
    }
}
