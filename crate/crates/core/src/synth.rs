//! Synthetic feature maps with planted singular spectra.
//!
//! A spiked spectrum (dominant value scaled by `ρ > 1` over an unchanged tail)
//! stands in for OOD features; `ρ = 1` stands in for ID features.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::feature::FeatureMap;
use crate::feature_io::{ClassifierHead, FeatureSet};

#[derive(Debug, Clone, PartialEq)]
pub enum BaseSpectrum {
    Explicit(Vec<f64>),
    /// `len` values all equal to `scale`.
    Flat { len: usize, scale: f64 },
    /// `sᵢ = scale · i^(−alpha)`, `i = 1..=len`.
    Power { len: usize, alpha: f64, scale: f64 },
}

impl BaseSpectrum {
    pub fn values(&self) -> Vec<f64> {
        match self {
            BaseSpectrum::Explicit(v) => v.clone(),
            BaseSpectrum::Flat { len, scale } => vec![*scale; *len],
            BaseSpectrum::Power { len, alpha, scale } => {
                (1..=*len).map(|i| scale * (i as f64).powf(-alpha)).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSpec {
    pub base: BaseSpectrum,
    /// Multiplier `ρ` applied to the first singular value.
    pub spike: f64,
    /// Standard deviation of additive Gaussian entry noise.
    pub noise_sigma: f64,
    /// Shift all entries by a constant so the minimum entry is 0.
    pub nonneg: bool,
}

impl SpectrumSpec {
    pub fn flat(len: usize, spike: f64, noise_sigma: f64) -> Self {
        Self {
            base: BaseSpectrum::Flat { len, scale: 1.0 },
            spike,
            noise_sigma,
            nonneg: false,
        }
    }

    /// The planted spectrum after spiking, validated to be descending and nonnegative.
    pub fn planted(&self) -> Result<Vec<f64>> {
        if !(self.spike >= 0.0) || !self.spike.is_finite() {
            return Err(Error::invalid(format!("spike must be finite and >= 0, got {}", self.spike)));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::invalid("noise sigma must be finite and >= 0"));
        }
        let mut s = self.base.values();
        if s.is_empty() {
            return Err(Error::invalid("planted spectrum is empty"));
        }
        if s.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("planted spectrum entries must be finite and >= 0"));
        }
        s[0] *= self.spike;
        if s.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::invalid("planted spectrum is not descending after spiking"));
        }
        Ok(s)
    }
}

fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    // Fill column by column so the draw order is fixed.
    let mut m = DMatrix::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = rng.sample(StandardNormal);
        }
    }
    m
}

fn orthonormal_from<R: Rng>(rng: &mut R, dim: usize, k: usize) -> DMatrix<f64> {
    let mut g = gaussian_matrix(rng, dim, k);
    for j in 0..k {
        let mut col = g.column(j).into_owned();
        for _ in 0..2 {
            for i in 0..j {
                let qi = g.column(i);
                let proj = qi.dot(&col);
                col.axpy(-proj, &qi, 1.0);
            }
        }
        let norm = col.norm();
        col /= norm;
        g.set_column(j, &col);
    }
    g
}

/// `dim × k` matrix with orthonormal columns: Gaussian draw, then Gram–Schmidt.
pub fn random_orthonormal(dim: usize, k: usize, seed: u64) -> Result<DMatrix<f64>> {
    if k == 0 || k > dim {
        return Err(Error::invalid(format!("need 1 <= k <= dim, got k={k} dim={dim}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(orthonormal_from(&mut rng, dim, k))
}

/// `X = U diag(s) Vᵀ + noise` with random orthonormal `U`, `V`, then the
/// optional nonnegativity shift. Everything is drawn from one stream seeded by `seed`.
pub fn gen_feature(spec: &SpectrumSpec, channels: usize, spatial: usize, seed: u64) -> Result<FeatureMap> {
    let s = spec.planted()?;
    let n = s.len();
    if channels == 0 || spatial == 0 {
        return Err(Error::invalid("feature dims must be positive"));
    }
    if n > channels.min(spatial) {
        return Err(Error::invalid(format!(
            "planted spectrum has {n} values but min(C, HW) = {}",
            channels.min(spatial)
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = orthonormal_from(&mut rng, channels, n);
    let v = orthonormal_from(&mut rng, spatial, n);
    let scaled = DMatrix::from_fn(channels, n, |i, j| u[(i, j)] * s[j]);
    let mut x = scaled * v.transpose();
    if spec.noise_sigma > 0.0 {
        x += gaussian_matrix(&mut rng, channels, spatial) * spec.noise_sigma;
    }
    if spec.nonneg {
        let min = x.min();
        x.add_scalar_mut(-min);
    }
    FeatureMap::new(x)
}

/// Gaussian head with entries scaled by `1/√C`, rounded to `f32` so the
/// in-memory head equals what is written to disk.
pub fn gen_head(classes: usize, channels: usize, seed: u64) -> Result<ClassifierHead> {
    if classes == 0 || channels == 0 {
        return Err(Error::invalid("head dims must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (channels as f64).sqrt();
    let round = |v: f64| f64::from((v * scale) as f32);
    let w = gaussian_matrix(&mut rng, classes, channels).map(round);
    let b = DVector::from_iterator(classes, (0..classes).map(|_| round(rng.sample(StandardNormal))));
    ClassifierHead::new(w, b)
}

/// Shape and seeds of a synthetic ID/OOD benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    pub count: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub classes: usize,
    pub head_seed: u64,
    /// Sample `i` of the ID set uses seed `id_seed + i`.
    pub id_seed: u64,
    pub ood_seed: u64,
}

#[derive(Debug, Clone)]
pub struct Benchmark {
    pub id: FeatureSet,
    pub ood: FeatureSet,
    pub head: ClassifierHead,
}

/// `count` samples from `spec`, sample `i` seeded with `base_seed + i`.
pub fn gen_set(
    spec: &SpectrumSpec,
    count: usize,
    channels: usize,
    height: usize,
    width: usize,
    base_seed: u64,
) -> Result<FeatureSet> {
    if count == 0 {
        return Err(Error::invalid("sample count must be positive"));
    }
    let mut set = FeatureSet::new(channels, height, width)?;
    for i in 0..count {
        let x = gen_feature(spec, channels, height * width, sample_seed(base_seed, i))?;
        set.push(&x)?;
    }
    annotate(&mut set, spec, base_seed);
    Ok(set)
}

/// Seed of sample `index` in a set generated from `base_seed`.
pub fn sample_seed(base_seed: u64, index: usize) -> u64 {
    base_seed.wrapping_add(index as u64)
}

/// Records the generator parameters in the set's metadata.
pub fn annotate(set: &mut FeatureSet, spec: &SpectrumSpec, base_seed: u64) {
    set.meta.insert("generator".into(), "planted-spectrum".into());
    set.meta.insert("spike".into(), spec.spike.to_string());
    set.meta.insert("noise_sigma".into(), spec.noise_sigma.to_string());
    set.meta.insert("nonneg".into(), spec.nonneg.to_string());
    set.meta.insert("seed".into(), base_seed.to_string());
}

pub fn gen_benchmark(id_spec: &SpectrumSpec, ood_spec: &SpectrumSpec, cfg: &BenchmarkConfig) -> Result<Benchmark> {
    let mut id = gen_set(id_spec, cfg.count, cfg.channels, cfg.height, cfg.width, cfg.id_seed)?;
    id.meta.insert("label".into(), "id".into());
    let mut ood = gen_set(ood_spec, cfg.count, cfg.channels, cfg.height, cfg.width, cfg.ood_seed)?;
    ood.meta.insert("label".into(), "ood".into());
    let head = gen_head(cfg.classes, cfg.channels, cfg.head_seed)?;
    Ok(Benchmark { id, ood, head })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::thin_svd;

    #[test]
    fn orthonormal_columns() {
        let q = random_orthonormal(7, 1, 3).unwrap();
        assert!((q.column(0).norm() - 1.0).abs() < 1e-12);
        let q = random_orthonormal(20, 6, 11).unwrap();
        let gram = q.tr_mul(&q);
        assert!((gram - DMatrix::identity(6, 6)).amax() < 1e-10);
        assert_eq!(q, random_orthonormal(20, 6, 11).unwrap());
        assert!(random_orthonormal(3, 4, 0).is_err());
    }

    #[test]
    fn planted_spectrum_is_recovered_without_noise() {
        let spec = SpectrumSpec {
            base: BaseSpectrum::Power {
                len: 5,
                alpha: 0.7,
                scale: 4.0,
            },
            spike: 2.0,
            noise_sigma: 0.0,
            nonneg: false,
        };
        let x = gen_feature(&spec, 9, 12, 5).unwrap();
        let planted = spec.planted().unwrap();
        let svd = thin_svd(&x);
        for (got, want) in svd.values.iter().zip(&planted) {
            assert!((got - want).abs() < 1e-9 * want);
        }
        assert!(svd.values[5..].iter().all(|v| *v < 1e-9));
    }

    #[test]
    fn spike_ratio_on_flat_base() {
        let x = gen_feature(&SpectrumSpec::flat(6, 3.0, 0.0), 8, 10, 1).unwrap();
        let svd = thin_svd(&x);
        assert!((svd.values[0] / svd.values[1] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn nonneg_shift_sets_min_to_zero() {
        let mut spec = SpectrumSpec::flat(4, 1.0, 0.05);
        spec.nonneg = true;
        let x = gen_feature(&spec, 6, 6, 2).unwrap();
        let min = x.matrix().min();
        assert!((0.0..=1e-12).contains(&min));
    }

    #[test]
    fn invalid_specs() {
        assert!(gen_feature(&SpectrumSpec::flat(7, 1.0, 0.0), 6, 10, 0).is_err());
        assert!(SpectrumSpec::flat(3, 0.5, 0.0).planted().is_err());
        assert!(SpectrumSpec::flat(3, -1.0, 0.0).planted().is_err());
    }

    #[test]
    fn per_sample_seeds_give_distinct_samples() {
        let set = gen_set(&SpectrumSpec::flat(3, 1.0, 0.01), 4, 3, 2, 2, 100).unwrap();
        for i in 0..4 {
            for j in (i + 1)..4 {
                assert_ne!(set.raw(i), set.raw(j));
            }
        }
        let again = gen_set(&SpectrumSpec::flat(3, 1.0, 0.01), 4, 3, 2, 2, 100).unwrap();
        assert_eq!(set, again);
    }

    #[test]
    fn benchmark_needs_samples() {
        let cfg = BenchmarkConfig {
            count: 0,
            channels: 4,
            height: 2,
            width: 2,
            classes: 3,
            head_seed: 0,
            id_seed: 1,
            ood_seed: 2,
        };
        let spec = SpectrumSpec::flat(4, 1.0, 0.0);
        assert!(gen_benchmark(&spec, &spec, &cfg).is_err());
    }
}
