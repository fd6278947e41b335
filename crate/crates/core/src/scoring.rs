//! OOD scoring functions. Every score is oriented so that higher means more
//! in-distribution.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature::FeatureMap;
use crate::feature_io::ClassifierHead;
use crate::head_model::{forward, gap_pool, react_clip, score_pipeline, Logits, PooledFeature, Transform};
use crate::spectral::{dominant_triplet, Solver};

/// Default ODIN temperature.
pub const ODIN_DEFAULT_TEMPERATURE: f64 = 1000.0;
/// Default percentile of ID activations used as the ReAct threshold.
pub const REACT_DEFAULT_PERCENTILE: f64 = 90.0;

/// `log Σ exp(yᵢ)` in max-shifted form.
pub fn logsumexp(y: &[f64]) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::invalid("logsumexp of an empty vector"));
    }
    if y.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("logits"));
    }
    let max = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() {
        return Ok(max);
    }
    let sum: f64 = y.iter().map(|v| (v - max).exp()).sum();
    Ok(max + sum.ln())
}

pub fn energy_score(y: &Logits) -> Result<f64> {
    logsumexp(y.as_slice())
}

pub fn softmax(y: &[f64]) -> Result<Vec<f64>> {
    let lse = logsumexp(y)?;
    Ok(y.iter().map(|v| (v - lse).exp()).collect())
}

/// Logits after removing the top-`n` rank-1 components.
pub fn rankfeat_logits(x: &FeatureMap, head: &ClassifierHead, n: usize, solver: &Solver) -> Result<Logits> {
    score_pipeline(x, head, &Transform::RemoveRank { n, solver: *solver })
}

/// Energy of the logits after removing the top-`n` rank-1 components.
pub fn rankfeat_score(x: &FeatureMap, head: &ClassifierHead, n: usize, solver: &Solver) -> Result<f64> {
    energy_score(&rankfeat_logits(x, head, n, solver)?)
}

/// `logsumexp((y_a + y_b) / 2)`, fusing two feature depths in logit space.
pub fn fuse_score(ya: &Logits, yb: &Logits) -> Result<f64> {
    if ya.len() != yb.len() {
        return Err(Error::DimensionMismatch {
            what: "fused logits",
            expected: ya.len(),
            found: yb.len(),
        });
    }
    energy_score(&((ya + yb) * 0.5))
}

/// Maximum softmax probability.
pub fn msp_score(y: &Logits) -> Result<f64> {
    let max = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok((max - energy_score(y)?).exp())
}

/// Maximum softmax probability at temperature `t`, without input perturbation.
pub fn odin_score(y: &Logits, t: f64) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::invalid(format!("ODIN temperature must be positive, got {t}")));
    }
    msp_score(&(y / t))
}

/// Energy of the logits computed from the pooled feature clipped at `tau`.
pub fn react_score(x: &FeatureMap, head: &ClassifierHead, tau: f64) -> Result<f64> {
    energy_score(&score_pipeline(x, head, &Transform::ReactClip { tau })?)
}

/// `p`-th percentile (linear interpolation between order statistics) of all
/// pooled activations, across samples and channels.
pub fn react_threshold(pooled: &[PooledFeature], p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 100.0) {
        return Err(Error::invalid(format!("percentile must be in (0, 100), got {p}")));
    }
    let mut all: Vec<f64> = pooled.iter().flat_map(|z| z.iter().cloned()).collect();
    if all.is_empty() {
        return Err(Error::invalid("ReAct threshold needs at least one activation"));
    }
    if all.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("pooled activations"));
    }
    all.sort_by(f64::total_cmp);
    let rank = p / 100.0 * (all.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    Ok(all[lo] + (all[hi] - all[lo]) * frac)
}

/// L1 norm of the last-layer gradient of `KL(uniform ‖ softmax(Wz + b))`,
/// in closed form `‖softmax − uniform‖₁ · ‖z‖₁`.
pub fn gradnorm_score(x: &FeatureMap, head: &ClassifierHead) -> Result<f64> {
    let z = gap_pool(x);
    let y = forward(&z, head)?;
    gradnorm_from_parts(&z, &y)
}

pub(crate) fn gradnorm_from_parts(z: &PooledFeature, y: &Logits) -> Result<f64> {
    let p = softmax(y.as_slice())?;
    let u = 1.0 / p.len() as f64;
    let dev: f64 = p.iter().map(|pi| (pi - u).abs()).sum();
    Ok(dev * z.iter().map(|v| v.abs()).sum::<f64>())
}

/// Class-conditional means with a shared precision matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MahalanobisStats {
    pub class_means: Vec<DVector<f64>>,
    pub shared_precision: DMatrix<f64>,
}

/// JSON layout of [`MahalanobisStats`]: `{"class_means": [[..]], "shared_precision": [[..]]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MahalanobisStatsFile {
    pub class_means: Vec<Vec<f64>>,
    pub shared_precision: Vec<Vec<f64>>,
}

impl MahalanobisStats {
    pub fn new(class_means: Vec<DVector<f64>>, shared_precision: DMatrix<f64>) -> Result<Self> {
        let stats = Self {
            class_means,
            shared_precision,
        };
        stats.validate()?;
        Ok(stats)
    }

    pub fn dim(&self) -> usize {
        self.shared_precision.nrows()
    }

    fn validate(&self) -> Result<()> {
        let c = self.shared_precision.nrows();
        if c == 0 || self.shared_precision.ncols() != c {
            return Err(Error::invalid("shared precision must be a non-empty square matrix"));
        }
        if self.class_means.is_empty() {
            return Err(Error::invalid("Mahalanobis stats need at least one class mean"));
        }
        for mu in &self.class_means {
            if mu.len() != c {
                return Err(Error::DimensionMismatch {
                    what: "class mean",
                    expected: c,
                    found: mu.len(),
                });
            }
        }
        let finite = self
            .class_means
            .iter()
            .flat_map(|m| m.iter())
            .chain(self.shared_precision.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("Mahalanobis stats"));
        }
        let scale = self.shared_precision.amax().max(1.0);
        let asym = (&self.shared_precision - self.shared_precision.transpose()).amax();
        if asym > 1e-8 * scale {
            return Err(Error::invalid(format!("shared precision is not symmetric (max |P - Pᵀ| = {asym:e})")));
        }
        Ok(())
    }

    pub fn from_file(file: MahalanobisStatsFile) -> Result<Self> {
        let c = file.shared_precision.len();
        if file.shared_precision.iter().any(|row| row.len() != c) {
            return Err(Error::invalid("shared precision rows must all have length C"));
        }
        let precision = DMatrix::from_fn(c, c, |i, j| file.shared_precision[i][j]);
        let means = file.class_means.into_iter().map(DVector::from_vec).collect();
        Self::new(means, precision)
    }

    pub fn to_file(&self) -> MahalanobisStatsFile {
        MahalanobisStatsFile {
            class_means: self.class_means.iter().map(|m| m.iter().cloned().collect()).collect(),
            shared_precision: self
                .shared_precision
                .row_iter()
                .map(|r| r.iter().cloned().collect())
                .collect(),
        }
    }
}

/// `max_i −(z − μᵢ)ᵀ P (z − μᵢ)`.
pub fn mahalanobis_score(z: &PooledFeature, stats: &MahalanobisStats) -> Result<f64> {
    if z.len() != stats.dim() {
        return Err(Error::DimensionMismatch {
            what: "pooled feature for Mahalanobis",
            expected: stats.dim(),
            found: z.len(),
        });
    }
    let mut best = f64::NEG_INFINITY;
    for mu in &stats.class_means {
        let d = z - mu;
        let q = d.dot(&(&stats.shared_precision * &d));
        best = best.max(-q);
    }
    Ok(best)
}

/// Logits from only the dominant rank-1 component `s₁u₁v₁ᵀ`.
pub fn keep_only_rank_1_logits(x: &FeatureMap, head: &ClassifierHead, solver: &Solver) -> Result<Logits> {
    let t = dominant_triplet(x, solver)?;
    let z = &t.u * (t.s * t.v.mean());
    forward(&z, head)
}

pub fn keep_only_rank_1_score(x: &FeatureMap, head: &ClassifierHead, solver: &Solver) -> Result<f64> {
    energy_score(&keep_only_rank_1_logits(x, head, solver)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    In,
    Out,
}

/// In-distribution iff `score ≥ γ`; a score exactly at the threshold counts as in.
pub fn decide(score: f64, gamma: f64) -> Decision {
    if score >= gamma {
        Decision::In
    } else {
        Decision::Out
    }
}

/// A scoring rule with its parameters.
#[derive(Debug, Clone, Copy)]
pub enum Method<'a> {
    RankFeat { n: usize, solver: Solver },
    Energy,
    Msp,
    Odin { temperature: f64 },
    React { tau: f64 },
    GradNorm,
    Mahalanobis(&'a MahalanobisStats),
    KeepRank1 { solver: Solver },
}

impl Method<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Method::RankFeat { .. } => "rankfeat",
            Method::Energy => "energy",
            Method::Msp => "msp",
            Method::Odin { .. } => "odin",
            Method::React { .. } => "react",
            Method::GradNorm => "gradnorm",
            Method::Mahalanobis(_) => "mahalanobis",
            Method::KeepRank1 { .. } => "keep1",
        }
    }
}

/// Score of one sample together with the logits the score was derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub score: f64,
    pub logits: Logits,
}

pub fn score_sample(x: &FeatureMap, head: &ClassifierHead, method: &Method<'_>) -> Result<Scored> {
    let plain = |x: &FeatureMap| -> Result<(PooledFeature, Logits)> {
        let z = gap_pool(x);
        let y = forward(&z, head)?;
        Ok((z, y))
    };
    let (score, logits) = match method {
        Method::RankFeat { n, solver } => {
            let y = rankfeat_logits(x, head, *n, solver)?;
            (energy_score(&y)?, y)
        }
        Method::Energy => {
            let (_, y) = plain(x)?;
            (energy_score(&y)?, y)
        }
        Method::Msp => {
            let (_, y) = plain(x)?;
            (msp_score(&y)?, y)
        }
        Method::Odin { temperature } => {
            let (_, y) = plain(x)?;
            (odin_score(&y, *temperature)?, y)
        }
        Method::React { tau } => {
            if tau.is_nan() {
                return Err(Error::invalid("ReAct threshold must not be NaN"));
            }
            let y = forward(&react_clip(&gap_pool(x), *tau), head)?;
            (energy_score(&y)?, y)
        }
        Method::GradNorm => {
            let (z, y) = plain(x)?;
            (gradnorm_from_parts(&z, &y)?, y)
        }
        Method::Mahalanobis(stats) => {
            let (z, y) = plain(x)?;
            (mahalanobis_score(&z, stats)?, y)
        }
        Method::KeepRank1 { solver } => {
            let y = keep_only_rank_1_logits(x, head, solver)?;
            (energy_score(&y)?, y)
        }
    };
    Ok(Scored { score, logits })
}
