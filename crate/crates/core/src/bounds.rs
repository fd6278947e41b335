//! Upper bounds on the RankFeat and ReAct scores in terms of the feature
//! spectrum and the head.
//!
//! Two RankFeat bounds are reported side by side:
//!
//! * `nominal_bound`: `(Σᵢ sᵢ − s₁)·‖W‖∞ / HW + ‖b‖∞ + log Q`, with `‖W‖∞` the
//!   induced infinity norm (max absolute row sum).
//! * `safe_bound`: `Σ_{i≥2} sᵢ · maxrow₂(W) / √HW + ‖b‖∞ + log Q`, which follows
//!   from `|vᵢᵀm| ≤ 1/√HW` and `‖W uᵢ‖∞ ≤ maxrow₂(W)` and always holds for the
//!   exact rank-1 removal.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::feature_io::ClassifierHead;
use crate::head_model::Logits;
use crate::spectral::Spectrum;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundComponents {
    /// Spectral term of the nominal bound.
    pub spectral_term: f64,
    /// Spectral term of the provable bound.
    pub safe_spectral_term: Option<f64>,
    /// `‖b‖∞`
    pub bias_term: f64,
    /// `log Q`
    pub log_q_term: f64,
    /// Amount subtracted from the unperturbed nominal bound by the
    /// transform (`s₁‖W‖∞/HW` for RankFeat, the clipped term for ReAct).
    pub removed_term: f64,
    /// Nominal bound of the untransformed feature, `Σ sᵢ‖W‖∞/HW + ‖b‖∞ + log Q`.
    pub unperturbed_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    /// Score the bound is compared against, when attached.
    pub score: Option<f64>,
    pub nominal_bound: f64,
    /// Provable bound; `None` where no guarantee is claimed.
    pub safe_bound: Option<f64>,
    /// `safe_bound − score`.
    pub slack: Option<f64>,
    pub components: BoundComponents,
}

impl BoundReport {
    pub fn with_score(mut self, score: f64) -> Self {
        self.score = Some(score);
        self.slack = self.safe_bound.map(|b| b - score);
        self
    }
}

/// Induced infinity norm: max absolute row sum.
pub fn induced_inf_norm(head: &ClassifierHead) -> f64 {
    head.weight
        .row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Largest Euclidean norm among the rows of `W`.
pub fn max_row_l2(head: &ClassifierHead) -> f64 {
    head.weight.row_iter().map(|r| r.norm()).fold(0.0, f64::max)
}

fn common_terms(spectrum: &Spectrum, head: &ClassifierHead, hw: usize) -> Result<(f64, f64, f64)> {
    if spectrum.is_empty() {
        return Err(Error::invalid("bound needs a non-empty spectrum"));
    }
    if hw == 0 {
        return Err(Error::invalid("HW must be positive"));
    }
    head.validate()?;
    let bias = head.bias.amax();
    let log_q = (head.num_classes() as f64).ln();
    Ok((induced_inf_norm(head), bias, log_q))
}

pub fn rankfeat_bound(spectrum: &Spectrum, head: &ClassifierHead, hw: usize) -> Result<BoundReport> {
    let (w_inf, bias, log_q) = common_terms(spectrum, head, hw)?;
    let hw_f = hw as f64;
    let tail = spectrum.tail_sum();
    let s1 = spectrum.largest().unwrap_or(0.0);
    let spectral_term = tail * w_inf / hw_f;
    let safe_spectral_term = tail * max_row_l2(head) / hw_f.sqrt();
    let removed_term = s1 * w_inf / hw_f;
    let unperturbed_bound = spectrum.nuclear_norm() * w_inf / hw_f + bias + log_q;
    Ok(BoundReport {
        score: None,
        nominal_bound: spectral_term + bias + log_q,
        safe_bound: Some(safe_spectral_term + bias + log_q),
        slack: None,
        components: BoundComponents {
            spectral_term,
            safe_spectral_term: Some(safe_spectral_term),
            bias_term: bias,
            log_q_term: log_q,
            removed_term,
            unperturbed_bound,
        },
    })
}

/// Nominal ReAct bound
/// `Σ sᵢ‖W‖∞/HW − max(s₁/√(C·HW) − τ, 0)·‖W‖∞/HW + ‖b‖∞ + log Q`.
/// Diagnostic only: no provable variant is reported.
pub fn react_bound(
    spectrum: &Spectrum,
    head: &ClassifierHead,
    tau: f64,
    channels: usize,
    hw: usize,
) -> Result<BoundReport> {
    let (w_inf, bias, log_q) = common_terms(spectrum, head, hw)?;
    if channels == 0 {
        return Err(Error::invalid("C must be positive"));
    }
    if tau.is_nan() {
        return Err(Error::invalid("ReAct threshold must not be NaN"));
    }
    let hw_f = hw as f64;
    let s1 = spectrum.largest().unwrap_or(0.0);
    let spectral_term = spectrum.nuclear_norm() * w_inf / hw_f;
    let clipped = (s1 / ((channels * hw) as f64).sqrt() - tau).max(0.0);
    let removed_term = clipped * w_inf / hw_f;
    Ok(BoundReport {
        score: None,
        nominal_bound: spectral_term - removed_term + bias + log_q,
        safe_bound: None,
        slack: None,
        components: BoundComponents {
            spectral_term,
            safe_spectral_term: None,
            bias_term: bias,
            log_q_term: log_q,
            removed_term,
            unperturbed_bound: spectral_term + bias + log_q,
        },
    })
}

/// `(max y, max y + log Q)`, which bracket `logsumexp(y)`. The upper edge is
/// attained exactly when all logits are equal.
pub fn lse_tight_bounds(y: &Logits) -> Result<(f64, f64)> {
    if y.is_empty() {
        return Err(Error::invalid("logits must be non-empty"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logits"));
    }
    let max = y.max();
    Ok((max, max + (y.len() as f64).ln()))
}
