//! Threshold-free and fixed-recall detection metrics. ID is the positive
//! class; a sample is accepted as ID when its score is `>= γ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_io::ScoreSet;

fn check(scores: &[f64], what: &'static str) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::invalid(format!("{what} scores are empty")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    Ok(())
}

/// FPR on OOD at the largest threshold that keeps at least 95% of ID scores.
///
/// `γ` is the `⌈0.95·n_id⌉`-th largest ID score. Returns `(fpr, γ)`.
pub fn fpr_at_95_tpr(id: &[f64], ood: &[f64]) -> Result<(f64, f64)> {
    check(id, "ID")?;
    check(ood, "OOD")?;
    let mut sorted = id.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    // Integer arithmetic avoids 0.95·n rounding up past an exact multiple.
    let k = (95 * sorted.len()).div_ceil(100).max(1);
    let gamma = sorted[k - 1];
    let false_pos = ood.iter().filter(|&&s| s >= gamma).count();
    Ok((false_pos as f64 / ood.len() as f64, gamma))
}

/// Area under the ROC curve via average ranks; ties count one half.
pub fn auroc(id: &[f64], ood: &[f64]) -> Result<f64> {
    check(id, "ID")?;
    check(ood, "OOD")?;
    let mut all: Vec<(f64, bool)> = id
        .iter()
        .map(|&s| (s, true))
        .chain(ood.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum_id = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        // Ranks are 1-based; a tie block shares the mean rank.
        let mean_rank = (i + j) as f64 / 2.0 + 1.0;
        let ids = all[i..=j].iter().filter(|e| e.1).count();
        rank_sum_id += mean_rank * ids as f64;
        i = j + 1;
    }
    let (n_id, n_ood) = (id.len() as f64, ood.len() as f64);
    Ok((rank_sum_id - n_id * (n_id + 1.0) / 2.0) / (n_id * n_ood))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub fpr95: f64,
    pub auroc: f64,
    pub threshold: f64,
    pub n_id: usize,
    pub n_ood: usize,
}

pub fn evaluate_scores(id: &[f64], ood: &[f64]) -> Result<EvalReport> {
    let (fpr95, threshold) = fpr_at_95_tpr(id, ood)?;
    Ok(EvalReport {
        method: String::new(),
        fpr95,
        auroc: auroc(id, ood)?,
        threshold,
        n_id: id.len(),
        n_ood: ood.len(),
    })
}

pub fn evaluate(id: &ScoreSet, ood: &ScoreSet) -> Result<EvalReport> {
    id.validate()?;
    ood.validate()?;
    let mut report = evaluate_scores(&id.scores(), &ood.scores())?;
    report.method = if id.method.is_empty() {
        ood.method.clone()
    } else {
        id.method.clone()
    };
    Ok(report)
}
