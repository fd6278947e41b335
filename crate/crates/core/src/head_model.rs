//! Global-average pooling and the last linear layer.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::feature::FeatureMap;
use crate::feature_io::ClassifierHead;
use crate::spectral::{remove_rank_n, Solver};

/// Pooled feature `z = X m` with `m = (1/HW)·1`.
pub type PooledFeature = DVector<f64>;

/// Output logits `y = W z + b`.
pub type Logits = DVector<f64>;

/// Per-channel spatial mean.
pub fn gap_pool(x: &FeatureMap) -> PooledFeature {
    let m = x.matrix();
    let inv = 1.0 / m.ncols() as f64;
    DVector::from_iterator(m.nrows(), m.row_iter().map(|row| row.sum() * inv))
}

pub fn forward(z: &PooledFeature, head: &ClassifierHead) -> Result<Logits> {
    if head.channels() != z.len() {
        return Err(Error::DimensionMismatch {
            what: "head input channels",
            expected: head.channels(),
            found: z.len(),
        });
    }
    Ok(&head.weight * z + &head.bias)
}

/// Feature transform applied before the head.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Transform {
    #[default]
    None,
    /// Subtract the top-`n` rank-1 components of `X` before pooling.
    RemoveRank { n: usize, solver: Solver },
    /// Clip the pooled vector elementwise at `tau`.
    ReactClip { tau: f64 },
}

/// `min(z, τ)` elementwise.
pub fn react_clip(z: &PooledFeature, tau: f64) -> PooledFeature {
    z.map(|v| v.min(tau))
}

/// Transform, pool, then apply the head.
pub fn score_pipeline(x: &FeatureMap, head: &ClassifierHead, transform: &Transform) -> Result<Logits> {
    let z = match transform {
        Transform::None => gap_pool(x),
        Transform::RemoveRank { n, solver } => gap_pool(&remove_rank_n(x, *n, solver)?),
        Transform::ReactClip { tau } => {
            if tau.is_nan() {
                return Err(Error::invalid("ReAct threshold must not be NaN"));
            }
            react_clip(&gap_pool(x), *tau)
        }
    };
    forward(&z, head)
}

/// Index of the largest logit (first one on ties).
pub fn predicted_class(y: &Logits) -> usize {
    let mut best = 0;
    for (i, &v) in y.iter().enumerate() {
        if v > y[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn head(q: usize, c: usize) -> ClassifierHead {
        ClassifierHead::new(
            DMatrix::from_fn(q, c, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0),
            DVector::from_fn(q, |i, _| 0.1 * i as f64),
        )
        .unwrap()
    }

    #[test]
    fn pooling_examples() {
        let x = FeatureMap::from_channel_major(2, 2, &[1.0, 3.0, 0.0, 0.0]).unwrap();
        assert_eq!(gap_pool(&x).as_slice(), &[2.0, 0.0]);
        let c = FeatureMap::new(DMatrix::from_element(3, 4, 2.5)).unwrap();
        assert_eq!(gap_pool(&c).as_slice(), &[2.5; 3]);
    }

    #[test]
    fn forward_examples() {
        let ident = ClassifierHead::new(DMatrix::identity(3, 3), DVector::zeros(3)).unwrap();
        let z = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        assert_eq!(forward(&z, &ident).unwrap(), z);
        let h = head(4, 3);
        assert_eq!(forward(&DVector::zeros(3), &h).unwrap(), h.bias);
        assert!(matches!(
            forward(&DVector::zeros(2), &h),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn pipeline_identities() {
        let h = head(4, 3);
        let x = FeatureMap::from_channel_major(3, 2, &[1.0, 2.0, 0.0, 5.0, 3.0, 1.0]).unwrap();
        let plain = score_pipeline(&x, &h, &Transform::None).unwrap();
        assert_eq!(plain, forward(&gap_pool(&x), &h).unwrap());
        let inf = score_pipeline(&x, &h, &Transform::ReactClip { tau: f64::INFINITY }).unwrap();
        assert_eq!(plain, inf);

        let a = DVector::from_vec(vec![1.0, 2.0, 2.0]) / 3.0;
        let b = DVector::from_vec(vec![0.6, 0.8]);
        let rank1 = FeatureMap::new(&a * b.transpose() * 7.0).unwrap();
        let y = score_pipeline(
            &rank1,
            &h,
            &Transform::RemoveRank {
                n: 1,
                solver: Solver::Exact,
            },
        )
        .unwrap();
        assert!((y - &h.bias).amax() < 1e-12);
    }

    #[test]
    fn argmax_takes_first_on_ties() {
        assert_eq!(predicted_class(&DVector::from_vec(vec![1.0, 3.0, 3.0])), 1);
    }
}
