//! The reshaped high-level feature `X ∈ R^{C × HW}`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// One feature map, channels as rows and flattened spatial positions as columns.
///
/// Entries are finite. Computation is done in `f64` even though features are
/// stored as `f32` on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    data: DMatrix<f64>,
}

impl FeatureMap {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::invalid("feature map must have at least one row and column"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature map"));
        }
        Ok(Self { data })
    }

    /// Builds a `channels × spatial` map from channel-major values.
    pub fn from_channel_major(channels: usize, spatial: usize, values: &[f64]) -> Result<Self> {
        if values.len() != channels * spatial {
            return Err(Error::DimensionMismatch {
                what: "feature values",
                expected: channels * spatial,
                found: values.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(channels, spatial, values))
    }

    pub fn zeros(channels: usize, spatial: usize) -> Result<Self> {
        Self::new(DMatrix::zeros(channels, spatial))
    }

    pub fn channels(&self) -> usize {
        self.data.nrows()
    }

    /// Number of spatial positions `H·W`.
    pub fn spatial(&self) -> usize {
        self.data.ncols()
    }

    /// `min(C, HW)`, the number of singular values.
    pub fn rank_bound(&self) -> usize {
        self.channels().min(self.spatial())
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.norm()
    }

    /// Values in channel-major, row-major order.
    pub fn to_channel_major(&self) -> Vec<f64> {
        let (c, n) = self.data.shape();
        let mut out = Vec::with_capacity(c * n);
        for i in 0..c {
            for j in 0..n {
                out.push(self.data[(i, j)]);
            }
        }
        out
    }
}
