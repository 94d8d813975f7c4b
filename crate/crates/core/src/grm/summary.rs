//! Conversions between slope and loading metrics, and overall
//! discrimination and difficulty per item.

use alloc::vec::Vec;

use libm::sqrt;

use super::{GrmError, GrmParams};
use crate::matrix::Matrix;

/// Standardized loadings `l_j = a_j / sqrt(1 + ‖a_j‖²)`.
pub fn slopes_to_loadings(slopes: &Matrix) -> Matrix {
    let mut out = slopes.clone();
    for j in 0..out.rows() {
        let row = out.row_mut(j);
        let s = sqrt(1.0 + row.iter().map(|a| a * a).sum::<f64>());
        row.iter_mut().for_each(|a| *a /= s);
    }
    out
}

/// Inverse of [`slopes_to_loadings`]; `None` if some row has `‖l_j‖ ≥ 1`.
pub fn loadings_to_slopes(loadings: &Matrix) -> Option<Matrix> {
    let mut out = loadings.clone();
    for j in 0..out.rows() {
        let row = out.row_mut(j);
        let h = row.iter().map(|l| l * l).sum::<f64>();
        if h >= 1.0 {
            return None;
        }
        let s = sqrt(1.0 - h);
        row.iter_mut().for_each(|l| *l /= s);
    }
    Some(out)
}

/// `‖a_j‖`.
pub fn overall_discrimination(a: &[f64]) -> f64 {
    sqrt(a.iter().map(|x| x * x).sum())
}

/// `−b_jy / ‖a_j‖` for each threshold.
pub fn overall_difficulty(a: &[f64], b: &[f64]) -> Result<Vec<f64>, GrmError> {
    let alpha = overall_discrimination(a);
    if alpha == 0.0 {
        return Err(GrmError::ZeroDiscrimination);
    }
    Ok(b.iter().map(|&x| -x / alpha).collect())
}

/// Per-item multidimensional discrimination and difficulty.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IrtSummary {
    pub discrimination: Vec<f64>,
    /// `None` for items whose slopes are all zero.
    pub difficulty: Vec<Option<Vec<f64>>>,
}

impl IrtSummary {
    pub fn from_params(params: &GrmParams) -> Self {
        let n = params.n_items();
        let discrimination = (0..n).map(|j| overall_discrimination(params.slopes.row(j))).collect();
        let difficulty = (0..n)
            .map(|j| overall_difficulty(params.slopes.row(j), params.intercepts.row(j)).ok())
            .collect();
        Self { discrimination, difficulty }
    }
}
