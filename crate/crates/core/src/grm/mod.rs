//! Multidimensional graded response model.
//!
//! Item `j` has a slope vector `a_j` (one entry per latent dimension) and
//! strictly decreasing intercepts `b_j1 > … > b_j,C−1`. The probability of
//! category `y` or higher is `logistic(a_jᵀθ + b_jy)`, and category
//! probabilities are differences of consecutive cumulative probabilities.

use alloc::vec;
use alloc::vec::Vec;

use libm::expm1;

use crate::matrix::Matrix;
use crate::special::logistic;

mod estimate;
mod likelihood;
mod quadrature;
mod rotation;
mod simulate;
mod summary;

pub use estimate::{fit, FitConfig, FitDiagnostics, FitError, FitResult};
pub use likelihood::{loglik_gradient, marginal_loglik, LoglikGradient, MarginalLoglik};
pub use quadrature::{gauss_hermite, GridScheme, GridSettings, QuadratureGrid};
pub use rotation::{
    oblimin_criterion, oblimin_rotate, oblique_procrustes, RotatedSolution, RotationConfig,
    RotationError,
};
pub use simulate::simulate_responses;
pub use summary::{
    loadings_to_slopes, overall_difficulty, overall_discrimination, slopes_to_loadings, IrtSummary,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GrmError {
    #[error("intercepts of item {item} are not strictly decreasing")]
    UnorderedIntercepts { item: usize },
    #[error("slopes have {slopes} rows but intercepts have {intercepts}")]
    ItemCountMismatch { slopes: usize, intercepts: usize },
    #[error("model needs at least 2 categories and 1 dimension")]
    DegenerateShape,
    #[error("data has {data} items, model has {model}")]
    DataItems { data: usize, model: usize },
    #[error("category {category} of item {item} outside 0..{categories}")]
    CategoryOutOfRange { item: usize, category: u8, categories: usize },
    #[error("grid has dimension {grid}, model has {model}")]
    GridDims { grid: usize, model: usize },
    #[error("overall difficulty undefined for an item with zero discrimination")]
    ZeroDiscrimination,
}

/// Item parameters: slopes (J×D) and intercepts (J×(C−1)).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GrmParams {
    pub slopes: Matrix,
    pub intercepts: Matrix,
}

impl GrmParams {
    pub fn new(slopes: Matrix, intercepts: Matrix) -> Result<Self, GrmError> {
        if slopes.rows() != intercepts.rows() {
            return Err(GrmError::ItemCountMismatch {
                slopes: slopes.rows(),
                intercepts: intercepts.rows(),
            });
        }
        if slopes.cols() == 0 || intercepts.cols() == 0 {
            return Err(GrmError::DegenerateShape);
        }
        let p = Self { slopes, intercepts };
        p.check_ordering()?;
        Ok(p)
    }

    pub fn check_ordering(&self) -> Result<(), GrmError> {
        for j in 0..self.n_items() {
            if !strictly_decreasing(self.intercepts.row(j)) {
                return Err(GrmError::UnorderedIntercepts { item: j });
            }
        }
        Ok(())
    }

    pub fn n_items(&self) -> usize {
        self.slopes.rows()
    }

    pub fn dims(&self) -> usize {
        self.slopes.cols()
    }

    pub fn categories(&self) -> usize {
        self.intercepts.cols() + 1
    }
}

fn strictly_decreasing(b: &[f64]) -> bool {
    b.windows(2).all(|w| w[0] > w[1])
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `P(Y ≥ y | θ) = logistic(aᵀθ + b_y)`.
pub fn cumulative_prob(theta: &[f64], a: &[f64], b_y: f64) -> f64 {
    logistic(dot(a, theta) + b_y)
}

/// Category probabilities for one item at `theta`.
pub fn category_probs(theta: &[f64], a: &[f64], b: &[f64]) -> Result<Vec<f64>, GrmError> {
    if !strictly_decreasing(b) {
        return Err(GrmError::UnorderedIntercepts { item: 0 });
    }
    let mut out = vec![0.0; b.len() + 1];
    probs_at(dot(a, theta), b, &mut out);
    Ok(out)
}

/// Fills `out` (length C) with category probabilities for linear predictor `eta`.
///
/// Differences of neighbouring logistics are evaluated as
/// `σ(x)·σ(−y)·(1 − e^{y−x})`, which stays accurate in the tails.
#[inline]
pub(crate) fn probs_at(eta: f64, b: &[f64], out: &mut [f64]) {
    let c = b.len() + 1;
    out[0] = logistic(-(eta + b[0]));
    for y in 1..c - 1 {
        let x = eta + b[y - 1];
        let z = eta + b[y];
        out[y] = logistic(x) * logistic(-z) * -expm1(z - x);
    }
    out[c - 1] = logistic(eta + b[c - 2]);
}

/// Free parameters of an exploratory D-dimensional model with J items and C
/// categories under the echelon identification: `J(C−1) + JD − D(D−1)/2`.
pub fn parameter_count(items: usize, categories: usize, dims: usize) -> usize {
    items * (categories - 1) + items * dims - dims * (dims - 1) / 2
}

/// Whether slope `(j, d)` is free under the echelon constraint `a_jd = 0`
/// for `d > j`.
#[inline]
pub fn slope_is_free(item: usize, dim: usize) -> bool {
    dim <= item
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn cumulative_prob_examples() {
        assert_eq!(cumulative_prob(&[0.0, 0.0], &[0.7, -1.2], 0.0), 0.5);
        assert_eq!(cumulative_prob(&[1.0, 1.0], &[1.0, 1.0], -2.0), 0.5);
        assert_abs_diff_eq!(cumulative_prob(&[1.0], &[2.0], 1.0), 0.952_574, epsilon = 5e-7);
    }

    #[test]
    fn category_probs_reference() {
        let p = category_probs(&[0.0], &[1.0], &[1.0, 0.0, -1.0]).unwrap();
        let expected = [0.268_941, 0.231_059, 0.231_059, 0.268_941];
        for (a, b) in p.iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-6);
        }
    }

    #[test]
    fn binary_collapse() {
        let p = category_probs(&[0.3], &[1.5], &[0.2]).unwrap();
        let star = cumulative_prob(&[0.3], &[1.5], 0.2);
        assert_abs_diff_eq!(p[0], 1.0 - star, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], star, epsilon = 1e-15);
    }

    #[test]
    fn flat_item_ignores_theta() {
        let b = [0.5, -0.5];
        let p1 = category_probs(&[-3.0, 2.0], &[0.0, 0.0], &b).unwrap();
        let p2 = category_probs(&[4.0, 0.1], &[0.0, 0.0], &b).unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn unordered_intercepts_rejected() {
        assert!(category_probs(&[0.0], &[1.0], &[0.0, 0.5]).is_err());
        let bad = GrmParams::new(Matrix::zeros(2, 1), Matrix::from_rows(&[[1.0, 0.0], [0.0, 0.0]]));
        assert_eq!(bad, Err(GrmError::UnorderedIntercepts { item: 1 }));
    }

    #[test]
    fn parameter_counts_match_reference_table() {
        let expected = [60, 74, 87, 99, 110, 120, 129];
        for (d, k) in (1..=7).zip(expected) {
            assert_eq!(parameter_count(15, 4, d), k, "D = {d}");
        }
    }

    #[test]
    fn extreme_predictors_stay_finite() {
        let mut out = [0.0; 4];
        for eta in [-800.0, -40.0, 0.0, 40.0, 800.0] {
            probs_at(eta, &[2.0, 0.0, -2.0], &mut out);
            let s: f64 = out.iter().sum();
            assert!(out.iter().all(|p| p.is_finite() && *p >= 0.0));
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
        }
    }
}
