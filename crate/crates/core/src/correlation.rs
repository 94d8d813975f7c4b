//! Pairwise Pearson and Spearman correlations of the continuous indicators
//! with Bonferroni-adjusted significance.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use libm::sqrt;

use crate::flags::{FlagId, IndicatorMatrix};
use crate::special::student_t_two_sided;

pub const DEFAULT_ALPHA: f64 = 0.05;
const MIN_PAIRS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CorrelationMethod {
    PearsonLinear,
    SpearmanRank,
}

impl CorrelationMethod {
    pub fn name(self) -> &'static str {
        match self {
            CorrelationMethod::PearsonLinear => "pearson",
            CorrelationMethod::SpearmanRank => "spearman",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CorrelationReport {
    pub method: CorrelationMethod,
    pub flags: Vec<FlagId>,
    /// J×J, row-major; `None` where fewer than three complete pairs exist.
    pub matrix: Vec<Option<f64>>,
    pub p_values: Vec<Option<f64>>,
    /// Diagonal and untestable cells are `false`.
    pub significant: Vec<bool>,
    pub complete_pairs: Vec<usize>,
    pub alpha: f64,
    pub comparisons: usize,
    pub adjustment: String,
}

impl CorrelationReport {
    pub fn per_test_level(&self) -> f64 {
        bonferroni_level(self.alpha, self.comparisons)
    }

    pub fn r(&self, a: usize, b: usize) -> Option<f64> {
        self.matrix[a * self.flags.len() + b]
    }
}

pub fn comparisons(j: usize) -> usize {
    j * j.saturating_sub(1) / 2
}

pub fn bonferroni_level(alpha: f64, comparisons: usize) -> f64 {
    alpha / comparisons.max(1) as f64
}

/// Pearson correlation; `None` for fewer than two points or a constant input.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    if n < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

/// Ranks starting at 1, ties sharing the mean of their positions.
pub fn midranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && x[idx[end]] == x[idx[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(&midranks(x), &midranks(y))
}

/// Two-sided p-value from the t approximation `t = r·sqrt((n−2)/(1−r²))`.
pub fn correlation_p_value(r: f64, n: usize) -> f64 {
    if n <= 2 {
        return 1.0;
    }
    let df = (n - 2) as f64;
    let denom = 1.0 - r * r;
    if denom <= 0.0 {
        return 0.0;
    }
    student_t_two_sided(r * sqrt(df / denom), df)
}

/// Pairwise-complete correlation matrix with Bonferroni significance at `alpha`.
pub fn correlation_matrix(
    m: &IndicatorMatrix,
    method: CorrelationMethod,
    alpha: f64,
) -> CorrelationReport {
    let j = m.n_flags();
    let comps = comparisons(j);
    let level = bonferroni_level(alpha, comps);
    let columns: Vec<Vec<Option<f64>>> = (0..j).map(|c| m.column(c)).collect();
    let mut matrix = vec![None; j * j];
    let mut p_values = vec![None; j * j];
    let mut significant = vec![false; j * j];
    let mut complete_pairs = vec![0; j * j];
    for a in 0..j {
        matrix[a * j + a] = Some(1.0);
        complete_pairs[a * j + a] = columns[a].iter().flatten().count();
        for b in a + 1..j {
            let (xs, ys): (Vec<f64>, Vec<f64>) = columns[a]
                .iter()
                .zip(&columns[b])
                .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
                .unzip();
            let n = xs.len();
            complete_pairs[a * j + b] = n;
            complete_pairs[b * j + a] = n;
            if n < MIN_PAIRS {
                continue;
            }
            let r = match method {
                CorrelationMethod::PearsonLinear => pearson(&xs, &ys),
                CorrelationMethod::SpearmanRank => spearman(&xs, &ys),
            };
            if let Some(r) = r {
                let p = correlation_p_value(r, n);
                for idx in [a * j + b, b * j + a] {
                    matrix[idx] = Some(r);
                    p_values[idx] = Some(p);
                    significant[idx] = p < level;
                }
            }
        }
    }
    CorrelationReport {
        method,
        flags: m.flags.clone(),
        matrix,
        p_values,
        significant,
        complete_pairs,
        alpha,
        comparisons: comps,
        adjustment: String::from("bonferroni"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn perfect_linearity() {
        assert_abs_diff_eq!(pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), None);
    }

    #[test]
    fn fifteen_flags_give_105_comparisons() {
        assert_eq!(comparisons(15), 105);
        assert_abs_diff_eq!(bonferroni_level(0.05, 105), 0.000_476, epsilon = 5e-7);
    }

    #[test]
    fn midranks_with_ties() {
        assert_eq!(midranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
    }

    #[test]
    fn p_value_reference() {
        // r = 0.5, n = 12: t = 0.5·sqrt(10/0.75) = 1.8257, df = 10
        assert_abs_diff_eq!(correlation_p_value(0.5, 12), 0.097_854_614_257_812_46, epsilon = 1e-12);
    }

    #[test]
    fn report_shape_diagonal_and_untestable_pairs() {
        let auth: Vec<String> = (0..5).map(|i| alloc::format!("a{i}")).collect();
        let vals = vec![
            Some(1.0), Some(2.0), None,
            Some(2.0), Some(4.1), None,
            Some(3.0), Some(6.3), Some(1.0),
            Some(4.0), Some(7.9), Some(2.0),
            Some(5.0), Some(10.0), None,
        ];
        let m = IndicatorMatrix::new(
            auth,
            vec![FlagId::NonOpenCount, FlagId::NonOpenVal, FlagId::MeatCount],
            vals,
        );
        let rep = correlation_matrix(&m, CorrelationMethod::PearsonLinear, DEFAULT_ALPHA);
        assert_eq!(rep.comparisons, 3);
        assert_eq!(rep.r(0, 0), Some(1.0));
        assert!(!rep.significant[0]);
        assert!(rep.r(0, 2).is_none(), "two complete pairs are untestable");
        assert_eq!(rep.complete_pairs[2], 2);
        assert_eq!(rep.r(0, 1), rep.r(1, 0));
        assert!(rep.r(0, 1).unwrap() > 0.99);
    }
}
