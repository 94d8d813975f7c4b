//! Quantile-based discretization of continuous indicators into ordinal risk
//! categories.
//!
//! Positive-polarity flags use the `C − 1` quantiles at `y/C`; two-sided
//! flags use the `2C − 1` quantiles at `k/(2C)`, with the lowest category
//! around the median and the highest in both tails.

use alloc::string::String;
use alloc::vec::Vec;

use libm::floor;

use crate::flags::{FlagId, FlagSpec, IndicatorMatrix, Polarity};

pub const DEFAULT_CATEGORIES: usize = 4;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DiscretizeError {
    #[error("quantile of an empty sample")]
    Empty,
    #[error("flag {flag}: {present} present values, need at least {needed}")]
    InsufficientData { flag: String, present: usize, needed: usize },
    #[error("need at least 2 categories, got {0}")]
    TooFewCategories(usize),
    #[error("threshold set for {flag} has {got} cutpoints, expected {expected}")]
    CutpointCount { flag: String, got: usize, expected: usize },
    #[error("no thresholds supplied for flag {0}")]
    MissingThresholds(String),
}

/// Per-flag cutpoints, kept for audit.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ThresholdSet {
    pub flag_id: FlagId,
    pub polarity: Polarity,
    pub cutpoints: Vec<f64>,
    /// True when the quantiles overlapped and were recomputed on unique values.
    pub deduplicated: bool,
}

/// Ordinal categories `Y_ij ∈ {0, …, C−1}`, authorities × flags, row-major.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CategoricalMatrix {
    pub authorities: Vec<String>,
    pub flags: Vec<FlagId>,
    pub categories: usize,
    pub values: Vec<Option<u8>>,
}

impl CategoricalMatrix {
    pub fn new(
        authorities: Vec<String>,
        flags: Vec<FlagId>,
        categories: usize,
        values: Vec<Option<u8>>,
    ) -> Self {
        assert_eq!(values.len(), authorities.len() * flags.len(), "shape mismatch");
        Self { authorities, flags, categories, values }
    }

    pub fn n_units(&self) -> usize {
        self.authorities.len()
    }

    pub fn n_items(&self) -> usize {
        self.flags.len()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<u8> {
        self.values[i * self.flags.len() + j]
    }

    pub fn row(&self, i: usize) -> &[Option<u8>] {
        let j = self.flags.len();
        &self.values[i * j..(i + 1) * j]
    }
}

/// Type-7 empirical quantile: linear interpolation between order statistics
/// at position `(n − 1)·tau`.
pub fn sample_quantile(values: &[f64], tau: f64, dedupe: bool) -> Result<f64, DiscretizeError> {
    let mut xs: Vec<f64> = values.to_vec();
    xs.sort_by(f64::total_cmp);
    if dedupe {
        xs.dedup();
    }
    quantile_sorted(&xs, tau)
}

fn quantile_sorted(xs: &[f64], tau: f64) -> Result<f64, DiscretizeError> {
    if xs.is_empty() {
        return Err(DiscretizeError::Empty);
    }
    let h = (xs.len() - 1) as f64 * tau;
    let lo = floor(h) as usize;
    if lo + 1 >= xs.len() {
        return Ok(xs[xs.len() - 1]);
    }
    Ok(xs[lo] + (h - lo as f64) * (xs[lo + 1] - xs[lo]))
}

fn levels(polarity: Polarity, categories: usize) -> Vec<f64> {
    match polarity {
        Polarity::Positive => (1..categories).map(|y| y as f64 / categories as f64).collect(),
        Polarity::TwoSided => {
            let parts = 2 * categories;
            (1..parts).map(|k| k as f64 / parts as f64).collect()
        }
    }
}

/// Cutpoints for one column; quantiles are recomputed on the unique values
/// whenever any two of them coincide.
pub fn compute_thresholds(
    flag_id: FlagId,
    polarity: Polarity,
    values: &[f64],
    categories: usize,
) -> Result<ThresholdSet, DiscretizeError> {
    if categories < 2 {
        return Err(DiscretizeError::TooFewCategories(categories));
    }
    let mut xs = values.to_vec();
    xs.sort_by(f64::total_cmp);
    let taus = levels(polarity, categories);
    let quantiles = |xs: &[f64]| -> Result<Vec<f64>, DiscretizeError> {
        taus.iter().map(|&t| quantile_sorted(xs, t)).collect()
    };
    let mut cutpoints = quantiles(&xs)?;
    let overlapped = cutpoints.windows(2).any(|w| w[0] == w[1]);
    if overlapped {
        xs.dedup();
        cutpoints = quantiles(&xs)?;
    }
    Ok(ThresholdSet { flag_id, polarity, cutpoints, deduplicated: overlapped })
}

// Number of cutpoints strictly below x: the bin with right-closed intervals.
fn bin(x: f64, cutpoints: &[f64]) -> usize {
    cutpoints.iter().take_while(|&&q| q < x).count()
}

/// Category of `x` under the `C − 1` ascending quantile cutpoints.
pub fn discretize_positive(x: f64, cuts: &ThresholdSet) -> u8 {
    bin(x, &cuts.cutpoints) as u8
}

/// Category of `x` under `2C − 1` cutpoints: 0 around the median, `C − 1`
/// in either tail.
pub fn discretize_two_sided(x: f64, cuts: &ThresholdSet) -> u8 {
    let c = (cuts.cutpoints.len() + 1) / 2;
    let b = bin(x, &cuts.cutpoints);
    (if b < c { c - 1 - b } else { b - c }) as u8
}

pub fn discretize_value(x: f64, cuts: &ThresholdSet) -> u8 {
    match cuts.polarity {
        Polarity::Positive => discretize_positive(x, cuts),
        Polarity::TwoSided => discretize_two_sided(x, cuts),
    }
}

fn expected_cutpoints(polarity: Polarity, categories: usize) -> usize {
    match polarity {
        Polarity::Positive => categories - 1,
        Polarity::TwoSided => 2 * categories - 1,
    }
}

/// Computes per-flag thresholds from each column's observed values and
/// applies them cell-wise. Absent cells stay absent.
pub fn discretize_matrix(
    m: &IndicatorMatrix,
    specs: &[FlagSpec],
    categories: usize,
) -> Result<(CategoricalMatrix, Vec<ThresholdSet>), DiscretizeError> {
    if categories < 2 {
        return Err(DiscretizeError::TooFewCategories(categories));
    }
    let mut thresholds = Vec::with_capacity(m.n_flags());
    for (j, &flag) in m.flags.iter().enumerate() {
        let polarity = specs
            .iter()
            .find(|s| s.flag_id == flag)
            .map(|s| s.polarity)
            .unwrap_or_else(|| flag.polarity());
        let present: Vec<f64> = m.column(j).into_iter().flatten().collect();
        let needed = expected_cutpoints(polarity, categories) + 1;
        if present.len() < needed {
            return Err(DiscretizeError::InsufficientData {
                flag: String::from(flag.label()),
                present: present.len(),
                needed,
            });
        }
        thresholds.push(compute_thresholds(flag, polarity, &present, categories)?);
    }
    let cm = apply_thresholds(m, &thresholds, categories)?;
    Ok((cm, thresholds))
}

/// Applies previously computed thresholds to an indicator matrix.
pub fn apply_thresholds(
    m: &IndicatorMatrix,
    thresholds: &[ThresholdSet],
    categories: usize,
) -> Result<CategoricalMatrix, DiscretizeError> {
    let mut per_flag = Vec::with_capacity(m.n_flags());
    for &flag in &m.flags {
        let t = thresholds
            .iter()
            .find(|t| t.flag_id == flag)
            .ok_or_else(|| DiscretizeError::MissingThresholds(String::from(flag.label())))?;
        let expected = expected_cutpoints(t.polarity, categories);
        if t.cutpoints.len() != expected {
            return Err(DiscretizeError::CutpointCount {
                flag: String::from(flag.label()),
                got: t.cutpoints.len(),
                expected,
            });
        }
        per_flag.push(t);
    }
    let values = (0..m.n_authorities())
        .flat_map(|i| {
            let per_flag = &per_flag;
            (0..m.n_flags()).map(move |j| m.get(i, j).map(|x| discretize_value(x, per_flag[j])))
        })
        .collect();
    Ok(CategoricalMatrix::new(m.authorities.clone(), m.flags.clone(), categories, values))
}
