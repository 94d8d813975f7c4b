//! Penalized-likelihood indexes, likelihood-ratio tests and the elbow rule
//! used to choose the number of latent dimensions.

use alloc::vec::Vec;

use libm::log;

use crate::special::chi_square_sf;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SelectionError {
    #[error("sample size {0} too small: HQC needs ln(ln n) > 0, i.e. n > e")]
    SampleTooSmall(usize),
    #[error("threshold must be positive, got {0}")]
    BadThreshold(f64),
    #[error("no candidate models supplied")]
    Empty,
    #[error("rows must be ordered by strictly increasing dimension")]
    Unordered,
}

/// The four penalized indexes for one fitted model.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InfoCriteria {
    pub aic: f64,
    pub sabic: f64,
    pub hqc: f64,
    pub bic: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Criterion {
    Aic,
    Sabic,
    Hqc,
    Bic,
}

impl Criterion {
    pub const ALL: [Criterion; 4] = [Criterion::Aic, Criterion::Sabic, Criterion::Hqc, Criterion::Bic];

    pub fn name(self) -> &'static str {
        match self {
            Criterion::Aic => "aic",
            Criterion::Sabic => "sabic",
            Criterion::Hqc => "hqc",
            Criterion::Bic => "bic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name().eq_ignore_ascii_case(s))
    }
}

impl InfoCriteria {
    pub fn get(&self, c: Criterion) -> f64 {
        match c {
            Criterion::Aic => self.aic,
            Criterion::Sabic => self.sabic,
            Criterion::Hqc => self.hqc,
            Criterion::Bic => self.bic,
        }
    }
}

/// AIC, sample-size adjusted BIC, Hannan–Quinn and BIC for log-likelihood
/// `loglik` with `k` free parameters and `n` units.
pub fn info_criteria(loglik: f64, k: usize, n: usize) -> Result<InfoCriteria, SelectionError> {
    let nf = n as f64;
    if n < 3 {
        // ln ln n ≤ 0 for n ≤ e
        return Err(SelectionError::SampleTooSmall(n));
    }
    let k = k as f64;
    let dev = -2.0 * loglik;
    Ok(InfoCriteria {
        aic: dev + 2.0 * k,
        sabic: dev + k * log((nf + 2.0) / 24.0),
        hqc: dev + 2.0 * k * log(log(nf)),
        bic: dev + k * log(nf),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LrTest {
    pub chi2: f64,
    pub df: usize,
    pub p: f64,
}

/// Likelihood-ratio test of a nested smaller model against a larger one.
///
/// The statistic is floored at zero so that optimizer noise on nearly equal
/// fits cannot produce a negative chi-square.
pub fn lr_test(loglik_small: f64, loglik_large: f64, df: usize) -> LrTest {
    assert!(df >= 1, "likelihood-ratio test needs df >= 1");
    let chi2 = (2.0 * (loglik_large - loglik_small)).max(0.0);
    LrTest { chi2, df, p: chi_square_sf(chi2, df as f64) }
}

/// One row of the model-selection table.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SelectionRow {
    pub dims: usize,
    pub loglik: f64,
    pub k: usize,
    pub criteria: InfoCriteria,
    /// Test against the previous row; absent on the first row.
    pub lrt: Option<LrTest>,
}

/// Builds the selection table from `(dims, loglik, k)` triples ordered by `dims`.
pub fn selection_table(
    fits: &[(usize, f64, usize)],
    n: usize,
) -> Result<Vec<SelectionRow>, SelectionError> {
    if fits.is_empty() {
        return Err(SelectionError::Empty);
    }
    if fits.windows(2).any(|w| w[1].0 <= w[0].0 || w[1].2 <= w[0].2) {
        return Err(SelectionError::Unordered);
    }
    let mut rows = Vec::with_capacity(fits.len());
    for (idx, &(dims, loglik, k)) in fits.iter().enumerate() {
        let lrt = if idx == 0 {
            None
        } else {
            let (_, prev_ll, prev_k) = fits[idx - 1];
            Some(lr_test(prev_ll, loglik, k - prev_k))
        };
        rows.push(SelectionRow { dims, loglik, k, criteria: info_criteria(loglik, k, n)?, lrt });
    }
    Ok(rows)
}

/// Percentage improvement of `criterion` over the previous row, from the
/// second row onward: `100 · (prev − cur) / prev`.
pub fn relative_improvements(rows: &[SelectionRow], criterion: Criterion) -> Vec<f64> {
    rows.windows(2)
        .map(|w| {
            let prev = w[0].criteria.get(criterion);
            let cur = w[1].criteria.get(criterion);
            100.0 * (prev - cur) / prev
        })
        .collect()
}

/// Per-row relative improvements for all four indexes.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Improvement {
    pub dims: usize,
    pub aic: f64,
    pub sabic: f64,
    pub hqc: f64,
    pub bic: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SelectionRule {
    pub threshold_pct: f64,
    pub criteria: Vec<Criterion>,
    /// True when no plateau was found and the argmin of the first index was used.
    pub fallback_argmin: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SelectionReport {
    pub rows: Vec<SelectionRow>,
    pub improvements: Vec<Improvement>,
    pub chosen_dims: usize,
    pub rule: SelectionRule,
}

pub const DEFAULT_THRESHOLD_PCT: f64 = 0.25;
pub const DEFAULT_CRITERIA: [Criterion; 2] = [Criterion::Aic, Criterion::Bic];

/// Elbow rule: the smallest D after which every relative improvement of every
/// index in `criteria` stays below `threshold_pct`.
///
/// A single row selects itself. When the curves never flatten the argmin of
/// the first index is returned and flagged in the report.
pub fn select_dimension(
    rows: &[SelectionRow],
    threshold_pct: f64,
    criteria: &[Criterion],
) -> Result<SelectionReport, SelectionError> {
    if !(threshold_pct > 0.0) {
        return Err(SelectionError::BadThreshold(threshold_pct));
    }
    if rows.is_empty() {
        return Err(SelectionError::Empty);
    }
    let criteria: Vec<Criterion> =
        if criteria.is_empty() { DEFAULT_CRITERIA.to_vec() } else { criteria.to_vec() };

    let per: Vec<Vec<f64>> = Criterion::ALL.iter().map(|&c| relative_improvements(rows, c)).collect();
    let improvements = (1..rows.len())
        .map(|r| Improvement {
            dims: rows[r].dims,
            aic: per[0][r - 1],
            sabic: per[1][r - 1],
            hqc: per[2][r - 1],
            bic: per[3][r - 1],
        })
        .collect::<Vec<_>>();

    let negligible = |step: usize| {
        criteria.iter().all(|&c| {
            let imp = &improvements[step];
            let v = match c {
                Criterion::Aic => imp.aic,
                Criterion::Sabic => imp.sabic,
                Criterion::Hqc => imp.hqc,
                Criterion::Bic => imp.bic,
            };
            v < threshold_pct
        })
    };

    let mut fallback_argmin = false;
    let chosen_dims = if rows.len() == 1 {
        rows[0].dims
    } else {
        // improvements[s] is the step from rows[s] to rows[s + 1]
        match (0..rows.len() - 1).find(|&s| (s..rows.len() - 1).all(negligible)) {
            Some(s) => rows[s].dims,
            None => {
                fallback_argmin = true;
                let first = criteria[0];
                rows.iter()
                    .min_by(|a, b| a.criteria.get(first).total_cmp(&b.criteria.get(first)))
                    .map(|r| r.dims)
                    .unwrap()
            }
        }
    };

    Ok(SelectionReport {
        rows: rows.to_vec(),
        improvements,
        chosen_dims,
        rule: SelectionRule { threshold_pct, criteria, fallback_argmin },
    })
}
