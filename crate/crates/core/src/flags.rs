//! The fifteen red-flag indicators, computed per contracting authority.
//!
//! Each flag has an eligibility predicate (the contract carries every
//! variable the flag needs) and a per-contract observation. An authority gets
//! a value only when at least two of its contracts are eligible.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use chrono::NaiveDate;

use crate::records::{AwardCriterion, ContractRecord, ProcedureType};

/// Minimum number of eligible contracts for an authority-level value.
pub const MIN_CONTRACTS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum FlagId {
    #[cfg_attr(feature = "serde", serde(rename = "non_open_count"))]
    NonOpenCount,
    #[cfg_attr(feature = "serde", serde(rename = "non_open_val"))]
    NonOpenVal,
    #[cfg_attr(feature = "serde", serde(rename = "single_bid_count"))]
    SingleBidCount,
    #[cfg_attr(feature = "serde", serde(rename = "single_bid_val"))]
    SingleBidVal,
    #[cfg_attr(feature = "serde", serde(rename = "MEAT_count"))]
    MeatCount,
    #[cfg_attr(feature = "serde", serde(rename = "MEAT_val"))]
    MeatVal,
    #[cfg_attr(feature = "serde", serde(rename = "advertisement"))]
    Advertisement,
    #[cfg_attr(feature = "serde", serde(rename = "evaluation"))]
    Evaluation,
    #[cfg_attr(feature = "serde", serde(rename = "excluded_bids"))]
    ExcludedBids,
    #[cfg_attr(feature = "serde", serde(rename = "all_bids_excluded_but_one"))]
    AllBidsExcludedButOne,
    #[cfg_attr(feature = "serde", serde(rename = "excluded_bids_but_one"))]
    ExcludedBidsButOne,
    #[cfg_attr(feature = "serde", serde(rename = "modifications"))]
    Modifications,
    #[cfg_attr(feature = "serde", serde(rename = "amount_deviation"))]
    AmountDeviation,
    #[cfg_attr(feature = "serde", serde(rename = "time_deviation"))]
    TimeDeviation,
    #[cfg_attr(feature = "serde", serde(rename = "winners_homog"))]
    WinnersHomog,
}

impl FlagId {
    pub const ALL: [FlagId; 15] = [
        FlagId::NonOpenCount,
        FlagId::NonOpenVal,
        FlagId::SingleBidCount,
        FlagId::SingleBidVal,
        FlagId::MeatCount,
        FlagId::MeatVal,
        FlagId::Advertisement,
        FlagId::Evaluation,
        FlagId::ExcludedBids,
        FlagId::AllBidsExcludedButOne,
        FlagId::ExcludedBidsButOne,
        FlagId::Modifications,
        FlagId::AmountDeviation,
        FlagId::TimeDeviation,
        FlagId::WinnersHomog,
    ];

    pub fn label(self) -> &'static str {
        match self {
            FlagId::NonOpenCount => "non_open_count",
            FlagId::NonOpenVal => "non_open_val",
            FlagId::SingleBidCount => "single_bid_count",
            FlagId::SingleBidVal => "single_bid_val",
            FlagId::MeatCount => "MEAT_count",
            FlagId::MeatVal => "MEAT_val",
            FlagId::Advertisement => "advertisement",
            FlagId::Evaluation => "evaluation",
            FlagId::ExcludedBids => "excluded_bids",
            FlagId::AllBidsExcludedButOne => "all_bids_excluded_but_one",
            FlagId::ExcludedBidsButOne => "excluded_bids_but_one",
            FlagId::Modifications => "modifications",
            FlagId::AmountDeviation => "amount_deviation",
            FlagId::TimeDeviation => "time_deviation",
            FlagId::WinnersHomog => "winners_homog",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.label() == s)
    }

    pub fn kind(self) -> FlagKind {
        match self {
            FlagId::NonOpenCount
            | FlagId::SingleBidCount
            | FlagId::MeatCount
            | FlagId::AllBidsExcludedButOne
            | FlagId::Modifications => FlagKind::Proportion,
            FlagId::NonOpenVal | FlagId::SingleBidVal | FlagId::MeatVal => FlagKind::WeightedProportion,
            FlagId::Advertisement | FlagId::Evaluation => FlagKind::MeanDays,
            FlagId::ExcludedBids
            | FlagId::ExcludedBidsButOne
            | FlagId::AmountDeviation
            | FlagId::TimeDeviation => FlagKind::MeanRatio,
            FlagId::WinnersHomog => FlagKind::Homogeneity,
        }
    }

    pub fn polarity(self) -> Polarity {
        match self {
            FlagId::Advertisement | FlagId::Evaluation => Polarity::TwoSided,
            _ => Polarity::Positive,
        }
    }
}

impl fmt::Display for FlagId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum FlagKind {
    Proportion,
    WeightedProportion,
    MeanDays,
    MeanRatio,
    Homogeneity,
}

/// Direction in which an indicator signals risk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Polarity {
    /// Larger values mean higher risk.
    Positive,
    /// Both tails signal risk.
    TwoSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FlagSpec {
    pub flag_id: FlagId,
    pub kind: FlagKind,
    pub polarity: Polarity,
}

impl FlagSpec {
    pub fn of(flag_id: FlagId) -> Self {
        Self { flag_id, kind: flag_id.kind(), polarity: flag_id.polarity() }
    }

    /// All fifteen flags in their canonical order.
    pub fn standard() -> Vec<FlagSpec> {
        FlagId::ALL.iter().map(|&f| Self::of(f)).collect()
    }
}

/// Data-quality counters collected while evaluating flags.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QualityReport {
    /// Contracts made ineligible by a negative day span, per flag label.
    pub negative_spans: BTreeMap<String, usize>,
    /// Contracts with zero expected duration or zero award value on a deviation flag.
    pub zero_denominators: BTreeMap<String, usize>,
    /// Contracts whose excluded-bid count exceeds the received count.
    pub inconsistent_bids: usize,
    /// Cells left absent because fewer than two contracts were eligible.
    pub absent_cells: BTreeMap<String, usize>,
}

impl QualityReport {
    fn bump(map: &mut BTreeMap<String, usize>, flag: FlagId) {
        *map.entry(String::from(flag.label())).or_insert(0) += 1;
    }
}

// Per-contract observation for one flag.
enum Obs {
    Missing,
    NegativeSpan,
    ZeroDenominator,
    Inconsistent,
    Hit(bool),
    Weighted { hit: bool, weight: f64 },
    Value(f64),
    // Eligible, but contributes a value only when the sub-predicate holds.
    Conditional(Option<f64>),
}

fn days_between(from: NaiveDate, to: NaiveDate) -> i64 {
    to.signed_duration_since(from).num_days()
}

fn single_bid(c: &ContractRecord) -> Option<bool> {
    match (c.bids_eligible, c.bids_received) {
        (Some(e), _) => Some(e == 1),
        (None, Some(r)) => Some(r == 1),
        (None, None) => None,
    }
}

fn bid_pair(c: &ContractRecord) -> Option<Result<(u32, u32), ()>> {
    let (r, e) = (c.bids_received?, c.bids_excluded?);
    Some(if e > r { Err(()) } else { Ok((r, e)) })
}

fn all_but_one_excluded(received: u32, excluded: u32) -> bool {
    received >= 2 && excluded == received - 1
}

fn value(c: &ContractRecord) -> Option<f64> {
    c.award_value.filter(|v| *v >= 0.0)
}

fn relative_deviation(actual: f64, expected: f64) -> f64 {
    ((actual - expected) / expected).max(-1.0)
}

fn observe(c: &ContractRecord, flag: FlagId) -> Obs {
    use FlagId::*;
    let opt = |o: Option<Obs>| o.unwrap_or(Obs::Missing);
    match flag {
        NonOpenCount => opt(c.procedure_type.map(|p| Obs::Hit(p == ProcedureType::NonOpen))),
        NonOpenVal => opt(c.procedure_type.zip(value(c)).map(|(p, w)| Obs::Weighted {
            hit: p == ProcedureType::NonOpen,
            weight: w,
        })),
        SingleBidCount => opt(single_bid(c).map(Obs::Hit)),
        SingleBidVal => {
            opt(single_bid(c).zip(value(c)).map(|(hit, weight)| Obs::Weighted { hit, weight }))
        }
        MeatCount => opt(c.award_criterion.map(|a| Obs::Hit(a == AwardCriterion::Meat))),
        MeatVal => opt(c.award_criterion.zip(value(c)).map(|(a, w)| Obs::Weighted {
            hit: a == AwardCriterion::Meat,
            weight: w,
        })),
        Advertisement => span(c.publication_date, c.submission_deadline),
        Evaluation => span(c.submission_deadline, c.award_date),
        ExcludedBids => match bid_pair(c) {
            None | Some(Ok((0, _))) => Obs::Missing,
            Some(Err(())) => Obs::Inconsistent,
            Some(Ok((r, e))) => Obs::Value(e as f64 / r as f64),
        },
        AllBidsExcludedButOne => match bid_pair(c) {
            None => Obs::Missing,
            Some(Err(())) => Obs::Inconsistent,
            Some(Ok((r, e))) => Obs::Hit(all_but_one_excluded(r, e)),
        },
        ExcludedBidsButOne => match bid_pair(c) {
            None | Some(Ok((0, _))) => Obs::Missing,
            Some(Err(())) => Obs::Inconsistent,
            Some(Ok((r, e))) => {
                Obs::Conditional(all_but_one_excluded(r, e).then(|| e as f64 / r as f64))
            }
        },
        Modifications => match (c.actual_end_date, c.has_variant) {
            (Some(_), Some(v)) => Obs::Hit(v),
            _ => Obs::Missing,
        },
        AmountDeviation => match (value(c), c.paid_value) {
            (Some(a), Some(p)) if a > 0.0 => Obs::Value(relative_deviation(p, a)),
            (Some(_), Some(_)) => Obs::ZeroDenominator,
            _ => Obs::Missing,
        },
        TimeDeviation => match (c.award_date, c.expected_end_date, c.actual_end_date) {
            (Some(start), Some(exp), Some(act)) => {
                let expected = days_between(start, exp);
                let actual = days_between(start, act);
                if expected < 0 || actual < 0 {
                    Obs::NegativeSpan
                } else if expected == 0 {
                    Obs::ZeroDenominator
                } else {
                    Obs::Value(relative_deviation(actual as f64, expected as f64))
                }
            }
            _ => Obs::Missing,
        },
        // handled by winners_homogeneity
        WinnersHomog => Obs::Missing,
    }
}

fn span(from: Option<NaiveDate>, to: Option<NaiveDate>) -> Obs {
    match (from, to) {
        (Some(a), Some(b)) => {
            let d = days_between(a, b);
            if d < 0 {
                Obs::NegativeSpan
            } else {
                Obs::Value(d as f64)
            }
        }
        _ => Obs::Missing,
    }
}

// Order-independent sum: values are sorted before accumulation.
fn sorted_sum(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs.iter().sum()
}

fn evaluate_with_quality(
    contracts: &[ContractRecord],
    flag: FlagId,
    quality: &mut QualityReport,
) -> Option<f64> {
    if flag == FlagId::WinnersHomog {
        return winners_homogeneity(contracts);
    }
    let mut eligible = 0usize;
    let mut hits = 0usize;
    let mut hit_weights = Vec::new();
    let mut weights = Vec::new();
    let mut values = Vec::new();
    for c in contracts {
        match observe(c, flag) {
            Obs::Missing => {}
            Obs::NegativeSpan => QualityReport::bump(&mut quality.negative_spans, flag),
            Obs::ZeroDenominator => QualityReport::bump(&mut quality.zero_denominators, flag),
            Obs::Inconsistent => quality.inconsistent_bids += 1,
            Obs::Hit(h) => {
                eligible += 1;
                hits += h as usize;
            }
            Obs::Weighted { hit, weight } => {
                eligible += 1;
                weights.push(weight);
                if hit {
                    hit_weights.push(weight);
                }
            }
            Obs::Value(v) => {
                eligible += 1;
                values.push(v);
            }
            Obs::Conditional(v) => {
                eligible += 1;
                values.extend(v);
            }
        }
    }
    if eligible < MIN_CONTRACTS {
        return None;
    }
    match flag.kind() {
        FlagKind::Proportion => Some(hits as f64 / eligible as f64),
        FlagKind::WeightedProportion => {
            let total = sorted_sum(weights);
            (total > 0.0).then(|| (sorted_sum(hit_weights) / total).min(1.0))
        }
        FlagKind::MeanDays | FlagKind::MeanRatio => {
            let n = values.len();
            (n > 0).then(|| sorted_sum(values) / n as f64)
        }
        FlagKind::Homogeneity => unreachable!(),
    }
}

/// Value of one flag for the contracts of a single authority, or `None` when
/// fewer than two contracts carry the variables the flag needs.
pub fn evaluate_flag(contracts: &[ContractRecord], spec: &FlagSpec) -> Option<f64> {
    evaluate_with_quality(contracts, spec.flag_id, &mut QualityReport::default())
}

/// Homogeneity of the winners' frequency distribution,
/// `H = 1 − K/(K−1) · (1 − Σ f²)`, with `H = 1` for a single winner.
///
/// Every (contract, distinct winner) pair counts once, so joint awards give
/// one share unit to each member.
pub fn winners_homogeneity(contracts: &[ContractRecord]) -> Option<f64> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut with_winner = 0usize;
    for c in contracts {
        let mut ids: Vec<&str> = c.winner_ids.iter().map(String::as_str).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.is_empty() {
            continue;
        }
        with_winner += 1;
        for id in ids {
            *counts.entry(id).or_insert(0) += 1;
        }
    }
    if with_winner < MIN_CONTRACTS {
        return None;
    }
    let shares: Vec<f64> = {
        let total: usize = counts.values().sum();
        counts.values().map(|&n| n as f64 / total as f64).collect()
    };
    Some(homogeneity_index(&shares))
}

/// Heterogeneity-based homogeneity index of a share vector summing to one.
pub fn homogeneity_index(shares: &[f64]) -> f64 {
    let k = shares.len();
    if k <= 1 {
        return 1.0;
    }
    let sum_sq = sorted_sum(shares.iter().map(|f| f * f).collect());
    let k = k as f64;
    (1.0 - k / (k - 1.0) * (1.0 - sum_sq)).clamp(0.0, 1.0)
}

/// Continuous indicator values `X_ij`, authorities × flags, row-major.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IndicatorMatrix {
    pub authorities: Vec<String>,
    pub flags: Vec<FlagId>,
    pub values: Vec<Option<f64>>,
}

impl IndicatorMatrix {
    pub fn new(authorities: Vec<String>, flags: Vec<FlagId>, values: Vec<Option<f64>>) -> Self {
        assert_eq!(values.len(), authorities.len() * flags.len(), "shape mismatch");
        Self { authorities, flags, values }
    }

    pub fn n_authorities(&self) -> usize {
        self.authorities.len()
    }

    pub fn n_flags(&self) -> usize {
        self.flags.len()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i * self.flags.len() + j]
    }

    pub fn column(&self, j: usize) -> Vec<Option<f64>> {
        (0..self.n_authorities()).map(|i| self.get(i, j)).collect()
    }
}

/// Groups records by authority and evaluates every flag in `specs`.
///
/// Rows are ordered by authority id and contracts are sorted by CIG inside
/// each authority, so the result does not depend on input order.
pub fn build_indicator_matrix(
    records: &[ContractRecord],
    specs: &[FlagSpec],
) -> (IndicatorMatrix, QualityReport) {
    let mut groups: BTreeMap<&str, Vec<&ContractRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.authority_id.as_str()).or_default().push(r);
    }
    let mut quality = QualityReport::default();
    let mut authorities = Vec::with_capacity(groups.len());
    let mut values = Vec::with_capacity(groups.len() * specs.len());
    for (auth, mut group) in groups {
        group.sort_by(|a, b| a.cig.cmp(&b.cig));
        let contracts: Vec<ContractRecord> = group.into_iter().cloned().collect();
        authorities.push(String::from(auth));
        for spec in specs {
            let v = evaluate_with_quality(&contracts, spec.flag_id, &mut quality);
            if v.is_none() {
                QualityReport::bump(&mut quality.absent_cells, spec.flag_id);
            }
            values.push(v);
        }
    }
    let flags = specs.iter().map(|s| s.flag_id).collect();
    (IndicatorMatrix::new(authorities, flags, values), quality)
}
