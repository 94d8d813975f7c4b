//! Per-contract records assembled from the procurement stage tables.

use alloc::string::String;
use alloc::vec::Vec;

use chrono::{Datelike, NaiveDate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ProcedureType {
    Open,
    NonOpen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum AwardCriterion {
    LowestPrice,
    Meat,
    Other,
}

/// One procurement procedure, identified by its CIG.
///
/// Every field other than the identifiers may be absent; absence propagates
/// to the indicators as missing cells rather than zeros.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ContractRecord {
    pub cig: String,
    pub award_id: Option<String>,
    pub authority_id: String,
    pub publication_date: Option<NaiveDate>,
    pub submission_deadline: Option<NaiveDate>,
    pub award_date: Option<NaiveDate>,
    pub procedure_type: Option<ProcedureType>,
    pub award_criterion: Option<AwardCriterion>,
    pub award_value: Option<f64>,
    pub paid_value: Option<f64>,
    pub bids_received: Option<u32>,
    pub bids_eligible: Option<u32>,
    pub bids_excluded: Option<u32>,
    pub has_variant: Option<bool>,
    pub expected_end_date: Option<NaiveDate>,
    pub actual_end_date: Option<NaiveDate>,
    pub winner_ids: Vec<String>,
}

impl ContractRecord {
    pub fn new(cig: impl Into<String>, authority_id: impl Into<String>) -> Self {
        Self { cig: cig.into(), authority_id: authority_id.into(), ..Self::default() }
    }

    pub fn publication_year(&self) -> Option<i32> {
        self.publication_date.map(|d| d.year())
    }
}

/// Keeps the records published in `year`; returns them with the number of
/// records dropped for lacking a publication date.
pub fn filter_year(records: &[ContractRecord], year: i32) -> (Vec<ContractRecord>, usize) {
    let undated = records.iter().filter(|r| r.publication_date.is_none()).count();
    let kept = records.iter().filter(|r| r.publication_year() == Some(year)).cloned().collect();
    (kept, undated)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn dated(cig: &str, y: i32) -> ContractRecord {
        ContractRecord {
            publication_date: NaiveDate::from_ymd_opt(y, 6, 1),
            ..ContractRecord::new(cig, "A")
        }
    }

    #[test]
    fn keeps_only_reference_year() {
        let recs = vec![dated("a", 2016), dated("b", 2017), dated("c", 2018)];
        let (kept, undated) = filter_year(&recs, 2017);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].cig, "b");
        assert_eq!(undated, 0);
    }

    #[test]
    fn empty_input() {
        let (kept, undated) = filter_year(&[], 2017);
        assert!(kept.is_empty());
        assert_eq!(undated, 0);
    }

    #[test]
    fn undated_records_are_dropped_and_counted() {
        let recs = vec![ContractRecord::new("x", "A"), dated("y", 2017)];
        let (kept, undated) = filter_year(&recs, 2017);
        assert_eq!(kept.len(), 1);
        assert_eq!(undated, 1);
    }
}
