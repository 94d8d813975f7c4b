//! Loading of procurement stage tables and their assembly into per-contract
//! records.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use redflag_core::{AwardCriterion, ContractRecord, ProcedureType};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}, line {line}: {source}")]
    Json { path: PathBuf, line: usize, source: serde_json::Error },
    #[error("{path}, line {line}: expected a JSON object")]
    NotAnObject { path: PathBuf, line: usize },
    #[error("{stage} table {path}: mapped column {column:?} (field {field}) not found")]
    MissingColumn { stage: Stage, path: PathBuf, field: String, column: String },
    #[error("{stage} table: required field {field} is not mapped")]
    UnmappedKey { stage: Stage, field: &'static str },
    #[error("{stage} table: unknown field {field:?} in mapping")]
    UnknownField { stage: Stage, field: String },
    #[error("{stage} field {field} is neither mapped nor declared absent")]
    Undeclared { stage: Stage, field: &'static str },
    #[error("{stage} table {path}, data row {row}: cannot parse {field} value {value:?} as {kind}")]
    Parse { stage: Stage, path: PathBuf, row: usize, field: String, value: String, kind: &'static str },
    #[error("{stage} table {path}, data row {row}: empty key {field}")]
    EmptyKey { stage: Stage, path: PathBuf, row: usize, field: String },
}

/// Procurement stage a table belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Call,
    Award,
    Variants,
    Start,
    End,
    Economic,
    Winners,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::Call => "call",
            Stage::Award => "award",
            Stage::Variants => "variants",
            Stage::Start => "start",
            Stage::End => "end",
            Stage::Economic => "economic",
            Stage::Winners => "winners",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Text,
    Date,
    Money,
    Count,
}

impl Kind {
    fn name(self) -> &'static str {
        match self {
            Kind::Text => "text",
            Kind::Date => "date",
            Kind::Money => "non-negative amount",
            Kind::Count => "non-negative count",
        }
    }
}

impl Stage {
    pub const ALL: [Stage; 7] =
        [Stage::Call, Stage::Award, Stage::Variants, Stage::Start, Stage::End, Stage::Economic, Stage::Winners];

    fn keys(self) -> &'static [&'static str] {
        match self {
            Stage::Call => &["cig", "authority_id"],
            Stage::Award => &["cig", "award_id"],
            Stage::Winners => &["award_id", "winner_id"],
            _ => &["award_id"],
        }
    }

    fn optional(self) -> &'static [(&'static str, Kind)] {
        match self {
            Stage::Call => &[
                ("publication_date", Kind::Date),
                ("submission_deadline", Kind::Date),
                ("procedure_type", Kind::Text),
            ],
            Stage::Award => &[
                ("award_date", Kind::Date),
                ("award_value", Kind::Money),
                ("award_criterion", Kind::Text),
                ("bids_received", Kind::Count),
                ("bids_eligible", Kind::Count),
                ("bids_excluded", Kind::Count),
            ],
            Stage::Start => &[("expected_end_date", Kind::Date)],
            Stage::End => &[("actual_end_date", Kind::Date)],
            Stage::Economic => &[("paid_value", Kind::Money)],
            Stage::Variants | Stage::Winners => &[],
        }
    }

    fn kind_of(self, field: &str) -> Option<Kind> {
        if self.keys().contains(&field) {
            return Some(Kind::Text);
        }
        self.optional().iter().find(|(f, _)| *f == field).map(|(_, k)| *k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DecimalSeparator {
    #[default]
    #[serde(rename = ".")]
    Point,
    #[serde(rename = ",")]
    Comma,
}

/// Source codes recognised for the enumerated fields, compared
/// case-insensitively after trimming.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CodeBook {
    pub open: Vec<String>,
    pub non_open: Vec<String>,
    pub meat: Vec<String>,
    pub lowest_price: Vec<String>,
}

impl Default for CodeBook {
    fn default() -> Self {
        let v = |s: &str| vec![s.to_string()];
        Self { open: v("open"), non_open: v("non_open"), meat: v("meat"), lowest_price: v("lowest_price") }
    }
}

fn matches(codes: &[String], value: &str) -> bool {
    codes.iter().any(|c| c.trim().eq_ignore_ascii_case(value.trim()))
}

impl CodeBook {
    pub fn procedure(&self, v: &str) -> Option<ProcedureType> {
        if matches(&self.non_open, v) {
            Some(ProcedureType::NonOpen)
        } else if matches(&self.open, v) {
            Some(ProcedureType::Open)
        } else {
            None
        }
    }

    pub fn criterion(&self, v: &str) -> AwardCriterion {
        if matches(&self.meat, v) {
            AwardCriterion::Meat
        } else if matches(&self.lowest_price, v) {
            AwardCriterion::LowestPrice
        } else {
            AwardCriterion::Other
        }
    }
}

/// Binding of semantic field names to source columns, per stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMapping {
    #[serde(default = "default_date_format")]
    pub date_format: String,
    #[serde(default)]
    pub decimal: DecimalSeparator,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    /// `stage → (semantic field → source column)`.
    pub columns: BTreeMap<Stage, BTreeMap<String, String>>,
    /// Optional fields deliberately left unmapped.
    #[serde(default)]
    pub absent: Vec<String>,
    #[serde(default)]
    pub codes: CodeBook,
}

fn default_date_format() -> String {
    "%Y-%m-%d".into()
}

fn default_delimiter() -> char {
    ','
}

impl ColumnMapping {
    /// Identity mapping for the given stages: every field maps to a column of
    /// the same name.
    pub fn identity(stages: &[Stage]) -> Self {
        let columns = stages
            .iter()
            .map(|&s| {
                let fields = s.keys().iter().copied().chain(s.optional().iter().map(|(f, _)| *f));
                (s, fields.map(|f| (f.to_string(), f.to_string())).collect())
            })
            .collect();
        Self {
            date_format: default_date_format(),
            decimal: DecimalSeparator::Point,
            delimiter: ',',
            columns,
            absent: Vec::new(),
            codes: CodeBook::default(),
        }
    }

    /// Checks that keys are mapped and every optional field of a mapped
    /// stage is mapped or declared absent.
    pub fn validate(&self) -> Result<(), IngestError> {
        for (&stage, cols) in &self.columns {
            for key in stage.keys() {
                if !cols.contains_key(*key) {
                    return Err(IngestError::UnmappedKey { stage, field: key });
                }
            }
            for field in cols.keys() {
                if stage.kind_of(field).is_none() {
                    return Err(IngestError::UnknownField { stage, field: field.clone() });
                }
            }
            for (field, _) in stage.optional() {
                if !cols.contains_key(*field) && !self.absent.iter().any(|a| a == field) {
                    return Err(IngestError::Undeclared { stage, field });
                }
            }
        }
        Ok(())
    }

    fn parse_date(&self, s: &str) -> Option<NaiveDate> {
        NaiveDate::parse_from_str(s.trim(), &self.date_format).ok()
    }

    fn parse_number(&self, s: &str) -> Option<f64> {
        let t = s.trim();
        let v: f64 = match self.decimal {
            DecimalSeparator::Point => t.parse().ok()?,
            DecimalSeparator::Comma => t.replace(',', ".").parse().ok()?,
        };
        v.is_finite().then_some(v)
    }

    fn parse_count(&self, s: &str) -> Option<u32> {
        let v = self.parse_number(s)?;
        (v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64).then_some(v as u32)
    }
}

/// Rows of one stage table, keyed by semantic field name.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub name: Stage,
    pub rows: Vec<BTreeMap<String, String>>,
    pub source_path: PathBuf,
}

fn read_rows(path: &Path, delimiter: char) -> Result<(Vec<String>, Vec<BTreeMap<String, String>>), IngestError> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    if matches!(ext.as_str(), "jsonl" | "ndjson" | "json") {
        let f = File::open(path).map_err(|source| IngestError::Io { path: path.into(), source })?;
        let mut header = BTreeSet::new();
        let mut rows = Vec::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|source| IngestError::Io { path: path.into(), source })?;
            if line.trim().is_empty() {
                continue;
            }
            let v: serde_json::Value = serde_json::from_str(&line)
                .map_err(|source| IngestError::Json { path: path.into(), line: i + 1, source })?;
            let obj = v.as_object().ok_or(IngestError::NotAnObject { path: path.into(), line: i + 1 })?;
            let row: BTreeMap<String, String> = obj
                .iter()
                .map(|(k, v)| {
                    let s = match v {
                        serde_json::Value::Null => String::new(),
                        serde_json::Value::String(s) => s.clone(),
                        other => other.to_string(),
                    };
                    (k.clone(), s)
                })
                .collect();
            header.extend(row.keys().cloned());
            rows.push(row);
        }
        return Ok((header.into_iter().collect(), rows));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter as u8)
        .from_path(path)
        .map_err(|source| IngestError::Csv { path: path.into(), source })?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|source| IngestError::Csv { path: path.into(), source })?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|source| IngestError::Csv { path: path.into(), source })?;
        rows.push(header.iter().cloned().zip(rec.iter().map(str::to_string)).collect());
    }
    Ok((header, rows))
}

/// Reads a delimited (`.csv`, `.tsv`, …) or JSON-lines (`.jsonl`) table and
/// renames its mapped columns to semantic fields, validating typed values.
pub fn load_table(path: &Path, mapping: &ColumnMapping, stage: Stage) -> Result<RawTable, IngestError> {
    let cols = mapping.columns.get(&stage).cloned().unwrap_or_default();
    for key in stage.keys() {
        if !cols.contains_key(*key) {
            return Err(IngestError::UnmappedKey { stage, field: key });
        }
    }
    let (header, source_rows) = read_rows(path, mapping.delimiter)?;
    for (field, column) in &cols {
        if stage.kind_of(field).is_none() {
            return Err(IngestError::UnknownField { stage, field: field.clone() });
        }
        if !header.iter().any(|h| h == column) {
            return Err(IngestError::MissingColumn {
                stage,
                path: path.into(),
                field: field.clone(),
                column: column.clone(),
            });
        }
    }
    let mut rows = Vec::with_capacity(source_rows.len());
    for (i, src) in source_rows.into_iter().enumerate() {
        let mut row = BTreeMap::new();
        for (field, column) in &cols {
            let value = src.get(column).cloned().unwrap_or_default();
            let kind = stage.kind_of(field).expect("checked above");
            let t = value.trim();
            if stage.keys().contains(&field.as_str()) && t.is_empty() {
                return Err(IngestError::EmptyKey { stage, path: path.into(), row: i + 1, field: field.clone() });
            }
            let ok = t.is_empty()
                || match kind {
                    Kind::Text => true,
                    Kind::Date => mapping.parse_date(t).is_some(),
                    Kind::Money => mapping.parse_number(t).is_some_and(|v| v >= 0.0),
                    Kind::Count => mapping.parse_count(t).is_some(),
                };
            if !ok {
                return Err(IngestError::Parse {
                    stage,
                    path: path.into(),
                    row: i + 1,
                    field: field.clone(),
                    value,
                    kind: kind.name(),
                });
            }
            row.insert(field.clone(), t.to_string());
        }
        rows.push(row);
    }
    Ok(RawTable { name: stage, rows, source_path: path.into() })
}

/// Counts gathered while joining the stage tables.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows: BTreeMap<Stage, usize>,
    pub contracts: usize,
    pub duplicate_cigs: usize,
    pub awards_unmatched: usize,
    /// Contracts with more than one award row; the earliest is kept.
    pub multiple_awards: usize,
    pub contracts_without_award: usize,
    /// Stage rows whose award identifier is not among the kept awards.
    pub stage_rows_unmatched: BTreeMap<Stage, usize>,
    /// Award identifiers appearing on more than one row of a stage table.
    pub stage_multiplicities: BTreeMap<Stage, usize>,
    pub unknown_procedure_codes: usize,
    pub year: Option<i32>,
    pub dropped_other_years: usize,
    pub dropped_undated: usize,
}

fn field<'a>(row: &'a BTreeMap<String, String>, name: &str) -> Option<&'a str> {
    row.get(name).map(String::as_str).filter(|s| !s.is_empty())
}

/// Left-joins the award table onto the call table by CIG, then the other
/// stage tables onto the kept award by award identifier.
///
/// Duplicate CIGs in the call table keep their first row. Among several award
/// rows for one CIG the earliest award date wins (undated last), ties going to
/// the lexicographically smallest award identifier.
pub fn assemble_contracts(
    call: &RawTable,
    award: &RawTable,
    stage_tables: &[RawTable],
    mapping: &ColumnMapping,
) -> (Vec<ContractRecord>, IngestReport) {
    let mut report = IngestReport::default();
    report.rows.insert(Stage::Call, call.rows.len());
    report.rows.insert(Stage::Award, award.rows.len());

    let mut order: Vec<&str> = Vec::new();
    let mut calls: BTreeMap<&str, &BTreeMap<String, String>> = BTreeMap::new();
    for row in &call.rows {
        let cig = field(row, "cig").expect("key validated at load");
        if calls.contains_key(cig) {
            report.duplicate_cigs += 1;
        } else {
            calls.insert(cig, row);
            order.push(cig);
        }
    }

    let mut awards: BTreeMap<&str, Vec<&BTreeMap<String, String>>> = BTreeMap::new();
    for row in &award.rows {
        let cig = field(row, "cig").expect("key validated at load");
        if calls.contains_key(cig) {
            awards.entry(cig).or_default().push(row);
        } else {
            report.awards_unmatched += 1;
        }
    }
    let mut kept: BTreeMap<&str, &BTreeMap<String, String>> = BTreeMap::new();
    for (cig, mut rows) in awards {
        if rows.len() > 1 {
            report.multiple_awards += 1;
        }
        rows.sort_by(|a, b| {
            let da = field(a, "award_date").and_then(|s| mapping.parse_date(s));
            let db = field(b, "award_date").and_then(|s| mapping.parse_date(s));
            let date_order = match (da, db) {
                (Some(x), Some(y)) => x.cmp(&y),
                (Some(_), None) => std::cmp::Ordering::Less,
                (None, Some(_)) => std::cmp::Ordering::Greater,
                (None, None) => std::cmp::Ordering::Equal,
            };
            date_order.then_with(|| field(a, "award_id").cmp(&field(b, "award_id")))
        });
        kept.insert(cig, rows[0]);
    }
    let award_ids: BTreeSet<&str> = kept.values().filter_map(|r| field(r, "award_id")).collect();

    // stage rows grouped by award id, in file order
    let mut by_stage: BTreeMap<Stage, BTreeMap<&str, Vec<&BTreeMap<String, String>>>> = BTreeMap::new();
    for t in stage_tables {
        report.rows.insert(t.name, t.rows.len());
        let groups = by_stage.entry(t.name).or_default();
        for row in &t.rows {
            let id = field(row, "award_id").expect("key validated at load");
            if award_ids.contains(id) {
                groups.entry(id).or_default().push(row);
            } else {
                *report.stage_rows_unmatched.entry(t.name).or_default() += 1;
            }
        }
        let multi = groups.values().filter(|rows| rows.len() > 1).count();
        report.stage_multiplicities.insert(t.name, multi);
    }
    let first = |stage: Stage, id: Option<&str>, name: &str| -> Option<String> {
        let rows = by_stage.get(&stage)?.get(id?)?;
        rows.iter().find_map(|r| field(r, name)).map(str::to_string)
    };

    let mut out = Vec::with_capacity(order.len());
    for cig in order {
        let c = calls[cig];
        let a = kept.get(cig).copied();
        let af = |name: &str| a.and_then(|r| field(r, name));
        let award_id = af("award_id");
        if a.is_none() {
            report.contracts_without_award += 1;
        }
        let procedure_type = field(c, "procedure_type").and_then(|v| {
            let p = mapping.codes.procedure(v);
            if p.is_none() {
                report.unknown_procedure_codes += 1;
            }
            p
        });
        let has_variant = match (by_stage.get(&Stage::Variants), award_id) {
            (Some(groups), Some(id)) => Some(groups.contains_key(id)),
            _ => None,
        };
        let mut winners: Vec<String> = by_stage
            .get(&Stage::Winners)
            .and_then(|g| g.get(award_id?))
            .map(|rows| rows.iter().filter_map(|r| field(r, "winner_id")).map(str::to_string).collect())
            .unwrap_or_default();
        winners.sort();
        winners.dedup();
        out.push(ContractRecord {
            cig: cig.to_string(),
            award_id: award_id.map(str::to_string),
            authority_id: field(c, "authority_id").expect("key validated at load").to_string(),
            publication_date: field(c, "publication_date").and_then(|s| mapping.parse_date(s)),
            submission_deadline: field(c, "submission_deadline").and_then(|s| mapping.parse_date(s)),
            award_date: af("award_date").and_then(|s| mapping.parse_date(s)),
            procedure_type,
            award_criterion: af("award_criterion").map(|v| mapping.codes.criterion(v)),
            award_value: af("award_value").and_then(|s| mapping.parse_number(s)),
            paid_value: first(Stage::Economic, award_id, "paid_value").and_then(|s| mapping.parse_number(&s)),
            bids_received: af("bids_received").and_then(|s| mapping.parse_count(s)),
            bids_eligible: af("bids_eligible").and_then(|s| mapping.parse_count(s)),
            bids_excluded: af("bids_excluded").and_then(|s| mapping.parse_count(s)),
            has_variant,
            expected_end_date: first(Stage::Start, award_id, "expected_end_date")
                .and_then(|s| mapping.parse_date(&s)),
            actual_end_date: first(Stage::End, award_id, "actual_end_date").and_then(|s| mapping.parse_date(&s)),
            winner_ids: winners,
        });
    }
    report.contracts = out.len();
    (out, report)
}
