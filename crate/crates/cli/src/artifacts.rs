//! Plain-text persistence of the stage artifacts.
//!
//! Floats are written in Rust's shortest round-trip form, so reading an
//! artifact back reproduces the in-memory values exactly.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use redflag_core::correlation::CorrelationReport;
use redflag_core::selection::SelectionReport;
use redflag_core::{CategoricalMatrix, ContractRecord, FlagId, IndicatorMatrix};
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum ArtifactError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> ArtifactError + '_ {
    move |source| ArtifactError::Io { path: path.into(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> ArtifactError + '_ {
    move |source| ArtifactError::Csv { path: path.into(), source }
}

fn format_err(path: &Path, message: impl Into<String>) -> ArtifactError {
    ArtifactError::Format { path: path.into(), message: message.into() }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, ArtifactError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io(dir))?;
    }
    Ok(BufWriter::new(fs::File::create(path).map_err(io(path))?))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ArtifactError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| ArtifactError::Json { path: path.into(), source })?;
    w.write_all(b"\n").map_err(io(path))?;
    w.flush().map_err(io(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, ArtifactError> {
    let f = fs::File::open(path).map_err(io(path))?;
    serde_json::from_reader(BufReader::new(f)).map_err(|source| ArtifactError::Json { path: path.into(), source })
}

pub fn write_contracts(path: &Path, records: &[ContractRecord]) -> Result<(), ArtifactError> {
    let mut w = create(path)?;
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|source| ArtifactError::Json { path: path.into(), source })?;
        w.write_all(b"\n").map_err(io(path))?;
    }
    w.flush().map_err(io(path))
}

pub fn read_contracts(path: &Path) -> Result<Vec<ContractRecord>, ArtifactError> {
    let f = fs::File::open(path).map_err(io(path))?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| ArtifactError::Json { path: path.into(), source })?);
    }
    Ok(out)
}

fn cell<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Shortest representation that parses back to the same `f64`, switching to
/// exponent notation for very large or small magnitudes.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        ryu::Buffer::new().format_finite(x).to_string()
    } else {
        x.to_string()
    }
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn header(path: &Path, rdr: &mut csv::Reader<fs::File>) -> Result<Vec<FlagId>, ArtifactError> {
    let h = rdr.headers().map_err(csv_err(path))?.clone();
    if h.get(0) != Some("authority") {
        return Err(format_err(path, "first column must be `authority`"));
    }
    h.iter()
        .skip(1)
        .map(|l| FlagId::from_label(l).ok_or_else(|| format_err(path, format!("unknown flag {l:?}"))))
        .collect()
}

/// Authorities × flags, empty cells for missing values.
pub fn write_indicators(path: &Path, m: &IndicatorMatrix) -> Result<(), ArtifactError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut head = vec!["authority".to_string()];
    head.extend(m.flags.iter().map(|f| f.label().to_string()));
    w.write_record(&head).map_err(csv_err(path))?;
    for i in 0..m.n_authorities() {
        let mut row = vec![m.authorities[i].clone()];
        row.extend((0..m.n_flags()).map(|j| opt_num(m.get(i, j))));
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io(path))
}

pub fn read_indicators(path: &Path) -> Result<IndicatorMatrix, ArtifactError> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let flags = header(path, &mut rdr)?;
    let (mut authorities, mut values) = (Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        authorities.push(rec[0].to_string());
        for s in rec.iter().skip(1) {
            values.push(if s.is_empty() {
                None
            } else {
                Some(s.parse::<f64>().map_err(|_| format_err(path, format!("row {}: bad number {s:?}", i + 1)))?)
            });
        }
    }
    if values.len() != authorities.len() * flags.len() {
        return Err(format_err(path, "ragged rows"));
    }
    Ok(IndicatorMatrix::new(authorities, flags, values))
}

pub fn write_categories(path: &Path, m: &CategoricalMatrix) -> Result<(), ArtifactError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut head = vec!["authority".to_string()];
    head.extend(m.flags.iter().map(|f| f.label().to_string()));
    w.write_record(&head).map_err(csv_err(path))?;
    for i in 0..m.n_units() {
        let mut row = vec![m.authorities[i].clone()];
        row.extend(m.row(i).iter().map(|v| cell(*v)));
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io(path))
}

/// Reads a categorical matrix with `categories` response levels; larger
/// codes are rejected.
pub fn read_categories(path: &Path, categories: usize) -> Result<CategoricalMatrix, ArtifactError> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let flags = header(path, &mut rdr)?;
    let (mut authorities, mut values) = (Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        authorities.push(rec[0].to_string());
        for s in rec.iter().skip(1) {
            values.push(if s.is_empty() {
                None
            } else {
                let y: u8 =
                    s.parse().map_err(|_| format_err(path, format!("row {}: bad category {s:?}", i + 1)))?;
                if y as usize >= categories {
                    return Err(format_err(path, format!("row {}: category {y} >= {categories}", i + 1)));
                }
                Some(y)
            });
        }
    }
    if values.len() != authorities.len() * flags.len() {
        return Err(format_err(path, "ragged rows"));
    }
    Ok(CategoricalMatrix::new(authorities, flags, categories, values))
}

/// Square correlation matrix with flag labels on both margins.
pub fn write_correlation_matrix(path: &Path, r: &CorrelationReport) -> Result<(), ArtifactError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut head = vec!["flag".to_string()];
    head.extend(r.flags.iter().map(|f| f.label().to_string()));
    w.write_record(&head).map_err(csv_err(path))?;
    for (a, fa) in r.flags.iter().enumerate() {
        let mut row = vec![fa.label().to_string()];
        row.extend((0..r.flags.len()).map(|b| opt_num(r.r(a, b))));
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io(path))
}

/// One line per unordered flag pair.
pub fn write_correlation_pairs(path: &Path, r: &CorrelationReport) -> Result<(), ArtifactError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["flag_a", "flag_b", "r", "p", "significant", "n"]).map_err(csv_err(path))?;
    let j = r.flags.len();
    for a in 0..j {
        for b in a + 1..j {
            let idx = a * j + b;
            w.write_record([
                r.flags[a].label().to_string(),
                r.flags[b].label().to_string(),
                opt_num(r.matrix[idx]),
                opt_num(r.p_values[idx]),
                r.significant[idx].to_string(),
                r.complete_pairs[idx].to_string(),
            ])
            .map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(io(path))
}

/// Selection table: log-likelihood, parameter count, the four indexes, the
/// likelihood-ratio test against the previous row, and relative improvements.
pub fn write_selection_table(path: &Path, rep: &SelectionReport) -> Result<(), ArtifactError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record([
        "dims", "loglik", "n_par", "aic", "sabic", "hqc", "bic", "lrt_chi2", "lrt_df", "lrt_p", "impr_aic_pct",
        "impr_sabic_pct", "impr_hqc_pct", "impr_bic_pct", "chosen",
    ])
    .map_err(csv_err(path))?;
    for row in &rep.rows {
        let imp = rep.improvements.iter().find(|i| i.dims == row.dims);
        let c = &row.criteria;
        w.write_record([
            row.dims.to_string(),
            num(row.loglik),
            row.k.to_string(),
            num(c.aic),
            num(c.sabic),
            num(c.hqc),
            num(c.bic),
            opt_num(row.lrt.map(|t| t.chi2)),
            cell(row.lrt.map(|t| t.df)),
            opt_num(row.lrt.map(|t| t.p)),
            opt_num(imp.map(|i| i.aic)),
            opt_num(imp.map(|i| i.sabic)),
            opt_num(imp.map(|i| i.hqc)),
            opt_num(imp.map(|i| i.bic)),
            (row.dims == rep.chosen_dims).to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io(path))
}

pub fn write_rows(path: &Path, rows: &[Vec<String>]) -> Result<(), ArtifactError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in rows {
        w.write_record(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(io(path))
}
