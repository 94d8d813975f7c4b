//! Stage orchestration. Every stage reads its inputs from the artifacts
//! persisted by the previous one, so stages can be rerun in isolation.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use rayon::prelude::*;
use redflag_core::correlation::{correlation_matrix, CorrelationMethod};
use redflag_core::discretize::{discretize_matrix, ThresholdSet};
use redflag_core::flags::{build_indicator_matrix, QualityReport};
use redflag_core::grm::fit;
use redflag_core::records::filter_year;
use redflag_core::selection::{select_dimension, selection_table, SelectionReport};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::artifacts::{self, write_json, write_rows};
use crate::config::RunConfig;
use crate::ingest::{assemble_contracts, load_table, IngestReport, Stage};
use crate::report::{factor_correlations, irt_summary_table, report_rotated, FitArtifact};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PipelineStage {
    Ingest,
    Flags,
    Discretize,
    Screen,
    Fit,
    Select,
    Report,
}

impl PipelineStage {
    pub const ALL: [PipelineStage; 7] = [
        PipelineStage::Ingest,
        PipelineStage::Flags,
        PipelineStage::Discretize,
        PipelineStage::Screen,
        PipelineStage::Fit,
        PipelineStage::Select,
        PipelineStage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PipelineStage::Ingest => "ingest",
            PipelineStage::Flags => "flags",
            PipelineStage::Discretize => "discretize",
            PipelineStage::Screen => "screen",
            PipelineStage::Fit => "fit",
            PipelineStage::Select => "select",
            PipelineStage::Report => "report",
        }
    }
}

impl std::fmt::Display for PipelineStage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("stage {stage} failed: {error:#}")]
pub struct PipelineError {
    pub stage: PipelineStage,
    pub error: anyhow::Error,
}

pub const FAILURE_MARKER: &str = "FAILED";
pub const MANIFEST: &str = "manifest.json";

/// Paths of the persisted artifacts below the output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
    pub fn contracts(&self) -> PathBuf {
        self.root.join("ingest/contracts.jsonl")
    }
    pub fn ingest_report(&self) -> PathBuf {
        self.root.join("ingest/ingest_report.json")
    }
    pub fn indicators(&self) -> PathBuf {
        self.root.join("flags/indicators.csv")
    }
    pub fn quality(&self) -> PathBuf {
        self.root.join("flags/quality.json")
    }
    pub fn thresholds(&self) -> PathBuf {
        self.root.join("discretize/thresholds.json")
    }
    pub fn categories(&self) -> PathBuf {
        self.root.join("discretize/categories.csv")
    }
    pub fn correlation_matrix(&self, m: CorrelationMethod) -> PathBuf {
        self.root.join(format!("screen/{}_matrix.csv", m.name()))
    }
    pub fn correlation_pairs(&self, m: CorrelationMethod) -> PathBuf {
        self.root.join(format!("screen/{}_pairs.csv", m.name()))
    }
    pub fn fit(&self, dims: usize) -> PathBuf {
        self.root.join(format!("fit/fit_d{dims}.json"))
    }
    pub fn selection_table(&self) -> PathBuf {
        self.root.join("select/selection.csv")
    }
    pub fn selection(&self) -> PathBuf {
        self.root.join("select/selection.json")
    }
    pub fn rotated(&self, dims: usize) -> PathBuf {
        self.root.join(format!("report/rotated_d{dims}.csv"))
    }
    pub fn rotated_full(&self, dims: usize) -> PathBuf {
        self.root.join(format!("report/rotated_d{dims}_full.csv"))
    }
    pub fn phi(&self, dims: usize) -> PathBuf {
        self.root.join(format!("report/factor_correlations_d{dims}.csv"))
    }
    pub fn irt_summary(&self, dims: usize) -> PathBuf {
        self.root.join(format!("report/irt_summary_d{dims}.csv"))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub seconds: f64,
    /// Output path (relative to the output directory) → SHA-256.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub threads: Option<usize>,
    pub config: Option<RunConfig>,
    /// Input table path → SHA-256.
    pub inputs: BTreeMap<String, String>,
    pub stages: BTreeMap<PipelineStage, StageRecord>,
}

/// Settings that override the config file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub threads: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

pub struct Pipeline {
    pub config: RunConfig,
    pub layout: Layout,
    pub seed: u64,
    pub threads: Option<usize>,
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let bytes = fs::read(path)?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

impl Pipeline {
    pub fn new(mut config: RunConfig, opts: &RunOptions) -> Self {
        if let Some(out) = &opts.out {
            config.output_dir = out.clone();
        }
        let seed = opts.seed.unwrap_or(config.seed);
        config.seed = seed;
        let layout = Layout::new(config.output_dir.clone());
        Self { config, layout, seed, threads: opts.threads }
    }

    /// Runs `stages` in order; on failure writes the failure marker and keeps
    /// whatever the earlier stages produced.
    pub fn run(&self, stages: &[PipelineStage]) -> Result<Manifest, PipelineError> {
        let root = &self.layout.root;
        let setup = |e: anyhow::Error| PipelineError { stage: stages[0], error: e };
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display())).map_err(setup)?;
        let marker = root.join(FAILURE_MARKER);
        if marker.exists() {
            fs::remove_file(&marker).with_context(|| format!("removing {}", marker.display())).map_err(setup)?;
        }
        let mut manifest = self.load_manifest();
        for &stage in stages {
            let start = Instant::now();
            let result = self.run_stage(stage);
            match result {
                Ok(outputs) => {
                    let mut record = StageRecord { seconds: start.elapsed().as_secs_f64(), outputs: BTreeMap::new() };
                    for p in outputs {
                        let digest = sha256_file(&p).unwrap_or_default();
                        let rel = p.strip_prefix(root).unwrap_or(&p).to_string_lossy().replace('\\', "/");
                        record.outputs.insert(rel, digest);
                    }
                    manifest.stages.insert(stage, record);
                    self.write_manifest(&mut manifest).map_err(|error| PipelineError { stage, error })?;
                }
                Err(error) => {
                    let _ = fs::write(&marker, format!("stage: {stage}\nerror: {error:#}\n"));
                    return Err(PipelineError { stage, error });
                }
            }
        }
        Ok(manifest)
    }

    fn load_manifest(&self) -> Manifest {
        artifacts::read_json(&self.layout.root.join(MANIFEST)).unwrap_or_default()
    }

    fn write_manifest(&self, m: &mut Manifest) -> anyhow::Result<()> {
        m.tool = env!("CARGO_PKG_NAME").to_string();
        m.version = env!("CARGO_PKG_VERSION").to_string();
        m.seed = self.seed;
        m.threads = self.threads;
        m.config = Some(self.config.clone());
        m.inputs = self
            .config
            .input
            .tables
            .values()
            .filter_map(|p| Some((p.to_string_lossy().into_owned(), sha256_file(p).ok()?)))
            .collect();
        write_json(&self.layout.root.join(MANIFEST), m)?;
        Ok(())
    }

    pub fn run_stage(&self, stage: PipelineStage) -> anyhow::Result<Vec<PathBuf>> {
        match stage {
            PipelineStage::Ingest => self.ingest(),
            PipelineStage::Flags => self.flags(),
            PipelineStage::Discretize => self.discretize(),
            PipelineStage::Screen => self.screen(),
            PipelineStage::Fit => self.fit(),
            PipelineStage::Select => self.select(),
            PipelineStage::Report => self.report(),
        }
    }

    fn ingest(&self) -> anyhow::Result<Vec<PathBuf>> {
        let input = &self.config.input;
        let load = |s: Stage| -> anyhow::Result<_> {
            let path = &input.tables[&s];
            Ok(load_table(path, &input.mapping, s)?)
        };
        let call = load(Stage::Call)?;
        let award = load(Stage::Award)?;
        let others = input
            .tables
            .keys()
            .filter(|s| !matches!(s, Stage::Call | Stage::Award))
            .map(|&s| load(s))
            .collect::<anyhow::Result<Vec<_>>>()?;
        let (mut records, mut report): (_, IngestReport) = assemble_contracts(&call, &award, &others, &input.mapping);
        if let Some(year) = input.year {
            let before = records.len();
            let (kept, undated) = filter_year(&records, year);
            report.year = Some(year);
            report.dropped_undated = undated;
            report.dropped_other_years = before - kept.len() - undated;
            records = kept;
        }
        let (c, r) = (self.layout.contracts(), self.layout.ingest_report());
        artifacts::write_contracts(&c, &records)?;
        write_json(&r, &report)?;
        Ok(vec![c, r])
    }

    fn flags(&self) -> anyhow::Result<Vec<PathBuf>> {
        let records = artifacts::read_contracts(&self.layout.contracts())?;
        let (m, quality): (_, QualityReport) = build_indicator_matrix(&records, &self.config.flag_specs());
        if m.n_authorities() == 0 {
            bail!("no contracting authorities in the ingested records");
        }
        let (i, q) = (self.layout.indicators(), self.layout.quality());
        artifacts::write_indicators(&i, &m)?;
        write_json(&q, &quality)?;
        Ok(vec![i, q])
    }

    fn discretize(&self) -> anyhow::Result<Vec<PathBuf>> {
        let m = artifacts::read_indicators(&self.layout.indicators())?;
        let (cm, thresholds): (_, Vec<ThresholdSet>) =
            discretize_matrix(&m, &self.config.flag_specs(), self.config.discretize.categories)?;
        let (t, c) = (self.layout.thresholds(), self.layout.categories());
        write_json(&t, &thresholds)?;
        artifacts::write_categories(&c, &cm)?;
        Ok(vec![t, c])
    }

    fn screen(&self) -> anyhow::Result<Vec<PathBuf>> {
        let m = artifacts::read_indicators(&self.layout.indicators())?;
        let mut out = Vec::new();
        for method in [CorrelationMethod::PearsonLinear, CorrelationMethod::SpearmanRank] {
            let rep = correlation_matrix(&m, method, self.config.screen.alpha);
            let (a, b) = (self.layout.correlation_matrix(method), self.layout.correlation_pairs(method));
            artifacts::write_correlation_matrix(&a, &rep)?;
            artifacts::write_correlation_pairs(&b, &rep)?;
            out.extend([a, b]);
        }
        Ok(out)
    }

    fn dims(&self) -> std::ops::RangeInclusive<usize> {
        self.config.fit.d_min..=self.config.fit.d_max
    }

    fn fit(&self) -> anyhow::Result<Vec<PathBuf>> {
        let data = artifacts::read_categories(&self.layout.categories(), self.config.discretize.categories)?;
        let cfg = self.config.fit.fit_config(self.seed);
        let dims: Vec<usize> = self.dims().collect();
        let sweep = || -> Vec<anyhow::Result<FitArtifact>> {
            dims.par_iter()
                .map(|&d| {
                    let result = fit(&data, d, &cfg).map_err(|e| anyhow!("D = {d}: {e}"))?;
                    Ok(FitArtifact { flags: data.flags.clone(), seed: self.seed, result })
                })
                .collect()
        };
        let results = match self.threads {
            Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build()?.install(sweep),
            None => sweep(),
        };
        let mut out = Vec::new();
        let mut first_error = None;
        for (d, r) in dims.iter().zip(results) {
            match r {
                Ok(a) => {
                    let p = self.layout.fit(*d);
                    write_json(&p, &a)?;
                    out.push(p);
                }
                Err(e) => {
                    first_error.get_or_insert(e);
                }
            }
        }
        match first_error {
            Some(e) => Err(e),
            None => Ok(out),
        }
    }

    fn read_fits(&self) -> anyhow::Result<Vec<FitArtifact>> {
        self.dims()
            .map(|d| {
                let p = self.layout.fit(d);
                artifacts::read_json(&p).with_context(|| format!("reading fit for D = {d}"))
            })
            .collect()
    }

    fn select(&self) -> anyhow::Result<Vec<PathBuf>> {
        let fits = self.read_fits()?;
        let n = fits[0].result.n_units;
        if fits.iter().any(|f| f.result.n_units != n) {
            bail!("fits were estimated on different numbers of units");
        }
        let rows: Vec<(usize, f64, usize)> =
            fits.iter().map(|f| (f.result.dims, f.result.loglik, f.result.n_params)).collect();
        let table = selection_table(&rows, n)?;
        let rep: SelectionReport =
            select_dimension(&table, self.config.select.threshold_pct, &self.config.select.criteria)?;
        let (t, j) = (self.layout.selection_table(), self.layout.selection());
        artifacts::write_selection_table(&t, &rep)?;
        write_json(&j, &rep)?;
        Ok(vec![t, j])
    }

    fn report(&self) -> anyhow::Result<Vec<PathBuf>> {
        let mut out = Vec::new();
        for f in self.read_fits()? {
            let d = f.result.dims;
            let rot = report_rotated(&f, self.config.report.cut);
            let paths = [self.layout.rotated(d), self.layout.rotated_full(d), self.layout.phi(d), self.layout.irt_summary(d)];
            write_rows(&paths[0], &rot.display)?;
            write_rows(&paths[1], &rot.full)?;
            write_rows(&paths[2], &factor_correlations(&f))?;
            write_rows(&paths[3], &irt_summary_table(&f))?;
            out.extend(paths);
        }
        Ok(out)
    }
}
