//! Synthetic procurement tables with a known latent structure.
//!
//! Each authority carries two correlated traits: one drives the
//! competition-related fields (procedure, bids, criterion, advertisement,
//! supplier pool) and the other the execution fields (evaluation time,
//! variants, cost and time overruns).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, LogNormal, Normal, Poisson};

use crate::config::{InputConfig, RunConfig};
use crate::ingest::{ColumnMapping, Stage};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub authorities: usize,
    pub min_contracts: usize,
    pub max_contracts: usize,
    pub trait_correlation: f64,
    pub year: i32,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self { authorities: 300, min_contracts: 8, max_contracts: 24, trait_correlation: 0.3, year: 2017, seed: 7 }
    }
}

/// Generated tables, one header plus rows each.
#[derive(Debug, Clone, Default)]
pub struct SynthTables {
    pub tables: BTreeMap<Stage, Vec<Vec<String>>>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn date(d: NaiveDate) -> String {
    d.format("%Y-%m-%d").to_string()
}

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

pub fn generate(spec: &SynthSpec) -> SynthTables {
    assert!(spec.min_contracts >= 1 && spec.max_contracts >= spec.min_contracts);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let z = Normal::new(0.0, 1.0).unwrap();
    let value = LogNormal::new(11.0, 1.2).unwrap();
    let mut call = vec![header(&["cig", "authority_id", "publication_date", "submission_deadline", "procedure_type"])];
    let mut award = vec![header(&[
        "cig",
        "award_id",
        "award_date",
        "award_value",
        "award_criterion",
        "bids_received",
        "bids_eligible",
        "bids_excluded",
    ])];
    let mut variants = vec![header(&["award_id"])];
    let mut start = vec![header(&["award_id", "expected_end_date"])];
    let mut end = vec![header(&["award_id", "actual_end_date"])];
    let mut economic = vec![header(&["award_id", "paid_value"])];
    let mut winners = vec![header(&["award_id", "winner_id"])];

    let year_start = NaiveDate::from_ymd_opt(spec.year, 1, 1).expect("valid year");
    let rho = spec.trait_correlation;
    let mut serial = 0usize;
    for a in 0..spec.authorities {
        let authority = format!("AUTH{:04}", a + 1);
        let t1: f64 = z.sample(&mut rng);
        let t2 = rho * t1 + (1.0 - rho * rho).sqrt() * z.sample(&mut rng);
        let pool = ((12.0 * (-0.6 * t1).exp()).round() as usize).max(2);
        let n = rng.gen_range(spec.min_contracts..=spec.max_contracts);
        for _ in 0..n {
            serial += 1;
            let cig = format!("CIG{serial:06}");
            let award_id = format!("AW{serial:06}");
            let published = year_start + Days::new(rng.gen_range(0..365));
            let non_open = rng.gen_bool(sigmoid(-1.0 + 1.0 * t1));
            let adv_days = (30.0 * (-0.35 * t1 + 0.4 * z.sample(&mut rng)).exp()).round() as u64;
            let deadline = published + Days::new(adv_days);
            call.push(vec![
                cig.clone(),
                authority.clone(),
                date(published),
                date(deadline),
                if non_open { "non_open" } else { "open" }.into(),
            ]);
            // about 5% of calls are never awarded
            if rng.gen_bool(0.05) {
                continue;
            }
            let single = rng.gen_bool(sigmoid(-1.2 + 0.9 * t1));
            let received: u32 = if single {
                if rng.gen_bool(0.7) {
                    1
                } else {
                    2 + Poisson::new(1.0).unwrap().sample(&mut rng) as u32
                }
            } else {
                2 + Poisson::new(3.0 * (-0.3 * t1).exp()).unwrap().sample(&mut rng) as u32
            };
            let excluded = if received >= 2 && (single || rng.gen_bool(sigmoid(-2.5 + 0.8 * t1))) {
                received - 1
            } else if received >= 2 {
                Binomial::new((received - 1) as u64, 0.1).unwrap().sample(&mut rng) as u32
            } else {
                0
            };
            let eligible = received - excluded;
            let meat = rng.gen_bool(sigmoid(-0.3 + 0.7 * t1));
            let eval_days = (60.0 * (0.35 * t2 + 0.5 * z.sample(&mut rng)).exp()).round() as u64;
            let awarded = deadline + Days::new(eval_days);
            let raw: f64 = value.sample(&mut rng);
            let amount = (raw * 100.0).round() / 100.0;
            award.push(vec![
                cig.clone(),
                award_id.clone(),
                date(awarded),
                format!("{amount:.2}"),
                if meat { "meat" } else { "lowest_price" }.into(),
                received.to_string(),
                eligible.to_string(),
                excluded.to_string(),
            ]);
            let duration = rng.gen_range(60..=720u64);
            let expected_end = awarded + Days::new(duration);
            start.push(vec![award_id.clone(), date(expected_end)]);
            if rng.gen_bool(0.75) {
                let delay = (0.25 * t2 + 0.2 * z.sample(&mut rng)).max(0.0);
                let actual = awarded + Days::new((duration as f64 * (1.0 + delay)).round() as u64);
                end.push(vec![award_id.clone(), date(actual)]);
                if rng.gen_bool(sigmoid(-1.5 + 0.9 * t2)) {
                    variants.push(vec![award_id.clone()]);
                }
            }
            if rng.gen_bool(0.8) {
                let dev = (0.12 * t2 + 0.08 * z.sample(&mut rng)).max(-0.3);
                economic.push(vec![award_id.clone(), format!("{:.2}", amount * (1.0 + dev))]);
            }
            let first = rng.gen_range(0..pool);
            winners.push(vec![award_id.clone(), format!("{authority}-F{first:02}")]);
            if rng.gen_bool(0.05) {
                let second = (first + 1 + rng.gen_range(0..pool - 1)) % pool;
                winners.push(vec![award_id.clone(), format!("{authority}-F{second:02}")]);
            }
        }
    }
    let tables = BTreeMap::from([
        (Stage::Call, call),
        (Stage::Award, award),
        (Stage::Variants, variants),
        (Stage::Start, start),
        (Stage::End, end),
        (Stage::Economic, economic),
        (Stage::Winners, winners),
    ]);
    SynthTables { tables }
}

/// A run configuration reading the tables written by [`write`] with an identity
/// column mapping.
pub fn config_for(spec: &SynthSpec) -> RunConfig {
    let tables = Stage::ALL.iter().map(|&s| (s, PathBuf::from(format!("{s}.csv")))).collect();
    RunConfig {
        input: InputConfig { tables, mapping: ColumnMapping::identity(&Stage::ALL), year: Some(spec.year) },
        flags: None,
        discretize: Default::default(),
        screen: Default::default(),
        fit: Default::default(),
        select: Default::default(),
        report: Default::default(),
        seed: spec.seed,
        output_dir: PathBuf::from("out"),
    }
}

/// Writes the tables as CSV plus `config.toml` into `dir`.
pub fn write(dir: &Path, spec: &SynthSpec) -> anyhow::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut out = Vec::new();
    for (stage, rows) in generate(spec).tables {
        let p = dir.join(format!("{stage}.csv"));
        crate::artifacts::write_rows(&p, &rows)?;
        out.push(p);
    }
    let p = dir.join("config.toml");
    std::fs::write(&p, toml::to_string(&config_for(spec))?).with_context(|| format!("writing {}", p.display()))?;
    out.push(p);
    Ok(out)
}
