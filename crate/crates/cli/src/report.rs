//! Display tables for fitted models.

use redflag_core::grm::FitResult;
use redflag_core::FlagId;
use serde::{Deserialize, Serialize};

use crate::artifacts::num;

/// A fit together with the item labels and the seed it was produced with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitArtifact {
    pub flags: Vec<FlagId>,
    pub seed: u64,
    pub result: FitResult,
}

/// Rotated loading table: the display version blanks loadings below the cut
/// and rounds to three decimals; the full version keeps every digit.
#[derive(Debug, Clone, PartialEq)]
pub struct RotatedReport {
    pub display: Vec<Vec<String>>,
    pub full: Vec<Vec<String>>,
}

fn header(dims: usize) -> Vec<String> {
    let mut h = vec!["flag".to_string()];
    h.extend((1..=dims).map(|d| format!("D{d}")));
    h.push("h2".into());
    h
}

pub fn report_rotated(fit: &FitArtifact, cut: f64) -> RotatedReport {
    let rot = &fit.result.rotated;
    let dims = rot.loadings.cols();
    let mut display = vec![header(dims)];
    let mut full = vec![header(dims)];
    for (j, flag) in fit.flags.iter().enumerate() {
        let mut d = vec![flag.label().to_string()];
        let mut f = d.clone();
        for k in 0..dims {
            let l = rot.loadings[(j, k)];
            d.push(if l.abs() < cut { String::new() } else { format!("{l:.3}") });
            f.push(num(l));
        }
        d.push(format!("{:.3}", rot.communalities[j]));
        f.push(num(rot.communalities[j]));
        display.push(d);
        full.push(f);
    }
    for (label, values) in [("SS loadings", &rot.ss_loadings), ("Prop. explained", &rot.explained_variance_prop)] {
        let mut d = vec![label.to_string()];
        let mut f = d.clone();
        for v in values {
            d.push(format!("{v:.3}"));
            f.push(num(*v));
        }
        d.push(String::new());
        f.push(String::new());
        display.push(d);
        full.push(f);
    }
    RotatedReport { display, full }
}

/// Factor correlation matrix of the rotated solution.
pub fn factor_correlations(fit: &FitArtifact) -> Vec<Vec<String>> {
    let phi = &fit.result.rotated.phi;
    let dims = phi.cols();
    let mut rows = vec![std::iter::once(String::new()).chain((1..=dims).map(|d| format!("D{d}"))).collect()];
    for a in 0..dims {
        let mut r = vec![format!("D{}", a + 1)];
        r.extend((0..dims).map(|b| num(phi[(a, b)])));
        rows.push(r);
    }
    rows
}

/// Overall discrimination and difficulties per item.
pub fn irt_summary_table(fit: &FitArtifact) -> Vec<Vec<String>> {
    let s = &fit.result.summary;
    let thresholds = fit.result.params.intercepts.cols();
    let mut rows = vec![std::iter::once("flag".to_string())
        .chain(std::iter::once("alpha".to_string()))
        .chain((1..=thresholds).map(|y| format!("beta_{y}")))
        .collect::<Vec<_>>()];
    for (j, flag) in fit.flags.iter().enumerate() {
        let mut r = vec![flag.label().to_string(), num(s.discrimination[j])];
        match &s.difficulty[j] {
            Some(b) => r.extend(b.iter().map(|&x| num(x))),
            None => r.extend(std::iter::repeat(String::new()).take(thresholds)),
        }
        rows.push(r);
    }
    rows
}
