use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use redflag_core::flags::{evaluate_flag, homogeneity_index, winners_homogeneity};
use redflag_core::{AwardCriterion, ContractRecord, FlagId, FlagSpec, ProcedureType};

fn maybe<T>(rng: &mut ChaCha8Rng, p: f64, f: impl FnOnce(&mut ChaCha8Rng) -> T) -> Option<T> {
    if rng.gen_bool(p) {
        Some(f(rng))
    } else {
        None
    }
}

fn random_contract(rng: &mut ChaCha8Rng, i: usize) -> ContractRecord {
    let base = NaiveDate::from_ymd_opt(2017, 1, 1).unwrap();
    let received = maybe(rng, 0.8, |r| r.gen_range(0..6u32));
    ContractRecord {
        procedure_type: maybe(rng, 0.8, |r| if r.gen_bool(0.4) { ProcedureType::NonOpen } else { ProcedureType::Open }),
        award_criterion: maybe(rng, 0.8, |r| match r.gen_range(0..3) {
            0 => AwardCriterion::Meat,
            1 => AwardCriterion::LowestPrice,
            _ => AwardCriterion::Other,
        }),
        award_value: maybe(rng, 0.8, |r| if r.gen_bool(0.1) { 0.0 } else { r.gen_range(1.0..1e6) }),
        bids_received: received,
        bids_eligible: maybe(rng, 0.5, |r| r.gen_range(0..4u32)),
        bids_excluded: maybe(rng, 0.8, |r| r.gen_range(0..6u32)),
        has_variant: maybe(rng, 0.7, |r| r.gen_bool(0.3)),
        actual_end_date: maybe(rng, 0.7, |r| base + chrono::Days::new(r.gen_range(0..400))),
        winner_ids: (0..rng.gen_range(0..3)).map(|_| format!("w{}", rng.gen_range(0..4))).collect(),
        ..ContractRecord::new(format!("c{i}"), "A")
    }
}

/// Straight recount: the share of hits among contracts where `classify`
/// gives a verdict, absent below two such contracts.
fn recount(cs: &[ContractRecord], classify: impl Fn(&ContractRecord) -> Option<bool>) -> Option<f64> {
    let verdicts: Vec<bool> = cs.iter().filter_map(classify).collect();
    if verdicts.len() < 2 {
        return None;
    }
    Some(verdicts.iter().filter(|v| **v).count() as f64 / verdicts.len() as f64)
}

fn weighted_recount(cs: &[ContractRecord], classify: impl Fn(&ContractRecord) -> Option<bool>) -> Option<f64> {
    let mut total = 0.0;
    let mut hit = 0.0;
    let mut n = 0;
    for c in cs {
        if let (Some(v), Some(w)) = (classify(c), c.award_value) {
            n += 1;
            total += w;
            if v {
                hit += w;
            }
        }
    }
    if n < 2 || total == 0.0 {
        return None;
    }
    Some(hit / total)
}

fn single_bid(c: &ContractRecord) -> Option<bool> {
    c.bids_eligible.map(|e| e == 1).or(c.bids_received.map(|r| r == 1))
}

fn all_but_one(c: &ContractRecord) -> Option<bool> {
    let (r, e) = (c.bids_received?, c.bids_excluded?);
    if e > r {
        return None;
    }
    Some(r >= 2 && e + 1 == r)
}

fn close(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => (x - y).abs() < 1e-12,
        _ => false,
    }
}

#[test]
fn proportion_flags_match_brute_force_recount() {
    let mut rng = ChaCha8Rng::seed_from_u64(2017);
    for set in 0..500 {
        let n = rng.gen_range(0..12);
        let cs: Vec<ContractRecord> = (0..n).map(|i| random_contract(&mut rng, i)).collect();
        let ev = |f: FlagId| evaluate_flag(&cs, &FlagSpec::of(f));
        let checks = [
            (FlagId::NonOpenCount, recount(&cs, |c| c.procedure_type.map(|p| p == ProcedureType::NonOpen))),
            (FlagId::SingleBidCount, recount(&cs, single_bid)),
            (FlagId::MeatCount, recount(&cs, |c| c.award_criterion.map(|a| a == AwardCriterion::Meat))),
            (FlagId::AllBidsExcludedButOne, recount(&cs, all_but_one)),
            (FlagId::Modifications, recount(&cs, |c| c.actual_end_date.and(c.has_variant))),
            (
                FlagId::NonOpenVal,
                weighted_recount(&cs, |c| c.procedure_type.map(|p| p == ProcedureType::NonOpen)),
            ),
            (FlagId::SingleBidVal, weighted_recount(&cs, single_bid)),
            (FlagId::MeatVal, weighted_recount(&cs, |c| c.award_criterion.map(|a| a == AwardCriterion::Meat))),
        ];
        for (flag, want) in checks {
            let got = ev(flag);
            assert!(close(got, want), "set {set}, {flag}: got {got:?}, want {want:?}");
            if let Some(v) = got {
                assert!((0.0..=1.0).contains(&v));
            }
        }
        if let Some(h) = winners_homogeneity(&cs) {
            assert!((0.0..=1.0).contains(&h), "set {set}: H = {h}");
        }
    }
}

#[test]
fn homogeneity_reference_points() {
    assert_eq!(homogeneity_index(&[1.0]), 1.0);
    for k in 2..20 {
        let shares = vec![1.0 / k as f64; k];
        assert!(homogeneity_index(&shares).abs() < 1e-12, "K = {k}");
    }
    assert!((homogeneity_index(&[0.75, 0.25]) - 0.25).abs() < 1e-15);
}

#[test]
fn single_winner_is_fully_homogeneous() {
    let cs: Vec<ContractRecord> = (0..3)
        .map(|i| ContractRecord { winner_ids: vec!["w".into()], ..ContractRecord::new(format!("c{i}"), "A") })
        .collect();
    assert_eq!(winners_homogeneity(&cs), Some(1.0));
}
