use proptest::prelude::*;
use redflag_core::selection::{info_criteria, lr_test};

proptest! {
    #[test]
    fn criteria_are_affine_in_loglik(ll in -1e6f64..-1.0, shift in -1e3f64..1e3, k in 1usize..300, n in 3usize..100_000) {
        let a = info_criteria(ll, k, n).unwrap();
        let b = info_criteria(ll + shift, k, n).unwrap();
        for (x, y) in [(a.aic, b.aic), (a.sabic, b.sabic), (a.hqc, b.hqc), (a.bic, b.bic)] {
            prop_assert!((x - y - 2.0 * shift).abs() < 1e-6 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn penalties_ordered_for_moderate_samples(ll in -1e6f64..-1.0, k in 1usize..300, n in 16usize..1_000_000) {
        let c = info_criteria(ll, k, n).unwrap();
        prop_assert!(c.bic >= c.hqc && c.hqc >= c.aic);
    }

    #[test]
    fn lrt_statistic_nonnegative(a in -1e5f64..0.0, b in -1e5f64..0.0, df in 1usize..30) {
        let t = lr_test(a, b, df);
        prop_assert!(t.chi2 >= 0.0);
        prop_assert!((0.0..=1.0).contains(&t.p));
    }
}

#[test]
fn hqc_needs_three_units() {
    assert!(info_criteria(-10.0, 2, 2).is_err());
    assert!(info_criteria(-10.0, 2, 3).is_ok());
}
