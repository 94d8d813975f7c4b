use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use redflag_core::grm::{
    category_probs, cumulative_prob, fit, loadings_to_slopes, loglik_gradient, marginal_loglik,
    oblimin_criterion, oblimin_rotate, simulate_responses, slopes_to_loadings, FitConfig, GrmParams,
    QuadratureGrid, RotationConfig,
};
use redflag_core::{discretize::CategoricalMatrix, Matrix};

fn random_params(rng: &mut ChaCha8Rng, items: usize, dims: usize, cats: usize) -> GrmParams {
    let slopes = Matrix::from_vec(items, dims, (0..items * dims).map(|_| rng.gen_range(-1.5..2.0)).collect());
    let mut b = Vec::new();
    for _ in 0..items {
        let mut x = rng.gen_range(0.5..2.5);
        for _ in 0..cats - 1 {
            b.push(x);
            x -= rng.gen_range(0.3..1.5);
        }
    }
    GrmParams::new(slopes, Matrix::from_vec(items, cats - 1, b)).unwrap()
}

/// `Σ_i log ∫ φ(θ) Π_j P(y_ij | θ) dθ` by the trapezoid rule on 2001 nodes
/// over [−10, 10].
fn dense_loglik_1d(params: &GrmParams, data: &CategoricalMatrix) -> f64 {
    let n_nodes = 2001;
    let h = 20.0 / (n_nodes - 1) as f64;
    let mut total = 0.0;
    for i in 0..data.n_units() {
        let mut integral = 0.0;
        for k in 0..n_nodes {
            let t = -10.0 + k as f64 * h;
            let mut f = (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
            for j in 0..data.n_items() {
                if let Some(y) = data.get(i, j) {
                    f *= category_probs(&[t], params.slopes.row(j), params.intercepts.row(j)).unwrap()[y as usize];
                }
            }
            let w = if k == 0 || k == n_nodes - 1 { 0.5 } else { 1.0 };
            integral += w * h * f;
        }
        total += integral.ln();
    }
    total
}

#[test]
fn gauss_hermite_loglik_matches_dense_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let params = random_params(&mut rng, 3, 1, 4);
    let data = simulate_responses(&params, 20, 0.1, 77);
    let gh = marginal_loglik(&params, &data, &QuadratureGrid::tensor_gauss_hermite(1, 15)).unwrap();
    let dense = dense_loglik_1d(&params, &data);
    assert!((gh.value - dense).abs() < 1e-4, "{} vs {}", gh.value, dense);
}

#[test]
fn analytic_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for trial in 0..5 {
        let params = random_params(&mut rng, 4, 2, 4);
        let data = simulate_responses(&params, 40, 0.15, trial);
        let grid = QuadratureGrid::tensor_gauss_hermite(2, 9);
        let g = loglik_gradient(&params, &data, &grid).unwrap();
        let ll = |p: &GrmParams| marginal_loglik(p, &data, &grid).unwrap().value;
        let eps = 1e-6;
        for j in 0..4 {
            for d in 0..2 {
                let (mut up, mut dn) = (params.clone(), params.clone());
                up.slopes[(j, d)] += eps;
                dn.slopes[(j, d)] -= eps;
                let fd = (ll(&up) - ll(&dn)) / (2.0 * eps);
                let an = g.slopes[(j, d)];
                assert!((fd - an).abs() <= 1e-5 * an.abs().max(1.0), "slope ({j},{d}): {fd} vs {an}");
            }
            for y in 0..3 {
                let (mut up, mut dn) = (params.clone(), params.clone());
                up.intercepts[(j, y)] += eps;
                dn.intercepts[(j, y)] -= eps;
                let fd = (ll(&up) - ll(&dn)) / (2.0 * eps);
                let an = g.intercepts[(j, y)];
                assert!((fd - an).abs() <= 1e-5 * an.abs().max(1.0), "intercept ({j},{y}): {fd} vs {an}");
            }
        }
    }
}

#[test]
fn em_ascends_and_permutation_leaves_loglik_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let truth = random_params(&mut rng, 6, 1, 4);
    let data = simulate_responses(&truth, 400, 0.05, 3);
    let cfg = FitConfig::default();
    let r = fit(&data, 1, &cfg).unwrap();
    for w in r.trace.windows(2) {
        assert!(w[1] >= w[0] - 1e-10 * w[0].abs(), "log-likelihood fell from {} to {}", w[0], w[1]);
    }
    let mut order: Vec<usize> = (0..data.n_units()).collect();
    order.reverse();
    order.rotate_left(137);
    let j = data.n_items();
    let permuted = CategoricalMatrix::new(
        order.iter().map(|&i| data.authorities[i].clone()).collect(),
        data.flags.clone(),
        data.categories,
        order.iter().flat_map(|&i| data.row(i).to_vec()).collect(),
    );
    assert_eq!(permuted.values.len(), data.n_units() * j);
    let rp = fit(&permuted, 1, &cfg).unwrap();
    assert!((r.loglik - rp.loglik).abs() < 1e-6 * r.loglik.abs(), "{} vs {}", r.loglik, rp.loglik);
    for item in 0..j {
        let d = r.summary.difficulty[item].as_ref().unwrap();
        assert!(d.windows(2).all(|w| w[0] < w[1]));
    }
}

/// Minimum of the quartimin criterion over oblique rotations of a 4×2
/// matrix: rotation columns `(cos φ, sin φ)` scanned on a coarse grid, then
/// on finer grids around the best cell.
fn grid_search_minimum(a: &Matrix) -> f64 {
    let crit = |p1: f64, p2: f64| -> f64 {
        let t = Matrix::from_rows(&[[p1.cos(), p2.cos()], [p1.sin(), p2.sin()]]);
        match t.transpose().inverse() {
            Some(ti) => oblimin_criterion(&a.matmul(&ti), 0.0),
            None => f64::INFINITY,
        }
    };
    let pi = std::f64::consts::PI;
    let mut best = (f64::INFINITY, 0.0, 0.0);
    let n = 400;
    for i in 0..n {
        for k in 0..n {
            let (p1, p2) = (pi * i as f64 / n as f64, pi * k as f64 / n as f64);
            let v = crit(p1, p2);
            if v < best.0 {
                best = (v, p1, p2);
            }
        }
    }
    let mut step = pi / n as f64;
    for _ in 0..6 {
        let (_, c1, c2) = best;
        for i in -20..=20 {
            for k in -20..=20 {
                let (p1, p2) = (c1 + step * i as f64 / 10.0, c2 + step * k as f64 / 10.0);
                let v = crit(p1, p2);
                if v < best.0 {
                    best = (v, p1, p2);
                }
            }
        }
        step /= 10.0;
    }
    best.0
}

#[test]
fn quartimin_matches_grid_search_on_four_by_two() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..10 {
        let a = Matrix::from_vec(4, 2, (0..8).map(|_| rng.gen_range(-0.8..0.8)).collect());
        let r = oblimin_rotate(&a, &RotationConfig::default()).unwrap();
        let oracle = grid_search_minimum(&a);
        assert!((r.criterion - oracle).abs() < 1e-4, "{} vs {}", r.criterion, oracle);
    }
}

fn arb_loadings() -> impl Strategy<Value = Matrix> {
    (2usize..=5).prop_flat_map(|d| {
        (d.max(3)..=15).prop_flat_map(move |j| {
            prop::collection::vec(-0.6f64..0.6, j * d).prop_map(move |v| Matrix::from_vec(j, d, v))
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn oblimin_preserves_reproduced_structure(l0 in arb_loadings()) {
        let r = oblimin_rotate(&l0, &RotationConfig::default()).unwrap();
        let before = l0.matmul(&l0.transpose());
        let after = r.loadings.matmul(&r.phi).matmul(&r.loadings.transpose());
        prop_assert!(after.max_abs_diff(&before) < 1e-6);
        let d = l0.cols();
        for a in 0..d {
            prop_assert_eq!(r.phi[(a, a)], 1.0);
            for b in 0..d {
                prop_assert_eq!(r.phi[(a, b)], r.phi[(b, a)]);
            }
        }
        for (h, u) in r.communalities.iter().zip(&r.uniquenesses) {
            prop_assert!((h + u - 1.0).abs() < 1e-12);
        }
        prop_assert!(r.ss_loadings.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(r.criterion <= oblimin_criterion(&l0, 0.0) + 1e-12);
    }

    #[test]
    fn category_probabilities_form_a_distribution(
        theta in prop::collection::vec(-6.0f64..6.0, 3),
        a in prop::collection::vec(-3.0f64..3.0, 3),
        b0 in -4.0f64..4.0,
        gaps in prop::collection::vec(0.01f64..3.0, 1..6),
    ) {
        let mut b = vec![b0];
        for g in gaps {
            b.push(b.last().unwrap() - g);
        }
        let p = category_probs(&theta, &a, &b).unwrap();
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn response_function_is_monotone(t in -5.0f64..5.0, dt in 0.0f64..2.0, a in 0.01f64..3.0, b in -3.0f64..3.0) {
        prop_assert!(cumulative_prob(&[t + dt, 0.0], &[a, 0.5], b) >= cumulative_prob(&[t, 0.0], &[a, 0.5], b));
    }

    #[test]
    fn loading_transform_round_trips(rows in prop::collection::vec(prop::collection::vec(-4.0f64..4.0, 3), 1..10)) {
        let a = Matrix::from_rows(&rows);
        let l = slopes_to_loadings(&a);
        prop_assert!(loadings_to_slopes(&l).unwrap().max_abs_diff(&a) < 1e-10);
        for (j, row) in rows.iter().enumerate() {
            let s: f64 = row.iter().map(|x| x * x).sum();
            let h: f64 = l.row(j).iter().map(|x| x * x).sum();
            prop_assert!((h - s / (1.0 + s)).abs() < 1e-12);
        }
    }
}
