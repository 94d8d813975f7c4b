//! Response simulation from known item parameters.

use alloc::format;
use alloc::vec::Vec;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{dot, probs_at, GrmParams};
use crate::discretize::CategoricalMatrix;
use crate::flags::FlagId;
use crate::special::normal_quantile;

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    // open interval (0, 1)
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Draws `n_units` response vectors with `θ ~ N(0, I)`. Each cell is
/// independently absent with probability `missing_rate`.
///
/// Items are labelled with the first `J` flag identifiers, so at most 15
/// items are supported.
pub fn simulate_responses(
    params: &GrmParams,
    n_units: usize,
    missing_rate: f64,
    seed: u64,
) -> CategoricalMatrix {
    let (j_n, d_n, c_n) = (params.n_items(), params.dims(), params.categories());
    assert!(j_n <= FlagId::ALL.len(), "at most {} items", FlagId::ALL.len());
    assert!((0.0..1.0).contains(&missing_rate));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = alloc::vec![0.0; d_n];
    let mut probs = alloc::vec![0.0; c_n];
    let mut values = Vec::with_capacity(n_units * j_n);
    for _ in 0..n_units {
        for t in theta.iter_mut() {
            *t = normal_quantile(uniform(&mut rng));
        }
        for j in 0..j_n {
            let u = uniform(&mut rng);
            let miss = uniform(&mut rng) < missing_rate;
            probs_at(dot(params.slopes.row(j), &theta), params.intercepts.row(j), &mut probs);
            let mut acc = 0.0;
            let mut y = c_n - 1;
            for (c, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    y = c;
                    break;
                }
            }
            values.push(if miss { None } else { Some(y as u8) });
        }
    }
    let units = (0..n_units).map(|i| format!("sim{:05}", i + 1)).collect();
    CategoricalMatrix::new(units, FlagId::ALL[..j_n].to_vec(), c_n, values)
}
