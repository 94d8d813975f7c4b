//! Quadrature grids over a standard multivariate normal latent trait.

use alloc::vec;
use alloc::vec::Vec;

use libm::{fabs, floor, pow, sqrt};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::special::normal_quantile;

pub const DEFAULT_GH_NODES: usize = 15;
pub const DEFAULT_QMC_SIZE: usize = 5000;
pub const DEFAULT_QMC_SEED: u64 = 20_170_101;
/// Largest dimension that still uses a tensor Gauss–Hermite grid by default.
pub const MAX_TENSOR_DIMS: usize = 3;

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "scheme", rename_all = "snake_case"))]
pub enum GridScheme {
    TensorGaussHermite { nodes_per_dim: usize },
    /// Randomly shifted Halton sequence mapped through the normal quantile.
    QuasiMonteCarlo { size: usize, seed: u64 },
    /// Caller-supplied nodes and weights (dense oracle grids in tests).
    Custom,
}

/// How to build a grid for a given dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridSettings {
    pub gh_nodes: usize,
    pub max_tensor_dims: usize,
    pub qmc_size: usize,
    pub qmc_seed: u64,
}

impl Default for GridSettings {
    fn default() -> Self {
        Self {
            gh_nodes: DEFAULT_GH_NODES,
            max_tensor_dims: MAX_TENSOR_DIMS,
            qmc_size: DEFAULT_QMC_SIZE,
            qmc_seed: DEFAULT_QMC_SEED,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    dims: usize,
    /// Q×D, row-major.
    nodes: Vec<f64>,
    /// Positive, summing to one.
    weights: Vec<f64>,
    scheme: GridScheme,
}

impl QuadratureGrid {
    pub fn for_dims(dims: usize, settings: &GridSettings) -> Self {
        if dims <= settings.max_tensor_dims {
            Self::tensor_gauss_hermite(dims, settings.gh_nodes)
        } else {
            Self::quasi_monte_carlo(dims, settings.qmc_size, settings.qmc_seed)
        }
    }

    pub fn tensor_gauss_hermite(dims: usize, nodes_per_dim: usize) -> Self {
        assert!(dims >= 1 && nodes_per_dim >= 1);
        let (x, w) = gauss_hermite(nodes_per_dim);
        let total = pow(nodes_per_dim as f64, dims as f64) as usize;
        let mut nodes = Vec::with_capacity(total * dims);
        let mut weights = Vec::with_capacity(total);
        let mut idx = vec![0usize; dims];
        for _ in 0..total {
            let mut wt = 1.0;
            for &i in &idx {
                nodes.push(x[i]);
                wt *= w[i];
            }
            weights.push(wt);
            // odometer, last dimension fastest
            for d in (0..dims).rev() {
                idx[d] += 1;
                if idx[d] < nodes_per_dim {
                    break;
                }
                idx[d] = 0;
            }
        }
        let mut g = Self { dims, nodes, weights, scheme: GridScheme::TensorGaussHermite { nodes_per_dim } };
        g.normalize();
        g
    }

    pub fn quasi_monte_carlo(dims: usize, size: usize, seed: u64) -> Self {
        assert!(dims >= 1 && dims <= PRIMES.len(), "quasi-random grid supports 1..=16 dimensions");
        assert!(size >= 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shift: Vec<f64> = (0..dims).map(|_| unit_f64(rng.next_u64())).collect();
        let mut nodes = Vec::with_capacity(size * dims);
        for i in 1..=size as u64 {
            for (d, &s) in shift.iter().enumerate() {
                let u = radical_inverse(i, PRIMES[d]) + s;
                let u = u - floor(u);
                let u = u.clamp(1e-12, 1.0 - 1e-12);
                nodes.push(normal_quantile(u));
            }
        }
        let weights = vec![1.0 / size as f64; size];
        Self { dims, nodes, weights, scheme: GridScheme::QuasiMonteCarlo { size, seed } }
    }

    /// Grid from explicit nodes (Q×D, row-major) and positive weights; the
    /// weights are normalized to sum to one.
    pub fn from_points(dims: usize, nodes: Vec<f64>, weights: Vec<f64>) -> Self {
        assert_eq!(nodes.len(), weights.len() * dims, "node/weight mismatch");
        assert!(!weights.is_empty() && weights.iter().all(|&w| w > 0.0));
        let mut g = Self { dims, nodes, weights, scheme: GridScheme::Custom };
        g.normalize();
        g
    }

    fn normalize(&mut self) {
        let s: f64 = self.weights.iter().sum();
        for w in &mut self.weights {
            *w /= s;
        }
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, q: usize) -> &[f64] {
        &self.nodes[q * self.dims..(q + 1) * self.dims]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn scheme(&self) -> GridScheme {
        self.scheme
    }
}

fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += (i % base) as f64 * f;
        i /= base;
        f *= inv;
    }
    r
}

/// Gauss–Hermite rule for the standard normal density: `n` ascending nodes
/// and weights summing to one.
///
/// Roots of the orthonormal Hermite polynomials are found by Newton
/// iteration from asymptotic initial guesses.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    const PIM4: f64 = 0.751_125_544_464_942_5; // π^(−1/4)
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    let m = (n + 1) / 2;
    let mut z = 0.0;
    for i in 0..m {
        z = match i {
            0 => sqrt(2.0 * nf + 1.0) - 1.855_75 * pow(2.0 * nf + 1.0, -0.166_67),
            1 => z - 1.14 * pow(nf, 0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * sqrt(2.0 / jf) * p2 - sqrt((jf - 1.0) / jf) * p3;
            }
            pp = sqrt(2.0 * nf) * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if fabs(z - z1) <= 1e-15 {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    let sqrt_pi = sqrt(core::f64::consts::PI);
    let sqrt2 = core::f64::consts::SQRT_2;
    let mut pairs: Vec<(f64, f64)> = x.iter().zip(&w).map(|(&xi, &wi)| (xi * sqrt2, wi / sqrt_pi)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}
