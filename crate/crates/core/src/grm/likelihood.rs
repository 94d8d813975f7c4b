//! Marginal likelihood of the graded response model over a quadrature grid,
//! its E-step, and item-level derivatives.

use alloc::vec;
use alloc::vec::Vec;

use libm::{exp, log};

use super::quadrature::QuadratureGrid;
use super::{dot, probs_at, GrmError, GrmParams};
use crate::discretize::CategoricalMatrix;
use crate::matrix::Matrix;
use crate::special::logistic;

const TINY: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginalLoglik {
    pub value: f64,
    /// Units without any observed cell; they do not enter the likelihood.
    pub skipped_units: usize,
}

/// Observed (item, category) pairs per unit, validated against the model.
#[derive(Debug, Clone)]
pub(crate) struct Responses {
    pub units: Vec<Vec<(usize, u8)>>,
    pub skipped: usize,
}

impl Responses {
    pub fn new(data: &CategoricalMatrix, params: &GrmParams) -> Result<Self, GrmError> {
        if data.n_items() != params.n_items() {
            return Err(GrmError::DataItems { data: data.n_items(), model: params.n_items() });
        }
        let c = params.categories();
        let mut units = Vec::with_capacity(data.n_units());
        let mut skipped = 0;
        for i in 0..data.n_units() {
            let mut obs = Vec::new();
            for (j, v) in data.row(i).iter().enumerate() {
                if let Some(y) = *v {
                    if y as usize >= c {
                        return Err(GrmError::CategoryOutOfRange { item: j, category: y, categories: c });
                    }
                    obs.push((j, y));
                }
            }
            if obs.is_empty() {
                skipped += 1;
            } else {
                units.push(obs);
            }
        }
        Ok(Self { units, skipped })
    }
}

/// `log P(Y_j = c | θ_q)` laid out as `[q][j][c]`.
pub(crate) fn log_prob_table(params: &GrmParams, grid: &QuadratureGrid) -> Vec<f64> {
    let (j_n, c_n) = (params.n_items(), params.categories());
    let mut table = vec![0.0; grid.len() * j_n * c_n];
    let mut probs = vec![0.0; c_n];
    for q in 0..grid.len() {
        let theta = grid.node(q);
        for j in 0..j_n {
            probs_at(dot(params.slopes.row(j), theta), params.intercepts.row(j), &mut probs);
            let base = (q * j_n + j) * c_n;
            for c in 0..c_n {
                table[base + c] = log(probs[c].max(TINY));
            }
        }
    }
    table
}

/// Result of one E-step: the log-likelihood at the current parameters and
/// the expected category counts `r[j][q][c]`.
pub(crate) struct EStep {
    pub loglik: f64,
    pub counts: Vec<f64>,
}

pub(crate) fn e_step(params: &GrmParams, resp: &Responses, grid: &QuadratureGrid) -> EStep {
    let (j_n, c_n, q_n) = (params.n_items(), params.categories(), grid.len());
    let table = log_prob_table(params, grid);
    let log_w: Vec<f64> = grid.weights().iter().map(|&w| log(w)).collect();
    let mut counts = vec![0.0; j_n * q_n * c_n];
    let mut ll = vec![0.0; q_n];
    let mut loglik = 0.0;
    for obs in &resp.units {
        let mut max = f64::NEG_INFINITY;
        for q in 0..q_n {
            let base = q * j_n * c_n;
            let mut s = log_w[q];
            for &(j, y) in obs {
                s += table[base + j * c_n + y as usize];
            }
            ll[q] = s;
            if s > max {
                max = s;
            }
        }
        let mut total = 0.0;
        for v in ll.iter_mut() {
            *v = exp(*v - max);
            total += *v;
        }
        loglik += max + log(total);
        let inv = 1.0 / total;
        for (q, &v) in ll.iter().enumerate() {
            let post = v * inv;
            if post == 0.0 {
                continue;
            }
            for &(j, y) in obs {
                counts[(j * q_n + q) * c_n + y as usize] += post;
            }
        }
    }
    EStep { loglik, counts }
}

/// `Σ_i log Σ_q w_q Π_j P(Y_ij | θ_q)`, skipping absent cells.
pub fn marginal_loglik(
    params: &GrmParams,
    data: &CategoricalMatrix,
    grid: &QuadratureGrid,
) -> Result<MarginalLoglik, GrmError> {
    params.check_ordering()?;
    if grid.dims() != params.dims() {
        return Err(GrmError::GridDims { grid: grid.dims(), model: params.dims() });
    }
    let resp = Responses::new(data, params)?;
    let e = e_step(params, &resp, grid);
    Ok(MarginalLoglik { value: e.loglik, skipped_units: resp.skipped })
}

/// Value, gradient and (optionally) Hessian of one item's expected
/// complete-data log-likelihood `Σ_q Σ_c r_qc log P_c(θ_q)`.
///
/// Parameters are ordered as the slopes listed in `free` followed by the
/// `C − 1` intercepts.
pub(crate) struct ItemDerivs {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: Option<Matrix>,
}

pub(crate) fn item_derivatives(
    grid: &QuadratureGrid,
    counts: &[f64],
    a: &[f64],
    b: &[f64],
    free: &[usize],
    with_hessian: bool,
) -> ItemDerivs {
    let c_n = b.len() + 1;
    let nf = free.len();
    let np = nf + b.len();
    let mut value = 0.0;
    let mut grad = vec![0.0; np];
    let mut hess = if with_hessian { Some(Matrix::zeros(np, np)) } else { None };
    let mut probs = vec![0.0; c_n];
    // cumulative quantities indexed by y = 0..C, with W_0 = W_C = 0
    let mut w = vec![0.0; c_n + 1];
    let mut wd = vec![0.0; c_n + 1];
    let mut th = vec![0.0; nf];
    for q in 0..grid.len() {
        let row = &counts[q * c_n..(q + 1) * c_n];
        if row.iter().all(|&r| r == 0.0) {
            continue;
        }
        let theta = grid.node(q);
        for (k, &d) in free.iter().enumerate() {
            th[k] = theta[d];
        }
        let eta = dot(a, theta);
        probs_at(eta, b, &mut probs);
        for y in 1..c_n {
            let p = logistic(eta + b[y - 1]);
            w[y] = p * (1.0 - p);
            wd[y] = w[y] * (1.0 - 2.0 * p);
        }
        for (c, &r) in row.iter().enumerate() {
            if r == 0.0 {
                continue;
            }
            let p = probs[c].max(TINY);
            value += r * log(p);
            let (has_u, has_v) = (c >= 1, c + 1 < c_n);
            let gu = if has_u { w[c] / p } else { 0.0 };
            let gv = if has_v { -w[c + 1] / p } else { 0.0 };
            let s = r * (gu + gv);
            for k in 0..nf {
                grad[k] += s * th[k];
            }
            if has_u {
                grad[nf + c - 1] += r * gu;
            }
            if has_v {
                grad[nf + c] += r * gv;
            }
            if let Some(h) = hess.as_mut() {
                let huu = if has_u { wd[c] / p - gu * gu } else { 0.0 };
                let hvv = if has_v { -wd[c + 1] / p - gv * gv } else { 0.0 };
                let huv = if has_u && has_v { -gu * gv } else { 0.0 };
                let ss = r * (huu + hvv + 2.0 * huv);
                for k in 0..nf {
                    for l in 0..=k {
                        h[(k, l)] += ss * th[k] * th[l];
                    }
                }
                if has_u {
                    let bu = nf + c - 1;
                    let su = r * (huu + huv);
                    for k in 0..nf {
                        h[(bu, k)] += su * th[k];
                    }
                    h[(bu, bu)] += r * huu;
                }
                if has_v {
                    let bv = nf + c;
                    let sv = r * (hvv + huv);
                    for k in 0..nf {
                        h[(bv, k)] += sv * th[k];
                    }
                    h[(bv, bv)] += r * hvv;
                    if has_u {
                        h[(bv, bv - 1)] += r * huv;
                    }
                }
            }
        }
    }
    if let Some(h) = hess.as_mut() {
        // only the lower triangle was accumulated
        for k in 0..np {
            for l in k + 1..np {
                h[(k, l)] = h[(l, k)];
            }
        }
    }
    ItemDerivs { value, grad, hess }
}

/// Gradient of the quadrature-approximated marginal log-likelihood with
/// respect to every slope and intercept (constraints ignored).
#[derive(Debug, Clone, PartialEq)]
pub struct LoglikGradient {
    pub loglik: f64,
    pub slopes: Matrix,
    pub intercepts: Matrix,
}

pub fn loglik_gradient(
    params: &GrmParams,
    data: &CategoricalMatrix,
    grid: &QuadratureGrid,
) -> Result<LoglikGradient, GrmError> {
    params.check_ordering()?;
    if grid.dims() != params.dims() {
        return Err(GrmError::GridDims { grid: grid.dims(), model: params.dims() });
    }
    let resp = Responses::new(data, params)?;
    let e = e_step(params, &resp, grid);
    let (j_n, d_n, c_n, q_n) = (params.n_items(), params.dims(), params.categories(), grid.len());
    let free: Vec<usize> = (0..d_n).collect();
    let mut slopes = Matrix::zeros(j_n, d_n);
    let mut intercepts = Matrix::zeros(j_n, c_n - 1);
    for j in 0..j_n {
        let counts = &e.counts[j * q_n * c_n..(j + 1) * q_n * c_n];
        let d = item_derivatives(
            grid,
            counts,
            params.slopes.row(j),
            params.intercepts.row(j),
            &free,
            false,
        );
        slopes.row_mut(j).copy_from_slice(&d.grad[..d_n]);
        intercepts.row_mut(j).copy_from_slice(&d.grad[d_n..]);
    }
    Ok(LoglikGradient { loglik: e.loglik, slopes, intercepts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::String;
    use approx::assert_abs_diff_eq;

    use crate::flags::FlagId;

    fn data(rows: &[&[Option<u8>]], c: usize) -> CategoricalMatrix {
        let j = rows[0].len();
        CategoricalMatrix::new(
            (0..rows.len()).map(|i| alloc::format!("u{i}")).collect::<Vec<String>>(),
            FlagId::ALL[..j].to_vec(),
            c,
            rows.iter().flat_map(|r| r.iter().copied()).collect(),
        )
    }

    #[test]
    fn single_binary_response_at_zero_params() {
        let p = GrmParams::new(Matrix::zeros(1, 1), Matrix::from_rows(&[[0.0]])).unwrap();
        let grid = QuadratureGrid::tensor_gauss_hermite(1, 15);
        let ll = marginal_loglik(&p, &data(&[&[Some(1)]], 2), &grid).unwrap();
        assert_abs_diff_eq!(ll.value, 0.5f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn zero_slopes_reduce_to_intercept_only_model() {
        let b = [[1.0, -0.5, -2.0], [0.3, 0.0, -0.4]];
        let p = GrmParams::new(Matrix::zeros(2, 2), Matrix::from_rows(&b)).unwrap();
        let grid = QuadratureGrid::tensor_gauss_hermite(2, 5);
        let d = data(&[&[Some(0), Some(3)], &[Some(2), None], &[None, None]], 4);
        let ll = marginal_loglik(&p, &d, &grid).unwrap();
        let lp = |j: usize, y: usize| category_probs(&[0.0], &[0.0], &b[j]).unwrap()[y].ln();
        assert_abs_diff_eq!(ll.value, lp(0, 0) + lp(1, 3) + lp(0, 2), epsilon = 1e-12);
        assert_eq!(ll.skipped_units, 1);
    }

    use super::super::category_probs;

    #[test]
    fn rejects_out_of_range_category() {
        let p = GrmParams::new(Matrix::zeros(1, 1), Matrix::from_rows(&[[0.0]])).unwrap();
        let grid = QuadratureGrid::tensor_gauss_hermite(1, 3);
        assert!(matches!(
            marginal_loglik(&p, &data(&[&[Some(2)]], 2), &grid),
            Err(GrmError::CategoryOutOfRange { .. })
        ));
    }

    #[test]
    fn item_hessian_matches_finite_differences_of_gradient() {
        let grid = QuadratureGrid::tensor_gauss_hermite(2, 5);
        let counts: Vec<f64> = (0..grid.len() * 4).map(|k| ((k * 7919) % 13) as f64 / 5.0).collect();
        let a = [0.8, -0.4];
        let b = [1.2, 0.1, -0.9];
        let free = [0, 1];
        let d = item_derivatives(&grid, &counts, &a, &b, &free, true);
        let h = d.hess.unwrap();
        let pack = |x: &[f64]| -> Vec<f64> { x.to_vec() };
        let base: Vec<f64> = pack(&[a[0], a[1], b[0], b[1], b[2]]);
        let eval = |x: &[f64]| item_derivatives(&grid, &counts, &x[..2], &x[2..], &free, false);
        for k in 0..5 {
            let eps = 1e-5;
            let mut up = base.clone();
            up[k] += eps;
            let mut dn = base.clone();
            dn[k] -= eps;
            let (gu, gd) = (eval(&up), eval(&dn));
            // gradient vs value
            assert_abs_diff_eq!((gu.value - gd.value) / (2.0 * eps), d.grad[k], epsilon = 1e-5);
            for l in 0..5 {
                let fd = (gu.grad[l] - gd.grad[l]) / (2.0 * eps);
                assert_abs_diff_eq!(fd, h[(l, k)], epsilon = 1e-4);
            }
        }
    }
}
