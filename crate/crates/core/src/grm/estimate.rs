//! Marginal maximum likelihood by EM over a fixed quadrature grid.
//!
//! Each M-step runs damped Newton iterations per item on the expected
//! complete-data log-likelihood, accepting only non-decreasing steps, so the
//! marginal log-likelihood never decreases from one cycle to the next.

use alloc::vec;
use alloc::vec::Vec;

use libm::{exp, fabs, log};

use super::likelihood::{e_step, item_derivatives, Responses};
use super::quadrature::{GridScheme, GridSettings, QuadratureGrid};
use super::rotation::{oblimin_rotate, RotatedSolution, RotationConfig, RotationError};
use super::summary::{slopes_to_loadings, IrtSummary};
use super::{parameter_count, slope_is_free, GrmError, GrmParams};
use crate::discretize::CategoricalMatrix;
use crate::matrix::Matrix;
use crate::selection::{info_criteria, InfoCriteria, SelectionError};
use crate::special::logit;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FitConfig {
    pub grid: GridSettings,
    pub max_cycles: usize,
    /// Relative log-likelihood change between cycles.
    pub rel_tol: f64,
    /// Largest absolute parameter change in one M-step.
    pub param_tol: f64,
    /// Newton iterations per item and M-step.
    pub newton_steps: usize,
    pub rotation: RotationConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            grid: GridSettings::default(),
            max_cycles: 2000,
            rel_tol: 1e-6,
            param_tol: 1e-5,
            newton_steps: 5,
            rotation: RotationConfig::default(),
        }
    }
}

/// State of the EM iterations when estimation stopped.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FitDiagnostics {
    pub cycles: usize,
    pub loglik: f64,
    pub rel_change: f64,
    pub param_change: f64,
    /// Log-likelihood at the start of every cycle.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("EM did not converge in {} cycles (relative change {:e}, parameter change {:e})", .0.cycles, .0.rel_change, .0.param_change)]
    NotConverged(FitDiagnostics),
    #[error("item {item} has fewer than two distinct observed categories")]
    SingleCategory { item: usize },
    #[error("need 1 <= D <= J, got D = {dims} with J = {items}")]
    BadDims { dims: usize, items: usize },
    #[error("no unit has an observed response")]
    NoData,
    #[error(transparent)]
    Model(#[from] GrmError),
    #[error(transparent)]
    Rotation(#[from] RotationError),
    #[error(transparent)]
    Criteria(#[from] SelectionError),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FitResult {
    pub dims: usize,
    pub params: GrmParams,
    pub loglik: f64,
    pub n_params: usize,
    /// Units entering the likelihood.
    pub n_units: usize,
    pub skipped_units: usize,
    pub cycles: usize,
    pub trace: Vec<f64>,
    pub grid: GridScheme,
    /// Unrotated standardized loadings.
    pub loadings: Matrix,
    pub rotated: RotatedSolution,
    pub summary: IrtSummary,
    pub criteria: InfoCriteria,
    pub config: FitConfig,
}

/// Fits a `dims`-dimensional graded response model to `data`.
pub fn fit(data: &CategoricalMatrix, dims: usize, cfg: &FitConfig) -> Result<FitResult, FitError> {
    let (j_n, c_n) = (data.n_items(), data.categories);
    if dims == 0 || dims > j_n {
        return Err(FitError::BadDims { dims, items: j_n });
    }
    if c_n < 2 {
        return Err(GrmError::DegenerateShape.into());
    }
    let mut params = starting_values(data, dims)?;
    let grid = QuadratureGrid::for_dims(dims, &cfg.grid);
    let resp = Responses::new(data, &params)?;
    if resp.units.is_empty() {
        return Err(FitError::NoData);
    }
    let q_n = grid.len();
    let free: Vec<Vec<usize>> = (0..j_n).map(|j| (0..dims).filter(|&d| slope_is_free(j, d)).collect()).collect();

    let mut trace = Vec::new();
    let mut param_change = f64::INFINITY;
    let mut rel_change = f64::INFINITY;
    let mut converged = false;
    for cycle in 1..=cfg.max_cycles {
        let e = e_step(&params, &resp, &grid);
        if let Some(&prev) = trace.last() {
            let prev: f64 = prev;
            rel_change = fabs(e.loglik - prev) / fabs(prev).max(f64::MIN_POSITIVE);
        }
        trace.push(e.loglik);
        if cycle > 1 && (rel_change < cfg.rel_tol || param_change < cfg.param_tol) {
            converged = true;
            break;
        }
        param_change = 0.0;
        for j in 0..j_n {
            let counts = &e.counts[j * q_n * c_n..(j + 1) * q_n * c_n];
            let change = m_step_item(&mut params, j, &free[j], &grid, counts, cfg.newton_steps);
            param_change = param_change.max(change);
        }
    }
    let loglik = *trace.last().expect("at least one cycle");
    if !converged {
        return Err(FitError::NotConverged(FitDiagnostics {
            cycles: trace.len(),
            loglik,
            rel_change,
            param_change,
            trace,
        }));
    }

    let loadings = slopes_to_loadings(&params.slopes);
    let rotated = oblimin_rotate(&loadings, &cfg.rotation)?;
    let n_params = parameter_count(j_n, c_n, dims);
    let criteria = info_criteria(loglik, n_params, resp.units.len())?;
    Ok(FitResult {
        dims,
        summary: IrtSummary::from_params(&params),
        params,
        loglik,
        n_params,
        n_units: resp.units.len(),
        skipped_units: resp.skipped,
        cycles: trace.len(),
        trace,
        grid: grid.scheme(),
        loadings,
        rotated,
        criteria,
        config: *cfg,
    })
}

/// Slopes 1 on free entries; intercepts from smoothed cumulative proportions.
fn starting_values(data: &CategoricalMatrix, dims: usize) -> Result<GrmParams, FitError> {
    let (j_n, c_n) = (data.n_items(), data.categories);
    let mut slopes = Matrix::zeros(j_n, dims);
    let mut intercepts = Matrix::zeros(j_n, c_n - 1);
    for j in 0..j_n {
        for d in 0..dims {
            if slope_is_free(j, d) {
                slopes[(j, d)] = 1.0;
            }
        }
        let mut counts = vec![0.0; c_n];
        for i in 0..data.n_units() {
            if let Some(y) = data.get(i, j) {
                if y as usize >= c_n {
                    return Err(GrmError::CategoryOutOfRange { item: j, category: y, categories: c_n }.into());
                }
                counts[y as usize] += 1.0;
            }
        }
        if counts.iter().filter(|&&c| c > 0.0).count() < 2 {
            return Err(FitError::SingleCategory { item: j });
        }
        let total: f64 = counts.iter().sum::<f64>() + 0.5 * c_n as f64;
        let mut upper = total;
        for y in 1..c_n {
            upper -= counts[y - 1] + 0.5;
            intercepts[(j, y - 1)] = logit(upper / total);
        }
    }
    Ok(GrmParams::new(slopes, intercepts)?)
}

/// Maps natural intercepts to `(b_1, log gaps)`.
fn pack(a: &[f64], b: &[f64], free: &[usize]) -> Vec<f64> {
    let mut psi: Vec<f64> = free.iter().map(|&d| a[d]).collect();
    psi.push(b[0]);
    for w in b.windows(2) {
        psi.push(log(w[0] - w[1]));
    }
    psi
}

fn unpack(psi: &[f64], free: &[usize], a: &mut [f64], b: &mut [f64]) {
    for (k, &d) in free.iter().enumerate() {
        a[d] = psi[k];
    }
    let nf = free.len();
    b[0] = psi[nf];
    for y in 1..b.len() {
        b[y] = b[y - 1] - exp(psi[nf + y]);
    }
}

/// Damped Newton on one item; returns the largest absolute change of its
/// natural parameters.
fn m_step_item(
    params: &mut GrmParams,
    j: usize,
    free: &[usize],
    grid: &QuadratureGrid,
    counts: &[f64],
    steps: usize,
) -> f64 {
    let d_n = params.dims();
    let a0 = params.slopes.row(j).to_vec();
    let b0 = params.intercepts.row(j).to_vec();
    let nf = free.len();
    let nb = b0.len();
    let np = nf + nb;
    let mut a = a0.clone();
    let mut b = b0.clone();
    let mut psi = pack(&a, &b, free);

    let objective = |psi: &[f64], a: &mut [f64], b: &mut [f64]| -> Option<f64> {
        unpack(psi, free, a, b);
        if !b.iter().all(|x| x.is_finite()) || b.windows(2).any(|w| w[0] <= w[1]) {
            return None;
        }
        let v = item_derivatives(grid, counts, a, b, free, false).value;
        v.is_finite().then_some(v)
    };

    for _ in 0..steps {
        unpack(&psi, free, &mut a, &mut b);
        let d = item_derivatives(grid, counts, &a, &b, free, true);
        let h_nat = d.hess.expect("hessian requested");
        // Jacobian of natural parameters with respect to psi
        let mut jac = Matrix::zeros(np, np);
        for k in 0..nf {
            jac[(k, k)] = 1.0;
        }
        for i in 0..nb {
            jac[(nf + i, nf)] = 1.0;
            for k in 1..=i {
                jac[(nf + i, nf + k)] = -exp(psi[nf + k]);
            }
        }
        let grad: Vec<f64> = (0..np).map(|k| (0..np).map(|i| jac[(i, k)] * d.grad[i]).sum()).collect();
        let mut h = jac.transpose().matmul(&h_nat).matmul(&jac);
        for k in 1..nb {
            let tail: f64 = d.grad[nf + k..].iter().sum();
            h[(nf + k, nf + k)] -= exp(psi[nf + k]) * tail;
        }
        let neg = h.scale(-1.0);
        let scale = (0..np).map(|k| fabs(neg[(k, k)])).fold(1.0, f64::max);
        let mut lambda = 0.0;
        let mut delta = loop {
            let mut m = neg.clone();
            for k in 0..np {
                m[(k, k)] += lambda;
            }
            if let Some(x) = m.cholesky_solve(&grad) {
                break x;
            }
            lambda = if lambda == 0.0 { 1e-8 * scale } else { lambda * 10.0 };
            if lambda > 1e12 * scale {
                break grad.iter().map(|g| g / scale).collect();
            }
        };
        let big = delta.iter().fold(0.0f64, |m, x| m.max(fabs(*x)));
        if big > 2.0 {
            delta.iter_mut().for_each(|x| *x *= 2.0 / big);
        }
        let mut t = 1.0;
        let mut moved = 0.0;
        let mut cand = psi.clone();
        let (mut ca, mut cb) = (vec![0.0; d_n], vec![0.0; nb]);
        for _ in 0..40 {
            for k in 0..np {
                cand[k] = psi[k] + t * delta[k];
            }
            ca.copy_from_slice(&a);
            if let Some(v) = objective(&cand, &mut ca, &mut cb) {
                if v >= d.value {
                    moved = t * big.min(2.0);
                    psi.copy_from_slice(&cand);
                    break;
                }
            }
            t *= 0.5;
        }
        if moved < 1e-12 {
            break;
        }
    }
    unpack(&psi, free, &mut a, &mut b);
    let mut change = 0.0f64;
    for (x, y) in a.iter().zip(&a0).chain(b.iter().zip(&b0)) {
        change = change.max(fabs(x - y));
    }
    params.slopes.row_mut(j).copy_from_slice(&a);
    params.intercepts.row_mut(j).copy_from_slice(&b);
    change
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grm::simulate_responses;

    fn truth() -> GrmParams {
        GrmParams::new(
            Matrix::from_rows(&[[1.5], [1.0], [2.0], [0.8], [1.2]]),
            Matrix::from_rows(&[
                [1.5, 0.0, -1.5],
                [1.0, -0.2, -1.0],
                [0.5, -0.5, -2.0],
                [2.0, 0.5, -0.5],
                [0.0, -1.0, -2.5],
            ]),
        )
        .unwrap()
    }

    #[test]
    fn recovers_unidimensional_parameters() {
        let data = simulate_responses(&truth(), 1500, 0.05, 42);
        let r = fit(&data, 1, &FitConfig::default()).unwrap();
        assert_eq!(r.n_params, 5 * 3 + 5);
        for j in 0..5 {
            assert!((r.params.slopes[(j, 0)] - truth().slopes[(j, 0)]).abs() < 0.35, "item {j}");
            for y in 0..3 {
                assert!((r.params.intercepts[(j, y)] - truth().intercepts[(j, y)]).abs() < 0.35);
            }
        }
        assert!(r.trace.windows(2).all(|w| w[1] >= w[0] - 1e-9 * w[0].abs()));
    }

    #[test]
    fn constant_item_is_rejected() {
        let mut data = simulate_responses(&truth(), 50, 0.0, 1);
        for i in 0..50 {
            data.values[i * 5 + 2] = Some(1);
        }
        assert_eq!(fit(&data, 1, &FitConfig::default()).unwrap_err(), FitError::SingleCategory { item: 2 });
    }

    #[test]
    fn cycle_cap_reports_diagnostics() {
        let data = simulate_responses(&truth(), 200, 0.0, 5);
        let cfg = FitConfig { max_cycles: 2, ..FitConfig::default() };
        match fit(&data, 1, &cfg) {
            Err(FitError::NotConverged(d)) => {
                assert_eq!(d.cycles, 2);
                assert_eq!(d.trace.len(), 2);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn echelon_constraint_holds() {
        let data = simulate_responses(&truth(), 300, 0.0, 9);
        let r = fit(&data, 2, &FitConfig::default()).unwrap();
        assert_eq!(r.params.slopes[(0, 1)], 0.0);
        assert_eq!(r.n_params, 5 * 3 + 10 - 1);
    }
}
