//! Direct oblimin (quartimin, γ = 0) rotation by gradient projection, and
//! oblique Procrustes alignment.

use alloc::vec::Vec;

use libm::{fabs, sqrt};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::matrix::Matrix;
use crate::special::normal_quantile;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RotationError {
    #[error("rotation did not converge in {iterations} iterations (gradient norm {gradient_norm:e})")]
    NotConverged { iterations: usize, gradient_norm: f64 },
    #[error("rotation matrix became singular")]
    Singular,
    #[error("loading matrix has no columns")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RotationConfig {
    /// Oblimin γ; only 0 (quartimin) has been validated.
    pub gamma: f64,
    /// Stop when the projected gradient norm drops below this.
    pub tolerance: f64,
    pub max_iter: usize,
    /// Random starting rotations tried after the identity start.
    pub random_starts: usize,
    pub seed: u64,
}

impl Default for RotationConfig {
    fn default() -> Self {
        Self { gamma: 0.0, tolerance: 1e-6, max_iter: 200_000, random_starts: 10, seed: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RotatedSolution {
    /// Rotated pattern loadings, J×D.
    pub loadings: Matrix,
    /// Factor correlations, D×D.
    pub phi: Matrix,
    /// Column-normalized rotation `T` with `L = L₀ (Tᵀ)⁻¹`, `Φ = TᵀT`.
    pub rotation: Matrix,
    pub communalities: Vec<f64>,
    pub uniquenesses: Vec<f64>,
    pub ss_loadings: Vec<f64>,
    pub explained_variance_prop: Vec<f64>,
    pub criterion: f64,
    pub gamma: f64,
    pub iterations: usize,
}

/// Oblimin criterion `Σ_j Σ_{d≠e} l²_jd l²_je / 4` for γ = 0; for general γ the
/// column-centring term is included.
pub fn oblimin_criterion(l: &Matrix, gamma: f64) -> f64 {
    vgq(l, gamma).0
}

/// Criterion value and its gradient with respect to `L`.
fn vgq(l: &Matrix, gamma: f64) -> (f64, Matrix) {
    let (p, k) = (l.rows(), l.cols());
    let l2 = l.map(|x| x * x);
    // X = (I − γ/p 11ᵀ) L² (11ᵀ − I)
    let mut x = Matrix::zeros(p, k);
    for j in 0..p {
        let rs: f64 = l2.row(j).iter().sum();
        for d in 0..k {
            x[(j, d)] = rs - l2[(j, d)];
        }
    }
    if gamma != 0.0 {
        for d in 0..k {
            let mean = (0..p).map(|j| x[(j, d)]).sum::<f64>() / p as f64;
            for j in 0..p {
                x[(j, d)] -= gamma * mean;
            }
        }
    }
    let mut f = 0.0;
    let mut g = Matrix::zeros(p, k);
    for j in 0..p {
        for d in 0..k {
            f += l2[(j, d)] * x[(j, d)];
            g[(j, d)] = l[(j, d)] * x[(j, d)];
        }
    }
    (f / 4.0, g)
}

fn normalize_columns(t: &mut Matrix) {
    for d in 0..t.cols() {
        let n = sqrt((0..t.rows()).map(|i| t[(i, d)] * t[(i, d)]).sum::<f64>());
        for i in 0..t.rows() {
            t[(i, d)] /= n;
        }
    }
}

struct Run {
    t: Matrix,
    l: Matrix,
    f: f64,
    iterations: usize,
    gradient_norm: f64,
    converged: bool,
}

fn gpf_oblique(a: &Matrix, start: Matrix, cfg: &RotationConfig) -> Result<Run, RotationError> {
    let rotate = |t: &Matrix| -> Result<(Matrix, Matrix), RotationError> {
        let ti = t.inverse().ok_or(RotationError::Singular)?;
        Ok((a.matmul(&ti.transpose()), ti))
    };
    let gradient = |l: &Matrix, gq: &Matrix, ti: &Matrix| -> Matrix {
        l.transpose().matmul(gq).matmul(ti).transpose().scale(-1.0)
    };
    let mut t = start;
    let (mut l, ti) = rotate(&t)?;
    let (mut f, gq) = vgq(&l, cfg.gamma);
    let mut g = gradient(&l, &gq, &ti);
    let mut al = 1.0;
    let k = t.cols();
    let mut s = f64::INFINITY;
    for iter in 0..=cfg.max_iter {
        // project onto the tangent space of column-normalized matrices
        let mut gp = g.clone();
        for d in 0..k {
            let c: f64 = (0..k).map(|i| t[(i, d)] * g[(i, d)]).sum();
            for i in 0..k {
                gp[(i, d)] -= t[(i, d)] * c;
            }
        }
        s = sqrt(gp.sum_sq());
        if s < cfg.tolerance {
            return Ok(Run { t, l, f, iterations: iter, gradient_norm: s, converged: true });
        }
        al *= 2.0;
        let mut accepted = None;
        for _ in 0..=10 {
            let mut tt = t.sub(&gp.scale(al));
            normalize_columns(&mut tt);
            let (lt, tti) = rotate(&tt)?;
            let (ft, gqt) = vgq(&lt, cfg.gamma);
            let improvement = f - ft;
            let last = (tt, lt, ft, gqt, tti);
            if improvement > 0.5 * s * s * al {
                accepted = Some(last);
                break;
            }
            accepted = Some(last);
            al /= 2.0;
        }
        let (tt, lt, ft, gqt, tti) = accepted.expect("line search ran");
        t = tt;
        l = lt;
        f = ft;
        g = gradient(&l, &gqt, &tti);
    }
    Ok(Run { t, l, f, iterations: cfg.max_iter, gradient_norm: s, converged: false })
}

fn random_start(k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let mut t = Matrix::zeros(k, k);
    for i in 0..k {
        for d in 0..k {
            let u = ((rng.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64;
            t[(i, d)] = normal_quantile(u);
        }
    }
    normalize_columns(&mut t);
    t
}

/// Oblimin rotation of a J×D loading matrix.
///
/// Starts from the identity and from `random_starts` random rotations; the
/// lowest converged criterion wins, ties going to the earlier start. The
/// result has columns ordered by decreasing sum of squared loadings and
/// signs chosen so each column's largest-magnitude loading is positive.
pub fn oblimin_rotate(loadings: &Matrix, cfg: &RotationConfig) -> Result<RotatedSolution, RotationError> {
    let k = loadings.cols();
    if k == 0 {
        return Err(RotationError::Empty);
    }
    if k == 1 {
        return Ok(finish(loadings.clone(), Matrix::identity(1), loadings, cfg, 0.0, 0));
    }
    if loadings.rows() == k {
        if let Some(sol) = square_solution(loadings, cfg) {
            return Ok(sol);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<Run> = None;
    let mut last_failure = None;
    for start in 0..=cfg.random_starts {
        let t0 = if start == 0 { Matrix::identity(k) } else { random_start(k, &mut rng) };
        let run = match gpf_oblique(loadings, t0, cfg) {
            Ok(r) => r,
            Err(e) => {
                last_failure = Some(e);
                continue;
            }
        };
        if !run.converged {
            last_failure = Some(RotationError::NotConverged {
                iterations: run.iterations,
                gradient_norm: run.gradient_norm,
            });
            continue;
        }
        let better = match &best {
            None => true,
            Some(b) => run.f < b.f - 1e-10 * (1.0 + fabs(b.f)),
        };
        if better {
            best = Some(run);
        }
    }
    let run = match best {
        Some(r) => r,
        None => return Err(last_failure.unwrap_or(RotationError::Singular)),
    };
    Ok(finish(run.l, run.t, loadings, cfg, run.f, run.iterations))
}

/// With as many items as dimensions the criterion reaches zero exactly at
/// `T = AᵀΛ⁻¹` (`Λ` the row norms of `A`), where the pattern is diagonal.
fn square_solution(a: &Matrix, cfg: &RotationConfig) -> Option<RotatedSolution> {
    let k = a.cols();
    let mut t = a.transpose();
    normalize_columns(&mut t);
    let mut l = a.matmul(&t.transpose().inverse()?);
    for j in 0..k {
        for d in 0..k {
            if j != d {
                if fabs(l[(j, d)]) > 1e-9 {
                    return None;
                }
                l[(j, d)] = 0.0;
            }
        }
    }
    Some(finish(l, t, a, cfg, 0.0, 0))
}

fn finish(
    l: Matrix,
    t: Matrix,
    original: &Matrix,
    cfg: &RotationConfig,
    f: f64,
    iterations: usize,
) -> RotatedSolution {
    let (j_n, k) = (l.rows(), l.cols());
    let ss: Vec<f64> = (0..k).map(|d| (0..j_n).map(|j| l[(j, d)] * l[(j, d)]).sum()).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| ss[b].total_cmp(&ss[a]).then(a.cmp(&b)));
    let signs: Vec<f64> = (0..k)
        .map(|d| {
            let mut best = 0.0f64;
            for j in 0..j_n {
                if fabs(l[(j, d)]) > fabs(best) {
                    best = l[(j, d)];
                }
            }
            if best < 0.0 {
                -1.0
            } else {
                1.0
            }
        })
        .collect();
    let mut lo = Matrix::zeros(j_n, k);
    let mut to = Matrix::zeros(k, k);
    for (new, &old) in order.iter().enumerate() {
        for j in 0..j_n {
            lo[(j, new)] = signs[old] * l[(j, old)];
        }
        for i in 0..k {
            to[(i, new)] = signs[old] * t[(i, old)];
        }
    }
    let mut phi = to.transpose().matmul(&to);
    for d in 0..k {
        phi[(d, d)] = 1.0;
        for e in d + 1..k {
            let v = 0.5 * (phi[(d, e)] + phi[(e, d)]);
            phi[(d, e)] = v;
            phi[(e, d)] = v;
        }
    }
    // rotation leaves L Φ Lᵀ unchanged, so the diagonal is the unrotated row norm
    let communalities: Vec<f64> =
        (0..j_n).map(|j| original.row(j).iter().map(|x| x * x).sum::<f64>().clamp(0.0, 1.0)).collect();
    let uniquenesses = communalities.iter().map(|h| 1.0 - h).collect();
    let ss_loadings: Vec<f64> = order.iter().map(|&d| ss[d]).collect();
    let explained_variance_prop = ss_loadings.iter().map(|s| s / j_n as f64).collect();
    RotatedSolution {
        loadings: lo,
        phi,
        rotation: to,
        communalities,
        uniquenesses,
        ss_loadings,
        explained_variance_prop,
        criterion: f,
        gamma: cfg.gamma,
        iterations,
    }
}

/// Least-squares oblique transform `T = (SᵀS)⁻¹ Sᵀ Target`, so that `S·T`
/// is as close as possible to `target`. `None` if `S` is rank deficient.
pub fn oblique_procrustes(source: &Matrix, target: &Matrix) -> Option<Matrix> {
    assert_eq!(source.rows(), target.rows());
    let st = source.transpose();
    Some(st.matmul(source).inverse()?.matmul(&st.matmul(target)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn reproduced(l: &Matrix, phi: &Matrix) -> Matrix {
        l.matmul(phi).matmul(&l.transpose())
    }

    #[test]
    fn simple_structure_is_a_fixed_point() {
        let l0 = Matrix::from_rows(&[[0.7, 0.0], [0.6, 0.0], [0.0, -0.8], [0.0, 0.5]]);
        let r = oblimin_rotate(&l0, &RotationConfig::default()).unwrap();
        assert_abs_diff_eq!(r.criterion, 0.0, epsilon = 1e-12);
        assert!(r.phi.max_abs_diff(&Matrix::identity(2)) < 1e-6);
        // column with SS 0.89 first, sign flipped so 0.8 is positive
        assert_abs_diff_eq!(r.loadings[(2, 0)], 0.8, epsilon = 1e-6);
        assert_abs_diff_eq!(r.loadings[(0, 1)], 0.7, epsilon = 1e-6);
    }

    #[test]
    fn preserves_reproduced_structure() {
        let l0 = Matrix::from_rows(&[
            [0.6, 0.3, 0.1],
            [0.5, -0.4, 0.2],
            [0.2, 0.5, 0.4],
            [0.7, 0.1, -0.3],
            [0.1, 0.6, 0.1],
            [0.4, 0.2, 0.6],
        ]);
        let r = oblimin_rotate(&l0, &RotationConfig::default()).unwrap();
        assert!(reproduced(&r.loadings, &r.phi).max_abs_diff(&reproduced(&l0, &Matrix::identity(3))) < 1e-8);
        assert!(r.criterion <= oblimin_criterion(&l0, 0.0));
        for d in 0..3 {
            assert_eq!(r.phi[(d, d)], 1.0);
        }
        assert!(r.ss_loadings.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn one_dimension_passes_through() {
        let l0 = Matrix::from_rows(&[[0.5], [-0.2]]);
        let r = oblimin_rotate(&l0, &RotationConfig::default()).unwrap();
        assert_eq!(r.loadings, l0);
        assert_eq!(r.phi, Matrix::identity(1));
        assert_abs_diff_eq!(r.communalities[0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(r.uniquenesses[1], 0.96, epsilon = 1e-15);
    }

    #[test]
    fn procrustes_recovers_known_transform() {
        let s = Matrix::from_rows(&[[1.0, 0.2], [0.3, 0.9], [-0.5, 0.4], [0.8, -0.1]]);
        let t = Matrix::from_rows(&[[0.9, -0.3], [0.2, 1.1]]);
        let est = oblique_procrustes(&s, &s.matmul(&t)).unwrap();
        assert!(est.max_abs_diff(&t) < 1e-12);
    }
}
