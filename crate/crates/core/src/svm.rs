//! Linear squared-hinge SVMs.
//!
//! The primal solver minimizes
//! `sum_i max(0, 1 - s_i (x_i'w + b))^2 + lambda1 ||w||_1 + lambda2 ||w||^2`
//! by accelerated proximal gradient with function-value restart. The step is
//! `1/L` with `L = 2 sigma_max([X 1])^2 + 2 lambda2`; the spectral norm comes
//! from power iteration and is doubled on the rare step that fails the
//! majorization test.
//!
//! The dual solver handles the ridge case with a penalized bias (the bias is
//! an extra constant feature), working on a precomputed Gram matrix so that
//! leave-one-out refits cost O(n^2) per epoch regardless of `p`.

use ndarray::Array2;
use rayon::prelude::*;

use crate::elastic_net::{
    dot, kkt_from_gradient, margin_gradient, penalty, smooth_loss, soft_threshold, Design, FitResult, Loss,
    PenaltyConfig,
};
use crate::error::{Error, Result};

const POWER_ITERATIONS: usize = 100;
const LIPSCHITZ_SAFETY: f64 = 1.05;
/// KKT residual is checked every this many iterations.
const CHECK_EVERY: usize = 10;

pub const DUAL_TOL: f64 = 1e-10;
pub const DUAL_MAX_EPOCHS: usize = 100_000;

/// Largest eigenvalue of `[X 1]'[X 1]` (bias column only if `intercept`).
fn spectral_norm_sq(design: &Design, intercept: bool) -> f64 {
    let mut v = vec![1.0; design.p];
    let mut vb = if intercept { 1.0 } else { 0.0 };
    let mut estimate = 0.0;
    for _ in 0..POWER_ITERATIONS {
        let norm = (dot(&v, &v) + vb * vb).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        vb /= norm;
        let u = design.margins(&v, vb);
        v = design.t_dot(&u);
        if intercept {
            vb = u.iter().sum();
        }
        estimate = (dot(&v, &v) + vb * vb).sqrt();
    }
    estimate
}

fn smooth_part(signs: &[f64], margins: &[f64], w: &[f64], lambda2: f64) -> f64 {
    smooth_loss(signs, margins, Loss::SquaredHinge) + lambda2 * dot(w, w)
}

/// KKT residual including the intercept's stationarity condition.
fn full_kkt(design: &Design, signs: &[f64], margins: &[f64], w: &[f64], cfg: &PenaltyConfig) -> f64 {
    let g = margin_gradient(signs, margins, Loss::SquaredHinge);
    let residual = kkt_from_gradient(&design.t_dot(&g), w, cfg);
    if cfg.fit_intercept {
        residual.max(g.iter().sum::<f64>().abs())
    } else {
        residual
    }
}

pub(crate) fn solve_squared_hinge(design: &Design, signs: &[f64], cfg: &PenaltyConfig) -> Result<FitResult> {
    let (n, p) = (design.n, design.p);
    let mut lipschitz = 2.0 * LIPSCHITZ_SAFETY * spectral_norm_sq(design, cfg.fit_intercept) + 2.0 * cfg.lambda2;
    if lipschitz <= 0.0 {
        lipschitz = 1.0;
    }
    let stop = 10.0 * cfg.tol * (n as f64).max(1.0);

    let (mut w, mut b) = (vec![0.0; p], 0.0);
    let mut m = design.margins(&w, b);
    let mut f_x = smooth_part(signs, &m, &w, cfg.lambda2);
    let mut obj = f_x + penalty(&w, cfg) - cfg.lambda2 * dot(&w, &w);
    let (mut zw, mut zb) = (w.clone(), b);
    let mut t = 1.0f64;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iter {
        iterations += 1;
        let mz = design.margins(&zw, zb);
        let gm = margin_gradient(signs, &mz, Loss::SquaredHinge);
        let f_z = smooth_part(signs, &mz, &zw, cfg.lambda2);
        let mut grad_w = design.t_dot(&gm);
        for (g, &z) in grad_w.iter_mut().zip(&zw) {
            *g += 2.0 * cfg.lambda2 * z;
        }
        let grad_b = if cfg.fit_intercept { gm.iter().sum::<f64>() } else { 0.0 };

        let (nw, nb, nm, f_new) = loop {
            let step = 1.0 / lipschitz;
            let nw: Vec<f64> = zw
                .iter()
                .zip(&grad_w)
                .map(|(z, g)| soft_threshold(z - step * g, step * cfg.lambda1))
                .collect();
            let nb = zb - step * grad_b;
            let nm = design.margins(&nw, nb);
            let f_new = smooth_part(signs, &nm, &nw, cfg.lambda2);
            let mut lin = (nb - zb) * grad_b;
            let mut sq = (nb - zb) * (nb - zb);
            for j in 0..p {
                let d = nw[j] - zw[j];
                lin += d * grad_w[j];
                sq += d * d;
            }
            if f_new <= f_z + lin + 0.5 * lipschitz * sq + 1e-12 * (1.0 + f_z.abs()) {
                break (nw, nb, nm, f_new);
            }
            lipschitz *= 2.0;
        };
        let obj_new = f_new + cfg.lambda1 * nw.iter().map(|v| v.abs()).sum::<f64>();
        if !obj_new.is_finite() {
            return Err(Error::NonFiniteObjective { iterations });
        }
        let momentum = t > 1.0;
        if obj_new > obj && momentum {
            // Function-value restart: drop momentum and retry from the current iterate.
            t = 1.0;
            zw.clone_from(&w);
            zb = b;
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        for j in 0..p {
            zw[j] = nw[j] + beta * (nw[j] - w[j]);
        }
        zb = nb + beta * (nb - b);
        w = nw;
        b = nb;
        m = nm;
        f_x = f_new;
        obj = obj_new;
        t = t_next;
        if iterations % CHECK_EVERY == 0 && full_kkt(design, signs, &m, &w, cfg) <= stop {
            converged = true;
            break;
        }
    }
    debug_assert!(f_x.is_finite());
    Ok(FitResult {
        w,
        intercept: b,
        iterations,
        converged,
        objective: obj,
    })
}

/// `X X' + 1`: Gram matrix of the rows of `x` augmented with a constant feature.
pub fn augmented_gram(x: &Array2<f64>) -> Array2<f64> {
    let mut k = x.dot(&x.t());
    k.mapv_inplace(|v| v + 1.0);
    k
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    /// Dual variables aligned with the `rows` passed to [`dual_cd`].
    pub alpha: Vec<f64>,
    pub epochs: usize,
    pub converged: bool,
}

/// Dual coordinate descent for `C sum_i max(0, 1 - s_i w'z_i)^2 + ||w||^2 / 2`
/// over the observations `rows`, where `gram[i][j] = z_i'z_j`.
///
/// In the penalized form used elsewhere this is squared hinge with
/// `lambda2 = 1 / (2C)` and no separate intercept.
pub fn dual_cd(gram: &Array2<f64>, signs: &[f64], rows: &[usize], c: f64) -> Result<DualSolution> {
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::InvalidConfig(format!("C must be > 0, got {c}")));
    }
    let m = rows.len();
    let diag = 0.5 / c;
    let mut alpha = vec![0.0; m];
    // u[a] = sum_b alpha_b s_b K(rows[a], rows[b])
    let mut u = vec![0.0; m];
    let mut epochs = 0;
    let mut converged = false;
    while epochs < DUAL_MAX_EPOCHS {
        epochs += 1;
        let mut worst = 0.0f64;
        for a in 0..m {
            let i = rows[a];
            let g = signs[i] * u[a] - 1.0 + alpha[a] * diag;
            let pg = if alpha[a] == 0.0 { g.min(0.0) } else { g };
            worst = worst.max(pg.abs());
            if pg == 0.0 {
                continue;
            }
            let qii = gram[[i, i]] + diag;
            let new = (alpha[a] - g / qii).max(0.0);
            let delta = new - alpha[a];
            if delta != 0.0 {
                alpha[a] = new;
                let scale = delta * signs[i];
                for (ub, &k) in u.iter_mut().zip(rows) {
                    *ub += scale * gram[[k, i]];
                }
            }
        }
        if worst <= DUAL_TOL {
            converged = true;
            break;
        }
    }
    Ok(DualSolution {
        alpha,
        epochs,
        converged,
    })
}

/// Decision value at observation `o` of the dual model fitted on `rows`.
pub fn dual_decision(gram: &Array2<f64>, signs: &[f64], rows: &[usize], sol: &DualSolution, o: usize) -> f64 {
    rows.iter().zip(&sol.alpha).map(|(&i, &a)| a * signs[i] * gram[[o, i]]).sum()
}

/// Leave-one-out decision values of the ridge squared-hinge SVM with penalized bias.
pub fn loocv_decisions(x: &Array2<f64>, y: &[u8], c: f64) -> Result<Vec<f64>> {
    let n = x.nrows();
    if n < 3 {
        return Err(Error::InvalidDataset(format!("LOOCV needs n >= 3, got {n}")));
    }
    let gram = augmented_gram(x);
    let signs: Vec<f64> = y.iter().map(|&v| 2.0 * f64::from(v) - 1.0).collect();
    (0..n)
        .into_par_iter()
        .map(|o| {
            let rows: Vec<usize> = (0..n).filter(|&i| i != o).collect();
            let sol = dual_cd(&gram, &signs, &rows, c)?;
            if !sol.converged {
                return Err(Error::NotConverged { iterations: sol.epochs });
            }
            Ok(dual_decision(&gram, &signs, &rows, &sol, o))
        })
        .collect()
}
