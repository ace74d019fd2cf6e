//! Elastic-net solvers for squared, logistic and squared-hinge loss.
//!
//! The objective is written with the penalties added to the *unscaled* loss:
//!
//! ```text
//! squared:  ||y - Xw - b||^2                     + lambda1 ||w||_1 + lambda2 ||w||_2^2
//! logistic: sum_i log(1 + exp(-s_i (x_i'w + b)))  + lambda1 ||w||_1 + lambda2 ||w||_2^2
//! hinge^2:  sum_i max(0, 1 - s_i (x_i'w + b))^2     + lambda1 ||w||_1 + lambda2 ||w||_2^2
//! ```
//!
//! with `s_i = 2 y_i - 1`. There is no `1/(2n)` factor, so `lambda1` values are
//! not interchangeable with glmnet or scikit-learn settings. The intercept `b`
//! is never penalized.
//!
//! Squared loss is minimized by cyclic coordinate descent with soft
//! thresholding. Logistic loss uses an outer majorization step (the logistic
//! curvature is bounded by 1/4 per observation) followed by coordinate descent
//! on the resulting penalized quadratic, which guarantees monotone descent.
//! Coordinates are always visited in order `0..p`. Squared hinge is handed to
//! the accelerated proximal-gradient solver in [`crate::svm`].
//!
//! With `lambda2 = 0` the minimizer need not be unique (duplicated columns can
//! split their weight arbitrarily). Converged fits are then reduced to a basic
//! solution: weight is moved along null directions of the active columns until
//! they are linearly independent. Fitted values, and so the objective, do not
//! change.

use crate::data::{Dataset, IndexSet};
use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 10_000;
pub const DEFAULT_ZERO_TOL: f64 = 1e-10;

/// Coordinate-descent sweeps on each majorized quadratic before re-linearizing.
const INNER_SWEEPS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    Squared,
    Logistic,
    SquaredHinge,
}

impl std::str::FromStr for Loss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared" => Ok(Loss::Squared),
            "logistic" => Ok(Loss::Logistic),
            "squared_hinge" | "squaredhinge" => Ok(Loss::SquaredHinge),
            other => Err(Error::InvalidConfig(format!("unknown loss `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PenaltyConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub loss: Loss,
    pub max_iter: usize,
    /// Stop once the largest coordinate change of a sweep is at most `tol`
    /// and the KKT residual is at most `10 * tol`.
    pub tol: f64,
    pub fit_intercept: bool,
}

impl PenaltyConfig {
    pub fn new(lambda1: f64, lambda2: f64, loss: Loss) -> Result<Self> {
        let cfg = PenaltyConfig {
            lambda1,
            lambda2,
            loss,
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
            fit_intercept: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn squared(lambda1: f64, lambda2: f64) -> Result<Self> {
        Self::new(lambda1, lambda2, Loss::Squared)
    }

    pub fn logistic(lambda1: f64, lambda2: f64) -> Result<Self> {
        Self::new(lambda1, lambda2, Loss::Logistic)
    }

    pub fn squared_hinge(lambda1: f64, lambda2: f64) -> Result<Self> {
        Self::new(lambda1, lambda2, Loss::SquaredHinge)
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_intercept(mut self, fit_intercept: bool) -> Self {
        self.fit_intercept = fit_intercept;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.lambda1.is_finite() && self.lambda1 >= 0.0) {
            return bad(format!("lambda1 must be finite and >= 0, got {}", self.lambda1));
        }
        if !(self.lambda2.is_finite() && self.lambda2 >= 0.0) {
            return bad(format!("lambda2 must be finite and >= 0, got {}", self.lambda2));
        }
        if self.max_iter == 0 {
            return bad("max_iter must be positive".into());
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return bad(format!("tol must be > 0, got {}", self.tol));
        }
        Ok(())
    }

    /// Checks the configuration against a problem of size `n x p`.
    pub fn validate_for(&self, n: usize, p: usize) -> Result<()> {
        self.validate()?;
        if self.lambda1 + self.lambda2 == 0.0 && p > n {
            return Err(Error::InvalidConfig(format!(
                "unpenalized fit is ill-posed with p = {p} > n = {n}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub w: Vec<f64>,
    pub intercept: f64,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
}

impl FitResult {
    /// `x_i'w + b` for every row of `x` (row-major, `p` columns).
    pub fn decision(&self, d: &Dataset) -> Vec<f64> {
        d.x()
            .rows()
            .into_iter()
            .map(|row| row.iter().zip(&self.w).map(|(a, b)| a * b).sum::<f64>() + self.intercept)
            .collect()
    }
}

/// Soft-thresholding `sign(z) max(|z| - t, 0)`.
#[inline]
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Column-major view of a design matrix with cached squared column norms.
pub(crate) struct Design<'a> {
    pub n: usize,
    pub p: usize,
    cols: &'a [f64],
    sqnorm: Vec<f64>,
}

impl<'a> Design<'a> {
    pub fn new(cols: &'a [f64], n: usize, p: usize) -> Self {
        debug_assert_eq!(cols.len(), n * p);
        let sqnorm = cols.chunks_exact(n).map(|c| c.iter().map(|v| v * v).sum()).collect();
        Design { n, p, cols, sqnorm }
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.cols[j * self.n..(j + 1) * self.n]
    }

    /// `Xw + b`.
    pub fn margins(&self, w: &[f64], b: f64) -> Vec<f64> {
        let mut m = vec![b; self.n];
        for (j, &wj) in w.iter().enumerate() {
            if wj != 0.0 {
                for (mi, xi) in m.iter_mut().zip(self.col(j)) {
                    *mi += wj * xi;
                }
            }
        }
        m
    }

    /// `X'v`.
    pub fn t_dot(&self, v: &[f64]) -> Vec<f64> {
        (0..self.p).map(|j| dot(self.col(j), v)).collect()
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One cyclic sweep of coordinate descent on `||r||^2 + a ||w||_1 + c ||w||^2`
/// where `r` is the current residual. Returns the largest coordinate change.
fn sweep(design: &Design, r: &mut [f64], w: &mut [f64], b: &mut f64, a: f64, c: f64, intercept: bool) -> f64 {
    let mut max_delta = 0.0f64;
    for j in 0..design.p {
        let denom = design.sqnorm[j] + c;
        let old = w[j];
        let new = if denom > 0.0 {
            let xj = design.col(j);
            let z = dot(xj, r) + design.sqnorm[j] * old;
            soft_threshold(z, 0.5 * a) / denom
        } else {
            0.0
        };
        let delta = new - old;
        if delta != 0.0 {
            for (ri, xi) in r.iter_mut().zip(design.col(j)) {
                *ri -= delta * xi;
            }
            w[j] = new;
            max_delta = max_delta.max(delta.abs());
        }
    }
    if intercept {
        let shift = r.iter().sum::<f64>() / r.len() as f64;
        if shift != 0.0 {
            r.iter_mut().for_each(|ri| *ri -= shift);
            *b += shift;
            max_delta = max_delta.max(shift.abs());
        }
    }
    max_delta
}

pub(crate) fn penalty(w: &[f64], cfg: &PenaltyConfig) -> f64 {
    let l1: f64 = w.iter().map(|v| v.abs()).sum();
    let l2: f64 = w.iter().map(|v| v * v).sum();
    cfg.lambda1 * l1 + cfg.lambda2 * l2
}

/// `log(1 + exp(t))` without overflow.
#[inline]
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn smooth_loss(response: &[f64], margins: &[f64], loss: Loss) -> f64 {
    match loss {
        Loss::Squared => response.iter().zip(margins).map(|(y, m)| (y - m) * (y - m)).sum(),
        Loss::Logistic => response.iter().zip(margins).map(|(s, m)| softplus(-s * m)).sum(),
        Loss::SquaredHinge => response
            .iter()
            .zip(margins)
            .map(|(s, m)| {
                let h = (1.0 - s * m).max(0.0);
                h * h
            })
            .sum(),
    }
}

/// Derivative of the smooth loss with respect to each margin.
pub(crate) fn margin_gradient(response: &[f64], margins: &[f64], loss: Loss) -> Vec<f64> {
    match loss {
        Loss::Squared => response.iter().zip(margins).map(|(y, m)| -2.0 * (y - m)).collect(),
        Loss::Logistic => response.iter().zip(margins).map(|(s, m)| -s * sigmoid(-s * m)).collect(),
        Loss::SquaredHinge => response
            .iter()
            .zip(margins)
            .map(|(s, m)| -2.0 * s * (1.0 - s * m).max(0.0))
            .collect(),
    }
}

pub(crate) fn kkt_from_gradient(g: &[f64], w: &[f64], cfg: &PenaltyConfig) -> f64 {
    g.iter()
        .zip(w)
        .map(|(&gj, &wj)| {
            if wj != 0.0 {
                (gj + 2.0 * cfg.lambda2 * wj + cfg.lambda1 * wj.signum()).abs()
            } else {
                (gj.abs() - cfg.lambda1).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Response vector used by the solver: labels as 0/1 for squared loss, ±1 otherwise.
fn response_for(d: &Dataset, loss: Loss) -> Vec<f64> {
    match loss {
        Loss::Squared => d.y().iter().map(|&v| f64::from(v)).collect(),
        Loss::Logistic | Loss::SquaredHinge => d.signed_labels(),
    }
}

/// Fits the elastic net on `d` as given (callers standardize beforehand).
pub fn fit(d: &Dataset, cfg: &PenaltyConfig) -> Result<FitResult> {
    cfg.validate_for(d.n(), d.p())?;
    let cols = d.columns_contiguous();
    let design = Design::new(&cols, d.n(), d.p());
    let response = response_for(d, cfg.loss);
    let mut fr = match cfg.loss {
        Loss::Squared => solve_squared(&design, &response, cfg),
        Loss::Logistic => solve_logistic(&design, &response, cfg),
        Loss::SquaredHinge => crate::svm::solve_squared_hinge(&design, &response, cfg),
    }?;
    if cfg.lambda2 == 0.0 && cfg.lambda1 > 0.0 && fr.converged {
        reduce_to_basic(&design, &mut fr.w, &mut fr.intercept, cfg.fit_intercept);
        let margins = design.margins(&fr.w, fr.intercept);
        fr.objective = smooth_loss(&response, &margins, cfg.loss) + penalty(&fr.w, cfg);
    }
    Ok(fr)
}

/// Zeroes weights along null directions of the (centered, when an intercept is
/// fitted) active columns until those columns are linearly independent.
fn reduce_to_basic(design: &Design, w: &mut [f64], b: &mut f64, fit_intercept: bool) {
    let n = design.n;
    loop {
        let active: Vec<usize> = (0..w.len()).filter(|&j| w[j] != 0.0).collect();
        if active.is_empty() {
            return;
        }
        let means: Vec<f64> = active
            .iter()
            .map(|&j| if fit_intercept { design.col(j).iter().sum::<f64>() / n as f64 } else { 0.0 })
            .collect();
        // zero rows pad to a square-or-tall matrix so V spans the whole null space
        let rows = n.max(active.len());
        let m = nalgebra::DMatrix::from_fn(rows, active.len(), |i, k| {
            if i < n { design.col(active[k])[i] - means[k] } else { 0.0 }
        });
        let svd = m.svd(false, true);
        let sv = &svd.singular_values;
        let (imin, smin) = sv.iter().enumerate().fold((0, f64::INFINITY), |a, (i, &s)| if s < a.1 { (i, s) } else { a });
        let smax = sv.max();
        if smin > rows as f64 * f64::EPSILON * smax.max(f64::MIN_POSITIVE) {
            return;
        }
        let v = svd.v_t.as_ref().expect("requested V").row(imin).transpose();
        let Some((kill, t)) = (0..active.len())
            .filter(|&k| v[k].abs() > 1e-12)
            .map(|k| (k, -w[active[k]] / v[k]))
            .min_by(|x, y| x.1.abs().total_cmp(&y.1.abs()))
        else {
            return;
        };
        for (k, &j) in active.iter().enumerate() {
            w[j] += t * v[k];
        }
        w[active[kill]] = 0.0;
        *b -= t * means.iter().zip(v.iter()).map(|(m, vk)| m * vk).sum::<f64>();
    }
}

pub(crate) fn solve_squared(design: &Design, y: &[f64], cfg: &PenaltyConfig) -> Result<FitResult> {
    let mut w = vec![0.0; design.p];
    let mut b = if cfg.fit_intercept {
        y.iter().sum::<f64>() / y.len() as f64
    } else {
        0.0
    };
    let mut r: Vec<f64> = y.iter().map(|v| v - b).collect();
    let objective_of = |r: &[f64], w: &[f64]| r.iter().map(|v| v * v).sum::<f64>() + penalty(w, cfg);
    let mut objective = objective_of(&r, &w);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iter {
        iterations += 1;
        let delta = sweep(design, &mut r, &mut w, &mut b, cfg.lambda1, cfg.lambda2, cfg.fit_intercept);
        let next = objective_of(&r, &w);
        if !next.is_finite() {
            return Err(Error::NonFiniteObjective { iterations });
        }
        debug_assert!(
            next <= objective + 1e-10 * (1.0 + objective.abs()),
            "objective increased from {objective} to {next} at sweep {iterations}"
        );
        objective = next;
        if delta <= cfg.tol {
            // Re-derive the residual exactly before certifying optimality.
            let m = design.margins(&w, b);
            r = y.iter().zip(&m).map(|(yi, mi)| yi - mi).collect();
            let g = design.t_dot(&margin_gradient(y, &m, Loss::Squared));
            if kkt_from_gradient(&g, &w, cfg) <= 10.0 * cfg.tol {
                converged = true;
                break;
            }
        }
    }
    let margins = design.margins(&w, b);
    let objective = smooth_loss(y, &margins, Loss::Squared) + penalty(&w, cfg);
    Ok(FitResult {
        w,
        intercept: b,
        iterations,
        converged,
        objective,
    })
}

pub(crate) fn solve_logistic(design: &Design, signs: &[f64], cfg: &PenaltyConfig) -> Result<FitResult> {
    let n = design.n;
    let mut w = vec![0.0; design.p];
    let mut b = if cfg.fit_intercept {
        let pos = signs.iter().filter(|&&s| s > 0.0).count() as f64;
        let rate = (pos / n as f64).clamp(1e-6, 1.0 - 1e-6);
        (rate / (1.0 - rate)).ln()
    } else {
        0.0
    };
    let mut margins = design.margins(&w, b);
    let mut objective = smooth_loss(signs, &margins, Loss::Logistic) + penalty(&w, cfg);
    let mut converged = false;
    let mut iterations = 0;
    // Surrogate per observation: g (m - m0) + (1/8)(m - m0)^2, i.e. a squared
    // loss on the working response m0 - 4g scaled by 1/8.
    let (a, c) = (8.0 * cfg.lambda1, 8.0 * cfg.lambda2);

    while iterations < cfg.max_iter {
        iterations += 1;
        let g = margin_gradient(signs, &margins, Loss::Logistic);
        let mut r: Vec<f64> = g.iter().map(|gi| -4.0 * gi).collect();
        let (w_prev, b_prev) = (w.clone(), b);
        for _ in 0..INNER_SWEEPS {
            if sweep(design, &mut r, &mut w, &mut b, a, c, cfg.fit_intercept) <= cfg.tol {
                break;
            }
        }
        margins = design.margins(&w, b);
        let next = smooth_loss(signs, &margins, Loss::Logistic) + penalty(&w, cfg);
        if !next.is_finite() {
            return Err(Error::NonFiniteObjective { iterations });
        }
        debug_assert!(
            next <= objective + 1e-10 * (1.0 + objective.abs()),
            "objective increased from {objective} to {next} at iteration {iterations}"
        );
        objective = next;
        let delta = w
            .iter()
            .zip(&w_prev)
            .map(|(a, b)| (a - b).abs())
            .fold((b - b_prev).abs(), f64::max);
        if delta <= cfg.tol {
            let grad = design.t_dot(&margin_gradient(signs, &margins, Loss::Logistic));
            if kkt_from_gradient(&grad, &w, cfg) <= 10.0 * cfg.tol {
                converged = true;
                break;
            }
        }
    }
    Ok(FitResult {
        w,
        intercept: b,
        iterations,
        converged,
        objective,
    })
}

/// Value of the penalized objective at `(w, intercept)`.
pub fn objective(d: &Dataset, w: &[f64], intercept: f64, cfg: &PenaltyConfig) -> f64 {
    let cols = d.columns_contiguous();
    let design = Design::new(&cols, d.n(), d.p());
    let m = design.margins(w, intercept);
    smooth_loss(&response_for(d, cfg.loss), &m, cfg.loss) + penalty(w, cfg)
}

/// Largest distance from zero to the subdifferential of the objective over
/// the weight coordinates.
pub fn kkt_residual(d: &Dataset, fr: &FitResult, cfg: &PenaltyConfig) -> f64 {
    let cols = d.columns_contiguous();
    let design = Design::new(&cols, d.n(), d.p());
    let response = response_for(d, cfg.loss);
    let m = design.margins(&fr.w, fr.intercept);
    let g = design.t_dot(&margin_gradient(&response, &m, cfg.loss));
    kkt_from_gradient(&g, &fr.w, cfg)
}

/// Smallest `lambda1` for which `w = 0` is optimal (for any `lambda2`).
pub fn null_lambda1(d: &Dataset, loss: Loss, fit_intercept: bool) -> f64 {
    let y: Vec<f64> = d.y().iter().map(|&v| f64::from(v)).collect();
    let center = if fit_intercept {
        y.iter().sum::<f64>() / y.len() as f64
    } else {
        0.0
    };
    let scale = match loss {
        Loss::Squared => 2.0,
        Loss::Logistic => 1.0,
        Loss::SquaredHinge => 4.0,
    };
    let resid: Vec<f64> = match (loss, fit_intercept) {
        (Loss::Logistic | Loss::SquaredHinge, false) => y.iter().map(|v| v - 0.5).collect(),
        _ => y.iter().map(|v| v - center).collect(),
    };
    (0..d.p())
        .map(|j| scale * d.column(j).iter().zip(&resid).map(|(x, r)| x * r).sum::<f64>().abs())
        .fold(0.0, f64::max)
}

/// Indices with `|w_j| > zero_tol`.
pub fn support(fr: &FitResult, zero_tol: f64) -> IndexSet {
    IndexSet::from_unsorted(
        fr.w.iter()
            .enumerate()
            .filter(|(_, v)| v.abs() > zero_tol)
            .map(|(j, _)| j)
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::standardize;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_dataset(n: usize, p: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal));
        let mut y: Vec<u8> = (0..n).map(|i| (x[[i, 0]] + 0.5 * rng.sample::<f64, _>(StandardNormal) > 0.0) as u8).collect();
        y[0] = 0;
        y[1] = 1;
        standardize(&Dataset::with_default_ids(x, y).unwrap()).0
    }

    /// Columns of a scaled Hadamard-like matrix: orthonormal, not centered.
    fn orthonormal_dataset() -> Dataset {
        let h = [
            [1.0, 1.0, 1.0, 1.0],
            [1.0, -1.0, 1.0, -1.0],
            [1.0, 1.0, -1.0, -1.0],
            [1.0, -1.0, -1.0, 1.0],
        ];
        let x = Array2::from_shape_fn((4, 4), |(i, j)| h[i][j] / 2.0);
        Dataset::with_default_ids(x, vec![1, 0, 1, 1]).unwrap()
    }

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(5.0, 2.0), 3.0);
        assert_eq!(soft_threshold(-5.0, 2.0), -3.0);
        assert_eq!(soft_threshold(1.5, 2.0), 0.0);
    }

    #[test]
    fn at_null_threshold_weights_are_exactly_zero() {
        let d = random_dataset(30, 6, 3);
        let lmax = null_lambda1(&d, Loss::Squared, true);
        let cfg = PenaltyConfig::squared(lmax, 0.3).unwrap();
        let fr = fit(&d, &cfg).unwrap();
        assert!(fr.w.iter().all(|&v| v == 0.0));
        assert_eq!(kkt_residual(&d, &fr, &cfg), 0.0);
        assert!(fr.converged);
        // just below the threshold something enters
        let cfg = PenaltyConfig::squared(0.95 * lmax, 0.3).unwrap();
        assert!(!support(&fit(&d, &cfg).unwrap(), DEFAULT_ZERO_TOL).is_empty());
    }

    #[test]
    fn logistic_null_threshold() {
        let d = random_dataset(40, 5, 8);
        let lmax = null_lambda1(&d, Loss::Logistic, true);
        let cfg = PenaltyConfig::logistic(lmax * 1.0001, 0.0).unwrap();
        let fr = fit(&d, &cfg).unwrap();
        assert!(fr.w.iter().all(|&v| v == 0.0));
        let cfg = PenaltyConfig::logistic(lmax * 0.9, 0.0).unwrap();
        assert!(!support(&fit(&d, &cfg).unwrap(), DEFAULT_ZERO_TOL).is_empty());
    }

    #[test]
    fn orthonormal_design_matches_closed_form() {
        let d = orthonormal_dataset();
        let (l1, l2) = (0.4, 0.7);
        let cfg = PenaltyConfig::squared(l1, l2).unwrap().with_intercept(false).with_tol(1e-13);
        let fr = fit(&d, &cfg).unwrap();
        let y: Vec<f64> = d.y().iter().map(|&v| f64::from(v)).collect();
        let mut expected_support = Vec::new();
        for j in 0..4 {
            let xty: f64 = d.column(j).iter().zip(&y).map(|(a, b)| a * b).sum();
            let expected = soft_threshold(xty, l1 / 2.0) / (1.0 + l2);
            assert!((fr.w[j] - expected).abs() < 1e-12, "w[{j}] = {} vs {expected}", fr.w[j]);
            if xty.abs() > l1 / 2.0 {
                expected_support.push(j);
            }
        }
        let exact = FitResult {
            w: (0..4)
                .map(|j| {
                    let xty: f64 = d.column(j).iter().zip(&y).map(|(a, b)| a * b).sum();
                    soft_threshold(xty, l1 / 2.0) / (1.0 + l2)
                })
                .collect(),
            intercept: 0.0,
            iterations: 0,
            converged: true,
            objective: 0.0,
        };
        assert!(kkt_residual(&d, &exact, &cfg) <= 1e-10);
        assert_eq!(support(&fr, DEFAULT_ZERO_TOL).into_vec(), expected_support);
    }

    #[test]
    fn perturbing_an_active_weight_raises_the_residual() {
        let d = random_dataset(25, 4, 11);
        let cfg = PenaltyConfig::squared(1.0, 0.5).unwrap().with_tol(1e-10);
        let fr = fit(&d, &cfg).unwrap();
        let j = fr.w.iter().position(|&v| v != 0.0).expect("some active coordinate");
        let mut bumped = fr.clone();
        bumped.w[j] += 0.1;
        let sq: f64 = d.column(j).iter().map(|v| v * v).sum();
        let res = kkt_residual(&d, &bumped, &cfg);
        // gradient of the smooth part moves by 2 * 0.1 * (||x_j||^2 + lambda2)
        let expected = 0.1 * (2.0 * cfg.lambda2 + 2.0 * sq);
        assert!(res >= 0.9 * expected / 2.0, "{res} vs {expected}");
        assert!(res > 10.0 * cfg.tol);
    }

    #[test]
    fn identical_columns_get_identical_weights() {
        let base = random_dataset(30, 5, 21);
        let mut x = base.x().clone();
        let dup = x.column(2).to_owned();
        x.column_mut(4).assign(&dup);
        let d = Dataset::with_default_ids(x, base.y().to_vec()).unwrap();
        let cfg = PenaltyConfig::squared(0.5, 0.2).unwrap().with_tol(1e-12);
        let fr = fit(&d, &cfg).unwrap();
        assert!((fr.w[2] - fr.w[4]).abs() <= 1e-8);
        assert!(fr.w[2] != 0.0);
    }

    #[test]
    fn lambda1_zero_matches_ridge_closed_form() {
        let d = random_dataset(20, 5, 4);
        let l2 = 0.8;
        let cfg = PenaltyConfig::squared(0.0, l2).unwrap().with_intercept(false).with_tol(1e-13);
        let fr = fit(&d, &cfg).unwrap();
        let x = nalgebra::DMatrix::from_fn(d.n(), d.p(), |i, j| d.x()[[i, j]]);
        let y = nalgebra::DVector::from_iterator(d.n(), d.y().iter().map(|&v| f64::from(v)));
        let a = x.transpose() * &x + nalgebra::DMatrix::identity(d.p(), d.p()) * l2;
        let w = a.lu().solve(&(x.transpose() * y)).unwrap();
        for j in 0..d.p() {
            assert!((fr.w[j] - w[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn logistic_ridge_gradient_vanishes_and_matches_finite_differences() {
        let d = random_dataset(40, 6, 5);
        let cfg = PenaltyConfig::logistic(0.0, 0.5).unwrap().with_tol(1e-9);
        let fr = fit(&d, &cfg).unwrap();
        assert!(fr.converged);
        assert!(kkt_residual(&d, &fr, &cfg) <= 10.0 * cfg.tol);

        // finite-difference check of the analytic gradient at a point away
        // from the optimum
        let w0: Vec<f64> = fr.w.iter().enumerate().map(|(j, v)| v + 0.1 * (j as f64 - 2.0)).collect();
        let cols = d.columns_contiguous();
        let design = Design::new(&cols, d.n(), d.p());
        let s = d.signed_labels();
        let m = design.margins(&w0, fr.intercept);
        let g = design.t_dot(&margin_gradient(&s, &m, Loss::Logistic));
        let h = 1e-6;
        for j in [0, 1, 3, 4, 5] {
            let mut wp = w0.clone();
            let mut wm = w0.clone();
            wp[j] += h;
            wm[j] -= h;
            let fd = (objective(&d, &wp, fr.intercept, &cfg) - objective(&d, &wm, fr.intercept, &cfg)) / (2.0 * h);
            let analytic = g[j] + 2.0 * cfg.lambda2 * w0[j];
            assert!((fd - analytic).abs() <= 1e-4 * analytic.abs().max(1e-3), "coord {j}: {fd} vs {analytic}");
        }
    }

    #[test]
    fn scaling_loss_and_penalties_together_keeps_the_argmin() {
        let d = random_dataset(20, 6, 9);
        let cols = d.columns_contiguous();
        let y: Vec<f64> = d.y().iter().map(|&v| f64::from(v)).collect();
        let cfg = PenaltyConfig::squared(0.7, 0.3).unwrap().with_tol(1e-12);
        let base = solve_squared(&Design::new(&cols, d.n(), d.p()), &y, &cfg).unwrap();
        let c: f64 = 3.7;
        let scaled_cols: Vec<f64> = cols.iter().map(|v| v * c.sqrt()).collect();
        let scaled_y: Vec<f64> = y.iter().map(|v| v * c.sqrt()).collect();
        let scaled_cfg = PenaltyConfig::squared(0.7 * c, 0.3 * c).unwrap().with_tol(1e-12);
        let scaled = solve_squared(&Design::new(&scaled_cols, d.n(), d.p()), &scaled_y, &scaled_cfg).unwrap();
        for j in 0..d.p() {
            assert!((base.w[j] - scaled.w[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn unpenalized_wide_problem_is_rejected() {
        let d = random_dataset(5, 8, 1);
        let cfg = PenaltyConfig::squared(0.0, 0.0).unwrap();
        assert!(matches!(fit(&d, &cfg), Err(Error::InvalidConfig(_))));
        assert!(PenaltyConfig::squared(-1.0, 0.0).is_err());
        assert!(PenaltyConfig::squared(1.0, 0.0).unwrap().with_tol(0.0).validate().is_err());
    }

    #[test]
    fn support_threshold_semantics() {
        let fr = FitResult {
            w: vec![0.5, 0.0, -1e-12],
            intercept: 0.0,
            iterations: 1,
            converged: true,
            objective: 0.0,
        };
        assert_eq!(support(&fr, DEFAULT_ZERO_TOL).into_vec(), vec![0]);
        let zero = FitResult { w: vec![0.0; 3], ..fr };
        assert!(support(&zero, DEFAULT_ZERO_TOL).is_empty());
    }

    #[test]
    fn lasso_support_is_at_most_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for trial in 0..5 {
            let d = random_dataset(12, 40, 100 + trial);
            let lmax = null_lambda1(&d, Loss::Squared, true);
            let cfg = PenaltyConfig::squared(lmax * rng.random_range(0.05..0.5), 0.0).unwrap();
            let fr = fit(&d, &cfg).unwrap();
            assert!(support(&fr, DEFAULT_ZERO_TOL).len() <= d.n());
        }
    }

    #[test]
    fn lasso_keeps_one_of_a_duplicated_pair() {
        for loss in [Loss::Squared, Loss::Logistic] {
            let base = random_dataset(30, 5, 4);
            let mut x = Array2::zeros((30, 6));
            x.slice_mut(ndarray::s![.., ..5]).assign(base.x());
            x.column_mut(5).assign(&base.x().column(0));
            let d = Dataset::with_default_ids(x, base.y().to_vec()).unwrap();
            let cfg = PenaltyConfig::new(1.0, 0.0, loss).unwrap().with_tol(1e-10);
            let fr = fit(&d, &cfg).unwrap();
            assert!(fr.w[0] == 0.0 || fr.w[5] == 0.0, "{:?}", fr.w);
            assert!(fr.w[0] + fr.w[5] != 0.0);
            assert!(kkt_residual(&d, &fr, &cfg) <= 1e-7);
            assert!((objective(&d, &fr.w, fr.intercept, &cfg) - fr.objective).abs() <= 1e-12);
        }
    }
}
