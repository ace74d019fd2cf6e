//! Stratified k-fold cross-validation over penalty grids.
//!
//! Each fold standardizes its training part and applies those statistics to
//! the held-out part. The held-out loss is the fitting loss itself (squared
//! error, logistic deviance or squared hinge), summed over folds. Ties go to the
//! earliest grid point.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::baselines::{MethodKind, MethodSpec};
use crate::data::{restrict, ColumnStats, Dataset, IndexSet};
use crate::elastic_net::{self, smooth_loss, Loss, PenaltyConfig};
use crate::error::{Error, Result};
use crate::seed::{rng_for, Stream};

pub const DEFAULT_FOLDS: usize = 5;

/// `2^-8, 2^-7, ..., 2^2`, each multiplied by `n_train` to match the unscaled loss.
pub fn lambda_grid(n_train: usize) -> Vec<f64> {
    (-8..=2).map(|e| 2f64.powi(e) * n_train as f64).collect()
}

/// Fold id per observation; each class is shuffled and dealt round-robin.
pub fn stratified_folds(y: &[u8], folds: usize, seed: u64) -> Result<Vec<usize>> {
    let n1 = y.iter().filter(|&&v| v == 1).count();
    let n0 = y.len() - n1;
    if folds < 2 || n0 < folds || n1 < folds {
        return Err(Error::InvalidConfig(format!(
            "{folds}-fold stratified CV needs >= {folds} observations per class, got {n0} and {n1}"
        )));
    }
    let mut rng = rng_for(seed, Stream::Folds, 0);
    let mut fold = vec![0; y.len()];
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        idx.shuffle(&mut rng);
        for (r, i) in idx.into_iter().enumerate() {
            fold[i] = r % folds;
        }
    }
    Ok(fold)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvPoint {
    pub lambda1: f64,
    pub lambda2: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome {
    pub best: PenaltyConfig,
    pub table: Vec<CvPoint>,
}

fn held_out_loss(d: &Dataset, fold: &[usize], f: usize, cfg: &PenaltyConfig) -> Result<f64> {
    let all = IndexSet::full(d.p());
    let train_rows: Vec<usize> = (0..d.n()).filter(|&i| fold[i] != f).collect();
    let test_rows: Vec<usize> = (0..d.n()).filter(|&i| fold[i] == f).collect();
    let train = restrict(d, &train_rows, &all)?;
    let test = restrict(d, &test_rows, &all)?;
    let stats = ColumnStats::compute(train.x());
    let train = Dataset::new(stats.apply(train.x()), train.y().to_vec(), train.feature_ids().to_vec())?;
    let xt = stats.apply(test.x());
    let fr = elastic_net::fit(&train, cfg)?;
    let margins: Vec<f64> = xt
        .rows()
        .into_iter()
        .map(|row| elastic_net::dot(row.as_slice().expect("row-major"), &fr.w) + fr.intercept)
        .collect();
    let response: Vec<f64> = match cfg.loss {
        Loss::Squared => test.y().iter().map(|&v| f64::from(v)).collect(),
        _ => test.signed_labels(),
    };
    Ok(smooth_loss(&response, &margins, cfg.loss))
}

/// Evaluates every `(lambda1, lambda2)` in `grid` with `base`'s loss and solver settings.
pub fn cross_validate(
    d: &Dataset,
    base: &PenaltyConfig,
    grid: &[(f64, f64)],
    folds: usize,
    seed: u64,
) -> Result<CvOutcome> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("empty CV grid".into()));
    }
    let fold = stratified_folds(d.y(), folds, seed)?;
    let table: Vec<CvPoint> = grid
        .par_iter()
        .map(|&(lambda1, lambda2)| {
            let cfg = PenaltyConfig { lambda1, lambda2, ..*base };
            let mut loss = 0.0;
            for f in 0..folds {
                loss += held_out_loss(d, &fold, f, &cfg)?;
            }
            Ok(CvPoint { lambda1, lambda2, loss })
        })
        .collect::<Result<_>>()?;
    let best = table
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.loss.total_cmp(&b.1.loss).then(a.0.cmp(&b.0)))
        .map(|(_, pt)| PenaltyConfig {
            lambda1: pt.lambda1,
            lambda2: pt.lambda2,
            ..*base
        })
        .expect("non-empty grid");
    Ok(CvOutcome { best, table })
}

/// Picks the method's penalty hyperparameters by CV on `d`. Subsampling
/// parameters and the t-test are left unchanged.
pub fn tune_method(d: &Dataset, method: &MethodSpec, folds: usize, seed: u64) -> Result<MethodSpec> {
    let Some(base) = method.penalty() else {
        return Ok(method.clone());
    };
    let n_train = d.n() - d.n() / folds;
    let grid1 = lambda_grid(n_train);
    let (grid, keys): (Vec<(f64, f64)>, &[&str]) = match method.kind {
        MethodKind::L1Logistic | MethodKind::L1Svm | MethodKind::RandomizedL1Logistic => {
            (grid1.iter().map(|&l| (l, 0.0)).collect(), &["lambda"])
        }
        MethodKind::L2Logistic | MethodKind::L2Svm => (grid1.iter().map(|&l| (0.0, l)).collect(), &["lambda"]),
        MethodKind::ElasticNet | MethodKind::StabilityElasticNet => (
            grid1.iter().flat_map(|&a| grid1.iter().map(move |&b| (a, b))).collect(),
            &["lambda1", "lambda2"],
        ),
        MethodKind::TTest => unreachable!("no penalty"),
    };
    let best = cross_validate(d, &base, &grid, folds, seed)?.best;
    let mut overrides: BTreeMap<String, f64> = method.hyperparams.clone();
    match keys {
        ["lambda"] => {
            let v = if best.lambda1 > 0.0 { best.lambda1 } else { best.lambda2 };
            overrides.insert("lambda".into(), v);
        }
        _ => {
            overrides.insert("lambda1".into(), best.lambda1);
            overrides.insert("lambda2".into(), best.lambda2);
        }
    }
    MethodSpec::new(method.kind, overrides)
}
