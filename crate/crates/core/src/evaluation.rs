//! Ranking and classification metrics, plus the experiment protocols built
//! on them.
//!
//! "Selection accuracy" is recall at `k = |truth|`: the fraction of
//! ground-truth features among the `|truth|` best-ranked ones.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{rank_features, FeatureRanking, MethodSpec};
use crate::data::{restrict, standardize, Dataset, IndexSet};
use crate::error::{Error, Result};
use crate::seed::{rng_for, Stream};
use crate::stability::ranking_order;
use crate::svm::loocv_decisions;
use crate::synthetic::{flip_labels, generate, SyntheticSpec};

pub const SELECTION_ACCURACY: &str = "selection_accuracy";
pub const PRECISION_AT_RECALL: &str = "precision_at_recall_0.8";
pub const PR_RECALL_LEVEL: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub k: usize,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PRCurve {
    pub method: String,
    pub points: Vec<PrPoint>,
}

impl PRCurve {
    /// Precision at the smallest `k` whose recall reaches `level`.
    pub fn precision_at_recall(&self, level: f64) -> f64 {
        self.points
            .iter()
            .find(|pt| pt.recall >= level - 1e-12)
            .map_or(0.0, |pt| pt.precision)
    }
}

fn check_truth(ranking: &FeatureRanking, truth: &IndexSet) -> Result<()> {
    if truth.is_empty() {
        return Err(Error::InvalidConfig("empty ground-truth set".into()));
    }
    if ranking.scores.len() < truth.len() {
        return Err(Error::InvalidConfig(format!(
            "ranking of {} features is shorter than the truth set ({})",
            ranking.scores.len(),
            truth.len()
        )));
    }
    if let Some(bad) = truth.iter().find(|&f| f >= ranking.scores.len()) {
        return Err(Error::IndexOutOfRange {
            index: bad,
            bound: ranking.scores.len(),
        });
    }
    Ok(())
}

/// Precision and recall of the top `k` features for every `k` in `1..=p`.
pub fn pr_curve(ranking: &FeatureRanking, truth: &IndexSet) -> Result<PRCurve> {
    check_truth(ranking, truth)?;
    let total = truth.len() as f64;
    let mut hits = 0usize;
    let points = ranking_order(&ranking.scores)
        .into_iter()
        .enumerate()
        .map(|(i, f)| {
            hits += usize::from(truth.contains(f));
            PrPoint {
                k: i + 1,
                precision: hits as f64 / (i + 1) as f64,
                recall: hits as f64 / total,
            }
        })
        .collect();
    Ok(PRCurve {
        method: ranking.method.kind.to_string(),
        points,
    })
}

pub fn selection_accuracy(ranking: &FeatureRanking, truth: &IndexSet) -> Result<f64> {
    check_truth(ranking, truth)?;
    let top = ranking.top_k(truth.len())?;
    Ok(top.intersection_len(truth) as f64 / truth.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub k_used: usize,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    /// Held-out decision value of every eval observation.
    pub decisions: Vec<f64>,
}

impl AccuracyReport {
    fn from_decisions(decisions: Vec<f64>, y: &[u8], k_used: usize) -> Self {
        let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
        for (&v, &l) in decisions.iter().zip(y) {
            match (v > 0.0, l == 1) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, false) => tn += 1,
                (false, true) => fn_ += 1,
            }
        }
        let ratio = |a: usize, b: usize| if a + b == 0 { 0.0 } else { a as f64 / (a + b) as f64 };
        AccuracyReport {
            accuracy: ratio(tp + tn, fp + fn_),
            sensitivity: ratio(tp, fn_),
            specificity: ratio(tn, fp),
            k_used,
            tp,
            fp,
            tn,
            fn_,
            decisions,
        }
    }
}

/// Fails unless `ranking` was computed from `train` and `eval` is a different dataset.
pub fn assert_no_leakage(train: &Dataset, eval: &Dataset, ranking: &FeatureRanking) -> Result<()> {
    let (t, e) = (train.digest(), eval.digest());
    if ranking.source_digest != t {
        return Err(Error::Leakage("ranking was not computed from the training set".into()));
    }
    if ranking.source_digest == e {
        return Err(Error::Leakage("ranking was computed from the evaluation set".into()));
    }
    Ok(())
}

/// LOOCV accuracy of a ridge squared-hinge SVM on the `k` best-ranked
/// features of `eval`. The ranking must come from `train`.
///
/// Eval features are standardized once with label-free statistics before the
/// folds are formed.
pub fn classify_topk(
    train: &Dataset,
    eval: &Dataset,
    ranking: &FeatureRanking,
    k: usize,
    c_reg: f64,
) -> Result<AccuracyReport> {
    if train.p() != eval.p() || train.feature_ids() != eval.feature_ids() {
        return Err(Error::InvalidDataset("train and eval feature ids differ".into()));
    }
    assert_no_leakage(train, eval, ranking)?;
    if k == 0 || k > eval.p() {
        return Err(Error::InvalidConfig(format!("k = {k} outside 1..={}", eval.p())));
    }
    if eval.n() < 3 {
        return Err(Error::InvalidDataset(format!("LOOCV needs n >= 3, got {}", eval.n())));
    }
    let cols = ranking.top_k(k)?;
    let rows: Vec<usize> = (0..eval.n()).collect();
    let (sub, _) = standardize(&restrict(eval, &rows, &cols)?);
    let decisions = loocv_decisions(sub.x(), sub.y(), c_reg)?;
    Ok(AccuracyReport::from_decisions(decisions, eval.y(), k))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopKRow {
    pub method: String,
    pub k: usize,
    pub report: AccuracyReport,
}

pub fn topk_curve(
    train: &Dataset,
    eval: &Dataset,
    ranking: &FeatureRanking,
    ks: &[usize],
    c_reg: f64,
) -> Result<Vec<TopKRow>> {
    ks.iter()
        .map(|&k| {
            Ok(TopKRow {
                method: ranking.method.kind.to_string(),
                k,
                report: classify_topk(train, eval, ranking, k, c_reg)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ROCCurve {
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// ROC curve by sweeping a threshold down through the distinct scores; tied
/// scores move the curve in a single diagonal step.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<ROCCurve> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidDataset("scores and labels differ in length".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidDataset("non-finite decision score".into()));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::InvalidDataset("ROC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    let auc = trapezoid(&points);
    Ok(ROCCurve { points, auc })
}

pub fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum()
}

/// `P(score_pos > score_neg) + P(tie) / 2` over all positive/negative pairs.
pub fn mann_whitney_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] != 1 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] == 1 {
                continue;
            }
            pairs += 1.0;
            wins += if si > sj {
                1.0
            } else if si == sj {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / pairs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: String,
    pub flips: usize,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
}

/// For every `(seed, flips, method)` cell: generate, flip `flips` labels,
/// rank, and score against the discriminative ground truth. Rows are ordered
/// by seed, then flip count, then method order.
pub fn robustness_sweep(
    spec: &SyntheticSpec,
    methods: &[MethodSpec],
    flips: &[usize],
    seeds: &[u64],
) -> Result<Vec<SweepRow>> {
    let cells: Vec<(u64, usize, usize)> = seeds
        .iter()
        .flat_map(|&s| flips.iter().flat_map(move |&f| (0..methods.len()).map(move |m| (s, f, m))))
        .collect();
    let results: Vec<Result<[SweepRow; 2]>> = cells
        .par_iter()
        .map(|&(seed, k, m)| {
            let (d, truth) = generate(&spec.clone().with_seed(seed))?;
            let noisy = d.with_labels(flip_labels(d.y(), k, seed)?)?;
            let method = &methods[m];
            let ranking = rank_features(&noisy, method, seed)?;
            let acc = selection_accuracy(&ranking, &truth.discriminative)?;
            let prec = pr_curve(&ranking, &truth.discriminative)?.precision_at_recall(PR_RECALL_LEVEL);
            let row = |metric: &str, value| SweepRow {
                method: method.kind.to_string(),
                flips: k,
                seed,
                metric: metric.to_string(),
                value,
            };
            Ok([row(SELECTION_ACCURACY, acc), row(PRECISION_AT_RECALL, prec)])
        })
        .collect();
    let mut rows = Vec::with_capacity(2 * cells.len());
    for r in results {
        rows.extend(r?);
    }
    Ok(rows)
}

/// Mean of `metric` for `method` and `flips` over all seeds in `rows`.
pub fn mean_metric(rows: &[SweepRow], method: &str, flips: usize, metric: &str) -> Option<f64> {
    let vals: Vec<f64> = rows
        .iter()
        .filter(|r| r.method == method && r.flips == flips && r.metric == metric)
        .map(|r| r.value)
        .collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Per-feature `x -> scale * x + offset` with log-uniform scale in `[1/2, 2]`
/// and standard-normal offset, drawn from `(seed, center)`.
pub fn distort(d: &Dataset, seed: u64, center: u64) -> Result<Dataset> {
    let mut rng = rng_for(seed, Stream::Distortion, center);
    let params: Vec<(f64, f64)> = (0..d.p())
        .map(|_| {
            let scale = 2f64.powf(rng.random_range(-1.0..=1.0));
            (scale, rng.sample::<f64, _>(StandardNormal))
        })
        .collect();
    let x = Array2::from_shape_fn((d.n(), d.p()), |(i, j)| params[j].0 * d.x()[[i, j]] + params[j].1);
    Dataset::new(x, d.y().to_vec(), d.feature_ids().to_vec())
}

/// Two synthetic "centers": independent noise seeds plus a per-center affine
/// distortion of every feature.
pub fn two_centers(spec: &SyntheticSpec, seed: u64) -> Result<(Dataset, Dataset)> {
    let (a, _) = generate(&spec.clone().with_seed(seed.wrapping_mul(2)))?;
    let (b, _) = generate(&spec.clone().with_seed(seed.wrapping_mul(2).wrapping_add(1)))?;
    Ok((distort(&a, seed, 0)?, distort(&b, seed, 1)?))
}

fn write_rows(path: &Path, header: &str, rows: impl Iterator<Item = String>) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(w, "{header}").map_err(io)?;
    for r in rows {
        writeln!(w, "{r}").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    write_rows(
        path,
        "method,flips,seed,metric,value",
        rows.iter()
            .map(|r| format!("{},{},{},{},{}", r.method, r.flips, r.seed, r.metric, r.value)),
    )
}

pub fn write_pr_csv(path: &Path, curves: &[PRCurve]) -> Result<()> {
    write_rows(
        path,
        "method,k,precision,recall",
        curves.iter().flat_map(|c| {
            c.points
                .iter()
                .map(move |pt| format!("{},{},{},{}", c.method, pt.k, pt.precision, pt.recall))
        }),
    )
}

pub fn write_topk_csv(path: &Path, rows: &[TopKRow]) -> Result<()> {
    write_rows(
        path,
        "method,k,accuracy,sensitivity,specificity",
        rows.iter().map(|r| {
            format!(
                "{},{},{},{},{}",
                r.method, r.k, r.report.accuracy, r.report.sensitivity, r.report.specificity
            )
        }),
    )
}

pub fn write_roc_csv(path: &Path, roc: &ROCCurve) -> Result<()> {
    write_rows(path, "fpr,tpr", roc.points.iter().map(|(f, t)| format!("{f},{t}")))
}
