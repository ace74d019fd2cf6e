//! Stability selection with row and column subsampling.
//!
//! Each of the `N` resamples keeps `floor(alpha * n)` observations and
//! `floor(beta * p)` features, refits the base learner on the standardized
//! submatrix and records which original features received a nonzero weight.
//! The stability score of a feature is the fraction of resamples in which it
//! was selected:
//!
//! ```text
//! SS(f) = (1/N) * #{ j : f in S_j }
//! ```
//!
//! All resamples are drawn up front from seeds derived from
//! `(master_seed, j)`, so the scores do not depend on how the fits are
//! scheduled across threads.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{restrict, standardize, Dataset, IndexSet};
use crate::elastic_net::{self, PenaltyConfig, DEFAULT_ZERO_TOL};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_for, Stream};

pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_BETA: f64 = 0.2;
pub const DEFAULT_RESAMPLES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsampleParams {
    /// Fraction of observations kept per resample.
    pub alpha: f64,
    /// Fraction of features kept per resample.
    pub beta: f64,
    pub n_resamples: usize,
    pub master_seed: u64,
    /// Draw `floor(alpha * n_c)` rows from each class instead of `floor(alpha * n)` uniformly.
    pub stratify: bool,
}

impl Default for SubsampleParams {
    fn default() -> Self {
        SubsampleParams {
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            n_resamples: DEFAULT_RESAMPLES,
            master_seed: 0,
            stratify: true,
        }
    }
}

impl SubsampleParams {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn with_resamples(mut self, n: usize) -> Self {
        self.n_resamples = n;
        self
    }

    fn validate(&self, n: usize, p: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InfeasiblePlan(m));
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha must lie in (0, 1], got {}", self.alpha));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return bad(format!("beta must lie in (0, 1], got {}", self.beta));
        }
        if self.n_resamples == 0 {
            return bad("at least one resample is required".into());
        }
        if floor_frac(self.alpha, n) < 2 {
            return bad(format!("floor({} * {n}) < 2 rows per resample", self.alpha));
        }
        if floor_frac(self.beta, p) < 1 {
            return bad(format!("floor({} * {p}) < 1 column per resample", self.beta));
        }
        Ok(())
    }
}

fn floor_frac(frac: f64, count: usize) -> usize {
    // A small guard keeps e.g. 0.2 * 10 from landing on 1.9999999.
    ((frac * count as f64) + 1e-9).floor() as usize
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Draw {
    /// Sorted observation indices.
    pub rows: Vec<usize>,
    pub cols: IndexSet,
    pub fit_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsamplePlan {
    pub draws: Vec<Draw>,
}

/// Pre-draws every resample. With `labels` supplied and `params.stratify`
/// set, rows are drawn per class.
pub fn make_plan(n: usize, p: usize, params: &SubsampleParams, labels: Option<&[u8]>) -> Result<SubsamplePlan> {
    params.validate(n, p)?;
    let strata: Option<[Vec<usize>; 2]> = match (params.stratify, labels) {
        (true, Some(y)) => {
            if y.len() != n {
                return Err(Error::InvalidDataset(format!("{} labels for {n} rows", y.len())));
            }
            let zeros: Vec<usize> = (0..n).filter(|&i| y[i] == 0).collect();
            let ones: Vec<usize> = (0..n).filter(|&i| y[i] == 1).collect();
            for (class, members) in [(0, &zeros), (1, &ones)] {
                if floor_frac(params.alpha, members.len()) < 1 {
                    return Err(Error::InfeasiblePlan(format!(
                        "class {class} has {} observations; floor({} * {}) = 0 rows per resample",
                        members.len(),
                        params.alpha,
                        members.len()
                    )));
                }
            }
            Some([zeros, ones])
        }
        _ => None,
    };
    let n_cols = floor_frac(params.beta, p);
    let draws = (0..params.n_resamples as u64)
        .map(|j| {
            let mut row_rng = rng_for(params.master_seed, Stream::RowDraw, j);
            let rows = match &strata {
                Some(classes) => {
                    let mut rows = Vec::new();
                    for members in classes {
                        let k = floor_frac(params.alpha, members.len());
                        rows.extend(sample(&mut row_rng, members.len(), k).into_iter().map(|i| members[i]));
                    }
                    rows.sort_unstable();
                    rows
                }
                None => {
                    let mut rows = sample(&mut row_rng, n, floor_frac(params.alpha, n)).into_vec();
                    rows.sort_unstable();
                    rows
                }
            };
            let mut col_rng = rng_for(params.master_seed, Stream::ColumnDraw, j);
            let cols = IndexSet::from_unsorted(sample(&mut col_rng, p, n_cols).into_vec());
            Draw {
                rows,
                cols,
                fit_seed: derive_seed(params.master_seed, Stream::Fit, j),
            }
        })
        .collect();
    Ok(SubsamplePlan { draws })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityResult {
    pub scores: Vec<f64>,
    pub n_resamples: usize,
    /// Per-resample supports in original feature indices, when requested.
    pub selection_sets: Option<Vec<IndexSet>>,
    pub params: SubsampleParams,
    pub base: PenaltyConfig,
}

/// Runs stability selection with `base` as the learner for every resample.
pub fn run(d: &Dataset, params: &SubsampleParams, base: &PenaltyConfig, keep_sets: bool) -> Result<StabilityResult> {
    d.require_both_classes()?;
    let plan = make_plan(d.n(), d.p(), params, Some(d.y()))?;
    let mut result = run_with_plan(d, &plan, base, keep_sets)?;
    result.params = *params;
    Ok(result)
}

/// Fits every draw of `plan` (in parallel on the current rayon pool).
pub fn run_with_plan(d: &Dataset, plan: &SubsamplePlan, base: &PenaltyConfig, keep_sets: bool) -> Result<StabilityResult> {
    base.validate()?;
    let outcomes: Vec<Result<IndexSet>> = plan
        .draws
        .par_iter()
        .map(|draw| select_on_draw(d, draw, base))
        .collect();
    let mut sets = Vec::with_capacity(outcomes.len());
    for (j, outcome) in outcomes.into_iter().enumerate() {
        sets.push(outcome.map_err(|e| Error::Draw {
            draw: j,
            source: Box::new(e),
        })?);
    }
    let scores = scores_from_sets(&sets, d.p())?;
    Ok(StabilityResult {
        scores,
        n_resamples: sets.len(),
        selection_sets: keep_sets.then_some(sets),
        params: SubsampleParams {
            n_resamples: plan.draws.len(),
            ..SubsampleParams::default()
        },
        base: *base,
    })
}

fn select_on_draw(d: &Dataset, draw: &Draw, base: &PenaltyConfig) -> Result<IndexSet> {
    let sub = restrict(d, &draw.rows, &draw.cols)?;
    let (sub, _) = standardize(&sub);
    let fr = elastic_net::fit(&sub, base)?;
    let local = elastic_net::support(&fr, DEFAULT_ZERO_TOL);
    Ok(local.map_through(draw.cols.as_slice()))
}

/// Selection frequency of each feature over `sets`.
pub fn scores_from_sets(sets: &[IndexSet], p: usize) -> Result<Vec<f64>> {
    if sets.is_empty() {
        return Err(Error::InvalidConfig("no selection sets".into()));
    }
    let mut counts = vec![0usize; p];
    for set in sets {
        for f in set.iter() {
            if f >= p {
                return Err(Error::IndexOutOfRange { index: f, bound: p });
            }
            counts[f] += 1;
        }
    }
    let n = sets.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}

/// Feature indices ordered by descending score, ties by ascending index.
pub fn ranking_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// The `k` highest-scoring features.
pub fn rank_top_k(scores: &[f64], k: usize) -> Result<IndexSet> {
    if k == 0 || k > scores.len() {
        return Err(Error::InvalidConfig(format!("k = {k} outside 1..={}", scores.len())));
    }
    Ok(IndexSet::from_unsorted(ranking_order(scores).into_iter().take(k).collect()))
}

/// Writes `feature_id,score`, sorted by descending score then index.
pub fn write_scores_csv(path: &Path, feature_ids: &[String], scores: &[f64]) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(w, "feature_id,score").map_err(io)?;
    for j in ranking_order(scores) {
        writeln!(w, "{},{}", feature_ids[j], scores[j]).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads a `feature_id,score` file in file order.
pub fn read_scores_csv(path: &Path) -> Result<Vec<(String, f64)>> {
    let io = |e| Error::io(path, e);
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut lines = reader.lines();
    match lines.next() {
        Some(Ok(h)) if h.trim() == "feature_id,score" => {}
        Some(Ok(h)) => return Err(Error::Format(format!("unexpected ranking header `{h}`"))),
        Some(Err(e)) => return Err(io(e)),
        None => return Err(Error::Empty(path.display().to_string())),
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(io)?;
        if line.is_empty() {
            continue;
        }
        let (id, score) = line.rsplit_once(',').ok_or_else(|| Error::Parse {
            row: i + 1,
            column: 1,
            message: "expected `feature_id,score`".into(),
        })?;
        let score: f64 = score.trim().parse().map_err(|_| Error::Parse {
            row: i + 1,
            column: 2,
            message: format!("`{score}` is not a number"),
        })?;
        out.push((id.to_string(), score));
    }
    Ok(out)
}

/// One line per resample with the selected original indices, comma separated.
pub fn write_sets(path: &Path, sets: &[IndexSet]) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for set in sets {
        let line: Vec<String> = set.iter().map(|i| i.to_string()).collect();
        writeln!(w, "{}", line.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}
