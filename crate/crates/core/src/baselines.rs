//! Comparator feature-ranking methods. Every method reduces to one
//! nonnegative score per feature (higher is more relevant), ranked with the
//! same tie rule as stability scores.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::data::{standardize, Dataset};
use crate::elastic_net::{self, Loss, PenaltyConfig};
use crate::error::{Error, Result};
use crate::stability::{self, StabilityResult, SubsampleParams};

/// Default resample count for randomized ℓ1 logistic regression.
pub const RANDOMIZED_L1_RESAMPLES: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    TTest,
    L1Logistic,
    L2Logistic,
    L1Svm,
    L2Svm,
    ElasticNet,
    RandomizedL1Logistic,
    StabilityElasticNet,
}

impl MethodKind {
    pub const ALL: [MethodKind; 8] = [
        MethodKind::TTest,
        MethodKind::L1Logistic,
        MethodKind::L2Logistic,
        MethodKind::L1Svm,
        MethodKind::L2Svm,
        MethodKind::ElasticNet,
        MethodKind::RandomizedL1Logistic,
        MethodKind::StabilityElasticNet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MethodKind::TTest => "t_test",
            MethodKind::L1Logistic => "l1_logistic",
            MethodKind::L2Logistic => "l2_logistic",
            MethodKind::L1Svm => "l1_svm",
            MethodKind::L2Svm => "l2_svm",
            MethodKind::ElasticNet => "elastic_net",
            MethodKind::RandomizedL1Logistic => "randomized_l1_logistic",
            MethodKind::StabilityElasticNet => "stability_elastic_net",
        }
    }

    /// Accepted hyperparameters and their defaults.
    pub fn defaults(self) -> &'static [(&'static str, f64)] {
        match self {
            MethodKind::TTest => &[],
            MethodKind::L1Logistic | MethodKind::L1Svm => &[("lambda", 1.0)],
            MethodKind::L2Logistic | MethodKind::L2Svm => &[("lambda", 0.5)],
            MethodKind::ElasticNet => &[("lambda1", 1.0), ("lambda2", 1.0)],
            MethodKind::RandomizedL1Logistic => &[
                ("lambda", 5.0),
                ("alpha", stability::DEFAULT_ALPHA),
                ("beta", stability::DEFAULT_BETA),
                ("n_resamples", RANDOMIZED_L1_RESAMPLES as f64),
            ],
            MethodKind::StabilityElasticNet => &[
                ("lambda1", 16.0),
                ("lambda2", 256.0),
                ("alpha", stability::DEFAULT_ALPHA),
                ("beta", stability::DEFAULT_BETA),
                ("n_resamples", stability::DEFAULT_RESAMPLES as f64),
            ],
        }
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MethodKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub kind: MethodKind,
    pub hyperparams: BTreeMap<String, f64>,
}

impl MethodSpec {
    /// Validates `overrides` against the kind and fills in defaults.
    pub fn new(kind: MethodKind, overrides: BTreeMap<String, f64>) -> Result<Self> {
        let defaults = kind.defaults();
        for key in overrides.keys() {
            if !defaults.iter().any(|(k, _)| k == key) {
                return Err(Error::InvalidConfig(format!("{kind} does not accept `{key}`")));
            }
        }
        let mut hyperparams: BTreeMap<String, f64> = defaults.iter().map(|&(k, v)| (k.to_string(), v)).collect();
        hyperparams.extend(overrides);
        let spec = MethodSpec { kind, hyperparams };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_defaults(kind: MethodKind) -> Self {
        Self::new(kind, BTreeMap::new()).expect("defaults are valid")
    }

    pub fn with(mut self, key: &str, value: f64) -> Result<Self> {
        if !self.hyperparams.contains_key(key) {
            return Err(Error::InvalidConfig(format!("{} does not accept `{key}`", self.kind)));
        }
        self.hyperparams.insert(key.to_string(), value);
        self.validate()?;
        Ok(self)
    }

    pub fn get(&self, key: &str) -> f64 {
        self.hyperparams[key]
    }

    fn validate(&self) -> Result<()> {
        for (key, &v) in &self.hyperparams {
            let ok = match key.as_str() {
                "lambda" | "lambda1" | "lambda2" => v.is_finite() && v >= 0.0,
                "alpha" | "beta" => v > 0.0 && v <= 1.0,
                "n_resamples" => v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64,
                _ => false,
            };
            if !ok {
                return Err(Error::InvalidConfig(format!("{}: invalid {key} = {v}", self.kind)));
            }
        }
        match self.kind {
            MethodKind::ElasticNet | MethodKind::StabilityElasticNet
                if self.get("lambda1") + self.get("lambda2") == 0.0 =>
            {
                Err(Error::InvalidConfig(format!("{}: lambda1 + lambda2 must be > 0", self.kind)))
            }
            _ => Ok(()),
        }
    }

    /// Base learner fitted on the full data (or on every resample).
    pub fn penalty(&self) -> Option<PenaltyConfig> {
        let l = |k| self.get(k);
        let cfg = match self.kind {
            MethodKind::TTest => return None,
            MethodKind::L1Logistic | MethodKind::RandomizedL1Logistic => PenaltyConfig::logistic(l("lambda"), 0.0),
            MethodKind::L2Logistic => PenaltyConfig::logistic(0.0, l("lambda")),
            MethodKind::L1Svm => PenaltyConfig::squared_hinge(l("lambda"), 0.0),
            MethodKind::L2Svm => PenaltyConfig::squared_hinge(0.0, l("lambda")),
            MethodKind::ElasticNet | MethodKind::StabilityElasticNet => {
                PenaltyConfig::squared(l("lambda1"), l("lambda2"))
            }
        };
        Some(cfg.expect("hyperparameters validated"))
    }

    /// Subsampling parameters for the resampling methods.
    pub fn subsample(&self, master_seed: u64) -> Option<SubsampleParams> {
        match self.kind {
            MethodKind::RandomizedL1Logistic | MethodKind::StabilityElasticNet => Some(SubsampleParams {
                alpha: self.get("alpha"),
                beta: self.get("beta"),
                n_resamples: self.get("n_resamples") as usize,
                master_seed,
                stratify: true,
            }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRanking {
    pub scores: Vec<f64>,
    pub method: MethodSpec,
    /// Digest of the dataset the ranking was computed from.
    pub source_digest: String,
}

impl FeatureRanking {
    pub fn top_k(&self, k: usize) -> Result<crate::data::IndexSet> {
        stability::rank_top_k(&self.scores, k)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TTest {
    /// Class 1 minus class 0; `±inf` when the pooled variance is zero and the means differ.
    pub t: Vec<f64>,
    pub p_values: Vec<f64>,
    pub df: usize,
}

/// Two-sample pooled-variance t-test per feature.
pub fn t_test(d: &Dataset) -> Result<TTest> {
    let (n0, n1) = d.class_counts();
    if n0 < 2 || n1 < 2 {
        return Err(Error::InvalidDataset(format!(
            "t-test needs >= 2 observations per class, got {n0} and {n1}"
        )));
    }
    let df = d.n() - 2;
    let dist = StudentsT::new(0.0, 1.0, df as f64).expect("df >= 2");
    let (f0, f1) = (n0 as f64, n1 as f64);
    let mut t = Vec::with_capacity(d.p());
    let mut p_values = Vec::with_capacity(d.p());
    for j in 0..d.p() {
        let col = d.column(j);
        let (mut s0, mut s1) = (0.0, 0.0);
        for (&v, &l) in col.iter().zip(d.y()) {
            if l == 1 {
                s1 += v;
            } else {
                s0 += v;
            }
        }
        let (m0, m1) = (s0 / f0, s1 / f1);
        let ss: f64 = col
            .iter()
            .zip(d.y())
            .map(|(&v, &l)| {
                let e = v - if l == 1 { m1 } else { m0 };
                e * e
            })
            .sum();
        let pooled = ss / df as f64;
        let gap = m1 - m0;
        let tj = if pooled > 0.0 {
            gap / (pooled * (1.0 / f0 + 1.0 / f1)).sqrt()
        } else if gap == 0.0 {
            0.0
        } else {
            gap.signum() * f64::INFINITY
        };
        t.push(tj);
        p_values.push(if tj.is_infinite() { 0.0 } else { 2.0 * dist.sf(tj.abs()) });
    }
    Ok(TTest { t, p_values, df })
}

pub fn t_test_scores(d: &Dataset) -> Result<FeatureRanking> {
    let tt = t_test(d)?;
    Ok(FeatureRanking {
        scores: tt.t.iter().map(|v| v.abs()).collect(),
        method: MethodSpec::with_defaults(MethodKind::TTest),
        source_digest: d.digest(),
    })
}

/// Fits the method's model once on the standardized full data; score = `|w_j|`.
pub fn penalized_model_scores(d: &Dataset, method: &MethodSpec) -> Result<FeatureRanking> {
    let cfg = match (method.penalty(), method.subsample(0)) {
        (Some(cfg), None) => cfg,
        _ => {
            return Err(Error::InvalidConfig(format!(
                "{} is not a single-fit penalized model",
                method.kind
            )))
        }
    };
    d.require_both_classes()?;
    let (z, _) = standardize(d);
    let fr = elastic_net::fit(&z, &cfg)?;
    if !fr.converged {
        return Err(Error::NotConverged {
            iterations: fr.iterations,
        });
    }
    Ok(FeatureRanking {
        scores: fr.w.iter().map(|v| v.abs()).collect(),
        method: method.clone(),
        source_digest: d.digest(),
    })
}

/// Stability selection with an ℓ1-logistic base learner.
pub fn randomized_l1_logistic(d: &Dataset, params: &SubsampleParams, lambda1: f64) -> Result<StabilityResult> {
    let base = PenaltyConfig::logistic(lambda1, 0.0)?;
    stability::run(d, params, &base, false)
}

/// Scores `d` with any method. `seed` drives the resampling methods only.
pub fn rank_features(d: &Dataset, method: &MethodSpec, seed: u64) -> Result<FeatureRanking> {
    match method.kind {
        MethodKind::TTest => t_test_scores(d),
        MethodKind::RandomizedL1Logistic | MethodKind::StabilityElasticNet => {
            let params = method.subsample(seed).expect("resampling method");
            let base = method.penalty().expect("penalized method");
            debug_assert!(method.kind != MethodKind::RandomizedL1Logistic || base.loss == Loss::Logistic);
            let res = stability::run(d, &params, &base, false)?;
            Ok(FeatureRanking {
                scores: res.scores,
                method: method.clone(),
                source_digest: d.digest(),
            })
        }
        _ => penalized_model_scores(d, method),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn informative(n: usize, p: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let x = Array2::from_shape_fn((n, p), |(i, j)| {
            let e: f64 = rng.sample(StandardNormal);
            if j < 2 {
                1.5 * f64::from(y[i]) + e
            } else {
                e
            }
        });
        Dataset::with_default_ids(x, y).unwrap()
    }

    #[test]
    fn method_names_round_trip() {
        for k in MethodKind::ALL {
            assert_eq!(k.name().parse::<MethodKind>().unwrap(), k);
        }
        assert!("svm".parse::<MethodKind>().is_err());
    }

    #[test]
    fn hyperparameters_are_validated() {
        let mut bad = BTreeMap::new();
        bad.insert("lambda1".to_string(), 1.0);
        assert!(MethodSpec::new(MethodKind::L1Logistic, bad).is_err());
        assert!(MethodSpec::with_defaults(MethodKind::L1Svm).with("lambda", -1.0).is_err());
        assert!(MethodSpec::with_defaults(MethodKind::StabilityElasticNet).with("alpha", 1.5).is_err());
        assert!(MethodSpec::with_defaults(MethodKind::StabilityElasticNet).with("n_resamples", 2.5).is_err());
        let zero = MethodSpec::with_defaults(MethodKind::ElasticNet).with("lambda1", 0.0).unwrap();
        assert!(zero.with("lambda2", 0.0).is_err());
        let r = MethodSpec::with_defaults(MethodKind::RandomizedL1Logistic);
        assert_eq!(r.subsample(3).unwrap().n_resamples, 500);
        assert_eq!(MethodSpec::with_defaults(MethodKind::StabilityElasticNet).subsample(3).unwrap().n_resamples, 200);
    }

    #[test]
    fn t_statistic_matches_textbook_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Array2::from_shape_fn((30, 5), |_| rng.sample::<f64, _>(StandardNormal));
        let y: Vec<u8> = (0..30).map(|i| u8::from(i < 13)).collect();
        let d = Dataset::with_default_ids(x.clone(), y.clone()).unwrap();
        let tt = t_test(&d).unwrap();
        for j in 0..5 {
            let a: Vec<f64> = (0..30).filter(|&i| y[i] == 1).map(|i| x[[i, j]]).collect();
            let b: Vec<f64> = (0..30).filter(|&i| y[i] == 0).map(|i| x[[i, j]]).collect();
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            let var = |v: &[f64]| {
                let m = mean(v);
                v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
            };
            let (na, nb) = (a.len() as f64, b.len() as f64);
            let sp2 = ((na - 1.0) * var(&a) + (nb - 1.0) * var(&b)) / (na + nb - 2.0);
            let expected = (mean(&a) - mean(&b)) / (sp2 * (1.0 / na + 1.0 / nb)).sqrt();
            assert!((tt.t[j] - expected).abs() <= 1e-12, "{} vs {expected}", tt.t[j]);
            assert!((0.0..=1.0).contains(&tt.p_values[j]));
        }
    }

    #[test]
    fn p_values_follow_student_t() {
        // t = 2.0484 is the two-sided 5% critical value at 28 degrees of freedom.
        let dist = StudentsT::new(0.0, 1.0, 28.0).unwrap();
        assert!((2.0 * dist.sf(2.0484) - 0.05).abs() < 1e-4);
    }

    #[test]
    fn degenerate_variances() {
        let d = Dataset::with_default_ids(array![[0.0, 3.0], [0.0, 3.0], [1.0, 3.0], [1.0, 3.0]], vec![0, 0, 1, 1]).unwrap();
        let tt = t_test(&d).unwrap();
        assert_eq!(tt.t, vec![f64::INFINITY, 0.0]);
        assert_eq!(tt.p_values, vec![0.0, 1.0]);
        let ranking = t_test_scores(&d).unwrap();
        assert_eq!(ranking.top_k(1).unwrap().into_vec(), vec![0]);
        let small = Dataset::with_default_ids(array![[0.0], [1.0], [2.0]], vec![0, 1, 1]).unwrap();
        assert!(t_test(&small).is_err());
    }

    #[test]
    fn symmetric_classes_give_zero_t() {
        let d = Dataset::with_default_ids(array![[1.0], [-1.0], [1.0], [-1.0]], vec![0, 0, 1, 1]).unwrap();
        assert_eq!(t_test(&d).unwrap().t, vec![0.0]);
    }

    proptest! {
        #[test]
        fn t_test_is_affine_invariant(scale in 0.01f64..100.0, shift in -50.0f64..50.0, seed in 0u64..1000) {
            let d = informative(20, 3, seed);
            let x2 = d.x().mapv(|v| scale * v + shift);
            let d2 = Dataset::with_default_ids(x2, d.y().to_vec()).unwrap();
            let (a, b) = (t_test(&d).unwrap(), t_test(&d2).unwrap());
            for (u, v) in a.t.iter().zip(&b.t) {
                prop_assert!((u.abs() - v.abs()).abs() <= 1e-10 * (1.0 + u.abs()));
            }
        }
    }

    #[test]
    fn l2_logistic_on_separable_data_is_finite_and_ordered() {
        let x = array![[-2.0, 0.3], [-1.0, -0.2], [-1.5, 0.1], [1.0, 0.2], [2.0, -0.1], [1.5, -0.3]];
        let d = Dataset::with_default_ids(x, vec![0, 0, 0, 1, 1, 1]).unwrap();
        let r = penalized_model_scores(&d, &MethodSpec::with_defaults(MethodKind::L2Logistic)).unwrap();
        assert!(r.scores.iter().all(|v| v.is_finite()));
        assert!(r.scores[0] > r.scores[1]);
    }

    #[test]
    fn huge_lambda_gives_null_scores() {
        let d = informative(30, 6, 2);
        for kind in [MethodKind::L1Svm, MethodKind::L1Logistic] {
            let m = MethodSpec::with_defaults(kind).with("lambda", 1e6).unwrap();
            assert!(penalized_model_scores(&d, &m).unwrap().scores.iter().all(|&v| v == 0.0));
        }
        let m = MethodSpec::with_defaults(MethodKind::RandomizedL1Logistic)
            .with("lambda", 1e6)
            .unwrap()
            .with("n_resamples", 20.0)
            .unwrap();
        assert!(rank_features(&d, &m, 1).unwrap().scores.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn l1_supports_are_bounded_by_n() {
        for seed in 0..5 {
            let d = informative(12, 40, seed);
            for kind in [MethodKind::L1Logistic, MethodKind::L1Svm] {
                let m = MethodSpec::with_defaults(kind).with("lambda", 0.05).unwrap();
                let r = penalized_model_scores(&d, &m).unwrap();
                assert!(r.scores.iter().filter(|&&v| v > elastic_net::DEFAULT_ZERO_TOL).count() <= 12);
            }
        }
    }

    #[test]
    fn penalized_scores_find_informative_features() {
        let d = informative(60, 10, 4);
        for kind in [MethodKind::L1Logistic, MethodKind::L2Logistic, MethodKind::L1Svm, MethodKind::L2Svm, MethodKind::ElasticNet] {
            let r = rank_features(&d, &MethodSpec::with_defaults(kind), 0).unwrap();
            assert_eq!(r.scores.len(), 10);
            assert_eq!(r.top_k(2).unwrap().into_vec(), vec![0, 1], "{kind}");
            assert_eq!(r.source_digest, d.digest());
        }
    }

    #[test]
    fn randomized_l1_delegates_to_stability_run() {
        let d = informative(40, 12, 5);
        let params = SubsampleParams::default().with_resamples(30).with_seed(4);
        let direct = stability::run(&d, &params, &PenaltyConfig::logistic(2.0, 0.0).unwrap(), false).unwrap();
        let via = randomized_l1_logistic(&d, &params, 2.0).unwrap();
        assert_eq!(direct.scores, via.scores);
        let m = MethodSpec::with_defaults(MethodKind::RandomizedL1Logistic)
            .with("lambda", 2.0)
            .unwrap()
            .with("n_resamples", 30.0)
            .unwrap();
        assert_eq!(rank_features(&d, &m, 4).unwrap().scores, direct.scores);
    }
}
