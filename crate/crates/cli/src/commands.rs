use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use stabsel::baselines::{rank_features, FeatureRanking, MethodKind, MethodSpec};
use stabsel::data::{load_matrix, save_matrix, Dataset, MatrixFormat};
use stabsel::evaluation::{
    pr_curve, robustness_sweep, roc_auc, topk_curve, two_centers, write_pr_csv, write_roc_csv, write_sweep_csv,
    write_topk_csv, PRCurve, PrPoint, PR_RECALL_LEVEL,
};
use stabsel::stability::{self, read_scores_csv, write_scores_csv, write_sets};
use stabsel::synthetic::{flip_labels, generate, SyntheticSpec};
use stabsel::tuning::{tune_method, DEFAULT_FOLDS};

use crate::sidecar;
use crate::{CompareArgs, EvalClassifyArgs, Experiment, FormatArg, GenSynthArgs, RankMergeArgs, SelectArgs};

/// Default top-k grid; values above `p` are dropped and `p` itself is always included.
const DEFAULT_KS: [usize; 10] = [10, 25, 50, 100, 150, 200, 300, 500, 1000, 2000];
/// SNR of the generated centers in the top-k experiment; at SNR 1 every k classifies perfectly.
const TOPK_SYNTHETIC_SNR: f64 = 0.25;

pub fn parse_param(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got `{s}`"))?;
    let v: f64 = v.trim().parse().map_err(|_| format!("`{v}` is not a number"))?;
    Ok((k.trim().to_string(), v))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn load(path: &Path) -> Result<Dataset> {
    load_matrix(path, MatrixFormat::from_path(path)).with_context(|| format!("loading {}", path.display()))
}

fn load_spec(path: Option<&Path>) -> Result<SyntheticSpec> {
    match path {
        Some(p) => SyntheticSpec::load(p).with_context(|| format!("loading spec {}", p.display())),
        None => Ok(SyntheticSpec::default()),
    }
}

fn parse_methods(names: &[String], default: &[MethodKind]) -> Result<Vec<MethodSpec>> {
    if names.is_empty() {
        return Ok(default.iter().map(|&k| MethodSpec::with_defaults(k)).collect());
    }
    names
        .iter()
        .map(|n| Ok(MethodSpec::with_defaults(n.trim().parse::<MethodKind>()?)))
        .collect()
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

#[derive(Debug, Serialize)]
struct GenSynthConfig {
    format: &'static str,
    data_file: String,
    spec: SyntheticSpec,
}

pub fn gen_synth(seed: u64, args: &GenSynthArgs) -> Result<()> {
    let mut spec = load_spec(args.spec.as_deref())?;
    spec.noise_seed = seed;
    if let Some(snr) = args.snr {
        spec.snr = snr;
    }
    if let Some(t) = args.timepoints {
        spec.n_timepoints = t;
    }
    spec.validate()?;
    let (d, truth) = generate(&spec)?;
    create_dir(&args.out)?;
    let (format, name, fmt) = match args.format {
        FormatArg::Csv => ("csv", "data.csv", MatrixFormat::Csv),
        FormatArg::BinaryF64 => ("binary-f64", "data.bin", MatrixFormat::BinaryF64),
    };
    save_matrix(&d, &args.out.join(name), fmt)?;
    truth.write_csv(&args.out.join("ground_truth.csv"))?;
    spec.save(&args.out.join("spec.toml"))?;
    let cfg = GenSynthConfig {
        format,
        data_file: name.into(),
        spec,
    };
    sidecar::write(&args.out, "gen-synth", seed, Some(&d.digest()), &cfg)
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SelectFile {
    method: Option<String>,
    tune: Option<bool>,
    #[serde(default)]
    hyperparams: BTreeMap<String, f64>,
}

#[derive(Debug, Serialize)]
struct SelectConfig {
    data: String,
    tuned: bool,
    keep_sets: bool,
    stratify: bool,
    method: MethodSpec,
}

pub fn select(seed: u64, args: &SelectArgs) -> Result<()> {
    let file: SelectFile = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => SelectFile::default(),
    };
    let name = args
        .method
        .clone()
        .or(file.method)
        .unwrap_or_else(|| MethodKind::StabilityElasticNet.name().to_string());
    let kind: MethodKind = name.parse()?;
    let mut overrides = file.hyperparams;
    overrides.extend(args.params.iter().cloned());
    let mut method = MethodSpec::new(kind, overrides)?;
    let tuned = args.tune || file.tune.unwrap_or(false);

    let d = load(&args.data)?;
    if tuned {
        method = tune_method(&d, &method, DEFAULT_FOLDS, seed)?;
    }
    create_dir(&args.out)?;
    let scores = match (method.subsample(seed), method.penalty()) {
        (Some(mut params), Some(base)) => {
            params.stratify = !args.no_stratify;
            let res = stability::run(&d, &params, &base, args.keep_sets)?;
            if let Some(sets) = &res.selection_sets {
                write_sets(&args.out.join("sets.txt"), sets)?;
            }
            res.scores
        }
        _ if args.keep_sets || args.no_stratify => {
            bail!("--keep-sets and --no-stratify need a resampling method, got {}", method.kind)
        }
        _ => rank_features(&d, &method, seed)?.scores,
    };
    write_scores_csv(&args.out.join("ranking.csv"), d.feature_ids(), &scores)?;
    let cfg = SelectConfig {
        data: path_str(&args.data),
        tuned,
        keep_sets: args.keep_sets,
        stratify: !args.no_stratify,
        method,
    };
    sidecar::write(&args.out, "select", seed, Some(&d.digest()), &cfg)
}

#[derive(Debug, Serialize)]
struct CompareConfig {
    experiment: &'static str,
    seeds: Vec<u64>,
    flips: Vec<usize>,
    tuned: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    train: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eval: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    ks: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    c_reg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    best_k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    spec: Option<SyntheticSpec>,
    methods: Vec<MethodSpec>,
}

fn tune_all(d: &Dataset, methods: &[MethodSpec], seed: u64) -> Result<Vec<MethodSpec>> {
    methods
        .iter()
        .map(|m| tune_method(d, m, DEFAULT_FOLDS, seed).map_err(Into::into))
        .collect()
}

pub fn compare(seed: u64, args: &CompareArgs) -> Result<()> {
    let mut spec = load_spec(args.spec.as_deref())?;
    if let Some(snr) = args.snr {
        spec.snr = snr;
    }
    if args.seeds == 0 {
        bail!("--seeds must be at least 1");
    }
    let seeds: Vec<u64> = (seed..seed + args.seeds).collect();
    create_dir(&args.out)?;
    match args.experiment {
        Experiment::Robustness | Experiment::Pr => {
            let mut methods = parse_methods(&args.methods, &MethodKind::ALL)?;
            if args.tune {
                let (d, _) = generate(&spec.clone().with_seed(seeds[0]))?;
                methods = tune_all(&d, &methods, seed)?;
            }
            let (name, flips) = if args.experiment == Experiment::Robustness {
                let flips: Vec<usize> = (0..=args.max_flips).collect();
                let rows = robustness_sweep(&spec, &methods, &flips, &seeds)?;
                write_sweep_csv(&args.out.join("robustness.csv"), &rows)?;
                ("robustness", flips)
            } else {
                let curves = mean_pr_curves(&spec, &methods, args.flips, &seeds)?;
                write_pr_csv(&args.out.join("pr.csv"), &curves)?;
                let mut summary = String::from("method,flips,precision_at_recall_0.8\n");
                for c in &curves {
                    let prec = c.precision_at_recall(PR_RECALL_LEVEL);
                    summary.push_str(&format!("{},{},{}\n", c.method, args.flips, prec));
                }
                let path = args.out.join("pr_summary.csv");
                fs::write(&path, summary).with_context(|| format!("writing {}", path.display()))?;
                ("pr", vec![args.flips])
            };
            let cfg = CompareConfig {
                experiment: name,
                seeds,
                flips,
                tuned: args.tune,
                train: None,
                eval: None,
                ks: Vec::new(),
                c_reg: None,
                best_k: None,
                auc: None,
                spec: Some(spec),
                methods,
            };
            sidecar::write(&args.out, "compare", seed, None, &cfg)
        }
        Experiment::Topk => compare_topk(seed, args, spec),
    }
}

/// PR curves averaged point-wise over seeds (each seed's curve covers every k).
fn mean_pr_curves(spec: &SyntheticSpec, methods: &[MethodSpec], flips: usize, seeds: &[u64]) -> Result<Vec<PRCurve>> {
    let cells: Vec<(usize, u64)> = (0..methods.len())
        .flat_map(|m| seeds.iter().map(move |&s| (m, s)))
        .collect();
    let curves: Vec<PRCurve> = cells
        .par_iter()
        .map(|&(m, s)| {
            let (d, truth) = generate(&spec.clone().with_seed(s))?;
            let noisy = d.with_labels(flip_labels(d.y(), flips, s)?)?;
            let ranking = rank_features(&noisy, &methods[m], s)?;
            Ok(pr_curve(&ranking, &truth.discriminative)?)
        })
        .collect::<Result<_>>()?;
    let per = seeds.len() as f64;
    Ok(curves
        .chunks(seeds.len())
        .map(|group| {
            let points = (0..group[0].points.len())
                .map(|i| PrPoint {
                    k: group[0].points[i].k,
                    precision: group.iter().map(|c| c.points[i].precision).sum::<f64>() / per,
                    recall: group.iter().map(|c| c.points[i].recall).sum::<f64>() / per,
                })
                .collect();
            PRCurve {
                method: group[0].method.clone(),
                points,
            }
        })
        .collect())
}

fn resolve_ks(ks: &[usize], p: usize) -> Result<Vec<usize>> {
    let mut out: Vec<usize> = if ks.is_empty() {
        DEFAULT_KS.iter().copied().filter(|&k| k < p).chain([p]).collect()
    } else {
        ks.to_vec()
    };
    out.sort_unstable();
    out.dedup();
    if let Some(&bad) = out.iter().find(|&&k| k == 0 || k > p) {
        bail!("k = {bad} outside 1..={p}");
    }
    Ok(out)
}

/// SVM cost chosen once by CV of the ridge squared-hinge model on `train`.
fn cv_cost(train: &Dataset, seed: u64) -> Result<f64> {
    let tuned = tune_method(train, &MethodSpec::with_defaults(MethodKind::L2Svm), DEFAULT_FOLDS, seed)?;
    Ok(0.5 / tuned.get("lambda"))
}

fn compare_topk(seed: u64, args: &CompareArgs, mut spec: SyntheticSpec) -> Result<()> {
    let (train, eval, spec_echo) = match (&args.train, &args.eval) {
        (Some(t), Some(e)) => (load(t)?, load(e)?, None),
        _ => {
            if args.snr.is_none() {
                spec.snr = TOPK_SYNTHETIC_SNR;
            }
            let (a, b) = two_centers(&spec, seed)?;
            (a, b, Some(spec))
        }
    };
    let methods = parse_methods(&args.methods, &[MethodKind::StabilityElasticNet])?;
    let methods = if args.tune { tune_all(&train, &methods, seed)? } else { methods };
    let ks = resolve_ks(&args.ks, train.p())?;
    let c_reg = match args.c_reg {
        Some(c) => c,
        None => cv_cost(&train, seed)?,
    };
    let mut rows = Vec::new();
    let mut first: Option<(FeatureRanking, Vec<stabsel::evaluation::TopKRow>)> = None;
    for m in &methods {
        let ranking = rank_features(&train, m, seed)?;
        write_scores_csv(
            &args.out.join(format!("ranking_{}.csv", m.kind)),
            train.feature_ids(),
            &ranking.scores,
        )?;
        let curve = topk_curve(&train, &eval, &ranking, &ks, c_reg)?;
        rows.extend(curve.iter().cloned());
        if first.is_none() {
            first = Some((ranking, curve));
        }
    }
    write_topk_csv(&args.out.join("topk.csv"), &rows)?;
    let (_, curve) = first.ok_or_else(|| anyhow!("no methods"))?;
    // best k of the first method: highest accuracy, smallest k on ties
    let best = curve
        .iter()
        .fold(None::<&stabsel::evaluation::TopKRow>, |acc, r| match acc {
            Some(b) if b.report.accuracy >= r.report.accuracy => Some(b),
            _ => Some(r),
        })
        .expect("non-empty k grid");
    let roc = roc_auc(&best.report.decisions, eval.y())?;
    write_roc_csv(&args.out.join("roc.csv"), &roc)?;
    let cfg = CompareConfig {
        experiment: "topk",
        seeds: vec![seed],
        flips: Vec::new(),
        tuned: args.tune,
        train: args.train.as_deref().map(path_str),
        eval: args.eval.as_deref().map(path_str),
        ks,
        c_reg: Some(c_reg),
        best_k: Some(best.k),
        auc: Some(roc.auc),
        spec: spec_echo,
        methods,
    };
    sidecar::write(&args.out, "compare", seed, Some(&train.digest()), &cfg)
}

#[derive(Debug, Serialize)]
struct EvalConfig {
    train: String,
    eval: String,
    ranking: String,
    k: usize,
    c_reg: f64,
    auc: f64,
}

/// Scores of `path` aligned with `ids`; every id must appear exactly once.
fn scores_by_id(path: &Path, ids: &[String]) -> Result<Vec<f64>> {
    let pairs = read_scores_csv(path).with_context(|| format!("reading ranking {}", path.display()))?;
    let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut scores = vec![None; ids.len()];
    for (id, s) in &pairs {
        let &j = index
            .get(id.as_str())
            .ok_or_else(|| anyhow!("{}: unknown feature id `{id}`", path.display()))?;
        if scores[j].replace(*s).is_some() {
            bail!("{}: duplicate feature id `{id}`", path.display());
        }
    }
    scores
        .into_iter()
        .zip(ids)
        .map(|(s, id)| s.ok_or_else(|| anyhow!("{}: missing feature id `{id}`", path.display())))
        .collect()
}

pub fn eval_classify(seed: u64, args: &EvalClassifyArgs) -> Result<()> {
    let train = load(&args.train)?;
    let eval = load(&args.eval)?;
    let scores = scores_by_id(&args.ranking, train.feature_ids())?;
    let meta = sidecar::read_next_to(&args.ranking)?;
    let digest = meta
        .get("source_digest")
        .and_then(|v| v.as_str())
        .ok_or_else(|| anyhow!("ranking sidecar records no source digest; cannot rule out leakage"))?
        .to_string();
    let method = meta
        .get("args")
        .and_then(|a| a.get("method"))
        .cloned()
        .and_then(|m| m.try_into::<MethodSpec>().ok());
    let label = method.as_ref().map_or_else(|| "ranking".to_string(), |m| m.kind.to_string());
    let ranking = FeatureRanking {
        scores,
        method: method.unwrap_or_else(|| MethodSpec::with_defaults(MethodKind::StabilityElasticNet)),
        source_digest: digest,
    };
    let c_reg = match args.c_reg {
        Some(c) => c,
        None => cv_cost(&train, seed)?,
    };
    let mut rows = topk_curve(&train, &eval, &ranking, &[args.k], c_reg)?;
    rows[0].method = label;
    create_dir(&args.out)?;
    write_topk_csv(&args.out.join("topk.csv"), &rows)?;
    let roc = roc_auc(&rows[0].report.decisions, eval.y())?;
    write_roc_csv(&args.out.join("roc.csv"), &roc)?;
    let mut dec = String::from("index,label,decision\n");
    for (i, (v, l)) in rows[0].report.decisions.iter().zip(eval.y()).enumerate() {
        dec.push_str(&format!("{i},{l},{v}\n"));
    }
    let path = args.out.join("decisions.csv");
    fs::write(&path, dec).with_context(|| format!("writing {}", path.display()))?;
    let cfg = EvalConfig {
        train: path_str(&args.train),
        eval: path_str(&args.eval),
        ranking: path_str(&args.ranking),
        k: args.k,
        c_reg,
        auc: roc.auc,
    };
    sidecar::write(&args.out, "eval-classify", seed, Some(&ranking.source_digest), &cfg)
}

#[derive(Debug, Serialize)]
struct MergeConfig {
    inputs: Vec<String>,
}

pub fn rank_merge(seed: u64, args: &RankMergeArgs) -> Result<()> {
    let first = read_scores_csv(&args.inputs[0]).with_context(|| format!("reading {}", args.inputs[0].display()))?;
    let ids: Vec<String> = first.iter().map(|(id, _)| id.clone()).collect();
    let mut total = vec![0.0; ids.len()];
    let mut digests = Vec::new();
    for path in &args.inputs {
        for (t, s) in total.iter_mut().zip(scores_by_id(path, &ids)?) {
            *t += s;
        }
        let digest = sidecar::read_next_to(path)
            .ok()
            .and_then(|m| m.get("source_digest").and_then(|v| v.as_str()).map(String::from));
        digests.push(digest);
    }
    let n = args.inputs.len() as f64;
    let mean: Vec<f64> = total.into_iter().map(|t| t / n).collect();
    create_dir(&args.out)?;
    write_scores_csv(&args.out.join("ranking.csv"), &ids, &mean)?;
    // the digest carries over only when every input ranked the same dataset
    let shared = match digests.split_first() {
        Some((Some(d), rest)) if rest.iter().all(|o| o.as_ref() == Some(d)) => Some(d.clone()),
        _ => None,
    };
    let cfg = MergeConfig {
        inputs: args.inputs.iter().map(|p: &PathBuf| path_str(p)).collect(),
    };
    sidecar::write(&args.out, "rank-merge", seed, shared.as_deref(), &cfg)
}
