//! Synthetic activation benchmark: a 70×63 image with five 7×7 regions whose
//! pixels follow boxcar time courses plus Gaussian noise, observed over `T`
//! time points. Every time point is an observation, every pixel a feature
//! (row-major flattening), and the label of a time point is the value of the
//! discriminative boxcar at that time.
//!
//! Signal amplitude is set so that `std(signal) / std(noise) = snr` on every
//! active pixel, with unit-variance noise.

use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, IndexSet};
use crate::error::{Error, Result};
use crate::seed::{rng_for, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub name: String,
    /// Top-left pixel, `(row, column)`.
    pub top: usize,
    pub left: usize,
    pub size: usize,
    /// 1-based index into `SyntheticSpec::pattern_delays`.
    pub pattern: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub height: usize,
    pub width: usize,
    pub period_rest: usize,
    pub period_task: usize,
    pub n_timepoints: usize,
    pub snr: f64,
    pub noise_seed: u64,
    /// Onset delay of pattern `k` at position `k - 1`.
    pub pattern_delays: Vec<usize>,
    /// Pattern whose active time points are labelled 1.
    pub label_pattern: usize,
    pub regions: Vec<RegionSpec>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        let region = |name: &str, top, left, pattern| RegionSpec {
            name: name.to_string(),
            top,
            left,
            size: 7,
            pattern,
        };
        SyntheticSpec {
            height: 70,
            width: 63,
            period_rest: 10,
            period_task: 10,
            n_timepoints: 100,
            snr: 1.0,
            noise_seed: 0,
            pattern_delays: vec![0, 5, 10],
            label_pattern: 2,
            regions: vec![
                region("A", 8, 8, 1),
                region("B", 8, 48, 2),
                region("C", 31, 28, 2),
                region("D", 54, 8, 2),
                region("E", 54, 48, 3),
            ],
        }
    }
}

impl SyntheticSpec {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.noise_seed = seed;
        self
    }

    pub fn p(&self) -> usize {
        self.height * self.width
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.height == 0 || self.width == 0 {
            return bad("image must be non-empty".into());
        }
        if self.period_rest == 0 || self.period_task == 0 {
            return bad("rest and task blocks must be non-empty".into());
        }
        if self.n_timepoints < self.period_rest + self.period_task {
            return bad(format!(
                "n_timepoints = {} is shorter than one period",
                self.n_timepoints
            ));
        }
        if !(self.snr > 0.0) {
            return bad(format!("snr must be > 0, got {}", self.snr));
        }
        let n_patterns = self.pattern_delays.len();
        if self.label_pattern == 0 || self.label_pattern > n_patterns {
            return bad(format!("label_pattern {} out of range", self.label_pattern));
        }
        let mut owner = vec![false; self.p()];
        for r in &self.regions {
            if r.pattern == 0 || r.pattern > n_patterns {
                return bad(format!("region {} uses unknown pattern {}", r.name, r.pattern));
            }
            if r.size == 0 || r.top + r.size > self.height || r.left + r.size > self.width {
                return bad(format!("region {} does not fit in the image", r.name));
            }
            for pix in region_pixels(r, self.width) {
                if std::mem::replace(&mut owner[pix], true) {
                    return bad(format!("region {} overlaps another region", r.name));
                }
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        let body = toml::to_string(self).expect("spec serializes");
        format!(
            "# Synthetic benchmark specification.\n\
             # Region anchors approximate a hand-drawn layout (A top-left, B top-right,\n\
             # C center, D bottom-left, E bottom-right); they are not exact coordinates.\n\n{body}"
        )
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: SyntheticSpec = toml::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }
}

fn region_pixels(r: &RegionSpec, width: usize) -> impl Iterator<Item = usize> + '_ {
    (r.top..r.top + r.size).flat_map(move |row| (r.left..r.left + r.size).map(move |col| row * width + col))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub discriminative: IndexSet,
    pub all_active: IndexSet,
    /// Region name per pixel, `None` for background.
    pub region_of: Vec<Option<String>>,
}

impl GroundTruth {
    pub fn pixels_of(&self, region: &str) -> IndexSet {
        self.region_of
            .iter()
            .enumerate()
            .filter(|(_, r)| r.as_deref() == Some(region))
            .map(|(i, _)| i)
            .collect()
    }

    /// `pixel_index,region` for every active pixel.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("pixel_index,region\n");
        for pix in self.all_active.iter() {
            out.push_str(&format!("{pix},{}\n", self.region_of[pix].as_deref().unwrap_or("")));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Binary boxcar: 1 iff `t >= delay` and `(t - delay) mod (rest + task) >= rest`.
pub fn boxcar(period_rest: usize, period_task: usize, delay: usize, t_len: usize) -> Vec<u8> {
    let period = period_rest + period_task;
    (0..t_len)
        .map(|t| u8::from(t >= delay && (t - delay) % period >= period_rest))
        .collect()
}

pub fn ground_truth(spec: &SyntheticSpec) -> Result<GroundTruth> {
    spec.validate()?;
    let mut region_of = vec![None; spec.p()];
    let mut discriminative = Vec::new();
    let mut active = Vec::new();
    for r in &spec.regions {
        for pix in region_pixels(r, spec.width) {
            region_of[pix] = Some(r.name.clone());
            active.push(pix);
            if r.pattern == spec.label_pattern {
                discriminative.push(pix);
            }
        }
    }
    Ok(GroundTruth {
        discriminative: IndexSet::from_unsorted(discriminative),
        all_active: IndexSet::from_unsorted(active),
        region_of,
    })
}

fn population_std(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

/// Noise-free time course of each pattern, scaled to the target amplitude.
fn pattern_signals(spec: &SyntheticSpec) -> Vec<Vec<f64>> {
    spec.pattern_delays
        .iter()
        .map(|&delay| {
            let b: Vec<f64> = boxcar(spec.period_rest, spec.period_task, delay, spec.n_timepoints)
                .into_iter()
                .map(f64::from)
                .collect();
            let sd = population_std(&b);
            let amplitude = if spec.snr.is_finite() { spec.snr / sd } else { 1.0 / sd };
            b.into_iter().map(|v| v * amplitude).collect()
        })
        .collect()
}

pub fn generate(spec: &SyntheticSpec) -> Result<(Dataset, GroundTruth)> {
    let truth = ground_truth(spec)?;
    let (t_len, p) = (spec.n_timepoints, spec.p());
    let signals = pattern_signals(spec);
    let mut pattern_of = vec![None; p];
    for r in &spec.regions {
        for pix in region_pixels(r, spec.width) {
            pattern_of[pix] = Some(r.pattern - 1);
        }
    }
    let noise_scale = if spec.snr.is_finite() { 1.0 } else { 0.0 };
    let mut rng = rng_for(spec.noise_seed, Stream::Noise, 0);
    let mut x = Array2::zeros((t_len, p));
    for t in 0..t_len {
        for pix in 0..p {
            let noise: f64 = rng.sample(StandardNormal);
            let signal = pattern_of[pix].map_or(0.0, |k| signals[k][t]);
            x[[t, pix]] = signal + noise_scale * noise;
        }
    }
    let delay = spec.pattern_delays[spec.label_pattern - 1];
    let y = boxcar(spec.period_rest, spec.period_task, delay, t_len);
    Ok((Dataset::with_default_ids(x, y)?, truth))
}

/// Flips exactly `k` labels. Positions are the first `k` entries of a seeded
/// permutation, so for a fixed seed the flipped set grows with `k`.
pub fn flip_labels(y: &[u8], k: usize, seed: u64) -> Result<Vec<u8>> {
    if k > y.len() {
        return Err(Error::InvalidConfig(format!("cannot flip {k} of {} labels", y.len())));
    }
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.shuffle(&mut rng_for(seed, Stream::LabelFlip, 0));
    let mut out = y.to_vec();
    for &i in &order[..k] {
        out[i] = 1 - out[i];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn boxcar_shapes() {
        let b = boxcar(10, 10, 0, 20);
        assert_eq!(b, [vec![0; 10], vec![1; 10]].concat());
        let b = boxcar(10, 10, 5, 20);
        assert_eq!(b, [vec![0; 15], vec![1; 5]].concat());
        let shifted = boxcar(10, 10, 20, 60);
        let base = boxcar(10, 10, 0, 60);
        assert_eq!(&shifted[20..], &base[20..]);
        assert!(shifted[..20].iter().all(|&v| v == 0));
    }

    #[test]
    fn ground_truth_sizes() {
        let truth = ground_truth(&SyntheticSpec::default()).unwrap();
        assert_eq!(truth.discriminative.len(), 147);
        assert_eq!(truth.all_active.len(), 245);
        assert_eq!(truth.all_active.intersection_len(&truth.discriminative), 147);
        for name in ["A", "B", "C", "D", "E"] {
            assert_eq!(truth.pixels_of(name).len(), 49);
        }
        let other = ground_truth(&SyntheticSpec { snr: 3.0, noise_seed: 9, ..Default::default() }).unwrap();
        assert_eq!(other, truth);
    }

    #[test]
    fn default_shape_and_balance() {
        let (d, _) = generate(&SyntheticSpec::default()).unwrap();
        assert_eq!((d.n(), d.p()), (100, 4410));
        // Pre-onset time points are rest, so a delay of 5 leaves 45 active points.
        assert_eq!(d.class_counts(), (55, 45));
    }

    #[test]
    fn discriminative_pixels_correlate_with_labels() {
        let mut total = 0.0;
        let mut count = 0.0;
        for seed in 0..50 {
            let (d, truth) = generate(&SyntheticSpec::default().with_seed(seed)).unwrap();
            let y: Vec<f64> = d.y().iter().map(|&v| f64::from(v)).collect();
            for pix in truth.discriminative.iter().step_by(7) {
                total += corr(&d.column(pix).to_vec(), &y);
                count += 1.0;
            }
        }
        let r = total / count;
        assert!((0.5..=0.85).contains(&r), "mean correlation {r}");
    }

    #[test]
    fn noiseless_discriminative_pixels_track_labels() {
        let spec = SyntheticSpec { snr: f64::INFINITY, ..Default::default() };
        let (d, truth) = generate(&spec).unwrap();
        for pix in truth.discriminative.iter() {
            let col = d.column(pix);
            let scale = col.iter().cloned().fold(0.0, f64::max);
            for (t, &v) in col.iter().enumerate() {
                assert_eq!(v, scale * f64::from(d.y()[t]));
            }
        }
    }

    #[test]
    fn measured_snr_is_close_to_target() {
        for snr in [1.0, 0.5] {
            let spec = SyntheticSpec { snr, noise_seed: 3, ..Default::default() };
            let (d, truth) = generate(&spec).unwrap();
            let signals = pattern_signals(&spec);
            let mut ratios = Vec::new();
            for pix in truth.all_active.iter().take(100) {
                let region = spec
                    .regions
                    .iter()
                    .find(|r| Some(&r.name) == truth.region_of[pix].as_ref())
                    .unwrap();
                let s = &signals[region.pattern - 1];
                let noise: Vec<f64> = d.column(pix).iter().zip(s).map(|(x, s)| x - s).collect();
                ratios.push(population_std(s) / population_std(&noise));
            }
            let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
            assert!((mean - snr).abs() <= 0.1 * snr, "snr {snr}: measured {mean}");
        }
    }

    #[test]
    fn region_a_follows_its_own_pattern() {
        let spec = SyntheticSpec::default();
        let (d, truth) = generate(&spec).unwrap();
        let p1: Vec<f64> = boxcar(10, 10, spec.pattern_delays[0], 100).into_iter().map(f64::from).collect();
        let y: Vec<f64> = d.y().iter().map(|&v| f64::from(v)).collect();
        let a = truth.pixels_of("A");
        let (mut with_p1, mut with_y) = (0.0, 0.0);
        for pix in a.iter() {
            let col = d.column(pix).to_vec();
            with_p1 += corr(&col, &p1);
            with_y += corr(&col, &y);
        }
        let k = a.len() as f64;
        assert!(with_p1 / k > 0.5);
        assert!((with_y / k).abs() < 0.3);
    }

    #[test]
    fn seeds_change_only_the_noise() {
        let a = SyntheticSpec::default();
        let b = SyntheticSpec::default().with_seed(5);
        let (da, _) = generate(&a).unwrap();
        let (da2, _) = generate(&a).unwrap();
        let (db, _) = generate(&b).unwrap();
        assert_eq!(da, da2);
        assert_ne!(da.x(), db.x());
        assert_eq!(da.y(), db.y());
    }

    #[test]
    fn flips_are_exact_and_nested() {
        let y: Vec<u8> = (0..30).map(|i| (i % 3 == 0) as u8).collect();
        assert_eq!(flip_labels(&y, 0, 1).unwrap(), y);
        let all = flip_labels(&y, 30, 1).unwrap();
        assert!(all.iter().zip(&y).all(|(a, b)| a != b));
        for k in [1, 4, 17] {
            let f = flip_labels(&y, k, 8).unwrap();
            assert_eq!(f.iter().zip(&y).filter(|(a, b)| a != b).count(), k);
        }
        let f3 = flip_labels(&y, 3, 2).unwrap();
        let f6 = flip_labels(&y, 6, 2).unwrap();
        for i in 0..30 {
            if f3[i] != y[i] {
                assert_ne!(f6[i], y[i]);
            }
        }
        assert!(flip_labels(&y, 31, 0).is_err());
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = SyntheticSpec::default();
        s.regions[1].left = 60;
        assert!(s.validate().is_err());
        let mut s = SyntheticSpec::default();
        s.regions[1].top = 8;
        s.regions[1].left = 10;
        assert!(s.validate().is_err());
        let s = SyntheticSpec { n_timepoints: 15, ..Default::default() };
        assert!(s.validate().is_err());
    }

    #[test]
    fn spec_file_round_trip() {
        let spec = SyntheticSpec { snr: 0.75, noise_seed: 42, ..Default::default() };
        let back = SyntheticSpec::from_toml(&spec.to_toml()).unwrap();
        assert_eq!(back, spec);
    }
}
