use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, MetricsReport};
use crate::baselines::BaselineMethod;
use crate::color_math::angular_error_degrees;
use crate::error::{Error, Result};
use crate::model::{estimate_illuminant, train, ModelParams, TrainConfig, TrainLog, TrainMode};
use crate::scene_synth::{stream_rng, LabeledImage};

/// What to evaluate: a learning-free estimator or a network trained per fold.
#[derive(Debug, Clone, PartialEq)]
pub enum EvalMethod {
    Baseline(BaselineMethod),
    Learned { mode: TrainMode, config: TrainConfig },
}

impl EvalMethod {
    pub fn name(&self) -> String {
        match self {
            EvalMethod::Baseline(m) => m.name(),
            EvalMethod::Learned { mode, .. } => mode.name().to_string(),
        }
    }
}

/// Seeded shuffle of `0..n` split into `k` contiguous folds whose sizes
/// differ by at most one (the first `n mod k` folds are larger).
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::domain("cross-validation needs at least two folds"));
    }
    if n < k {
        return Err(Error::domain(format!("{n} samples cannot fill {k} folds")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream_rng(seed, 0xf01d));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(idx[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub test_indices: Vec<usize>,
    pub metrics: MetricsReport,
    pub train_log: Option<TrainLog>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub method: String,
    pub seed: u64,
    pub folds: Vec<FoldResult>,
    pub pooled: MetricsReport,
    /// Test error of every sample, indexed like the dataset.
    pub per_sample: Vec<f64>,
}

/// Training seed for fold `fold` of a run seeded with `seed`.
pub fn fold_train_seed(seed: u64, fold: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(fold as u64)
}

/// Errors of a trained network (or baseline) on the listed samples.
pub fn evaluate_samples(
    data: &[LabeledImage],
    indices: &[usize],
    estimate: &dyn Fn(&LabeledImage) -> Result<crate::color_math::IlluminantRGB>,
) -> Result<Vec<f64>> {
    indices
        .iter()
        .map(|&i| estimate(&data[i]).map(|e| angular_error_degrees(&e, &data[i].illuminant)))
        .collect()
}

/// k-fold cross-validation. Learning-free methods skip training; learned
/// methods train a fresh network on the other folds.
pub fn cross_validate(data: &[LabeledImage], method: &EvalMethod, k_folds: usize, seed: u64) -> Result<CvReport> {
    cross_validate_with(data, method, k_folds, seed, |_, _| {})
}

/// As [`cross_validate`], calling `on_model(fold, params)` after each fold is trained.
pub fn cross_validate_with(
    data: &[LabeledImage],
    method: &EvalMethod,
    k_folds: usize,
    seed: u64,
    mut on_model: impl FnMut(usize, &ModelParams<f32>),
) -> Result<CvReport> {
    let folds = fold_assignment(data.len(), k_folds, seed)?;
    let mut per_sample = vec![f64::NAN; data.len()];
    let mut results = Vec::with_capacity(k_folds);
    for (f, test) in folds.iter().enumerate() {
        let (errors, log) = match method {
            EvalMethod::Baseline(m) => {
                let est = |s: &LabeledImage| m.estimate(&s.masked_image());
                (evaluate_samples(data, test, &est)?, None)
            }
            EvalMethod::Learned { mode, config } => {
                let train_set: Vec<LabeledImage> = folds
                    .iter()
                    .enumerate()
                    .filter(|(g, _)| *g != f)
                    .flat_map(|(_, idx)| idx.iter().map(|&i| data[i].clone()))
                    .collect();
                let cfg = TrainConfig { seed: fold_train_seed(seed, f), ..config.clone() };
                let (params, log) = train(&train_set, None, &cfg, *mode)?;
                on_model(f, &params);
                let est = |s: &LabeledImage| estimate_illuminant(&params, s);
                (evaluate_samples(data, test, &est)?, Some(log))
            }
        };
        for (&i, &e) in test.iter().zip(&errors) {
            per_sample[i] = e;
        }
        results.push(FoldResult {
            fold: f,
            test_indices: test.clone(),
            metrics: compute_metrics(&errors)?,
            train_log: log,
        });
    }
    Ok(CvReport {
        method: method.name(),
        seed,
        pooled: compute_metrics(&per_sample)?,
        folds: results,
        per_sample,
    })
}
