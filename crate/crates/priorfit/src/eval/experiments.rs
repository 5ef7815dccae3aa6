//! Scaled-down experiments: GP hyperparameter recovery (loss-curve sweeps
//! plus gradient tuning) and length extrapolation on a separable family.

use crate::error::{Error, Result};
use crate::eval::metrics::roc_auc_ovo;
use crate::infer::{predict_long, PredictTask};
use crate::model::{ModelCheckpoint, TokenizedBatch};
use crate::prior::{field, sample_dataset, PriorHyperparameters, PriorSpace, SampleLimits};
use crate::tune::{batch_for_tuning, eval_psi, split_validation, tune, TuneConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// The three hyperparameters swept by the GP-recovery ablation.
pub fn gp_recovery_slots() -> [usize; 3] {
    [field::GP_OUTPUTSCALE, field::GP_LENGTHSCALE, field::GP_NOISE]
}

/// Validation loss of the frozen model as one encoded ψ coordinate sweeps
/// its range, the rest pinned at the true values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossCurve {
    pub slot: usize,
    pub name: String,
    /// Raw (decoded) sweep positions.
    pub values: Vec<f64>,
    /// Encoded sweep positions in [0, 1].
    pub encoded: Vec<f32>,
    pub losses: Vec<f64>,
}

impl LossCurve {
    /// Encoded location of the loss minimum.
    pub fn encoded_argmin(&self) -> f32 {
        let mut best = 0;
        for (i, &l) in self.losses.iter().enumerate() {
            if l < self.losses[best] {
                best = i;
            }
        }
        self.encoded[best]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub true_psi_encoded: Vec<f32>,
    pub curves: Vec<LossCurve>,
    /// Per swept slot: |encoded curve argmin - encoded truth| (range width 1).
    pub curve_errors: Vec<f64>,
    pub tuned_psi_encoded: Vec<f32>,
    /// Per swept slot: |encoded tuned value - encoded truth|.
    pub tuned_errors: Vec<f64>,
    pub tuned_temperature: f32,
}

#[derive(Debug, Clone)]
pub struct RecoveryConfig {
    pub n_datasets: usize,
    pub rows: usize,
    pub features: usize,
    pub grid_points: usize,
    pub seed: u64,
    /// Tune with V1 = V2 (the reference recovery setup) instead of a
    /// disjoint split.
    pub shared_validation: bool,
    pub tune: TuneConfig,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        RecoveryConfig {
            n_datasets: 8,
            rows: 48,
            features: 2,
            grid_points: 11,
            seed: 0,
            shared_validation: false,
            tune: TuneConfig::default(),
        }
    }
}

/// Tokenized validation datasets drawn at a fixed ψ.
pub fn batches_at_psi(
    psi: &PriorHyperparameters,
    space: &PriorSpace,
    ckpt: &ModelCheckpoint,
    cfg: &RecoveryConfig,
) -> Result<Vec<TokenizedBatch>> {
    let mc = &ckpt.params.config;
    let limits = SampleLimits {
        max_rows: cfg.rows.max(SampleLimits::default().max_rows),
        max_features: mc.max_features,
        max_classes: mc.max_classes,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.n_datasets)
        .map(|_| {
            let ds = sample_dataset(psi, space, cfg.rows, cfg.features, &limits, &mut rng)?;
            batch_for_tuning(&ds, mc)
        })
        .collect()
}

/// Sweep each recovery hyperparameter across its encoded range on datasets
/// generated at the true ψ̂, then run gradient tuning from scratch, and
/// report both recoveries against the truth.
pub fn run_gp_recovery(
    ckpt: &ModelCheckpoint,
    space: &PriorSpace,
    true_psi: &PriorHyperparameters,
    cfg: &RecoveryConfig,
) -> Result<RecoveryReport> {
    if ckpt.params.config.style_dim != space.len() {
        return Err(Error::Contract("recovery needs a style-conditional checkpoint".into()));
    }
    if cfg.grid_points < 2 {
        return Err(Error::Config("sweep needs at least 2 grid points".into()));
    }
    let batches = batches_at_psi(true_psi, space, ckpt, cfg)?;
    let truth = true_psi.encode(space);

    let mut curves = Vec::new();
    let mut curve_errors = Vec::new();
    for slot in gp_recovery_slots() {
        let mut encoded = Vec::with_capacity(cfg.grid_points);
        let mut values = Vec::with_capacity(cfg.grid_points);
        let mut losses = Vec::with_capacity(cfg.grid_points);
        for i in 0..cfg.grid_points {
            let e = i as f32 / (cfg.grid_points - 1) as f32;
            let mut psi = truth.clone();
            psi[slot] = e;
            encoded.push(e);
            values.push(space.dist(slot).decode(e));
            losses.push(eval_psi(ckpt, &psi, 1.0, &batches)?);
        }
        let curve = LossCurve {
            slot,
            name: field::NAMES[slot].to_owned(),
            values,
            encoded,
            losses,
        };
        curve_errors.push((curve.encoded_argmin() - truth[slot]).abs() as f64);
        curves.push(curve);
    }

    let run = if cfg.shared_validation {
        tune(ckpt, space, &batches, &batches, &cfg.tune)?
    } else {
        let (v1, v2) = split_validation(&batches, cfg.seed ^ 0xA5A5)?;
        tune(ckpt, space, &v1, &v2, &cfg.tune)?
    };
    let tuned_errors = gp_recovery_slots()
        .iter()
        .map(|&s| (run.best_psi[s] - truth[s]).abs() as f64)
        .collect();
    Ok(RecoveryReport {
        true_psi_encoded: truth,
        curves,
        curve_errors,
        tuned_psi_encoded: run.best_psi,
        tuned_errors,
        tuned_temperature: run.best_temperature,
    })
}

/// Loss curves as long-form CSV for plotting.
pub fn write_curves_csv(report: &RecoveryReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["hyperparameter", "value", "encoded", "loss", "true_encoded"])?;
    for c in &report.curves {
        let truth = report.true_psi_encoded[c.slot];
        for ((v, e), l) in c.values.iter().zip(c.encoded.iter()).zip(c.losses.iter()) {
            w.write_record([
                c.name.clone(),
                format!("{v}"),
                format!("{e}"),
                format!("{l}"),
                format!("{truth}"),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Linearly separable binary family: two Gaussian blobs at ±1.5 per feature
/// with unit-free noise 0.4, labels by blob.
pub fn separable_task(
    n_train: usize,
    n_test: usize,
    k: usize,
    seed: u64,
) -> (PredictTask, Vec<u16>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    let mut draw = |n: usize| -> (Vec<Vec<f32>>, Vec<u16>) {
        let mut x = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let label = (i % 2) as u16;
            let center = if label == 1 { 1.5f32 } else { -1.5 };
            let row = (0..k)
                .map(|_| {
                    let noise: f32 = normal.sample(&mut rng);
                    center + 0.4 * noise
                })
                .collect();
            x.push(row);
            y.push(label);
        }
        (x, y)
    };
    let (x_train, y_train) = draw(n_train);
    let (x_test, y_test) = draw(n_test);
    let task = PredictTask {
        mask_train: vec![vec![0u8; k]; n_train],
        mask_test: vec![vec![0u8; k]; n_test],
        x_train,
        y_train,
        x_test,
        n_classes: 2,
        label_names: vec!["neg".into(), "pos".into()],
        categorical: vec![],
    };
    (task, y_test)
}

/// Mean AUC over seeds of single-member predictions at each train length.
pub fn run_extrapolation(
    ckpt: &ModelCheckpoint,
    lengths: &[usize],
    n_test: usize,
    k: usize,
    seeds: &[u64],
) -> Result<Vec<(usize, f64)>> {
    if lengths.is_empty() || seeds.is_empty() {
        return Err(Error::Contract("extrapolation needs lengths and seeds".into()));
    }
    let mut out = Vec::with_capacity(lengths.len());
    for &n_train in lengths {
        let mut sum = 0.0f64;
        for &seed in seeds {
            let (task, y_test) = separable_task(n_train, n_test, k, seed);
            let pred = predict_long(ckpt, &task)?;
            sum += roc_auc_ovo(&y_test, &pred.probabilities)?;
        }
        out.push((n_train, sum / seeds.len() as f64));
    }
    Ok(out)
}
