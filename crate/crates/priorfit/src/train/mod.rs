//! Meta-training: stream synthetic datasets from the prior and fit the
//! transformer to predict their held-out labels, one Adam step per batch of
//! datasets.

use crate::error::{Error, Result};
use crate::model::{forward, loss, tokenize, ModelCheckpoint, ModelConfig, ModelParams};
use crate::numerics::{AdamConfig, AdamState, Tape, Tensor};
use crate::prior::{sample_dataset, PriorHyperparameters, PriorSpace, SampleLimits};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Optimizer steps K; 0 returns the initialization untouched.
    pub steps: usize,
    /// Datasets per step; per-dataset mean losses are averaged.
    pub datasets_per_step: usize,
    /// Rows n per sampled dataset.
    pub rows_per_dataset: usize,
    pub features_min: usize,
    pub features_max: usize,
    /// Peak learning rate; linear warmup then cosine decay.
    pub lr: f32,
    pub warmup_frac: f32,
    /// Abort after this many consecutive steps with no finite dataset loss.
    pub patience: usize,
    /// Write a checkpoint every this many steps (0 disables).
    pub checkpoint_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 2000,
            datasets_per_step: 8,
            rows_per_dataset: 64,
            features_min: 2,
            features_max: 8,
            lr: 3e-4,
            warmup_frac: 0.05,
            patience: 10,
            checkpoint_every: 0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.datasets_per_step == 0 || self.rows_per_dataset < 2 {
            return Err(Error::Config("need at least 1 dataset of 2+ rows per step".into()));
        }
        if self.features_min == 0 || self.features_min > self.features_max {
            return Err(Error::Config(format!(
                "bad feature range {}..{}",
                self.features_min, self.features_max
            )));
        }
        if !(self.lr > 0.0) || !(0.0..1.0).contains(&self.warmup_frac) {
            return Err(Error::Config("lr must be positive and warmup_frac in [0, 1)".into()));
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainRecord {
    pub step: usize,
    pub loss: f64,
    pub lr: f32,
    pub elapsed_ms: u64,
}

/// Linear warmup over `warmup_frac` of the run, then cosine decay to zero.
pub fn lr_at(step: usize, cfg: &TrainConfig) -> f32 {
    let total = cfg.steps.max(1);
    let warmup = ((total as f32 * cfg.warmup_frac) as usize).max(1);
    if step < warmup {
        cfg.lr * (step + 1) as f32 / warmup as f32
    } else {
        let progress = (step - warmup) as f32 / (total - warmup).max(1) as f32;
        cfg.lr * 0.5 * (1.0 + (std::f32::consts::PI * progress).cos())
    }
}

/// Where training artifacts go; both optional for in-memory runs.
#[derive(Debug, Clone, Default)]
pub struct TrainSinks {
    pub checkpoint_path: Option<PathBuf>,
    pub log_path: Option<PathBuf>,
}

/// Mean held-out loss of one sampled dataset; gradients accumulated into
/// `grad_acc` scaled by `grad_scale` when it is given.
pub fn dataset_loss(
    params: &ModelParams,
    ds: &crate::prior::SyntheticDataset,
    grad_acc: Option<(&mut [Tensor], f32)>,
) -> Result<f64> {
    let batch = tokenize(ds, &params.config)?;
    let mut tape = Tape::new();
    let trainable = grad_acc.is_some();
    let fp = forward(&mut tape, params, &batch, trainable, None)?;
    let l = loss(&mut tape, fp.logits, &batch.targets, batch.n_classes)?;
    let value = tape.value(l).scalar_value() as f64;
    if !value.is_finite() {
        return Err(Error::Numerical("non-finite dataset loss".into()));
    }
    if let Some((acc, scale)) = grad_acc {
        let grads = tape.backward(l);
        for (slot, &pid) in acc.iter_mut().zip(fp.param_ids.iter()) {
            if let Some(g) = grads.wrt(pid) {
                for (a, &gv) in slot.data.iter_mut().zip(g.data.iter()) {
                    *a += gv * scale;
                }
            }
        }
    }
    Ok(value)
}

/// Algorithm: per step, draw a dataset per batch slot from `sampler`,
/// average the held-out cross-entropies, and take one clipped Adam step.
/// Deterministic for a fixed seed (single-threaded by construction).
pub fn meta_train_stream<S>(
    model_cfg: ModelConfig,
    cfg: &TrainConfig,
    mut sampler: S,
    sinks: &TrainSinks,
) -> Result<ModelCheckpoint>
where
    S: FnMut(&mut ChaCha8Rng) -> Result<crate::prior::SyntheticDataset>,
{
    cfg.validate()?;
    model_cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ModelParams::init(model_cfg, &mut rng)?;
    let mut adam = AdamState::new(&params.tensors);
    let adam_cfg = AdamConfig { lr: cfg.lr, ..Default::default() };
    let mut log = match &sinks.log_path {
        Some(p) => Some(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => None,
    };
    let start = Instant::now();
    let mut bad_steps = 0usize;

    for step in 0..cfg.steps {
        let mut grad_acc: Vec<Tensor> =
            params.tensors.iter().map(|t| Tensor::zeros(&t.shape)).collect();
        let scale = 1.0 / cfg.datasets_per_step as f32;
        let mut loss_sum = 0.0f64;
        let mut ok = 0usize;
        for _ in 0..cfg.datasets_per_step {
            let ds = sampler(&mut rng)?;
            match dataset_loss(&params, &ds, Some((&mut grad_acc, scale))) {
                Ok(v) => {
                    loss_sum += v;
                    ok += 1;
                }
                Err(Error::Numerical(_)) => {}
                Err(e) => return Err(e),
            }
        }
        if ok == 0 {
            bad_steps += 1;
            if bad_steps > cfg.patience {
                return Err(Error::Numerical(format!(
                    "no finite dataset loss for {bad_steps} consecutive steps (last step {step}, \
                     {} optimizer steps taken)",
                    adam.steps_taken()
                )));
            }
            continue;
        }
        bad_steps = 0;
        let mean_loss = loss_sum / ok as f64;
        let lr = lr_at(step, cfg);
        adam.step(&mut params.tensors, &grad_acc, &adam_cfg, lr);

        if let Some(w) = log.as_mut() {
            let rec = TrainRecord {
                step,
                loss: mean_loss,
                lr,
                elapsed_ms: start.elapsed().as_millis() as u64,
            };
            writeln!(w, "{}", serde_json::to_string(&rec)?)?;
        }
        if cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 {
            if let Some(p) = &sinks.checkpoint_path {
                ModelCheckpoint::new(params.clone()).save(p)?;
            }
        }
    }
    if let Some(w) = log.as_mut() {
        w.flush()?;
    }
    let ckpt = ModelCheckpoint::new(params);
    if let Some(p) = &sinks.checkpoint_path {
        ckpt.save(p)?;
    }
    Ok(ckpt)
}

/// Meta-train on datasets drawn from the mixture prior: per slot draw
/// ψ ~ p(ψ), a feature count, and a dataset at ψ.
pub fn meta_train(
    model_cfg: ModelConfig,
    cfg: &TrainConfig,
    space: &PriorSpace,
    sinks: &TrainSinks,
) -> Result<ModelCheckpoint> {
    if model_cfg.style_dim > 0 && model_cfg.style_dim != space.len() {
        return Err(Error::Config(format!(
            "style_dim {} does not match the ψ length {}",
            model_cfg.style_dim,
            space.len()
        )));
    }
    let limits = SampleLimits {
        max_rows: cfg.rows_per_dataset.max(SampleLimits::default().max_rows),
        max_features: model_cfg.max_features,
        max_classes: model_cfg.max_classes,
    };
    let rows = cfg.rows_per_dataset;
    let (fmin, fmax) = (cfg.features_min, cfg.features_max);
    meta_train_stream(
        model_cfg,
        cfg,
        move |rng: &mut ChaCha8Rng| {
            let psi = PriorHyperparameters::sample(space, rng)?;
            let k = rng.gen_range(fmin..=fmax);
            sample_dataset(&psi, space, rows, k, &limits, rng)
        },
        sinks,
    )
}

/// Mean loss over a frozen stream of prior datasets (fixed seeds), used for
/// monitoring and tests; per-dataset mean losses averaged.
pub fn frozen_stream_loss(
    params: &ModelParams,
    space: &PriorSpace,
    cfg: &TrainConfig,
    stream_seed: u64,
    n_datasets: usize,
) -> Result<f64> {
    let limits = SampleLimits {
        max_rows: cfg.rows_per_dataset.max(SampleLimits::default().max_rows),
        max_features: params.config.max_features,
        max_classes: params.config.max_classes,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed);
    let mut sum = 0.0f64;
    for _ in 0..n_datasets {
        let psi = PriorHyperparameters::sample(space, &mut rng)?;
        let k = rng.gen_range(cfg.features_min..=cfg.features_max);
        let ds = sample_dataset(&psi, space, cfg.rows_per_dataset, k, &limits, &mut rng)?;
        sum += dataset_loss(params, &ds, None)?;
    }
    Ok(sum / n_datasets as f64)
}

/// Pilot-run learning-rate selection: train briefly at each candidate and
/// return the one with the lowest final smoothed training loss.
pub fn learning_rate_selection(
    candidates: &[f32],
    model_cfg: ModelConfig,
    pilot: &TrainConfig,
    space: &PriorSpace,
) -> Result<(f32, Vec<(f32, f64)>)> {
    if candidates.is_empty() {
        return Err(Error::Config("no learning-rate candidates".into()));
    }
    let mut outcomes = Vec::new();
    for &lr in candidates {
        if candidates.len() == 1 {
            return Ok((lr, vec![(lr, f64::NAN)]));
        }
        let cfg = TrainConfig { lr, ..pilot.clone() };
        let final_loss = match meta_train(model_cfg, &cfg, space, &TrainSinks::default()) {
            Ok(ckpt) => frozen_stream_loss(&ckpt.params, space, &cfg, pilot.seed ^ 0x5eed, 8)?,
            Err(Error::Numerical(_)) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        outcomes.push((lr, final_loss));
    }
    let best = outcomes
        .iter()
        .filter(|(_, l)| l.is_finite())
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .copied();
    match best {
        Some((lr, _)) => Ok((lr, outcomes)),
        None => Err(Error::Numerical("every learning-rate pilot diverged".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_model(style: usize) -> ModelConfig {
        ModelConfig {
            layers: 1,
            d_model: 16,
            d_ff: 32,
            heads: 2,
            max_features: 4,
            max_classes: 3,
            max_train_len: 32,
            style_dim: style,
        }
    }

    fn tiny_train(steps: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            steps,
            datasets_per_step: 2,
            rows_per_dataset: 24,
            features_min: 2,
            features_max: 3,
            lr: 1e-3,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn zero_steps_returns_the_initialization() {
        let space = PriorSpace::toy_linear();
        let cfg = tiny_train(0, 7);
        let ckpt = meta_train(tiny_model(0), &cfg, &space, &TrainSinks::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let init = ModelParams::init(tiny_model(0), &mut rng).unwrap();
        assert_eq!(ckpt.params, init);
    }

    #[test]
    fn fixed_seed_training_is_bit_identical() {
        let space = PriorSpace::toy_linear();
        let cfg = tiny_train(20, 42);
        let a = meta_train(tiny_model(0), &cfg, &space, &TrainSinks::default()).unwrap();
        let b = meta_train(tiny_model(0), &cfg, &space, &TrainSinks::default()).unwrap();
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn short_run_improves_frozen_stream_loss_on_toy_prior() {
        let space = PriorSpace::toy_linear();
        let cfg = tiny_train(150, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let init = ModelParams::init(tiny_model(0), &mut rng).unwrap();
        let before = frozen_stream_loss(&init, &space, &cfg, 99, 10).unwrap();
        let ckpt = meta_train(tiny_model(0), &cfg, &space, &TrainSinks::default()).unwrap();
        let after = frozen_stream_loss(&ckpt.params, &space, &cfg, 99, 10).unwrap();
        assert!(
            after < before,
            "frozen-stream loss did not improve: {before} -> {after}"
        );
        // init predicts uniformly over 2 classes
        assert!((before - std::f64::consts::LN_2).abs() < 1e-3);
    }

    #[test]
    fn style_conditional_training_runs_and_logs() {
        let space = PriorSpace::toy_linear();
        let dir = tempfile::tempdir().unwrap();
        let sinks = TrainSinks {
            checkpoint_path: Some(dir.path().join("m.ckpt")),
            log_path: Some(dir.path().join("train.jsonl")),
        };
        let cfg = tiny_train(10, 11);
        let model = tiny_model(crate::prior::field::COUNT);
        let ckpt = meta_train(model, &cfg, &space, &sinks).unwrap();
        let reloaded = ModelCheckpoint::load(&sinks.checkpoint_path.clone().unwrap()).unwrap();
        assert_eq!(reloaded, ckpt);
        let log = std::fs::read_to_string(sinks.log_path.unwrap()).unwrap();
        let lines: Vec<&str> = log.lines().collect();
        assert_eq!(lines.len(), 10);
        let rec: TrainRecord = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(rec.step, 0);
        assert!(rec.loss.is_finite());
    }

    #[test]
    fn mismatched_style_dim_is_a_config_error() {
        let space = PriorSpace::toy_linear();
        let cfg = tiny_train(1, 0);
        assert!(matches!(
            meta_train(tiny_model(7), &cfg, &space, &TrainSinks::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn warmup_then_cosine_schedule_shape() {
        let cfg = TrainConfig { steps: 100, lr: 1.0, warmup_frac: 0.1, ..Default::default() };
        assert!(lr_at(0, &cfg) <= lr_at(5, &cfg));
        assert!((lr_at(9, &cfg) - 1.0).abs() < 1e-6);
        assert!(lr_at(50, &cfg) < 1.0);
        assert!(lr_at(99, &cfg) < lr_at(50, &cfg));
        assert!(lr_at(99, &cfg) >= 0.0);
    }

    #[test]
    fn single_candidate_is_returned_immediately() {
        let space = PriorSpace::toy_linear();
        let (lr, _) =
            learning_rate_selection(&[3e-4], tiny_model(0), &tiny_train(1, 0), &space).unwrap();
        assert_eq!(lr, 3e-4);
    }

    #[test]
    fn diverging_pilots_abort() {
        let space = PriorSpace::toy_linear();
        let mut pilot = tiny_train(15, 1);
        pilot.patience = 2;
        // absurd rates blow the activations up within a few steps
        let res = learning_rate_selection(&[1e30, 5e29], tiny_model(0), &pilot, &space);
        assert!(matches!(res, Err(Error::Numerical(_))), "got {res:?}");
    }

    #[test]
    fn paper_candidate_set_picks_a_finite_winner() {
        let space = PriorSpace::toy_linear();
        let pilot = tiny_train(12, 5);
        let (lr, outcomes) =
            learning_rate_selection(&[1e-3, 3e-4, 1e-4], tiny_model(0), &pilot, &space).unwrap();
        assert!([1e-3, 3e-4, 1e-4].contains(&lr));
        assert_eq!(outcomes.len(), 3);
        assert!(outcomes.iter().all(|(_, l)| l.is_finite()));
    }
}
