//! Gradient-based tuning of the prior hyperparameters ψ and a softmax
//! temperature through the frozen conditional model, driven by held-out
//! cross-entropy on validation datasets.

use crate::error::{Error, Result};
use crate::model::{
    forward, loss, scale_logits_by_log_temperature, tokenize_rows, ModelCheckpoint, ModelConfig,
    TokenizedBatch,
};
use crate::numerics::{AdamConfig, AdamState, Tape, Tensor};
use crate::prior::{PriorHyperparameters, PriorSpace, SyntheticDataset};
use rand::{seq::SliceRandom, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuneConfig {
    pub num_draws: usize,
    pub num_steps: usize,
    pub lr: f32,
    /// Early-stopping patience in steps without a new V2 best, per draw.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TuneConfig {
    fn default() -> Self {
        TuneConfig { num_draws: 4, num_steps: 40, lr: 0.05, patience: 10, seed: 0 }
    }
}

/// One evaluated point of a tuning trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub draw: usize,
    pub step: usize,
    pub psi: Vec<f32>,
    pub temperature: f32,
    pub v1_loss: f64,
    pub v2_loss: f64,
}

/// Full record of a tuning run; ψ*/t* is the trajectory point with the lowest
/// V2 loss across every draw and step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuningRun {
    pub trajectory: Vec<TrajectoryPoint>,
    pub best_psi: Vec<f32>,
    pub best_temperature: f32,
    pub best_v2_loss: f64,
    /// How many times a ψ coordinate was projected back into [0, 1].
    pub clamp_count: usize,
}

/// Tokenize a dataset for tuning: no style token in the batch, since ψ is
/// injected as the quantity being optimized.
pub fn batch_for_tuning(ds: &SyntheticDataset, cfg: &ModelConfig) -> Result<TokenizedBatch> {
    let mut unstyled = *cfg;
    unstyled.style_dim = 0;
    tokenize_rows(
        &ds.x,
        &ds.mask,
        &ds.y[..ds.split_point],
        ds.split_point,
        ds.n_classes,
        None,
        ds.y[ds.split_point..].to_vec(),
        &unstyled,
    )
}

/// Mean held-out cross-entropy at (ψ, t) with model parameters frozen.
/// When `grads` is given, accumulates d/dψ and d/dτ (τ = ln t) into it.
fn eval_point(
    ckpt: &ModelCheckpoint,
    psi: &[f32],
    tau: f32,
    batches: &[TokenizedBatch],
    mut grads: Option<(&mut Tensor, &mut Tensor)>,
) -> Result<f64> {
    let d = ckpt.params.config.style_dim;
    if d == 0 {
        return Err(Error::Contract("tuning needs a style-conditional model".into()));
    }
    if psi.len() != d {
        return Err(Error::Contract(format!("ψ length {} does not match style_dim {d}", psi.len())));
    }
    let scale = 1.0 / batches.len() as f32;
    let mut total = 0.0f64;
    for batch in batches {
        let mut tape = Tape::new();
        let style = tape.param(Tensor::new(vec![1, d], psi.to_vec()));
        let tau_node = tape.param(Tensor::scalar(tau));
        let fp = forward(&mut tape, &ckpt.params, batch, false, Some(style))?;
        let scaled = scale_logits_by_log_temperature(&mut tape, fp.logits, tau_node);
        let l = loss(&mut tape, scaled, &batch.targets, batch.n_classes)?;
        let v = tape.value(l).scalar_value() as f64;
        if !v.is_finite() {
            return Err(Error::Numerical("non-finite validation loss".into()));
        }
        total += v;
        if let Some((gpsi, gtau)) = grads.as_mut() {
            let g = tape.backward(l);
            let gs = g.wrt_or_zero(&tape, style);
            for (a, &b) in gpsi.data.iter_mut().zip(gs.data.iter()) {
                *a += b * scale;
            }
            gtau.data[0] += g.wrt_or_zero(&tape, tau_node).scalar_value() * scale;
        }
    }
    Ok(total / batches.len() as f64)
}

/// Mean held-out cross-entropy of the frozen model at encoded ψ and
/// temperature t over `datasets`.
pub fn eval_psi(
    ckpt: &ModelCheckpoint,
    psi: &[f32],
    t: f32,
    batches: &[TokenizedBatch],
) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Contract(format!("temperature must be positive, got {t}")));
    }
    if batches.is_empty() {
        return Err(Error::Contract("eval_psi over zero datasets".into()));
    }
    eval_point(ckpt, psi, t.ln(), batches, None)
}

/// Seeded 60/40 split into (V1, V2); disjoint and exhaustive.
pub fn split_validation<T: Clone>(items: &[T], seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if items.len() < 2 {
        return Err(Error::Contract("validation split needs at least 2 datasets".into()));
    }
    let mut idx: Vec<usize> = (0..items.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = (items.len() * 3) / 5;
    let cut = cut.clamp(1, items.len() - 1);
    let v1 = idx[..cut].iter().map(|&i| items[i].clone()).collect();
    let v2 = idx[cut..].iter().map(|&i| items[i].clone()).collect();
    Ok((v1, v2))
}

/// Per draw: ψ ~ p(ψ), t = 1; gradient-descend the V1 loss with the model
/// frozen, early-stop on V2; return the globally best point by V2 loss.
pub fn tune(
    ckpt: &ModelCheckpoint,
    space: &PriorSpace,
    v1: &[TokenizedBatch],
    v2: &[TokenizedBatch],
    cfg: &TuneConfig,
) -> Result<TuningRun> {
    if v1.is_empty() || v2.is_empty() {
        return Err(Error::Contract("tune needs non-empty V1 and V2".into()));
    }
    if cfg.num_draws == 0 {
        return Err(Error::Config("num_draws must be positive".into()));
    }
    let d = ckpt.params.config.style_dim;
    if d != space.len() {
        return Err(Error::Contract(format!(
            "model style_dim {d} does not match the ψ length {}",
            space.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let adam_cfg = AdamConfig { lr: cfg.lr, clip_norm: None, ..Default::default() };
    let mut trajectory = Vec::new();
    let mut clamp_count = 0usize;
    let mut best: Option<TrajectoryPoint> = None;

    for draw in 0..cfg.num_draws {
        let init = PriorHyperparameters::sample(space, &mut rng)?;
        let mut psi = Tensor::new(vec![1, d], init.encode(space));
        let mut tau = Tensor::scalar(0.0);
        let mut adam = AdamState::new(&[psi.clone(), tau.clone()]);
        let mut best_of_draw = f64::INFINITY;
        let mut since_best = 0usize;

        for step in 0..=cfg.num_steps {
            let mut gpsi = Tensor::zeros(&[1, d]);
            let mut gtau = Tensor::scalar(0.0);
            let want_grads = step < cfg.num_steps;
            let v1_loss = eval_point(
                ckpt,
                &psi.data,
                tau.scalar_value(),
                v1,
                want_grads.then_some((&mut gpsi, &mut gtau)),
            )?;
            let v2_loss =
                eval_point(ckpt, &psi.data, tau.scalar_value(), v2, None)?;
            let point = TrajectoryPoint {
                draw,
                step,
                psi: psi.data.clone(),
                temperature: tau.scalar_value().exp(),
                v1_loss,
                v2_loss,
            };
            if best.as_ref().map_or(true, |b| point.v2_loss < b.v2_loss) {
                best = Some(point.clone());
            }
            trajectory.push(point);

            if v2_loss < best_of_draw - 1e-9 {
                best_of_draw = v2_loss;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best > cfg.patience {
                    break;
                }
            }
            if !want_grads {
                break;
            }
            let mut pair = [psi.clone(), tau.clone()];
            adam.step(&mut pair, &[gpsi, gtau], &adam_cfg, cfg.lr);
            [psi, tau] = pair;
            for v in psi.data.iter_mut() {
                let c = v.clamp(0.0, 1.0);
                if c != *v {
                    clamp_count += 1;
                    *v = c;
                }
            }
        }
    }
    let best = best.expect("at least one point is always evaluated");
    Ok(TuningRun {
        best_psi: best.psi.clone(),
        best_temperature: best.temperature,
        best_v2_loss: best.v2_loss,
        clamp_count,
        trajectory,
    })
}
