//! The transformer itself: parameter layout, masked multi-head forward pass,
//! held-out cross-entropy loss and temperature scaling.

use super::config::ModelConfig;
use super::tokenize::{build_attention_mask, TokenizedBatch};
use crate::error::{Error, Result};
use crate::numerics::{softmax_rows, NodeId, Tape, Tensor};
use rand::Rng;

/// Logit fill for classes outside a task's range. Large but finite so the
/// log-softmax stays representable; exp underflows to exactly zero.
const CLASS_MASK_FILL: f32 = -1e30;

/// Flat parameter set. Tensor order is fixed:
/// encoder weight and bias; style projection weight and bias when
/// `style_dim > 0`; per layer ln1 gain/bias, Wq/bq, Wk/bk, Wv/bv, Wo/bo,
/// ln2 gain/bias, ff1 weight/bias, ff2 weight/bias; final ln gain/bias,
/// head weight/bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub tensors: Vec<Tensor>,
}

const TENSORS_PER_LAYER: usize = 16;

pub fn tensor_count(cfg: &ModelConfig) -> usize {
    2 + if cfg.style_dim > 0 { 2 } else { 0 } + cfg.layers * TENSORS_PER_LAYER + 4
}

impl ModelParams {
    /// Random initialization: matrices N(0, 1/fan_in), zero biases, unit layer
    /// norm gains, zero classification head (uniform predictions at step 0).
    pub fn init<R: Rng>(cfg: ModelConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.d_model;
        let w = cfg.token_width();
        let mut t = Vec::with_capacity(tensor_count(&cfg));
        let lin = |fan_in: usize, fan_out: usize, rng: &mut R| {
            Tensor::randn(&[fan_in, fan_out], (1.0 / fan_in as f32).sqrt(), rng)
        };
        t.push(lin(w, d, rng));
        t.push(Tensor::zeros(&[d]));
        if cfg.style_dim > 0 {
            t.push(lin(cfg.style_dim, d, rng));
            t.push(Tensor::zeros(&[d]));
        }
        let ones = Tensor::new(vec![d], vec![1.0; d]);
        for _ in 0..cfg.layers {
            t.push(ones.clone());
            t.push(Tensor::zeros(&[d]));
            for _ in 0..4 {
                t.push(lin(d, d, rng));
                t.push(Tensor::zeros(&[d]));
            }
            t.push(ones.clone());
            t.push(Tensor::zeros(&[d]));
            t.push(lin(d, cfg.d_ff, rng));
            t.push(Tensor::zeros(&[cfg.d_ff]));
            t.push(lin(cfg.d_ff, d, rng));
            t.push(Tensor::zeros(&[d]));
        }
        t.push(ones);
        t.push(Tensor::zeros(&[d]));
        t.push(Tensor::zeros(&[d, cfg.max_classes]));
        t.push(Tensor::zeros(&[cfg.max_classes]));
        Ok(ModelParams { config: cfg, tensors: t })
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.all_finite())
    }
}

/// Handles into a recorded forward pass, for callers that keep differentiating
/// (loss construction, the ψ tuner's style gradient).
pub struct ForwardPass {
    /// [n_query, C_max] class logits.
    pub logits: NodeId,
    /// One node per entry of `ModelParams::tensors`, in the same order.
    pub param_ids: Vec<NodeId>,
    /// Node of the raw style input row, when the model is conditional.
    pub style_id: Option<NodeId>,
}

/// Record the forward pass on `tape`. With `trainable` the parameters are
/// inserted as gradient leaves; otherwise as constants (inference, tuning).
/// `style_override` substitutes an existing [1, style_dim] node for the
/// batch's style vector, letting the tuner differentiate through ψ.
pub fn forward(
    tape: &mut Tape,
    params: &ModelParams,
    batch: &TokenizedBatch,
    trainable: bool,
    style_override: Option<NodeId>,
) -> Result<ForwardPass> {
    let cfg = &params.config;
    if params.tensors.len() != tensor_count(cfg) {
        return Err(Error::Contract(format!(
            "parameter count {} does not match the {} the config implies",
            params.tensors.len(),
            tensor_count(cfg)
        )));
    }
    if !params.all_finite() {
        return Err(Error::Numerical("non-finite model parameters".into()));
    }
    if batch.tokens.cols() != cfg.token_width() {
        return Err(Error::Contract(format!(
            "token width {} does not match the model's {}",
            batch.tokens.cols(),
            cfg.token_width()
        )));
    }
    if (cfg.style_dim > 0) != (batch.style.is_some() || style_override.is_some()) {
        return Err(Error::Config("style presence does not match the model config".into()));
    }

    let param_ids: Vec<NodeId> = params
        .tensors
        .iter()
        .map(|t| if trainable { tape.param(t.clone()) } else { tape.constant(t.clone()) })
        .collect();
    let mut cursor = 0usize;
    let mut next = || {
        cursor += 1;
        param_ids[cursor - 1]
    };

    let (enc_w, enc_b) = (next(), next());
    let tokens = tape.constant(batch.tokens.clone());
    let embedded = tape.matmul(tokens, enc_w);
    let embedded = tape.add_row(embedded, enc_b);

    let has_style = cfg.style_dim > 0;
    let mut style_id = None;
    let mut x = if has_style {
        let (style_w, style_b) = (next(), next());
        let s = match style_override {
            Some(id) => {
                let v = tape.value(id);
                if v.shape != vec![1, cfg.style_dim] {
                    return Err(Error::Contract(format!(
                        "style override shape {:?}, expected [1, {}]",
                        v.shape, cfg.style_dim
                    )));
                }
                id
            }
            None => {
                let v = batch.style.as_ref().expect("checked above").clone();
                tape.constant(Tensor::new(vec![1, cfg.style_dim], v))
            }
        };
        style_id = Some(s);
        let proj = tape.matmul(s, style_w);
        let proj = tape.add_row(proj, style_b);
        tape.concat_rows(&[proj, embedded])
    } else {
        embedded
    };

    let mask = build_attention_mask(batch.n_train, batch.n_query, has_style);
    let heads = cfg.heads;
    let dh = cfg.d_model / heads;
    let scale = 1.0 / (dh as f32).sqrt();

    for layer in 0..cfg.layers {
        let (ln1_g, ln1_b) = (next(), next());
        let (wq, bq, wk, bk) = (next(), next(), next(), next());
        let (wv, bv, wo, bo) = (next(), next(), next(), next());
        let (ln2_g, ln2_b) = (next(), next());
        let (ff1_w, ff1_b, ff2_w, ff2_b) = (next(), next(), next(), next());

        let h = tape.layer_norm_rows(x, ln1_g, ln1_b);
        let q = tape.matmul(h, wq);
        let q = tape.add_row(q, bq);
        let k = tape.matmul(h, wk);
        let k = tape.add_row(k, bk);
        let v = tape.matmul(h, wv);
        let v = tape.add_row(v, bv);

        let mut head_outs = Vec::with_capacity(heads);
        for hd in 0..heads {
            let qh = tape.slice_cols(q, hd * dh, dh);
            let kh = tape.slice_cols(k, hd * dh, dh);
            let vh = tape.slice_cols(v, hd * dh, dh);
            let kt = tape.transpose(kh);
            let scores = tape.matmul(qh, kt);
            let scores = tape.scale(scores, scale);
            let scores = tape.masked_fill(scores, mask.clone(), f32::NEG_INFINITY);
            let attn = tape.softmax_rows(scores);
            head_outs.push(tape.matmul(attn, vh));
        }
        let merged = tape.concat_cols(&head_outs);
        let proj = tape.matmul(merged, wo);
        let proj = tape.add_row(proj, bo);
        x = tape.add(x, proj);

        let h2 = tape.layer_norm_rows(x, ln2_g, ln2_b);
        let f1 = tape.matmul(h2, ff1_w);
        let f1 = tape.add_row(f1, ff1_b);
        let f1 = tape.gelu(f1);
        let f2 = tape.matmul(f1, ff2_w);
        let f2 = tape.add_row(f2, ff2_b);
        x = tape.add(x, f2);

        if !tape.value(x).all_finite() {
            return Err(Error::Numerical(format!("non-finite activations after layer {layer}")));
        }
    }

    let (lnf_g, lnf_b) = (next(), next());
    let (head_w, head_b) = (next(), next());
    let normed = tape.layer_norm_rows(x, lnf_g, lnf_b);
    let offset = usize::from(has_style) + batch.n_train;
    let query = tape.slice_rows(normed, offset, batch.n_query);
    let logits = tape.matmul(query, head_w);
    let logits = tape.add_row(logits, head_b);
    if !tape.value(logits).all_finite() {
        return Err(Error::Numerical("non-finite logits at the head".into()));
    }
    Ok(ForwardPass { logits, param_ids, style_id })
}

/// Fill logit columns for classes outside `n_classes` with a huge negative
/// value so their post-softmax probability underflows to zero.
pub fn mask_invalid_classes(tape: &mut Tape, logits: NodeId, n_classes: usize) -> NodeId {
    let (m, c) = (tape.value(logits).rows(), tape.value(logits).cols());
    if n_classes >= c {
        return logits;
    }
    let mut mask = vec![0.0f32; m * c];
    for row in mask.chunks_mut(c) {
        for e in &mut row[n_classes..] {
            *e = 1.0;
        }
    }
    tape.masked_fill(logits, Tensor::new(vec![m, c], mask), CLASS_MASK_FILL)
}

/// Mean cross-entropy of the query logits against `targets`, with classes
/// outside `n_classes` masked out before the softmax.
pub fn loss(
    tape: &mut Tape,
    logits: NodeId,
    targets: &[u16],
    n_classes: usize,
) -> Result<NodeId> {
    let (m, c) = (tape.value(logits).rows(), tape.value(logits).cols());
    if targets.len() != m {
        return Err(Error::Contract(format!("{} targets for {m} query rows", targets.len())));
    }
    if targets.is_empty() {
        return Err(Error::Contract("loss over zero query rows".into()));
    }
    if n_classes < 2 || n_classes > c {
        return Err(Error::Contract(format!("{n_classes} classes outside 2..={c}")));
    }
    let idx: Vec<usize> = targets
        .iter()
        .map(|&t| {
            let t = t as usize;
            if t >= n_classes {
                Err(Error::Contract(format!("target {t} outside {n_classes} classes")))
            } else {
                Ok(t)
            }
        })
        .collect::<Result<_>>()?;
    let masked = mask_invalid_classes(tape, logits, n_classes);
    let logp = tape.log_softmax_rows(masked);
    let picked = tape.pick_rows(logp, &idx);
    let mean = tape.mean(picked);
    Ok(tape.scale(mean, -1.0))
}

/// Softmax with temperature: p_i = exp(x_i / t) / Σ_j exp(x_j / t).
pub fn apply_temperature(logits: &Tensor, t: f32) -> Result<Tensor> {
    if !(t > 0.0) {
        return Err(Error::Contract(format!("temperature must be positive, got {t}")));
    }
    let scaled = Tensor::new(logits.shape.clone(), logits.data.iter().map(|v| v / t).collect());
    Ok(softmax_rows(&scaled))
}

/// Differentiable temperature scaling with t = exp(τ): returns logits·exp(−τ),
/// keeping t positive for free while τ ranges over all reals.
pub fn scale_logits_by_log_temperature(tape: &mut Tape, logits: NodeId, tau: NodeId) -> NodeId {
    let neg_tau = tape.scale(tau, -1.0);
    let inv_t = tape.exp(neg_tau);
    tape.mul_scalar(logits, inv_t)
}
