//! Real-task inference: preprocessing variants, the permutation ensemble, and
//! single-forward-pass prediction with the tuned checkpoint.

pub mod preprocess;

use crate::error::{Error, Result};
use crate::model::{apply_temperature, forward, tokenize_rows, ModelCheckpoint};
use crate::numerics::Tape;
use preprocess::{preprocess, PreprocessVariant};
use rand::{seq::SliceRandom, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

/// Hard ceiling on the attention sequence length at inference; memory for the
/// recorded forward pass grows quadratically with it.
pub const MAX_INFER_SEQ_LEN: usize = 2048;

/// A real tabular classification task, labels already remapped to 0..N_c-1.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictTask {
    pub x_train: Vec<Vec<f32>>,
    /// 1 marks a missing cell; the value there must be 0.
    pub mask_train: Vec<Vec<u8>>,
    pub y_train: Vec<u16>,
    pub x_test: Vec<Vec<f32>>,
    pub mask_test: Vec<Vec<u8>>,
    pub n_classes: usize,
    /// Original label names by remapped index.
    pub label_names: Vec<String>,
    /// Indices of integer-coded categorical columns.
    pub categorical: Vec<usize>,
}

impl PredictTask {
    pub fn features(&self) -> usize {
        self.x_train.first().map_or(0, |r| r.len())
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.features();
        if k == 0 || k > 100 {
            return Err(Error::Capacity(format!("{k} features outside 1..=100")));
        }
        if self.n_classes < 2 || self.n_classes > 10 {
            return Err(Error::Capacity(format!("{} classes outside 2..=10", self.n_classes)));
        }
        if self.label_names.len() != self.n_classes {
            return Err(Error::Contract("label map length does not match class count".into()));
        }
        if self.x_train.is_empty() {
            return Err(Error::Contract("empty training set".into()));
        }
        if self.x_train.len() != self.mask_train.len()
            || self.x_train.len() != self.y_train.len()
            || self.x_test.len() != self.mask_test.len()
        {
            return Err(Error::Contract("row, mask and label counts disagree".into()));
        }
        for rows in [(&self.x_train, &self.mask_train), (&self.x_test, &self.mask_test)] {
            for (r, m) in rows.0.iter().zip(rows.1.iter()) {
                if r.len() != k || m.len() != k {
                    return Err(Error::Contract("ragged rows".into()));
                }
                for (&v, &mm) in r.iter().zip(m.iter()) {
                    if !v.is_finite() {
                        return Err(Error::Contract("non-finite feature value".into()));
                    }
                    if mm == 1 && v != 0.0 {
                        return Err(Error::Contract("masked cell must hold 0".into()));
                    }
                }
            }
        }
        for &y in &self.y_train {
            if y as usize >= self.n_classes {
                return Err(Error::Contract(format!("label {y} outside class range")));
            }
        }
        Ok(())
    }
}

/// Ensemble description. Member 0 always uses identity permutations; members
/// are deterministic functions of (base_seed, index). Preprocessing variants
/// rotate z-norm, robust, power across members.
#[derive(Debug, Clone, Copy)]
pub struct EnsembleConfig {
    pub members: usize,
    pub base_seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig { members: 10, base_seed: 0 }
    }
}

/// (feature permutation, label permutation, variant) of one member.
pub fn member_plan(
    ens: &EnsembleConfig,
    index: usize,
    k: usize,
    n_classes: usize,
) -> (Vec<usize>, Vec<usize>, PreprocessVariant) {
    let variant = [PreprocessVariant::ZNorm, PreprocessVariant::Robust, PreprocessVariant::Power]
        [index % 3];
    let mut feat: Vec<usize> = (0..k).collect();
    let mut label: Vec<usize> = (0..n_classes).collect();
    if index > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(
            ens.base_seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        );
        feat.shuffle(&mut rng);
        label.shuffle(&mut rng);
    }
    (feat, label, variant)
}

#[derive(Debug, Clone)]
pub struct PredictionResult {
    /// m x N_c, rows sum to 1.
    pub probabilities: Vec<Vec<f32>>,
    pub elapsed_ms: u64,
    pub warnings: Vec<String>,
}

fn permute_columns(rows: &[Vec<f32>], perm: &[usize]) -> Vec<Vec<f32>> {
    rows.iter().map(|r| perm.iter().map(|&j| r[j]).collect()).collect()
}

fn permute_mask_columns(rows: &[Vec<u8>], perm: &[usize]) -> Vec<Vec<u8>> {
    rows.iter().map(|r| perm.iter().map(|&j| r[j]).collect()).collect()
}

/// Probabilities of a single ensemble member, mapped back to the task's
/// original label order.
pub fn member_probabilities(
    ckpt: &ModelCheckpoint,
    task: &PredictTask,
    feat_perm: &[usize],
    label_perm: &[usize],
    variant: PreprocessVariant,
    style: Option<&[f32]>,
    temperature: f32,
    warnings: &mut Vec<String>,
) -> Result<Vec<Vec<f32>>> {
    let permuted = PredictTask {
        x_train: permute_columns(&task.x_train, feat_perm),
        mask_train: permute_mask_columns(&task.mask_train, feat_perm),
        y_train: task.y_train.iter().map(|&y| label_perm[y as usize] as u16).collect(),
        x_test: permute_columns(&task.x_test, feat_perm),
        mask_test: permute_mask_columns(&task.mask_test, feat_perm),
        ..task.clone()
    };
    let prepped = preprocess(&permuted, variant, warnings)?;

    let n_train = prepped.x_train.len();
    let mut x = prepped.x_train.clone();
    x.extend(prepped.x_test.iter().cloned());
    let mut mask = prepped.mask_train.clone();
    mask.extend(prepped.mask_test.iter().cloned());

    let batch = tokenize_rows(
        &x,
        &mask,
        &prepped.y_train,
        n_train,
        prepped.n_classes,
        style,
        vec![],
        &ckpt.params.config,
    )?;
    let mut tape = Tape::new();
    let fp = forward(&mut tape, &ckpt.params, &batch, false, None)?;
    let masked = crate::model::mask_invalid_classes(&mut tape, fp.logits, prepped.n_classes);
    let probs = apply_temperature(tape.value(masked), temperature)?;

    let m = prepped.x_test.len();
    let mut out = vec![vec![0.0f32; task.n_classes]; m];
    for i in 0..m {
        for c in 0..task.n_classes {
            out[i][c] = probs.at(i, label_perm[c]);
        }
    }
    Ok(out)
}

/// Ensemble prediction with the checkpoint's tuned ψ*/t* when present.
pub fn predict(
    ckpt: &ModelCheckpoint,
    task: &PredictTask,
    ens: &EnsembleConfig,
) -> Result<PredictionResult> {
    task.validate()?;
    if ens.members == 0 {
        return Err(Error::Config("ensemble needs at least one member".into()));
    }
    let cfg = &ckpt.params.config;
    if task.features() > cfg.max_features {
        return Err(Error::Capacity(format!(
            "{} features exceed the model's {}",
            task.features(),
            cfg.max_features
        )));
    }
    if task.n_classes > cfg.max_classes {
        return Err(Error::Capacity(format!(
            "{} classes exceed the model's {}",
            task.n_classes, cfg.max_classes
        )));
    }
    let seq = task.x_train.len() + task.x_test.len() + usize::from(cfg.style_dim > 0);
    if seq > MAX_INFER_SEQ_LEN {
        return Err(Error::Capacity(format!(
            "sequence length {seq} exceeds {MAX_INFER_SEQ_LEN}; attention memory grows \
             quadratically with the row count"
        )));
    }
    let (style, temperature): (Option<Vec<f32>>, f32) = match (&ckpt.tuned, cfg.style_dim) {
        (Some(t), d) if d > 0 => {
            if t.psi.len() != d {
                return Err(Error::Contract(format!(
                    "tuned ψ length {} does not match style_dim {d}",
                    t.psi.len()
                )));
            }
            (Some(t.psi.clone()), t.temperature)
        }
        (Some(t), _) => (None, t.temperature),
        (None, 0) => (None, 1.0),
        (None, _) => {
            return Err(Error::Contract(
                "conditional model has no tuned ψ; run tuning first".into(),
            ))
        }
    };

    let start = Instant::now();
    let mut warnings = Vec::new();
    let m = task.x_test.len();
    let mut acc = vec![vec![0.0f64; task.n_classes]; m];
    for i in 0..ens.members {
        let (fp, lp, variant) = member_plan(ens, i, task.features(), task.n_classes);
        let p = member_probabilities(
            ckpt,
            task,
            &fp,
            &lp,
            variant,
            style.as_deref(),
            temperature,
            &mut warnings,
        )?;
        for (a, r) in acc.iter_mut().zip(p.iter()) {
            for (av, &rv) in a.iter_mut().zip(r.iter()) {
                *av += rv as f64;
            }
        }
    }
    let inv = 1.0 / ens.members as f64;
    let probabilities = acc
        .into_iter()
        .map(|r| r.into_iter().map(|v| (v * inv) as f32).collect())
        .collect();
    Ok(PredictionResult {
        probabilities,
        elapsed_ms: start.elapsed().as_millis() as u64,
        warnings,
    })
}

/// Prediction beyond the training-time length budget: the identical pipeline,
/// no truncation; only the quadratic-memory ceiling applies.
pub fn predict_long(ckpt: &ModelCheckpoint, task: &PredictTask) -> Result<PredictionResult> {
    predict(ckpt, task, &EnsembleConfig { members: 1, base_seed: 0 })
}
