//! Token construction: one token per dataset row, features zero-padded and
//! rescaled, missing mask appended, labels one-hot for train rows only, and an
//! optional leading style token carrying the encoded ψ vector.

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::prior::SyntheticDataset;

/// Model-ready batch. Row layout of `tokens`: train rows first, then query
/// rows. The style vector is kept raw here; the forward pass projects it.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenizedBatch {
    /// [n_train + n_query, 2 F + C] token matrix (style row not included).
    pub tokens: Tensor,
    /// Encoded ψ for the style token; `None` for unconditional models.
    pub style: Option<Vec<f32>>,
    pub n_train: usize,
    pub n_query: usize,
    pub n_classes: usize,
    /// Labels of the query rows; empty when they are unknown (inference).
    pub targets: Vec<u16>,
}

impl TokenizedBatch {
    /// Attention sequence length including the style token when present.
    pub fn seq_len(&self) -> usize {
        self.n_train + self.n_query + usize::from(self.style.is_some())
    }
}

/// Build tokens from raw rows. `x`/`mask` hold train rows followed by query
/// rows; `y_train` labels the first `n_train` of them. `targets` may be empty.
pub fn tokenize_rows(
    x: &[Vec<f32>],
    mask: &[Vec<u8>],
    y_train: &[u16],
    n_train: usize,
    n_classes: usize,
    style: Option<&[f32]>,
    targets: Vec<u16>,
    cfg: &ModelConfig,
) -> Result<TokenizedBatch> {
    cfg.validate()?;
    let n = x.len();
    let k = x.first().map_or(0, |r| r.len());
    let f = cfg.max_features;
    let c = cfg.max_classes;
    if k == 0 || k > f {
        return Err(Error::Capacity(format!("{k} features outside 1..={f}")));
    }
    if n_classes < 2 || n_classes > c {
        return Err(Error::Capacity(format!("{n_classes} classes outside 2..={c}")));
    }
    if n_train == 0 || n_train > n {
        return Err(Error::Contract(format!("n_train {n_train} outside 1..={n}")));
    }
    if y_train.len() != n_train || mask.len() != n {
        return Err(Error::Contract("row, mask and label counts disagree".into()));
    }
    let n_query = n - n_train;
    if !targets.is_empty() && targets.len() != n_query {
        return Err(Error::Contract(format!(
            "{} targets for {n_query} query rows",
            targets.len()
        )));
    }
    for &y in y_train.iter().chain(targets.iter()) {
        if y as usize >= n_classes {
            return Err(Error::Contract(format!("label {y} outside {n_classes} classes")));
        }
    }
    let style = match (cfg.style_dim, style) {
        (0, None) => None,
        (0, Some(_)) => {
            return Err(Error::Config("style vector given to an unconditional model".into()))
        }
        (d, Some(s)) if s.len() == d => Some(s.to_vec()),
        (d, Some(s)) => {
            return Err(Error::Config(format!("style length {} does not match {d}", s.len())))
        }
        (d, None) => {
            return Err(Error::Config(format!("conditional model (style_dim {d}) needs a ψ vector")))
        }
    };

    let rescale = f as f32 / k as f32;
    let width = cfg.token_width();
    let mut data = vec![0.0f32; n * width];
    for (i, (row, mrow)) in x.iter().zip(mask.iter()).enumerate() {
        if row.len() != k || mrow.len() != k {
            return Err(Error::Contract(format!("ragged row {i}")));
        }
        let tok = &mut data[i * width..(i + 1) * width];
        for j in 0..k {
            tok[j] = row[j] * rescale;
            tok[f + j] = mrow[j] as f32;
        }
        if i < n_train {
            tok[2 * f + y_train[i] as usize] = 1.0;
        }
    }
    Ok(TokenizedBatch {
        tokens: Tensor::new(vec![n, width], data),
        style,
        n_train,
        n_query,
        n_classes,
        targets,
    })
}

/// Tokenize a synthetic dataset at its stored split point. The style token is
/// attached when the config is conditional.
pub fn tokenize(ds: &SyntheticDataset, cfg: &ModelConfig) -> Result<TokenizedBatch> {
    let split = ds.split_point;
    let style = (cfg.style_dim > 0).then_some(ds.psi_vector.as_slice());
    tokenize_rows(
        &ds.x,
        &ds.mask,
        &ds.y[..split],
        split,
        ds.n_classes,
        style,
        ds.y[split..].to_vec(),
        cfg,
    )
}

/// Attention mask over the full sequence (style first when present).
/// Entry 1.0 marks a blocked pair, 0.0 an attendable one, row = attender.
///
/// Train rows see the style token and every train row. Query rows see the
/// style token, every train row and themselves, never each other. The style
/// token attends only to itself but is attendable by all.
pub fn build_attention_mask(n_train: usize, n_query: usize, has_style: bool) -> Tensor {
    assert!(n_train >= 1, "attention mask needs at least one train row");
    let off = usize::from(has_style);
    let len = off + n_train + n_query;
    let mut m = vec![1.0f32; len * len];
    let mut allow = |i: usize, j: usize| m[i * len + j] = 0.0;
    if has_style {
        allow(0, 0);
        for i in 1..len {
            allow(i, 0);
        }
    }
    for i in off..off + n_train {
        for j in off..off + n_train {
            allow(i, j);
        }
    }
    for q in off + n_train..len {
        for j in off..off + n_train {
            allow(q, j);
        }
        allow(q, q);
    }
    Tensor::new(vec![len, len], m)
}
