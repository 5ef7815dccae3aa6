//! Dataset assembly: dispatch to the SCM/BNN/GP generators, labelize,
//! categorize, inject missing values, z-normalize, split.

use super::bnn::{bnn_forward, sample_bnn};
use super::gp::sample_gp_dataset;
use super::hyper::{PriorHyperparameters, PriorSpace};
use super::label::{categorize_features, labelize};
use super::scm::{sample_scm, scm_forward};
use crate::error::{Error, Result};
use rand::Rng;

const DATASET_RETRIES: usize = 16;

/// Generation limits of the desk-scale sampler.
#[derive(Debug, Clone, Copy)]
pub struct SampleLimits {
    pub max_rows: usize,
    pub max_features: usize,
    pub max_classes: usize,
}

impl Default for SampleLimits {
    fn default() -> Self {
        SampleLimits { max_rows: 512, max_features: 100, max_classes: 10 }
    }
}

/// Which generator produced a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorKind {
    Scm,
    Bnn,
    Gp,
    /// Enumerable discrete-hypothesis prior (evaluation oracle).
    Oracle,
}

/// One synthetic classification task, normalized and ready to tokenize.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    /// Row-major n x k features, z-normalized per column; masked cells are 0.
    pub x: Vec<Vec<f32>>,
    pub y: Vec<u16>,
    /// n x k missing-value indicator (1 = missing).
    pub mask: Vec<Vec<u8>>,
    pub n_classes: usize,
    /// Encoded ψ the dataset was drawn under (style-token input).
    pub psi_vector: Vec<f32>,
    /// Rows [0, split_point) are train, the rest held out.
    pub split_point: usize,
    pub generator: GeneratorKind,
}

impl SyntheticDataset {
    pub fn rows(&self) -> usize {
        self.x.len()
    }

    pub fn features(&self) -> usize {
        self.x.first().map_or(0, |r| r.len())
    }
}

/// Decide which generator branch ψ selects for this dataset.
pub fn dispatch_generator<R: Rng>(psi: &PriorHyperparameters, rng: &mut R) -> GeneratorKind {
    if rng.gen::<f64>() < psi.gp_probability() {
        GeneratorKind::Gp
    } else if psi.sample_scm() {
        GeneratorKind::Scm
    } else {
        GeneratorKind::Bnn
    }
}

/// Zero a random fraction of cells when the per-dataset missing flag fires.
pub fn inject_missing<R: Rng>(
    x: &mut [Vec<f32>],
    psi: &PriorHyperparameters,
    rng: &mut R,
) -> Vec<Vec<u8>> {
    let k = x.first().map_or(0, |r| r.len());
    let mut mask = vec![vec![0u8; k]; x.len()];
    if rng.gen::<f64>() >= psi.nan_prob() {
        return mask;
    }
    let f_m = psi.nan_fraction();
    for (row, mrow) in x.iter_mut().zip(mask.iter_mut()) {
        for (v, m) in row.iter_mut().zip(mrow.iter_mut()) {
            if rng.gen::<f64>() < f_m {
                *v = 0.0;
                *m = 1;
            }
        }
    }
    mask
}

/// Per-column z-normalization over unmasked cells; masked cells stay exactly 0
/// and constant columns collapse to all-zero.
pub fn z_normalize(x: &mut [Vec<f32>], mask: &[Vec<u8>]) {
    let k = x.first().map_or(0, |r| r.len());
    for col in 0..k {
        let mut sum = 0.0f64;
        let mut count = 0usize;
        for (row, mrow) in x.iter().zip(mask.iter()) {
            if mrow[col] == 0 {
                sum += row[col] as f64;
                count += 1;
            }
        }
        if count == 0 {
            continue;
        }
        let mean = sum / count as f64;
        let mut var = 0.0f64;
        for (row, mrow) in x.iter().zip(mask.iter()) {
            if mrow[col] == 0 {
                var += (row[col] as f64 - mean).powi(2);
            }
        }
        let std = (var / count as f64).sqrt();
        for (row, mrow) in x.iter_mut().zip(mask.iter()) {
            if mrow[col] == 0 {
                row[col] = if std > 1e-8 {
                    ((row[col] as f64 - mean) / std) as f32
                } else {
                    0.0
                };
            }
        }
    }
}

/// Sample one complete synthetic dataset under ψ, retrying on degenerate or
/// unlabelable draws.
pub fn sample_dataset<R: Rng>(
    psi: &PriorHyperparameters,
    space: &PriorSpace,
    n: usize,
    k: usize,
    limits: &SampleLimits,
    rng: &mut R,
) -> Result<SyntheticDataset> {
    if n > limits.max_rows {
        return Err(Error::Capacity(format!("n={n} exceeds max rows {}", limits.max_rows)));
    }
    if k > limits.max_features {
        return Err(Error::Capacity(format!("k={k} exceeds max features {}", limits.max_features)));
    }
    let n_classes = psi.num_classes().min(limits.max_classes).min(n);
    if n_classes < 2 {
        return Err(Error::Contract(format!("need n >= 2 for classification, got n={n}")));
    }

    let mut last = String::new();
    for _ in 0..DATASET_RETRIES {
        match sample_dataset_once(psi, space, n, k, n_classes, rng) {
            Ok(ds) => return Ok(ds),
            Err(Error::Unlabelable(m)) | Err(Error::DegenerateGraph(m)) => last = m,
            Err(e) => return Err(e),
        }
    }
    Err(Error::DegenerateGraph(format!(
        "dataset resampling exhausted after {DATASET_RETRIES} tries: {last}"
    )))
}

fn sample_dataset_once<R: Rng>(
    psi: &PriorHyperparameters,
    space: &PriorSpace,
    n: usize,
    k: usize,
    n_classes: usize,
    rng: &mut R,
) -> Result<SyntheticDataset> {
    let generator = dispatch_generator(psi, rng);
    let (mut x, y_raw) = match generator {
        GeneratorKind::Scm => {
            let scm = sample_scm(psi, k, rng)?;
            scm_forward(&scm, n, rng)?
        }
        GeneratorKind::Bnn => {
            let bnn = sample_bnn(psi, k, rng)?;
            bnn_forward(&bnn, n, rng)?
        }
        GeneratorKind::Gp => sample_gp_dataset(psi, n, k, rng)?,
        GeneratorKind::Oracle => {
            return Err(Error::Contract("oracle datasets are sampled by the eval harness".into()))
        }
    };

    let y = labelize(&y_raw, n_classes, rng, psi.shuffle_prob())?;
    categorize_features(&mut x, psi, rng);
    let mask = inject_missing(&mut x, psi, rng);
    z_normalize(&mut x, &mask);
    let split_point = rng.gen_range(1..n);

    Ok(SyntheticDataset {
        x,
        y,
        mask,
        n_classes,
        psi_vector: psi.encode(space),
        split_point,
        generator,
    })
}
